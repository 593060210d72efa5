pub mod data;
pub mod error;
pub mod experiment;
pub mod lasso;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod simgen;
pub mod subdata;
pub mod timing;
pub mod varselect;

pub use error::{Error, Result};
