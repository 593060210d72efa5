use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Wall-clock seconds spent in each pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub phase1_lasso: f64,
    pub phase2_lasso: f64,
    pub kmeans: f64,
    pub subdata: f64,
    pub final_fit: f64,
}

impl StageTimings {
    pub const STAGES: [&'static str; 5] = ["phase1_lasso", "phase2_lasso", "kmeans", "subdata", "final_fit"];

    pub fn total(&self) -> f64 {
        self.phase1_lasso + self.phase2_lasso + self.kmeans + self.subdata + self.final_fit
    }

    /// `(stage, seconds)` pairs in a fixed order, ending with `total`.
    pub fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("phase1_lasso", self.phase1_lasso),
            ("phase2_lasso", self.phase2_lasso),
            ("kmeans", self.kmeans),
            ("subdata", self.subdata),
            ("final_fit", self.final_fit),
            ("total", self.total()),
        ]
    }

    pub fn add(&mut self, other: &StageTimings) {
        self.phase1_lasso += other.phase1_lasso;
        self.phase2_lasso += other.phase2_lasso;
        self.kmeans += other.kmeans;
        self.subdata += other.subdata;
        self.final_fit += other.final_fit;
    }

    pub fn scale(&mut self, factor: f64) {
        self.phase1_lasso *= factor;
        self.phase2_lasso *= factor;
        self.kmeans *= factor;
        self.subdata *= factor;
        self.final_fit *= factor;
    }
}

/// Runs `f` and returns its output with the elapsed seconds.
pub fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}
