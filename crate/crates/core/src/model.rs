//! Final least-squares fit on the selected subdata, with the intercept
//! re-anchored at the full-data means.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{ols_fit, DenseMatrix};
use crate::subdata::{Selector, SubdataSelection};
use crate::timing::StageTimings;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub selector: Option<Selector>,
    pub k: usize,
    pub seed: Option<u64>,
    pub timings: StageTimings,
}

/// Serialises as `{"active": [...], "slopes": [...], "intercept": .., "meta": {..}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    #[serde(rename = "active")]
    pub active_indices: Vec<usize>,
    pub slopes: Vec<f64>,
    pub intercept: f64,
    pub meta: ModelMeta,
}

impl FittedModel {
    pub fn intercept_only(intercept: f64) -> Self {
        Self {
            active_indices: Vec::new(),
            slopes: Vec::new(),
            intercept,
            meta: ModelMeta::default(),
        }
    }

    /// Coefficients over all `p` variables (zeros outside the active set).
    pub fn dense_slopes(&self, p: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; p];
        for (&j, &b) in self.active_indices.iter().zip(&self.slopes) {
            if j >= p {
                return Err(Error::DimensionMismatch(format!(
                    "active variable {j} outside {p} columns"
                )));
            }
            out[j] = b;
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// OLS on `(1, X_active)` over the selected rows; the subdata intercept is
/// then replaced by `mean(y) - mean(x_active)^T slopes` over the full data.
/// An empty active set gives the intercept-only model `mean(y)`.
pub fn fit_final(data: &Dataset, active: &[usize], selection: &SubdataSelection) -> Result<FittedModel> {
    let meta = ModelMeta {
        selector: Some(selection.selector),
        k: selection.k(),
        ..Default::default()
    };
    if active.is_empty() {
        return Ok(FittedModel {
            meta,
            ..FittedModel::intercept_only(data.y_mean())
        });
    }
    let x_active = data.x.select_columns(active)?;
    let z = x_active.select_rows(&selection.row_indices)?.with_intercept();
    let y_sub: Vec<f64> = selection.row_indices.iter().map(|&i| data.y[i]).collect();
    let fit = ols_fit(&z, &y_sub, false)?;
    let slopes = fit.coefficients[1..].to_vec();
    let means = x_active.column_means();
    let intercept = data.y_mean() - means.iter().zip(&slopes).map(|(m, b)| m * b).sum::<f64>();
    Ok(FittedModel {
        active_indices: active.to_vec(),
        slopes,
        intercept,
        meta,
    })
}

/// `intercept + sum_j slope_j * x[i, active_j]` for every row.
pub fn predict(model: &FittedModel, x_test: &DenseMatrix) -> Result<Vec<f64>> {
    if let Some(&max) = model.active_indices.iter().max() {
        if max >= x_test.cols() {
            return Err(Error::DimensionMismatch(format!(
                "model uses column {max} but test data has {} columns",
                x_test.cols()
            )));
        }
    }
    Ok((0..x_test.rows())
        .map(|i| {
            let row = x_test.row(i);
            model.intercept
                + model
                    .active_indices
                    .iter()
                    .zip(&model.slopes)
                    .map(|(&j, b)| row[j] * b)
                    .sum::<f64>()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;
    use crate::subdata::levss_select;
    use approx::assert_abs_diff_eq;

    fn dataset(n: usize, p: usize, noise: f64, seed: u64) -> Dataset {
        let mut s = StreamKey::root(seed).stream();
        let x = DenseMatrix::new(n, p, (0..n * p).map(|_| s.normal()).collect()).unwrap();
        let y = (0..n)
            .map(|i| 1.0 + x.row(i).iter().sum::<f64>() + noise * s.normal())
            .collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn noiseless_exact_recovery() {
        let data = dataset(500, 4, 0.0, 1);
        let active = [0, 1, 2, 3];
        let sel = levss_select(&data.x, 50).unwrap();
        let m = fit_final(&data, &active, &sel).unwrap();
        for b in &m.slopes {
            assert_abs_diff_eq!(*b, 1.0, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(m.intercept, 1.0, epsilon = 1e-8);
        assert_eq!(m.meta.k, 50);
        assert_eq!(m.meta.selector, Some(Selector::Levss));
    }

    #[test]
    fn empty_active_set_is_intercept_only() {
        let data = dataset(100, 3, 1.0, 2);
        let sel = levss_select(&data.x, 10).unwrap();
        let m = fit_final(&data, &[], &sel).unwrap();
        assert!(m.slopes.is_empty() && m.active_indices.is_empty());
        assert_abs_diff_eq!(m.intercept, data.y_mean(), epsilon = 1e-15);
        assert_eq!(predict(&m, &data.x).unwrap(), vec![m.intercept; 100]);
    }

    #[test]
    fn full_subdata_equals_full_ols() {
        let data = dataset(200, 3, 2.0, 3);
        let sel = levss_select(&data.x.select_columns(&[0, 2]).unwrap(), 200).unwrap();
        let m = fit_final(&data, &[0, 2], &sel).unwrap();
        let z = data.x.select_columns(&[0, 2]).unwrap().with_intercept();
        let ols = ols_fit(&z, &data.y, false).unwrap();
        assert_abs_diff_eq!(m.intercept, ols.coefficients[0], epsilon = 1e-10);
        assert_abs_diff_eq!(m.slopes[0], ols.coefficients[1], epsilon = 1e-10);
        assert_abs_diff_eq!(m.slopes[1], ols.coefficients[2], epsilon = 1e-10);
    }

    #[test]
    fn too_few_rows_is_rank_deficient() {
        let data = dataset(100, 3, 1.0, 4);
        let sel = levss_select(&data.x, 3).unwrap();
        assert!(matches!(fit_final(&data, &[0, 1, 2], &sel), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn plane_passes_through_mean_point() {
        let data = dataset(300, 5, 3.0, 5);
        let active = [1, 3, 4];
        let sel = levss_select(&data.x.select_columns(&active).unwrap(), 40).unwrap();
        let m = fit_final(&data, &active, &sel).unwrap();
        let xbar = DenseMatrix::new(1, 5, data.x.column_means()).unwrap();
        assert_abs_diff_eq!(predict(&m, &xbar).unwrap()[0], data.y_mean(), epsilon = 1e-10);
    }

    #[test]
    fn unselected_row_moves_only_intercept() {
        let data = dataset(300, 2, 3.0, 6);
        let sel = levss_select(&data.x, 30).unwrap();
        let m0 = fit_final(&data, &[0, 1], &sel).unwrap();
        let outside = (0..300).find(|i| !sel.row_indices.contains(i)).unwrap();
        let mut perturbed = data.clone();
        perturbed.y[outside] += 30.0;
        let m1 = fit_final(&perturbed, &[0, 1], &sel).unwrap();
        assert_eq!(m0.slopes, m1.slopes);
        assert_abs_diff_eq!(m1.intercept - m0.intercept, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn predict_examples() {
        let m = FittedModel {
            active_indices: vec![0, 2],
            slopes: vec![2.0, -1.0],
            intercept: 0.5,
            meta: ModelMeta::default(),
        };
        let x = DenseMatrix::from_rows(&[vec![1.0, 9.0, 1.0]]).unwrap();
        assert_eq!(predict(&m, &x).unwrap(), vec![0.5 + 2.0 - 1.0]);

        let zero = FittedModel { slopes: vec![0.0, 0.0], ..m.clone() };
        let xr = dataset(4, 3, 1.0, 7).x;
        assert_eq!(predict(&zero, &xr).unwrap(), vec![0.5; 4]);

        let mut s = StreamKey::root(8).stream();
        let xt = DenseMatrix::new(5, 3, (0..15).map(|_| s.normal()).collect()).unwrap();
        let pred = predict(&m, &xt).unwrap();
        for i in 0..5 {
            let by_hand = 0.5 + 2.0 * xt.get(i, 0) + -1.0 * xt.get(i, 2);
            assert_abs_diff_eq!(pred[i], by_hand, epsilon = 1e-12);
        }

        let narrow = DenseMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        assert!(matches!(predict(&m, &narrow), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn json_field_names() {
        let m = FittedModel {
            active_indices: vec![1],
            slopes: vec![2.0],
            intercept: 0.5,
            meta: ModelMeta { k: 10, seed: Some(3), ..Default::default() },
        };
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        for key in ["active", "slopes", "intercept", "meta"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: FittedModel = serde_json::from_value(v).unwrap();
        assert_eq!(back, m);
    }
}
