//! Selection and prediction scores.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::model::{predict, FittedModel};
use crate::rng::StreamKey;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    /// Share of true actives that were selected.
    pub power: f64,
    /// Share of true inactives that were selected.
    pub error: f64,
}

pub fn power_error(active_hat: &[usize], true_active: &[usize], p: usize) -> Result<SelectionScore> {
    if true_active.is_empty() {
        return Err(Error::EmptyTruth);
    }
    if let Some(&j) = active_hat.iter().chain(true_active).find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch(format!("variable {j} outside 0..{p}")));
    }
    let mut truth = vec![false; p];
    true_active.iter().for_each(|&j| truth[j] = true);
    let mut hat = vec![false; p];
    active_hat.iter().for_each(|&j| hat[j] = true);
    let n_true = truth.iter().filter(|&&t| t).count();
    let hits = (0..p).filter(|&j| hat[j] && truth[j]).count();
    let false_pos = (0..p).filter(|&j| hat[j] && !truth[j]).count();
    let inactive = p - n_true;
    Ok(SelectionScore {
        power: hits as f64 / n_true as f64,
        error: if inactive == 0 { 0.0 } else { false_pos as f64 / inactive as f64 },
    })
}

/// Mean squared difference between true and estimated linear predictors on
/// the test covariates. `beta_true` is `(intercept, beta_1..beta_p)`.
pub fn mse_test(beta_true: &[f64], model: &FittedModel, x_test: &DenseMatrix) -> Result<f64> {
    if beta_true.len() != x_test.cols() + 1 {
        return Err(Error::DimensionMismatch(format!(
            "{} true coefficients for {} test columns",
            beta_true.len(),
            x_test.cols()
        )));
    }
    let estimated = predict(model, x_test)?;
    let (b0, slopes) = beta_true.split_first().expect("nonempty");
    let sse: f64 = (0..x_test.rows())
        .map(|i| {
            let truth = b0 + x_test.row(i).iter().zip(slopes).map(|(x, b)| x * b).sum::<f64>();
            (truth - estimated[i]).powi(2)
        })
        .sum();
    Ok(sse / x_test.rows() as f64)
}

/// Mean squared prediction error against observed responses.
pub fn mspe(model: &FittedModel, test: &Dataset) -> Result<f64> {
    let pred = predict(model, &test.x)?;
    Ok(test.y.iter().zip(&pred).map(|(y, f)| (y - f).powi(2)).sum::<f64>() / test.n() as f64)
}

/// Bootstrap MSPE: each replicate refits `method` on `n` rows drawn with
/// replacement from `train` and scores it on `test`. A failing replicate
/// yields `Err` in its slot; the others are unaffected.
pub fn bootstrap_mspe<F>(train: &Dataset, test: &Dataset, method: F, replicates: usize, key: &StreamKey) -> Vec<Result<f64>>
where
    F: Fn(&Dataset, &StreamKey) -> Result<FittedModel> + Sync,
{
    let n = train.n();
    (0..replicates)
        .into_par_iter()
        .map(|b| {
            let rkey = key.derive("bootstrap", b as u64);
            let mut rng = rkey.stream();
            let rows: Vec<usize> = (0..n).map(|_| rng.below(n)).collect();
            let sample = train.select_rows(&rows)?;
            let model = method(&sample, &rkey.derive("fit", 0))?;
            mspe(&model, test)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fit_final, ModelMeta};
    use crate::subdata::levss_select;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn power_error_examples() {
        let s = power_error(&[0, 1, 2], &[0, 1, 2], 10).unwrap();
        assert_eq!((s.power, s.error), (1.0, 0.0));
        let all: Vec<usize> = (0..10).collect();
        let s = power_error(&all, &[0, 1, 2], 10).unwrap();
        assert_eq!((s.power, s.error), (1.0, 1.0));
        let s = power_error(&[0, 1, 8], &[0, 1, 2], 10).unwrap();
        assert_abs_diff_eq!(s.power, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.error, 1.0 / 7.0, epsilon = 1e-15);
        assert!(matches!(power_error(&[1], &[], 10), Err(Error::EmptyTruth)));
        assert!(power_error(&[10], &[1], 10).is_err());
    }

    proptest! {
        #[test]
        fn power_error_label_invariant(hat in prop::collection::btree_set(0usize..12, 0..12),
                                       truth in prop::collection::btree_set(0usize..12, 1..12),
                                       shift in 0usize..12) {
            let hat: Vec<usize> = hat.into_iter().collect();
            let truth: Vec<usize> = truth.into_iter().collect();
            let relabel = |v: &[usize]| v.iter().map(|j| (j + shift) % 12).collect::<Vec<_>>();
            let a = power_error(&hat, &truth, 12).unwrap();
            let b = power_error(&relabel(&hat), &relabel(&truth), 12).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=1.0).contains(&a.power) && (0.0..=1.0).contains(&a.error));
        }
    }

    fn model(active: Vec<usize>, slopes: Vec<f64>, intercept: f64) -> FittedModel {
        FittedModel { active_indices: active, slopes, intercept, meta: ModelMeta::default() }
    }

    fn random_x(n: usize, p: usize, seed: u64) -> DenseMatrix {
        let mut s = StreamKey::root(seed).stream();
        DenseMatrix::new(n, p, (0..n * p).map(|_| s.normal()).collect()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let x = random_x(50, 4, 1);
        let beta = [1.0, 2.0, 0.0, -1.0, 0.0];
        let exact = model(vec![0, 2], vec![2.0, -1.0], 1.0);
        assert_eq!(mse_test(&beta, &exact, &x).unwrap(), 0.0);

        let shifted = model(vec![], vec![], 1.0 + 0.7);
        let flat = [1.0, 0.0, 0.0, 0.0, 0.0];
        assert_abs_diff_eq!(mse_test(&flat, &shifted, &x).unwrap(), 0.49, epsilon = 1e-12);

        let est = model(vec![1, 3], vec![0.3, -0.8], 0.9);
        let mut direct = 0.0;
        for i in 0..50 {
            let r = x.row(i);
            let t = 1.0 + 2.0 * r[0] - r[2];
            let e = 0.9 + 0.3 * r[1] - 0.8 * r[3];
            direct += (t - e) * (t - e);
        }
        assert_abs_diff_eq!(mse_test(&beta, &est, &x).unwrap(), direct / 50.0, epsilon = 1e-12);
        assert!(mse_test(&beta[..3], &est, &x).is_err());
    }

    #[test]
    fn bootstrap_constant_predictor() {
        let x = random_x(40, 2, 2);
        let train = Dataset::new(x.clone(), vec![4.0; 40]).unwrap();
        let test = Dataset::new(x, vec![4.0; 40]).unwrap();
        let out = bootstrap_mspe(&train, &test, |d, _| Ok(FittedModel::intercept_only(d.y_mean())), 5, &StreamKey::root(1));
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|r| *r.as_ref().unwrap() == 0.0));
    }

    #[test]
    fn bootstrap_reproducible_and_isolates_failures() {
        let x = random_x(60, 2, 3);
        let y: Vec<f64> = (0..60).map(|i| x.get(i, 0) + i as f64 * 0.01).collect();
        let train = Dataset::new(x.clone(), y.clone()).unwrap();
        let test = Dataset::new(x, y).unwrap();
        let method = |d: &Dataset, _: &StreamKey| Ok(FittedModel::intercept_only(d.y_mean()));
        let a = bootstrap_mspe(&train, &test, method, 1, &StreamKey::root(9));
        let b = bootstrap_mspe(&train, &test, method, 1, &StreamKey::root(9));
        assert_eq!(a[0].as_ref().unwrap(), b[0].as_ref().unwrap());

        let flaky = |d: &Dataset, k: &StreamKey| {
            if k.stream().below(2) == 0 {
                Err(Error::InvalidParam("boom".into()))
            } else {
                Ok(FittedModel::intercept_only(d.y_mean()))
            }
        };
        let out = bootstrap_mspe(&train, &test, flaky, 20, &StreamKey::root(9));
        let failed = out.iter().filter(|r| r.is_err()).count();
        assert!(failed > 0 && failed < 20);
    }

    #[test]
    fn bootstrap_noiseless_pipeline_is_exact() {
        let x = random_x(300, 3, 4);
        let y: Vec<f64> = (0..300).map(|i| 2.0 + x.row(i)[0] - 0.5 * x.row(i)[2]).collect();
        let train = Dataset::new(x, y).unwrap();
        let xt = random_x(50, 3, 5);
        let yt: Vec<f64> = (0..50).map(|i| 2.0 + xt.row(i)[0] - 0.5 * xt.row(i)[2]).collect();
        let test = Dataset::new(xt, yt).unwrap();
        let method = |d: &Dataset, _: &StreamKey| {
            let active = [0, 2];
            let sel = levss_select(&d.x.select_columns(&active)?, 40)?;
            fit_final(d, &active, &sel)
        };
        for r in bootstrap_mspe(&train, &test, method, 4, &StreamKey::root(6)) {
            assert!(r.unwrap() < 1e-6);
        }
    }
}
