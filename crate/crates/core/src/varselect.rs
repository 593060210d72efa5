//! Two-phase random-LASSO variable selection.
//!
//! Phase one fits cross-validated LASSO on `n1` row subsamples over all
//! variables and scores each variable by the absolute mean of its
//! coefficients. Phase two draws `n2` fresh subsamples, each paired with a
//! fresh candidate set sampled proportionally to those scores, and counts how
//! often every variable survives the LASSO. A 1-D two-means split of the
//! counts yields the active set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{cv_lasso, DEFAULT_FOLDS};
use crate::rng::{Stream, StreamKey};
use crate::timing::{timed, StageTimings};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarSelectConfig {
    /// Phase-one subsamples.
    pub n1: usize,
    /// Phase-two subsamples.
    pub n2: usize,
    /// Rows per subsample.
    pub s: usize,
    /// Candidate variables per phase-two subsample; `None` means `ceil(0.1 p)`.
    pub p_s: Option<usize>,
    pub folds: usize,
}

impl Default for VarSelectConfig {
    fn default() -> Self {
        Self {
            n1: 50,
            n2: 100,
            s: 1000,
            p_s: None,
            folds: DEFAULT_FOLDS,
        }
    }
}

impl VarSelectConfig {
    pub fn resolved_p_s(&self, p: usize) -> usize {
        self.p_s.unwrap_or_else(|| (p as f64 * 0.1).ceil() as usize)
    }

    pub fn validate(&self, n: usize, p: usize) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(Error::InvalidParam("n1 and n2 must be at least 1".into()));
        }
        if self.s == 0 || self.s > n {
            return Err(Error::InvalidSize {
                requested: self.s,
                available: n,
            });
        }
        let p_s = self.resolved_p_s(p);
        if p_s == 0 || p_s > p {
            return Err(Error::InvalidParam(format!("p_s = {p_s} must lie in 1..={p}")));
        }
        if self.folds < 2 || self.folds > self.s {
            return Err(Error::InvalidParam(format!(
                "folds = {} must lie in 2..={}",
                self.folds, self.s
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector(pub Vec<f64>);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts(pub Vec<usize>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
    pub counts: SelectionCounts,
    /// `(low, high)` cluster means of the counts.
    pub cluster_means: (f64, f64),
    /// Set when the counts cannot be split (all equal).
    pub degenerate: bool,
}

/// Candidate variables for one phase-two subsample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateDraw {
    pub indices: Vec<usize>,
    /// No variable had positive importance.
    pub degenerate: bool,
}

/// Sorted sample of `s` distinct row indices from `0..n` (partial
/// Fisher-Yates).
pub fn subsample_without_replacement(n: usize, s: usize, rng: &mut Stream) -> Result<Vec<usize>> {
    if s > n {
        return Err(Error::InvalidSize {
            requested: s,
            available: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    for i in 0..s {
        let j = i + rng.below(n - i);
        perm.swap(i, j);
    }
    perm.truncate(s);
    perm.sort_unstable();
    Ok(perm)
}

/// `m_j = |mean_r slope[r][j]|`.
pub fn importance_measure(slopes: &[Vec<f64>]) -> ImportanceVector {
    let Some(first) = slopes.first() else {
        return ImportanceVector(Vec::new());
    };
    let n1 = slopes.len() as f64;
    let mut sums = vec![0.0; first.len()];
    for row in slopes {
        for (s, b) in sums.iter_mut().zip(row) {
            *s += b;
        }
    }
    ImportanceVector(sums.into_iter().map(|s| (s / n1).abs()).collect())
}

/// Sequential probability-proportional-to-size sampling of `p_s` variables
/// without replacement. When at most `p_s` variables have positive weight,
/// exactly those are returned.
pub fn weighted_candidate_sample(m: &ImportanceVector, p_s: usize, rng: &mut Stream) -> CandidateDraw {
    let positive: Vec<usize> = (0..m.0.len()).filter(|&j| m.0[j] > 0.0).collect();
    if positive.is_empty() {
        return CandidateDraw {
            indices: Vec::new(),
            degenerate: true,
        };
    }
    if positive.len() <= p_s {
        return CandidateDraw {
            indices: positive,
            degenerate: false,
        };
    }
    let mut weights: Vec<f64> = positive.iter().map(|&j| m.0[j]).collect();
    let mut chosen = Vec::with_capacity(p_s);
    for _ in 0..p_s {
        let total: f64 = weights.iter().sum();
        let target = rng.uniform() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (k, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            pick = Some(k);
            if target < acc {
                break;
            }
        }
        let k = pick.expect("a positive weight remains");
        chosen.push(positive[k]);
        weights[k] = 0.0;
    }
    chosen.sort_unstable();
    CandidateDraw {
        indices: chosen,
        degenerate: false,
    }
}

/// Support (in original column numbering) of a cross-validated LASSO on the
/// given rows and columns.
fn lasso_support(data: &Dataset, rows: &[usize], cols: &[usize], folds: usize, rng: &mut Stream) -> Result<Vec<usize>> {
    let sub = data.select_rows(rows)?;
    let x = sub.x.select_columns(cols)?;
    let (_, fit) = cv_lasso(&x, &sub.y, folds, rng)?;
    Ok(fit.support().into_iter().map(|k| cols[k]).collect())
}

/// Phase-one slope matrix (`n1 x p`).
pub fn phase_one_slopes(data: &Dataset, cfg: &VarSelectConfig, key: &StreamKey) -> Result<Vec<Vec<f64>>> {
    let (n, p) = (data.n(), data.p());
    cfg.validate(n, p)?;
    (0..cfg.n1)
        .into_par_iter()
        .map(|r| {
            let mut rng = key.derive("phase1", r as u64).stream();
            let rows = subsample_without_replacement(n, cfg.s, &mut rng)?;
            let sub = data.select_rows(&rows)?;
            let (_, fit) = cv_lasso(&sub.x, &sub.y, cfg.folds, &mut rng)?;
            Ok(fit.slopes)
        })
        .collect()
}

/// Phase-two selection counts `C_j`.
pub fn phase_two_counts(
    data: &Dataset,
    m: &ImportanceVector,
    cfg: &VarSelectConfig,
    key: &StreamKey,
) -> Result<SelectionCounts> {
    let (n, p) = (data.n(), data.p());
    cfg.validate(n, p)?;
    if m.0.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "importance has {} entries for {p} variables",
            m.0.len()
        )));
    }
    let p_s = cfg.resolved_p_s(p);
    let sets: Vec<Vec<usize>> = (0..cfg.n2)
        .into_par_iter()
        .map(|r| {
            let mut rng = key.derive("phase2", r as u64).stream();
            let rows = subsample_without_replacement(n, cfg.s, &mut rng)?;
            let cand = weighted_candidate_sample(m, p_s, &mut rng);
            if cand.indices.is_empty() {
                return Ok(Vec::new());
            }
            lasso_support(data, &rows, &cand.indices, cfg.folds, &mut rng)
        })
        .collect::<Result<_>>()?;
    Ok(tally(p, &sets))
}

fn tally(p: usize, sets: &[Vec<usize>]) -> SelectionCounts {
    let mut counts = vec![0; p];
    for set in sets {
        for &j in set {
            counts[j] += 1;
        }
    }
    SelectionCounts(counts)
}

/// Exact 1-D two-means on the counts. The optimal partition of sorted data
/// is a threshold, so every cut between distinct values is scored by its
/// within-cluster sum of squares and the best one kept; the upper cluster is
/// the active set.
pub fn kmeans_split(counts: &SelectionCounts) -> ActiveSet {
    let c = &counts.0;
    let mut sorted: Vec<usize> = c.clone();
    sorted.sort_unstable();
    let degenerate = |mean: f64| ActiveSet {
        indices: Vec::new(),
        counts: counts.clone(),
        cluster_means: (mean, mean),
        degenerate: true,
    };
    let (Some(&lo), Some(&hi)) = (sorted.first(), sorted.last()) else {
        return degenerate(0.0);
    };
    if lo == hi {
        return degenerate(lo as f64);
    }

    let total: f64 = sorted.iter().map(|&v| v as f64).sum();
    let total_sq: f64 = sorted.iter().map(|&v| (v as f64).powi(2)).sum();
    let n = sorted.len() as f64;
    let wcss = |cnt: f64, sum: f64, sq: f64| if cnt > 0.0 { sq - sum * sum / cnt } else { 0.0 };

    let mut best: Option<(f64, usize, f64, f64)> = None;
    let (mut sum, mut sq) = (0.0, 0.0);
    for i in 0..sorted.len() - 1 {
        let v = sorted[i] as f64;
        sum += v;
        sq += v * v;
        if sorted[i] == sorted[i + 1] {
            continue;
        }
        let left = (i + 1) as f64;
        let cost = wcss(left, sum, sq) + wcss(n - left, total - sum, total_sq - sq);
        let better = match best {
            None => true,
            Some((b, ..)) => cost < b - 1e-9 * (1.0 + b.abs()),
        };
        if better {
            best = Some((cost, sorted[i], sum / left, (total - sum) / (n - left)));
        }
    }
    let (_, threshold, low_mean, high_mean) = best.expect("at least two distinct values");
    ActiveSet {
        indices: (0..c.len()).filter(|&j| c[j] > threshold).collect(),
        counts: counts.clone(),
        cluster_means: (low_mean, high_mean),
        degenerate: false,
    }
}

/// Everything produced by the selection stage.
#[derive(Clone, Debug, PartialEq)]
pub struct VarSelectReport {
    pub active: ActiveSet,
    pub importance: ImportanceVector,
    pub timings: StageTimings,
}

/// Full two-phase selection (importance, candidate counts, split).
pub fn select_variables_report(data: &Dataset, cfg: &VarSelectConfig, key: &StreamKey) -> Result<VarSelectReport> {
    cfg.validate(data.n(), data.p())?;
    let mut timings = StageTimings::default();
    let (slopes, t1) = timed(|| phase_one_slopes(data, cfg, key));
    timings.phase1_lasso = t1;
    let importance = importance_measure(&slopes?);
    let (counts, t2) = timed(|| phase_two_counts(data, &importance, cfg, key));
    timings.phase2_lasso = t2;
    let counts = counts?;
    let (active, t3) = timed(|| kmeans_split(&counts));
    timings.kmeans = t3;
    Ok(VarSelectReport {
        active,
        importance,
        timings,
    })
}

pub fn select_variables(data: &Dataset, cfg: &VarSelectConfig, key: &StreamKey) -> Result<ActiveSet> {
    Ok(select_variables_report(data, cfg, key)?.active)
}

/// One-phase baseline: `ntimes` LASSO fits over all variables on subsamples
/// of `nsample` rows, then the same count split. With `nsample == n` every
/// subsample is the full data, so a single fit is counted `ntimes` times.
pub fn select_variables_onephase_baseline_report(
    data: &Dataset,
    nsample: usize,
    ntimes: usize,
    folds: usize,
    key: &StreamKey,
) -> Result<VarSelectReport> {
    let (n, p) = (data.n(), data.p());
    if nsample == 0 || nsample > n {
        return Err(Error::InvalidSize {
            requested: nsample,
            available: n,
        });
    }
    if ntimes == 0 {
        return Err(Error::InvalidParam("ntimes must be at least 1".into()));
    }
    let all: Vec<usize> = (0..p).collect();
    let mut timings = StageTimings::default();
    let (sets, t1) = timed(|| -> Result<Vec<Vec<usize>>> {
        if nsample == n {
            let mut rng = key.derive("onephase", 0).stream();
            let rows: Vec<usize> = (0..n).collect();
            let support = lasso_support(data, &rows, &all, folds, &mut rng)?;
            return Ok(vec![support; ntimes]);
        }
        (0..ntimes)
            .into_par_iter()
            .map(|t| {
                let mut rng = key.derive("onephase", t as u64).stream();
                let rows = subsample_without_replacement(n, nsample, &mut rng)?;
                lasso_support(data, &rows, &all, folds, &mut rng)
            })
            .collect()
    });
    timings.phase1_lasso = t1;
    let counts = tally(p, &sets?);
    let (active, t3) = timed(|| kmeans_split(&counts));
    timings.kmeans = t3;
    Ok(VarSelectReport {
        active,
        importance: ImportanceVector(vec![0.0; p]),
        timings,
    })
}

pub fn select_variables_onephase_baseline(
    data: &Dataset,
    nsample: usize,
    ntimes: usize,
    key: &StreamKey,
) -> Result<ActiveSet> {
    Ok(select_variables_onephase_baseline_report(data, nsample, ntimes, DEFAULT_FOLDS, key)?.active)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use proptest::prelude::*;

    fn stream(seed: u64) -> Stream {
        StreamKey::root(seed).stream()
    }

    /// `y = 1 + sum_{j < active} 3 x_j + noise_sd * e`, standard normal `X`.
    fn signal_data(n: usize, p: usize, active: usize, noise_sd: f64, seed: u64) -> Dataset {
        let mut s = stream(seed);
        let x = DenseMatrix::new(n, p, (0..n * p).map(|_| s.normal()).collect()).unwrap();
        let y = (0..n)
            .map(|i| 1.0 + x.row(i)[..active].iter().map(|v| 3.0 * v).sum::<f64>() + noise_sd * s.normal())
            .collect();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn subsample_full_is_permutation() {
        let idx = subsample_without_replacement(5, 5, &mut stream(1)).unwrap();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn subsample_distinct() {
        let idx = subsample_without_replacement(10_000, 1000, &mut stream(2)).unwrap();
        assert_eq!(idx.len(), 1000);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(*idx.last().unwrap() < 10_000);
    }

    #[test]
    fn subsample_too_large() {
        assert!(matches!(
            subsample_without_replacement(3, 4, &mut stream(1)),
            Err(Error::InvalidSize { .. })
        ));
    }

    #[test]
    fn subsample_uniform_single_draw() {
        let mut s = stream(3);
        let mut freq = [0usize; 10];
        for _ in 0..10_000 {
            freq[subsample_without_replacement(10, 1, &mut s).unwrap()[0]] += 1;
        }
        assert!(freq.iter().all(|&f| (800..=1200).contains(&f)), "{freq:?}");
    }

    #[test]
    fn importance_examples() {
        assert_eq!(importance_measure(&[vec![0.0; 3], vec![0.0; 3]]).0, vec![0.0; 3]);
        let m = importance_measure(&[vec![1.0, 2.0], vec![-1.0, 4.0]]);
        assert_eq!(m.0, vec![0.0, 3.0]);
        let m = importance_measure(&[vec![-2.0], vec![-4.0]]);
        assert_eq!(m.0, vec![3.0]);
    }

    #[test]
    fn importance_ranks_true_actives_first() {
        let data = signal_data(2000, 12, 4, 3.0, 4);
        let cfg = VarSelectConfig {
            n1: 50,
            s: 200,
            ..Default::default()
        };
        let slopes = phase_one_slopes(&data, &cfg, &StreamKey::root(5)).unwrap();
        let m = importance_measure(&slopes).0;
        let min_active = m[..4].iter().cloned().fold(f64::INFINITY, f64::min);
        let max_inactive = m[4..].iter().cloned().fold(0.0, f64::max);
        assert!(min_active > max_inactive, "{m:?}");
    }

    #[test]
    fn candidates_degenerate_and_few_positive() {
        let draw = weighted_candidate_sample(&ImportanceVector(vec![0.0; 5]), 2, &mut stream(1));
        assert!(draw.indices.is_empty() && draw.degenerate);

        let mut m = vec![0.0; 20];
        m[3] = 0.5;
        m[7] = 2.0;
        m[19] = 1e-9;
        let draw = weighted_candidate_sample(&ImportanceVector(m), 10, &mut stream(1));
        assert_eq!(draw.indices, vec![3, 7, 19]);
        assert!(!draw.degenerate);
    }

    #[test]
    fn candidates_are_distinct_and_positive() {
        let m = ImportanceVector((0..30).map(|j| if j % 3 == 0 { 0.0 } else { j as f64 }).collect());
        let mut s = stream(9);
        for _ in 0..200 {
            let d = weighted_candidate_sample(&m, 7, &mut s);
            assert_eq!(d.indices.len(), 7);
            assert!(d.indices.windows(2).all(|w| w[0] < w[1]));
            assert!(d.indices.iter().all(|&j| m.0[j] > 0.0));
        }
    }

    #[test]
    fn candidate_single_draw_frequencies() {
        let m = ImportanceVector(vec![2.0, 1.0, 0.0, 0.0]);
        let mut s = stream(11);
        let mut freq = [0usize; 4];
        let draws = 30_000;
        for _ in 0..draws {
            freq[weighted_candidate_sample(&m, 1, &mut s).indices[0]] += 1;
        }
        let f = |k: usize| freq[k] as f64 / draws as f64;
        assert!((f(0) - 2.0 / 3.0).abs() <= 0.02);
        assert!((f(1) - 1.0 / 3.0).abs() <= 0.02);
        assert_eq!(freq[2] + freq[3], 0);
    }

    #[test]
    fn candidate_pair_probabilities_match_sequential_oracle() {
        // exact inclusion probabilities of sequential PPS for weights (3,2,1), 2 draws
        let w = [3.0, 2.0, 1.0];
        let total: f64 = w.iter().sum();
        let mut exact = [0.0; 3];
        for a in 0..3 {
            for b in 0..3 {
                if a != b {
                    let pr = w[a] / total * w[b] / (total - w[a]);
                    exact[a] += pr;
                    exact[b] += pr;
                }
            }
        }
        let m = ImportanceVector(w.to_vec());
        let mut s = stream(12);
        let mut freq = [0usize; 3];
        let draws = 30_000;
        for _ in 0..draws {
            for j in weighted_candidate_sample(&m, 2, &mut s).indices {
                freq[j] += 1;
            }
        }
        for j in 0..3 {
            assert!((freq[j] as f64 / draws as f64 - exact[j]).abs() <= 0.02);
        }
    }

    #[test]
    fn kmeans_examples() {
        let mut c = vec![0; 10];
        c[..3].copy_from_slice(&[100, 100, 100]);
        let a = kmeans_split(&SelectionCounts(c));
        assert_eq!(a.indices, vec![0, 1, 2]);
        assert!(!a.degenerate);
        assert_eq!(a.cluster_means, (0.0, 100.0));

        let a = kmeans_split(&SelectionCounts(vec![7; 6]));
        assert!(a.indices.is_empty() && a.degenerate);

        let counts = vec![90, 85, 10, 5, 0];
        let a = kmeans_split(&SelectionCounts(counts.clone()));
        assert_eq!(a.indices, vec![0, 1]);
        let chosen = oracle::split_wcss(&counts, |v| v >= 85);
        assert_eq!(oracle::best_threshold_wcss(&counts).unwrap(), chosen);
    }

    proptest! {
        #[test]
        fn kmeans_is_threshold_and_optimal(counts in prop::collection::vec(0usize..=100, 2..30)) {
            let a = kmeans_split(&SelectionCounts(counts.clone()));
            match oracle::best_threshold_wcss(&counts) {
                None => prop_assert!(a.degenerate && a.indices.is_empty()),
                Some(best) => {
                    prop_assert!(!a.indices.is_empty());
                    let inside: Vec<usize> = a.indices.iter().map(|&j| counts[j]).collect();
                    let min_in = *inside.iter().min().unwrap();
                    let outside_max = (0..counts.len()).filter(|j| !a.indices.contains(j)).map(|j| counts[j]).max().unwrap();
                    prop_assert!(min_in > outside_max);
                    let got = oracle::split_wcss(&counts, |v| v >= min_in);
                    prop_assert!((got - best).abs() <= 1e-9 * (1.0 + best));
                }
            }
        }
    }

    #[test]
    fn phase_two_with_two_supported_variables() {
        let data = signal_data(600, 8, 2, 0.0, 21);
        let mut m = vec![0.0; 8];
        m[0] = 1.0;
        m[1] = 0.7;
        let cfg = VarSelectConfig {
            n2: 12,
            s: 100,
            p_s: Some(3),
            ..Default::default()
        };
        let counts = phase_two_counts(&data, &ImportanceVector(m), &cfg, &StreamKey::root(1)).unwrap();
        assert_eq!(counts.0, vec![12, 12, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn phase_two_single_sample_is_indicator() {
        let data = signal_data(400, 10, 3, 1.0, 22);
        let cfg = VarSelectConfig {
            n2: 1,
            s: 200,
            p_s: Some(5),
            ..Default::default()
        };
        let m = ImportanceVector((0..10).map(|j| (5.0 - j as f64).max(0.0)).collect());
        let counts = phase_two_counts(&data, &m, &cfg, &StreamKey::root(2)).unwrap();
        assert!(counts.0.iter().all(|&c| c <= 1));
        assert!(counts.0[..3].iter().all(|&c| c == 1));
    }

    #[test]
    fn select_variables_recovers_truth_and_is_deterministic() {
        let data = signal_data(3000, 20, 3, 2.0, 23);
        let cfg = VarSelectConfig {
            n1: 10,
            n2: 20,
            s: 300,
            p_s: Some(5),
            ..Default::default()
        };
        let key = StreamKey::root(77);
        let a = select_variables(&data, &cfg, &key).unwrap();
        let b = select_variables(&data, &cfg, &key).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices, vec![0, 1, 2]);
        // never-candidate variables have zero count
        let base = select_variables_onephase_baseline(&data, 300, 20, &key).unwrap();
        assert_eq!(base.indices, a.indices);
    }

    #[test]
    fn all_zero_importance_yields_empty_flagged_set() {
        let mut s = stream(30);
        let (n, p) = (400, 6);
        let x = DenseMatrix::new(n, p, (0..n * p).map(|_| s.normal()).collect()).unwrap();
        let data = Dataset::new(x, vec![2.0; n]).unwrap();
        let cfg = VarSelectConfig {
            n1: 3,
            n2: 3,
            s: 100,
            ..Default::default()
        };
        let report = select_variables_report(&data, &cfg, &StreamKey::root(3)).unwrap();
        assert!(report.importance.0.iter().all(|&m| m == 0.0));
        assert!(report.active.indices.is_empty());
        assert!(report.active.degenerate);
        assert_eq!(report.active.counts.0, vec![0; p]);
    }

    #[test]
    fn onephase_full_sample_counts_are_all_or_nothing() {
        let data = signal_data(300, 8, 2, 3.0, 31);
        let a = select_variables_onephase_baseline(&data, 300, 7, &StreamKey::root(4)).unwrap();
        assert!(a.counts.0.iter().all(|&c| c == 0 || c == 7));
    }

    #[test]
    fn config_validation() {
        let cfg = VarSelectConfig::default();
        assert!(cfg.validate(10_000, 500).is_ok());
        assert_eq!(cfg.resolved_p_s(500), 50);
        assert_eq!(cfg.resolved_p_s(95), 10);
        assert!(cfg.validate(999, 500).is_err());
        let bad = VarSelectConfig { p_s: Some(0), ..Default::default() };
        assert!(bad.validate(10_000, 500).is_err());
        let bad = VarSelectConfig { n1: 0, ..Default::default() };
        assert!(bad.validate(10_000, 500).is_err());
    }
}
