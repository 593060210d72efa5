//! Deterministic subdata selectors.
//!
//! LEVSS keeps the `k` rows with the largest leverage scores of the design
//! `(1, X_active)`. IBOSS keeps the extreme values of each covariate in turn
//! and serves as the comparison selector.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{leverage_scores, DenseMatrix, ThinQr};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    Levss,
    Iboss,
}

impl std::fmt::Display for Selector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Selector::Levss => "levss",
            Selector::Iboss => "iboss",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubdataSelection {
    /// Sorted, distinct row indices.
    pub row_indices: Vec<usize>,
    pub selector: Selector,
    /// Leverage of each selected row, aligned with `row_indices` (LEVSS only).
    pub leverage_values: Option<Vec<f64>>,
}

impl SubdataSelection {
    pub fn k(&self) -> usize {
        self.row_indices.len()
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if k == 0 {
        return Err(Error::InvalidSize {
            requested: 0,
            available: n,
        });
    }
    Ok(())
}

/// Rows with the `k` largest leverage scores of `(1, X_active)`; ties go to
/// the smaller row index.
pub fn levss_select(x_active: &DenseMatrix, k: usize) -> Result<SubdataSelection> {
    let n = x_active.rows();
    check_k(k, n)?;
    let h = leverage_scores(&x_active.with_intercept())?;
    // h lies in [0, 1]; differences below 1e-12 are rounding and count as ties
    let rank: Vec<i64> = h.iter().map(|v| (v * 1e12).round() as i64).collect();
    let by_leverage = |a: &usize, b: &usize| -> Ordering { rank[*b].cmp(&rank[*a]).then(a.cmp(b)) };
    let mut order: Vec<usize> = (0..n).collect();
    if k < n {
        order.select_nth_unstable_by(k - 1, by_leverage);
        order.truncate(k);
    }
    order.sort_unstable();
    let leverage_values = order.iter().map(|&i| h[i]).collect();
    Ok(SubdataSelection {
        row_indices: order,
        selector: Selector::Levss,
        leverage_values: Some(leverage_values),
    })
}

/// Information-based selection: for each covariate in turn take the
/// `floor(k / (2 p_a))` unselected rows with the smallest values and as many
/// with the largest. Any remainder is handed out one row at a time over the
/// covariates in order, taking the maximum side on the first pass and the
/// minimum side on the second. Ties go to the smaller row index.
pub fn iboss_select(x_active: &DenseMatrix, k: usize) -> Result<SubdataSelection> {
    let (n, p) = (x_active.rows(), x_active.cols());
    check_k(k, n)?;
    let per_side = k / (2 * p);
    let mut taken = vec![false; n];

    let ascending: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                x_active.get(a, j).partial_cmp(&x_active.get(b, j)).unwrap_or(Ordering::Equal).then(a.cmp(&b))
            });
            idx
        })
        .collect();
    let descending: Vec<Vec<usize>> = (0..p)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| {
                x_active.get(b, j).partial_cmp(&x_active.get(a, j)).unwrap_or(Ordering::Equal).then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let take = |order: &[usize], count: usize, taken: &mut Vec<bool>| {
        let mut got = 0;
        for &i in order {
            if got == count {
                break;
            }
            if !taken[i] {
                taken[i] = true;
                got += 1;
            }
        }
    };

    for j in 0..p {
        take(&ascending[j], per_side, &mut taken);
        take(&descending[j], per_side, &mut taken);
    }
    let remainder = k - 2 * per_side * p;
    for t in 0..remainder {
        let j = t % p;
        let order = if t < p { &descending[j] } else { &ascending[j] };
        take(order, 1, &mut taken);
    }

    let rows: Vec<usize> = (0..n).filter(|&i| taken[i]).collect();
    debug_assert_eq!(rows.len(), k);
    Ok(SubdataSelection {
        row_indices: rows,
        selector: Selector::Iboss,
        leverage_values: None,
    })
}

pub fn select(selector: Selector, x_active: &DenseMatrix, k: usize) -> Result<SubdataSelection> {
    match selector {
        Selector::Levss => levss_select(x_active, k),
        Selector::Iboss => iboss_select(x_active, k),
    }
}

/// `log det(Z_s^T Z_s)` for `Z_s = (1, X_active)` restricted to `rows`.
pub fn information_log_det(x_active: &DenseMatrix, rows: &[usize]) -> Result<f64> {
    let z = x_active.select_rows(rows)?.with_intercept();
    let qr = ThinQr::factor(&z)?;
    qr.check_rank()?;
    Ok(qr.log_abs_det_r() * 2.0)
}
