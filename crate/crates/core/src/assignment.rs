//! Optimal one-to-one assignment over an affinity matrix.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::affinity::AffinityMatrix;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("cost matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
}

/// Minimum-cost assignment of `min(m, n)` rows to distinct columns.
///
/// Rectangular input is padded to square with `1 + max(cost)`; padded pairs
/// are not reported. Shortest augmenting path with row/column potentials,
/// O(max(m, n)^3). Among equal-cost alternatives the lowest column index
/// found in the scan wins, rows being inserted in index order, so the
/// output is deterministic. Pairs are returned sorted by row.
pub fn hungarian(cost: &DMatrix<f64>) -> Result<Vec<(usize, usize)>, AssignmentError> {
    let (rows, cols) = cost.shape();
    if rows == 0 || cols == 0 {
        return Ok(Vec::new());
    }
    let mut max = f64::NEG_INFINITY;
    for c in 0..cols {
        for r in 0..rows {
            let v = cost[(r, c)];
            if !v.is_finite() {
                return Err(AssignmentError::NonFinite { row: r, col: c });
            }
            max = max.max(v);
        }
    }
    let pad = 1.0 + max;
    let n = rows.max(cols);
    let at = |r: usize, c: usize| if r < rows && c < cols { cost[(r, c)] } else { pad };

    // 1-based; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = at(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=n)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .filter(|&(r, c)| r < rows && c < cols)
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociatedPair {
    pub index_a: usize,
    pub index_b: usize,
    pub affinity: f64,
}

/// Predicted one-to-one associations of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    pub frame_id: u32,
    pub pairs: Vec<AssociatedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

/// Hungarian on `1 - affinity`, keeping assigned pairs whose affinity
/// exceeds `accept_threshold`. Non-finite affinities count as 0.
pub fn associate(affinity: &AffinityMatrix, accept_threshold: f64) -> Association {
    let values = affinity.values.map(|a| if a.is_finite() { a } else { 0.0 });
    let cost = values.map(|a| 1.0 - a);
    let assigned = hungarian(&cost).unwrap_or_default();

    let mut used_a = vec![false; values.nrows()];
    let mut used_b = vec![false; values.ncols()];
    let pairs: Vec<_> = assigned
        .into_iter()
        .map(|(i, j)| AssociatedPair {
            index_a: i,
            index_b: j,
            affinity: values[(i, j)],
        })
        .filter(|p| p.affinity > accept_threshold)
        .inspect(|p| {
            used_a[p.index_a] = true;
            used_b[p.index_b] = true;
        })
        .collect();
    let unmatched = |used: &[bool]| used.iter().enumerate().filter(|(_, &u)| !u).map(|(k, _)| k).collect();
    Association {
        frame_id: affinity.frame_id,
        unmatched_a: unmatched(&used_a),
        unmatched_b: unmatched(&used_b),
        pairs,
    }
}
