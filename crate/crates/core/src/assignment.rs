//! Maximum-similarity bipartite assignment and the two-step chain
//! confirmation built on top of it.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix of non-negative similarity scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> ScoreMatrix<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix given {} values",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
            return Err(Error::InvalidParameter(format!("score {bad} is not finite and non-negative")));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds the matrix from a scoring closure. Non-finite or negative
    /// scores are replaced by zero.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = f(r, c);
                values.push(if v.is_finite() && v > T::zero() { v } else { T::zero() });
            }
        }
        Self { rows, cols, values }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        Self { rows, cols, values: vec![T::zero(); rows * cols] }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }
}

/// Matched `(row, col)` pairs plus the rows and columns left over. Every
/// index of each side appears exactly once across matches and leftovers.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    fn from_matches(rows: usize, cols: usize, mut matches: Vec<(usize, usize)>) -> Self {
        matches.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &matches {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
            matches,
        }
    }

    pub fn total<T: Scalar>(&self, m: &ScoreMatrix<T>) -> T {
        self.matches.iter().fold(T::zero(), |acc, &(r, c)| acc + m.get(r, c))
    }
}

/// Maximum-total-score assignment of `min(rows, cols)` pairs.
///
/// Shortest augmenting path Hungarian method with row/column potentials,
/// O(n²m). Rows are inserted in index order and columns scanned in index
/// order with strict improvement, so ties always resolve the same way.
pub fn hungarian_max<T: Scalar>(m: &ScoreMatrix<T>) -> Assignment {
    if m.is_empty() {
        return Assignment::from_matches(m.rows, m.cols, Vec::new());
    }
    let transposed = m.rows > m.cols;
    let (n, k) = if transposed { (m.cols, m.rows) } else { (m.rows, m.cols) };
    // cost(i, j) over the short side i, long side j
    let cost = |i: usize, j: usize| -> T {
        if transposed {
            -m.get(j, i)
        } else {
            -m.get(i, j)
        }
    };

    // 1-based potentials; column 0 is a virtual root.
    let inf = T::infinity();
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); k + 1];
    let mut owner = vec![0usize; k + 1];
    let mut way = vec![0usize; k + 1];
    let mut minv = vec![inf; k + 1];
    let mut used = vec![false; k + 1];

    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=k {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=k {
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

    let matches = (1..=k)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .collect();
    Assignment::from_matches(m.rows, m.cols, matches)
}

/// [`hungarian_max`] with every match scoring below `min_score` split back
/// into an unmatched row and column.
pub fn gated_assign<T: Scalar>(m: &ScoreMatrix<T>, min_score: T) -> Assignment {
    let full = hungarian_max(m);
    let kept = full.matches.into_iter().filter(|&(r, c)| m.get(r, c) >= min_score).collect();
    Assignment::from_matches(m.rows, m.cols, kept)
}

/// A confirmed link: element `shared` of the common dimension matched column
/// `primary` of the primary matrix and column `support` of the support
/// matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ChainMatch {
    pub shared: usize,
    pub primary: usize,
    pub support: usize,
}

/// Solves the gated assignment on both matrices independently and keeps a
/// primary match only when its row also found a partner in the support
/// matrix. Both matrices index the shared elements by row.
pub fn two_step_match<T: Scalar>(
    primary: &ScoreMatrix<T>,
    support: &ScoreMatrix<T>,
    gate: T,
) -> Result<Vec<ChainMatch>> {
    if primary.rows != support.rows {
        return Err(Error::DimensionMismatch(format!(
            "primary has {} rows, support has {}",
            primary.rows, support.rows
        )));
    }
    let first = gated_assign(primary, gate);
    if first.matches.is_empty() {
        return Ok(Vec::new());
    }
    let second = gated_assign(support, gate);
    let mut supported = vec![None; support.rows];
    for (r, c) in second.matches {
        supported[r] = Some(c);
    }
    Ok(first
        .matches
        .into_iter()
        .filter_map(|(r, c)| supported[r].map(|s| ChainMatch { shared: r, primary: c, support: s }))
        .collect())
}
