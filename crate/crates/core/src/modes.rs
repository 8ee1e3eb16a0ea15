//! Modal decomposition of an arc matrix.
//!
//! `A = U Σ Vᵀ = W Vᵀ`: rows of `Vᵀ` are the modes, `W = UΣ` holds each
//! book's coefficients on them.

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::arcs::EmotionalArc;

/// Tolerance on row sums for a matrix of mean-centered arcs.
pub const CENTER_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModeError {
    #[error("arc matrix needs at least 2 rows and 2 columns, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("row {row} has {found} values, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row} contains a non-finite value")]
    NonFinite { row: usize },
    #[error("row {row} is not mean-centered (sum {sum:e})")]
    NotCentered { row: usize, sum: f64 },
    #[error("book labels ({labels}) do not match row count ({rows})")]
    Labels { labels: usize, rows: usize },
    #[error("mode count {m} outside 1..={max}")]
    ModeRange { m: usize, max: usize },
    #[error("row {row} outside 0..{rows}")]
    RowRange { row: usize, rows: usize },
    #[error("singular value decomposition did not converge")]
    Numerical,
}

/// Books by time points.
#[derive(Debug, Clone)]
pub struct ArcMatrix {
    data: DMatrix<f64>,
    book_ids: Vec<u64>,
}

impl ArcMatrix {
    /// Builds a matrix from raw rows without requiring them to be centered.
    pub fn from_rows(rows: &[Vec<f64>], book_ids: Vec<u64>) -> Result<Self, ModeError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows < 2 || ncols < 2 {
            return Err(ModeError::TooSmall {
                rows: nrows,
                cols: ncols,
            });
        }
        if book_ids.len() != nrows {
            return Err(ModeError::Labels {
                labels: book_ids.len(),
                rows: nrows,
            });
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != ncols {
                return Err(ModeError::Ragged {
                    row,
                    found: r.len(),
                    expected: ncols,
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(ModeError::NonFinite { row });
            }
        }
        let data = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
        Ok(Self { data, book_ids })
    }

    /// Builds a matrix of mean-centered arcs, rejecting any row whose sum
    /// exceeds [`CENTER_TOLERANCE`].
    pub fn from_arcs(arcs: &[EmotionalArc]) -> Result<Self, ModeError> {
        let rows: Vec<Vec<f64>> = arcs.iter().map(|a| a.values.clone()).collect();
        let m = Self::from_rows(&rows, arcs.iter().map(|a| a.book_id).collect())?;
        m.check_centered()?;
        Ok(m)
    }

    pub fn check_centered(&self) -> Result<(), ModeError> {
        for (row, r) in self.data.row_iter().enumerate() {
            let sum = r.sum();
            if sum.abs() > CENTER_TOLERANCE {
                return Err(ModeError::NotCentered { row, sum });
            }
        }
        Ok(())
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn book_ids(&self) -> &[u64] {
        &self.book_ids
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    pub fn sign(self) -> f64 {
        match self {
            Polarity::Positive => 1.0,
            Polarity::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    /// Modes as rows, orthonormal.
    pub modes: DMatrix<f64>,
    /// Non-increasing.
    pub singular_values: Vec<f64>,
    /// `UΣ`, one row per book.
    pub coefficients: DMatrix<f64>,
    /// `coefficients` with each row scaled to unit L1 mass.
    pub normalized: DMatrix<f64>,
    pub book_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedBook {
    pub row: usize,
    pub book_id: u64,
    pub coefficient: f64,
}

/// Thin SVD with a fixed sign convention: every mode's largest-magnitude
/// component is positive.
pub fn decompose(matrix: &ArcMatrix) -> Result<ModeDecomposition, ModeError> {
    let a = &matrix.data;
    let svd = nalgebra::linalg::SVD::try_new(a.clone(), true, true, f64::EPSILON, 0)
        .ok_or(ModeError::Numerical)?;
    let u = svd.u.ok_or(ModeError::Numerical)?;
    let v_t = svd.v_t.ok_or(ModeError::Numerical)?;
    let sigma = svd.singular_values;
    let k = sigma.len();

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let (rows, cols) = (a.nrows(), a.ncols());
    let mut modes = DMatrix::zeros(k, cols);
    let mut coefficients = DMatrix::zeros(rows, k);
    let mut singular_values = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mode = v_t.row(src);
        let pivot = mode
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, &v)| {
                if v.abs() > best.1.abs() {
                    (j, v)
                } else {
                    best
                }
            })
            .0;
        let sign = if mode[pivot] < 0.0 { -1.0 } else { 1.0 };
        modes.row_mut(dst).copy_from(&(mode * sign));
        let s = sigma[src];
        singular_values.push(s);
        coefficients
            .column_mut(dst)
            .copy_from(&(u.column(src) * (sign * s)));
    }

    let mut normalized = coefficients.clone();
    for mut row in normalized.row_iter_mut() {
        let mass: f64 = row.iter().map(|v| v.abs()).sum();
        if mass > 0.0 {
            row /= mass;
        }
    }
    Ok(ModeDecomposition {
        modes,
        singular_values,
        coefficients,
        normalized,
        book_ids: matrix.book_ids.clone(),
    })
}

impl ModeDecomposition {
    pub fn num_modes(&self) -> usize {
        self.singular_values.len()
    }

    pub fn num_books(&self) -> usize {
        self.coefficients.nrows()
    }

    /// Number of singular values above the usual numerical-rank cutoff.
    pub fn rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        let dim = self.num_books().max(self.modes.ncols()) as f64;
        let tol = top * dim * f64::EPSILON;
        self.singular_values.iter().filter(|&&s| s > tol).count()
    }

    fn check_m(&self, m: usize) -> Result<(), ModeError> {
        if m == 0 || m > self.num_modes() {
            return Err(ModeError::ModeRange {
                m,
                max: self.num_modes(),
            });
        }
        Ok(())
    }

    fn check_row(&self, row: usize) -> Result<(), ModeError> {
        if row >= self.num_books() {
            return Err(ModeError::RowRange {
                row,
                rows: self.num_books(),
            });
        }
        Ok(())
    }

    pub fn mode(&self, j: usize) -> Vec<f64> {
        self.modes.row(j).iter().copied().collect()
    }

    /// Share of total squared singular mass carried by the first `m` modes.
    pub fn variance_explained(&self, m: usize) -> Result<f64, ModeError> {
        self.check_m(m)?;
        let total: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return Ok(1.0);
        }
        let head: f64 = self.singular_values[..m].iter().map(|s| s * s).sum();
        Ok((head / total).min(1.0))
    }

    /// Cumulative variance explained for m = 1..=num_modes.
    pub fn variance_curve(&self) -> Vec<f64> {
        (1..=self.num_modes())
            .map(|m| self.variance_explained(m).unwrap())
            .collect()
    }

    /// Approximation of book `row` from its first `m` modes.
    pub fn reconstruct(&self, row: usize, m: usize) -> Result<Vec<f64>, ModeError> {
        self.check_row(row)?;
        self.check_m(m)?;
        let w = self.coefficients.view((row, 0), (1, m));
        let v = self.modes.view((0, 0), (m, self.modes.ncols()));
        Ok((w * v).iter().copied().collect())
    }

    /// Books with the strongest normalized coefficient on mode `j` in the
    /// given polarity: descending for positive, ascending for negative.
    /// Ties keep row order.
    pub fn rank_books_for_mode(
        &self,
        j: usize,
        polarity: Polarity,
        k: usize,
    ) -> Result<Vec<RankedBook>, ModeError> {
        if j >= self.num_modes() {
            return Err(ModeError::ModeRange {
                m: j + 1,
                max: self.num_modes(),
            });
        }
        let col = self.normalized.column(j);
        let mut rows: Vec<usize> = (0..self.num_books()).collect();
        rows.sort_by(|&a, &b| {
            let (x, y) = (col[a] * polarity.sign(), col[b] * polarity.sign());
            y.total_cmp(&x).then(a.cmp(&b))
        });
        Ok(rows
            .into_iter()
            .take(k)
            .map(|row| RankedBook {
                row,
                book_id: self.book_ids[row],
                coefficient: col[row],
            })
            .collect())
    }

    /// Mode (0-based) with the largest absolute normalized coefficient for
    /// book `row`, with the sign of that coefficient.
    pub fn assign_mode(&self, row: usize) -> Result<(usize, Polarity), ModeError> {
        self.check_row(row)?;
        Ok(assign_from_coefficients(
            self.normalized.row(row).iter().copied(),
        ))
    }

    pub fn assign_all(&self) -> Vec<(usize, Polarity)> {
        (0..self.num_books())
            .map(|r| self.assign_mode(r).unwrap())
            .collect()
    }
}

/// Argmax of `|c|` with the lowest index winning ties; zero counts as positive.
pub fn assign_from_coefficients(coefficients: impl IntoIterator<Item = f64>) -> (usize, Polarity) {
    let (mut best, mut best_abs, mut best_val) = (0, f64::NEG_INFINITY, 0.0);
    for (j, c) in coefficients.into_iter().enumerate() {
        if c.abs() > best_abs {
            (best, best_abs, best_val) = (j, c.abs(), c);
        }
    }
    let polarity = if best_val < 0.0 {
        Polarity::Negative
    } else {
        Polarity::Positive
    };
    (best, polarity)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frob(m: &DMatrix<f64>) -> f64 {
        m.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let m = ArcMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1, 2]).unwrap();
        let d = decompose(&m).unwrap();
        assert!((d.singular_values[0] - 1.0).abs() < 1e-12);
        assert!((d.singular_values[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_matrix() {
        let u = [1.0, -2.0, 0.5];
        let v = [0.3, -0.1, -0.2, 0.6];
        let rows: Vec<Vec<f64>> = u
            .iter()
            .map(|a| v.iter().map(|b| a * b).collect())
            .collect();
        let d = decompose(&ArcMatrix::from_rows(&rows, vec![1, 2, 3]).unwrap()).unwrap();
        assert_eq!(d.rank(), 1);
        assert!(d.singular_values[1] < 1e-12);
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Largest component of v is positive, so the mode is +v/|v|.
        for (j, &x) in v.iter().enumerate() {
            assert!((d.modes[(0, j)] - x / vn).abs() < 1e-12);
        }
        assert!((d.variance_explained(1).unwrap() - 1.0).abs() < 1e-12);
        let r = d.reconstruct(1, 1).unwrap();
        for (a, b) in r.iter().zip(&rows[1]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_residual_small() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..8)
                    .map(|j| ((i * 7 + j * 3) % 11) as f64 - 5.0 + 0.1 * j as f64)
                    .collect()
            })
            .collect();
        let m = ArcMatrix::from_rows(&rows, (0..5).collect()).unwrap();
        let d = decompose(&m).unwrap();
        let recon = &d.coefficients * &d.modes;
        assert!(frob(&(m.as_matrix() - recon)) / frob(m.as_matrix()) < 1e-10);
        let gram = &d.modes * d.modes.transpose();
        assert!(frob(&(gram - DMatrix::identity(5, 5))) < 1e-8);
        assert!(d.singular_values.windows(2).all(|w| w[0] >= w[1]));
        for row in d.normalized.row_iter() {
            assert!((row.iter().map(|v| v.abs()).sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn range_errors() {
        let m = ArcMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![1, 2]).unwrap();
        let d = decompose(&m).unwrap();
        assert!(d.variance_explained(0).is_err());
        assert!(d.variance_explained(3).is_err());
        assert!(d.reconstruct(2, 1).is_err());
        assert!(d.rank_books_for_mode(2, Polarity::Positive, 1).is_err());
        assert!(ArcMatrix::from_rows(&[vec![1.0, 0.0]], vec![1]).is_err());
        assert!(ArcMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0]], vec![1, 2]).is_err());
        assert!(
            ArcMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 2.0]], vec![1, 2])
                .unwrap()
                .check_centered()
                .is_err()
        );
    }

    #[test]
    fn ranking_follows_polarity() {
        let normalized = DMatrix::from_row_slice(3, 1, &[0.9, 0.1, -0.8]);
        let d = ModeDecomposition {
            modes: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            singular_values: vec![1.0],
            coefficients: normalized.clone(),
            normalized,
            book_ids: vec![10, 20, 30],
        };
        let pos = d.rank_books_for_mode(0, Polarity::Positive, 2).unwrap();
        assert_eq!(pos.iter().map(|b| b.row).collect::<Vec<_>>(), vec![0, 1]);
        let neg = d.rank_books_for_mode(0, Polarity::Negative, 1).unwrap();
        assert_eq!(neg[0].book_id, 30);
        assert_eq!(neg[0].coefficient, -0.8);
    }

    #[test]
    fn assignment_rules() {
        assert_eq!(
            assign_from_coefficients([0.7, -0.3]),
            (0, Polarity::Positive)
        );
        assert_eq!(
            assign_from_coefficients([0.3, -0.7]),
            (1, Polarity::Negative)
        );
        assert_eq!(
            assign_from_coefficients([0.5, 0.5]),
            (0, Polarity::Positive)
        );
        assert_eq!(
            assign_from_coefficients([-0.5, 0.5]),
            (0, Polarity::Negative)
        );
    }
}
