//! Dense complex linear algebra.
//!
//! Everything here is sized for the small matrices that show up in the
//! intersection conditions (at most `(m+p) x (m+p)`), so the routines favour
//! clarity over blocking.

use std::fmt;
use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use thiserror::Error;

/// Complex scalar used throughout the crate.
pub type ComplexScalar = Complex64;

/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_RTOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index ({row}, {col}) out of range for {rows}x{cols} matrix")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is singular to working precision (pivot {pivot:e}, scale {scale:e})")]
    Singular { pivot: f64, scale: f64 },
    #[error("non-finite value produced")]
    NonFinite,
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<ComplexScalar>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ComplexScalar::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ComplexScalar::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(
        rows: usize,
        cols: usize,
        data: Vec<ComplexScalar>,
    ) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::DimensionMismatch {
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a list of equally long rows.
    pub fn from_rows(rows: &[Vec<ComplexScalar>]) -> Result<Self, NumericsError> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(NumericsError::DimensionMismatch {
                    expected: cols,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self, NumericsError> {
        let rows: Vec<Vec<ComplexScalar>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| ComplexScalar::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[ComplexScalar] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[ComplexScalar] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<ComplexScalar> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Largest entry modulus, zero for an empty matrix.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn mul_vec(&self, x: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, NumericsError> {
        if x.len() != self.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn mul(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.cols != other.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = ComplexMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// `[self | other]`.
    pub fn hcat(&self, other: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
        if self.rows != other.rows {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows,
                found: other.rows,
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for r in 0..self.rows {
            data.extend_from_slice(self.row(r));
            data.extend_from_slice(other.row(r));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// Entrywise `a * self + b * other`.
    pub fn affine_combination(
        &self,
        a: ComplexScalar,
        other: &ComplexMatrix,
        b: ComplexScalar,
    ) -> Result<ComplexMatrix, NumericsError> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(NumericsError::DimensionMismatch {
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    /// The matrix with row `r` and column `c` removed.
    pub fn minor(&self, r: usize, c: usize) -> Result<ComplexMatrix, NumericsError> {
        self.check_index(r, c)?;
        let mut data = Vec::with_capacity((self.rows - 1) * (self.cols.saturating_sub(1)));
        for i in (0..self.rows).filter(|&i| i != r) {
            for j in (0..self.cols).filter(|&j| j != c) {
                data.push(self[(i, j)]);
            }
        }
        Ok(ComplexMatrix {
            rows: self.rows - 1,
            cols: self.cols - 1,
            data,
        })
    }

    fn check_index(&self, r: usize, c: usize) -> Result<(), NumericsError> {
        if r >= self.rows || c >= self.cols {
            return Err(NumericsError::IndexOutOfRange {
                row: r,
                col: c,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(())
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = ComplexScalar;

    fn index(&self, (r, c): (usize, usize)) -> &ComplexScalar {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut ComplexScalar {
        &mut self.data[r * self.cols + c]
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(r) {
                write!(f, "{:+.4e}{:+.4e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// `PA = LU` with partial pivoting.
///
/// `factors` holds `U` on and above the diagonal and the multipliers of the
/// unit lower factor below it. `perm[i]` is the original row placed at row
/// `i`. The factorization never fails on rank deficiency; a vanishing pivot
/// column is skipped and shows up as a zero on the diagonal of `U`.
#[derive(Debug, Clone)]
pub struct LuDecomposition {
    pub factors: ComplexMatrix,
    pub perm: Vec<usize>,
    pub det: ComplexScalar,
    /// Largest entry modulus of the input.
    pub scale: f64,
}

impl LuDecomposition {
    pub fn dim(&self) -> usize {
        self.factors.rows()
    }

    /// Smallest diagonal modulus of `U`.
    pub fn min_pivot(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.factors[(i, i)].norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Smallest pivot relative to the input scale; `0` for a zero matrix.
    pub fn min_pivot_ratio(&self) -> f64 {
        if self.scale == 0.0 {
            return 0.0;
        }
        self.min_pivot() / self.scale
    }

    pub fn is_singular(&self) -> bool {
        self.dim() > 0 && !(self.min_pivot() > SINGULAR_RTOL * self.scale)
    }

    pub fn solve(&self, b: &[ComplexScalar]) -> Result<Vec<ComplexScalar>, NumericsError> {
        let n = self.dim();
        if b.len() != n {
            return Err(NumericsError::DimensionMismatch {
                expected: n,
                found: b.len(),
            });
        }
        if self.is_singular() {
            return Err(NumericsError::Singular {
                pivot: self.min_pivot(),
                scale: self.scale,
            });
        }
        let lu = &self.factors;
        let mut y: Vec<ComplexScalar> = self.perm.iter().map(|&i| b[i]).collect();
        for i in 0..n {
            for k in 0..i {
                let l = lu[(i, k)];
                let v = y[k];
                y[i] -= l * v;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = lu[(i, k)];
                let v = y[k];
                y[i] -= u * v;
            }
            y[i] /= lu[(i, i)];
        }
        if y.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(NumericsError::NonFinite);
        }
        Ok(y)
    }
}

pub fn lu_decompose(a: &ComplexMatrix) -> Result<LuDecomposition, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let n = a.rows();
    let scale = a.max_abs();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut sign = 1.0;

    for k in 0..n {
        let (pivot_row, pivot_abs) =
            (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if pivot_row != k {
            for j in 0..n {
                lu.data.swap(k * n + j, pivot_row * n + j);
            }
            perm.swap(k, pivot_row);
            sign = -sign;
        }
        if pivot_abs == 0.0 {
            continue;
        }
        let pivot = lu[(k, k)];
        for i in k + 1..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            if factor.re == 0.0 && factor.im == 0.0 {
                continue;
            }
            for j in k + 1..n {
                let u = lu[(k, j)];
                lu[(i, j)] -= factor * u;
            }
        }
    }

    let det = (0..n).fold(ComplexScalar::new(sign, 0.0), |acc, i| acc * lu[(i, i)]);
    Ok(LuDecomposition {
        factors: lu,
        perm,
        det,
        scale,
    })
}

pub fn determinant(a: &ComplexMatrix) -> Result<ComplexScalar, NumericsError> {
    Ok(lu_decompose(a)?.det)
}

pub fn solve_linear(
    a: &ComplexMatrix,
    b: &[ComplexScalar],
) -> Result<Vec<ComplexScalar>, NumericsError> {
    if a.is_square() && b.len() != a.rows() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    lu_decompose(a)?.solve(b)
}

/// Signed minor `(-1)^(r+c) det(A without row r, column c)`, zero-based
/// indices. Computed from the explicit minor so it stays accurate when `A`
/// itself is singular.
pub fn cofactor(a: &ComplexMatrix, r: usize, c: usize) -> Result<ComplexScalar, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    let minor = a.minor(r, c)?;
    let det = determinant(&minor)?;
    Ok(if (r + c).is_multiple_of(2) { det } else { -det })
}

/// Euclidean norm of a complex vector.
pub fn norm(x: &[ComplexScalar]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Euclidean distance between two complex vectors of equal length.
pub fn distance(a: &[ComplexScalar], b: &[ComplexScalar]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn c(re: f64, im: f64) -> ComplexScalar {
        ComplexScalar::new(re, im)
    }

    /// Recursive first-row Laplace expansion, independent of the LU path.
    fn laplace_det(a: &ComplexMatrix) -> ComplexScalar {
        let n = a.rows();
        if n == 0 {
            return c(1.0, 0.0);
        }
        if n == 1 {
            return a[(0, 0)];
        }
        let mut acc = c(0.0, 0.0);
        for j in 0..n {
            let mut sub = Vec::new();
            for i in 1..n {
                for k in (0..n).filter(|&k| k != j) {
                    sub.push(a[(i, k)]);
                }
            }
            let sub = ComplexMatrix::from_vec(n - 1, n - 1, sub).unwrap();
            let term = a[(0, j)] * laplace_det(&sub);
            if j % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
        }
        acc
    }

    #[test]
    fn identity_det_is_one() {
        let lu = lu_decompose(&ComplexMatrix::identity(3)).unwrap();
        assert_eq!(lu.det, c(1.0, 0.0));
    }

    #[test]
    fn transposition_det_is_minus_one() {
        let a = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
        assert_eq!(determinant(&a).unwrap(), c(-1.0, 0.0));
    }

    #[test]
    fn non_square_rejected() {
        let a = ComplexMatrix::zeros(2, 3);
        assert!(matches!(
            lu_decompose(&a),
            Err(NumericsError::NotSquare { .. })
        ));
        assert!(matches!(
            cofactor(&a, 0, 0),
            Err(NumericsError::NotSquare { .. })
        ));
    }

    #[test]
    fn det_matches_laplace_oracle() {
        let mut rng = SeededRng::new(11);
        for n in 1..=6 {
            for _ in 0..5 {
                let a = rng.gaussian_matrix(n, n);
                let lu = determinant(&a).unwrap();
                let oracle = laplace_det(&a);
                assert!(
                    (lu - oracle).norm() <= 1e-12 * oracle.norm().max(1e-300),
                    "n={n}"
                );
            }
        }
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let b = vec![c(1.0, 2.0), c(3.0, 0.0)];
        assert_eq!(solve_linear(&ComplexMatrix::identity(2), &b).unwrap(), b);

        let mut d = ComplexMatrix::zeros(2, 2);
        d[(0, 0)] = c(2.0, 0.0);
        d[(1, 1)] = c(0.0, 4.0);
        let x = solve_linear(&d, &[c(2.0, 0.0), c(0.0, 4.0)]).unwrap();
        assert!((x[0] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((x[1] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let mut rng = SeededRng::new(5);
        let a = rng.gaussian_matrix(5, 5);
        let x_star = rng.gaussian_vector(5);
        let b = a.mul_vec(&x_star).unwrap();
        let x = solve_linear(&a, &b).unwrap();
        assert!(distance(&x, &x_star) <= 1e-10);
    }

    #[test]
    fn singular_matrix_signalled() {
        let a = ComplexMatrix::from_real_rows(&[&[1.0, 2.0], &[2.0, 4.0]]).unwrap();
        assert!(matches!(
            solve_linear(&a, &[c(1.0, 0.0), c(0.0, 0.0)]),
            Err(NumericsError::Singular { .. })
        ));
        let z = ComplexMatrix::zeros(3, 3);
        assert!(solve_linear(&z, &[c(0.0, 0.0); 3]).is_err());
        assert_eq!(determinant(&z).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn solve_rejects_wrong_rhs() {
        let a = ComplexMatrix::identity(3);
        assert!(matches!(
            solve_linear(&a, &[c(1.0, 0.0)]),
            Err(NumericsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cofactor_of_identity() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(cofactor(&i2, 0, 0).unwrap(), c(1.0, 0.0));
        assert_eq!(cofactor(&i2, 0, 1).unwrap(), c(0.0, 0.0));
        assert!(matches!(
            cofactor(&i2, 2, 0),
            Err(NumericsError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn laplace_identity_holds_for_every_row() {
        let mut rng = SeededRng::new(23);
        for n in 2..=6 {
            let a = rng.gaussian_matrix(n, n);
            let det = determinant(&a).unwrap();
            for r in 0..n {
                let expanded: ComplexScalar = (0..n)
                    .map(|col| a[(r, col)] * cofactor(&a, r, col).unwrap())
                    .sum();
                assert!((expanded - det).norm() <= 1e-10 * det.norm());
            }
        }
    }

    #[test]
    fn cofactor_accurate_at_singular_matrix() {
        // rank n-1: adjugate is nonzero although the inverse does not exist
        let a =
            ComplexMatrix::from_real_rows(&[&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0], &[0.0, 1.0, 5.0]])
                .unwrap();
        assert!(determinant(&a).unwrap().norm() < 1e-14);
        let cof = cofactor(&a, 1, 0).unwrap();
        // -(2*5 - 3*1) = -7
        assert!((cof - c(-7.0, 0.0)).norm() < 1e-13);
    }
}
