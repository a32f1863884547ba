//! Small dense matrices for the d x d moment and covariance objects.
//!
//! Dimensions here are the data dimension (1 up to roughly 16), so everything
//! is stored row-major in a flat `Vec<f64>` and computed with plain loops.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative factor of the default determinant singularity floor.
pub const SINGULARITY_FACTOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmallMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SmallMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "matrix dimension must be >= 1");
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row slices; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let dim = rows.len();
        let mut m = Self::zeros(dim);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), dim, "row {i} has wrong length");
            m.data[i * dim..(i + 1) * dim].copy_from_slice(row);
        }
        m
    }

    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim);
        Self { dim, data }
    }

    /// `v v^T`
    pub fn outer(v: &[f64]) -> Self {
        let dim = v.len();
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[i * dim + j] = v[i] * v[j];
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self[(i, i)]).sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|x| x * factor).collect(),
        }
    }

    /// `self + factor * other`
    pub fn add_scaled(&self, other: &SmallMatrix, factor: f64) -> Self {
        assert_eq!(self.dim, other.dim);
        Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + factor * b)
                .collect(),
        }
    }

    /// Accumulates `weight * v v^T` into `self`.
    pub fn add_outer(&mut self, v: &[f64], weight: f64) {
        let dim = self.dim;
        for i in 0..dim {
            let wi = weight * v[i];
            for j in 0..dim {
                self.data[i * dim + j] += wi * v[j];
            }
        }
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim);
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn mul(&self, other: &SmallMatrix) -> SmallMatrix {
        assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut out = SmallMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// `v^T self v`
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(v, &self.mul_vec(v))
    }

    pub fn max_abs_diff(&self, other: &SmallMatrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Default singularity floor, `1e-12 * |trace / dim|^dim`.
    pub fn default_floor(&self) -> f64 {
        scale_floor(self.trace(), self.dim)
    }

    /// Lower Cholesky factor of a symmetric positive definite matrix.
    pub fn cholesky(&self) -> Result<SmallMatrix> {
        let n = self.dim;
        let mut l = SmallMatrix::zeros(n);
        for j in 0..n {
            let mut diag = self[(j, j)];
            for p in 0..j {
                diag -= l[(j, p)] * l[(j, p)];
            }
            if !(diag > 0.0) {
                return Err(Error::InvalidArgument(
                    "matrix is not positive definite".into(),
                ));
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for p in 0..j {
                    s -= l[(i, p)] * l[(j, p)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(l)
    }
}

impl Index<(usize, usize)> for SmallMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl IndexMut<(usize, usize)> for SmallMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `1e-12 * |trace / dim|^dim`: determinant floor for a matrix of the given scale.
pub fn scale_floor(trace: f64, dim: usize) -> f64 {
    SINGULARITY_FACTOR * (trace / dim as f64).abs().powi(dim as i32)
}

/// Determinant and inverse of a symmetric matrix with the default floor.
pub fn det_inv_sym(m: &SmallMatrix) -> Result<(f64, SmallMatrix)> {
    det_inv_sym_with_floor(m, m.default_floor())
}

/// Determinant and inverse of a symmetric matrix.
///
/// Dimensions up to 3 use cofactor expansion; larger ones use Gauss-Jordan
/// elimination with partial pivoting. Fails with [`Error::SingularMatrix`]
/// when `|det| <= floor`. The returned inverse is symmetrized.
pub fn det_inv_sym_with_floor(m: &SmallMatrix, floor: f64) -> Result<(f64, SmallMatrix)> {
    let (det, inv) = match m.dim {
        1 => {
            let det = m[(0, 0)];
            check_floor(det, floor)?;
            (det, SmallMatrix::from_row_major(1, vec![1.0 / det]))
        }
        2 => {
            let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            let det = a * d - b * b;
            check_floor(det, floor)?;
            let r = 1.0 / det;
            (det, SmallMatrix::from_row_major(2, vec![d * r, -b * r, -b * r, a * r]))
        }
        3 => cofactor3(m, floor)?,
        _ => gauss_jordan(m, floor)?,
    };
    Ok((det, symmetrize(inv)))
}

fn check_floor(det: f64, floor: f64) -> Result<()> {
    if !det.is_finite() || det.abs() <= floor {
        Err(Error::SingularMatrix { det })
    } else {
        Ok(())
    }
}

fn cofactor3(m: &SmallMatrix, floor: f64) -> Result<(f64, SmallMatrix)> {
    let a = |i, j| m[(i, j)];
    let c00 = a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1);
    let c01 = a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2);
    let c02 = a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0);
    let det = a(0, 0) * c00 + a(0, 1) * c01 + a(0, 2) * c02;
    check_floor(det, floor)?;
    let c10 = a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2);
    let c11 = a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0);
    let c12 = a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1);
    let c20 = a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1);
    let c21 = a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2);
    let c22 = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    let r = 1.0 / det;
    // inverse = adjugate / det, adjugate = cofactor^T
    #[rustfmt::skip]
    let inv = SmallMatrix::from_row_major(
        3,
        vec![
            c00 * r, c10 * r, c20 * r,
            c01 * r, c11 * r, c21 * r,
            c02 * r, c12 * r, c22 * r,
        ],
    );
    Ok((det, inv))
}

fn gauss_jordan(m: &SmallMatrix, floor: f64) -> Result<(f64, SmallMatrix)> {
    let n = m.dim;
    let mut a = m.data.clone();
    let mut inv = SmallMatrix::identity(n).data;
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col] == 0.0 {
            return Err(Error::SingularMatrix { det: 0.0 });
        }
        if pivot != col {
            for j in 0..n {
                a.swap(col * n + j, pivot * n + j);
                inv.swap(col * n + j, pivot * n + j);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        let rp = 1.0 / p;
        for j in 0..n {
            a[col * n + j] *= rp;
            inv[col * n + j] *= rp;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[i * n + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[i * n + j] -= f * a[col * n + j];
                inv[i * n + j] -= f * inv[col * n + j];
            }
        }
    }
    check_floor(det, floor)?;
    Ok((det, SmallMatrix::from_row_major(n, inv)))
}

fn symmetrize(mut m: SmallMatrix) -> SmallMatrix {
    let n = m.dim;
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn identity_inverse() {
        let (det, inv) = det_inv_sym(&SmallMatrix::identity(2)).unwrap();
        assert_eq!(det, 1.0);
        assert_eq!(inv, SmallMatrix::identity(2));
    }

    #[test]
    fn two_by_two_by_hand() {
        let m = SmallMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let (det, inv) = det_inv_sym(&m).unwrap();
        assert_relative_eq!(det, 3.0, max_relative = 1e-15);
        let expected = SmallMatrix::from_rows(&[&[2.0 / 3.0, -1.0 / 3.0], &[-1.0 / 3.0, 2.0 / 3.0]]);
        assert!(inv.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn rank_one_is_singular() {
        let m = SmallMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        match det_inv_sym(&m) {
            Err(Error::SingularMatrix { det }) => assert_eq!(det, 0.0),
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn floor_is_scale_aware() {
        // A well-conditioned but tiny matrix must not be flagged.
        let m = SmallMatrix::identity(3).scaled(1e-8);
        let (det, _) = det_inv_sym(&m).unwrap();
        assert_relative_eq!(det, 1e-24, max_relative = 1e-12);
    }

    #[test]
    fn cofactor_and_elimination_agree() {
        let m = SmallMatrix::from_rows(&[&[4.0, 1.0, 0.5], &[1.0, 3.0, 0.2], &[0.5, 0.2, 2.0]]);
        let (d1, i1) = det_inv_sym(&m).unwrap();
        let (d2, i2) = gauss_jordan(&m, 0.0).unwrap();
        assert_relative_eq!(d1, d2, max_relative = 1e-13);
        assert!(i1.max_abs_diff(&symmetrize(i2)) < 1e-14);
    }

    #[test]
    fn cholesky_reconstructs() {
        let m = SmallMatrix::from_rows(&[&[4.0, 2.0], &[2.0, 3.0]]);
        let l = m.cholesky().unwrap();
        let mut lt = SmallMatrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                lt[(i, j)] = l[(j, i)];
            }
        }
        assert!(l.mul(&lt).max_abs_diff(&m) < 1e-14);
        assert!(SmallMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).cholesky().is_err());
    }

    fn spd_matrix(dim: usize) -> impl Strategy<Value = SmallMatrix> {
        prop::collection::vec(-1.0f64..1.0, dim * dim).prop_map(move |entries| {
            // A A^T + dim * I is symmetric positive definite.
            let a = SmallMatrix::from_row_major(dim, entries);
            let mut at = SmallMatrix::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    at[(i, j)] = a[(j, i)];
                }
            }
            a.mul(&at).add_scaled(&SmallMatrix::identity(dim), dim as f64)
        })
    }

    proptest! {
        #[test]
        fn inverse_times_matrix_is_identity(m in (1usize..=6).prop_flat_map(spd_matrix)) {
            let (_, inv) = det_inv_sym(&m).unwrap();
            let prod = m.mul(&inv);
            prop_assert!(prod.max_abs_diff(&SmallMatrix::identity(m.dim())) < 1e-10);
            prop_assert!(inv.max_abs_diff(&symmetrize(inv.clone())) == 0.0);
        }
    }
}
