//! Small dense symmetric factorizations.
//!
//! Problem sizes here are `p × p` with `p` a handful of regression
//! coefficients, so a plain Cholesky with an explicit rank check is all the
//! machinery needed. The rank check compares each pivot to the original
//! diagonal entry: `d_k / a_kk` is one minus the squared multiple correlation of
//! column `k` on the preceding columns, which makes the threshold scale free.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold for declaring a Gram matrix rank deficient.
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: DMatrix<f64>,
}

impl Cholesky {
    /// Factorizes a Gram matrix, reporting the first pivot whose relative size
    /// drops below [`PIVOT_TOLERANCE`] as a singular design.
    pub fn gram(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor(a, PIVOT_TOLERANCE).map_err(|(pivot, ratio)| Error::SingularDesign { pivot, ratio })
    }

    /// Factorizes a symmetric positive definite matrix.
    pub fn spd(a: &DMatrix<f64>) -> Result<Self> {
        Self::factor(a, 0.0).map_err(|(pivot, _)| Error::NotPositiveDefinite { pivot })
    }

    fn factor(a: &DMatrix<f64>, rel_tol: f64) -> std::result::Result<Self, (usize, f64)> {
        let p = a.nrows();
        assert_eq!(p, a.ncols(), "Cholesky of a non-square matrix");
        let mut l = DMatrix::<f64>::zeros(p, p);
        for j in 0..p {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            let scale = a[(j, j)].abs();
            let ratio = if scale > 0.0 { d / scale } else { d };
            if d.is_nan() || ratio.is_nan() || d <= 0.0 || ratio <= rel_tol || !d.is_finite() {
                return Err((j, ratio));
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..p {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Cholesky { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `L x = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        let p = self.dim();
        for i in 0..p {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `Lᵀ x = b` in place.
    pub fn solve_upper_in_place(&self, b: &mut [f64]) {
        let p = self.dim();
        for i in (0..p).rev() {
            let mut s = b[i];
            for k in (i + 1)..p {
                s -= self.l[(k, i)] * b[k];
            }
            b[i] = s / self.l[(i, i)];
        }
    }

    /// Solves `A x = b` in place with two triangular solves.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.solve_lower_in_place(b);
        self.solve_upper_in_place(b);
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    /// `A⁻¹` as a dense matrix (only ever `p × p`).
    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut inv = DMatrix::<f64>::identity(p, p);
        for j in 0..p {
            let mut col = inv.column(j).clone_owned();
            self.solve_in_place(col.as_mut_slice());
            inv.set_column(j, &col);
        }
        symmetrize(&mut inv);
        inv
    }

    /// Factor `B = L⁻ᵀ`, which satisfies `B Bᵀ = A⁻¹`.
    pub fn inverse_factor(&self) -> DMatrix<f64> {
        let p = self.dim();
        let mut b = DMatrix::<f64>::identity(p, p);
        for j in 0..p {
            let mut col = b.column(j).clone_owned();
            self.solve_upper_in_place(col.as_mut_slice());
            b.set_column(j, &col);
        }
        b
    }

    /// Writes `L⁻ᵀ z` into `z`, turning standard normals into `N(0, A⁻¹)` draws.
    pub fn color_inverse_in_place(&self, z: &mut [f64]) {
        self.solve_upper_in_place(z);
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let p = m.nrows();
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
