//! Binary-response data, the sign-flipped design, and likelihood evaluation.
//!
//! Multiplying row `i` of `X` by `2yᵢ − 1` gives the signed design `X_y`,
//! which carries everything the probit likelihood needs:
//! `Pr(y | β) = ∏ Φ((X_y β)ᵢ)`. Its Gram matrix equals `XᵀX`, and the
//! orthogonal projector `Ψ` onto the complement of its column space drives
//! both the importance weights and the propriety question.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::quadrature;
use crate::sampler::sample_hemisphere;
use crate::special::log_norm_cdf;

/// Binary responses with a full-rank design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u8>,
    x: DMatrix<f64>,
    has_intercept: bool,
}

impl Dataset {
    /// Validates `y ∈ {0,1}ⁿ`, `n ≥ p ≥ 1` and full column rank.
    pub fn new(y: Vec<u8>, x: DMatrix<f64>, has_intercept: bool) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: y.len(),
            });
        }
        if let Some(i) = y.iter().position(|&v| v > 1) {
            return Err(Error::InvalidData(format!(
                "response {} at row {} is not 0/1",
                y[i],
                i + 1
            )));
        }
        if p == 0 || n < p {
            return Err(Error::InvalidData(format!("need n ≥ p ≥ 1, got n={n}, p={p}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("design contains non-finite values".into()));
        }
        Cholesky::gram(&(x.transpose() * &x))?;
        Ok(Dataset { y, x, has_intercept })
    }

    /// Builds a dataset from row-major covariates, optionally prepending a
    /// constant column.
    pub fn from_rows(y: Vec<u8>, rows: &[Vec<f64>], intercept: bool) -> Result<Self> {
        let n = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != width) {
            return Err(Error::InvalidData(format!(
                "row {} has {} covariates, expected {width}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let p = width + usize::from(intercept);
        let x = DMatrix::from_fn(n, p, |i, j| match (intercept, j) {
            (true, 0) => 1.0,
            (true, j) => rows[i][j - 1],
            (false, j) => rows[i][j],
        });
        Dataset::new(y, x, intercept)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    /// The same responses with every column `j` of `X` multiplied by `scale[j]`.
    pub fn rescaled(&self, scale: &[f64]) -> Result<Self> {
        if scale.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: scale.len(),
            });
        }
        let mut x = self.x.clone();
        for (j, s) in scale.iter().enumerate() {
            x.column_mut(j).scale_mut(*s);
        }
        Dataset::new(self.y.clone(), x, self.has_intercept)
    }
}

/// `X_y` together with the Cholesky factorization of its Gram matrix.
#[derive(Debug, Clone)]
pub struct SignedDesign {
    xy: DMatrix<f64>,
    gram: DMatrix<f64>,
    chol: Cholesky,
    inv_gram_factor: DMatrix<f64>,
    log_det_gram: f64,
}

/// Flips the sign of each row with `yᵢ = 0` and factorizes the Gram matrix.
pub fn build_signed_design(d: &Dataset) -> Result<SignedDesign> {
    let mut xy = d.x.clone();
    for (i, &yi) in d.y.iter().enumerate() {
        if yi == 0 {
            xy.row_mut(i).neg_mut();
        }
    }
    let gram = d.x.transpose() * &d.x;
    let chol = Cholesky::gram(&gram)?;
    let inv_gram_factor = chol.inverse_factor();
    let log_det_gram = chol.log_det();
    Ok(SignedDesign {
        xy,
        gram,
        chol,
        inv_gram_factor,
        log_det_gram,
    })
}

impl SignedDesign {
    pub fn n(&self) -> usize {
        self.xy.nrows()
    }

    pub fn p(&self) -> usize {
        self.xy.ncols()
    }

    pub fn xy(&self) -> &DMatrix<f64> {
        &self.xy
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn gram_cholesky(&self) -> &Cholesky {
        &self.chol
    }

    /// `A` with `A Aᵀ = (XᵀX)⁻¹`.
    pub fn inv_gram_factor(&self) -> &DMatrix<f64> {
        &self.inv_gram_factor
    }

    pub fn log_det_gram(&self) -> f64 {
        self.log_det_gram
    }

    pub fn projector(&self) -> Projector<'_> {
        Projector { sd: self }
    }

    /// `X_yᵀ h` written into `out` (length `p`).
    pub(crate) fn xy_t_mul(&self, h: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.xy.column(j).iter().zip(h).map(|(a, b)| a * b).sum();
        }
    }

    /// `h − X_y b` written into `out`.
    pub(crate) fn residual(&self, h: &[f64], b: &[f64], out: &mut [f64]) {
        out.copy_from_slice(h);
        for (j, bj) in b.iter().enumerate() {
            for (o, x) in out.iter_mut().zip(self.xy.column(j).iter()) {
                *o -= x * bj;
            }
        }
    }

    /// `X_y α`.
    pub fn signed_predictor(&self, alpha: &[f64]) -> Result<DVector<f64>> {
        if alpha.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: alpha.len(),
            });
        }
        Ok(&self.xy * DVector::from_column_slice(alpha))
    }
}

/// Matrix-free view of `Ψ = I − X_y (XᵀX)⁻¹ X_yᵀ`.
#[derive(Debug, Clone, Copy)]
pub struct Projector<'a> {
    sd: &'a SignedDesign,
}

impl Projector<'_> {
    /// `Ψ h` via two triangular solves; the `n × n` matrix is never formed.
    pub fn apply(&self, h: &[f64]) -> Result<DVector<f64>> {
        let n = self.sd.n();
        if h.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: h.len(),
            });
        }
        let mut b = vec![0.0; self.sd.p()];
        let mut out = DVector::zeros(n);
        self.apply_into(h, &mut b, out.as_mut_slice());
        Ok(out)
    }

    /// Allocation-free kernel; `coef` has length `p`, `out` length `n`.
    pub(crate) fn apply_into(&self, h: &[f64], coef: &mut [f64], out: &mut [f64]) {
        self.sd.xy_t_mul(h, coef);
        self.sd.chol.solve_in_place(coef);
        self.sd.residual(h, coef, out);
    }

    /// `‖Ψ h‖`.
    pub fn residual_norm(&self, h: &[f64]) -> Result<f64> {
        Ok(self.apply(h)?.norm())
    }
}

/// `ln Pr(y | β) = Σ ln Φ((2yᵢ − 1) xᵢᵀβ)`.
pub fn log_likelihood(d: &Dataset, beta: &[f64]) -> Result<f64> {
    if beta.len() != d.p() {
        return Err(Error::DimensionMismatch {
            expected: d.p(),
            got: beta.len(),
        });
    }
    Ok((0..d.n())
        .map(|i| {
            let eta: f64 = d.x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let sign = if d.y[i] == 1 { 1.0 } else { -1.0 };
            log_norm_cdf(sign * eta)
        })
        .sum())
}

/// `π^{n/2} / (2ⁿ Γ(n/2))`, one half of the surface area of the
/// positive-orthant unit sphere in `Rⁿ`.
pub fn half_orthant_area(n: usize) -> f64 {
    let nf = n as f64;
    (0.5 * nf * std::f64::consts::PI.ln() - nf * std::f64::consts::LN_2 - ln_gamma(0.5 * nf)).exp()
}

/// Surface area of `{h : ‖h‖ = 1, h ≥ 0}` in `Rⁿ`.
pub fn orthant_area(n: usize) -> f64 {
    2.0 * half_orthant_area(n)
}

const M_TAIL_NATS: f64 = 32.236_191_301_916_64; // ln(1e14)
/// Relative tolerance of each `m` integral.
const M_REL_TOL: f64 = 1e-11;

/// `ln m(y | β, h)` where
/// `m = ∫₀^∞ s^{n/2−1} exp(−‖s^{1/2} h − μ‖² / 2) ds` and `μ = X_y β`.
///
/// With `r = √s` and `a = hᵀμ` the integrand becomes
/// `2 r^{n−1} exp(−(r − a)²/2) · exp(−(‖μ‖² − a²)/2)`; the `r` integral is
/// done adaptively over the window where the bump exceeds `1e-14` of its peak.
pub fn log_m_integral(h: &[f64], mu: &[f64]) -> Result<f64> {
    let n = h.len();
    let a: f64 = h.iter().zip(mu).map(|(x, y)| x * y).sum();
    let c: f64 = mu.iter().map(|x| x * x).sum();
    let k = (n - 1) as f64;
    let log_f = |r: f64| {
        if k == 0.0 {
            -0.5 * (r - a) * (r - a)
        } else if r <= 0.0 {
            f64::NEG_INFINITY
        } else {
            k * r.ln() - 0.5 * (r - a) * (r - a)
        }
    };
    let peak_r = if k == 0.0 {
        a.max(0.0)
    } else {
        0.5 * (a + (a * a + 4.0 * k).sqrt())
    };
    let peak = log_f(peak_r);
    let floor = peak - M_TAIL_NATS;
    let mut step = 1.0;
    while log_f(peak_r + step) > floor {
        step *= 2.0;
    }
    let hi = peak_r + step;
    let mut step = 1.0;
    while peak_r - step > 0.0 && log_f(peak_r - step) > floor {
        step *= 2.0;
    }
    let lo = (peak_r - step).max(0.0);
    let (integral, _) = quadrature::integrate_scalar(|r| (log_f(r) - peak).exp(), lo, hi, 1e-15, M_REL_TOL, 400)?;
    Ok(std::f64::consts::LN_2 - 0.5 * (c - a * a).max(0.0) + peak + integral.ln())
}

/// Monte Carlo estimate of `Pr(y | β)` through the polar representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarEstimate {
    pub estimate: f64,
    /// Monte Carlo standard error, floored by the quadrature tolerance so
    /// that `n = 1` (a single orthant point, zero sampling noise) still
    /// carries its numerical error.
    pub std_error: f64,
}

/// Estimates `Pr(y | β)` as `orthant_area(n) / (2 (2π)^{n/2}) · E_h[m(y | β, h)]`
/// with `h` uniform on the positive-orthant sphere.
///
/// This exists as an independent cross-check of the product-of-Φ likelihood.
pub fn joint_probability_polar(d: &Dataset, beta: &[f64], draws: usize, seed: u64) -> Result<PolarEstimate> {
    if draws < 1000 {
        return Err(Error::InvalidArgument(format!(
            "polar estimate needs at least 1000 draws, got {draws}"
        )));
    }
    let sd = build_signed_design(d)?;
    let mu = sd.signed_predictor(beta)?;
    let batch = sample_hemisphere(d.n(), draws, seed)?;
    let log_m: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|i| log_m_integral(batch.row(i), mu.as_slice()))
        .collect::<Result<_>>()?;
    let shift = log_m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled: Vec<f64> = log_m.iter().map(|l| (l - shift).exp()).collect();
    let nf = draws as f64;
    let mean = scaled.iter().sum::<f64>() / nf;
    let var = scaled.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (nf - 1.0);
    let n = d.n() as f64;
    let log_const =
        orthant_area(d.n()).ln() - std::f64::consts::LN_2 - 0.5 * n * (2.0 * std::f64::consts::PI).ln() + shift;
    let k = log_const.exp();
    Ok(PolarEstimate {
        estimate: k * mean,
        std_error: k * (var / nf).sqrt().hypot(M_REL_TOL * mean),
    })
}
