//! Closed-form posterior mean and covariance from a weighted hemisphere batch.
//!
//! Integrating `β` and `s` out of the conditional structure leaves ratios of
//! expectations over the uniform orthant sphere:
//!
//! ```text
//! E[β | y]   = c_n · G⁻¹X_yᵀ · E_h[h vⁿ⁺¹] / E_h[vⁿ]
//! Var[β | y] = G⁻¹ + n · G⁻¹X_yᵀ · (E_h[h hᵀ vⁿ⁺²] / E_h[vⁿ]) · X_y G⁻¹ − E[β|y] E[β|y]ᵀ
//! ```
//!
//! with `c_n = √2 Γ((n+1)/2) / Γ(n/2) = E√χ²_n`. Both numerator and
//! denominator reuse one batch (self-normalized importance sampling). Writing
//! `W_i` for the normalized weights and `g_i = v_i G⁻¹X_yᵀh_i`, the estimators
//! are `μ̂ = c_n Σ W_i g_i` and `Ŝ = n Σ W_i g_i g_iᵀ`.
//!
//! Standard errors use the delta method for self-normalized ratios: an
//! estimate `Σ W_i f_i` has variance `≈ Σ W_i² (f_i − f̂)²`. For a covariance
//! entry the influence term is
//! `(n g_ij g_ik − Ŝ_jk) − μ̂_k (c_n g_ij − μ̂_j) − μ̂_j (c_n g_ik − μ̂_k)`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::Dataset;
use crate::prior::{Hierarchy, PriorSpec};
use crate::sampler::{attach_weights, propriety_gate, sample_hemisphere, HemisphereBatch, WeightDiagnostics};

/// `√2 Γ((n+1)/2) / Γ(n/2)`, the mean of `√χ²_n`.
///
/// Log-gamma differences below `n = 100`; above, the expansion
/// `Γ(x+½)/Γ(x) = √x (1 − 1/8x + 1/128x² + 5/1024x³ − 21/32768x⁴ − 399/262144x⁵)`
/// at `x = n/2`, whose truncation error is below `1e-13` there.
pub fn gamma_ratio(n: usize) -> f64 {
    assert!(n >= 1, "gamma_ratio needs n ≥ 1");
    let nf = n as f64;
    if n < 100 {
        std::f64::consts::SQRT_2 * (ln_gamma(0.5 * (nf + 1.0)) - ln_gamma(0.5 * nf)).exp()
    } else {
        let r = 1.0 / (0.5 * nf);
        let series = 1.0 - r / 8.0 + r * r / 128.0 + 5.0 * r.powi(3) / 1024.0
            - 21.0 * r.powi(4) / 32768.0
            - 399.0 * r.powi(5) / 262_144.0;
        nf.sqrt() * series
    }
}

/// Posterior mean and covariance estimated from one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub mc_se_mean: DVector<f64>,
    pub mc_se_cov: DMatrix<f64>,
    pub n_used: usize,
    pub diagnostics: WeightDiagnostics,
    /// Set when the covariance had an eigenvalue below `−1e-8·trace`.
    pub non_psd: bool,
}

struct Accumulated {
    weights: Vec<f64>,
    g: Vec<f64>, // row-major N × p
    p: usize,
}

fn accumulate(hier: &Hierarchy<'_>, batch: &HemisphereBatch) -> Result<Accumulated> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty hemisphere batch".into()));
    }
    if batch.dim() != hier.n() {
        return Err(Error::DimensionMismatch {
            expected: hier.n(),
            got: batch.dim(),
        });
    }
    if batch.weight_prior() != Some(hier.kind()) {
        return Err(match batch.weight_prior() {
            None => Error::WeightsMissing,
            Some(_) => Error::InvalidArgument("batch weights were attached under a different prior".into()),
        });
    }
    let weights = batch.normalized_weights()?;
    let log_v = batch.log_v()?;
    let p = hier.p();
    let mut g = vec![0.0; batch.len() * p];
    g.par_chunks_mut(p).enumerate().for_each(|(i, gi)| {
        hier.direction(batch.row(i), gi);
        let v = log_v[i].exp();
        gi.iter_mut().for_each(|x| *x *= v);
    });
    Ok(Accumulated { weights, g, p })
}

impl Accumulated {
    fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.weights.iter().copied().zip(self.g.chunks_exact(self.p))
    }

    fn mean(&self, c: f64) -> DVector<f64> {
        let mut m = DVector::zeros(self.p);
        for (w, g) in self.rows() {
            for j in 0..self.p {
                m[j] += w * g[j];
            }
        }
        m * c
    }

    fn mean_se(&self, c: f64, mean: &DVector<f64>) -> DVector<f64> {
        let mut var = DVector::zeros(self.p);
        for (w, g) in self.rows() {
            for j in 0..self.p {
                let d = c * g[j] - mean[j];
                var[j] += w * w * d * d;
            }
        }
        var.map(f64::sqrt)
    }

    fn second(&self, n: f64) -> DMatrix<f64> {
        let p = self.p;
        let mut s = DMatrix::zeros(p, p);
        for (w, g) in self.rows() {
            for a in 0..p {
                for b in a..p {
                    s[(a, b)] += w * g[a] * g[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                s[(a, b)] = s[(b, a)];
            }
        }
        s * n
    }

    fn cov_se(&self, c: f64, n: f64, mean: &DVector<f64>, second: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.p;
        let mut var = DMatrix::zeros(p, p);
        for (w, g) in self.rows() {
            for a in 0..p {
                for b in a..p {
                    let psi = (n * g[a] * g[b] - second[(a, b)])
                        - mean[b] * (c * g[a] - mean[a])
                        - mean[a] * (c * g[b] - mean[b]);
                    var[(a, b)] += w * w * psi * psi;
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                var[(a, b)] = var[(b, a)];
            }
        }
        var.map(f64::sqrt)
    }
}

/// `E[β | y]` and its delta-method standard error.
pub fn posterior_mean(hier: &Hierarchy<'_>, batch: &HemisphereBatch) -> Result<(DVector<f64>, DVector<f64>)> {
    let acc = accumulate(hier, batch)?;
    let c = gamma_ratio(hier.n());
    let mean = acc.mean(c);
    let se = acc.mean_se(c, &mean);
    Ok((mean, se))
}

/// `Var[β | y]` given the mean from the same batch.
pub fn posterior_covariance(
    hier: &Hierarchy<'_>,
    batch: &HemisphereBatch,
    mean: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let acc = accumulate(hier, batch)?;
    Ok(assemble_cov(hier, &acc.second(hier.n() as f64), mean))
}

fn assemble_cov(hier: &Hierarchy<'_>, second: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut cov = hier.conditional_covariance() + second - mean * mean.transpose();
    symmetrize(&mut cov);
    cov
}

/// Mean, covariance and their standard errors in one pass over the batch.
pub fn posterior_moments(hier: &Hierarchy<'_>, batch: &HemisphereBatch) -> Result<MomentEstimate> {
    let acc = accumulate(hier, batch)?;
    let n = hier.n() as f64;
    let c = gamma_ratio(hier.n());
    let mean = acc.mean(c);
    let mc_se_mean = acc.mean_se(c, &mean);
    let second = acc.second(n);
    let mc_se_cov = acc.cov_se(c, n, &mean, &second);
    let cov = assemble_cov(hier, &second, &mean);
    let min_eig = cov.clone().symmetric_eigenvalues().min();
    let non_psd = min_eig < -1e-8 * cov.trace().abs();
    if non_psd {
        log::warn!("posterior covariance has eigenvalue {min_eig:.3e}; increase the proposal count");
    }
    Ok(MomentEstimate {
        mean,
        cov,
        mc_se_mean,
        mc_se_cov,
        n_used: batch.len(),
        diagnostics: WeightDiagnostics::of(batch)?,
        non_psd,
    })
}

/// Draws a batch, weights it and returns the closed-form moments.
/// The flat prior requires a proper posterior.
pub fn closed_form_moments(d: &Dataset, prior: &PriorSpec, proposals: usize, seed: u64) -> Result<MomentEstimate> {
    propriety_gate(d, prior)?;
    let sd = crate::model::build_signed_design(d)?;
    let hier = Hierarchy::new(&sd, prior)?;
    let batch = attach_weights(sample_hemisphere(d.n(), proposals, seed)?, &hier)?;
    posterior_moments(&hier, &batch)
}

/// Log marginal likelihood `ln ∫ π(β) Pr(y | β) dβ` with its delta-method SE.
///
/// Flat prior: `(2π)^{p/2} |XᵀX|^{-1/2} 2^{-n} E_h[vⁿ]`.
/// Gaussian prior: `|Q|^{-1/2} |XᵀX + Q⁻¹|^{-1/2} 2^{-n} E_h[vⁿ]`.
pub fn log_marginal_likelihood(hier: &Hierarchy<'_>, batch: &HemisphereBatch) -> Result<(f64, f64)> {
    let log_w = batch.log_weights()?;
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let scaled: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let count = scaled.len() as f64;
    let mean = scaled.iter().sum::<f64>() / count;
    let var = scaled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (count - 1.0).max(1.0);
    let p = hier.p() as f64;
    let n = hier.n() as f64;
    let value = hier.prior_log_norm() + 0.5 * p * (2.0 * std::f64::consts::PI).ln()
        - 0.5 * hier.precision().log_det()
        - n * std::f64::consts::LN_2
        + max
        + mean.ln();
    Ok((value, (var / count).sqrt() / mean))
}
