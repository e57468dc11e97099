//! Prior specification and the conditional structure it induces.
//!
//! Under a flat prior the posterior factors as
//!
//! ```text
//! β | s, u  ~ N_p(G⁻¹ X_yᵀ √s u, G⁻¹)          G = XᵀX
//! s | u     ~ χ²_n / ‖Ψ u‖²
//! u         ∝ ‖Ψ u‖^{-n}   on the positive-orthant unit sphere
//! ```
//!
//! A `N_p(0, Q)` prior keeps the same shape with `G = XᵀX + Q⁻¹` and
//! `‖Ψ u‖²` replaced by the penalized form `q(u) = uᵀ(I − X_y G⁻¹ X_yᵀ)u`.
//! [`Hierarchy`] packages both cases behind one interface: a log-scale
//! `log v(h)` with `v = ‖Ψh‖⁻¹` or `q(h)^{-1/2}`, plus the Gaussian
//! conditional for `β`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Cholesky};
use crate::model::SignedDesign;

/// Flat-prior residual norms below this are treated as weight blow-up.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    Flat,
    Gaussian,
}

#[derive(Debug, Clone)]
pub enum PriorSpec {
    Flat,
    Gaussian(GaussianPrior),
}

/// `N_p(0, Q)` with `Q` symmetric positive definite.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    q: DMatrix<f64>,
    q_inv: DMatrix<f64>,
    q_log_det: f64,
}

impl GaussianPrior {
    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_inv(&self) -> &DMatrix<f64> {
        &self.q_inv
    }

    pub fn q_log_det(&self) -> f64 {
        self.q_log_det
    }
}

impl PriorSpec {
    pub fn gaussian(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::InvalidArgument(format!(
                "prior covariance is {}×{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "prior covariance is not symmetric (max gap {asym:.3e})"
            )));
        }
        let chol = Cholesky::spd(&q)?;
        Ok(PriorSpec::Gaussian(GaussianPrior {
            q_inv: chol.inverse(),
            q_log_det: chol.log_det(),
            q,
        }))
    }

    /// `τ² I_p`.
    pub fn isotropic(p: usize, tau2: f64) -> Result<Self> {
        if tau2.is_nan() || tau2 <= 0.0 || !tau2.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "prior scale must be positive, got {tau2}"
            )));
        }
        Self::gaussian(DMatrix::identity(p, p) * tau2)
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            PriorSpec::Flat => PriorKind::Flat,
            PriorSpec::Gaussian(_) => PriorKind::Gaussian,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, PriorSpec::Flat)
    }

    /// Log prior density at `β` (zero for the flat prior).
    pub fn log_density(&self, beta: &[f64]) -> f64 {
        match self {
            PriorSpec::Flat => 0.0,
            PriorSpec::Gaussian(g) => {
                let p = beta.len();
                let mut quad = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        quad += beta[i] * g.q_inv[(i, j)] * beta[j];
                    }
                }
                -0.5 * quad - 0.5 * g.q_log_det - 0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln()
            }
        }
    }
}

/// Handle computing `q(h) = hᵀ Ψ[X_y, Q] h`.
#[derive(Debug, Clone)]
pub struct PenalizedQuadraticForm<'a> {
    sd: &'a SignedDesign,
    ridge: Cholesky,
    q_chol: Cholesky,
}

impl<'a> PenalizedQuadraticForm<'a> {
    pub fn new(prior: &GaussianPrior, sd: &'a SignedDesign) -> Result<Self> {
        if prior.q.nrows() != sd.p() {
            return Err(Error::DimensionMismatch {
                expected: sd.p(),
                got: prior.q.nrows(),
            });
        }
        let mut ridge = sd.gram() + &prior.q_inv;
        symmetrize(&mut ridge);
        Ok(PenalizedQuadraticForm {
            sd,
            ridge: Cholesky::spd(&ridge)?,
            q_chol: Cholesky::spd(&prior.q)?,
        })
    }

    /// `q(h)`, evaluated as `‖h − X_y b‖² + bᵀQ⁻¹b` with `b = G⁻¹X_yᵀh`.
    ///
    /// That is algebraically `hᵀh − (X_yᵀh)ᵀ G⁻¹ (X_yᵀh)` but is a sum of
    /// nonnegative terms, so it stays accurate when `q` is small.
    pub fn eval(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.sd.n() {
            return Err(Error::DimensionMismatch {
                expected: self.sd.n(),
                got: h.len(),
            });
        }
        let mut b = vec![0.0; self.sd.p()];
        let mut r = vec![0.0; self.sd.n()];
        Ok(self.eval_into(h, &mut b, &mut r))
    }

    fn eval_into(&self, h: &[f64], b: &mut [f64], r: &mut [f64]) -> f64 {
        self.sd.xy_t_mul(h, b);
        self.ridge.solve_in_place(b);
        self.sd.residual(h, b, r);
        let fit: f64 = r.iter().map(|v| v * v).sum();
        // bᵀQ⁻¹b = ‖M⁻¹b‖² with Q = M Mᵀ
        self.q_chol.solve_lower_in_place(b);
        fit + b.iter().map(|v| v * v).sum::<f64>()
    }
}

/// `q(h)` for a Gaussian prior.
pub fn quadratic_form(prior: &PriorSpec, sd: &SignedDesign, h: &[f64]) -> Result<f64> {
    match prior {
        PriorSpec::Flat => Err(Error::InvalidArgument(
            "quadratic form requires a Gaussian prior".into(),
        )),
        PriorSpec::Gaussian(g) => PenalizedQuadraticForm::new(g, sd)?.eval(h),
    }
}

/// Conditional structure shared by the sampler and the moment estimators.
#[derive(Debug, Clone)]
pub struct Hierarchy<'a> {
    sd: &'a SignedDesign,
    kind: PriorKind,
    chol: Cholesky,
    form: Option<PenalizedQuadraticForm<'a>>,
    prior_log_norm: f64,
}

/// Assembles the sampling hooks for `prior` over `sd`.
///
/// For the Gaussian prior the propriety gate does not apply: the prior is
/// proper, so the posterior is too.
pub fn gaussian_prior_components<'a>(prior: &PriorSpec, sd: &'a SignedDesign) -> Result<Hierarchy<'a>> {
    Hierarchy::new(sd, prior)
}

impl<'a> Hierarchy<'a> {
    pub fn new(sd: &'a SignedDesign, prior: &PriorSpec) -> Result<Self> {
        match prior {
            PriorSpec::Flat => Ok(Hierarchy {
                sd,
                kind: PriorKind::Flat,
                chol: sd.gram_cholesky().clone(),
                form: None,
                prior_log_norm: 0.0,
            }),
            PriorSpec::Gaussian(g) => {
                let form = PenalizedQuadraticForm::new(g, sd)?;
                let p = sd.p() as f64;
                Ok(Hierarchy {
                    sd,
                    kind: PriorKind::Gaussian,
                    chol: form.ridge.clone(),
                    form: Some(form),
                    prior_log_norm: -0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * g.q_log_det,
                })
            }
        }
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn design(&self) -> &SignedDesign {
        self.sd
    }

    pub fn n(&self) -> usize {
        self.sd.n()
    }

    pub fn p(&self) -> usize {
        self.sd.p()
    }

    /// Cholesky factor of `G` (`XᵀX`, or `XᵀX + Q⁻¹`).
    pub fn precision(&self) -> &Cholesky {
        &self.chol
    }

    /// `G⁻¹`, the conditional covariance of `β`.
    pub fn conditional_covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `ln ∫ prior` normalization: zero for flat, `−(p/2)ln 2π − ½ ln|Q|` for Gaussian.
    pub fn prior_log_norm(&self) -> f64 {
        self.prior_log_norm
    }

    /// `ln v(h)`, where `v = ‖Ψh‖⁻¹` (flat) or `q(h)^{-1/2}` (Gaussian).
    ///
    /// Returns `None` when a flat-prior residual falls below [`RESIDUAL_FLOOR`].
    pub fn log_v(&self, h: &[f64], coef: &mut [f64], resid: &mut [f64]) -> Option<f64> {
        match &self.form {
            None => {
                self.sd.projector().apply_into(h, coef, resid);
                let norm = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm >= RESIDUAL_FLOOR).then(|| -norm.ln())
            }
            Some(form) => Some(-0.5 * form.eval_into(h, coef, resid).ln()),
        }
    }

    /// `G⁻¹ X_yᵀ h` written into `out`.
    pub fn direction(&self, h: &[f64], out: &mut [f64]) {
        self.sd.xy_t_mul(h, out);
        self.chol.solve_in_place(out);
    }

    /// Turns `z ~ N(0, I)` into `N(0, G⁻¹)` in place.
    pub fn color(&self, z: &mut [f64]) {
        self.chol.color_inverse_in_place(z);
    }
}
