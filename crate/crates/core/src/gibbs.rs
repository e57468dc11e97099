//! Data-augmentation Gibbs sampler, kept as an independent baseline.
//!
//! Alternates `zᵢ | β ~ N(xᵢᵀβ, 1)` truncated to the side of zero given by
//! `yᵢ`, and `β | z ~ N_p((XᵀX)⁻¹Xᵀz, (XᵀX)⁻¹)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Open01, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{build_signed_design, Dataset, SignedDesign};
use crate::prior::PriorSpec;
use crate::rng::{stream_rng, Stream};
use crate::sampler::propriety_gate;
use crate::special::{norm_cdf, norm_quantile};

/// Truncation regions with less mass than this use exponential rejection.
pub const TAIL_MASS: f64 = 1e-6;
/// `Φ(−4.753424...) = 1e-6`; below this mean the positive side is a tail.
const TAIL_MEAN: f64 = -4.753_424_308_822_899;

pub const DEFAULT_ITERS: usize = 11_000;
pub const DEFAULT_BURNIN: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Positive,
    Negative,
}

/// One draw from `N(mu, 1)` restricted to `(0, ∞)` or `(−∞, 0)`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mu: f64, side: Side, rng: &mut R) -> f64 {
    match side {
        Side::Positive => positive_part(mu, rng),
        Side::Negative => -positive_part(-mu, rng),
    }
}

fn positive_part<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> f64 {
    if mu >= TAIL_MEAN {
        // −e ~ N(0,1) conditioned on −e < mu
        let u: f64 = Open01.sample(rng);
        let x = mu - norm_quantile(u * norm_cdf(mu));
        x.max(f64::MIN_POSITIVE)
    } else {
        // standard normal restricted to [a, ∞), a = −mu, by translated
        // exponential proposals with the optimal rate
        let a = -mu;
        let rate = 0.5 * (a + (a * a + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let z = a + exp.sample(rng);
            let u: f64 = rng.random();
            if u <= (-0.5 * (z - rate) * (z - rate)).exp() {
                return z + mu;
            }
        }
    }
}

/// Post-burn-in chain of `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsChain {
    pub draws: DMatrix<f64>,
    pub init: DVector<f64>,
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
}

impl GibbsChain {
    pub fn mean(&self) -> DVector<f64> {
        crate::sampler::sample_mean(&self.draws)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        crate::sampler::sample_covariance(&self.draws)
    }

    /// Batch-means standard error of the chain mean (`⌊√len⌋` batches).
    pub fn mean_se(&self) -> DVector<f64> {
        batch_means_se(&self.draws)
    }
}

/// Standard error of each column mean from non-overlapping batch means.
pub fn batch_means_se(draws: &DMatrix<f64>) -> DVector<f64> {
    let len = draws.nrows();
    let batches = ((len as f64).sqrt().floor() as usize).max(2);
    let size = len / batches;
    DVector::from_iterator(
        draws.ncols(),
        draws.column_iter().map(|col| {
            let means: Vec<f64> = (0..batches)
                .map(|b| col.rows(b * size, size).sum() / size as f64)
                .collect();
            let grand = means.iter().sum::<f64>() / batches as f64;
            let var = means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / (batches - 1) as f64;
            (var / batches as f64).sqrt()
        }),
    )
}

/// One sweep: latent `z` given `β`, then `β` given `z`.
pub fn gibbs_step<R: Rng + ?Sized>(beta: &[f64], d: &Dataset, sd: &SignedDesign, rng: &mut R) -> Vec<f64> {
    let z = draw_latent(beta, d, rng);
    draw_coefficients(&z, d, sd, rng)
}

fn draw_latent<R: Rng + ?Sized>(beta: &[f64], d: &Dataset, rng: &mut R) -> Vec<f64> {
    let x = d.x();
    d.y()
        .iter()
        .enumerate()
        .map(|(i, &yi)| {
            let mu: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            let side = if yi == 1 { Side::Positive } else { Side::Negative };
            sample_truncated_normal(mu, side, rng)
        })
        .collect()
}

fn draw_coefficients<R: Rng + ?Sized>(z: &[f64], d: &Dataset, sd: &SignedDesign, rng: &mut R) -> Vec<f64> {
    let chol = sd.gram_cholesky();
    let mut mean: Vec<f64> = d
        .x()
        .column_iter()
        .map(|c| c.iter().zip(z).map(|(a, b)| a * b).sum())
        .collect();
    chol.solve_in_place(&mut mean);
    let mut noise: Vec<f64> = (0..d.p()).map(|_| StandardNormal.sample(rng)).collect();
    chol.color_inverse_in_place(&mut noise);
    mean.iter().zip(&noise).map(|(m, e)| m + e).collect()
}

/// Least squares of `2y − 1` on `X`.
pub fn default_init(d: &Dataset, sd: &SignedDesign) -> Vec<f64> {
    let target: Vec<f64> = d.y().iter().map(|&y| 2.0 * y as f64 - 1.0).collect();
    let mut b: Vec<f64> = d
        .x()
        .column_iter()
        .map(|c| c.iter().zip(&target).map(|(a, t)| a * t).sum())
        .collect();
    sd.gram_cholesky().solve_in_place(&mut b);
    b
}

/// Runs `iters` sweeps from `init` (least squares by default), discarding
/// the first `burnin`. Flat-prior propriety is required.
pub fn run_gibbs(d: &Dataset, iters: usize, burnin: usize, init: Option<&[f64]>, seed: u64) -> Result<GibbsChain> {
    if iters <= burnin {
        return Err(Error::InvalidArgument(format!(
            "need iters > burnin, got {iters} ≤ {burnin}"
        )));
    }
    propriety_gate(d, &PriorSpec::Flat)?;
    let sd = build_signed_design(d)?;
    let start = match init {
        Some(b) if b.len() != d.p() => {
            return Err(Error::DimensionMismatch {
                expected: d.p(),
                got: b.len(),
            })
        }
        Some(b) => b.to_vec(),
        None => default_init(d, &sd),
    };
    let mut rng: ChaCha8Rng = stream_rng(seed, Stream::Gibbs, 0);
    let kept = iters - burnin;
    let mut draws = DMatrix::zeros(kept, d.p());
    let mut beta = start.clone();
    for it in 0..iters {
        beta = gibbs_step(&beta, d, &sd, &mut rng);
        if it >= burnin {
            draws.row_mut(it - burnin).copy_from_slice(&beta);
        }
    }
    Ok(GibbsChain {
        draws,
        init: DVector::from_vec(start),
        iters,
        burnin,
        seed,
    })
}
