//! Direct Monte Carlo sampling of the probit posterior.
//!
//! The pipeline has four stages:
//!
//! 1. draw `N` points `h` uniformly on the positive-orthant unit sphere, each
//!    with a coupled `t ~ χ²_n` (normalize the absolute values of `n`
//!    standard normals; `t` is their squared norm and independent of `h`);
//! 2. weight each point by `v(h)ⁿ`, with `v = ‖Ψh‖⁻¹` under the flat prior;
//! 3. resample `M` indices with probability proportional to the weights;
//! 4. for each resampled `u` draw `√s = v·√χ²_n` and
//!    `β = √s·G⁻¹X_yᵀu + G^{-1/2} z`.
//!
//! Weights live in log space throughout since `vⁿ` overflows for modest `n`.

use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_signed_design, Dataset};
use crate::prior::{Hierarchy, PriorKind, PriorSpec};
use crate::propriety::check_propriety;
use crate::rng::{chunk_count, stream_rng, Stream, CHUNK};

/// Below this effective sample size resampling logs a warning.
pub const ESS_WARNING: f64 = 10.0;

/// Proposal points on the positive-orthant sphere with their coupled `χ²_n`
/// values and, once attached, log importance weights.
#[derive(Debug, Clone)]
pub struct HemisphereBatch {
    n: usize,
    h: Vec<f64>,
    t: Vec<f64>,
    seed: u64,
    weights: Option<BatchWeights>,
}

#[derive(Debug, Clone)]
struct BatchWeights {
    prior: PriorKind,
    log_v: Vec<f64>,
    log_w: Vec<f64>,
}

impl HemisphereBatch {
    /// Dimension `n` of each point.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of proposals `N`.
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.h[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.h.chunks_exact(self.n)
    }

    pub fn chi_square(&self) -> &[f64] {
        &self.t
    }

    pub fn has_weights(&self) -> bool {
        self.weights.is_some()
    }

    pub fn weight_prior(&self) -> Option<PriorKind> {
        self.weights.as_ref().map(|w| w.prior)
    }

    /// `ln v_i`.
    pub fn log_v(&self) -> Result<&[f64]> {
        self.weights
            .as_ref()
            .map(|w| w.log_v.as_slice())
            .ok_or(Error::WeightsMissing)
    }

    /// Unnormalized log weights `n·ln v_i`.
    pub fn log_weights(&self) -> Result<&[f64]> {
        self.weights
            .as_ref()
            .map(|w| w.log_w.as_slice())
            .ok_or(Error::WeightsMissing)
    }

    /// Self-normalized weights `W_i = w̃_i / Σ w̃`.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        normalize_log_weights(self.log_weights()?)
    }
}

/// Draws `count` uniform points on the positive-orthant unit sphere in `Rⁿ`,
/// each paired with the `χ²_n` squared norm of the normals that produced it.
pub fn sample_hemisphere(n: usize, count: usize, seed: u64) -> Result<HemisphereBatch> {
    if n == 0 || count == 0 {
        return Err(Error::InvalidArgument(format!(
            "hemisphere batch needs n ≥ 1 and N ≥ 1, got n={n}, N={count}"
        )));
    }
    let mut h = vec![0.0; count * n];
    let mut t = vec![0.0; count];
    h.par_chunks_mut(CHUNK * n)
        .zip(t.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(c, (hc, tc))| {
            let mut rng = stream_rng(seed, Stream::Hemisphere, c as u64);
            for (row, ti) in hc.chunks_exact_mut(n).zip(tc.iter_mut()) {
                let mut ss = 0.0;
                for v in row.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    *v = z.abs();
                    ss += z * z;
                }
                let norm = ss.sqrt();
                row.iter_mut().for_each(|v| *v /= norm);
                *ti = ss;
            }
        });
    Ok(HemisphereBatch {
        n,
        h,
        t,
        seed,
        weights: None,
    })
}

/// Attaches `ln v_i` and `ln w̃_i = n·ln v_i` for the prior behind `hier`.
///
/// Under the flat prior a residual norm below `1e-12` means the point sits
/// (numerically) in the column space of `X_y`, i.e. the data are at or near
/// separation; that is reported as [`Error::WeightBlowUp`].
pub fn attach_weights(mut batch: HemisphereBatch, hier: &Hierarchy<'_>) -> Result<HemisphereBatch> {
    let n = batch.n;
    if n != hier.n() {
        return Err(Error::DimensionMismatch {
            expected: hier.n(),
            got: n,
        });
    }
    let p = hier.p();
    let log_v: Vec<f64> = batch
        .h
        .par_chunks(CHUNK * n)
        .enumerate()
        .map(|(c, hc)| {
            let mut coef = vec![0.0; p];
            let mut resid = vec![0.0; n];
            hc.chunks_exact(n)
                .enumerate()
                .map(|(k, h)| {
                    hier.log_v(h, &mut coef, &mut resid).ok_or_else(|| {
                        let mut r = vec![0.0; n];
                        hier.design().projector().apply_into(h, &mut coef, &mut r);
                        Error::WeightBlowUp {
                            index: c * CHUNK + k,
                            norm: r.iter().map(|v| v * v).sum::<f64>().sqrt(),
                        }
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    let nf = n as f64;
    let log_w = log_v.iter().map(|l| nf * l).collect();
    batch.weights = Some(BatchWeights {
        prior: hier.kind(),
        log_v,
        log_w,
    });
    Ok(batch)
}

fn normalize_log_weights(log_w: &[f64]) -> Result<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / total).collect())
}

/// Effective sample size `(Σw)² / Σw²` of raw nonnegative weights.
pub fn ess(weights: &[f64]) -> Result<f64> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::DegenerateWeights);
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::DegenerateWeights);
    }
    let (s1, s2) = weights.iter().fold((0.0, 0.0), |(a, b), w| {
        let x = w / max;
        (a + x, b + x * x)
    });
    Ok(s1 * s1 / s2)
}

/// Effective sample size of log-space weights, shifted by their maximum.
pub fn ess_log(log_weights: &[f64]) -> Result<f64> {
    let w = normalize_log_weights(log_weights)?;
    Ok(1.0 / w.iter().map(|x| x * x).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    #[default]
    Multinomial,
    Systematic,
}

impl FromStr for ResampleScheme {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "multinomial" => Ok(Self::Multinomial),
            "systematic" => Ok(Self::Systematic),
            other => Err(format!("unknown resampling scheme '{other}'")),
        }
    }
}

/// Where the `χ²_n` factor of `s` comes from when drawing `β`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SMode {
    /// A new `χ²_n` draw per resampled particle.
    #[default]
    Fresh,
    /// The `t` value generated alongside the selected proposal.
    Reuse,
}

impl FromStr for SMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fresh" => Ok(Self::Fresh),
            "reuse" => Ok(Self::Reuse),
            other => Err(format!("unknown s mode '{other}'")),
        }
    }
}

/// Indices `i_1..i_M` selected by importance resampling.
#[derive(Debug, Clone, PartialEq)]
pub struct SirSelection {
    pub indices: Vec<usize>,
}

impl SirSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// `u^{(k)}`, the `k`-th resampled point.
    pub fn u<'b>(&self, batch: &'b HemisphereBatch, k: usize) -> &'b [f64] {
        batch.row(self.indices[k])
    }

    /// `w^{(k)} = v^{(i_k)}`.
    pub fn w(&self, batch: &HemisphereBatch, k: usize) -> Result<f64> {
        Ok(batch.log_v()?[self.indices[k]].exp())
    }

    /// How often each batch index was selected.
    pub fn multiplicities(&self, batch_len: usize) -> Vec<usize> {
        let mut counts = vec![0; batch_len];
        for &i in &self.indices {
            counts[i] += 1;
        }
        counts
    }
}

/// Resamples `m` indices with probabilities proportional to the batch weights.
pub fn sir_resample(batch: &HemisphereBatch, m: usize, seed: u64, scheme: ResampleScheme) -> Result<SirSelection> {
    resample_log_weights(batch.log_weights()?, m, seed, scheme)
}

/// Resampling on bare log weights; `sir_resample` is the batch-level entry.
pub fn resample_log_weights(log_w: &[f64], m: usize, seed: u64, scheme: ResampleScheme) -> Result<SirSelection> {
    if m == 0 {
        return Err(Error::InvalidArgument("resample size must be ≥ 1".into()));
    }
    let w = normalize_log_weights(log_w)?;
    let ess = 1.0 / w.iter().map(|x| x * x).sum::<f64>();
    if ess < ESS_WARNING {
        log::warn!("effective sample size {ess:.2} is below {ESS_WARNING}; resampled draws will be highly duplicated");
    }
    let mut cum = Vec::with_capacity(w.len());
    let mut acc = 0.0;
    for x in &w {
        acc += x;
        cum.push(acc);
    }
    let total = acc;
    let last = w.iter().rposition(|&x| x > 0.0).ok_or(Error::DegenerateWeights)?;
    let pick = |u: f64| cum.partition_point(|&c| c <= u).min(last);

    let mut rng = stream_rng(seed, Stream::Resample, 0);
    let indices = match scheme {
        ResampleScheme::Multinomial => (0..m).map(|_| pick(rng.random::<f64>() * total)).collect(),
        ResampleScheme::Systematic => {
            let offset: f64 = rng.random();
            let step = total / m as f64;
            (0..m).map(|k| pick((offset + k as f64) * step)).collect()
        }
    };
    Ok(SirSelection { indices })
}

/// Weight diagnostics carried alongside draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub ess: f64,
    pub max_normalized_weight: f64,
}

impl WeightDiagnostics {
    pub fn of(batch: &HemisphereBatch) -> Result<Self> {
        let w = batch.normalized_weights()?;
        Ok(WeightDiagnostics {
            ess: 1.0 / w.iter().map(|x| x * x).sum::<f64>(),
            max_normalized_weight: w.iter().copied().fold(0.0, f64::max),
        })
    }
}

/// Posterior draws of `β`, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    pub draws: DMatrix<f64>,
    pub prior: PriorKind,
    pub seed: u64,
    pub diagnostics: Option<WeightDiagnostics>,
}

impl PosteriorDraws {
    pub fn len(&self) -> usize {
        self.draws.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.nrows() == 0
    }

    pub fn p(&self) -> usize {
        self.draws.ncols()
    }

    pub fn mean(&self) -> DVector<f64> {
        sample_mean(&self.draws)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        sample_covariance(&self.draws)
    }

    /// Writes `beta_1..beta_p` header and one draw per line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.p()).map(|j| format!("beta_{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.draws.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

pub fn sample_mean(x: &DMatrix<f64>) -> DVector<f64> {
    let m = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / m))
}

/// Unbiased sample covariance of the rows of `x`.
pub fn sample_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mean = sample_mean(x);
    let (m, p) = x.shape();
    let mut cov = DMatrix::zeros(p, p);
    for row in x.row_iter() {
        for a in 0..p {
            let da = row[a] - mean[a];
            for b in a..p {
                cov[(a, b)] += da * (row[b] - mean[b]);
            }
        }
    }
    cov /= (m as f64 - 1.0).max(1.0);
    for a in 0..p {
        for b in 0..a {
            cov[(a, b)] = cov[(b, a)];
        }
    }
    cov
}

/// Draws `β^{(k)}` for each resampled point.
pub fn draw_beta(
    sel: &SirSelection,
    batch: &HemisphereBatch,
    hier: &Hierarchy<'_>,
    seed: u64,
    s_mode: SMode,
) -> Result<PosteriorDraws> {
    let log_v = batch.log_v()?;
    if batch.weight_prior() != Some(hier.kind()) {
        return Err(Error::InvalidArgument(
            "batch weights were attached under a different prior".into(),
        ));
    }
    let p = hier.p();
    let m = sel.len();
    let chi = ChiSquared::new(batch.dim() as f64).expect("n ≥ 1");
    let mut out = vec![0.0; m * p];
    out.par_chunks_mut(CHUNK * p).enumerate().for_each(|(c, oc)| {
        let mut rng = stream_rng(seed, Stream::Beta, c as u64);
        let mut dir = vec![0.0; p];
        for (j, beta) in oc.chunks_exact_mut(p).enumerate() {
            let k = c * CHUNK + j;
            let i = sel.indices[k];
            let root_chi = match s_mode {
                SMode::Fresh => chi.sample(&mut rng).sqrt(),
                SMode::Reuse => batch.t[i].sqrt(),
            };
            let s_half = log_v[i].exp() * root_chi;
            hier.direction(batch.row(i), &mut dir);
            for b in beta.iter_mut() {
                *b = StandardNormal.sample(&mut rng);
            }
            hier.color(beta);
            for (b, d) in beta.iter_mut().zip(&dir) {
                *b += s_half * d;
            }
        }
    });
    debug_assert_eq!(chunk_count(m), out.chunks(CHUNK * p).count());
    let draws = DMatrix::from_row_slice(m, p, &out);
    if draws.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    Ok(PosteriorDraws {
        draws,
        prior: hier.kind(),
        seed,
        diagnostics: Some(WeightDiagnostics::of(batch)?),
    })
}

/// Proposal/draw sizes and randomization switches for a sampler run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerOptions {
    pub proposals: usize,
    pub draws: usize,
    pub seed: u64,
    pub s_mode: SMode,
    pub resample: ResampleScheme,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            proposals: 100_000,
            draws: 10_000,
            seed: 0,
            s_mode: SMode::Fresh,
            resample: ResampleScheme::Multinomial,
        }
    }
}

impl SamplerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.draws == 0 || self.proposals < self.draws {
            return Err(Error::InvalidArgument(format!(
                "need N ≥ M ≥ 1, got N={}, M={}",
                self.proposals, self.draws
            )));
        }
        Ok(())
    }
}

/// Fails with [`Error::Improper`] when the flat-prior posterior is improper.
pub fn propriety_gate(d: &Dataset, prior: &PriorSpec) -> Result<()> {
    if prior.is_flat() {
        let sd = build_signed_design(d)?;
        let report = check_propriety(&sd)?;
        if !report.verdict.is_proper() {
            return Err(Error::Improper(Box::new(report)));
        }
    }
    Ok(())
}

/// Full pipeline; also returns the weighted proposal batch so moment
/// estimators can share it.
pub fn sample_posterior_with_batch(
    d: &Dataset,
    prior: &PriorSpec,
    options: &SamplerOptions,
) -> Result<(PosteriorDraws, HemisphereBatch)> {
    options.validate()?;
    propriety_gate(d, prior)?;
    let sd = build_signed_design(d)?;
    let hier = Hierarchy::new(&sd, prior)?;
    let batch = attach_weights(sample_hemisphere(d.n(), options.proposals, options.seed)?, &hier)?;
    let sel = sir_resample(&batch, options.draws, options.seed, options.resample)?;
    let draws = draw_beta(&sel, &batch, &hier, options.seed, options.s_mode)?;
    Ok((draws, batch))
}

/// Draws `M` samples from the posterior of `β`.
pub fn sample_posterior(d: &Dataset, prior: &PriorSpec, options: &SamplerOptions) -> Result<PosteriorDraws> {
    sample_posterior_with_batch(d, prior, options).map(|(draws, _)| draws)
}
