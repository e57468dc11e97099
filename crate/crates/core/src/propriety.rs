//! Posterior propriety under the flat prior.
//!
//! The flat-prior posterior is proper exactly when no nonzero `α` makes every
//! component of `X_y α` nonnegative. Equivalently, no point `u` of the
//! positive-orthant unit sphere is annihilated by `Ψ`. Two small linear
//! programs decide which case holds:
//!
//! * complete separation: some `α` with `X_y α ≥ 1`;
//! * quasi-complete separation: some `α` with `X_y α ≥ 0` and `1ᵀ X_y α = 1`.
//!
//! Both are treated as improper. In the quasi-complete case the importance
//! weights `‖Ψh‖^{-n}` are unbounded near the boundary of the orthant, so the
//! flat-prior sampler is gated on a `Proper` verdict.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::SignedDesign;
use crate::simplex::{LinearProgram, LpOutcome};

/// Lower bound on certificate components after normalizing `‖α‖ = 1`.
pub const CERTIFICATE_FLOOR: f64 = -1e-9;
/// The largest certificate component must reach this after normalization.
pub const CERTIFICATE_PEAK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Proper,
    ImproperCompleteSeparation,
    ImproperQuasiComplete,
}

impl Verdict {
    pub fn is_proper(self) -> bool {
        self == Verdict::Proper
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Proper => "proper",
            Verdict::ImproperCompleteSeparation => "improper_complete_separation",
            Verdict::ImproperQuasiComplete => "improper_quasi_complete",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Verdict plus, for improper data, a unit direction `α` with `X_y α ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProprietyReport {
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<Vec<f64>>,
}

impl ProprietyReport {
    /// Re-checks the certificate against `X_y` by direct multiplication.
    ///
    /// Proper reports carry no certificate and verify trivially.
    pub fn verify(&self, sd: &SignedDesign) -> bool {
        match (&self.verdict, &self.certificate) {
            (Verdict::Proper, None) => true,
            (Verdict::Proper, Some(_)) | (_, None) => false,
            (v, Some(alpha)) => certificate_holds(sd.xy(), alpha, *v == Verdict::ImproperCompleteSeparation),
        }
    }
}

fn certificate_holds(xy: &DMatrix<f64>, alpha: &[f64], strict: bool) -> bool {
    if alpha.len() != xy.ncols() {
        return false;
    }
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm.is_nan() || norm <= 0.0 || !norm.is_finite() {
        return false;
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for row in xy.row_iter() {
        let v: f64 = row.iter().zip(alpha).map(|(x, a)| x * a).sum::<f64>() / norm;
        min = min.min(v);
        max = max.max(v);
    }
    let floor_ok = if strict { min > 0.0 } else { min >= CERTIFICATE_FLOOR };
    floor_ok && max >= CERTIFICATE_PEAK
}

/// Rows of `X_y` scaled to unit length (zero rows stay zero).
fn normalized_rows(xy: &DMatrix<f64>) -> Vec<Vec<f64>> {
    xy.row_iter()
        .map(|row| {
            let norm = row.norm();
            row.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
        })
        .collect()
}

/// Solves `rows·α − s = rhs` (plus an optional normalizing row), `s ≥ 0`,
/// minimizing `‖α‖₁`. Returns `α` when feasible.
fn separating_direction(rows: &[Vec<f64>], rhs: f64, normalize: bool) -> Result<Option<Vec<f64>>> {
    let n = rows.len();
    let p = rows[0].len();
    let nv = 2 * p + n;
    let mut a = Vec::with_capacity(n + 1);
    let mut b = Vec::with_capacity(n + 1);
    for (i, r) in rows.iter().enumerate() {
        let mut row = vec![0.0; nv];
        for j in 0..p {
            row[j] = r[j];
            row[p + j] = -r[j];
        }
        row[2 * p + i] = -1.0;
        a.push(row);
        b.push(rhs);
    }
    if normalize {
        let mut row = vec![0.0; nv];
        for r in rows {
            for j in 0..p {
                row[j] += r[j];
                row[p + j] -= r[j];
            }
        }
        a.push(row);
        b.push(1.0);
    }
    let mut c = vec![0.0; nv];
    c[..2 * p].iter_mut().for_each(|v| *v = 1.0);
    match LinearProgram::new(a, b, c).solve()? {
        LpOutcome::Optimal { x, .. } => Ok(Some((0..p).map(|j| x[j] - x[p + j]).collect())),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => unreachable!("‖α‖₁ objective is bounded below"),
    }
}

fn unit(alpha: Vec<f64>) -> Vec<f64> {
    let norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    alpha.into_iter().map(|a| a / norm).collect()
}

/// Classifies the flat-prior posterior as proper, or improper by complete or
/// quasi-complete separation, with a re-verifiable certificate.
pub fn check_propriety(sd: &SignedDesign) -> Result<ProprietyReport> {
    let rows = normalized_rows(sd.xy());
    if let Some(alpha) = separating_direction(&rows, 1.0, false)? {
        let alpha = unit(alpha);
        if certificate_holds(sd.xy(), &alpha, true) {
            return Ok(ProprietyReport {
                verdict: Verdict::ImproperCompleteSeparation,
                certificate: Some(alpha),
            });
        }
        log::warn!("complete-separation LP solution failed re-verification; checking quasi-complete case");
    }
    if let Some(alpha) = separating_direction(&rows, 0.0, true)? {
        let alpha = unit(alpha);
        if certificate_holds(sd.xy(), &alpha, false) {
            return Ok(ProprietyReport {
                verdict: Verdict::ImproperQuasiComplete,
                certificate: Some(alpha),
            });
        }
        log::warn!("quasi-separation LP solution failed re-verification; treating data as proper");
    }
    Ok(ProprietyReport {
        verdict: Verdict::Proper,
        certificate: None,
    })
}

/// Subset count up to which [`separation_margin`] enumerates exactly.
const EXACT_SUBSETS: u64 = 200_000;

/// `max_{‖α‖₂ = 1} min_i (X_y α)_i`.
///
/// Positive under complete separation, zero under quasi-complete separation
/// and negative for proper data.
///
/// At the maximizer some set `S` of at most `p` linearly independent rows
/// ties for the minimum and `α` lies in their span (or, when the value is
/// zero, in their orthogonal complement). When the number of such subsets is
/// at most 200 000 every one is tried and the result is exact. Larger designs
/// fall back to annealed soft-min ascent, which gives a lower bound.
pub fn separation_margin(sd: &SignedDesign) -> f64 {
    let xy = sd.xy();
    let (n, p) = xy.shape();
    let rows: Vec<Vec<f64>> = xy.row_iter().map(|r| r.iter().copied().collect()).collect();
    if rows.iter().all(|r| r.iter().all(|&v| v == 0.0)) {
        return 0.0;
    }
    let subsets: u64 = (1..=p.min(n)).map(|k| binomial(n, k)).fold(0u64, u64::saturating_add);
    if subsets <= EXACT_SUBSETS {
        enumerate_margin(&rows, p)
    } else {
        ascend_margin(&rows, p)
    }
}

fn min_score(rows: &[Vec<f64>], alpha: &[f64]) -> f64 {
    rows.iter()
        .map(|r| r.iter().zip(alpha).map(|(x, a)| x * a).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn binomial(n: usize, k: usize) -> u64 {
    let mut c: u64 = 1;
    for i in 0..k as u64 {
        c = c.saturating_mul(n as u64 - i) / (i + 1);
    }
    c
}

fn enumerate_margin(rows: &[Vec<f64>], p: usize) -> f64 {
    let n = rows.len();
    let mut best = f64::NEG_INFINITY;
    let mut consider = |alpha: &mut Vec<f64>| {
        let norm = alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-300 || !norm.is_finite() {
            return;
        }
        alpha.iter_mut().for_each(|v| *v /= norm);
        best = best.max(min_score(rows, alpha));
        alpha.iter_mut().for_each(|v| *v = -*v);
        best = best.max(min_score(rows, alpha));
    };
    for k in 1..=p.min(n) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            let r = DMatrix::from_fn(p, k, |a, b| rows[idx[b]][a]);
            // equal scores within span(r_S): α ∝ R (RᵀR)⁻¹ 1
            if let Some(c) = (r.transpose() * &r).lu().solve(&DVector::from_element(k, 1.0)) {
                let mut alpha: Vec<f64> = (&r * c).iter().copied().collect();
                consider(&mut alpha);
            }
            // zero scores: α spans the orthogonal complement of p − 1 rows
            if k + 1 == p {
                let svd = r.transpose().svd(false, true);
                let top = svd.singular_values.max();
                if let (Some(vt), true) = (svd.v_t, svd.singular_values.min() > 1e-12 * top) {
                    let complement = DMatrix::<f64>::identity(p, p) - vt.transpose() * vt;
                    let col =
                        (0..p).max_by(|&a, &b| complement.column(a).norm().total_cmp(&complement.column(b).norm()));
                    if let Some(col) = col {
                        let mut alpha: Vec<f64> = complement.column(col).iter().copied().collect();
                        consider(&mut alpha);
                    }
                }
            }
            // next combination
            let mut i = k;
            while i > 0 && idx[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            idx[i - 1] += 1;
            for j in i..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    best
}

fn ascend_margin(rows: &[Vec<f64>], p: usize) -> f64 {
    let n = rows.len();
    let scale = rows
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    let mut starts: Vec<Vec<f64>> = rows.iter().take(64).cloned().collect();
    for j in 0..p {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; p];
            e[j] = s;
            starts.push(e);
        }
    }

    let mut best = f64::NEG_INFINITY;
    let mut proj = vec![0.0; n];
    for start in starts {
        let norm = start.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut alpha: Vec<f64> = start.iter().map(|v| v / norm).collect();
        best = best.max(min_score(rows, &alpha));
        let mut tau = 0.5 * scale;
        while tau > 1e-8 * scale {
            let step = tau / (scale * scale);
            for _ in 0..60 {
                for (pi, r) in proj.iter_mut().zip(rows) {
                    *pi = r.iter().zip(&alpha).map(|(x, a)| x * a).sum();
                }
                let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
                let mut grad = vec![0.0; p];
                let mut total = 0.0;
                for (pi, r) in proj.iter().zip(rows) {
                    let w = (-(pi - lo) / tau).exp();
                    total += w;
                    for (g, x) in grad.iter_mut().zip(r) {
                        *g += w * x;
                    }
                }
                grad.iter_mut().for_each(|g| *g /= total);
                let radial: f64 = grad.iter().zip(&alpha).map(|(g, a)| g * a).sum();
                for (a, g) in alpha.iter_mut().zip(&grad) {
                    *a += step * (g - radial * *a);
                }
                let norm = alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
                alpha.iter_mut().for_each(|v| *v /= norm);
                best = best.max(min_score(rows, &alpha));
            }
            tau *= 0.5;
        }
    }
    best
}
