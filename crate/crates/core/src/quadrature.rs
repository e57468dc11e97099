//! Adaptive Gauss–Kronrod (7/15) integration of vector-valued integrands.

use crate::error::{Error, Result};

// QUADPACK qk15 abscissae (descending) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone)]
pub struct Integral {
    pub value: Vec<f64>,
    pub abs_error: Vec<f64>,
    pub intervals: usize,
}

#[derive(Debug, Clone)]
struct Piece {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> Piece {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kron = vec![0.0; dim];
    let mut gauss = vec![0.0; dim];

    f(center, buf);
    for j in 0..dim {
        kron[j] = WGK[7] * buf[j];
        gauss[j] = WG[3] * buf[j];
    }
    for (i, &x) in XGK.iter().enumerate().take(7) {
        let dx = half * x;
        for t in [center - dx, center + dx] {
            f(t, buf);
            for j in 0..dim {
                kron[j] += WGK[i] * buf[j];
                // Gauss points are the odd-indexed Kronrod abscissae.
                if i % 2 == 1 {
                    gauss[j] += WG[i / 2] * buf[j];
                }
            }
        }
    }
    let value: Vec<f64> = kron.iter().map(|k| k * half).collect();
    let error = kron.iter().zip(&gauss).map(|(k, g)| ((k - g) * half).abs()).collect();
    Piece { a, b, value, error }
}

/// Integrates `f` over `[a, b]`; `f(x, out)` writes `dim` components.
///
/// Stops once every component satisfies `err ≤ max(abs_tol, rel_tol·|I|)`;
/// otherwise bisects the piece contributing the largest scaled error.
pub fn integrate<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    dim: usize,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<Integral> {
    let mut buf = vec![0.0; dim];
    let mut pieces = vec![gk15(&mut f, a, b, dim, &mut buf)];
    loop {
        let mut total = vec![0.0; dim];
        let mut err = vec![0.0; dim];
        for p in &pieces {
            for j in 0..dim {
                total[j] += p.value[j];
                err[j] += p.error[j];
            }
        }
        let tol: Vec<f64> = total.iter().map(|v| abs_tol.max(rel_tol * v.abs())).collect();
        if err.iter().zip(&tol).all(|(e, t)| e <= t) {
            return Ok(Integral {
                value: total,
                abs_error: err,
                intervals: pieces.len(),
            });
        }
        if pieces.len() >= max_intervals {
            return Err(Error::Quadrature(format!(
                "{} intervals on [{a}, {b}] without reaching tolerance (errors {err:?})",
                pieces.len()
            )));
        }
        let worst = pieces
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = p.error.iter().zip(&tol).map(|(e, t)| e / t).fold(0.0, f64::max);
                (i, s)
            })
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc })
            .0;
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        pieces.push(gk15(&mut f, p.a, mid, dim, &mut buf));
        pieces.push(gk15(&mut f, mid, p.b, dim, &mut buf));
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<(f64, f64)> {
    let r = integrate(|x, out| out[0] = f(x), a, b, 1, abs_tol, rel_tol, max_intervals)?;
    Ok((r.value[0], r.abs_error[0]))
}
