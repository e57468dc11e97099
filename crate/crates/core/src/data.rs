//! CSV ingestion and synthetic data.
//!
//! The dialect is plain numeric CSV: comma separators, `.` decimals, no
//! quoting. The first column is the 0/1 response, the rest are covariates.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{stream_rng, Stream};
use crate::special::norm_cdf;

/// Reads a dataset, prepending a constant column when `intercept` is set.
///
/// A first line whose first cell is not a number is taken as a header.
/// Errors cite 1-based file line numbers.
pub fn load_csv(path: impl AsRef<Path>, intercept: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    parse_csv(&text, &path.display().to_string(), intercept)
}

/// [`load_csv`] on an in-memory string; `source` names it in errors.
pub fn parse_csv(text: &str, source: &str, intercept: bool) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_string(),
        line,
        msg,
    };
    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').map(str::trim).collect();
        if y.is_empty() && width.is_none() && cells[0].parse::<f64>().is_err() {
            width = Some(cells.len());
            continue;
        }
        match width {
            Some(w) if w != cells.len() => {
                return Err(err(line, format!("expected {w} fields, found {}", cells.len())));
            }
            _ => width = Some(cells.len()),
        }
        let row = y.len() + 1;
        let response: f64 = cells[0]
            .parse()
            .map_err(|_| err(line, format!("data row {row}: response '{}' is not a number", cells[0])))?;
        let bit = match response {
            0.0 => 0,
            1.0 => 1,
            r => return Err(err(line, format!("data row {row}: response must be 0 or 1, got {r}"))),
        };
        let covariates = cells[1..]
            .iter()
            .map(|c| {
                c.parse::<f64>()
                    .map_err(|_| err(line, format!("data row {row}: '{c}' is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        y.push(bit);
        rows.push(covariates);
    }
    if y.is_empty() {
        return Err(err(0, "no data rows".into()));
    }
    Dataset::from_rows(y, &rows, intercept)
}

/// Draws `n` rows with an intercept and `beta.len() − 1` standard-normal
/// covariates, and `yᵢ ~ Bernoulli(Φ(xᵢᵀβ))`.
pub fn simulate(n: usize, beta: &[f64], seed: u64) -> Result<Dataset> {
    if beta.is_empty() || beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidArgument("beta must be non-empty and finite".into()));
    }
    let p = beta.len();
    let mut rng = stream_rng(seed, Stream::Simulate, 0);
    let mut x = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for j in 1..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
        let eta: f64 = (0..p).map(|j| x[(i, j)] * beta[j]).sum();
        let u: f64 = rng.random();
        y.push(u8::from(u < norm_cdf(eta)));
    }
    Dataset::new(y, x, true)
}

/// Writes `y,x1,…` rows. The constant column of an intercept dataset is
/// omitted, so the file loads back with `intercept = true`.
pub fn write_csv<W: Write>(d: &Dataset, mut out: W) -> std::io::Result<()> {
    let skip = usize::from(d.has_intercept());
    let mut header = vec!["y".to_string()];
    header.extend((1..=d.p() - skip).map(|j| format!("x{j}")));
    writeln!(out, "{}", header.join(","))?;
    for (i, &yi) in d.y().iter().enumerate() {
        write!(out, "{yi}")?;
        for j in skip..d.p() {
            write!(out, ",{}", d.x()[(i, j)])?;
        }
        writeln!(out)?;
    }
    Ok(())
}
