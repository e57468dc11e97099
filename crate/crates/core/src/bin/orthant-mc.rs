use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use orthant_mc::data::{load_csv, simulate, write_csv};
use orthant_mc::gibbs::{run_gibbs, DEFAULT_BURNIN, DEFAULT_ITERS};
use orthant_mc::model::{build_signed_design, joint_probability_polar, log_likelihood};
use orthant_mc::moments::{log_marginal_likelihood, posterior_mean, posterior_moments};
use orthant_mc::oracle::quadrature_moments;
use orthant_mc::prior::{Hierarchy, PriorKind, PriorSpec};
use orthant_mc::propriety::{check_propriety, separation_margin};
use orthant_mc::report::{matrix, vector, FitReport, ImproperBody, RunConfig, TOOL_VERSION};
use orthant_mc::sampler::{
    attach_weights, propriety_gate, sample_hemisphere, sample_posterior_with_batch, PosteriorDraws, ResampleScheme,
    SMode, SamplerOptions,
};
use orthant_mc::{Error, Verdict};

const THREADS_ENV: &str = "ORTHANT_MC_THREADS";

/// Bayesian probit regression by direct Monte Carlo on the positive orthant.
#[derive(Parser)]
#[command(name = "orthant-mc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw posterior samples and summarize them.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        mc: McArgs,
        /// Write the draws as CSV.
        #[arg(long)]
        draws_out: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Decide flat-prior propriety and print the certificate.
    Check {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Closed-form posterior mean and covariance.
    Moments {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prior: PriorArgs,
        /// Number of hemisphere proposals.
        #[arg(long = "proposal", default_value_t = 100_000)]
        proposals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Data-augmentation Gibbs baseline (flat prior).
    Gibbs {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = DEFAULT_ITERS)]
        iters: usize,
        #[arg(long, default_value_t = DEFAULT_BURNIN)]
        burnin: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the post-burn-in chain as CSV.
        #[arg(long)]
        draws_out: Option<PathBuf>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Write a synthetic dataset (intercept plus normal covariates).
    Simulate {
        /// Number of observations.
        #[arg(long)]
        rows: usize,
        /// Coefficients including the intercept, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        beta: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo estimate of Pr(y | β) through the polar representation.
    Jointprob {
        #[command(flatten)]
        data: DataArgs,
        /// Coefficients, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        beta: Vec<f64>,
        #[arg(long = "proposal", default_value_t = 10_000)]
        proposals: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Quadrature reference moments (p ≤ 2).
    #[command(hide = true)]
    Oracle {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        prior: PriorArgs,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV file: response first, then covariates.
    #[arg(long)]
    data: PathBuf,
    /// Prepend a constant column.
    #[arg(long)]
    intercept: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum PriorArg {
    Flat,
    Gaussian,
}

#[derive(Args)]
struct PriorArgs {
    #[arg(long, value_enum, default_value = "flat")]
    prior: PriorArg,
    /// Gaussian prior covariance `c·I`; `c = 1` when neither this nor
    /// `--q-file` is given.
    #[arg(long)]
    q_scale: Option<f64>,
    /// Gaussian prior covariance read from a p×p CSV matrix.
    #[arg(long, conflicts_with = "q_scale")]
    q_file: Option<PathBuf>,
}

fn choices<T>(names: &'static [&'static str]) -> impl clap::builder::TypedValueParser<Value = T>
where
    T: std::str::FromStr + Clone + Send + Sync + 'static,
    T::Err: std::fmt::Debug,
{
    use clap::builder::TypedValueParser;
    clap::builder::PossibleValuesParser::new(names).map(|s| s.parse::<T>().expect("listed value parses"))
}

#[derive(Args)]
struct McArgs {
    /// Number of hemisphere proposals N.
    #[arg(long = "proposal", default_value_t = 100_000)]
    proposals: usize,
    /// Number of posterior draws M.
    #[arg(long, default_value_t = 10_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where the χ² factor of each draw comes from.
    #[arg(long, default_value = "fresh", value_parser = choices::<SMode>(&["fresh", "reuse"]))]
    s_mode: SMode,
    #[arg(long, default_value = "multinomial", value_parser = choices::<ResampleScheme>(&["multinomial", "systematic"]))]
    resample: ResampleScheme,
}

#[derive(Args)]
struct OutArgs {
    /// Write the JSON report (or CSV for `simulate`) here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Improper(ImproperBody),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Improper(report) => Failure::Improper(ImproperBody {
                error: "improper_posterior".into(),
                verdict: report.verdict,
                certificate: report.certificate.clone(),
                message: Error::Improper(report).to_string(),
            }),
            Error::WeightBlowUp { .. }
            | Error::DegenerateWeights
            | Error::LpCycling(_)
            | Error::Quadrature(_)
            | Error::WeightsMissing => Failure::Numerical(e.to_string()),
            other => Failure::Validation(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Improper(body)) => {
            println!("{}", serde_json::to_string_pretty(&body).expect("serializable"));
            eprintln!("error: {}", body.message);
            ExitCode::from(3)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{raw}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> CmdResult {
    let start = Instant::now();
    match command {
        Command::Fit {
            data,
            prior,
            mc,
            draws_out,
            out,
        } => {
            let d = load_csv(&data.data, data.intercept)?;
            let spec = build_prior(&prior, d.p())?;
            let options = SamplerOptions {
                proposals: mc.proposals,
                draws: mc.draws,
                seed: mc.seed,
                s_mode: mc.s_mode,
                resample: mc.resample,
            };
            let mut config = base_config("fit", Some(&data), Some(&prior), &out);
            config.proposals = mc.proposals;
            config.draws = mc.draws;
            config.seed = mc.seed;
            config.s_mode = mc.s_mode;
            config.resample = mc.resample;
            config.draws_out = draws_out.as_ref().map(|p| p.display().to_string());
            config.validate().map_err(Failure::Validation)?;

            let (draws, batch) = sample_posterior_with_batch(&d, &spec, &options)?;
            let sampled = start.elapsed();
            let sd = build_signed_design(&d)?;
            let hier = Hierarchy::new(&sd, &spec)?;
            let (_, se_closed) = posterior_mean(&hier, &batch)?;
            let cov = draws.covariance();
            let m = draws.len() as f64;
            let se = (0..d.p())
                .map(|j| (cov[(j, j)] / m + se_closed[j] * se_closed[j]).sqrt())
                .collect();
            let diag = draws.diagnostics;
            if let Some(path) = &draws_out {
                draws.write_csv(BufWriter::new(File::create(path)?))?;
            }
            let report = FitReport {
                tool_version: TOOL_VERSION.into(),
                n: d.n(),
                p: d.p(),
                prior: spec.kind(),
                verdict: check_propriety(&sd)?.verdict,
                mean: vector(&draws.mean()),
                cov: matrix(&cov),
                mc_se_mean: se,
                mc_se_cov: None,
                ess: diag.map(|g| g.ess),
                max_normalized_weight: diag.map(|g| g.max_normalized_weight),
                log_marginal_likelihood: None,
                seed: mc.seed,
                timings_ms: timings(&[("sample", sampled.as_secs_f64())], start),
                config,
            };
            emit_json(&report, &out)
        }
        Command::Check { data, out } => {
            let d = load_csv(&data.data, data.intercept)?;
            let sd = build_signed_design(&d)?;
            let report = check_propriety(&sd)?;
            let body = json!({
                "tool_version": TOOL_VERSION,
                "config": base_config("check", Some(&data), None, &out),
                "n": d.n(),
                "p": d.p(),
                "verdict": report.verdict,
                "certificate": report.certificate,
                "certificate_verified": report.verify(&sd),
                "separation_margin": separation_margin(&sd),
                "timings_ms": timings(&[], start),
            });
            emit_json(&body, &out)
        }
        Command::Moments {
            data,
            prior,
            proposals,
            seed,
            out,
        } => {
            let d = load_csv(&data.data, data.intercept)?;
            let spec = build_prior(&prior, d.p())?;
            let mut config = base_config("moments", Some(&data), Some(&prior), &out);
            config.proposals = proposals;
            config.draws = 0;
            config.seed = seed;
            if proposals < 2 {
                return Err(Failure::Validation("need at least 2 proposals".into()));
            }
            propriety_gate(&d, &spec)?;
            let sd = build_signed_design(&d)?;
            let hier = Hierarchy::new(&sd, &spec)?;
            let batch = attach_weights(sample_hemisphere(d.n(), proposals, seed)?, &hier)?;
            let est = posterior_moments(&hier, &batch)?;
            let (log_z, _) = log_marginal_likelihood(&hier, &batch)?;
            let report = FitReport {
                tool_version: TOOL_VERSION.into(),
                n: d.n(),
                p: d.p(),
                prior: spec.kind(),
                verdict: check_propriety(&sd)?.verdict,
                mean: vector(&est.mean),
                cov: matrix(&est.cov),
                mc_se_mean: vector(&est.mc_se_mean),
                mc_se_cov: Some(matrix(&est.mc_se_cov)),
                ess: Some(est.diagnostics.ess),
                max_normalized_weight: Some(est.diagnostics.max_normalized_weight),
                log_marginal_likelihood: Some(log_z),
                seed,
                timings_ms: timings(&[], start),
                config,
            };
            emit_json(&report, &out)
        }
        Command::Gibbs {
            data,
            iters,
            burnin,
            seed,
            draws_out,
            out,
        } => {
            let d = load_csv(&data.data, data.intercept)?;
            let mut config = base_config("gibbs", Some(&data), None, &out);
            config.seed = seed;
            config.iters = Some(iters);
            config.burnin = Some(burnin);
            config.proposals = 0;
            config.draws = iters.saturating_sub(burnin);
            config.draws_out = draws_out.as_ref().map(|p| p.display().to_string());
            let chain = run_gibbs(&d, iters, burnin, None, seed)?;
            if let Some(path) = &draws_out {
                let as_draws = PosteriorDraws {
                    draws: chain.draws.clone(),
                    prior: PriorKind::Flat,
                    seed,
                    diagnostics: None,
                };
                as_draws.write_csv(BufWriter::new(File::create(path)?))?;
            }
            let report = FitReport {
                tool_version: TOOL_VERSION.into(),
                n: d.n(),
                p: d.p(),
                prior: PriorKind::Flat,
                verdict: Verdict::Proper,
                mean: vector(&chain.mean()),
                cov: matrix(&chain.covariance()),
                mc_se_mean: vector(&chain.mean_se()),
                mc_se_cov: None,
                ess: None,
                max_normalized_weight: None,
                log_marginal_likelihood: None,
                seed,
                timings_ms: timings(&[], start),
                config,
            };
            emit_json(&report, &out)
        }
        Command::Simulate { rows, beta, seed, out } => {
            let d = simulate(rows, &beta, seed)?;
            match &out.out {
                Some(path) => {
                    let mut w = BufWriter::new(File::create(path)?);
                    write_csv(&d, &mut w)?;
                    w.flush()?;
                }
                None => write_csv(&d, std::io::stdout().lock())?,
            }
            Ok(())
        }
        Command::Jointprob {
            data,
            beta,
            proposals,
            seed,
            out,
        } => {
            let d = load_csv(&data.data, data.intercept)?;
            let est = joint_probability_polar(&d, &beta, proposals, seed)?;
            let ll = log_likelihood(&d, &beta)?;
            let mut config = base_config("jointprob", Some(&data), None, &out);
            config.proposals = proposals;
            config.draws = 0;
            config.seed = seed;
            let body = json!({
                "tool_version": TOOL_VERSION,
                "config": config,
                "n": d.n(),
                "p": d.p(),
                "beta": beta,
                "estimate": est.estimate,
                "std_error": est.std_error,
                "likelihood": ll.exp(),
                "log_likelihood": ll,
                "timings_ms": timings(&[], start),
            });
            emit_json(&body, &out)
        }
        Command::Oracle { data, prior, out } => {
            let d = load_csv(&data.data, data.intercept)?;
            let spec = build_prior(&prior, d.p())?;
            let r = quadrature_moments(&d, &spec)?;
            let body = json!({
                "tool_version": TOOL_VERSION,
                "config": base_config("oracle", Some(&data), Some(&prior), &out),
                "normalizer": r.normalizer,
                "log_normalizer": r.log_normalizer,
                "mean": vector(&r.mean),
                "cov": matrix(&r.cov),
                "est_abs_error": r.est_abs_error,
                "mode": vector(&r.mode),
            });
            emit_json(&body, &out)
        }
    }
}

fn build_prior(args: &PriorArgs, p: usize) -> Result<PriorSpec, Failure> {
    match args.prior {
        PriorArg::Flat => {
            if args.q_scale.is_some() || args.q_file.is_some() {
                return Err(Failure::Validation(
                    "--q-scale/--q-file require --prior gaussian".into(),
                ));
            }
            Ok(PriorSpec::Flat)
        }
        PriorArg::Gaussian => match &args.q_file {
            Some(path) => Ok(PriorSpec::gaussian(read_matrix(path, p)?)?),
            None => Ok(PriorSpec::isotropic(p, args.q_scale.unwrap_or(1.0))?),
        },
    }
}

fn read_matrix(path: &PathBuf, p: usize) -> Result<DMatrix<f64>, Failure> {
    let text = std::fs::read_to_string(path)?;
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Failure::Validation(format!(
            "{}: expected a {p}×{p} matrix",
            path.display()
        )));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

fn base_config(name: &str, data: Option<&DataArgs>, prior: Option<&PriorArgs>, out: &OutArgs) -> RunConfig {
    let defaults = SamplerOptions::default();
    RunConfig {
        subcommand: name.into(),
        data_path: data.map(|d| d.data.display().to_string()),
        intercept: data.is_some_and(|d| d.intercept),
        prior: match prior.map(|p| p.prior) {
            Some(PriorArg::Gaussian) => PriorKind::Gaussian,
            _ => PriorKind::Flat,
        },
        q_scale: prior.and_then(|p| match (p.prior, p.q_scale, &p.q_file) {
            (PriorArg::Gaussian, None, None) => Some(1.0),
            (_, scale, _) => scale,
        }),
        q_file: prior.and_then(|p| p.q_file.as_ref().map(|f| f.display().to_string())),
        proposals: defaults.proposals,
        draws: defaults.draws,
        seed: defaults.seed,
        s_mode: defaults.s_mode,
        resample: defaults.resample,
        iters: None,
        burnin: None,
        out: out.out.as_ref().map(|p| p.display().to_string()),
        draws_out: None,
    }
}

fn timings(stages: &[(&str, f64)], start: Instant) -> BTreeMap<String, f64> {
    let mut map: BTreeMap<String, f64> = stages.iter().map(|(k, s)| (k.to_string(), s * 1e3)).collect();
    map.insert("total".into(), start.elapsed().as_secs_f64() * 1e3);
    map
}

fn emit_json<T: Serialize>(value: &T, out: &OutArgs) -> CmdResult {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    match &out.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}
