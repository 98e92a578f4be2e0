//! Command-line front end: one subcommand per analysis, CSV on stdout (or
//! a file), with a `#` comment line recording the full invocation so every
//! output can be reproduced bit-identically.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::alpha_analysis::{alpha, alpha_limit, alpha_regular, xi};
use crate::cycle_contribution::{cycle_params, CycleKind, CycleRecursions};
use crate::density_evolution::{evolve, threshold};
use crate::ensemble::{parse_distribution, Ensemble, Perspective, Side};
use crate::exact_oracle::{exact_pb_full, exact_pb_sampled, OracleMethod};
use crate::real::{MpReal, Real};
use crate::simulator::estimate_pb;
use crate::tree_contribution::beta;
use crate::{cycle_contribution, Error, Result};

/// Environment variable overriding the default precision (mantissa bits)
/// of the `beta`, `gamma` and `alpha` subcommands.
pub const PRECISION_ENV: &str = "LDPC_ALPHA_PRECISION_BITS";
const DEFAULT_PRECISION_BITS: u32 = 256;

#[derive(Debug, Parser)]
#[command(
    name = "ldpc-alpha",
    about = "Finite-length 1/n correction of BP decoding on the binary erasure channel",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Write CSV here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    /// Worker threads for simulations and grid sweeps (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Density evolution trajectory or BP threshold.
    De(DeArgs),
    /// Cycle-free contribution beta(eps, t).
    Beta(CoefArgs),
    /// Single-cycle contribution gamma(eps, t).
    Gamma(GammaArgs),
    /// alpha(eps, t) = beta + gamma, the regular direct form, or the
    /// t -> infinity limit.
    Alpha(AlphaArgs),
    /// Single-cycle probability coefficient xi(t).
    Xi(XiArgs),
    /// Monte Carlo estimate of Pb(n, eps, t) on sampled graphs.
    Simulate(SimArgs),
    /// Exact tiny-instance bit error probability.
    Oracle(OracleArgs),
}

/// Ensemble selection shared by all subcommands: either explicit
/// distribution polynomials or a regular pair.
#[derive(Debug, Args)]
pub struct EnsembleArgs {
    /// Variable-side distribution, e.g. "0.5*x^1+0.153*x^2+...".
    #[arg(long, requires = "rho", conflicts_with = "regular")]
    pub lambda: Option<String>,

    /// Check-side distribution, e.g. "0.492*x^2+0.508*x^3".
    #[arg(long, requires = "lambda", conflicts_with = "regular")]
    pub rho: Option<String>,

    /// Regular ensemble as "l,r", e.g. --regular 3,6.
    #[arg(long, value_name = "L,R")]
    pub regular: Option<String>,

    /// Interpret the distribution text from the edge perspective (default).
    #[arg(long, conflicts_with = "node")]
    pub edge: bool,

    /// Interpret the distribution text from the node perspective.
    #[arg(long)]
    pub node: bool,
}

impl EnsembleArgs {
    pub fn build(&self) -> Result<Ensemble> {
        if let Some(spec) = &self.regular {
            let (l, r) = parse_regular(spec)?;
            return Ensemble::regular(l, r);
        }
        let (Some(lambda), Some(rho)) = (&self.lambda, &self.rho) else {
            return Err(Error::InvalidEnsemble(
                "specify either --regular l,r or both --lambda and --rho".into(),
            ));
        };
        let perspective = if self.node {
            Perspective::Node
        } else {
            Perspective::Edge
        };
        let lambda = parse_distribution(lambda, perspective, Side::Variable)?;
        let rho = parse_distribution(rho, perspective, Side::Check)?;
        let (lambda, rho) = match perspective {
            Perspective::Edge => (lambda, rho),
            Perspective::Node => (lambda.node_to_edge()?, rho.node_to_edge()?),
        };
        Ensemble::new(lambda, rho)
    }

    fn regular_pair(&self) -> Result<Option<(u32, u32)>> {
        self.regular.as_deref().map(parse_regular).transpose()
    }
}

fn parse_regular(spec: &str) -> Result<(u32, u32)> {
    let err = || Error::Parse {
        input: spec.to_string(),
        reason: "expected two comma-separated degrees, e.g. 3,6".into(),
    };
    let (l, r) = spec.split_once(',').ok_or_else(err)?;
    Ok((
        l.trim().parse().map_err(|_| err())?,
        r.trim().parse().map_err(|_| err())?,
    ))
}

/// Inclusive grid syntax `start:stop:step` (single values allowed).
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let err = |reason: &str| Error::Parse {
        input: spec.to_string(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let values = match parts.as_slice() {
        [single] => vec![single
            .trim()
            .parse::<f64>()
            .map_err(|_| err("bad number"))?],
        [start, stop, step] => {
            let start: f64 = start.trim().parse().map_err(|_| err("bad start"))?;
            let stop: f64 = stop.trim().parse().map_err(|_| err("bad stop"))?;
            let step: f64 = step.trim().parse().map_err(|_| err("bad step"))?;
            if step <= 0.0 || stop < start {
                return Err(err("need step > 0 and stop >= start"));
            }
            let mut values = Vec::new();
            let mut k = 0usize;
            loop {
                let v = start + k as f64 * step;
                if v > stop + 0.5 * step {
                    break;
                }
                values.push(v.min(stop));
                k += 1;
            }
            values
        }
        _ => return Err(err("expected `value` or `start:stop:step`")),
    };
    if values.is_empty() {
        return Err(err("empty grid"));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(err("erasure probabilities must lie in [0, 1]"));
    }
    Ok(values)
}

fn precision_default() -> u32 {
    std::env::var(PRECISION_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_PRECISION_BITS)
}

#[derive(Debug, Args)]
pub struct DeArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,

    /// Channel erasure probability.
    #[arg(long, required_unless_present = "threshold")]
    pub eps: Option<f64>,

    /// Number of BP iterations.
    #[arg(long, default_value_t = 10)]
    pub t: usize,

    /// Compute the BP threshold instead of a trajectory.
    #[arg(long)]
    pub threshold: bool,

    /// Bisection tolerance for --threshold.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct CoefArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,

    /// Erasure probability grid `start:stop:step` or a single value.
    #[arg(long = "eps-grid")]
    pub eps_grid: String,

    #[arg(long)]
    pub t: usize,

    /// Working precision in mantissa bits (>= 53).
    #[arg(long = "precision-bits")]
    pub precision_bits: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GammaArgs {
    #[command(flatten)]
    pub coef: CoefArgs,

    /// Emit one row per (kind, s1, s2) term instead of the sums.
    #[arg(long)]
    pub breakdown: bool,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,

    #[arg(long = "eps-grid")]
    pub eps_grid: String,

    #[arg(long)]
    pub t: usize,

    #[arg(long = "precision-bits")]
    pub precision_bits: Option<u32>,

    /// Evaluate the t -> infinity limit (regular ensembles only).
    #[arg(long)]
    pub limit: bool,
}

#[derive(Debug, Args)]
pub struct XiArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,

    /// Emit xi(0..=t).
    #[arg(long)]
    pub t: usize,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,

    #[arg(long)]
    pub n: usize,

    #[arg(long = "eps-grid")]
    pub eps_grid: String,

    #[arg(long)]
    pub t: usize,

    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Skip the alpha reference column (it can dominate runtime for deep t).
    #[arg(long = "no-alpha-ref")]
    pub no_alpha_ref: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub ensemble: EnsembleArgs,

    #[arg(long)]
    pub n: usize,

    #[arg(long)]
    pub t: usize,

    /// full: enumerate all matchings; sampled: average exact per-graph
    /// polynomials over sampled matchings.
    #[arg(long, default_value = "full")]
    pub mode: String,

    /// Number of sampled graphs (sampled mode).
    #[arg(long, default_value_t = 1000)]
    pub graphs: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Evaluate the polynomial on this grid instead of printing
    /// coefficients.
    #[arg(long = "eps-grid")]
    pub eps_grid: Option<String>,
}

fn open_output(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn config_comment(out: &mut dyn Write) -> io::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    writeln!(out, "# {}", args.join(" "))
}

/// Dispatch a parsed invocation. I/O failures surface as `io::Error`;
/// domain failures as this crate's error type.
pub fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        // ignore failure: the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let mut out = open_output(&cli.output).map_err(io_error)?;
    match &cli.command {
        Command::De(args) => run_de(args, out.as_mut()),
        Command::Beta(args) => run_beta(args, out.as_mut()),
        Command::Gamma(args) => run_gamma(args, out.as_mut()),
        Command::Alpha(args) => run_alpha(args, out.as_mut()),
        Command::Xi(args) => run_xi(args, out.as_mut()),
        Command::Simulate(args) => run_simulate(args, out.as_mut()),
        Command::Oracle(args) => run_oracle(args, out.as_mut()),
    }
}

fn io_error(e: io::Error) -> Error {
    Error::InvalidEnsemble(format!("i/o error: {e}"))
}

fn run_de(args: &DeArgs, out: &mut dyn Write) -> Result<()> {
    let ensemble = args.ensemble.build()?;
    config_comment(out).map_err(io_error)?;
    if args.threshold {
        let value = threshold(&ensemble, args.tol);
        writeln!(out, "threshold").map_err(io_error)?;
        writeln!(out, "{value}").map_err(io_error)?;
        return Ok(());
    }
    let eps = args.eps.expect("clap enforces --eps without --threshold");
    let traj = evolve(&ensemble, eps, args.t);
    writeln!(out, "t,P,Q,Pb").map_err(io_error)?;
    for tau in 0..=args.t {
        let q = if tau >= 1 {
            traj.q(tau).to_string()
        } else {
            String::new()
        };
        writeln!(out, "{tau},{},{q},{}", traj.p(tau), traj.pb(tau)).map_err(io_error)?;
    }
    Ok(())
}

fn run_beta(args: &CoefArgs, out: &mut dyn Write) -> Result<()> {
    let ensemble = args.ensemble.build()?;
    let grid = parse_grid(&args.eps_grid)?;
    let bits = args.precision_bits.unwrap_or_else(precision_default);
    config_comment(out).map_err(io_error)?;
    writeln!(out, "eps,t,beta").map_err(io_error)?;
    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&eps| (eps, beta(&ensemble, eps, args.t, bits)))
        .collect();
    for (eps, value) in rows {
        writeln!(out, "{eps},{},{value}", args.t).map_err(io_error)?;
    }
    Ok(())
}

fn run_gamma(args: &GammaArgs, out: &mut dyn Write) -> Result<()> {
    let ensemble = args.coef.ensemble.build()?;
    let grid = parse_grid(&args.coef.eps_grid)?;
    let bits = args.coef.precision_bits.unwrap_or_else(precision_default);
    let t = args.coef.t;
    config_comment(out).map_err(io_error)?;
    if args.breakdown {
        writeln!(out, "eps,kind,s1,s2,term").map_err(io_error)?;
        for &eps in &grid {
            let mp = MpReal::with_bits(eps, bits as usize);
            let traj = crate::density_evolution::evolve_in(&ensemble, &mp, t);
            let mut rec = CycleRecursions::new(&ensemble, &traj, t);
            for params in cycle_params(t) {
                let kind = match params.kind {
                    CycleKind::V => "V",
                    CycleKind::C => "C",
                    CycleKind::R => "R",
                };
                let term = rec.term(params).to_f64();
                writeln!(out, "{eps},{kind},{},{},{term}", params.s1, params.s2)
                    .map_err(io_error)?;
            }
        }
        return Ok(());
    }
    writeln!(out, "eps,t,gamma").map_err(io_error)?;
    let rows: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|&eps| (eps, cycle_contribution::gamma(&ensemble, eps, t, bits)))
        .collect();
    for (eps, value) in rows {
        writeln!(out, "{eps},{t},{value}").map_err(io_error)?;
    }
    Ok(())
}

fn run_alpha(args: &AlphaArgs, out: &mut dyn Write) -> Result<()> {
    let grid = parse_grid(&args.eps_grid)?;
    let bits = args.precision_bits.unwrap_or_else(precision_default);
    let regular = args.ensemble.regular_pair()?;
    config_comment(out).map_err(io_error)?;
    writeln!(out, "eps,t,beta,gamma,alpha,cancellation_digits").map_err(io_error)?;
    if args.limit {
        let (l, r) = regular.ok_or_else(|| {
            Error::InvalidEnsemble("--limit needs --regular l,r".into())
        })?;
        for &eps in &grid {
            let cell = alpha_limit(l, r, eps)
                .map(|v| v.to_string())
                .unwrap_or_default();
            writeln!(out, "{eps},,,,{cell},").map_err(io_error)?;
        }
        return Ok(());
    }
    if let Some((l, r)) = regular {
        // the direct regular form has no beta/gamma split
        let rows: Vec<(f64, f64)> = grid
            .par_iter()
            .map(|&eps| (eps, alpha_regular(l, r, eps, args.t)))
            .collect();
        for (eps, value) in rows {
            writeln!(out, "{eps},{},,,{value},", args.t).map_err(io_error)?;
        }
        return Ok(());
    }
    let ensemble = args.ensemble.build()?;
    let rows: Vec<crate::AlphaBreakdown> = grid
        .par_iter()
        .map(|&eps| alpha(&ensemble, eps, args.t, bits))
        .collect();
    for b in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            b.epsilon, b.t, b.beta, b.gamma, b.alpha, b.cancellation_digits
        )
        .map_err(io_error)?;
    }
    Ok(())
}

fn run_xi(args: &XiArgs, out: &mut dyn Write) -> Result<()> {
    let ensemble = args.ensemble.build()?;
    config_comment(out).map_err(io_error)?;
    writeln!(out, "t,xi").map_err(io_error)?;
    for t in 0..=args.t {
        writeln!(out, "{t},{}", xi(&ensemble, t)).map_err(io_error)?;
    }
    Ok(())
}

fn run_simulate(args: &SimArgs, out: &mut dyn Write) -> Result<()> {
    let ensemble = args.ensemble.build()?;
    let grid = parse_grid(&args.eps_grid)?;
    config_comment(out).map_err(io_error)?;
    writeln!(out, "n,eps,t,trials,pb_hat,ci,scaled,alpha_ref").map_err(io_error)?;
    for &eps in &grid {
        let result = estimate_pb(&ensemble, args.n, eps, args.t, args.trials, args.seed)?;
        let alpha_ref = if args.no_alpha_ref {
            String::new()
        } else {
            alpha(&ensemble, eps, args.t, precision_default())
                .alpha
                .to_string()
        };
        writeln!(
            out,
            "{},{eps},{},{},{},{},{},{alpha_ref}",
            args.n, args.t, args.trials, result.pb_hat, result.ci_halfwidth, result.scaled
        )
        .map_err(io_error)?;
    }
    Ok(())
}

fn run_oracle(args: &OracleArgs, out: &mut dyn Write) -> Result<()> {
    let ensemble = args.ensemble.build()?;
    let result = match args.mode.as_str() {
        "full" => exact_pb_full(&ensemble, args.n, args.t)?,
        "sampled" => exact_pb_sampled(&ensemble, args.n, args.t, args.graphs, args.seed)?,
        other => {
            return Err(Error::Parse {
                input: other.to_string(),
                reason: "mode must be `full` or `sampled`".into(),
            })
        }
    };
    config_comment(out).map_err(io_error)?;
    if let Some(grid) = &args.eps_grid {
        writeln!(out, "eps,pb,ci").map_err(io_error)?;
        for eps in parse_grid(grid)? {
            let ci = match result.method {
                OracleMethod::FullMatchingEnumeration => String::new(),
                OracleMethod::GraphSampledExactErasure => result.ci_at(eps).to_string(),
            };
            writeln!(out, "{eps},{},{ci}", result.pb_at(eps)).map_err(io_error)?;
        }
        return Ok(());
    }
    writeln!(out, "k,num,den,coeff").map_err(io_error)?;
    for (k, c) in result.coefficients().iter().enumerate() {
        writeln!(
            out,
            "{k},{},{},{}",
            c.numer(),
            c.denom(),
            c.to_f64().unwrap_or(f64::NAN)
        )
        .map_err(io_error)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0.4").unwrap(), vec![0.4]);
        let g = parse_grid("0.1:0.9:0.1").unwrap();
        assert_eq!(g.len(), 9);
        assert!((g[0] - 0.1).abs() < 1e-12 && (g[8] - 0.9).abs() < 1e-12);
        let single = parse_grid("1:1:1").unwrap();
        assert_eq!(single, vec![1.0]);
        assert!(parse_grid("0.5:0.1:0.1").is_err());
        assert!(parse_grid("a").is_err(), "non-numeric");
        assert!(parse_grid("0.2:1.4:0.2").is_err(), "outside [0,1]");
    }

    #[test]
    fn regular_parsing() {
        assert_eq!(parse_regular("3,6").unwrap(), (3, 6));
        assert_eq!(parse_regular(" 2 , 3 ").unwrap(), (2, 3));
        assert!(parse_regular("3;6").is_err());
        assert!(parse_regular("3").is_err());
    }

    #[test]
    fn ensemble_args_build() {
        let args = EnsembleArgs {
            lambda: None,
            rho: None,
            regular: Some("3,6".into()),
            edge: false,
            node: false,
        };
        let ens = args.build().unwrap();
        assert_eq!(ens.lambda_prime_one(), 2.0);

        let args = EnsembleArgs {
            lambda: Some("x^2".into()),
            rho: Some("x^5".into()),
            regular: None,
            edge: true,
            node: false,
        };
        let ens = args.build().unwrap();
        assert_eq!(ens.rho_prime_one(), 5.0);

        // node-perspective input converts to the edge perspective
        let args = EnsembleArgs {
            lambda: Some("x^3".into()),
            rho: Some("x^6".into()),
            regular: None,
            edge: false,
            node: true,
        };
        let ens = args.build().unwrap();
        assert_eq!(ens.lambda().coefficient(3), 1.0);

        let args = EnsembleArgs {
            lambda: None,
            rho: None,
            regular: None,
            edge: false,
            node: false,
        };
        assert!(args.build().is_err());
    }
}
