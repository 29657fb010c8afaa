use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac_bench::{load_spec, run, BenchError, ExperimentKind};

const EXIT_CELL_FAILED: u8 = 1;
const EXIT_SPEC_INVALID: u8 = 2;

#[derive(Parser)]
#[command(name = "isac", version, about = "ISAC sensing-error experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate all sensing metrics at the isotropic covariance.
    Evaluate(RunArgs),
    /// Optimize the data covariance with SCA and the high-SNR solver.
    Optimize(RunArgs),
    /// Sweep the data length.
    SweepLd(RunArgs),
    /// Sweep the transmit SNR.
    SweepSnr(RunArgs),
    /// Sensing/rate tradeoff at fixed frame length.
    Tradeoff(RunArgs),
    /// Runtime of SCA against the high-SNR solver.
    Bench(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Output CSV; defaults to the spec's `output` entry.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the spec seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Self::Evaluate(a) => (ExperimentKind::Evaluate, a),
            Self::Optimize(a) => (ExperimentKind::Optimize, a),
            Self::SweepLd(a) => (ExperimentKind::SweepLd, a),
            Self::SweepSnr(a) => (ExperimentKind::SweepSnr, a),
            Self::Tradeoff(a) => (ExperimentKind::Tradeoff, a),
            Self::Bench(a) => (ExperimentKind::Bench, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<bool, BenchError> {
    let mut spec = load_spec(&args.spec)?;
    if spec.kind != kind {
        return Err(BenchError::InvalidSpec(format!(
            "spec kind is {}, but the {} command was used",
            spec.kind,
            kind.as_str().replace('_', "-")
        )));
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let out = args
        .out
        .or_else(|| spec.output.clone())
        .ok_or_else(|| BenchError::InvalidSpec("no output path: pass --out or set `output`".into()))?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| BenchError::InvalidSpec(format!("cannot start {n} threads: {e}")))?;
    }
    let output = run(&spec)?;
    output.write(&out)?;
    let failed = output.rows.iter().filter(|r| !r.is_ok()).count();
    eprintln!("wrote {} rows to {} ({failed} failed)", output.rows.len(), out.display());
    for s in &output.meta.runtime_slopes {
        eprintln!("runtime slope {}: {:.2}", s.method, s.slope);
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let (kind, args) = Cli::parse().command.split();
    match execute(kind, args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_CELL_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_spec_error() {
                ExitCode::from(EXIT_SPEC_INVALID)
            } else {
                ExitCode::from(EXIT_CELL_FAILED)
            }
        }
    }
}
