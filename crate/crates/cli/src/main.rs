mod config;
mod ini;
mod measure_file;
mod plot;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isomwalk::report::Verdict;

use config::{example, parse_config, write_config, Experiment};

const EXIT_FAIL: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_USAGE: u8 = 1;

#[derive(Parser)]
#[command(name = "isomwalk", version, about = "Random walks by random isometries: limit parameters, operators and checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides [output] dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed (overrides [experiment] seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to ISOMWALK_THREADS, then all cores.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Drift, Δ, Δ₀ and the rotation group model.
    Params(RunArgs),
    /// Monte Carlo endpoints, means and moments.
    Simulate(RunArgs),
    /// Operator norms on spheres: gap, Taylor blocks or consistency.
    Spectrum(RunArgs),
    #[command(name = "verify-clt")]
    VerifyClt(RunArgs),
    #[command(name = "verify-llt")]
    VerifyLlt(RunArgs),
    #[command(name = "verify-multiscale")]
    VerifyMultiscale(RunArgs),
    #[command(name = "verify-fourier")]
    VerifyFourier(RunArgs),
    /// Standing hypotheses on the measure.
    Conditions(RunArgs),
    /// Print a starting config for an experiment.
    #[command(name = "init-example")]
    InitExample {
        experiment: String,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn threads(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var("ISOMWALK_THREADS") {
        Ok(v) => v.trim().parse().map(Some).map_err(|_| format!("ISOMWALK_THREADS must be a positive integer, got `{v}`")),
        Err(_) => Ok(None),
    }
}

fn run_experiment(exp: Experiment, args: RunArgs) -> ExitCode {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => return usage(format!("[Io] cannot read config {}: {e}", args.config.display())),
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => return usage(format!("[Parse] {}: {e}", args.config.display())),
    };
    if let Some(named) = cfg.experiment {
        if named != exp {
            return usage(format!("config {} is for `{named}`, not `{exp}`", args.config.display()));
        }
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    match threads(args.threads) {
        Ok(Some(0)) => return usage("thread count must be positive"),
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                return usage(format!("cannot start thread pool: {e}"));
            }
        }
        Ok(None) => {}
        Err(e) => return usage(e),
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let out = match (&args.out, &cfg.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) if o.is_absolute() => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => PathBuf::from("isomwalk-out").join(exp.as_str()),
    };

    match run::run(exp, &cfg, &base, &out) {
        Ok(outcome) => {
            print!("{}", outcome.report.summary());
            println!("runtime {} ms", outcome.report.runtime_ms);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            match outcome.report.verdict {
                Verdict::Pass => ExitCode::SUCCESS,
                Verdict::Fail => ExitCode::from(EXIT_FAIL),
                Verdict::Inconclusive => ExitCode::from(EXIT_INCONCLUSIVE),
            }
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.name());
            if matches!(e, isomwalk::Error::DegenerateForm { .. }) {
                ExitCode::from(EXIT_FAIL)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let (exp, args) = match cli.command {
        Command::Params(a) => (Experiment::Params, a),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Spectrum(a) => (Experiment::Spectrum, a),
        Command::VerifyClt(a) => (Experiment::VerifyClt, a),
        Command::VerifyLlt(a) => (Experiment::VerifyLlt, a),
        Command::VerifyMultiscale(a) => (Experiment::VerifyMultiscale, a),
        Command::VerifyFourier(a) => (Experiment::VerifyFourier, a),
        Command::Conditions(a) => (Experiment::Conditions, a),
        Command::InitExample { experiment, output } => {
            let exp: Experiment = match experiment.parse() {
                Ok(e) => e,
                Err(m) => return usage(m),
            };
            let text = write_config(&example(exp));
            return match output {
                Some(p) => match std::fs::write(&p, text) {
                    Ok(()) => ExitCode::SUCCESS,
                    Err(e) => usage(format!("[Io] cannot write {}: {e}", p.display())),
                },
                None => {
                    print!("{text}");
                    ExitCode::SUCCESS
                }
            };
        }
    };
    run_experiment(exp, args)
}
