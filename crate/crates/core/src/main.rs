use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fogtbma::experiment::{
    required_snr_csv, roc_csv, run_required_snr, run_roc, run_snr_sweep, snr_csv, trace_csv,
    write_output, ExperimentSpec, RunOptions,
};
use fogtbma::{Error, Result};

#[derive(Parser)]
#[command(name = "fogtbma", version, about = "Monte Carlo campaigns for fog-RAN type-based random access")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Error rates versus SNR for each scheme.
    SnrSweep(RunArgs),
    /// SNR needed to reach a target error rate over a (B, N) grid.
    RequiredSnr(RunArgs),
    /// False-positive / false-negative trade-off over a threshold grid.
    Roc(RunArgs),
    /// Check a config file and list every violation.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the number of evaluation trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the GAMP iteration trace of the first trial per point
    /// next to the CSV (`<out>.trace.csv`, or stderr without `--out`).
    #[arg(long)]
    debug_trace: bool,
    /// Write the evaluation trials as JSON lines to this file.
    #[arg(long)]
    dump_trials: Option<PathBuf>,
}

fn load_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let spec: ExperimentSpec =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn run(kind: &Command, args: &RunArgs) -> Result<()> {
    let mut spec = load_spec(&args.config)?;
    if let Some(seed) = args.seed {
        spec.master_seed = seed;
    }
    if let Some(trials) = args.trials {
        spec.trials = trials;
    }
    spec.check()?;
    let opts = RunOptions { debug_trace: args.debug_trace, dump_trials: args.dump_trials.is_some() };
    let (csv, traces, dump) = match kind {
        Command::SnrSweep(_) => {
            let out = run_snr_sweep(&spec, &opts)?;
            (snr_csv(&out.rows), out.traces, out.dump)
        }
        Command::RequiredSnr(_) => {
            let out = run_required_snr(&spec, &opts)?;
            (required_snr_csv(&out.rows), out.traces, out.dump)
        }
        Command::Roc(_) => {
            let out = run_roc(&spec, &opts)?;
            (roc_csv(&out.rows), out.traces, out.dump)
        }
        Command::Validate { .. } => unreachable!(),
    };
    write_output(args.out.as_deref(), &csv)?;
    if args.debug_trace {
        let text = trace_csv(&traces);
        match &args.out {
            Some(out) => std::fs::write(sidecar(out, ".trace.csv"), text)?,
            None => eprint!("{text}"),
        }
    }
    if let Some(path) = &args.dump_trials {
        let mut text = dump.join("\n");
        text.push('\n');
        std::fs::write(path, text)?;
    }
    if let Some(out) = &args.out {
        let meta = serde_json::json!({
            "command": match kind {
                Command::SnrSweep(_) => "snr-sweep",
                Command::RequiredSnr(_) => "required-snr",
                _ => "roc",
            },
            "version": env!("CARGO_PKG_VERSION"),
            "spec": spec,
        });
        std::fs::write(sidecar(out, ".meta.json"), serde_json::to_string_pretty(&meta)?)?;
    }
    Ok(())
}

fn validate_config(path: &Path) -> Result<()> {
    let spec = load_spec(path)?;
    let report = spec.validation_report();
    if report.is_valid() {
        println!("ok");
        Ok(())
    } else {
        for v in &report.violations {
            println!("{v}");
        }
        Err(Error::Config(format!("{} violation(s)", report.violations.len())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { config } => validate_config(config),
        Command::SnrSweep(a) | Command::RequiredSnr(a) | Command::Roc(a) => run(&cli.command, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
