use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use pretrial_core::device::{read_inputs, run_offline, write_verdicts, DetectionConfig, DeviceKind};
use pretrial_core::sprt::SprtDecision;
use pretrial_core::trial::{run_trial, SyntheticSpec, TrialContext, TrialSpec};

#[derive(Parser)]
#[command(name = "pretrial", version, about = "Virtual patient trials of ICD discrimination algorithms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a trial until the sequential test decides or hits its cap.
    Run(RunArgs),
    /// Replay a recorded channel trace through one device.
    Discriminate(DiscriminateArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    trial: Option<u8>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long = "max-iters")]
    max_iters: Option<u64>,
    #[arg(long = "cohort-n")]
    cohort_n: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    trace: bool,
    /// Replace the simulated arms with Bernoulli outcomes, as `p1,p2`.
    #[arg(long, value_name = "P1,P2")]
    synthetic: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DeviceArg {
    Gdt,
    Mdt,
}

#[derive(clap::Args)]
struct DiscriminateArgs {
    #[arg(long, value_enum)]
    device: DeviceArg,
    /// Tab-separated channel trace written by `run --trace`.
    #[arg(long)]
    trace: PathBuf,
    /// Verdict file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Trial config whose `[gdt]`/`[mdt]` section to use instead of defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_synthetic(s: &str) -> Result<SyntheticSpec> {
    let Some((a, b)) = s.split_once(',') else {
        bail!("--synthetic expects `p1,p2`, got `{s}`");
    };
    Ok(SyntheticSpec {
        p1: a.trim().parse().with_context(|| format!("bad p1 `{a}`"))?,
        p2: b.trim().parse().with_context(|| format!("bad p2 `{b}`"))?,
    })
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut spec = TrialSpec::from_file(&args.config)?;
    if let Some(t) = args.trial {
        spec.trial_id = t;
    }
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(v) = args.alpha {
        spec.sprt.alpha = v;
    }
    if let Some(v) = args.beta {
        spec.sprt.beta = v;
    }
    if let Some(v) = args.delta {
        spec.sprt.delta = v;
    }
    if let Some(v) = args.max_iters {
        spec.sprt.max_iterations = v;
    }
    if let Some(n) = args.cohort_n {
        spec.cohort_n = Some(n);
    }
    if !spec.is_cohort_trial() && args.trial.is_some() && args.cohort_n.is_none() {
        // a cohort size from the file does not carry over to a per-patient trial
        spec.cohort_n = None;
    }
    if let Some(out) = args.out {
        spec.output_dir = out;
    }
    if args.trace {
        spec.trace = true;
    }
    if let Some(s) = args.synthetic {
        spec.synthetic = Some(parse_synthetic(&s)?);
    }
    let ctx = TrialContext::new(spec)?;
    log::info!("running trial {} with seed {}", ctx.spec.trial_id, ctx.spec.seed);
    let report = run_trial(&ctx)?;
    print!("{}", report.render());
    Ok(match report.decision {
        SprtDecision::AcceptH0 | SprtDecision::AcceptH1 => ExitCode::SUCCESS,
        _ => ExitCode::from(2),
    })
}

fn discriminate(args: DiscriminateArgs) -> Result<ExitCode> {
    let spec = match &args.config {
        Some(p) => Some(TrialSpec::from_file(p)?),
        None => None,
    };
    let (kind, cfg) = match args.device {
        DeviceArg::Gdt => (DeviceKind::Gdt, spec.map_or_else(DetectionConfig::gdt_default, |s| s.gdt)),
        DeviceArg::Mdt => (DeviceKind::Mdt, spec.map_or_else(DetectionConfig::mdt_default, |s| s.mdt)),
    };
    let file = File::open(&args.trace).with_context(|| format!("opening {}", args.trace.display()))?;
    let inputs = read_inputs(BufReader::new(file))?;
    let mut device = kind.build(&cfg)?;
    let verdicts = run_offline(device.as_mut(), &inputs)?;
    match args.out {
        Some(p) => {
            let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
            write_verdicts(BufWriter::new(f), &verdicts)?;
        }
        None => write_verdicts(std::io::stdout().lock(), &verdicts)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Discriminate(a) => discriminate(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
