use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use hshadow::harness::{
    self, CharacterizeRequest, EstimatorKind, ExperimentConfig, MetrologyRunConfig, OutputFormat, ProtocolChoice,
    TruthMode,
};

#[derive(Parser)]
#[command(name = "hshadow", version, about = "Hybrid and original classical-shadow simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate purities Tr(ρ^L) across copy budgets.
    Moments(ExperimentArgs),
    /// Virtual-distillation estimates Tr(Oρ^L)/Tr(ρ^L).
    Distill(ExperimentArgs),
    /// Run whatever estimators the config file asks for.
    Sweep(ExperimentArgs),
    /// Phase estimation with and without distillation.
    Metrology(MetrologyArgs),
    /// Fredkin gate characterization.
    Characterize(CharacterizeArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    /// Worker threads (defaults to all cores); output does not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    protocol: Option<ProtocolChoice>,
    #[arg(long)]
    k: Option<usize>,
    /// Comma-separated degrees.
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
    /// Comma-separated copy budgets N.
    #[arg(long, value_delimiter = ',')]
    copies: Option<Vec<usize>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    noise_p: Option<f64>,
    /// Pauli string for distillation, e.g. X or XZ.
    #[arg(long)]
    observable: Option<String>,
    #[arg(long)]
    tuple_budget: Option<u64>,
    /// Replace the analytic truth with a plug-in run of this many copies.
    #[arg(long)]
    plug_in: Option<usize>,
}

#[derive(Args)]
struct MetrologyArgs {
    #[command(flatten)]
    common: Common,
    /// Phase in radians.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    copies: Option<Vec<usize>>,
    /// Number of seeds.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    noise_p: Option<f64>,
}

#[derive(Args)]
struct CharacterizeArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: OutputFormat,
    #[arg(long)]
    quiet: bool,
    /// Measured truth table (CSV) to score.
    #[arg(long)]
    truth_table: Option<PathBuf>,
    /// Waveplate angle tables (JSON); defaults to the published settings.
    #[arg(long)]
    angles: Option<PathBuf>,
    /// Calibrate the depolarizing strength to this process fidelity.
    #[arg(long)]
    target_fidelity: Option<f64>,
    #[arg(long)]
    noise_p: Option<f64>,
}

fn experiment_config(args: &ExperimentArgs, defaults: Option<(EstimatorKind, bool)>) -> Result<ExperimentConfig> {
    let mut config = match &args.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some((kind, with_moment)) = defaults {
        config.estimators = if with_moment { vec![EstimatorKind::Moment, kind] } else { vec![kind] };
    }
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    if let Some(p) = args.protocol {
        config.protocol = p;
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(l) = &args.l {
        config.l = l.clone();
    }
    if let Some(c) = &args.copies {
        config.copies = c.clone();
    }
    if let Some(r) = args.reps {
        config.repetitions = r;
    }
    if let Some(p) = args.noise_p {
        config.noise_p = p;
    }
    if let Some(o) = &args.observable {
        config.observable = o.clone();
    }
    if let Some(b) = args.tuple_budget {
        config.tuple_budget = b;
    }
    if let Some(c) = args.plug_in {
        config.truth = TruthMode::PlugIn { copies: c };
    }
    config.validate()?;
    Ok(config)
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be positive");
        }
        builder = builder.num_threads(j);
    }
    Ok(builder.build().context("building worker pool")?.install(f))
}

fn emit_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn report_files(quiet: bool, files: &[PathBuf], seconds: f64) {
    if !quiet {
        for f in files {
            eprintln!("wrote {}", f.display());
        }
        eprintln!("done in {seconds:.2} s");
    }
}

fn run_experiment(args: &ExperimentArgs, defaults: Option<(EstimatorKind, bool)>) -> Result<()> {
    let config = experiment_config(args, defaults)?;
    let bundle = with_pool(args.common.jobs, || harness::run_experiment(&config))??;
    match &args.common.out {
        Some(dir) => {
            let files = harness::write_bundle(&bundle, dir, args.common.format)?;
            report_files(args.common.quiet, &files, bundle.wall_clock_seconds);
        }
        None => {
            let text = match args.common.format {
                OutputFormat::Csv => harness::bundle_csv(&bundle)?,
                OutputFormat::Json => harness::bundle_json(&bundle)?,
            };
            emit_stdout(&text)?;
        }
    }
    Ok(())
}

fn run_metrology(args: &MetrologyArgs) -> Result<()> {
    let mut config = match &args.common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            MetrologyRunConfig::from_json(&text)?
        }
        None => MetrologyRunConfig::default(),
    };
    if let Some(s) = args.common.seed {
        config.seed = s;
    }
    if let Some(t) = args.theta {
        config.theta = t;
    }
    if let Some(k) = args.k {
        config.k = k;
    }
    if let Some(c) = &args.copies {
        config.copies = c.clone();
    }
    if let Some(r) = args.reps {
        config.repetitions = r;
    }
    if let Some(p) = args.noise_p {
        config.noise_p = p;
    }
    let bundle = with_pool(args.common.jobs, || harness::run_metrology(&config))??;
    match &args.common.out {
        Some(dir) => {
            let files = harness::write_metrology(&bundle, dir, args.common.format)?;
            report_files(args.common.quiet, &files, bundle.wall_clock_seconds);
        }
        None => emit_stdout(&match args.common.format {
            OutputFormat::Csv => harness::metrology_csv(&bundle)?,
            OutputFormat::Json => harness::metrology_json(&bundle)?,
        })?,
    }
    Ok(())
}

fn run_characterize(args: &CharacterizeArgs) -> Result<()> {
    let req = CharacterizeRequest {
        truth_table: args.truth_table.clone(),
        angles: args.angles.clone(),
        target_fidelity: args.target_fidelity,
        noise_p: args.noise_p,
    };
    let report = harness::run_characterize(&req)?;
    let text = match args.format {
        OutputFormat::Csv => report.to_csv()?,
        OutputFormat::Json => report.to_json()?,
    };
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(match args.format {
                OutputFormat::Csv => "characterization.csv",
                OutputFormat::Json => "characterization.json",
            });
            std::fs::write(&path, text)?;
            report_files(args.quiet, &[path], 0.0);
        }
        None => emit_stdout(&text)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Moments(a) => run_experiment(a, Some((EstimatorKind::Moment, false))),
        Command::Distill(a) => run_experiment(a, Some((EstimatorKind::Vd, true))),
        Command::Sweep(a) => run_experiment(a, None),
        Command::Metrology(a) => run_metrology(a),
        Command::Characterize(a) => run_characterize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
