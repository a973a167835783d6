//! `swvmd`: run the decomposition/forecasting pipeline as a whole or one
//! stage at a time against a run directory.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use swvmd_core::ingest::write_csv;
use swvmd_core::pipeline::{self, Preset, RunConfig};
use swvmd_core::synth::{generate, SynthKind, SynthParams};
use swvmd_core::{Error, ErrorClass, Result};

#[derive(Parser)]
#[command(name = "swvmd", version, about = "Sliding-window VMD features and LSTM trend forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic price series as an input CSV.
    Synth(SynthArgs),
    /// Copy the input into the run directory with its log returns.
    Ingest(RunArgs),
    /// ADF and Hurst reports for closes and log returns.
    Diagnose(RunArgs),
    /// Sliding-window decomposition of the preset's series.
    Decompose(RunArgs),
    /// Normalized baseline and SW-VMD datasets with train/val/test labels.
    BuildDataset(RunArgs),
    /// Train both models concurrently.
    Train(RunArgs),
    /// Test-split predictions, accuracy and the model comparison.
    Evaluate(RunArgs),
    /// Every stage in order, or a rerun from a manifest.
    Run(RunCommand),
}

#[derive(Args)]
struct SynthArgs {
    /// white-noise, random-walk, ar1, two-tone or trend-cycle.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 1024)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
    /// JSON file with generator parameters; flags below override it.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    cycle_amplitude: Option<f64>,
    #[arg(long)]
    drift: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// RunConfig JSON; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Run directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// price or return.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct RunCommand {
    #[command(flatten)]
    args: RunArgs,
    /// Re-execute the run recorded in this manifest and compare hashes.
    #[arg(long, conflicts_with_all = ["config", "input", "preset", "seed"])]
    manifest: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.input {
            c.input = v.clone();
        }
        if let Some(v) = &self.output {
            c.output_dir = v.clone();
        }
        if let Some(v) = &self.preset {
            c.preset = v.parse::<Preset>()?;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.swvmd.window, self.window);
        set(&mut c.swvmd.k, self.k);
        set(&mut c.swvmd.lookback, self.lookback);
        set(&mut c.network.layers, self.layers);
        set(&mut c.network.hidden, self.hidden);
        set(&mut c.train.batch, self.batch);
        set(&mut c.train.max_epochs, self.max_epochs);
        set(&mut c.train.patience, self.patience);
        Ok(c.effective())
    }
}

fn synth(a: &SynthArgs) -> Result<()> {
    let kind: SynthKind = a.kind.parse()?;
    let mut p = match &a.params {
        Some(path) => pipeline::read_json::<SynthParams>(path).map_err(|e| Error::Config(e.to_string()))?,
        None => SynthParams::default(),
    };
    let fields = [
        (&mut p.sigma, a.sigma),
        (&mut p.phi, a.phi),
        (&mut p.period, a.period),
        (&mut p.cycle_amplitude, a.cycle_amplitude),
        (&mut p.drift, a.drift),
    ];
    for (slot, v) in fields {
        if let Some(v) = v {
            *slot = v;
        }
    }
    let series = generate(kind, a.length, a.seed, &p)?;
    write_csv(&series, &a.output)?;
    println!("wrote {} rows of {kind} to {}", series.len(), a.output.display());
    Ok(())
}

/// Runs one stage and refreshes the run directory's manifest.
fn stage<T>(args: &RunArgs, f: impl FnOnce(&RunConfig) -> Result<T>, report: impl FnOnce(&T)) -> Result<()> {
    let config = args.resolve()?;
    let out = f(&config)?;
    pipeline::write_manifest(&config)?;
    report(&out);
    Ok(())
}

fn print_comparison(c: &swvmd_core::eval::Comparison) {
    println!(
        "{}: {:.2}%  {}: {:.2}%  delta {:+.2} points ({:+} samples of {})",
        c.model_a, c.accuracy_a_pct, c.model_b, c.accuracy_b_pct, c.accuracy_delta_pct, c.correct_delta, c.total
    );
}

fn run(cmd: &RunCommand) -> Result<()> {
    if let Some(manifest) = &cmd.manifest {
        let r = pipeline::rerun(manifest, cmd.args.output.as_deref())?;
        print_comparison(&r.outcome.evaluation.comparison);
        if !r.differences.is_empty() {
            return Err(Error::Comparison(format!(
                "rerun differs from the manifest in {}",
                r.differences.join(", ")
            )));
        }
        println!("rerun matches all {} artifact hashes", r.original.artifacts.len());
        return Ok(());
    }
    let out = pipeline::run(&cmd.args.resolve()?)?;
    if out.features.unconverged > 0 {
        eprintln!("note: {} of {} windows hit the VMD iteration cap", out.features.unconverged, out.features.rows);
    }
    print_comparison(&out.evaluation.comparison);
    println!(
        "wrote {} artifacts to {}",
        out.manifest.artifacts.len(),
        out.manifest.config.output_dir.display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Ingest(a) => stage(a, pipeline::stage_ingest, |s| println!("ingested {} rows", s.len())),
        Command::Diagnose(a) => stage(a, pipeline::stage_diagnose, |d| {
            for s in d {
                match (&s.adf, &s.hurst) {
                    (Some(adf), Some(h)) => println!(
                        "{}: ADF {:.4} (5% critical {:.3}, {} lags), Hurst {:.4}",
                        s.name, adf.statistic, adf.critical_5, adf.lags, h.h
                    ),
                    _ => println!("{}: {}", s.name, s.adf_error.as_deref().or(s.hurst_error.as_deref()).unwrap_or("")),
                }
            }
        }),
        Command::Decompose(a) => stage(a, pipeline::stage_decompose, |m| {
            println!("{} feature rows of width {} ({} unconverged windows)", m.rows, m.width, m.unconverged)
        }),
        Command::BuildDataset(a) => stage(a, pipeline::stage_build_dataset, |[b, _]| {
            println!("{} samples per model", b.len())
        }),
        Command::Train(a) => stage(a, pipeline::stage_train, |s| {
            for t in s {
                println!("{}: {} epochs, best {}", t.model_id.as_str(), t.epochs, t.best_epoch);
            }
        }),
        Command::Evaluate(a) => stage(a, pipeline::stage_evaluate, |e| print_comparison(&e.comparison)),
        Command::Run(c) => run(c),
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
