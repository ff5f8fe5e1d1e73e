use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use carsrecon::pipeline::{run_pipeline_in, run_stage, RunManifest, Stage, StageRecord};
use carsrecon::signs::SearchStrategy;
use carsrecon::validate::validate;
use carsrecon::{RunConfig, SynthMode};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "carsrecon",
    version,
    about = "Wavepacket and potential reconstruction from simulated CARS signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground-state eigenpairs and sampled potentials.
    Eigs(Common),
    /// Third-order polarization on the delay lattice, plus the exact reference propagation.
    Synth(Common),
    /// Windowed transform, per-peak inversion and square-root branch tracking.
    Invert(Common),
    /// Sign resolution and wavefunction assembly.
    Signs(Common),
    /// Potential inversion and snapshot merge.
    Potential(Common),
    /// All stages in order.
    Pipeline(Common),
    /// Run the self-checks; exits nonzero if any check fails.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct Common {
    /// Config file, or one of li2_desk, li2_full, dli2_desk, dli2_full.
    #[arg(long, default_value = "li2_desk")]
    config: String,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Synthesis mode: direct or closure.
    #[arg(long)]
    mode: Option<SynthMode>,
    /// Sign search: exhaustive, greedy, beam or beam:N.
    #[arg(long)]
    strategy: Option<SearchStrategy>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let path = Path::new(&self.config);
        let mut cfg = if path.exists() {
            RunConfig::from_file(path)?
        } else {
            RunConfig::preset(&self.config)?
        };
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(mode) = self.mode {
            cfg.synth_mode = mode;
        }
        if let Some(s) = self.strategy {
            cfg.strategy = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_stage(rec: &StageRecord) {
    println!(
        "{:<9} {:?} {:.2} s, {} artifacts",
        rec.stage,
        rec.status,
        rec.seconds,
        rec.artifacts.len()
    );
    for (k, v) in &rec.metrics {
        println!("    {k} = {v:.6e}");
    }
    for w in &rec.warnings {
        eprintln!("warning [{}]: {w}", rec.stage);
    }
}

fn stage(common: &Common, stage: Stage) -> Result<ExitCode> {
    let cfg = common.load()?;
    let manifest = run_stage(&cfg, stage, &cfg.output_dir)?;
    if let Some(rec) = manifest.stage(stage) {
        print_stage(rec);
    }
    Ok(ExitCode::SUCCESS)
}

fn pipeline(common: &Common) -> Result<ExitCode> {
    let cfg = common.load()?;
    let manifest: RunManifest = run_pipeline_in(&cfg, &cfg.output_dir)?;
    for rec in &manifest.stages {
        print_stage(rec);
    }
    println!(
        "manifest: {}",
        cfg.output_dir.join(carsrecon::pipeline::MANIFEST).display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Eigs(c) => stage(&c, Stage::Eigs),
        Command::Synth(c) => stage(&c, Stage::Synth),
        Command::Invert(c) => stage(&c, Stage::Invert),
        Command::Signs(c) => stage(&c, Stage::Signs),
        Command::Potential(c) => stage(&c, Stage::Potential),
        Command::Pipeline(c) => pipeline(&c),
        Command::Validate { common, json } => {
            let cfg = common.load()?;
            let dir = cfg.output_dir.exists().then_some(cfg.output_dir.as_path());
            let report = validate(&cfg, dir);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                println!("{report}");
            }
            Ok(if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
