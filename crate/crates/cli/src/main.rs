use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use curflow::decomp::Strategy;
use curflow::families::CombMode;
use curflow::io::{self, CurrentFile, DecompositionFile, Family, GeneratorSpec, InputFile, RunOptions, RunReport};
use curflow::study;

/// Decompose polyhedral 1-currents into curves and cycles.
#[derive(Parser)]
#[command(name = "curflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generator spec, or a truncated current with --truncate.
    Gen {
        /// ray, line, chain, random-local, comb, random-flow, random-dag or grid-flow.
        family: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        dim: Option<usize>,
        /// Comb: number of U-shaped curves.
        #[arg(long)]
        teeth: Option<usize>,
        /// Comb: tooth height.
        #[arg(long)]
        height: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Lattice families: edge budget.
        #[arg(long)]
        edges: Option<usize>,
        /// Emit `T ⌞ B̄_R` as a current file instead of the spec.
        #[arg(long, value_name = "R")]
        truncate: Option<f64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Decompose a current file or generator spec and check all identities.
    Decompose {
        input: PathBuf,
        /// Truncation radius (default 8 for generator specs; current files
        /// are decomposed whole unless given).
        #[arg(long)]
        rmax: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[arg(long, default_value = "dfs")]
        strategy: Strategy,
        /// Rational arithmetic (also enabled by CURFLOW_EXACT=1).
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        n_anchors: Option<usize>,
        /// Constant added to the majorant of the mass growth.
        #[arg(long, default_value_t = 0.0)]
        shift: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Recheck a decomposition file against its input.
    Verify {
        input: PathBuf,
        decomposition: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Boundary mass at infinity of the comb, intrinsic against embedded.
    CombStudy {
        /// Inclusive range `a-b` of curve counts.
        #[arg(long, default_value = "1-10")]
        teeth_range: String,
        #[arg(long, value_enum, default_value_t = StudyMode::Both)]
        mode: StudyMode,
        #[arg(long, default_value_t = 24.0)]
        rmax: f64,
        #[arg(long, default_value_t = io::DEFAULT_HEIGHT)]
        height: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// CSV tables from a decomposition file.
    PlotData {
        decomposition: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long, default_value_t = 0.5)]
        step: f64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Intrinsic,
    Embed,
}

impl From<ModeArg> for CombMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Intrinsic => CombMode::Intrinsic,
            ModeArg::Embed => CombMode::Embed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StudyMode {
    Intrinsic,
    Embed,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    MassProfile,
    GProfile,
    BoundaryLedger,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Identities(Vec<String>),
    Input(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Input(e)
    }
}

impl From<curflow::Error> for Failure {
    fn from(e: curflow::Error) -> Self {
        Failure::Input(e.into())
    }
}

fn emit(output: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn csv_text<T: Serialize>(rows: &[T]) -> anyhow::Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn exact_from_env() -> bool {
    std::env::var("CURFLOW_EXACT").is_ok_and(|v| v == "1")
}

fn parse_range(s: &str) -> anyhow::Result<std::ops::RangeInclusive<usize>> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
    if a == 0 || a > b {
        bail!("teeth range `{s}` must be `a-b` with 1 <= a <= b");
    }
    Ok(a..=b)
}

fn check(report: &RunReport) -> Result<(), Failure> {
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Identities(report.failing.clone()))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen { family, seed, dim, teeth, height, mode, edges, truncate, output } => {
            let family: Family = family.parse()?;
            let mut spec = GeneratorSpec::new(family, seed);
            spec.params.dim = dim;
            spec.params.teeth = teeth;
            spec.params.height = height;
            spec.params.mode = mode.map(CombMode::from);
            spec.params.edges = edges;
            let generator = spec.build()?;
            let text = match truncate {
                Some(r) => io::to_json(&CurrentFile::from_current(&generator.current_within(r)?)?)?,
                None => io::to_json(&spec)?,
            };
            emit(output.as_deref(), &text)?;
        }
        Command::Decompose { input, rmax, margin, strategy, exact, n_anchors, shift, output } => {
            let input = InputFile::parse(&read(&input)?)?;
            let opts = RunOptions { r_max: rmax, margin, strategy, exact: exact || exact_from_env(), n_anchors, shift };
            let file = io::decompose(&input, &opts)?;
            emit(output.as_deref(), &io::to_json(&file)?)?;
            eprintln!(
                "{} cycles, {} paths, {} rays; {}",
                file.cycles.len(),
                file.paths.len(),
                file.rays.len(),
                if file.report.pass { "all identities pass" } else { "FAILED" }
            );
            check(&file.report)?;
        }
        Command::Verify { input, decomposition, output } => {
            let input = InputFile::parse(&read(&input)?)?;
            let file: DecompositionFile = serde_json::from_str(&read(&decomposition)?).context("parsing decomposition")?;
            let report = io::verify(&input, &file)?;
            emit(output.as_deref(), &io::to_json(&report)?)?;
            check(&report)?;
        }
        Command::CombStudy { teeth_range, mode, rmax, height, output } => {
            if rmax.fract() != 0.0 {
                return Err(anyhow!("--rmax must be an integer so the comb cut avoids its vertices").into());
            }
            let modes: &[CombMode] = match mode {
                StudyMode::Intrinsic => &[CombMode::Intrinsic],
                StudyMode::Embed => &[CombMode::Embed],
                StudyMode::Both => &[CombMode::Intrinsic, CombMode::Embed],
            };
            let rows = study::comb_study(parse_range(&teeth_range)?, modes, height, rmax)?;
            emit(output.as_deref(), &csv_text(&rows)?)?;
        }
        Command::PlotData { decomposition, what, step, output } => {
            let file: DecompositionFile = serde_json::from_str(&read(&decomposition)?).context("parsing decomposition")?;
            let text = match what {
                What::MassProfile => csv_text(&study::mass_profile(&file, step)?)?,
                What::GProfile => csv_text(&study::g_profile(&file, step)?)?,
                What::BoundaryLedger => csv_text(&study::boundary_ledger(&file)?)?,
            };
            emit(output.as_deref(), &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Identities(names)) => {
            eprintln!("identity check failed: {}", names.join(", "));
            ExitCode::from(2)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
