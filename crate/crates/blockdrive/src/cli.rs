//! Command line: `gen`, `render`, `run`, `eval` and `bench`.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use blockdrive_core::blocks::BlockType;
use blockdrive_core::env::{Env, EnvConfig, MapSource};
use blockdrive_core::eval::{completed, compute_metrics, run_episode_with, SeedSplit};
use blockdrive_core::pgmap::{generate_map, MapConfig, RoadNetwork};
use blockdrive_core::traffic::TrafficConfig;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::mapfile;
use crate::report::Report;
use crate::runner::{self, PolicyKind};
use crate::svg::export_svg;
use crate::trace::{TraceHeader, TraceStep, TraceWriter};

#[derive(Debug, Parser)]
#[command(
    name = "blockdrive",
    version,
    about = "Procedural road maps and a headless driving environment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one map file per seed.
    Gen(GenArgs),
    /// Export a map as SVG.
    Render(RenderArgs),
    /// Run one episode and print its outcome.
    Run(RunArgs),
    /// Run one episode per seed and report metrics.
    Eval(EvalArgs),
    /// Measure environment steps per second.
    Bench(BenchArgs),
}

/// Inclusive seed range written `A..B`, or a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn seeds(self) -> Vec<u64> {
        (self.first..=self.last).collect()
    }
}

pub fn parse_seed_range(s: &str) -> std::result::Result<SeedRange, String> {
    let num = |t: &str| {
        t.trim()
            .parse::<u64>()
            .map_err(|_| format!("not a seed: {t:?}"))
    };
    let (first, last) = match s.split_once("..") {
        Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = num(s)?;
            (n, n)
        }
    };
    if first > last {
        return Err(format!("empty seed range {s:?}"));
    }
    Ok(SeedRange { first, last })
}

fn parse_density(s: &str) -> std::result::Result<f64, String> {
    let d: f64 = s.parse().map_err(|_| format!("not a number: {s:?}"))?;
    if (0.0..=1.0).contains(&d) {
        Ok(d)
    } else {
        Err("density must be in [0, 1]".to_string())
    }
}

fn parse_block_type(s: &str) -> std::result::Result<BlockType, String> {
    BlockType::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = BlockType::ALL.iter().map(|t| t.name()).collect();
        format!(
            "unknown block type {s:?}; expected one of {}",
            names.join(", ")
        )
    })
}

/// Map generation flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct MapArgs {
    /// Blocks per map.
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    /// Tries per block before backtracking.
    #[arg(long, default_value_t = 40)]
    pub tries: usize,
    /// Lanes of the first block.
    #[arg(long, default_value_t = 3)]
    pub lanes: u8,
    /// Lane width in meters.
    #[arg(long, default_value_t = 3.5)]
    pub lane_width: f64,
    /// Comma separated block types to draw from (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_block_type)]
    pub block_types: Vec<BlockType>,
}

impl MapArgs {
    pub fn config(&self) -> MapConfig {
        let mut cfg = MapConfig {
            blocks: self.blocks,
            tries: self.tries,
            lanes: self.lanes,
            lane_width: self.lane_width,
            ..MapConfig::default()
        };
        if !self.block_types.is_empty() {
            cfg.block_types = self.block_types.clone();
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Seeds to generate, `A..B` inclusive.
    #[arg(long, value_parser = parse_seed_range)]
    pub seeds: SeedRange,
    #[command(flatten)]
    pub map: MapArgs,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Seed of the map to render.
    #[arg(
        long,
        conflicts_with = "map_file",
        required_unless_present = "map_file"
    )]
    pub map_seed: Option<u64>,
    /// Map file to render instead of a seed.
    #[arg(long)]
    pub map_file: Option<PathBuf>,
    #[command(flatten)]
    pub map: MapArgs,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
}

/// Episode flags shared by `run` and `eval`.
#[derive(Debug, Clone, Args)]
pub struct EpisodeArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::LaneFollow)]
    pub policy: PolicyKind,
    /// Traffic vehicles per lane per 10 m.
    #[arg(long, default_value_t = 0.1, value_parser = parse_density)]
    pub density: f64,
    #[arg(long, default_value_t = 1500)]
    pub max_steps: usize,
    /// Crashes cost 1 per step instead of ending the episode.
    #[arg(long)]
    pub safety: bool,
    #[command(flatten)]
    pub map: MapArgs,
}

impl EpisodeArgs {
    pub fn config(&self) -> EnvConfig {
        EnvConfig {
            map: self.map.config(),
            traffic: TrafficConfig::with_density(self.density),
            max_steps: self.max_steps,
            safety_mode: self.safety,
            ..EnvConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Episode seed; also picks the map unless a map file is given.
    #[arg(long, default_value_t = 0)]
    pub map_seed: u64,
    /// Drive on this map file instead of the generated one.
    #[arg(long)]
    pub map_file: Option<PathBuf>,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Write a step trace here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write the map as SVG here.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Seeds to run, `A..B` inclusive. Defaults to the test split.
    #[arg(long, value_parser = parse_seed_range, conflicts_with = "train_n")]
    pub seeds: Option<SeedRange>,
    /// Run the first N training seeds instead of the test split.
    #[arg(long)]
    pub train_n: Option<u64>,
    #[command(flatten)]
    pub episode: EpisodeArgs,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Environment steps to time, at least 1000.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1000..))]
    pub steps: u64,
    #[arg(long, default_value_t = 0.1, value_parser = parse_density)]
    pub density: f64,
    /// Seed of the benchmark map.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub map: MapArgs,
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn check_map(cfg: &MapConfig) -> Result<()> {
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let stdout = |e| CliError::io("stdout", e);
    match cli.command {
        Command::Gen(a) => {
            let cfg = a.map.config();
            check_map(&cfg)?;
            fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
            let seeds = a.seeds.seeds();
            let results: Vec<Result<()>> = runner::pool(a.jobs)?.install(|| {
                seeds
                    .par_iter()
                    .map(|&seed| {
                        let net = generate_map(&cfg, seed)?;
                        mapfile::write_map(&a.out.join(mapfile::file_name(seed)), &net)
                    })
                    .collect()
            });
            let mut written = 0;
            let mut first_error = None;
            for (seed, r) in seeds.iter().zip(results) {
                match r {
                    Ok(()) => written += 1,
                    Err(e) => {
                        eprintln!("seed {seed}: {e}");
                        first_error.get_or_insert(e);
                    }
                }
            }
            writeln!(out, "wrote {written} maps to {}", a.out.display()).map_err(stdout)?;
            first_error.map_or(Ok(()), Err)
        }
        Command::Render(a) => {
            let net = match (&a.map_file, a.map_seed) {
                (Some(path), _) => mapfile::read_map(path)?,
                (None, Some(seed)) => {
                    let cfg = a.map.config();
                    check_map(&cfg)?;
                    generate_map(&cfg, seed)?
                }
                (None, None) => {
                    return Err(CliError::Usage("give --map-seed or --map-file".into()))
                }
            };
            write_file(&a.out, &export_svg(&net))
        }
        Command::Run(a) => {
            let mut cfg = a.episode.config();
            check_map(&cfg.map)?;
            if let Some(path) = &a.map_file {
                cfg.map_source = MapSource::Network(Box::new(mapfile::read_map(path)?));
            }
            let mut env = Env::new(cfg.clone())?;
            let mut policy = a.episode.policy.make();
            let header = TraceHeader {
                seed: a.map_seed,
                policy: a.episode.policy.name().to_string(),
                density: a.episode.density,
                blocks: cfg.map.blocks,
                max_steps: cfg.max_steps,
            };
            let mut trace = match &a.trace {
                Some(path) => {
                    create_parent(path)?;
                    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
                    Some(TraceWriter::new(BufWriter::new(file), &header)?)
                }
                None => None,
            };
            let mut trace_error = None;
            let record =
                run_episode_with(&mut env, policy.as_mut(), a.map_seed, |ep, action, r| {
                    if let Some(t) = trace.as_mut() {
                        if let Err(e) = t.step(&TraceStep::new(ep, action, r)) {
                            trace_error.get_or_insert(e);
                        }
                    }
                })?;
            if let Some(e) = trace_error {
                return Err(e);
            }
            if let Some(t) = trace {
                t.finish()?;
            }
            if let Some(path) = &a.svg {
                let net: &RoadNetwork = &env.episode().expect("episode ran").network;
                write_file(path, &export_svg(net))?;
            }
            writeln!(out, "terminal {}", record.terminal.name()).map_err(stdout)?;
            writeln!(out, "return {:.4}", record.episode_return).map_err(stdout)?;
            writeln!(out, "steps {}", record.steps).map_err(stdout)?;
            writeln!(out, "cost {}", record.cost).map_err(stdout)
        }
        Command::Eval(a) => {
            let cfg = a.episode.config();
            check_map(&cfg.map)?;
            let seeds: Vec<u64> = match (a.seeds, a.train_n) {
                (Some(r), _) => r.seeds(),
                (None, Some(n)) => SeedSplit::new(n).train().collect(),
                (None, None) => SeedSplit::new(0).test().collect(),
            };
            if seeds.is_empty() {
                return Err(CliError::Usage("no seeds to evaluate".into()));
            }
            let outcomes = runner::evaluate(a.episode.policy, &seeds, &cfg, a.jobs)?;
            let records = completed(&outcomes);
            let metrics = compute_metrics(&records).ok();
            let report = Report::new(a.episode.policy.name(), seeds, &outcomes, metrics, cfg);
            if let Some(path) = &a.report {
                write_file(path, &report.to_json()?)?;
            }
            write!(out, "{}", report.table()).map_err(stdout)
        }
        Command::Bench(a) => {
            let cfg = EnvConfig {
                map: a.map.config(),
                traffic: TrafficConfig::with_density(a.density),
                ..EnvConfig::default()
            };
            check_map(&cfg.map)?;
            let r = runner::bench(a.steps as usize, &cfg, a.seed)?;
            writeln!(out, "steps {}", r.steps).map_err(stdout)?;
            writeln!(out, "episodes {}", r.episodes).map_err(stdout)?;
            writeln!(out, "density {}", r.density).map_err(stdout)?;
            writeln!(out, "seconds {:.3}", r.step_seconds).map_err(stdout)?;
            writeln!(out, "steps_per_second {:.1}", r.steps_per_second).map_err(stdout)
        }
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with(args: impl IntoIterator<Item = String>) -> u8 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
