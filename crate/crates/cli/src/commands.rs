//! `sexit` command line.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use sexit_core::graph::{forced_4cycles, GirthPolicy};
use sexit_core::{gain_at_ber, BerTable, ChannelKind, HMode, RunControl, StopRule};

use crate::jobs::{
    self, AnalyticParams, BerParams, IndependentParams, JobParams, ProfileSource, SExitParams,
    ThresholdParams,
};
use crate::service;
use crate::workspace::Workspace;

#[derive(Debug, Parser)]
#[command(
    name = "sexit",
    version,
    about = "Finite-length LDPC degree-profile workbench"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the design rate of a profile.
    Rate(RateArgs),
    /// Sample a Tanner graph and export its parity-check matrix (alist).
    Construct(ConstructArgs),
    /// Sample the analytic EXIT curves.
    ExitCurves(ExitCurvesArgs),
    /// Decoding threshold from the analytic tunnel.
    Threshold(ThresholdArgs),
    /// Scattered EXIT chart over full decoding trajectories.
    Sexit(SExitArgs),
    /// Scattered EXIT chart of the isolated component decoders.
    SexitIndep(IndepArgs),
    /// Ensemble BER/FER simulation.
    Ber(BerArgs),
    /// Channel gain of one BER table over another at a target BER.
    Compare(CompareArgs),
    /// Run the local HTTP job service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ProfileArg {
    /// Profile JSON file, or the name of a built-in profile
    /// (code_a_orig, code_a_mod, code_b_orig, code_b_mod, code_c_orig,
    /// code_c_mod1, code_c_mod2, reg36, reg35).
    #[arg(long)]
    pub profile: String,
}

#[derive(Debug, Args)]
pub struct GirthArgs {
    /// 4-cycle removal budget, in swap proposals per edge.
    #[arg(long, default_value_t = GirthPolicy::default().budget_per_edge)]
    pub budget_per_edge: usize,
    /// Fail when a graph keeps 4-cycles instead of using it anyway.
    #[arg(long)]
    pub strict: bool,
}

impl GirthArgs {
    fn policy(&self) -> GirthPolicy {
        GirthPolicy {
            budget_per_edge: self.budget_per_edge,
            strict: self.strict,
        }
    }
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    /// Decimal places.
    #[arg(long, default_value_t = 3)]
    pub digits: usize,
}

#[derive(Debug, Args)]
pub struct ConstructArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    /// Block length.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Swap proposals per edge.
    #[arg(long, default_value_t = sexit_core::graph::SWAP_BUDGET_PER_EDGE)]
    pub budget_per_edge: usize,
    /// Fail unless the graph is free of 4-cycles.
    #[arg(long)]
    pub strict: bool,
    /// alist output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ChannelArgs {
    /// `bec:<erasure probability>` or `awgn:<Eb/N0 in dB>`.
    #[arg(long)]
    pub channel: String,
    /// Code rate for the Eb/N0 mapping; defaults to the design rate.
    #[arg(long)]
    pub rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ExitCurvesArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Samples per curve.
    #[arg(long, default_value_t = jobs::DEFAULT_CURVE_POINTS)]
    pub points: usize,
    /// Write the curve set as JSON (the service's format).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    /// `bec` or `awgn`.
    #[arg(long)]
    pub channel: ChannelKind,
    /// Write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SExitArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// Number of trajectories.
    #[arg(long = "m", alias = "trajectories", default_value_t = sexit_core::sexit::DEFAULT_TRAJECTORIES)]
    pub trajectories: usize,
    #[arg(long, default_value_t = sexit_core::decoder::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Histogram bins per axis.
    #[arg(long, default_value_t = sexit_core::sexit::DEFAULT_GRID)]
    pub grid: usize,
    /// Decode every trajectory on one graph instead of a fresh one.
    #[arg(long)]
    pub fixed_graph: bool,
    #[command(flatten)]
    pub girth: GirthArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores). Does not change results.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IndepArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub channel: ChannelArgs,
    /// A-priori points spread evenly over [0, 1].
    #[arg(long, default_value_t = jobs::DEFAULT_APRIORI_POINTS)]
    pub apriori_points: usize,
    #[arg(long, default_value_t = jobs::DEFAULT_SAMPLES_PER_POINT)]
    pub samples: usize,
    #[arg(long, default_value_t = sexit_core::sexit::DEFAULT_GRID)]
    pub grid: usize,
    #[command(flatten)]
    pub girth: GirthArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BerArgs {
    #[command(flatten)]
    pub profile: ProfileArg,
    #[arg(long)]
    pub n: usize,
    /// `bec` or `awgn`.
    #[arg(long)]
    pub channel: ChannelKind,
    /// Channel points: `start:stop:step` (inclusive) or a comma list.
    #[arg(long)]
    pub points: String,
    /// Code rate for the Eb/N0 mapping; defaults to the design rate.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = StopRule::default().min_bit_errors)]
    pub min_errors: u64,
    #[arg(long, default_value_t = StopRule::default().max_frames)]
    pub max_frames: u64,
    /// Frames per parity-check matrix.
    #[arg(long, default_value_t = 1)]
    pub h_refresh: u64,
    #[arg(long, default_value_t = sexit_core::decoder::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Frames between stop-rule checks.
    #[arg(long, default_value_t = 64)]
    pub batch: u64,
    #[command(flatten)]
    pub girth: GirthArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// CSV output file; stdout if absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference BER table (CSV).
    #[arg(long)]
    pub a: PathBuf,
    /// Candidate BER table (CSV).
    #[arg(long)]
    pub b: PathBuf,
    /// Channel of both tables, `bec` or `awgn`.
    #[arg(long)]
    pub channel: ChannelKind,
    #[arg(long, default_value_t = 1e-4)]
    pub target: f64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8077")]
    pub bind: SocketAddr,
    /// Workspace root; defaults to $SEXIT_WORKSPACE, then ./sexit-workspace.
    #[arg(long)]
    pub workspace: Option<PathBuf>,
    /// Jobs running at the same time (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Parses `a:b:step` (inclusive) or `a,b,c`.
pub fn parse_points(text: &str) -> anyhow::Result<Vec<f64>> {
    let num = |s: &str| -> anyhow::Result<f64> {
        s.trim()
            .parse()
            .with_context(|| format!("bad number '{s}'"))
    };
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if step.is_nan() || step <= 0.0 || stop < start {
                bail!("range '{text}' needs start <= stop and step > 0");
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // round away accumulated binary noise so 0.1 steps print cleanly
            Ok((0..count)
                .map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12)
                .collect())
        }
        [_] => text.split(',').map(num).collect(),
        _ => bail!("points must be 'start:stop:step' or a comma list"),
    }
}

fn profile_source(arg: &ProfileArg) -> anyhow::Result<ProfileSource> {
    Ok(ProfileSource::Inline(jobs::load_profile(&arg.profile)?))
}

/// Prepares and runs one job the way the service does.
fn run_job(params: JobParams, workers: usize) -> anyhow::Result<jobs::Artifacts> {
    let params = params.prepare(&jobs::fixture_lookup)?;
    let control = RunControl::new();
    Ok(sexit_core::seed::with_workers(workers, || {
        jobs::execute(&params, &control)
    })?)
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

/// Executes a parsed command, writing the report to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    match cli.command {
        Command::Rate(a) => {
            let profile = jobs::load_profile(&a.profile.profile)?;
            writeln!(out, "{:.*}", a.digits, profile.design_rate())?;
        }
        Command::Construct(a) => {
            let profile = jobs::load_profile(&a.profile.profile)?;
            let spec = profile.quantize(a.n)?;
            let budget = a.budget_per_edge * spec.edges;
            let forced = forced_4cycles(&spec);
            let outcome = if a.strict {
                let graph = sexit_core::graph::sample_graph_with_budget(&spec, a.seed, budget)?;
                sexit_core::graph::Girth4Outcome { graph, residual: 0 }
            } else {
                sexit_core::graph::sample_graph_best_effort(&spec, a.seed, budget)?
            };
            let alist = outcome.graph.to_alist();
            match &a.out {
                Some(path) => write_file(path, alist.as_bytes())?,
                None => out.write_all(alist.as_bytes())?,
            }
            let mut err = std::io::stderr();
            writeln!(
                err,
                "N {} M {} edges {} rate {:.5} 4-cycles {} (forced at least {forced})",
                spec.n,
                spec.num_checks(),
                spec.edges,
                spec.realized_rate(),
                outcome.residual
            )?;
            if outcome.residual > 0 {
                writeln!(err, "warning: graph keeps {} 4-cycles", outcome.residual)?;
            }
        }
        Command::ExitCurves(a) => {
            let art = run_job(
                JobParams::Analytic(AnalyticParams {
                    profile: profile_source(&a.profile)?,
                    channel: a.channel.channel,
                    rate: a.channel.rate,
                    points: a.points,
                }),
                0,
            )?;
            if let Some(path) = &a.out {
                write_file(path, art.primary_bytes())?;
            }
            out.write_all(art.summary.as_bytes())?;
        }
        Command::Threshold(a) => {
            let art = run_job(
                JobParams::Threshold(ThresholdParams {
                    profile: profile_source(&a.profile)?,
                    channel: a.channel,
                }),
                0,
            )?;
            if let Some(path) = &a.out {
                write_file(path, art.primary_bytes())?;
            }
            out.write_all(art.summary.as_bytes())?;
        }
        Command::Sexit(a) => {
            let art = run_job(
                JobParams::Sexit(SExitParams {
                    profile: profile_source(&a.profile)?,
                    n: a.n,
                    channel: a.channel.channel,
                    rate: a.channel.rate,
                    trajectories: a.trajectories,
                    max_iter: a.max_iter,
                    grid: a.grid,
                    h_mode: if a.fixed_graph {
                        HMode::FixedGraph
                    } else {
                        HMode::ResamplePerTrajectory
                    },
                    girth: a.girth.policy(),
                    seed: a.seed,
                }),
                a.workers,
            )?;
            art.write_dir(&a.out)?;
            out.write_all(art.summary.as_bytes())?;
            writeln!(out, "wrote {}", a.out.display())?;
        }
        Command::SexitIndep(a) => {
            let art = run_job(
                JobParams::SexitIndependent(IndependentParams {
                    profile: profile_source(&a.profile)?,
                    n: a.n,
                    channel: a.channel.channel,
                    rate: a.channel.rate,
                    apriori: sexit_core::sexit::IndependentConfig::uniform_apriori(
                        a.apriori_points,
                    ),
                    samples_per_point: a.samples,
                    grid: a.grid,
                    girth: a.girth.policy(),
                    seed: a.seed,
                }),
                a.workers,
            )?;
            art.write_dir(&a.out)?;
            out.write_all(art.summary.as_bytes())?;
            writeln!(out, "wrote {}", a.out.display())?;
        }
        Command::Ber(a) => {
            let art = run_job(
                JobParams::Ber(BerParams {
                    profile: profile_source(&a.profile)?,
                    n: a.n,
                    channel: a.channel,
                    points: parse_points(&a.points)?,
                    rate: a.rate,
                    stop: StopRule {
                        min_bit_errors: a.min_errors,
                        max_frames: a.max_frames,
                    },
                    h_refresh: a.h_refresh,
                    max_iter: a.max_iter,
                    batch: a.batch,
                    girth: a.girth.policy(),
                    seed: a.seed,
                }),
                a.workers,
            )?;
            if let Some(path) = &a.out {
                write_file(path, art.primary_bytes())?;
            }
            out.write_all(art.summary.as_bytes())?;
        }
        Command::Compare(a) => {
            let read = |p: &PathBuf| -> anyhow::Result<BerTable> {
                let text =
                    fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(BerTable::from_csv(a.channel, &text)?)
            };
            let (ta, tb) = (read(&a.a)?, read(&a.b)?);
            let gain = gain_at_ber(&ta, &tb, a.target)?;
            let unit = match a.channel {
                ChannelKind::Awgn => " dB",
                ChannelKind::Bec => "",
            };
            writeln!(out, "gain at BER {:e}: {gain:.4}{unit}", a.target)?;
        }
        Command::Serve(a) => {
            let workspace = match a.workspace {
                Some(root) => Workspace::open(root)?,
                None => Workspace::from_env()?,
            };
            let max_jobs = a.jobs.unwrap_or_else(service::default_max_jobs);
            tokio::runtime::Runtime::new()?
                .block_on(service::serve(a.bind, workspace, max_jobs))?;
        }
    }
    Ok(())
}
