//! Command-line front end: `fit`, `solve`, `simulate` and `evaluate`.
//!
//! Numeric outputs are comma-separated tables whose leading `#` lines hold
//! the run configuration.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{absolute_path, FitDiagnostics, ModelParams, ModelSource, RunConfig, SchemeKind};
use crate::dynamics::{simulate, SppModel};
use crate::error::{io_at, Error, Result};
use crate::geometry::State;
use crate::ingestion::{fit_model, load_track, Track};
use crate::scheme::{assemble, run_episode, transmit_always, transmit_never, EpisodeReport, SchemeTable};
use crate::solver::{solve_chain, strict_nondegeneracy_report, ChainSolution};

#[derive(Debug, Parser)]
#[command(
    name = "spp-remote",
    version,
    about = "Transmission and estimation schemes for remote SPP tracking"
)]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the noise model to a GPS track and write model.toml.
    Fit {
        /// Track CSV; defaults to the configured model track.
        #[arg(long)]
        track: Option<PathBuf>,
    },
    /// Solve the transmission/estimation scheme and write scheme.bin.
    Solve,
    /// Write simulated trajectories.
    Simulate,
    /// Run a scheme over simulated episodes or a track.
    Evaluate {
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long)]
        track: Option<PathBuf>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum KindArg {
    Solved,
    TransmitAlways,
    TransmitNever,
}

impl From<KindArg> for SchemeKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Solved => SchemeKind::Solved,
            KindArg::TransmitAlways => SchemeKind::TransmitAlways,
            KindArg::TransmitNever => SchemeKind::TransmitNever,
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::Parse { .. } | Error::Validation(_) | Error::Config(_) | Error::Format(_) => 2,
        Error::Degenerate { .. } => 3,
        Error::NotConverged(_) | Error::UnboundedEstimate { .. } => 4,
        Error::HorizonMismatch(_) => 5,
        _ => 1,
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let explicit_config = cli.config.is_some();
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Command::Evaluate { scheme, track, kind } = &cli.command {
        if let Some(s) = scheme {
            cfg.evaluate.scheme = Some(s.clone());
        }
        if let Some(t) = track {
            cfg.evaluate.track = Some(t.clone());
        }
        if let Some(k) = kind {
            cfg.evaluate.kind = (*k).into();
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    cfg.absolutize_paths();
    configure_threads(cfg.threads);
    match cli.command {
        Command::Fit { track } => cmd_fit(cfg, track),
        Command::Solve => cmd_solve(cfg.resolved()?),
        Command::Simulate => cmd_simulate(cfg.resolved()?),
        Command::Evaluate { .. } => cmd_evaluate(cfg, explicit_config, cli.seed),
    }
}

fn configure_threads(threads: usize) {
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        warn!("thread pool already configured: {e}");
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).map_err(|e| io_at(dir, e))?;
    let path = dir.join(name);
    Ok(BufWriter::new(File::create(&path).map_err(|e| io_at(&path, e))?))
}

/// Writes a table preceded by the embedded configuration as `#` lines.
fn write_table(dir: &Path, name: &str, provenance: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<PathBuf> {
    let mut file = create(dir, name)?;
    for line in provenance.lines() {
        writeln!(file, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(dir.join(name))
}

fn num(v: f64) -> String {
    format!("{v}")
}

pub fn cmd_fit(mut cfg: RunConfig, track: Option<PathBuf>) -> Result<()> {
    // A model file from an earlier fit names the track it came from.
    let path = match (track, &cfg.model, &cfg.fit) {
        (Some(p), _, _) => absolute_path(&p),
        (None, ModelSource::Track { track }, _) => track.clone(),
        (None, ModelSource::Params(_), Some(previous)) => previous.track.clone(),
        (None, ModelSource::Params(_), None) => {
            return Err(Error::Config("fit needs --track or a model track in the config".into()));
        }
    };
    let fit = fit_model(&load_track(&path)?)?;
    cfg.model = ModelSource::Params(ModelParams::from_model(&fit.model));
    cfg.fit = Some(FitDiagnostics {
        track: path,
        points: fit.points,
        speed_samples: fit.speed.used,
        dropped_zero_speeds: fit.speed.dropped_zeros,
        turn_samples: fit.turn_samples,
        carried_headings: fit.carried_headings,
        speed_log_likelihood: fit.speed.log_likelihood,
        turn_log_likelihood: fit.turn.log_likelihood,
        turn_concentration_clamped: fit.turn.clamped,
    });
    let cfg = cfg.resolved()?;
    let mut file = create(&cfg.out, "model.toml")?;
    file.write_all(cfg.provenance().as_bytes())?;
    file.flush()?;
    let m = fit.model;
    println!(
        "speed weibull shape {:.6} scale {:.6}; turn wrapped cauchy concentration {:.6} location {:.6}",
        m.speed.shape(),
        m.speed.scale(),
        m.turn.concentration(),
        m.turn.location()
    );
    info!("wrote {}", cfg.out.join("model.toml").display());
    Ok(())
}

pub fn cmd_solve(cfg: RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let costs = cfg.cost_vector()?;
    let chain = solve_chain(&model, &costs, &cfg.solver)?;
    let report = strict_nondegeneracy_report(&chain, cfg.solver.eps_strict);
    let table = assemble(&chain, &model)?;
    let provenance = cfg.provenance();
    let mut file = create(&cfg.out, "scheme.bin")?;
    table.write_to(&mut file, &provenance)?;
    write_convergence(&cfg.out, &provenance, &chain)?;
    write_table(
        &cfg.out,
        "cprime.csv",
        &provenance,
        &[
            "stage",
            "cost",
            "c_prime",
            "achieved_cost",
            "iterations",
            "converged",
            "min_survival",
        ],
        chain
            .subproblems
            .iter()
            .map(|s| {
                vec![
                    s.k.to_string(),
                    num(chain.costs[s.k - 1]),
                    num(chain.c_prime[s.k - 1]),
                    num(s.achieved_cost),
                    s.iterations.to_string(),
                    s.converged.to_string(),
                    num(s.min_survival()),
                ]
            })
            .collect(),
    )?;
    println!(
        "solved horizon {}: expected cost {:.6}, minimum silence probability {:.3e}",
        chain.horizon(),
        chain.subproblems[0].achieved_cost,
        report.minimum
    );
    if !chain.converged() {
        let stuck: Vec<String> = chain
            .subproblems
            .iter()
            .filter(|s| !s.converged)
            .map(|s| s.k.to_string())
            .collect();
        return Err(Error::NotConverged(format!(
            "sub-problems {} hit the iteration limit",
            stuck.join(", ")
        )));
    }
    Ok(())
}

fn write_convergence(dir: &Path, provenance: &str, chain: &ChainSolution) -> Result<PathBuf> {
    let mut rows = Vec::new();
    for s in &chain.subproblems {
        for (pass, hist) in s.history.iter().enumerate() {
            for (it, g) in hist.iter().enumerate() {
                rows.push(vec![s.k.to_string(), pass.to_string(), it.to_string(), num(*g)]);
            }
        }
    }
    write_table(
        dir,
        "convergence.csv",
        provenance,
        &["sub_problem", "pass", "iteration", "g"],
        rows,
    )
}

/// Seeds of simulated episodes, drawn from a stream no solver draw uses.
pub fn episode_seeds(seed: u64, episodes: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    (0..episodes).map(|_| rng.next_u64()).collect()
}

fn simulate_batch(model: &SppModel, x0: State, horizon: usize, seeds: &[u64]) -> Result<Vec<Vec<State>>> {
    seeds.par_iter().map(|s| simulate(model, x0, horizon, *s)).collect()
}

pub fn cmd_simulate(cfg: RunConfig) -> Result<()> {
    let model = cfg.model()?;
    let seeds = episode_seeds(cfg.seed, cfg.simulate.episodes);
    let paths = simulate_batch(&model, cfg.x0(), cfg.horizon, &seeds)?;
    let mut rows = Vec::with_capacity(paths.len() * (cfg.horizon + 1));
    for (e, (path, seed)) in paths.iter().zip(&seeds).enumerate() {
        for (k, x) in path.iter().enumerate() {
            rows.push(vec![
                e.to_string(),
                seed.to_string(),
                k.to_string(),
                num(x.p1),
                num(x.p2),
                num(x.theta()),
            ]);
        }
    }
    let path = write_table(
        &cfg.out,
        "trajectories.csv",
        &cfg.provenance(),
        &["episode", "seed", "k", "p1", "p2", "theta"],
        rows,
    )?;
    info!("wrote {}", path.display());
    Ok(())
}

/// Poses of a track: each point takes the bearing of the step that reached
/// it, and the first point takes the bearing of the first step.
pub fn track_states(track: &Track) -> Vec<State> {
    let headings = track.headings();
    track
        .positions()
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let theta = if headings.is_empty() {
                0.0
            } else {
                headings[i.saturating_sub(1)]
            };
            State::new(a, b, theta)
        })
        .collect()
}

pub fn cmd_evaluate(mut cfg: RunConfig, explicit_config: bool, seed_override: Option<u64>) -> Result<()> {
    let solved = match cfg.evaluate.kind {
        SchemeKind::Solved => {
            let path = absolute_path(&cfg.scheme_path());
            cfg.evaluate.scheme = Some(path.clone());
            let (table, embedded) =
                SchemeTable::read_from(BufReader::new(File::open(&path).map_err(|e| io_at(&path, e))?))?;
            if !explicit_config {
                // Evaluate under the configuration the scheme was solved with.
                let mut from_scheme = RunConfig::from_toml(&embedded)?;
                from_scheme.evaluate = cfg.evaluate.clone();
                from_scheme.evaluate.scheme = Some(path);
                from_scheme.out = cfg.out.clone();
                from_scheme.threads = cfg.threads;
                if let Some(s) = seed_override {
                    from_scheme.seed = s;
                }
                cfg = from_scheme;
            }
            Some(table)
        }
        _ => None,
    };
    let cfg = cfg.resolved()?;
    let table = match (solved, cfg.evaluate.kind) {
        (Some(t), _) => t,
        (None, SchemeKind::TransmitAlways) => transmit_always(&cfg.model()?, &cfg.cost_vector()?)?,
        (None, _) => transmit_never(&cfg.model()?, &cfg.cost_vector()?, &cfg.solver)?,
    };
    if table.horizon() != cfg.horizon {
        return Err(Error::HorizonMismatch(format!(
            "scheme horizon {} but configured horizon {}",
            table.horizon(),
            cfg.horizon
        )));
    }
    let (paths, seeds): (Vec<Vec<State>>, Vec<Option<u64>>) = match &cfg.evaluate.track {
        Some(t) => {
            let states = track_states(&load_track(t)?);
            if states.len() != table.horizon() + 1 {
                return Err(Error::HorizonMismatch(format!(
                    "track has {} points but the scheme needs {}",
                    states.len(),
                    table.horizon() + 1
                )));
            }
            (vec![states], vec![None])
        }
        None => {
            let seeds = episode_seeds(cfg.seed, cfg.simulate.episodes);
            (
                simulate_batch(table.model(), cfg.x0(), table.horizon(), &seeds)?,
                seeds.into_iter().map(Some).collect(),
            )
        }
    };
    let reports: Vec<EpisodeReport> = paths
        .par_iter()
        .map(|p| run_episode(&table, p))
        .collect::<Result<_>>()?;
    write_reports(&cfg, &paths, &seeds, &reports)?;
    let n = reports.len() as f64;
    let mean = |f: fn(&EpisodeReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    println!(
        "{} episodes: mean realized cost {:.6}, mean transmissions {:.3}, mean squared error {:.6}",
        reports.len(),
        mean(|r| r.realized_cost),
        mean(|r| r.transmissions as f64),
        mean(|r| r.squared_error)
    );
    Ok(())
}

fn write_reports(
    cfg: &RunConfig,
    paths: &[Vec<State>],
    seeds: &[Option<u64>],
    reports: &[EpisodeReport],
) -> Result<()> {
    let provenance = cfg.provenance();
    let mut steps = Vec::new();
    for (e, (r, path)) in reports.iter().zip(paths).enumerate() {
        for k in 1..path.len() {
            let (x, est) = (&path[k], &r.estimates[k - 1]);
            steps.push(vec![
                e.to_string(),
                k.to_string(),
                num(r.distortion[k - 1]),
                u8::from(r.transmitted[k - 1]).to_string(),
                num(x.p1),
                num(x.p2),
                num(x.theta()),
                num(est.p1),
                num(est.p2),
                num(est.theta()),
            ]);
        }
    }
    write_table(
        &cfg.out,
        "steps.csv",
        &provenance,
        &[
            "episode",
            "k",
            "distortion",
            "transmitted",
            "p1",
            "p2",
            "theta",
            "est_p1",
            "est_p2",
            "est_theta",
        ],
        steps,
    )?;
    let n = cfg.horizon as f64;
    let summary = reports
        .iter()
        .zip(seeds)
        .enumerate()
        .map(|(e, (r, s))| {
            vec![
                e.to_string(),
                s.map_or_else(String::new, |s| s.to_string()),
                r.transmissions.to_string(),
                num(r.transmissions as f64 / n),
                num(r.squared_error),
                num(r.communication_cost),
                num(r.realized_cost),
            ]
        })
        .collect();
    write_table(
        &cfg.out,
        "summary.csv",
        &provenance,
        &[
            "episode",
            "seed",
            "transmissions",
            "transmit_fraction",
            "squared_error",
            "communication_cost",
            "realized_cost",
        ],
        summary,
    )?;
    Ok(())
}
