//! Implementations behind the `dacoop` subcommands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dacoop_core::apf::ApfParams;
use dacoop_core::baselines::{grid_search_best_init, load_controller, GridSearchResult, VanillaAdapter};
use dacoop_core::checkpoint::Checkpoint;
use dacoop_core::env::{PursuitEnv, ScenarioParams};
use dacoop_core::geometry::Arena;
use dacoop_core::svg;
use dacoop_core::trajectory::Trajectory;
use dacoop_core::trainer::{
    eval_episode_seed, evaluate, run_episode, train, ActionAdapter, ActionGrid, DacoopAdapter, EpisodeMetrics,
    Method, TrainEvent,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{resolve_arena, LoadedConfig, RunConfig};
use crate::error::CliError;

/// Training success is smoothed over this many episodes.
pub const ROLLING_WINDOW: usize = 100;
/// Greedy episodes used to score every method at the end of `compare`.
pub const FINAL_EVAL_EPISODES: usize = 200;

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Config(format!("cannot create {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

/// Trailing-window mean of the per-episode success flags.
pub fn rolling_success(metrics: &[EpisodeMetrics], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(metrics.len());
    let mut hits = 0usize;
    for (k, m) in metrics.iter().enumerate() {
        hits += usize::from(m.success);
        if k >= window {
            hits -= usize::from(metrics[k - window].success);
        }
        out.push(hits as f64 / (k + 1).min(window) as f64);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub eta0: f64,
    pub lambda0: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub method: Method,
    pub seed: u64,
    pub episodes: usize,
    /// Best trailing-100 training success for learned methods, scored from
    /// the first full window on (a run shorter than one window is scored at
    /// its last episode); best candidate success for the modified APF.
    pub best_success_rate: f64,
    /// Last episode of the best window; `None` for the modified APF or an
    /// empty run.
    pub best_episode: Option<usize>,
    pub updates: u64,
    pub final_checkpoint: String,
    pub checkpoint_checksum: String,
}

pub struct TrainRun {
    pub summary: TrainSummary,
    pub metrics: Vec<EpisodeMetrics>,
    pub checkpoint: Checkpoint,
    pub grid: Option<GridSearchResult>,
}

pub fn build_env(arena: Arena, scenario: &ScenarioParams) -> Result<PursuitEnv, CliError> {
    PursuitEnv::new(arena, scenario.clone()).map_err(|e| CliError::Config(e.to_string()))
}

fn adapter_for(method: Method, apf: ApfParams) -> Box<dyn ActionAdapter> {
    match method {
        Method::VanillaD3qn => Box::new(VanillaAdapter::default()),
        _ => Box::new(DacoopAdapter::new(apf)),
    }
}

/// Runs one training job and writes its artifacts into `out`.
pub fn run_training(config: &RunConfig, arena: &Arena, out: &Path) -> Result<TrainRun, CliError> {
    create_dir(out)?;
    write_file(&out.join("config.resolved"), &config.to_toml())?;
    let env = build_env(arena.clone(), &config.scenario)?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics_file = BufWriter::new(File::create(&metrics_path)?);

    let (metrics, checkpoint, grid, updates, best) = match config.method {
        Method::ModifiedApf => {
            let candidates = ActionGrid::default().pairs;
            let grid = grid_search_best_init(&env, &candidates, &config.apf, config.train.apf_search_episodes, config.seed)?;
            for (&(eta0, lambda0), &success_rate) in candidates.iter().zip(&grid.success_rates) {
                let row = GridRow {
                    eta0,
                    lambda0,
                    success_rate,
                };
                writeln!(metrics_file, "{}", serde_json::to_string(&row).expect("row serializes"))?;
            }
            log::info!(
                "modified_apf: best initial pair (eta0 = {:e}, lambda0 = {}) at {:.3}",
                grid.best.eta0,
                grid.best.lambda0,
                grid.success_rates[grid.best_index]
            );
            let best = (grid.success_rates[grid.best_index], None);
            (Vec::new(), grid.best.to_checkpoint(), Some(grid), 0, best)
        }
        method => {
            let ckpt_dir = out.join("checkpoints");
            create_dir(&ckpt_dir)?;
            let adapter = adapter_for(method, config.apf);
            let mut io_error = None;
            let mut sink = |event: TrainEvent<'_>| -> dacoop_core::Result<()> {
                match event {
                    TrainEvent::Episode(m) => {
                        writeln!(metrics_file, "{}", serde_json::to_string(m).expect("metrics serialize"))?;
                        if (m.episode + 1) % 50 == 0 {
                            log::info!("{method} episode {}: steps {} eps {:.3}", m.episode + 1, m.steps, m.epsilon);
                        }
                    }
                    TrainEvent::Checkpoint { episode, checkpoint } => {
                        let path = ckpt_dir.join(format!("episode_{episode:06}.ckpt"));
                        if let Err(e) = checkpoint.save(&path) {
                            io_error = Some(format!("cannot write {}: {e}", path.display()));
                            return Err(e);
                        }
                    }
                }
                Ok(())
            };
            let output = train(&env, adapter.as_ref(), &config.train, config.seed, &mut sink);
            if let Some(msg) = io_error {
                return Err(CliError::Config(msg));
            }
            let output = output?;
            let rolling = rolling_success(&output.metrics, ROLLING_WINDOW);
            let first_full = ROLLING_WINDOW.min(rolling.len()).saturating_sub(1);
            let mut best = (0.0, None);
            for (k, &r) in rolling.iter().enumerate().skip(first_full) {
                if best.1.is_none() || r > best.0 {
                    best = (r, Some(k));
                }
            }
            let ck = Checkpoint::from_network(method.as_str(), &output.params);
            (output.metrics, ck, None, output.updates, best)
        }
    };
    metrics_file.flush()?;
    checkpoint.save(&out.join("final.ckpt"))?;
    let summary = TrainSummary {
        method: config.method,
        seed: config.seed,
        episodes: metrics.len(),
        best_success_rate: best.0,
        best_episode: best.1,
        updates,
        final_checkpoint: "final.ckpt".into(),
        checkpoint_checksum: format!("{:016x}", checkpoint.checksum()),
    };
    write_file(&out.join("summary.json"), &to_json(&summary))?;
    Ok(TrainRun {
        summary,
        metrics,
        checkpoint,
        grid,
    })
}

pub fn cmd_train(config_path: &Path) -> Result<TrainSummary, CliError> {
    let LoadedConfig {
        config,
        arena,
        output_dir,
    } = RunConfig::load(config_path)?;
    Ok(run_training(&config, &arena, &output_dir)?.summary)
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    /// Arena files or bundled names.
    pub arenas: Vec<String>,
    pub pursuers: Vec<usize>,
    pub episodes: usize,
    pub seed: u64,
    /// Run config whose `[scenario]` and `[apf]` sections apply.
    pub config: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Writes episode 0 of the first (arena, N) cell as a trajectory CSV.
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub arena: String,
    pub n_pursuers: usize,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    /// Success rates with one row per pursuer count and one column per arena.
    pub fn table(&self) -> String {
        let mut arenas: Vec<&str> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for r in &self.rows {
            if !arenas.contains(&r.arena.as_str()) {
                arenas.push(&r.arena);
            }
            if !counts.contains(&r.n_pursuers) {
                counts.push(r.n_pursuers);
            }
        }
        let mut out = format!("method {}\n{:>4}", self.method, "N");
        for a in &arenas {
            let _ = write!(out, " {a:>14}");
        }
        out.push('\n');
        for &n in &counts {
            let _ = write!(out, "{n:>4}");
            for a in &arenas {
                match self.rows.iter().find(|r| r.n_pursuers == n && r.arena == *a) {
                    Some(r) => {
                        let _ = write!(out, " {:>13.1}%", 100.0 * r.success_rate);
                    }
                    None => {
                        let _ = write!(out, " {:>14}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("arena,n_pursuers,episodes,successes,success_rate,mean_steps,mean_return\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.arena, r.n_pursuers, r.episodes, r.successes, r.success_rate, r.mean_steps, r.mean_return
            );
        }
        out
    }
}

/// Greedy evaluation of a checkpoint over every (arena, N) combination.
pub fn eval_checkpoint(
    checkpoint: &Checkpoint,
    arenas: &[(String, Arena)],
    pursuers: &[usize],
    scenario: &ScenarioParams,
    apf: ApfParams,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport, CliError> {
    if arenas.is_empty() || pursuers.is_empty() {
        return Err(CliError::Config("at least one arena and one pursuer count are required".into()));
    }
    if episodes == 0 {
        return Err(CliError::Config("--episodes must be at least 1".into()));
    }
    let controller = load_controller(checkpoint, apf)?;
    let mut rows = Vec::new();
    for (name, arena) in arenas {
        for &n in pursuers {
            let env = build_env(
                arena.clone(),
                &ScenarioParams {
                    n_pursuers: n,
                    ..scenario.clone()
                },
            )?;
            let stats = evaluate(&env, controller.as_ref(), episodes, seed)?;
            rows.push(EvalRow {
                arena: name.clone(),
                n_pursuers: n,
                episodes,
                successes: stats.successes,
                success_rate: stats.success_rate,
                mean_steps: stats.mean_steps,
                mean_return: stats.mean_return,
            });
        }
    }
    Ok(EvalReport {
        method: checkpoint.method.clone(),
        seed,
        rows,
    })
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReport, CliError> {
    let checkpoint = Checkpoint::load(&args.checkpoint).map_err(|e| match e {
        dacoop_core::Error::Io(io) => CliError::Config(format!("cannot read {}: {io}", args.checkpoint.display())),
        other => other.into(),
    })?;
    let (scenario, apf) = match &args.config {
        Some(path) => {
            let loaded = RunConfig::load(path)?;
            (loaded.config.scenario, loaded.config.apf)
        }
        None => (ScenarioParams::default(), ApfParams::default()),
    };
    let arenas = args
        .arenas
        .iter()
        .map(|a| Ok((a.clone(), resolve_arena(a, Path::new("."))?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = eval_checkpoint(&checkpoint, &arenas, &args.pursuers, &scenario, apf, args.episodes, args.seed)?;
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
        write_file(&dir.join("eval.json"), &to_json(&report))?;
        write_file(&dir.join("eval_table.csv"), &report.csv())?;
    }
    if let Some(path) = &args.trace {
        let (_, arena) = &arenas[0];
        let env = build_env(
            arena.clone(),
            &ScenarioParams {
                n_pursuers: args.pursuers[0],
                ..scenario
            },
        )?;
        let controller = load_controller(&checkpoint, apf)?;
        let mut trace = Trajectory::default();
        run_episode(&env, controller.as_ref(), eval_episode_seed(args.seed, 0), Some(&mut trace))?;
        let file = File::create(path).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        trace.write_csv(BufWriter::new(file))?;
    }
    Ok(report)
}

pub fn cmd_replay(csv: &Path, svg_out: &Path, arena: &str) -> Result<(), CliError> {
    let arena = resolve_arena(arena, Path::new("."))?;
    let file = File::open(csv).map_err(|e| CliError::Config(format!("cannot read {}: {e}", csv.display())))?;
    let trajectory = Trajectory::read_csv(file).map_err(|e| CliError::Config(format!("{}: {e}", csv.display())))?;
    write_file(svg_out, &svg::render(&arena, &trajectory))
}

pub struct CompareArgs {
    pub config: PathBuf,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareCell {
    pub method: Method,
    pub seed: u64,
    pub training_episodes: usize,
    /// Greedy success over the final evaluation episodes.
    pub final_success_rate: f64,
    /// Mean of the success curve.
    pub curve_mean: f64,
    /// Grid-search score of the selected pair (modified APF only).
    pub search_success_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub seeds: usize,
    pub mean_final_success_rate: f64,
    pub mean_curve: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub eval_episodes: usize,
    pub cells: Vec<CompareCell>,
    pub methods: Vec<MethodSummary>,
    pub failures: Vec<String>,
}

struct CellOutput {
    cell: CompareCell,
    curve: Vec<f64>,
}

fn run_cell(
    base: &RunConfig,
    arena: &Arena,
    out: &Path,
    method: Method,
    seed: u64,
    eval_episodes: usize,
) -> Result<CellOutput, CliError> {
    let config = RunConfig {
        method,
        seed,
        ..base.clone()
    };
    let run = run_training(&config, arena, &out.join(method.as_str()).join(format!("seed_{seed}")))?;
    let env = build_env(arena.clone(), &config.scenario)?;
    let controller = load_controller(&run.checkpoint, config.apf)?;
    let final_success_rate = evaluate(&env, controller.as_ref(), eval_episodes, seed)?.success_rate;
    let curve = match &run.grid {
        Some(_) => vec![final_success_rate; config.train.episodes],
        None => rolling_success(&run.metrics, ROLLING_WINDOW),
    };
    let curve_mean = if curve.is_empty() {
        0.0
    } else {
        curve.iter().sum::<f64>() / curve.len() as f64
    };
    Ok(CellOutput {
        cell: CompareCell {
            method,
            seed,
            training_episodes: run.metrics.len(),
            final_success_rate,
            curve_mean,
            search_success_rate: run.grid.as_ref().map(|g| g.success_rates[g.best_index]),
        },
        curve,
    })
}

/// Trains and scores every (method, seed) cell. Failed cells are reported
/// and skipped; the error of the first failure is returned after all
/// artifacts are written.
pub fn cmd_compare(args: &CompareArgs) -> Result<CompareReport, CliError> {
    if args.methods.is_empty() || args.seeds.is_empty() {
        return Err(CliError::Config("compare needs at least one method and one seed".into()));
    }
    if args.eval_episodes == 0 {
        return Err(CliError::Config("evaluation episode count must be positive".into()));
    }
    let LoadedConfig {
        config,
        arena,
        output_dir,
    } = RunConfig::load(&args.config)?;
    let out = output_dir.join("compare");
    create_dir(&out)?;
    let jobs: Vec<(Method, u64)> = args
        .methods
        .iter()
        .flat_map(|&m| args.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let results: Vec<Result<CellOutput, CliError>> = jobs
        .par_iter()
        .map(|&(m, s)| run_cell(&config, &arena, &out, m, s, args.eval_episodes))
        .collect();

    let mut curves = String::from("method,seed,episode,success_rate\n");
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut first_error = None;
    for ((method, seed), result) in jobs.iter().zip(results) {
        match result {
            Ok(c) => {
                for (k, v) in c.curve.iter().enumerate() {
                    let _ = writeln!(curves, "{method},{seed},{k},{v}");
                }
                cells.push(c.cell);
            }
            Err(e) => {
                log::error!("{method} seed {seed}: {e}");
                failures.push(format!("{method} seed {seed}: {e}"));
                first_error.get_or_insert(e);
            }
        }
    }
    let methods = args
        .methods
        .iter()
        .filter_map(|&m| {
            let mine: Vec<&CompareCell> = cells.iter().filter(|c| c.method == m).collect();
            (!mine.is_empty()).then(|| {
                let n = mine.len() as f64;
                MethodSummary {
                    method: m,
                    seeds: mine.len(),
                    mean_final_success_rate: mine.iter().map(|c| c.final_success_rate).sum::<f64>() / n,
                    mean_curve: mine.iter().map(|c| c.curve_mean).sum::<f64>() / n,
                }
            })
        })
        .collect();
    let report = CompareReport {
        eval_episodes: args.eval_episodes,
        cells,
        methods,
        failures,
    };
    write_file(&out.join("curves.csv"), &curves)?;
    write_file(&out.join("summary.json"), &to_json(&report))?;
    let mut table = String::from("method,seed,final_success_rate,curve_mean,search_success_rate\n");
    for c in &report.cells {
        let search = c.search_success_rate.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(table, "{},{},{},{},{search}", c.method, c.seed, c.final_success_rate, c.curve_mean);
    }
    write_file(&out.join("summary.csv"), &table)?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
