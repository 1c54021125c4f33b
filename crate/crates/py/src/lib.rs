//! Python bindings: arena lookup, checkpoint inspection and greedy
//! evaluation. Training stays on the command line.

use std::path::{Path, PathBuf};

use dacoop_core::apf::ApfParams;
use dacoop_core::arena_file::{bundled, load_arena};
use dacoop_core::baselines::{load_controller, ApfSchedule};
use dacoop_core::checkpoint::Checkpoint;
use dacoop_core::env::{potential as shaping_potential, PursuitEnv, ScenarioParams};
use dacoop_core::geometry::Arena;
use dacoop_core::trainer::{evaluate as run_evaluation, run_episode};
use dacoop_core::trajectory::Trajectory;
use dacoop_core::Error;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

const BUNDLED: [&str; 3] = ["train_fig5a", "val_fig5b", "u_trap"];

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Checkpoint(_)
        | Error::Incompatible(_)
        | Error::Parse { .. }
        | Error::InvalidArena(_)
        | Error::InvalidParameter(_)
        | Error::EmptyEvaluation
        | Error::SpawnInfeasible { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Bundled arena name or path to an arena file.
fn resolve_arena(spec: &str) -> Result<Arena, Error> {
    match bundled(spec) {
        Some(a) => Ok(a),
        None => load_arena(Path::new(spec)),
    }
}

fn build_env(arena: &str, n_pursuers: usize) -> Result<PursuitEnv, Error> {
    PursuitEnv::new(
        resolve_arena(arena)?,
        ScenarioParams {
            n_pursuers,
            ..ScenarioParams::default()
        },
    )
}

#[pyfunction]
fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

#[pyfunction]
fn arena_names() -> Vec<&'static str> {
    BUNDLED.to_vec()
}

/// Arena size and obstacles as `(xmin, ymin, xmax, ymax)` tuples in mm.
#[pyfunction]
fn arena_info<'py>(py: Python<'py>, spec: &str) -> PyResult<Bound<'py, PyDict>> {
    let arena = resolve_arena(spec).map_err(to_py)?;
    let rect = |r: &dacoop_core::geometry::Rect| (r.min.x, r.min.y, r.max.x, r.max.y);
    let d = PyDict::new(py);
    d.set_item("width", arena.width)?;
    d.set_item("height", arena.height)?;
    d.set_item("obstacles", arena.obstacles.iter().map(rect).collect::<Vec<_>>())?;
    d.set_item("pursuer_spawn", rect(&arena.pursuer_spawn))?;
    d.set_item("evader_spawn", rect(&arena.evader_spawn))?;
    Ok(d)
}

/// Shaping potential of a pursuer `d_e` mm from the evader.
#[pyfunction]
fn potential(d_e: f64) -> f64 {
    shaping_potential(d_e)
}

/// Writes a modified-APF checkpoint with the given initial parameters.
#[pyfunction]
fn write_schedule(path: PathBuf, eta0: f64, lambda0: f64) -> PyResult<()> {
    ApfSchedule::new(eta0, lambda0).to_checkpoint().save(&path).map_err(to_py)
}

#[pyfunction]
fn checkpoint_info<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let ck = Checkpoint::load(&path).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("method", &ck.method)?;
    d.set_item("checksum", format!("{:016x}", ck.checksum()))?;
    let shapes: Vec<(String, Vec<usize>)> = ck.tensors.iter().map(|t| (t.name.clone(), t.shape.clone())).collect();
    d.set_item("tensors", shapes)?;
    Ok(d)
}

/// Greedy success statistics of a checkpoint over evaluation seeds.
#[pyfunction]
#[pyo3(signature = (checkpoint, arena = "train_fig5a", n_pursuers = 3, episodes = 100, seed = 0))]
fn evaluate<'py>(
    py: Python<'py>,
    checkpoint: PathBuf,
    arena: &str,
    n_pursuers: usize,
    episodes: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let stats = py
        .detach(|| {
            let ck = Checkpoint::load(&checkpoint)?;
            let env = build_env(arena, n_pursuers)?;
            let controller = load_controller(&ck, ApfParams::default())?;
            run_evaluation(&env, controller.as_ref(), episodes, seed)
        })
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("episodes", stats.episodes)?;
    d.set_item("successes", stats.successes)?;
    d.set_item("success_rate", stats.success_rate)?;
    d.set_item("mean_steps", stats.mean_steps)?;
    d.set_item("mean_return", stats.mean_return)?;
    Ok(d)
}

/// One greedy episode as trajectory CSV text.
#[pyfunction]
#[pyo3(signature = (checkpoint, arena = "train_fig5a", n_pursuers = 3, seed = 0))]
fn trace(py: Python<'_>, checkpoint: PathBuf, arena: &str, n_pursuers: usize, seed: u64) -> PyResult<String> {
    py.detach(|| {
        let ck = Checkpoint::load(&checkpoint)?;
        let env = build_env(arena, n_pursuers)?;
        let controller = load_controller(&ck, ApfParams::default())?;
        let mut t = Trajectory::default();
        run_episode(&env, controller.as_ref(), seed, Some(&mut t))?;
        Ok(t.to_csv_string())
    })
    .map_err(to_py)
}

#[pymodule]
fn dacoop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(version, m)?)?;
    m.add_function(wrap_pyfunction!(arena_names, m)?)?;
    m.add_function(wrap_pyfunction!(arena_info, m)?)?;
    m.add_function(wrap_pyfunction!(potential, m)?)?;
    m.add_function(wrap_pyfunction!(write_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(checkpoint_info, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(trace, m)?)?;
    Ok(())
}
