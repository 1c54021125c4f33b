//! Comparison methods: a D3QN that picks absolute headings directly, and a
//! potential field whose parameters shrink as the evader gets closer.

use std::f64::consts::TAU;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::apf::ApfParams;
use crate::checkpoint::{Checkpoint, Tensor};
use crate::env::{EnvState, Observation, PursuitEnv};
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::trainer::{
    apf_command, evaluate, select_action, ActionAdapter, Controller, DacoopAdapter, Method, QPolicy,
};

pub const HEADING_COUNT: usize = 24;
pub const APPROACH_REWARD_SCALE: f64 = 200.0;
pub const DEFAULT_D_REF: f64 = 2000.0;
pub const LAMBDA_MIN: f64 = 1.0;

/// Absolute headings `2 pi k / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadingActionGrid {
    pub headings: Vec<f64>,
}

impl Default for HeadingActionGrid {
    fn default() -> Self {
        Self::uniform(HEADING_COUNT)
    }
}

impl HeadingActionGrid {
    pub fn uniform(n: usize) -> Self {
        Self {
            headings: (0..n).map(|k| TAU * k as f64 / n as f64).collect(),
        }
    }
}

/// Approach bonus in reward units per `APPROACH_REWARD_SCALE` mm closed.
pub fn vanilla_reward_bonus(d_e_prev: f64, d_e_now: f64) -> f64 {
    (d_e_prev - d_e_now) / APPROACH_REWARD_SCALE
}

pub fn vanilla_step_policy<R: Rng + ?Sized>(grid: &HeadingActionGrid, q_values: &[f64], eps: f64, rng: &mut R) -> f64 {
    grid.headings[select_action(q_values, eps, rng)]
}

/// Actions are headings, taken relative to the pursuer's current heading
/// (the frame its observations are expressed in); no potential-field layer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VanillaAdapter {
    pub grid: HeadingActionGrid,
}

impl ActionAdapter for VanillaAdapter {
    fn method(&self) -> Method {
        Method::VanillaD3qn
    }

    fn num_actions(&self) -> usize {
        self.grid.headings.len()
    }

    fn heading(&self, _env: &PursuitEnv, state: &EnvState, i: usize, action: usize) -> Result<f64> {
        Ok(wrap_angle(state.pursuers[i].heading + self.grid.headings[action]))
    }

    fn reward_bonus(&self, prev: &EnvState, next: &EnvState, i: usize) -> f64 {
        vanilla_reward_bonus(prev.distance_to_evader(i), next.distance_to_evader(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApfSchedule {
    pub eta0: f64,
    pub lambda0: f64,
    /// Evader distance (mm) at and beyond which the initial values apply.
    pub d_ref: f64,
}

impl ApfSchedule {
    pub fn new(eta0: f64, lambda0: f64) -> Self {
        Self {
            eta0,
            lambda0,
            d_ref: DEFAULT_D_REF,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            method: Method::ModifiedApf.as_str().to_string(),
            tensors: vec![Tensor {
                name: "schedule".into(),
                shape: vec![3],
                data: vec![self.eta0, self.lambda0, self.d_ref],
            }],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let t = ck
            .tensor("schedule")
            .filter(|t| t.shape == [3])
            .ok_or_else(|| Error::Incompatible("checkpoint has no [3]-shaped `schedule` tensor".into()))?;
        let s = Self {
            eta0: t.data[0],
            lambda0: t.data[1],
            d_ref: t.data[2],
        };
        if !(s.eta0 >= 0.0 && s.lambda0 > 0.0 && s.d_ref > 0.0 && s.eta0.is_finite() && s.lambda0.is_finite()) {
            return Err(Error::Checkpoint(format!("invalid schedule {s:?}")));
        }
        Ok(s)
    }
}

/// Linear ramp from the initial values at `d_ref` down to zero at contact;
/// lambda is floored at [`LAMBDA_MIN`].
pub fn scheduled_params(d_e: f64, schedule: &ApfSchedule) -> (f64, f64) {
    let factor = (d_e / schedule.d_ref).clamp(0.0, 1.0);
    (schedule.eta0 * factor, (schedule.lambda0 * factor).max(LAMBDA_MIN))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledApfController {
    pub schedule: ApfSchedule,
    pub apf: ApfParams,
}

impl Controller for ScheduledApfController {
    fn headings(&self, env: &PursuitEnv, state: &EnvState, _obs: &[Observation]) -> Result<Vec<f64>> {
        state
            .pursuers
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if p.captured && env.halts_captured() {
                    return Ok(p.heading);
                }
                let (eta, lambda) = scheduled_params(state.distance_to_evader(i), &self.schedule);
                apf_command(env, state, i, &ApfParams { eta, lambda, ..self.apf })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub best: ApfSchedule,
    pub best_index: usize,
    /// Success rate of every candidate, in candidate order.
    pub success_rates: Vec<f64>,
}

/// Evaluates the scheduled controller for every candidate initial pair on
/// the same evaluation seeds and keeps the best; ties go to the earlier
/// candidate.
pub fn grid_search_best_init(
    env: &PursuitEnv,
    candidates: &[(f64, f64)],
    apf: &ApfParams,
    episodes_per_pair: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate parameter pairs".into()));
    }
    let success_rates = candidates
        .par_iter()
        .map(|&(eta0, lambda0)| {
            let controller = ScheduledApfController {
                schedule: ApfSchedule::new(eta0, lambda0),
                apf: *apf,
            };
            evaluate(env, &controller, episodes_per_pair, seed).map(|s| s.success_rate)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best_index = 0;
    for (k, &r) in success_rates.iter().enumerate() {
        if r > success_rates[best_index] {
            best_index = k;
        }
    }
    let (eta0, lambda0) = candidates[best_index];
    Ok(GridSearchResult {
        best: ApfSchedule::new(eta0, lambda0),
        best_index,
        success_rates,
    })
}

/// Builds the greedy controller stored in a checkpoint of any method.
pub fn load_controller(ck: &Checkpoint, apf: ApfParams) -> Result<Box<dyn Controller>> {
    let method: Method = ck
        .method
        .parse()
        .map_err(|_| Error::Incompatible(format!("unknown checkpoint method `{}`", ck.method)))?;
    Ok(match method {
        Method::Dacoop => Box::new(QPolicy::new(ck.network()?, DacoopAdapter::new(apf))?),
        Method::VanillaD3qn => Box::new(QPolicy::new(ck.network()?, VanillaAdapter::default())?),
        Method::ModifiedApf => Box::new(ScheduledApfController {
            schedule: ApfSchedule::from_checkpoint(ck)?,
            apf,
        }),
    })
}
