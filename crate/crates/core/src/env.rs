//! The pursuit game: constant-speed kinematics, range-limited sensing,
//! per-pursuer rewards, capture bookkeeping and the evader's escape rule.

use std::f64::consts::{FRAC_PI_4, PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apf::{effective_obstacle_set, repulsive_force, ObstacleQuery};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Arena, Vec2};

pub const R_MAIN_CAPTURE: f64 = 20.0;
pub const R_TIME_PENALTY: f64 = -5.0;
pub const R_TEAMMATE_PENALTY: f64 = -20.0;
pub const R_OBSTACLE_CONTACT: f64 = -20.0;
pub const R_OBSTACLE_NEAR: f64 = -2.0;
/// Heading change beyond which the smoothness penalty applies.
pub const HEADING_CHANGE_LIMIT: f64 = FRAC_PI_4;

const CLIP_ITERATIONS: usize = 48;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    /// A capturing pursuer halts for the rest of the episode and becomes a
    /// virtual obstacle; success needs every flag set.
    Sticky,
    /// Flags follow current proximity; success needs all pursuers within
    /// capture distance at the same step.
    Simultaneous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaderBehavior {
    Escape,
    Stationary,
}

/// Constants of the escape rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaderParams {
    pub behavior: EvaderBehavior,
    /// Obstacle repulsion scale.
    pub eta: f64,
    /// Obstacle influence range in mm.
    pub rho0: f64,
    /// Magnitude of the sideways component added to the flight direction.
    pub tangent_bias: f64,
    /// Pursuers farther than this (mm) are ignored.
    pub sense_range: f64,
    /// Look-ahead (mm) used to compare free space on either side.
    pub probe_distance: f64,
    /// Length unit (mm) of the inverse-square pursuer weights: a pursuer at
    /// this distance pushes with unit strength.
    pub flee_scale: f64,
}

impl Default for EvaderParams {
    fn default() -> Self {
        Self {
            behavior: EvaderBehavior::Escape,
            eta: 5.0e8,
            rho0: 2000.0,
            tangent_bias: 0.3,
            sense_range: 5000.0,
            probe_distance: 500.0,
            flee_scale: 1500.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub n_pursuers: usize,
    /// Pursuer speed, mm/s.
    pub v_p: f64,
    /// Evader speed, mm/s.
    pub v_e: f64,
    pub radius_p: f64,
    pub radius_e: f64,
    /// Capture when the center distance drops below this.
    pub d_capture: f64,
    /// Teammate sensing range.
    pub d_sense: f64,
    /// Seconds per step.
    pub dt: f64,
    pub max_steps: usize,
    /// Discount used inside the shaping reward.
    pub shaping_gamma: f64,
    pub capture_mode: CaptureMode,
    pub evader: EvaderParams,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_pursuers: 3,
            v_p: 300.0,
            v_e: 400.0,
            radius_p: 80.0,
            radius_e: 80.0,
            d_capture: 300.0,
            d_sense: 2000.0,
            dt: 0.1,
            max_steps: 1000,
            shaping_gamma: 0.99,
            capture_mode: CaptureMode::Sticky,
            evader: EvaderParams::default(),
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let lengths = [self.v_p, self.v_e, self.radius_p, self.radius_e, self.d_capture, self.d_sense, self.dt];
        if lengths.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("speeds, radii, ranges and dt must be positive".into()));
        }
        if self.v_e <= self.v_p {
            return Err(Error::InvalidParameter(format!(
                "evader must be faster than pursuers (v_e = {}, v_p = {})",
                self.v_e, self.v_p
            )));
        }
        if self.n_pursuers == 0 || self.max_steps == 0 {
            return Err(Error::InvalidParameter("n_pursuers and max_steps must be at least 1".into()));
        }
        if !(self.shaping_gamma > 0.0 && self.shaping_gamma <= 1.0) {
            return Err(Error::InvalidParameter("shaping_gamma must lie in (0, 1]".into()));
        }
        let e = &self.evader;
        let evader_lengths = [e.rho0, e.sense_range, e.probe_distance, e.flee_scale];
        if !(e.eta >= 0.0 && e.eta.is_finite() && e.tangent_bias.is_finite())
            || evader_lengths.iter().any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidParameter(format!("invalid evader parameters {e:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub heading: f64,
    /// Pursuers only.
    pub captured: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Timeout,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub pursuers: Vec<AgentState>,
    pub evader: AgentState,
    pub step: usize,
    pub outcome: Option<Outcome>,
}

impl EnvState {
    pub fn all_captured(&self) -> bool {
        self.pursuers.iter().all(|p| p.captured)
    }

    pub fn distance_to_evader(&self, i: usize) -> f64 {
        self.pursuers[i].position.distance(self.evader.position)
    }

    pub fn captured_positions_except(&self, i: usize) -> Vec<Vec2> {
        self.pursuers
            .iter()
            .enumerate()
            .filter(|&(j, p)| j != i && p.captured)
            .map(|(_, p)| p.position)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborObservation {
    pub distance: f64,
    pub bearing: f64,
}

/// One pursuer's local view. Bearings are relative to its heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub d_o: f64,
    pub phi_o: f64,
    pub d_e: f64,
    pub phi_e: f64,
    /// Ascending distance.
    pub neighbors: Vec<NeighborObservation>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_main: f64,
    pub r_time: f64,
    pub r_tm: f64,
    pub r_o: f64,
    pub r_pot: f64,
    pub total: f64,
}

impl RewardBreakdown {
    fn from_parts(r_main: f64, r_time: f64, r_tm: f64, r_o: f64, r_pot: f64) -> Self {
        Self {
            r_main,
            r_time,
            r_tm,
            r_o,
            r_pot,
            total: r_main + r_time + r_tm + r_o + r_pot,
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: EnvState,
    pub observations: Vec<Observation>,
    /// One entry per pursuer, halted ones included.
    pub rewards: Vec<RewardBreakdown>,
    pub done: bool,
    pub outcome: Option<Outcome>,
    pub evader_heading: f64,
}

/// Shaping potential over the distance to the evader (mm).
pub fn potential(d_e: f64) -> f64 {
    if d_e < 400.0 {
        15.0
    } else if d_e < 600.0 {
        10.0
    } else if d_e < 800.0 {
        5.0
    } else {
        0.0
    }
}

pub fn shaping_reward(d_e_prev: f64, d_e_now: f64, gamma: f64) -> f64 {
    gamma * potential(d_e_now) - potential(d_e_prev)
}

pub fn obstacle_penalty(d_o: f64, radius_p: f64) -> f64 {
    if d_o < radius_p {
        R_OBSTACLE_CONTACT
    } else if d_o < 1.5 * radius_p {
        R_OBSTACLE_NEAR
    } else {
        0.0
    }
}

#[derive(Clone, Debug)]
pub struct PursuitEnv {
    pub arena: Arena,
    pub params: ScenarioParams,
}

impl PursuitEnv {
    pub fn new(arena: Arena, params: ScenarioParams) -> Result<Self> {
        params.validate()?;
        arena.validate()?;
        Ok(Self { arena, params })
    }

    /// Whether captured pursuers stop moving and acting.
    pub fn halts_captured(&self) -> bool {
        self.params.capture_mode == CaptureMode::Sticky
    }

    pub fn obstacle_query(&self, state: &EnvState, i: usize) -> ObstacleQuery<'_> {
        effective_obstacle_set(&self.arena, &state.captured_positions_except(i), self.params.radius_p)
    }

    /// Positions of teammates pursuer `i` can currently sense (uncaptured,
    /// within range), ascending by distance.
    pub fn visible_teammates(&self, state: &EnvState, i: usize) -> Vec<(usize, f64)> {
        let me = state.pursuers[i].position;
        let mut seen: Vec<(usize, f64)> = state
            .pursuers
            .iter()
            .enumerate()
            .filter(|&(j, p)| j != i && !p.captured)
            .map(|(j, p)| (j, me.distance(p.position)))
            .filter(|&(_, d)| d <= self.params.d_sense)
            .collect();
        seen.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        seen
    }

    pub fn reset(&self, seed: u64) -> Result<(EnvState, Vec<Observation>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut occupied = Vec::with_capacity(self.params.n_pursuers + 1);
        let mut pursuers = Vec::with_capacity(self.params.n_pursuers);
        for _ in 0..self.params.n_pursuers {
            let position = self
                .arena
                .sample_spawn(&self.arena.pursuer_spawn, self.params.radius_p, &occupied, &mut rng)?;
            occupied.push(position);
            pursuers.push(AgentState {
                position,
                heading: random_heading(&mut rng),
                captured: false,
            });
        }
        let position = self
            .arena
            .sample_spawn(&self.arena.evader_spawn, self.params.radius_e, &occupied, &mut rng)?;
        let evader = AgentState {
            position,
            heading: random_heading(&mut rng),
            captured: false,
        };
        let state = EnvState {
            pursuers,
            evader,
            step: 0,
            outcome: None,
        };
        let observations = self.observe_all(&state)?;
        Ok((state, observations))
    }

    pub fn observe_all(&self, state: &EnvState) -> Result<Vec<Observation>> {
        (0..state.pursuers.len()).map(|i| self.build_observation(state, i)).collect()
    }

    pub fn build_observation(&self, state: &EnvState, i: usize) -> Result<Observation> {
        let me = state.pursuers[i];
        let bearing = |target: Vec2| wrap_angle((target - me.position).heading() - me.heading);
        let nearest = self.obstacle_query(state, i).nearest_obstacle_point(me.position)?;
        let neighbors = self
            .visible_teammates(state, i)
            .into_iter()
            .map(|(j, distance)| NeighborObservation {
                distance,
                bearing: bearing(state.pursuers[j].position),
            })
            .collect();
        Ok(Observation {
            d_o: nearest.distance,
            phi_o: bearing(nearest.point),
            d_e: me.position.distance(state.evader.position),
            phi_e: bearing(state.evader.position),
            neighbors,
        })
    }

    pub fn compute_reward(&self, prev: &EnvState, state: &EnvState, i: usize) -> Result<RewardBreakdown> {
        let p = &self.params;
        let before = prev.pursuers[i];
        let now = state.pursuers[i];
        let r_main = if now.captured && !before.captured { R_MAIN_CAPTURE } else { 0.0 };
        let r_time = if wrap_angle(now.heading - before.heading).abs() > HEADING_CHANGE_LIMIT {
            R_TIME_PENALTY
        } else {
            0.0
        };
        let crowded = state
            .pursuers
            .iter()
            .enumerate()
            .any(|(j, q)| j != i && q.position.distance(now.position) < 2.0 * p.radius_p);
        let r_tm = if crowded { R_TEAMMATE_PENALTY } else { 0.0 };
        let d_o = self.obstacle_query(state, i).nearest_obstacle_point(now.position)?.distance;
        let r_o = obstacle_penalty(d_o, p.radius_p);
        let r_pot = shaping_reward(prev.distance_to_evader(i), state.distance_to_evader(i), p.shaping_gamma);
        Ok(RewardBreakdown::from_parts(r_main, r_time, r_tm, r_o, r_pot))
    }

    /// Escape heading: flee the pursuers (inverse-square weighted), push off
    /// the nearest obstacle, and veer sideways toward the side with more
    /// free space.
    pub fn evader_policy(&self, state: &EnvState) -> f64 {
        let ep = &self.params.evader;
        let e = state.evader.position;
        if ep.behavior == EvaderBehavior::Stationary {
            return state.evader.heading;
        }
        let mut flee = Vec2::ZERO;
        for p in &state.pursuers {
            let away = e - p.position;
            let d = away.norm();
            if d > 0.0 && d <= ep.sense_range {
                flee += away * (1.0 / (d * d * d));
            }
        }
        let flee = flee * (ep.flee_scale * ep.flee_scale);
        let wall = self
            .arena
            .nearest_obstacle_point(e)
            .ok()
            .and_then(|n| repulsive_force(e, n.point, ep.eta, ep.rho0).ok())
            .unwrap_or(Vec2::ZERO);
        let tangent = if flee == Vec2::ZERO {
            Vec2::ZERO
        } else {
            let t = flee.perp();
            let room = |dir: Vec2| {
                self.arena
                    .nearest_obstacle_point(e + dir * ep.probe_distance)
                    .map(|n| n.distance)
                    .unwrap_or(0.0)
            };
            if room(t) >= room(-t) {
                t * ep.tangent_bias
            } else {
                -t * ep.tangent_bias
            }
        };
        let sum = flee + wall + tangent;
        if sum == Vec2::ZERO || !sum.is_finite() {
            state.evader.heading
        } else {
            sum.heading()
        }
    }

    /// Moves a disc along `heading`; if the full move would collide, stops at
    /// the furthest collision-free point on the segment.
    fn advance(&self, from: Vec2, heading: f64, distance: f64, radius: f64) -> Vec2 {
        let dir = Vec2::from_heading(heading);
        let to = from + dir * distance;
        if !self.arena.in_collision(to, radius) {
            return to;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..CLIP_ITERATIONS {
            let mid = 0.5 * (lo + hi);
            if self.arena.in_collision(from + dir * (distance * mid), radius) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        from + dir * (distance * lo)
    }

    /// Advances the game one step. `headings` holds one entry per pursuer;
    /// entries for captured pursuers are ignored.
    pub fn step(&self, state: &EnvState, headings: &[f64]) -> Result<StepResult> {
        let p = &self.params;
        if headings.len() != state.pursuers.len() {
            return Err(Error::HeadingCount {
                expected: state.pursuers.len(),
                got: headings.len(),
            });
        }
        if state.all_captured() {
            let done_state = EnvState {
                outcome: Some(Outcome::Success),
                ..state.clone()
            };
            let observations = self.observe_all(&done_state)?;
            return Ok(StepResult {
                observations,
                rewards: vec![RewardBreakdown::default(); state.pursuers.len()],
                done: true,
                outcome: Some(Outcome::Success),
                evader_heading: state.evader.heading,
                state: done_state,
            });
        }
        let halts = self.halts_captured();
        for (index, (agent, h)) in state.pursuers.iter().zip(headings).enumerate() {
            if !(agent.captured && halts) && !h.is_finite() {
                return Err(Error::InvalidCommand { index });
            }
        }

        let evader_heading = self.evader_policy(state);
        let mut next = state.clone();
        for (agent, &h) in next.pursuers.iter_mut().zip(headings) {
            if agent.captured && halts {
                continue;
            }
            agent.heading = wrap_angle(h);
            agent.position = self.advance(agent.position, agent.heading, p.v_p * p.dt, p.radius_p);
        }
        if p.evader.behavior != EvaderBehavior::Stationary {
            next.evader.heading = evader_heading;
            next.evader.position = self.advance(next.evader.position, evader_heading, p.v_e * p.dt, p.radius_e);
        }
        let evader_pos = next.evader.position;
        for agent in next.pursuers.iter_mut() {
            let close = agent.position.distance(evader_pos) < p.d_capture;
            agent.captured = match p.capture_mode {
                CaptureMode::Sticky => agent.captured || close,
                CaptureMode::Simultaneous => close,
            };
        }
        next.step = state.step + 1;

        // halted pursuers are scored too; the trainer just never stores them
        let rewards = (0..next.pursuers.len())
            .map(|i| self.compute_reward(state, &next, i))
            .collect::<Result<Vec<_>>>()?;
        let outcome = if next.all_captured() {
            Some(Outcome::Success)
        } else if next.step >= p.max_steps {
            Some(Outcome::Timeout)
        } else {
            None
        };
        next.outcome = outcome;
        let observations = self.observe_all(&next)?;
        Ok(StepResult {
            state: next,
            observations,
            rewards,
            done: outcome.is_some(),
            outcome,
            evader_heading,
        })
    }
}

fn random_heading<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u in [0, 1) maps onto (-pi, pi]
    let u: f64 = rng.gen();
    PI - TAU * u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rect;
    use proptest::prelude::*;

    fn open_env(n: usize) -> PursuitEnv {
        let mut arena = Arena::empty(10_000.0, 10_000.0).unwrap();
        arena.pursuer_spawn = Rect::new(1000.0, 1000.0, 4000.0, 4000.0);
        arena.evader_spawn = Rect::new(6000.0, 6000.0, 9000.0, 9000.0);
        PursuitEnv::new(
            arena,
            ScenarioParams {
                n_pursuers: n,
                ..ScenarioParams::default()
            },
        )
        .unwrap()
    }

    fn state_with(pursuers: &[(f64, f64, f64)], evader: (f64, f64)) -> EnvState {
        EnvState {
            pursuers: pursuers
                .iter()
                .map(|&(x, y, h)| AgentState {
                    position: Vec2::new(x, y),
                    heading: h,
                    captured: false,
                })
                .collect(),
            evader: AgentState {
                position: Vec2::new(evader.0, evader.1),
                heading: 0.0,
                captured: false,
            },
            step: 0,
            outcome: None,
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let env = open_env(3);
        let (a, oa) = env.reset(11).unwrap();
        let (b, ob) = env.reset(11).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
        assert_eq!(oa.len(), 3);
        assert!(a.pursuers.iter().all(|p| !p.captured && p.heading > -PI && p.heading <= PI));
    }

    #[test]
    fn spawn_clearance_over_many_seeds() {
        let env = PursuitEnv::new(crate::arena_file::bundled("train_fig5a").unwrap(), ScenarioParams::default()).unwrap();
        for seed in 0..1000 {
            let (s, _) = env.reset(seed).unwrap();
            for i in 0..s.pursuers.len() {
                for j in (i + 1)..s.pursuers.len() {
                    assert!(s.pursuers[i].position.distance(s.pursuers[j].position) >= 2.0 * env.params.radius_p);
                }
            }
        }
    }

    #[test]
    fn one_step_moves_exactly_v_dt() {
        let env = open_env(1);
        let s = state_with(&[(2000.0, 2000.0, 0.0)], (8000.0, 8000.0));
        let r = env.step(&s, &[0.7]).unwrap();
        let moved = r.state.pursuers[0].position.distance(s.pursuers[0].position);
        assert!((moved - 30.0).abs() < 1e-9, "{moved}");
        let evader_moved = r.state.evader.position.distance(s.evader.position);
        assert!((evader_moved - 40.0).abs() < 1e-9);
    }

    #[test]
    fn all_captured_is_immediate_success() {
        let env = open_env(2);
        let mut s = state_with(&[(2000.0, 2000.0, 0.0), (2100.0, 2000.0, 0.0)], (2050.0, 2100.0));
        for p in &mut s.pursuers {
            p.captured = true;
        }
        let r = env.step(&s, &[0.0, 0.0]).unwrap();
        assert!(r.done);
        assert_eq!(r.outcome, Some(Outcome::Success));
    }

    #[test]
    fn timeout_at_max_steps() {
        let mut env = open_env(1);
        env.params.max_steps = 1000;
        let mut s = state_with(&[(2000.0, 2000.0, 0.0)], (8000.0, 8000.0));
        s.step = 999;
        let r = env.step(&s, &[PI]).unwrap();
        assert!(r.done);
        assert_eq!(r.outcome, Some(Outcome::Timeout));
        assert!(!r.state.pursuers[0].captured);
    }

    #[test]
    fn nan_heading_is_rejected() {
        let env = open_env(1);
        let s = state_with(&[(2000.0, 2000.0, 0.0)], (8000.0, 8000.0));
        assert!(matches!(env.step(&s, &[f64::NAN]), Err(Error::InvalidCommand { index: 0 })));
        assert!(matches!(env.step(&s, &[]), Err(Error::HeadingCount { .. })));
    }

    #[test]
    fn movement_into_a_wall_is_clipped() {
        let env = open_env(1);
        let s = state_with(&[(95.0, 5000.0, PI)], (8000.0, 8000.0));
        let r = env.step(&s, &[PI]).unwrap();
        let p = r.state.pursuers[0].position;
        assert!(!env.arena.in_collision(p, env.params.radius_p));
        assert!(p.x < 95.0 && p.x > 80.0);
    }

    #[test]
    fn capture_is_sticky_and_halts() {
        let mut env = open_env(1);
        env.params.evader.behavior = EvaderBehavior::Stationary;
        let s = state_with(&[(2000.0, 2000.0, 0.0)], (2310.0, 2000.0));
        let r = env.step(&s, &[0.0]).unwrap();
        assert!(r.state.pursuers[0].captured);
        assert_eq!(r.rewards[0].r_main, 20.0);
        assert_eq!(r.outcome, Some(Outcome::Success));
    }

    #[test]
    fn halted_pursuer_keeps_shaping_as_the_evader_leaves() {
        let env = open_env(2);
        let s = state_with(&[(5000.0, 5000.0, 0.0), (1000.0, 1000.0, 0.0)], (5250.0, 5000.0));
        let mut s = env.step(&s, &[0.0, 0.0]).unwrap().state;
        assert!(s.pursuers[0].captured && !s.all_captured());
        for _ in 0..5 {
            let r = env.step(&s, &[0.0, 0.0]).unwrap();
            assert_eq!(r.state.pursuers[0].position, s.pursuers[0].position);
            let expected = shaping_reward(s.distance_to_evader(0), r.state.distance_to_evader(0), 0.99);
            assert_eq!(r.rewards[0].r_pot, expected);
            assert_eq!(r.rewards[0].r_main, 0.0);
            s = r.state;
        }
    }

    #[test]
    fn simultaneous_mode_requires_joint_proximity() {
        let mut env = open_env(2);
        env.params.capture_mode = CaptureMode::Simultaneous;
        env.params.evader.behavior = EvaderBehavior::Stationary;
        let s = state_with(&[(2000.0, 2000.0, 0.0), (5000.0, 5000.0, 0.0)], (2310.0, 2000.0));
        let r = env.step(&s, &[0.0, 0.0]).unwrap();
        assert!(r.state.pursuers[0].captured);
        assert!(!r.done);
        // walking past the evader clears the flag again
        let mut s = r.state;
        for _ in 0..30 {
            s = env.step(&s, &[0.0, 0.0]).unwrap().state;
        }
        assert!(!s.pursuers[0].captured);
    }

    #[test]
    fn observation_range_cutoff_and_order() {
        let env = open_env(4);
        let s = state_with(
            &[(3000.0, 3000.0, 0.0), (3300.0, 3000.0, 0.0), (3000.0, 3200.0, 0.0), (3000.0, 5001.0, 0.0)],
            (4000.0, 4000.0),
        );
        let o = env.build_observation(&s, 0).unwrap();
        let d: Vec<f64> = o.neighbors.iter().map(|n| n.distance).collect();
        assert_eq!(d, vec![200.0, 300.0]);
        assert!((o.neighbors[0].bearing - PI / 2.0).abs() < 1e-12);
        assert!((o.phi_e - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn captured_teammates_become_obstacles_not_neighbors() {
        let env = open_env(2);
        let mut s = state_with(&[(3000.0, 3000.0, 0.0), (3300.0, 3000.0, 0.0)], (8000.0, 8000.0));
        s.pursuers[1].captured = true;
        let o = env.build_observation(&s, 0).unwrap();
        assert!(o.neighbors.is_empty());
        assert_eq!(o.d_o, 220.0);
        assert_eq!(o.phi_o, 0.0);
    }

    #[test]
    fn reward_examples() {
        assert!((shaping_reward(700.0, 300.0, 0.99) - 9.85).abs() < 1e-12);
        assert_eq!(obstacle_penalty(1.2 * 80.0, 80.0), -2.0);
        assert_eq!(obstacle_penalty(79.0, 80.0), -20.0);
        assert_eq!(obstacle_penalty(120.0, 80.0), 0.0);
        assert_eq!(potential(399.9), 15.0);
        assert_eq!(potential(400.0), 10.0);
        assert_eq!(potential(600.0), 5.0);
        assert_eq!(potential(800.0), 0.0);
    }

    #[test]
    fn heading_change_of_exactly_45_degrees_is_free() {
        let mut env = open_env(1);
        env.params.evader.behavior = EvaderBehavior::Stationary;
        let s = state_with(&[(2000.0, 2000.0, 0.0)], (8000.0, 8000.0));
        let r = env.step(&s, &[FRAC_PI_4]).unwrap();
        assert_eq!(r.rewards[0].r_time, 0.0);
        let r = env.step(&s, &[FRAC_PI_4 + 1e-9]).unwrap();
        assert_eq!(r.rewards[0].r_time, -5.0);
        let r = env.step(&s, &[PI]).unwrap();
        assert_eq!(r.rewards[0].r_time, -5.0);
    }

    #[test]
    fn teammate_collision_penalty() {
        let mut env = open_env(2);
        env.params.evader.behavior = EvaderBehavior::Stationary;
        let s = state_with(&[(2000.0, 2000.0, 0.0), (2200.0, 2000.0, PI)], (8000.0, 8000.0));
        let r = env.step(&s, &[0.0, PI]).unwrap();
        // 140 mm apart after both move 30 mm toward each other
        assert_eq!(r.rewards[0].r_tm, -20.0);
        assert_eq!(r.rewards[1].r_tm, -20.0);
        let total = r.rewards[0];
        assert_eq!(total.total, total.r_main + total.r_time + total.r_tm + total.r_o + total.r_pot);
    }

    #[test]
    fn evader_flees_single_pursuer_north() {
        let env = open_env(1);
        let s = state_with(&[(5000.0, 4000.0, 0.0)], (5000.0, 5000.0));
        let h = env.evader_policy(&s);
        // the sideways term is 0.3 of the flee vector, walls are out of range
        let expected = (1.0f64).atan2(0.3);
        // either side of north by the tangential bias
        assert!((h - expected).abs() < 1e-9 || (h - (PI - expected)).abs() < 1e-9, "{h}");
    }

    #[test]
    fn evader_flees_south_between_symmetric_pursuers_under_wall() {
        let env = open_env(2);
        // wall to the north at distance 200
        let s = state_with(&[(4000.0, 9800.0, 0.0), (6000.0, 9800.0, 0.0)], (5000.0, 9800.0));
        let h = env.evader_policy(&s);
        assert!((h + PI / 2.0).abs() < 1e-9, "{h}");
    }

    #[test]
    fn evader_keeps_heading_without_input() {
        let mut env = open_env(1);
        env.params.evader.sense_range = 10_000.0;
        let mut arena = Arena::empty(40_000.0, 40_000.0).unwrap();
        arena.pursuer_spawn = Rect::new(0.0, 0.0, 40_000.0, 40_000.0);
        arena.evader_spawn = arena.pursuer_spawn;
        env.arena = arena;
        let mut s = state_with(&[(1000.0, 1000.0, 0.0)], (20_000.0, 20_000.0));
        s.evader.heading = 1.234;
        assert_eq!(env.evader_policy(&s), 1.234);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn rollout_invariants(seed in any::<u64>(), commands in proptest::collection::vec(-PI..PI, 300)) {
            let env = PursuitEnv::new(crate::arena_file::bundled("train_fig5a").unwrap(), ScenarioParams::default()).unwrap();
            let (mut s, _) = env.reset(seed).unwrap();
            for (t, &c) in commands.iter().enumerate() {
                let headings = vec![c + t as f64 * 0.01; 3];
                let r = env.step(&s, &headings).unwrap();
                for (i, (a, b)) in s.pursuers.iter().zip(&r.state.pursuers).enumerate() {
                    prop_assert!(!a.captured || b.captured, "capture flag regressed for {}", i);
                    prop_assert!(!env.arena.in_collision(b.position, env.params.radius_p));
                    let moved = a.position.distance(b.position);
                    prop_assert!(moved <= 30.0 + 1e-9);
                }
                prop_assert!(!env.arena.in_collision(r.state.evader.position, env.params.radius_e));
                for i in 0..3 {
                    let brute: Vec<usize> = (0..3)
                        .filter(|&j| j != i && !r.state.pursuers[j].captured
                            && r.state.pursuers[i].position.distance(r.state.pursuers[j].position) <= env.params.d_sense)
                        .collect();
                    prop_assert_eq!(r.observations[i].neighbors.len(), brute.len());
                }
                match r.outcome {
                    Some(Outcome::Success) => prop_assert!(r.state.all_captured()),
                    Some(Outcome::Timeout) => prop_assert!(!r.state.all_captured()),
                    None => prop_assert!(!r.done),
                }
                s = r.state;
                if r.done { break; }
            }
        }
    }
}
