//! Seed splits, episode running, metrics and baseline policies.

use alloc::vec::Vec;
use core::ops::Range;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::env::EGO_ID;
use crate::env::{Env, EnvConfig, Episode, StepResult, TerminalState};
use crate::error::Error;
use crate::geometry::Vec2;
use crate::math;
use crate::rng::{SimRng, Stream};
use crate::sensing::Observation;
use crate::traffic::{branch_lanes, idm_accel, Agent, IdmParams};
use crate::vehicle::{Action, VehicleParams, WATTS_PER_HP};

/// Seeds `0..200` are held out for testing; training seeds start at 200.
pub const TEST_SEEDS: Range<u64> = 0..200;
pub const TRAIN_START: u64 = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SeedSplit {
    /// Number of training maps.
    pub train_count: u64,
}

impl SeedSplit {
    pub fn new(train_count: u64) -> Self {
        Self { train_count }
    }

    pub fn test(&self) -> Range<u64> {
        TEST_SEEDS
    }

    pub fn train(&self) -> Range<u64> {
        TRAIN_START..TRAIN_START + self.train_count
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EpisodeRecord {
    pub seed: u64,
    pub terminal: TerminalState,
    #[cfg_attr(feature = "serde", serde(rename = "return"))]
    pub episode_return: f64,
    pub cost: f64,
    pub steps: usize,
}

/// An episode that could not run, kept alongside the records.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeFailure {
    pub seed: u64,
    pub error: Error,
}

pub type EpisodeOutcome = Result<EpisodeRecord, EpisodeFailure>;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Metrics {
    pub episodes: usize,
    pub success_rate: f64,
    pub out_of_road_rate: f64,
    pub crash_rate: f64,
    pub max_step_rate: f64,
    pub mean_return: f64,
    pub mean_cost: f64,
}

impl Metrics {
    pub fn rate(&self, t: TerminalState) -> f64 {
        match t {
            TerminalState::Success => self.success_rate,
            TerminalState::OutOfRoad => self.out_of_road_rate,
            TerminalState::Crash => self.crash_rate,
            TerminalState::MaxStep => self.max_step_rate,
            TerminalState::None => 0.0,
        }
    }
}

/// Rates are terminal counts over the number of records.
pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<Metrics, Error> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = records.len() as f64;
    let count = |t: TerminalState| records.iter().filter(|r| r.terminal == t).count() as f64 / n;
    Ok(Metrics {
        episodes: records.len(),
        success_rate: count(TerminalState::Success),
        out_of_road_rate: count(TerminalState::OutOfRoad),
        crash_rate: count(TerminalState::Crash),
        max_step_rate: count(TerminalState::MaxStep),
        mean_return: records.iter().map(|r| r.episode_return).sum::<f64>() / n,
        mean_cost: records.iter().map(|r| r.cost).sum::<f64>() / n,
    })
}

pub trait Policy {
    /// Called before every episode.
    fn reset(&mut self, _seed: u64) {}

    fn act(&mut self, episode: &Episode, obs: &Observation, cfg: &EnvConfig) -> Action;
}

/// Always outputs the zero action.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn act(&mut self, _: &Episode, _: &Observation, _: &EnvConfig) -> Action {
        Action::default()
    }
}

/// Uniform actions from the policy stream of the episode seed.
#[derive(Clone, Debug)]
pub struct RandomPolicy {
    rng: SimRng,
}

impl Default for RandomPolicy {
    fn default() -> Self {
        Self {
            rng: SimRng::new(0, Stream::Policy),
        }
    }
}

impl Policy for RandomPolicy {
    fn reset(&mut self, seed: u64) {
        self.rng = SimRng::new(seed, Stream::Policy);
    }

    fn act(&mut self, _: &Episode, _: &Observation, _: &EnvConfig) -> Action {
        let steering = self.rng.uniform(-1.0, 1.0);
        let throttle = self.rng.uniform(-1.0, 1.0);
        Action::new(steering, throttle)
    }
}

/// Scripted baseline with privileged access to the route: pure pursuit
/// on the route lanes, IDM against the vehicle ahead.
#[derive(Clone, Debug)]
pub struct LaneFollowPolicy {
    pub cruise_speed: f64,
    /// Lateral acceleration allowed in curves, m/s².
    pub lateral_accel: f64,
    /// Braking used to plan for curves ahead, m/s².
    pub plan_decel: f64,
    pub min_lookahead: f64,
    pub lookahead_time: f64,
    pub idm: IdmParams,
}

impl Default for LaneFollowPolicy {
    fn default() -> Self {
        Self {
            cruise_speed: 15.0,
            lateral_accel: 3.0,
            plan_decel: 2.5,
            min_lookahead: 6.0,
            lookahead_time: 0.6,
            idm: IdmParams {
                desired_speed: 15.0,
                time_headway: 1.5,
                min_gap: 4.0,
                max_accel: 2.0,
                comfort_decel: 3.0,
                exponent: 4.0,
            },
        }
    }
}

const MIN_LANE_CHANGE_DISTANCE: f64 = 15.0;

/// A point on the ego's route lanes, `ahead` meters past its projection.
struct RouteCursor<'a> {
    ep: &'a Episode,
    index: usize,
    lane: u8,
    s: f64,
}

impl<'a> RouteCursor<'a> {
    /// Starts at the ego's projection, on the lane its route needs next.
    fn at_ego(ep: &'a Episode) -> Self {
        let pos = ep.ego.pose.position;
        let on = |lane: &crate::geometry::LaneGeometry| {
            lane.project_raw(pos)
                .map_or(0.0, |r| r.s.clamp(0.0, lane.length()))
        };
        let current = ep.current_lane();
        let target = target_lane(ep, current.length() - on(&current));
        let lane = ep.current_road().lane(target);
        Self {
            ep,
            index: ep.route_index(),
            lane: target,
            s: on(&lane),
        }
    }

    /// Walks the route lanes, calling `visit(distance_to_road_start, lane)`
    /// for every road touched, and returns the point `ahead` meters on.
    fn walk(&self, ahead: f64, mut visit: impl FnMut(f64, &crate::geometry::LaneGeometry)) -> Vec2 {
        let mut index = self.index;
        let mut lane_idx = self.lane;
        let mut s = self.s;
        let mut travelled = -self.s;
        let mut remaining = ahead;
        loop {
            let road = self.ep.road_at(index);
            lane_idx = lane_idx.min(road.lanes - 1);
            let lane = road.lane(lane_idx);
            visit(travelled, &lane);
            let len = lane.length();
            if s + remaining <= len {
                return lane.point_at(s + remaining);
            }
            if index + 1 >= self.ep.route.len() {
                let end = lane.end_pose();
                return end.position + end.direction() * (s + remaining - len);
            }
            remaining -= len - s;
            travelled += len;
            s = 0.0;
            index += 1;
        }
    }
}

/// The ego's lane, moved to the nearest lane that may take the next
/// branch or survive the next lane drop within the preview distance.
/// Constraints closer than [`MIN_LANE_CHANGE_DISTANCE`] are ignored: there
/// is no room left to change lanes.
fn target_lane(ep: &Episode, to_road_end: f64) -> u8 {
    let lane = ep.lane_index();
    let mut dist = to_road_end;
    for &gi in &ep.route[ep.route_index() + 1..] {
        if dist > 60.0 {
            break;
        }
        if dist < MIN_LANE_CHANGE_DISTANCE {
            dist += ep.network.road(ep.graph.roads[gi as usize].road).length();
            continue;
        }
        let road = ep.network.road(ep.graph.roads[gi as usize].road);
        let (lo, hi) = branch_lanes(&ep.network, &ep.graph, gi);
        let hi = hi.min(road.lanes - 1);
        if lane < lo || lane > hi {
            let wanted = lane.clamp(lo, hi);
            return if side_is_clear(ep, wanted > lane) {
                wanted
            } else {
                lane
            };
        }
        dist += road.length();
    }
    lane
}

/// True when no traffic vehicle is alongside the ego on the given side.
/// Lane indices grow to the right, which is negative local y.
fn side_is_clear(ep: &Episode, right: bool) -> bool {
    ep.traffic.vehicles().iter().all(|v| {
        let local = ep.ego.pose.to_local(v.state.pose.position);
        let lateral = if right { -local.y } else { local.y };
        !(-12.0..=8.0).contains(&local.x) || !(0.5..=6.0).contains(&lateral)
    })
}

impl LaneFollowPolicy {
    fn steering(&self, ep: &Episode, params: &VehicleParams) -> f64 {
        let v = ep.ego.speed;
        let lookahead = self.min_lookahead.max(self.lookahead_time * v);
        let target = RouteCursor::at_ego(ep).walk(lookahead, |_, _| {});
        let local = ep.ego.pose.to_local(target);
        let d2 = local.length_squared().max(1e-6);
        let curvature = 2.0 * local.y / d2;
        let delta = math::atan(curvature * params.wheelbase);
        delta / params.max_steer()
    }

    fn speed_limit(&self, ep: &Episode) -> f64 {
        let mut limit = self.cruise_speed;
        RouteCursor::at_ego(ep).walk(60.0, |dist, lane| {
            let k = lane.curvature().abs();
            if k > 0.0 {
                let v_curve = math::sqrt(self.lateral_accel / k);
                let x = dist.max(0.0);
                limit = limit.min(math::sqrt(v_curve * v_curve + 2.0 * self.plan_decel * x));
            }
        });
        limit
    }

    /// Nearest body ahead within the lane corridor: `(gap, speed)`.
    fn leader(&self, ep: &Episode, params: &VehicleParams) -> Option<(f64, f64)> {
        let ego = ep.ego.pose;
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |pos: Vec2, heading: f64, speed: f64, length: f64| {
            let local = ego.to_local(pos);
            if local.x <= 0.0 || local.x > 80.0 {
                return;
            }
            let corridor = 2.6 + 0.02 * local.x;
            if local.y.abs() > corridor {
                return;
            }
            let gap = local.x - 0.5 * (params.length + length);
            let along = speed * math::cos(heading - ego.heading);
            if best.is_none_or(|(g, _)| gap < g) {
                best = Some((gap, along.max(0.0)));
            }
        };
        for v in ep.traffic.vehicles() {
            consider(
                v.state.pose.position,
                v.state.pose.heading,
                v.state.speed,
                v.length,
            );
        }
        for o in &ep.obstacles {
            consider(o.center, o.heading, 0.0, 2.0 * o.half_length);
        }
        best
    }

    /// Gap to the yield line when the ego must let merging traffic go first.
    fn merge_gap(&self, ep: &Episode, params: &VehicleParams) -> Option<f64> {
        let center = ep.current_road().center_line();
        let remaining = center.length()
            - center
                .project_raw(ep.ego.pose.position)
                .map_or(0.0, |r| r.s);
        let me = Agent {
            id: EGO_ID,
            pose: ep.ego.pose,
            speed: ep.ego.speed,
            length: params.length,
        };
        let agents: Vec<Agent> = ep.traffic.agents().collect();
        ep.traffic.merges().yield_gap_ahead(
            &ep.network,
            &ep.graph,
            &ep.route[ep.route_index()..],
            remaining,
            &me,
            &agents,
        )
    }

    /// Throttle that yields acceleration `accel` at the current speed.
    fn throttle_for(accel: f64, v: f64, params: &VehicleParams) -> f64 {
        let v_eff = v.max(params.min_power_speed);
        let force = params.mass * (accel + params.drag * v);
        if force >= 0.0 {
            force * v_eff / (params.max_engine_hp * WATTS_PER_HP)
        } else {
            force * v_eff / (params.max_brake_hp * WATTS_PER_HP)
        }
    }
}

impl Policy for LaneFollowPolicy {
    fn act(&mut self, ep: &Episode, _: &Observation, cfg: &EnvConfig) -> Action {
        let params = &cfg.vehicle;
        let steering = self.steering(ep, params);
        let mut idm = self.idm;
        idm.desired_speed = self.speed_limit(ep).max(1.0);
        let v = ep.ego.speed;
        let mut leader = self.leader(ep, params);
        if let Some(gap) = self.merge_gap(ep, params) {
            if leader.is_none_or(|(g, _)| gap < g) {
                leader = Some((gap, 0.0));
            }
        }
        let accel = match leader {
            Some((gap, speed)) => idm_accel(v, speed, gap, &idm).value,
            None => idm_accel(v, v, f64::INFINITY, &idm).value,
        };
        Action::new(steering, Self::throttle_for(accel, v, params))
    }
}

/// Runs one episode to completion, reporting every step to `on_step`.
pub fn run_episode_with(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: u64,
    mut on_step: impl FnMut(&Episode, Action, &StepResult),
) -> Result<EpisodeRecord, Error> {
    policy.reset(seed);
    let mut obs = env.reset(seed)?;
    let mut episode_return = 0.0;
    loop {
        let ep = env.episode().ok_or(Error::NotReset)?;
        let action = policy.act(ep, &obs, &env.config);
        let result = env.step(action)?;
        episode_return += result.reward;
        on_step(env.episode().ok_or(Error::NotReset)?, action, &result);
        if result.done {
            let ep = env.episode().ok_or(Error::NotReset)?;
            return Ok(EpisodeRecord {
                seed,
                terminal: result.info.terminal,
                episode_return,
                cost: ep.total_cost,
                steps: ep.steps,
            });
        }
        obs = result.obs;
    }
}

pub fn run_episode(
    env: &mut Env,
    policy: &mut dyn Policy,
    seed: u64,
) -> Result<EpisodeRecord, Error> {
    run_episode_with(env, policy, seed, |_, _, _| {})
}

/// One episode per seed, in seed order. Failing episodes are reported,
/// not fatal.
pub fn run_episodes(
    policy: &mut dyn Policy,
    seeds: &[u64],
    cfg: &EnvConfig,
) -> Result<Vec<EpisodeOutcome>, Error> {
    if seeds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut env = Env::new(cfg.clone())?;
    Ok(seeds
        .iter()
        .map(|&seed| {
            run_episode(&mut env, policy, seed).map_err(|error| EpisodeFailure { seed, error })
        })
        .collect())
}

/// Records of the successful outcomes.
pub fn completed(outcomes: &[EpisodeOutcome]) -> Vec<EpisodeRecord> {
    outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().copied())
        .collect()
}
