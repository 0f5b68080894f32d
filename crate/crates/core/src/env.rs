//! The reset/step environment: ego tracking along its route, termination,
//! reward and the safety cost channel.

use alloc::boxed::Box;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::blocks::{Road, SocketRef};
use crate::error::Error;
use crate::geometry::{discretize, obb_overlap, Aabb, LaneGeometry, Obb, Pose, Segment, Vec2};
use crate::pgmap::{generate_map, MapConfig, NetworkGraph, RoadNetwork};
use crate::rng::{SimRng, Stream};
use crate::sensing::{assemble_observation, lidar_scan, Observation, ObservationInputs, Sighting};
use crate::traffic::{route, route_roads, Agent, TrafficConfig, TrafficManager};
use crate::vehicle::{
    map_action, step_dynamics, Action, VehicleParams, VehicleState, STEP_SECONDS,
};

/// Id used for the ego in traffic neighbor lists.
pub const EGO_ID: u32 = u32::MAX;
/// Longitudinal window before the destination socket that counts as
/// arrival, meters.
pub const SUCCESS_DISTANCE: f64 = 5.0;
/// Margin a new lane must win by before the current lane switches.
pub const LANE_HYSTERESIS: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RewardConfig {
    pub c_disp: f64,
    pub c_speed: f64,
    pub c_steering: f64,
    pub c_term: f64,
    pub success: f64,
    pub crash: f64,
    pub out_of_road: f64,
    pub max_step: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            c_disp: 1.0,
            c_speed: 0.1,
            c_steering: 0.1,
            c_term: 1.0,
            success: 20.0,
            crash: -10.0,
            out_of_road: -5.0,
            max_step: 0.0,
        }
    }
}

impl RewardConfig {
    pub fn payoff(&self, t: TerminalState) -> f64 {
        match t {
            TerminalState::None => 0.0,
            TerminalState::MaxStep => self.max_step,
            TerminalState::OutOfRoad => self.out_of_road,
            TerminalState::Crash => self.crash,
            TerminalState::Success => self.success,
        }
    }
}

/// Where each episode's map comes from.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum MapSource {
    /// The map generated from the episode seed.
    EpisodeSeed,
    /// One fixed map seed for every episode.
    Seed(u64),
    /// A prebuilt network.
    Network(Box<RoadNetwork>),
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EnvConfig {
    pub map_source: MapSource,
    pub map: MapConfig,
    pub traffic: TrafficConfig,
    pub reward: RewardConfig,
    pub max_steps: usize,
    /// Crashes cost 1 per step instead of ending the episode.
    pub safety_mode: bool,
    /// Static obstacles per 100 m of road, placed only in safety mode.
    pub obstacle_density: f64,
    pub vehicle: VehicleParams,
    /// Lidar also hits road edges.
    pub lidar_walls: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            map_source: MapSource::EpisodeSeed,
            map: MapConfig::default(),
            traffic: TrafficConfig::default(),
            reward: RewardConfig::default(),
            max_steps: 1500,
            safety_mode: false,
            obstacle_density: 0.5,
            vehicle: VehicleParams::default(),
            lidar_walls: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be at least 1"));
        }
        let r = &self.reward;
        let all = [
            r.c_disp,
            r.c_speed,
            r.c_steering,
            r.c_term,
            r.success,
            r.crash,
            r.out_of_road,
            r.max_step,
        ];
        if !all.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter(
                "reward coefficients must be finite",
            ));
        }
        if self.obstacle_density.is_nan() || self.obstacle_density < 0.0 {
            return Err(Error::InvalidParameter(
                "obstacle density must be non-negative",
            ));
        }
        self.map.validate()?;
        self.traffic.validate()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum TerminalState {
    #[default]
    None,
    MaxStep,
    OutOfRoad,
    Crash,
    Success,
}

impl TerminalState {
    pub const ALL: [TerminalState; 5] = [
        TerminalState::None,
        TerminalState::MaxStep,
        TerminalState::OutOfRoad,
        TerminalState::Crash,
        TerminalState::Success,
    ];

    /// Integer code used by the flat interface.
    pub fn code(self) -> i32 {
        match self {
            TerminalState::None => 0,
            TerminalState::MaxStep => 1,
            TerminalState::OutOfRoad => 2,
            TerminalState::Crash => 3,
            TerminalState::Success => 4,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            TerminalState::None => "none",
            TerminalState::MaxStep => "max_step",
            TerminalState::OutOfRoad => "out_of_road",
            TerminalState::Crash => "crash",
            TerminalState::Success => "success",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RewardComponents {
    pub r_disp: f64,
    pub r_speed: f64,
    pub r_steering: f64,
    pub r_term: f64,
}

impl RewardComponents {
    pub fn as_array(&self) -> [f64; 4] {
        [self.r_disp, self.r_speed, self.r_steering, self.r_term]
    }

    /// Weighted sum; the one expression every reward goes through.
    pub fn total(&self, c: &RewardConfig) -> f64 {
        c.c_disp * self.r_disp
            + c.c_speed * self.r_speed
            + c.c_steering * self.r_steering
            + c.c_term * self.r_term
    }
}

/// Per-step quantities the reward depends on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardInputs {
    /// Longitudinal advance along the current lane, meters.
    pub displacement: f64,
    pub speed: f64,
    pub max_speed: f64,
    pub steering: f64,
    pub prev_steering: f64,
}

pub fn compute_reward(
    cfg: &RewardConfig,
    inp: &RewardInputs,
    terminal: TerminalState,
) -> (f64, RewardComponents) {
    let c = if terminal == TerminalState::None {
        let ratio = inp.speed / inp.max_speed;
        RewardComponents {
            r_disp: inp.displacement,
            r_speed: ratio,
            r_steering: -(inp.steering - inp.prev_steering).abs() * ratio,
            r_term: 0.0,
        }
    } else {
        RewardComponents {
            r_term: cfg.payoff(terminal),
            ..RewardComponents::default()
        }
    };
    (c.total(cfg), c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StepInfo {
    pub terminal: TerminalState,
    pub cost: f64,
    pub components: RewardComponents,
    pub step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Flat info for foreign callers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlatInfo {
    pub terminal: i32,
    pub cost: f32,
    pub components: [f32; 4],
}

/// Center line and bounds of one road, for on-road tests.
#[derive(Clone, Debug)]
struct RoadExtent {
    center: LaneGeometry,
    half_width: f64,
    bounds: Aabb,
}

impl RoadExtent {
    fn new(road: &Road) -> Self {
        let mut bounds = Aabb::EMPTY;
        for k in [0, road.lanes] {
            for p in discretize(&road.boundary(k)) {
                bounds.include(p);
            }
        }
        Self {
            center: road.center_line(),
            half_width: road.width() / 2.0,
            bounds: bounds.expanded(1.0),
        }
    }

    fn contains(&self, p: Vec2) -> bool {
        if !self.bounds.contains(p) {
            return false;
        }
        match self.center.project_raw(p) {
            Ok(raw) => {
                (-1e-9..=self.center.length() + 1e-9).contains(&raw.s)
                    && raw.d.abs() <= self.half_width
            }
            Err(_) => false,
        }
    }
}

/// State of one running episode.
pub struct Episode {
    pub seed: u64,
    pub network: RoadNetwork,
    pub graph: NetworkGraph,
    /// Graph roads from the spawn road to the destination road.
    pub route: Vec<u32>,
    pub ego: VehicleState,
    pub traffic: TrafficManager,
    pub obstacles: Vec<Obb>,
    pub steps: usize,
    pub done: bool,
    pub total_cost: f64,
    pub last_info: StepInfo,
    route_index: usize,
    lane: u8,
    extents: Vec<RoadExtent>,
    walls: Vec<Segment>,
    /// Exit socket pose of the block each route road belongs to.
    nav_targets: Vec<Pose>,
}

impl Episode {
    pub fn route_index(&self) -> usize {
        self.route_index
    }

    /// Lane index on the current route road.
    pub fn lane_index(&self) -> u8 {
        self.lane
    }

    pub fn road_at(&self, route_index: usize) -> &Road {
        let gi = self.route[route_index.min(self.route.len() - 1)];
        self.network.road(self.graph.roads[gi as usize].road)
    }

    pub fn current_road(&self) -> &Road {
        self.road_at(self.route_index)
    }

    pub fn current_lane(&self) -> LaneGeometry {
        self.current_road().lane(self.lane)
    }

    pub fn destination(&self) -> Option<SocketRef> {
        self.network.destination
    }

    pub fn ego_footprint(&self, params: &VehicleParams) -> Obb {
        self.ego.footprint(params)
    }

    /// True iff `p` lies on some road surface.
    pub fn on_road(&self, p: Vec2) -> bool {
        self.extents.iter().any(|e| e.contains(p))
    }

    pub fn nav_target(&self) -> Pose {
        self.nav_targets[self.route_index]
    }

    fn agents(&self, params: &VehicleParams) -> Vec<Agent> {
        let mut out = Vec::with_capacity(1 + self.obstacles.len());
        out.push(Agent {
            id: EGO_ID,
            pose: self.ego.pose,
            speed: self.ego.speed,
            length: params.length,
        });
        for (k, o) in self.obstacles.iter().enumerate() {
            out.push(Agent {
                id: EGO_ID - 1 - k as u32,
                pose: Pose::new(o.center, o.heading),
                speed: 0.0,
                length: 2.0 * o.half_length,
            });
        }
        out
    }

    /// Re-anchors the ego to its route road and lane.
    fn track(&mut self) {
        let pos = self.ego.pose.position;
        while self.route_index + 1 < self.route.len() {
            let center = self.current_road().center_line();
            match center.project_raw(pos) {
                Ok(raw) if raw.s > center.length() => self.route_index += 1,
                _ => break,
            }
        }
        let road = self.current_road();
        let mut lane = self.lane.min(road.lanes - 1);
        let offset = |i: u8| {
            road.lane(i)
                .project_raw(pos)
                .map_or(f64::INFINITY, |r| r.d.abs())
        };
        let mut best = offset(lane);
        for i in 0..road.lanes {
            let d = offset(i);
            if d + LANE_HYSTERESIS < best {
                best = d;
                lane = i;
            }
        }
        self.lane = lane;
    }

    /// Longitudinal progress between two points along the current lane.
    fn advance(&self, from: Vec2, to: Vec2) -> f64 {
        let lane = self.current_lane();
        match (lane.project_raw(from), lane.project_raw(to)) {
            (Ok(a), Ok(b)) => b.s - a.s,
            _ => 0.0,
        }
    }

    fn arrived(&self) -> bool {
        if self.route_index + 1 != self.route.len() {
            return false;
        }
        let center = self.current_road().center_line();
        match center.project_raw(self.ego.pose.position) {
            Ok(raw) => {
                raw.s >= center.length() - SUCCESS_DISTANCE
                    && raw.d.abs() <= self.current_road().width() / 2.0
            }
            Err(_) => false,
        }
    }

    fn crash(&self, params: &VehicleParams) -> bool {
        let me = self.ego.footprint(params);
        self.traffic
            .vehicles()
            .iter()
            .any(|v| obb_overlap(&me, &v.footprint()))
            || self.obstacles.iter().any(|o| obb_overlap(&me, o))
    }

    fn observe(&self, cfg: &EnvConfig) -> Observation {
        let mut bodies: Vec<Obb> = self
            .traffic
            .vehicles()
            .iter()
            .map(|v| v.footprint())
            .collect();
        bodies.extend_from_slice(&self.obstacles);
        let lidar = lidar_scan(self.ego.pose, &bodies, &self.walls);

        let road = self.current_road();
        let center = road.center_line();
        let pos = self.ego.pose.position;
        let (lateral, s) = center
            .project_raw(pos)
            .map_or((0.0, 0.0), |r| (r.d, r.s.clamp(0.0, center.length())));
        let lane = self.current_lane();
        let lane_s = lane
            .project_raw(pos)
            .map_or(s, |r| r.s.clamp(0.0, lane.length()));
        let half = road.width() / 2.0;
        let sightings: Vec<Sighting> = self
            .traffic
            .vehicles()
            .iter()
            .map(|v| Sighting {
                id: v.id,
                pose: v.state.pose,
            })
            .collect();
        assemble_observation(&ObservationInputs {
            ego: &self.ego,
            params: &cfg.vehicle,
            lane_heading: lane.heading_at(lane_s),
            left_distance: half - lateral,
            right_distance: half + lateral,
            road_width: road.width(),
            nav_target: self.nav_target(),
            lidar: &lidar,
            others: &sightings,
        })
    }
}

pub struct Env {
    pub config: EnvConfig,
    episode: Option<Episode>,
}

impl Env {
    pub fn new(config: EnvConfig) -> Result<Self, Error> {
        config.validate()?;
        Ok(Self {
            config,
            episode: None,
        })
    }

    pub fn episode(&self) -> Option<&Episode> {
        self.episode.as_ref()
    }

    /// Mutable access for scripted scenarios. Lane tracking catches up on
    /// the next step.
    pub fn episode_mut(&mut self) -> Option<&mut Episode> {
        self.episode.as_mut()
    }

    pub fn network_for(&self, seed: u64) -> Result<RoadNetwork, Error> {
        match &self.config.map_source {
            MapSource::EpisodeSeed => generate_map(&self.config.map, seed),
            MapSource::Seed(s) => generate_map(&self.config.map, *s),
            MapSource::Network(n) => Ok((**n).clone()),
        }
    }

    /// Starts an episode. Deterministic in `(config, seed)`.
    pub fn reset(&mut self, seed: u64) -> Result<Observation, Error> {
        self.episode = None;
        let cfg = &self.config;
        let network = self.network_for(seed)?;
        let graph = network.graph();
        let dest = network
            .destination
            .ok_or(Error::InvalidParameter("network has no destination"))?;

        let start_road = network.blocks[0].roads[0].clone();
        let lane = start_road.lanes / 2;
        let lane_geom = start_road.lane(lane);
        let s0 = (cfg.vehicle.length / 2.0).min(lane_geom.length());
        let ego_pose = Pose::new(lane_geom.point_at(s0), lane_geom.heading_at(s0));
        let ego = VehicleState::at_rest(ego_pose);

        let start_node = graph.roads[0].from;
        let dest_node = graph.socket_node(&network, dest);
        let nodes = route(&graph, start_node, dest_node)?;
        let path = route_roads(&graph, &nodes);
        if path.is_empty() {
            return Err(Error::Unreachable {
                from: start_node,
                to: dest_node,
            });
        }

        let obstacles = if cfg.safety_mode {
            place_obstacles(&network, cfg, seed, ego_pose.position)
        } else {
            Vec::new()
        };
        let mut keep_clear: Vec<Vec2> = obstacles.iter().map(|o| o.center).collect();
        keep_clear.push(ego_pose.position);
        let traffic = TrafficManager::allocate(
            &network,
            &graph,
            cfg.traffic.clone(),
            SimRng::new(seed, Stream::Traffic),
            &keep_clear,
        )?;

        let extents = network.roads().map(|(_, r)| RoadExtent::new(r)).collect();
        let walls = if cfg.lidar_walls {
            network
                .blocks
                .iter()
                .flat_map(|b| b.boundary_segments())
                .collect()
        } else {
            Vec::new()
        };
        let nav_targets = navigation_targets(&network, &graph, &path);

        let ep = Episode {
            seed,
            network,
            graph,
            route: path,
            ego,
            traffic,
            obstacles,
            steps: 0,
            done: false,
            total_cost: 0.0,
            last_info: StepInfo::default(),
            route_index: 0,
            lane,
            extents,
            walls,
            nav_targets,
        };
        let obs = ep.observe(cfg);
        self.episode = Some(ep);
        Ok(obs)
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult, Error> {
        let cfg = &self.config;
        let ep = self.episode.as_mut().ok_or(Error::NotReset)?;
        if ep.done {
            return Err(Error::StepAfterDone);
        }
        let action = Action::new(action.steering, action.throttle);
        let prev_steering = ep.ego.last_steering_action;
        let prev_pos = ep.ego.pose.position;

        let u = map_action(action, &cfg.vehicle);
        ep.ego = step_dynamics(&ep.ego, &u, &cfg.vehicle, STEP_SECONDS);
        ep.ego.last_steering_action = action.steering;
        let agents = ep.agents(&cfg.vehicle);
        ep.traffic
            .step(&ep.network, &ep.graph, &agents, STEP_SECONDS);
        ep.steps += 1;
        ep.track();

        let crashed = ep.crash(&cfg.vehicle);
        let cost = if crashed && cfg.safety_mode { 1.0 } else { 0.0 };
        let terminal = if crashed && !cfg.safety_mode {
            TerminalState::Crash
        } else if !ep.on_road(ep.ego.pose.position) {
            TerminalState::OutOfRoad
        } else if ep.arrived() {
            TerminalState::Success
        } else if ep.steps >= cfg.max_steps {
            TerminalState::MaxStep
        } else {
            TerminalState::None
        };

        let inputs = RewardInputs {
            displacement: ep.advance(prev_pos, ep.ego.pose.position),
            speed: ep.ego.speed,
            max_speed: cfg.vehicle.max_speed,
            steering: action.steering,
            prev_steering,
        };
        let (reward, components) = compute_reward(&cfg.reward, &inputs, terminal);
        let done = terminal != TerminalState::None;
        ep.done = done;
        ep.total_cost += cost;
        let info = StepInfo {
            terminal,
            cost,
            components,
            step: ep.steps,
        };
        ep.last_info = info;
        Ok(StepResult {
            obs: ep.observe(cfg),
            reward,
            done,
            info,
        })
    }

    /// Flat interface: observation as 32-bit floats.
    pub fn reset_flat(&mut self, seed: u64) -> Result<Vec<f32>, Error> {
        Ok(self.reset(seed)?.to_f32())
    }

    /// Flat interface: `[steering, throttle]` in, flat outputs back.
    pub fn step_flat(
        &mut self,
        action: [f32; 2],
    ) -> Result<(Vec<f32>, f32, bool, FlatInfo), Error> {
        let r = self.step(Action::new(action[0] as f64, action[1] as f64))?;
        let c = r.info.components.as_array();
        let info = FlatInfo {
            terminal: r.info.terminal.code(),
            cost: r.info.cost as f32,
            components: [c[0] as f32, c[1] as f32, c[2] as f32, c[3] as f32],
        };
        Ok((r.obs.to_f32(), r.reward as f32, r.done, info))
    }
}

/// For each route road, the center and travel heading of the socket where
/// the route leaves that road's block.
fn navigation_targets(net: &RoadNetwork, g: &NetworkGraph, path: &[u32]) -> Vec<Pose> {
    let blocks: Vec<u32> = path
        .iter()
        .map(|&r| g.roads[r as usize].road.block)
        .collect();
    (0..path.len())
        .map(|i| {
            let mut j = i;
            while j + 1 < path.len() && blocks[j + 1] == blocks[i] {
                j += 1;
            }
            let block = &net.blocks[blocks[i] as usize];
            let exit_node = g.roads[path[j] as usize].to;
            block
                .sockets
                .iter()
                .skip(1)
                .find(|s| g.block_nodes[blocks[i] as usize][s.node as usize] == exit_node)
                .map(|s| Pose::new(s.center(), s.pose.heading))
                .unwrap_or_else(|| {
                    let lane = net.road(g.roads[path[j] as usize].road).center_line();
                    lane.end_pose()
                })
        })
        .collect()
}

/// Static obstacles in safety mode: `⌊density·L/100⌋` rectangles on
/// spawn points at least 20 m from the ego.
fn place_obstacles(net: &RoadNetwork, cfg: &EnvConfig, seed: u64, ego: Vec2) -> Vec<Obb> {
    let count = libm::floor(cfg.obstacle_density * net.total_length() / 100.0 + 1e-9) as usize;
    if count == 0 {
        return Vec::new();
    }
    let mut rng = SimRng::new(seed, Stream::Obstacles);
    let mut points = net.spawn_points();
    rng.shuffle(&mut points);
    let mut out: Vec<Obb> = Vec::with_capacity(count);
    for (block, sp) in points {
        if out.len() == count {
            break;
        }
        let lane = net.blocks[block as usize].roads[sp.road as usize].lane(sp.lane);
        let pose = Pose::new(lane.point_at(sp.s), lane.heading_at(sp.s));
        if pose.position.distance(ego) < 20.0
            || out.iter().any(|o| o.center.distance(pose.position) < 10.0)
        {
            continue;
        }
        out.push(Obb::new(pose, cfg.vehicle.length, cfg.vehicle.width));
    }
    out
}
