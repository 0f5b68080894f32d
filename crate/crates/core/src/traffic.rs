//! Traffic manager: density-based allocation, IDM car following,
//! gap-based lane changes and A* routing over the road graph.
//!
//! Traffic vehicles move in lane coordinates: each one tracks the road it
//! is on, a lane index, the arc length along that lane and a lateral
//! offset that is non-zero only while changing lanes. Poses are derived
//! from those coordinates after every step.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::{Ordering, Reverse};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::blocks::BlockType;
use crate::error::Error;
use crate::geometry::{Obb, Pose, Vec2};
use crate::math::{self, PI};
use crate::pgmap::{NetworkGraph, RoadNetwork};
use crate::rng::SimRng;
use crate::vehicle::VehicleState;

/// Duration of a lane change, seconds.
pub const LANE_CHANGE_SECONDS: f64 = 1.5;
/// Required acceleration gain before a discretionary lane change.
pub const LANE_CHANGE_THRESHOLD: f64 = 0.2;
/// Distance over which leaders and followers are searched.
pub const LOOKAHEAD: f64 = 100.0;
/// Minimum spacing between vehicles placed at allocation.
const SPAWN_CLEARANCE: f64 = 8.0;
/// Distance kept from non-traffic bodies when respawning a vehicle.
const REALLOCATION_CLEARANCE: f64 = 30.0;
/// Cool-down between two discretionary lane changes, seconds.
const LANE_CHANGE_COOLDOWN: f64 = 3.0;
/// Distance before a branch at which vehicles start moving to a lane
/// that may take it.
const BRANCH_PREVIEW: f64 = 80.0;
/// Distance to a merge node within which arrival order is enforced.
const MERGE_ZONE: f64 = 25.0;
/// Largest heading offset from the lane while changing lanes, radians.
const MAX_SLIP: f64 = 0.15;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TrafficConfig {
    /// Vehicles per lane per 10 m.
    pub density: f64,
    /// Share of aggressive drivers.
    pub aggressive_fraction: f64,
    /// Range of per-vehicle speed limits, m/s.
    pub speed_limit: (f64, f64),
    /// Lateral acceleration traffic accepts in curves, m/s².
    pub curve_lateral_accel: f64,
    pub lane_changes: bool,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            density: 0.1,
            aggressive_fraction: 0.3,
            speed_limit: (14.0, 22.0),
            curve_lateral_accel: 2.5,
            lane_changes: true,
            vehicle_length: 4.5,
            vehicle_width: 2.0,
        }
    }
}

impl TrafficConfig {
    pub fn with_density(density: f64) -> Self {
        Self {
            density,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::InvalidParameter("traffic density must be in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.aggressive_fraction) {
            return Err(Error::InvalidParameter(
                "aggressive fraction must be in [0, 1]",
            ));
        }
        if !(self.speed_limit.0 > 0.0 && self.speed_limit.0 <= self.speed_limit.1) {
            return Err(Error::InvalidParameter("speed limit range"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Behavior {
    Conservative,
    Aggressive,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct IdmParams {
    pub desired_speed: f64,
    pub time_headway: f64,
    pub min_gap: f64,
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub exponent: f64,
}

impl IdmParams {
    pub fn for_behavior(behavior: Behavior, speed_limit: f64) -> Self {
        match behavior {
            Behavior::Conservative => Self {
                desired_speed: 0.75 * speed_limit,
                time_headway: 2.0,
                min_gap: 3.0,
                max_accel: 1.5,
                comfort_decel: 1.67,
                exponent: 4.0,
            },
            Behavior::Aggressive => Self {
                desired_speed: speed_limit,
                time_headway: 1.0,
                min_gap: 2.0,
                max_accel: 2.5,
                comfort_decel: 2.5,
                exponent: 4.0,
            },
        }
    }

    /// Deceleration floor applied to every IDM output.
    pub fn emergency_decel(&self) -> f64 {
        -2.0 * self.comfort_decel
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdmAccel {
    pub value: f64,
    /// The gap was non-positive and the emergency value was returned.
    pub emergency: bool,
}

/// Intelligent driver model acceleration. Pass `f64::INFINITY` as `gap`
/// for a free road.
pub fn idm_accel(v: f64, v_lead: f64, gap: f64, p: &IdmParams) -> IdmAccel {
    let floor = p.emergency_decel();
    if gap.is_nan() || gap <= 0.0 {
        return IdmAccel {
            value: floor,
            emergency: true,
        };
    }
    let free = 1.0 - math::pow(v / p.desired_speed, p.exponent);
    let interaction = if gap.is_finite() {
        let dv = v - v_lead;
        let dynamic =
            v * p.time_headway + v * dv / (2.0 * math::sqrt(p.max_accel * p.comfort_decel));
        let desired = p.min_gap + dynamic.max(0.0);
        (desired / gap) * (desired / gap)
    } else {
        0.0
    };
    IdmAccel {
        value: (p.max_accel * (free - interaction)).max(floor),
        emergency: false,
    }
}

/// Applies an acceleration for `dt` without reversing. Returns the new
/// speed and the distance covered.
pub fn advance_longitudinal(v: f64, accel: f64, dt: f64) -> (f64, f64) {
    let v_next = (v + accel * dt).max(0.0);
    if accel < 0.0 && v + accel * dt < 0.0 {
        // Stops within the step.
        let t_stop = -v / accel;
        return (0.0, 0.5 * v * t_stop);
    }
    (v_next, 0.5 * (v + v_next) * dt)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Bumper-to-bumper gap, meters.
    pub gap: f64,
    pub speed: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LaneGaps {
    pub front: Option<Neighbor>,
    pub rear: Option<Neighbor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LaneChoice {
    Stay,
    Left,
    Right,
}

fn accel_behind(v: f64, front: Option<Neighbor>, p: &IdmParams) -> f64 {
    match front {
        Some(n) => idm_accel(v, n.speed, n.gap, p).value,
        None => idm_accel(v, v, f64::INFINITY, p).value,
    }
}

/// Headway on both ends of the target lane, and neither the changer nor
/// its new follower (judged with the changer's parameters) has to brake
/// harder than the comfortable deceleration.
fn gap_is_safe(v: f64, gaps: &LaneGaps, p: &IdmParams) -> bool {
    let front_ok = gaps.front.is_none_or(|f| {
        f.gap > p.min_gap + v * p.time_headway
            && idm_accel(v, f.speed, f.gap, p).value >= -p.comfort_decel
    });
    let rear_ok = gaps.rear.is_none_or(|r| {
        r.gap > p.min_gap + r.speed * p.time_headway
            && idm_accel(r.speed, v, r.gap, p).value >= -p.comfort_decel
    });
    front_ok && rear_ok
}

/// Discretionary lane change: safe gaps on both ends of the target lane
/// and an acceleration gain of at least [`LANE_CHANGE_THRESHOLD`].
pub fn lane_change_decision(
    v: f64,
    p: &IdmParams,
    current: &LaneGaps,
    left: Option<&LaneGaps>,
    right: Option<&LaneGaps>,
) -> LaneChoice {
    let here = accel_behind(v, current.front, p);
    let mut best = (LaneChoice::Stay, LANE_CHANGE_THRESHOLD);
    for (choice, gaps) in [(LaneChoice::Left, left), (LaneChoice::Right, right)] {
        let Some(g) = gaps else { continue };
        if !gap_is_safe(v, g, p) {
            continue;
        }
        let gain = accel_behind(v, g.front, p) - here;
        if gain >= best.1 && (best.0 == LaneChoice::Stay || gain > best.1) {
            best = (choice, gain);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// A* over the directed road graph. Returns the node sequence of a
/// shortest path by road length; ties go to the lower node id.
pub fn route(g: &NetworkGraph, from: u32, to: u32) -> Result<Vec<u32>, Error> {
    let n = g.node_count();
    for id in [from, to] {
        if id as usize >= n {
            return Err(Error::UnknownNode(id));
        }
    }
    if from == to {
        return Ok(vec![from]);
    }
    let goal = g.nodes[to as usize];
    let h = |id: u32| g.nodes[id as usize].distance(goal);
    let mut best = vec![f64::INFINITY; n];
    let mut came_from: Vec<Option<u32>> = vec![None; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    best[from as usize] = 0.0;
    open.push(Reverse((OrdF64(h(from)), from)));
    while let Some(Reverse((_, node))) = open.pop() {
        if node == to {
            let mut path = vec![to];
            let mut cur = to;
            while let Some(prev) = came_from[cur as usize] {
                path.push(prev);
                cur = prev;
            }
            path.reverse();
            return Ok(path);
        }
        if core::mem::replace(&mut closed[node as usize], true) {
            continue;
        }
        for &ri in &g.out_roads[node as usize] {
            let road = &g.roads[ri as usize];
            let next = road.to;
            if closed[next as usize] {
                continue;
            }
            let cost = best[node as usize] + road.length;
            if cost < best[next as usize] {
                best[next as usize] = cost;
                came_from[next as usize] = Some(node);
                open.push(Reverse((OrdF64(cost + h(next)), next)));
            }
        }
    }
    Err(Error::Unreachable { from, to })
}

/// Sum of road lengths along a node path.
pub fn path_length(g: &NetworkGraph, path: &[u32]) -> f64 {
    path.windows(2)
        .map(|w| {
            g.road_between(w[0], w[1])
                .map_or(f64::INFINITY, |r| g.roads[r as usize].length)
        })
        .sum()
}

/// Graph road indices along a node path.
pub fn route_roads(g: &NetworkGraph, path: &[u32]) -> Vec<u32> {
    path.windows(2)
        .filter_map(|w| g.road_between(w[0], w[1]))
        .collect()
}

/// The road leaving `node` open to every lane: the one with the smallest
/// absolute curvature, lowest index on ties. `None` for dead ends.
pub fn main_branch(net: &RoadNetwork, g: &NetworkGraph, node: u32) -> Option<u32> {
    let k = |r: u32| {
        net.road(g.roads[r as usize].road)
            .reference
            .curvature()
            .abs()
    };
    g.out_roads[node as usize]
        .iter()
        .copied()
        .min_by(|&a, &b| k(a).total_cmp(&k(b)).then(a.cmp(&b)))
}

/// Inclusive lane range from which graph road `gi` may be entered. Where
/// several roads leave one node, the main branch is open to every lane and
/// branches curving left (right) of it only to the leftmost (rightmost)
/// lane, so paths leaving one node never cross.
pub fn branch_lanes(net: &RoadNetwork, g: &NetworkGraph, gi: u32) -> (u8, u8) {
    let gr = &g.roads[gi as usize];
    let road = net.road(gr.road);
    let all = (0, road.lanes - 1);
    if g.out_roads[gr.from as usize].len() < 2 {
        return all;
    }
    let main = main_branch(net, g, gr.from).expect("node has out roads");
    if main == gi {
        return all;
    }
    let k = |r: u32| net.road(g.roads[r as usize].road).reference.curvature();
    if k(gi) > k(main) {
        (0, 0)
    } else {
        (all.1, all.1)
    }
}

/// Deceleration assumed when deciding whether a body can still stop
/// before a merge conflict, m/s².
const MERGE_DECEL: f64 = 3.0;

/// Distance to stop from `speed` at [`MERGE_DECEL`].
fn stopping(speed: f64) -> f64 {
    speed * speed / (2.0 * MERGE_DECEL)
}

/// Merge bookkeeping for nodes with several incoming roads. Converging
/// roads overlap before they meet, so each feeder gets a conflict length:
/// the distance before its end at which its surface first touches another
/// feeder's. Bodies yield before that point, not at the node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeZones {
    /// Roads ending at each node.
    pub in_roads: Vec<Vec<u32>>,
    /// Conflict length of each graph road; zero where nothing merges.
    pub conflict: Vec<f64>,
}

impl MergeZones {
    pub fn new(net: &RoadNetwork, g: &NetworkGraph) -> Self {
        let mut in_roads = vec![Vec::new(); g.node_count()];
        for (i, r) in g.roads.iter().enumerate() {
            in_roads[r.to as usize].push(i as u32);
        }
        let conflict = (0..g.roads.len())
            .map(|gi| {
                let feeders = &in_roads[g.roads[gi].to as usize];
                let road = net.road(g.roads[gi].road);
                let center = road.center_line();
                let len = center.length();
                let mut reach: f64 = 0.0;
                for &r in feeders.iter().filter(|&&r| r as usize != gi) {
                    let other = net.road(g.roads[r as usize].road);
                    let oc = other.center_line();
                    let limit = 0.5 * (road.width() + other.width());
                    let mut back = 0.0;
                    while back <= len {
                        let p = center.point_at(len - back);
                        let touching = oc.project_raw(p).is_ok_and(|raw| {
                            (0.0..=oc.length()).contains(&raw.s) && raw.d.abs() < limit
                        });
                        if touching {
                            reach = reach.max(back);
                        }
                        back += 0.5;
                    }
                }
                reach
            })
            .collect();
        Self { in_roads, conflict }
    }

    /// Distance a body must still cover to reach the conflict on road
    /// `gi`, less its stopping distance. At or below zero it is committed.
    fn urgency(&self, gi: u32, remaining: f64, length: f64, speed: f64) -> f64 {
        remaining - self.conflict[gi as usize] - 0.5 * length - stopping(speed)
    }

    /// Distance from the front of a body on road `gi` to its yield line, or
    /// `None` when it has the right of way. `remaining` is measured from the
    /// body's center to the road end along the center line. The body that
    /// is committed, or else closest to its conflict (then lower id), goes
    /// first, so two bodies never yield to each other.
    pub fn yield_gap(
        &self,
        net: &RoadNetwork,
        g: &NetworkGraph,
        gi: u32,
        remaining: f64,
        me: &Agent,
        agents: &[Agent],
    ) -> Option<f64> {
        let gr = &g.roads[gi as usize];
        let feeders = &self.in_roads[gr.to as usize];
        let gap = remaining - self.conflict[gi as usize] - 0.5 * me.length;
        let mine = self.urgency(gi, remaining, me.length, me.speed);
        // The zone is measured past the stopping distance so that a fast
        // body sees the merge before it is committed to it.
        if feeders.len() < 2 || mine > MERGE_ZONE || mine <= 0.0 {
            return None;
        }
        let node = g.nodes[gr.to as usize];
        for a in agents {
            if a.id == me.id
                || a.pose.position.distance(node) > 2.0 * MERGE_ZONE + 20.0 + stopping(a.speed)
            {
                continue;
            }
            for &r in feeders.iter().filter(|&&r| r != gi) {
                let Some(theirs) = self.distance_to_end(net, g, r, a.pose.position) else {
                    continue;
                };
                let urgency = self.urgency(r, theirs, a.length, a.speed);
                if urgency > MERGE_ZONE {
                    continue;
                }
                if urgency <= 0.0 || (urgency, a.id) < (mine, me.id) {
                    return Some(gap);
                }
            }
        }
        None
    }
}

impl MergeZones {
    /// [`Self::yield_gap`] for the first merge along `roads` (graph road
    /// indices starting with the body's current road) that is close
    /// enough to matter. `remaining` is measured on the first road.
    pub fn yield_gap_ahead(
        &self,
        net: &RoadNetwork,
        g: &NetworkGraph,
        roads: &[u32],
        remaining: f64,
        me: &Agent,
        agents: &[Agent],
    ) -> Option<f64> {
        let mut ahead = 0.0;
        for (k, &gi) in roads.iter().enumerate() {
            // Every merge past this point is farther than the zone.
            if ahead - stopping(me.speed) > MERGE_ZONE {
                break;
            }
            let to_end = if k == 0 {
                remaining
            } else {
                ahead + net.road(g.roads[gi as usize].road).center_line().length()
            };
            if let Some(gap) = self.yield_gap(net, g, gi, to_end, me, agents) {
                return Some(gap);
            }
            ahead = to_end;
        }
        None
    }

    /// Center-line distance from `p` to the end of feeder `r`, when `p`
    /// lies on `r` or on a road leading into it.
    fn distance_to_end(&self, net: &RoadNetwork, g: &NetworkGraph, r: u32, p: Vec2) -> Option<f64> {
        let length = |gi: u32| net.road(g.roads[gi as usize].road).center_line().length();
        let on = |gi: u32| {
            let road = net.road(g.roads[gi as usize].road);
            let center = road.center_line();
            let raw = center.project_raw(p).ok()?;
            let len = center.length();
            ((0.0..=len).contains(&raw.s) && raw.d.abs() <= road.width() / 2.0)
                .then_some(len - raw.s)
        };
        on(r).or_else(|| {
            self.in_roads[g.roads[r as usize].from as usize]
                .iter()
                .find_map(|&prev| on(prev).map(|d| d + length(r)))
        })
    }
}

/// Vehicle count for a density: `⌊D·L·X/10⌋`.
pub fn allocation_count(density: f64, total_length: f64, average_lanes: f64) -> usize {
    math::floor(density * total_length * average_lanes / 10.0 + 1e-9).max(0.0) as usize
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct LaneChange {
    elapsed: f64,
    start_offset: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficVehicle {
    pub id: u32,
    pub state: VehicleState,
    pub idm: IdmParams,
    pub behavior: Behavior,
    /// Node sequence from the current road's end to the destination.
    pub route: Vec<u32>,
    pub destination: u32,
    /// Graph road indices to drive, starting with the spawn road.
    pub roads: Vec<u32>,
    pub leg: usize,
    pub lane: u8,
    pub s: f64,
    pub lateral: f64,
    pub length: f64,
    pub width: f64,
    lane_change: Option<LaneChange>,
    since_lane_change: f64,
}

impl TrafficVehicle {
    pub fn road(&self) -> u32 {
        self.roads[self.leg]
    }

    pub fn footprint(&self) -> Obb {
        Obb::new(self.state.pose, self.length, self.width)
    }

    pub fn is_changing_lane(&self) -> bool {
        self.lane_change.is_some()
    }
}

/// Any body other traffic must respect: the target vehicle, static
/// obstacles, or another traffic vehicle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agent {
    pub id: u32,
    pub pose: Pose,
    pub speed: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug)]
struct Decision {
    accel: f64,
    change: LaneChoice,
}

/// Shared per-step view of the network geometry.
struct Geometry<'a> {
    net: &'a RoadNetwork,
    graph: &'a NetworkGraph,
}

impl Geometry<'_> {
    fn road(&self, gi: u32) -> &crate::blocks::Road {
        self.net.road(self.graph.roads[gi as usize].road)
    }

    fn block_kind(&self, gi: u32) -> BlockType {
        self.net.blocks[self.graph.roads[gi as usize].road.block as usize].kind
    }
}

/// Static per-network routing tables.
struct Routing {
    /// Dead ends reachable from each node.
    sinks: Vec<Vec<u32>>,
    /// [`branch_lanes`] of each graph road.
    allowed: Vec<(u8, u8)>,
    merges: MergeZones,
}

impl Routing {
    fn new(net: &RoadNetwork, g: &NetworkGraph) -> Self {
        Self {
            sinks: reachable_sinks(g),
            allowed: (0..g.roads.len() as u32)
                .map(|i| branch_lanes(net, g, i))
                .collect(),
            merges: MergeZones::new(net, g),
        }
    }
}

pub struct TrafficManager {
    pub config: TrafficConfig,
    vehicles: Vec<TrafficVehicle>,
    rng: SimRng,
    routing: Routing,
    next_id: u32,
}

impl TrafficManager {
    /// Allocates `⌊D·L·X/10⌋` vehicles on distinct spawn points, keeping
    /// them away from the points in `keep_clear`.
    pub fn allocate(
        net: &RoadNetwork,
        graph: &NetworkGraph,
        config: TrafficConfig,
        mut rng: SimRng,
        keep_clear: &[Vec2],
    ) -> Result<Self, Error> {
        config.validate()?;
        let count = allocation_count(config.density, net.total_length(), net.average_lanes());
        let points = net.spawn_points();
        if count > points.len() {
            return Err(Error::InsufficientSpawnPoints {
                requested: count,
                available: points.len(),
            });
        }
        let mut mgr = TrafficManager {
            config,
            vehicles: Vec::with_capacity(count),
            rng: SimRng::new(0, crate::rng::Stream::Traffic),
            routing: Routing::new(net, graph),
            next_id: 0,
        };
        if count == 0 {
            mgr.rng = rng;
            return Ok(mgr);
        }

        let geo = Geometry { net, graph };
        let mut order: Vec<usize> = (0..points.len()).collect();
        rng.shuffle(&mut order);
        let position = |i: usize| {
            let (block, sp) = points[i];
            let road = &net.blocks[block as usize].roads[sp.road as usize];
            road.lane(sp.lane).point_at(sp.s)
        };
        let suitable: Vec<bool> = points
            .iter()
            .map(|&(block, sp)| mgr.suitable(&geo, block, sp))
            .collect();
        let mut chosen: Vec<usize> = Vec::with_capacity(count);
        let mut taken = vec![false; points.len()];
        // Passes of decreasing strictness: suitable and clear, suitable and
        // apart, apart, then anything left. Points on different roads can
        // coincide where roads fork, so "apart" is checked in the plane.
        let apart = mgr.config.vehicle_length + 1.0;
        for (need_suitable, spacing, keep) in [
            (true, SPAWN_CLEARANCE, 2.0 * SPAWN_CLEARANCE),
            (true, apart, 0.0),
            (false, apart, 0.0),
            (false, 0.0, 0.0),
        ] {
            for &i in &order {
                if chosen.len() == count {
                    break;
                }
                if taken[i] || (need_suitable && !suitable[i]) {
                    continue;
                }
                let p = position(i);
                let clear = keep_clear.iter().all(|c| c.distance(p) >= keep)
                    && chosen.iter().all(|&j| position(j).distance(p) >= spacing);
                if clear {
                    chosen.push(i);
                    taken[i] = true;
                }
            }
        }

        for i in chosen {
            let (block, sp) = points[i];
            let road_ref = crate::pgmap::RoadRef {
                block,
                road: sp.road,
            };
            let gi = graph.road_index(road_ref).expect("spawn road in graph");
            let v = mgr.spawn_vehicle(&geo, &mut rng, gi, sp.lane, sp.s);
            mgr.vehicles.push(v);
        }
        mgr.rng = rng;
        Ok(mgr)
    }

    pub fn vehicles(&self) -> &[TrafficVehicle] {
        &self.vehicles
    }

    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn agents(&self) -> impl Iterator<Item = Agent> + '_ {
        self.vehicles.iter().map(|v| Agent {
            id: v.id,
            pose: v.state.pose,
            speed: v.state.speed,
            length: v.length,
        })
    }

    /// A spawn point traffic can start from without cutting across
    /// other lanes: its lane may drive the road, and it lies before any
    /// merge conflict.
    fn suitable(&self, geo: &Geometry<'_>, block: u32, sp: crate::blocks::SpawnPoint) -> bool {
        let Some(gi) = geo.graph.road_index(crate::pgmap::RoadRef {
            block,
            road: sp.road,
        }) else {
            return false;
        };
        let (lo, hi) = self.routing.allowed[gi as usize];
        let road = geo.road(gi);
        let lane_len = road.lane(sp.lane).length();
        let remaining = (lane_len - sp.s) / lane_len * road.center_line().length();
        (lo..=hi).contains(&sp.lane)
            && remaining - self.routing.merges.conflict[gi as usize] > self.config.vehicle_length
    }

    fn spawn_vehicle(
        &mut self,
        geo: &Geometry<'_>,
        rng: &mut SimRng,
        gi: u32,
        lane: u8,
        s: f64,
    ) -> TrafficVehicle {
        let cfg = &self.config;
        let behavior = if rng.chance(cfg.aggressive_fraction) {
            Behavior::Aggressive
        } else {
            Behavior::Conservative
        };
        let limit = rng.uniform(cfg.speed_limit.0, cfg.speed_limit.1);
        let idm = IdmParams::for_behavior(behavior, limit);
        let start = geo.graph.roads[gi as usize].to;
        let sinks = &self.routing.sinks[start as usize];
        let destination = if sinks.is_empty() {
            start
        } else {
            sinks[rng.index(sinks.len())]
        };
        let path = route(geo.graph, start, destination).unwrap_or_else(|_| vec![start]);
        let mut roads = vec![gi];
        roads.extend(route_roads(geo.graph, &path));
        let id = self.next_id;
        self.next_id += 1;
        let mut v = TrafficVehicle {
            id,
            state: VehicleState::default(),
            idm,
            behavior,
            route: path,
            destination,
            roads,
            leg: 0,
            lane,
            s,
            lateral: 0.0,
            length: cfg.vehicle_length,
            width: cfg.vehicle_width,
            lane_change: None,
            since_lane_change: LANE_CHANGE_COOLDOWN,
        };
        update_pose(geo, &mut v, 0.0);
        v
    }

    /// One two-phase update: every vehicle decides from the frozen
    /// current state, then all decisions are committed. `others` holds the
    /// non-traffic bodies (target vehicle, obstacles).
    pub fn step(&mut self, net: &RoadNetwork, graph: &NetworkGraph, others: &[Agent], dt: f64) {
        let geo = Geometry { net, graph };
        let mut agents: Vec<Agent> = self.agents().collect();
        agents.extend_from_slice(others);

        let mut decisions: Vec<Decision> = self
            .vehicles
            .iter()
            .map(|v| self.decide(&geo, v, &agents))
            .collect();
        self.arbitrate_lane_changes(&mut decisions);

        let mut arrived = Vec::new();
        for (idx, (v, d)) in self.vehicles.iter_mut().zip(decisions).enumerate() {
            if !commit(&geo, &self.routing, v, d, dt) {
                arrived.push(idx);
            }
        }
        for idx in arrived {
            self.reallocate(&geo, idx, others);
        }
    }

    /// Gap checks only see the lanes next to a vehicle, so two vehicles
    /// two lanes apart can pick the same middle lane at once. A change is
    /// dropped when another vehicle on the same road is already moving
    /// into that lane nearby, or decides to in this step with a lower id.
    /// Lane indices agree across a docking because every road keeps its
    /// reference on the left edge.
    fn arbitrate_lane_changes(&self, decisions: &mut [Decision]) {
        let target = |v: &TrafficVehicle, c: LaneChoice| match c {
            LaneChoice::Left => Some(v.lane - 1),
            LaneChoice::Right => Some(v.lane + 1),
            LaneChoice::Stay => None,
        };
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let Some(lane) = target(v, decisions[i].change) else {
                continue;
            };
            let conflict = self.vehicles.iter().enumerate().any(|(j, o)| {
                // Consecutive roads share lane numbering.
                let adjacent = o.road() == v.road()
                    || o.roads.get(o.leg + 1) == Some(&v.road())
                    || v.roads.get(v.leg + 1) == Some(&o.road());
                let window = v.length
                    + v.idm.min_gap
                    + v.state.speed.max(o.state.speed) * v.idm.time_headway;
                let along = (o.state.pose.position - v.state.pose.position)
                    .dot(Vec2::from_angle(v.state.pose.heading));
                if j == i || !adjacent || along.abs() > window {
                    return false;
                }
                let moving_in = o.lane_change.is_some() && o.lane == lane;
                let deciding = o.id < v.id && target(o, decisions[j].change) == Some(lane);
                moving_in || deciding
            });
            if conflict {
                decisions[i].change = LaneChoice::Stay;
            }
        }
    }

    /// Respawns vehicle `idx` on a spawn point clear of traffic and of the
    /// `others` bodies, or on the one farthest from them when none is.
    fn reallocate(&mut self, geo: &Geometry<'_>, idx: usize, others: &[Agent]) {
        let points = geo.net.spawn_points();
        if points.is_empty() {
            return;
        }
        let mut rng = self.rng.clone();
        let mut order: Vec<usize> = (0..points.len()).collect();
        rng.shuffle(&mut order);
        // Margin left after subtracting the required clearance. A vehicle
        // driving towards the point in roughly the same lane also needs
        // its stopping distance.
        let margin = |i: usize| {
            let (block, sp) = points[i];
            let road = &geo.net.blocks[block as usize].roads[sp.road as usize];
            let p = road.lane(sp.lane).point_at(sp.s);
            let mut m = f64::INFINITY;
            for (j, v) in self.vehicles.iter().enumerate() {
                if j == idx {
                    continue;
                }
                let d = p - v.state.pose.position;
                let dir = Vec2::from_angle(v.state.pose.heading);
                let mut need = 2.0 * SPAWN_CLEARANCE;
                if d.dot(dir) > 0.0 && d.cross(dir).abs() < road.lane_width {
                    need += v.state.speed * v.state.speed / (2.0 * v.idm.comfort_decel);
                }
                m = m.min(d.length() - need);
            }
            for a in others {
                m = m.min(a.pose.position.distance(p) - REALLOCATION_CLEARANCE);
            }
            m
        };
        let suitable: Vec<usize> = order
            .iter()
            .copied()
            .filter(|&i| self.suitable(geo, points[i].0, points[i].1))
            .collect();
        let candidates = if suitable.is_empty() {
            &order
        } else {
            &suitable
        };
        let mut pick = candidates[0];
        let mut best = f64::NEG_INFINITY;
        for &i in candidates {
            let m = margin(i);
            if m >= 0.0 {
                pick = i;
                break;
            }
            if m > best {
                best = m;
                pick = i;
            }
        }
        let (block, sp) = points[pick];
        let gi = geo
            .graph
            .road_index(crate::pgmap::RoadRef {
                block,
                road: sp.road,
            })
            .expect("spawn road in graph");
        let old_id = self.vehicles[idx].id;
        let mut v = self.spawn_vehicle(geo, &mut rng, gi, sp.lane, sp.s);
        self.next_id -= 1;
        v.id = old_id;
        self.vehicles[idx] = v;
        self.rng = rng;
    }

    fn decide(&self, geo: &Geometry<'_>, v: &TrafficVehicle, agents: &[Agent]) -> Decision {
        let road = geo.road(v.road());
        let lanes = road.lanes;
        let w = road.lane_width;
        // Per lane offset (-1 left, 0 own, +1 right): nearest front and rear.
        let mut gaps = [LaneGaps::default(); 3];
        let own_lateral = road.lane_offset(v.lane) + v.lateral;

        for a in agents {
            if a.id == v.id {
                continue;
            }
            if a.pose.position.distance(v.state.pose.position) > LOOKAHEAD + 10.0 {
                continue;
            }
            let Some((dist, offset)) = locate(geo, v, a.pose.position) else {
                continue;
            };
            // Lanes the agent's body covers, relative to ours; a body
            // between two lanes counts in both.
            let rel = (own_lateral - offset) / w;
            let body = 0.5 * self.config.vehicle_width / w;
            let half = 0.5 * (v.length + a.length);
            let heading = geo_heading_at(geo, v, dist);
            let along = a.speed * math::cos(a.pose.heading - heading);
            for (slot, gap) in gaps.iter_mut().enumerate() {
                let center = slot as f64 - 1.0;
                if rel + body <= center - 0.5 || rel - body >= center + 0.5 {
                    continue;
                }
                if dist >= 0.0 {
                    let n = Neighbor {
                        gap: dist - half,
                        speed: along.max(0.0),
                    };
                    if gap.front.is_none_or(|f| n.gap < f.gap) {
                        gap.front = Some(n);
                    }
                } else {
                    let n = Neighbor {
                        gap: -dist - half,
                        speed: along.max(0.0),
                    };
                    if gap.rear.is_none_or(|r| n.gap < r.gap) {
                        gap.rear = Some(n);
                    }
                }
            }
        }

        if let Some(n) = self.stop_line(geo, v, agents) {
            if gaps[1].front.is_none_or(|f| n.gap < f.gap) {
                gaps[1].front = Some(n);
            }
        }

        let mut idm = v.idm;
        idm.desired_speed = idm.desired_speed.min(self.curve_speed(geo, v));
        let accel = match gaps[1].front {
            Some(f) => idm_accel(v.state.speed, f.speed, f.gap, &idm).value,
            None => idm_accel(v.state.speed, v.state.speed, f64::INFINITY, &idm).value,
        };

        let mut change = LaneChoice::Stay;
        if self.config.lane_changes && v.lane_change.is_none() {
            let left = (v.lane > 0).then_some(&gaps[0]);
            let right = (v.lane + 1 < lanes).then_some(&gaps[2]);
            let discretionary = v.since_lane_change >= LANE_CHANGE_COOLDOWN
                && !matches!(
                    geo.block_kind(v.road()),
                    BlockType::Roundabout | BlockType::Intersection | BlockType::TIntersection
                );
            match self.preferred_lane(geo, v) {
                Some(target) if target < v.lane => {
                    if left.is_some_and(|g| gap_is_safe(v.state.speed, g, &idm)) {
                        change = LaneChoice::Left;
                    }
                }
                Some(target) if target > v.lane => {
                    if right.is_some_and(|g| gap_is_safe(v.state.speed, g, &idm)) {
                        change = LaneChoice::Right;
                    }
                }
                Some(_) => {}
                None if discretionary => {
                    change = lane_change_decision(v.state.speed, &idm, &gaps[1], left, right);
                }
                None => {}
            }
        }
        Decision { accel, change }
    }

    /// Lane the vehicle must move to before an upcoming branch or lane
    /// drop on its route, if its current lane cannot continue.
    fn preferred_lane(&self, geo: &Geometry<'_>, v: &TrafficVehicle) -> Option<u8> {
        let mut dist = geo.road(v.road()).lane(v.lane).length() - v.s;
        for &gi in &v.roads[v.leg + 1..] {
            if dist > BRANCH_PREVIEW {
                break;
            }
            let road = geo.road(gi);
            let (lo, hi) = self.routing.allowed[gi as usize];
            let hi = hi.min(road.lanes - 1);
            if v.lane < lo || v.lane > hi {
                return Some(v.lane.clamp(lo, hi));
            }
            dist += road.lane(v.lane).length();
        }
        None
    }

    /// A virtual stopped leader at the yield line of a merge, or at the end
    /// of the current road when the vehicle's lane ends there.
    fn stop_line(
        &self,
        geo: &Geometry<'_>,
        v: &TrafficVehicle,
        agents: &[Agent],
    ) -> Option<Neighbor> {
        let gi = v.road();
        let own = geo.road(gi).lane(v.lane).length() - v.s;
        // The lane may end a few short roads ahead.
        let mut ahead = own;
        for leg in v.leg + 1..v.roads.len() {
            if ahead >= BRANCH_PREVIEW {
                break;
            }
            let next = geo.road(v.roads[leg]);
            if v.lane >= next.lanes {
                return Some(Neighbor {
                    gap: ahead - 0.5 * v.length,
                    speed: 0.0,
                });
            }
            ahead += next.lane(v.lane).length();
        }
        // Lanes of an arc differ in length; the merge table works on the
        // center line.
        let road = geo.road(gi);
        let remaining = own / road.lane(v.lane).length() * road.center_line().length();
        let me = Agent {
            id: v.id,
            pose: v.state.pose,
            speed: v.state.speed,
            length: v.length,
        };
        let gap = self.routing.merges.yield_gap_ahead(
            geo.net,
            geo.graph,
            &v.roads[v.leg..],
            remaining,
            &me,
            agents,
        )?;
        Some(Neighbor { gap, speed: 0.0 })
    }

    pub fn merges(&self) -> &MergeZones {
        &self.routing.merges
    }

    fn curve_speed(&self, geo: &Geometry<'_>, v: &TrafficVehicle) -> f64 {
        let mut limit = f64::INFINITY;
        for leg in v.leg..(v.leg + 2).min(v.roads.len()) {
            let road = geo.road(v.roads[leg]);
            let lane = road.lane(v.lane.min(road.lanes - 1));
            let k = lane.curvature().abs();
            if k > 0.0 {
                limit = limit.min(math::sqrt(self.config.curve_lateral_accel / k));
            }
        }
        limit
    }
}

fn geo_heading_at(geo: &Geometry<'_>, v: &TrafficVehicle, dist: f64) -> f64 {
    let road = geo.road(v.road());
    let lane = road.lane(v.lane);
    lane.heading_at((v.s + dist).clamp(0.0, lane.length()))
}

/// Signed distance ahead along the vehicle's route to the projection of
/// `p`, plus `p`'s lateral offset from the reference of the road it was
/// measured on. Looks back along the current road and forward through up
/// to [`LOOKAHEAD`] meters of route.
fn locate(geo: &Geometry<'_>, v: &TrafficVehicle, p: Vec2) -> Option<(f64, f64)> {
    let mut travelled = 0.0;
    for leg in v.leg..v.roads.len() {
        let road = geo.road(v.roads[leg]);
        let lane = road.lane(v.lane.min(road.lanes - 1));
        let raw = lane.project_raw(p).ok()?;
        let len = lane.length();
        let lateral = road.lane_offset(v.lane.min(road.lanes - 1)) + raw.d;
        if leg == v.leg {
            let ahead = raw.s - v.s;
            if raw.s <= len
                && raw.s >= -LOOKAHEAD
                && lateral.abs() < road.width() + 2.0 * road.lane_width
            {
                return Some((ahead, lateral));
            }
            travelled += len - v.s;
        } else {
            if (0.0..=len).contains(&raw.s) {
                return Some((travelled + raw.s, lateral));
            }
            travelled += len;
        }
        if travelled > LOOKAHEAD {
            break;
        }
    }
    None
}

fn commit(
    geo: &Geometry<'_>,
    routing: &Routing,
    v: &mut TrafficVehicle,
    d: Decision,
    dt: f64,
) -> bool {
    let w = geo.road(v.road()).lane_width;
    let from_lane = v.lane;
    match d.change {
        LaneChoice::Left => {
            v.lane -= 1;
            v.lateral -= w;
            v.lane_change = Some(LaneChange {
                elapsed: 0.0,
                start_offset: v.lateral,
            });
            v.since_lane_change = 0.0;
        }
        LaneChoice::Right => {
            v.lane += 1;
            v.lateral += w;
            v.lane_change = Some(LaneChange {
                elapsed: 0.0,
                start_offset: v.lateral,
            });
            v.since_lane_change = 0.0;
        }
        LaneChoice::Stay => {}
    }
    if v.lane != from_lane {
        rescale_to_lane(geo.road(v.road()), v, from_lane);
    }
    v.since_lane_change += dt;

    let (speed, ds) = advance_longitudinal(v.state.speed, d.accel, dt);
    v.state.speed = speed;
    v.s += ds;

    let mut lateral_rate = 0.0;
    if let Some(lc) = v.lane_change.as_mut() {
        lc.elapsed += dt;
        if lc.elapsed >= LANE_CHANGE_SECONDS {
            v.lateral = 0.0;
            v.lane_change = None;
        } else {
            let phase = PI * lc.elapsed / LANE_CHANGE_SECONDS;
            v.lateral = lc.start_offset * 0.5 * (1.0 + math::cos(phase));
            lateral_rate = -lc.start_offset * 0.5 * math::sin(phase) * PI / LANE_CHANGE_SECONDS;
        }
    }

    loop {
        let road = geo.road(v.road());
        let len = road.lane(v.lane).length();
        if v.s <= len {
            break;
        }
        if v.leg + 1 >= v.roads.len() {
            return false;
        }
        let (lo, hi) = routing.allowed[v.roads[v.leg + 1] as usize];
        if v.lane < lo || v.lane > hi {
            reroute(geo, routing, v);
        }
        v.s -= len;
        v.leg += 1;
        let next = geo.road(v.road());
        if v.lane >= next.lanes {
            // The dropped lane has no length on this road; s is near its
            // start, where the lanes agree.
            let target = next.lanes - 1;
            v.lateral -= (v.lane - target) as f64 * next.lane_width;
            v.lane = target;
            v.lane_change = Some(LaneChange {
                elapsed: 0.0,
                start_offset: v.lateral,
            });
        }
    }
    update_pose(geo, v, lateral_rate);
    true
}

/// The vehicle reached a branch in a lane that may not take it: it takes
/// the main branch instead and heads for a dead end reachable from there.
/// Keeps the vehicle abreast of where it was when its lane index changes:
/// lanes of an arc differ in length, so `s` is scaled by their ratio.
fn rescale_to_lane(road: &crate::blocks::Road, v: &mut TrafficVehicle, from_lane: u8) {
    let old = road.lane(from_lane).length();
    if old > 0.0 {
        v.s *= road.lane(v.lane).length() / old;
    }
}

fn reroute(geo: &Geometry<'_>, routing: &Routing, v: &mut TrafficVehicle) {
    let node = geo.graph.roads[v.road() as usize].to;
    let Some(main) = main_branch(geo.net, geo.graph, node) else {
        return;
    };
    let start = geo.graph.roads[main as usize].to;
    let sinks = &routing.sinks[start as usize];
    let destination = if sinks.is_empty() {
        start
    } else {
        sinks[v.id as usize % sinks.len()]
    };
    let path = route(geo.graph, start, destination).unwrap_or_else(|_| vec![start]);
    v.roads.truncate(v.leg + 1);
    v.roads.push(main);
    v.roads.extend(route_roads(geo.graph, &path));
    v.route = path;
    v.destination = destination;
}

fn update_pose(geo: &Geometry<'_>, v: &mut TrafficVehicle, lateral_rate: f64) {
    let road = geo.road(v.road());
    let lane = road.lane(v.lane);
    let s = v.s.clamp(0.0, lane.length());
    let heading = lane.heading_at(s);
    let pos = lane.point_at(s) + Vec2::from_angle(heading).perp() * v.lateral;
    // A lane change at crawling speed would otherwise turn the body
    // sideways across the neighbouring lane.
    let slip = if v.state.speed > 0.1 {
        math::atan2(lateral_rate, v.state.speed).clamp(-MAX_SLIP, MAX_SLIP)
    } else {
        0.0
    };
    v.state.pose = Pose::new(pos, heading + slip);
}

/// For every node, the dead-end nodes reachable from it, ascending.
fn reachable_sinks(g: &NetworkGraph) -> Vec<Vec<u32>> {
    let n = g.node_count();
    let mut out = Vec::with_capacity(n);
    for start in 0..n {
        let mut seen = vec![false; n];
        let mut stack = vec![start as u32];
        let mut sinks = Vec::new();
        while let Some(node) = stack.pop() {
            if core::mem::replace(&mut seen[node as usize], true) {
                continue;
            }
            let outs = &g.out_roads[node as usize];
            if outs.is_empty() && node as usize != start {
                sinks.push(node);
            }
            for &r in outs {
                stack.push(g.roads[r as usize].to);
            }
        }
        sinks.sort_unstable();
        out.push(sinks);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_idm() -> IdmParams {
        IdmParams {
            desired_speed: 20.0,
            time_headway: 1.5,
            min_gap: 2.0,
            max_accel: 2.0,
            comfort_decel: 1.67,
            exponent: 4.0,
        }
    }

    #[test]
    fn idm_limits() {
        let p = reference_idm();
        let a = idm_accel(20.0, 20.0, 1e6, &p);
        assert!(a.value.abs() < 1e-3);
        let a = idm_accel(0.0, 0.0, 1e6, &p);
        assert!((a.value - 2.0).abs() < 1e-6);
        let a = idm_accel(5.0, 0.0, 0.0, &p);
        assert!(a.emergency);
        assert_eq!(a.value, -2.0 * 1.67);
        let a = idm_accel(20.0, 0.0, 1.0, &p);
        assert!(!a.emergency);
        assert_eq!(a.value, -2.0 * 1.67);
    }

    #[test]
    fn idm_reference_point() {
        // Independent evaluation: s* = 2 + 10·1.5 = 17, no approach term.
        let expected = 2.0 * (1.0 - (10.0f64 / 20.0).powi(4) - (17.0f64 / 30.0).powi(2));
        let a = idm_accel(10.0, 10.0, 30.0, &reference_idm());
        assert!((a.value - expected).abs() < 1e-12);
        assert!((a.value - 1.2327777777777778).abs() < 1e-12);
    }

    #[test]
    fn lane_change_cases() {
        let p = reference_idm();
        let free = LaneGaps::default();
        assert_eq!(
            lane_change_decision(15.0, &p, &free, Some(&free), Some(&free)),
            LaneChoice::Stay
        );
        let blocked = LaneGaps {
            front: Some(Neighbor {
                gap: 20.0,
                speed: 0.0,
            }),
            rear: None,
        };
        assert_eq!(
            lane_change_decision(15.0, &p, &blocked, Some(&free), None),
            LaneChoice::Left
        );
        assert_eq!(
            lane_change_decision(15.0, &p, &blocked, None, Some(&free)),
            LaneChoice::Right
        );
        let tailgated = LaneGaps {
            front: None,
            rear: Some(Neighbor {
                gap: 1.0,
                speed: 15.0,
            }),
        };
        assert_eq!(
            lane_change_decision(15.0, &p, &blocked, Some(&tailgated), None),
            LaneChoice::Stay
        );
    }

    #[test]
    fn allocation_formula() {
        assert_eq!(allocation_count(0.1, 300.0, 3.0), 9);
        assert_eq!(allocation_count(0.0, 300.0, 3.0), 0);
        assert_eq!(allocation_count(0.3, 500.0, 2.0), 30);
    }

    #[test]
    fn longitudinal_never_reverses() {
        let (v, ds) = advance_longitudinal(1.0, -5.0, 0.5);
        assert_eq!(v, 0.0);
        assert!((ds - 0.1).abs() < 1e-12);
    }
}
