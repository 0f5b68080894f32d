//! The seven road block types, their parameter spaces and rigid
//! instantiation against an anchor socket.
//!
//! Every block is laid out in a local frame where its entry socket sits
//! at the origin and traffic enters heading along +x. Roads are described
//! by their left edge (the reference line); lanes are numbered from the
//! left starting at 0 and lie to the right of the reference. Docking a
//! block rotates and translates the local frame onto the anchor socket,
//! so the two sockets end up at the same point facing opposite ways.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{discretize, polyline_segments, LaneGeometry, Pose, Rigid, Segment, Vec2};
use crate::math::{self, FRAC_PI_2, PI};
use crate::rng::SimRng;

/// Length of the straight road that carries each exit socket.
pub const SOCKET_ROAD_LENGTH: f64 = 5.0;

/// Spacing of spawn points along every lane.
pub const SPAWN_SPACING: f64 = 10.0;

/// Share of a ramp's length taken by its acceleration/deceleration lane.
pub const RAMP_LANE_FRACTION: f64 = 0.4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum BlockType {
    Straight,
    Ramp,
    Fork,
    Roundabout,
    Curve,
    TIntersection,
    Intersection,
}

impl BlockType {
    pub const ALL: [BlockType; 7] = [
        BlockType::Straight,
        BlockType::Ramp,
        BlockType::Fork,
        BlockType::Roundabout,
        BlockType::Curve,
        BlockType::TIntersection,
        BlockType::Intersection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockType::Straight => "straight",
            BlockType::Ramp => "ramp",
            BlockType::Fork => "fork",
            BlockType::Roundabout => "roundabout",
            BlockType::Curve => "curve",
            BlockType::TIntersection => "t-intersection",
            BlockType::Intersection => "intersection",
        }
    }

    pub fn from_name(name: &str) -> Option<BlockType> {
        BlockType::ALL.iter().copied().find(|t| t.name() == name)
    }

    /// Number of sockets including the entry.
    pub fn socket_count(self) -> usize {
        match self {
            BlockType::Roundabout | BlockType::Intersection => 4,
            BlockType::TIntersection => 3,
            _ => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum LineType {
    Broken,
    Solid,
}

/// Bounds for randomized block parameters.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ParameterSpace {
    pub length: (f64, f64),
    pub radius: (f64, f64),
    pub curve_angle: (f64, f64),
    pub lanes: (u8, u8),
    pub lane_width: f64,
    /// Inner radius of roundabout entry/exit connectors.
    pub connector_radius: f64,
}

impl Default for ParameterSpace {
    fn default() -> Self {
        Self {
            length: (20.0, 100.0),
            radius: (10.0, 50.0),
            curve_angle: (math::to_radians(30.0), math::to_radians(135.0)),
            lanes: (1, 4),
            lane_width: 3.5,
            connector_radius: 8.0,
        }
    }
}

/// Sampled parameters of one block. Not every field is used by every
/// type; unused fields are still drawn so the random stream advances the
/// same way regardless of type.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BlockParams {
    pub length: f64,
    pub radius: f64,
    pub angle: f64,
    pub turn_left: bool,
    pub lanes: u8,
    pub lane_width: f64,
    pub lane_delta: i8,
    pub variant: u8,
    pub inner_lines: LineType,
}

impl BlockParams {
    pub fn within(&self, space: &ParameterSpace) -> bool {
        (space.length.0..=space.length.1).contains(&self.length)
            && (space.radius.0..=space.radius.1).contains(&self.radius)
            && (space.curve_angle.0..=space.curve_angle.1).contains(&self.angle)
            && (space.lanes.0..=space.lanes.1).contains(&self.lanes)
            && (self.lane_delta == 1 || self.lane_delta == -1)
            && self.variant < 3
            && self.lane_width > 0.0
    }
}

pub fn sample_params(_t: BlockType, rng: &mut SimRng, space: &ParameterSpace) -> BlockParams {
    let length = rng.uniform(space.length.0, space.length.1);
    let radius = rng.uniform(space.radius.0, space.radius.1);
    let angle = rng.uniform(space.curve_angle.0, space.curve_angle.1);
    let turn_left = rng.chance(0.5);
    let lanes = space.lanes.0 + rng.index((space.lanes.1 - space.lanes.0 + 1) as usize) as u8;
    let lane_delta = if rng.chance(0.5) { 1 } else { -1 };
    let variant = rng.index(3) as u8;
    let inner_lines = if rng.chance(0.5) {
        LineType::Broken
    } else {
        LineType::Solid
    };
    BlockParams {
        length,
        radius,
        angle,
        turn_left,
        lanes,
        lane_width: space.lane_width,
        lane_delta,
        variant,
        inner_lines,
    }
}

/// A directed multi-lane road. `reference` is the left edge.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Road {
    pub from: u16,
    pub to: u16,
    pub reference: LaneGeometry,
    pub lanes: u8,
    pub lane_width: f64,
    pub inner_lines: LineType,
}

impl Road {
    pub fn length(&self) -> f64 {
        self.reference.length()
    }

    pub fn width(&self) -> f64 {
        self.lanes as f64 * self.lane_width
    }

    /// Offset of lane `i`'s centerline from the reference (negative).
    pub fn lane_offset(&self, i: u8) -> f64 {
        -(i as f64 + 0.5) * self.lane_width
    }

    pub fn lane(&self, i: u8) -> LaneGeometry {
        self.reference.offset(self.lane_offset(i), self.lane_width)
    }

    pub fn center_line(&self) -> LaneGeometry {
        self.reference.offset(-self.width() / 2.0, self.width())
    }

    /// Lane boundary `k` for `k` in `0..=lanes`; 0 and `lanes` are the
    /// road edges.
    pub fn boundary(&self, k: u8) -> LaneGeometry {
        self.reference
            .offset(-(k as f64) * self.lane_width, self.lane_width)
    }

    pub fn line_type(&self, k: u8) -> LineType {
        if k == 0 || k == self.lanes {
            LineType::Solid
        } else {
            self.inner_lines
        }
    }

    fn transformed(&self, t: &Rigid) -> Road {
        Road {
            reference: self.reference.transformed(t),
            ..self.clone()
        }
    }
}

/// Docking anchor: pose on the road's reference line, heading outward.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Socket {
    pub index: u8,
    pub pose: Pose,
    pub lanes: u8,
    pub lane_width: f64,
    pub node: u16,
    pub road: u16,
}

impl Socket {
    /// The virtual socket new maps grow from.
    pub fn origin(pose: Pose, lanes: u8, lane_width: f64) -> Socket {
        Socket {
            index: 0,
            pose,
            lanes,
            lane_width,
            node: 0,
            road: 0,
        }
    }

    /// Midpoint of the road cross-section at the socket.
    pub fn center(&self) -> Vec2 {
        let half = self.lanes as f64 * self.lane_width / 2.0;
        // The road lies right of travel: left of an entry socket's outward
        // heading, right of an exit socket's.
        let side = if self.index == 0 { half } else { -half };
        self.pose.position + self.pose.direction().perp() * side
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SpawnPoint {
    pub road: u16,
    pub lane: u8,
    pub s: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Block {
    pub kind: BlockType,
    pub params: BlockParams,
    /// Pose of the socket this block was docked to.
    pub anchor: Pose,
    pub nodes: Vec<Vec2>,
    pub roads: Vec<Road>,
    pub sockets: Vec<Socket>,
    pub spawn_points: Vec<SpawnPoint>,
}

impl Block {
    pub fn entry_socket(&self) -> &Socket {
        &self.sockets[0]
    }

    pub fn total_lane_length(&self) -> f64 {
        self.roads
            .iter()
            .map(|r| (0..r.lanes).map(|i| r.lane(i).length()).sum::<f64>())
            .sum()
    }

    /// Both edges of every road, as chords.
    pub fn boundary_segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        for road in &self.roads {
            for edge in [road.boundary(0), road.boundary(road.lanes)] {
                let pts = discretize(&edge);
                out.extend(polyline_segments(&pts));
            }
        }
        out
    }

    pub fn transformed(&self, t: &Rigid) -> Block {
        Block {
            kind: self.kind,
            params: self.params.clone(),
            anchor: t.pose(self.anchor),
            nodes: self.nodes.iter().map(|&p| t.point(p)).collect(),
            roads: self.roads.iter().map(|r| r.transformed(t)).collect(),
            sockets: self
                .sockets
                .iter()
                .map(|s| Socket {
                    pose: t.pose(s.pose),
                    ..s.clone()
                })
                .collect(),
            spawn_points: self.spawn_points.clone(),
        }
    }
}

/// Lane count leaving a fork entered with `lanes_in` lanes.
pub fn fork_exit_lanes(lanes_in: u8, delta: i8, space: &ParameterSpace) -> u8 {
    let want = lanes_in as i16 + delta as i16;
    if want < space.lanes.0 as i16 || want > space.lanes.1 as i16 {
        (lanes_in as i16 - delta as i16) as u8
    } else {
        want as u8
    }
}

struct Builder {
    nodes: Vec<Vec2>,
    roads: Vec<Road>,
    sockets: Vec<Socket>,
    lane_width: f64,
    inner_lines: LineType,
}

impl Builder {
    fn new(entry_lanes: u8, params: &BlockParams) -> Self {
        let mut b = Builder {
            nodes: Vec::new(),
            roads: Vec::new(),
            sockets: Vec::new(),
            lane_width: params.lane_width,
            inner_lines: params.inner_lines,
        };
        b.nodes.push(Vec2::ZERO);
        b.sockets.push(Socket {
            index: 0,
            pose: Pose::new(Vec2::ZERO, PI),
            lanes: entry_lanes,
            lane_width: params.lane_width,
            node: 0,
            road: 0,
        });
        b
    }

    fn push_road(
        &mut self,
        from: u16,
        to: Option<u16>,
        reference: LaneGeometry,
        lanes: u8,
    ) -> (u16, Pose) {
        let end = reference.end_pose();
        let to = to.unwrap_or_else(|| {
            self.nodes.push(end.position);
            (self.nodes.len() - 1) as u16
        });
        self.roads.push(Road {
            from,
            to,
            reference,
            lanes,
            lane_width: self.lane_width,
            inner_lines: self.inner_lines,
        });
        (to, end)
    }

    fn straight(&mut self, from: u16, pose: Pose, length: f64, lanes: u8) -> (u16, Pose) {
        let end = pose.position + pose.direction() * length;
        let reference = LaneGeometry::straight(pose.position, end, self.lane_width);
        self.push_road(from, None, reference, lanes)
    }

    fn arc(
        &mut self,
        from: u16,
        to: Option<u16>,
        pose: Pose,
        radius: f64,
        sweep: f64,
        lanes: u8,
    ) -> (u16, Pose) {
        let reference = LaneGeometry::arc_from_pose(pose, radius, sweep, self.lane_width);
        self.push_road(from, to, reference, lanes)
    }

    /// Straight socket road followed by an exit socket at its end.
    fn exit(&mut self, from: u16, pose: Pose, length: f64, lanes: u8) {
        let (node, end) = self.straight(from, pose, length, lanes);
        let index = self.sockets.len() as u8;
        self.sockets.push(Socket {
            index,
            pose: end,
            lanes,
            lane_width: self.lane_width,
            node,
            road: (self.roads.len() - 1) as u16,
        });
    }
}

#[derive(Clone, Copy)]
enum Turn {
    Right,
    Straight,
    Left,
}

/// Places a block of type `t` so that its entry socket docks onto `anchor`.
pub fn instantiate(t: BlockType, params: &BlockParams, anchor: &Socket) -> Result<Block, Error> {
    if !anchor.pose.position.is_finite() || !anchor.pose.heading.is_finite() {
        return Err(Error::InvalidParameter("anchor pose"));
    }
    if params.lane_width <= 0.0 || params.length <= 0.0 || params.radius <= 0.0 {
        return Err(Error::InvalidParameter("block parameters"));
    }
    let entry_lanes = if t == BlockType::Fork {
        anchor.lanes
    } else {
        params.lanes
    };
    if entry_lanes != anchor.lanes {
        return Err(Error::LaneCountMismatch {
            anchor: anchor.lanes,
            entry: entry_lanes,
        });
    }
    if entry_lanes == 0 {
        return Err(Error::InvalidParameter("lane count"));
    }
    let x = entry_lanes;
    let w = params.lane_width;
    let width = x as f64 * w;
    let mut b = Builder::new(x, params);
    let start = Pose::new(Vec2::ZERO, 0.0);
    let len = params.length;

    match t {
        BlockType::Straight => {
            b.exit(0, start, len, x);
        }
        BlockType::Ramp => {
            let (n1, p1) = b.straight(0, start, 0.3 * len, x);
            let (n2, p2) = b.straight(n1, p1, RAMP_LANE_FRACTION * len, x + 1);
            b.exit(n2, p2, 0.3 * len, x);
        }
        BlockType::Fork => {
            let out = fork_exit_lanes(x, params.lane_delta, &ParameterSpace::default());
            let (n1, p1) = b.straight(0, start, 0.5 * len, x);
            b.exit(n1, p1, 0.5 * len, out);
        }
        BlockType::Curve => {
            // R is the inner edge radius; the reference is the outer edge
            // for right turns.
            let (radius, sweep) = if params.turn_left {
                (params.radius, params.angle)
            } else {
                (params.radius + width, -params.angle)
            };
            let (n1, p1) = b.arc(0, None, start, radius, sweep, x);
            b.exit(n1, p1, 0.25 * len, x);
        }
        BlockType::Roundabout => {
            let ring = params.radius;
            let conn = ParameterSpace::default().connector_radius + width;
            let s = SOCKET_ROAD_LENGTH;
            let (n1, p1) = b.straight(0, start, s, x);
            // Entry connector turns right onto the west point of the ring.
            let (west, p_west) = b.arc(n1, None, p1, conn, -FRAC_PI_2, x);
            let (south, p_south) = b.arc(west, None, p_west, ring, FRAC_PI_2, x);
            let (east, p_east) = b.arc(south, None, p_south, ring, FRAC_PI_2, x);
            let (north, p_north) = b.arc(east, None, p_east, ring, FRAC_PI_2, x);
            b.arc(north, Some(west), p_north, ring, FRAC_PI_2, x);
            for (node, pose) in [(south, p_south), (east, p_east), (north, p_north)] {
                let (n, p) = b.arc(node, None, pose, conn, -FRAC_PI_2, x);
                b.exit(n, p, s, x);
            }
        }
        BlockType::TIntersection | BlockType::Intersection => {
            let turns: &[Turn] = if t == BlockType::Intersection {
                &[Turn::Right, Turn::Straight, Turn::Left]
            } else {
                match params.variant {
                    0 => &[Turn::Right, Turn::Left],
                    1 => &[Turn::Right, Turn::Straight],
                    _ => &[Turn::Straight, Turn::Left],
                }
            };
            let s = SOCKET_ROAD_LENGTH;
            let (n1, p1) = b.straight(0, start, s, x);
            for turn in turns {
                let (n, p) = match turn {
                    Turn::Right => b.arc(n1, None, p1, params.radius + width, -FRAC_PI_2, x),
                    Turn::Straight => b.straight(n1, p1, params.radius + width, x),
                    Turn::Left => b.arc(n1, None, p1, params.radius, FRAC_PI_2, x),
                };
                b.exit(n, p, s, x);
            }
        }
    }

    let mut spawn_points = Vec::new();
    for (ri, road) in b.roads.iter().enumerate() {
        for lane in 0..road.lanes {
            let n = math::floor(road.lane(lane).length() / SPAWN_SPACING) as usize;
            for k in 0..n {
                spawn_points.push(SpawnPoint {
                    road: ri as u16,
                    lane,
                    s: SPAWN_SPACING * k as f64 + SPAWN_SPACING / 2.0,
                });
            }
        }
    }

    let local = Block {
        kind: t,
        params: BlockParams {
            lanes: x,
            ..params.clone()
        },
        anchor: Pose::new(Vec2::ZERO, 0.0),
        nodes: b.nodes,
        roads: b.roads,
        sockets: b.sockets,
        spawn_points,
    };
    let mut placed = local.transformed(&Rigid::from_pose(anchor.pose));
    // The docked point is shared exactly with the anchor.
    placed.nodes[0] = anchor.pose.position;
    placed.sockets[0].pose.position = anchor.pose.position;
    Ok(placed)
}

/// One docking between an existing socket (`parent`) and a block's entry
/// socket (`child`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SocketRef {
    pub block: u32,
    pub socket: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Docking {
    pub parent: SocketRef,
    pub child: SocketRef,
}

/// Sockets that are neither docked nor the root entry, ordered by
/// (block, socket).
pub fn free_sockets(blocks: &[Block], dockings: &[Docking]) -> Vec<SocketRef> {
    let mut out = Vec::new();
    for (bi, block) in blocks.iter().enumerate() {
        for si in 0..block.sockets.len() {
            let r = SocketRef {
                block: bi as u32,
                socket: si as u32,
            };
            if bi == 0 && si == 0 {
                continue;
            }
            if dockings.iter().any(|d| d.parent == r || d.child == r) {
                continue;
            }
            out.push(r);
        }
    }
    out
}
