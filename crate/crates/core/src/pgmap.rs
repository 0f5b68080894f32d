//! Block incremental generation: grows a road network one block at a
//! time, rejecting blocks whose footprint crosses the existing network and
//! backtracking when a block runs out of tries.

use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::blocks::{
    free_sockets, instantiate, sample_params, Block, BlockType, Docking, ParameterSpace, Road,
    Socket, SocketRef, SpawnPoint,
};
use crate::error::Error;
use crate::geometry::{block_footprints_overlap, Pose, Rigid, Segment, Vec2};
use crate::rng::{SimRng, Stream};

/// Current map document version.
pub const MAP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MapConfig {
    /// Blocks per map.
    pub blocks: usize,
    /// Tries per block before backtracking.
    pub tries: usize,
    pub lane_width: f64,
    /// Lane count of the root socket.
    pub lanes: u8,
    /// Block types to draw from, uniformly.
    pub block_types: Vec<BlockType>,
    /// Pose of the root socket.
    pub origin: Pose,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            blocks: 3,
            tries: 40,
            lane_width: 3.5,
            lanes: 3,
            block_types: BlockType::ALL.to_vec(),
            origin: Pose::default(),
        }
    }
}

impl MapConfig {
    pub fn with_blocks(blocks: usize) -> Self {
        Self {
            blocks,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.tries == 0 {
            return Err(Error::InvalidParameter("tries must be at least 1"));
        }
        if !(1..=4).contains(&self.lanes) {
            return Err(Error::InvalidParameter("lanes must be in 1..=4"));
        }
        if self.lane_width.is_nan() || self.lane_width <= 0.0 {
            return Err(Error::InvalidParameter("lane width must be positive"));
        }
        if self.block_types.is_empty() {
            return Err(Error::InvalidParameter("no block types allowed"));
        }
        Ok(())
    }

    pub fn parameter_space(&self) -> ParameterSpace {
        ParameterSpace {
            lane_width: self.lane_width,
            ..ParameterSpace::default()
        }
    }

    pub fn root_socket(&self) -> Socket {
        Socket::origin(self.origin, self.lanes, self.lane_width)
    }
}

/// Global reference to a road inside a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RoadRef {
    pub block: u32,
    pub road: u16,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RoadNetwork {
    pub version: u32,
    pub seed: Option<u64>,
    pub config: MapConfig,
    pub blocks: Vec<Block>,
    pub dockings: Vec<Docking>,
    pub destination: Option<SocketRef>,
}

impl RoadNetwork {
    pub fn empty(config: MapConfig, seed: Option<u64>) -> Self {
        Self {
            version: MAP_VERSION,
            seed,
            config,
            blocks: Vec::new(),
            dockings: Vec::new(),
            destination: None,
        }
    }

    pub fn road(&self, r: RoadRef) -> &Road {
        &self.blocks[r.block as usize].roads[r.road as usize]
    }

    pub fn socket(&self, r: SocketRef) -> &Socket {
        &self.blocks[r.block as usize].sockets[r.socket as usize]
    }

    pub fn roads(&self) -> impl Iterator<Item = (RoadRef, &Road)> {
        self.blocks.iter().enumerate().flat_map(|(bi, b)| {
            b.roads.iter().enumerate().map(move |(ri, r)| {
                (
                    RoadRef {
                        block: bi as u32,
                        road: ri as u16,
                    },
                    r,
                )
            })
        })
    }

    /// Total reference length of all roads.
    pub fn total_length(&self) -> f64 {
        self.roads().map(|(_, r)| r.length()).sum()
    }

    /// Length-weighted mean lane count.
    pub fn average_lanes(&self) -> f64 {
        let total = self.total_length();
        if total == 0.0 {
            return 0.0;
        }
        self.roads()
            .map(|(_, r)| r.length() * r.lanes as f64)
            .sum::<f64>()
            / total
    }

    pub fn spawn_points(&self) -> Vec<(u32, SpawnPoint)> {
        self.blocks
            .iter()
            .enumerate()
            .flat_map(|(bi, b)| b.spawn_points.iter().map(move |p| (bi as u32, *p)))
            .collect()
    }

    pub fn free_sockets(&self) -> Vec<SocketRef> {
        free_sockets(&self.blocks, &self.dockings)
    }

    pub fn destination_socket(&self) -> Option<&Socket> {
        self.destination.map(|r| self.socket(r))
    }

    /// The same network moved by a rigid transform.
    pub fn transformed(&self, t: &Rigid) -> RoadNetwork {
        RoadNetwork {
            blocks: self.blocks.iter().map(|b| b.transformed(t)).collect(),
            config: MapConfig {
                origin: t.pose(self.config.origin),
                ..self.config.clone()
            },
            ..self.clone()
        }
    }

    pub fn footprints(&self) -> Vec<Vec<Segment>> {
        self.blocks.iter().map(Block::boundary_segments).collect()
    }

    /// Directed node/road graph with nodes shared across docked sockets.
    pub fn graph(&self) -> NetworkGraph {
        let mut g = NetworkGraph::default();
        for (bi, block) in self.blocks.iter().enumerate() {
            let parent = self
                .dockings
                .iter()
                .find(|d| d.child.block == bi as u32 && d.child.socket == 0)
                .map(|d| d.parent);
            let mut ids = Vec::with_capacity(block.nodes.len());
            for (ni, &p) in block.nodes.iter().enumerate() {
                let shared = match (ni, parent) {
                    (0, Some(par)) => {
                        let s = self.socket(par);
                        Some(g.block_nodes[par.block as usize][s.node as usize])
                    }
                    _ => None,
                };
                let id = shared.unwrap_or_else(|| {
                    g.nodes.push(p);
                    g.out_roads.push(Vec::new());
                    (g.nodes.len() - 1) as u32
                });
                ids.push(id);
            }
            for (ri, road) in block.roads.iter().enumerate() {
                let idx = g.roads.len() as u32;
                let from = ids[road.from as usize];
                let to = ids[road.to as usize];
                g.roads.push(GraphRoad {
                    road: RoadRef {
                        block: bi as u32,
                        road: ri as u16,
                    },
                    from,
                    to,
                    length: road.length(),
                });
                g.out_roads[from as usize].push(idx);
            }
            g.block_nodes.push(ids);
        }
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphRoad {
    pub road: RoadRef,
    pub from: u32,
    pub to: u32,
    pub length: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NetworkGraph {
    pub nodes: Vec<Vec2>,
    pub roads: Vec<GraphRoad>,
    pub out_roads: Vec<Vec<u32>>,
    /// Global id of each block-local node.
    pub block_nodes: Vec<Vec<u32>>,
}

impl NetworkGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn road_index(&self, r: RoadRef) -> Option<u32> {
        self.roads
            .iter()
            .position(|g| g.road == r)
            .map(|i| i as u32)
    }

    pub fn road_between(&self, from: u32, to: u32) -> Option<u32> {
        self.out_roads
            .get(from as usize)?
            .iter()
            .copied()
            .find(|&r| self.roads[r as usize].to == to)
    }

    /// Roads ending at `node`.
    pub fn in_roads(&self, node: u32) -> Vec<u32> {
        (0..self.roads.len() as u32)
            .filter(|&r| self.roads[r as usize].to == node)
            .collect()
    }

    pub fn socket_node(&self, net: &RoadNetwork, s: SocketRef) -> u32 {
        let sock = net.socket(s);
        self.block_nodes[s.block as usize][sock.node as usize]
    }
}

struct Search<'a> {
    config: &'a MapConfig,
    space: ParameterSpace,
    rng: &'a mut SimRng,
    blocks: Vec<Block>,
    dockings: Vec<Docking>,
    footprints: Vec<Vec<Segment>>,
}

impl Search<'_> {
    fn get_new_block(&mut self) -> Option<(Block, Option<Docking>)> {
        let t = self.config.block_types[self.rng.index(self.config.block_types.len())];
        let mut params = sample_params(t, self.rng, &self.space);
        let (anchor, parent) = if self.blocks.is_empty() {
            (self.config.root_socket(), None)
        } else {
            let free = free_sockets(&self.blocks, &self.dockings);
            if free.is_empty() {
                return None;
            }
            let r = free[self.rng.index(free.len())];
            (
                self.blocks[r.block as usize].sockets[r.socket as usize].clone(),
                Some(r),
            )
        };
        params.lanes = anchor.lanes;
        let block = instantiate(t, &params, &anchor).ok()?;
        let docking = parent.map(|p| Docking {
            parent: p,
            child: SocketRef {
                block: self.blocks.len() as u32,
                socket: 0,
            },
        });
        Some((block, docking))
    }

    fn big(&mut self) -> bool {
        if self.blocks.len() == self.config.blocks {
            return true;
        }
        for _ in 0..self.config.tries {
            let Some((block, docking)) = self.get_new_block() else {
                continue;
            };
            let footprint = block.boundary_segments();
            if self
                .footprints
                .iter()
                .any(|f| block_footprints_overlap(&footprint, f))
            {
                continue;
            }
            self.blocks.push(block);
            self.footprints.push(footprint);
            if let Some(d) = docking {
                self.dockings.push(d);
            }
            if self.big() {
                return true;
            }
            self.blocks.pop();
            self.footprints.pop();
            if docking.is_some() {
                self.dockings.pop();
            }
        }
        false
    }
}

/// Runs block incremental generation. On failure the returned network is
/// whatever remained after backtracking (empty when the root failed).
pub fn big(config: &MapConfig, rng: &mut SimRng) -> (RoadNetwork, bool) {
    let mut search = Search {
        config,
        space: config.parameter_space(),
        rng,
        blocks: Vec::new(),
        dockings: Vec::new(),
        footprints: Vec::new(),
    };
    let ok = search.big();
    let mut net = RoadNetwork::empty(config.clone(), None);
    net.blocks = search.blocks;
    net.dockings = search.dockings;
    if ok {
        net.destination = net.free_sockets().last().copied();
    }
    (net, ok)
}

/// Generates the map for one seed.
pub fn generate_map(config: &MapConfig, seed: u64) -> Result<RoadNetwork, Error> {
    config.validate()?;
    let mut rng = SimRng::new(seed, Stream::Map);
    let (mut net, ok) = big(config, &mut rng);
    if !ok {
        return Err(Error::MapGenerationFailed { seed });
    }
    net.seed = Some(seed);
    Ok(net)
}

/// Generates `count` maps from consecutive seeds starting at `base_seed`,
/// skipping seeds whose generation fails.
pub fn generate_maps(
    count: usize,
    config: &MapConfig,
    base_seed: u64,
) -> Result<Vec<RoadNetwork>, Error> {
    if count == 0 {
        return Err(Error::InvalidParameter("map count must be at least 1"));
    }
    config.validate()?;
    let limit = 100 * count as u64;
    let mut maps = Vec::with_capacity(count);
    let mut seed = base_seed;
    let mut failures = 0u64;
    while maps.len() < count {
        match generate_map(config, seed) {
            Ok(net) => {
                maps.push(net);
                failures = 0;
            }
            Err(Error::MapGenerationFailed { .. }) => {
                failures += 1;
                if failures >= limit {
                    return Err(Error::GenerationExhausted { attempts: failures });
                }
            }
            Err(e) => return Err(e),
        }
        seed = seed.wrapping_add(1);
    }
    Ok(maps)
}

/// All-pairs check that no two blocks' edges cross. Docked blocks touch
/// only at shared socket endpoints, which do not count.
pub fn has_overlaps(net: &RoadNetwork) -> bool {
    let fps = net.footprints();
    for i in 0..fps.len() {
        for j in (i + 1)..fps.len() {
            if block_footprints_overlap(&fps[i], &fps[j]) {
                return true;
            }
        }
    }
    false
}

/// The root block alone, placed at the configured origin. Handy for tests
/// and single-block scenarios.
pub fn single_block(
    config: &MapConfig,
    t: BlockType,
    params: &crate::blocks::BlockParams,
) -> Result<RoadNetwork, Error> {
    let mut p = params.clone();
    p.lanes = config.lanes;
    let block = instantiate(t, &p, &config.root_socket())?;
    let mut net = RoadNetwork::empty(config.clone(), None);
    net.blocks = vec![block];
    net.destination = net.free_sockets().last().copied();
    Ok(net)
}
