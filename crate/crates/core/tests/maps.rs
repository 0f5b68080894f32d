use blockdrive_core::blocks::*;
use blockdrive_core::geometry::Pose;
use blockdrive_core::pgmap::*;
use blockdrive_core::rng::{SimRng, Stream};
use std::collections::{BTreeSet, VecDeque};

fn params(lanes: u8, seed: u64) -> BlockParams {
    let mut rng = SimRng::new(seed, Stream::Map);
    let mut p = sample_params(BlockType::Straight, &mut rng, &ParameterSpace::default());
    p.lanes = lanes;
    p
}

#[test]
fn socket_table_holds_for_every_type() {
    for seed in 0..30 {
        for t in BlockType::ALL {
            let p = params(3, seed);
            let b = instantiate(t, &p, &Socket::origin(Pose::default(), 3, 3.5)).unwrap();
            let expected = match t {
                BlockType::Roundabout | BlockType::Intersection => 4,
                BlockType::TIntersection => 3,
                _ => 2,
            };
            assert_eq!(b.sockets.len(), expected, "{t:?}");
            assert_eq!(b.sockets.len(), t.socket_count());
            // Docking consumes the entry; the rest stay free.
            let free = free_sockets(std::slice::from_ref(&b), &[]);
            assert_eq!(free.len(), expected - 1);
        }
    }
}

#[test]
fn spawn_points_follow_lane_lengths() {
    let mut rng = SimRng::new(9, Stream::Map);
    for _ in 0..200 {
        let t = BlockType::ALL[rng.index(7)];
        let mut p = sample_params(t, &mut rng, &ParameterSpace::default());
        p.lanes = 1 + rng.index(4) as u8;
        let b = instantiate(t, &p, &Socket::origin(Pose::default(), p.lanes, 3.5)).unwrap();
        let expected: usize = b
            .roads
            .iter()
            .flat_map(|r| (0..r.lanes).map(move |i| (r.lane(i).length() / 10.0).floor() as usize))
            .sum();
        assert_eq!(b.spawn_points.len(), expected);
    }
}

#[test]
fn curve_radius_census() {
    let space = ParameterSpace::default();
    let mut rng = SimRng::new(1, Stream::Map);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..10_000 {
        let p = sample_params(BlockType::Curve, &mut rng, &space);
        assert!(p.within(&space));
        lo = lo.min(p.radius);
        hi = hi.max(p.radius);
    }
    assert!(lo >= 10.0 && hi <= 50.0);
    assert!((hi - lo) / 40.0 >= 0.9);
}

#[test]
fn straight_chain_bookkeeping() {
    let p = params(3, 0);
    let mut blocks = vec![instantiate(
        BlockType::Straight,
        &p,
        &Socket::origin(Pose::default(), 3, 3.5),
    )
    .unwrap()];
    let mut dockings = Vec::new();
    for i in 1..3u32 {
        let anchor = blocks.last().unwrap().sockets[1].clone();
        blocks.push(instantiate(BlockType::Straight, &p, &anchor).unwrap());
        dockings.push(Docking {
            parent: SocketRef {
                block: i - 1,
                socket: 1,
            },
            child: SocketRef {
                block: i,
                socket: 0,
            },
        });
    }
    assert_eq!(
        free_sockets(&blocks, &dockings),
        vec![SocketRef {
            block: 2,
            socket: 1
        }]
    );
}

/// Dockings name existing sockets, each child is a block's entry, each
/// socket is used at most once, and every block but the root is docked.
fn assert_consistent(net: &RoadNetwork) {
    assert_eq!(net.dockings.len() + 1, net.blocks.len().max(1));
    let mut used = BTreeSet::new();
    for (k, d) in net.dockings.iter().enumerate() {
        assert_eq!(
            d.child,
            SocketRef {
                block: k as u32 + 1,
                socket: 0
            }
        );
        assert!(d.parent.block < d.child.block);
        assert!((d.parent.socket as usize) < net.blocks[d.parent.block as usize].sockets.len());
        assert!(d.parent.socket != 0);
        assert!(used.insert(d.parent) && used.insert(d.child));
        let parent = net.socket(d.parent);
        let child = net.socket(d.child);
        assert!(parent.pose.position.distance(child.pose.position) < 1e-9);
        assert_eq!(parent.lanes, child.lanes);
    }
}

/// Every block is reachable from the root entry along directed roads.
fn assert_connected(net: &RoadNetwork) {
    let g = net.graph();
    let start = g.roads[0].from;
    let mut seen = vec![false; g.node_count()];
    let mut queue = VecDeque::from([start]);
    seen[start as usize] = true;
    while let Some(n) = queue.pop_front() {
        for &r in &g.out_roads[n as usize] {
            let to = g.roads[r as usize].to;
            if !seen[to as usize] {
                seen[to as usize] = true;
                queue.push_back(to);
            }
        }
    }
    for ids in &g.block_nodes {
        assert!(ids.iter().all(|&n| seen[n as usize]));
    }
}

#[test]
fn generated_maps_are_consistent_and_connected() {
    for n in [1, 3, 5, 7] {
        let cfg = MapConfig::with_blocks(n);
        for seed in 0..40 {
            let Ok(net) = generate_map(&cfg, seed) else {
                continue;
            };
            assert_eq!(net.blocks.len(), n);
            assert_consistent(&net);
            assert_connected(&net);
            assert!(!has_overlaps(&net));
            assert_eq!(net.destination, net.free_sockets().last().copied());
        }
    }
}

#[test]
fn failed_search_leaves_a_consistent_stack() {
    // A long chain of curves with few tries forces backtracking and some
    // failures.
    let cfg = MapConfig {
        blocks: 40,
        tries: 1,
        block_types: vec![BlockType::Curve],
        ..MapConfig::default()
    };
    let mut failures = 0;
    for seed in 0..100 {
        let mut rng = SimRng::new(seed, Stream::Map);
        let (net, ok) = big(&cfg, &mut rng);
        assert_consistent(&net);
        if ok {
            assert_eq!(net.blocks.len(), 40);
        } else {
            failures += 1;
            assert!(net.blocks.is_empty());
        }
    }
    assert!(failures > 0);
}

#[test]
fn more_tries_never_hurt() {
    let rate = |tries: usize| {
        let cfg = MapConfig {
            blocks: 5,
            tries,
            ..MapConfig::default()
        };
        (0..200).filter(|&s| generate_map(&cfg, s).is_ok()).count()
    };
    assert!(rate(40) >= rate(5));
}

#[test]
fn generate_maps_examples() {
    let cfg = MapConfig::with_blocks(3);
    let a = generate_maps(3, &cfg, 0).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a, generate_maps(3, &cfg, 0).unwrap());
    let seeds: Vec<u64> = a.iter().map(|m| m.seed.unwrap()).collect();
    assert!(seeds.windows(2).all(|w| w[0] < w[1]));

    let single = generate_maps(1, &MapConfig::with_blocks(1), 0).unwrap();
    assert_eq!(single[0].blocks.len(), 1);
}

#[test]
fn fork_adapts_and_others_match() {
    let p = params(2, 4);
    let anchor = Socket::origin(Pose::default(), 3, 3.5);
    assert!(instantiate(BlockType::Straight, &p, &anchor).is_err());
    let fork = instantiate(BlockType::Fork, &p, &anchor).unwrap();
    assert_eq!(fork.sockets[0].lanes, 3);
    let exit = fork.sockets[1].lanes as i32;
    assert_eq!((exit - 3).abs(), 1);
}
