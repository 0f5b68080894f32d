use blockdrive_core::blocks::{instantiate, sample_params, BlockType, ParameterSpace, Socket};
use blockdrive_core::geometry::*;
use blockdrive_core::rng::{SimRng, Stream};
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

fn lane_strategy() -> impl Strategy<Value = LaneGeometry> {
    let straight =
        (-50.0..50.0f64, -50.0..50.0f64, 1.0..80.0f64, -PI..PI).prop_map(|(x, y, len, h)| {
            let a = Vec2::new(x, y);
            LaneGeometry::straight(a, a + Vec2::from_angle(h) * len, 3.5)
        });
    let arc = (
        -50.0..50.0f64,
        -50.0..50.0f64,
        5.0..60.0f64,
        -PI..PI,
        0.2..3.0f64,
        any::<bool>(),
    )
        .prop_map(|(x, y, r, a0, sweep, left)| {
            let sweep = if left { sweep } else { -sweep };
            LaneGeometry::arc(Vec2::new(x, y), r, a0, sweep, 3.5)
        });
    prop_oneof![straight, arc]
}

/// Exact orientation sign on integer coordinates.
fn orient(a: (i64, i64), b: (i64, i64), c: (i64, i64)) -> i64 {
    ((b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)).signum()
}

/// Interiors cross, or the segments share a collinear stretch of positive
/// length. Touching at a point never counts.
fn lattice_oracle(p: (i64, i64), q: (i64, i64), r: (i64, i64), s: (i64, i64)) -> bool {
    if p == q || r == s {
        return false;
    }
    let (o1, o2) = (orient(p, q, r), orient(p, q, s));
    let (o3, o4) = (orient(r, s, p), orient(r, s, q));
    if o1 == 0 && o2 == 0 {
        // Collinear: project on the dominant axis and intersect intervals.
        let key = |v: (i64, i64)| if p.0 != q.0 { v.0 } else { v.1 };
        let (a0, a1) = (key(p).min(key(q)), key(p).max(key(q)));
        let (b0, b1) = (key(r).min(key(s)), key(r).max(key(s)));
        return a1.min(b1) > a0.max(b0);
    }
    o1 * o2 < 0 && o3 * o4 < 0
}

/// Strict crossing by orientation signs, plus collinear overlap of
/// positive length.
fn float_oracle(s1: &Segment, s2: &Segment) -> bool {
    let o = |a: Vec2, b: Vec2, c: Vec2| (b - a).cross(c - a);
    let len = s1.a.distance(s1.b);
    let (o1, o2) = (o(s1.a, s1.b, s2.a), o(s1.a, s1.b, s2.b));
    if o1.abs() < 1e-9 * len && o2.abs() < 1e-9 * len {
        let dir = (s1.b - s1.a) * (1.0 / len);
        let (t0, t1) = ((s2.a - s1.a).dot(dir), (s2.b - s1.a).dot(dir));
        return t0.max(t1).min(len) - t0.min(t1).max(0.0) > 1e-9;
    }
    o1 * o2 < 0.0 && o(s2.a, s2.b, s1.a) * o(s2.a, s2.b, s1.b) < 0.0
}

fn seg(a: (i64, i64), b: (i64, i64)) -> Segment {
    Segment::new(
        Vec2::new(a.0 as f64, a.1 as f64),
        Vec2::new(b.0 as f64, b.1 as f64),
    )
}

fn point() -> impl Strategy<Value = (i64, i64)> {
    (-4i64..=4, -4i64..=4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn frenet_round_trip(lane in lane_strategy(), frac in 0.0..=1.0f64, d in -1.7..1.7f64) {
        let s = frac * lane.length();
        let p = lane_point_at(&lane, FrenetCoord::new(s, 0.0)).unwrap();
        let f = frenet_project(&lane, p).unwrap();
        prop_assert!((f.s - s).abs() < 1e-6 && f.d.abs() < 1e-6);

        let p = lane_point_at(&lane, FrenetCoord::new(s, d)).unwrap();
        let f = frenet_project(&lane, p).unwrap();
        prop_assert!((f.s - s).abs() < 1e-6 && (f.d - d).abs() < 1e-6);
    }

    #[test]
    fn projection_is_monotone_along_lane(lane in lane_strategy(), d in -1.7..1.7f64) {
        let n = 50;
        let mut last = -1.0;
        for i in 0..=n {
            let s = lane.length() * i as f64 / n as f64;
            let p = lane_point_at(&lane, FrenetCoord::new(s, d)).unwrap();
            let f = frenet_project(&lane, p).unwrap();
            prop_assert!(f.s >= last - 1e-9);
            last = f.s;
        }
    }

    #[test]
    fn lattice_segments_match_oracle(p in point(), q in point(), r in point(), s in point()) {
        prop_assert_eq!(segments_intersect(&seg(p, q), &seg(r, s)), lattice_oracle(p, q, r, s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn segments_intersect_is_symmetric(
        a in (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64),
        b in (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64),
    ) {
        let s1 = Segment::new(Vec2::new(a.0, a.1), Vec2::new(a.2, a.3));
        let s2 = Segment::new(Vec2::new(b.0, b.1), Vec2::new(b.2, b.3));
        prop_assert_eq!(segments_intersect(&s1, &s2), segments_intersect(&s2, &s1));
        prop_assert_eq!(segments_intersect(&s1, &s2), float_oracle(&s1, &s2));
    }
}

#[test]
fn spec_examples() {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-5;
    assert_eq!(
        lane_length(&LaneGeometry::straight(
            Vec2::ZERO,
            Vec2::new(10.0, 0.0),
            3.5
        )),
        10.0
    );
    assert!(close(
        lane_length(&LaneGeometry::arc(Vec2::ZERO, 10.0, 0.0, FRAC_PI_2, 3.5)),
        15.70796
    ));
    assert!(close(
        lane_length(&LaneGeometry::arc(Vec2::ZERO, 5.0, 0.0, -PI, 3.5)),
        15.70796
    ));

    let lane = LaneGeometry::straight(Vec2::ZERO, Vec2::new(10.0, 0.0), 3.5);
    assert_eq!(
        frenet_project(&lane, Vec2::new(3.0, 1.0)).unwrap(),
        FrenetCoord::new(3.0, 1.0)
    );
    assert_eq!(
        frenet_project(&lane, Vec2::new(-2.0, 0.0)).unwrap(),
        FrenetCoord::new(0.0, 0.0)
    );
    assert_eq!(
        lane_point_at(&lane, FrenetCoord::new(3.0, 1.0)).unwrap(),
        Vec2::new(3.0, 1.0)
    );
    assert!(lane_point_at(&lane, FrenetCoord::new(10.5, 0.0)).is_err());

    let arc = LaneGeometry::arc(Vec2::ZERO, 10.0, 0.0, FRAC_PI_2, 3.5);
    let at45 = Vec2::from_angle(PI / 4.0) * 10.0;
    let f = frenet_project(&arc, at45).unwrap();
    assert!(close(f.s, 7.85398) && f.d.abs() < 1e-9);
    assert!(
        lane_point_at(&arc, FrenetCoord::new(f.s, 0.0))
            .unwrap()
            .distance(at45)
            < 1e-9
    );
    assert!(frenet_project(&arc, Vec2::ZERO).is_err());

    assert!(segments_intersect(
        &seg((0, 0), (1, 0)),
        &Segment::new(Vec2::new(0.5, -1.0), Vec2::new(0.5, 1.0))
    ));
    assert!(!segments_intersect(
        &seg((0, 0), (1, 0)),
        &seg((0, 1), (1, 1))
    ));
    assert!(!segments_intersect(
        &seg((0, 0), (1, 0)),
        &seg((1, 0), (2, 0))
    ));
}

fn random_block(rng: &mut SimRng, anchor: &Socket) -> blockdrive_core::blocks::Block {
    loop {
        let t = BlockType::ALL[rng.index(BlockType::ALL.len())];
        let mut p = sample_params(t, rng, &ParameterSpace::default());
        p.lanes = anchor.lanes;
        if let Ok(b) = instantiate(t, &p, anchor) {
            return b;
        }
    }
}

fn brute_force_overlap(a: &[Segment], b: &[Segment]) -> bool {
    a.iter().any(|x| b.iter().any(|y| float_oracle(x, y)))
}

#[test]
fn footprint_overlap_matches_all_pairs_oracle() {
    let mut rng = SimRng::new(11, Stream::Map);
    let mut hits = 0;
    for _ in 0..100 {
        let pose = |rng: &mut SimRng| {
            Pose::new(
                Vec2::new(rng.uniform(-60.0, 60.0), rng.uniform(-60.0, 60.0)),
                rng.uniform(-PI, PI),
            )
        };
        let lanes = 1 + rng.index(3) as u8;
        let (pa, pb) = (pose(&mut rng), pose(&mut rng));
        let a = random_block(&mut rng, &Socket::origin(pa, lanes, 3.5));
        let b = random_block(&mut rng, &Socket::origin(pb, lanes, 3.5));
        let (fa, fb) = (a.boundary_segments(), b.boundary_segments());
        let got = block_footprints_overlap(&fa, &fb);
        assert_eq!(got, brute_force_overlap(&fa, &fb));
        hits += got as usize;
    }
    // Both outcomes are exercised.
    assert!(hits > 5 && hits < 95, "{hits}");
}

#[test]
fn footprint_examples() {
    let space = ParameterSpace::default();
    let mut rng = SimRng::new(3, Stream::Map);
    let mut p = sample_params(BlockType::Straight, &mut rng, &space);
    p.lanes = 3;
    let root = Socket::origin(Pose::default(), 3, 3.5);
    let first = instantiate(BlockType::Straight, &p, &root).unwrap();
    let second = instantiate(BlockType::Straight, &p, &first.sockets[1]).unwrap();
    assert!(!block_footprints_overlap(
        &first.boundary_segments(),
        &second.boundary_segments()
    ));
    assert!(block_footprints_overlap(
        &first.boundary_segments(),
        &first.boundary_segments()
    ));

    // Four left quarter turns fold back onto the first block.
    p.radius = 10.0;
    p.angle = FRAC_PI_2;
    p.turn_left = true;
    p.length = 20.0;
    let mut chain = vec![instantiate(BlockType::Curve, &p, &root).unwrap()];
    for _ in 0..4 {
        let next = instantiate(BlockType::Curve, &p, &chain.last().unwrap().sockets[1]).unwrap();
        chain.push(next);
    }
    let first_fp = chain[0].boundary_segments();
    let folded = chain[2..]
        .iter()
        .any(|b| block_footprints_overlap(&first_fp, &b.boundary_segments()));
    assert!(folded);
    assert!(chain[2..]
        .iter()
        .any(|b| brute_force_overlap(&first_fp, &b.boundary_segments())));
}

#[test]
fn rigid_placement_preserves_distances() {
    let mut rng = SimRng::new(5, Stream::Map);
    for _ in 0..50 {
        let t = BlockType::ALL[rng.index(BlockType::ALL.len())];
        let mut p = sample_params(t, &mut rng, &ParameterSpace::default());
        p.lanes = 2;
        let local = instantiate(t, &p, &Socket::origin(Pose::default(), 2, 3.5)).unwrap();
        let pose = Pose::new(
            Vec2::new(rng.uniform(-500.0, 500.0), rng.uniform(-500.0, 500.0)),
            rng.uniform(-PI, PI),
        );
        let placed = instantiate(t, &p, &Socket::origin(pose, 2, 3.5)).unwrap();
        let samples = |b: &blockdrive_core::blocks::Block| -> Vec<Vec2> {
            b.roads
                .iter()
                .flat_map(|r| (0..r.lanes).map(move |i| r.lane(i)))
                .flat_map(|l| (0..=4).map(move |k| l.point_at(l.length() * k as f64 / 4.0)))
                .collect()
        };
        let (a, b) = (samples(&local), samples(&placed));
        for i in 0..a.len() {
            for j in (i + 1)..a.len() {
                assert!((a[i].distance(a[j]) - b[i].distance(b[j])).abs() < 1e-6);
            }
        }
    }
}

/// Two convex quads overlap iff an edge pair crosses or a corner of one
/// lies inside the other.
fn quad_oracle(a: &Obb, b: &Obb) -> bool {
    let inside =
        |q: &[Vec2; 4], p: Vec2| (0..4).all(|i| (q[(i + 1) % 4] - q[i]).cross(p - q[i]) >= 0.0);
    let (ca, cb) = (a.corners(), b.corners());
    let edges = |c: &[Vec2; 4]| -> Vec<Segment> {
        (0..4).map(|i| Segment::new(c[i], c[(i + 1) % 4])).collect()
    };
    let (ea, eb) = (edges(&ca), edges(&cb));
    ea.iter().any(|x| eb.iter().any(|y| float_oracle(x, y)))
        || ca.iter().any(|&p| inside(&cb, p))
        || cb.iter().any(|&p| inside(&ca, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(5000))]

    #[test]
    fn obb_overlap_matches_polygon_oracle(
        x in -8.0..8.0f64, y in -8.0..8.0f64, h1 in -PI..PI, h2 in -PI..PI,
    ) {
        let a = Obb::new(Pose::new(Vec2::ZERO, h1), 4.5, 2.0);
        let b = Obb::new(Pose::new(Vec2::new(x, y), h2), 4.5, 2.0);
        prop_assert_eq!(obb_overlap(&a, &b), quad_oracle(&a, &b));
    }
}
