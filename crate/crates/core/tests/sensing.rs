use blockdrive_core::env::{Env, EnvConfig};
use blockdrive_core::eval::{LaneFollowPolicy, Policy};
use blockdrive_core::geometry::{Obb, Pose, Rigid, Vec2};
use blockdrive_core::pgmap::MapConfig;
use blockdrive_core::rng::{SimRng, Stream};
use blockdrive_core::sensing::*;
use blockdrive_core::vehicle::{VehicleParams, VehicleState};
use proptest::prelude::*;
use std::f64::consts::PI;

const CAR: (f64, f64) = (4.5, 2.0);

fn car(pose: Pose) -> Obb {
    Obb::new(pose, CAR.0, CAR.1)
}

#[test]
fn analytic_rays() {
    let ego = Pose::new(Vec2::new(-7.0, 4.0), 0.9);
    let at = |d: f64, bearing: f64| {
        let p = ego.position + Vec2::from_angle(ego.heading + bearing) * d;
        car(Pose::new(p, ego.heading + bearing))
    };
    let scan = lidar_scan(ego, &[at(25.0, 0.0)], &[]);
    assert!((scan.values[0] - (0.5 - 2.25 / 50.0)).abs() < 1e-6);

    let scan = lidar_scan(ego, &[at(10.0, std::f64::consts::PI)], &[]);
    assert!((scan.values[120] - (10.0 - 2.25) / 50.0).abs() < 1e-6);
    assert_eq!(scan.values[0], 1.0);

    // Ray 60 points left of the heading.
    let scan = lidar_scan(ego, &[at(30.0, std::f64::consts::FRAC_PI_2)], &[]);
    assert!((scan.values[60] - (30.0 - 2.25) / 50.0).abs() < 1e-6);

    let scan = lidar_scan(ego, &[], &[]);
    assert!(scan.values.iter().all(|&v| (v - 1.0).abs() < 1e-6));
    assert_eq!(scan.values.len(), 240);
}

#[test]
fn layout_adds_up() {
    assert_eq!(OBS_LEN, 266);
    assert_eq!(
        LIDAR_RAYS + EGO_FEATURES + NAV_FEATURES + OTHER_FEATURES,
        266
    );
    let mut env = Env::new(EnvConfig::default()).unwrap();
    assert_eq!(env.reset(0).unwrap().as_slice().len(), 266);
    assert_eq!(env.reset_flat(0).unwrap().len(), 266);
}

fn random_pose(rng: &mut SimRng, spread: f64) -> Pose {
    Pose::new(
        Vec2::new(rng.uniform(-spread, spread), rng.uniform(-spread, spread)),
        rng.uniform(-PI, PI),
    )
}

struct Scene {
    ego: VehicleState,
    lane_heading: f64,
    left: f64,
    right: f64,
    nav: Pose,
    others: Vec<Sighting>,
}

impl Scene {
    fn random(rng: &mut SimRng) -> Self {
        let ego_pose = random_pose(rng, 100.0);
        let others = (0..rng.index(8))
            .map(|k| {
                let p = random_pose(rng, 40.0);
                Sighting {
                    id: k as u32,
                    pose: Pose::new(ego_pose.position + p.position, p.heading),
                }
            })
            .collect();
        let left = rng.uniform(0.0, 10.5);
        let nav = random_pose(rng, 40.0);
        Self {
            ego: VehicleState {
                pose: ego_pose,
                speed: rng.uniform(0.0, 30.0),
                steering: rng.uniform(-0.6, 0.6),
                last_steering_action: 0.0,
            },
            lane_heading: ego_pose.heading + rng.uniform(-0.3, 0.3),
            left,
            right: 10.5 - left,
            nav: Pose::new(ego_pose.position + nav.position, nav.heading),
            others,
        }
    }

    fn moved(&self, t: &Rigid) -> Self {
        Self {
            ego: VehicleState {
                pose: t.pose(self.ego.pose),
                ..self.ego
            },
            lane_heading: t.angle(self.lane_heading),
            left: self.left,
            right: self.right,
            nav: t.pose(self.nav),
            others: self
                .others
                .iter()
                .map(|o| Sighting {
                    id: o.id,
                    pose: t.pose(o.pose),
                })
                .collect(),
        }
    }

    fn observe(&self) -> Observation {
        let params = VehicleParams::default();
        let bodies: Vec<Obb> = self.others.iter().map(|o| car(o.pose)).collect();
        let lidar = lidar_scan(self.ego.pose, &bodies, &[]);
        assemble_observation(&ObservationInputs {
            ego: &self.ego,
            params: &params,
            lane_heading: self.lane_heading,
            left_distance: self.left,
            right_distance: self.right,
            road_width: 10.5,
            nav_target: self.nav,
            lidar: &lidar,
            others: &self.others,
        })
    }
}

fn max_diff(a: &Observation, b: &Observation) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn rotating_the_world_changes_nothing() {
    let mut rng = SimRng::new(5, Stream::Policy);
    for _ in 0..100 {
        let scene = Scene::random(&mut rng);
        let t = Rigid {
            rotation: rng.uniform(-PI, PI),
            translation: Vec2::new(rng.uniform(-50.0, 50.0), rng.uniform(-50.0, 50.0)),
        };
        let a = scene.observe();
        let b = scene.moved(&t).observe();
        assert!(max_diff(&a, &b) < 1e-6);
        assert_eq!(a, scene.observe());
    }
}

#[test]
fn rotated_maps_observe_the_same() {
    for seed in 0..5 {
        let turn = 0.7 + seed as f64;
        let rotated = EnvConfig {
            map: MapConfig {
                origin: Pose::new(Vec2::new(30.0, -12.0), turn),
                ..MapConfig::default()
            },
            ..EnvConfig::default()
        };
        let mut a = Env::new(EnvConfig::default()).unwrap();
        let mut b = Env::new(rotated.clone()).unwrap();
        let (oa, ob) = (a.reset(seed).unwrap(), b.reset(seed).unwrap());
        assert!(max_diff(&oa, &ob) < 1e-6, "seed {seed}");
        let mut policy = LaneFollowPolicy::default();
        for _ in 0..30 {
            let act = policy.act(a.episode().unwrap(), &oa, &a.config);
            let (ra, rb) = (a.step(act).unwrap(), b.step(act).unwrap());
            assert!(max_diff(&ra.obs, &rb.obs) < 1e-6, "seed {seed}");
            if ra.done {
                break;
            }
        }
    }
}

#[test]
fn ego_block_on_the_centerline() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    let obs = env.reset(1).unwrap();
    let ego = obs.ego();
    assert!(ego[1].abs() < 1e-9);
    assert!((ego[2] - 1.0).abs() < 1e-9);
    assert_eq!(ego[3], 0.0);
}

proptest! {
    #[test]
    fn lidar_is_monotone_in_distance(d in 3.0..60.0f64, extra in 0.0..20.0f64, bearing in 0usize..240, heading in -3.0..3.0f64) {
        let ego = Pose::new(Vec2::new(1.0, 2.0), heading);
        let dir = Vec2::from_angle(heading + std::f64::consts::TAU * bearing as f64 / 240.0);
        let near = car(Pose::new(ego.position + dir * d, 0.3));
        let far = car(Pose::new(ego.position + dir * (d + extra), 0.3));
        let a = lidar_scan(ego, &[near], &[]);
        let b = lidar_scan(ego, &[far], &[]);
        prop_assert!(b.values[bearing] >= a.values[bearing]);
        prop_assert!(a.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn nearest_matches_a_full_sort() {
    let mut rng = SimRng::new(11, Stream::Policy);
    for _ in 0..1000 {
        let ego = random_pose(&mut rng, 20.0);
        let n = rng.index(9);
        let others: Vec<Sighting> = (0..n)
            .map(|_| Sighting {
                id: rng.index(6) as u32,
                pose: random_pose(&mut rng, 60.0),
            })
            .collect();
        let mut sorted = others.clone();
        sorted.sort_by(|a, b| {
            let da = a.pose.position.distance(ego.position);
            let db = b.pose.position.distance(ego.position);
            da.partial_cmp(&db).unwrap().then(a.id.cmp(&b.id))
        });
        let out = nearest_vehicles(ego, &others);
        for slot in 0..4 {
            let got = &out[4 * slot..4 * slot + 4];
            match sorted.get(slot) {
                Some(o) => {
                    let local = ego.to_local(o.pose.position);
                    let rel = o.pose.heading - ego.heading;
                    let want = [
                        (local.x / 50.0).clamp(-1.0, 1.0),
                        (local.y / 50.0).clamp(-1.0, 1.0),
                        rel.sin(),
                        rel.cos(),
                    ];
                    for (g, w) in got.iter().zip(want) {
                        assert!((g - w).abs() < 1e-12);
                    }
                }
                None => assert!(got.iter().all(|&v| v == 0.0)),
            }
        }
    }
}

#[test]
fn six_vehicles_keep_the_four_nearest() {
    let others: Vec<Sighting> = [30.0, 5.0, 25.0, 12.0, 40.0, 8.0]
        .iter()
        .enumerate()
        .map(|(i, &x)| Sighting {
            id: i as u32,
            pose: Pose::new(Vec2::new(x, 0.0), 0.0),
        })
        .collect();
    let out = nearest_vehicles(Pose::default(), &others);
    let xs: Vec<f64> = (0..4).map(|k| out[4 * k] * 50.0).collect();
    for (x, want) in xs.iter().zip([5.0, 8.0, 12.0, 25.0]) {
        assert!((x - want).abs() < 1e-9);
    }
}
