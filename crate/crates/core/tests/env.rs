use blockdrive_core::blocks::BlockType;
use blockdrive_core::env::*;
use blockdrive_core::eval::{run_episode_with, LaneFollowPolicy, Policy, RandomPolicy};
use blockdrive_core::geometry::obb_overlap;
use blockdrive_core::pgmap::MapConfig;
use blockdrive_core::rng::{SimRng, Stream};
use blockdrive_core::traffic::TrafficConfig;
use blockdrive_core::vehicle::Action;
use blockdrive_core::Error;

fn straight(density: f64) -> EnvConfig {
    EnvConfig {
        map: MapConfig {
            blocks: 1,
            block_types: vec![BlockType::Straight],
            ..MapConfig::default()
        },
        traffic: TrafficConfig::with_density(density),
        ..EnvConfig::default()
    }
}

/// The weighted sum written out term by term.
fn reward_oracle(d: f64, v: f64, vmax: f64, da: f64, t: TerminalState) -> f64 {
    let payoff = match t {
        TerminalState::Success => 20.0,
        TerminalState::Crash => -10.0,
        TerminalState::OutOfRoad => -5.0,
        TerminalState::MaxStep | TerminalState::None => 0.0,
    };
    if t == TerminalState::None {
        1.0 * d + 0.1 * (v / vmax) + 0.1 * (-da.abs() * (v / vmax)) + 1.0 * 0.0
    } else {
        1.0 * 0.0 + 0.1 * 0.0 + 0.1 * 0.0 + 1.0 * payoff
    }
}

#[test]
fn reward_matches_the_oracle() {
    let cfg = RewardConfig::default();
    let mut rng = SimRng::new(3, Stream::Policy);
    for _ in 0..1000 {
        let inp = RewardInputs {
            displacement: rng.uniform(-1.0, 4.0),
            speed: rng.uniform(0.0, 120.0 / 3.6),
            max_speed: 120.0 / 3.6,
            steering: rng.uniform(-1.0, 1.0),
            prev_steering: rng.uniform(-1.0, 1.0),
        };
        let t = TerminalState::ALL[rng.index(5)];
        let (r, c) = compute_reward(&cfg, &inp, t);
        let want = reward_oracle(
            inp.displacement,
            inp.speed,
            inp.max_speed,
            inp.steering - inp.prev_steering,
            t,
        );
        assert_eq!(r, want);
        assert_eq!(r, c.total(&cfg));
    }
    let payoffs: Vec<f64> = [
        TerminalState::Success,
        TerminalState::Crash,
        TerminalState::OutOfRoad,
        TerminalState::MaxStep,
    ]
    .map(|t| cfg.payoff(t))
    .to_vec();
    assert_eq!(payoffs, [20.0, -10.0, -5.0, 0.0]);
}

#[test]
fn standing_still_earns_nothing() {
    let mut env = Env::new(straight(0.0)).unwrap();
    env.reset(0).unwrap();
    let r = env.step(Action::default()).unwrap();
    assert_eq!(r.reward, 0.0);
    assert_eq!(r.info.components, RewardComponents::default());
    assert!(!r.done);
    assert_eq!(r.info.terminal, TerminalState::None);
}

#[test]
fn empty_straight_has_a_clear_lidar() {
    let mut env = Env::new(straight(0.0)).unwrap();
    let obs = env.reset(4).unwrap();
    assert!(obs.lidar().iter().all(|&v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn max_step_ends_quietly() {
    let cfg = EnvConfig {
        max_steps: 5,
        ..straight(0.0)
    };
    let mut env = Env::new(cfg).unwrap();
    env.reset(0).unwrap();
    for k in 1..=5 {
        let r = env.step(Action::default()).unwrap();
        assert_eq!(r.done, k == 5);
    }
    let info = env.episode().unwrap().last_info;
    assert_eq!(info.terminal, TerminalState::MaxStep);
    assert_eq!(info.components.r_term, 0.0);
    assert_eq!(env.step(Action::default()), Err(Error::StepAfterDone));
}

#[test]
fn arrival_pays_only_the_terminal_term() {
    let cfg = straight(0.0);
    let mut env = Env::new(cfg).unwrap();
    let mut last = None;
    let rec = run_episode_with(&mut env, &mut LaneFollowPolicy::default(), 2, |_, _, r| {
        last = Some(r.clone())
    })
    .unwrap();
    assert_eq!(rec.terminal, TerminalState::Success);
    let last = last.unwrap();
    assert!(last.done);
    assert_eq!(last.info.components.r_term, 20.0);
    assert_eq!(
        (last.info.components.r_disp, last.info.components.r_speed),
        (0.0, 0.0)
    );
    assert_eq!(last.reward, 20.0);
}

#[test]
fn lateral_bound_decides_out_of_road() {
    // One Straight with three 3.5 m lanes: the half width is 5.25 m and
    // the ego starts on the middle lane, which is the road's center.
    for (offset, out) in [(5.35, true), (5.15, false), (-5.35, true)] {
        let mut env = Env::new(straight(0.0)).unwrap();
        env.reset(0).unwrap();
        let ep = env.episode_mut().unwrap();
        let left = ep.ego.pose.direction().perp();
        ep.ego.pose.position =
            ep.ego.pose.position + left * offset + ep.ego.pose.direction() * 20.0;
        let r = env.step(Action::default()).unwrap();
        assert_eq!(
            r.info.terminal == TerminalState::OutOfRoad,
            out,
            "offset {offset}"
        );
        if out {
            assert_eq!(r.reward, -5.0);
        }
    }
}

#[test]
fn sitting_on_another_car_is_a_crash() {
    let cfg = straight(0.3);
    let mut env = Env::new(cfg.clone()).unwrap();
    env.reset(1).unwrap();
    let ep = env.episode_mut().unwrap();
    let other = ep.traffic.vehicles()[0].state.pose;
    ep.ego.pose = other;
    let r = env.step(Action::default()).unwrap();
    assert_eq!(r.info.terminal, TerminalState::Crash);
    assert_eq!(r.reward, -10.0);
    assert_eq!(r.info.cost, 0.0);

    let safe = EnvConfig {
        safety_mode: true,
        ..cfg
    };
    let mut env = Env::new(safe).unwrap();
    env.reset(1).unwrap();
    let ep = env.episode_mut().unwrap();
    ep.ego.pose = ep.traffic.vehicles()[0].state.pose;
    let r = env.step(Action::default()).unwrap();
    assert_ne!(r.info.terminal, TerminalState::Crash);
    assert_eq!(r.info.cost, 1.0);
}

#[test]
fn safety_cost_counts_overlap_steps() {
    let cfg = EnvConfig {
        safety_mode: true,
        max_steps: 400,
        traffic: TrafficConfig::with_density(0.3),
        ..EnvConfig::default()
    };
    let params = cfg.vehicle.clone();
    let mut total = 0.0;
    for seed in 0..10 {
        let mut env = Env::new(cfg.clone()).unwrap();
        let mut overlaps = 0;
        let mut rng = SimRng::new(seed, Stream::Policy);
        env.reset(seed).unwrap();
        loop {
            let r = env
                .step(Action::new(rng.uniform(-0.05, 0.05), 0.6))
                .unwrap();
            let ep = env.episode().unwrap();
            let me = ep.ego_footprint(&params);
            let hit = ep
                .traffic
                .vehicles()
                .iter()
                .any(|v| obb_overlap(&me, &v.footprint()))
                || ep.obstacles.iter().any(|o| obb_overlap(&me, o));
            overlaps += hit as usize;
            assert!(r.info.cost >= 0.0);
            assert_ne!(r.info.terminal, TerminalState::Crash);
            if r.done {
                break;
            }
        }
        let ep = env.episode().unwrap();
        assert_eq!(ep.total_cost, overlaps as f64);
        total += ep.total_cost;
    }
    assert!(total > 0.0);
}

#[test]
fn every_reward_is_its_components() {
    let cfg = EnvConfig::default();
    let mut env = Env::new(cfg.clone()).unwrap();
    let mut policy = RandomPolicy::default();
    let mut steps = 0;
    for seed in 0..20 {
        run_episode_with(&mut env, &mut policy, seed, |_, _, r| {
            assert_eq!(r.reward, r.info.components.total(&cfg.reward));
            assert_eq!(r.done, r.info.terminal != TerminalState::None);
            let obs = r.obs.as_slice();
            assert!(obs
                .iter()
                .all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
            steps += 1;
        })
        .unwrap();
    }
    assert!(steps > 0);
}

#[test]
fn observations_stay_in_range() {
    let cfg = EnvConfig {
        max_steps: 400,
        ..EnvConfig::default()
    };
    let mut env = Env::new(cfg.clone()).unwrap();
    let mut policy = LaneFollowPolicy::default();
    let mut rng = SimRng::new(8, Stream::Policy);
    let mut steps = 0;
    let mut seed = 0;
    while steps < 10_000 {
        let mut obs = env.reset(seed).unwrap();
        seed += 1;
        loop {
            let a = policy.act(env.episode().unwrap(), &obs, &cfg);
            let a = Action::new(a.steering + rng.uniform(-0.2, 0.2), a.throttle);
            let r = env.step(a).unwrap();
            steps += 1;
            assert!(r
                .obs
                .as_slice()
                .iter()
                .all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
            if r.done {
                break;
            }
            obs = r.obs;
        }
    }
}

#[test]
fn displacement_tracks_speed_on_a_straight() {
    let mut env = Env::new(straight(0.0)).unwrap();
    env.reset(0).unwrap();
    env.episode_mut().unwrap().ego.speed = 10.0;
    for _ in 0..30 {
        let before = env.episode().unwrap().ego.speed;
        let r = env.step(Action::default()).unwrap();
        let after = env.episode().unwrap().ego.speed;
        assert!((r.info.components.r_disp - 0.05 * (before + after)).abs() < 1e-3);
    }
}

#[test]
fn replays_are_identical() {
    let run = || {
        let mut env = Env::new(EnvConfig::default()).unwrap();
        let mut rng = SimRng::new(21, Stream::Policy);
        let mut out = vec![env.reset(17).unwrap().to_f32()];
        for _ in 0..500 {
            let a = Action::new(rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.6));
            let r = env.step(a).unwrap();
            out.push(r.obs.to_f32());
            out.push(vec![r.reward as f32, r.info.terminal.code() as f32]);
            if r.done {
                break;
            }
        }
        out
    };
    assert_eq!(run(), run());
    let mut env = Env::new(EnvConfig::default()).unwrap();
    assert_eq!(env.reset(5).unwrap(), env.reset(5).unwrap());
}

#[test]
fn flat_interface_mirrors_step() {
    let mut a = Env::new(EnvConfig::default()).unwrap();
    let mut b = Env::new(EnvConfig::default()).unwrap();
    let flat = a.reset_flat(9).unwrap();
    assert_eq!(flat.len(), 266);
    assert_eq!(flat, b.reset(9).unwrap().to_f32());
    for k in 0..50 {
        let act = [0.01 * k as f32 - 0.2, 0.5];
        let (obs, reward, done, info) = a.step_flat(act).unwrap();
        let r = b.step(Action::new(act[0] as f64, act[1] as f64)).unwrap();
        assert_eq!(obs, r.obs.to_f32());
        assert_eq!(reward, r.reward as f32);
        assert_eq!(done, r.done);
        assert_eq!(info.terminal, r.info.terminal.code());
        assert_eq!(info.cost, r.info.cost as f32);
        assert_eq!(
            info.components,
            r.info.components.as_array().map(|c| c as f32)
        );
        if done {
            break;
        }
    }
}

#[test]
fn misuse_is_reported() {
    let mut env = Env::new(EnvConfig::default()).unwrap();
    assert_eq!(env.step(Action::default()), Err(Error::NotReset));
    assert!(env.step_flat([0.0, 0.0]).is_err());
    let bad = EnvConfig {
        max_steps: 0,
        ..EnvConfig::default()
    };
    assert!(matches!(Env::new(bad), Err(Error::InvalidParameter(_))));
    let impossible = EnvConfig {
        map: MapConfig {
            lanes: 9,
            ..MapConfig::default()
        },
        ..EnvConfig::default()
    };
    assert!(Env::new(impossible).is_err());
}
