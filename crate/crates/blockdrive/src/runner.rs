//! Policy selection, batch evaluation over a worker pool, and the
//! throughput benchmark.

use std::time::Instant;

use blockdrive_core::env::{Env, EnvConfig, MapSource};
use blockdrive_core::eval::{
    run_episode, EpisodeFailure, EpisodeOutcome, LaneFollowPolicy, Policy, RandomPolicy, ZeroPolicy,
};
use blockdrive_core::pgmap::generate_map;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyKind {
    Zero,
    Random,
    LaneFollow,
}

impl PolicyKind {
    pub fn make(self) -> Box<dyn Policy + Send> {
        match self {
            PolicyKind::Zero => Box::new(ZeroPolicy),
            PolicyKind::Random => Box::new(RandomPolicy::default()),
            PolicyKind::LaneFollow => Box::new(LaneFollowPolicy::default()),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Zero => "zero",
            PolicyKind::Random => "random",
            PolicyKind::LaneFollow => "lane-follow",
        }
    }
}

pub fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// One episode per seed on `jobs` workers. Every episode is a function of
/// its seed alone, so the result does not depend on `jobs`.
pub fn evaluate(
    kind: PolicyKind,
    seeds: &[u64],
    cfg: &EnvConfig,
    jobs: usize,
) -> Result<Vec<EpisodeOutcome>> {
    Env::new(cfg.clone())?;
    Ok(pool(jobs)?.install(|| {
        seeds
            .par_iter()
            .map_init(
                || (Env::new(cfg.clone()).expect("validated above"), kind.make()),
                |(env, policy), &seed| {
                    run_episode(env, policy.as_mut(), seed)
                        .map_err(|error| EpisodeFailure { seed, error })
                },
            )
            .collect()
    }))
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub steps: usize,
    pub episodes: usize,
    pub density: f64,
    /// Seconds spent inside `step`.
    pub step_seconds: f64,
    pub steps_per_second: f64,
}

/// Steps one environment `steps` times with the random policy on the map
/// of `map_seed`, resetting whenever an episode ends. Only `step` calls
/// are timed.
pub fn bench(steps: usize, cfg: &EnvConfig, map_seed: u64) -> Result<BenchReport> {
    let net = generate_map(&cfg.map, map_seed)?;
    let cfg = EnvConfig {
        map_source: MapSource::Network(Box::new(net)),
        ..cfg.clone()
    };
    let mut env = Env::new(cfg.clone())?;
    let mut policy = RandomPolicy::default();
    let mut episodes = 0usize;
    let mut elapsed = 0.0;
    let mut done = true;
    let mut obs = None;
    for _ in 0..steps {
        if done {
            policy.reset(episodes as u64);
            obs = Some(env.reset(episodes as u64)?);
            episodes += 1;
        }
        let ep = env.episode().expect("reset above");
        let action = policy.act(ep, obs.as_ref().expect("reset above"), &cfg);
        let start = Instant::now();
        let r = env.step(action)?;
        elapsed += start.elapsed().as_secs_f64();
        done = r.done;
        obs = Some(r.obs);
    }
    Ok(BenchReport {
        steps,
        episodes,
        density: cfg.traffic.density,
        step_seconds: elapsed,
        steps_per_second: steps as f64 / elapsed.max(1e-9),
    })
}
