//! Lidar raycasting and observation assembly.
//!
//! Every feature is expressed in the ego frame, so rotating the world and
//! the ego together leaves the observation unchanged.

use alloc::vec::Vec;

use crate::geometry::{Obb, Pose, Segment, Vec2};
use crate::math::{self, TAU};
use crate::vehicle::{VehicleParams, VehicleState};

pub const LIDAR_RAYS: usize = 240;
/// Maximum lidar range, meters.
pub const LIDAR_RANGE: f64 = 50.0;
pub const EGO_FEATURES: usize = 6;
pub const NAV_FEATURES: usize = 4;
pub const NEAREST_SLOTS: usize = 4;
pub const OTHER_FEATURES: usize = 4 * NEAREST_SLOTS;
pub const OBS_LEN: usize = LIDAR_RAYS + EGO_FEATURES + NAV_FEATURES + OTHER_FEATURES;
/// Distance normalizer for relative positions.
pub const POSITION_SCALE: f64 = 50.0;

/// Ray `i` points at `2π·i/240` counter-clockwise from the heading.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarScan {
    pub values: [f64; LIDAR_RAYS],
}

impl Default for LidarScan {
    fn default() -> Self {
        Self {
            values: [1.0; LIDAR_RAYS],
        }
    }
}

fn ray_direction(heading: f64, i: usize) -> Vec2 {
    Vec2::from_angle(heading + TAU * i as f64 / LIDAR_RAYS as f64)
}

/// Casts all rays from the ego center against vehicle rectangles and
/// optional wall segments.
pub fn lidar_scan(ego: Pose, bodies: &[Obb], walls: &[Segment]) -> LidarScan {
    let mut hits = [LIDAR_RANGE; LIDAR_RAYS];
    let origin = ego.position;
    let step = TAU / LIDAR_RAYS as f64;

    for body in bodies {
        let rel = body.center - origin;
        let dist = rel.length();
        let radius = body.bounding_radius();
        if dist - radius > LIDAR_RANGE {
            continue;
        }
        if dist <= radius {
            for (i, hit) in hits.iter_mut().enumerate() {
                if let Some(t) = body.ray_hit(origin, ray_direction(ego.heading, i)) {
                    *hit = hit.min(t);
                }
            }
            continue;
        }
        // Only rays inside the body's angular shadow can hit it.
        let bearing = math::normalize_angle(rel.angle() - ego.heading);
        let half = libm::asin(radius / dist);
        let first = math::floor((bearing - half) / step) as i64;
        let last = math::ceil((bearing + half) / step) as i64;
        for k in first..=last {
            let i = k.rem_euclid(LIDAR_RAYS as i64) as usize;
            if let Some(t) = body.ray_hit(origin, ray_direction(ego.heading, i)) {
                hits[i] = hits[i].min(t);
            }
        }
    }

    if !walls.is_empty() {
        let near: Vec<&Segment> = walls
            .iter()
            .filter(|s| segment_distance(origin, s) <= LIDAR_RANGE)
            .collect();
        if !near.is_empty() {
            for (i, hit) in hits.iter_mut().enumerate() {
                let dir = ray_direction(ego.heading, i);
                for s in &near {
                    if let Some(t) = s.ray_hit(origin, dir) {
                        *hit = hit.min(t);
                    }
                }
            }
        }
    }

    let mut scan = LidarScan::default();
    for (v, h) in scan.values.iter_mut().zip(hits) {
        *v = (h.min(LIDAR_RANGE) / LIDAR_RANGE).clamp(0.0, 1.0);
    }
    scan
}

fn segment_distance(p: Vec2, s: &Segment) -> f64 {
    let d = s.b - s.a;
    let len2 = d.length_squared();
    let t = if len2 > 0.0 {
        ((p - s.a).dot(d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(s.a + d * t)
}

/// A nearby vehicle as seen by the sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sighting {
    pub id: u32,
    pub pose: Pose,
}

/// The four closest vehicles, ascending by distance then id. Each slot is
/// `[Δx/50, Δy/50, sin, cos]` of position and heading in the ego frame;
/// empty slots are zero.
pub fn nearest_vehicles(ego: Pose, others: &[Sighting]) -> [f64; OTHER_FEATURES] {
    // Distances are compared at a nanometer grid so that ties survive
    // rounding noise from the world frame.
    let mut ranked: Vec<(i64, u32, Pose)> = others
        .iter()
        .map(|o| {
            (
                math::round(o.pose.position.distance(ego.position) * 1e9) as i64,
                o.id,
                o.pose,
            )
        })
        .collect();
    ranked.sort_by_key(|r| (r.0, r.1));
    let mut out = [0.0; OTHER_FEATURES];
    for (slot, (_, _, pose)) in ranked.iter().take(NEAREST_SLOTS).enumerate() {
        let local = ego.to_local(pose.position);
        let rel = pose.heading - ego.heading;
        out[4 * slot] = (local.x / POSITION_SCALE).clamp(-1.0, 1.0);
        out[4 * slot + 1] = (local.y / POSITION_SCALE).clamp(-1.0, 1.0);
        out[4 * slot + 2] = math::sin(rel);
        out[4 * slot + 3] = math::cos(rel);
    }
    out
}

/// Everything the observation depends on, already resolved against the
/// road network.
#[derive(Clone, Debug)]
pub struct ObservationInputs<'a> {
    pub ego: &'a VehicleState,
    pub params: &'a VehicleParams,
    /// Tangent heading of the current lane at the ego's projection.
    pub lane_heading: f64,
    pub left_distance: f64,
    pub right_distance: f64,
    pub road_width: f64,
    /// Center and travel heading of the next block's socket.
    pub nav_target: Pose,
    pub lidar: &'a LidarScan,
    pub others: &'a [Sighting],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub values: [f64; OBS_LEN],
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn lidar(&self) -> &[f64] {
        &self.values[..LIDAR_RAYS]
    }

    pub fn ego(&self) -> &[f64] {
        &self.values[LIDAR_RAYS..LIDAR_RAYS + EGO_FEATURES]
    }

    pub fn navigation(&self) -> &[f64] {
        let start = LIDAR_RAYS + EGO_FEATURES;
        &self.values[start..start + NAV_FEATURES]
    }

    pub fn others(&self) -> &[f64] {
        &self.values[OBS_LEN - OTHER_FEATURES..]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.values.iter().map(|&v| v as f32).collect()
    }
}

/// Concatenates `[lidar | ego | navigation | others]`, every entry clamped
/// to `[-1, 1]`.
pub fn assemble_observation(inp: &ObservationInputs<'_>) -> Observation {
    let mut values = [0.0; OBS_LEN];
    values[..LIDAR_RAYS].copy_from_slice(&inp.lidar.values);

    let heading = inp.ego.pose.heading;
    let err = heading - inp.lane_heading;
    let width = inp.road_width.max(1e-9);
    let ego = [
        inp.ego.steering / inp.params.max_steer(),
        math::sin(err),
        math::cos(err),
        inp.ego.speed / inp.params.max_speed,
        inp.left_distance / width,
        inp.right_distance / width,
    ];
    values[LIDAR_RAYS..LIDAR_RAYS + EGO_FEATURES].copy_from_slice(&ego);

    let local = inp.ego.pose.to_local(inp.nav_target.position);
    let rel = inp.nav_target.heading - heading;
    let nav = [
        local.x / POSITION_SCALE,
        local.y / POSITION_SCALE,
        math::sin(rel),
        math::cos(rel),
    ];
    let start = LIDAR_RAYS + EGO_FEATURES;
    values[start..start + NAV_FEATURES].copy_from_slice(&nav);

    values[OBS_LEN - OTHER_FEATURES..].copy_from_slice(&nearest_vehicles(inp.ego.pose, inp.others));

    for v in values.iter_mut() {
        *v = if v.is_finite() {
            v.clamp(-1.0, 1.0)
        } else {
            0.0
        };
    }
    Observation { values }
}
