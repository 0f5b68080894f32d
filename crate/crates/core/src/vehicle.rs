//! Action normalization, control mapping and the kinematic bicycle model.

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::{Obb, Pose, Vec2};
use crate::math::{self, normalize_angle};

/// Watts per mechanical horsepower.
pub const WATTS_PER_HP: f64 = 745.7;
pub const GRAVITY: f64 = 9.81;
/// Environment step length in seconds.
pub const STEP_SECONDS: f64 = 0.1;

/// Normalized agent action, each channel in `[-1, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Action {
    /// Steering channel; positive turns left.
    pub steering: f64,
    /// Throttle when positive, brake when negative.
    pub throttle: f64,
}

impl Action {
    /// Builds a clamped action. NaN components become zero.
    pub fn new(steering: f64, throttle: f64) -> Self {
        fn clamp(x: f64) -> f64 {
            if x.is_nan() {
                0.0
            } else {
                x.clamp(-1.0, 1.0)
            }
        }
        Self {
            steering: clamp(steering),
            throttle: clamp(throttle),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlSignal {
    pub steering_deg: f64,
    pub engine_hp: f64,
    pub brake_hp: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub mass: f64,
    pub max_engine_hp: f64,
    pub max_brake_hp: f64,
    pub max_steer_deg: f64,
    /// m/s.
    pub max_speed: f64,
    pub friction: f64,
    /// Linear speed decay per second.
    pub drag: f64,
    /// Speed floor used when turning power into force.
    pub min_power_speed: f64,
    pub substeps: u32,
    pub length: f64,
    pub width: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            wheelbase: 2.6,
            mass: 1100.0,
            max_engine_hp: 460.0,
            max_brake_hp: 355.0,
            max_steer_deg: 40.0,
            max_speed: 120.0 / 3.6,
            friction: 1.0,
            drag: 0.03,
            min_power_speed: 1.0,
            substeps: 5,
            length: 4.5,
            width: 2.0,
        }
    }
}

impl VehicleParams {
    pub fn max_steer(&self) -> f64 {
        math::to_radians(self.max_steer_deg)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct VehicleState {
    pub pose: Pose,
    /// m/s, never negative.
    pub speed: f64,
    /// Front wheel angle in radians, positive left.
    pub steering: f64,
    /// Steering channel of the previous action.
    pub last_steering_action: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            pose,
            ..Self::default()
        }
    }

    pub fn footprint(&self, params: &VehicleParams) -> Obb {
        Obb::new(self.pose, params.length, params.width)
    }
}

/// Maps a normalized action to steering degrees and engine/brake power.
pub fn map_action(a: Action, params: &VehicleParams) -> ControlSignal {
    let a = Action::new(a.steering, a.throttle);
    ControlSignal {
        steering_deg: a.steering * params.max_steer_deg,
        engine_hp: a.throttle.max(0.0) * params.max_engine_hp,
        brake_hp: -a.throttle.min(0.0) * params.max_brake_hp,
    }
}

/// Advances a vehicle by `dt` seconds using `params.substeps` substeps.
pub fn step_dynamics(
    s: &VehicleState,
    u: &ControlSignal,
    params: &VehicleParams,
    dt: f64,
) -> VehicleState {
    step_dynamics_with(s, u, params, dt, params.substeps.max(1))
}

pub fn step_dynamics_with(
    s: &VehicleState,
    u: &ControlSignal,
    params: &VehicleParams,
    dt: f64,
    substeps: u32,
) -> VehicleState {
    let max_steer = params.max_steer();
    let delta = math::to_radians(u.steering_deg).clamp(-max_steer, max_steer);
    let h = dt / substeps as f64;
    let lateral_limit = params.friction * GRAVITY;
    let commanded_curvature = math::tan(delta) / params.wheelbase;

    let mut pos = s.pose.position;
    let mut heading = s.pose.heading;
    let mut v = s.speed;
    for _ in 0..substeps {
        let v_eff = v.max(params.min_power_speed);
        let mut accel = u.engine_hp * WATTS_PER_HP / v_eff / params.mass - params.drag * v;
        if v > 0.0 {
            accel -= u.brake_hp * WATTS_PER_HP / v_eff / params.mass;
        }
        let v_next = (v + accel * h).clamp(0.0, params.max_speed);
        let v_mid = 0.5 * (v + v_next);

        // Friction-limited cornering: lateral acceleration v²κ ≤ μg.
        let mut curvature = commanded_curvature;
        let lateral = v_mid * v_mid * curvature.abs();
        if lateral > lateral_limit {
            curvature = curvature.signum() * lateral_limit / (v_mid * v_mid);
        }

        let ds = v_mid * h;
        let dtheta = curvature * ds;
        if dtheta.abs() > 1e-12 {
            // Exact arc for constant curvature over the substep.
            let r = 1.0 / curvature;
            pos += Vec2::new(
                math::sin(heading + dtheta) - math::sin(heading),
                math::cos(heading) - math::cos(heading + dtheta),
            ) * r;
        } else {
            pos += Vec2::from_angle(heading) * ds;
        }
        heading = normalize_angle(heading + dtheta);
        v = v_next;
    }

    VehicleState {
        pose: Pose::new(pos, heading),
        speed: v,
        steering: delta,
        last_steering_action: s.last_steering_action,
    }
}
