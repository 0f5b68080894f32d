//! Planar primitives: vectors, poses, rigid transforms, lane centerlines
//! (straight segments and circular arcs), Frenet projection, segment
//! intersection and oriented-rectangle overlap.

use alloc::vec::Vec;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::math::{self, normalize_angle, PI, TAU};

/// Length tolerance used by intersection tests, in meters.
pub const EPS: f64 = 1e-7;

/// Maximum sagitta between an arc and the chords that approximate it.
pub const MAX_CHORD_ERROR: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing at `angle`.
    #[inline]
    pub fn from_angle(angle: f64) -> Self {
        Self::new(math::cos(angle), math::sin(angle))
    }

    #[inline]
    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3D cross product.
    #[inline]
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn length(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    #[inline]
    pub fn length_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).length()
    }

    #[inline]
    pub fn angle(self) -> f64 {
        math::atan2(self.y, self.x)
    }

    /// Rotated by +90°.
    #[inline]
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotated(self, angle: f64) -> Vec2 {
        let (s, c) = (math::sin(angle), math::cos(angle));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    #[inline]
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    #[inline]
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl SubAssign for Vec2 {
    #[inline]
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    #[inline]
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    #[inline]
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Position plus heading, heading kept in `(-π, π]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Expresses a world point in this pose's frame (x forward, y left).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        (p - self.position).rotated(-self.heading)
    }
}

/// Rotation about the origin followed by a translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rigid {
    pub rotation: f64,
    pub translation: Vec2,
}

impl Rigid {
    pub const IDENTITY: Rigid = Rigid {
        rotation: 0.0,
        translation: Vec2::ZERO,
    };

    /// The transform that maps the local origin (heading 0) onto `pose`.
    pub fn from_pose(pose: Pose) -> Self {
        Self {
            rotation: pose.heading,
            translation: pose.position,
        }
    }

    pub fn point(&self, p: Vec2) -> Vec2 {
        p.rotated(self.rotation) + self.translation
    }

    pub fn vector(&self, v: Vec2) -> Vec2 {
        v.rotated(self.rotation)
    }

    pub fn angle(&self, a: f64) -> f64 {
        normalize_angle(a + self.rotation)
    }

    pub fn pose(&self, p: Pose) -> Pose {
        Pose::new(self.point(p.position), p.heading + self.rotation)
    }
}

/// Lateral offset convention: positive `d` lies to the left of travel.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrenetCoord {
    pub s: f64,
    pub d: f64,
}

impl FrenetCoord {
    pub const fn new(s: f64, d: f64) -> Self {
        Self { s, d }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum LaneShape {
    StraightSegment {
        start: Vec2,
        end: Vec2,
    },
    /// Travel runs from `start_angle` through `start_angle + sweep`;
    /// positive sweep is counter-clockwise (a left turn).
    CircularArc {
        center: Vec2,
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
}

/// A directed centerline with a width.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LaneGeometry {
    pub shape: LaneShape,
    pub width: f64,
}

/// Result of projecting onto a lane without clamping `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawProjection {
    pub s: f64,
    pub d: f64,
}

impl LaneGeometry {
    pub fn straight(start: Vec2, end: Vec2, width: f64) -> Self {
        Self {
            shape: LaneShape::StraightSegment { start, end },
            width,
        }
    }

    pub fn arc(center: Vec2, radius: f64, start_angle: f64, sweep: f64, width: f64) -> Self {
        Self {
            shape: LaneShape::CircularArc {
                center,
                radius,
                start_angle,
                sweep,
            },
            width,
        }
    }

    /// An arc that starts at `pose` and turns by `sweep` (left when
    /// positive) on a circle of `radius`.
    pub fn arc_from_pose(pose: Pose, radius: f64, sweep: f64, width: f64) -> Self {
        let side = if sweep >= 0.0 { 1.0 } else { -1.0 };
        let center = pose.position + pose.direction().perp() * (radius * side);
        let start_angle = (pose.position - center).angle();
        Self::arc(center, radius, start_angle, sweep, width)
    }

    pub fn length(&self) -> f64 {
        lane_length(self)
    }

    pub fn start(&self) -> Vec2 {
        self.point_at(0.0)
    }

    pub fn end(&self) -> Vec2 {
        self.point_at(self.length())
    }

    /// Centerline point at arc length `s` (not range checked).
    pub fn point_at(&self, s: f64) -> Vec2 {
        match self.shape {
            LaneShape::StraightSegment { start, end } => {
                let len = start.distance(end);
                if len == 0.0 {
                    return start;
                }
                start + (end - start) * (s / len)
            }
            LaneShape::CircularArc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let phi = start_angle + sweep.signum() * s / radius;
                center + Vec2::from_angle(phi) * radius
            }
        }
    }

    /// Travel heading at arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        match self.shape {
            LaneShape::StraightSegment { start, end } => (end - start).angle(),
            LaneShape::CircularArc {
                radius,
                start_angle,
                sweep,
                ..
            } => {
                let sign = sweep.signum();
                let phi = start_angle + sign * s / radius;
                normalize_angle(phi + sign * PI / 2.0)
            }
        }
    }

    /// Signed curvature, positive for left turns.
    pub fn curvature(&self) -> f64 {
        match self.shape {
            LaneShape::StraightSegment { .. } => 0.0,
            LaneShape::CircularArc { radius, sweep, .. } => sweep.signum() / radius,
        }
    }

    pub fn start_pose(&self) -> Pose {
        Pose::new(self.start(), self.heading_at(0.0))
    }

    pub fn end_pose(&self) -> Pose {
        let l = self.length();
        Pose::new(self.point_at(l), self.heading_at(l))
    }

    /// The parallel curve displaced by `d` (left-positive).
    pub fn offset(&self, d: f64, width: f64) -> LaneGeometry {
        match self.shape {
            LaneShape::StraightSegment { start, end } => {
                let n = (end - start).perp() * (1.0 / start.distance(end));
                LaneGeometry::straight(start + n * d, end + n * d, width)
            }
            LaneShape::CircularArc {
                center,
                radius,
                start_angle,
                sweep,
            } => LaneGeometry::arc(
                center,
                radius - d * sweep.signum(),
                start_angle,
                sweep,
                width,
            ),
        }
    }

    pub fn transformed(&self, t: &Rigid) -> LaneGeometry {
        let shape = match self.shape {
            LaneShape::StraightSegment { start, end } => LaneShape::StraightSegment {
                start: t.point(start),
                end: t.point(end),
            },
            LaneShape::CircularArc {
                center,
                radius,
                start_angle,
                sweep,
            } => LaneShape::CircularArc {
                center: t.point(center),
                radius,
                start_angle: t.angle(start_angle),
                sweep,
            },
        };
        LaneGeometry {
            shape,
            width: self.width,
        }
    }

    /// Projection with unclamped `s`: negative before the start, beyond
    /// the length after the end. `d` is measured against the tangent at
    /// the clamped foot point.
    pub fn project_raw(&self, p: Vec2) -> Result<RawProjection, Error> {
        match self.shape {
            LaneShape::StraightSegment { start, end } => {
                let dir = end - start;
                let len = dir.length();
                let u = dir * (1.0 / len);
                let rel = p - start;
                let s = rel.dot(u);
                let foot_s = s.clamp(0.0, len);
                let d = u.cross(p - (start + u * foot_s));
                Ok(RawProjection { s, d })
            }
            LaneShape::CircularArc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let rel = p - center;
                let rho = rel.length();
                if rho < 1e-12 {
                    return Err(Error::DegenerateProjection);
                }
                let sign = sweep.signum();
                let span = sweep.abs();
                // Directional angle from the start, centred on the arc midpoint.
                let mut alpha = (rel.angle() - start_angle) * sign;
                let lo = span / 2.0 - PI;
                alpha = lo + rem_euclid(alpha - lo, TAU);
                let s = alpha * radius;
                let len = span * radius;
                let d = if (0.0..=len).contains(&s) {
                    (radius - rho) * sign
                } else {
                    let foot_s = s.clamp(0.0, len);
                    let foot = self.point_at(foot_s);
                    let t = Vec2::from_angle(self.heading_at(foot_s));
                    t.cross(p - foot)
                };
                Ok(RawProjection { s, d })
            }
        }
    }
}

fn rem_euclid(a: f64, m: f64) -> f64 {
    let r = libm::fmod(a, m);
    if r < 0.0 {
        r + m
    } else {
        r
    }
}

pub fn lane_length(lane: &LaneGeometry) -> f64 {
    match lane.shape {
        LaneShape::StraightSegment { start, end } => start.distance(end),
        LaneShape::CircularArc { radius, sweep, .. } => radius * sweep.abs(),
    }
}

/// Projects `p` onto the lane centerline; `s` is clamped to `[0, length]`.
pub fn frenet_project(lane: &LaneGeometry, p: Vec2) -> Result<FrenetCoord, Error> {
    let raw = lane.project_raw(p)?;
    Ok(FrenetCoord {
        s: raw.s.clamp(0.0, lane.length()),
        d: raw.d,
    })
}

/// Inverse of [`frenet_project`] for in-range `s`.
pub fn lane_point_at(lane: &LaneGeometry, f: FrenetCoord) -> Result<Vec2, Error> {
    let len = lane.length();
    if !(f.s >= -1e-9 && f.s <= len + 1e-9) {
        return Err(Error::OutOfRange {
            s: f.s,
            length: len,
        });
    }
    let s = f.s.clamp(0.0, len);
    let normal = Vec2::from_angle(lane.heading_at(s)).perp();
    Ok(lane.point_at(s) + normal * f.d)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub const fn new(a: Vec2, b: Vec2) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    /// Parameter `t` along `self` where the ray `origin + t·dir` (unit
    /// `dir`) first meets the segment, if it does.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let e = self.b - self.a;
        let denom = dir.cross(e);
        if denom.abs() < 1e-15 {
            return None;
        }
        let w = self.a - origin;
        let t = w.cross(e) / denom;
        let u = w.cross(dir) / denom;
        if t >= 0.0 && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }
}

/// True iff the two segments cross at a point interior to both, or share
/// a collinear overlap of positive length. Touching at an endpoint is not
/// an intersection.
pub fn segments_intersect(s1: &Segment, s2: &Segment) -> bool {
    let r = s1.b - s1.a;
    let q = s2.b - s2.a;
    let len1 = r.length();
    let len2 = q.length();
    if len1 < EPS || len2 < EPS {
        return false;
    }
    let qp = s2.a - s1.a;
    let denom = r.cross(q);
    if denom.abs() <= 1e-12 * len1 * len2 {
        // Parallel: only collinear overlap counts.
        if qp.cross(r).abs() > EPS * len1 {
            return false;
        }
        let t0 = qp.dot(r) / len1;
        let t1 = (s2.b - s1.a).dot(r) / len1;
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        let overlap = hi.min(len1) - lo.max(0.0);
        return overlap > EPS;
    }
    let t = qp.cross(q) / denom * len1;
    let u = qp.cross(r) / denom * len2;
    t > EPS && t < len1 - EPS && u > EPS && u < len2 - EPS
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec2,
    pub max: Vec2,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec2::new(f64::INFINITY, f64::INFINITY),
        max: Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY),
    };

    pub fn include(&mut self, p: Vec2) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn merge(&mut self, o: &Aabb) {
        self.include(o.min);
        self.include(o.max);
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (self.min.x..=self.max.x).contains(&p.x) && (self.min.y..=self.max.y).contains(&p.y)
    }

    pub fn expanded(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - Vec2::new(margin, margin),
            max: self.max + Vec2::new(margin, margin),
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min.x <= o.max.x + EPS
            && o.min.x <= self.max.x + EPS
            && self.min.y <= o.max.y + EPS
            && o.min.y <= self.max.y + EPS
    }

    pub fn of_segments(segments: &[Segment]) -> Aabb {
        let mut bb = Aabb::EMPTY;
        for s in segments {
            bb.include(s.a);
            bb.include(s.b);
        }
        bb
    }
}

/// Chord approximation of a lane centerline with sagitta at most
/// [`MAX_CHORD_ERROR`].
pub fn discretize(lane: &LaneGeometry) -> Vec<Vec2> {
    match lane.shape {
        LaneShape::StraightSegment { start, end } => alloc::vec![start, end],
        LaneShape::CircularArc { radius, sweep, .. } => {
            let max_step = if radius <= MAX_CHORD_ERROR {
                PI
            } else {
                2.0 * math::acos(1.0 - MAX_CHORD_ERROR / radius)
            };
            let n = math::ceil(sweep.abs() / max_step).max(1.0) as usize;
            let len = lane.length();
            (0..=n)
                .map(|i| lane.point_at(len * i as f64 / n as f64))
                .collect()
        }
    }
}

pub fn polyline_segments(points: &[Vec2]) -> impl Iterator<Item = Segment> + '_ {
    points.windows(2).map(|w| Segment::new(w[0], w[1]))
}

/// True iff any segment of `a` intersects any segment of `b`.
pub fn block_footprints_overlap(a: &[Segment], b: &[Segment]) -> bool {
    if a.is_empty() || b.is_empty() {
        return false;
    }
    if !Aabb::of_segments(a).overlaps(&Aabb::of_segments(b)) {
        return false;
    }
    a.iter()
        .any(|sa| b.iter().any(|sb| segments_intersect(sa, sb)))
}

/// Oriented rectangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obb {
    pub center: Vec2,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl Obb {
    pub fn new(pose: Pose, length: f64, width: f64) -> Self {
        Self {
            center: pose.position,
            heading: pose.heading,
            half_length: length / 2.0,
            half_width: width / 2.0,
        }
    }

    pub fn axes(&self) -> (Vec2, Vec2) {
        let u = Vec2::from_angle(self.heading);
        (u, u.perp())
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let (u, v) = self.axes();
        let a = u * self.half_length;
        let b = v * self.half_width;
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    pub fn bounding_radius(&self) -> f64 {
        math::hypot(self.half_length, self.half_width)
    }

    fn projected_radius(&self, axis: Vec2) -> f64 {
        let (u, v) = self.axes();
        self.half_length * u.dot(axis).abs() + self.half_width * v.dot(axis).abs()
    }

    /// Distance along the unit ray to the first boundary crossing, if the
    /// ray starts outside and hits the rectangle.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let (u, v) = self.axes();
        let rel = origin - self.center;
        let o = [rel.dot(u), rel.dot(v)];
        let d = [dir.dot(u), dir.dot(v)];
        let h = [self.half_length, self.half_width];
        let mut t_min = f64::NEG_INFINITY;
        let mut t_max = f64::INFINITY;
        for k in 0..2 {
            if d[k].abs() < 1e-15 {
                if o[k].abs() > h[k] {
                    return None;
                }
            } else {
                let t1 = (-h[k] - o[k]) / d[k];
                let t2 = (h[k] - o[k]) / d[k];
                let (near, far) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                t_min = t_min.max(near);
                t_max = t_max.min(far);
                if t_min > t_max {
                    return None;
                }
            }
        }
        if t_max < 0.0 {
            None
        } else {
            Some(t_min.max(0.0))
        }
    }
}

/// Separating-axis overlap test for two oriented rectangles.
pub fn obb_overlap(a: &Obb, b: &Obb) -> bool {
    let delta = b.center - a.center;
    let reach = a.bounding_radius() + b.bounding_radius();
    if delta.length_squared() > reach * reach {
        return false;
    }
    let (au, av) = a.axes();
    let (bu, bv) = b.axes();
    for axis in [au, av, bu, bv] {
        let dist = delta.dot(axis).abs();
        if dist > a.projected_radius(axis) + b.projected_radius(axis) {
            return false;
        }
    }
    true
}
