//! Planar kinematic ground truth and the three optical sensors: camera,
//! LIDAR and autocollimator.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::identity::{AttributeObservation, Brand, Color, StaticAttributes};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub String);

impl VehicleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VehicleId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_heading(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU { 0.0 } else { r }
}

/// Signed smallest difference `a - b`, in `(-π, π]`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI { d - TAU } else { d }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        assert!(x.is_finite() && y.is_finite() && heading.is_finite(), "pose must be finite");
        assert!(speed >= 0.0, "speed must be non-negative");
        Self { x, y, heading: normalize_heading(heading), speed }
    }

    pub fn at(x: f64, y: f64) -> Self {
        Self::new(x, y, 0.0, 0.0)
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Bearing of `other` relative to this pose's heading, in `(-π, π]`.
    pub fn relative_bearing(&self, other: &Pose) -> f64 {
        angle_diff((other.y - self.y).atan2(other.x - self.x), self.heading)
    }

    /// Constant-velocity extrapolation.
    pub fn extrapolate(&self, dt: f64) -> Pose {
        Pose {
            x: self.x + self.speed * dt * self.heading.cos(),
            y: self.y + self.speed * dt * self.heading.sin(),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

fn orient(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> f64 {
    (q.0 - p.0) * (r.1 - p.1) - (q.1 - p.1) * (r.0 - p.0)
}

fn on_segment(p: (f64, f64), q: (f64, f64), r: (f64, f64)) -> bool {
    r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
}

impl Segment {
    /// Closed-segment intersection test; touching counts as blocking.
    pub fn intersects(&self, other: &Segment) -> bool {
        let (p1, p2, p3, p4) = (self.a, self.b, other.a, other.b);
        let d1 = orient(p3, p4, p1);
        let d2 = orient(p3, p4, p2);
        let d3 = orient(p1, p2, p3);
        let d4 = orient(p1, p2, p4);
        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
            return true;
        }
        (d1 == 0.0 && on_segment(p3, p4, p1))
            || (d2 == 0.0 && on_segment(p3, p4, p2))
            || (d3 == 0.0 && on_segment(p1, p2, p3))
            || (d4 == 0.0 && on_segment(p1, p2, p4))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorConfig {
    pub camera_max_range: f64,
    pub p_confuse: f64,
    pub capture_radius: f64,
    pub sigma_range: f64,
    pub sigma_bearing: f64,
    pub theta_tol: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            camera_max_range: 80.0,
            p_confuse: 0.0,
            capture_radius: 2.0,
            sigma_range: 0.1,
            sigma_bearing: 0.005,
            theta_tol: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBearing {
    pub range: f64,
    pub bearing: f64,
    pub measured_at: f64,
}

impl RangeBearing {
    /// Absolute position implied by this measurement from `observer`.
    pub fn position_from(&self, observer: &Pose) -> (f64, f64) {
        let abs = observer.heading + self.bearing;
        (observer.x + self.range * abs.cos(), observer.y + self.range * abs.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alignment {
    Aligned,
    Misaligned(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub poses: BTreeMap<VehicleId, Pose>,
    pub clock: f64,
    pub obstructions: Vec<Segment>,
}

impl WorldState {
    pub fn new() -> Self {
        Self { poses: BTreeMap::new(), clock: 0.0, obstructions: Vec::new() }
    }

    pub fn pose(&self, id: &VehicleId) -> Option<&Pose> {
        self.poses.get(id)
    }

    pub fn advance(&self, dt: f64) -> WorldState {
        let mut w = self.clone();
        w.advance_in_place(dt);
        w
    }

    pub fn advance_in_place(&mut self, dt: f64) {
        assert!(dt > 0.0, "advance needs dt > 0");
        for p in self.poses.values_mut() {
            *p = p.extrapolate(dt);
        }
        self.clock += dt;
    }

    /// Moves the world forward to `t`, a no-op if `t` is not in the future.
    pub fn advance_to(&mut self, t: f64) {
        if t > self.clock {
            self.advance_in_place(t - self.clock);
        }
    }

    pub fn clear_path(&self, a: &Pose, b: &Pose) -> bool {
        let seg = Segment { a: (a.x, a.y), b: (b.x, b.y) };
        !self.obstructions.iter().any(|o| o.intersects(&seg))
    }

    pub fn line_of_sight(&self, a: &VehicleId, b: &VehicleId) -> bool {
        let (pa, pb) = (self.poses[a], self.poses[b]);
        self.clear_path(&pa, &pb)
    }

    /// Nearest vehicle other than `exclude` within `radius` of `at`.
    pub fn vehicle_near(&self, at: &Pose, radius: f64, exclude: Option<&VehicleId>) -> Option<&VehicleId> {
        self.poses
            .iter()
            .filter(|(id, _)| Some(*id) != exclude)
            .map(|(id, p)| (id, p.distance(at)))
            .filter(|(_, d)| *d <= radius)
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(id, _)| id)
    }

    pub fn camera_observe(
        &self,
        cfg: &SensorConfig,
        observer: &VehicleId,
        target: &VehicleId,
        truth: &StaticAttributes,
        rng: &mut impl Rng,
    ) -> AttributeObservation {
        let op = self.poses[observer];
        let tp = self.poses[target];
        let mut obs = AttributeObservation {
            observed_plate: None,
            observed_brand: None,
            observed_color: None,
            observer_pose: op,
            observed_at: self.clock,
        };
        if !self.line_of_sight(observer, target) || op.distance(&tp) > cfg.camera_max_range {
            return obs;
        }
        obs.observed_plate = Some(truth.license_plate.clone());
        obs.observed_brand = Some(confuse(truth.brand, Brand::ALL, cfg.p_confuse, rng));
        obs.observed_color = Some(confuse(truth.color, Color::ALL, cfg.p_confuse, rng));
        obs
    }

    pub fn lidar_measure(
        &self,
        cfg: &SensorConfig,
        observer: &VehicleId,
        target_region: &Pose,
        rng: &mut impl Rng,
    ) -> Option<RangeBearing> {
        let op = self.poses[observer];
        let hit = self.vehicle_near(target_region, cfg.capture_radius, Some(observer))?;
        if !self.line_of_sight(observer, hit) {
            return None;
        }
        let tp = self.poses[hit];
        let mut range = op.distance(&tp);
        let mut bearing = op.relative_bearing(&tp);
        if cfg.sigma_range > 0.0 {
            range += Normal::new(0.0, cfg.sigma_range).unwrap().sample(rng);
        }
        if cfg.sigma_bearing > 0.0 {
            bearing = angle_diff(bearing + Normal::new(0.0, cfg.sigma_bearing).unwrap().sample(rng), 0.0);
        }
        Some(RangeBearing { range: range.max(f64::MIN_POSITIVE), bearing, measured_at: self.clock })
    }
}

impl Default for WorldState {
    fn default() -> Self {
        Self::new()
    }
}

fn confuse<T: Copy + PartialEq>(truth: T, all: &[T], p: f64, rng: &mut impl Rng) -> T {
    if p <= 0.0 || !rng.gen_bool(p.min(1.0)) {
        return truth;
    }
    let others: Vec<T> = all.iter().copied().filter(|v| *v != truth).collect();
    others[rng.gen_range(0..others.len())]
}

pub fn autocollimator_check(cfg: &SensorConfig, incoming_bearing: f64, expected_bearing: f64) -> Alignment {
    let delta = angle_diff(incoming_bearing, expected_bearing).abs();
    if delta <= cfg.theta_tol {
        Alignment::Aligned
    } else {
        Alignment::Misaligned(delta)
    }
}
