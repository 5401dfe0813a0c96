//! Time-sampled trajectories and their discrete geometry.

use serde::{Deserialize, Serialize};

use crate::frenet::Point2;
use crate::{Error, Result};

/// Minimum number of samples: the curvature stencil needs three points and
/// its finite difference one more.
pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub s: f64,
    pub d: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
    /// Path speed.
    pub v: f64,
    /// Tangential acceleration.
    pub a: f64,
}

impl TrajectoryPoint {
    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<TrajectoryPoint>,
    dt: f64,
}

impl Trajectory {
    pub fn new(points: Vec<TrajectoryPoint>, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Step(dt));
        }
        if points.len() < MIN_POINTS {
            return Err(Error::TooFewPoints { needed: MIN_POINTS, got: points.len() });
        }
        let t0 = points[0].t;
        if t0 < 0.0 {
            return Err(Error::NonUniform(0));
        }
        for (i, p) in points.iter().enumerate() {
            let expected = t0 + i as f64 * dt;
            if (p.t - expected).abs() > 1e-6 * dt.max(1.0) {
                return Err(Error::NonUniform(i));
            }
        }
        Ok(Self { points, dt })
    }

    pub fn points(&self) -> &[TrajectoryPoint] {
        &self.points
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.points[self.points.len() - 1].t - self.points[0].t
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.points.iter().map(TrajectoryPoint::position).collect()
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.points.iter().map(|p| p.curvature.abs()).fold(0.0, f64::max)
    }

    pub fn max_abs_heading(&self) -> f64 {
        self.points.iter().map(|p| p.heading.abs()).fold(0.0, f64::max)
    }

    /// Linear interpolation of the sample at time `t`, clamped to the ends.
    pub fn sample(&self, t: f64) -> TrajectoryPoint {
        let first = self.points[0];
        if t <= first.t {
            return first;
        }
        let last = self.points[self.points.len() - 1];
        if t >= last.t {
            return last;
        }
        let u = (t - first.t) / self.dt;
        let i = (u.floor() as usize).min(self.points.len() - 2);
        let w = u - i as f64;
        let (p, q) = (self.points[i], self.points[i + 1]);
        let lerp = |a: f64, b: f64| a + (b - a) * w;
        TrajectoryPoint {
            t,
            s: lerp(p.s, q.s),
            d: lerp(p.d, q.d),
            x: lerp(p.x, q.x),
            y: lerp(p.y, q.y),
            heading: lerp(p.heading, q.heading),
            curvature: lerp(p.curvature, q.curvature),
            v: lerp(p.v, q.v),
            a: lerp(p.a, q.a),
        }
    }
}

/// Turning angle at vertex `i` over the length of its incoming segment.
/// Unsigned; `None` when a neighbouring segment has zero length.
pub fn vertex_curvature(points: &[Point2], i: usize) -> Option<f64> {
    let u = points[i].sub(points[i - 1]);
    let v = points[i + 1].sub(points[i]);
    let len = u.norm();
    if len == 0.0 || v.norm() == 0.0 {
        return None;
    }
    Some(turning_angle(u, v) / len)
}

/// Unsigned angle between two non-zero vectors.
pub fn turning_angle(u: Point2, v: Point2) -> f64 {
    u.cross(v).abs().atan2(u.dot(v))
}

/// Largest unsigned vertex curvature over the interior of a polyline.
pub fn max_polyline_curvature(points: &[Point2]) -> Option<f64> {
    let mut max = 0.0f64;
    for i in 1..points.len().saturating_sub(1) {
        max = max.max(vertex_curvature(points, i)?);
    }
    Some(max)
}

/// Recomputes heading and curvature of every sample from its positions.
///
/// Interior points get the heading of their outgoing segment and the
/// curvature `Δφ / |Δx|` of the vertex; the two end points copy their
/// nearest interior neighbour. Curvature is signed by the turn direction.
pub fn annotate(traj: &Trajectory) -> Result<Trajectory> {
    let pts = traj.positions();
    let n = pts.len();
    if n < MIN_POINTS {
        return Err(Error::TooFewPoints { needed: MIN_POINTS, got: n });
    }
    for i in 0..n - 1 {
        if pts[i + 1].sub(pts[i]).norm() == 0.0 {
            return Err(Error::Degenerate(i + 1));
        }
    }
    let mut out = traj.points.clone();
    for i in 1..n - 1 {
        let u = pts[i].sub(pts[i - 1]);
        let v = pts[i + 1].sub(pts[i]);
        out[i].heading = v.y.atan2(v.x);
        let k = turning_angle(u, v) / u.norm();
        out[i].curvature = if u.cross(v) < 0.0 { -k } else { k };
    }
    out[0].heading = out[1].heading;
    out[0].curvature = out[1].curvature;
    out[n - 1].heading = out[n - 2].heading;
    out[n - 1].curvature = out[n - 2].curvature;
    Ok(Trajectory { points: out, dt: traj.dt })
}

/// Builds a trajectory from bare positions, one sample per `dt`.
pub fn from_positions(points: &[Point2], dt: f64) -> Result<Trajectory> {
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, p)| TrajectoryPoint {
            t: i as f64 * dt,
            s: p.x,
            d: p.y,
            x: p.x,
            y: p.y,
            ..Default::default()
        })
        .collect();
    Trajectory::new(samples, dt)
}
