//! Gradient-descent trajectory smoothing.
//!
//! Interior points move against the gradient of
//!
//! ```text
//! J = w_smooth·½Σ|Δ²xᵢ|² + w_straight·½Σ|Δxᵢ|² + w_curv·Σ max(0, |kᵢ| − c_max)²
//! ```
//!
//! one point at a time, in index order, with each point's step scaled by a
//! Gaussian profile that peaks mid-path. The first and last two points
//! never move, so the end positions and end directions are preserved.
//!
//! A run stops when the sweep cap is hit, when the largest curvature drops
//! below `c_max`, or when a point leaves the buffer band around the input.
//! In the last case the offending sweep is undone.

use serde::{Deserialize, Serialize};

use crate::frenet::{Point2, ReferenceLine};
use crate::trajectory::{annotate, max_polyline_curvature, turning_angle, Trajectory, TrajectoryPoint};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmootherConfig {
    pub w_curv: f64,
    pub w_straight: f64,
    pub w_smooth: f64,
    pub step_smooth: f64,
    pub step_straight: f64,
    pub step_curv: f64,
    /// Standard deviation of the step profile in index units; `None` uses
    /// a third of the point count.
    pub sigma: Option<f64>,
    /// Band half-width around the input, metres.
    pub buffer: f64,
    pub c_max: f64,
    pub max_iter: usize,
    /// Point spacing used when resampling a trajectory before smoothing.
    pub spacing: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            w_curv: 1.0,
            w_straight: 1.0,
            w_smooth: 1.0,
            step_smooth: 0.15,
            step_straight: 0.15,
            step_curv: 0.05,
            sigma: None,
            buffer: 0.5,
            c_max: 0.002,
            max_iter: 400,
            spacing: 2.0,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let named = [
            ("w_curv", self.w_curv),
            ("w_straight", self.w_straight),
            ("w_smooth", self.w_smooth),
            ("step_smooth", self.step_smooth),
            ("step_straight", self.step_straight),
            ("step_curv", self.step_curv),
            ("c_max", self.c_max),
        ];
        for (name, v) in named {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(self.buffer.is_finite() && self.buffer > 0.0) {
            return Err(format!("buffer must be positive, got {}", self.buffer));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(format!("spacing must be positive, got {}", self.spacing));
        }
        if self.max_iter == 0 {
            return Err("max_iter must be at least 1".into());
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    MaxIter,
    CurvatureSatisfied,
    BufferExceeded,
    /// Two points collapsed onto each other; the last valid iterate is kept.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub iteration: usize,
    pub max_curvature: f64,
    pub max_offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothReport {
    pub iterations_run: usize,
    pub stop_reason: StopReason,
    pub max_curvature_before: f64,
    pub max_curvature_after: f64,
    /// Radians, relative to the x axis of the smoothing frame.
    pub max_heading_before: f64,
    pub max_heading_after: f64,
    pub max_offset: f64,
    /// Sweep whose iterate was returned. Equals `iterations_run` on a
    /// curvature stop; otherwise the iterate with the lowest peak curvature.
    pub returned_sweep: usize,
    #[serde(skip)]
    pub sweeps: Vec<SweepRecord>,
}

/// Gradient of `½Σ|Δ²x|²` with respect to point `i`.
pub fn smoothness_gradient(points: &[Point2], i: usize) -> Point2 {
    if i < 2 || i + 2 >= points.len() {
        return Point2::default();
    }
    let p = |k: usize| points[k];
    p(i - 2).sub(p(i - 1).scale(4.0)).add(p(i).scale(6.0)).sub(p(i + 1).scale(4.0)).add(p(i + 2))
}

/// Gradient of `½Σ|Δx|²` with respect to point `i`.
pub fn straightness_gradient(points: &[Point2], i: usize) -> Point2 {
    if i < 1 || i + 1 >= points.len() {
        return Point2::default();
    }
    points[i].scale(2.0).sub(points[i - 1]).sub(points[i + 1])
}

/// Curvature `k = φ/|u|` of the vertex between segments `u` and `v`, and
/// its partial derivatives with respect to `u` and `v`.
fn vertex_curvature_grad(u: Point2, v: Point2) -> Option<(f64, Point2, Point2)> {
    let nu = u.norm();
    if nu == 0.0 || v.norm() == 0.0 {
        return None;
    }
    let cross = u.cross(v);
    let dot = u.dot(v);
    let s = cross.abs();
    let sg = if cross >= 0.0 { 1.0 } else { -1.0 };
    let phi = turning_angle(u, v);
    let den = s * s + dot * dot;
    // φ = atan2(|u×v|, u·v)
    let dphi_du = Point2::new(dot * sg * v.y - s * v.x, -dot * sg * v.x - s * v.y).scale(1.0 / den);
    let dphi_dv = Point2::new(-dot * sg * u.y - s * u.x, dot * sg * u.x - s * u.y).scale(1.0 / den);
    let dk_du = dphi_du.scale(1.0 / nu).sub(u.scale(phi / (nu * nu * nu)));
    let dk_dv = dphi_dv.scale(1.0 / nu);
    Some((phi / nu, dk_du, dk_dv))
}

/// One-sided curvature penalty `Σ max(0, |kⱼ| − c_max)²` over interior
/// vertices.
pub fn curvature_penalty(points: &[Point2], c_max: f64) -> Result<f64> {
    let mut total = 0.0;
    for j in 1..points.len().saturating_sub(1) {
        let (k, _, _) = vertex_curvature_grad(points[j].sub(points[j - 1]), points[j + 1].sub(points[j]))
            .ok_or(Error::Degenerate(j))?;
        if k > c_max {
            total += (k - c_max).powi(2);
        }
    }
    Ok(total)
}

/// Gradient of [`curvature_penalty`] with respect to point `i`, collecting
/// the vertices `i − 1`, `i` and `i + 1` that it touches.
pub fn curvature_gradient(points: &[Point2], i: usize, c_max: f64) -> Result<Point2> {
    let n = points.len();
    if i < 1 || i + 1 >= n {
        return Ok(Point2::default());
    }
    let mut g = Point2::default();
    for j in i - 1..=i + 1 {
        if j < 1 || j + 1 >= n {
            continue;
        }
        let u = points[j].sub(points[j - 1]);
        let v = points[j + 1].sub(points[j]);
        let (k, dk_du, dk_dv) = vertex_curvature_grad(u, v).ok_or(Error::Degenerate(j))?;
        if k <= c_max {
            continue;
        }
        let f = 2.0 * (k - c_max);
        // u = xⱼ − xⱼ₋₁ and v = xⱼ₊₁ − xⱼ.
        let local = if j == i {
            dk_du.sub(dk_dv)
        } else if j + 1 == i {
            dk_dv
        } else {
            dk_du.scale(-1.0)
        };
        g = g.add(local.scale(f));
    }
    Ok(g)
}

pub fn gaussian_weight(i: usize, sigma: f64, len: usize) -> f64 {
    let centre = (len as f64 - 1.0) / 2.0;
    let z = i as f64 - centre;
    (-(z * z) / (2.0 * sigma * sigma)).exp()
}

/// The objective the sweep descends, for equal step sizes.
pub fn objective(points: &[Point2], cfg: &SmootherConfig) -> Result<f64> {
    let mut smooth = 0.0;
    for i in 1..points.len().saturating_sub(1) {
        let d2 = points[i - 1].sub(points[i].scale(2.0)).add(points[i + 1]);
        smooth += 0.5 * d2.dot(d2);
    }
    let mut straight = 0.0;
    for i in 1..points.len() {
        let d = points[i].sub(points[i - 1]);
        straight += 0.5 * d.dot(d);
    }
    Ok(cfg.w_smooth * smooth + cfg.w_straight * straight + cfg.w_curv * curvature_penalty(points, cfg.c_max)?)
}

pub fn max_heading(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| {
        let d = w[1].sub(w[0]);
        d.y.atan2(d.x).abs()
    }).fold(0.0, f64::max)
}

fn max_offset(a: &[Point2], b: &[Point2]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p.distance(*q)).fold(0.0, f64::max)
}

/// Smooths a polyline in place of its own frame. Needs at least 5 points.
/// A run that does not reach `c_max` never returns a higher peak curvature
/// than its input.
pub fn smooth_polyline(input: &[Point2], cfg: &SmootherConfig) -> Result<(Vec<Point2>, SmoothReport)> {
    let n = input.len();
    if n < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: n });
    }
    let k_before = max_polyline_curvature(input).ok_or_else(|| first_degenerate(input))?;
    let sigma = cfg.sigma.unwrap_or(n as f64 / 3.0);
    let weights: Vec<f64> = (0..n).map(|i| gaussian_weight(i, sigma, n)).collect();
    let mut points = input.to_vec();
    let mut report = SmoothReport {
        iterations_run: 0,
        stop_reason: StopReason::MaxIter,
        max_curvature_before: k_before,
        max_curvature_after: k_before,
        max_heading_before: max_heading(input),
        max_heading_after: max_heading(input),
        max_offset: 0.0,
        returned_sweep: 0,
        sweeps: Vec::new(),
    };
    let mut best = (k_before, 0, input.to_vec());
    for iteration in 1..=cfg.max_iter {
        let mut degenerate = false;
        for i in 2..n - 2 {
            let curv = if cfg.w_curv * cfg.step_curv != 0.0 {
                match curvature_gradient(&points, i, cfg.c_max) {
                    Ok(g) => g,
                    Err(_) => {
                        degenerate = true;
                        break;
                    }
                }
            } else {
                Point2::default()
            };
            let step = smoothness_gradient(&points, i)
                .scale(cfg.step_smooth * cfg.w_smooth)
                .add(straightness_gradient(&points, i).scale(cfg.step_straight * cfg.w_straight))
                .add(curv.scale(cfg.step_curv * cfg.w_curv));
            points[i] = points[i].sub(step.scale(weights[i]));
        }
        let k_max = if degenerate { None } else { max_polyline_curvature(&points) };
        let Some(k_max) = k_max else {
            report.stop_reason = StopReason::Degenerate;
            report.iterations_run = iteration;
            break;
        };
        let offset = max_offset(&points, input);
        report.iterations_run = iteration;
        report.sweeps.push(SweepRecord { iteration, max_curvature: k_max, max_offset: offset });
        if offset > cfg.buffer {
            report.stop_reason = StopReason::BufferExceeded;
            break;
        }
        if k_max < cfg.c_max {
            report.stop_reason = StopReason::CurvatureSatisfied;
            best = (k_max, iteration, points.clone());
            break;
        }
        if k_max < best.0 {
            best = (k_max, iteration, points.clone());
        }
    }
    report.returned_sweep = best.1;
    let points = best.2;
    report.max_curvature_after = max_polyline_curvature(&points).unwrap_or(f64::NAN);
    report.max_heading_after = max_heading(&points);
    report.max_offset = max_offset(&points, input);
    Ok((points, report))
}

fn first_degenerate(points: &[Point2]) -> Error {
    let i = points.windows(2).position(|w| w[0] == w[1]).map_or(0, |i| i + 1);
    Error::Degenerate(i)
}

/// Cumulative arc length along a polyline.
fn arc_lengths(points: &[Point2]) -> Vec<f64> {
    let mut s = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    s.push(0.0);
    for w in points.windows(2) {
        acc += w[1].distance(w[0]);
        s.push(acc);
    }
    s
}

/// Point at arc length `at` along a polyline with cumulative lengths `s`.
fn point_at(points: &[Point2], s: &[f64], at: f64) -> Point2 {
    let last = points.len() - 1;
    if at <= 0.0 {
        return points[0];
    }
    if at >= s[last] {
        return points[last];
    }
    let k = s.partition_point(|&v| v <= at).clamp(1, last);
    let span = s[k] - s[k - 1];
    let w = if span > 0.0 { (at - s[k - 1]) / span } else { 0.0 };
    points[k - 1].add(points[k].sub(points[k - 1]).scale(w))
}

/// Natural cubic spline through polyline vertices, parameterized by chord
/// length.
struct ChordSpline {
    knots: Vec<f64>,
    points: Vec<Point2>,
    second: Vec<Point2>,
}

impl ChordSpline {
    fn new(points: &[Point2]) -> Self {
        let knots = arc_lengths(points);
        let n = points.len();
        let mut second = vec![Point2::default(); n];
        if n > 2 {
            // Thomas algorithm on the interior second derivatives.
            let m = n - 2;
            let mut diag = vec![0.0; m];
            let mut rhs = vec![Point2::default(); m];
            let mut upper = vec![0.0; m];
            for r in 0..m {
                let (h0, h1) = (knots[r + 1] - knots[r], knots[r + 2] - knots[r + 1]);
                diag[r] = 2.0 * (h0 + h1);
                upper[r] = h1;
                let slope1 = points[r + 2].sub(points[r + 1]).scale(1.0 / h1);
                let slope0 = points[r + 1].sub(points[r]).scale(1.0 / h0);
                rhs[r] = slope1.sub(slope0).scale(6.0);
                if r > 0 {
                    let w = h0 / diag[r - 1];
                    diag[r] -= w * upper[r - 1];
                    rhs[r] = rhs[r].sub(rhs[r - 1].scale(w));
                }
            }
            for r in (0..m).rev() {
                let next = if r + 1 < m { second[r + 2] } else { Point2::default() };
                second[r + 1] = rhs[r].sub(next.scale(upper[r])).scale(1.0 / diag[r]);
            }
        }
        Self { knots, points: points.to_vec(), second }
    }

    fn length(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    fn eval(&self, at: f64) -> Point2 {
        let last = self.points.len() - 1;
        let at = at.clamp(0.0, self.length());
        let k = self.knots.partition_point(|&v| v <= at).clamp(1, last);
        let h = self.knots[k] - self.knots[k - 1];
        let a = (self.knots[k] - at) / h;
        let b = 1.0 - a;
        let (p0, p1, m0, m1) = (self.points[k - 1], self.points[k], self.second[k - 1], self.second[k]);
        p0.scale(a)
            .add(p1.scale(b))
            .add(m0.scale((a * a * a - a) * h * h / 6.0))
            .add(m1.scale((b * b * b - b) * h * h / 6.0))
    }
}

/// Smooths a time-sampled trajectory.
///
/// The path is resampled at `cfg.spacing` in the lane frame, smoothed, and
/// the original samples are moved to the same fraction of arc length on the
/// smoothed path, so the time law is unchanged. Heading and curvature are
/// then recomputed from the new positions.
pub fn smooth(traj: &Trajectory, reference: &ReferenceLine, cfg: &SmootherConfig) -> Result<(Trajectory, SmoothReport)> {
    let frenet: Vec<Point2> = traj
        .points()
        .iter()
        .map(|p| {
            let (s, d) = reference.to_frenet(p.position());
            Point2::new(s, d)
        })
        .collect();
    let along = arc_lengths(&frenet);
    let total = along[along.len() - 1];
    let count = ((total / cfg.spacing).round() as usize).max(4);
    if total <= 0.0 {
        return Err(Error::Degenerate(1));
    }
    let resampled: Vec<Point2> = (0..=count).map(|k| point_at(&frenet, &along, total * k as f64 / count as f64)).collect();
    let (smoothed, report) = smooth_polyline(&resampled, cfg)?;
    let spline = ChordSpline::new(&smoothed);
    let ratio = spline.length() / total;
    let points: Vec<TrajectoryPoint> = traj
        .points()
        .iter()
        .zip(&along)
        .map(|(p, &at)| {
            let q = spline.eval(at * ratio);
            let xy = reference.to_cartesian(q.x, q.y);
            TrajectoryPoint { s: q.x, d: q.y, x: xy.x, y: xy.y, ..*p }
        })
        .collect();
    let moved = Trajectory::new(points, traj.dt())?;
    let out = annotate(&moved).unwrap_or(moved);
    Ok((out, report))
}
