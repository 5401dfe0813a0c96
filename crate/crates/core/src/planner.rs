//! Lateral and longitudinal polynomial planning over a sweep of terminal
//! times.
//!
//! For every terminal time `Te` one QP fixes the quintic lateral profile
//! `d(t)` and another the longitudinal profile `s(t)`, quintic when spacing
//! against a gap and quartic when holding a set speed. The sample with the
//! lowest comfort cost plus `K_T·Te` wins.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::frenet::ReferenceLine;
use crate::opportunity::MergeScenario;
use crate::poly::{basis_row, derivative_gram, eval_unchecked, Polynomial};
use crate::prediction::{gap_midpoint, TargetMotion};
use crate::qp::{self, QpError, QpProblem, QpStatus};
use crate::trajectory::{Trajectory, TrajectoryPoint};

/// Slack when matching grid points to the horizon.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.min - tol && v <= self.max + tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub te_min: f64,
    pub te_max: f64,
    pub te_step: f64,
    /// Spacing of the middle-point constraint grid and the tracking
    /// quadrature.
    pub grid_step: f64,
    /// Sampling step of the emitted trajectory.
    pub sample_dt: f64,
    pub k_t: f64,
    pub ka: f64,
    pub kj: f64,
    pub kd: f64,
    pub kds: f64,
    pub kdv: f64,
    pub lat_rate: Range,
    pub lat_accel: Range,
    pub lon_rate: Range,
    pub lon_accel: Range,
    /// Half-width of the speed window around the set speed in velocity
    /// mode.
    pub v_window: f64,
    pub qp_tol: f64,
    pub qp_max_iter: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            te_min: 4.5,
            te_max: 7.0,
            te_step: 0.1,
            grid_step: 0.1,
            sample_dt: 0.05,
            k_t: 0.05,
            ka: 1.0,
            kj: 1.0,
            kd: 0.5,
            kds: 0.3,
            kdv: 0.1,
            lat_rate: Range::new(-2.0, 2.0),
            lat_accel: Range::new(-1.5, 1.5),
            lon_rate: Range::new(0.0, 33.3),
            lon_accel: Range::new(-2.5, 2.5),
            v_window: 1.0,
            qp_tol: 1e-8,
            qp_max_iter: 500,
        }
    }
}

impl PlannerConfig {
    /// Terminal-time samples `te_min + k·te_step`.
    pub fn te_samples(&self) -> Vec<f64> {
        let count = ((self.te_max - self.te_min) / self.te_step + GRID_EPS).floor() as usize + 1;
        (0..count).map(|k| self.te_min + k as f64 * self.te_step).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LateralSpec {
    pub d0: f64,
    pub d0_dot: f64,
    pub d0_ddot: f64,
    pub road_width: f64,
    pub rate_bounds: Range,
    pub accel_bounds: Range,
    pub ka: f64,
    pub kj: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LongitudinalMode {
    Distance,
    Velocity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LongitudinalTarget {
    /// Track the midpoint of two predicted vehicles.
    Distance { rear: TargetMotion, front: TargetMotion },
    /// Hold a set speed; the terminal speed must land in `window`.
    Velocity { v_set: f64, window: Range },
}

impl LongitudinalTarget {
    pub fn mode(&self) -> LongitudinalMode {
        match self {
            Self::Distance { .. } => LongitudinalMode::Distance,
            Self::Velocity { .. } => LongitudinalMode::Velocity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalSpec {
    pub s0: f64,
    pub s0_dot: f64,
    pub s0_ddot: f64,
    pub target: LongitudinalTarget,
    pub rate_bounds: Range,
    pub accel_bounds: Range,
    pub ka: f64,
    pub kj: f64,
    /// Tracking weight: position in distance mode, speed in velocity mode.
    pub k_track: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("terminal time {te} outside [{min}, {max}]")]
    Horizon { te: f64, min: f64, max: f64 },
    #[error("no feasible terminal time among {samples} samples")]
    AllInfeasible { samples: usize },
    #[error("QP {status:?} at Te = {te}")]
    Sample { te: f64, status: QpStatus },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Geometry(#[from] crate::Error),
}

/// A QP together with the constant part of its cost, so that
/// `½xᵀHx + fᵀx + constant` equals the physical cost.
#[derive(Debug, Clone, PartialEq)]
pub struct CostedQp {
    pub problem: QpProblem,
    pub constant: f64,
}

impl CostedQp {
    pub fn cost(&self, x: &DVector<f64>) -> f64 {
        self.problem.objective(x) + self.constant
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSample {
    pub te: f64,
    pub lateral: Polynomial,
    pub longitudinal: Polynomial,
    pub cost_lat: f64,
    pub cost_lon: f64,
    /// Comfort cost, lateral plus longitudinal.
    pub cost_tilde: f64,
    /// `cost_tilde + K_T·Te`.
    pub cost_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub te: f64,
    pub lateral: Polynomial,
    pub longitudinal: Polynomial,
    pub cost_tilde: f64,
    pub cost_total: f64,
    pub feasible_samples: usize,
    pub trajectory: Trajectory,
}

/// One-line summary of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub te: f64,
    pub cost_tilde: f64,
    pub cost_total: f64,
    pub feasible_samples: usize,
    pub mode: LongitudinalMode,
    pub lateral: Vec<f64>,
    pub longitudinal: Vec<f64>,
}

impl LateralSpec {
    pub fn from_config(cfg: &PlannerConfig, d0: f64, d0_dot: f64, d0_ddot: f64, road_width: f64) -> Self {
        Self {
            d0,
            d0_dot,
            d0_ddot,
            road_width,
            rate_bounds: cfg.lat_rate,
            accel_bounds: cfg.lat_accel,
            ka: cfg.ka,
            kj: cfg.kj,
            kd: cfg.kd,
        }
    }
}

impl LongitudinalSpec {
    pub fn from_config(cfg: &PlannerConfig, s0: f64, s0_dot: f64, s0_ddot: f64, target: LongitudinalTarget) -> Self {
        let k_track = match target {
            LongitudinalTarget::Distance { .. } => cfg.kds,
            LongitudinalTarget::Velocity { .. } => cfg.kdv,
        };
        Self {
            s0,
            s0_dot,
            s0_ddot,
            target,
            rate_bounds: cfg.lon_rate,
            accel_bounds: cfg.lon_accel,
            ka: cfg.ka,
            kj: cfg.kj,
            k_track,
        }
    }
}

/// Constraint-grid times `0, step, 2·step, …` up to and including `te`.
pub fn grid_times(te: f64, step: f64) -> Vec<f64> {
    let count = (te / step + GRID_EPS).floor() as usize;
    let mut times: Vec<f64> = (0..=count).map(|k| k as f64 * step).collect();
    if te - times[times.len() - 1] > GRID_EPS {
        times.push(te);
    }
    times
}

/// Trapezoid weights for `times`.
fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    w
}

fn check_horizon(cfg: &PlannerConfig, te: f64) -> Result<(), PlanError> {
    if te >= cfg.te_min - GRID_EPS && te <= cfg.te_max + GRID_EPS {
        Ok(())
    } else {
        Err(PlanError::Horizon { te, min: cfg.te_min, max: cfg.te_max })
    }
}

/// Constraint rows in row-major order.
struct Rows {
    width: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn new(width: usize) -> Self {
        Self { width, a: Vec::new(), b: Vec::new() }
    }

    fn push(&mut self, row: &[f64], rhs: f64) {
        self.a.extend_from_slice(row);
        self.b.push(rhs);
    }

    /// `lo ≤ row·x ≤ hi` as two `≥` rows.
    fn push_range(&mut self, row: &[f64], range: Range) {
        if range.min.is_finite() {
            self.push(row, range.min);
        }
        if range.max.is_finite() {
            self.a.extend(row.iter().map(|v| -v));
            self.b.push(-range.max);
        }
    }

    fn into_parts(self) -> (DMatrix<f64>, DVector<f64>) {
        let m = DMatrix::from_row_slice(self.b.len(), self.width, &self.a);
        (m, DVector::from_vec(self.b))
    }
}

/// `Σ w·Gram` with entries scaled for `½xᵀHx = Σ w∫(x⁽ʳ⁾)²`.
fn comfort_hessian(len: usize, te: f64, terms: &[(usize, f64)]) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(len, len);
    for &(order, weight) in terms {
        if weight == 0.0 {
            continue;
        }
        let g = derivative_gram(len, te, order);
        for i in 0..len {
            for j in 0..len {
                h[(i, j)] += 2.0 * weight * g[i][j];
            }
        }
    }
    h
}

fn initial_rows(rows: &mut Rows, len: usize, state: [f64; 3]) {
    for (order, value) in state.into_iter().enumerate() {
        rows.push(&basis_row(len, 0.0, order), value);
    }
}

fn grid_rows(rows: &mut Rows, len: usize, times: &[f64], rate: Range, accel: Range) {
    let mut first = [0.0; 6];
    let mut second = [0.0; 6];
    for &t in times {
        // d/dt t^k = k t^(k-1), d²/dt² t^k = k (k-1) t^(k-2)
        let mut power = 1.0;
        for k in 1..len {
            first[k] = k as f64 * power;
            if k + 1 < len {
                second[k + 1] = ((k + 1) * k) as f64 * power;
            }
            power *= t;
        }
        rows.push_range(&first[..len], rate);
        rows.push_range(&second[..len], accel);
    }
}

pub fn build_lateral_qp(spec: &LateralSpec, te: f64, cfg: &PlannerConfig) -> Result<CostedQp, PlanError> {
    check_horizon(cfg, te)?;
    const LEN: usize = 6;
    let h = comfort_hessian(LEN, te, &[(2, spec.ka), (3, spec.kj), (0, spec.kd)]);
    let mut eq = Rows::new(LEN);
    initial_rows(&mut eq, LEN, [spec.d0, spec.d0_dot, spec.d0_ddot]);
    eq.push(&basis_row(LEN, te, 1), 0.0);
    eq.push(&basis_row(LEN, te, 2), 0.0);
    let mut ineq = Rows::new(LEN);
    let half = 0.5 * spec.road_width;
    ineq.push_range(&basis_row(LEN, te, 0), Range::new(-half, half));
    grid_rows(&mut ineq, LEN, &grid_times(te, cfg.grid_step), spec.rate_bounds, spec.accel_bounds);
    let (aeq, beq) = eq.into_parts();
    let (aieq, bieq) = ineq.into_parts();
    let problem = QpProblem::new(h, DVector::zeros(LEN))
        .with_equalities(aeq, beq)
        .with_inequalities(aieq, bieq);
    Ok(CostedQp { problem, constant: 0.0 })
}

pub fn build_longitudinal_qp(
    spec: &LongitudinalSpec,
    te: f64,
    cfg: &PlannerConfig,
) -> Result<CostedQp, PlanError> {
    check_horizon(cfg, te)?;
    let times = grid_times(te, cfg.grid_step);
    let weights = trapezoid_weights(&times);
    let len = match spec.target {
        LongitudinalTarget::Distance { .. } => 6,
        LongitudinalTarget::Velocity { .. } => 5,
    };
    let mut eq = Rows::new(len);
    let mut ineq = Rows::new(len);
    let (order, samples): (usize, Vec<f64>) = match &spec.target {
        LongitudinalTarget::Distance { rear, front } => {
            let end = gap_midpoint(rear, front, te);
            initial_rows(&mut eq, len, [spec.s0, spec.s0_dot, spec.s0_ddot]);
            eq.push(&basis_row(len, te, 1), end.v);
            eq.push(&basis_row(len, te, 2), end.a);
            // Terminal window is relative to the start position.
            let travel = end.s - spec.s0;
            let (lo, hi) = (0.8 * travel, 1.2 * travel);
            let window = Range::new(spec.s0 + lo.min(hi), spec.s0 + lo.max(hi));
            ineq.push_range(&basis_row(len, te, 0), window);
            let samples = times.iter().map(|&t| gap_midpoint(rear, front, t).s).collect();
            (0, samples)
        }
        LongitudinalTarget::Velocity { v_set, window } => {
            initial_rows(&mut eq, len, [spec.s0, spec.s0_dot, spec.s0_ddot]);
            eq.push(&basis_row(len, te, 2), 0.0);
            ineq.push_range(&basis_row(len, te, 1), *window);
            (1, vec![*v_set; times.len()])
        }
    };
    grid_rows(&mut ineq, len, &times, spec.rate_bounds, spec.accel_bounds);

    let mut h = comfort_hessian(len, te, &[(2, spec.ka), (3, spec.kj)]);
    let mut f = DVector::zeros(len);
    let mut constant = 0.0;
    // k·Σ wₖ (targetₖ − rₖᵀx)²
    for ((&t, &w), &target) in times.iter().zip(&weights).zip(&samples) {
        let r = DVector::from_vec(basis_row(len, t, order));
        let kw = spec.k_track * w;
        h.ger(2.0 * kw, &r, &r, 1.0);
        f.axpy(-2.0 * kw * target, &r, 1.0);
        constant += kw * target * target;
    }
    let h = 0.5 * (&h + h.transpose());
    let (aeq, beq) = eq.into_parts();
    let (aieq, bieq) = ineq.into_parts();
    let problem = QpProblem::new(h, f).with_equalities(aeq, beq).with_inequalities(aieq, bieq);
    Ok(CostedQp { problem, constant })
}

fn solve_profile(q: &CostedQp, te: f64, cfg: &PlannerConfig) -> Result<(Polynomial, f64), PlanError> {
    let sol = qp::solve(&q.problem, cfg.qp_tol, cfg.qp_max_iter)?;
    if sol.status != QpStatus::Optimal {
        return Err(PlanError::Sample { te, status: sol.status });
    }
    let cost = q.cost(&sol.x);
    Ok((Polynomial::new(sol.x.iter().copied().collect(), te)?, cost))
}

/// Solves both QPs for one terminal time.
pub fn evaluate_te(
    lat: &LateralSpec,
    lon: &LongitudinalSpec,
    te: f64,
    cfg: &PlannerConfig,
) -> Result<PlanSample, PlanError> {
    let (lateral, cost_lat) = solve_profile(&build_lateral_qp(lat, te, cfg)?, te, cfg)?;
    let (longitudinal, cost_lon) = solve_profile(&build_longitudinal_qp(lon, te, cfg)?, te, cfg)?;
    let cost_tilde = cost_lat + cost_lon;
    Ok(PlanSample {
        te,
        lateral,
        longitudinal,
        cost_lat,
        cost_lon,
        cost_tilde,
        cost_total: cost_tilde + cfg.k_t * te,
    })
}

/// Every terminal-time sample with its outcome, in sweep order.
pub fn sweep(
    lat: &LateralSpec,
    lon: &LongitudinalSpec,
    cfg: &PlannerConfig,
) -> Vec<(f64, Result<PlanSample, PlanError>)> {
    cfg.te_samples().into_iter().map(|te| (te, evaluate_te(lat, lon, te, cfg))).collect()
}

pub fn plan(
    lat: &LateralSpec,
    lon: &LongitudinalSpec,
    reference: &ReferenceLine,
    cfg: &PlannerConfig,
) -> Result<PlanResult, PlanError> {
    let outcomes = sweep(lat, lon, cfg);
    let samples = outcomes.len();
    let feasible: Vec<PlanSample> = outcomes.into_iter().filter_map(|(_, r)| r.ok()).collect();
    let feasible_samples = feasible.len();
    // Strict comparison keeps the smaller Te on ties.
    let best = feasible
        .into_iter()
        .reduce(|best, s| if s.cost_total < best.cost_total { s } else { best })
        .ok_or(PlanError::AllInfeasible { samples })?;
    let trajectory = assemble(&best.lateral, &best.longitudinal, reference, cfg.sample_dt)?;
    Ok(PlanResult {
        te: best.te,
        lateral: best.lateral,
        longitudinal: best.longitudinal,
        cost_tilde: best.cost_tilde,
        cost_total: best.cost_total,
        feasible_samples,
        trajectory,
    })
}

impl PlanResult {
    pub fn summary(&self) -> PlanSummary {
        PlanSummary {
            te: self.te,
            cost_tilde: self.cost_tilde,
            cost_total: self.cost_total,
            feasible_samples: self.feasible_samples,
            mode: if self.longitudinal.degree() == 4 {
                LongitudinalMode::Velocity
            } else {
                LongitudinalMode::Distance
            },
            lateral: self.lateral.coefficients().to_vec(),
            longitudinal: self.longitudinal.coefficients().to_vec(),
        }
    }
}

/// Samples both profiles every `dt` and maps them to the plane. Heading,
/// curvature, speed and acceleration come from the analytic derivatives.
pub fn assemble(
    lateral: &Polynomial,
    longitudinal: &Polynomial,
    reference: &ReferenceLine,
    dt: f64,
) -> Result<Trajectory, PlanError> {
    let te = lateral.horizon().min(longitudinal.horizon());
    let steps = (te / dt).round() as usize;
    let steps = if (steps as f64 * dt - te).abs() <= 1e-9 { steps } else { (te / dt).floor() as usize };
    let mut points = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let [s, sd, sdd, _] = longitudinal.state(t)?;
        let [d, dd, ddd, _] = lateral.state(t)?;
        let p = reference.to_cartesian(s, d);
        let v = sd.hypot(dd);
        let (curvature, a) = if v > 1e-9 {
            ((sd * ddd - dd * sdd) / (v * v * v), (sd * sdd + dd * ddd) / v)
        } else {
            (0.0, sdd)
        };
        points.push(TrajectoryPoint {
            t,
            s,
            d,
            x: p.x,
            y: p.y,
            heading: reference.heading() + dd.atan2(sd),
            curvature,
            v,
            a,
        });
    }
    Ok(Trajectory::new(points, dt)?)
}

/// Distance mode whenever at least one real vehicle bounds the gap.
pub fn select_mode(scenario: &MergeScenario) -> LongitudinalMode {
    if scenario.real_targets() > 0 {
        LongitudinalMode::Distance
    } else {
        LongitudinalMode::Velocity
    }
}

/// Longitudinal target for a classified scenario. Open road falls back to
/// holding `v_set`.
pub fn longitudinal_target(scenario: &MergeScenario, v_set: f64, cfg: &PlannerConfig) -> LongitudinalTarget {
    match select_mode(scenario) {
        LongitudinalMode::Distance => LongitudinalTarget::Distance { rear: scenario.rear, front: scenario.front },
        LongitudinalMode::Velocity => LongitudinalTarget::Velocity {
            v_set,
            window: Range::new(v_set - cfg.v_window, v_set + cfg.v_window),
        },
    }
}

/// Re-checks a profile against the constraints it was planned under by
/// direct evaluation. Returns the largest violation found.
pub fn constraint_violation(poly: &Polynomial, rate: Range, accel: Range, grid_step: f64) -> f64 {
    let c = poly.coefficients();
    let mut worst = 0.0f64;
    for t in grid_times(poly.horizon(), grid_step) {
        for (order, range) in [(1, rate), (2, accel)] {
            let v = eval_unchecked(c, t, order);
            worst = worst.max(range.min - v).max(v - range.max);
        }
    }
    worst
}
