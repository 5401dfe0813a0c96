//! Seeded oracle suites run by `mergeplan selftest`.

use mergeplan::qp::{self, QpProblem, QpStatus};
use mergeplan::smoother::{self, curvature_gradient, smoothness_gradient, straightness_gradient, SmootherConfig};
use mergeplan::Point2;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: usize,
    pub worst: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelftestReport {
    pub seed: u64,
    pub suites: Vec<SuiteReport>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(|s| s.failures == 0)
    }

    pub fn lines(&self) -> Vec<String> {
        self.suites
            .iter()
            .map(|s| {
                let verdict = if s.failures == 0 { "PASS" } else { "FAIL" };
                format!("{verdict} {}: {} cases, {} failures, worst {:.3e} (tol {:.0e})", s.name, s.cases, s.failures, s.worst, s.tolerance)
            })
            .collect()
    }
}

/// Strictly convex QP whose optimum is planted: some inequality rows are
/// made active with positive multipliers, the rest get positive slack.
pub fn planted_qp(rng: &mut impl Rng) -> (QpProblem, DVector<f64>) {
    let n = rng.gen_range(1..=10);
    let mi = rng.gen_range(0..=20);
    let me = if n > 1 { rng.gen_range(0..=n.min(3)) } else { 0 };
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h = m.transpose() * &m + DMatrix::identity(n, n);
    let x = DVector::from_fn(n, |_, _| rng.gen_range(-5.0..5.0));
    let aeq = DMatrix::from_fn(me, n, |_, _| rng.gen_range(-1.0..1.0));
    let beq = &aeq * &x;
    let aieq = DMatrix::from_fn(mi, n, |_, _| rng.gen_range(-1.0..1.0));
    let mut bieq = &aieq * &x;
    let mut g = DVector::zeros(n);
    for i in 0..mi {
        if rng.gen_bool(0.4) {
            g += aieq.row(i).transpose() * rng.gen_range(0.1..2.0);
        } else {
            bieq[i] -= rng.gen_range(0.1..3.0);
        }
    }
    for i in 0..me {
        g += aeq.row(i).transpose() * rng.gen_range(-2.0..2.0);
    }
    let f = g - &h * &x;
    (QpProblem::new(h, f).with_equalities(aeq, beq).with_inequalities(aieq, bieq), x)
}

fn qp_suite(rng: &mut impl Rng, cases: usize) -> SuiteReport {
    let tolerance = 1e-6;
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let (p, x) = planted_qp(rng);
        match qp::solve(&p, 1e-8, 500) {
            Ok(s) if s.status == QpStatus::Optimal && s.kkt_residual <= 1e-8 => {
                let gap = (p.objective(&s.x) - p.objective(&x)).abs();
                worst = worst.max(gap);
                failures += usize::from(gap > tolerance);
            }
            _ => failures += 1,
        }
    }
    SuiteReport { name: "qp planted optimum", cases, failures, worst, tolerance }
}

/// Polyline with turning angles bounded away from zero, so the unsigned
/// curvature is differentiable at every vertex.
pub fn random_polyline(rng: &mut impl Rng, n: usize) -> Vec<Point2> {
    let mut heading: f64 = rng.gen_range(-3.0..3.0);
    let mut p = Point2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
    let mut out = vec![p];
    for _ in 1..n {
        let turn = rng.gen_range(0.05..0.3);
        heading += if rng.gen_bool(0.5) { turn } else { -turn };
        p = p.add(Point2::new(heading.cos(), heading.sin()).scale(rng.gen_range(0.5..2.0)));
        out.push(p);
    }
    out
}

/// Largest relative error of the three analytic gradients against central
/// differences, over every interior point. Each difference is taken on the
/// seven-point window around the moved vertex, which holds every term that
/// depends on it.
pub fn gradient_error(points: &[Point2], c_max: f64) -> f64 {
    let only = |w_smooth: f64, w_straight: f64, w_curv: f64| SmootherConfig { w_smooth, w_straight, w_curv, c_max, ..Default::default() };
    let terms = [only(1.0, 0.0, 0.0), only(0.0, 1.0, 0.0), only(0.0, 0.0, 1.0)];
    let h = 1e-6;
    let mut worst = 0.0f64;
    for i in 2..points.len() - 2 {
        let analytic = [
            smoothness_gradient(points, i),
            straightness_gradient(points, i),
            curvature_gradient(points, i, c_max).unwrap_or_default(),
        ];
        for (cfg, g) in terms.iter().zip(analytic) {
            let mut fd = [0.0; 2];
            for (axis, slot) in fd.iter_mut().enumerate() {
                let lo = i.saturating_sub(3);
                let shift = |delta: f64| {
                    let mut q = points[lo..(i + 4).min(points.len())].to_vec();
                    if axis == 0 {
                        q[i - lo].x += delta;
                    } else {
                        q[i - lo].y += delta;
                    }
                    smoother::objective(&q, cfg).unwrap_or(f64::NAN)
                };
                *slot = (shift(h) - shift(-h)) / (2.0 * h);
            }
            let err = g.distance(Point2::new(fd[0], fd[1])) / g.norm().max(1e-3);
            worst = worst.max(if err.is_nan() { f64::INFINITY } else { err });
        }
    }
    worst
}

fn gradient_suite(rng: &mut impl Rng, cases: usize) -> SuiteReport {
    let tolerance = 1e-5;
    let (mut failures, mut worst) = (0, 0.0f64);
    for _ in 0..cases {
        let n = rng.gen_range(20..=200);
        let err = gradient_error(&random_polyline(rng, n), 0.01);
        worst = worst.max(err);
        failures += usize::from(err > tolerance);
    }
    SuiteReport { name: "smoother gradients", cases, failures, worst, tolerance }
}

pub fn run_all(seed: u64) -> SelftestReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qp = qp_suite(&mut rng, 200);
    let grad = gradient_suite(&mut rng, 100);
    SelftestReport { seed, suites: vec![qp, grad] }
}
