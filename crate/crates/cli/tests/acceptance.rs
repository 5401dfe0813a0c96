//! One PASS/FAIL line per acceptance criterion. Runs without the libtest
//! harness so the lines are always printed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mergeplan::config::{self, ScenarioConfig};
use mergeplan::opportunity::{classify, decide};
use mergeplan::planner::{
    self, LateralSpec, LongitudinalSpec, LongitudinalTarget, PlanSample, PlannerConfig, Range,
};
use mergeplan::prediction::{gap_midpoint, TargetMotion};
use mergeplan::qp::{self, QpProblem, QpStatus};
use mergeplan::simulator::{self, EventKind};
use mergeplan::smoother::{self, SmootherConfig, StopReason};
use mergeplan::{Point2, Polynomial, ReferenceLine};
use mergeplan_cli::{parse_and_dispatch, selftest, EXIT_OK};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn scenario(name: &str) -> ScenarioConfig {
    config::load_scenario(&fixtures().join(name), &[]).unwrap().resolved()
}

fn fixture_polyline() -> Vec<Point2> {
    let file = fs::File::open(fixtures().join("lanechange_3p5x65.csv")).unwrap();
    mergeplan::io::read_polyline_csv(file).unwrap()
}

fn mean_millis(reps: usize, mut f: impl FnMut()) -> f64 {
    let start = Instant::now();
    for _ in 0..reps {
        f();
    }
    start.elapsed().as_secs_f64() * 1e3 / reps as f64
}

fn criterion_smoother() -> Outcome {
    let input = fixture_polyline();
    let with = SmootherConfig::default();
    let without = SmootherConfig { w_straight: 0.0, ..Default::default() };
    let (_, a) = smoother::smooth_polyline(&input, &with).unwrap();
    let (_, b) = smoother::smooth_polyline(&input, &without).unwrap();
    let ms = mean_millis(20, || {
        smoother::smooth_polyline(&input, &with).unwrap();
    });
    let heading_drop = 1.0 - a.max_heading_after / a.max_heading_before;
    let stops = a.stop_reason == StopReason::CurvatureSatisfied && a.iterations_run < 250;
    let runs_out = b.stop_reason == StopReason::MaxIter && b.iterations_run == with.max_iter;
    let curvature = a.max_curvature_before >= 4.0e-3 && a.max_curvature_after <= 2.5e-3;
    let pass = stops && runs_out && curvature && heading_drop >= 0.15 && ms <= 50.0;
    outcome(
        pass,
        format!(
            "stop {:?} at sweep {}; without straightness {:?} at {}; curvature {:.4e} -> {:.4e}; heading {:.3} -> {:.3} deg ({:.1}% drop); {:.2} ms",
            a.stop_reason,
            a.iterations_run,
            b.stop_reason,
            b.iterations_run,
            a.max_curvature_before,
            a.max_curvature_after,
            a.max_heading_before.to_degrees(),
            a.max_heading_after.to_degrees(),
            100.0 * heading_drop,
            ms
        ),
    )
}

fn criterion_gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(20..=200);
        worst = worst.max(selftest::gradient_error(&selftest::random_polyline(&mut rng, n), 0.01));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-5 && secs <= 1.0, format!("100 polylines, worst relative error {worst:.2e}, {secs:.3} s"))
}

/// Accelerated projected gradient on the dual, whose feasible set is the
/// box `λ ≥ 0`, followed by an equality-constrained solve on the rows the
/// dual left positive.
fn dual_oracle(p: &QpProblem) -> DVector<f64> {
    let (me, mi) = (p.aeq.nrows(), p.aieq.nrows());
    let m = me + mi;
    let chol = p.h.clone().cholesky().expect("strictly convex");
    let hinv_f = chol.solve(&p.f);
    if m == 0 {
        return -hinv_f;
    }
    let c = DMatrix::from_fn(m, p.dim(), |i, j| if i < me { p.aeq[(i, j)] } else { p.aieq[(i - me, j)] });
    let rhs = DVector::from_fn(m, |i, _| if i < me { p.beq[i] } else { p.bieq[i - me] });
    let hinv_ct = chol.solve(&c.transpose());
    let q = &c * &hinv_ct;
    let r = &rhs + &c * &hinv_f;
    let step = 1.0 / q.symmetric_eigenvalues().max().max(1e-12);
    let project = |v: &mut DVector<f64>| {
        for i in me..m {
            v[i] = v[i].max(0.0);
        }
    };
    let (mut nu, mut y, mut t) = (DVector::zeros(m), DVector::zeros(m), 1.0f64);
    for _ in 0..200_000 {
        let mut next = &y - step * (&q * &y - &r);
        project(&mut next);
        let moved = (&next - &nu).amax();
        if (&y - &next).dot(&(&next - &nu)) > 0.0 {
            t = 1.0;
            y = next.clone();
        } else {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            y = &next + ((t - 1.0) / t_next) * (&next - &nu);
            t = t_next;
        }
        nu = next;
        if moved <= 1e-15 * (1.0 + nu.amax()) {
            break;
        }
    }
    let x = &hinv_ct * &nu - &hinv_f;
    let active: Vec<usize> = (0..m).filter(|&i| i < me || nu[i] > 1e-9).collect();
    let n = p.dim();
    let k = active.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    let mut b = DVector::zeros(n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h);
    b.rows_mut(0, n).copy_from(&(-&p.f));
    for (j, &i) in active.iter().enumerate() {
        for col in 0..n {
            kkt[(n + j, col)] = c[(i, col)];
            kkt[(col, n + j)] = -c[(i, col)];
        }
        b[n + j] = rhs[i];
    }
    let polished = kkt.svd(true, true).solve(&b, 1e-12).map(|z| z.rows(0, n).into_owned());
    match polished {
        Ok(z) if (&p.aieq * &z - &p.bieq).iter().all(|&s| s >= -1e-9) && p.objective(&z) <= p.objective(&x) + 1e-6 => z,
        _ => x,
    }
}

fn criterion_qp() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let (mut gap, mut kkt, mut failures) = (0.0f64, 0.0f64, 0);
    for _ in 0..200 {
        let (p, _) = selftest::planted_qp(&mut rng);
        let oracle = dual_oracle(&p);
        match qp::solve(&p, 1e-8, 500) {
            Ok(s) if s.status == QpStatus::Optimal => {
                let g = (p.objective(&s.x) - p.objective(&oracle)).abs();
                gap = gap.max(g);
                kkt = kkt.max(s.kkt_residual);
                failures += usize::from(g > 1e-6 || s.kkt_residual > 1e-8);
            }
            _ => failures += 1,
        }
    }
    outcome(failures == 0, format!("200 problems, {failures} failures, worst objective gap {gap:.2e}, worst KKT {kkt:.2e}"))
}

/// Coefficients of the quintic through `start` at 0 and `end` at `te`.
fn quintic(start: [f64; 3], end: [f64; 3], te: f64) -> Vec<f64> {
    let (c0, c1, c2) = (start[0], start[1], 0.5 * start[2]);
    let a = end[0] - (c0 + c1 * te + c2 * te * te);
    let b = end[1] - (c1 + 2.0 * c2 * te);
    let c = end[2] - 2.0 * c2;
    let t2 = te * te;
    vec![
        c0,
        c1,
        c2,
        (20.0 * a - 8.0 * b * te + c * t2) / (2.0 * t2 * te),
        (-30.0 * a + 14.0 * b * te - 2.0 * c * t2) / (2.0 * t2 * t2),
        (12.0 * a - 6.0 * b * te + c * t2) / (2.0 * t2 * t2 * te),
    ]
}

/// Quartic with the given start state, end speed and zero end acceleration.
fn quartic(start: [f64; 3], v_end: f64, te: f64) -> Vec<f64> {
    let (c1, c2) = (start[1], 0.5 * start[2]);
    let b = v_end - (c1 + 2.0 * c2 * te);
    let c = -2.0 * c2;
    vec![start[0], c1, c2, (3.0 * b - c * te) / (3.0 * te * te), (te * c - 2.0 * b) / (4.0 * te.powi(3))]
}

fn derive(c: &[f64], order: usize) -> Vec<f64> {
    let mut c = c.to_vec();
    for _ in 0..order {
        c = c.iter().enumerate().skip(1).map(|(k, v)| k as f64 * v).collect();
    }
    c
}

fn eval(c: &[f64], t: f64, order: usize) -> f64 {
    derive(c, order).iter().rev().fold(0.0, |acc, v| acc * t + v)
}

/// Exact `∫₀ᵀ (p⁽ʳ⁾)² dt`.
fn integral_sq(c: &[f64], order: usize, te: f64) -> f64 {
    let d = derive(c, order);
    let mut total = 0.0;
    for (i, a) in d.iter().enumerate() {
        for (j, b) in d.iter().enumerate() {
            total += a * b * te.powi((i + j + 1) as i32) / (i + j + 1) as f64;
        }
    }
    total
}

fn grid(te: f64, step: f64) -> (Vec<f64>, Vec<f64>) {
    let mut times: Vec<f64> = (0..=((te / step + 1e-9).floor() as usize)).map(|k| k as f64 * step).collect();
    if te - times[times.len() - 1] > 1e-9 {
        times.push(te);
    }
    let mut w = vec![0.0; times.len()];
    for k in 0..times.len() - 1 {
        let h = times[k + 1] - times[k];
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    (times, w)
}

fn within(c: &[f64], times: &[f64], rate: Range, accel: Range) -> bool {
    times.iter().all(|&t| rate.contains(eval(c, t, 1), 1e-9) && accel.contains(eval(c, t, 2), 1e-9))
}

/// Lowest cost over `count` evenly spaced values of the free end quantity.
fn sample_min(lo: f64, hi: f64, count: usize, cost: impl Fn(f64) -> Option<f64>) -> Option<f64> {
    (0..count)
        .filter_map(|k| cost(lo + (hi - lo) * k as f64 / (count - 1) as f64))
        .fold(None, |best: Option<f64>, c| Some(best.map_or(c, |b| b.min(c))))
}

/// Dense end-state search for one terminal time.
fn extreme_search(lat: &LateralSpec, lon: &LongitudinalSpec, te: f64, cfg: &PlannerConfig) -> Option<f64> {
    const COUNT: usize = 4001;
    let (times, w) = grid(te, cfg.grid_step);
    let start_d = [lat.d0, lat.d0_dot, lat.d0_ddot];
    let half = 0.5 * lat.road_width;
    let lateral = sample_min(-half, half, COUNT, |d_end| {
        let c = quintic(start_d, [d_end, 0.0, 0.0], te);
        within(&c, &times, lat.rate_bounds, lat.accel_bounds).then(|| {
            lat.ka * integral_sq(&c, 2, te) + lat.kj * integral_sq(&c, 3, te) + lat.kd * integral_sq(&c, 0, te)
        })
    })?;
    let start_s = [lon.s0, lon.s0_dot, lon.s0_ddot];
    let comfort = |c: &[f64]| lon.ka * integral_sq(c, 2, te) + lon.kj * integral_sq(c, 3, te);
    let longitudinal = match &lon.target {
        LongitudinalTarget::Distance { rear, front } => {
            let end = gap_midpoint(rear, front, te);
            let travel = end.s - lon.s0;
            let (a, b) = (lon.s0 + 0.8 * travel, lon.s0 + 1.2 * travel);
            let mids: Vec<f64> = times.iter().map(|&t| gap_midpoint(rear, front, t).s).collect();
            sample_min(a.min(b), a.max(b), COUNT, |s_end| {
                let c = quintic(start_s, [s_end, end.v, end.a], te);
                within(&c, &times, lon.rate_bounds, lon.accel_bounds).then(|| {
                    let track: f64 = times.iter().zip(&w).zip(&mids).map(|((&t, &wk), &m)| wk * (m - eval(&c, t, 0)).powi(2)).sum();
                    comfort(&c) + lon.k_track * track
                })
            })?
        }
        LongitudinalTarget::Velocity { v_set, window } => sample_min(window.min, window.max, COUNT, |v_end| {
            let c = quartic(start_s, v_end, te);
            within(&c, &times, lon.rate_bounds, lon.accel_bounds).then(|| {
                let track: f64 = times.iter().zip(&w).map(|(&t, &wk)| wk * (v_set - eval(&c, t, 1)).powi(2)).sum();
                comfort(&c) + lon.k_track * track
            })
        })?,
    };
    Some(lateral + longitudinal + cfg.k_t * te)
}

struct Snapshot {
    lat: LateralSpec,
    lon: LongitudinalSpec,
    reference: ReferenceLine,
    sweep: Vec<PlanSample>,
    chosen_te: f64,
}

fn snapshots() -> Vec<Snapshot> {
    let cfg = ScenarioConfig::minimal(10.0, Vec::new());
    let pc = &cfg.planner;
    let mut out = Vec::new();
    let mut seed = 0;
    while out.len() < 10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        seed += 1;
        let v = rng.gen_range(6.0..14.0);
        let count = [0, 1, 2, 2, 2][rng.gen_range(0..5)];
        let mut targets = Vec::new();
        let mut s = rng.gen_range(-45.0..-5.0);
        for _ in 0..count {
            targets.push(TargetMotion { s0: s, v0: v + rng.gen_range(-2.0..2.0), a0: rng.gen_range(-0.5..0.5), decay: 2.0 });
            s += rng.gen_range(20.0..40.0);
        }
        let gap = classify(v, &targets, &cfg.opportunity);
        let d0 = cfg.lane.lane_width + rng.gen_range(-0.3..0.3);
        let lat = LateralSpec::from_config(pc, d0, rng.gen_range(-0.2..0.2), 0.0, cfg.lane.lane_width);
        let target = planner::longitudinal_target(&gap, v, pc);
        let lon = LongitudinalSpec::from_config(pc, 0.0, v, rng.gen_range(-0.5..0.5), target);
        let reference = ReferenceLine::new(Point2::new(0.0, 0.0), 0.0, cfg.lane.lane_width).unwrap();
        let Ok(plan) = planner::plan(&lat, &lon, &reference, pc) else { continue };
        let sweep = planner::sweep(&lat, &lon, pc).into_iter().filter_map(|(_, r)| r.ok()).collect();
        out.push(Snapshot { lat, lon, reference, sweep, chosen_te: plan.te });
    }
    out
}

fn criterion_extreme_search(snaps: &[Snapshot]) -> Outcome {
    let pc = PlannerConfig::default();
    let (mut compared, mut worst_gap, mut below, mut te_off, mut failures) = (0, 0.0f64, 0.0f64, 0.0f64, 0);
    for snap in snaps {
        let mut oracle_best: Option<(f64, f64)> = None;
        for sample in &snap.sweep {
            let Some(oracle) = extreme_search(&snap.lat, &snap.lon, sample.te, &pc) else {
                failures += 1;
                continue;
            };
            compared += 1;
            let gap = (oracle - sample.cost_total) / sample.cost_total;
            worst_gap = worst_gap.max(gap);
            below = below.min(gap);
            failures += usize::from(sample.cost_total > oracle + 1e-9 * (1.0 + oracle.abs()) || gap > 0.01);
            if oracle_best.is_none_or(|(_, c)| oracle < c) {
                oracle_best = Some((sample.te, oracle));
            }
        }
        let te = oracle_best.map_or(f64::NAN, |(te, _)| te);
        let off = (te - snap.chosen_te).abs();
        te_off = te_off.max(off);
        failures += usize::from(!(off <= pc.te_step + 1e-9));
    }
    outcome(
        failures == 0 && compared > 0,
        format!(
            "{} snapshots, {compared} Te samples, oracle above QP by at most {:.3}% (min {:.2e}), selected Te off by {te_off:.2} s",
            snaps.len(),
            100.0 * worst_gap,
            below
        ),
    )
}

struct PlanCheck {
    boundary: f64,
    grid: f64,
    lat_accel: f64,
    c2: f64,
}

fn check_plan(lat_poly: &Polynomial, lon_poly: &Polynomial, lat: &LateralSpec, lon: &LongitudinalSpec, reference: &ReferenceLine, pc: &PlannerConfig) -> PlanCheck {
    let te = lat_poly.horizon();
    let (d, s) = (lat_poly.coefficients(), lon_poly.coefficients());
    let rel = |a: f64, b: f64| (a - b).abs() / (1.0 + b.abs());
    let mut boundary = [
        rel(eval(d, 0.0, 0), lat.d0),
        rel(eval(d, 0.0, 1), lat.d0_dot),
        rel(eval(d, 0.0, 2), lat.d0_ddot),
        rel(eval(d, te, 1), 0.0),
        rel(eval(d, te, 2), 0.0),
        rel(eval(s, 0.0, 0), lon.s0),
        rel(eval(s, 0.0, 1), lon.s0_dot),
        rel(eval(s, 0.0, 2), lon.s0_ddot),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let excess = |v: f64, r: Range| (r.min - v).max(v - r.max).max(0.0);
    let (times, _) = grid(te, pc.grid_step);
    let mut worst_grid = excess(eval(d, te, 0), Range::new(-0.5 * lat.road_width, 0.5 * lat.road_width));
    match &lon.target {
        LongitudinalTarget::Distance { rear, front } => {
            let end = gap_midpoint(rear, front, te);
            boundary = boundary.max(rel(eval(s, te, 1), end.v)).max(rel(eval(s, te, 2), end.a));
            let travel = end.s - lon.s0;
            let (a, b) = (lon.s0 + 0.8 * travel, lon.s0 + 1.2 * travel);
            worst_grid = worst_grid.max(excess(eval(s, te, 0), Range::new(a.min(b), a.max(b))));
        }
        LongitudinalTarget::Velocity { window, .. } => {
            boundary = boundary.max(rel(eval(s, te, 2), 0.0));
            worst_grid = worst_grid.max(excess(eval(s, te, 1), *window));
        }
    }
    for &t in &times {
        worst_grid = worst_grid
            .max(excess(eval(d, t, 1), lat.rate_bounds))
            .max(excess(eval(d, t, 2), lat.accel_bounds))
            .max(excess(eval(s, t, 1), lon.rate_bounds))
            .max(excess(eval(s, t, 2), lon.accel_bounds));
    }
    let o = reference.to_cartesian(0.0, 0.0);
    let (along, across) = (reference.to_cartesian(1.0, 0.0).sub(o), reference.to_cartesian(0.0, 1.0).sub(o));
    let pos = |t: f64| reference.to_cartesian(eval(s, t, 0), eval(d, t, 0));
    let h = 0.01;
    let (mut lat_accel, mut c2) = (0.0f64, 0.0f64);
    let steps = (te / h).floor() as usize;
    for k in 0..=steps {
        let t = k as f64 * h;
        lat_accel = lat_accel.max(eval(d, t, 2).abs());
        if k == 0 || t + h > te {
            continue;
        }
        let vel = along.scale(eval(s, t, 1)).add(across.scale(eval(d, t, 1)));
        let acc = along.scale(eval(s, t, 2)).add(across.scale(eval(d, t, 2)));
        let (a, b, c) = (pos(t - h), pos(t), pos(t + h));
        let fd_vel = c.sub(a).scale(0.5 / h);
        let fd_acc = a.sub(b.scale(2.0)).add(c).scale(1.0 / (h * h));
        c2 = c2.max(fd_vel.distance(vel)).max(fd_acc.distance(acc));
    }
    PlanCheck { boundary, grid: worst_grid, lat_accel, c2 }
}

fn criterion_constraints(snaps: &[Snapshot]) -> Outcome {
    let pc = PlannerConfig::default();
    let mut checks = Vec::new();
    for snap in snaps {
        for sample in &snap.sweep {
            checks.push(check_plan(&sample.lateral, &sample.longitudinal, &snap.lat, &snap.lon, &snap.reference, &pc));
        }
    }
    for name in ["scenario1.json", "scenario2.json"] {
        let cfg = scenario(name);
        let log = simulator::run(&cfg);
        let Some(t0) = log.summary.merge_time else { continue };
        let at = log.records.iter().find(|r| (r.t - t0).abs() < 1e-9).expect("trigger record");
        let plan = log.summary.plan.as_ref().expect("plan");
        let gap = classify(at.ego.v_lon, &relative(&cfg, t0, at.ego.s), &cfg.opportunity);
        let pc = &cfg.planner;
        let lat = LateralSpec::from_config(pc, at.ego.d, at.ego.v_lat, at.ego.a_lat, cfg.lane.lane_width);
        let lon = LongitudinalSpec::from_config(pc, 0.0, at.ego.v_lon, at.ego.a_lon, planner::longitudinal_target(&gap, cfg.v_set(), pc));
        let reference = ReferenceLine::new(Point2::new(at.ego.s, 0.0), 0.0, cfg.lane.lane_width).unwrap();
        let lat_poly = Polynomial::new(plan.lateral.clone(), plan.te).unwrap();
        let lon_poly = Polynomial::new(plan.longitudinal.clone(), plan.te).unwrap();
        checks.push(check_plan(&lat_poly, &lon_poly, &lat, &lon, &reference, pc));
    }
    let worst = |f: fn(&PlanCheck) -> f64| checks.iter().map(f).fold(0.0, f64::max);
    let (boundary, grid, lat_accel, c2) = (worst(|c| c.boundary), worst(|c| c.grid), worst(|c| c.lat_accel), worst(|c| c.c2));
    outcome(
        boundary <= 1e-9 && grid <= 1e-9 && lat_accel <= 1.5 && c2 <= 1e-4,
        format!(
            "{} plans; boundary error {boundary:.1e}, grid violation {grid:.1e}, peak lateral accel {lat_accel:.3} m/s^2, C2 finite-difference error {c2:.1e}",
            checks.len()
        ),
    )
}

fn relative(cfg: &ScenarioConfig, t: f64, ego_s: f64) -> Vec<TargetMotion> {
    cfg.targets.iter().map(|c| c.motion().advanced(t).shifted(ego_s)).collect()
}

fn criterion_scenarios() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["scenario1.json", "scenario2.json"] {
        let cfg = scenario(name);
        let log = simulator::run(&cfg);
        let s = &log.summary;
        let trigger = log.events.iter().find_map(|e| match e.kind {
            EventKind::MergeTriggered { ttc_rear, ttc_front, .. } => Some((e.t, ttc_rear.min(ttc_front))),
            _ => None,
        });
        let (t, ttc) = trigger.unwrap_or((f64::NAN, f64::NAN));
        let te_min = cfg.planner.te_min;
        let v_lat_bound = 1.875 * cfg.lane.lane_width / te_min;
        let ok = ttc >= 3.0
            && (8.0..=18.0).contains(&t)
            && s.settled_at.is_some()
            && (0.4..=0.6).contains(&s.final_p_dist)
            && s.final_speed_error.abs() <= 0.5
            && s.peak_v_lat <= v_lat_bound;
        pass &= ok;
        parts.push(format!(
            "{name}: trigger {t:.2} s, min TTC {ttc:.2} s, settled {:?}, P {:.3}, speed error {:.1e}, peak v_lat {:.3} (bound {v_lat_bound:.3})",
            s.settled_at,
            s.final_p_dist,
            s.final_speed_error,
            s.peak_v_lat
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_performance() -> Outcome {
    let cfg = scenario("scenario1.json");
    let pc = &cfg.planner;
    let targets = relative(&cfg, 0.0, 0.0);
    let candidates = cfg.opportunity.candidates().len();
    let reference = ReferenceLine::new(Point2::new(0.0, 0.0), 0.0, cfg.lane.lane_width).unwrap();
    let cycle = mean_millis(100, || {
        let gap = classify(cfg.ego.v, &targets, &cfg.opportunity);
        let decision = decide(cfg.ego.v, &gap, &cfg.opportunity);
        std::hint::black_box(decision);
        let lat = LateralSpec::from_config(pc, cfg.ego_d(), 0.0, 0.0, cfg.lane.lane_width);
        let lon = LongitudinalSpec::from_config(pc, 0.0, cfg.ego.v, 0.0, planner::longitudinal_target(&gap, cfg.v_set(), pc));
        std::hint::black_box(planner::plan(&lat, &lon, &reference, pc).unwrap());
    });
    let polyline: Vec<Point2> = (0..130)
        .map(|k| {
            let x = k as f64 - 32.0;
            let u = (x / 65.0).clamp(0.0, 1.0);
            Point2::new(x, 3.5 * u.powi(3) * (10.0 - 15.0 * u + 6.0 * u * u))
        })
        .collect();
    let smoothing = mean_millis(100, || {
        std::hint::black_box(smoother::smooth_polyline(&polyline, &SmootherConfig::default()).unwrap());
    });
    outcome(
        cycle <= 5.0 && smoothing <= 50.0 && candidates <= 1000,
        format!("planning cycle ({candidates} candidates, {} Te) {cycle:.3} ms mean; 130-point smoothing {smoothing:.3} ms mean; 100 repetitions each", pc.te_samples().len()),
    )
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&p).unwrap();
            if name == "manifest.json" {
                let mut v: Value = serde_json::from_slice(&bytes).unwrap();
                v.as_object_mut().unwrap().remove("output");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            (name, bytes)
        })
        .collect();
    files.sort();
    files
}

fn criterion_determinism() -> Outcome {
    let s1 = fixtures().join("scenario1.json").display().to_string();
    let poly = fixtures().join("lanechange_3p5x65.csv").display().to_string();
    let commands: Vec<Vec<&str>> = vec![
        vec!["plan", &s1, "--diagnostics"],
        vec!["smooth", &poly, "--diagnostics"],
        vec!["simulate", &s1, "--diagnostics"],
        vec!["sweep", &s1, "--param", "sim.replan_period", "--values", "0.25,0.5,1.0"],
        vec!["sweep", &poly, "--param", "step_curv", "--values", "0.05,0.15"],
        vec!["selftest", "--seed", "5"],
    ];
    let mut mismatched = Vec::new();
    let mut files = 0;
    for args in &commands {
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        let mut trees = Vec::new();
        for dir in &dirs {
            let out = dir.path().display().to_string();
            let argv = std::iter::once("mergeplan").chain(args.iter().copied()).chain(["--out", out.as_str()]);
            if parse_and_dispatch(argv) != EXIT_OK {
                mismatched.push(format!("{} failed", args[0]));
            }
            trees.push(tree(dir.path()));
        }
        files += trees[0].len();
        if trees[0] != trees[1] {
            mismatched.push(args[0].to_string());
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("{} commands, {files} output files compared byte for byte, mismatches {mismatched:?}", commands.len()),
    )
}

fn main() {
    let snaps = snapshots();
    let results: Vec<(&str, Outcome)> = vec![
        ("smoother reproduction", criterion_smoother()),
        ("gradient oracle", criterion_gradients()),
        ("QP oracle", criterion_qp()),
        ("planner vs extreme search", criterion_extreme_search(&snaps)),
        ("constraint satisfaction", criterion_constraints(&snaps)),
        ("closed-loop scenarios", criterion_scenarios()),
        ("performance", criterion_performance()),
        ("determinism", criterion_determinism()),
    ];
    let mut failed = 0;
    for (k, (name, r)) in results.iter().enumerate() {
        println!("{} {}. {name}: {}", if r.pass { "PASS" } else { "FAIL" }, k + 1, r.detail);
        failed += usize::from(!r.pass);
    }
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
