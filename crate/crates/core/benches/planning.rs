use criterion::{black_box, criterion_group, criterion_main, Criterion};
use mergeplan::config::ScenarioConfig;
use mergeplan::opportunity::{classify, decide};
use mergeplan::planner::{self, LateralSpec, LongitudinalSpec};
use mergeplan::prediction::TargetMotion;
use mergeplan::smoother::{self, SmootherConfig};
use mergeplan::{Point2, ReferenceLine};

fn scenario() -> (ScenarioConfig, Vec<TargetMotion>) {
    let cfg = ScenarioConfig::minimal(8.333, Vec::new());
    let targets = vec![TargetMotion::uniform(-30.0, 8.333), TargetMotion::uniform(-10.0, 8.333)];
    (cfg, targets)
}

fn planning_cycle(c: &mut Criterion) {
    let (cfg, targets) = scenario();
    let pc = &cfg.planner;
    let reference = ReferenceLine::new(Point2::new(0.0, 0.0), 0.0, cfg.lane.lane_width).unwrap();
    let gap = classify(cfg.ego.v, &targets, &cfg.opportunity);
    let lat = LateralSpec::from_config(pc, cfg.ego_d(), 0.0, 0.0, cfg.lane.lane_width);
    let lon = LongitudinalSpec::from_config(pc, 0.0, cfg.ego.v, 0.0, planner::longitudinal_target(&gap, cfg.v_set(), pc));

    c.bench_function("opportunity grid", |b| {
        b.iter(|| {
            let gap = classify(cfg.ego.v, black_box(&targets), &cfg.opportunity);
            decide(cfg.ego.v, &gap, &cfg.opportunity)
        })
    });
    c.bench_function("te sweep", |b| b.iter(|| planner::plan(black_box(&lat), &lon, &reference, pc).unwrap()));
    c.bench_function("planning cycle", |b| {
        b.iter(|| {
            let gap = classify(cfg.ego.v, black_box(&targets), &cfg.opportunity);
            black_box(decide(cfg.ego.v, &gap, &cfg.opportunity));
            let lon = LongitudinalSpec::from_config(pc, 0.0, cfg.ego.v, 0.0, planner::longitudinal_target(&gap, cfg.v_set(), pc));
            planner::plan(&lat, &lon, &reference, pc).unwrap()
        })
    });
}

fn smoothing(c: &mut Criterion) {
    let polyline: Vec<Point2> = (0..130)
        .map(|k| {
            let x = k as f64 - 32.0;
            let u = (x / 65.0).clamp(0.0, 1.0);
            Point2::new(x, 3.5 * u.powi(3) * (10.0 - 15.0 * u + 6.0 * u * u))
        })
        .collect();
    let cfg = SmootherConfig::default();
    c.bench_function("smooth 130 points", |b| b.iter(|| smoother::smooth_polyline(black_box(&polyline), &cfg).unwrap()));
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(100);
    targets = planning_cycle, smoothing
}
criterion_main!(benches);
