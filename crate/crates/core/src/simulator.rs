//! Closed-loop replay of a merge.
//!
//! Targets follow their prediction model exactly and never react to the
//! ego. While adjusting, the ego holds the acceleration chosen by the
//! opportunity search, refreshed every `replan_period`. Once merging, it
//! follows the planned (and smoothed) trajectory perfectly, then keeps its
//! terminal velocity.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::frenet::{Point2, ReferenceLine};
use crate::io::{fmt_g6, IoError};
use crate::opportunity::{best_candidate, classify, decide, MergeScenario, Phase};
use crate::planner::{self, LateralSpec, LongitudinalMode, LongitudinalSpec, PlanSummary};
use crate::poly::Polynomial;
use crate::prediction::{predict_ego, EgoMotion, Kinematics, TargetMotion};
use crate::smoother::{self, SmoothReport};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EgoState {
    pub s: f64,
    pub d: f64,
    pub v_lon: f64,
    pub v_lat: f64,
    pub a_lon: f64,
    pub a_lat: f64,
}

/// The gap chosen at merge time, expressed from the trigger instant in
/// the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Gap {
    t0: f64,
    origin: f64,
    rear: TargetMotion,
    front: TargetMotion,
}

impl Gap {
    fn at(&self, t: f64) -> (Kinematics, Kinematics) {
        let shift = |m: &TargetMotion| {
            let k = m.predict(t - self.t0);
            Kinematics { s: k.s + self.origin, ..k }
        };
        (shift(&self.rear), shift(&self.front))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivePlan {
    pub start: f64,
    pub te: f64,
    pub mode: LongitudinalMode,
    pub v_set: f64,
    pub lateral: Polynomial,
    pub longitudinal: Polynomial,
    /// World-frame trajectory, time measured from `start`.
    pub trajectory: Trajectory,
    gap: Gap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub t: f64,
    pub ego: EgoState,
    /// Motions from t = 0 in the world frame.
    pub targets: Vec<TargetMotion>,
    pub phase: Phase,
    pub command: f64,
    pub plan: Option<ActivePlan>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            t: 0.0,
            ego: EgoState { s: cfg.ego.s, d: cfg.ego_d(), v_lon: cfg.ego.v, a_lon: cfg.ego.a, ..Default::default() },
            targets: cfg.targets.iter().map(|t| t.motion().shifted(-cfg.ego.s)).collect(),
            phase: Phase::Adjusting,
            command: cfg.ego.a,
            plan: None,
        }
    }

    /// Targets as seen from the ego right now.
    pub fn relative_targets(&self) -> Vec<TargetMotion> {
        self.targets.iter().map(|m| m.advanced(self.t).shifted(self.ego.s)).collect()
    }

    pub fn plan_finished(&self) -> bool {
        self.plan.as_ref().is_some_and(|p| self.t - p.start >= p.te - 1e-9)
    }
}

/// Ego state `tau` seconds into a plan.
fn tracked_state(plan: &ActivePlan, tau: f64) -> EgoState {
    let derivative = |p: &Polynomial, t: f64, order| p.eval(t, order).unwrap_or(0.0);
    if tau <= plan.te {
        let p = plan.trajectory.sample(tau);
        EgoState {
            s: p.x,
            d: p.y,
            v_lon: derivative(&plan.longitudinal, tau, 1),
            v_lat: derivative(&plan.lateral, tau, 1),
            a_lon: derivative(&plan.longitudinal, tau, 2),
            a_lat: derivative(&plan.lateral, tau, 2),
        }
    } else {
        let end = plan.trajectory.sample(plan.te);
        let v = derivative(&plan.longitudinal, plan.te, 1);
        EgoState { s: end.x + v * (tau - plan.te), d: end.y, v_lon: v, ..Default::default() }
    }
}

/// Advances the world by `dt`.
pub fn step(world: &World, dt: f64) -> World {
    let mut next = world.clone();
    next.t = world.t + dt;
    match &world.plan {
        Some(plan) => next.ego = tracked_state(plan, next.t - plan.start),
        None => {
            let k = predict_ego(&EgoMotion::new(world.ego.v_lon, world.command), dt);
            next.ego.s = world.ego.s + k.s;
            next.ego.v_lon = k.v;
            next.ego.a_lon = if k.v > 0.0 { world.command } else { 0.0 };
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub phase: u8,
    pub ego: EgoState,
    pub command: f64,
    /// Rear and front gap vehicles relative to the ego.
    pub gap_rear: f64,
    pub gap_front: f64,
    pub p_dist: f64,
    /// Every target's (s, v) in the world frame.
    pub targets: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    MergeTriggered { ttc_rear: f64, ttc_front: f64, p_dist: f64 },
    PlanFailed { reason: String },
    SmoothFailed { reason: String },
    PlanCompleted,
    Settled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimSummary {
    pub steps: usize,
    pub merge_time: Option<f64>,
    pub plan: Option<PlanSummary>,
    pub smooth: Option<SmoothReport>,
    pub settled_at: Option<f64>,
    pub final_p_dist: f64,
    /// Final ego speed minus the speed it should match.
    pub final_speed_error: f64,
    pub peak_v_lat: f64,
    pub peak_a_lat: f64,
    pub peak_a_lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub records: Vec<Record>,
    pub events: Vec<Event>,
    pub summary: SimSummary,
}

fn gap_view(world: &World, cfg: &ScenarioConfig) -> (f64, f64, f64, f64) {
    let (rear, front, target_speed) = match &world.plan {
        Some(plan) => {
            let (r, f) = plan.gap.at(world.t);
            let speed = match plan.mode {
                LongitudinalMode::Distance => 0.5 * (r.v + f.v),
                LongitudinalMode::Velocity => plan.v_set,
            };
            (r.s - world.ego.s, f.s - world.ego.s, speed)
        }
        None => {
            let g = classify(world.ego.v_lon, &world.relative_targets(), &cfg.opportunity);
            (g.rear.s0, g.front.s0, 0.5 * (g.rear.v0 + g.front.v0))
        }
    };
    let span = front - rear;
    let p = if span.abs() > 1e-9 { -rear / span } else { f64::NAN };
    (rear, front, p, target_speed)
}

fn record(world: &World, cfg: &ScenarioConfig) -> Record {
    let (gap_rear, gap_front, p_dist, _) = gap_view(world, cfg);
    Record {
        t: world.t,
        phase: u8::from(world.phase == Phase::Merging),
        ego: world.ego,
        command: world.command,
        gap_rear,
        gap_front,
        p_dist,
        targets: world
            .targets
            .iter()
            .map(|m| {
                let k = m.predict(world.t);
                (k.s, k.v)
            })
            .collect(),
    }
}

/// Plans from the current state towards `gap`.
fn start_plan(
    world: &World,
    gap: &MergeScenario,
    cfg: &ScenarioConfig,
    events: &mut Vec<Event>,
) -> Result<(ActivePlan, PlanSummary, Option<SmoothReport>), String> {
    let pc = &cfg.planner;
    let target = planner::longitudinal_target(gap, cfg.v_set(), pc);
    let mode = target.mode();
    let lat = LateralSpec::from_config(pc, world.ego.d, world.ego.v_lat, world.ego.a_lat, cfg.lane.lane_width);
    let lon = LongitudinalSpec::from_config(pc, 0.0, world.ego.v_lon, world.ego.a_lon, target);
    let reference =
        ReferenceLine::new(Point2::new(world.ego.s, 0.0), 0.0, cfg.lane.lane_width).map_err(|e| e.to_string())?;
    let result = planner::plan(&lat, &lon, &reference, pc).map_err(|e| e.to_string())?;
    let summary = result.summary();
    let (trajectory, report) = if cfg.sim.smooth {
        match smoother::smooth(&result.trajectory, &reference, &cfg.smoother) {
            Ok((t, r)) => (t, Some(r)),
            Err(e) => {
                events.push(Event { t: world.t, kind: EventKind::SmoothFailed { reason: e.to_string() } });
                (result.trajectory.clone(), None)
            }
        }
    } else {
        (result.trajectory.clone(), None)
    };
    let plan = ActivePlan {
        start: world.t,
        te: result.te,
        mode,
        v_set: cfg.v_set(),
        lateral: result.lateral,
        longitudinal: result.longitudinal,
        trajectory,
        gap: Gap { t0: world.t, origin: world.ego.s, rear: gap.rear, front: gap.front },
    };
    Ok((plan, summary, report))
}

pub fn run(cfg: &ScenarioConfig) -> SimLog {
    let dt = cfg.sim.dt;
    let steps = (cfg.sim.duration / dt).round() as usize;
    let replan_every = ((cfg.sim.replan_period / dt).round() as usize).max(1);
    let mut world = World::new(cfg);
    let mut records = Vec::with_capacity(steps + 1);
    let mut events = Vec::new();
    let mut summary = SimSummary::default();
    let mut settle_since: Option<f64> = None;
    let mut completed = false;

    for k in 0..=steps {
        world.t = k as f64 * dt;
        if world.phase == Phase::Adjusting && k % replan_every == 0 {
            let gap = classify(world.ego.v_lon, &world.relative_targets(), &cfg.opportunity);
            let decision = decide(world.ego.v_lon, &gap, &cfg.opportunity);
            if decision.phase == Phase::Merging {
                match start_plan(&world, &gap, cfg, &mut events) {
                    Ok((plan, plan_summary, report)) => {
                        let b = decision.breakdown;
                        events.push(Event {
                            t: world.t,
                            kind: EventKind::MergeTriggered { ttc_rear: b.ttc_rear, ttc_front: b.ttc_front, p_dist: b.p_dist },
                        });
                        world.phase = Phase::Merging;
                        world.command = 0.0;
                        world.plan = Some(plan);
                        summary.merge_time = Some(world.t);
                        summary.plan = Some(plan_summary);
                        summary.smooth = report;
                    }
                    Err(reason) => {
                        events.push(Event { t: world.t, kind: EventKind::PlanFailed { reason } });
                        let (c, _) = best_candidate(&cfg.opportunity.candidates(), world.ego.v_lon, &gap, &cfg.opportunity);
                        world.command = c.a0;
                    }
                }
            } else {
                world.command = decision.command_a0;
            }
        }
        let rec = record(&world, cfg);
        summary.peak_v_lat = summary.peak_v_lat.max(rec.ego.v_lat.abs());
        summary.peak_a_lat = summary.peak_a_lat.max(rec.ego.a_lat.abs());
        summary.peak_a_lon = summary.peak_a_lon.max(rec.ego.a_lon.abs());
        records.push(rec);

        if world.plan_finished() {
            if !completed {
                completed = true;
                events.push(Event { t: world.t, kind: EventKind::PlanCompleted });
            }
            let (_, _, p, speed) = gap_view(&world, cfg);
            let plan = world.plan.as_ref().expect("finished plan exists");
            let placed = plan.mode == LongitudinalMode::Velocity || (p >= cfg.sim.settle_p[0] && p <= cfg.sim.settle_p[1]);
            if placed && (world.ego.v_lon - speed).abs() <= cfg.sim.settle_speed {
                let since = *settle_since.get_or_insert(world.t);
                if world.t - since >= cfg.sim.settle_time - 1e-9 {
                    summary.settled_at = Some(world.t);
                    events.push(Event { t: world.t, kind: EventKind::Settled });
                    break;
                }
            } else {
                settle_since = None;
            }
        }
        if k < steps {
            let t = world.t;
            world = step(&world, dt);
            world.t = t + dt;
        }
    }
    let (_, _, p, speed) = gap_view(&world, cfg);
    summary.steps = records.len();
    summary.final_p_dist = p;
    summary.final_speed_error = world.ego.v_lon - speed;
    SimLog { records, events, summary }
}

impl SimLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), IoError> {
        let mut w = csv::Writer::from_writer(out);
        let targets = self.records.first().map_or(0, |r| r.targets.len());
        let mut header: Vec<String> = [
            "t", "phase", "ego_s", "ego_d", "v_lon", "v_lat", "a_lon", "a_lat", "command", "gap_rear", "gap_front",
            "p_dist",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for i in 0..targets {
            header.push(format!("target{i}_s"));
            header.push(format!("target{i}_v"));
        }
        w.write_record(&header)?;
        for r in &self.records {
            let e = r.ego;
            let mut row = vec![fmt_g6(r.t), r.phase.to_string()];
            for v in [e.s, e.d, e.v_lon, e.v_lat, e.a_lon, e.a_lat, r.command, r.gap_rear, r.gap_front, r.p_dist] {
                row.push(fmt_g6(v));
            }
            for &(s, v) in &r.targets {
                row.push(fmt_g6(s));
                row.push(fmt_g6(v));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
