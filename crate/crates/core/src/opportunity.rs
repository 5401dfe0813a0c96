//! Merge-opportunity search.
//!
//! Candidate manoeuvres (constant ego acceleration held for an adjustment
//! time) are scored against the predicted gap. The ego starts the lane
//! change once its current state is already safe and well placed.
//!
//! Positions are offsets from the ego at the time of the decision.

use serde::{Deserialize, Serialize};

use crate::prediction::{predict_ego, predict_target, EgoMotion, Kinematics, TargetMotion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeKind {
    /// The gap is ahead of the ego.
    MergeBehind,
    MergeBetween,
    /// The gap is behind the ego.
    MergeAhead,
}

/// The gap the ego aims for, bounded by a rear and a front vehicle. When
/// fewer than two real vehicles exist the missing ones are synthesised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeScenario {
    pub kind: MergeKind,
    pub rear: TargetMotion,
    pub front: TargetMotion,
    pub rear_virtual: bool,
    pub front_virtual: bool,
}

impl MergeScenario {
    pub fn real_targets(&self) -> usize {
        usize::from(!self.rear_virtual) + usize::from(!self.front_virtual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub w_dist: f64,
    pub w_ttc: f64,
    pub w_time: f64,
    pub w_acc: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { w_dist: 1.0, w_ttc: 1.0, w_time: 0.2, w_acc: 0.5 }
    }
}

impl CostWeights {
    pub fn scaled(self, k: f64) -> Self {
        Self { w_dist: k * self.w_dist, w_ttc: k * self.w_ttc, w_time: k * self.w_time, w_acc: k * self.w_acc }
    }

    pub fn is_valid(&self) -> bool {
        let w = [self.w_dist, self.w_ttc, self.w_time, self.w_acc];
        w.iter().all(|v| v.is_finite() && *v >= 0.0) && w.iter().any(|v| *v > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpportunityConfig {
    pub weights: CostWeights,
    pub a_min: f64,
    pub a_max: f64,
    pub a_step: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    /// TTC at or above which a side costs nothing.
    pub ttc_safe: f64,
    pub p_window: [f64; 2],
    /// Virtual companions sit `headway·v_ego + margin` from the real
    /// vehicle.
    pub virtual_headway: f64,
    pub virtual_margin: f64,
}

impl Default for OpportunityConfig {
    fn default() -> Self {
        Self {
            weights: CostWeights::default(),
            a_min: -2.0,
            a_max: 2.0,
            a_step: 0.25,
            t_min: 1.0,
            t_max: 12.0,
            t_step: 0.5,
            ttc_safe: 3.0,
            p_window: [0.3, 0.7],
            virtual_headway: 3.0,
            virtual_margin: 20.0,
        }
    }
}

impl OpportunityConfig {
    fn axis(min: f64, max: f64, step: f64) -> Vec<f64> {
        let count = ((max - min) / step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| min + k as f64 * step).collect()
    }

    pub fn accelerations(&self) -> Vec<f64> {
        Self::axis(self.a_min, self.a_max, self.a_step)
    }

    pub fn adjust_times(&self) -> Vec<f64> {
        Self::axis(self.t_min, self.t_max, self.t_step)
    }

    pub fn candidates(&self) -> Vec<CandidateManeuver> {
        let times = self.adjust_times();
        self.accelerations()
            .into_iter()
            .flat_map(|a0| times.iter().map(move |&t_adjust| CandidateManeuver { a0, t_adjust }))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateManeuver {
    pub a0: f64,
    pub t_adjust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub c_dist: f64,
    pub c_ttc: f64,
    pub c_time: f64,
    pub c_acc: f64,
    pub total: f64,
    pub p_dist: f64,
    pub ttc_rear: f64,
    pub ttc_front: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Adjusting,
    Merging,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpportunityDecision {
    pub phase: Phase,
    pub command_a0: f64,
    pub chosen: CandidateManeuver,
    pub breakdown: CostBreakdown,
}

/// Picks the gap the ego is closest to entering.
pub fn classify(v_ego: f64, targets: &[TargetMotion], cfg: &OpportunityConfig) -> MergeScenario {
    let mut sorted = targets.to_vec();
    sorted.sort_by(|a, b| a.s0.total_cmp(&b.s0));
    let offset = cfg.virtual_headway * v_ego + cfg.virtual_margin;
    let companion = |real: &TargetMotion, ds: f64| TargetMotion {
        s0: real.s0 + ds,
        v0: real.v0,
        a0: 0.0,
        decay: real.decay,
    };
    let make = |kind, rear, front, rear_virtual, front_virtual| MergeScenario {
        kind,
        rear,
        front,
        rear_virtual,
        front_virtual,
    };
    match sorted.as_slice() {
        [] => {
            let open = TargetMotion::uniform(0.0, v_ego);
            make(MergeKind::MergeBetween, companion(&open, -offset), companion(&open, offset), true, true)
        }
        [only] if only.s0 > 0.0 => make(MergeKind::MergeBehind, companion(only, -offset), *only, true, false),
        [only] => make(MergeKind::MergeAhead, *only, companion(only, offset), false, true),
        _ => {
            let n = sorted.len();
            if sorted[0].s0 > 0.0 {
                make(MergeKind::MergeBehind, sorted[0], sorted[1], false, false)
            } else if sorted[n - 1].s0 <= 0.0 {
                make(MergeKind::MergeAhead, sorted[n - 2], sorted[n - 1], false, false)
            } else {
                let k = sorted.iter().position(|t| t.s0 > 0.0).expect("some target ahead");
                make(MergeKind::MergeBetween, sorted[k - 1], sorted[k], false, false)
            }
        }
    }
}

/// Time to collision for a follower `gap` metres behind a leader, closing
/// at `closing` m/s. Infinite when not closing, zero once overlapping.
pub fn time_to_collision(gap: f64, closing: f64) -> f64 {
    if gap <= 0.0 {
        0.0
    } else if closing <= 0.0 {
        f64::INFINITY
    } else {
        gap / closing
    }
}

/// Fractional position in the gap and the rear/front TTCs for given
/// states.
fn gap_metrics(ego: Kinematics, rear: Kinematics, front: Kinematics) -> (f64, f64, f64) {
    let span = front.s - rear.s;
    let p_dist = if span.abs() > 1e-9 { (ego.s - rear.s) / span } else { f64::INFINITY };
    let ttc_rear = time_to_collision(ego.s - rear.s, rear.v - ego.v);
    let ttc_front = time_to_collision(front.s - ego.s, ego.v - front.v);
    (p_dist, ttc_rear, ttc_front)
}

fn ttc_cost(ttc: f64, safe: f64) -> f64 {
    (1.0 - ttc / safe).clamp(0.0, 1.0)
}

fn distance_cost(p_dist: f64) -> f64 {
    if p_dist.is_finite() {
        (2.0 * (p_dist - 0.5).abs()).powi(2).min(1.0)
    } else {
        1.0
    }
}

/// Scores a candidate by the predicted situation at the end of the
/// adjustment.
pub fn score(
    c: &CandidateManeuver,
    v_ego: f64,
    scenario: &MergeScenario,
    w: &CostWeights,
    cfg: &OpportunityConfig,
) -> CostBreakdown {
    let t = c.t_adjust;
    let ego = predict_ego(&EgoMotion::new(v_ego, c.a0), t);
    let rear = predict_target(&scenario.rear, t);
    let front = predict_target(&scenario.front, t);
    let (p_dist, ttc_rear, ttc_front) = gap_metrics(ego, rear, front);
    let c_dist = distance_cost(p_dist);
    let c_ttc = 0.5 * (ttc_cost(ttc_rear, cfg.ttc_safe) + ttc_cost(ttc_front, cfg.ttc_safe));
    let c_time = (t / cfg.t_max).clamp(0.0, 1.0);
    let a_bound = cfg.a_min.abs().max(cfg.a_max.abs());
    let c_acc = if a_bound > 0.0 { (c.a0.abs() / a_bound).powi(2).min(1.0) } else { 0.0 };
    CostBreakdown {
        c_dist,
        c_ttc,
        c_time,
        c_acc,
        total: w.w_dist * c_dist + w.w_ttc * c_ttc + w.w_time * c_time + w.w_acc * c_acc,
        p_dist,
        ttc_rear,
        ttc_front,
    }
}

/// Whether the current state already permits merging.
pub fn merge_ready(v_ego: f64, scenario: &MergeScenario, cfg: &OpportunityConfig) -> bool {
    let ego = Kinematics { s: 0.0, v: v_ego, a: 0.0 };
    let (p, rear, front) = gap_metrics(ego, predict_target(&scenario.rear, 0.0), predict_target(&scenario.front, 0.0));
    rear >= cfg.ttc_safe && front >= cfg.ttc_safe && p >= cfg.p_window[0] && p <= cfg.p_window[1]
}

/// Ordering for equal totals: gentler, then shorter, then more negative.
fn tie_key(c: &CandidateManeuver) -> (f64, f64, f64) {
    (c.a0.abs(), c.t_adjust, c.a0)
}

fn better(a: (&CandidateManeuver, &CostBreakdown), b: (&CandidateManeuver, &CostBreakdown)) -> bool {
    match a.1.total.total_cmp(&b.1.total) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            let (ka, kb) = (tie_key(a.0), tie_key(b.0));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.total_cmp(&kb.2)).is_lt()
        }
    }
}

/// Minimum-cost candidate over a grid.
pub fn best_candidate(
    candidates: &[CandidateManeuver],
    v_ego: f64,
    scenario: &MergeScenario,
    cfg: &OpportunityConfig,
) -> (CandidateManeuver, CostBreakdown) {
    let mut best: Option<(CandidateManeuver, CostBreakdown)> = None;
    for c in candidates {
        let b = score(c, v_ego, scenario, &cfg.weights, cfg);
        if best.as_ref().is_none_or(|(bc, bb)| better((c, &b), (bc, bb))) {
            best = Some((*c, b));
        }
    }
    best.expect("non-empty candidate grid")
}

pub fn decide(v_ego: f64, scenario: &MergeScenario, cfg: &OpportunityConfig) -> OpportunityDecision {
    if merge_ready(v_ego, scenario, cfg) {
        let now = CandidateManeuver { a0: 0.0, t_adjust: 0.0 };
        return OpportunityDecision {
            phase: Phase::Merging,
            command_a0: 0.0,
            chosen: now,
            breakdown: score(&now, v_ego, scenario, &cfg.weights, cfg),
        };
    }
    let (chosen, breakdown) = best_candidate(&cfg.candidates(), v_ego, scenario, cfg);
    OpportunityDecision { phase: Phase::Adjusting, command_a0: chosen.a0, chosen, breakdown }
}
