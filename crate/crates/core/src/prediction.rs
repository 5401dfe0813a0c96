//! Motion prediction for the ego (constant acceleration) and for vehicles in
//! the destination lane (exponentially decaying acceleration).
//!
//! Speeds never go negative: once a braking vehicle reaches standstill it
//! stays there.

use serde::{Deserialize, Serialize};

/// Decay time constant used when none is measured.
pub const DEFAULT_DECAY: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoMotion {
    pub v0: f64,
    pub a0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetMotion {
    /// Longitudinal offset from the ego at t = 0, signed.
    pub s0: f64,
    pub v0: f64,
    /// Acceleration at t = 0; decays as `exp(-t / decay)`.
    pub a0: f64,
    pub decay: f64,
}

/// Position, speed and acceleration at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Kinematics {
    pub s: f64,
    pub v: f64,
    pub a: f64,
}

impl EgoMotion {
    pub fn new(v0: f64, a0: f64) -> Self {
        Self { v0, a0 }
    }
}

impl TargetMotion {
    pub fn uniform(s0: f64, v0: f64) -> Self {
        Self { s0, v0, a0: 0.0, decay: DEFAULT_DECAY }
    }

    /// Same vehicle seen from a frame whose origin is displaced by `ds`.
    pub fn shifted(self, ds: f64) -> Self {
        Self { s0: self.s0 - ds, ..self }
    }

    /// Prediction re-based at time `t`: the returned motion starts from the
    /// state at `t`, so `m.advanced(t).predict(u) == m.predict(t + u)`.
    pub fn advanced(self, t: f64) -> Self {
        let k = predict_target(&self, t);
        Self { s0: k.s, v0: k.v, a0: k.a, decay: self.decay }
    }

    pub fn predict(&self, t: f64) -> Kinematics {
        predict_target(self, t)
    }
}

pub fn predict_ego(m: &EgoMotion, t: f64) -> Kinematics {
    let t = t.max(0.0);
    if m.a0 < 0.0 {
        let t_stop = -m.v0 / m.a0;
        if t >= t_stop {
            return Kinematics { s: m.v0 * t_stop + 0.5 * m.a0 * t_stop * t_stop, v: 0.0, a: 0.0 };
        }
    }
    Kinematics { s: m.v0 * t + 0.5 * m.a0 * t * t, v: m.v0 + m.a0 * t, a: m.a0 }
}

pub fn predict_target(m: &TargetMotion, t: f64) -> Kinematics {
    let t = t.max(0.0);
    let tau = m.decay;
    let unclamped = |t: f64| {
        let decay = (-t / tau).exp();
        let rise = tau * (-(-t / tau).exp_m1());
        Kinematics {
            s: m.s0 + m.v0 * t + m.a0 * tau * t - m.a0 * tau * rise,
            v: m.v0 + m.a0 * rise,
            a: m.a0 * decay,
        }
    };
    // The speed can only hit zero if the asymptotic speed v0 + a0·τ is
    // negative.
    if m.a0 < 0.0 && m.v0 + m.a0 * tau < 0.0 {
        let t_stop = -tau * (1.0 + m.v0 / (m.a0 * tau)).ln();
        if t >= t_stop {
            let k = unclamped(t_stop);
            return Kinematics { s: k.s, v: 0.0, a: 0.0 };
        }
    }
    unclamped(t)
}

/// Mean of two predicted vehicles: the point the ego aims for inside the gap.
pub fn gap_midpoint(a: &TargetMotion, b: &TargetMotion, t: f64) -> Kinematics {
    let ka = predict_target(a, t);
    let kb = predict_target(b, t);
    Kinematics {
        s: 0.5 * ka.s + 0.5 * kb.s,
        v: 0.5 * ka.v + 0.5 * kb.v,
        a: 0.5 * ka.a + 0.5 * kb.a,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Midpoint-rule integration of an acceleration profile, with the speed
    /// floored at zero. Independent of the closed forms above.
    fn integrate(v0: f64, accel: impl Fn(f64) -> f64, t_end: f64) -> (f64, f64) {
        let n = 200_000;
        let h = t_end / n as f64;
        let (mut s, mut v) = (0.0, v0);
        for i in 0..n {
            let tm = (i as f64 + 0.5) * h;
            let v_next = (v + accel(tm) * h).max(0.0);
            s += 0.5 * (v + v_next) * h;
            v = v_next;
        }
        (s, v)
    }

    #[test]
    fn ego_uniform() {
        let k = predict_ego(&EgoMotion::new(8.333, 0.0), 12.0);
        assert!((k.s - 99.996).abs() < 1e-9);
        assert_eq!(k.v, 8.333);
    }

    #[test]
    fn ego_constant_acceleration() {
        let k = predict_ego(&EgoMotion::new(10.0, 1.0), 2.0);
        assert_eq!((k.s, k.v), (22.0, 12.0));
    }

    #[test]
    fn ego_braking_stops() {
        let k = predict_ego(&EgoMotion::new(2.0, -1.0), 4.0);
        let (s, v) = integrate(2.0, |_| -1.0, 4.0);
        assert!((k.s - 2.0).abs() < 1e-12);
        assert_eq!(k.v, 0.0);
        assert!((s - k.s).abs() < 1e-4 && v == 0.0);
    }

    #[test]
    fn target_uniform_motion() {
        let m = TargetMotion::uniform(5.0, 7.0);
        for t in [0.0, 1.0, 3.3, 10.0] {
            assert!((predict_target(&m, t).s - (5.0 + 7.0 * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn target_decaying_acceleration_matches_quadrature() {
        let m = TargetMotion { s0: 0.0, v0: 3.0, a0: 1.0, decay: 2.0 };
        let k = predict_target(&m, 2.0);
        let (s, v) = integrate(3.0, |t| (-t / 2.0).exp(), 2.0);
        assert!((k.v - 3.0 - 2.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((k.v - 3.0 - 1.2642).abs() < 1e-4);
        assert!((k.v - v).abs() < 1e-8 && (k.s - s).abs() < 1e-6);
    }

    #[test]
    fn target_speed_asymptote() {
        let m = TargetMotion { s0: 0.0, v0: 3.0, a0: 1.0, decay: 2.0 };
        let (_, v) = integrate(3.0, |t| (-t / 2.0).exp(), 60.0);
        let k = predict_target(&m, 60.0);
        assert!((k.v - 5.0).abs() < 1e-9 && (v - 5.0).abs() < 1e-8);
    }

    #[test]
    fn target_braking_to_standstill() {
        let m = TargetMotion { s0: 0.0, v0: 2.0, a0: -3.0, decay: 2.0 };
        let k = predict_target(&m, 10.0);
        let (s, v) = integrate(2.0, |t| -3.0 * (-t / 2.0).exp(), 10.0);
        assert_eq!(k.v, 0.0);
        assert_eq!(v, 0.0);
        assert!((k.s - s).abs() < 1e-4, "{} vs {s}", k.s);
    }

    #[test]
    fn midpoint_examples() {
        let a = TargetMotion::uniform(0.0, 10.0);
        let b = TargetMotion::uniform(30.0, 10.0);
        let m = gap_midpoint(&a, &b, 2.0);
        assert_eq!((m.s, m.v, m.a), (35.0, 10.0, 0.0));

        let a = TargetMotion::uniform(-30.0, 8.0);
        let b = TargetMotion::uniform(-10.0, 8.0);
        assert!((gap_midpoint(&a, &b, 3.0).s - (-20.0 + 24.0)).abs() < 1e-12);

        let a = TargetMotion { s0: 0.0, v0: 5.0, a0: 1.0, decay: 2.0 };
        let b = TargetMotion::uniform(20.0, 5.0);
        let m = gap_midpoint(&a, &b, 2.0);
        let (ka, kb) = (predict_target(&a, 2.0), predict_target(&b, 2.0));
        assert_eq!(m.s, 0.5 * ka.s + 0.5 * kb.s);
        assert_eq!(m.v, 0.5 * ka.v + 0.5 * kb.v);
        assert_eq!(m.a, 0.5 * ka.a + 0.5 * kb.a);
    }

    #[test]
    fn advanced_rebases_prediction() {
        let m = TargetMotion { s0: 4.0, v0: 6.0, a0: 0.8, decay: 1.5 };
        let later = m.advanced(2.5);
        for u in [0.0, 0.7, 4.0] {
            let (p, q) = (later.predict(u), m.predict(2.5 + u));
            assert!((p.s - q.s).abs() < 1e-9 && (p.v - q.v).abs() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn zero_acceleration_models_agree(v0 in 0.0f64..40.0, t in 0.0f64..30.0) {
            let e = predict_ego(&EgoMotion::new(v0, 0.0), t);
            let g = predict_target(&TargetMotion::uniform(0.0, v0), t);
            proptest::prop_assert!((e.s - g.s).abs() < 1e-9 && (e.v - g.v).abs() < 1e-12);
        }

        #[test]
        fn derivatives_consistent(
            v0 in 1.0f64..40.0, a0 in -2.0f64..2.0, tau in 0.5f64..5.0, t in 0.5f64..20.0,
        ) {
            let m = TargetMotion { s0: 0.0, v0, a0, decay: tau };
            let h = 1e-4;
            let (lo, mid, hi) = (predict_target(&m, t - h), predict_target(&m, t), predict_target(&m, t + h));
            // Skip the kink at standstill.
            proptest::prop_assume!(lo.v > 0.0);
            let dv = (hi.s - lo.s) / (2.0 * h);
            let da = (hi.v - lo.v) / (2.0 * h);
            proptest::prop_assert!((dv - mid.v).abs() <= 1e-6 * mid.v.abs().max(1.0));
            proptest::prop_assert!((da - mid.a).abs() <= 1e-6 * mid.a.abs().max(1.0));

            let e = EgoMotion::new(v0, a0);
            let (lo, mid, hi) = (predict_ego(&e, t - h), predict_ego(&e, t), predict_ego(&e, t + h));
            proptest::prop_assume!(lo.v > 0.0 && hi.v > 0.0);
            let dv = (hi.s - lo.s) / (2.0 * h);
            proptest::prop_assert!((dv - mid.v).abs() <= 1e-6 * mid.v.abs().max(1.0));
        }

        #[test]
        fn midpoint_symmetric(
            s1 in -50.0f64..50.0, s2 in -50.0f64..50.0, v1 in 0.0f64..30.0, v2 in 0.0f64..30.0,
            a1 in -1.0f64..1.0, t in 0.0f64..10.0,
        ) {
            let a = TargetMotion { s0: s1, v0: v1, a0: a1, decay: 2.0 };
            let b = TargetMotion::uniform(s2, v2);
            proptest::prop_assert_eq!(gap_midpoint(&a, &b, t), gap_midpoint(&b, &a, t));
        }
    }
}
