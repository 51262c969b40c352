//! Adaptive integration of scalar ODEs `y' = F(t, y)`.
//!
//! Non-stiff steps use the Dormand-Prince 5(4) embedded pair. When the local
//! stiffness `J * h` (with `J = dF/dy`) drops below `-stiff_threshold`, the
//! step is taken with TR-BDF2 instead, an L-stable two-stage implicit scheme
//! with a filtered third-order error estimate. Both branches share the same
//! mixed absolute/relative error control.

use thiserror::Error;

pub trait ScalarOde {
    fn rhs(&self, t: f64, y: f64) -> f64;
    /// Partial derivative of the right-hand side with respect to `y`.
    fn jacobian(&self, t: f64, y: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub atol: f64,
    pub rtol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    pub stiff_threshold: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            atol: 1e-10,
            rtol: 1e-8,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max: f64::INFINITY,
            max_steps: 2_000_000,
            stiff_threshold: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow (h = {h:e}) at t = {t}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps exceeded at t = {t}")]
    TooManySteps { t: f64 },
    #[error("non-finite initial state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub stiff_steps: usize,
}

/// Accepted points of an integration, starting with the initial state.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub dydt: Vec<f64>,
    pub stats: Stats,
    /// True when the observer requested an early stop.
    pub stopped: bool,
}

struct Attempt {
    y: f64,
    dydt: f64,
    err: f64,
    order: f64,
}

/// Integrate from `(t0, y0)` towards `t_end`, in either direction.
///
/// `observe` is called after every accepted step and may stop the run.
pub fn integrate<O, E>(
    ode: &O,
    t0: f64,
    y0: f64,
    t_end: f64,
    ctl: &StepControl,
    mut observe: E,
) -> Result<Trajectory, OdeError>
where
    O: ScalarOde + ?Sized,
    E: FnMut(f64, f64) -> Control,
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let f0 = ode.rhs(t0, y0);
    if !y0.is_finite() || !f0.is_finite() {
        return Err(OdeError::NonFinite { t: t0 });
    }
    let mut traj = Trajectory {
        t: vec![t0],
        y: vec![y0],
        dydt: vec![f0],
        ..Default::default()
    };
    let mut t = t0;
    let mut y = y0;
    let mut dydt = f0;
    let mut h = ctl.h_init.abs().min(ctl.h_max).max(ctl.h_min);
    let mut last_rejected = false;

    while (t_end - t) * dir > 0.0 {
        if traj.stats.accepted + traj.stats.rejected >= ctl.max_steps {
            return Err(OdeError::TooManySteps { t });
        }
        let remaining = (t_end - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        } else if h < ctl.h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let signed = dir * h;
        let stiff = ode.jacobian(t, y) * signed < -ctl.stiff_threshold;
        let attempt = if stiff {
            tr_bdf2(ode, t, y, dydt, signed)
        } else {
            Some(dopri5(ode, t, y, dydt, signed))
        };
        let accepted = attempt.as_ref().and_then(|a| {
            let scale = ctl.atol + ctl.rtol * y.abs().max(a.y.abs());
            let norm = a.err / scale;
            (norm.is_finite() && a.y.is_finite() && a.dydt.is_finite()).then_some(norm)
        });
        match (attempt, accepted) {
            (Some(a), Some(norm)) if norm <= 1.0 => {
                t = if last { t_end } else { t + signed };
                y = a.y;
                dydt = a.dydt;
                traj.t.push(t);
                traj.y.push(y);
                traj.dydt.push(dydt);
                traj.stats.accepted += 1;
                if stiff {
                    traj.stats.stiff_steps += 1;
                }
                let mut factor = if norm == 0.0 {
                    5.0
                } else {
                    (0.9 * norm.powf(-1.0 / (a.order + 1.0))).clamp(0.2, 5.0)
                };
                if last_rejected {
                    factor = factor.min(1.0);
                }
                last_rejected = false;
                h = (h * factor).min(ctl.h_max);
                if observe(t, y) == Control::Stop {
                    traj.stopped = true;
                    break;
                }
            }
            (Some(a), Some(norm)) => {
                traj.stats.rejected += 1;
                last_rejected = true;
                h *= (0.9 * norm.powf(-1.0 / (a.order + 1.0))).clamp(0.1, 0.9);
            }
            _ => {
                traj.stats.rejected += 1;
                last_rejected = true;
                h *= 0.25;
            }
        }
    }
    Ok(traj)
}

fn dopri5<O: ScalarOde + ?Sized>(ode: &O, t: f64, y: f64, k1: f64, h: f64) -> Attempt {
    let k2 = ode.rhs(t + h / 5.0, y + h * (k1 / 5.0));
    let k3 = ode.rhs(t + 0.3 * h, y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
    let k4 = ode.rhs(
        t + 0.8 * h,
        y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3),
    );
    let k5 = ode.rhs(
        t + 8.0 / 9.0 * h,
        y + h
            * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
                - 212.0 / 729.0 * k4),
    );
    let k6 = ode.rhs(
        t + h,
        y + h
            * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2
                + 46732.0 / 5247.0 * k3
                + 49.0 / 176.0 * k4
                - 5103.0 / 18656.0 * k5),
    );
    let y_new = y + h
        * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5
            + 11.0 / 84.0 * k6);
    let k7 = ode.rhs(t + h, y_new);
    let err = h
        * (71.0 / 57600.0 * k1 - 71.0 / 16695.0 * k3 + 71.0 / 1920.0 * k4
            - 17253.0 / 339200.0 * k5
            + 22.0 / 525.0 * k6
            - 1.0 / 40.0 * k7);
    Attempt {
        y: y_new,
        dydt: k7,
        err: err.abs(),
        order: 4.0,
    }
}

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const D: f64 = GAMMA / 2.0;
/// Local truncation error constant of TR-BDF2.
const LTE: f64 = (-3.0 * GAMMA * GAMMA + 4.0 * GAMMA - 2.0) / (12.0 * (2.0 - GAMMA));

fn tr_bdf2<O: ScalarOde + ?Sized>(ode: &O, t: f64, y: f64, f_n: f64, h: f64) -> Option<Attempt> {
    let t_g = t + GAMMA * h;
    let y_g = solve_stage(ode, t_g, D * h, y + D * h * f_n, y + GAMMA * h * f_n)?;
    let f_g = ode.rhs(t_g, y_g);
    let w = 1.0 / (GAMMA * (2.0 - GAMMA));
    let rhs = w * y_g - (1.0 - GAMMA) * (1.0 - GAMMA) * w * y;
    let guess = y_g + (1.0 - GAMMA) * h * f_g;
    let y_new = solve_stage(ode, t + h, D * h, rhs, guess)?;
    let f_new = ode.rhs(t + h, y_new);
    let raw = 2.0 * LTE * h * (f_n / GAMMA - f_g / (GAMMA * (1.0 - GAMMA)) + f_new / (1.0 - GAMMA));
    let filter = 1.0 - D * h * ode.jacobian(t + h, y_new);
    Some(Attempt {
        y: y_new,
        dydt: f_new,
        err: (raw / filter).abs(),
        order: 2.0,
    })
}

/// Solve `Y - alpha * F(t, Y) = b` by Newton iteration.
fn solve_stage<O: ScalarOde + ?Sized>(ode: &O, t: f64, alpha: f64, b: f64, guess: f64) -> Option<f64> {
    let mut y = if guess.is_finite() { guess } else { b };
    for _ in 0..50 {
        let g = y - alpha * ode.rhs(t, y) - b;
        let dg = 1.0 - alpha * ode.jacobian(t, y);
        if !(g.is_finite() && dg.is_finite()) || dg <= 0.0 {
            return None;
        }
        let delta = g / dg;
        y -= delta;
        if delta.abs() <= 1e-14 * (1.0 + y.abs()) {
            return Some(y);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay(f64);

    impl ScalarOde for Decay {
        fn rhs(&self, _t: f64, y: f64) -> f64 {
            -self.0 * y
        }
        fn jacobian(&self, _t: f64, _y: f64) -> f64 {
            -self.0
        }
    }

    /// y' = -k (y - cos t), slaved to cos t for large k.
    struct Slaved(f64);

    impl ScalarOde for Slaved {
        fn rhs(&self, t: f64, y: f64) -> f64 {
            -self.0 * (y - t.cos())
        }
        fn jacobian(&self, _t: f64, _y: f64) -> f64 {
            -self.0
        }
    }

    #[test]
    fn nonstiff_decay_is_accurate_both_directions() {
        let ctl = StepControl::default();
        let fwd = integrate(&Decay(1.0), 0.0, 1.0, 2.0, &ctl, |_, _| Control::Continue).unwrap();
        assert!((fwd.y.last().unwrap() - (-2.0f64).exp()).abs() < 1e-9);
        assert_eq!(fwd.stats.stiff_steps, 0);
        let back = integrate(&Decay(-1.0), 2.0, 1.0, 0.0, &ctl, |_, _| Control::Continue).unwrap();
        assert!((back.y.last().unwrap() - (-2.0f64).exp()).abs() < 1e-9);
        assert_eq!(*back.t.last().unwrap(), 0.0);
    }

    #[test]
    fn stiff_problem_switches_to_implicit_steps() {
        let k = 1e7;
        let ctl = StepControl {
            atol: 1e-9,
            rtol: 1e-7,
            ..Default::default()
        };
        let y0 = 1.0 - 1.0 / k;
        let traj = integrate(&Slaved(k), 0.0, y0, 3.0, &ctl, |_, _| Control::Continue).unwrap();
        assert!(traj.stats.stiff_steps > 0);
        assert!(traj.stats.accepted < 20_000, "{:?}", traj.stats);
        // slow manifold y = cos t + sin t / k + O(1/k^2)
        let t_end = 3.0f64;
        let expected = t_end.cos() + t_end.sin() / k;
        assert!((traj.y.last().unwrap() - expected).abs() < 1e-6);
    }

    #[test]
    fn observer_can_stop_early() {
        let traj = integrate(
            &Decay(1.0),
            0.0,
            1.0,
            10.0,
            &StepControl::default(),
            |_, y| if y < 0.5 { Control::Stop } else { Control::Continue },
        )
        .unwrap();
        assert!(traj.stopped);
        assert!(*traj.t.last().unwrap() < 10.0);
    }

    #[test]
    fn unreachable_tolerance_underflows() {
        let ctl = StepControl {
            atol: 1e-300,
            rtol: 1e-300,
            ..Default::default()
        };
        let res = integrate(&Decay(1.0), 0.0, 1.0, 1.0, &ctl, |_, _| Control::Continue);
        assert!(matches!(res, Err(OdeError::StepUnderflow { .. })));
    }
}
