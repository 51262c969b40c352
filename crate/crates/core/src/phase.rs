//! Backward phase-plane problem for the squared flux `y(r)` and the critical
//! speed.
//!
//! With `V = -d(U) U'` and `y = V^2` written as a function of `r = U`, the
//! profile equation becomes `dy/dr = 2 (c sqrt(y+) - f(r))` with
//! `y(0) = y(1) = 0`. The equation is integrated backwards from a seed next to
//! `r = 1`. Internally the unknown is `q = ln y` over `x = logit(r)`, which
//! turns the power-law corners at both ends into smooth, slowly varying
//! behaviour:
//!
//! `dq/dx = 2 r (1-r) e^{-q/2} (c - f(r) e^{-q/2})`.

use thiserror::Error;

use crate::interp;
use crate::ode::{self, Control, ScalarOde, StepControl};
use crate::problem::{compute_mu, CompositeNonlinearity, DEFAULT_SAMPLES};

pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_R_MIN: f64 = 1e-6;
pub const DEFAULT_EPS_SEED: f64 = 1e-6;
pub const DEFAULT_TOL_C: f64 = 1e-6;
pub const MAX_BISECTIONS: usize = 200;

/// Depth (in `ln r`) of the integration behind the critical-speed predicate.
const DEEP_LN_R: f64 = -299.0;
/// Largest step in `x` while sampling a solution for later interpolation.
const SAMPLE_H_MAX: f64 = 0.05;
/// End of the continuation below `r_min` that feeds the local model near 0.
const DEEP_TAIL_X: f64 = -80.0;
const DEEP_H_MAX: f64 = 0.5;
const DEEP_STIFFNESS: f64 = 1e6;
const DEEP_AMPLIFICATION: f64 = 1e2;
/// Width of the `sigma1 = 1` border.
/// Stiffness beyond which the start moves along the slaved manifold.
const SEED_STIFFNESS: f64 = 1e8;
const BORDER: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhaseError {
    #[error("wave speed must be positive, got {0}")]
    NonpositiveSpeed(f64),
    #[error("gamma1 + delta1 must be positive, got {0}")]
    InvalidExponent(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("adaptive integration failed: {0}")]
    StepFailure(String),
    #[error("no travelling wave: {0}")]
    NoTravellingWave(String),
    #[error("bisection bracket not found: {0}")]
    BracketFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseStatus {
    ReachedZero,
    PositiveAtZero,
    Clamped,
}

impl PhaseStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseStatus::ReachedZero => "ReachedZero",
            PhaseStatus::PositiveAtZero => "PositiveAtZero",
            PhaseStatus::Clamped => "Clamped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    /// Absolute tolerance on `ln y`; the relative tolerance is `100 * tol`.
    pub tol: f64,
    pub r_min: f64,
    pub eps_seed: f64,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            tol: DEFAULT_TOL,
            r_min: DEFAULT_R_MIN,
            eps_seed: DEFAULT_EPS_SEED,
        }
    }
}

impl PhaseOptions {
    fn check(&self) -> Result<(), PhaseError> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(PhaseError::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.r_min > 0.0 && self.r_min < 0.5) {
            return Err(PhaseError::InvalidArgument(format!(
                "r_min must lie in (0, 1/2), got {}",
                self.r_min
            )));
        }
        if !(self.eps_seed > 0.0 && self.eps_seed < 0.5) {
            return Err(PhaseError::InvalidArgument(format!(
                "eps_seed must lie in (0, 1/2), got {}",
                self.eps_seed
            )));
        }
        Ok(())
    }

    fn step_control(&self, h_max: f64) -> StepControl {
        StepControl {
            atol: self.tol,
            rtol: 100.0 * self.tol,
            h_init: 1e-3,
            h_min: 1e-14,
            h_max,
            ..StepControl::default()
        }
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub(crate) fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `(r, 1 - r)` for `r = 1 / (1 + e^{-x})`, both free of cancellation.
#[inline]
pub(crate) fn split(x: f64) -> (f64, f64) {
    (1.0 / (1.0 + (-x).exp()), 1.0 / (1.0 + x.exp()))
}

#[inline]
pub(crate) fn logit(r: f64) -> f64 {
    r.ln() - (-r).ln_1p()
}

/// Leading-order local model `y ~ kappa (1-r)^theta` next to `r = 1`.
pub fn seed_asymptotics(f: &CompositeNonlinearity, c: f64) -> Result<(f64, f64), PhaseError> {
    let sigma1 = f.sigma1;
    if !(sigma1 > 0.0) {
        return Err(PhaseError::InvalidExponent(sigma1));
    }
    if !(c > 0.0) {
        return Err(PhaseError::NonpositiveSpeed(c));
    }
    let f1 = f.f1;
    if (sigma1 - 1.0).abs() <= BORDER {
        let root = 0.5 * (-c + (c * c + 4.0 * f1).sqrt());
        Ok((2.0, root * root))
    } else if sigma1 < 1.0 {
        Ok((sigma1 + 1.0, 2.0 * f1 / (sigma1 + 1.0)))
    } else {
        Ok((2.0 * sigma1, (f1 / c).powi(2)))
    }
}

struct LogPhase<'a> {
    f: &'a CompositeNonlinearity,
    c: f64,
}

impl ScalarOde for LogPhase<'_> {
    #[inline]
    fn rhs(&self, x: f64, q: f64) -> f64 {
        let (r, s) = split(x);
        let w = (-0.5 * q).exp();
        2.0 * r * s * w * (self.c - self.f.eval_split(r, s) * w)
    }

    #[inline]
    fn jacobian(&self, x: f64, q: f64) -> f64 {
        let (r, s) = split(x);
        let w = (-0.5 * q).exp();
        r * s * w * (2.0 * self.f.eval_split(r, s) * w - self.c)
    }
}

/// A sampled backward solution `y_c(r)`.
#[derive(Debug, Clone)]
pub struct PhaseSolution {
    pub c: f64,
    /// Increasing `r` samples on `[r_min, 1 - eps_seed]`.
    pub grid: Vec<f64>,
    pub y: Vec<f64>,
    pub y_at_rmin: f64,
    pub status: PhaseStatus,
    pub theta: f64,
    pub kappa: f64,
    pub eps_seed: f64,
    /// `logit(r)` at the samples.
    pub x: Vec<f64>,
    /// `ln y` at the samples and its derivative in `x`.
    pub q: Vec<f64>,
    pub dq: Vec<f64>,
    /// Continuation of the solution below `r_min`, increasing in `x` and
    /// ending at the first sample; used only as the local model near 0.
    pub deep_x: Vec<f64>,
    pub deep_q: Vec<f64>,
    pub deep_dq: Vec<f64>,
    /// `y ~ r^p` below the first sample.
    pub tail_exponent: f64,
    pub accepted_steps: usize,
    pub stiff_steps: usize,
}

impl PhaseSolution {
    /// `ln y` at `x = logit(r)`: Hermite interpolation inside the samples,
    /// the seed model beyond the seed and a power law below the first sample.
    pub fn log_y_at_x(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x >= self.x[n - 1] {
            let s = 1.0 / (1.0 + x.exp());
            return self.kappa.ln() + self.theta * s.ln();
        }
        if x <= self.x[0] {
            let (xs, qs, dqs) = if self.deep_x.len() >= 2 {
                (&self.deep_x, &self.deep_q, &self.deep_dq)
            } else {
                (&self.x, &self.q, &self.dq)
            };
            if x >= xs[0] {
                let i = interp::locate(xs, x);
                return interp::hermite(xs[i], xs[i + 1], qs[i], qs[i + 1], dqs[i], dqs[i + 1], x);
            }
            // ln r = -softplus(-x)
            return qs[0] + self.tail_exponent * (softplus(-xs[0]) - softplus(-x));
        }
        let i = interp::locate(&self.x, x);
        interp::hermite(
            self.x[i],
            self.x[i + 1],
            self.q[i],
            self.q[i + 1],
            self.dq[i],
            self.dq[i + 1],
            x,
        )
    }

    /// `y(r)` for `r` in `[0, 1]`, with `y(0) = y(1) = 0`.
    pub fn y_at(&self, r: f64) -> f64 {
        if r <= 0.0 || r >= 1.0 {
            return 0.0;
        }
        self.log_y_at_x(logit(r)).exp()
    }

    /// Exponent of the power law used below the first sample.
    pub fn left_exponent(&self) -> f64 {
        self.tail_exponent
    }
}

fn trajectory_to_solution(
    c: f64,
    theta: f64,
    kappa: f64,
    opts: &PhaseOptions,
    traj: ode::Trajectory,
) -> PhaseSolution {
    let mut x = traj.t;
    let mut q = traj.y;
    let mut dq = traj.dydt;
    x.reverse();
    q.reverse();
    dq.reverse();
    let grid: Vec<f64> = x.iter().map(|&v| split(v).0).collect();
    let y: Vec<f64> = q.iter().map(|&v| v.exp()).collect();
    let r0 = grid[0];
    let y0 = y[0];
    let clamped = y.iter().any(|&v| !(v > 0.0));
    let status = if clamped {
        PhaseStatus::Clamped
    } else if y0 <= c * c * r0 * r0 {
        PhaseStatus::ReachedZero
    } else {
        PhaseStatus::PositiveAtZero
    };
    PhaseSolution {
        c,
        grid,
        y,
        y_at_rmin: y0,
        status,
        theta,
        kappa,
        eps_seed: opts.eps_seed,
        x,
        q,
        dq,
        deep_x: Vec::new(),
        deep_q: Vec::new(),
        deep_dq: Vec::new(),
        tail_exponent: 2.0,
        accepted_steps: traj.stats.accepted,
        stiff_steps: traj.stats.stiff_steps,
    }
}

struct Seed {
    theta: f64,
    kappa: f64,
    /// Where the integration starts.
    x: f64,
    q: f64,
    /// Samples `(x, q, dq)` on the slow manifold between the seed and the
    /// start, decreasing in `x`.
    manifold: Vec<(f64, f64, f64)>,
}

/// Slow manifold of the slaved branch, `sqrt(y) = (f + y'/2) / c` with
/// `y' = d(f/c)^2/dr`.
fn slaved_log_y(f: &CompositeNonlinearity, c: f64, x: f64) -> f64 {
    let ln_f = |x: f64| {
        let (r, s) = split(x);
        f.eval_split(r, s).ln()
    };
    let h = 1e-4;
    let slope = (ln_f(x + h) - ln_f(x - h)) / (2.0 * h);
    let (r, s) = split(x);
    let lf = ln_f(x);
    2.0 * (lf - c.ln()) + 2.0 * (lf.exp() * slope / (c * c * r * s)).ln_1p()
}

fn seed_point(f: &CompositeNonlinearity, c: f64, opts: &PhaseOptions) -> Result<Seed, PhaseError> {
    let (theta, kappa) = seed_asymptotics(f, c)?;
    let eps = opts.eps_seed;
    let x_seed = (-eps).ln_1p() - eps.ln();
    let q_seed = kappa.ln() + theta * eps.ln();
    let ode = LogPhase { f, c };
    let mut seed = Seed {
        theta,
        kappa,
        x: x_seed,
        q: q_seed,
        manifold: Vec::new(),
    };
    if f.sigma1 <= 1.0 + BORDER || ode.jacobian(x_seed, q_seed) <= SEED_STIFFNESS {
        return Ok(seed);
    }
    // Far into the slaved regime the right-hand side cancels to fewer digits
    // than the tolerance asks for; follow the manifold until it is usable.
    let h = 1e-4;
    let sample = |x: f64| {
        let q = slaved_log_y(f, c, x);
        let dq = (slaved_log_y(f, c, x + h) - slaved_log_y(f, c, x - h)) / (2.0 * h);
        (x, q, dq)
    };
    let mut x = x_seed;
    let mut point = sample(x_seed);
    while x > 0.0 && ode.jacobian(point.0, point.1) > SEED_STIFFNESS {
        seed.manifold.push(point);
        x -= SAMPLE_H_MAX;
        point = sample(x);
    }
    seed.x = point.0;
    seed.q = point.1;
    Ok(seed)
}

/// Exponent `p` of `y ~ r^p` near 0, snapped to a branch that can occur:
/// `y ~ a^2 r^2` on the branches through the origin, or `y ~ (f/c)^2` on
/// the slaved branch when `f` vanishes faster than `r`. Near the critical
/// speed the last sample may sit between the two, where its local exponent
/// means nothing.
fn tail_exponent(f: &CompositeNonlinearity, ps: &PhaseSolution) -> f64 {
    let (x0, dq0) = match (ps.deep_x.first(), ps.deep_dq.first()) {
        (Some(&x), Some(&d)) => (x, d),
        _ => (ps.x[0], ps.dq[0]),
    };
    let local = dq0 / split(x0).1;
    let slaved = 2.0 * f.sigma0;
    if f.sigma0 > 1.0 + BORDER && local > 1.0 + f.sigma0 {
        slaved
    } else {
        2.0
    }
}

/// Integrate the phase equation backwards from the seed down to `r_min`.
pub fn solve_phase(f: &CompositeNonlinearity, c: f64, tol: f64, r_min: f64) -> Result<PhaseSolution, PhaseError> {
    solve_phase_with(
        f,
        c,
        &PhaseOptions {
            tol,
            r_min,
            ..PhaseOptions::default()
        },
    )
}

pub fn solve_phase_with(f: &CompositeNonlinearity, c: f64, opts: &PhaseOptions) -> Result<PhaseSolution, PhaseError> {
    if !(c > 0.0) {
        return Err(PhaseError::NonpositiveSpeed(c));
    }
    opts.check()?;
    let seed = seed_point(f, c, opts)?;
    let (x_seed, q_seed) = (seed.x, seed.q);
    let x_min = logit(opts.r_min);
    if x_min >= x_seed {
        return Err(PhaseError::InvalidArgument("r_min must lie below the seed point".into()));
    }
    let ode = LogPhase { f, c };
    let traj = ode::integrate(&ode, x_seed, q_seed, x_min, &opts.step_control(SAMPLE_H_MAX), |_, _| {
        Control::Continue
    })
    .map_err(|e| PhaseError::StepFailure(e.to_string()))?;
    let mut traj = traj;
    if !seed.manifold.is_empty() {
        let m = seed.manifold.len();
        traj.t.splice(0..0, seed.manifold.iter().map(|p| p.0));
        traj.y.splice(0..0, seed.manifold.iter().map(|p| p.1));
        traj.dydt.splice(0..0, seed.manifold.iter().map(|p| p.2));
        traj.stats.accepted += m;
    }
    let mut ps = trajectory_to_solution(c, seed.theta, seed.kappa, opts, traj);
    if ps.x[0] > DEEP_TAIL_X {
        // Stop once the branch is strongly slaved, `y ~ (f/c)^2` (stiffness
        // grows without bound and the power law from the last point is
        // already exact), or once backward growth of perturbations has
        // amplified the integration error beyond use.
        let mut prev: Option<(f64, f64)> = None;
        let mut ln_amp = 0.0;
        let stop = |x: f64, q: f64| {
            let j = ode.jacobian(x, q);
            if let Some((xp, jp)) = prev {
                ln_amp += 0.5 * (j + jp) * (x - xp);
            }
            prev = Some((x, j));
            if j > DEEP_STIFFNESS || ln_amp > DEEP_AMPLIFICATION.ln() {
                Control::Stop
            } else {
                Control::Continue
            }
        };
        let mut deep = ode::integrate(&ode, ps.x[0], ps.q[0], DEEP_TAIL_X, &opts.step_control(DEEP_H_MAX), stop)
            .map_err(|e| PhaseError::StepFailure(e.to_string()))?;
        deep.t.reverse();
        deep.y.reverse();
        deep.dydt.reverse();
        ps.deep_x = deep.t;
        ps.deep_q = deep.y;
        ps.deep_dq = deep.dydt;
    }
    ps.tail_exponent = tail_exponent(f, &ps);
    Ok(ps)
}

/// Running supremum of `f(r)/r` over `(0, r)` on a logarithmic grid.
struct RatioBound {
    ln_r: Vec<f64>,
    sup: Vec<f64>,
}

impl RatioBound {
    const STEP: f64 = 0.05;

    fn new(f: &CompositeNonlinearity) -> Self {
        let n = ((-DEEP_LN_R) / Self::STEP).ceil() as usize + 2;
        let mut ln_r = Vec::with_capacity(n);
        let mut sup = Vec::with_capacity(n);
        let mut running = if (f.sigma0 - 1.0).abs() <= BORDER { f.f0 } else { 0.0 };
        for k in 0..n {
            let lr = DEEP_LN_R - Self::STEP + k as f64 * Self::STEP;
            let lr = lr.min(0.0);
            let r = lr.exp();
            let m = f.eval_split(r, -(lr.exp_m1())) / r;
            if m.is_finite() {
                running = running.max(m);
            }
            ln_r.push(lr);
            sup.push(running);
        }
        RatioBound { ln_r, sup }
    }

    /// Upper bound on `f(s)/s` for `s < r`, taking the next node above `r`.
    fn at(&self, ln_r: f64) -> f64 {
        let k = self.ln_r.partition_point(|&v| v < ln_r).min(self.ln_r.len() - 1);
        self.sup[k]
    }
}

/// Deep predicate: does the backward solution reach `y(0) = 0`?
///
/// Exits early once `sqrt(y) > c r` (the solution then stays above the
/// envelope all the way to 0) or once the solution is trapped below the
/// larger root of `a^2 - c a + M = 0`, where `a = sqrt(y)/r` and `M` bounds
/// `f/r` further in; that region is backward invariant and forces `y -> 0`.
fn reaches_zero(f: &CompositeNonlinearity, bound: &RatioBound, c: f64, opts: &PhaseOptions) -> Result<bool, PhaseError> {
    let seed = seed_point(f, c, opts)?;
    let (x_seed, q_seed) = (seed.x, seed.q);
    let ode = LogPhase { f, c };
    let ln_c = c.ln();
    let mut verdict: Option<bool> = None;
    let observe = |x: f64, q: f64| {
        let ln_r = -softplus(-x);
        let ln_a = 0.5 * q - ln_r;
        if ln_a > ln_c {
            verdict = Some(false);
            return Control::Stop;
        }
        if x < 0.0 {
            let m = bound.at(ln_r);
            let disc = c * c - 4.0 * m;
            if disc >= 0.0 && ln_a.exp() <= 0.5 * (c + disc.sqrt()) {
                verdict = Some(true);
                return Control::Stop;
            }
        }
        Control::Continue
    };
    let x_deep = DEEP_LN_R;
    let traj = ode::integrate(&ode, x_seed, q_seed, x_deep, &opts.step_control(f64::INFINITY), observe)
        .map_err(|e| PhaseError::StepFailure(e.to_string()))?;
    Ok(match verdict {
        Some(v) => v,
        None => {
            let q_end = *traj.y.last().expect("trajectory has a start point");
            let ln_r = -softplus(-x_deep);
            0.5 * q_end - ln_r <= ln_c
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedOptions {
    pub tol_c: f64,
    pub phase: PhaseOptions,
    pub mu_samples: usize,
}

impl Default for SpeedOptions {
    fn default() -> Self {
        SpeedOptions {
            tol_c: DEFAULT_TOL_C,
            phase: PhaseOptions::default(),
            mu_samples: DEFAULT_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedResult {
    pub c_star: f64,
    pub bracket: (f64, f64),
    pub mu: f64,
    pub upper_bound: f64,
    pub iterations: usize,
    /// Post-hoc check: predicate false just below and true just above `c_star`.
    pub monotone: bool,
}

pub fn critical_speed(f: &CompositeNonlinearity, tol_c: f64) -> Result<SpeedResult, PhaseError> {
    critical_speed_with(
        f,
        &SpeedOptions {
            tol_c,
            ..SpeedOptions::default()
        },
    )
}

pub fn critical_speed_with(f: &CompositeNonlinearity, opts: &SpeedOptions) -> Result<SpeedResult, PhaseError> {
    let tol_c = opts.tol_c;
    if !(tol_c > 0.0) {
        return Err(PhaseError::InvalidArgument(format!("tol_c must be positive, got {tol_c}")));
    }
    opts.phase.check()?;
    let mu = compute_mu(f, opts.mu_samples);
    if !mu.is_finite() {
        return Err(PhaseError::NoTravellingWave(format!(
            "sup f(r)/r is infinite (gamma0 + delta0 = {} < 1)",
            f.sigma0
        )));
    }
    let upper = 2.0 * mu.sqrt();
    let bound = RatioBound::new(f);
    let pred = |c: f64| reaches_zero(f, &bound, c, &opts.phase);

    let mut c_hi = upper;
    if !pred(c_hi)? {
        c_hi = upper + tol_c;
        if !pred(c_hi)? {
            return Err(PhaseError::NoTravellingWave(format!(
                "backward solution stays positive at r = 0 for c = 2 sqrt(mu) = {upper}"
            )));
        }
    }
    let mut c_lo = 0.5 * upper;
    let mut halvings = 0;
    while pred(c_lo)? {
        c_hi = c_lo;
        c_lo *= 0.5;
        halvings += 1;
        if halvings > 60 {
            return Err(PhaseError::BracketFailure(format!(
                "predicate still true at c = {c_lo:e}"
            )));
        }
    }
    let mut iterations = 0;
    while c_hi - c_lo >= tol_c {
        if iterations >= MAX_BISECTIONS {
            return Err(PhaseError::BracketFailure(format!(
                "no convergence after {MAX_BISECTIONS} bisections"
            )));
        }
        let mid = 0.5 * (c_lo + c_hi);
        if pred(mid)? {
            c_hi = mid;
        } else {
            c_lo = mid;
        }
        iterations += 1;
    }
    let c_star = 0.5 * (c_lo + c_hi);
    let below = c_star * (1.0 - 10.0 * tol_c);
    let above = c_star * (1.0 + 10.0 * tol_c);
    let monotone = !pred(below)? && pred(above)?;
    Ok(SpeedResult {
        c_star,
        bracket: (c_lo, c_hi),
        mu,
        upper_bound: upper,
        iterations,
        monotone,
    })
}

/// Sufficient condition for nonexistence at speed `c`: `f(r)/r >= c^2` on
/// all of `(0, delta)`. Checked on a logarithmic grid down to the deep limit
/// together with the limit of `f(r)/r` at 0.
pub fn growth_obstruction(f: &CompositeNonlinearity, c: f64, delta: f64) -> Result<bool, PhaseError> {
    if !(c > 0.0) {
        return Err(PhaseError::NonpositiveSpeed(c));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PhaseError::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
    }
    let c2 = c * c;
    let limit = if f.sigma0 < 1.0 - BORDER {
        f64::INFINITY
    } else if (f.sigma0 - 1.0).abs() <= BORDER {
        f.f0
    } else {
        0.0
    };
    if limit < c2 {
        return Ok(false);
    }
    // nodes strictly inside the open interval
    let top = delta.ln();
    Ok((0..)
        .map(|k| DEEP_LN_R + k as f64 * RatioBound::STEP)
        .take_while(|&lr| lr < top)
        .all(|lr| {
            let r = lr.exp();
            f.eval_split(r, -(lr.exp_m1())) / r >= c2
        }))
}

/// Predicate used by the bisection, exposed for diagnostics.
pub fn wave_exists_at(f: &CompositeNonlinearity, c: f64, opts: &PhaseOptions) -> Result<bool, PhaseError> {
    if !(c > 0.0) {
        return Err(PhaseError::NonpositiveSpeed(c));
    }
    opts.check()?;
    reaches_zero(f, &RatioBound::new(f), c, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{composite, Exponents, ProblemSpec};

    fn f_of(g0: f64, d0: f64, g1: f64, d1: f64) -> CompositeNonlinearity {
        composite(&ProblemSpec::power_law(Exponents::new(g0, d0, g1, d1)))
    }

    #[test]
    fn seeds_follow_the_three_balances() {
        let exact = f_of(1.0, 1.0, 1.0, 0.0);
        let (theta, kappa) = seed_asymptotics(&exact, 0.5f64.sqrt()).unwrap();
        assert_eq!(theta, 2.0);
        assert!((kappa - 0.5).abs() < 1e-15);

        let (theta, kappa) = seed_asymptotics(&f_of(0.5, 0.0, 0.5, 0.0), 3.0).unwrap();
        assert_eq!(theta, 1.5);
        assert!((kappa - 4.0 / 3.0).abs() < 1e-15);

        let (theta, kappa) = seed_asymptotics(&f_of(1.0, 0.0, 2.0, 0.0), 1.0).unwrap();
        assert_eq!((theta, kappa), (4.0, 1.0));

        assert!(matches!(
            seed_asymptotics(&exact, 0.0),
            Err(PhaseError::NonpositiveSpeed(_))
        ));
    }

    #[test]
    fn border_tie_uses_three_term_balance() {
        let f = f_of(1.0, 0.0, 1.0 + 5e-13, 0.0);
        let (theta, _) = seed_asymptotics(&f, 1.0).unwrap();
        assert_eq!(theta, 2.0);
    }

    #[test]
    fn logit_split_round_trip() {
        for &r in &[1e-200, 1e-6, 0.3, 0.5, 1.0 - 1e-9] {
            let (rr, s) = split(logit(r));
            assert!((rr - r).abs() <= 1e-12 * r.max(1e-300) + 1e-300 || (rr / r - 1.0).abs() < 1e-12);
            assert!((rr + s - 1.0).abs() < 1e-15);
        }
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!((softplus(-800.0)).abs() < 1e-300);
    }

    #[test]
    fn exact_solution_is_reproduced() {
        let f = f_of(1.0, 1.0, 1.0, 0.0);
        let c = 0.5f64.sqrt();
        let ps = solve_phase(&f, c, DEFAULT_TOL, DEFAULT_R_MIN).unwrap();
        let mut worst: f64 = 0.0;
        for (&r, &y) in ps.grid.iter().zip(&ps.y) {
            let exact = 0.5 * (r * (1.0 - r)).powi(2);
            worst = worst.max((y - exact).abs());
        }
        assert!(worst < 1e-9, "{worst}");
        assert_eq!(ps.status, PhaseStatus::ReachedZero);
        assert_eq!(ps.y_at(1.0), 0.0);
        assert_eq!(ps.y_at(0.0), 0.0);
        let mid = ps.y_at(0.37);
        assert!((mid - 0.5 * (0.37f64 * 0.63).powi(2)).abs() < 1e-9, "{mid}");
    }

    #[test]
    fn slow_speed_stays_positive() {
        let f = f_of(1.0, 1.0, 1.0, 0.0);
        let ps = solve_phase(&f, 0.5, DEFAULT_TOL, DEFAULT_R_MIN).unwrap();
        assert_eq!(ps.status, PhaseStatus::PositiveAtZero);
    }

    #[test]
    fn rejects_nonpositive_speed_and_bad_rmin() {
        let f = f_of(1.0, 1.0, 1.0, 0.0);
        assert!(matches!(solve_phase(&f, -1.0, 1e-10, 1e-6), Err(PhaseError::NonpositiveSpeed(_))));
        assert!(matches!(solve_phase(&f, 1.0, 1e-10, 0.7), Err(PhaseError::InvalidArgument(_))));
    }

    #[test]
    fn critical_speed_of_exact_case() {
        let res = critical_speed(&f_of(1.0, 1.0, 1.0, 0.0), DEFAULT_TOL_C).unwrap();
        assert!((res.c_star - 0.5f64.sqrt()).abs() < 1e-5, "{res:?}");
        assert!(res.c_star <= res.upper_bound + DEFAULT_TOL_C);
        assert!(res.monotone);
    }

    #[test]
    fn critical_speed_of_classical_kpp() {
        let res = critical_speed(&f_of(1.0, 0.0, 1.0, 0.0), DEFAULT_TOL_C).unwrap();
        assert!((res.c_star - 2.0).abs() < 1e-3, "{res:?}");
        assert!(res.c_star <= res.upper_bound + DEFAULT_TOL_C);
    }

    #[test]
    fn strongly_slaved_seed_follows_the_manifold() {
        let f = f_of(1.2, 0.0, 2.4, 1.3);
        let c = critical_speed(&f, 1e-6).unwrap().c_star * 1.01;
        let ps = solve_phase(&f, c, DEFAULT_TOL, DEFAULT_R_MIN).unwrap();
        assert_eq!(ps.status, PhaseStatus::ReachedZero);
        assert!((ps.grid.last().unwrap() - (1.0 - DEFAULT_EPS_SEED)).abs() < 1e-15);
        // sqrt(y) ~ f/c where the branch is slaved
        let r = 0.9999;
        let ratio = ps.y_at(r).sqrt() * c / f.eval(r);
        assert!((ratio - 1.0).abs() < 1e-3, "{ratio}");
        assert!(ps.x.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn growth_condition_rules_out_slow_waves() {
        let f = f_of(1.0, 0.0, 1.0, 0.0);
        let opts = PhaseOptions::default();
        for &c in &[0.1, 0.5, 0.9] {
            assert!(growth_obstruction(&f, c, 0.1).unwrap());
            assert!(!wave_exists_at(&f, c, &opts).unwrap());
        }
        assert!(!growth_obstruction(&f, 1.5, 0.1).unwrap());
        assert!(!growth_obstruction(&f_of(1.0, 1.0, 1.0, 0.0), 0.1, 0.1).unwrap());
    }

    #[test]
    fn singular_growth_has_no_wave() {
        let f = f_of(1.0, -0.5, 1.0, 0.0);
        assert!(matches!(critical_speed(&f, 1e-6), Err(PhaseError::NoTravellingWave(_))));
    }
}
