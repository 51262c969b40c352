//! Wave profiles `U(z)` recovered from phase solutions, endpoint finiteness,
//! and the integral identities a travelling wave must satisfy.
//!
//! Inverting `V = -d(U) U'` gives `dz/dU = -d(U) / sqrt(y(U))`, so
//! `z(U) = -int_{1/2}^{U} d(s) / sqrt(y(s)) ds` with `z(1/2) = 0`. The
//! quadrature runs in `x = logit(U)`, where `dz/dx = -d(U) U (1-U) / sqrt(y)`.

use std::fmt;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::interp;
use crate::phase::{logit, split, PhaseSolution, PhaseStatus};
use crate::problem::ProblemSpec;
use crate::quad;

pub const DEFAULT_GRID: usize = 2048;
/// Geometric shells used to decide whether an endpoint is reached at finite z.
pub const SHELLS: usize = 40;
pub const SHELL_WINDOW: usize = 5;
pub const SHELL_TOLERANCE: f64 = 1e-8;
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
/// Shell ratios this close to 1 (or above) mean the shell sums do not decay.
const RATIO_SLACK: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("phase solution is not a wave (status {0})")]
    NotASolution(&'static str),
    #[error("cannot decide whether the endpoint integral converges: {0}")]
    QuadratureDivergenceUndetermined(String),
    #[error("profile samples do not cover the required range: {0}")]
    InsufficientSupport(String),
    #[error("malformed profile CSV: {0}")]
    Csv(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Position of an endpoint of the wave: reached at finite `z` or only
/// asymptotically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Endpoint {
    Finite(f64),
    Infinite,
}

impl Endpoint {
    pub fn is_finite(self) -> bool {
        matches!(self, Endpoint::Finite(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Endpoint::Finite(v) => Some(v),
            Endpoint::Infinite => None,
        }
    }

    fn shifted(self, by: f64) -> Self {
        match self {
            Endpoint::Finite(v) => Endpoint::Finite(v + by),
            Endpoint::Infinite => Endpoint::Infinite,
        }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Finite(v) => write!(f, "{v}"),
            Endpoint::Infinite => f.write_str("infinite"),
        }
    }
}

/// Outcome of the shell test at one end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellVerdict {
    /// Extra `|z|` beyond the outermost sample, if finite.
    pub tail: Option<f64>,
    /// Mean ratio of consecutive shell contributions over the window.
    pub ratio: f64,
    pub partial_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveProfile {
    pub c: f64,
    /// Increasing.
    pub z: Vec<f64>,
    /// Decreasing, in `(0, 1)`.
    pub u: Vec<f64>,
    /// `dU/dz = -sqrt(y)/d(U)` at the samples.
    pub du_dz: Vec<f64>,
    /// `d(U) |dU/dz| = sqrt(y)` at the samples.
    pub flux: Vec<f64>,
    /// Left end, where `U -> 1`.
    pub z0: Endpoint,
    /// Right end, where `U -> 0`.
    pub z1: Endpoint,
    /// `int g(U) dz` between `z0` and the first sample.
    pub tail_left: f64,
    /// `int g(U) dz` between the last sample and `z1`.
    pub tail_right: f64,
    pub shells_left: Option<ShellVerdict>,
    pub shells_right: Option<ShellVerdict>,
}

/// Chebyshev points in `(0, 1)` as `(U, 1 - U)` pairs, both accurate.
fn chebyshev_pairs(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let half = 0.5 * std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            (half.sin().powi(2), half.cos().powi(2))
        })
        .collect()
}

struct Integrand<'a> {
    spec: &'a ProblemSpec,
    ps: &'a PhaseSolution,
}

impl Integrand<'_> {
    /// `-dz/dx`, positive.
    #[inline]
    fn dzdx(&self, x: f64) -> f64 {
        let (r, s) = split(x);
        let q = self.ps.log_y_at_x(x);
        self.spec.diffusion.eval_split(r, s) * r * s * (-0.5 * q).exp()
    }

    /// `g(U) * (-dz/dx)`.
    #[inline]
    fn g_dzdx(&self, x: f64) -> f64 {
        let (r, s) = split(x);
        self.spec.reaction.eval_split(r, s) * self.dzdx(x)
    }

    fn integrate<F: Fn(f64) -> f64>(func: F, a: f64, b: f64) -> f64 {
        quad::integrate(func, a, b, 1e-15, 1e-12).value
    }
}

/// Shells halving the distance to the endpoint, in `x`, starting at the
/// outermost sample `x_start` and heading towards `dir * inf`.
fn shell_bounds(x_start: f64, dir: f64, k: usize) -> (f64, f64) {
    let ln2 = std::f64::consts::LN_2;
    // distance to the endpoint: U near 0, 1 - U near 1
    let (r, s) = split(x_start);
    let ln_dist0 = if dir < 0.0 { r.ln() } else { s.ln() };
    let to_x = |ln_dist: f64| {
        let dist = ln_dist.exp();
        let x = ln_dist - (-dist).ln_1p();
        if dir < 0.0 {
            x
        } else {
            -x
        }
    };
    let a = if k == 0 { x_start } else { to_x(ln_dist0 - k as f64 * ln2) };
    let b = to_x(ln_dist0 - (k + 1) as f64 * ln2);
    (a.min(b), a.max(b))
}

fn shell_verdict<F: Fn(f64) -> f64>(integrand: F, x_start: f64, dir: f64) -> ShellVerdict {
    let mut parts = Vec::with_capacity(SHELLS);
    let mut sums = Vec::with_capacity(SHELLS);
    let mut total = 0.0;
    for k in 0..SHELLS {
        let (a, b) = shell_bounds(x_start, dir, k);
        let v = Integrand::integrate(&integrand, a, b);
        total += v;
        parts.push(v);
        sums.push(total);
        if !(total.is_finite()) || total > DIVERGENCE_THRESHOLD {
            return ShellVerdict {
                tail: None,
                ratio: f64::INFINITY,
                partial_sum: total,
            };
        }
    }
    let last = &parts[SHELLS - SHELL_WINDOW..];
    if last.iter().all(|&v| v == 0.0) {
        return ShellVerdict {
            tail: Some(total),
            ratio: 0.0,
            partial_sum: total,
        };
    }
    let ratios: Vec<f64> = (SHELLS - SHELL_WINDOW..SHELLS)
        .map(|k| parts[k] / parts[k - 1])
        .collect();
    let ratio = ratios.iter().sum::<f64>() / SHELL_WINDOW as f64;
    if !(ratio < 1.0 - RATIO_SLACK) {
        return ShellVerdict {
            tail: None,
            ratio,
            partial_sum: total,
        };
    }
    // limits extrapolated geometrically from each shell in the window
    let limits: Vec<f64> = (SHELLS - SHELL_WINDOW..SHELLS)
        .zip(&ratios)
        .map(|(k, &rho)| {
            let rho = rho.clamp(0.0, 1.0 - RATIO_SLACK);
            sums[k] + parts[k] * rho / (1.0 - rho)
        })
        .collect();
    let spread = limits.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - limits.iter().cloned().fold(f64::INFINITY, f64::min);
    let small = last.iter().all(|&v| v.abs() < SHELL_TOLERANCE);
    if spread <= SHELL_TOLERANCE || small {
        ShellVerdict {
            tail: Some(total + parts[SHELLS - 1] * ratio / (1.0 - ratio)),
            ratio,
            partial_sum: total,
        }
    } else {
        ShellVerdict {
            tail: None,
            ratio: f64::NAN,
            partial_sum: total,
        }
    }
}

fn endpoint_from(verdict: &ShellVerdict, z_edge: f64, dir: f64, side: &str) -> Result<Endpoint, ProfileError> {
    match verdict.tail {
        Some(t) => Ok(Endpoint::Finite(z_edge + dir * t)),
        None if verdict.ratio.is_nan() => Err(ProfileError::QuadratureDivergenceUndetermined(format!(
            "{side} shell sums neither stabilise nor grow (partial sum {})",
            verdict.partial_sum
        ))),
        None => Ok(Endpoint::Infinite),
    }
}

/// Integrate `g` against `dz` from the outermost sample to the endpoint.
fn tail_of_g<F: Fn(f64) -> f64>(func: F, x_start: f64, dir: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..400 {
        let (a, b) = shell_bounds(x_start, dir, k);
        if !(a.is_finite() && b.is_finite()) || a == b {
            break;
        }
        let v = Integrand::integrate(&func, a, b);
        total += v;
        if v.abs() <= 1e-17 * total.abs().max(1e-300) {
            break;
        }
    }
    total
}

pub fn reconstruct_profile(spec: &ProblemSpec, ps: &PhaseSolution) -> Result<WaveProfile, ProfileError> {
    reconstruct_profile_with(spec, ps, DEFAULT_GRID)
}

pub fn reconstruct_profile_with(spec: &ProblemSpec, ps: &PhaseSolution, n: usize) -> Result<WaveProfile, ProfileError> {
    if ps.status != PhaseStatus::ReachedZero {
        return Err(ProfileError::NotASolution(ps.status.as_str()));
    }
    if n < 16 {
        return Err(ProfileError::InvalidArgument(format!("grid of {n} points is too small")));
    }
    let it = Integrand { spec, ps };

    // nodes in increasing U, with U = 1/2 inserted at x = 0
    let mut nodes: Vec<(f64, f64)> = chebyshev_pairs(n);
    nodes.push((0.5, 0.5));
    nodes.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite nodes"));
    nodes.dedup_by(|a, b| a.0 == b.0);
    let xs: Vec<f64> = nodes.iter().map(|&(u, s)| u.ln() - s.ln()).collect();
    let mid = xs.iter().position(|&x| x == 0.0).expect("midpoint node");
    let m = xs.len();

    // z decreases as x increases
    let mut z_of_x = vec![0.0; m];
    for i in mid + 1..m {
        z_of_x[i] = z_of_x[i - 1] - Integrand::integrate(|x| it.dzdx(x), xs[i - 1], xs[i]);
    }
    for i in (0..mid).rev() {
        z_of_x[i] = z_of_x[i + 1] + Integrand::integrate(|x| it.dzdx(x), xs[i], xs[i + 1]);
    }

    let right = shell_verdict(|x| it.dzdx(x), xs[0], -1.0);
    let left = shell_verdict(|x| it.dzdx(x), xs[m - 1], 1.0);
    let z1 = endpoint_from(&right, z_of_x[0], 1.0, "right")?;
    let z0 = endpoint_from(&left, z_of_x[m - 1], -1.0, "left")?;
    let tail_right = tail_of_g(|x| it.g_dzdx(x), xs[0], -1.0);
    let tail_left = tail_of_g(|x| it.g_dzdx(x), xs[m - 1], 1.0);

    let mut z = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    let mut du_dz = Vec::with_capacity(m);
    let mut flux = Vec::with_capacity(m);
    for i in (0..m).rev() {
        let (r, s) = nodes[i];
        let sqrt_y = (0.5 * ps.log_y_at_x(xs[i])).exp();
        z.push(z_of_x[i]);
        u.push(r);
        du_dz.push(-sqrt_y / spec.diffusion.eval_split(r, s));
        flux.push(sqrt_y);
    }
    Ok(WaveProfile {
        c: ps.c,
        z,
        u,
        du_dz,
        flux,
        z0,
        z1,
        tail_left,
        tail_right,
        shells_left: Some(left),
        shells_right: Some(right),
    })
}

impl WaveProfile {
    /// `U(z)`, extended by 1 left of `z0` and by 0 right of `z1`.
    pub fn value_at(&self, z: f64) -> f64 {
        let n = self.z.len();
        if let Endpoint::Finite(z0) = self.z0 {
            if z <= z0 {
                return 1.0;
            }
        }
        if let Endpoint::Finite(z1) = self.z1 {
            if z >= z1 {
                return 0.0;
            }
        }
        if z < self.z[0] {
            let gap = 1.0 - self.u[0];
            return match self.z0 {
                Endpoint::Finite(z0) => 1.0 - gap * (z - z0) / (self.z[0] - z0),
                Endpoint::Infinite => 1.0 - gap * (-self.du_dz[0] / gap * (self.z[0] - z)).exp(),
            };
        }
        if z > self.z[n - 1] {
            let last = self.u[n - 1];
            return match self.z1 {
                Endpoint::Finite(z1) => last * (z1 - z) / (z1 - self.z[n - 1]),
                Endpoint::Infinite => last * (self.du_dz[n - 1] / last * (z - self.z[n - 1])).exp(),
            };
        }
        let i = interp::locate(&self.z, z);
        interp::hermite(
            self.z[i],
            self.z[i + 1],
            self.u[i],
            self.u[i + 1],
            self.du_dz[i],
            self.du_dz[i + 1],
            z,
        )
        .clamp(0.0, 1.0)
    }

    /// Translate by `zeta`: `U_new(z) = U(z - zeta)`.
    pub fn shift(&mut self, zeta: f64) {
        for v in &mut self.z {
            *v += zeta;
        }
        self.z0 = self.z0.shifted(zeta);
        self.z1 = self.z1.shifted(zeta);
    }

    /// Position where the profile crosses 1/2.
    pub fn half_crossing(&self) -> f64 {
        if let Some(k) = self.u.iter().position(|&v| v == 0.5) {
            return self.z[k];
        }
        let k = self.u.partition_point(|&v| v > 0.5).clamp(1, self.z.len() - 1) - 1;
        let (mut a, mut b) = (self.z[k], self.z[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.value_at(mid) > 0.5 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    /// Shift so that `U(0) = 1/2`.
    pub fn renormalize(&mut self) {
        let z_half = self.half_crossing();
        self.shift(-z_half);
    }

    /// Largest flux `sqrt(y)` over the outermost 1% of samples at each end,
    /// and whether it decreases towards the end there.
    pub fn endpoint_flux(&self) -> EndpointFlux {
        let n = self.flux.len();
        let k = (n / 100).max(2);
        let left = &self.flux[..k];
        let right = &self.flux[n - k..];
        EndpointFlux {
            left: left[0],
            right: right[k - 1],
            left_decreasing: left.windows(2).all(|w| w[0] <= w[1]),
            right_decreasing: right.windows(2).all(|w| w[0] >= w[1]),
        }
    }

    /// Write `z,U` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "z,U")?;
        for (z, u) in self.z.iter().zip(&self.u) {
            writeln!(out, "{z:.16e},{u:.16e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointFlux {
    pub left: f64,
    pub right: f64,
    pub left_decreasing: bool,
    pub right_decreasing: bool,
}

/// Read a `z,U` table written by [`WaveProfile::write_csv`].
pub fn read_csv<R: BufRead>(input: R) -> Result<(Vec<f64>, Vec<f64>), ProfileError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| ProfileError::Csv("empty input".into()))?
        .map_err(|e| ProfileError::Csv(e.to_string()))?;
    if header.trim() != "z,U" {
        return Err(ProfileError::Csv(format!("unexpected header {header:?}")));
    }
    let mut z = Vec::new();
    let mut u = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line.map_err(|e| ProfileError::Csv(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |name: &str| -> Result<f64, ProfileError> {
            parts
                .next()
                .ok_or_else(|| ProfileError::Csv(format!("line {}: missing {name}", k + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| ProfileError::Csv(format!("line {}: {e}", k + 2)))
        };
        z.push(next("z")?);
        u.push(next("U")?);
    }
    Ok((z, u))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    /// Sup over interior samples of `|D(U)' + c U - int_z^{z1} g(U)|`.
    pub res_def: f64,
    /// `|c - int g(U) dz|`.
    pub res_speed: f64,
}

/// Residuals of the integral form of the wave equation and of the speed
/// identity `c = int g(U(z)) dz`.
pub fn residual_integral_form(spec: &ProblemSpec, wp: &WaveProfile) -> Result<Residuals, ProfileError> {
    let n = wp.z.len();
    if n < 3 || !(wp.u[0] > 1.0 - 1e-4) || !(wp.u[n - 1] < 1e-4) {
        return Err(ProfileError::InsufficientSupport(format!(
            "samples cover U in [{}, {}], need [1e-4, 1 - 1e-4]",
            wp.u.last().copied().unwrap_or(f64::NAN),
            wp.u.first().copied().unwrap_or(f64::NAN)
        )));
    }
    let g = |u: f64| spec.reaction.eval(u);
    let d = |u: f64| spec.diffusion.eval(u);

    // int_{z_i}^{z_{i+1}} g(U(z)) dz along the Hermite interpolant
    let cells: Vec<f64> = (0..n - 1)
        .map(|i| {
            let (z0, z1) = (wp.z[i], wp.z[i + 1]);
            let (u0, u1, m0, m1) = (wp.u[i], wp.u[i + 1], wp.du_dz[i], wp.du_dz[i + 1]);
            quad::integrate(
                |z| g(interp::hermite(z0, z1, u0, u1, m0, m1, z).clamp(0.0, 1.0)),
                z0,
                z1,
                1e-16,
                1e-10,
            )
            .value
        })
        .collect();
    let mut tail = vec![0.0; n];
    tail[n - 1] = wp.tail_right;
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + cells[i];
    }
    let total = tail[0] + wp.tail_left;
    let res_speed = (wp.c - total).abs();

    let res_def = (1..n - 1)
        .map(|i| {
            let d_gain = quad::integrate(d, wp.u[i + 1], wp.u[i - 1], 1e-16, 1e-12).value;
            let dd_dz = -d_gain / (wp.z[i + 1] - wp.z[i - 1]);
            (dd_dz + wp.c * wp.u[i] - tail[i]).abs()
        })
        // NaN must surface rather than be skipped
        .fold(0.0, |acc: f64, r| if r > acc || r.is_nan() { r } else { acc });
    Ok(Residuals { res_def, res_speed })
}

/// `z(U)` by direct inversion, exposed for tests and diagnostics.
pub fn z_of_u(spec: &ProblemSpec, ps: &PhaseSolution, u: f64) -> f64 {
    let it = Integrand { spec, ps };
    let x = logit(u);
    -Integrand::integrate(|x| it.dzdx(x), 0.0, x)
}
