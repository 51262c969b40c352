//! Parameter-region classification of the endpoint exponents and an empirical
//! estimate of the decay exponent of `y` next to `r = 1`.

use std::fmt;

use thiserror::Error;

use crate::phase::PhaseSolution;
use crate::problem::Exponents;

/// Distance to a region boundary below which a classification is flagged.
pub const BORDERLINE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("exponents outside the admissible domain: {0}")]
    OutOfDomain(String),
    #[error("only {0} samples inside the fit window, need at least 8")]
    InsufficientSamples(usize),
    #[error("invalid fit window: {0}")]
    InvalidWindow(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region0 {
    M01,
    M02,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region1 {
    M11,
    M12,
    M13,
    M14,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Existence {
    Exists,
    NoWave,
}

impl fmt::Display for Region0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region0::M01 => "M01",
            Region0::M02 => "M02",
        })
    }
}

impl fmt::Display for Region1 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region1::M11 => "M11",
            Region1::M12 => "M12",
            Region1::M13 => "M13",
            Region1::M14 => "M14",
        })
    }
}

impl fmt::Display for Existence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Existence::Exists => "Exists",
            Existence::NoWave => "NoWave",
        })
    }
}

fn check_domain(gamma: f64, delta: f64, end: &str) -> Result<(), AsymptoticsError> {
    if gamma.is_finite() && delta.is_finite() && gamma > 0.0 && delta > -1.0 && gamma + delta > 0.0 {
        Ok(())
    } else {
        Err(AsymptoticsError::OutOfDomain(format!(
            "gamma{end} = {gamma}, delta{end} = {delta}"
        )))
    }
}

/// Existence near `r = 0`: waves exist iff `gamma0 + delta0 >= 1`.
pub fn classify_near_0(gamma0: f64, delta0: f64) -> Result<(Region0, Existence), AsymptoticsError> {
    check_domain(gamma0, delta0, "0")?;
    if gamma0 + delta0 < 1.0 {
        Ok((Region0::M01, Existence::NoWave))
    } else {
        Ok((Region0::M02, Existence::Exists))
    }
}

/// Region near `r = 1`, whether `z0` is finite, and the predicted decay
/// exponent of `y ~ (1-r)^theta`.
pub fn classify_near_1(gamma1: f64, delta1: f64) -> Result<(Region1, bool, f64), AsymptoticsError> {
    check_domain(gamma1, delta1, "1")?;
    let sigma1 = gamma1 + delta1;
    let region = if sigma1 <= 1.0 {
        if gamma1 < 1.0 + delta1 {
            Region1::M11
        } else {
            Region1::M12
        }
    } else if gamma1 < 1.0 {
        Region1::M13
    } else {
        Region1::M14
    };
    let (finite, theta) = match region {
        Region1::M11 => (true, sigma1 + 1.0),
        Region1::M12 => (false, sigma1 + 1.0),
        Region1::M13 => (true, 2.0 * sigma1),
        Region1::M14 => (false, 2.0 * sigma1),
    };
    Ok((region, finite, theta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub region0: Region0,
    pub region1: Region1,
    pub existence: Existence,
    /// `None` when no wave exists: the prediction presumes existence.
    pub z0_finite: Option<bool>,
    pub predicted_theta: f64,
    /// Boundaries lying within [`BORDERLINE`] of the inputs.
    pub borderline: Vec<&'static str>,
}

pub fn classify(e: &Exponents) -> Result<ClassificationReport, AsymptoticsError> {
    let (region0, existence) = classify_near_0(e.gamma0, e.delta0)?;
    let (region1, finite, predicted_theta) = classify_near_1(e.gamma1, e.delta1)?;
    let near = |a: f64, b: f64| (a - b).abs() <= BORDERLINE;
    let mut borderline = Vec::new();
    if near(e.sigma0(), 1.0) {
        borderline.push("gamma0 + delta0 = 1");
    }
    if near(e.sigma1(), 1.0) {
        borderline.push("gamma1 + delta1 = 1");
    }
    if near(e.gamma1, 1.0 + e.delta1) {
        borderline.push("gamma1 = 1 + delta1");
    }
    if near(e.gamma1, 1.0) {
        borderline.push("gamma1 = 1");
    }
    Ok(ClassificationReport {
        region0,
        region1,
        existence,
        z0_finite: (existence == Existence::Exists).then_some(finite),
        predicted_theta,
        borderline,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentFit {
    pub theta_hat: f64,
    pub kappa_hat: f64,
    pub r2: f64,
    pub samples: usize,
}

/// Default fit window `(1 - 1e-2, 1 - 10 eps_seed)`.
pub fn default_window(eps_seed: f64) -> (f64, f64) {
    (1.0 - 1e-2, 1.0 - 10.0 * eps_seed)
}

/// Least-squares fit of `ln y` against `ln(1-r)` over the samples in `window`.
pub fn estimate_exponent(ps: &PhaseSolution, window: (f64, f64)) -> Result<ExponentFit, AsymptoticsError> {
    let (lo, hi) = window;
    if !(lo < hi && lo > 0.9 && hi < 1.0) {
        return Err(AsymptoticsError::InvalidWindow(format!(
            "({lo}, {hi}) must satisfy 0.9 < lo < hi < 1"
        )));
    }
    // ln(1 - r) from the logit coordinate keeps full precision near 1
    let points: Vec<(f64, f64)> = ps
        .grid
        .iter()
        .zip(&ps.x)
        .zip(&ps.q)
        .filter(|((&r, _), _)| r >= lo && r <= hi)
        .map(|((_, &x), &q)| (-(x.max(0.0) + (-x.abs()).exp().ln_1p()), q))
        .collect();
    fit_log_log(&points)
}

/// Ordinary least squares `v = theta u + ln kappa`.
pub fn fit_log_log(points: &[(f64, f64)]) -> Result<ExponentFit, AsymptoticsError> {
    let n = points.len();
    if n < 8 {
        return Err(AsymptoticsError::InsufficientSamples(n));
    }
    let nf = n as f64;
    let mu = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut suu, mut suv, mut svv) = (0.0, 0.0, 0.0);
    for &(u, v) in points {
        suu += (u - mu) * (u - mu);
        suv += (u - mu) * (v - mv);
        svv += (v - mv) * (v - mv);
    }
    let theta = suv / suu;
    let intercept = mv - theta * mu;
    let ss_res: f64 = points
        .iter()
        .map(|&(u, v)| (v - intercept - theta * u).powi(2))
        .sum();
    let r2 = if svv > 0.0 { 1.0 - ss_res / svv } else { 1.0 };
    Ok(ExponentFit {
        theta_hat: theta,
        kappa_hat: intercept.exp(),
        r2,
        samples: n,
    })
}
