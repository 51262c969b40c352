//! Problem instances: diffusion `d`, reaction `g`, their endpoint power laws,
//! and the composite nonlinearity `f = d * g` that drives the phase plane.

use std::fmt;

use thiserror::Error;

use crate::expr::Expr;

/// Default number of hypothesis samples.
pub const DEFAULT_SAMPLES: usize = 512;
/// Relative tolerance for the sampled endpoint limits.
pub const LIMIT_TOLERANCE: f64 = 0.05;
/// Radii (distance to the endpoint) at which the endpoint limits are sampled.
pub const LIMIT_RADII: [f64; 2] = [1e-4, 1e-5];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("hypothesis violated: {0}")]
    SpecViolation(String),
    #[error("declared exponents disagree with sampled limits: {0}")]
    ExponentMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A scalar function of the density `r`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    /// `coef * r^exp0 * (1 - r)^exp1`
    Power { coef: f64, exp0: f64, exp1: f64 },
    Expr(Expr),
}

#[inline]
fn pow_fast(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else if e == 0.5 {
        x.sqrt()
    } else if e == -0.5 {
        1.0 / x.sqrt()
    } else {
        x.powf(e)
    }
}

impl ScalarFn {
    pub fn power(coef: f64, exp0: f64, exp1: f64) -> Self {
        ScalarFn::Power { coef, exp0, exp1 }
    }

    pub fn expr(source: &str) -> Result<Self, crate::expr::ExprError> {
        Ok(ScalarFn::Expr(Expr::parse(source)?))
    }

    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.eval_split(r, 1.0 - r)
    }

    /// Evaluate with `s = 1 - r` supplied separately, so power laws stay
    /// accurate when `r` is within rounding of 1.
    #[inline]
    pub fn eval_split(&self, r: f64, s: f64) -> f64 {
        match self {
            ScalarFn::Power { coef, exp0, exp1 } => coef * pow_fast(r, *exp0) * pow_fast(s, *exp1),
            ScalarFn::Expr(e) => e.eval(r),
        }
    }

    /// Multiply by a positive constant.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            ScalarFn::Power { coef, exp0, exp1 } => ScalarFn::Power {
                coef: coef * factor,
                exp0: *exp0,
                exp1: *exp1,
            },
            ScalarFn::Expr(e) => {
                let src = format!("({:?})*({})", factor, e.source());
                ScalarFn::Expr(Expr::parse(&src).expect("scaled expression reparses"))
            }
        }
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Power { coef, exp0, exp1 } => {
                write!(f, "{coef:?}*r^{exp0:?}*(1-r)^{exp1:?}")
            }
            ScalarFn::Expr(e) => write!(f, "{}", e.source()),
        }
    }
}

/// Endpoint exponents: `g ~ r^gamma0`, `d ~ r^delta0` near 0 and
/// `g ~ (1-r)^gamma1`, `d ~ (1-r)^delta1` near 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents {
    pub gamma0: f64,
    pub delta0: f64,
    pub gamma1: f64,
    pub delta1: f64,
}

impl Exponents {
    pub fn new(gamma0: f64, delta0: f64, gamma1: f64, delta1: f64) -> Self {
        Exponents {
            gamma0,
            delta0,
            gamma1,
            delta1,
        }
    }

    pub fn sigma0(&self) -> f64 {
        self.gamma0 + self.delta0
    }

    pub fn sigma1(&self) -> f64 {
        self.gamma1 + self.delta1
    }

    /// Parameter restrictions needed for the degeneracy and growth hypotheses.
    pub fn admissible(&self) -> Result<(), String> {
        let Exponents {
            gamma0,
            delta0,
            gamma1,
            delta1,
        } = *self;
        let all = [gamma0, delta0, gamma1, delta1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("exponents must be finite".into());
        }
        if gamma0 <= 0.0 || gamma1 <= 0.0 {
            return Err(format!("gamma0 = {gamma0}, gamma1 = {gamma1} must be positive"));
        }
        if delta0 <= -1.0 || delta1 <= -1.0 {
            return Err(format!("delta0 = {delta0}, delta1 = {delta1} must exceed -1"));
        }
        if self.sigma0() <= 0.0 || self.sigma1() <= 0.0 {
            return Err("gamma0 + delta0 and gamma1 + delta1 must be positive".into());
        }
        Ok(())
    }
}

/// Leading coefficients of the endpoint power laws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub g0: f64,
    pub g1: f64,
    pub d0: f64,
    pub d1: f64,
}

impl Coefficients {
    pub fn new(g0: f64, g1: f64, d0: f64, d1: f64) -> Self {
        Coefficients { g0, g1, d0, d1 }
    }

    pub fn unit() -> Self {
        Coefficients::new(1.0, 1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub diffusion: ScalarFn,
    pub reaction: ScalarFn,
    pub exponents: Exponents,
    pub coefficients: Coefficients,
}

impl ProblemSpec {
    pub fn new(
        diffusion: ScalarFn,
        reaction: ScalarFn,
        exponents: Exponents,
        coefficients: Coefficients,
    ) -> Self {
        ProblemSpec {
            diffusion,
            reaction,
            exponents,
            coefficients,
        }
    }

    /// Pure power laws `d = r^delta0 (1-r)^delta1`, `g = r^gamma0 (1-r)^gamma1`.
    pub fn power_law(exponents: Exponents) -> Self {
        ProblemSpec::power_law_scaled(exponents, 1.0, 1.0)
    }

    /// Power laws with coefficients: `d = d0 r^delta0 (1-r)^delta1` and
    /// `g = g0 r^gamma0 (1-r)^gamma1`, so `d1 = d0` and `g1 = g0`.
    pub fn power_law_scaled(exponents: Exponents, d0: f64, g0: f64) -> Self {
        ProblemSpec {
            diffusion: ScalarFn::power(d0, exponents.delta0, exponents.delta1),
            reaction: ScalarFn::power(g0, exponents.gamma0, exponents.gamma1),
            exponents,
            coefficients: Coefficients::new(g0, g0, d0, d0),
        }
    }

    /// The same problem with the reaction multiplied by `factor`.
    pub fn with_reaction_scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.reaction = self.reaction.scaled(factor);
        out.coefficients.g0 *= factor;
        out.coefficients.g1 *= factor;
        out
    }

    #[inline]
    pub fn d(&self, r: f64) -> f64 {
        self.diffusion.eval(r)
    }

    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        self.reaction.eval(r)
    }
}

/// `f = d * g` together with its endpoint data.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeNonlinearity {
    diffusion: ScalarFn,
    reaction: ScalarFn,
    pub f0: f64,
    pub f1: f64,
    pub sigma0: f64,
    pub sigma1: f64,
}

impl CompositeNonlinearity {
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        self.eval_split(r, 1.0 - r)
    }

    /// `f(r)` with `s = 1 - r` given; zero at the endpoints.
    #[inline]
    pub fn eval_split(&self, r: f64, s: f64) -> f64 {
        if r <= 0.0 || s <= 0.0 {
            return 0.0;
        }
        self.diffusion.eval_split(r, s) * self.reaction.eval_split(r, s)
    }
}

pub fn composite(spec: &ProblemSpec) -> CompositeNonlinearity {
    let c = &spec.coefficients;
    CompositeNonlinearity {
        diffusion: spec.diffusion.clone(),
        reaction: spec.reaction.clone(),
        f0: c.d0 * c.g0,
        f1: c.d1 * c.g1,
        sigma0: spec.exponents.sigma0(),
        sigma1: spec.exponents.sigma1(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub samples: usize,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &'static str, result: Result<(), String>) {
        let (passed, detail) = match result {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }

    fn first_failure(&self, names: &[&str]) -> Option<&Check> {
        self.checks
            .iter()
            .find(|c| !c.passed && names.contains(&c.name))
    }
}

/// Chebyshev nodes of the first kind mapped to `(0, 1)`; never hits 0 or 1.
pub fn chebyshev_unit(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
            0.5 * (1.0 - theta.cos())
        })
        .collect()
}

const PARAMETERS: &str = "parameter restrictions";
const H1_POSITIVE: &str = "d positive on (0,1)";
const H2_POSITIVE: &str = "g positive on (0,1)";
const H2_ENDPOINTS: &str = "g(0) = g(1) = 0";
const LIMIT_G0: &str = "g(r)/r^gamma0 -> g0";
const LIMIT_D0: &str = "d(r)/r^delta0 -> d0";
const LIMIT_G1: &str = "g(r)/(1-r)^gamma1 -> g1";
const LIMIT_D1: &str = "d(r)/(1-r)^delta1 -> d1";

/// Run every sampled hypothesis check and report each outcome.
pub fn check_spec(spec: &ProblemSpec, samples: usize) -> ValidationReport {
    let mut report = ValidationReport {
        samples,
        checks: Vec::new(),
    };
    let c = spec.coefficients;
    report.push(
        PARAMETERS,
        spec.exponents.admissible().and_then(|()| {
            if [c.g0, c.g1, c.d0, c.d1].iter().all(|v| v.is_finite() && *v > 0.0) {
                Ok(())
            } else {
                Err("coefficients g0, g1, d0, d1 must be positive".into())
            }
        }),
    );

    let grid = chebyshev_unit(samples);
    let first_bad = |func: &dyn Fn(f64) -> f64| grid.iter().copied().find(|&r| !(func(r) > 0.0 && func(r).is_finite()));
    report.push(
        H1_POSITIVE,
        match first_bad(&|r| spec.d(r)) {
            None => Ok(()),
            Some(r) => Err(format!("d must be positive (d({r}) = {})", spec.d(r))),
        },
    );
    report.push(
        H2_POSITIVE,
        match first_bad(&|r| spec.g(r)) {
            None => Ok(()),
            Some(r) => Err(format!("g must be positive inside (0,1) (g({r}) = {})", spec.g(r))),
        },
    );
    let (ga, gb) = (spec.g(0.0), spec.g(1.0));
    report.push(
        H2_ENDPOINTS,
        if ga.abs() <= 1e-12 && gb.abs() <= 1e-12 {
            Ok(())
        } else {
            Err(format!("g must vanish at 0 and 1 (g(0) = {ga}, g(1) = {gb})"))
        },
    );

    let e = spec.exponents;
    let limit = |func: &ScalarFn, exponent: f64, expected: f64, at_one: bool| -> Result<(), String> {
        for &rho in &LIMIT_RADII {
            let (r, s) = if at_one { (1.0 - rho, rho) } else { (rho, 1.0 - rho) };
            let ratio = func.eval_split(r, s) / rho.powf(exponent);
            let rel = (ratio - expected).abs() / expected.abs();
            if !(rel <= LIMIT_TOLERANCE) {
                return Err(format!(
                    "ratio {ratio:.6} at distance {rho:e} vs declared {expected} (rel. diff {rel:.3})"
                ));
            }
        }
        Ok(())
    };
    report.push(LIMIT_G0, limit(&spec.reaction, e.gamma0, c.g0, false));
    report.push(LIMIT_D0, limit(&spec.diffusion, e.delta0, c.d0, false));
    report.push(LIMIT_G1, limit(&spec.reaction, e.gamma1, c.g1, true));
    report.push(LIMIT_D1, limit(&spec.diffusion, e.delta1, c.d1, true));
    report
}

/// Check the standing hypotheses, failing on the first violation.
pub fn validate_spec(spec: &ProblemSpec, samples: usize) -> Result<ValidationReport, ProblemError> {
    if samples < 16 {
        return Err(ProblemError::InvalidArgument(format!(
            "at least 16 samples required, got {samples}"
        )));
    }
    let report = check_spec(spec, samples);
    if let Some(c) = report.first_failure(&[PARAMETERS, H1_POSITIVE, H2_POSITIVE, H2_ENDPOINTS]) {
        return Err(ProblemError::SpecViolation(c.detail.clone()));
    }
    if let Some(c) = report.first_failure(&[LIMIT_G0, LIMIT_D0, LIMIT_G1, LIMIT_D1]) {
        return Err(ProblemError::ExponentMismatch(format!("{}: {}", c.name, c.detail)));
    }
    Ok(report)
}

/// `sup_{(0,1)} f(r)/r`, or `+inf` when `f(r)/r` is unbounded at 0.
pub fn compute_mu(f: &CompositeNonlinearity, samples: usize) -> f64 {
    if f.sigma0 < 1.0 {
        return f64::INFINITY;
    }
    let samples = samples.max(16);
    // logit-uniform grid clusters at both ends
    let span = 23.0;
    let ratio = |x: f64| -> f64 {
        let r = 1.0 / (1.0 + (-x).exp());
        let s = 1.0 / (1.0 + x.exp());
        f.eval_split(r, s) / r
    };
    let xs: Vec<f64> = (0..samples)
        .map(|k| -span + 2.0 * span * k as f64 / (samples - 1) as f64)
        .collect();
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for (k, &x) in xs.iter().enumerate() {
        let v = ratio(x);
        if v > best_val {
            best_val = v;
            best = k;
        }
    }
    let lo = xs[best.saturating_sub(1)];
    let hi = xs[(best + 1).min(samples - 1)];
    let (x_star, refined) = golden_max(&ratio, lo, hi, 1e-8);
    let _ = x_star;
    let endpoint = if (f.sigma0 - 1.0).abs() <= 1e-12 { f.f0 } else { 0.0 };
    refined.max(best_val).max(endpoint)
}

/// Golden-section maximisation on `[a, b]`; stops when the bracket is
/// relatively narrower than `rel_tol`.
fn golden_max<F: Fn(f64) -> f64>(func: &F, mut a: f64, mut b: f64, rel_tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = func(c);
    let mut fd = func(d);
    for _ in 0..200 {
        if (b - a).abs() <= rel_tol * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = func(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = func(d);
        }
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fisher() -> ProblemSpec {
        ProblemSpec::new(
            ScalarFn::expr("1").unwrap(),
            ScalarFn::expr("r*(1-r)").unwrap(),
            Exponents::new(1.0, 0.0, 1.0, 0.0),
            Coefficients::unit(),
        )
    }

    #[test]
    fn classical_fisher_validates() {
        let report = validate_spec(&fisher(), DEFAULT_SAMPLES).unwrap();
        assert!(report.passed());
        assert_eq!(report.checks.len(), 8);
    }

    #[test]
    fn degenerate_monomial_validates() {
        let spec = ProblemSpec::new(
            ScalarFn::expr("r").unwrap(),
            ScalarFn::expr("r*(1-r)").unwrap(),
            Exponents::new(1.0, 1.0, 1.0, 0.0),
            Coefficients::unit(),
        );
        validate_spec(&spec, DEFAULT_SAMPLES).unwrap();
    }

    #[test]
    fn negative_diffusion_is_rejected() {
        let mut spec = fisher();
        spec.diffusion = ScalarFn::expr("-1").unwrap();
        match validate_spec(&spec, DEFAULT_SAMPLES) {
            Err(ProblemError::SpecViolation(msg)) => assert!(msg.contains("d must be positive")),
            other => panic!("{other:?}"),
        }
        let report = check_spec(&spec, 64);
        assert!(!report.passed());
        assert!(report.checks.iter().any(|c| c.name == H2_POSITIVE && c.passed));
    }

    #[test]
    fn wrong_exponent_is_a_mismatch() {
        let mut spec = fisher();
        spec.exponents.gamma0 = 2.0;
        assert!(matches!(
            validate_spec(&spec, DEFAULT_SAMPLES),
            Err(ProblemError::ExponentMismatch(_))
        ));
    }

    #[test]
    fn inadmissible_parameters_and_small_samples() {
        let mut spec = fisher();
        spec.exponents.delta1 = -1.5;
        assert!(matches!(
            validate_spec(&spec, DEFAULT_SAMPLES),
            Err(ProblemError::SpecViolation(_))
        ));
        assert!(matches!(
            validate_spec(&fisher(), 8),
            Err(ProblemError::InvalidArgument(_))
        ));
    }

    #[test]
    fn reaction_must_vanish_at_endpoints() {
        let mut spec = fisher();
        spec.reaction = ScalarFn::expr("r*(1-r) + 0.1").unwrap();
        assert!(matches!(
            validate_spec(&spec, DEFAULT_SAMPLES),
            Err(ProblemError::SpecViolation(_))
        ));
    }

    #[test]
    fn composite_products_and_exponents() {
        let spec = ProblemSpec::power_law(Exponents::new(1.0, 1.0, 1.0, 0.0));
        let f = composite(&spec);
        assert_eq!(f.eval(0.5), 0.125);
        assert_eq!((f.f0, f.sigma0, f.f1, f.sigma1), (1.0, 2.0, 1.0, 1.0));

        let f = composite(&fisher());
        assert_eq!(f.eval(0.25), 0.1875);
        assert_eq!((f.sigma0, f.sigma1), (1.0, 1.0));

        let spec = ProblemSpec::power_law(Exponents::new(1.0, -0.5, 1.0, 0.0));
        let f = composite(&spec);
        assert!((f.eval(0.25) - 0.5 * 0.75).abs() < 1e-15);
        assert_eq!(f.sigma0, 0.5);
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1.0), 0.0);
    }

    #[test]
    fn mu_of_reference_nonlinearities() {
        let kpp = composite(&fisher());
        assert!((compute_mu(&kpp, DEFAULT_SAMPLES) - 1.0).abs() < 1e-12);
        let porous = composite(&ProblemSpec::power_law(Exponents::new(1.0, 1.0, 1.0, 0.0)));
        assert!((compute_mu(&porous, DEFAULT_SAMPLES) - 0.25).abs() < 1e-12);
        let singular = composite(&ProblemSpec::power_law(Exponents::new(1.0, -0.5, 1.0, 0.0)));
        assert_eq!(compute_mu(&singular, DEFAULT_SAMPLES), f64::INFINITY);
    }

    #[test]
    fn power_family_is_accurate_next_to_one() {
        let g = ScalarFn::power(2.0, 1.0, 0.5);
        let s = 1e-14;
        let v = g.eval_split(1.0 - s, s);
        assert!((v - 2.0 * (1.0 - s) * s.sqrt()).abs() < 1e-20);
    }

    #[test]
    fn scaling_expressions() {
        let g = ScalarFn::expr("r*(1-r)").unwrap().scaled(3.0);
        assert!((g.eval(0.5) - 0.75).abs() < 1e-15);
    }
}
