//! Problem files in TOML.
//!
//! ```toml
//! [diffusion]
//! kind = "power"          # d = coef * r^exp0 * (1-r)^exp1
//! coef = 1.0
//! exp0 = 1.0
//! exp1 = 0.0
//!
//! [reaction]
//! kind = "expr"
//! expr = "r * (1 - r)"
//!
//! [exponents]
//! gamma0 = 1.0
//! delta0 = 1.0
//! gamma1 = 1.0
//! delta1 = 0.0
//!
//! [coefficients]          # optional for power laws
//! g0 = 1.0
//! g1 = 1.0
//! d0 = 1.0
//! d1 = 1.0
//! ```
//!
//! For `kind = "power"` the `coef`, `exp0` and `exp1` keys default to the
//! matching coefficient and exponents. Missing coefficients default to
//! `coef` for power laws and are required otherwise.

use std::fmt;
use std::ops::Range;

use serde::Deserialize;
use thiserror::Error;
use toml::Spanned;

use crate::expr::Expr;
use crate::problem::{Coefficients, Exponents, ProblemSpec, ScalarFn};

#[derive(Debug, Clone, PartialEq, Error)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    diffusion: Spanned<RawFunction>,
    reaction: Spanned<RawFunction>,
    exponents: RawExponents,
    coefficients: Option<RawCoefficients>,
}

// flat rather than a tagged enum: tagged enums lose the spans of their fields
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFunction {
    kind: Spanned<String>,
    coef: Option<f64>,
    exp0: Option<f64>,
    exp1: Option<f64>,
    expr: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExponents {
    gamma0: f64,
    delta0: f64,
    gamma1: f64,
    delta1: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    g0: Option<f64>,
    g1: Option<f64>,
    d0: Option<f64>,
    d1: Option<f64>,
}

fn position(source: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(source.len());
    let before = &source[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

fn error_at(source: &str, span: Option<Range<usize>>, message: impl Into<String>) -> ConfigError {
    let (line, column) = span.map_or((1, 1), |s| position(source, s.start));
    ConfigError {
        line,
        column,
        message: message.into(),
    }
}

fn build(
    source: &str,
    raw: &Spanned<RawFunction>,
    exp: (f64, f64),
    default_coef: Option<f64>,
) -> Result<(ScalarFn, Option<f64>), ConfigError> {
    let f = raw.get_ref();
    match f.kind.get_ref().as_str() {
        "power" => {
            if let Some(expr) = &f.expr {
                return Err(error_at(source, Some(expr.span()), "`expr` is not allowed for kind \"power\""));
            }
            let coef = f.coef.or(default_coef).unwrap_or(1.0);
            Ok((
                ScalarFn::power(coef, f.exp0.unwrap_or(exp.0), f.exp1.unwrap_or(exp.1)),
                Some(coef),
            ))
        }
        "expr" => {
            if f.coef.is_some() || f.exp0.is_some() || f.exp1.is_some() {
                return Err(error_at(
                    source,
                    Some(raw.span()),
                    "`coef`, `exp0` and `exp1` are only allowed for kind \"power\"",
                ));
            }
            let expr = f
                .expr
                .as_ref()
                .ok_or_else(|| error_at(source, Some(f.kind.span()), "kind \"expr\" needs an `expr` key"))?;
            let text = expr.get_ref();
            match Expr::parse(text) {
                Ok(e) => Ok((ScalarFn::Expr(e), None)),
                Err(err) => {
                    // skip the opening quote of the string literal
                    let start = expr.span().start + 1 + err.offset;
                    Err(error_at(source, Some(start..start), format!("in expression: {}", err.message)))
                }
            }
        }
        other => Err(error_at(
            source,
            Some(f.kind.span()),
            format!("unknown kind {other:?}, expected \"power\" or \"expr\""),
        )),
    }
}

/// Parse a problem file; errors carry the line and column of the culprit.
pub fn parse_problem(source: &str) -> Result<ProblemSpec, ConfigError> {
    let raw: RawFile = toml::from_str(source).map_err(|e| error_at(source, e.span(), e.message().trim()))?;
    let e = &raw.exponents;
    let exponents = Exponents::new(e.gamma0, e.delta0, e.gamma1, e.delta1);
    let coeffs = raw.coefficients.unwrap_or_default();
    let (diffusion, d_coef) = build(source, &raw.diffusion, (e.delta0, e.delta1), coeffs.d0)?;
    let (reaction, g_coef) = build(source, &raw.reaction, (e.gamma0, e.gamma1), coeffs.g0)?;
    let need = |value: Option<f64>, fallback: Option<f64>, name: &str, span: Range<usize>| {
        value
            .or(fallback)
            .ok_or_else(|| error_at(source, Some(span), format!("missing coefficient {name} for an expression")))
    };
    let coefficients = Coefficients::new(
        need(coeffs.g0, g_coef, "g0", raw.reaction.span())?,
        need(coeffs.g1, g_coef, "g1", raw.reaction.span())?,
        need(coeffs.d0, d_coef, "d0", raw.diffusion.span())?,
        need(coeffs.d1, d_coef, "d1", raw.diffusion.span())?,
    );
    Ok(ProblemSpec::new(diffusion, reaction, exponents, coefficients))
}

/// Render a power-law problem in the file format.
pub fn power_law_source(e: &Exponents, d0: f64, g0: f64) -> String {
    format!(
        "[diffusion]\nkind = \"power\"\ncoef = {d0:?}\nexp0 = {:?}\nexp1 = {:?}\n\n\
         [reaction]\nkind = \"power\"\ncoef = {g0:?}\nexp0 = {:?}\nexp1 = {:?}\n\n\
         [exponents]\ngamma0 = {:?}\ndelta0 = {:?}\ngamma1 = {:?}\ndelta1 = {:?}\n",
        e.delta0, e.delta1, e.gamma0, e.gamma1, e.gamma0, e.delta0, e.gamma1, e.delta1
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXACT: &str = r#"
[diffusion]
kind = "expr"
expr = "r"

[reaction]
kind = "expr"
expr = "r * (1 - r)"

[exponents]
gamma0 = 1.0
delta0 = 1.0
gamma1 = 1.0
delta1 = 0.0

[coefficients]
g0 = 1
g1 = 1
d0 = 1
d1 = 1
"#;

    #[test]
    fn parses_expressions() {
        let spec = parse_problem(EXACT).unwrap();
        assert_eq!(spec.d(0.25), 0.25);
        assert_eq!(spec.g(0.5), 0.25);
        assert_eq!(spec.coefficients, Coefficients::unit());
    }

    #[test]
    fn power_defaults_follow_exponents() {
        let src = "[diffusion]\nkind = \"power\"\n[reaction]\nkind = \"power\"\ncoef = 2.0\n\
                   [exponents]\ngamma0 = 1\ndelta0 = 1\ngamma1 = 0.5\ndelta1 = 0\n";
        let spec = parse_problem(src).unwrap();
        assert!((spec.g(0.75) - 2.0 * 0.75 * 0.5).abs() < 1e-15);
        assert_eq!(spec.coefficients, Coefficients::new(2.0, 2.0, 1.0, 1.0));
        let round = parse_problem(&power_law_source(&spec.exponents, 1.0, 2.0)).unwrap();
        assert_eq!(round, spec);
    }

    #[test]
    fn syntax_errors_have_positions() {
        let err = parse_problem("[diffusion]\nkind = \"power\"\ncoef = = 1\n").unwrap_err();
        assert_eq!(err.line, 3);
        assert!(err.column > 1);
    }

    #[test]
    fn expression_errors_point_into_the_string() {
        let src = EXACT.replace("\"r * (1 - r)\"", "\"r * (1 - r\"");
        let err = parse_problem(&src).unwrap_err();
        assert_eq!(err.line, 8);
        assert_eq!(err.column, 19);
    }

    #[test]
    fn missing_sections_and_coefficients() {
        let err = parse_problem("[diffusion]\nkind = \"power\"\n").unwrap_err();
        assert!(err.message.contains("reaction"), "{err}");
        let src = EXACT.replace("g1 = 1\n", "");
        let err = parse_problem(&src).unwrap_err();
        assert!(err.message.contains("g1"), "{err}");
        let src = EXACT.replace("kind = \"expr\"\nexpr = \"r\"", "kind = \"spline\"");
        let err = parse_problem(&src).unwrap_err();
        assert_eq!((err.line, err.column), (3, 8), "{err}");
    }
}
