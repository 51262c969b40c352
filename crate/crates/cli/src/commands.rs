use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use kppwaves::asymptotics::{
    classify, classify_near_1, default_window, estimate_exponent, AsymptoticsError, ClassificationReport, Existence,
};
use kppwaves::config::{parse_problem, ConfigError};
use kppwaves::pde::{measure_speed, simulate_from, Boundary, PdeError, SimConfig, SimulationState};
use kppwaves::phase::{critical_speed_with, solve_phase_with, PhaseError, PhaseOptions, PhaseStatus, SpeedOptions};
use kppwaves::problem::{
    composite, compute_mu, validate_spec, Exponents, ProblemError, ProblemSpec, ValidationReport, DEFAULT_SAMPLES,
};
use kppwaves::profile::{reconstruct_profile_with, residual_integral_form, Endpoint, ProfileError};

use crate::json::{self, extended};
use crate::{Initial, Tolerances};

#[derive(Debug)]
pub enum Failure {
    Input(String),
    NoWave(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::NoWave(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "input error: {m}"),
            Failure::NoWave(m) => write!(f, "no travelling wave: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ProblemError> for Failure {
    fn from(e: ProblemError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<PhaseError> for Failure {
    fn from(e: PhaseError) -> Self {
        match e {
            PhaseError::NoTravellingWave(m) => Failure::NoWave(m),
            PhaseError::StepFailure(_) | PhaseError::BracketFailure(_) => Failure::Numerical(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<ProfileError> for Failure {
    fn from(e: ProfileError) -> Self {
        match e {
            ProfileError::InvalidArgument(_) | ProfileError::Csv(_) => Failure::Input(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<PdeError> for Failure {
    fn from(e: PdeError) -> Self {
        match e {
            PdeError::InvalidArgument(_) | PdeError::CflViolation { .. } => Failure::Input(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<AsymptoticsError> for Failure {
    fn from(e: AsymptoticsError) -> Self {
        match e {
            AsymptoticsError::OutOfDomain(_) => Failure::Input(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

/// What a command prints; `no_wave` selects exit code 2.
pub struct Report {
    text: String,
    pub no_wave: bool,
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Provenance of an output: everything needed to reproduce it. Wall-clock
/// time is left out so that repeated runs are byte-identical.
#[derive(Debug, Serialize)]
struct Manifest {
    program: &'static str,
    version: &'static str,
    subcommand: &'static str,
    config: String,
    parameters: BTreeMap<&'static str, Value>,
    outputs: Vec<String>,
    counters: BTreeMap<&'static str, u64>,
}

impl Manifest {
    fn new(subcommand: &'static str, config: &Path) -> Self {
        Manifest {
            program: "kppwaves",
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            config: config.display().to_string(),
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
            counters: BTreeMap::new(),
        }
    }

    fn param(&mut self, key: &'static str, value: impl Into<Value>) {
        self.parameters.insert(key, value.into());
    }

    fn tolerances(&mut self, tol: &Tolerances) {
        self.param("tol", tol.tol);
        self.param("tol_c", tol.tol_c);
        self.param("rmin", tol.rmin);
        self.param("eps_seed", tol.eps_seed);
        self.param("mu_samples", DEFAULT_SAMPLES as u64);
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    manifest: &'a Manifest,
    result: &'a T,
}

fn load(path: &Path) -> Result<ProblemSpec, Failure> {
    let source = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    parse_problem(&source).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn validated(path: &Path) -> Result<(ProblemSpec, ValidationReport), Failure> {
    let spec = load(path)?;
    let report = validate_spec(&spec, DEFAULT_SAMPLES)?;
    Ok((spec, report))
}

fn phase_options(tol: &Tolerances) -> PhaseOptions {
    PhaseOptions {
        tol: tol.tol,
        r_min: tol.rmin,
        eps_seed: tol.eps_seed,
    }
}

fn speed_options(tol: &Tolerances) -> SpeedOptions {
    SpeedOptions {
        tol_c: tol.tol_c,
        phase: phase_options(tol),
        mu_samples: DEFAULT_SAMPLES,
    }
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

fn write_file(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Input(format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(io)?;
    let mut out = BufWriter::new(file);
    fill(&mut out).map_err(io)?;
    out.flush().map_err(io)
}

/// Render the document, and write it to `json_out` when given.
fn finish<T: Serialize>(
    manifest: &Manifest,
    result: &T,
    json_out: Option<&Path>,
    no_wave: bool,
) -> Result<Report, Failure> {
    let text = json::to_string(&Document { manifest, result });
    if let Some(path) = json_out {
        write_file(path, |w| w.write_all(text.as_bytes()))?;
    }
    Ok(Report { text, no_wave })
}

#[derive(Serialize)]
struct Regions {
    near_0: String,
    near_1: String,
}

#[derive(Serialize)]
struct CheckOut {
    name: &'static str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct AnalyzeOut {
    regions: Regions,
    existence: String,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_extended")]
    mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", serialize_with = "opt_extended")]
    upper_bound: Option<f64>,
    /// `null` when no wave exists: the prediction presumes existence.
    z0_finite: Option<bool>,
    predicted_theta: f64,
    borderline: Vec<&'static str>,
    checks: Vec<CheckOut>,
}

fn opt_extended<S: serde::Serializer>(value: &Option<f64>, ser: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(v) => extended(v, ser),
        None => ser.serialize_none(),
    }
}

fn classification(e: &Exponents) -> Result<ClassificationReport, Failure> {
    Ok(classify(e)?)
}

pub fn analyze(config: &Path, out: Option<&Path>, with_mu: bool) -> Result<Report, Failure> {
    let (spec, validation) = validated(config)?;
    let rep = classification(&spec.exponents)?;
    let mut manifest = Manifest::new(if with_mu { "analyze" } else { "classify" }, config);
    let mu = with_mu.then(|| compute_mu(&composite(&spec), DEFAULT_SAMPLES));
    if with_mu {
        manifest.param("mu_samples", DEFAULT_SAMPLES as u64);
    }
    manifest.param("validation_samples", validation.samples as u64);
    if let Some(path) = out {
        manifest.outputs.push(path.display().to_string());
    }
    let result = AnalyzeOut {
        regions: Regions {
            near_0: rep.region0.to_string(),
            near_1: rep.region1.to_string(),
        },
        existence: rep.existence.to_string(),
        mu,
        upper_bound: mu.map(|m| 2.0 * m.sqrt()),
        z0_finite: rep.z0_finite,
        predicted_theta: rep.predicted_theta,
        borderline: rep.borderline.clone(),
        checks: validation
            .checks
            .iter()
            .map(|c| CheckOut {
                name: c.name,
                passed: c.passed,
                detail: c.detail.clone(),
            })
            .collect(),
    };
    finish(&manifest, &result, out, rep.existence == Existence::NoWave)
}

#[derive(Serialize)]
struct SpeedOut {
    c_star: f64,
    bracket: [f64; 2],
    #[serde(serialize_with = "extended")]
    mu: f64,
    #[serde(serialize_with = "extended")]
    upper_bound: f64,
    within_bound: bool,
    iterations: usize,
    monotone: bool,
}

pub fn speed(config: &Path, tol: &Tolerances, out: Option<&Path>) -> Result<Report, Failure> {
    let (spec, _) = validated(config)?;
    let res = critical_speed_with(&composite(&spec), &speed_options(tol))?;
    let mut manifest = Manifest::new("speed", config);
    manifest.tolerances(tol);
    manifest.counters.insert("bisections", res.iterations as u64);
    if let Some(path) = out {
        manifest.outputs.push(path.display().to_string());
    }
    let result = SpeedOut {
        c_star: res.c_star,
        bracket: [res.bracket.0, res.bracket.1],
        mu: res.mu,
        upper_bound: res.upper_bound,
        within_bound: res.c_star <= res.upper_bound + tol.tol_c,
        iterations: res.iterations,
        monotone: res.monotone,
    };
    finish(&manifest, &result, out, false)
}

#[derive(Serialize)]
struct EndpointOut {
    /// Analytic verdict where one exists; it takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    predicted_finite: Option<bool>,
    numeric_finite: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    agrees: Option<bool>,
    /// Position, or "inf" when the end is only reached asymptotically.
    #[serde(serialize_with = "extended")]
    position: f64,
}

fn endpoint_out(numeric: Endpoint, predicted: Option<bool>, sign: f64) -> EndpointOut {
    EndpointOut {
        predicted_finite: predicted,
        numeric_finite: numeric.is_finite(),
        agrees: predicted.map(|p| p == numeric.is_finite()),
        position: numeric.value().unwrap_or(sign * f64::INFINITY),
    }
}

#[derive(Serialize)]
struct ProfileOut {
    c: f64,
    c_star: f64,
    status: &'static str,
    samples: usize,
    z0: EndpointOut,
    z1: EndpointOut,
    u_at_0: f64,
    #[serde(serialize_with = "extended")]
    res_def: f64,
    #[serde(serialize_with = "extended")]
    res_speed: f64,
    flux_left: f64,
    flux_right: f64,
}

pub fn profile(
    config: &Path,
    tol: &Tolerances,
    c: Option<f64>,
    grid: usize,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let (spec, _) = validated(config)?;
    let f = composite(&spec);
    let speed = critical_speed_with(&f, &speed_options(tol))?;
    let (c_lo, c_hi) = speed.bracket;
    let c = match c {
        Some(c) if !(c.is_finite() && c > 0.0) => return Err(Failure::Input(format!("speed must be positive, got {c}"))),
        Some(c) if c < c_lo => {
            return Err(Failure::NoWave(format!(
                "speed below critical: c = {c} < c* = {}",
                speed.c_star
            )))
        }
        Some(c) => c,
        None => c_hi,
    };
    let ps = solve_phase_with(&f, c, &phase_options(tol))?;
    if ps.status != PhaseStatus::ReachedZero {
        return Err(Failure::Numerical(format!(
            "phase solution at c = {c} ended with status {}",
            ps.status.as_str()
        )));
    }
    let wp = reconstruct_profile_with(&spec, &ps, grid)?;
    let res = residual_integral_form(&spec, &wp)?;
    let rep = classification(&spec.exponents)?;
    let flux = wp.endpoint_flux();

    let mut manifest = Manifest::new("profile", config);
    manifest.tolerances(tol);
    manifest.param("c", c);
    manifest.param("grid", grid as u64);
    manifest.counters.insert("bisections", speed.iterations as u64);
    manifest.counters.insert("accepted_steps", ps.accepted_steps as u64);
    manifest.counters.insert("stiff_steps", ps.stiff_steps as u64);
    let json_out = out.map(sidecar);
    if let (Some(csv), Some(js)) = (out, &json_out) {
        manifest.outputs.push(csv.display().to_string());
        manifest.outputs.push(js.display().to_string());
        write_file(csv, |w| wp.write_csv(w))?;
    }
    let result = ProfileOut {
        c,
        c_star: speed.c_star,
        status: ps.status.as_str(),
        samples: wp.z.len(),
        z0: endpoint_out(wp.z0, rep.z0_finite, -1.0),
        z1: endpoint_out(wp.z1, None, 1.0),
        u_at_0: wp.value_at(0.0),
        res_def: res.res_def,
        res_speed: res.res_speed,
        flux_left: flux.left,
        flux_right: flux.right,
    };
    finish(&manifest, &result, json_out.as_deref(), false)
}

#[derive(Serialize)]
struct SimulateOut {
    t_final: f64,
    steps: usize,
    dt: f64,
    front: f64,
    speed: f64,
    speed_stderr: f64,
    speed_window: f64,
    history_records: usize,
}

pub fn simulate(
    config: &Path,
    tmax: f64,
    h: f64,
    length: f64,
    initial: Initial,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let (spec, _) = validated(config)?;
    if !(tmax > 0.0 && tmax.is_finite()) {
        return Err(Failure::Input(format!("tmax must be positive, got {tmax}")));
    }
    let cfg = SimConfig {
        h,
        length,
        t_max: tmax,
        ..SimConfig::default()
    };
    let state = match initial {
        Initial::Step => SimulationState::smoothed_step(length, h, cfg.initial_front)?,
        Initial::One | Initial::Zero => {
            if !(h > 0.0 && length > 20.0 * h) {
                return Err(Failure::Input(format!("domain length {length} too short for h = {h}")));
            }
            let n = (length / h).round() as usize + 1;
            let v = if initial == Initial::One { 1.0 } else { 0.0 };
            SimulationState::new(0.0, h, vec![v; n], Boundary::Pinned)?
        }
    };
    let run = simulate_from(&spec, &cfg, state)?;
    let window = 0.5 * tmax;
    let (speed, stderr) = measure_speed(&run.state, window)?;

    let mut manifest = Manifest::new("simulate", config);
    manifest.param("tmax", tmax);
    manifest.param("h", h);
    manifest.param("length", length);
    manifest.param("dt", run.dt);
    manifest.param("record_interval", cfg.record_interval);
    manifest.param("initial_front", cfg.initial_front);
    manifest.param("rewindow_at", cfg.rewindow_at);
    manifest.param(
        "initial",
        match initial {
            Initial::Step => "step",
            Initial::One => "one",
            Initial::Zero => "zero",
        },
    );
    manifest.counters.insert("steps", run.steps as u64);
    let json_out = out.map(sidecar);
    if let (Some(csv), Some(js)) = (out, &json_out) {
        manifest.outputs.push(csv.display().to_string());
        manifest.outputs.push(js.display().to_string());
        write_file(csv, |w| run.state.write_history(w))?;
    }
    let result = SimulateOut {
        t_final: run.state.t,
        steps: run.steps,
        dt: run.dt,
        front: run.state.front_position()?,
        speed,
        speed_stderr: stderr,
        speed_window: window,
        history_records: run.state.front_history.len(),
    };
    finish(&manifest, &result, json_out.as_deref(), false)
}

/// One axis of a sweep grid, `a:b:n` with `n` points including both ends.
fn axis(text: &str) -> Result<Vec<f64>, Failure> {
    let bad = || Failure::Input(format!("axis {text:?} must look like a:b:n"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, n] = parts[..] else { return Err(bad()) };
    let a: f64 = a.trim().parse().map_err(|_| bad())?;
    let b: f64 = b.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if !(a.is_finite() && b.is_finite()) {
        return Err(bad());
    }
    Ok(match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    })
}

pub fn parse_grid_spec(text: &str) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let mut g1 = None;
    let mut d1 = None;
    for item in text.split(',') {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Input(format!("grid item {item:?} must look like key=a:b:n")))?;
        let slot = match key.trim() {
            "g1" => &mut g1,
            "d1" => &mut d1,
            other => return Err(Failure::Input(format!("unknown grid key {other:?}, expected g1 or d1"))),
        };
        if slot.replace(axis(value)?).is_some() {
            return Err(Failure::Input(format!("grid key {key:?} given twice")));
        }
    }
    match (g1, d1) {
        (Some(g), Some(d)) => Ok((g, d)),
        _ => Err(Failure::Input("grid spec needs both g1 and d1".into())),
    }
}

#[derive(Serialize)]
struct Cell {
    gamma1: f64,
    delta1: f64,
    region: String,
    z0_finite: Option<bool>,
    predicted_theta: Option<f64>,
    theta_hat: Option<f64>,
    relative_error: Option<f64>,
    error: Option<String>,
}

fn sweep_cell(base: &ProblemSpec, gamma1: f64, delta1: f64, solve: bool, tol: &Tolerances) -> Cell {
    let mut cell = Cell {
        gamma1,
        delta1,
        region: "inadmissible".into(),
        z0_finite: None,
        predicted_theta: None,
        theta_hat: None,
        relative_error: None,
        error: None,
    };
    let (region, finite, theta) = match classify_near_1(gamma1, delta1) {
        Ok(v) => v,
        Err(e) => {
            cell.error = Some(e.to_string());
            return cell;
        }
    };
    let e = base.exponents;
    let exponents = Exponents::new(e.gamma0, e.delta0, gamma1, delta1);
    let exists = classify(&exponents).map(|r| r.existence == Existence::Exists).unwrap_or(false);
    cell.region = region.to_string();
    cell.z0_finite = exists.then_some(finite);
    cell.predicted_theta = Some(theta);
    if !solve {
        return cell;
    }
    let spec = ProblemSpec::power_law_scaled(exponents, base.coefficients.d0, base.coefficients.g0);
    let fit = (|| -> Result<f64, Failure> {
        let f = composite(&spec);
        let speed = critical_speed_with(&f, &speed_options(tol))?;
        let ps = solve_phase_with(&f, speed.bracket.1 * 1.001, &phase_options(tol))?;
        Ok(estimate_exponent(&ps, default_window(tol.eps_seed))?.theta_hat)
    })();
    match fit {
        Ok(t) => {
            cell.theta_hat = Some(t);
            cell.relative_error = Some((t - theta).abs() / theta);
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

fn thread_pool() -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("KPPWAVES_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::Input(format!("KPPWAVES_THREADS must be a count, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Failure::Input(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

pub fn sweep(
    config: &Path,
    grid_spec: &str,
    solve: bool,
    tol: &Tolerances,
    out: Option<&Path>,
) -> Result<Report, Failure> {
    let base = load(config)?;
    let (g1, d1) = parse_grid_spec(grid_spec)?;
    let pairs: Vec<(f64, f64)> = g1.iter().flat_map(|&g| d1.iter().map(move |&d| (g, d))).collect();
    // cells are independent; collecting a parallel iterator keeps their order
    let cells: Vec<Cell> = thread_pool()?.install(|| {
        pairs
            .par_iter()
            .map(|&(g, d)| sweep_cell(&base, g, d, solve, tol))
            .collect()
    });

    let mut manifest = Manifest::new("sweep", config);
    manifest.param("grid_spec", grid_spec);
    manifest.param("solve", solve);
    if solve {
        manifest.tolerances(tol);
        manifest.param("speed_factor", 1.001);
    }
    manifest.counters.insert("cells", cells.len() as u64);
    let json_out = out.map(sidecar);
    if let (Some(csv), Some(js)) = (out, &json_out) {
        manifest.outputs.push(csv.display().to_string());
        manifest.outputs.push(js.display().to_string());
        write_file(csv, |w| {
            writeln!(w, "gamma1,delta1,region,z0_finite,predicted_theta,theta_hat")?;
            for c in &cells {
                let finite = c.z0_finite.map_or_else(String::new, |b| b.to_string());
                writeln!(
                    w,
                    "{:.16e},{:.16e},{},{finite},{},{}",
                    c.gamma1,
                    c.delta1,
                    c.region,
                    opt(c.predicted_theta),
                    opt(c.theta_hat)
                )?;
            }
            Ok(())
        })?;
    }
    finish(&manifest, &cells, json_out.as_deref(), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_specs() {
        let (g, d) = parse_grid_spec("g1=0.5:2:4,d1=0:0:1").unwrap();
        assert_eq!(g, vec![0.5, 1.0, 1.5, 2.0]);
        assert_eq!(d, vec![0.0]);
        let (g, _) = parse_grid_spec("d1=0:1:3, g1=1:2:0").unwrap();
        assert!(g.is_empty());
        for bad in ["g1=0:1", "g1=0:1:2", "g1=0:1:2,x1=0:1:2", "g1=a:1:2,d1=0:1:2", "g1=0:1:2,g1=0:1:2"] {
            assert!(parse_grid_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn sidecar_appends_json() {
        assert_eq!(sidecar(Path::new("out/p.csv")), PathBuf::from("out/p.csv.json"));
    }
}
