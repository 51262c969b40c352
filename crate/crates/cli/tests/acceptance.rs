//! Acceptance suite: one PASS/FAIL line per criterion.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use kppwaves::asymptotics::{classify, default_window, estimate_exponent};
use kppwaves::pde::{measure_speed, profile_mismatch, simulate, SimConfig};
use kppwaves::phase::{
    critical_speed, growth_obstruction, solve_phase, wave_exists_at, PhaseError, PhaseOptions, PhaseStatus,
    DEFAULT_EPS_SEED, DEFAULT_R_MIN, DEFAULT_TOL,
};
use kppwaves::problem::{composite, Exponents, ProblemSpec, ScalarFn};
use kppwaves::profile::{reconstruct_profile, residual_integral_form};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn exact() -> ProblemSpec {
    ProblemSpec::new(
        ScalarFn::expr("r").unwrap(),
        ScalarFn::expr("r * (1 - r)").unwrap(),
        Exponents::new(1.0, 1.0, 1.0, 0.0),
        kppwaves::problem::Coefficients::unit(),
    )
}

fn kpp() -> ProblemSpec {
    ProblemSpec::power_law(Exponents::new(1.0, 0.0, 1.0, 0.0))
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant) -> Result<(), String> {
    let took = start.elapsed();
    if took <= limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn exact_phase_solution() -> Outcome {
    let start = Instant::now();
    let ps = solve_phase(&composite(&exact()), 0.5f64.sqrt(), DEFAULT_TOL, DEFAULT_R_MIN).map_err(|e| e.to_string())?;
    within(Duration::from_secs(1), start)?;
    let err = ps
        .grid
        .iter()
        .zip(&ps.y)
        .filter(|(&r, _)| (1e-6..=1.0 - 1e-6).contains(&r))
        .map(|(&r, &y)| (y - 0.5 * (r * (1.0 - r)).powi(2)).abs())
        .fold(0.0, f64::max);
    check(
        err < 1e-6 && ps.status == PhaseStatus::ReachedZero,
        format!("sup error {err:.2e} over {} samples, status {}", ps.grid.len(), ps.status.as_str()),
    )
}

fn critical_speeds() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (name, spec, want, tol) in [("r^2(1-r)", exact(), 0.5f64.sqrt(), 1e-4), ("r(1-r)", kpp(), 2.0, 1e-3)] {
        let start = Instant::now();
        let res = critical_speed(&composite(&spec), 1e-6).map_err(|e| e.to_string())?;
        within(Duration::from_secs(10), start)?;
        let good = (res.c_star - want).abs() <= tol && res.c_star <= res.upper_bound + 1e-6 && res.monotone;
        ok &= good;
        details.push(format!(
            "{name}: c* = {:.6} (bound {:.6}, {:.1?})",
            res.c_star,
            res.upper_bound,
            start.elapsed()
        ));
    }
    check(ok, details.join("; "))
}

fn nonexistence_gate() -> Outcome {
    let start = Instant::now();
    let root = ProblemSpec::power_law(Exponents::new(0.5, 0.0, 1.0, 0.0));
    let gate = matches!(critical_speed(&composite(&root), 1e-6), Err(PhaseError::NoTravellingWave(_)));

    // monomials f = k r (1-r)^b: the growth condition holds exactly when
    // c^2 <= inf over (0, delta) of f/r = k (1-delta)^b
    let delta: f64 = 0.1;
    let opts = PhaseOptions::default();
    let mut trials = 0;
    let mut detected = 0;
    let mut consistent = true;
    let mut missed = Vec::new();
    for &k in &[0.5, 1.0, 3.0] {
        for &b in &[0.5, 1.0, 2.0] {
            let spec = ProblemSpec::power_law_scaled(Exponents::new(1.0, 0.0, b, 0.0), 1.0, k);
            let f = composite(&spec);
            let inf = k * (1.0 - delta).powf(b);
            for &frac in &[0.1, 0.5, 0.9, 1.0] {
                let c = (frac * inf).sqrt();
                trials += 1;
                let obstructed = growth_obstruction(&f, c, delta).map_err(|e| e.to_string())?;
                let exists = wave_exists_at(&f, c, &opts).map_err(|e| e.to_string())?;
                let ps = solve_phase(&f, c, DEFAULT_TOL, DEFAULT_R_MIN).map_err(|e| e.to_string())?;
                if obstructed && !exists && ps.status == PhaseStatus::PositiveAtZero {
                    detected += 1;
                } else {
                    missed.push(format!("k={k} b={b} c={c:.4}: {obstructed}/{exists}/{}", ps.status.as_str()));
                }
            }
            // just above the bound the condition must fail
            let c = (1.01 * k).sqrt();
            consistent &= !growth_obstruction(&f, c, delta).map_err(|e| e.to_string())?;
        }
    }
    within(Duration::from_secs(1), start)?;
    check(
        gate && detected == trials && consistent,
        format!(
            "sqrt(r)(1-r) refused: {gate}; growth condition detected in {detected}/{trials} trials, rejected above the bound: {consistent}, misses {missed:?}"
        ),
    )
}

fn random_specs(n: usize, seed: u64) -> Vec<Exponents> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let g0 = rng.gen_range(0.5..2.0);
        let d0 = rng.gen_range(0.0..1.5);
        let g1 = rng.gen_range(0.2..3.0);
        let d1 = rng.gen_range(-0.5..1.5);
        if g0 + d0 >= 1.0 && g1 + d1 > 0.1 {
            out.push(Exponents::new(g0, d0, g1, d1));
        }
    }
    out
}

fn envelope_invariant() -> Outcome {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut bad = Vec::new();
    for e in random_specs(100, 7) {
        let f = composite(&ProblemSpec::power_law(e));
        let res = critical_speed(&f, 1e-6).map_err(|err| format!("{e:?}: {err}"))?;
        let c = res.bracket.1 * (1.0 + rng.gen_range(0.0..0.5));
        let ps = solve_phase(&f, c, DEFAULT_TOL, DEFAULT_R_MIN).map_err(|err| format!("{e:?}: {err}"))?;
        for (&r, &y) in ps.grid.iter().zip(&ps.y) {
            worst = worst.max(y - c * c * r * r);
            if y > c * c * r * r + 1e-9 || (r < 1.0 && (y <= 0.0 || y.is_nan())) {
                bad.push(format!("{e:?} at r = {r}"));
                break;
            }
        }
    }
    within(Duration::from_secs(120), start)?;
    check(
        bad.is_empty(),
        format!("100 specs, max y - c^2 r^2 = {worst:.2e}, violations {bad:?}"),
    )
}

fn profile_identities() -> Outcome {
    let start = Instant::now();
    let mut worst_speed: f64 = 0.0;
    let mut worst_def: f64 = 0.0;
    let mut count = 0;
    let mut rng = StdRng::seed_from_u64(5);
    for e in random_specs(30, 3) {
        let spec = ProblemSpec::power_law(e);
        let f = composite(&spec);
        let res = critical_speed(&f, 1e-6).map_err(|err| format!("{e:?}: {err}"))?;
        let c = res.bracket.1 * (1.0 + rng.gen_range(0.0..0.5));
        let ps = solve_phase(&f, c, DEFAULT_TOL, DEFAULT_R_MIN).map_err(|err| format!("{e:?}: {err}"))?;
        let wp = reconstruct_profile(&spec, &ps).map_err(|err| format!("{e:?}: {err}"))?;
        let r = residual_integral_form(&spec, &wp).map_err(|err| format!("{e:?}: {err}"))?;
        worst_speed = worst_speed.max(r.res_speed);
        worst_def = worst_def.max(r.res_def);
        count += 1;
    }
    let spec = exact();
    let ps = solve_phase(&composite(&spec), 0.5f64.sqrt(), DEFAULT_TOL, DEFAULT_R_MIN).map_err(|e| e.to_string())?;
    let wp = reconstruct_profile(&spec, &ps).map_err(|e| e.to_string())?;
    let r = residual_integral_form(&spec, &wp).map_err(|e| e.to_string())?;
    worst_speed = worst_speed.max(r.res_speed);
    worst_def = worst_def.max(r.res_def);
    count += 1;
    within(Duration::from_secs(30), start)?;
    let z1_want = 2f64.sqrt() * 2f64.ln();
    let z1_ok = wp.z1.value().is_some_and(|z1| (z1 - z1_want).abs() < 1e-3);
    check(
        worst_speed < 1e-4 && worst_def < 1e-3 && z1_ok && !wp.z0.is_finite(),
        format!(
            "{count} profiles, max res_speed {worst_speed:.2e}, max res_def {worst_def:.2e}; exact z1 = {}, z0 = {}",
            wp.z1, wp.z0
        ),
    )
}

fn region_classification() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    for ((g1, d1), want) in [((0.5, 0.0), true), ((1.0, 0.0), false), ((0.5, 1.0), true), ((2.0, 0.0), false)] {
        let e = Exponents::new(1.0, 1.0, g1, d1);
        let rep = classify(&e).map_err(|err| err.to_string())?;
        let spec = ProblemSpec::power_law(e);
        let f = composite(&spec);
        let res = critical_speed(&f, 1e-6).map_err(|err| err.to_string())?;
        let ps = solve_phase(&f, res.c_star * 1.001, DEFAULT_TOL, DEFAULT_R_MIN).map_err(|err| err.to_string())?;
        let fit = estimate_exponent(&ps, default_window(DEFAULT_EPS_SEED)).map_err(|err| err.to_string())?;
        let wp = reconstruct_profile(&spec, &ps).map_err(|err| err.to_string())?;
        let rel = (fit.theta_hat - rep.predicted_theta).abs() / rep.predicted_theta;
        let good = rep.z0_finite == Some(want) && wp.z0.is_finite() == want && rel < 0.05;
        ok &= good;
        details.push(format!(
            "({g1},{d1}) {} z0 finite {want}/{} theta {:.3}/{}",
            rep.region1,
            wp.z0.is_finite(),
            fit.theta_hat,
            rep.predicted_theta
        ));
    }
    within(Duration::from_secs(120), start)?;
    check(ok, details.join("; "))
}

fn pde_validation() -> Outcome {
    let start = Instant::now();
    let mut details = Vec::new();
    let mut ok = true;
    let cases = [("exact", exact(), Some(0.5f64.sqrt())), ("kpp", kpp(), None)];
    for (name, spec, exact_c) in cases {
        let f = composite(&spec);
        let c_star = match exact_c {
            Some(c) => c,
            None => critical_speed(&f, 1e-6).map_err(|e| e.to_string())?.c_star,
        };
        let ps = solve_phase(&f, c_star, DEFAULT_TOL, DEFAULT_R_MIN).map_err(|e| e.to_string())?;
        let wp = reconstruct_profile(&spec, &ps).map_err(|e| e.to_string())?;
        let cfg = SimConfig {
            h: 0.05,
            t_max: 200.0,
            ..SimConfig::default()
        };
        let run = simulate(&spec, &cfg).map_err(|e| format!("{name}: {e}"))?;
        let (speed, _) = measure_speed(&run.state, 50.0).map_err(|e| e.to_string())?;
        let mismatch = profile_mismatch(&run.state, &wp, 0.05, 0.95).map_err(|e| e.to_string())?;
        let rel = (speed - c_star).abs() / c_star;
        ok &= rel < 0.05 && mismatch < 0.05;
        details.push(format!(
            "{name}: speed {speed:.5} vs {c_star:.5} ({:.2}%), profile mismatch {mismatch:.1e}",
            100.0 * rel
        ));
    }
    within(Duration::from_secs(300), start)?;
    check(ok, details.join("; "))
}

fn run(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kppwaves"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

const EXACT_TOML: &str = "[diffusion]\nkind = \"expr\"\nexpr = \"r\"\n\n[reaction]\nkind = \"expr\"\nexpr = \"r * (1 - r)\"\n\n\
[exponents]\ngamma0 = 1.0\ndelta0 = 1.0\ngamma1 = 1.0\ndelta1 = 0.0\n\n[coefficients]\ng0 = 1\ng1 = 1\nd0 = 1\nd1 = 1\n";

fn power_toml(g0: f64, d0: f64, g1: f64, d1: f64) -> String {
    format!(
        "[diffusion]\nkind = \"power\"\n\n[reaction]\nkind = \"power\"\n\n[exponents]\n\
         gamma0 = {g0:?}\ndelta0 = {d0:?}\ngamma1 = {g1:?}\ndelta1 = {d1:?}\n"
    )
}

fn determinism_and_exit_codes() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let exact = write(d, "exact.toml", EXACT_TOML);
    let kpp = write(d, "kpp.toml", &power_toml(1.0, 0.0, 1.0, 0.0));
    let nowave = write(d, "nowave.toml", &power_toml(0.5, 0.0, 1.0, 0.0));
    let violation = write(d, "violation.toml", &power_toml(1.0, -2.0, 1.0, 0.0));
    let malformed = write(d, "malformed.toml", &EXACT_TOML.replace("\"r * (1 - r)\"", "\"r * (1 - r\""));
    let missing = d.join("absent.toml").display().to_string();
    let csv = d.join("profile.csv").display().to_string();
    let sim = d.join("front.csv").display().to_string();
    let map = d.join("map.csv").display().to_string();
    let c_exact = format!("{:?}", 0.5f64.sqrt());

    let matrix: Vec<(&str, Vec<&str>, i32)> = vec![
        ("analyze good", vec!["analyze", &exact], 0),
        ("classify good", vec!["classify", &kpp], 0),
        ("speed good", vec!["speed", &kpp], 0),
        ("profile good", vec!["profile", &exact, "--c", &c_exact, "--out", &csv], 0),
        ("simulate good", vec!["simulate", &exact, "--tmax", "20", "--h", "0.2", "--out", &sim], 0),
        ("sweep good", vec!["sweep", &exact, "--grid-spec", "g1=0.5:2:4,d1=0:1:3", "--out", &map], 0),
        ("malformed", vec!["analyze", &malformed], 1),
        ("violation", vec!["analyze", &violation], 1),
        ("missing file", vec!["speed", &missing], 1),
        ("bad grid", vec!["sweep", &exact, "--grid-spec", "g1=0:1"], 1),
        ("nonexistent analyze", vec!["analyze", &nowave], 2),
        ("nonexistent speed", vec!["speed", &nowave], 2),
        ("below critical", vec!["profile", &exact, "--c", "0.5"], 2),
        ("stiff tolerance", vec!["speed", &exact, "--tol", "1e-30"], 3),
        ("flat data", vec!["simulate", &exact, "--tmax", "5", "--h", "0.2", "--initial", "one"], 3),
    ];
    let mut wrong = Vec::new();
    for (name, args, want) in &matrix {
        let out = run(args, &[]);
        let got = out.status.code().unwrap_or(-1);
        if got != *want {
            wrong.push(format!("{name}: exit {got}, want {want}"));
        }
    }
    let malformed_err = String::from_utf8_lossy(&run(&["analyze", &malformed], &[]).stderr).into_owned();
    let located = malformed_err.contains("line 7, column 19");
    if !located {
        wrong.push(format!("malformed config not located: {malformed_err:?}"));
    }

    // byte-identical replays, including files and thread counts
    let mut replays = 0;
    let mut differ = Vec::new();
    let snapshot = |paths: &[&str]| -> Vec<Vec<u8>> { paths.iter().map(|p| fs::read(p).unwrap_or_default()).collect() };
    let replay: Vec<(&str, Vec<&str>, Vec<&str>)> = vec![
        ("profile", vec!["profile", &exact, "--c", &c_exact, "--out", &csv], vec![&csv]),
        ("simulate", vec!["simulate", &exact, "--tmax", "20", "--h", "0.2", "--out", &sim], vec![&sim]),
        ("speed", vec!["speed", &kpp], vec![]),
        (
            "sweep",
            vec!["sweep", &exact, "--grid-spec", "g1=0.5:2:4,d1=0:1:3", "--solve", "--out", &map],
            vec![&map],
        ),
    ];
    for (name, args, files) in &replay {
        let mut files: Vec<String> = files.iter().map(|f| f.to_string()).collect();
        files.extend(files.clone().iter().map(|f| format!("{f}.json")));
        let file_refs: Vec<&str> = files.iter().map(String::as_str).collect();
        let first = run(args, &[("KPPWAVES_THREADS", "1")]);
        let first_files = snapshot(&file_refs);
        let second = run(args, &[("KPPWAVES_THREADS", "4")]);
        let second_files = snapshot(&file_refs);
        replays += 1;
        if first.stdout != second.stdout || first_files != second_files || first.stdout.is_empty() {
            differ.push(*name);
        }
    }
    within(Duration::from_secs(60), start)?;
    check(
        wrong.is_empty() && differ.is_empty(),
        format!(
            "{} exit-code cases, mismatches {wrong:?}; {replays} replays, differing {differ:?}",
            matrix.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("exact phase solution", exact_phase_solution),
        ("critical speeds", critical_speeds),
        ("nonexistence gate", nonexistence_gate),
        ("envelope invariant", envelope_invariant),
        ("profile identities", profile_identities),
        ("region classification", region_classification),
        ("pde validation", pde_validation),
        ("determinism and exit codes", determinism_and_exit_codes),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, criterion)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = criterion();
        let took = start.elapsed();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS {name} [{took:.1?}] {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL {name} [{took:.1?}] {detail}", k + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
