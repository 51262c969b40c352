//! Explicit finite differences for `u_t = (D(u))_xx + g(u)` with
//! `D(s) = int_0^s d`, front tracking, and speed measurement.

use std::io::{self, Write};

use thiserror::Error;

use crate::interp;
use crate::problem::ProblemSpec;
use crate::profile::WaveProfile;
use crate::quad;

pub const TABLE_CELLS: usize = 10_000;
pub const CFL_SAFETY: f64 = 0.4;
pub const DEFAULT_LENGTH: f64 = 200.0;
pub const DEFAULT_H: f64 = 0.05;
pub const BLOW_UP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdeError {
    #[error("time step {dt:e} exceeds the stability bound {limit:e}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },
    #[error("front lost: {0}")]
    FrontLost(String),
    #[error("front history too short: {0}")]
    InsufficientHistory(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// `D(u) = int_0^u d` tabulated on a uniform grid.
///
/// Cells use monotone cubic Hermite interpolation with `D' = d`. When `d`
/// is singular at 0 or 1 the end cell follows the declared power law
/// instead, which keeps the integrable singularity out of the interpolant.
#[derive(Debug, Clone)]
pub struct DTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
    delta0: f64,
    delta1: f64,
    /// Per-cell bound on `d` (node values and the cell secant).
    cell_max: Vec<f64>,
    sparse: Vec<Vec<f64>>,
}

impl DTable {
    pub fn new(spec: &ProblemSpec) -> Self {
        Self::with_cells(spec, TABLE_CELLS)
    }

    pub fn with_cells(spec: &ProblemSpec, cells: usize) -> Self {
        let n = cells;
        let h = 1.0 / n as f64;
        let e = spec.exponents;
        let c = spec.coefficients;
        let d = |u: f64| spec.diffusion.eval_split(u, 1.0 - u);
        let cell = |k: usize| -> f64 {
            let (a, b) = (k as f64 * h, (k + 1) as f64 * h);
            if k == 0 && e.delta0 < 0.0 {
                // subtract the singular power law, integrate it exactly
                let lead = |u: f64| c.d0 * u.powf(e.delta0);
                let rest = quad::integrate(|u| d(u) - lead(u), a, b, 1e-14, 1e-12).value;
                rest + c.d0 * b.powf(e.delta0 + 1.0) / (e.delta0 + 1.0)
            } else if k == n - 1 && e.delta1 < 0.0 {
                let lead = |u: f64| c.d1 * (1.0 - u).powf(e.delta1);
                let rest = quad::integrate(|u| d(u) - lead(u), a, b, 1e-14, 1e-12).value;
                rest + c.d1 * h.powf(e.delta1 + 1.0) / (e.delta1 + 1.0)
            } else {
                quad::integrate(d, a, b, 1e-14, 1e-12).value
            }
        };
        let mut values = vec![0.0; n + 1];
        for k in 0..n {
            values[k + 1] = values[k] + cell(k);
        }
        let nodes: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let mut slopes: Vec<f64> = nodes
            .iter()
            .enumerate()
            .map(|(k, &u)| {
                let v = d(u);
                if v.is_finite() {
                    v
                } else {
                    // only reached at a singular end, where the power law is used
                    (values[k.min(n - 1) + 1] - values[k.min(n - 1)]) / h
                }
            })
            .collect();
        interp::limit_monotone(&nodes, &values, &mut slopes);
        let cell_max: Vec<f64> = (0..n)
            .map(|k| {
                let secant = (values[k + 1] - values[k]) / h;
                let mut m = secant;
                for u in [nodes[k], nodes[k + 1]] {
                    let v = d(u);
                    if v.is_finite() {
                        m = m.max(v);
                    }
                }
                m
            })
            .collect();
        let sparse = sparse_table(&cell_max);
        DTable {
            values,
            slopes,
            delta0: e.delta0,
            delta1: e.delta1,
            cell_max,
            sparse,
        }
    }

    pub fn cells(&self) -> usize {
        self.values.len() - 1
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let n = self.cells();
        let nf = n as f64;
        let t = (u * nf).clamp(0.0, nf);
        let k = (t as usize).min(n - 1);
        let w = t - k as f64;
        if k == 0 && self.delta0 < 0.0 {
            return self.values[1] * w.powf(self.delta0 + 1.0);
        }
        if k == n - 1 && self.delta1 < 0.0 {
            let gap = self.values[n] - self.values[n - 1];
            return self.values[n] - gap * (1.0 - w).powf(self.delta1 + 1.0);
        }
        let h = 1.0 / nf;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let w2 = w * w;
        let w3 = w2 * w;
        (2.0 * w3 - 3.0 * w2 + 1.0) * y0 + (w3 - 2.0 * w2 + w) * m0 + (3.0 * w2 - 2.0 * w3) * y1 + (w3 - w2) * m1
    }

    /// Bound on `d` over `[lo, hi]`.
    pub fn max_d(&self, lo: f64, hi: f64) -> f64 {
        let n = self.cells();
        let a = ((lo.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
        let b = ((hi.clamp(0.0, 1.0) * n as f64) as usize).min(n - 1);
        let (a, b) = (a.min(b), a.max(b));
        let level = (usize::BITS - 1 - (b - a + 1).leading_zeros()) as usize;
        let row = &self.sparse[level];
        row[a].max(row[b + 1 - (1 << level)])
    }

    pub fn cell_bounds(&self) -> &[f64] {
        &self.cell_max
    }
}

fn sparse_table(values: &[f64]) -> Vec<Vec<f64>> {
    let mut table = vec![values.to_vec()];
    let mut width = 1;
    while 2 * width <= values.len() {
        let prev = table.last().expect("non-empty");
        let row: Vec<f64> = (0..=values.len() - 2 * width)
            .map(|i| prev[i].max(prev[i + width]))
            .collect();
        table.push(row);
        width *= 2;
    }
    table
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// `u = 1` at the left end and `u = 0` at the right end.
    Pinned,
    /// No flux through either end (mass conserving for `g = 0`).
    ZeroFlux,
}

/// A PDE model: the problem plus its tabulated primitive `D`.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    pub spec: &'a ProblemSpec,
    pub table: DTable,
}

impl<'a> Model<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Self {
        Model {
            spec,
            table: DTable::new(spec),
        }
    }

    /// Largest stable step for the values currently present in `u`.
    pub fn stable_dt(&self, state: &SimulationState) -> f64 {
        let (lo, hi) = state
            .u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let max_d = self.table.max_d(lo, hi);
        CFL_SAFETY * state.h * state.h / max_d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub x_left: f64,
    pub h: f64,
    pub u: Vec<f64>,
    pub t: f64,
    pub front_history: Vec<(f64, f64)>,
    pub boundary: Boundary,
    scratch: Vec<f64>,
}

impl SimulationState {
    pub fn new(x_left: f64, h: f64, u: Vec<f64>, boundary: Boundary) -> Result<Self, PdeError> {
        if !(h > 0.0) || u.len() < 3 {
            return Err(PdeError::InvalidArgument("need h > 0 and at least 3 points".into()));
        }
        let n = u.len();
        Ok(SimulationState {
            x_left,
            h,
            u,
            t: 0.0,
            front_history: Vec::new(),
            boundary,
            scratch: vec![0.0; n],
        })
    }

    /// Smoothed step from 1 to 0 centred at `front`, linear over `10 h`.
    pub fn smoothed_step(length: f64, h: f64, front_fraction: f64) -> Result<Self, PdeError> {
        if !(length > 20.0 * h) {
            return Err(PdeError::InvalidArgument(format!(
                "domain length {length} too short for h = {h}"
            )));
        }
        let n = (length / h).round() as usize + 1;
        let front = front_fraction * length;
        let u = (0..n)
            .map(|i| (0.5 - (i as f64 * h - front) / (10.0 * h)).clamp(0.0, 1.0))
            .collect();
        Self::new(0.0, h, u, Boundary::Pinned)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_left + i as f64 * self.h
    }

    pub fn x_grid(&self) -> Vec<f64> {
        (0..self.u.len()).map(|i| self.x(i)).collect()
    }

    pub fn length(&self) -> f64 {
        (self.u.len() - 1) as f64 * self.h
    }

    pub fn mass(&self) -> f64 {
        self.u.iter().sum::<f64>() * self.h
    }

    /// Position of the right-most crossing of the level 1/2.
    pub fn front_position(&self) -> Result<f64, PdeError> {
        let n = self.u.len();
        let i = (0..n - 1)
            .rev()
            .find(|&i| self.u[i] >= 0.5 && self.u[i + 1] < 0.5)
            .ok_or_else(|| PdeError::FrontLost("no crossing of the level 1/2".into()))?;
        let frac = (self.u[i] - 0.5) / (self.u[i] - self.u[i + 1]);
        let x = self.x(i) + frac * self.h;
        let margin = 10.0 * self.h;
        if x - self.x_left < margin || self.x(n - 1) - x < margin {
            return Err(PdeError::FrontLost(format!(
                "front at x = {x} is within 10h of the boundary"
            )));
        }
        Ok(x)
    }

    pub fn write_snapshot<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,u")?;
        for (i, u) in self.u.iter().enumerate() {
            writeln!(out, "{:.16e},{u:.16e}", self.x(i))?;
        }
        Ok(())
    }

    pub fn write_history<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x_front")?;
        for (t, x) in &self.front_history {
            writeln!(out, "{t:.16e},{x:.16e}")?;
        }
        Ok(())
    }
}

/// Advance one explicit step.
pub fn step(state: &mut SimulationState, model: &Model, dt: f64) -> Result<(), PdeError> {
    let limit = model.stable_dt(state);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return Err(PdeError::CflViolation { dt, limit });
    }
    advance(state, model, dt)
}

fn advance(state: &mut SimulationState, model: &Model, dt: f64) -> Result<(), PdeError> {
    let n = state.u.len();
    let table = &model.table;
    let g = &model.spec.reaction;
    let dvals = &mut state.scratch;
    for (dv, &u) in dvals.iter_mut().zip(&state.u) {
        *dv = table.eval(u);
    }
    let k = dt / (state.h * state.h);
    let u = &mut state.u;
    let mut blown = false;
    match state.boundary {
        Boundary::Pinned => {
            for i in 1..n - 1 {
                let ui = u[i];
                let next = ui + k * (dvals[i + 1] - 2.0 * dvals[i] + dvals[i - 1]) + dt * g.eval_split(ui, 1.0 - ui);
                blown |= !(next.abs() <= BLOW_UP);
                u[i] = next.clamp(0.0, 1.0);
            }
            u[0] = 1.0;
            u[n - 1] = 0.0;
        }
        Boundary::ZeroFlux => {
            for i in 0..n {
                let left = if i == 0 { 0.0 } else { dvals[i] - dvals[i - 1] };
                let right = if i == n - 1 { 0.0 } else { dvals[i + 1] - dvals[i] };
                let ui = u[i];
                let next = ui + k * (right - left) + dt * g.eval_split(ui, 1.0 - ui);
                blown |= !(next.abs() <= BLOW_UP);
                u[i] = next.clamp(0.0, 1.0);
            }
        }
    }
    state.t += dt;
    if blown {
        return Err(PdeError::BlowUp { t: state.t });
    }
    Ok(())
}

/// Shift the window by whole cells so the front sits at `target` of the
/// domain, filling with the boundary states.
fn rewindow(state: &mut SimulationState, front: f64, target: f64) {
    let n = state.u.len();
    let want = state.x_left + target * state.length();
    let shift = ((front - want) / state.h).floor() as isize;
    if shift <= 0 {
        return;
    }
    let s = (shift as usize).min(n - 1);
    state.u.copy_within(s.., 0);
    for v in &mut state.u[n - s..] {
        *v = 0.0;
    }
    state.x_left += s as f64 * state.h;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub h: f64,
    pub length: f64,
    pub t_max: f64,
    /// Fixed time step; the stability bound when `None`.
    pub dt: Option<f64>,
    /// Time between front-history records.
    pub record_interval: f64,
    pub initial_front: f64,
    pub rewindow_at: f64,
    /// Times at which snapshots of the field are kept.
    pub snapshot_times: Vec<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            h: DEFAULT_H,
            length: DEFAULT_LENGTH,
            t_max: 100.0,
            dt: None,
            record_interval: 0.1,
            initial_front: 0.4,
            rewindow_at: 0.6,
            snapshot_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub x_left: f64,
    pub h: f64,
    pub u: Vec<f64>,
}

impl Snapshot {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "x,u")?;
        for (i, u) in self.u.iter().enumerate() {
            writeln!(out, "{:.16e},{u:.16e}", self.x_left + i as f64 * self.h)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRun {
    pub state: SimulationState,
    pub snapshots: Vec<Snapshot>,
    pub steps: usize,
    pub dt: f64,
}

/// Run from the default smoothed step.
pub fn simulate(spec: &ProblemSpec, config: &SimConfig) -> Result<SimulationRun, PdeError> {
    let state = SimulationState::smoothed_step(config.length, config.h, config.initial_front)?;
    simulate_from(spec, config, state)
}

/// Run from the given state, recording the front and keeping it inside the
/// window.
pub fn simulate_from(spec: &ProblemSpec, config: &SimConfig, mut state: SimulationState) -> Result<SimulationRun, PdeError> {
    let model = Model::new(spec);
    let limit = model.table.max_d(0.0, 1.0);
    let stable = CFL_SAFETY * state.h * state.h / limit;
    let dt = match config.dt {
        Some(dt) if dt > stable * (1.0 + 1e-12) => return Err(PdeError::CflViolation { dt, limit: stable }),
        Some(dt) => dt,
        None => stable,
    };
    if !(config.record_interval > 0.0) || !(config.t_max >= 0.0) {
        return Err(PdeError::InvalidArgument("record interval and t_max must be positive".into()));
    }
    let steps_total = (config.t_max / dt).ceil() as usize;
    let record_every = ((config.record_interval / dt).round() as usize).max(1);
    let mut snapshots = Vec::new();
    let mut pending: Vec<f64> = config.snapshot_times.clone();
    pending.sort_by(|a, b| a.partial_cmp(b).expect("finite snapshot times"));
    pending.reverse();

    let record = |state: &mut SimulationState| -> Result<(), PdeError> {
        let x = state.front_position()?;
        state.front_history.push((state.t, x));
        if state.boundary == Boundary::Pinned && x - state.x_left > config.rewindow_at * state.length() {
            rewindow(state, x, config.initial_front);
        }
        Ok(())
    };
    record(&mut state)?;
    for k in 1..=steps_total {
        advance(&mut state, &model, dt)?;
        while let Some(&ts) = pending.last() {
            if state.t + 0.5 * dt >= ts {
                snapshots.push(Snapshot {
                    t: state.t,
                    x_left: state.x_left,
                    h: state.h,
                    u: state.u.clone(),
                });
                pending.pop();
            } else {
                break;
            }
        }
        if k % record_every == 0 || k == steps_total {
            record(&mut state)?;
        }
    }
    Ok(SimulationRun {
        state,
        snapshots,
        steps: steps_total,
        dt,
    })
}

/// Least-squares front speed over the trailing `window` of the history.
pub fn measure_speed(state: &SimulationState, window: f64) -> Result<(f64, f64), PdeError> {
    let hist = &state.front_history;
    let (t_end, _) = *hist
        .last()
        .ok_or_else(|| PdeError::FrontLost("no front history".into()))?;
    let t_start = hist[0].0;
    if !(window > 0.0) || t_end - t_start < window {
        return Err(PdeError::InsufficientHistory(format!(
            "history spans {} time units, window is {window}",
            t_end - t_start
        )));
    }
    let pts: Vec<(f64, f64)> = hist.iter().copied().filter(|&(t, _)| t >= t_end - window).collect();
    if pts.len() < 3 {
        return Err(PdeError::InsufficientHistory(format!("{} records in the window", pts.len())));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let stx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
    let slope = stx / stt;
    let sse: f64 = pts.iter().map(|p| (p.1 - mx - slope * (p.0 - mt)).powi(2)).sum();
    let stderr = (sse / (n - 2.0) / stt).sqrt();
    Ok((slope, stderr))
}

/// Sup-norm distance between the simulated field, recentred at its front,
/// and the wave profile, over samples with `lo <= u <= hi`.
pub fn profile_mismatch(state: &SimulationState, wp: &WaveProfile, lo: f64, hi: f64) -> Result<f64, PdeError> {
    let front = state.front_position()?;
    let z_half = wp.half_crossing();
    let mut worst: f64 = 0.0;
    for (i, &u) in state.u.iter().enumerate() {
        if u >= lo && u <= hi {
            let z = state.x(i) - front + z_half;
            worst = worst.max((u - wp.value_at(z)).abs());
        }
    }
    Ok(worst)
}
