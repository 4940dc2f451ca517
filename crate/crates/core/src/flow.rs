//! Ricci flow integration.
//!
//! In two dimensions `Ric = (R/2) g`, so the flow keeps the conformal class
//! and `g = e^{2φ} ĝ` evolves by `∂φ/∂t = -R/2 = e^{-2φ}(Δ̂φ - 1)`. This
//! equation is integrated with explicit RK4 (method of lines on the meridian
//! grid). Round spheres and flat tori use their closed-form flows.

use std::f64::consts::PI;
use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::grid::ScalarField;
use crate::manifold::{
    closed_form_flow, conformal_curvature, unit_sphere_laplacian, ManifoldFamily, MetricState,
    DEFAULT_EXTINCTION_FRACTION,
};
use crate::report::fmt_f64;

pub const DEFAULT_CFL: f64 = 0.2;
pub const MONOTONICITY_SLACK: f64 = 1e-8;
/// `|φ|` beyond which `e^{2φ}` leaves the normal f64 range.
pub const MAX_ABS_PHI: f64 = 300.0;
/// Substeps per outer step beyond which the metric is treated as degenerate.
pub const MAX_SUBSTEPS: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct FlowConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Number of snapshot intervals; `snapshots + 1` states are kept.
    pub snapshots: usize,
    pub cfl: f64,
    pub extinction_fraction: f64,
}

impl FlowConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        FlowConfig {
            dt,
            t_end,
            snapshots: 10,
            cfl: DEFAULT_CFL,
            extinction_fraction: DEFAULT_EXTINCTION_FRACTION,
        }
    }

    pub fn with_snapshots(mut self, snapshots: usize) -> Self {
        self.snapshots = snapshots;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl = cfl;
        self
    }
}

/// Curvature and volume bookkeeping at one time level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub t: f64,
    pub min_r: f64,
    pub max_r: f64,
    pub volume: f64,
    pub total_curvature: f64,
}

impl StepDiagnostics {
    pub fn of(state: &MetricState) -> Self {
        let (min_r, max_r) = match state.family() {
            ManifoldFamily::ConformalS2 { phi } => {
                let r = conformal_curvature(phi.grid(), phi.values());
                let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            _ => {
                let r = state.homogeneous_curvature().unwrap();
                (r, r)
            }
        };
        StepDiagnostics {
            t: state.t(),
            min_r,
            max_r,
            volume: state.volume(),
            total_curvature: state.total_scalar_curvature(),
        }
    }
}

/// Snapshots of a flow plus diagnostics at every time step.
#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub snapshots: Vec<MetricState>,
    pub steps: Vec<StepDiagnostics>,
    /// Extinction time of the flow, `None` if it is eternal.
    pub t_max: Option<f64>,
}

impl FlowTrace {
    pub fn initial(&self) -> &MetricState {
        &self.snapshots[0]
    }

    pub fn last(&self) -> &MetricState {
        self.snapshots.last().unwrap()
    }
}

/// Largest RK4 step allowed by the guard `dt <= c·(π/N)²·min e^{2φ}`;
/// `None` for closed-form families.
pub fn admissible_dt(state: &MetricState, cfl: f64) -> Option<f64> {
    match state.family() {
        ManifoldFamily::ConformalS2 { phi } => {
            let h = PI / phi.len() as f64;
            let min_conf = (2.0 * phi.min()).exp();
            Some(cfl * h * h * min_conf)
        }
        _ => None,
    }
}

fn phi_rate(grid: &crate::grid::Grid, phi: &[f64]) -> Vec<f64> {
    unit_sphere_laplacian(grid, phi)
        .iter()
        .zip(phi)
        .map(|(l, p)| (-2.0 * p).exp() * (l - 1.0))
        .collect()
}

fn axpy(base: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    base.iter().zip(k).map(|(b, v)| b + a * v).collect()
}

/// One step of the flow. Conformal states take a single RK4 step of φ;
/// closed-form families are advanced exactly.
pub fn step_flow(state: &MetricState, dt: f64, cfl: f64) -> Result<MetricState> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("time step must be > 0, got {dt}")));
    }
    match state.family() {
        ManifoldFamily::ConformalS2 { phi } => {
            let admissible = admissible_dt(state, cfl).unwrap();
            if dt > admissible {
                return Err(Error::Cfl { dt, admissible });
            }
            let grid = phi.grid();
            let y = phi.values();
            let k1 = phi_rate(grid, y);
            let k2 = phi_rate(grid, &axpy(y, 0.5 * dt, &k1));
            let k3 = phi_rate(grid, &axpy(y, 0.5 * dt, &k2));
            let k4 = phi_rate(grid, &axpy(y, dt, &k3));
            let next: Vec<f64> = (0..y.len())
                .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect();
            let t = state.t() + dt;
            if next.iter().any(|v| v.is_nan() || v.abs() > MAX_ABS_PHI) {
                return Err(Error::BlowUp {
                    t,
                    last_valid: Box::new(FlowTrace {
                        snapshots: vec![state.clone()],
                        steps: vec![StepDiagnostics::of(state)],
                        t_max: state.extinction_time(),
                    }),
                });
            }
            Ok(MetricState::conformal(
                ScalarField::new(grid.clone(), next)?,
                t,
            ))
        }
        ManifoldFamily::RoundSphere { .. } => closed_form_flow(state, state.t() + dt),
        ManifoldFamily::FlatTorus { .. } => Ok(state.with_time(state.t() + dt)),
    }
}

/// Integrates from `state0` to `cfg.t_end`.
///
/// Each outer step of size `dt` is split into equal RK4 substeps when the
/// shrinking metric tightens the CFL bound below `dt`. Diagnostics are
/// recorded at every outer step and never enforced here.
pub fn run_flow(state0: &MetricState, cfg: &FlowConfig) -> Result<FlowTrace> {
    if !(cfg.dt.is_finite() && cfg.dt > 0.0) {
        return Err(invalid("dt", format!("time step must be > 0, got {}", cfg.dt)));
    }
    if !(cfg.t_end.is_finite() && cfg.t_end > state0.t()) {
        return Err(invalid("t_end", format!("must exceed the start time, got {}", cfg.t_end)));
    }
    if cfg.snapshots == 0 {
        return Err(invalid("snapshots", "need at least one snapshot interval"));
    }
    let t_max = state0.extinction_time();
    if let Some(t_max) = t_max {
        let guard = cfg.extinction_fraction * t_max;
        if cfg.t_end > guard {
            return Err(Error::Extinction {
                t: cfg.t_end,
                t_max: guard,
            });
        }
    }
    if let Some(admissible) = admissible_dt(state0, cfg.cfl) {
        if cfg.dt > admissible {
            return Err(Error::Cfl {
                dt: cfg.dt,
                admissible,
            });
        }
    }

    let t0 = state0.t();
    let span = cfg.t_end - t0;
    let n_steps = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
    let time_at = |k: usize| {
        if k == n_steps {
            cfg.t_end
        } else {
            t0 + k as f64 * cfg.dt
        }
    };
    let mut keep: Vec<usize> = (0..=cfg.snapshots)
        .map(|j| ((j * n_steps) as f64 / cfg.snapshots as f64).round() as usize)
        .collect();
    keep.dedup();

    let mut trace = FlowTrace {
        snapshots: vec![state0.clone()],
        steps: vec![StepDiagnostics::of(state0)],
        t_max,
    };
    let mut state = state0.clone();
    let mut next_keep = 1;
    for k in 1..=n_steps {
        let (t_prev, t_next) = (time_at(k - 1), time_at(k));
        state = match state0.family() {
            ManifoldFamily::RoundSphere { .. } => closed_form_flow(state0, t_next)?,
            ManifoldFamily::FlatTorus { .. } => state0.with_time(t_next),
            ManifoldFamily::ConformalS2 { .. } => {
                let h = t_next - t_prev;
                let limit = admissible_dt(&state, cfg.cfl).unwrap();
                let ratio = (h / limit).ceil().max(1.0);
                if ratio.is_nan() || ratio > MAX_SUBSTEPS as f64 {
                    // the conformal factor has collapsed
                    return Err(Error::BlowUp {
                        t: t_prev,
                        last_valid: Box::new(trace),
                    });
                }
                let m = ratio as usize;
                let mut s = state;
                for _ in 0..m {
                    s = match step_flow(&s, h / m as f64, f64::INFINITY) {
                        Ok(next) => next,
                        Err(Error::BlowUp { t, .. }) => {
                            return Err(Error::BlowUp {
                                t,
                                last_valid: Box::new(trace),
                            })
                        }
                        Err(e) => return Err(e),
                    };
                }
                s.with_time(t_next)
            }
        };
        trace.steps.push(StepDiagnostics::of(&state));
        if next_keep < keep.len() && keep[next_keep] == k {
            trace.snapshots.push(state.clone());
            next_keep += 1;
        }
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowReport {
    /// `max_k |Δvol/Δt + ∫R dV| / (1 + |∫R dV|)` with trapezoidal `∫R dV`.
    pub volume_defect: f64,
    pub min_r_violations: usize,
    pub worst_min_r_drop: f64,
    /// Max over snapshot pairs of the forward-difference residual of
    /// `∂R/∂t = ΔR + 2|Ric|²` at interior nodes.
    pub r_evolution_residual: f64,
}

pub fn flow_diagnostics(trace: &FlowTrace) -> Result<FlowReport> {
    if trace.snapshots.len() < 3 {
        return Err(invalid("trace", "need at least 3 snapshots"));
    }
    let mut volume_defect: f64 = 0.0;
    let mut violations = 0;
    let mut worst_drop: f64 = 0.0;
    for w in trace.steps.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let int_r = 0.5 * (a.total_curvature + b.total_curvature);
        let defect = ((b.volume - a.volume) / dt + int_r).abs() / (1.0 + int_r.abs());
        volume_defect = volume_defect.max(defect);
        let drop = a.min_r - b.min_r;
        if drop > MONOTONICITY_SLACK * (1.0 + a.min_r.abs()) {
            violations += 1;
        }
        worst_drop = worst_drop.max(drop);
    }
    let mut residual: f64 = 0.0;
    for w in trace.snapshots.windows(2) {
        residual = residual.max(curvature_evolution_residual(&w[0], &w[1]));
    }
    Ok(FlowReport {
        volume_defect,
        min_r_violations: violations,
        worst_min_r_drop: worst_drop,
        r_evolution_residual: residual,
    })
}

fn curvature_evolution_residual(a: &MetricState, b: &MetricState) -> f64 {
    let dt = b.t() - a.t();
    match (a.family(), b.family()) {
        (ManifoldFamily::ConformalS2 { phi: pa }, ManifoldFamily::ConformalS2 { phi: pb }) => {
            let grid = pa.grid();
            let ra = conformal_curvature(grid, pa.values());
            let rb = conformal_curvature(grid, pb.values());
            let lap = unit_sphere_laplacian(grid, &ra);
            let n = ra.len();
            (1..n - 1)
                .map(|i| {
                    let rhs = (-2.0 * pa.values()[i]).exp() * lap[i] + ra[i] * ra[i];
                    ((rb[i] - ra[i]) / dt - rhs).abs()
                })
                .fold(0.0, f64::max)
        }
        _ => {
            // Einstein metrics: |Ric|² = R²/n
            let n = a.dimension() as f64;
            let ra = a.homogeneous_curvature().unwrap_or(0.0);
            let rb = b.homogeneous_curvature().unwrap_or(0.0);
            ((rb - ra) / dt - 2.0 * ra * ra / n).abs()
        }
    }
}

pub const TRACE_CSV_HEADER: &str = "t,min_R,max_R,vol,int_R_dV";

/// One row per snapshot.
pub fn write_trace_csv(trace: &FlowTrace, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for s in &trace.snapshots {
        let d = StepDiagnostics::of(s);
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_f64(d.t),
            fmt_f64(d.min_r),
            fmt_f64(d.max_r),
            fmt_f64(d.volume),
            fmt_f64(d.total_curvature)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{make_conformal_s2, make_flat_torus, make_round_sphere, ConformalPreset};

    fn unit_conformal(n: usize) -> MetricState {
        make_conformal_s2(n, ConformalPreset::Round { r0: 1.0 }).unwrap()
    }

    #[test]
    fn single_step_matches_shrinking_sphere() {
        let s = unit_conformal(64);
        let dt = 1e-4;
        let next = step_flow(&s, dt, DEFAULT_CFL).unwrap();
        let ManifoldFamily::ConformalS2 { phi } = next.family() else { unreachable!() };
        for v in phi.values() {
            assert!(((2.0 * v).exp() - (1.0 - 2.0 * dt)).abs() < 1e-15);
        }
    }

    #[test]
    fn cfl_violation_names_admissible_step() {
        let s = unit_conformal(128);
        let err = step_flow(&s, 1e-3, DEFAULT_CFL).unwrap_err();
        match err {
            Error::Cfl { admissible, .. } => {
                let h = PI / 128.0;
                assert!((admissible - 0.2 * h * h).abs() < 1e-18);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn torus_is_stationary() {
        let s = make_flat_torus(2, vec![1.0, 2.0]).unwrap();
        let next = step_flow(&s, 0.1, DEFAULT_CFL).unwrap();
        assert_eq!(next.volume(), s.volume());
        let trace = run_flow(&s, &FlowConfig::new(0.01, 0.5).with_snapshots(5)).unwrap();
        assert_eq!(trace.snapshots.len(), 6);
        let rep = flow_diagnostics(&trace).unwrap();
        assert!(rep.volume_defect <= 1e-12);
        assert_eq!(rep.min_r_violations, 0);
        assert!(rep.r_evolution_residual <= 1e-12);
    }

    #[test]
    fn bumped_step_raises_min_curvature() {
        let s = make_conformal_s2(64, ConformalPreset::Bumped { a: 0.3, b: 0.0 }).unwrap();
        let dt = admissible_dt(&s, DEFAULT_CFL).unwrap();
        let before = StepDiagnostics::of(&s).min_r;
        let coarse = step_flow(&s, dt, DEFAULT_CFL).unwrap();
        // reference: the same interval in 100 substeps
        let mut fine = s.clone();
        for _ in 0..100 {
            fine = step_flow(&fine, dt / 100.0, DEFAULT_CFL).unwrap();
        }
        let after = StepDiagnostics::of(&coarse).min_r;
        let reference = StepDiagnostics::of(&fine).min_r;
        assert!(after > before);
        assert!(reference > before);
        assert!((after - reference).abs() < 1e-9);
    }

    #[test]
    fn extinction_guard_and_blow_up() {
        let s = make_round_sphere(2, 1.0).unwrap();
        assert!(matches!(
            run_flow(&s, &FlowConfig::new(1e-3, 0.497)),
            Err(Error::Extinction { .. })
        ));
        let bumped = make_conformal_s2(128, ConformalPreset::Bumped { a: 0.3, b: 0.0 }).unwrap();
        let cfg = FlowConfig::new(0.04, 0.4).with_cfl(1e6);
        match run_flow(&bumped, &cfg) {
            Err(Error::BlowUp { last_valid, .. }) => {
                assert!(last_valid
                    .snapshots
                    .iter()
                    .all(|s| s.volume().is_finite()));
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn closed_form_trace_is_exact() {
        let s = make_round_sphere(3, 1.0).unwrap();
        let trace = run_flow(&s, &FlowConfig::new(1e-3, 0.2)).unwrap();
        assert_eq!(trace.snapshots.len(), 11);
        assert!((trace.last().t() - 0.2).abs() < 1e-15);
        let rep = flow_diagnostics(&trace).unwrap();
        assert!(rep.volume_defect < 1e-4);
        assert_eq!(rep.min_r_violations, 0);
    }

    #[test]
    fn trace_csv_has_one_row_per_snapshot() {
        let s = make_round_sphere(2, 1.0).unwrap();
        let trace = run_flow(&s, &FlowConfig::new(0.01, 0.4).with_snapshots(4)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TRACE_CSV_HEADER);
        assert_eq!(lines.len(), 6);
        assert!(lines.iter().all(|l| l.split(',').count() == 5));
    }
}
