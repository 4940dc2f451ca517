//! Model manifolds: round spheres, flat tori, and rotationally symmetric
//! conformal metrics `e^{2φ(θ)}(dθ² + sin²θ dϕ²)` on S².
//!
//! Round spheres and flat tori carry closed-form Ricci flows. The conformal
//! family is discretized on a [`Grid::theta`] grid and evolved numerically by
//! [`crate::flow`].

use std::f64::consts::PI;
use std::sync::Arc;

use crate::calculus::{first_eigenvalue, DiscreteMetric};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, ScalarField};

pub const DEFAULT_LAMBDA_TOL: f64 = 1e-8;
pub const DEFAULT_EXTINCTION_FRACTION: f64 = 0.99;

#[derive(Clone, Debug)]
pub enum ManifoldFamily {
    RoundSphere { n: usize, r0: f64 },
    FlatTorus { n: usize, lengths: Vec<f64> },
    /// Conformal factor φ sampled on a meridian grid (the grid lives in the field).
    ConformalS2 { phi: ScalarField },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    ClosedForm,
    Numeric,
}

/// A metric `g(t)` of one of the supported families. Immutable once built.
#[derive(Clone, Debug)]
pub struct MetricState {
    family: ManifoldFamily,
    t: f64,
    provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisStatus {
    pub t_finite: bool,
    pub lambda0: f64,
    pub tolerance: f64,
    pub satisfied: bool,
}

impl HypothesisStatus {
    pub fn new(t_finite: bool, lambda0: f64, tolerance: f64) -> Self {
        HypothesisStatus {
            t_finite,
            lambda0,
            tolerance,
            satisfied: t_finite || lambda0 > tolerance,
        }
    }
}

/// Volume of the unit n-sphere `S^n ⊂ R^{n+1}`.
pub fn unit_sphere_volume(n: usize) -> f64 {
    // |S^n| = 2π/(n-1) |S^{n-2}|, |S^0| = 2, |S^1| = 2π
    let mut v = if n.is_multiple_of(2) { 2.0 } else { 2.0 * PI };
    let mut k = if n.is_multiple_of(2) { 0 } else { 1 };
    while k < n {
        k += 2;
        v *= 2.0 * PI / (k as f64 - 1.0);
    }
    v
}

/// Volume of the unit ball in R^n.
pub fn unit_ball_volume(n: usize) -> f64 {
    unit_sphere_volume(n - 1) / n as f64
}

impl MetricState {
    pub fn family(&self) -> &ManifoldFamily {
        &self.family
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn dimension(&self) -> usize {
        match &self.family {
            ManifoldFamily::RoundSphere { n, .. } | ManifoldFamily::FlatTorus { n, .. } => *n,
            ManifoldFamily::ConformalS2 { .. } => 2,
        }
    }

    pub(crate) fn with_time(&self, t: f64) -> MetricState {
        MetricState {
            family: self.family.clone(),
            t,
            provenance: self.provenance,
        }
    }

    pub(crate) fn conformal(phi: ScalarField, t: f64) -> MetricState {
        MetricState {
            family: ManifoldFamily::ConformalS2 { phi },
            t,
            provenance: Provenance::Numeric,
        }
    }

    /// Radius of a round sphere at the state's time.
    pub fn radius(&self) -> Option<f64> {
        match self.family {
            ManifoldFamily::RoundSphere { n, r0 } => {
                Some((r0 * r0 - 2.0 * (n as f64 - 1.0) * self.t).max(0.0).sqrt())
            }
            _ => None,
        }
    }

    /// Absolute extinction time of the flow through this state, `None` for
    /// stationary flows. For the conformal family this uses the discrete
    /// Gauss–Bonnet identity `d vol/dt = -∫R dV = const`.
    pub fn extinction_time(&self) -> Option<f64> {
        match &self.family {
            ManifoldFamily::RoundSphere { n, r0 } => Some(r0 * r0 / (2.0 * (*n as f64 - 1.0))),
            ManifoldFamily::FlatTorus { .. } => None,
            ManifoldFamily::ConformalS2 { .. } => {
                Some(self.t + self.volume() / self.total_scalar_curvature())
            }
        }
    }

    pub fn volume(&self) -> f64 {
        match &self.family {
            ManifoldFamily::RoundSphere { n, .. } => {
                unit_sphere_volume(*n) * self.radius().unwrap().powi(*n as i32)
            }
            ManifoldFamily::FlatTorus { lengths, .. } => lengths.iter().product(),
            ManifoldFamily::ConformalS2 { phi } => phi
                .values()
                .iter()
                .zip(phi.grid().base_weights())
                .map(|(p, w)| (2.0 * p).exp() * w)
                .sum(),
        }
    }

    /// `∫_M R dV` at the state's time.
    pub fn total_scalar_curvature(&self) -> f64 {
        match &self.family {
            ManifoldFamily::RoundSphere { n, .. } => {
                let r = self.radius().unwrap();
                (*n * (*n - 1)) as f64 / (r * r) * self.volume()
            }
            ManifoldFamily::FlatTorus { .. } => 0.0,
            ManifoldFamily::ConformalS2 { phi } => {
                let lap = unit_sphere_laplacian(phi.grid(), phi.values());
                phi.grid()
                    .base_weights()
                    .iter()
                    .zip(&lap)
                    .map(|(w, l)| w * (2.0 - 2.0 * l))
                    .sum()
            }
        }
    }

    /// Constant scalar curvature of a homogeneous state.
    pub fn homogeneous_curvature(&self) -> Option<f64> {
        match &self.family {
            ManifoldFamily::RoundSphere { n, .. } => {
                let r = self.radius().unwrap();
                Some((*n * (*n - 1)) as f64 / (r * r))
            }
            ManifoldFamily::FlatTorus { .. } => Some(0.0),
            ManifoldFamily::ConformalS2 { .. } => None,
        }
    }
}

pub fn make_round_sphere(n: usize, r0: f64) -> Result<MetricState> {
    if n < 2 {
        return Err(invalid("n", format!("dimension must be >= 2, got {n}")));
    }
    if !(r0.is_finite() && r0 > 0.0) {
        return Err(invalid("r0", format!("radius must be > 0, got {r0}")));
    }
    Ok(MetricState {
        family: ManifoldFamily::RoundSphere { n, r0 },
        t: 0.0,
        provenance: Provenance::ClosedForm,
    })
}

pub fn make_flat_torus(n: usize, lengths: Vec<f64>) -> Result<MetricState> {
    if n < 2 {
        return Err(invalid("n", format!("dimension must be >= 2, got {n}")));
    }
    if lengths.len() != n {
        return Err(invalid(
            "lengths",
            format!("expected {n} side lengths, got {}", lengths.len()),
        ));
    }
    if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
        return Err(invalid("lengths", "side lengths must be > 0"));
    }
    Ok(MetricState {
        family: ManifoldFamily::FlatTorus { n, lengths },
        t: 0.0,
        provenance: Provenance::ClosedForm,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConformalPreset {
    /// φ ≡ log r0.
    Round { r0: f64 },
    /// φ(θ) = a cos θ + b cos²θ.
    Bumped { a: f64, b: f64 },
    /// Explicit samples of φ at the grid nodes.
    Samples(Vec<f64>),
}

pub fn make_conformal_s2(grid_n: usize, preset: ConformalPreset) -> Result<MetricState> {
    let grid = Grid::theta(grid_n)?;
    let phi = match preset {
        ConformalPreset::Round { r0 } => {
            if !(r0.is_finite() && r0 > 0.0) {
                return Err(invalid("r0", format!("radius must be > 0, got {r0}")));
            }
            ScalarField::constant(grid, r0.ln())
        }
        ConformalPreset::Bumped { a, b } => ScalarField::from_fn(grid.clone(), |i| {
            let c = grid.nodes()[i].cos();
            a * c + b * c * c
        })?,
        ConformalPreset::Samples(values) => ScalarField::new(grid, values)?,
    };
    Ok(MetricState::conformal(phi, 0.0))
}

/// Unit-sphere Laplacian `(1/sinθ)(sinθ u')'` with zero flux through the poles.
pub(crate) fn unit_sphere_laplacian(grid: &Grid, u: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let h2 = grid.spacing() * grid.spacing();
    (0..n)
        .map(|i| {
            let (lo, hi) = grid.neighbours(i);
            let mut flux = 0.0;
            if let Some(j) = hi {
                flux += grid.face_factor(i) * (u[j] - u[i]);
            }
            if let Some(j) = lo {
                flux -= grid.face_factor(j) * (u[i] - u[j]);
            }
            flux / (h2 * grid.node_factor(i))
        })
        .collect()
}

/// `R = e^{-2φ}(2 - 2Δ̂φ)` at the nodes.
pub(crate) fn conformal_curvature(grid: &Grid, phi: &[f64]) -> Vec<f64> {
    unit_sphere_laplacian(grid, phi)
        .iter()
        .zip(phi)
        .map(|(l, p)| (-2.0 * p).exp() * (2.0 - 2.0 * l))
        .collect()
}

/// Scalar curvature of `state` sampled on `grid`. Conformal states must be
/// sampled on their own grid.
pub fn scalar_curvature(state: &MetricState, grid: &Arc<Grid>) -> Result<ScalarField> {
    match &state.family {
        ManifoldFamily::ConformalS2 { phi } => {
            phi.check_grid(grid)?;
            ScalarField::new(grid.clone(), conformal_curvature(grid, phi.values()))
        }
        _ => Ok(ScalarField::constant(
            grid.clone(),
            state.homogeneous_curvature().unwrap(),
        )),
    }
}

/// Exact Ricci flow of a round sphere: `g(t) = (1 - 2(n-1)t/r0²) g0`.
pub fn closed_form_flow(state: &MetricState, t: f64) -> Result<MetricState> {
    let ManifoldFamily::RoundSphere { .. } = state.family else {
        return Err(Error::Unsupported(
            "closed-form flow is only available for round spheres".into(),
        ));
    };
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid("t", format!("time must be >= 0, got {t}")));
    }
    let t_max = state.extinction_time().unwrap();
    if t >= t_max {
        return Err(Error::Extinction { t, t_max });
    }
    Ok(MetricState {
        family: state.family.clone(),
        t,
        provenance: Provenance::ClosedForm,
    })
}

/// Returns the metric `c·g`. Time is rescaled parabolically (`t ↦ c·t`) so the
/// result is again a point on a Ricci flow.
pub fn rescale_metric(state: &MetricState, c: f64) -> Result<MetricState> {
    if !(c.is_finite() && c > 0.0) {
        return Err(invalid("c", format!("scale factor must be > 0, got {c}")));
    }
    let s = c.sqrt();
    let family = match &state.family {
        ManifoldFamily::RoundSphere { n, r0 } => ManifoldFamily::RoundSphere { n: *n, r0: r0 * s },
        ManifoldFamily::FlatTorus { n, lengths } => ManifoldFamily::FlatTorus {
            n: *n,
            lengths: lengths.iter().map(|l| l * s).collect(),
        },
        ManifoldFamily::ConformalS2 { phi } => {
            let shift = 0.5 * c.ln();
            ManifoldFamily::ConformalS2 {
                phi: phi.map(|p| p + shift)?,
            }
        }
    };
    let t = match state.family {
        ManifoldFamily::FlatTorus { .. } => state.t,
        _ => state.t * c,
    };
    Ok(MetricState {
        family,
        t,
        provenance: state.provenance,
    })
}

/// Checks "T < ∞ or λ₀(g₀) > 0" for a flow started at `state0`.
///
/// `horizon` is the flow's existence time (`None` for an eternal flow).
/// λ₀ comes from the discrete eigensolver at `resolution` wherever the state
/// can be discretized; round spheres of dimension ≠ 2 use the exact value
/// `R/4` (constant ground state).
pub fn hypothesis_status(
    state0: &MetricState,
    horizon: Option<f64>,
    resolution: usize,
    tolerance: f64,
) -> Result<HypothesisStatus> {
    let t_finite = horizon.is_some_and(f64::is_finite);
    let lambda0 = match state0.family {
        ManifoldFamily::RoundSphere { n, .. } if n != 2 => {
            state0.homogeneous_curvature().unwrap() / 4.0
        }
        _ => first_eigenvalue(&DiscreteMetric::new(state0, resolution)?)?,
    };
    Ok(HypothesisStatus::new(t_finite, lambda0, tolerance))
}

/// Nodes per side for a flat-torus axis, matching the meridian spacing π/N
/// of a sphere grid with `resolution` cells.
pub fn torus_axis_nodes(length: f64, resolution: usize) -> usize {
    ((length * resolution as f64 / PI).round() as usize).max(8)
}

pub(crate) fn grid_for(state: &MetricState, resolution: usize) -> Result<Arc<Grid>> {
    match &state.family {
        ManifoldFamily::RoundSphere { n: 2, .. } => Grid::theta(resolution),
        ManifoldFamily::RoundSphere { n, .. } => Err(Error::Unsupported(format!(
            "discretized fields on S^{n}; only n = 2 spheres are discretized"
        ))),
        ManifoldFamily::FlatTorus { lengths, .. } => {
            Grid::periodic(torus_axis_nodes(lengths[0], resolution), lengths[0])
        }
        ManifoldFamily::ConformalS2 { phi } => Ok(phi.grid().clone()),
    }
}
