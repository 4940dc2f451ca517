//! Heat semigroups `e^{-Ht}` of the discrete Schrödinger operators and their
//! Lᵖ → Lᵠ operator norms.
//!
//! Kernels are dense spectral exponentials `K(t) = V e^{-Λt} Vᵀ` so that
//! `(e^{-Ht}u)_i = Σ_j K_ij u_j w_j`. On rotationally symmetric spheres the
//! kernel is the zonal (ϕ-averaged) kernel; its rows at the poles agree with
//! the point kernel, so sup-type norms are realized within the radial class.
//! Flat tori are treated as tensor products of periodic factors, one per
//! side, and every norm below factorizes over them.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::calculus::{
    assemble_laplacian, potential_hs, schrodinger_operator, DiscreteMetric, SpectralDecomposition,
};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::manifold::ManifoldFamily;
use crate::report::InequalityReport;

pub const RADIAL_CLASS_NOTE: &str =
    "norms exact within the rotationally symmetric class (pole-centred kernel rows)";

/// Log-spaced points `a..=b`.
pub fn log_spaced(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let (la, lb) = (a.ln(), b.ln());
    (0..count)
        .map(|k| (la + (lb - la) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

/// `t` grid of the small-time window: 16 log-spaced points in [1e-3, 1].
pub fn default_time_grid() -> Vec<f64> {
    log_spaced(1e-3, 1.0, 16)
}

pub const DEFAULT_FIT_WINDOW: (f64, f64) = (1e-3, 1e-1);

#[derive(Clone, Debug)]
pub struct KernelMatrix {
    t: f64,
    matrix: DMatrix<f64>,
    weights: Vec<f64>,
}

impl KernelMatrix {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(e^{-Ht}u)_i = Σ_j K_ij u_j w_j`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.weights.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * u[j] * self.weights[j]).sum())
            .collect()
    }

    /// Kernel of `e^{-H t_self} e^{-H t_other}`: `K_a W K_b`.
    pub fn compose(&self, other: &KernelMatrix) -> DMatrix<f64> {
        let mut scaled = other.matrix.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= self.weights[i];
        }
        &self.matrix * scaled
    }
}

pub fn heat_kernel(decomp: &SpectralDecomposition, t: f64) -> Result<KernelMatrix> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid("t", format!("heat kernel time must be > 0, got {t}")));
    }
    let v = decomp.vectors();
    let mut scaled = v.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        col *= (-decomp.values()[k] * t).exp();
    }
    Ok(KernelMatrix {
        t,
        matrix: scaled * v.transpose(),
        weights: decomp.weights().to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormPair {
    OneToInf,
    TwoToInf,
    OneToTwo,
    /// `Lᵠ → L∞` for `q > 1`.
    QToInf(f64),
}

impl NormPair {
    pub fn label(&self) -> String {
        match self {
            NormPair::OneToInf => "1->inf".into(),
            NormPair::TwoToInf => "2->inf".into(),
            NormPair::OneToTwo => "1->2".into(),
            NormPair::QToInf(q) => format!("{q}->inf"),
        }
    }
}

/// Exact operator norm of `u ↦ Σ_j K_ij u_j w_j` between discrete weighted
/// Lᵖ spaces.
pub fn operator_norm(kernel: &KernelMatrix, pair: NormPair) -> Result<f64> {
    let k = &kernel.matrix;
    let w = &kernel.weights;
    let n = w.len();
    let row_norm = |i: usize, e: f64| -> f64 {
        (0..n).map(|j| k[(i, j)].abs().powf(e) * w[j]).sum::<f64>().powf(1.0 / e)
    };
    Ok(match pair {
        NormPair::OneToInf => k.iter().fold(0.0, |m, v| m.max(v.abs())),
        NormPair::TwoToInf => (0..n).map(|i| row_norm(i, 2.0)).fold(0.0, f64::max),
        NormPair::OneToTwo => (0..n)
            .map(|j| (0..n).map(|i| k[(i, j)].powi(2) * w[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max),
        NormPair::QToInf(q) => {
            if !(q.is_finite() && q > 1.0) {
                return Err(invalid("q", format!("q->inf norm needs 1 < q < inf, got {q}")));
            }
            let dual = q / (q - 1.0);
            (0..n).map(|i| row_norm(i, dual)).fold(0.0, f64::max)
        }
    })
}

/// `e^{-(H + shift)t}` for the operator `H_s = -Δ + (R + max R₋)/4` of a
/// discretized state, stored as one spectral factor per tensor direction.
#[derive(Clone, Debug)]
pub struct HeatSemigroup {
    dimension: usize,
    shift: f64,
    factors: Vec<SpectralDecomposition>,
}

impl HeatSemigroup {
    pub fn new(metric: &DiscreteMetric, shift: f64) -> Result<Self> {
        let factors = match metric.state().family() {
            ManifoldFamily::FlatTorus { lengths, .. } => {
                let h = metric.grid().spacing();
                let mut factors: Vec<SpectralDecomposition> = Vec::with_capacity(lengths.len());
                for (k, &len) in lengths.iter().enumerate() {
                    let nodes = ((len / h).round() as usize).max(8);
                    let reuse = (0..k).find(|&j| lengths[j] == len && j > 0);
                    if let Some(j) = reuse {
                        factors.push(factors[j].clone());
                        continue;
                    }
                    let grid = Grid::periodic(nodes, len)?;
                    let op = assemble_laplacian(&grid, &vec![1.0; nodes], grid.base_weights().to_vec());
                    let op = if k == 0 { op.shifted(shift) } else { op };
                    factors.push(op.decompose());
                }
                factors
            }
            _ => {
                let op = schrodinger_operator(metric, &potential_hs(metric))?.shifted(shift);
                vec![op.decompose()]
            }
        };
        Ok(HeatSemigroup {
            dimension: metric.dimension(),
            shift,
            factors,
        })
    }

    /// Semigroup of a single self-adjoint factor in dimension `dimension`.
    pub fn from_decomposition(decomp: SpectralDecomposition, dimension: usize) -> Self {
        HeatSemigroup {
            dimension,
            shift: 0.0,
            factors: vec![decomp],
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Factor acting on fields of the discretized state.
    pub fn primary(&self) -> &SpectralDecomposition {
        &self.factors[0]
    }

    pub fn factors(&self) -> &[SpectralDecomposition] {
        &self.factors
    }

    /// Kernel acting on fields of the discretized state.
    pub fn kernel(&self, t: f64) -> Result<KernelMatrix> {
        heat_kernel(&self.factors[0], t)
    }

    pub fn norm(&self, t: f64, pair: NormPair) -> Result<f64> {
        self.factors
            .iter()
            .map(|f| operator_norm(&heat_kernel(f, t)?, pair))
            .product()
    }

    pub fn apply(&self, t: f64, u: &ScalarField) -> Result<ScalarField> {
        if !u.same_grid(self.factors[0].grid()) {
            return Err(Error::GridMismatch("field does not live on the semigroup grid".into()));
        }
        ScalarField::new(u.grid().clone(), self.kernel(t)?.apply(u.values()))
    }
}

/// Samples of an operator norm with a log-log least-squares power law
/// `ν(t) ≈ C t^{-α}` fitted over `window`.
#[derive(Clone, Debug)]
pub struct OperatorNormCurve {
    pub pair: NormPair,
    pub samples: Vec<(f64, f64)>,
    pub window: (f64, f64),
    pub alpha: f64,
    pub prefactor: f64,
    /// RMS of the log residuals of the fit.
    pub residual: f64,
}

impl OperatorNormCurve {
    /// `max_t t^{exponent} ν(t)` over the samples.
    pub fn empirical_constant(&self, exponent: f64) -> f64 {
        self.samples
            .iter()
            .map(|(t, v)| t.powf(exponent) * v)
            .fold(0.0, f64::max)
    }
}

fn fit_power_law(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (-slope, intercept.exp(), rms)
}

pub fn ultracontractivity_curve(
    semigroup: &HeatSemigroup,
    pair: NormPair,
    t_grid: &[f64],
    window: (f64, f64),
) -> Result<OperatorNormCurve> {
    if t_grid.len() < 8 {
        return Err(invalid("t_grid", "need at least 8 sample times"));
    }
    if t_grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) || t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("t_grid", "times must be increasing and inside (0, 1]"));
    }
    let samples = t_grid
        .par_iter()
        .map(|&t| semigroup.norm(t, pair).map(|v| (t, v)))
        .collect::<Result<Vec<_>>>()?;
    let tol = 1e-12;
    let in_window: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 * (1.0 - tol) && *t <= window.1 * (1.0 + tol))
        .collect();
    if in_window.len() < 2 {
        return Err(invalid("window", "fewer than two samples inside the fit window"));
    }
    let (alpha, prefactor, residual) = fit_power_law(&in_window);
    Ok(OperatorNormCurve {
        pair,
        samples,
        window,
        alpha,
        prefactor,
        residual,
    })
}

/// Small-time constant `C₄ = max_{t∈(0,1]} t^{n/4} ‖e^{-Ht}‖_{2→∞}`.
pub fn l2_to_linf_constant(semigroup: &HeatSemigroup, t_grid: &[f64]) -> Result<f64> {
    let n = semigroup.dimension() as f64;
    let vals = t_grid
        .par_iter()
        .map(|&t| Ok(t.powf(n / 4.0) * semigroup.norm(t, NormPair::TwoToInf)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

/// `C₆ = max_t t^{n/2} ‖e^{-H̃t}‖_{1→∞}` over 33 log-spaced times in [1e-3, 10].
pub fn shifted_constant(shifted: &HeatSemigroup) -> Result<f64> {
    let n = shifted.dimension() as f64;
    let vals = log_spaced(1e-3, 10.0, 33)
        .par_iter()
        .map(|&t| Ok(t.powf(n / 2.0) * shifted.norm(t, NormPair::OneToInf)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(vals.into_iter().fold(0.0, f64::max))
}

#[derive(Clone, Debug)]
pub struct ShiftedBound {
    /// `‖e^{-H̃t}‖_{1→∞} <= e^{1-t} ‖e^{-H̃}‖_{1→∞}` for `t >= 1`.
    pub report: InequalityReport,
    pub c6: f64,
}

pub fn shifted_norm_bound_check(shifted: &HeatSemigroup, t: f64) -> Result<ShiftedBound> {
    if shifted.shift() < 1.0 - 1e-12 {
        return Err(invalid("shift", "expected the semigroup of H + 1"));
    }
    if t < 1.0 {
        return Err(invalid("t", format!("the e^(1-t) bound needs t >= 1, got {t}")));
    }
    let lhs = shifted.norm(t, NormPair::OneToInf)?;
    let rhs = (1.0 - t).exp() * shifted.norm(1.0, NormPair::OneToInf)?;
    let c6 = shifted_constant(shifted)?;
    Ok(ShiftedBound {
        report: InequalityReport::new("shifted_semigroup_bound", lhs, rhs).at_time(t),
        c6,
    })
}

/// `‖e^{-H̃t}‖_{q→∞} <= C₆^{1/q} t^{-n/(2q)}`.
pub fn q_to_infty_check(shifted: &HeatSemigroup, t: f64, q: f64, c6: f64) -> Result<InequalityReport> {
    if !(q.is_finite() && q >= 1.0) {
        return Err(invalid("q", format!("need q >= 1, got {q}")));
    }
    let pair = if q == 1.0 { NormPair::OneToInf } else { NormPair::QToInf(q) };
    let n = shifted.dimension() as f64;
    let lhs = shifted.norm(t, pair)?;
    let rhs = c6.powf(1.0 / q) * t.powf(-n / (2.0 * q));
    Ok(InequalityReport::new("q_to_inf_bound", lhs, rhs).at_time(t).with_exponents(q, f64::INFINITY))
}

/// `H̃^{-1/2} u` for the shifted operator `H̃ = H + 1`.
pub fn inv_sqrt_apply(shifted: &SpectralDecomposition, u: &ScalarField) -> Result<ScalarField> {
    let lowest = shifted.values()[0];
    if lowest < 0.5 {
        return Err(Error::BrokenShift(lowest));
    }
    if !u.same_grid(shifted.grid()) {
        return Err(Error::GridMismatch("field does not live on the operator grid".into()));
    }
    ScalarField::new(
        u.grid().clone(),
        shifted.apply_function(u.values(), |l| l.powf(-0.5)),
    )
}

/// `|ν_{1→2}(t) - ν_{2→∞}(t)| <= 1e-10 · max`.
pub fn duality_check(semigroup: &HeatSemigroup, t: f64) -> Result<InequalityReport> {
    let a = semigroup.norm(t, NormPair::OneToTwo)?;
    let b = semigroup.norm(t, NormPair::TwoToInf)?;
    Ok(InequalityReport::new("semigroup_duality", (a - b).abs(), 1e-10 * a.max(b))
        .with_tolerances(0.0, 0.0)
        .at_time(t))
}

/// `ν_{1→∞}(t) <= ν_{2→∞}(t/2) · ν_{1→2}(t/2)`.
pub fn splitting_check(semigroup: &HeatSemigroup, t: f64) -> Result<InequalityReport> {
    let lhs = semigroup.norm(t, NormPair::OneToInf)?;
    let rhs = semigroup.norm(t / 2.0, NormPair::TwoToInf)? * semigroup.norm(t / 2.0, NormPair::OneToTwo)?;
    Ok(InequalityReport::new("semigroup_splitting", lhs, rhs)
        .with_tolerances(0.0, 1e-10)
        .at_time(t))
}

/// For `u >= 0`: `-min(e^{-Ht}u) <= 1e-10 ‖u‖_∞`.
pub fn positivity_check(semigroup: &HeatSemigroup, t: f64, u: &ScalarField, witness: &str) -> Result<InequalityReport> {
    if u.min() < 0.0 {
        return Err(invalid("u", "positivity check needs a nonnegative field"));
    }
    let out = semigroup.apply(t, u)?;
    Ok(InequalityReport::new("semigroup_positivity", -out.min(), 1e-10 * u.max_abs())
        .with_tolerances(0.0, 0.0)
        .at_time(t)
        .with_witness(witness))
}

/// `‖e^{-Ht}u‖_∞ <= (1 + 1e-10) ‖u‖_∞`.
pub fn contraction_check(semigroup: &HeatSemigroup, t: f64, u: &ScalarField, witness: &str) -> Result<InequalityReport> {
    let out = semigroup.apply(t, u)?;
    Ok(
        InequalityReport::new("semigroup_linf_contraction", out.max_abs(), (1.0 + 1e-10) * u.max_abs())
            .with_tolerances(0.0, 0.0)
            .at_time(t)
            .with_witness(witness),
    )
}

/// `K(a)∘K(b) = K(a+b)`: reports the max relative entry deviation against 1e-8.
pub fn semigroup_law_check(semigroup: &HeatSemigroup, a: f64, b: f64) -> Result<InequalityReport> {
    let ka = semigroup.kernel(a)?;
    let kb = semigroup.kernel(b)?;
    let kab = semigroup.kernel(a + b)?;
    let composed = ka.compose(&kb);
    let scale = kab.matrix().iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    let dev = (composed - kab.matrix()).iter().fold(0.0, |m: f64, v| m.max(v.abs())) / scale;
    Ok(InequalityReport::new("semigroup_law", dev, 1e-8)
        .with_tolerances(0.0, 0.0)
        .at_time(a + b))
}

/// `|K_ij - K_ji| <= 1e-10 max|K|` and `K_ij >= -1e-10 max K`.
pub fn kernel_symmetry_check(semigroup: &HeatSemigroup, t: f64) -> Result<InequalityReport> {
    let k = semigroup.kernel(t)?;
    let m = k.matrix();
    let scale = m.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
    let mut dev: f64 = 0.0;
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((m[(i, j)] - m[(j, i)]).abs());
            dev = dev.max(-m[(i, j)]);
        }
    }
    Ok(InequalityReport::new("kernel_symmetry", dev, 1e-10 * scale)
        .with_tolerances(0.0, 0.0)
        .at_time(t))
}
