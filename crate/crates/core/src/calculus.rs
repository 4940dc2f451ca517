//! Quadrature, Lᵖ norms, gradients, and the weighted-symmetric operators
//! `-Δ_g + V` on a discretized metric.
//!
//! All operators are assembled in the node basis and are self-adjoint for
//! the weighted inner product `⟨u, v⟩ = Σ w_i u_i v_i`, where `w_i` is the
//! metric area element of node `i`. Eigensolves go through the similarity
//! transform `D^{1/2} A D^{-1/2}` with `D = diag(w)`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, ScalarField};
use crate::manifold::{self, ManifoldFamily, MetricState};

pub const DEFAULT_RESOLUTION: usize = 128;

/// A metric state sampled on a node grid: area weights, conformal factors and
/// scalar curvature at the nodes.
///
/// Flat tori are reduced to their first side: fields depend on `x_1` only and
/// the remaining sides enter as a constant transverse volume in the weights.
#[derive(Clone, Debug)]
pub struct DiscreteMetric {
    state: MetricState,
    grid: Arc<Grid>,
    conformal: Vec<f64>,
    weights: Vec<f64>,
    curvature: ScalarField,
    transverse: f64,
}

impl DiscreteMetric {
    pub fn new(state: &MetricState, resolution: usize) -> Result<Self> {
        let grid = manifold::grid_for(state, resolution)?;
        let (conformal, transverse): (Vec<f64>, f64) = match state.family() {
            ManifoldFamily::RoundSphere { .. } => {
                let r = state.radius().unwrap();
                (vec![r * r; grid.len()], 1.0)
            }
            ManifoldFamily::FlatTorus { lengths, .. } => {
                (vec![1.0; grid.len()], lengths[1..].iter().product())
            }
            ManifoldFamily::ConformalS2 { phi } => {
                (phi.values().iter().map(|p| (2.0 * p).exp()).collect(), 1.0)
            }
        };
        let weights = grid
            .base_weights()
            .iter()
            .zip(&conformal)
            .map(|(b, c)| b * c * transverse)
            .collect();
        let curvature = manifold::scalar_curvature(state, &grid)?;
        Ok(DiscreteMetric {
            state: state.clone(),
            grid,
            conformal,
            weights,
            curvature,
            transverse,
        })
    }

    pub fn state(&self) -> &MetricState {
        &self.state
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn curvature(&self) -> &ScalarField {
        &self.curvature
    }

    pub fn dimension(&self) -> usize {
        self.state.dimension()
    }

    pub fn t(&self) -> f64 {
        self.state.t()
    }

    /// `e^{2φ_i}`.
    pub fn conformal_factor(&self) -> &[f64] {
        &self.conformal
    }

    /// Discrete volume `Σ w_i`.
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn transverse_volume(&self) -> f64 {
        self.transverse
    }

    /// `max_M R₋` with `R₋ = -min(0, R)`.
    pub fn max_negative_curvature(&self) -> f64 {
        (-self.curvature.min()).max(0.0)
    }

    /// Field on this metric's grid.
    pub fn field(&self, values: Vec<f64>) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), values)
    }

    /// Weighted integral `Σ w_i f_i`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// `‖u‖_p = (Σ w_i |u_i|^p)^{1/p}`, or `max |u_i|` for `p = ∞`.
pub fn lp_norm(u: &ScalarField, p: f64, metric: &DiscreteMetric) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(invalid("p", format!("exponent must be >= 1, got {p}")));
    }
    u.check_grid(metric.grid())?;
    Ok(lp_norm_values(u.values(), p, metric.weights()))
}

pub fn lp_norm_values(u: &[f64], p: f64, weights: &[f64]) -> f64 {
    if p.is_infinite() {
        return u.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = u
        .iter()
        .zip(weights)
        .map(|(v, w)| w * v.abs().powf(p))
        .sum();
    s.powf(1.0 / p)
}

/// `|∇u|_i = e^{-φ_i} |Du|_i` with `Du` the centered difference in the grid
/// coordinate (one-sided at the first and last meridian node).
pub fn gradient_norm_field(u: &ScalarField, metric: &DiscreteMetric) -> Result<ScalarField> {
    u.check_grid(metric.grid())?;
    let values = gradient_norm_values(u.values(), metric);
    ScalarField::new(metric.grid.clone(), values)
}

pub(crate) fn gradient_norm_values(u: &[f64], metric: &DiscreteMetric) -> Vec<f64> {
    let grid = metric.grid();
    let h = grid.spacing();
    (0..u.len())
        .map(|i| {
            let d = match grid.neighbours(i) {
                (Some(a), Some(b)) => (u[b] - u[a]) / (2.0 * h),
                (None, Some(b)) => (u[b] - u[i]) / h,
                (Some(a), None) => (u[i] - u[a]) / h,
                (None, None) => 0.0,
            };
            d.abs() / metric.conformal[i].sqrt()
        })
        .collect()
}

/// `-Δ_g + V` in the node basis with the weights of its inner product.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Arc<Grid>,
    matrix: DMatrix<f64>,
    weights: Vec<f64>,
    potential: Vec<f64>,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.matrix[(i, j)] * u[j]).sum())
            .collect()
    }

    /// `⟨u, v⟩_w`.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(v))
            .map(|(w, (a, b))| w * a * b)
            .sum()
    }

    pub fn rayleigh_quotient(&self, u: &[f64]) -> f64 {
        self.inner(&self.apply(u), u) / self.inner(u, u)
    }

    /// `A + c·I` (potential shifted by `c`).
    pub fn shifted(&self, c: f64) -> DiscreteOperator {
        let mut op = self.clone();
        for i in 0..op.len() {
            op.matrix[(i, i)] += c;
            op.potential[i] += c;
        }
        op
    }

    pub fn decompose(&self) -> SpectralDecomposition {
        let n = self.len();
        let sq: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let a = sq[i] * self.matrix[(i, j)] / sq[j];
                let b = sq[j] * self.matrix[(j, i)] / sq[i];
                s[(i, j)] = 0.5 * (a + b);
            }
        }
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let mut vectors = DMatrix::<f64>::zeros(n, n);
        for (col, &k) in order.iter().enumerate() {
            // fix the sign so the largest-magnitude entry is positive
            let q = eig.eigenvectors.column(k);
            let imax = q.iamax();
            let sign = if q[imax] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                vectors[(i, col)] = sign * q[i] / sq[i];
            }
        }
        SpectralDecomposition {
            grid: self.grid.clone(),
            values,
            vectors,
            weights: self.weights.clone(),
        }
    }
}

/// Eigenpairs of a [`DiscreteOperator`], eigenvalues ascending, eigenvectors
/// (columns) orthonormal in the weighted inner product.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    grid: Arc<Grid>,
    values: Vec<f64>,
    vectors: DMatrix<f64>,
    weights: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `f(A) u = V f(Λ) Vᵀ D u`.
    pub fn apply_function(&self, u: &[f64], f: impl Fn(f64) -> f64) -> Vec<f64> {
        let n = self.len();
        let coeffs: Vec<f64> = (0..n)
            .map(|k| {
                let c: f64 = (0..n)
                    .map(|j| self.vectors[(j, k)] * self.weights[j] * u[j])
                    .sum();
                c * f(self.values[k])
            })
            .collect();
        (0..n)
            .map(|i| (0..n).map(|k| self.vectors[(i, k)] * coeffs[k]).sum())
            .collect()
    }
}

/// Assembles `-e^{-2φ}(1/s)(s u')'` (meridian) or `-u''` (periodic) with the
/// given node weights. Off-diagonal entries satisfy `w_i A_ij = w_j A_ji`.
pub(crate) fn assemble_laplacian(
    grid: &Arc<Grid>,
    conformal: &[f64],
    weights: Vec<f64>,
) -> DiscreteOperator {
    let n = grid.len();
    let h2 = grid.spacing() * grid.spacing();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let scale = 1.0 / (h2 * grid.node_factor(i) * conformal[i]);
        let (lo, hi) = grid.neighbours(i);
        if let Some(j) = hi {
            let c = grid.face_factor(i) * scale;
            a[(i, j)] -= c;
            a[(i, i)] += c;
        }
        if let Some(j) = lo {
            let c = grid.face_factor(j) * scale;
            a[(i, j)] -= c;
            a[(i, i)] += c;
        }
    }
    DiscreteOperator {
        grid: grid.clone(),
        matrix: a,
        weights,
        potential: vec![0.0; n],
    }
}

/// `-Δ_g` with zero flux through the poles (meridian) or periodic closure
/// along the first torus side.
pub fn laplacian_operator(metric: &DiscreteMetric) -> DiscreteOperator {
    assemble_laplacian(&metric.grid, &metric.conformal, metric.weights.clone())
}

/// `(R + max_M R₋)/4`, the potential of `H_s`.
pub fn potential_hs(metric: &DiscreteMetric) -> ScalarField {
    let shift = metric.max_negative_curvature();
    metric.curvature.map(|r| (r + shift) / 4.0).unwrap()
}

/// `R/4`, the potential whose ground state energy is λ₀.
pub fn potential_lambda0(metric: &DiscreteMetric) -> ScalarField {
    metric.curvature.scaled(0.25)
}

/// `-Δ_g + diag(potential)`.
pub fn schrodinger_operator(
    metric: &DiscreteMetric,
    potential: &ScalarField,
) -> Result<DiscreteOperator> {
    if !potential.same_grid(metric.grid()) {
        return Err(Error::GridMismatch(
            "potential and metric live on different grids".into(),
        ));
    }
    let mut op = laplacian_operator(metric);
    for (i, v) in potential.values().iter().enumerate() {
        op.matrix[(i, i)] += v;
        op.potential[i] = *v;
    }
    Ok(op)
}

/// Smallest eigenvalue of `-Δ_g + R/4`.
///
/// Computed in the rotationally symmetric class, which contains the ground
/// state because the potential is symmetric.
pub fn first_eigenvalue(metric: &DiscreteMetric) -> Result<f64> {
    let op = schrodinger_operator(metric, &potential_lambda0(metric))?;
    Ok(op.decompose().values()[0])
}

/// `Q(u) = Σ w_i (|∇u|_i² + V_i u_i²)` with `V = (R + max R₋)/4`.
pub fn quadratic_form(metric: &DiscreteMetric, u: &ScalarField) -> Result<f64> {
    u.check_grid(metric.grid())?;
    let grad = gradient_norm_values(u.values(), metric);
    let pot = potential_hs(metric);
    let integrand: Vec<f64> = grad
        .iter()
        .zip(u.values().iter().zip(pot.values()))
        .map(|(g, (v, p))| g * g + p * v * v)
        .collect();
    Ok(metric.integrate(&integrand))
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::manifold::{make_conformal_s2, make_flat_torus, make_round_sphere, rescale_metric, ConformalPreset};

    fn unit_sphere(n: usize) -> DiscreteMetric {
        DiscreteMetric::new(&make_round_sphere(2, 1.0).unwrap(), n).unwrap()
    }

    fn torus() -> DiscreteMetric {
        DiscreteMetric::new(&make_flat_torus(2, vec![2.0 * PI, 2.0 * PI]).unwrap(), 64).unwrap()
    }

    fn cos_field(m: &DiscreteMetric) -> ScalarField {
        ScalarField::from_fn(m.grid().clone(), |i| m.grid().nodes()[i].cos()).unwrap()
    }

    #[test]
    fn lp_norms_of_simple_fields() {
        let m = unit_sphere(128);
        let one = ScalarField::constant(m.grid().clone(), 1.0);
        let n2 = lp_norm(&one, 2.0, &m).unwrap();
        assert!((n2 - (4.0 * PI).sqrt()).abs() < 1e-3 * n2);
        let c = ScalarField::constant(m.grid().clone(), 3.0);
        for p in [1.0, 1.5, 4.0] {
            let v = lp_norm(&c, p, &m).unwrap();
            assert!((v - 3.0 * m.volume().powf(1.0 / p)).abs() < 1e-12 * v);
        }
        let cn = lp_norm(&cos_field(&m), 2.0, &m).unwrap();
        assert!((cn - (4.0 * PI / 3.0).sqrt()).abs() < 1e-3);
        assert_eq!(lp_norm(&c, f64::INFINITY, &m).unwrap(), 3.0);
        assert!(lp_norm(&c, 0.5, &m).is_err());
    }

    #[test]
    fn gradient_of_cosine() {
        let m = unit_sphere(128);
        let g = gradient_norm_field(&cos_field(&m), &m).unwrap();
        let h = m.grid().spacing();
        for (i, th) in m.grid().nodes().iter().enumerate().skip(1).take(126) {
            assert!((g.values()[i] - th.sin()).abs() < h * h, "node {i}");
        }
        let zero = gradient_norm_field(&ScalarField::constant(m.grid().clone(), 2.0), &m).unwrap();
        assert_eq!(zero.max_abs(), 0.0);

        let state = rescale_metric(&make_round_sphere(2, 1.0).unwrap(), 4.0).unwrap();
        let big = DiscreteMetric::new(&state, 128).unwrap();
        let g4 = gradient_norm_field(&cos_field(&big), &big).unwrap();
        for (a, b) in g4.values().iter().zip(g.values()) {
            assert!((a - 0.5 * b).abs() < 1e-14);
        }
    }

    #[test]
    fn laplacian_is_weighted_symmetric_with_constant_kernel() {
        let bumped = make_conformal_s2(96, ConformalPreset::Bumped { a: 0.3, b: 0.1 }).unwrap();
        for m in [unit_sphere(64), torus(), DiscreteMetric::new(&bumped, 96).unwrap()] {
            let op = laplacian_operator(&m);
            let a = op.matrix();
            let w = op.weights();
            let n = op.len();
            for i in 0..n {
                let row: f64 = (0..n).map(|j| a[(i, j)]).sum();
                assert!(row.abs() < 1e-10 * a[(i, i)].abs().max(1.0));
                for j in 0..n {
                    let lhs = w[i] * a[(i, j)];
                    let rhs = w[j] * a[(j, i)];
                    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-300));
                }
            }
        }
    }

    #[test]
    fn laplacian_of_cosine_is_twice_cosine() {
        let m = unit_sphere(128);
        let op = laplacian_operator(&m);
        let u = cos_field(&m);
        let lu = op.apply(u.values());
        let h = m.grid().spacing();
        for (i, th) in m.grid().nodes().iter().enumerate() {
            assert!((lu[i] - 2.0 * th.cos()).abs() < 4.0 * h * h, "node {i}: {}", lu[i]);
        }
    }

    #[test]
    fn sphere_spectrum_and_second_order_convergence() {
        let errs: Vec<Vec<f64>> = [64, 128]
            .iter()
            .map(|&n| {
                let vals = laplacian_operator(&unit_sphere(n)).decompose().values().to_vec();
                (1..=5).map(|k| (vals[k] - (k * (k + 1)) as f64).abs()).collect()
            })
            .collect();
        assert!(errs[1][0] / 2.0 < 1e-3);
        for (k, (a, b)) in errs[0].iter().zip(&errs[1]).enumerate() {
            let ratio = a / b;
            assert!((3.5..4.5).contains(&ratio), "k={} ratio={ratio}", k + 1);
        }
    }

    #[test]
    fn eigenvectors_are_weighted_orthonormal() {
        let m = DiscreteMetric::new(
            &make_conformal_s2(64, ConformalPreset::Bumped { a: 0.3, b: 0.0 }).unwrap(),
            64,
        )
        .unwrap();
        let op = schrodinger_operator(&m, &potential_hs(&m)).unwrap();
        let d = op.decompose();
        let v = d.vectors();
        let n = d.len();
        let lmax = d.values()[n - 1].abs();
        for k in 0..n {
            let col: Vec<f64> = v.column(k).iter().copied().collect();
            let av = op.apply(&col);
            for i in 0..n {
                assert!((av[i] - d.values()[k] * col[i]).abs() <= 1e-8 * lmax);
            }
            for l in 0..n {
                let other: Vec<f64> = v.column(l).iter().copied().collect();
                let ip = op.inner(&col, &other);
                let expect = if k == l { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-10, "({k},{l}) {ip}");
            }
        }
    }

    #[test]
    fn first_eigenvalue_oracles() {
        assert!((first_eigenvalue(&unit_sphere(128)).unwrap() - 0.5).abs() < 1e-6);
        assert!(first_eigenvalue(&torus()).unwrap().abs() < 1e-10);
        let r2 = DiscreteMetric::new(&make_round_sphere(2, 2.0).unwrap(), 128).unwrap();
        assert!((first_eigenvalue(&r2).unwrap() - 0.125).abs() < 1e-6);
    }

    #[test]
    fn potentials() {
        let m = unit_sphere(64);
        assert!(potential_hs(&m).values().iter().all(|v| (v - 0.5).abs() < 1e-14));
        let t = torus();
        assert!(potential_hs(&t).values().iter().all(|v| *v == 0.0));
        let other = unit_sphere(32);
        let wrong = potential_hs(&other);
        assert!(schrodinger_operator(&m, &wrong).is_err());
    }

    #[test]
    fn potential_hs_nonnegative_with_negative_curvature() {
        // φ = 1.2 cos²θ makes R negative around the equator
        let s = make_conformal_s2(128, ConformalPreset::Bumped { a: 0.0, b: 1.2 }).unwrap();
        let m = DiscreteMetric::new(&s, 128).unwrap();
        assert!(m.curvature().min() < 0.0);
        let pot = potential_hs(&m);
        assert!(pot.min() >= -1e-15);
        let expect = -m.curvature().min();
        assert!((m.max_negative_curvature() - expect).abs() < 1e-15);
    }

    #[test]
    fn quadratic_form_examples() {
        let m = unit_sphere(128);
        let c = ScalarField::constant(m.grid().clone(), m.volume().powf(-0.5));
        assert!((quadratic_form(&m, &c).unwrap() - 0.5).abs() < 1e-12);
        let q = quadratic_form(&m, &cos_field(&m)).unwrap();
        let expect = 2.5 * 4.0 * PI / 3.0;
        assert!((q - expect).abs() < 5e-3 * expect, "{q} vs {expect}");
        let t = torus();
        let u = ScalarField::from_fn(t.grid().clone(), |i| t.grid().nodes()[i].sin()).unwrap();
        let g = gradient_norm_field(&u, &t).unwrap();
        let e = lp_norm(&g, 2.0, &t).unwrap().powi(2);
        assert!((quadratic_form(&t, &u).unwrap() - e).abs() < 1e-12 * e);
    }
}
