//! Geodesic balls about the poles, the κ formula and the volume iteration
//! behind the noncollapsing estimate.
//!
//! Distances from a pole are `d(θ) = ∫₀^θ e^{φ}`, exact for the cell-wise
//! constant conformal factor. Ball volumes integrate `e^{2φ} sin θ` exactly
//! in each cell, so round spheres reproduce `2π r₀²(1 - cos(r/r₀))` to
//! rounding error. Volumes inside the iteration chain use the discrete node
//! measure instead, which keeps the Hölder and layer-cake steps exact.

use std::f64::consts::{PI, SQRT_2};
use std::io::{self, Write};

use rayon::prelude::*;

use crate::calculus::{gradient_norm_values, lp_norm_values, DiscreteMetric};
use crate::error::{invalid, Error, Result};
use crate::flow::FlowTrace;
use crate::grid::{GridKind, ScalarField};
use crate::inequality::SobolevExponents;
use crate::manifold::{
    hypothesis_status, rescale_metric, unit_ball_volume, HypothesisStatus, ManifoldFamily, DEFAULT_LAMBDA_TOL,
};
use crate::report::{fmt_f64, InequalityReport};
use crate::semigroup::log_spaced;

pub const DEFAULT_SAFETY: f64 = 1.1;
pub const DEFAULT_RADII: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pole {
    North,
    South,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BallRegion {
    pub pole: Pole,
    pub radius: f64,
    /// Coordinate cutoff with `d(θ*) = r`, measured from `pole`.
    pub theta_star: f64,
    pub volume: f64,
    /// Largest nodal curvature over nodes with `d(θ_i) < r` (the node nearest
    /// the centre when none qualifies).
    pub max_curvature: f64,
}

/// Cell-centred quantities reordered so that index 0 touches `pole`.
struct Profile {
    h: f64,
    faces: Vec<f64>,
    factor: Vec<f64>,
    curvature: Vec<f64>,
    weights: Vec<f64>,
}

impl Profile {
    fn new(metric: &DiscreteMetric, pole: Pole) -> Result<Self> {
        if !matches!(metric.grid().kind(), GridKind::Theta) {
            return Err(Error::Unsupported("pole-centred balls need a sphere grid".into()));
        }
        let mut factor: Vec<f64> = metric.conformal_factor().iter().map(|c| c.sqrt()).collect();
        let mut curvature = metric.curvature().values().to_vec();
        let mut weights = metric.weights().to_vec();
        if pole == Pole::South {
            factor.reverse();
            curvature.reverse();
            weights.reverse();
        }
        let h = metric.grid().spacing();
        let mut faces = Vec::with_capacity(factor.len() + 1);
        faces.push(0.0);
        for f in &factor {
            faces.push(faces.last().unwrap() + f * h);
        }
        Ok(Profile {
            h,
            faces,
            factor,
            curvature,
            weights,
        })
    }

    fn diameter(&self) -> f64 {
        *self.faces.last().unwrap()
    }

    fn centre_distance(&self, i: usize) -> f64 {
        self.faces[i] + 0.5 * self.factor[i] * self.h
    }

    fn theta_star(&self, r: f64) -> f64 {
        let k = self.faces.partition_point(|d| *d <= r).clamp(1, self.factor.len());
        let i = k - 1;
        ((i as f64 + (r - self.faces[i]) / (self.factor[i] * self.h)) * self.h).min(PI)
    }

    fn volume(&self, theta_star: f64) -> f64 {
        let mut v = 0.0;
        for (i, f) in self.factor.iter().enumerate() {
            let a = i as f64 * self.h;
            if a >= theta_star {
                break;
            }
            let b = ((i + 1) as f64 * self.h).min(theta_star);
            v += f * f * (a.cos() - b.cos());
        }
        2.0 * PI * v
    }
}

pub fn geodesic_ball(metric: &DiscreteMetric, r: f64, pole: Pole) -> Result<BallRegion> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(invalid("r", format!("radius must be >= 0, got {r}")));
    }
    if let ManifoldFamily::FlatTorus { n, lengths } = metric.state().family() {
        let half = lengths.iter().cloned().fold(f64::INFINITY, f64::min) / 2.0;
        if r > half {
            return Err(invalid("r", format!("torus balls are Euclidean only up to r = {half}")));
        }
        return Ok(BallRegion {
            pole,
            radius: r,
            theta_star: r,
            volume: unit_ball_volume(*n) * r.powi(*n as i32),
            max_curvature: 0.0,
        });
    }
    let prof = Profile::new(metric, pole)?;
    let diam = prof.diameter();
    if r > diam * (1.0 + 1e-12) {
        return Err(invalid("r", format!("radius {r} exceeds the pole-to-pole distance {diam}")));
    }
    let theta_star = prof.theta_star(r.min(diam));
    let volume = prof.volume(theta_star);
    let mut max_curvature = prof.curvature[0];
    for i in 0..prof.factor.len() {
        if prof.centre_distance(i) < r {
            max_curvature = max_curvature.max(prof.curvature[i]);
        } else {
            break;
        }
    }
    Ok(BallRegion {
        pole,
        radius: r,
        theta_star,
        volume,
        max_curvature,
    })
}

/// `u_i = max(0, r1 - d(θ_i))` about the north pole.
pub fn cutoff_function(metric: &DiscreteMetric, r1: f64) -> Result<ScalarField> {
    if !(r1.is_finite() && r1 >= 0.0) {
        return Err(invalid("r1", format!("need r1 >= 0, got {r1}")));
    }
    let prof = Profile::new(metric, Pole::North)?;
    metric.field(
        (0..prof.factor.len())
            .map(|i| (r1 - prof.centre_distance(i)).max(0.0))
            .collect(),
    )
}

fn check_kappa_inputs(n: usize, q: f64, a: f64) -> Result<()> {
    if n < 2 {
        return Err(invalid("n", format!("need n >= 2, got {n}")));
    }
    if !(q > 1.0 && q < n as f64) {
        return Err(invalid("q", format!("need 1 < q < n = {n}, got {q}")));
    }
    if !(a.is_finite() && a > 0.0) {
        return Err(invalid("A", format!("need A > 0, got {a}")));
    }
    Ok(())
}

/// `κ = min((2^{(n+3q)/q} A)^{-n}, (√2 A (1 + (4 + max R₀₋) ρ²)^{1/2})^{-n})`.
pub fn kappa_formula(n: usize, q: f64, a: f64, rho: f64, max_r0_minus: f64) -> Result<f64> {
    check_kappa_inputs(n, q, a)?;
    if !(rho.is_finite() && rho > 0.0) {
        return Err(invalid("rho", format!("need rho > 0, got {rho}")));
    }
    let nf = n as f64;
    let first = (2f64.powf((nf + 3.0 * q) / q) * a).powf(-nf);
    let second = (SQRT_2 * a * (1.0 + (4.0 + max_r0_minus) * rho * rho).sqrt()).powf(-nf);
    Ok(first.min(second))
}

/// `β = (2^{n/q + 5/2} A)^{-n}`, the fixed point of [`volume_recursion`].
pub fn fixed_point_kappa(n: usize, q: f64, a: f64) -> Result<f64> {
    check_kappa_inputs(n, q, a)?;
    let nf = n as f64;
    Ok((2f64.powf(nf / q + 2.5) * a).powf(-nf))
}

/// `v(r) = (r/(4√2 A))^{nq/(n+q)} v(r/2)^{n/(n+q)}` iterated `levels` times
/// from `v(r_start) = v_start`; returns `(r, v)` at every level.
pub fn volume_recursion(n: usize, q: f64, a: f64, r_start: f64, v_start: f64, levels: usize) -> Vec<(f64, f64)> {
    let nf = n as f64;
    let mut out = vec![(r_start, v_start)];
    let (mut r, mut v) = (r_start, v_start);
    for _ in 0..levels {
        r *= 2.0;
        v = (r / (4.0 * SQRT_2 * a)).powf(nf * q / (nf + q)) * v.powf(nf / (nf + q));
        out.push((r, v));
    }
    out
}

#[derive(Clone, Debug)]
pub enum VolumeIteration {
    /// `R̄ <= 1` fails on the unit ball; the chain is not evaluated.
    Inadmissible { max_curvature: f64 },
    Evaluated(Vec<InequalityReport>),
}

/// Evaluates the volume-iteration chain for the cutoff witness of radius `r1`
/// on an already rescaled state.
pub fn volume_iteration_check(
    metric: &DiscreteMetric,
    e: &SobolevExponents,
    a: f64,
    r1: f64,
) -> Result<VolumeIteration> {
    if !(r1 > 0.0 && r1 <= 1.0) {
        return Err(invalid("r1", format!("need 0 < r1 <= 1, got {r1}")));
    }
    let prof = Profile::new(metric, Pole::North)?;
    // B(1) is the whole sphere once the diameter drops below 1
    let max_curvature = (0..prof.factor.len())
        .filter(|&i| i == 0 || prof.centre_distance(i) < 1.0)
        .map(|i| prof.curvature[i])
        .fold(f64::NEG_INFINITY, f64::max);
    if max_curvature > 1.0 {
        return Ok(VolumeIteration::Inadmissible { max_curvature });
    }
    let discrete_volume = |r: f64| -> f64 {
        (0..prof.factor.len())
            .filter(|&i| prof.centre_distance(i) < r)
            .map(|i| prof.weights[i])
            .sum()
    };
    let u = cutoff_function(metric, r1)?;
    let w = metric.weights();
    let (q, p, n) = (e.q(), e.p(), e.n() as f64);
    let u_p = lp_norm_values(u.values(), p, w);
    let u_q = lp_norm_values(u.values(), q, w);
    let grad = gradient_norm_values(u.values(), metric);
    let support: Vec<f64> = grad
        .iter()
        .zip(u.values())
        .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
        .collect();
    let grad_q = lp_norm_values(&support, q, w);
    let v_full = discrete_volume(r1);
    let v_half = discrete_volume(r1 / 2.0);
    let tag = |r: InequalityReport| r.at_time(metric.t()).with_exponents(q, p).with_witness(format!("cutoff_r{r1}"));
    Ok(VolumeIteration::Evaluated(vec![
        tag(InequalityReport::new("ball_sobolev", u_p, 2.0 * SQRT_2 * a * grad_q)),
        tag(InequalityReport::new("ball_layer_cake", 0.5 * r1 * v_half.powf(1.0 / q), u_q)),
        tag(InequalityReport::new("ball_holder", u_q, v_full.powf(1.0 / n) * u_p)),
        tag(InequalityReport::new(
            "ball_volume_step",
            (r1 / (4.0 * SQRT_2 * a)).powf(n * q / (n + q)) * v_half.powf(n / (n + q)),
            v_full,
        )),
    ]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScanRow {
    pub t: f64,
    pub r: f64,
    pub pole: Pole,
    pub max_curvature: f64,
    pub volume: f64,
    pub volume_ratio: f64,
    pub kappa: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct KappaCertificate {
    pub kappa: f64,
    pub n: usize,
    pub q: f64,
    pub p: f64,
    pub rho: f64,
    pub a: f64,
    pub max_r0_minus: f64,
    pub rows: Vec<ScanRow>,
    pub hypothesis: HypothesisStatus,
    pub overall_pass: bool,
}

pub const CERTIFICATE_CSV_HEADER: &str = "t,r,Rmax_ball,vol,vol_over_rn,kappa,pass";

impl KappaCertificate {
    pub fn write_csv(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "{CERTIFICATE_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_f64(r.t),
                fmt_f64(r.r),
                fmt_f64(r.max_curvature),
                fmt_f64(r.volume),
                fmt_f64(r.volume_ratio),
                fmt_f64(r.kappa),
                r.pass
            )?;
        }
        Ok(())
    }

    pub fn write_summary(&self, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "kappa: {}", fmt_f64(self.kappa))?;
        writeln!(out, "A: {}", fmt_f64(self.a))?;
        writeln!(out, "q: {}", fmt_f64(self.q))?;
        writeln!(out, "p: {}", fmt_f64(self.p))?;
        writeln!(out, "rho: {}", fmt_f64(self.rho))?;
        writeln!(out, "hypothesis: {}", hypothesis_line(&self.hypothesis))?;
        writeln!(out, "overall_pass: {}", self.overall_pass)?;
        writeln!(out, "admissible_cases: {}", self.rows.len())?;
        writeln!(out, "note: empirical certificate, A is a measured constant times a safety factor")
    }
}

pub fn hypothesis_line(h: &HypothesisStatus) -> String {
    format!(
        "satisfied={} t_finite={} lambda0={} tolerance={}",
        h.satisfied,
        h.t_finite,
        fmt_f64(h.lambda0),
        fmt_f64(h.tolerance)
    )
}

fn scan_poles(metric: &DiscreteMetric) -> Vec<Pole> {
    match metric.state().family() {
        ManifoldFamily::ConformalS2 { phi } => {
            let v = phi.values();
            let symmetric = (0..v.len()).all(|i| (v[i] - v[v.len() - 1 - i]).abs() <= 1e-14 * (1.0 + v[i].abs()));
            if symmetric {
                vec![Pole::North]
            } else {
                vec![Pole::North, Pole::South]
            }
        }
        _ => vec![Pole::North],
    }
}

/// Checks `vol_t(B_t(pole, r)) >= κ rⁿ` on every snapshot and radius with
/// `max_{B} R <= r^{-2}`. Radii default to 16 log-spaced values in [0.05ρ, ρ].
pub fn noncollapse_scan(
    trace: &FlowTrace,
    rho: f64,
    e: &SobolevExponents,
    a: f64,
    resolution: usize,
    radii: Option<&[f64]>,
) -> Result<KappaCertificate> {
    let status = hypothesis_status(trace.initial(), trace.t_max, resolution, DEFAULT_LAMBDA_TOL)?;
    if !status.satisfied {
        return Err(Error::HypothesisRefused(status));
    }
    let m0 = DiscreteMetric::new(trace.initial(), resolution)?;
    let r0m = m0.max_negative_curvature();
    let n = e.n();
    let kappa = kappa_formula(n, e.q(), a, rho, r0m)?;
    let default_radii = log_spaced(0.05 * rho, rho, DEFAULT_RADII);
    let radii = radii.unwrap_or(&default_radii);
    if radii.iter().any(|r| !(*r > 0.0 && *r <= rho * (1.0 + 1e-12))) {
        return Err(invalid("radii", "scan radii must lie in (0, rho]"));
    }
    let per_snapshot = trace
        .snapshots
        .par_iter()
        .map(|s| {
            let m = DiscreteMetric::new(s, resolution)?;
            let mut rows = Vec::new();
            for pole in scan_poles(&m) {
                for &r in radii {
                    let ball = match geodesic_ball(&m, r, pole) {
                        Ok(b) => b,
                        Err(Error::InvalidParameter { .. }) => continue,
                        Err(e) => return Err(e),
                    };
                    if ball.max_curvature > 1.0 / (r * r) {
                        continue;
                    }
                    let ratio = ball.volume / r.powi(n as i32);
                    rows.push(ScanRow {
                        t: s.t(),
                        r,
                        pole,
                        max_curvature: ball.max_curvature,
                        volume: ball.volume,
                        volume_ratio: ratio,
                        kappa,
                        pass: ratio >= kappa,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<ScanRow> = per_snapshot.into_iter().flatten().collect();
    let overall_pass = rows.iter().all(|r| r.pass);
    Ok(KappaCertificate {
        kappa,
        n,
        q: e.q(),
        p: e.p(),
        rho,
        a,
        max_r0_minus: r0m,
        rows,
        hypothesis: status,
        overall_pass,
    })
}

/// `vol/rⁿ` of the ball of radius 1 in `r^{-2} g`.
pub fn rescaled_unit_ratio(metric: &DiscreteMetric, r: f64, resolution: usize) -> Result<f64> {
    let scaled = rescale_metric(metric.state(), 1.0 / (r * r))?;
    let m = DiscreteMetric::new(&scaled, resolution)?;
    Ok(geodesic_ball(&m, 1.0, Pole::North)?.volume)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{make_conformal_s2, make_round_sphere, ConformalPreset};

    fn unit() -> DiscreteMetric {
        DiscreteMetric::new(&make_round_sphere(2, 1.0).unwrap(), 128).unwrap()
    }

    #[test]
    fn whole_and_half_sphere() {
        let m = unit();
        let b = geodesic_ball(&m, PI, Pole::North).unwrap();
        assert!((b.theta_star - PI).abs() < 1e-12);
        assert!((b.volume - 4.0 * PI).abs() < 1e-12);
        let h = geodesic_ball(&m, PI / 2.0, Pole::North).unwrap();
        assert!((h.volume - 2.0 * PI).abs() < 1e-12);
        assert!(geodesic_ball(&m, 3.2, Pole::North).is_err());
    }

    #[test]
    fn round_ball_closed_form() {
        let m = DiscreteMetric::new(&make_round_sphere(2, 2.0).unwrap(), 128).unwrap();
        for r in [0.01, 0.3, 1.7, 5.0] {
            let b = geodesic_ball(&m, r, Pole::North).unwrap();
            let exact = 2.0 * PI * 4.0 * (1.0 - (r / 2.0).cos());
            assert!((b.volume / exact - 1.0).abs() < 1e-10, "{r}");
        }
    }

    #[test]
    fn south_ball_of_bumped_state_differs() {
        let s = make_conformal_s2(128, ConformalPreset::Bumped { a: 0.3, b: 0.0 }).unwrap();
        let m = DiscreteMetric::new(&s, 128).unwrap();
        let n = geodesic_ball(&m, 0.5, Pole::North).unwrap();
        let so = geodesic_ball(&m, 0.5, Pole::South).unwrap();
        assert!(n.max_curvature != so.max_curvature);
        assert_eq!(scan_poles(&m).len(), 2);
    }

    #[test]
    fn cutoff_basics() {
        let m = unit();
        let zero = cutoff_function(&m, 0.0).unwrap();
        assert!(zero.values().iter().all(|v| *v == 0.0));
        let u = cutoff_function(&m, 1.0).unwrap();
        for (i, th) in m.grid().nodes().iter().enumerate() {
            assert!((u.values()[i] - (1.0 - th).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn kappa_example() {
        let k = kappa_formula(2, 1.5, 1.0, 1.0, 0.0).unwrap();
        assert!((k / 2f64.powf(-26.0 / 3.0) - 1.0).abs() < 1e-12);
        let b = fixed_point_kappa(2, 1.5, 1.0).unwrap();
        assert!((b / 2f64.powf(-23.0 / 3.0) - 1.0).abs() < 1e-12);
        assert!(kappa_formula(2, 2.0, 1.0, 1.0, 0.0).is_err());
        assert!(kappa_formula(2, 1.5, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn fixed_point_is_invariant() {
        let (n, q, a) = (3, 2.0, 0.7);
        let b = fixed_point_kappa(n, q, a).unwrap();
        let path = volume_recursion(n, q, a, 0.125, b * 0.125f64.powi(3), 3);
        for (r, v) in path {
            assert!((v / (b * r.powi(3)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn iteration_chain_on_unit_sphere() {
        // r = 1/2 on the unit sphere: ḡ = 4g has R̄ = 1/2
        let bar = rescale_metric(&make_round_sphere(2, 1.0).unwrap(), 4.0).unwrap();
        let m = DiscreteMetric::new(&bar, 128).unwrap();
        let e = SobolevExponents::new(2, 1.5).unwrap();
        match volume_iteration_check(&m, &e, 0.4, 0.5).unwrap() {
            VolumeIteration::Evaluated(reports) => {
                assert_eq!(reports.len(), 4);
                for r in reports {
                    assert!(r.pass && r.margin > 0.0, "{r:?}");
                }
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            volume_iteration_check(&unit(), &e, 0.4, 0.5).unwrap(),
            VolumeIteration::Inadmissible { .. }
        ));
    }
}
