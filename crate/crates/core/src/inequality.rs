//! Sobolev, log-Sobolev and uniform Sobolev inequalities on discretized
//! states, and empirical estimates of their constants.
//!
//! Each log-Sobolev check comes in two forms. The derivation form replays
//! the proof step with quantities computed from the field itself and must
//! always hold. The constant form uses an empirical constant, which is only a
//! lower bound for the true one.

use rayon::prelude::*;

use crate::calculus::{gradient_norm_values, lp_norm_values, DiscreteMetric};
use crate::error::{invalid, Error, Result};
use crate::fields::{field_family, field_rng, local_ascent, FieldFamily, ASCENT_STEPS};
use crate::flow::FlowTrace;
use crate::grid::ScalarField;
use crate::manifold::{hypothesis_status, HypothesisStatus, DEFAULT_LAMBDA_TOL};
use crate::report::InequalityReport;
use crate::semigroup::log_spaced;

/// Nodes with `|u|` below this contribute 0 to entropy integrands.
pub const U_FLOOR: f64 = 1e-300;

/// Fields improved by local ascent in each constant estimate.
pub const ASCENT_CANDIDATES: usize = 4;

/// `(n, q)` with `1 <= q < n`; `p` is always derived from `1/p = 1/q - 1/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevExponents {
    n: usize,
    q: f64,
}

impl SobolevExponents {
    pub fn new(n: usize, q: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", format!("need n >= 2, got {n}")));
        }
        if !(q.is_finite() && q >= 1.0 && q < n as f64) {
            return Err(invalid("q", format!("need 1 <= q < n = {n}, got {q}")));
        }
        Ok(SobolevExponents { n, q })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn p(&self) -> f64 {
        let n = self.n as f64;
        n * self.q / (n - self.q)
    }

    /// `2p/(p-q)`, equal to `2n/q`.
    pub fn entropy_factor(&self) -> f64 {
        let p = self.p();
        2.0 * p / (p - self.q)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantEstimate {
    pub constant_id: String,
    pub t: f64,
    pub value: f64,
    pub witness: String,
    pub family_hash: String,
    pub budget: usize,
    pub family: String,
}

pub const CONSTANTS_CSV_HEADER: &str = "constant_id,t,value,family_hash,budget";

impl ConstantEstimate {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.constant_id,
            crate::report::fmt_f64(self.t),
            crate::report::fmt_f64(self.value),
            self.family_hash,
            self.budget
        )
    }
}

fn nonzero(u: &[f64]) -> Result<()> {
    if u.iter().all(|v| *v == 0.0) {
        Err(Error::ZeroField)
    } else {
        Ok(())
    }
}

fn normalized(u: &ScalarField, p: f64, metric: &DiscreteMetric) -> Result<Vec<f64>> {
    u.check_grid(metric.grid())?;
    nonzero(u.values())?;
    let norm = lp_norm_values(u.values(), p, metric.weights());
    Ok(u.values().iter().map(|v| v / norm).collect())
}

fn entropy(weights: &[f64], u: &[f64], q: f64) -> f64 {
    weights
        .iter()
        .zip(u)
        .map(|(w, v)| {
            let a = v.abs();
            if a < U_FLOOR {
                0.0
            } else {
                w * a.powf(q) * 2.0 * a.ln()
            }
        })
        .sum()
}

fn quotient_with_gradient(u: &[f64], grad: &[f64], e: &SobolevExponents, metric: &DiscreteMetric) -> f64 {
    let w = metric.weights();
    let denom = lp_norm_values(grad, e.q(), w)
        + metric.volume().powf(-1.0 / e.n() as f64) * lp_norm_values(u, e.q(), w);
    lp_norm_values(u, e.p(), w) / denom
}

fn quotient_values(u: &[f64], e: &SobolevExponents, metric: &DiscreteMetric) -> f64 {
    quotient_with_gradient(u, &gradient_norm_values(u, metric), e, metric)
}

/// `‖u‖_p / (‖∇u‖_q + vol^{-1/n} ‖u‖_q)`.
pub fn sobolev_quotient(u: &ScalarField, e: &SobolevExponents, metric: &DiscreteMetric) -> Result<f64> {
    u.check_grid(metric.grid())?;
    nonzero(u.values())?;
    Ok(quotient_values(u.values(), e, metric))
}

fn check_dimension(e: &SobolevExponents, metric: &DiscreteMetric) -> Result<()> {
    if e.n() != metric.dimension() {
        return Err(invalid(
            "n",
            format!("exponents are for n = {} but the state has n = {}", e.n(), metric.dimension()),
        ));
    }
    Ok(())
}

/// Maximizes `objective` over the family, then refines the best
/// `ASCENT_CANDIDATES` fields by local ascent.
fn maximize(
    family: &FieldFamily,
    metric: &DiscreteMetric,
    ascent_seed: u64,
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> (f64, String) {
    let scores: Vec<f64> = family
        .fields()
        .par_iter()
        .map(|f| {
            if f.values.iter().all(|v| *v == 0.0) {
                f64::NEG_INFINITY
            } else {
                objective(&f.values)
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let refined: Vec<(f64, String)> = order
        .iter()
        .take(ASCENT_CANDIDATES)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&k| {
            let mut rng = field_rng(ascent_seed, 1 + k as u64);
            let (_, v) = local_ascent(metric.grid(), &family.fields()[k].values, objective, ASCENT_STEPS, &mut rng);
            (v, format!("{}+ascent", family.fields()[k].name))
        })
        .collect();
    let mut best = (scores[order[0]], family.fields()[order[0]].name.clone());
    for (v, name) in refined {
        if v > best.0 {
            best = (v, name);
        }
    }
    best
}

/// Lower bound for `C_{p,q}`: the largest Sobolev quotient over the family
/// after local ascent.
pub fn estimate_sobolev_constant(
    e: &SobolevExponents,
    metric: &DiscreteMetric,
    family: &FieldFamily,
) -> Result<ConstantEstimate> {
    check_dimension(e, metric)?;
    if family.len() < 50 {
        return Err(invalid("budget", format!("need at least 50 fields, got {}", family.len())));
    }
    let obj = |u: &[f64]| quotient_values(u, e, metric);
    let (value, witness) = maximize(family, metric, family.seed(), &obj);
    Ok(ConstantEstimate {
        constant_id: format!("C_p{}_q{}", e.p(), e.q()),
        t: metric.t(),
        value,
        witness,
        family_hash: family.hash().to_string(),
        budget: family.budget(),
        family: family.describe(),
    })
}

/// Jensen step: for `‖u‖_q = 1`, `∫|u|^q log u² <= (2n/q) log ‖u‖_p`.
pub fn verify_jensen_step(u: &ScalarField, e: &SobolevExponents, metric: &DiscreteMetric) -> Result<InequalityReport> {
    let v = normalized(u, e.q(), metric)?;
    let w = metric.weights();
    let lhs = entropy(w, &v, e.q());
    let rhs = e.entropy_factor() * lp_norm_values(&v, e.p(), w).ln();
    Ok(InequalityReport::new("jensen_step", lhs, rhs)
        .at_time(metric.t())
        .with_exponents(e.q(), e.p()))
}

/// Derivation-form and constant-form versions of one log-Sobolev check.
#[derive(Clone, Debug)]
pub struct LogSobolevCheck {
    pub derivation: InequalityReport,
    pub constant_form: InequalityReport,
    /// The field's own quotient exceeds the supplied lower bound.
    pub exceeds_lower_bound: bool,
    pub quotient: f64,
}

/// `∫|v|^q log v² <= (2n/q) log(C (‖∇v‖_q + vol^{-1/n}))` for `‖v‖_q = 1`.
pub fn verify_log_sobolev_q(
    u: &ScalarField,
    e: &SobolevExponents,
    metric: &DiscreteMetric,
    c_lower: f64,
) -> Result<LogSobolevCheck> {
    let v = normalized(u, e.q(), metric)?;
    let w = metric.weights();
    let grad = gradient_norm_values(&v, metric);
    let energy = lp_norm_values(&grad, e.q(), w) + metric.volume().powf(-1.0 / e.n() as f64);
    let quotient = quotient_with_gradient(&v, &grad, e, metric);
    let factor = 2.0 * e.n() as f64 / e.q();
    let lhs = entropy(w, &v, e.q());
    let tag = |r: InequalityReport| r.at_time(metric.t()).with_exponents(e.q(), e.p());
    Ok(LogSobolevCheck {
        derivation: tag(InequalityReport::new("log_sobolev_q", lhs, factor * (quotient * energy).ln())),
        constant_form: tag(InequalityReport::new("log_sobolev_q_constant", lhs, factor * (c_lower * energy).ln())),
        exceeds_lower_bound: quotient > c_lower,
        quotient,
    })
}

fn chain_rule_gradient(u: &[f64], grad_u: &[f64], mu: f64) -> Vec<f64> {
    u.iter()
        .zip(grad_u)
        .map(|(a, g)| (2.0 / mu) * a.abs().powf((2.0 - mu) / mu) * g)
        .collect()
}

fn check_mu(mu: f64, upper: f64) -> Result<()> {
    if !(mu >= 1.0 && mu <= upper) {
        return Err(invalid("mu", format!("need 1 <= mu <= {upper}, got {mu}")));
    }
    Ok(())
}

/// `‖∇v‖_μ <= (2/μ) ‖∇u‖_2` for `v = |u|^{2/μ}`, `‖u‖_2 = 1`.
pub fn holder_gradient_check(u: &ScalarField, mu: f64, metric: &DiscreteMetric) -> Result<InequalityReport> {
    check_mu(mu, 2.0)?;
    let v = normalized(u, 2.0, metric)?;
    let w = metric.weights();
    let grad = gradient_norm_values(&v, metric);
    let lhs = lp_norm_values(&chain_rule_gradient(&v, &grad, mu), mu, w);
    let rhs = (2.0 / mu) * lp_norm_values(&grad, 2.0, w);
    Ok(InequalityReport::new("holder_gradient", lhs, rhs)
        .at_time(metric.t())
        .with_mu(mu))
}

/// `∫u² log u² <= n log(C_{nμ/(n-μ),μ} ((2/μ)‖∇u‖_2 + vol^{-1/n}))`, `‖u‖_2 = 1`,
/// through the log-Sobolev step for `v = |u|^{2/μ}` and the Hölder step.
pub fn verify_log_sobolev_2(
    u: &ScalarField,
    mu: f64,
    metric: &DiscreteMetric,
    c_lower: f64,
) -> Result<LogSobolevCheck> {
    check_mu(mu, 2.0 - 1e-15)?;
    let e = SobolevExponents::new(metric.dimension(), mu)?;
    let un = normalized(u, 2.0, metric)?;
    let w = metric.weights();
    let grad_u = gradient_norm_values(&un, metric);
    let v: Vec<f64> = un.iter().map(|a| a.abs().powf(2.0 / mu)).collect();
    let grad_v = chain_rule_gradient(&un, &grad_u, mu);
    let quotient = quotient_with_gradient(&v, &grad_v, &e, metric);
    let energy = (2.0 / mu) * lp_norm_values(&grad_u, 2.0, w) + metric.volume().powf(-1.0 / e.n() as f64);
    let n = e.n() as f64;
    let lhs = entropy(w, &un, 2.0);
    let tag = |r: InequalityReport| r.at_time(metric.t()).with_exponents(e.q(), e.p()).with_mu(mu);
    Ok(LogSobolevCheck {
        derivation: tag(InequalityReport::new("log_sobolev_2", lhs, n * (quotient * energy).ln())),
        constant_form: tag(InequalityReport::new("log_sobolev_2_constant", lhs, n * (c_lower * energy).ln())),
        exceeds_lower_bound: quotient > c_lower,
        quotient,
    })
}

/// Entropy and energy of the L²-normalized field: `(∫u² log u², ∫|∇u|² + (R/4)u²)`.
fn entropy_energy(u: &[f64], metric: &DiscreteMetric) -> Result<(f64, f64)> {
    nonzero(u)?;
    let w = metric.weights();
    let norm = lp_norm_values(u, 2.0, w);
    let v: Vec<f64> = u.iter().map(|a| a / norm).collect();
    let grad = gradient_norm_values(&v, metric);
    let r = metric.curvature().values();
    let energy: f64 = (0..v.len())
        .map(|i| w[i] * (grad[i] * grad[i] + 0.25 * r[i] * v[i] * v[i]))
        .sum();
    Ok((entropy(w, &v, 2.0), energy))
}

/// `D(u, σ) = ∫u² log u² - σ ∫(|∇u|² + (R/4)u²) + (n/2) log σ` for `‖u‖_2 = 1`.
pub fn uniform_logsob_defect(u: &ScalarField, sigma: f64, metric: &DiscreteMetric) -> Result<f64> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(invalid("sigma", format!("need sigma > 0, got {sigma}")));
    }
    u.check_grid(metric.grid())?;
    let (ent, energy) = entropy_energy(u.values(), metric)?;
    Ok(ent - sigma * energy + 0.5 * metric.dimension() as f64 * sigma.ln())
}

/// Default σ grid: 25 log-spaced values in [1e-3, 1e3].
pub fn default_sigma_grid() -> Vec<f64> {
    log_spaced(1e-3, 1e3, 25)
}

#[derive(Clone, Debug)]
pub struct DefectPoint {
    pub t: f64,
    pub value: f64,
    pub sigma: f64,
    pub witness: String,
}

/// Suprema of the log-Sobolev defect along a flow.
#[derive(Clone, Debug)]
pub struct UniformConstants {
    /// `Ĉ₂(t)` per snapshot, with `C₁ = 0`.
    pub c2_curve: Vec<DefectPoint>,
    pub c2: f64,
    /// Least-squares slope of `Ĉ₂` against `t`, reported as a fitted `C₁`.
    pub c1_slope: f64,
    /// `Ĉ₃`, or the hypothesis status that refused it.
    pub c3: std::result::Result<f64, HypothesisStatus>,
    pub family_hash: String,
    pub budget: usize,
}

impl UniformConstants {
    pub fn estimates(&self) -> Vec<ConstantEstimate> {
        let mut out: Vec<ConstantEstimate> = self
            .c2_curve
            .iter()
            .map(|p| ConstantEstimate {
                constant_id: "C2_defect".into(),
                t: p.t,
                value: p.value,
                witness: p.witness.clone(),
                family_hash: self.family_hash.clone(),
                budget: self.budget,
                family: String::new(),
            })
            .collect();
        if let Ok(c3) = self.c3 {
            out.push(ConstantEstimate {
                constant_id: "C3_defect".into(),
                t: self.c2_curve.last().map_or(0.0, |p| p.t),
                value: c3,
                witness: String::new(),
                family_hash: self.family_hash.clone(),
                budget: self.budget,
                family: String::new(),
            });
        }
        out
    }
}

fn defect_sup(metric: &DiscreteMetric, family: &FieldFamily, sigmas: &[f64]) -> Result<DefectPoint> {
    let n = metric.dimension() as f64;
    let best = family
        .fields()
        .par_iter()
        .map(|f| {
            let (ent, energy) = entropy_energy(&f.values, metric)?;
            let (mut value, mut sigma) = (f64::NEG_INFINITY, sigmas[0]);
            for &s in sigmas {
                let d = ent - s * energy + 0.5 * n * s.ln();
                if d > value {
                    value = d;
                    sigma = s;
                }
            }
            Ok(DefectPoint {
                t: metric.t(),
                value,
                sigma,
                witness: f.name.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(best
        .into_iter()
        .reduce(|a, b| if b.value > a.value { b } else { a })
        .unwrap())
}

/// `Ĉ₂(t) = max_{u,σ} D(u, σ, t)` at every snapshot of `trace`, plus the
/// λ₀-form `Ĉ₃` when the flow satisfies the hypothesis.
pub fn estimate_uniform_constants(
    trace: &FlowTrace,
    sigmas: &[f64],
    budget: usize,
    seed: u64,
    resolution: usize,
) -> Result<UniformConstants> {
    if sigmas.is_empty() || sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(invalid("sigma_grid", "need positive finite sigma values"));
    }
    let mut curve = Vec::with_capacity(trace.snapshots.len());
    let mut hash = String::new();
    for state in &trace.snapshots {
        let metric = DiscreteMetric::new(state, resolution)?;
        let family = field_family(metric.grid(), budget, seed)?;
        hash = family.hash().to_string();
        curve.push(defect_sup(&metric, &family, sigmas)?);
    }
    let c2 = curve.iter().map(|p| p.value).fold(f64::NEG_INFINITY, f64::max);
    let c1_slope = if curve.len() >= 2 {
        let m = curve.len() as f64;
        let mt = curve.iter().map(|p| p.t).sum::<f64>() / m;
        let mv = curve.iter().map(|p| p.value).sum::<f64>() / m;
        let sxy: f64 = curve.iter().map(|p| (p.t - mt) * (p.value - mv)).sum();
        let sxx: f64 = curve.iter().map(|p| (p.t - mt).powi(2)).sum();
        if sxx > 0.0 { sxy / sxx } else { 0.0 }
    } else {
        0.0
    };
    let status = hypothesis_status(trace.initial(), trace.t_max, resolution, DEFAULT_LAMBDA_TOL)?;
    let c3 = if status.satisfied { Ok(c2) } else { Err(status) };
    Ok(UniformConstants {
        c2_curve: curve,
        c2,
        c1_slope,
        c3,
        family_hash: hash,
        budget,
    })
}

/// `V = (R + 4 + max R(g₀)₋)/4`, which must stay >= 1 along the flow.
fn shifted_potential(metric: &DiscreteMetric, max_r0_minus: f64) -> Result<Vec<f64>> {
    let v: Vec<f64> = metric
        .curvature()
        .values()
        .iter()
        .map(|r| (r + 4.0 + max_r0_minus) / 4.0)
        .collect();
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if lo < 1.0 - 1e-8 {
        return Err(Error::PotentialBelowOne(lo));
    }
    Ok(v)
}

fn uniform_energy(u: &[f64], potential: &[f64], q: f64, metric: &DiscreteMetric) -> f64 {
    let grad = gradient_norm_values(u, metric);
    let integrand: Vec<f64> = (0..u.len())
        .map(|i| (grad[i] * grad[i] + potential[i] * u[i] * u[i]).powf(q / 2.0))
        .collect();
    metric.integrate(&integrand).powf(1.0 / q)
}

/// `‖u‖_p <= A (∫(|∇u|² + V u²)^{q/2})^{1/q}`.
pub fn verify_uniform_sobolev(
    u: &ScalarField,
    e: &SobolevExponents,
    metric: &DiscreteMetric,
    a: f64,
    max_r0_minus: f64,
) -> Result<InequalityReport> {
    check_dimension(e, metric)?;
    if e.q() <= 1.0 {
        return Err(invalid("q", "uniform Sobolev check needs q > 1"));
    }
    u.check_grid(metric.grid())?;
    nonzero(u.values())?;
    let pot = shifted_potential(metric, max_r0_minus)?;
    let lhs = lp_norm_values(u.values(), e.p(), metric.weights());
    let rhs = a * uniform_energy(u.values(), &pot, e.q(), metric);
    Ok(InequalityReport::new("uniform_sobolev", lhs, rhs)
        .at_time(metric.t())
        .with_exponents(e.q(), e.p()))
}

/// `Â(t)`: largest `lhs/rhs` of the uniform Sobolev inequality at `A = 1`.
pub fn estimate_uniform_sobolev_constant(
    e: &SobolevExponents,
    metric: &DiscreteMetric,
    family: &FieldFamily,
    max_r0_minus: f64,
) -> Result<ConstantEstimate> {
    check_dimension(e, metric)?;
    let pot = shifted_potential(metric, max_r0_minus)?;
    let w = metric.weights();
    let obj = |u: &[f64]| lp_norm_values(u, e.p(), w) / uniform_energy(u, &pot, e.q(), metric);
    let (value, witness) = maximize(family, metric, family.seed(), &obj);
    Ok(ConstantEstimate {
        constant_id: format!("A_p{}_q{}", e.p(), e.q()),
        t: metric.t(),
        value,
        witness,
        family_hash: family.hash().to_string(),
        budget: family.budget(),
        family: family.describe(),
    })
}

/// `Â(t)` at every snapshot, with `max R(g₀)₋` from the first one.
pub fn uniform_sobolev_curve(
    trace: &FlowTrace,
    e: &SobolevExponents,
    budget: usize,
    seed: u64,
    resolution: usize,
) -> Result<Vec<ConstantEstimate>> {
    let m0 = DiscreteMetric::new(trace.initial(), resolution)?;
    let r0m = m0.max_negative_curvature();
    trace
        .snapshots
        .iter()
        .map(|s| {
            let m = DiscreteMetric::new(s, resolution)?;
            let family = field_family(m.grid(), budget, seed)?;
            estimate_uniform_sobolev_constant(e, &m, &family, r0m)
        })
        .collect()
}
