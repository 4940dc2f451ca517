//! Seeded test-field families used by the constant estimators and the
//! property sweeps.
//!
//! A family holds a fixed deterministic part (constants, `cosᵏ`, pole bumps of
//! width `2^{-j}`, a 9:1 two-bump field) followed by low-pass filtered node
//! noise drawn from a ChaCha stream. The SHA-256 hash of the generator version,
//! seed and every value identifies the family in constant reports.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::grid::Grid;

pub const FAMILY_VERSION: &str = "field-family/1";
pub const ASCENT_STEPS: usize = 50;

#[derive(Clone, Debug)]
pub struct TestField {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FieldFamily {
    seed: u64,
    budget: usize,
    fields: Vec<TestField>,
    hash: String,
}

impl FieldFamily {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn fields(&self) -> &[TestField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// First 16 hex digits of the SHA-256 family digest.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn describe(&self) -> String {
        format!(
            "{FAMILY_VERSION} seed={} budget={} hash={}",
            self.seed, self.budget, self.hash
        )
    }
}

fn bump(grid: &Grid, center_dist: impl Fn(usize) -> f64, width: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|i| (-(center_dist(i) / width).powi(2)).exp())
        .collect()
}

/// Angle in `[0, π]` measured from the first end of the grid.
fn polar(grid: &Grid, i: usize) -> f64 {
    grid.base_distance(i)
}

fn deterministic(grid: &Grid) -> Vec<TestField> {
    let n = grid.len();
    let mut out = vec![TestField {
        name: "const".into(),
        values: vec![1.0; n],
    }];
    for k in 1..=4 {
        out.push(TestField {
            name: format!("cos^{k}"),
            values: (0..n).map(|i| grid.angle(i).cos().powi(k)).collect(),
        });
    }
    for j in 0..=5 {
        let width = 0.5f64.powi(j);
        out.push(TestField {
            name: format!("bump_w2^-{j}"),
            values: bump(grid, |i| polar(grid, i), width),
        });
    }
    out.push(TestField {
        name: "plateau_bump".into(),
        values: bump(grid, |i| polar(grid, i), 0.5).iter().map(|b| 0.2 + b).collect(),
    });
    out.push(TestField {
        name: "two_bump_9_1".into(),
        values: two_bump(grid, 9.0),
    });
    out
}

/// Two width-0.3 bumps at opposite ends with peak ratio `ratio : 1`.
pub fn two_bump(grid: &Grid, ratio: f64) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let a = bump(grid, |i| polar(grid, i), 0.3);
    let b = bump(grid, |i| pi - polar(grid, i), 0.3);
    a.iter().zip(&b).map(|(x, y)| ratio * x + y).collect()
}

fn smooth_pass(values: &[f64], periodic: bool) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let (l, r) = if periodic {
                (values[(i + n - 1) % n], values[(i + 1) % n])
            } else {
                (values[i.saturating_sub(1)], values[(i + 1).min(n - 1)])
            };
            0.25 * l + 0.5 * values[i] + 0.25 * r
        })
        .collect()
}

/// Node noise in [-1, 1] smoothed by `passes` rounds of the (1/4, 1/2, 1/4)
/// filter, rescaled to unit max and offset by a random mean.
pub fn random_smooth_field(grid: &Grid, rng: &mut impl Rng, passes: usize) -> Vec<f64> {
    let n = grid.len();
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    for _ in 0..passes {
        v = smooth_pass(&v, grid.is_periodic());
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    let offset: f64 = rng.random_range(-1.0..1.5);
    v.iter().map(|x| x / scale + offset).collect()
}

/// Nonnegative variant used by positivity sweeps.
pub fn random_nonnegative_field(grid: &Grid, rng: &mut impl Rng, passes: usize) -> Vec<f64> {
    let v = random_smooth_field(grid, rng, passes);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    v.iter().map(|x| x - lo.min(0.0)).collect()
}

pub fn field_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn field_family(grid: &Arc<Grid>, budget: usize, seed: u64) -> Result<FieldFamily> {
    if budget == 0 {
        return Err(invalid("budget", "field family needs at least one field"));
    }
    let mut fields = deterministic(grid);
    fields.truncate(budget);
    let mut rng = field_rng(seed, 0);
    let n = grid.len();
    let max_passes = (n / 2).max(2);
    let min_passes = (n / 32).max(1);
    let mut k = 0;
    while fields.len() < budget {
        let passes = rng.random_range(min_passes..=max_passes);
        fields.push(TestField {
            name: format!("noise_{seed}_{k}"),
            values: random_smooth_field(grid, &mut rng, passes),
        });
        k += 1;
    }
    let mut h = Sha256::new();
    h.update(FAMILY_VERSION.as_bytes());
    h.update(seed.to_le_bytes());
    h.update((budget as u64).to_le_bytes());
    for f in &fields {
        h.update(f.name.as_bytes());
        for v in &f.values {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    let digest = h.finalize();
    let hash = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
    Ok(FieldFamily {
        seed,
        budget,
        fields,
        hash,
    })
}

/// Sign-preserving multiplicative hill climb: each step multiplies the field
/// by `exp(ε ξ)` for smooth noise `ξ` and keeps the result if `objective`
/// improves. Step size halves after a rejection and grows after acceptance.
pub fn local_ascent(
    grid: &Grid,
    start: &[f64],
    objective: impl Fn(&[f64]) -> f64,
    steps: usize,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let mut best = start.to_vec();
    let mut value = objective(&best);
    let mut eps = 0.3;
    for _ in 0..steps {
        let passes = rng.random_range(2..=(grid.len() / 4).max(3));
        let xi = random_smooth_field(grid, rng, passes);
        let cand: Vec<f64> = best
            .iter()
            .zip(&xi)
            .map(|(u, x)| u * (eps * x).exp())
            .collect();
        let v = objective(&cand);
        if v.is_finite() && v > value {
            best = cand;
            value = v;
            eps = (eps * 1.5).min(1.0);
        } else {
            eps = (eps * 0.5).max(1e-3);
        }
    }
    (best, value)
}
