//! `key = value` scenario files.
//!
//! Every key is validated against the precondition of the operation that
//! consumes it, so a parsed [`Scenario`] can be run without further checks.
//! Unknown and repeated keys are rejected.

use std::fmt;
use std::path::PathBuf;

use crate::calculus::DEFAULT_RESOLUTION;
use crate::error::Result;
use crate::flow::{FlowConfig, DEFAULT_CFL};
use crate::inequality::SobolevExponents;
use crate::manifold::{
    make_conformal_s2, make_flat_torus, make_round_sphere, ConformalPreset, MetricState, DEFAULT_EXTINCTION_FRACTION,
};
use crate::report::fmt_f64;

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub key: String,
    pub reason: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "key `{}`: {}", self.key, self.reason)
        } else {
            write!(f, "line {}: key `{}`: {}", self.line, self.key, self.reason)
        }
    }
}

impl std::error::Error for ParseError {}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilySpec {
    RoundSphere { n: usize, r0: f64 },
    FlatTorus { n: usize, lengths: Vec<f64> },
    ConformalS2 { preset: PresetSpec },
}

#[derive(Clone, Debug, PartialEq)]
pub enum PresetSpec {
    Round { r0: f64 },
    Bumped { a: f64, b: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub family: FamilySpec,
    pub grid_n: usize,
    pub dt: f64,
    pub t_end_fraction: f64,
    pub snapshots: usize,
    pub q_list: Vec<f64>,
    pub mu_list: Vec<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub sigma_count: usize,
    pub field_budget: usize,
    pub seed: u64,
    pub rho: f64,
    pub safety: f64,
    pub out_dir: PathBuf,
}

const KEYS: [&str; 21] = [
    "family",
    "n",
    "r0",
    "lengths",
    "preset",
    "bump_a",
    "bump_b",
    "grid_n",
    "dt",
    "t_end_fraction",
    "snapshots",
    "q_list",
    "mu_list",
    "sigma_min",
    "sigma_max",
    "sigma_count",
    "field_budget",
    "seed",
    "rho",
    "safety",
    "out_dir",
];

/// Raw `(line, value)` per key.
struct Entries(Vec<(String, usize, String)>);

impl Entries {
    fn get(&self, key: &str) -> Option<(usize, &str)> {
        self.0.iter().find(|(k, _, _)| k == key).map(|(_, l, v)| (*l, v.as_str()))
    }

    fn err(&self, key: &str, reason: impl Into<String>) -> ParseError {
        ParseError {
            line: self.get(key).map_or(0, |(l, _)| l),
            key: key.into(),
            reason: reason.into(),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: Option<T>) -> std::result::Result<T, ParseError> {
        match self.get(key) {
            Some((_, v)) => v
                .parse()
                .map_err(|_| self.err(key, format!("cannot parse `{v}` as {}", std::any::type_name::<T>()))),
            None => default.ok_or_else(|| self.err(key, "required key missing")),
        }
    }

    fn list(&self, key: &str, default: &[f64]) -> std::result::Result<Vec<f64>, ParseError> {
        match self.get(key) {
            Some((_, v)) => v
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| self.err(key, format!("cannot parse `{}` as a number", s.trim())))
                })
                .collect(),
            None => Ok(default.to_vec()),
        }
    }

    fn positive(&self, key: &str, default: Option<f64>) -> std::result::Result<f64, ParseError> {
        let v: f64 = self.parse(key, default)?;
        if !(v.is_finite() && v > 0.0) {
            return Err(self.err(key, format!("must be a positive finite number, got {v}")));
        }
        Ok(v)
    }
}

pub fn parse_scenario(text: &str) -> std::result::Result<Scenario, ParseError> {
    let mut entries = Entries(Vec::new());
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ParseError {
            line,
            key: content.to_string(),
            reason: "expected `key = value`".into(),
        })?;
        let (key, value) = (key.trim(), value.trim());
        // `q` is shorthand for a one-element q_list
        let key = if key == "q" { "q_list" } else { key };
        if !KEYS.contains(&key) {
            return Err(ParseError {
                line,
                key: key.into(),
                reason: "unknown key".into(),
            });
        }
        if entries.get(key).is_some() {
            return Err(ParseError {
                line,
                key: key.into(),
                reason: "key given twice".into(),
            });
        }
        entries.0.push((key.to_string(), line, value.to_string()));
    }
    build(&entries)
}

fn build(e: &Entries) -> std::result::Result<Scenario, ParseError> {
    let family_name: String = e.parse("family", None)?;
    let used_by = |keys: &[&str], fam: &str| -> std::result::Result<(), ParseError> {
        for k in keys {
            if e.get(k).is_some() {
                return Err(e.err(k, format!("not used by family `{fam}`")));
            }
        }
        Ok(())
    };
    let family = match family_name.as_str() {
        "round_sphere" => {
            used_by(&["lengths", "preset", "bump_a", "bump_b"], "round_sphere")?;
            let n: usize = e.parse("n", Some(2))?;
            if n < 2 {
                return Err(e.err("n", "need n >= 2"));
            }
            FamilySpec::RoundSphere {
                n,
                r0: e.positive("r0", Some(1.0))?,
            }
        }
        "flat_torus" => {
            used_by(&["r0", "preset", "bump_a", "bump_b"], "flat_torus")?;
            let n: usize = e.parse("n", Some(2))?;
            if n < 2 {
                return Err(e.err("n", "need n >= 2"));
            }
            let lengths = e.list("lengths", &vec![2.0 * std::f64::consts::PI; n])?;
            if lengths.len() != n {
                return Err(e.err("lengths", format!("expected {n} side lengths, got {}", lengths.len())));
            }
            if lengths.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
                return Err(e.err("lengths", "side lengths must be positive"));
            }
            FamilySpec::FlatTorus { n, lengths }
        }
        "conformal_s2" => {
            let n: usize = e.parse("n", Some(2))?;
            if n != 2 {
                return Err(e.err("n", "conformal_s2 is two-dimensional"));
            }
            let preset: String = e.parse("preset", Some("round".into()))?;
            match preset.as_str() {
                "round" => {
                    used_by(&["bump_a", "bump_b"], "conformal_s2 preset round")?;
                    FamilySpec::ConformalS2 {
                        preset: PresetSpec::Round {
                            r0: e.positive("r0", Some(1.0))?,
                        },
                    }
                }
                "bumped" => {
                    used_by(&["r0"], "conformal_s2 preset bumped")?;
                    let a: f64 = e.parse("bump_a", Some(0.3))?;
                    let b: f64 = e.parse("bump_b", Some(0.0))?;
                    if !(a.is_finite() && b.is_finite()) {
                        return Err(e.err("bump_a", "bump coefficients must be finite"));
                    }
                    FamilySpec::ConformalS2 {
                        preset: PresetSpec::Bumped { a, b },
                    }
                }
                other => return Err(e.err("preset", format!("unknown preset `{other}`"))),
            }
        }
        other => return Err(e.err("family", format!("unknown family `{other}`"))),
    };
    let n = match &family {
        FamilySpec::RoundSphere { n, .. } | FamilySpec::FlatTorus { n, .. } => *n,
        FamilySpec::ConformalS2 { .. } => 2,
    };

    let grid_n: usize = e.parse("grid_n", Some(DEFAULT_RESOLUTION))?;
    if !(16..=2048).contains(&grid_n) {
        return Err(e.err("grid_n", format!("need 16 <= grid_n <= 2048, got {grid_n}")));
    }
    let dt = e.positive("dt", Some(1e-4))?;
    let t_end_fraction = e.positive("t_end_fraction", Some(0.9))?;
    let finite_t = !matches!(family, FamilySpec::FlatTorus { .. });
    if finite_t && t_end_fraction > DEFAULT_EXTINCTION_FRACTION {
        return Err(e.err(
            "t_end_fraction",
            format!("must not exceed the extinction guard {DEFAULT_EXTINCTION_FRACTION}, got {t_end_fraction}"),
        ));
    }
    let snapshots: usize = e.parse("snapshots", Some(10))?;
    if !(2..=1000).contains(&snapshots) {
        return Err(e.err("snapshots", "need 2 <= snapshots <= 1000"));
    }
    let q_list = e.list("q_list", &[1.0, 1.25, 1.5])?;
    if q_list.is_empty() || q_list.iter().any(|q| SobolevExponents::new(n, *q).is_err()) {
        return Err(e.err("q_list", format!("every q must satisfy 1 <= q < n = {n}")));
    }
    let mu_list = e.list("mu_list", &[1.0, 1.5])?;
    if mu_list.iter().any(|m| !(*m >= 1.0 && *m < 2.0 && *m < n as f64)) {
        return Err(e.err("mu_list", "every mu must satisfy 1 <= mu < min(2, n)"));
    }
    let sigma_min = e.positive("sigma_min", Some(1e-3))?;
    let sigma_max = e.positive("sigma_max", Some(1e3))?;
    if sigma_max < sigma_min {
        return Err(e.err("sigma_max", "must be >= sigma_min"));
    }
    let sigma_count: usize = e.parse("sigma_count", Some(25))?;
    if sigma_count == 0 || (sigma_count == 1 && sigma_max > sigma_min) {
        return Err(e.err("sigma_count", "need at least two sigma values for a range"));
    }
    let field_budget: usize = e.parse("field_budget", Some(200))?;
    if field_budget < 50 {
        return Err(e.err("field_budget", format!("need at least 50 fields, got {field_budget}")));
    }
    let seed: u64 = e.parse("seed", Some(1))?;
    let rho = e.positive("rho", Some(1.0))?;
    let safety = e.positive("safety", Some(1.1))?;
    if safety < 1.0 {
        return Err(e.err("safety", "safety factor must be >= 1"));
    }
    let out_dir: String = e.parse("out_dir", Some("out".into()))?;
    Ok(Scenario {
        family,
        grid_n,
        dt,
        t_end_fraction,
        snapshots,
        q_list,
        mu_list,
        sigma_min,
        sigma_max,
        sigma_count,
        field_budget,
        seed,
        rho,
        safety,
        out_dir: PathBuf::from(out_dir),
    })
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ")
}

impl Scenario {
    pub fn dimension(&self) -> usize {
        match &self.family {
            FamilySpec::RoundSphere { n, .. } | FamilySpec::FlatTorus { n, .. } => *n,
            FamilySpec::ConformalS2 { .. } => 2,
        }
    }

    pub fn initial_state(&self) -> Result<MetricState> {
        match &self.family {
            FamilySpec::RoundSphere { n, r0 } => make_round_sphere(*n, *r0),
            FamilySpec::FlatTorus { n, lengths } => make_flat_torus(*n, lengths.clone()),
            FamilySpec::ConformalS2 { preset } => make_conformal_s2(
                self.grid_n,
                match preset {
                    PresetSpec::Round { r0 } => ConformalPreset::Round { r0: *r0 },
                    PresetSpec::Bumped { a, b } => ConformalPreset::Bumped { a: *a, b: *b },
                },
            ),
        }
    }

    /// Flow horizon: `t_end_fraction · T_max`, or `t_end_fraction` itself as
    /// an absolute time for eternal flows.
    pub fn t_end(&self, state0: &MetricState) -> f64 {
        match state0.extinction_time() {
            Some(t_max) => state0.t() + self.t_end_fraction * (t_max - state0.t()),
            None => state0.t() + self.t_end_fraction,
        }
    }

    pub fn flow_config(&self, state0: &MetricState) -> FlowConfig {
        FlowConfig::new(self.dt, self.t_end(state0))
            .with_snapshots(self.snapshots)
            .with_cfl(DEFAULT_CFL)
    }

    pub fn sigma_grid(&self) -> Vec<f64> {
        crate::semigroup::log_spaced(self.sigma_min, self.sigma_max, self.sigma_count)
    }

    /// Exponents with `q > 1`, used by the uniform Sobolev and κ stages.
    pub fn strict_exponents(&self) -> Vec<SobolevExponents> {
        self.q_list
            .iter()
            .filter(|q| **q > 1.0)
            .map(|q| SobolevExponents::new(self.dimension(), *q).unwrap())
            .collect()
    }

    /// Every setting, defaults included, as `key = value` lines; derived
    /// Sobolev exponents follow as comments.
    pub fn echo(&self) -> String {
        let mut lines = Vec::new();
        match &self.family {
            FamilySpec::RoundSphere { n, r0 } => {
                lines.push("family = round_sphere".to_string());
                lines.push(format!("n = {n}"));
                lines.push(format!("r0 = {r0}"));
            }
            FamilySpec::FlatTorus { n, lengths } => {
                lines.push("family = flat_torus".into());
                lines.push(format!("n = {n}"));
                lines.push(format!("lengths = {}", join(lengths)));
            }
            FamilySpec::ConformalS2 { preset } => {
                lines.push("family = conformal_s2".into());
                lines.push("n = 2".into());
                match preset {
                    PresetSpec::Round { r0 } => {
                        lines.push("preset = round".into());
                        lines.push(format!("r0 = {r0}"));
                    }
                    PresetSpec::Bumped { a, b } => {
                        lines.push("preset = bumped".into());
                        lines.push(format!("bump_a = {a}"));
                        lines.push(format!("bump_b = {b}"));
                    }
                }
            }
        }
        lines.push(format!("grid_n = {}", self.grid_n));
        lines.push(format!("dt = {}", self.dt));
        lines.push(format!("t_end_fraction = {}", self.t_end_fraction));
        lines.push(format!("snapshots = {}", self.snapshots));
        lines.push(format!("q_list = {}", join(&self.q_list)));
        lines.push(format!("mu_list = {}", join(&self.mu_list)));
        lines.push(format!("sigma_min = {}", self.sigma_min));
        lines.push(format!("sigma_max = {}", self.sigma_max));
        lines.push(format!("sigma_count = {}", self.sigma_count));
        lines.push(format!("field_budget = {}", self.field_budget));
        lines.push(format!("seed = {}", self.seed));
        lines.push(format!("rho = {}", self.rho));
        lines.push(format!("safety = {}", self.safety));
        lines.push(format!("out_dir = {}", self.out_dir.display()));
        for q in &self.q_list {
            let e = SobolevExponents::new(self.dimension(), *q).unwrap();
            lines.push(format!("# q = {q} -> p = {}", fmt_f64(e.p())));
        }
        lines.join("\n") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_sphere_defaults() {
        let s = parse_scenario("family = round_sphere\nn = 2\nr0 = 1\n").unwrap();
        assert_eq!(s.family, FamilySpec::RoundSphere { n: 2, r0: 1.0 });
        assert_eq!(s.grid_n, 128);
        assert_eq!(s.field_budget, 200);
        assert_eq!(s.sigma_grid().len(), 25);
    }

    #[test]
    fn q_alias_echoes_p() {
        let s = parse_scenario("family = round_sphere # comment\nq = 1.5\n").unwrap();
        assert_eq!(s.q_list, vec![1.5]);
        assert!(s.echo().contains("# q = 1.5 -> p = 6.0000000000000000e0"));
        let again = parse_scenario(&s.echo()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejections_name_line_and_key() {
        let e = parse_scenario("family = round_sphere\nn = 2\nq = 2.5\n").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (3, "q_list"));
        let e = parse_scenario("family = round_sphere\ncolour = red\n").unwrap_err();
        assert_eq!((e.line, e.key.as_str()), (2, "colour"));
        let e = parse_scenario("family = round_sphere\ndt = fast\n").unwrap_err();
        assert_eq!(e.key, "dt");
        let e = parse_scenario("n = 2\n").unwrap_err();
        assert_eq!(e.key, "family");
        assert!(parse_scenario("family = round_sphere\nn = 2\nn = 3\n").is_err());
        assert!(parse_scenario("family = flat_torus\nlengths = 1, 2, 3\n").is_err());
        assert!(parse_scenario("family = round_sphere\nt_end_fraction = 0.995\n").is_err());
        assert!(parse_scenario("family = round_sphere\nbump_a = 0.3\n").is_err());
    }

    #[test]
    fn torus_horizon_is_absolute() {
        let s = parse_scenario("family = flat_torus\nt_end_fraction = 0.5\n").unwrap();
        let st = s.initial_state().unwrap();
        assert_eq!(s.t_end(&st), 0.5);
        let s = parse_scenario("family = conformal_s2\npreset = bumped\n").unwrap();
        let st = s.initial_state().unwrap();
        assert!((s.t_end(&st) - 0.9 * st.extinction_time().unwrap()).abs() < 1e-12);
    }
}
