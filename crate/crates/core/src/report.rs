//! Inequality reports and the plain-text artifacts built from them: CSV rows
//! with 17 significant digits and small SVG line plots.

use std::fmt::Write as _;
use std::io::{self, Write};

pub const DEFAULT_TOL_ABS: f64 = 1e-10;
pub const DEFAULT_TOL_REL: f64 = 1e-8;

pub const REPORT_CSV_HEADER: &str = "check_id,t,q,p,mu,sigma,lhs,rhs,margin,witness,pass";

/// Float formatting used by every CSV: 17 significant digits, `.` decimal point.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One instance of an inequality `lhs <= rhs`.
#[derive(Clone, Debug, PartialEq)]
pub struct InequalityReport {
    pub check_id: String,
    pub t: Option<f64>,
    pub q: Option<f64>,
    pub p: Option<f64>,
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub witness: String,
    pub pass: bool,
    pub tol_abs: f64,
    pub tol_rel: f64,
}

impl InequalityReport {
    pub fn new(check_id: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let mut r = InequalityReport {
            check_id: check_id.into(),
            t: None,
            q: None,
            p: None,
            mu: None,
            sigma: None,
            lhs,
            rhs,
            margin: rhs - lhs,
            witness: String::new(),
            pass: false,
            tol_abs: DEFAULT_TOL_ABS,
            tol_rel: DEFAULT_TOL_REL,
        };
        r.pass = r.evaluate();
        r
    }

    fn evaluate(&self) -> bool {
        self.margin.is_finite() && self.margin >= -self.tol_abs - self.tol_rel * self.rhs.abs()
    }

    pub fn with_tolerances(mut self, tol_abs: f64, tol_rel: f64) -> Self {
        self.tol_abs = tol_abs;
        self.tol_rel = tol_rel;
        self.pass = self.evaluate();
        self
    }

    pub fn at_time(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }

    pub fn with_exponents(mut self, q: f64, p: f64) -> Self {
        self.q = Some(q);
        self.p = Some(p);
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = Some(mu);
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_witness(mut self, witness: impl Into<String>) -> Self {
        self.witness = witness.into();
        self
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.check_id,
            fmt_opt(self.t),
            fmt_opt(self.q),
            fmt_opt(self.p),
            fmt_opt(self.mu),
            fmt_opt(self.sigma),
            fmt_f64(self.lhs),
            fmt_f64(self.rhs),
            fmt_f64(self.margin),
            self.witness,
            self.pass
        )
    }
}

pub fn write_reports_csv<'a>(
    reports: impl IntoIterator<Item = &'a InequalityReport>,
    out: &mut impl Write,
) -> io::Result<()> {
    writeln!(out, "{REPORT_CSV_HEADER}")?;
    for r in reports {
        writeln!(out, "{}", r.csv_row())?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Minimal SVG line plot. Output depends only on the data, so identical
/// inputs give byte-identical files.
#[derive(Clone, Debug, Default)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    pub annotations: Vec<String>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

impl LinePlot {
    pub fn render(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (left, right, top, bottom) = (70.0, 20.0, 40.0, 60.0);
        let tx = |x: f64| if self.log_x { x.log10() } else { x };
        let ty = |y: f64| if self.log_y { y.log10() } else { y };
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| {
                (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0) && x.is_finite() && y.is_finite()
            })
            .map(|&(x, y)| (tx(x), ty(y)))
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in &pts {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-300 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 * y0.abs().max(1.0) {
            y0 -= 0.5 * y0.abs().max(1.0) * 1e-3;
            y1 += 0.5 * y1.abs().max(1.0) * 1e-3;
        }
        let px = |x: f64| left + (x - x0) / (x1 - x0) * (w - left - right);
        let py = |y: f64| h - bottom - (y - y0) / (y1 - y0) * (h - top - bottom);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" font-family="sans-serif" font-size="15" text-anchor="middle">{}</text>"#,
            w / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - left - right,
            h - top - bottom
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let lx = if self.log_x { format!("1e{fx:.2}") } else { format!("{fx:.4}") };
            let ly = if self.log_y { format!("1e{fy:.2}") } else { format!("{fy:.4}") };
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{lx}</text>"#,
                px(fx),
                h - bottom + 16.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{ly}</text>"#,
                left - 6.0,
                py(fy) + 3.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            w / 2.0,
            h - 18.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            h / 2.0,
            h / 2.0,
            escape(&self.y_label)
        );
        for (k, series) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let path: Vec<String> = series
                .points
                .iter()
                .filter(|(x, y)| (!self.log_x || *x > 0.0) && (!self.log_y || *y > 0.0))
                .map(|&(x, y)| format!("{:.2},{:.2}", px(tx(x)), py(ty(y))))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                path.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="{color}">{}</text>"#,
                left + 10.0,
                top + 16.0 + 14.0 * k as f64,
                escape(&series.name)
            );
        }
        for (k, note) in self.annotations.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="end">{}</text>"#,
                w - right - 8.0,
                top + 16.0 + 14.0 * k as f64,
                escape(note)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_flag_follows_margin_and_tolerances() {
        assert!(InequalityReport::new("x", 1.0, 1.0).pass);
        assert!(InequalityReport::new("x", 1.0 + 5e-11, 1.0).pass);
        assert!(InequalityReport::new("x", 1.0 + 5e-9, 1.0).pass);
        assert!(!InequalityReport::new("x", 1.0 + 1e-7, 1.0).pass);
        assert!(!InequalityReport::new("x", f64::NAN, 1.0).pass);
        assert!(InequalityReport::new("x", 1.1, 1.0).with_tolerances(0.2, 0.0).pass);
    }

    #[test]
    fn csv_row_layout() {
        let r = InequalityReport::new("jensen", 0.5, 1.0)
            .at_time(0.0)
            .with_exponents(1.5, 6.0)
            .with_witness("const");
        let row = r.csv_row();
        assert_eq!(row.split(',').count(), REPORT_CSV_HEADER.split(',').count());
        assert!(row.starts_with("jensen,0.0000000000000000e0,1.5000000000000000e0,6.0000000000000000e0,,,"));
        assert!(row.ends_with(",const,true"));
    }

    #[test]
    fn svg_is_deterministic() {
        let plot = LinePlot {
            title: "a < b".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                name: "s".into(),
                points: vec![(1e-3, 10.0), (1e-2, 1.0), (1e-1, 0.1)],
            }],
            annotations: vec!["slope 1.0".into()],
            ..Default::default()
        };
        let a = plot.render();
        assert_eq!(a, plot.render());
        assert!(a.contains("a &lt; b"));
        assert!(a.contains("slope 1.0"));
    }
}
