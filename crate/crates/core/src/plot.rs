//! Minimal SVG line charts for sweeps, fits and CAL curves.

use std::fmt::Write as _;

use crate::crm::TemperatureSweepResult;
use crate::irm::{CalCurve, CalibrationResult};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, style: Style::Line }
    }

    pub fn markers(name: &str, points: Vec<(f64, f64)>) -> Self {
        Self { name: name.into(), points, style: Style::Markers }
    }
}

#[derive(Debug, Clone)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Labelled vertical guide lines.
    pub guides: Vec<(String, f64)>,
    /// Free-form text embedded as an XML comment (provenance).
    pub comment: Option<String>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            guides: Vec::new(),
            comment: None,
        }
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let pts = self.series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x1 = x0 + 1.0;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        (x0, x1, y0 - pad, y1 + pad)
    }

    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        if let Some(c) = &self.comment {
            let _ = writeln!(s, "<!-- {} -->", c.replace("--", "- -"));
        }
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            WIDTH / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        for i in 0..=5 {
            let fx = x0 + (x1 - x0) * i as f64 / 5.0;
            let fy = y0 + (y1 - y0) * i as f64 / 5.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
                sx(fx),
                MARGIN_T + ph + 18.0,
                fx
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
                MARGIN_L - 6.0,
                sy(fy) + 4.0,
                fy
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            MARGIN_L + pw / 2.0,
            HEIGHT - 12.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<(f64, f64)> =
                series.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
            match series.style {
                Style::Line => {
                    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                        path.join(" ")
                    );
                }
                Style::Markers => {
                    for &(x, y) in &pts {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
                    }
                }
            }
            let ly = MARGIN_T + 14.0 + 18.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 12.0;
            let _ = writeln!(s, r#"<rect x="{lx}" y="{:.1}" width="12" height="12" fill="{color}"/>"#, ly - 10.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 18.0, escape(&series.name));
        }
        for (label, x) in &self.guides {
            if *x < x0 || *x > x1 {
                continue;
            }
            let _ = writeln!(
                s,
                r#"<line x1="{0:.2}" x2="{0:.2}" y1="{MARGIN_T}" y2="{1:.2}" stroke="gray" stroke-dasharray="5,4"/>"#,
                sx(*x),
                MARGIN_T + ph
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.1}" fill="gray">{}</text>"#,
                sx(*x) + 4.0,
                MARGIN_T + 14.0,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

pub fn sweep_chart(sweep: &TemperatureSweepResult) -> Chart {
    let mut c = Chart::new("Effect of temperature on grading error", "temperature", "error (grade points)");
    c.series.push(Series::line("RMSE", sweep.points.iter().map(|p| (p.temperature, p.rmse)).collect()));
    c.series.push(Series::line("MAE", sweep.points.iter().map(|p| (p.temperature, p.mae)).collect()));
    c.guides.push((format!("best {:.2}", sweep.best_temperature), sweep.best_temperature));
    c
}

fn dense(domain: (f64, f64), f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    (0..=200)
        .map(|i| {
            let x = domain.0 + (domain.1 - domain.0) * i as f64 / 200.0;
            (x, f(x))
        })
        .collect()
}

/// Sweep data with the logistic RMSE fit and quartic penalty fit of one
/// CAL variant.
pub fn fits_chart(cal: &CalibrationResult, curve: &CalCurve) -> Chart {
    let (title, name, data): (&str, &str, Vec<(f64, f64)>) = match curve.mode {
        crate::irm::CalMode::Scal => (
            "Logistic fit (standardized RMSE) and quartic penalty fit",
            "standardized RMSE",
            cal.sweep.iter().filter_map(|p| Some((p.s_k, p.z_e?))).collect(),
        ),
        crate::irm::CalMode::Ncal => (
            "Logistic fit (normalized RMSE) and quartic penalty fit",
            "normalized RMSE",
            cal.sweep.iter().filter_map(|p| Some((p.s_k, p.e_norm?))).collect(),
        ),
    };
    let mut c = Chart::new(title, "indecisiveness threshold", "value");
    c.series.push(Series::markers(name, data));
    c.series.push(Series::line("logistic fit", dense(curve.domain, |x| curve.rmse_fit.eval(x))));
    c.series.push(Series::markers("penalty", cal.sweep.iter().map(|p| (p.s_k, p.penalty)).collect()));
    c.series.push(Series::line("quartic fit", dense(curve.domain, |x| curve.penalty_fit.eval(x))));
    c.guides.push((format!("cutoff {:.3}", cal.exclusion_cutoff), cal.exclusion_cutoff));
    c
}

pub fn cal_chart(cal: &CalibrationResult) -> Chart {
    let mut c = Chart::new("Confidence-aware loss", "indecisiveness threshold", "CAL");
    c.series.push(Series::line("S-CAL", dense(cal.scal.domain, |x| cal.scal.eval(x))));
    c.series.push(Series::line("N-CAL", dense(cal.ncal.domain, |x| cal.ncal.eval(x))));
    c.guides.push((format!("S-CAL min {:.3}", cal.optimal_is_scal), cal.optimal_is_scal));
    c.guides.push((format!("N-CAL infl. {:.3}", cal.optimal_is_ncal), cal.optimal_is_ncal));
    c
}
