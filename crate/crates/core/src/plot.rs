//! Minimal deterministic SVG line charts for experiment results.

use std::fmt::Write;

use crate::experiment::{Quantity, RunResult};

const W: f64 = 720.0;
const H: f64 = 440.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 230.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#7f7f7f", "#bcbd22",
];

/// One named series of `(x, y)` points.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub dashed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    if !(hi > lo) {
        return vec![lo];
    }
    let raw = (hi - lo) / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|k| k * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

impl Chart {
    /// Renders the chart. Points that cannot be drawn (non-finite, or
    /// non-positive on a log axis) are dropped.
    pub fn to_svg(&self) -> String {
        let tr = |y: f64| if self.log_y { y.log10() } else { y };
        let series: Vec<(usize, &Series, Vec<(f64, f64)>)> = self
            .series
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pts = s
                    .points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || *y > 0.0))
                    .map(|&(x, y)| (x, tr(y)))
                    .collect::<Vec<_>>();
                (i, s, pts)
            })
            .filter(|(_, s, pts)| {
                if pts.is_empty() {
                    log::warn!("series `{}` has no plottable points; skipped", s.name);
                }
                !pts.is_empty()
            })
            .collect();
        let all = series.iter().flat_map(|(_, _, p)| p.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 == x0 {
            x1 = x0 + 1.0;
        }
        if self.log_y {
            y0 = y0.floor();
            y1 = y1.ceil();
        } else {
            let pad = 0.05 * (y1 - y0).max(1e-12);
            y0 -= pad;
            y1 += pad;
        }
        if y1 == y0 {
            y1 = y0 + 1.0;
        }
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        );
        for t in nice_ticks(x0, x1, 8) {
            let x = sx(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#e0e0e0"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
                fmt_tick(t)
            );
        }
        let yticks: Vec<f64> = if self.log_y {
            (y0 as i64..=y1 as i64).map(|e| e as f64).collect()
        } else {
            nice_ticks(y0, y1, 6)
        };
        for t in yticks {
            let y = sy(t);
            let label = if self.log_y { format!("1e{}", t as i64) } else { fmt_tick(t) };
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/><text x="{:.2}" y="{:.2}" text-anchor="end">{label}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 18.0,
            esc(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.y_label)
        );
        for (row, (i, ser, pts)) in series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let dash = if ser.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>"#,
                path.join(" ")
            );
            for &(x, y) in pts {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    sx(x),
                    sy(y)
                );
            }
            let ly = TOP + 10.0 + row as f64 * 18.0;
            let lx = W - RIGHT + 14.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.1}" y="{:.1}">{}</text>"#,
                lx + 22.0,
                lx + 28.0,
                ly + 4.0,
                esc(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

/// One chart per plotted quantity: `mmmse.svg` (log scale, estimator and
/// bound series together) and `total_bias.svg`.
pub fn emit_plots(result: &RunResult) -> Vec<(String, String)> {
    let mut names: Vec<(Quantity, String)> = Vec::new();
    for r in &result.rows {
        let key = (r.quantity, r.series.clone());
        if !names.contains(&key) {
            names.push(key);
        }
    }
    let collect = |q: Quantity, name: &str| -> Vec<(f64, f64)> {
        result
            .series(q, name)
            .iter()
            .filter_map(|r| r.value.map(|v| (r.sweep_value as f64, v)))
            .collect()
    };
    let x_label = result.sweep_var.to_string();
    let mut mmmse = Chart {
        title: format!("{}: missing-mass MSE", result.name),
        x_label: x_label.clone(),
        y_label: "mmMSE".into(),
        log_y: true,
        series: Vec::new(),
    };
    let mut bias = Chart {
        title: format!("{}: total missing-mass bias", result.name),
        x_label,
        y_label: "sum of biases".into(),
        log_y: false,
        series: Vec::new(),
    };
    for (q, name) in &names {
        let points = collect(*q, name);
        match q {
            Quantity::Mmmse => mmmse.series.push(Series {
                name: name.clone(),
                points,
                dashed: false,
            }),
            Quantity::BoundValue => mmmse.series.push(Series {
                name: name.clone(),
                points,
                dashed: true,
            }),
            Quantity::TotalBias => bias.series.push(Series {
                name: name.clone(),
                points,
                dashed: false,
            }),
        }
    }
    let mut out = Vec::new();
    if !mmmse.series.is_empty() {
        out.push(("mmmse.svg".to_string(), mmmse.to_svg()));
    }
    if !bias.series.is_empty() {
        out.push(("total_bias.svg".to_string(), bias.to_svg()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_chart_skips_nonpositive_points() {
        let c = Chart {
            title: "t".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            log_y: true,
            series: vec![
                Series {
                    name: "a<b".into(),
                    points: vec![(1.0, 0.1), (2.0, 0.01), (3.0, 0.0)],
                    dashed: false,
                },
                Series {
                    name: "empty".into(),
                    points: vec![(1.0, -1.0)],
                    dashed: true,
                },
            ],
        };
        let svg = c.to_svg();
        assert_eq!(svg.matches("<circle").count(), 2);
        assert!(svg.contains("a&lt;b") && !svg.contains("empty"));
        assert_eq!(svg, c.to_svg());
    }

    #[test]
    fn ticks() {
        assert_eq!(nice_ticks(0.0, 10.0, 5), vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0]);
        assert_eq!(fmt_tick(0.25), "0.25");
        assert_eq!(fmt_tick(0.001), "1e-3");
    }
}
