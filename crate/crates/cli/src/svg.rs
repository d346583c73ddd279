//! Faceted line charts of rejection rate against dropout rate, one panel per
//! `(ρ, b)` and one line per estimator. The output depends only on the rows
//! passed in, so re-rendering a results CSV reproduces the file byte for byte.

use std::fmt::Write;

use mmrm_core::harness::ResultRow;

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 170.0;
const GAP: f64 = 28.0;
const LEFT: f64 = 70.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 60.0;
const LEGEND_W: f64 = 140.0;

const SERIES: [(&str, &str, &str); 3] = [
    ("ancova", "ANCOVA", "#1b9e77"),
    ("mmrm", "MMRM", "#d95f02"),
    ("mmrmx", "MMRM\u{2297}", "#7570b3"),
];

pub struct Chart<'a> {
    pub title: &'a str,
    pub y_label: &'a str,
    /// Dashed horizontal line, e.g. the nominal level.
    pub reference: Option<f64>,
}

pub const POWER_CHART: Chart<'static> = Chart {
    title: "Power, MCAR dropout",
    y_label: "power",
    reference: None,
};

pub const TYPE1_CHART: Chart<'static> = Chart {
    title: "Type I error, MAR dropout",
    y_label: "type I error",
    reference: Some(0.05),
};

fn sorted_unique(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn fmt_num(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// Renders `rows` as an SVG 1.1 document.
pub fn render(rows: &[ResultRow], chart: &Chart<'_>) -> String {
    let rhos = sorted_unique(rows.iter().map(|r| r.rho));
    let bs = sorted_unique(rows.iter().map(|r| r.b));
    let deltas = sorted_unique(rows.iter().map(|r| r.delta));
    let (x_min, x_max) = match (deltas.first(), deltas.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        (Some(&lo), _) => (lo - 0.05, lo + 0.05),
        _ => (0.0, 1.0),
    };

    let ncol = rhos.len().max(1) as f64;
    let nrow = bs.len().max(1) as f64;
    let width = LEFT + ncol * PANEL_W + (ncol - 1.0) * GAP + LEGEND_W;
    let height = TOP + nrow * PANEL_H + (nrow - 1.0) * GAP + BOTTOM;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (width - LEGEND_W) / 2.0,
        escape(chart.title)
    );

    for (ri, &b) in bs.iter().enumerate() {
        for (ci, &rho) in rhos.iter().enumerate() {
            let x0 = LEFT + ci as f64 * (PANEL_W + GAP);
            let y0 = TOP + ri as f64 * (PANEL_H + GAP);
            let px = |d: f64| x0 + (d - x_min) / (x_max - x_min) * PANEL_W;
            let py = |r: f64| y0 + (1.0 - r.clamp(0.0, 1.0)) * PANEL_H;

            let _ = writeln!(
                out,
                r##"<rect x="{x0:.1}" y="{y0:.1}" width="{PANEL_W:.1}" height="{PANEL_H:.1}" fill="none" stroke="#444"/>"##
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ρ = {}, b = {}</text>"#,
                x0 + PANEL_W / 2.0,
                y0 - 6.0,
                fmt_num(rho),
                fmt_num(b)
            );
            for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let y = py(tick);
                let _ = writeln!(
                    out,
                    r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/>"##,
                    x0 + PANEL_W
                );
                if ci == 0 {
                    let _ = writeln!(
                        out,
                        r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                        x0 - 5.0,
                        y + 4.0,
                        fmt_num(tick)
                    );
                }
            }
            for &d in &deltas {
                let x = px(d);
                let yb = y0 + PANEL_H;
                let _ = writeln!(
                    out,
                    r##"<line x1="{x:.1}" y1="{yb:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444"/>"##,
                    yb + 4.0
                );
                if ri + 1 == bs.len() {
                    let _ = writeln!(
                        out,
                        r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                        yb + 16.0,
                        fmt_num(d)
                    );
                }
            }
            if let Some(level) = chart.reference {
                let y = py(level);
                let _ = writeln!(
                    out,
                    r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#c00" stroke-dasharray="4 3"/>"##,
                    x0 + PANEL_W
                );
            }
            for (key, _, color) in SERIES {
                let mut pts: Vec<(f64, f64)> = rows
                    .iter()
                    .filter(|r| r.estimator == key && r.rho == rho && r.b == b)
                    .map(|r| (r.delta, r.rejection_rate))
                    .collect();
                pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                let pts: Vec<(f64, f64)> = pts.into_iter().filter(|p| p.1.is_finite()).collect();
                if pts.is_empty() {
                    continue;
                }
                let path: Vec<String> =
                    pts.iter().map(|&(d, r)| format!("{:.1},{:.1}", px(d), py(r))).collect();
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                    path.join(" ")
                );
                for &(d, r) in &pts {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.1}" cy="{:.1}" r="2.5" fill="{color}"/>"#,
                        px(d),
                        py(r)
                    );
                }
            }
        }
    }

    let grid_h = nrow * PANEL_H + (nrow - 1.0) * GAP;
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">dropout rate δ</text>"#,
        LEFT + (ncol * PANEL_W + (ncol - 1.0) * GAP) / 2.0,
        height - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{0:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {0:.1})">{1}</text>"#,
        TOP + grid_h / 2.0,
        escape(chart.y_label)
    );
    let lx = width - LEGEND_W + 16.0;
    for (i, (_, label, color)) in SERIES.iter().enumerate() {
        let y = TOP + 10.0 + i as f64 * 20.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}" stroke-width="2"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 28.0,
            y + 4.0,
            escape(label)
        );
    }
    if let Some(level) = chart.reference {
        let y = TOP + 10.0 + SERIES.len() as f64 * 20.0;
        let _ = writeln!(
            out,
            r##"<line x1="{lx:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#c00" stroke-dasharray="4 3"/>"##,
            lx + 22.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 28.0,
            y + 4.0,
            fmt_num(level)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(delta: f64, rho: f64, b: f64, estimator: &str, rate: f64) -> ResultRow {
        ResultRow {
            delta,
            rho,
            b,
            n: 400,
            n_reps: 10,
            estimator: estimator.into(),
            rejection_rate: rate,
            mc_se: 0.01,
            mean_tau: 0.3,
            sd_tau: 0.1,
            mean_se: 0.1,
            n_fail: 0,
        }
    }

    fn sample() -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for rho in [0.0, 0.9] {
            for b in [0.8, 1.0] {
                for delta in [0.0, 0.3] {
                    for (e, _, _) in SERIES {
                        rows.push(row(delta, rho, b, e, 0.5 + delta));
                    }
                }
            }
        }
        rows
    }

    const CHART: Chart<'static> = Chart {
        title: "Type I error",
        y_label: "rejection rate",
        reference: Some(0.05),
    };

    #[test]
    fn one_panel_per_facet_and_line_per_estimator() {
        let svg = render(&sample(), &CHART);
        assert!(svg.starts_with("<?xml"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 4 * 3);
        assert_eq!(svg.matches("ρ = 0.9, b = 0.8").count(), 1);
        assert_eq!(svg.matches("stroke-dasharray").count(), 4 + 1);
    }

    #[test]
    fn rendering_is_order_independent_and_deterministic() {
        let rows = sample();
        let mut reversed = rows.clone();
        reversed.reverse();
        assert_eq!(render(&rows, &CHART), render(&reversed, &CHART));
    }

    #[test]
    fn no_reference_line_for_power() {
        let chart = Chart {
            reference: None,
            ..CHART
        };
        assert!(!render(&sample(), &chart).contains("stroke-dasharray"));
    }

    #[test]
    fn labels_are_escaped() {
        let chart = Chart {
            title: "a < b & c",
            ..CHART
        };
        assert!(render(&[], &chart).contains("a &lt; b &amp; c"));
    }
}
