use std::fmt::Write as _;
use std::path::Path;

use super::results::{format_sig, ResultRow};
use crate::datagen::Condition;
use crate::error::{Error, Result};
use crate::simengine::Method;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 190.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn style(method: Method) -> (&'static str, &'static str) {
    match method {
        Method::Ranova => ("#1f77b4", "none"),
        Method::RanovaGg => ("#ff7f0e", "8 4"),
        Method::RanovaHf => ("#2ca02c", "2 3"),
        Method::MlmCs => ("#d62728", "10 3 2 3"),
        Method::MlmUn => ("#9467bd", "5 2 1 2 1 2"),
    }
}

fn y_step(top: f64) -> f64 {
    if top <= 0.15 {
        0.025
    } else if top <= 0.5 {
        0.05
    } else {
        0.1
    }
}

/// SVG line chart of rejection rate against sample size for one `(condition, m)` panel.
pub fn render_figure(rows: &[ResultRow], condition: Condition, m: usize) -> Result<String> {
    let panel: Vec<&ResultRow> = rows
        .iter()
        .filter(|r| r.condition == condition && r.m == m)
        .collect();
    let mut ns: Vec<usize> = panel.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < 2 {
        return Err(Error::MissingData(format!(
            "{condition}, m={m}: need at least 2 sample sizes, found {}",
            ns.len()
        )));
    }
    let mut series = Vec::new();
    for method in Method::ALL {
        let mut pts: Vec<&ResultRow> = panel
            .iter()
            .copied()
            .filter(|r| r.method == method)
            .collect();
        pts.sort_by_key(|r| r.n);
        if pts.len() < 2 {
            return Err(Error::MissingData(format!(
                "{condition}, m={m}: method {method} has {} sample sizes, need at least 2",
                pts.len()
            )));
        }
        series.push((method, pts));
    }
    let alpha = panel[0].alpha;
    let reps = panel[0].replications;

    let hi = panel
        .iter()
        .map(|r| r.rejection_rate + if r.mc_se.is_finite() { r.mc_se } else { 0.0 })
        .filter(|v| v.is_finite())
        .fold(1.5 * alpha, f64::max);
    let step = y_step(hi * 1.05);
    let top = ((hi * 1.05) / step).ceil() * step;

    let (n_min, n_max) = (ns[0] as f64, ns[ns.len() - 1] as f64);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |n: f64| LEFT + (n - n_min) / (n_max - n_min) * plot_w;
    let py = |v: f64| TOP + (1.0 - v / top) * plot_h;

    let mut s = String::new();
    writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    let violation = match condition {
        Condition::Spherical => "no sphericity violation",
        Condition::OddCorrelated => "sphericity violation",
    };
    writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">Average Type I error rates for {reps} tests: {violation}, m = {m}</text>"#,
        LEFT + plot_w / 2.0
    )
    .unwrap();

    // Bradley band and nominal alpha
    writeln!(
        s,
        r##"<rect class="bradley-band" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#cccccc" fill-opacity="0.35"/>"##,
        LEFT,
        py(1.5 * alpha),
        plot_w,
        py(0.5 * alpha) - py(1.5 * alpha)
    )
    .unwrap();
    writeln!(
        s,
        r##"<line class="alpha" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#444444" stroke-dasharray="3 3"/>"##,
        LEFT,
        py(alpha),
        LEFT + plot_w,
        py(alpha)
    )
    .unwrap();

    // axes
    writeln!(
        s,
        r##"<path d="M{:.2},{:.2} V{:.2} H{:.2}" fill="none" stroke="#000000"/>"##,
        LEFT,
        TOP,
        TOP + plot_h,
        LEFT + plot_w
    )
    .unwrap();
    for &n in &ns {
        let x = px(n as f64);
        writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{n}</text>"##,
            TOP + plot_h,
            TOP + plot_h + 5.0,
            TOP + plot_h + 20.0
        )
        .unwrap();
    }
    let ticks = (top / step).round() as usize;
    for k in 0..=ticks {
        let v = k as f64 * step;
        let y = py(v);
        writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT:.2}" y2="{y:.2}" stroke="#000000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 4.0,
            format_sig(v, 3)
        )
        .unwrap();
    }
    writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">sample size n</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Type I error rate</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    )
    .unwrap();

    for (method, pts) in &series {
        let (color, dash) = style(*method);
        let points: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.n as f64), py(r.rejection_rate)))
            .collect();
        writeln!(
            s,
            r#"<g class="series" data-method="{}" stroke="{color}" fill="{color}">"#,
            method.label()
        )
        .unwrap();
        writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke-width="2" stroke-dasharray="{dash}"/>"#,
            points.join(" ")
        )
        .unwrap();
        for r in pts {
            let x = px(r.n as f64);
            if r.mc_se.is_finite() && r.mc_se > 0.0 {
                writeln!(
                    s,
                    r#"<path class="whisker" d="M{x:.2},{:.2} V{:.2} M{:.2},{:.2} H{:.2} M{:.2},{:.2} H{:.2}" fill="none"/>"#,
                    py(r.rejection_rate - r.mc_se),
                    py(r.rejection_rate + r.mc_se),
                    x - 3.0,
                    py(r.rejection_rate - r.mc_se),
                    x + 3.0,
                    x - 3.0,
                    py(r.rejection_rate + r.mc_se),
                    x + 3.0
                )
                .unwrap();
            }
            writeln!(
                s,
                r#"<circle cx="{x:.2}" cy="{:.2}" r="3"/>"#,
                py(r.rejection_rate)
            )
            .unwrap();
        }
        s.push_str("</g>\n");
    }

    let lx = LEFT + plot_w + 20.0;
    s.push_str("<g class=\"legend\">\n");
    for (k, (method, _)) in series.iter().enumerate() {
        let (color, dash) = style(*method);
        let y = TOP + 10.0 + 22.0 * k as f64;
        writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2" stroke-dasharray="{dash}"/><text class="legend-label" x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 36.0,
            lx + 44.0,
            y + 4.0,
            method.label()
        )
        .unwrap();
    }
    let y = TOP + 10.0 + 22.0 * series.len() as f64;
    writeln!(
        s,
        r##"<rect x="{lx:.2}" y="{:.2}" width="36" height="10" fill="#cccccc" fill-opacity="0.35"/><text x="{:.2}" y="{:.2}">Bradley band</text>"##,
        y - 5.0,
        lx + 44.0,
        y + 4.0
    )
    .unwrap();
    s.push_str("</g>\n</svg>\n");
    Ok(s)
}

pub fn emit_figure(rows: &[ResultRow], condition: Condition, m: usize, path: &Path) -> Result<()> {
    let svg = render_figure(rows, condition, m)?;
    super::write_atomic(path, svg.as_bytes())
}
