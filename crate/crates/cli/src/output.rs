//! Trace files: CSV, plain-text report and SVG charts.

use std::fmt::Write as _;
use std::io::Write;

use linetube::sim::{SimTrace, SummaryReport};
use linetube::ScenarioConfig;

/// Column names in output order.
///
/// `time_s`, then per line `F_MW[..]`, `T_C[..]`, `T_limit_C[..]`,
/// `tightened_T_limit_C[..]`, then `u_batt_MW`, `E_MWh`, per site
/// `curtail_MW[..]` (level), the nominal input `u_star_*`, the applied input
/// `kappa_*`, `qp_status` and `margin`.
pub fn csv_header(cfg: &ScenarioConfig) -> Vec<String> {
    let lines: Vec<&str> = cfg.lines.iter().map(|l| l.name.as_str()).collect();
    let sites: Vec<&str> = cfg.curtailment.iter().map(|c| c.site.as_str()).collect();
    let mut h = vec!["time_s".to_string()];
    for prefix in ["F_MW", "T_C", "T_limit_C", "tightened_T_limit_C"] {
        h.extend(lines.iter().map(|l| format!("{prefix}[{l}]")));
    }
    h.push("u_batt_MW".into());
    h.push("E_MWh".into());
    h.extend(sites.iter().map(|s| format!("curtail_MW[{s}]")));
    for prefix in ["u_star", "kappa"] {
        h.push(format!("{prefix}_batt_MW"));
        h.extend(sites.iter().map(|s| format!("{prefix}_curt_MW[{s}]")));
    }
    h.push("qp_status".into());
    h.push("margin".into());
    h
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per applied step; the terminal state has no decision and is not
/// written, so `--steps 0` produces a header only.
pub fn write_csv<W: Write>(out: W, cfg: &ScenarioConfig, trace: &SimTrace) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(cfg))?;
    for s in &trace.steps {
        let Some(r) = &s.record else { continue };
        let mut row = vec![num(s.time_s)];
        row.extend(s.state.flows.iter().map(|&v| num(v)));
        row.extend(s.state.temperatures.iter().map(|&v| num(v)));
        row.extend(trace.temperature_limits.iter().map(|&v| num(v)));
        row.extend(trace.tightened_temperature_limits.iter().map(|&v| num(v)));
        row.push(num(s.state.battery_power));
        row.push(num(s.state.battery_energy));
        row.extend(s.state.curtail_level.iter().map(|&v| num(v)));
        row.extend(r.nominal_u0.iter().map(|&v| num(v)));
        row.extend(r.applied.iter().map(|&v| num(v)));
        row.push(r.status.as_str().to_string());
        row.push(num(r.margin));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `key: value` lines.
pub fn format_report(cfg: &ScenarioConfig, mode: &str, seed: u64, r: &SummaryReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", cfg.name);
    let _ = writeln!(s, "mode: {mode}");
    let _ = writeln!(s, "seed: {seed}");
    let _ = writeln!(s, "steps: {}", r.steps);
    for (line, t) in cfg.lines.iter().zip(&r.max_temperature_c) {
        let _ = writeln!(s, "max_temperature_c[{}]: {t:.6}", line.name);
    }
    let _ = writeln!(s, "temperature_margin_c: {:.6}", r.temperature_margin_c);
    let _ = writeln!(s, "violations: {}", r.violations);
    let _ = writeln!(s, "curtailed_energy_mwh: {:.6}", r.curtailed_energy_mwh);
    let _ = writeln!(s, "battery_throughput_mwh: {:.6}", r.battery_throughput_mwh);
    let _ = writeln!(s, "infeasible_steps: {}", r.infeasible_steps);
    let _ = writeln!(s, "clamped_steps: {}", r.clamped_steps);
    let _ = writeln!(s, "tube_exits: {}", r.tube_exits);
    match r.min_constraint_margin {
        Some(m) => {
            let _ = writeln!(s, "min_constraint_margin: {m:.6e}");
        }
        None => {
            let _ = writeln!(s, "min_constraint_margin: none");
        }
    }
    s
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    dashed: bool,
}

fn chart(out: &mut String, y0: f64, title: &str, unit: &str, series: &[Series]) {
    let (w, h, left, top) = (760.0, 260.0, 70.0, y0 + 30.0);
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.1.is_finite());
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if !x_min.is_finite() {
        (x_min, x_max, y_min, y_max) = (0.0, 1.0, 0.0, 1.0);
    }
    if x_max - x_min < 1e-12 {
        x_max = x_min + 1.0;
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-3);
    y_min -= pad;
    y_max += pad;
    let sx = |x: f64| left + (x - x_min) / (x_max - x_min) * w;
    let sy = |y: f64| top + h - (y - y_min) / (y_max - y_min) * h;
    let _ = writeln!(out, r#"<text x="{left}" y="{}" font-size="14">{}</text>"#, y0 + 20.0, escape(title));
    let _ = writeln!(out, r##"<rect x="{left}" y="{top}" width="{w}" height="{h}" fill="none" stroke="#444"/>"##);
    for i in 0..=4 {
        let y = y_min + (y_max - y_min) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" font-size="10" text-anchor="end">{y:.2}</text>"#,
            left - 4.0,
            sy(y) + 3.0
        );
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10">{unit}</text>"#, 8.0, top - 6.0);
    let _ = writeln!(
        out,
        r#"<text x="{left}" y="{}" font-size="10">{x_min:.0} s</text><text x="{}" y="{}" font-size="10" text-anchor="end">{x_max:.0} s</text>"#,
        top + h + 14.0,
        left + w,
        top + h + 14.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let path: Vec<String> = s.points.iter().filter(|p| p.1.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let dash = if s.dashed { r#" stroke-dasharray="6,4""# } else { "" };
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5"{dash} points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{}</text>"#,
            left + w + 8.0,
            top + 12.0 + 14.0 * k as f64,
            escape(&s.label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Temperatures against their limits, and the control levels, over time.
pub fn render_svg(cfg: &ScenarioConfig, trace: &SimTrace) -> String {
    let time: Vec<f64> = trace.steps.iter().map(|s| s.time_s).collect();
    let mut temps = Vec::new();
    for (i, line) in cfg.lines.iter().enumerate() {
        temps.push(Series {
            label: format!("T {}", line.name),
            points: trace.steps.iter().map(|s| (s.time_s, s.state.temperatures[i])).collect(),
            dashed: false,
        });
        temps.push(Series {
            label: format!("limit {}", line.name),
            points: time.iter().map(|&t| (t, trace.temperature_limits[i])).collect(),
            dashed: true,
        });
    }
    let mut controls = vec![Series {
        label: "battery MW".into(),
        points: trace.steps.iter().map(|s| (s.time_s, s.state.battery_power)).collect(),
        dashed: false,
    }];
    for (j, c) in cfg.curtailment.iter().enumerate() {
        controls.push(Series {
            label: format!("curtail {}", c.site),
            points: trace.steps.iter().map(|s| (s.time_s, s.state.curtail_level[j])).collect(),
            dashed: false,
        });
    }
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="1000" height="660" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    chart(&mut out, 0.0, "Conductor temperature", "°C", &temps);
    chart(&mut out, 330.0, "Battery power and curtailment", "MW", &controls);
    out.push_str("</svg>\n");
    out
}
