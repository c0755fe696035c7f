use std::fmt::Write as _;
use std::path::Path;

use super::Trajectory;
use crate::envs::BoxSet;
use crate::numerics::Vector;
use crate::{Error, Result};

const WIDTH: f64 = 720.0;
const PANEL_HEIGHT: f64 = 120.0;
const PANEL_GAP: f64 = 36.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;

struct Panel<'a> {
    label: String,
    series: Vec<f64>,
    references: Vec<(f64, &'a str)>,
}

/// Value range covering data and reference lines, padded by 5%.
fn value_range(panel: &Panel) -> (f64, f64) {
    let values = panel.series.iter().copied().chain(panel.references.iter().map(|r| r.0)).filter(|v| v.is_finite());
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

/// Standalone SVG with one panel per state (setpoint dashed) and one per
/// input (both bounds dashed). Output bytes depend only on the inputs.
pub fn render_svg(traj: &Trajectory, setpoint: &Vector, input_box: &BoxSet, title: &str) -> String {
    let mut panels = Vec::new();
    for i in 0..setpoint.len() {
        panels.push(Panel {
            label: format!("x{}", i + 1),
            series: traj.states.iter().map(|x| x[i]).collect(),
            references: vec![(setpoint[i], "setpoint")],
        });
    }
    for j in 0..input_box.dim() {
        panels.push(Panel {
            label: format!("u{}", j + 1),
            series: traj.inputs.iter().map(|u| u[j]).collect(),
            references: vec![(input_box.lower[j], "bound"), (input_box.upper[j], "bound")],
        });
    }
    let height = MARGIN_TOP + panels.len() as f64 * (PANEL_HEIGHT + PANEL_GAP);
    let t_end = (traj.len().saturating_sub(1) as f64 * traj.dt).max(if traj.dt > 0.0 { traj.dt } else { 1.0 });
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let sx = |t: f64| MARGIN_LEFT + plot_w * t / t_end;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{MARGIN_LEFT}" y="20" font-size="14">{}</text>"#, escape(title));
    for (p, panel) in panels.iter().enumerate() {
        let top = MARGIN_TOP + p as f64 * (PANEL_HEIGHT + PANEL_GAP);
        let bottom = top + PANEL_HEIGHT;
        let (lo, hi) = value_range(panel);
        let sy = |v: f64| bottom - PANEL_HEIGHT * (v - lo) / (hi - lo);
        let _ = writeln!(
            s,
            r#"<path class="axis" d="M{MARGIN_LEFT:.2},{top:.2} V{bottom:.2} H{:.2}" fill="none" stroke="black"/>"#,
            WIDTH - MARGIN_RIGHT
        );
        let _ = writeln!(s, r#"<text x="8" y="{:.2}">{}</text>"#, top + PANEL_HEIGHT / 2.0, panel.label);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 4.0, top + 10.0, fmt_tick(hi));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{bottom:.2}" text-anchor="end">{}</text>"#, MARGIN_LEFT - 4.0, fmt_tick(lo));
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">t = {}</text>"#, WIDTH - MARGIN_RIGHT, bottom + 14.0, fmt_tick(t_end));
        for (value, class) in &panel.references {
            let color = if *class == "setpoint" { "green" } else { "red" };
            let _ = writeln!(
                s,
                r#"<line class="{class}" x1="{MARGIN_LEFT:.2}" x2="{:.2}" y1="{y:.2}" y2="{y:.2}" stroke="{color}" stroke-dasharray="6,4"/>"#,
                WIDTH - MARGIN_RIGHT,
                y = sy(*value)
            );
        }
        if !panel.series.is_empty() {
            let points: Vec<String> =
                panel.series.iter().enumerate().map(|(k, &v)| format!("{:.2},{:.2}", sx(k as f64 * traj.dt), sy(v))).collect();
            let _ = writeln!(s, r#"<polyline class="series" points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, points.join(" "));
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg_timeseries(traj: &Trajectory, setpoint: &Vector, input_box: &BoxSet, title: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, render_svg(traj, setpoint, input_box, title)).map_err(|e| Error::io(path, e))
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.3e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    fn sample() -> (Trajectory, Vector, BoxSet) {
        let traj = Trajectory {
            dt: 0.5,
            states: (0..5).map(|k| dvector![k as f64, 1.0 - k as f64]).collect(),
            inputs: (0..5).map(|k| dvector![0.1 * k as f64]).collect(),
            costs: vec![0.0; 5],
            infeasible: false,
        };
        (traj, dvector![2.0, 0.0], BoxSet::new(dvector![-1.0], dvector![1.0]).unwrap())
    }

    #[test]
    fn empty_trajectory_has_axes_only() {
        let (_, sp, b) = sample();
        let svg = render_svg(&Trajectory::default(), &sp, &b, "empty");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches(r#"class="axis""#).count(), 3);
        assert_eq!(svg.matches("<polyline").count(), 0);
    }

    #[test]
    fn two_bound_lines_per_input_and_one_setpoint_per_state() {
        let (traj, sp, b) = sample();
        let svg = render_svg(&traj, &sp, &b, "run");
        assert_eq!(svg.matches(r#"class="bound""#).count(), 2);
        assert_eq!(svg.matches(r#"class="setpoint""#).count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 3);
    }

    #[test]
    fn output_is_deterministic_bytes() {
        let (traj, sp, b) = sample();
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
        emit_svg_timeseries(&traj, &sp, &b, "a<b", &p1).unwrap();
        emit_svg_timeseries(&traj, &sp, &b, "a<b", &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        assert!(std::fs::read_to_string(&p1).unwrap().contains("a&lt;b"));
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let (traj, sp, b) = sample();
        let err = emit_svg_timeseries(&traj, &sp, &b, "x", "/nonexistent-dir/plot.svg").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
