//! Minimal SVG line charts. Output depends only on the data, so identical
//! runs give identical files.

use std::fmt::Write as _;

use crate::harness::RunLog;
use crate::zone::{ZoneId, N_ZONES};

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 150.0;
const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub dashed: bool,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Panel {
    /// Finite data range over all series, padded so flat lines stay visible.
    fn bounds(&self) -> Option<((f64, f64), (f64, f64))> {
        let pts = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        let mut b: Option<((f64, f64), (f64, f64))> = None;
        for &(x, y) in pts {
            b = Some(match b {
                None => ((x, x), (y, y)),
                Some(((x0, x1), (y0, y1))) => ((x0.min(x), x1.max(x)), (y0.min(y), y1.max(y))),
            });
        }
        b.map(|((x0, x1), (y0, y1))| {
            let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
            let pad = if y1 > y0 { 0.05 * (y1 - y0) } else { 1.0 };
            ((x0, x1), (y0 - pad, y1 + pad))
        })
    }
}

/// Panels stacked vertically sharing the x axis label.
pub fn render(panels: &[Panel], x_label: &str) -> String {
    let panel_total = PANEL_H + MARGIN_T + MARGIN_B;
    let height = panel_total * panels.len().max(1) as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="11">"#,
        w = PANEL_W + MARGIN_L + MARGIN_R
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        let top = i as f64 * panel_total + MARGIN_T;
        render_panel(&mut svg, panel, top, x_label);
    }
    svg.push_str("</svg>\n");
    svg
}

fn render_panel(svg: &mut String, panel: &Panel, top: f64, x_label: &str) {
    let left = MARGIN_L;
    let _ = writeln!(
        svg,
        r#"<text x="{left}" y="{:.1}" font-weight="bold">{}</text>"#,
        top - 8.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        svg,
        r##"<rect x="{left}" y="{top:.1}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#888"/>"##
    );
    let Some(((x0, x1), (y0, y1))) = panel.bounds() else {
        return;
    };
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * PANEL_W;
    let sy = |y: f64| top + PANEL_H - (y - y0) / (y1 - y0) * PANEL_H;

    for k in 0..=4 {
        let v = y0 + (y1 - y0) * k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"##,
            left + PANEL_W,
            left - 4.0,
            sy(v) + 4.0,
            y = sy(v)
        );
    }
    for k in 0..=6 {
        let v = x0 + (x1 - x0) * k as f64 / 6.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            sx(v),
            top + PANEL_H + 14.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        left + PANEL_W / 2.0,
        top + PANEL_H + 27.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(14,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + PANEL_H / 2.0,
        escape(&panel.y_label)
    );

    for (j, s) in panel.series.iter().enumerate() {
        // a non-finite sample breaks the line instead of poisoning the path
        let mut d = String::new();
        let mut pen_down = false;
        for &(x, y) in &s.points {
            if x.is_finite() && y.is_finite() {
                let _ = write!(d, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
                pen_down = true;
            } else {
                pen_down = false;
            }
        }
        let dash = if s.dashed { r#" stroke-dasharray="5,3""# } else { "" };
        let _ = writeln!(
            svg,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.2"{dash}><title>{}</title></path>"#,
            d.trim_end(),
            s.color,
            escape(&s.name)
        );
        let lx = left + PANEL_W - 150.0;
        let ly = top + 14.0 + 13.0 * j as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="{}"{dash}/><text x="{:.1}" y="{ly:.1}">{}</text>"#,
            ly - 4.0,
            lx + 18.0,
            ly - 4.0,
            s.color,
            lx + 22.0,
            escape(&s.name)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Room temperature against setpoint for each zone. Attacked runs get an
/// extra panel with the injected bias.
pub fn run_figure(log: &RunLog) -> String {
    let hours = |t: f64| t / 3600.0;
    let mut panels: Vec<Panel> = ZoneId::ALL
        .iter()
        .map(|&z| Panel {
            title: format!("{z} room ({}, {})", log.controller, if log.attacked { "attack" } else { "normal" }),
            y_label: "temperature [°C]".into(),
            series: vec![
                Series {
                    name: "room".into(),
                    color: "#1f77b4",
                    dashed: false,
                    points: log.records.iter().map(|r| (hours(r.t), r.state.room(z))).collect(),
                },
                Series {
                    name: "setpoint".into(),
                    color: "#444444",
                    dashed: true,
                    points: log.records.iter().map(|r| (hours(r.t), r.setpoints[z.index()])).collect(),
                },
            ],
        })
        .collect();
    if log.attacked {
        panels.push(Panel {
            title: "attack".into(),
            y_label: "bias [K]".into(),
            series: vec![Series {
                name: "injected bias".into(),
                color: "#d62728",
                dashed: false,
                points: log.records.iter().map(|r| (hours(r.t), r.bias)).collect(),
            }],
        });
    }
    debug_assert!(panels.len() == N_ZONES || panels.len() == N_ZONES + 1);
    render(&panels, "time [h]")
}
