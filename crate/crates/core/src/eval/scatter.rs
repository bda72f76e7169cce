//! Side-by-side scatter panels on fixed `[0, 1]²` axes, written as SVG 1.1.
//!
//! Each point becomes one `<circle class="pt">`; reference means are drawn as
//! crosses with dashed one-standard-deviation rings, so they never count as points.

use std::fmt::Write as _;
use std::path::Path;

use super::Reference;
use crate::datasets::Point;
use crate::{Error, Result};

const PLOT: f64 = 240.0;
const MARGIN: f64 = 36.0;
const GAP: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_scatter(clouds: &[(String, Vec<Point>)], reference: &Reference) -> Result<String> {
    if clouds.is_empty() {
        return Err(Error::usage("scatter needs at least one cloud"));
    }
    let panel_w = PLOT + 2.0 * MARGIN;
    let width = clouds.len() as f64 * panel_w + (clouds.len() - 1) as f64 * GAP;
    let height = PLOT + 2.0 * MARGIN;
    let mut s = String::new();
    let w = &mut s;
    // Writing into a String cannot fail.
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        w,
        "<style>.pt{{fill:#1f77b4;fill-opacity:0.45}}.frame{{fill:none;stroke:#333}}\
         .ref-d{{stroke:#2ca02c;stroke-width:2;fill:none}}.ref-u{{stroke:#d62728;stroke-width:2;fill:none}}\
         .ring{{stroke-dasharray:4 3}}text{{font-family:sans-serif;font-size:11px}}</style>"
    );
    let sd = reference.var.sqrt() * PLOT;
    for (k, (name, points)) in clouds.iter().enumerate() {
        let ox = k as f64 * (panel_w + GAP) + MARGIN;
        let oy = MARGIN;
        let px = |x: f64| x * PLOT;
        let py = |y: f64| (1.0 - y) * PLOT;
        let _ = writeln!(w, r#"<g id="panel-{k}" transform="translate({ox},{oy})">"#);
        let _ = writeln!(
            w,
            r#"<clipPath id="clip-{k}"><rect x="0" y="0" width="{PLOT}" height="{PLOT}"/></clipPath>"#
        );
        let _ = writeln!(w, r#"<rect class="frame" x="0" y="0" width="{PLOT}" height="{PLOT}"/>"#);
        let _ = writeln!(
            w,
            r#"<text x="{:.1}" y="-12" text-anchor="middle">{} (n={})</text>"#,
            PLOT / 2.0,
            escape(name),
            points.len()
        );
        for tick in [0.0, 0.5, 1.0] {
            let _ = writeln!(
                w,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{tick}</text>"#,
                px(tick),
                PLOT + 16.0
            );
            let _ = writeln!(
                w,
                r#"<text x="-6" y="{:.1}" text-anchor="end">{tick}</text>"#,
                py(tick) + 4.0
            );
        }
        let _ = writeln!(w, r#"<g clip-path="url(#clip-{k})">"#);
        for p in points {
            let _ = writeln!(
                w,
                r#"<circle class="pt" cx="{:.2}" cy="{:.2}" r="1.5"/>"#,
                px(p[0]),
                py(p[1])
            );
        }
        for (class, mu) in [("ref-d", reference.mu_d), ("ref-u", reference.mu_u)] {
            let (cx, cy) = (px(mu[0]), py(mu[1]));
            let _ = writeln!(
                w,
                r#"<path class="{class}" d="M{:.2},{cy:.2}H{:.2}M{cx:.2},{:.2}V{:.2}"/>"#,
                cx - 6.0,
                cx + 6.0,
                cy - 6.0,
                cy + 6.0
            );
            let _ = writeln!(
                w,
                r#"<ellipse class="{class} ring" cx="{cx:.2}" cy="{cy:.2}" rx="{sd:.2}" ry="{sd:.2}"/>"#
            );
        }
        let _ = writeln!(w, "</g>\n</g>");
    }
    let _ = writeln!(w, "</svg>");
    Ok(s)
}

pub fn emit_scatter(clouds: &[(String, Vec<Point>)], reference: &Reference, path: &Path) -> Result<()> {
    let svg = render_scatter(clouds, reference)?;
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
