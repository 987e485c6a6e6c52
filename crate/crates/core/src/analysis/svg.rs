//! Plain SVG plots in workspace coordinates (1 px per millimetre).

use std::fmt::Write as _;
use std::path::Path;

use super::{AnalysisError, ConfidenceEllipse, CoverageResult};
use crate::geometry::PlanePoint;
use crate::trajgen::WorkspaceLimits;

const SCALE: f64 = 1000.0;
const MARGIN: f64 = 40.0;

struct Canvas {
    body: String,
    reach: f64,
}

impl Canvas {
    fn new(ws: &WorkspaceLimits) -> Self {
        Self { body: String::new(), reach: ws.reach() }
    }

    fn px(&self, p: PlanePoint) -> (f64, f64) {
        (MARGIN + (p.x + self.reach) * SCALE, MARGIN + (self.reach - p.y) * SCALE)
    }

    fn path(&mut self, class: &str, pts: &[PlanePoint], close: bool) {
        let mut d = String::new();
        for (i, p) in pts.iter().enumerate() {
            let (x, y) = self.px(*p);
            let _ = write!(d, "{}{x:.2},{y:.2} ", if i == 0 { "M" } else { "L" });
        }
        if close {
            d.push('Z');
        }
        let _ = writeln!(self.body, r#"<path class="{class}" d="{}"/>"#, d.trim_end());
    }

    fn dot(&mut self, class: &str, p: PlanePoint, r: f64) {
        let (x, y) = self.px(p);
        let _ = writeln!(self.body, r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="{r}"/>"#);
    }

    fn semicircle(&mut self, ws: &WorkspaceLimits) {
        let arc: Vec<PlanePoint> = (0..=180)
            .map(|k| {
                let a = std::f64::consts::PI * k as f64 / 180.0;
                PlanePoint::new(ws.reach() * a.cos(), ws.reach() * a.sin())
            })
            .collect();
        self.path("semicircle", &arc, true);
    }

    fn finish(self, title: &str) -> String {
        let w = 2.0 * MARGIN + 2.0 * self.reach * SCALE;
        let h = 2.0 * MARGIN + self.reach * SCALE;
        format!(
            concat!(
                r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}">"#,
                "\n<title>{title}</title>\n<style>",
                ".semicircle{{fill:none;stroke:#444;stroke-width:2}}",
                ".hull{{fill:#4a90d9;fill-opacity:0.25;stroke:#1f5fa8;stroke-width:2}}",
                ".hole{{fill:#fff;stroke:#1f5fa8;stroke-width:1}}",
                ".endpoint{{fill:#1f5fa8}}",
                ".cast{{fill:none;stroke:#d9534f;stroke-width:3;stroke-dasharray:8 6}}",
                ".ellipse{{fill:none;stroke-width:2}}",
                ".mean{{fill:#000}}",
                "</style>\n{body}</svg>\n"
            ),
            w = w,
            h = h,
            title = title,
            body = self.body
        )
    }
}

/// Region the polar cast can place the endpoint in: the band between the
/// base clearance line and the reach circle.
fn cast_outline(ws: &WorkspaceLimits) -> Vec<PlanePoint> {
    let reach = ws.reach();
    let y0 = ws.y_min_base + ws.r_c;
    if y0 >= reach {
        return Vec::new();
    }
    let a0 = (y0 / reach).asin();
    let mut pts: Vec<PlanePoint> = (0..=90)
        .map(|k| {
            let a = a0 + (std::f64::consts::PI - 2.0 * a0) * k as f64 / 90.0;
            PlanePoint::new(reach * a.cos(), reach * a.sin())
        })
        .collect();
    pts.push(pts[0]);
    pts
}

/// Coverage shape, its endpoints and the polar-cast region.
pub fn render_coverage(cov: &CoverageResult, endpoints: &[PlanePoint], ws: &WorkspaceLimits) -> Result<String, AnalysisError> {
    if endpoints.is_empty() || cov.hull.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut c = Canvas::new(ws);
    c.semicircle(ws);
    for (i, l) in cov.loops.iter().enumerate() {
        c.path(if i == 0 { "hull" } else { "hole" }, l, true);
    }
    let cast = cast_outline(ws);
    if !cast.is_empty() {
        c.path("cast", &cast, false);
    }
    for p in endpoints {
        c.dot("endpoint", *p, 2.0);
    }
    Ok(c.finish(&format!("coverage {:.1}%", 100.0 * cov.fraction)))
}

/// Endpoints of one repeated action and their ellipse.
#[derive(Debug, Clone)]
pub struct EllipseGroup {
    pub points: Vec<PlanePoint>,
    pub ellipse: ConfidenceEllipse,
}

const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Repeatability plot: trial endpoints, their means and 95% ellipses.
pub fn render_ellipses(groups: &[EllipseGroup], ws: &WorkspaceLimits) -> Result<String, AnalysisError> {
    if groups.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut c = Canvas::new(ws);
    c.semicircle(ws);
    for (i, g) in groups.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let e = &g.ellipse;
        let (cx, cy) = c.px(e.center);
        // svg y points down, so the rotation flips sign
        let _ = writeln!(
            c.body,
            r#"<ellipse class="ellipse" stroke="{color}" cx="{cx:.2}" cy="{cy:.2}" rx="{:.2}" ry="{:.2}" transform="rotate({:.3} {cx:.2} {cy:.2})"/>"#,
            e.semi_axes.0 * SCALE,
            e.semi_axes.1 * SCALE,
            -e.orientation.to_degrees()
        );
        for p in &g.points {
            let (x, y) = c.px(*p);
            let _ = writeln!(c.body, r#"<circle fill="{color}" cx="{x:.2}" cy="{y:.2}" r="2"/>"#);
        }
        c.dot("mean", e.center, 3.0);
    }
    Ok(c.finish("repeatability"))
}

pub fn write_svg(path: &Path, svg: &str) -> Result<(), AnalysisError> {
    std::fs::write(path, svg)?;
    Ok(())
}
