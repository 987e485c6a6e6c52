//! Coverage, repeatability and confidence ellipses of endpoint sets.

mod svg;

use delaunator::{next_halfedge, triangulate, Point, EMPTY};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::PlanePoint;
use crate::trajgen::WorkspaceLimits;

pub use svg::{render_coverage, render_ellipses, write_svg, EllipseGroup};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("points are collinear; the shape has no area")]
    Collinear,
    #[error("alpha radius {alpha:.4} m leaves a shape in {components} disconnected pieces")]
    Disconnected { alpha: f64, components: usize },
    #[error("alpha must be positive, got {0}")]
    InvalidAlpha(f64),
    #[error("nothing to render")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Concavity of the coverage shape.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alpha {
    /// Twice the median nearest-neighbour distance, doubled until the shape
    /// is connected.
    #[default]
    Auto,
    /// Keep Delaunay triangles whose circumradius is at most this, meters.
    Radius(f64),
    /// Convex hull.
    Convex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageResult {
    /// Outer boundary of the shape, counter-clockwise.
    pub hull: Vec<PlanePoint>,
    /// Every boundary loop (outer and holes).
    pub loops: Vec<Vec<PlanePoint>>,
    /// Shape area inside the reachable semicircle, m².
    pub area: f64,
    pub fraction: f64,
    /// Input endpoints (before reflection).
    pub endpoint_count: usize,
    /// Circumradius threshold actually used; infinite for the convex hull.
    pub alpha: f64,
}

/// Vertices of the polygon standing in for the reachable half-disk.
const SEMICIRCLE_SEGMENTS: usize = 4096;

fn shoelace(poly: &[PlanePoint]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        s += a.x * b.y - b.x * a.y;
    }
    0.5 * s
}

/// Counter-clockwise polygon of the upper half-disk of radius `r`.
fn half_disk(r: f64) -> Vec<PlanePoint> {
    (0..=SEMICIRCLE_SEGMENTS)
        .map(|k| {
            let a = std::f64::consts::PI * k as f64 / SEMICIRCLE_SEGMENTS as f64;
            PlanePoint::new(r * a.cos(), r * a.sin())
        })
        .collect()
}

/// Sutherland–Hodgman clip of `subject` by the convex counter-clockwise
/// polygon `clip`.
fn clip_convex(subject: &[PlanePoint], clip: &[PlanePoint]) -> Vec<PlanePoint> {
    let mut out = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[i], clip[(i + 1) % n]);
        let side = |p: PlanePoint| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let (p, q) = (input[j], input[(j + 1) % input.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                let t = sp / (sp - sq);
                out.push(PlanePoint::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)));
            }
        }
    }
    out
}

fn circumradius(a: PlanePoint, b: PlanePoint, c: PlanePoint) -> f64 {
    let area2 = ((b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y)).abs();
    if area2 == 0.0 {
        return f64::INFINITY;
    }
    a.distance(&b) * b.distance(&c) * c.distance(&a) / (2.0 * area2)
}

/// Endpoints together with their mirror images, exact duplicates removed,
/// in a fixed order.
fn symmetrised(points: &[PlanePoint]) -> Vec<PlanePoint> {
    let mut all: Vec<PlanePoint> = points.iter().flat_map(|p| [*p, p.mirrored()]).collect();
    all.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    all.dedup_by(|a, b| a.x.to_bits() == b.x.to_bits() && a.y.to_bits() == b.y.to_bits());
    all
}

/// Median distance from each point to its nearest other point.
pub fn median_nearest_neighbor(points: &[PlanePoint]) -> f64 {
    let mut sorted: Vec<PlanePoint> = points.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut nn = Vec::with_capacity(sorted.len());
    for i in 0..sorted.len() {
        let mut best = f64::INFINITY;
        for j in (0..i).rev() {
            if sorted[i].x - sorted[j].x >= best {
                break;
            }
            best = best.min(sorted[i].distance(&sorted[j]));
        }
        for j in i + 1..sorted.len() {
            if sorted[j].x - sorted[i].x >= best {
                break;
            }
            best = best.min(sorted[i].distance(&sorted[j]));
        }
        nn.push(best);
    }
    crate::stats::median(&nn)
}

struct Shape {
    points: Vec<PlanePoint>,
    triangles: Vec<usize>,
    halfedges: Vec<usize>,
    kept: Vec<bool>,
}

impl Shape {
    fn triangulated(points: Vec<PlanePoint>) -> Result<Self, AnalysisError> {
        let pts: Vec<Point> = points.iter().map(|p| Point { x: p.x, y: p.y }).collect();
        let t = triangulate(&pts);
        if t.triangles.is_empty() {
            return Err(AnalysisError::Collinear);
        }
        let n_tri = t.triangles.len() / 3;
        Ok(Self { points, triangles: t.triangles, halfedges: t.halfedges, kept: vec![true; n_tri] })
    }

    fn corner(&self, tri: usize, k: usize) -> PlanePoint {
        self.points[self.triangles[3 * tri + k]]
    }

    fn keep_within(&mut self, alpha: f64) {
        for tri in 0..self.kept.len() {
            let r = circumradius(self.corner(tri, 0), self.corner(tri, 1), self.corner(tri, 2));
            self.kept[tri] = r <= alpha;
        }
    }

    /// Edge-connected pieces among kept triangles.
    fn components(&self) -> usize {
        let n = self.kept.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for e in 0..self.halfedges.len() {
            let o = self.halfedges[e];
            if o == EMPTY {
                continue;
            }
            let (a, b) = (e / 3, o / 3);
            if self.kept[a] && self.kept[b] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                }
            }
        }
        (0..n).filter(|&t| self.kept[t] && find(&mut parent, t) == t).count()
    }

    fn boundary_loops(&self) -> Vec<Vec<PlanePoint>> {
        let boundary: Vec<usize> = (0..self.halfedges.len())
            .filter(|&e| self.kept[e / 3] && (self.halfedges[e] == EMPTY || !self.kept[self.halfedges[e] / 3]))
            .collect();
        // outgoing boundary edges per start vertex, in index order
        let mut outgoing: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for &e in &boundary {
            outgoing.entry(self.triangles[e]).or_default().push(e);
        }
        let mut used = std::collections::HashSet::new();
        let mut loops = Vec::new();
        for &start in &boundary {
            if used.contains(&start) {
                continue;
            }
            let mut poly = Vec::new();
            let mut e = start;
            loop {
                used.insert(e);
                poly.push(self.points[self.triangles[e]]);
                let end = self.triangles[next_halfedge(e)];
                match outgoing.get(&end).and_then(|v| v.iter().find(|x| !used.contains(*x))) {
                    Some(&next) => e = next,
                    None => break,
                }
            }
            loops.push(poly);
        }
        loops
    }

    fn clipped_area(&self, radius: f64) -> f64 {
        let disk = half_disk(radius);
        let inside = |p: PlanePoint| p.y >= 0.0 && p.norm() <= radius * (std::f64::consts::PI / SEMICIRCLE_SEGMENTS as f64 / 2.0).cos();
        let mut area = 0.0;
        for tri in 0..self.kept.len() {
            if !self.kept[tri] {
                continue;
            }
            let t = [self.corner(tri, 0), self.corner(tri, 1), self.corner(tri, 2)];
            area += if t.iter().all(|p| inside(*p)) {
                shoelace(&t).abs()
            } else {
                let ccw = if shoelace(&t) < 0.0 { vec![t[0], t[2], t[1]] } else { t.to_vec() };
                shoelace(&clip_convex(&ccw, &disk)).abs()
            };
        }
        area
    }
}

/// Area of the reachable half-disk, m².
pub fn semicircle_area(ws: &WorkspaceLimits) -> f64 {
    0.5 * std::f64::consts::PI * ws.reach() * ws.reach()
}

/// Alpha radius the `Auto` rule picks for these endpoints.
pub fn auto_alpha(endpoints: &[PlanePoint]) -> Result<f64, AnalysisError> {
    if endpoints.len() < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: endpoints.len() });
    }
    let pts = symmetrised(endpoints);
    let mut shape = Shape::triangulated(pts)?;
    let nn = median_nearest_neighbor(&shape.points);
    let mut alpha = 2.0 * nn;
    if !(alpha > 0.0) {
        return Err(AnalysisError::InvalidAlpha(alpha));
    }
    loop {
        shape.keep_within(alpha);
        if shape.components() == 1 {
            return Ok(alpha);
        }
        alpha *= 2.0;
    }
}

/// Alpha-shape coverage of the reachable semicircle by the endpoints and
/// their reflections across the y axis.
pub fn coverage(endpoints: &[PlanePoint], ws: &WorkspaceLimits, alpha: Alpha) -> Result<CoverageResult, AnalysisError> {
    if endpoints.len() < 3 {
        return Err(AnalysisError::TooFewPoints { needed: 3, got: endpoints.len() });
    }
    let radius = match alpha {
        Alpha::Auto => auto_alpha(endpoints)?,
        Alpha::Radius(r) if r > 0.0 => r,
        Alpha::Radius(r) => return Err(AnalysisError::InvalidAlpha(r)),
        Alpha::Convex => f64::INFINITY,
    };
    let mut shape = Shape::triangulated(symmetrised(endpoints))?;
    shape.keep_within(radius);
    match shape.components() {
        1 => {}
        components => return Err(AnalysisError::Disconnected { alpha: radius, components }),
    }
    let mut loops = shape.boundary_loops();
    for l in loops.iter_mut() {
        if shoelace(l) < 0.0 {
            l.reverse();
        }
    }
    loops.sort_by(|a, b| shoelace(b).total_cmp(&shoelace(a)));
    let area = shape.clipped_area(ws.reach());
    Ok(CoverageResult {
        hull: loops.first().cloned().unwrap_or_default(),
        loops,
        area,
        fraction: (area / semicircle_area(ws)).clamp(0.0, 1.0),
        endpoint_count: endpoints.len(),
        alpha: radius,
    })
}

/// Repeated executions of one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRepeat {
    pub action_index: usize,
    pub mean: PlanePoint,
    /// Root-mean-square distance to the mean, meters.
    pub std: f64,
    /// `std` as percent of cable length.
    pub std_pct: f64,
    pub trials: usize,
    pub off_table: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatStats {
    pub actions: Vec<ActionRepeat>,
    /// Actions left out for having fewer than two trials on the table.
    pub excluded: usize,
    /// Mean of the per-action spreads, meters.
    pub mean_std: f64,
    pub mean_std_pct: f64,
}

/// Spread of endpoints about their mean: `sqrt(Σ|p − p̄|² / n)`.
pub fn spread(points: &[PlanePoint]) -> (PlanePoint, f64) {
    let n = points.len() as f64;
    // offsets from the first point keep identical trials exactly at zero
    let o = points[0];
    let dx = points.iter().map(|p| p.x - o.x).sum::<f64>() / n;
    let dy = points.iter().map(|p| p.y - o.y).sum::<f64>() / n;
    let ms = points.iter().map(|p| (p.x - o.x - dx).powi(2) + (p.y - o.y - dy).powi(2)).sum::<f64>() / n;
    (PlanePoint::new(o.x + dx, o.y + dy), ms.sqrt())
}

/// Per-action repeatability; `trials[i]` holds every endpoint of action `i`.
pub fn repeatability(trials: &[Vec<PlanePoint>], ws: &WorkspaceLimits) -> RepeatStats {
    let mut actions = Vec::new();
    let mut excluded = 0;
    for (i, pts) in trials.iter().enumerate() {
        let on: Vec<PlanePoint> = pts.iter().copied().filter(|p| ws.on_table(*p)).collect();
        if on.len() < 2 {
            excluded += 1;
            continue;
        }
        let (mean, std) = spread(&on);
        actions.push(ActionRepeat {
            action_index: i,
            mean,
            std,
            std_pct: 100.0 * std / ws.r_c,
            trials: pts.len(),
            off_table: pts.len() - on.len(),
        });
    }
    if excluded > 0 {
        log::warn!("{excluded} actions had fewer than two on-table trials and were excluded");
    }
    let stds: Vec<f64> = actions.iter().map(|a| a.std).collect();
    let mean_std = if stds.is_empty() { f64::NAN } else { crate::stats::mean(&stds) };
    RepeatStats { actions, excluded, mean_std, mean_std_pct: 100.0 * mean_std / ws.r_c }
}

/// Chi-square quantile with two degrees of freedom at 95%.
pub fn chi2_2dof_95() -> f64 {
    -2.0 * 0.05f64.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceEllipse {
    pub center: PlanePoint,
    /// Major then minor semi-axis, meters.
    pub semi_axes: (f64, f64),
    /// Angle of the major axis from +x, radians in (−π/2, π/2].
    pub orientation: f64,
    pub confidence: f64,
    /// Fewer than three points or a (near) singular covariance.
    pub degenerate: bool,
}

impl ConfidenceEllipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes.0 * self.semi_axes.1
    }
}

/// 95% ellipse from the sample covariance (divide by n − 1).
pub fn confidence_ellipse(points: &[PlanePoint]) -> Result<ConfidenceEllipse, AnalysisError> {
    if points.is_empty() {
        return Err(AnalysisError::TooFewPoints { needed: 1, got: 0 });
    }
    let n = points.len() as f64;
    let cx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = points.iter().map(|p| p.y).sum::<f64>() / n;
    let center = PlanePoint::new(cx, cy);
    if points.len() < 3 {
        return Ok(ConfidenceEllipse { center, semi_axes: (0.0, 0.0), orientation: 0.0, confidence: 0.95, degenerate: true });
    }
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - cx, p.y - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let d = n - 1.0;
    let (a, b, c) = (sxx / d, sxy / d, syy / d);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mid + rad, (mid - rad).max(0.0));
    let mut orientation = 0.5 * (2.0 * b).atan2(a - c);
    if orientation <= -std::f64::consts::FRAC_PI_2 {
        orientation += std::f64::consts::PI;
    }
    let k = chi2_2dof_95();
    let degenerate = !(l2 > 1e-12 * l1.max(f64::MIN_POSITIVE));
    Ok(ConfidenceEllipse { center, semi_axes: ((k * l1).sqrt(), (k * l2).sqrt()), orientation, confidence: 0.95, degenerate })
}
