//! Parameter domains: compact planar regions with piecewise-smooth boundary,
//! their point classification, and boundary receiver atlases.
//!
//! A domain is bounded by one outer closed curve plus optional hole curves.
//! Circles are kept in analytic form so classification, nearest-point queries
//! and normals are exact; polygons and splines fall back to dense arclength
//! tables. The inward normal is the curve tangent rotated by +90 degrees with
//! the sign fixed by probing the inside test.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TtdError};
use crate::Point;

/// Classification of a point against the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DomainSpec {
    Disk { r: f64 },
    Annulus { r_in: f64, r_out: f64 },
    Polygon { vertices: Vec<[f64; 2]> },
    Spline { control: Vec<[f64; 2]> },
}

#[derive(Debug, Clone)]
enum CurveGeom {
    Circle { center: Point, radius: f64 },
    /// Closed polyline through dense samples; `cum[i]` is the arclength at
    /// `pts[i]`, `cum[n]` the total length (back to `pts[0]`).
    Table { pts: Vec<Point>, cum: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    geom: CurveGeom,
    length: f64,
    /// +1 when rot90(tangent) points into the region.
    normal_sign: f64,
}

fn rot90(v: Point) -> Point {
    Point::new(-v.y, v.x)
}

impl BoundaryCurve {
    fn circle(center: Point, radius: f64) -> Self {
        BoundaryCurve {
            geom: CurveGeom::Circle { center, radius },
            length: 2.0 * std::f64::consts::PI * radius,
            normal_sign: 1.0,
        }
    }

    fn table(pts: Vec<Point>) -> Self {
        let n = pts.len();
        let mut cum = Vec::with_capacity(n + 1);
        let mut acc = 0.0;
        cum.push(0.0);
        for i in 0..n {
            let a = pts[i];
            let b = pts[(i + 1) % n];
            acc += (b - a).norm();
            cum.push(acc);
        }
        BoundaryCurve {
            geom: CurveGeom::Table { pts, cum },
            length: acc,
            normal_sign: 1.0,
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Point at arclength `s` (wrapped).
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.rem_euclid(self.length);
        match &self.geom {
            CurveGeom::Circle { center, radius } => {
                let a = s / radius;
                center + Point::new(a.cos(), a.sin()) * *radius
            }
            CurveGeom::Table { pts, cum } => {
                let i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
                    Ok(i) => i.min(pts.len() - 1),
                    Err(i) => i - 1,
                };
                let a = pts[i];
                let b = pts[(i + 1) % pts.len()];
                let seg = cum[i + 1] - cum[i];
                if seg <= 0.0 {
                    return a;
                }
                let t = (s - cum[i]) / seg;
                a + (b - a) * t
            }
        }
    }

    /// Unit tangent in the direction of increasing arclength.
    pub fn tangent_at(&self, s: f64) -> Point {
        match &self.geom {
            CurveGeom::Circle { radius, .. } => {
                let a = s.rem_euclid(self.length) / radius;
                Point::new(-a.sin(), a.cos())
            }
            CurveGeom::Table { pts, cum } => {
                let s = s.rem_euclid(self.length);
                let i = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
                    Ok(i) => i.min(pts.len() - 1),
                    Err(i) => i - 1,
                };
                let a = pts[i];
                let b = pts[(i + 1) % pts.len()];
                let d = b - a;
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Point::new(1.0, 0.0)
                }
            }
        }
    }

    /// Unit inward normal at arclength `s`.
    pub fn normal_at(&self, s: f64) -> Point {
        rot90(self.tangent_at(s)) * self.normal_sign
    }

    /// Nearest curve point to `p`: (arclength, Euclidean distance).
    pub fn nearest(&self, p: Point) -> (f64, f64) {
        match &self.geom {
            CurveGeom::Circle { center, radius } => {
                let d = p - center;
                let r = d.norm();
                if r == 0.0 {
                    return (0.0, *radius);
                }
                let ang = d.y.atan2(d.x).rem_euclid(2.0 * std::f64::consts::PI);
                (ang * radius, (r - radius).abs())
            }
            CurveGeom::Table { pts, cum } => {
                let n = pts.len();
                let mut best = (0.0, f64::INFINITY);
                for i in 0..n {
                    let a = pts[i];
                    let b = pts[(i + 1) % n];
                    let ab = b - a;
                    let len2 = ab.norm_squared();
                    let t = if len2 > 0.0 {
                        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let q = a + ab * t;
                    let d = (p - q).norm();
                    if d < best.1 {
                        best = (cum[i] + t * (cum[i + 1] - cum[i]), d);
                    }
                }
                best
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamDomain {
    pub spec: DomainSpec,
    pub curves: Vec<BoundaryCurve>,
    pub h: f64,
    bbox: (Point, Point),
    /// Half-width of the band classified as Boundary.
    band: f64,
}

impl ParamDomain {
    pub fn bbox(&self) -> (Point, Point) {
        self.bbox
    }

    pub fn band(&self) -> f64 {
        self.band
    }

    pub fn total_boundary_length(&self) -> f64 {
        self.curves.iter().map(|c| c.length()).sum()
    }

    /// Euclidean distance from `p` to the nearest boundary curve.
    pub fn clearance(&self, p: Point) -> f64 {
        self.curves
            .iter()
            .map(|c| c.nearest(p).1)
            .fold(f64::INFINITY, f64::min)
    }

    /// Nearest boundary point over all curves: (curve index, arclength, distance).
    pub fn nearest_boundary(&self, p: Point) -> (usize, f64, f64) {
        let mut best = (0, 0.0, f64::INFINITY);
        for (ci, c) in self.curves.iter().enumerate() {
            let (s, d) = c.nearest(p);
            if d < best.2 {
                best = (ci, s, d);
            }
        }
        best
    }

    /// Signed containment ignoring the boundary band: true when `p` lies in
    /// the closed region.
    fn inside_exact(&self, p: Point) -> bool {
        match &self.spec {
            DomainSpec::Disk { r } => p.norm() <= *r,
            DomainSpec::Annulus { r_in, r_out } => {
                let rr = p.norm();
                rr >= *r_in && rr <= *r_out
            }
            _ => {
                // outer curve contains p, holes do not
                if !curve_contains(&self.curves[0], p) {
                    return false;
                }
                for hole in &self.curves[1..] {
                    if curve_contains(hole, p) {
                        return false;
                    }
                }
                true
            }
        }
    }

    pub fn classify(&self, p: Point) -> Region {
        if self.clearance(p) <= self.band {
            return Region::Boundary;
        }
        if self.inside_exact(p) {
            Region::Interior
        } else {
            Region::Exterior
        }
    }

    /// True when `p` belongs to the closed region (boundary included, up to a
    /// tiny float tolerance).
    pub fn contains(&self, p: Point) -> bool {
        match &self.spec {
            DomainSpec::Disk { r } => p.norm() <= r + 1e-12,
            DomainSpec::Annulus { r_in, r_out } => {
                let rr = p.norm();
                rr >= r_in - 1e-12 && rr <= r_out + 1e-12
            }
            _ => self.inside_exact(p) || self.clearance(p) <= 1e-9,
        }
    }

    /// True when the closed segment from `p` to `q` stays in the closed
    /// region. Exact for disks and annuli, sampled otherwise.
    pub fn segment_inside(&self, p: Point, q: Point) -> bool {
        match &self.spec {
            DomainSpec::Disk { r } => p.norm() <= r + 1e-12 && q.norm() <= r + 1e-12,
            DomainSpec::Annulus { r_in, r_out } => {
                if p.norm() > r_out + 1e-12 || q.norm() > r_out + 1e-12 {
                    return false;
                }
                segment_distance_to_origin(p, q) >= r_in - 1e-12
            }
            _ => {
                if !self.contains(p) || !self.contains(q) {
                    return false;
                }
                let len = (q - p).norm();
                let steps = (len / (self.h / 3.0)).ceil() as usize;
                for k in 1..steps {
                    let t = k as f64 / steps as f64;
                    let m = p + (q - p) * t;
                    if !self.contains(m) {
                        return false;
                    }
                }
                true
            }
        }
    }
}

fn segment_distance_to_origin(p: Point, q: Point) -> f64 {
    let d = q - p;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return p.norm();
    }
    let t = (-p.dot(&d) / len2).clamp(0.0, 1.0);
    (p + d * t).norm()
}

/// Ray-crossing containment test against the curve's sample polyline
/// (circles are handled analytically).
fn curve_contains(curve: &BoundaryCurve, p: Point) -> bool {
    match &curve.geom {
        CurveGeom::Circle { center, radius } => (p - center).norm() <= *radius,
        CurveGeom::Table { pts, .. } => {
            let n = pts.len();
            let mut inside = false;
            for i in 0..n {
                let a = pts[i];
                let b = pts[(i + 1) % n];
                if (a.y > p.y) != (b.y > p.y) {
                    let xi = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                    if p.x < xi {
                        inside = !inside;
                    }
                }
            }
            inside
        }
    }
}

fn segments_properly_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let cross = |o: Point, u: Point, v: Point| (u - o).x * (v - o).y - (u - o).y * (v - o).x;
    let d1 = cross(a, b, c);
    let d2 = cross(a, b, d);
    let d3 = cross(c, d, a);
    let d4 = cross(c, d, b);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn catmull_rom(p0: Point, p1: Point, p2: Point, p3: Point, t: f64) -> Point {
    let t2 = t * t;
    let t3 = t2 * t;
    (p1 * 2.0
        + (p2 - p0) * t
        + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
        + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3)
        * 0.5
}

/// Build a domain from its description. Boundary tables are sampled at pitch
/// at most `h`; self-intersecting polygons and splines are rejected.
pub fn build_domain(spec: DomainSpec, h: f64) -> Result<ParamDomain> {
    if !(h > 0.0) {
        return Err(TtdError::Parameter(format!("mesh pitch must be positive, got {h}")));
    }
    let mut curves = Vec::new();
    match &spec {
        DomainSpec::Disk { r } => {
            if !(*r > 0.0) {
                return Err(TtdError::Parameter(format!("disk radius must be positive, got {r}")));
            }
            curves.push(BoundaryCurve::circle(Point::zeros(), *r));
        }
        DomainSpec::Annulus { r_in, r_out } => {
            if !(*r_in > 0.0 && r_out > r_in) {
                return Err(TtdError::Parameter(format!(
                    "annulus radii must satisfy 0 < r_in < r_out, got ({r_in}, {r_out})"
                )));
            }
            curves.push(BoundaryCurve::circle(Point::zeros(), *r_out));
            curves.push(BoundaryCurve::circle(Point::zeros(), *r_in));
        }
        DomainSpec::Polygon { vertices } => {
            if vertices.len() < 3 {
                return Err(TtdError::Geometry("polygon needs at least 3 vertices".into()));
            }
            let vs: Vec<Point> = vertices.iter().map(|v| Point::new(v[0], v[1])).collect();
            let n = vs.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    // skip adjacent edges (shared vertex)
                    if j == i || (j + 1) % n == i || (i + 1) % n == j {
                        continue;
                    }
                    if segments_properly_intersect(vs[i], vs[(i + 1) % n], vs[j], vs[(j + 1) % n]) {
                        return Err(TtdError::Geometry(format!(
                            "polygon edges {i} and {j} intersect"
                        )));
                    }
                }
            }
            let mut pts = Vec::new();
            for i in 0..n {
                let a = vs[i];
                let b = vs[(i + 1) % n];
                let len = (b - a).norm();
                if len == 0.0 {
                    return Err(TtdError::Geometry(format!("degenerate polygon edge {i}")));
                }
                let steps = (len / h).ceil() as usize;
                for k in 0..steps {
                    pts.push(a + (b - a) * (k as f64 / steps as f64));
                }
            }
            curves.push(BoundaryCurve::table(pts));
        }
        DomainSpec::Spline { control } => {
            if control.len() < 4 {
                return Err(TtdError::Geometry("spline needs at least 4 control points".into()));
            }
            let cs: Vec<Point> = control.iter().map(|v| Point::new(v[0], v[1])).collect();
            let n = cs.len();
            let mut pts = Vec::new();
            for i in 0..n {
                let p0 = cs[(i + n - 1) % n];
                let p1 = cs[i];
                let p2 = cs[(i + 1) % n];
                let p3 = cs[(i + 2) % n];
                let seg_len = (p2 - p1).norm().max(h);
                let steps = (seg_len * 2.0 / h).ceil() as usize;
                for k in 0..steps {
                    pts.push(catmull_rom(p0, p1, p2, p3, k as f64 / steps as f64));
                }
            }
            // self-intersection check on a thinned copy
            let stride = (pts.len() / 256).max(1);
            let coarse: Vec<Point> = pts.iter().step_by(stride).copied().collect();
            let m = coarse.len();
            for i in 0..m {
                for j in (i + 2)..m {
                    if i == 0 && j == m - 1 {
                        continue;
                    }
                    if segments_properly_intersect(
                        coarse[i],
                        coarse[(i + 1) % m],
                        coarse[j],
                        coarse[(j + 1) % m],
                    ) {
                        return Err(TtdError::Geometry("spline boundary self-intersects".into()));
                    }
                }
            }
            curves.push(BoundaryCurve::table(pts));
        }
    }

    let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &curves {
        let steps = (c.length() / h).ceil() as usize;
        for k in 0..steps {
            let p = c.point_at(k as f64 * c.length() / steps as f64);
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
    }

    let mut dom = ParamDomain {
        spec,
        curves,
        h,
        bbox: (lo, hi),
        band: h / 10.0,
    };

    // fix normal orientation by probing the inside test
    for i in 0..dom.curves.len() {
        let c = &dom.curves[i];
        let s = 0.25 * c.length();
        let p = c.point_at(s);
        let nu = rot90(c.tangent_at(s));
        let probe = p + nu * (dom.h / 4.0);
        let sign = if dom.inside_exact(probe) && dom.clearance(probe) > dom.band {
            1.0
        } else {
            -1.0
        };
        dom.curves[i].normal_sign = sign;
    }
    Ok(dom)
}

/// Ordered boundary receivers: arclength coordinates plus planar positions.
#[derive(Debug, Clone)]
pub struct BoundaryAtlas {
    pub receivers: Vec<Receiver>,
    /// Receiver index ranges per curve, curve-major ordering.
    pub curve_ranges: Vec<std::ops::Range<usize>>,
}

#[derive(Debug, Clone)]
pub struct Receiver {
    pub curve: usize,
    pub s: f64,
    pub pos: Point,
}

impl BoundaryAtlas {
    /// Place `m` receivers across all boundary curves, allocated
    /// proportionally to curve length with at least 8 per curve, equally
    /// spaced in arclength. `offsets[c]` shifts the start of curve `c`.
    pub fn build(domain: &ParamDomain, m: usize, offsets: &[f64]) -> Result<BoundaryAtlas> {
        let ncurves = domain.curves.len();
        if m < 8 * ncurves {
            return Err(TtdError::Parameter(format!(
                "need at least {} receivers for {} boundary curves, got {m}",
                8 * ncurves,
                ncurves
            )));
        }
        let total: f64 = domain.total_boundary_length();
        // proportional allocation, then push up to the minimum of 8
        let mut counts: Vec<usize> = domain
            .curves
            .iter()
            .map(|c| ((c.length() / total) * m as f64).floor() as usize)
            .collect();
        for c in counts.iter_mut() {
            *c = (*c).max(8);
        }
        while counts.iter().sum::<usize>() < m {
            // grow the curve with the largest spacing
            let i = (0..ncurves)
                .max_by(|&a, &b| {
                    let sa = domain.curves[a].length() / counts[a] as f64;
                    let sb = domain.curves[b].length() / counts[b] as f64;
                    sa.partial_cmp(&sb).unwrap()
                })
                .unwrap();
            counts[i] += 1;
        }
        while counts.iter().sum::<usize>() > m {
            let i = (0..ncurves)
                .filter(|&i| counts[i] > 8)
                .min_by(|&a, &b| {
                    let sa = domain.curves[a].length() / counts[a] as f64;
                    let sb = domain.curves[b].length() / counts[b] as f64;
                    sa.partial_cmp(&sb).unwrap()
                })
                .ok_or_else(|| TtdError::Parameter("cannot satisfy receiver minimum".into()))?;
            counts[i] -= 1;
        }

        let mut receivers = Vec::with_capacity(m);
        let mut ranges = Vec::with_capacity(ncurves);
        for (ci, c) in domain.curves.iter().enumerate() {
            let start = receivers.len();
            let off = offsets.get(ci).copied().unwrap_or(0.0);
            let n = counts[ci];
            for k in 0..n {
                let s = (off + k as f64 * c.length() / n as f64).rem_euclid(c.length());
                receivers.push(Receiver {
                    curve: ci,
                    s,
                    pos: c.point_at(s),
                });
            }
            ranges.push(start..receivers.len());
        }
        Ok(BoundaryAtlas {
            receivers,
            curve_ranges: ranges,
        })
    }

    pub fn len(&self) -> usize {
        self.receivers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receivers.is_empty()
    }

    /// Wrapped arclength separation of two receivers on the same curve;
    /// `None` when they live on different curves.
    pub fn arc_separation(&self, domain: &ParamDomain, i: usize, j: usize) -> Option<f64> {
        let (ri, rj) = (&self.receivers[i], &self.receivers[j]);
        if ri.curve != rj.curve {
            return None;
        }
        let len = domain.curves[ri.curve].length();
        let d = (ri.s - rj.s).abs();
        Some(d.min(len - d))
    }

    /// Previous and next receiver indices along the same curve.
    pub fn curve_neighbors(&self, i: usize) -> (usize, usize) {
        let c = self.receivers[i].curve;
        let range = self.curve_ranges[c].clone();
        let n = range.len();
        let local = i - range.start;
        (
            range.start + (local + n - 1) % n,
            range.start + (local + 1) % n,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_circumference_and_normals() {
        let dom = build_domain(DomainSpec::Disk { r: 1.0 }, 0.01).unwrap();
        assert_eq!(dom.curves.len(), 1);
        assert!((dom.curves[0].length() - 2.0 * std::f64::consts::PI).abs() < 1e-3);
        for k in 0..32 {
            let s = k as f64 * dom.curves[0].length() / 32.0;
            let p = dom.curves[0].point_at(s);
            let nu = dom.curves[0].normal_at(s);
            assert!((nu.norm() - 1.0).abs() < 1e-12);
            assert_eq!(dom.classify(p + nu * (0.01 / 4.0)), Region::Interior);
        }
    }

    #[test]
    fn annulus_two_curves_and_inward_normals() {
        let dom = build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.01).unwrap();
        assert_eq!(dom.curves.len(), 2);
        assert!((dom.curves[0].length() - 4.0 * std::f64::consts::PI).abs() < 1e-3);
        assert!((dom.curves[1].length() - 2.0 * std::f64::consts::PI).abs() < 1e-3);
        // inner normal points away from the hole
        let p = dom.curves[1].point_at(0.0);
        let nu = dom.curves[1].normal_at(0.0);
        assert!((p + nu * 0.01).norm() > 1.0);
        assert_eq!(dom.classify(Point::new(1.5, 0.0)), Region::Interior);
        assert_eq!(dom.classify(Point::new(0.5, 0.0)), Region::Exterior);
        assert_eq!(dom.classify(Point::new(2.5, 0.0)), Region::Exterior);
        assert_eq!(dom.classify(Point::new(1.0, 0.0)), Region::Boundary);
    }

    #[test]
    fn crossing_polygon_rejected() {
        let spec = DomainSpec::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]],
        };
        match build_domain(spec, 0.01) {
            Err(TtdError::Geometry(_)) => {}
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_pitch_rejected() {
        match build_domain(DomainSpec::Disk { r: 1.0 }, 0.0) {
            Err(TtdError::Parameter(_)) => {}
            other => panic!("expected parameter error, got {other:?}"),
        }
    }

    #[test]
    fn square_polygon_classification() {
        let spec = DomainSpec::Polygon {
            vertices: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
        };
        let dom = build_domain(spec, 0.01).unwrap();
        assert_eq!(dom.classify(Point::new(0.5, 0.5)), Region::Interior);
        assert_eq!(dom.classify(Point::new(1.5, 0.5)), Region::Exterior);
        assert_eq!(dom.classify(Point::new(1.0, 0.5)), Region::Boundary);
        assert!((dom.total_boundary_length() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn segment_tests_respect_the_hole() {
        let dom = build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.01).unwrap();
        assert!(dom.segment_inside(Point::new(1.2, 0.0), Point::new(1.9, 0.0)));
        assert!(!dom.segment_inside(Point::new(-1.5, 0.0), Point::new(1.5, 0.0)));
        // chord grazing the inner circle is admissible
        assert!(dom.segment_inside(Point::new(-1.0, 1.0), Point::new(1.0, 1.0)));
    }

    #[test]
    fn atlas_allocation_and_spacing() {
        let dom = build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.01).unwrap();
        let atlas = BoundaryAtlas::build(&dom, 128, &[]).unwrap();
        assert_eq!(atlas.len(), 128);
        assert!(atlas.curve_ranges.iter().all(|r| r.len() >= 8));
        let total = dom.total_boundary_length();
        for range in &atlas.curve_ranges {
            for i in range.clone() {
                let (_, next) = atlas.curve_neighbors(i);
                if next != i {
                    let sep = atlas.arc_separation(&dom, i, next).unwrap();
                    assert!(sep <= 2.0 * total / 128.0 + 1e-9);
                    assert!(sep > 0.0);
                }
            }
        }
        // receivers sit on the boundary
        for r in &atlas.receivers {
            assert_eq!(dom.classify(r.pos), Region::Boundary);
        }
    }
}
