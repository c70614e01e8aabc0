//! Intrinsic distances on a domain that respect non-convex boundaries.
//!
//! Distances run on a 16-neighbor grid graph with metric edge lengths
//! restricted to the region, then get shortened by local path straightening
//! (shortcutting plus midpoint relaxation) wherever the path does not have to
//! hug the boundary. The raw Dijkstra value is kept available as the
//! brute-force oracle. Fields from boundary receivers are computed once and
//! cached; sources are attached as virtual nodes per query.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::domain::{BoundaryAtlas, ParamDomain, Region};
use crate::error::{Result, TtdError};
use crate::geodesic::{shoot_geodesic, Termination};
use crate::metric::MetricField;
use crate::Point;

const STENCIL: [(i32, i32); 16] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
    (2, 1),
    (2, -1),
    (-2, 1),
    (-2, -1),
    (1, 2),
    (1, -2),
    (-1, 2),
    (-1, -2),
];

struct Grid {
    origin: Point,
    nx: usize,
    ny: usize,
    h: f64,
    node_at: Vec<i32>,
    nodes: Vec<Point>,
    adj_off: Vec<u32>,
    adj_tgt: Vec<u32>,
    adj_w: Vec<f64>,
}

impl Grid {
    fn cell_of(&self, p: Point) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.h).round() as i64,
            ((p.y - self.origin.y) / self.h).round() as i64,
        )
    }

    fn node_index(&self, ix: i64, iy: i64) -> Option<u32> {
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return None;
        }
        let v = self.node_at[iy as usize * self.nx + ix as usize];
        (v >= 0).then_some(v as u32)
    }
}

#[derive(Copy, Clone, PartialEq)]
struct HeapState {
    cost: f64,
    node: u32,
}

impl Eq for HeapState {}

impl Ord for HeapState {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.partial_cmp(&self.cost).unwrap_or(Ordering::Equal)
    }
}

impl PartialOrd for HeapState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One-to-all distances over the domain graph from a source point, a
/// receiver, or the whole boundary. Node values are raw graph distances
/// (nonnegative, 1-Lipschitz along edges); refined point evaluations
/// straighten the extracted path.
pub struct DistanceField {
    pub dist: Vec<f64>,
    pred: Vec<u32>,
    seed_of: HashMap<u32, u32>,
    origins: Vec<Point>,
}

impl DistanceField {
    /// Raw graph value at a node.
    pub fn node_value(&self, i: usize) -> f64 {
        self.dist[i]
    }
}

pub struct Engine {
    pub domain: Arc<ParamDomain>,
    pub field: Arc<MetricField>,
    pub atlas: Arc<BoundaryAtlas>,
    grid: Grid,
    receiver_fields: Vec<OnceLock<Arc<DistanceField>>>,
    boundary_field: OnceLock<Arc<DistanceField>>,
}

const NONE: u32 = u32::MAX;

impl Engine {
    pub fn new(
        domain: Arc<ParamDomain>,
        field: Arc<MetricField>,
        atlas: Arc<BoundaryAtlas>,
    ) -> Result<Engine> {
        let grid = build_grid(&domain, &field)?;
        let receiver_fields = (0..atlas.len()).map(|_| OnceLock::new()).collect();
        Ok(Engine {
            domain,
            field,
            atlas,
            grid,
            receiver_fields,
            boundary_field: OnceLock::new(),
        })
    }

    pub fn h(&self) -> f64 {
        self.domain.h
    }

    /// Grid node positions (for field dumps).
    pub fn node_positions(&self) -> &[Point] {
        &self.grid.nodes
    }

    fn virtual_links(&self, p: Point) -> Vec<(u32, f64)> {
        let (cx, cy) = self.grid.cell_of(p);
        let mut out = Vec::new();
        for dy in -2..=2i64 {
            for dx in -2..=2i64 {
                if let Some(n) = self.grid.node_index(cx + dx, cy + dy) {
                    let q = self.grid.nodes[n as usize];
                    if self.domain.segment_inside(p, q) {
                        out.push((n, self.field.segment_length(p, q)));
                    }
                }
            }
        }
        out
    }

    fn dijkstra(&self, seeds: &[(u32, f64, u32)], origins: Vec<Point>) -> DistanceField {
        let n = self.grid.nodes.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NONE; n];
        let mut seed_of = HashMap::new();
        let mut heap = BinaryHeap::new();
        for &(node, w, origin) in seeds {
            if w < dist[node as usize] {
                dist[node as usize] = w;
                seed_of.insert(node, origin);
                heap.push(HeapState { cost: w, node });
            }
        }
        while let Some(HeapState { cost, node }) = heap.pop() {
            if cost > dist[node as usize] {
                continue;
            }
            let s = self.grid.adj_off[node as usize] as usize;
            let e = self.grid.adj_off[node as usize + 1] as usize;
            for k in s..e {
                let t = self.grid.adj_tgt[k];
                let c = cost + self.grid.adj_w[k];
                if c < dist[t as usize] {
                    dist[t as usize] = c;
                    pred[t as usize] = node;
                    heap.push(HeapState { cost: c, node: t });
                }
            }
        }
        DistanceField {
            dist,
            pred,
            seed_of,
            origins,
        }
    }

    /// One-to-all field from an arbitrary point in the region.
    pub fn point_field(&self, p: Point) -> Result<DistanceField> {
        if self.domain.classify(p) == Region::Exterior {
            return Err(TtdError::Domain(format!("point ({}, {}) is exterior", p.x, p.y)));
        }
        let links = self.virtual_links(p);
        if links.is_empty() {
            return Err(TtdError::Domain(format!(
                "point ({}, {}) cannot be attached to the domain graph",
                p.x, p.y
            )));
        }
        let seeds: Vec<(u32, f64, u32)> = links.into_iter().map(|(n, w)| (n, w, 0)).collect();
        Ok(self.dijkstra(&seeds, vec![p]))
    }

    /// Cached field from receiver `i`.
    pub fn receiver_field(&self, i: usize) -> Result<Arc<DistanceField>> {
        if i >= self.atlas.len() {
            return Err(TtdError::Parameter(format!("receiver index {i} out of range")));
        }
        if let Some(f) = self.receiver_fields[i].get() {
            return Ok(f.clone());
        }
        let f = Arc::new(self.point_field(self.atlas.receivers[i].pos)?);
        let _ = self.receiver_fields[i].set(f);
        Ok(self.receiver_fields[i].get().unwrap().clone())
    }

    /// Warm the receiver field cache in parallel.
    pub fn warm_receiver_fields(&self) -> Result<()> {
        (0..self.atlas.len())
            .into_par_iter()
            .map(|i| self.receiver_field(i).map(|_| ()))
            .collect::<Result<Vec<()>>>()?;
        Ok(())
    }

    /// Cached field seeded from dense boundary samples (distance to the
    /// whole boundary).
    pub fn boundary_distance_field(&self) -> Result<Arc<DistanceField>> {
        if let Some(f) = self.boundary_field.get() {
            return Ok(f.clone());
        }
        let mut origins = Vec::new();
        let mut seeds = Vec::new();
        for c in &self.domain.curves {
            let n = (c.length() / self.domain.h).ceil() as usize;
            for k in 0..n {
                let sp = c.point_at(k as f64 * c.length() / n as f64);
                let oid = origins.len() as u32;
                origins.push(sp);
                for (node, w) in self.virtual_links(sp) {
                    seeds.push((node, w, oid));
                }
            }
        }
        let f = Arc::new(self.dijkstra(&seeds, origins));
        let _ = self.boundary_field.set(f);
        Ok(self.boundary_field.get().unwrap().clone())
    }

    /// Raw graph distance from the field source to `q` (the oracle value,
    /// no straightening).
    pub fn raw_eval(&self, field: &DistanceField, q: Point) -> Result<f64> {
        if field.origins.len() == 1 && (q - field.origins[0]).norm() < 1e-14 {
            return Ok(0.0);
        }
        let links = self.virtual_links(q);
        let best = links
            .iter()
            .map(|(n, w)| field.dist[*n as usize] + w)
            .fold(f64::INFINITY, f64::min);
        if !best.is_finite() {
            return Err(TtdError::Domain(format!("point ({}, {}) unreachable", q.x, q.y)));
        }
        Ok(best)
    }

    /// Straightened distance from the field source to `q`, with the refined
    /// polyline (query end first).
    pub fn refined_eval(&self, field: &DistanceField, q: Point) -> Result<(f64, Vec<Point>)> {
        if field.origins.len() == 1 && (q - field.origins[0]).norm() < 1e-14 {
            return Ok((0.0, vec![q, field.origins[0]]));
        }
        let links = self.virtual_links(q);
        let mut best: Option<(u32, f64)> = None;
        for (n, w) in links {
            let c = field.dist[n as usize] + w;
            if c.is_finite() && best.map_or(true, |(_, b)| c < b) {
                best = Some((n, c));
            }
        }
        let (entry, _) = best.ok_or_else(|| {
            TtdError::Domain(format!("point ({}, {}) unreachable", q.x, q.y))
        })?;
        let mut pts = vec![q];
        let mut n = entry;
        loop {
            pts.push(self.grid.nodes[n as usize]);
            let p = field.pred[n as usize];
            if p == NONE {
                let origin = field.seed_of.get(&n).copied().unwrap_or(0);
                pts.push(field.origins[origin as usize]);
                break;
            }
            n = p;
        }
        let len = self.straighten(&mut pts);
        Ok((len, pts))
    }

    /// Shortcutting followed by midpoint relaxation; shortens in place and
    /// returns the metric length. Every accepted move keeps the polyline
    /// inside the closed region, so the result never undercuts the true
    /// distance by more than the chord discretization.
    fn straighten(&self, pts: &mut Vec<Point>) -> f64 {
        simplify_collinear(pts);
        self.shortcut(pts);
        let cap = 5.0 * self.domain.h;
        subdivide(pts, cap);
        let mut last = self.polyline_length(pts);
        for _ in 0..60 {
            let mut moved = false;
            for i in 1..pts.len() - 1 {
                let a = pts[i - 1];
                let b = pts[i];
                let c = pts[i + 1];
                let m = (a + c) * 0.5;
                if (m - b).norm() < 1e-14 {
                    continue;
                }
                let old = self.field.segment_length(a, b) + self.field.segment_length(b, c);
                for lam in [1.0, 0.5] {
                    let trial = b + (m - b) * lam;
                    if self.domain.segment_inside(a, trial) && self.domain.segment_inside(trial, c) {
                        let new = self.field.segment_length(a, trial)
                            + self.field.segment_length(trial, c);
                        if new < old - 1e-15 {
                            pts[i] = trial;
                            moved = true;
                            break;
                        }
                    }
                }
            }
            if !moved {
                break;
            }
            let len = self.polyline_length(pts);
            if last - len < 1e-11 * last.max(1.0) {
                last = len;
                break;
            }
            last = len;
        }
        last
    }

    fn polyline_length(&self, pts: &[Point]) -> f64 {
        pts.windows(2)
            .map(|w| self.field.segment_length(w[0], w[1]))
            .sum()
    }

    fn shortcut(&self, pts: &mut Vec<Point>) {
        for _ in 0..3 {
            let mut out = Vec::with_capacity(pts.len());
            let mut lens: Vec<f64> = Vec::with_capacity(pts.len());
            lens.push(0.0);
            for w in pts.windows(2) {
                let l = lens.last().unwrap() + self.field.segment_length(w[0], w[1]);
                lens.push(l);
            }
            let mut i = 0;
            out.push(pts[0]);
            while i + 1 < pts.len() {
                // grow the jump while admissible, then refine downward
                let mut j = i + 1;
                let mut step = 1;
                let admissible = |a: usize, b: usize| {
                    self.domain.segment_inside(pts[a], pts[b])
                        && self.field.segment_length(pts[a], pts[b]) <= lens[b] - lens[a] + 1e-13
                };
                while i + step * 2 < pts.len() && admissible(i, i + step * 2) {
                    step *= 2;
                    j = i + step;
                }
                let mut hi = (i + step * 2).min(pts.len() - 1);
                while hi > j {
                    if admissible(i, hi) {
                        j = hi;
                        break;
                    }
                    hi = j + (hi - j) / 2;
                    if hi == j {
                        break;
                    }
                }
                out.push(pts[j]);
                i = j;
            }
            let done = out.len() == pts.len();
            *pts = out;
            if done {
                break;
            }
        }
    }

    /// Intrinsic distance between two points of the closed region. Arguments
    /// are put in a canonical order first, so the computation is identical
    /// for (p, q) and (q, p).
    pub fn distance(&self, p: Point, q: Point) -> Result<f64> {
        for pt in [p, q] {
            if self.domain.classify(pt) == Region::Exterior {
                return Err(TtdError::Domain(format!(
                    "point ({}, {}) is exterior",
                    pt.x, pt.y
                )));
            }
        }
        let swap = match p.x.partial_cmp(&q.x) {
            Some(Ordering::Greater) => true,
            Some(Ordering::Equal) => p.y > q.y,
            _ => false,
        };
        let (a, b) = if swap { (q, p) } else { (p, q) };
        let field = self.point_field(a)?;
        Ok(self.refined_eval(&field, b)?.0)
    }

    /// Raw graph distance between two points (the Dijkstra oracle).
    pub fn raw_distance(&self, p: Point, q: Point) -> Result<f64> {
        let field = self.point_field(p)?;
        self.raw_eval(&field, q)
    }

    /// Straightened distances from `p` to every receiver, computed through
    /// the cached receiver-side fields.
    pub fn distances_to_receivers(&self, p: Point) -> Result<Vec<f64>> {
        if self.domain.classify(p) == Region::Exterior {
            return Err(TtdError::Domain(format!("point ({}, {}) is exterior", p.x, p.y)));
        }
        (0..self.atlas.len())
            .map(|i| {
                let f = self.receiver_field(i)?;
                Ok(self.refined_eval(&f, p)?.0)
            })
            .collect()
    }

    /// Receivers attaining the minimal distance to `p` within `tie_tol`,
    /// with their distances.
    pub fn closest_boundary_set(&self, p: Point, tie_tol: f64) -> Result<Vec<(usize, f64)>> {
        let d = self.distances_to_receivers(p)?;
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(d
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v <= min + tie_tol)
            .collect())
    }

    /// Distance from the whole boundary to `p`.
    pub fn distance_to_boundary(&self, p: Point) -> Result<f64> {
        let f = self.boundary_distance_field()?;
        Ok(self.refined_eval(&f, p)?.0)
    }

    /// Boundary cut distance along the inward normal at receiver `z`: the
    /// largest parameter t with d(boundary, gamma(t)) = t, located by
    /// bisection at resolution h/2.
    pub fn boundary_cut_distance(&self, receiver: usize) -> Result<f64> {
        let r = &self.atlas.receivers[receiver];
        let nu_e = self.domain.curves[r.curve].normal_at(r.s);
        let nu = self.field.normalize(r.pos, nu_e)?;
        let (lo_bb, hi_bb) = self.domain.bbox();
        let tmax = 2.0 * (hi_bb - lo_bb).norm();
        let path = shoot_geodesic(&self.field, &self.domain, r.pos, nu, tmax)?;
        if matches!(path.terminated_by, Termination::Breakdown) {
            return Err(TtdError::Geometry("normal geodesic breakdown".into()));
        }
        let reach = path.length().max(path.samples.last().map(|s| s.t).unwrap_or(0.0));
        let at = |t: f64| -> Point {
            let idx = ((t / path.step).floor() as usize).min(path.samples.len() - 1);
            if idx + 1 < path.samples.len() {
                let a = &path.samples[idx];
                let b = &path.samples[idx + 1];
                if b.t > a.t {
                    let w = (t - a.t) / (b.t - a.t);
                    return a.pos + (b.pos - a.pos) * w;
                }
            }
            path.samples[idx].pos
        };
        let h = self.domain.h;
        let still_normal = |t: f64| -> Result<bool> {
            let d = self.distance_to_boundary(at(t))?;
            Ok(d >= t - 2.0 * h)
        };
        // march out until the normal segment stops minimizing
        let mut lo = 0.0;
        let mut hi = reach;
        let mut t = 4.0 * h;
        let mut found_hi = false;
        while t < reach {
            if still_normal(t)? {
                lo = t;
            } else {
                hi = t;
                found_hi = true;
                break;
            }
            t += 4.0 * h;
        }
        if !found_hi {
            return Ok(reach);
        }
        while hi - lo > h / 2.0 {
            let mid = 0.5 * (lo + hi);
            if still_normal(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Unit (metric) departure direction at `p` of the minimizer from `p`
    /// to receiver `z`.
    pub fn departure_direction(&self, p: Point, receiver: usize) -> Result<Point> {
        let f = self.receiver_field(receiver)?;
        let (_, pts) = self.refined_eval(&f, p)?;
        // walk a short arc along the polyline for a stable direction
        let target = (20.0 * self.domain.h).min(0.5 * self.polyline_length(&pts)).max(self.domain.h);
        let mut acc = 0.0;
        let mut dir = None;
        for w in pts.windows(2) {
            let seg = (w[1] - w[0]).norm();
            if acc + seg >= target {
                let t = (target - acc) / seg;
                let probe = w[0] + (w[1] - w[0]) * t;
                dir = Some(probe - p);
                break;
            }
            acc += seg;
        }
        let d = dir.unwrap_or(pts[pts.len() - 1] - p);
        self.field.normalize(p, d)
    }
}

fn simplify_collinear(pts: &mut Vec<Point>) {
    if pts.len() < 3 {
        return;
    }
    let mut out = vec![pts[0]];
    for i in 1..pts.len() - 1 {
        let a = *out.last().unwrap();
        let b = pts[i];
        let c = pts[i + 1];
        let u = b - a;
        let v = c - b;
        let cross = u.x * v.y - u.y * v.x;
        if cross.abs() > 1e-12 || u.dot(&v) < 0.0 {
            out.push(b);
        }
    }
    out.push(*pts.last().unwrap());
    *pts = out;
}

fn subdivide(pts: &mut Vec<Point>, cap: f64) {
    let mut out = Vec::with_capacity(pts.len());
    for i in 0..pts.len() - 1 {
        let a = pts[i];
        let b = pts[i + 1];
        out.push(a);
        let len = (b - a).norm();
        let parts = (len / cap).ceil() as usize;
        for k in 1..parts {
            out.push(a + (b - a) * (k as f64 / parts as f64));
        }
    }
    out.push(*pts.last().unwrap());
    *pts = out;
}

fn build_grid(domain: &ParamDomain, field: &MetricField) -> Result<Grid> {
    let (lo, hi) = domain.bbox();
    let h = domain.h;
    let origin = lo - Point::new(2.0 * h, 2.0 * h);
    let nx = (((hi.x - origin.x) + 2.0 * h) / h).ceil() as usize + 1;
    let ny = (((hi.y - origin.y) + 2.0 * h) / h).ceil() as usize + 1;

    // nodes in the closed region, with a clearance flag for fast edge checks
    let rows: Vec<(Vec<i8>, Vec<bool>)> = (0..ny)
        .into_par_iter()
        .map(|iy| {
            let mut inside = vec![0i8; nx];
            let mut far = vec![false; nx];
            for ix in 0..nx {
                let p = origin + Point::new(ix as f64 * h, iy as f64 * h);
                if domain.classify(p) != Region::Exterior {
                    inside[ix] = 1;
                    far[ix] = domain.clearance(p) >= 3.0 * h;
                }
            }
            (inside, far)
        })
        .collect();

    let mut node_at = vec![-1i32; nx * ny];
    let mut nodes = Vec::new();
    let mut far_flags = Vec::new();
    for iy in 0..ny {
        for ix in 0..nx {
            if rows[iy].0[ix] == 1 {
                node_at[iy * nx + ix] = nodes.len() as i32;
                nodes.push(origin + Point::new(ix as f64 * h, iy as f64 * h));
                far_flags.push(rows[iy].1[ix]);
            }
        }
    }
    if nodes.is_empty() {
        return Err(TtdError::Domain("no grid nodes inside the region".into()));
    }

    let cells: Vec<(i64, i64)> = nodes
        .iter()
        .map(|p| {
            (
                ((p.x - origin.x) / h).round() as i64,
                ((p.y - origin.y) / h).round() as i64,
            )
        })
        .collect();

    let lookup = |ix: i64, iy: i64| -> Option<u32> {
        if ix < 0 || iy < 0 || ix >= nx as i64 || iy >= ny as i64 {
            return None;
        }
        let v = node_at[iy as usize * nx + ix as usize];
        (v >= 0).then_some(v as u32)
    };

    let per_node: Vec<Vec<(u32, f64)>> = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let (ix, iy) = cells[i];
            let a = nodes[i];
            let mut out = Vec::with_capacity(16);
            for (dx, dy) in STENCIL {
                if let Some(j) = lookup(ix + dx as i64, iy + dy as i64) {
                    let b = nodes[j as usize];
                    let ok = (far_flags[i] && far_flags[j as usize])
                        || domain.segment_inside(a, b);
                    if ok {
                        out.push((j, field.segment_length(a, b)));
                    }
                }
            }
            out
        })
        .collect();

    let mut adj_off = Vec::with_capacity(nodes.len() + 1);
    adj_off.push(0u32);
    let total: usize = per_node.iter().map(|v| v.len()).sum();
    let mut adj_tgt = Vec::with_capacity(total);
    let mut adj_w = Vec::with_capacity(total);
    for v in per_node {
        for (t, w) in v {
            adj_tgt.push(t);
            adj_w.push(w);
        }
        adj_off.push(adj_tgt.len() as u32);
    }

    Ok(Grid {
        origin,
        nx,
        ny,
        h,
        node_at,
        nodes,
        adj_off,
        adj_tgt,
        adj_w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, BoundaryAtlas, DomainSpec};

    fn annulus_engine() -> Engine {
        let dom = Arc::new(build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.02).unwrap());
        let atlas = Arc::new(BoundaryAtlas::build(&dom, 64, &[]).unwrap());
        Engine::new(dom, Arc::new(MetricField::euclidean()), atlas).unwrap()
    }

    fn disk_engine(h: f64) -> Engine {
        let dom = Arc::new(build_domain(DomainSpec::Disk { r: 1.0 }, h).unwrap());
        let atlas = Arc::new(BoundaryAtlas::build(&dom, 32, &[]).unwrap());
        Engine::new(dom, Arc::new(MetricField::euclidean()), atlas).unwrap()
    }

    #[test]
    fn disk_radius_distance() {
        let e = disk_engine(0.02);
        let d = e.distance(Point::zeros(), Point::new(1.0, 0.0)).unwrap();
        assert!((d - 1.0).abs() < 2.0 * 0.02, "distance {d}");
    }

    #[test]
    fn annulus_wrap_hugs_the_hole() {
        let e = annulus_engine();
        let d = e.distance(Point::new(1.0, 0.0), Point::new(-1.0, 0.0)).unwrap();
        let pi = std::f64::consts::PI;
        assert!((d - pi).abs() < 0.02 * pi, "wrap distance {d}");
    }

    #[test]
    fn annulus_tangent_arc_tangent() {
        // frozen from the tangent-arc-tangent formula:
        // 2*sqrt(1.25) + pi - 2*acos(1/1.5)
        let expected = 2.0 * 1.25_f64.sqrt() + std::f64::consts::PI - 2.0 * (1.0_f64 / 1.5).acos();
        assert!((expected - 3.695_523_2).abs() < 1e-6);
        let e = annulus_engine();
        let d = e.distance(Point::new(-1.5, 0.0), Point::new(1.5, 0.0)).unwrap();
        assert!((d - expected).abs() < 0.02 * expected, "distance {d}, expected {expected}");
    }

    #[test]
    fn distance_is_bitwise_symmetric() {
        let e = annulus_engine();
        let p = Point::new(1.3, 0.4);
        let q = Point::new(-1.7, -0.2);
        let a = e.distance(p, q).unwrap();
        let b = e.distance(q, p).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn straightened_never_exceeds_raw() {
        let e = annulus_engine();
        let pairs = [
            (Point::new(1.1, 0.1), Point::new(-1.4, 0.3)),
            (Point::new(0.0, 1.5), Point::new(0.0, -1.5)),
            (Point::new(1.9, 0.0), Point::new(0.0, 1.1)),
        ];
        for (p, q) in pairs {
            let raw = e.raw_distance(p, q).unwrap();
            let s = e.distance(p, q).unwrap();
            assert!(s <= raw + 1e-12, "straightened {s} > raw {raw}");
        }
    }

    #[test]
    fn exterior_point_is_a_domain_error() {
        let e = annulus_engine();
        assert!(matches!(
            e.distance(Point::new(0.0, 0.0), Point::new(1.5, 0.0)),
            Err(TtdError::Domain(_))
        ));
    }

    #[test]
    fn closest_boundary_sets_on_the_annulus() {
        let e = annulus_engine();
        let h = e.h();
        let inner = e.closest_boundary_set(Point::new(1.2, 0.0), 3.0 * h).unwrap();
        assert!(!inner.is_empty());
        for (idx, d) in &inner {
            assert_eq!(e.atlas.receivers[*idx].curve, 1, "receiver {idx} not on the inner curve");
            assert!((d - 0.2).abs() < 3.0 * h + 0.02);
        }
        let mid = e.closest_boundary_set(Point::new(1.5, 0.0), 3.0 * h).unwrap();
        let curves: std::collections::HashSet<usize> =
            mid.iter().map(|(i, _)| e.atlas.receivers[*i].curve).collect();
        assert_eq!(curves.len(), 2, "mid-circle point should tie across both curves");
    }

    #[test]
    fn disk_center_ties_all_receivers() {
        let e = disk_engine(0.02);
        let set = e.closest_boundary_set(Point::zeros(), 3.0 * 0.02).unwrap();
        assert_eq!(set.len(), e.atlas.len());
        for (_, d) in set {
            assert!((d - 1.0).abs() < 2.0 * 0.02);
        }
    }

    #[test]
    fn cut_distances_on_presets() {
        let e = disk_engine(0.02);
        let tau = e.boundary_cut_distance(0).unwrap();
        assert!((tau - 1.0).abs() < 2.0 * 0.02 + 0.02, "disk cut distance {tau}");

        let a = annulus_engine();
        let inner_idx = a.atlas.curve_ranges[1].start;
        let outer_idx = a.atlas.curve_ranges[0].start;
        let ti = a.boundary_cut_distance(inner_idx).unwrap();
        let to = a.boundary_cut_distance(outer_idx).unwrap();
        assert!((ti - 0.5).abs() < 2.0 * 0.02 + 0.02, "inner cut distance {ti}");
        assert!((to - 0.5).abs() < 2.0 * 0.02 + 0.02, "outer cut distance {to}");
    }

    #[test]
    fn boundary_field_values_match_radial_depth() {
        let e = annulus_engine();
        let d = e.distance_to_boundary(Point::new(1.2, 0.0)).unwrap();
        assert!((d - 0.2).abs() < 2.0 * 0.02, "boundary distance {d}");
    }

    #[test]
    fn departure_direction_points_at_the_receiver() {
        let e = disk_engine(0.02);
        // receiver 0 sits at angle 0 on the unit circle
        let dir = e.departure_direction(Point::zeros(), 0).unwrap();
        let expect = (e.atlas.receivers[0].pos - Point::zeros()).normalize();
        assert!((dir - expect).norm() < 1e-6, "direction {dir:?}");
    }
}
