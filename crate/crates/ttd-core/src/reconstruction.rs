//! Reconstruction from (boundary discretization, difference records) alone.
//!
//! Every function here sees sources only through their anonymized difference
//! vectors. Boundary distances come back as suprema of record entries,
//! closest-boundary data as minimizer sets of a record column, and charts as
//! data-derived coordinate values with numerically certified Jacobians. The
//! double-difference locator at the end is the applied, metric-known mode and
//! is the one routine allowed to use the forward engine.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::config::Tolerances;
use crate::dataset::ReconDataset;
use crate::engine::Engine;
use crate::error::{Result, TtdError};
use crate::synthesis::TtdRecord;
use crate::Point;

/// Supremum over records of D[i][j]; a monotone-from-below estimate of the
/// boundary distance between receivers i and j.
pub fn recover_boundary_distance(ds: &ReconDataset, i: usize, j: usize) -> Result<f64> {
    if ds.records.is_empty() {
        return Err(TtdError::Data("empty dataset".into()));
    }
    Ok(ds
        .records
        .iter()
        .map(|r| r.v[i] - r.v[j])
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Sup norm of the difference of two records over all receiver pairs. Equals
/// the range of the per-receiver difference vector.
pub fn embedding_distance(a: &TtdRecord, b: &TtdRecord) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TtdError::Data(format!(
            "atlas mismatch: records carry {} and {} receivers",
            a.len(),
            b.len()
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in a.v.iter().zip(b.v.iter()) {
        let d = x - y;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok(hi - lo)
}

/// Cache of recovered boundary-distance columns over one dataset.
pub struct ReconContext<'a> {
    pub ds: &'a ReconDataset,
    cols: RwLock<HashMap<usize, Arc<Vec<f64>>>>,
}

impl<'a> ReconContext<'a> {
    pub fn new(ds: &'a ReconDataset) -> ReconContext<'a> {
        ReconContext {
            ds,
            cols: RwLock::new(HashMap::new()),
        }
    }

    /// Recovered distances from every receiver to receiver `j`.
    pub fn recovered_column(&self, j: usize) -> Result<Arc<Vec<f64>>> {
        if let Some(c) = self.cols.read().unwrap().get(&j) {
            return Ok(c.clone());
        }
        if self.ds.records.is_empty() {
            return Err(TtdError::Data("empty dataset".into()));
        }
        let m = self.ds.m();
        let mut col = vec![f64::NEG_INFINITY; m];
        for r in &self.ds.records {
            let base = r.v[j];
            for (i, v) in r.v.iter().enumerate() {
                let d = v - base;
                if d > col[i] {
                    col[i] = d;
                }
            }
        }
        let arc = Arc::new(col);
        self.cols.write().unwrap().insert(j, arc.clone());
        Ok(arc)
    }
}

/// Minimizer set of z -> D[z][w] within `tie_tol`, with the attained values.
/// The set is independent of `w`: changing it shifts the column by a
/// constant.
pub fn closest_boundary_from_data(r: &TtdRecord, w: usize, tie_tol: f64) -> Vec<(usize, f64)> {
    let min = r.v.iter().copied().fold(f64::INFINITY, f64::min);
    r.v
        .iter()
        .enumerate()
        .filter(|(_, v)| **v <= min + tie_tol)
        .map(|(i, v)| (i, v - r.v[w]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutLabel {
    OffCut,
    OnCut,
}

/// Label each record against the boundary cut locus: on-cut when the
/// minimizer set of its column holds two receivers farther apart than twice
/// the receiver spacing (different curves always qualify).
pub fn classify_cut_locus(ds: &ReconDataset, tol: &Tolerances) -> Vec<CutLabel> {
    let tie = tol.cut_tie_tol();
    ds.records
        .iter()
        .map(|r| {
            let set = closest_boundary_from_data(r, 0, tie);
            if minimizer_set_is_spread(ds, &set) {
                CutLabel::OnCut
            } else {
                CutLabel::OffCut
            }
        })
        .collect()
}

fn minimizer_set_is_spread(ds: &ReconDataset, set: &[(usize, f64)]) -> bool {
    for (a, &(i, _)) in set.iter().enumerate() {
        for &(j, _) in set.iter().skip(a + 1) {
            match ds.atlas.arc_separation(i, j) {
                None => return true,
                Some(sep) => {
                    let (ci, _) = ds.atlas.locate(i);
                    let spacing =
                        ds.atlas.curves[ci].length / ds.atlas.curves[ci].receivers.len() as f64;
                    if sep > 2.0 * spacing {
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[derive(Debug, Clone)]
pub struct BoundaryFnResult {
    /// f_p per receiver.
    pub values: Vec<f64>,
    pub sup: f64,
    pub is_boundary: bool,
    /// The unique closest receiver used as the foot point.
    pub z_p: usize,
}

/// Boundary defining function of an off-cut record: f_p(z) = d^(z, Z(p)) -
/// D_p(z, Z(p)) with the recovered boundary distance. Errors on on-cut
/// records.
pub fn boundary_defining_function(
    ctx: &ReconContext,
    record: usize,
    tol: &Tolerances,
) -> Result<BoundaryFnResult> {
    let r = &ctx.ds.records[record];
    let set = closest_boundary_from_data(r, 0, tol.cut_tie_tol());
    if minimizer_set_is_spread(ctx.ds, &set) {
        return Err(TtdError::Data(format!(
            "record {} lies on the boundary cut locus; Z(p) is not unique",
            r.id
        )));
    }
    let z_p = r
        .v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();
    let col = ctx.recovered_column(z_p)?;
    let base = r.v[z_p];
    let values: Vec<f64> = r
        .v
        .iter()
        .enumerate()
        .map(|(i, v)| col[i] - (v - base))
        .collect();
    let sup = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BoundaryFnResult {
        sup,
        is_boundary: sup <= tol.boundary_tol,
        values,
        z_p,
    })
}

/// Tangential derivative of a receiver-indexed quantity at receiver `i`,
/// by central difference over the curve neighbors.
fn tangential_derivative(ds: &ReconDataset, values: &[f64], i: usize) -> f64 {
    let (prev, next) = ds.atlas.curve_neighbors(i);
    let (ci, _) = ds.atlas.locate(i);
    let len = ds.atlas.curves[ci].length;
    let s = ds.atlas.arclength(i);
    let fwd = (ds.atlas.arclength(next) - s).rem_euclid(len);
    let back = (s - ds.atlas.arclength(prev)).rem_euclid(len);
    (values[next] - values[prev]) / (fwd + back)
}

fn second_difference(ds: &ReconDataset, values: &[f64], i: usize) -> f64 {
    let (prev, next) = ds.atlas.curve_neighbors(i);
    let (ci, _) = ds.atlas.locate(i);
    let spacing = ds.atlas.curves[ci].length / ds.atlas.curves[ci].receivers.len() as f64;
    (values[next] - 2.0 * values[i] + values[prev]) / (spacing * spacing)
}

/// Tangential metric value at every receiver from recovered neighbor
/// distances: (d^(z, z') / arclength gap)^2 for the nearest neighbor.
pub fn recover_boundary_metric(ctx: &ReconContext) -> Result<Vec<f64>> {
    let m = ctx.ds.m();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let (prev, next) = ctx.ds.atlas.curve_neighbors(i);
        let sp = ctx.ds.atlas.arc_separation(i, prev).unwrap_or(f64::INFINITY);
        let sn = ctx.ds.atlas.arc_separation(i, next).unwrap_or(f64::INFINITY);
        let (nb, gap) = if sp < sn { (prev, sp) } else { (next, sn) };
        let d = recover_boundary_distance(ctx.ds, i, nb)?;
        if !(d > 0.0) {
            return Err(TtdError::Data(format!(
                "recovered neighbor distance at receiver {i} is degenerate"
            )));
        }
        out.push((d / gap) * (d / gap));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BoundaryChartRecord {
    pub base: usize,
    pub aux: usize,
    /// Estimate of dE/dt at the base receiver: 1 minus the inward-normal
    /// component of the departing minimizer toward the auxiliary receiver.
    pub jacobian_entry: f64,
    pub entries: Vec<BoundaryChartEntry>,
}

#[derive(Debug, Clone)]
pub struct BoundaryChartEntry {
    pub record: usize,
    /// Boundary defining value E(q).
    pub e: f64,
    pub z_receiver: usize,
    pub z_arclength: f64,
}

/// Build the boundary chart (E, Z) around receiver `p` with auxiliary
/// receiver `z0`. Rejects z0 when the recovered distance column is not
/// smooth at p, when z0 is a closest receiver of a patch source, or when the
/// minimizer from p to z0 leaves normally (Jacobian estimate below
/// `jac_tol`).
pub fn build_boundary_chart(
    ctx: &ReconContext,
    labels: &[CutLabel],
    p: usize,
    z0: usize,
    tol: &Tolerances,
) -> Result<BoundaryChartRecord> {
    let ds = ctx.ds;
    if p == z0 {
        return Err(TtdError::Chart("auxiliary receiver equals the base receiver".into()));
    }
    let (cp, _) = ds.atlas.locate(p);
    let spacing = ds.atlas.curves[cp].length / ds.atlas.curves[cp].receivers.len() as f64;
    let delta = tol.patch_radius_mult * spacing;

    let col = ctx.recovered_column(z0)?;

    // smoothness of the recovered distance to z0 near p
    let dd = second_difference(ds, &col, p).abs();
    if dd > tol.smooth_max {
        return Err(TtdError::Chart(format!(
            "recovered distance to receiver {z0} is not smooth at {p} (second difference {dd:.3})"
        )));
    }

    // patch membership and z0 admissibility
    let mut patch = Vec::new();
    for (k, r) in ds.records.iter().enumerate() {
        if labels[k] != CutLabel::OffCut {
            continue;
        }
        let zq = r
            .v
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let Some(sep) = ds.atlas.arc_separation(zq, p) else {
            continue;
        };
        if sep > delta {
            continue;
        }
        if zq == z0 {
            return Err(TtdError::Chart(format!(
                "receiver {z0} is the closest boundary point of patch record {}",
                r.id
            )));
        }
        patch.push((k, zq));
    }

    // Jacobian estimate from the tangential slope of the recovered distance:
    // the departing direction of the minimizer p -> z0 has tangential
    // component -(d/ds) d^(., z0) in the orthonormal boundary frame, and the
    // entry is 1 minus its inward-normal component.
    let gtt = recover_boundary_metric(ctx)?;
    let slope = tangential_derivative(ds, &col, p);
    let t_comp = (slope / gtt[p].sqrt()).clamp(-1.0, 1.0);
    let jacobian_entry = 1.0 - (1.0 - t_comp * t_comp).max(0.0).sqrt();
    if jacobian_entry < tol.jac_tol {
        return Err(TtdError::Chart(format!(
            "normal incidence: minimizer from receiver {z0} meets {p} along the normal \
             (Jacobian entry {jacobian_entry:.4} below {})",
            tol.jac_tol
        )));
    }

    let entries = patch
        .into_iter()
        .map(|(k, zq)| {
            let r = &ds.records[k];
            let e = col[zq] - (r.v[z0] - r.v[zq]);
            BoundaryChartEntry {
                record: k,
                e,
                z_receiver: zq,
                z_arclength: ds.atlas.arclength(zq),
            }
        })
        .collect();

    Ok(BoundaryChartRecord {
        base: p,
        aux: z0,
        jacobian_entry,
        entries,
    })
}

#[derive(Debug, Clone)]
pub struct InteriorChartRecord {
    pub anchor: usize,
    pub z_p: usize,
    pub picked: (usize, usize),
    /// Condition number of the finite-difference Jacobian proxy.
    pub cond: f64,
    pub entries: Vec<(usize, [f64; 2])>,
}

/// Pick two receivers from `candidates` whose difference coordinates have a
/// rank-2 Jacobian proxy at the anchor record, certified by the condition
/// number of embedding-normalized differences over neighboring records.
pub fn build_interior_chart(
    ctx: &ReconContext,
    labels: &[CutLabel],
    anchor: usize,
    candidates: &[usize],
    tol: &Tolerances,
) -> Result<InteriorChartRecord> {
    let ds = ctx.ds;
    if labels[anchor] != CutLabel::OffCut {
        return Err(TtdError::Chart("anchor record lies on the cut locus".into()));
    }
    let ra = &ds.records[anchor];
    let z_p = ra
        .v
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(i, _)| i)
        .unwrap();

    // nearest records in the embedding pseudometric
    let mut near: Vec<(usize, f64)> = ds
        .records
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != anchor)
        .map(|(k, r)| (k, embedding_distance(ra, r).unwrap()))
        .collect();
    near.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let neighbors: Vec<(usize, f64)> = near.iter().take(8).copied().collect();
    if neighbors.len() < 2 {
        return Err(TtdError::Chart("not enough records near the anchor".into()));
    }

    let h_value = |r: &TtdRecord, za: usize, zb: usize| -> [f64; 2] {
        [r.v[za] - r.v[z_p], r.v[zb] - r.v[z_p]]
    };

    let mut best: Option<(usize, usize, f64)> = None;
    for (ai, &za) in candidates.iter().enumerate() {
        for &zb in candidates.iter().skip(ai + 1) {
            let ha = h_value(ra, za, zb);
            let mut rows = Vec::with_capacity(neighbors.len() * 2);
            for &(k, e) in &neighbors {
                if e <= 0.0 {
                    continue;
                }
                let hn = h_value(&ds.records[k], za, zb);
                rows.push((hn[0] - ha[0]) / e);
                rows.push((hn[1] - ha[1]) / e);
            }
            let nrows = rows.len() / 2;
            if nrows < 2 {
                continue;
            }
            let mat = DMatrix::from_row_slice(nrows, 2, &rows);
            let svd = mat.svd(false, false);
            let s1 = svd.singular_values[0];
            let s2 = svd.singular_values[svd.singular_values.len() - 1];
            if s2 <= 1e-12 * s1.max(1e-300) {
                continue;
            }
            let cond = s1 / s2;
            if best.map_or(true, |(_, _, c)| cond < c) {
                best = Some((za, zb, cond));
            }
        }
    }
    let (za, zb, cond) = best.ok_or_else(|| {
        TtdError::Chart("no candidate pair yields a rank-2 Jacobian proxy".into())
    })?;
    if cond > tol.cond_max {
        return Err(TtdError::Chart(format!(
            "best candidate pair ({za}, {zb}) has condition number {cond:.1} above {}",
            tol.cond_max
        )));
    }

    let (cz, _) = ds.atlas.locate(z_p);
    let spacing = ds.atlas.curves[cz].length / ds.atlas.curves[cz].receivers.len() as f64;
    let patch_radius = tol.patch_radius_mult * spacing;
    let entries = ds
        .records
        .iter()
        .enumerate()
        .filter(|(k, r)| {
            *k == anchor || embedding_distance(ra, r).map(|e| e <= patch_radius).unwrap_or(false)
        })
        .map(|(k, r)| (k, h_value(r, za, zb)))
        .collect();

    Ok(InteriorChartRecord {
        anchor,
        z_p,
        picked: (za, zb),
        cond,
        entries,
    })
}

#[derive(Debug, Clone)]
pub struct Match {
    pub id1: String,
    pub id2: String,
    pub index2: usize,
    pub residual: f64,
    /// True when a second candidate also sits within the match tolerance.
    pub ambiguous: bool,
    pub mutual: bool,
}

#[derive(Debug, Clone)]
pub struct Correspondence {
    pub phi: Vec<usize>,
    pub matches: Vec<Match>,
    pub mutual_fraction: f64,
}

/// Match records of `ds1` against `ds2` through the receiver bijection
/// `phi` (index in ds1 -> index in ds2): for each record the candidate
/// minimizing the sup-norm residual, with ambiguity flags and the fraction
/// of mutual best matches.
pub fn match_manifolds(
    ds1: &ReconDataset,
    ds2: &ReconDataset,
    phi: &[usize],
    tol: &Tolerances,
) -> Result<Correspondence> {
    let m = ds1.m();
    if ds2.m() != m {
        return Err(TtdError::Data(format!(
            "atlas sizes differ: {m} vs {}",
            ds2.m()
        )));
    }
    if phi.len() != m {
        return Err(TtdError::Data("phi length does not match the atlas".into()));
    }
    let mut seen = vec![false; m];
    for &t in phi {
        if t >= m || seen[t] {
            return Err(TtdError::Data("phi is not a bijection".into()));
        }
        seen[t] = true;
    }
    if ds1.records.is_empty() || ds2.records.is_empty() {
        return Err(TtdError::Data("empty dataset".into()));
    }

    // u[i2] = v1[phi^{-1}(i2)]
    let mut phi_inv = vec![0usize; m];
    for (i1, &i2) in phi.iter().enumerate() {
        phi_inv[i2] = i1;
    }

    struct RowBest {
        best: f64,
        idx: usize,
        second: f64,
    }

    let rows: Vec<RowBest> = ds1
        .records
        .par_iter()
        .map(|r1| {
            let u: Vec<f64> = (0..m).map(|i2| r1.v[phi_inv[i2]]).collect();
            let mut best = f64::INFINITY;
            let mut second = f64::INFINITY;
            let mut idx = 0usize;
            for (k2, r2) in ds2.records.iter().enumerate() {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (a, b) in u.iter().zip(r2.v.iter()) {
                    let d = a - b;
                    if d < lo {
                        lo = d;
                    }
                    if d > hi {
                        hi = d;
                    }
                }
                let res = hi - lo;
                if res < best {
                    second = best;
                    best = res;
                    idx = k2;
                } else if res < second {
                    second = res;
                }
            }
            RowBest { best, idx, second }
        })
        .collect();

    // reverse-direction best matches for the mutuality check
    let back: Vec<usize> = ds2
        .records
        .par_iter()
        .map(|r2| {
            let mut best = f64::INFINITY;
            let mut idx = 0usize;
            for (k1, r1) in ds1.records.iter().enumerate() {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (i2, b) in r2.v.iter().enumerate() {
                    let d = r1.v[phi_inv[i2]] - b;
                    if d < lo {
                        lo = d;
                    }
                    if d > hi {
                        hi = d;
                    }
                }
                let res = hi - lo;
                if res < best {
                    best = res;
                    idx = k1;
                }
            }
            idx
        })
        .collect();

    let mut mutual_count = 0usize;
    let matches: Vec<Match> = rows
        .iter()
        .enumerate()
        .map(|(k1, rb)| {
            let mutual = back[rb.idx] == k1;
            if mutual {
                mutual_count += 1;
            }
            Match {
                id1: ds1.records[k1].id.clone(),
                id2: ds2.records[rb.idx].id.clone(),
                index2: rb.idx,
                residual: rb.best,
                ambiguous: rb.second <= tol.match_tol,
                mutual,
            }
        })
        .collect();

    Ok(Correspondence {
        phi: phi.to_vec(),
        matches,
        mutual_fraction: mutual_count as f64 / ds1.records.len() as f64,
    })
}

#[derive(Debug, Clone)]
pub struct GeodesicImage {
    pub receiver: usize,
    /// Record indices ordered along the recovered geodesic.
    pub records: Vec<usize>,
    /// Ordering values: D(z, w_ref) minus the minimum over the set.
    pub order_values: Vec<f64>,
    /// Records whose tangential gradient exceeded the unit bound.
    pub inconsistent: Vec<usize>,
}

/// Records whose recovered distance gradient at receiver `z` matches the
/// covector with tangential component `a` (orthonormal boundary frame,
/// inward normal sign), within `grad_tol`. The tangential part comes from
/// central differences of the record along the boundary; the normal part
/// from the unit-norm identity.
pub fn recover_geodesic_image(
    ctx: &ReconContext,
    gtt: &[f64],
    z: usize,
    a: f64,
    tol: &Tolerances,
) -> Result<GeodesicImage> {
    let ds = ctx.ds;
    if a.abs() > 1.0 {
        return Err(TtdError::Parameter(format!(
            "tangential component {a} exceeds unit length"
        )));
    }
    let target_n = (1.0 - a * a).max(0.0).sqrt();
    let m = ds.m();
    let w_ref = {
        // a fixed reference receiver distinct from z
        let (cz, _) = ds.atlas.locate(z);
        let range_len = ds.atlas.curves[cz].receivers.len();
        let (base, _) = {
            let mut b = 0;
            for c in &ds.atlas.curves[..cz] {
                b += c.receivers.len();
            }
            (b, 0)
        };
        let mut cand = base + ((z - base) + range_len / 2) % range_len;
        if cand == z {
            cand = (z + 1) % m;
        }
        cand
    };

    let mut picked = Vec::new();
    let mut inconsistent = Vec::new();
    for (k, r) in ds.records.iter().enumerate() {
        let slope = tangential_derivative(ds, &r.v, z);
        let delta = slope / gtt[z].sqrt();
        if delta.abs() > 1.0 + tol.grad_tol {
            inconsistent.push(k);
            continue;
        }
        let d = delta.clamp(-1.0, 1.0);
        let u_t = -d;
        let u_n = (1.0 - d * d).max(0.0).sqrt();
        let dist = ((u_t - a).powi(2) + (u_n - target_n).powi(2)).sqrt();
        if dist <= tol.grad_tol {
            picked.push((k, r.v[z] - r.v[w_ref]));
        }
    }
    let min = picked
        .iter()
        .map(|(_, o)| *o)
        .fold(f64::INFINITY, f64::min);
    picked.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    let records = picked.iter().map(|(k, _)| *k).collect();
    let order_values = picked.iter().map(|(_, o)| o - min).collect();
    Ok(GeodesicImage {
        receiver: z,
        records,
        order_values,
        inconsistent,
    })
}

#[derive(Debug, Clone)]
pub struct DdLocation {
    pub offset: Point,
    pub residual: f64,
    pub receivers_used: usize,
}

/// Double-difference relative location: least squares on the linearized
/// travel time around a known master position. Gradients of the distance
/// functions come from the forward engine (metric-known mode); `diffs` holds
/// per-receiver arrival-time differences of the event against the master.
pub fn dd_locate(engine: &Engine, master: Point, diffs: &[(usize, f64)]) -> Result<DdLocation> {
    if diffs.len() < 2 {
        return Err(TtdError::Geometry(
            "need at least two receivers for a 2-D location".into(),
        ));
    }
    let g = engine.field.tensor(master)?;
    let mut a = DMatrix::zeros(diffs.len(), 2);
    let mut b = DMatrix::zeros(diffs.len(), 1);
    for (row, (ridx, dt)) in diffs.iter().enumerate() {
        let eta = engine.departure_direction(master, *ridx)?;
        let grad = -(g * eta);
        a[(row, 0)] = grad.x;
        a[(row, 1)] = grad.y;
        b[(row, 0)] = *dt;
    }
    let svd = a.clone().svd(true, true);
    let s1 = svd.singular_values[0];
    let s2 = svd.singular_values[svd.singular_values.len() - 1];
    if s2 <= 1e-8 * s1.max(1e-300) {
        return Err(TtdError::Geometry(
            "rank-deficient normal equations: receiver gradients are collinear".into(),
        ));
    }
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| TtdError::Geometry(e.to_string()))?;
    let offset = Point::new(x[(0, 0)], x[(1, 0)]);
    let r = &a * &x - &b;
    Ok(DdLocation {
        offset,
        residual: r.norm(),
        receivers_used: diffs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AtlasMeta, CurveMeta};

    fn line_atlas(m: usize) -> AtlasMeta {
        AtlasMeta {
            curves: vec![CurveMeta {
                length: m as f64,
                receivers: (0..m).map(|i| i as f64).collect(),
            }],
        }
    }

    /// Records on a circle boundary of a fake 1-D world where distances are
    /// arc gaps; enough structure for the pure data-side ops.
    fn toy_dataset() -> ReconDataset {
        let m = 8;
        let atlas = line_atlas(m);
        let mut records = Vec::new();
        for k in 0..m {
            // source sitting just inside receiver k: d(p, z_i) = arc gap
            let v: Vec<f64> = (0..m)
                .map(|i| {
                    let d = (i as f64 - k as f64).abs();
                    d.min(m as f64 - d)
                })
                .collect();
            let base = v[0];
            records.push(TtdRecord {
                id: format!("t{k}"),
                v: v.into_iter().map(|x| x - base).collect(),
            });
        }
        ReconDataset {
            atlas,
            records,
            provenance: "toy".into(),
        }
    }

    #[test]
    fn recovered_distance_is_a_supremum() {
        let ds = toy_dataset();
        // sources next to each receiver realize the arc distance exactly
        let d = recover_boundary_distance(&ds, 1, 3).unwrap();
        assert_eq!(d, 2.0);
        let empty = ReconDataset {
            atlas: ds.atlas.clone(),
            records: vec![],
            provenance: String::new(),
        };
        assert!(recover_boundary_distance(&empty, 0, 1).is_err());
    }

    #[test]
    fn embedding_distance_of_identical_records_is_zero() {
        let ds = toy_dataset();
        assert_eq!(embedding_distance(&ds.records[2], &ds.records[2]).unwrap(), 0.0);
        assert!(embedding_distance(&ds.records[0], &ds.records[1]).unwrap() > 0.0);
    }

    #[test]
    fn minimizer_set_ignores_the_reference_receiver() {
        let ds = toy_dataset();
        let s1 = closest_boundary_from_data(&ds.records[3], 0, 0.25);
        let s2 = closest_boundary_from_data(&ds.records[3], 5, 0.25);
        let i1: Vec<usize> = s1.iter().map(|(i, _)| *i).collect();
        let i2: Vec<usize> = s2.iter().map(|(i, _)| *i).collect();
        assert_eq!(i1, i2);
        assert_eq!(i1, vec![3]);
    }

    #[test]
    fn identity_match_is_exact_and_mutual() {
        let ds = toy_dataset();
        let phi: Vec<usize> = (0..ds.m()).collect();
        let tol = Tolerances::for_pitch(0.01);
        let c = match_manifolds(&ds, &ds, &phi, &tol).unwrap();
        assert_eq!(c.mutual_fraction, 1.0);
        for (k, m) in c.matches.iter().enumerate() {
            assert_eq!(m.index2, k);
            assert_eq!(m.residual, 0.0);
            assert!(m.mutual);
        }
    }

    #[test]
    fn phi_must_be_a_bijection() {
        let ds = toy_dataset();
        let tol = Tolerances::for_pitch(0.01);
        let bad = vec![0usize; ds.m()];
        assert!(match_manifolds(&ds, &ds, &bad, &tol).is_err());
    }

    #[test]
    fn cut_labels_on_the_toy_circle() {
        let ds = toy_dataset();
        let mut tol = Tolerances::for_pitch(0.01);
        tol.tie_tol = 0.25;
        let labels = classify_cut_locus(&ds, &tol);
        // each toy source has a unique closest receiver
        assert!(labels.iter().all(|l| *l == CutLabel::OffCut));
    }
}
