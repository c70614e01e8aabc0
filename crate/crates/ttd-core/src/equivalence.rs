//! Geometric side conditions: boundary visibility, metric jets on the
//! boundary, projective equivalence of connections, and constancy of the
//! Matveev quantity along the geodesic flow.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{ParamDomain, Region};
use crate::engine::Engine;
use crate::error::{Result, TtdError};
use crate::geodesic::{shoot_geodesic, Termination};
use crate::metric::MetricField;
use crate::{Mat2, Point};

#[derive(Debug, Clone, Serialize)]
pub struct VisibilityParams {
    /// Initial angular sweep resolution per boundary point.
    pub initial_directions: usize,
    /// Angular resolution of the refinement around candidates.
    pub refine_to: f64,
    /// Transversality threshold at both endpoints.
    pub angle_tol: f64,
    /// Slack for the minimizing certificate, in length units.
    pub minimize_slack: f64,
    /// Second-difference bound for the non-cut certificate.
    pub noncut_max: f64,
    /// Integration budget per shot.
    pub tmax: f64,
}

impl VisibilityParams {
    pub fn for_engine(engine: &Engine) -> VisibilityParams {
        let (lo, hi) = engine.domain.bbox();
        let h = engine.h();
        VisibilityParams {
            initial_directions: 64,
            refine_to: 1e-3,
            angle_tol: 1e-3,
            minimize_slack: 4.0 * h,
            noncut_max: 10.0,
            tmax: 4.0 * (hi - lo).norm(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Certificates {
    pub transversal_at_both_ends: bool,
    pub interior_except_endpoints: bool,
    pub minimizing: bool,
    pub non_cut: bool,
}

impl Certificates {
    fn all(&self) -> bool {
        self.transversal_at_both_ends
            && self.interior_except_endpoints
            && self.minimizing
            && self.non_cut
    }

    fn score(&self, minimize_excess: f64) -> f64 {
        let fails = [
            self.transversal_at_both_ends,
            self.interior_except_endpoints,
            self.minimizing,
            self.non_cut,
        ]
        .iter()
        .filter(|b| !**b)
        .count();
        fails as f64 * 1e3 + minimize_excess.max(0.0)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VisibilityEntry {
    pub receiver: usize,
    /// Sweep angle (radians from the boundary tangent) of the found
    /// direction, when one passes.
    pub found_angle: Option<f64>,
    pub exit_time: Option<f64>,
    pub certificates: Certificates,
    /// Best candidate score when nothing passed (lower is closer).
    pub best_score: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VisibilityReport {
    pub pass: bool,
    pub entries: Vec<VisibilityEntry>,
    pub params: VisibilityParams,
}

struct Shot {
    psi: f64,
    exit_time: f64,
    certs: Certificates,
    score: f64,
}

fn evaluate_direction(engine: &Engine, receiver: usize, psi: f64, params: &VisibilityParams) -> Option<Shot> {
    let domain = &engine.domain;
    let r = &engine.atlas.receivers[receiver];
    let t = domain.curves[r.curve].tangent_at(r.s);
    let nu = domain.curves[r.curve].normal_at(r.s);
    let dir_e = t * psi.cos() + nu * psi.sin();
    let eta = engine.field.normalize(r.pos, dir_e).ok()?;
    let path = shoot_geodesic(&engine.field, domain, r.pos, eta, params.tmax).ok()?;
    let Termination::Exit {
        time,
        point,
        angle,
        tangential,
    } = path.terminated_by
    else {
        return None;
    };
    if time <= 0.0 {
        return None;
    }

    let h = engine.h();
    let start_angle = psi.min(std::f64::consts::PI - psi);
    let transversal = start_angle > params.angle_tol && angle > params.angle_tol && !tangential;

    let interior = path
        .samples
        .iter()
        .filter(|s| s.t > 2.0 * h && s.t < time - 2.0 * h)
        .all(|s| domain.classify(s.pos) == Region::Interior);

    // minimizing: compare against the engine distance from this receiver
    let field = engine.receiver_field(receiver).ok()?;
    let dist = engine.refined_eval(&field, point).ok()?.0;
    let excess = time - dist;
    let minimizing = excess <= params.minimize_slack;

    // non-cut: the distance to perturbed endpoints varies smoothly
    let (ci, s_exit, _) = domain.nearest_boundary(point);
    let dstep = 8.0 * h;
    let non_cut = (|| -> Option<bool> {
        let wp = domain.curves[ci].point_at(s_exit + dstep);
        let wm = domain.curves[ci].point_at(s_exit - dstep);
        let dp = engine.refined_eval(&field, wp).ok()?.0;
        let dm = engine.refined_eval(&field, wm).ok()?.0;
        let second = (dp - 2.0 * dist + dm).abs() / (dstep * dstep);
        Some(second <= params.noncut_max && (dp - dist).abs() <= 2.0 * dstep && (dm - dist).abs() <= 2.0 * dstep)
    })()
    .unwrap_or(false);

    let certs = Certificates {
        transversal_at_both_ends: transversal,
        interior_except_endpoints: interior,
        minimizing,
        non_cut,
    };
    let score = certs.score(excess);
    Some(Shot {
        psi,
        exit_time: time,
        certs,
        score,
    })
}

fn check_receiver(engine: &Engine, receiver: usize, params: &VisibilityParams) -> VisibilityEntry {
    let n = params.initial_directions;
    let mut shots: Vec<Shot> = Vec::new();
    for k in 0..n {
        let psi = std::f64::consts::PI * (k as f64 + 0.5) / n as f64;
        if let Some(s) = evaluate_direction(engine, receiver, psi, params) {
            shots.push(s);
        }
    }
    let found = |shots: &[Shot]| shots.iter().position(|s| s.certs.all());

    if found(&shots).is_none() && !shots.is_empty() {
        // golden-ratio refinement around the best candidates
        let inv_phi = 0.618_033_988_749_894_9_f64;
        let mut order: Vec<usize> = (0..shots.len()).collect();
        order.sort_by(|&a, &b| shots[a].score.partial_cmp(&shots[b].score).unwrap());
        let half = std::f64::consts::PI / n as f64;
        let mut extra: Vec<Shot> = Vec::new();
        'outer: for &c in order.iter().take(4) {
            let center = shots[c].psi;
            let mut width = half;
            while width > params.refine_to {
                for sgn in [-1.0, 1.0] {
                    let psi = center + sgn * width * inv_phi;
                    if psi <= 0.0 || psi >= std::f64::consts::PI {
                        continue;
                    }
                    if let Some(s) = evaluate_direction(engine, receiver, psi, params) {
                        let hit = s.certs.all();
                        extra.push(s);
                        if hit {
                            break 'outer;
                        }
                    }
                }
                width *= inv_phi;
            }
        }
        shots.extend(extra);
    }

    match found(&shots) {
        Some(i) => VisibilityEntry {
            receiver,
            found_angle: Some(shots[i].psi),
            exit_time: Some(shots[i].exit_time),
            certificates: shots[i].certs.clone(),
            best_score: 0.0,
        },
        None => {
            let best = shots
                .iter()
                .min_by(|a, b| a.score.partial_cmp(&b.score).unwrap());
            VisibilityEntry {
                receiver,
                found_angle: None,
                exit_time: best.map(|s| s.exit_time),
                certificates: best.map(|s| s.certs.clone()).unwrap_or(Certificates {
                    transversal_at_both_ends: false,
                    interior_except_endpoints: false,
                    minimizing: false,
                    non_cut: false,
                }),
                best_score: best.map(|s| s.score).unwrap_or(f64::INFINITY),
            }
        }
    }
}

/// Search, at every receiver, for a direction whose geodesic certifies the
/// visibility condition: transversal at both ends, interior in between,
/// minimizing, and ending away from the cut set of the start point.
pub fn visibility_check(engine: &Engine, params: &VisibilityParams) -> Result<VisibilityReport> {
    engine.warm_receiver_fields()?;
    let entries: Vec<VisibilityEntry> = (0..engine.atlas.len())
        .into_par_iter()
        .map(|i| check_receiver(engine, i, params))
        .collect();
    let pass = entries.iter().all(|e| e.found_angle.is_some());
    Ok(VisibilityReport {
        pass,
        entries,
        params: params.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct JetDeviation {
    pub receiver: usize,
    pub order0: f64,
    pub order1: f64,
}

/// Compare two metrics and their first derivatives in a collar chart
/// (tangential arclength, normal offset) at every receiver. Both derivative
/// directions use central differences; the normal stencil needs the metrics
/// on a two-sided collar of the boundary.
pub fn boundary_jet_check(
    field1: &MetricField,
    field2: &MetricField,
    domain: &ParamDomain,
    receivers: &[(usize, f64)],
    step: f64,
) -> Result<Vec<JetDeviation>> {
    let chart_metric = |field: &MetricField, curve: usize, s0: f64, a: f64, b: f64| -> Result<Mat2> {
        let c = &domain.curves[curve];
        let s = s0 + a;
        let p = c.point_at(s) + c.normal_at(s) * b;
        // columns of the chart Jacobian
        let ds = step / 10.0;
        let e_s = (c.point_at(s + ds) + c.normal_at(s + ds) * b
            - (c.point_at(s - ds) + c.normal_at(s - ds) * b))
            / (2.0 * ds);
        let e_b = c.normal_at(s);
        let g = field.tensor(p).map_err(|e| {
            TtdError::Domain(format!("collar too thin for the stencil: {e}"))
        })?;
        let j = Mat2::from_columns(&[e_s, e_b]);
        Ok(j.transpose() * g * j)
    };

    receivers
        .iter()
        .map(|&(curve, s0)| {
            let comp = |f: &MetricField, a: f64, b: f64| chart_metric(f, curve, s0, a, b);
            let g0_1 = comp(field1, 0.0, 0.0)?;
            let g0_2 = comp(field2, 0.0, 0.0)?;
            let order0 = (g0_1 - g0_2).abs().max();

            // first derivatives, central in both chart directions
            let dt_1 = (comp(field1, step, 0.0)? - comp(field1, -step, 0.0)?) / (2.0 * step);
            let dt_2 = (comp(field2, step, 0.0)? - comp(field2, -step, 0.0)?) / (2.0 * step);
            let dn_1 = (comp(field1, 0.0, step)? - comp(field1, 0.0, -step)?) / (2.0 * step);
            let dn_2 = (comp(field2, 0.0, step)? - comp(field2, 0.0, -step)?) / (2.0 * step);
            let order1 = (dt_1 - dt_2).abs().max().max((dn_1 - dn_2).abs().max());
            Ok(JetDeviation {
                receiver: 0,
                order0,
                order1,
            })
        })
        .enumerate()
        .map(|(i, r)| {
            r.map(|mut d| {
                d.receiver = i;
                d
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectiveReport {
    /// Least-squares one-form per sample point.
    pub beta: Vec<[f64; 2]>,
    /// Largest defect of the projective relation over samples and indices.
    pub residual: f64,
}

/// Fit, per sample, the one-form beta minimizing the defect of
/// `Gamma - Gamma~ = delta (x) beta + beta (x) delta`, and report the worst
/// remaining defect.
pub fn projective_residual(
    field1: &MetricField,
    field2: &MetricField,
    patch: &[Point],
) -> Result<ProjectiveReport> {
    let mut beta_out = Vec::with_capacity(patch.len());
    let mut residual: f64 = 0.0;
    for &p in patch {
        let (_, c1) = field1.at(p)?;
        let (_, c2) = field2.at(p)?;
        // normal equations for the 8 linear conditions in beta
        let mut ata = [[0.0f64; 2]; 2];
        let mut atb = [0.0f64; 2];
        let kron = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let rhs = c1[k][i][j] - c2[k][i][j];
                    let coef = [
                        kron(k, i) * kron(j, 0) + kron(k, j) * kron(i, 0),
                        kron(k, i) * kron(j, 1) + kron(k, j) * kron(i, 1),
                    ];
                    for a in 0..2 {
                        atb[a] += coef[a] * rhs;
                        for b in 0..2 {
                            ata[a][b] += coef[a] * coef[b];
                        }
                    }
                }
            }
        }
        let det = ata[0][0] * ata[1][1] - ata[0][1] * ata[1][0];
        let beta = if det.abs() > 1e-300 {
            [
                (ata[1][1] * atb[0] - ata[0][1] * atb[1]) / det,
                (ata[0][0] * atb[1] - ata[1][0] * atb[0]) / det,
            ]
        } else {
            [0.0, 0.0]
        };
        let mut defect: f64 = 0.0;
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let fit = kron(k, i) * beta[j] + kron(k, j) * beta[i];
                    defect = defect.max((c1[k][i][j] - c2[k][i][j] - fit).abs());
                }
            }
        }
        residual = residual.max(defect);
        beta_out.push(beta);
    }
    Ok(ProjectiveReport {
        beta: beta_out,
        residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowVariation {
    pub variation: f64,
    pub truncated: bool,
}

/// Integrate the geodesic flow of `g` from each seed and track the relative
/// variation of I0 = (det g / det g~)^(2/3) * g~(v, v) along it. Plain RK4
/// with fixed step and no renormalization, so conserved quantities decay at
/// the integrator order.
pub fn matveev_flow_test(
    g: &MetricField,
    g_tilde: &MetricField,
    domain: &ParamDomain,
    seeds: &[(Point, Point)],
    flow_time: f64,
    dt: f64,
) -> Result<Vec<FlowVariation>> {
    let i0 = |x: Point, v: Point| -> Result<f64> {
        let gm = g.tensor(x)?;
        let gt = g_tilde.tensor(x)?;
        let det_g = gm[(0, 0)] * gm[(1, 1)] - gm[(0, 1)] * gm[(1, 0)];
        let det_t = gt[(0, 0)] * gt[(1, 1)] - gt[(0, 1)] * gt[(1, 0)];
        Ok((det_g / det_t).powf(2.0 / 3.0) * (gt * v).dot(&v))
    };
    let rhs = |x: Point, v: Point| -> Result<(Point, Point)> {
        let (_, gamma) = g.at(x)?;
        let mut acc = Point::zeros();
        for k in 0..2 {
            let mut a = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    a += gamma[k][i][j] * v[i] * v[j];
                }
            }
            acc[k] = -a;
        }
        Ok((v, acc))
    };

    seeds
        .iter()
        .map(|&(x0, v0)| {
            let v0 = g.normalize(x0, v0)?;
            let mut x = x0;
            let mut v = v0;
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut truncated = false;
            let steps = (flow_time / dt).ceil() as usize;
            for _ in 0..=steps {
                if domain.classify(x) == Region::Exterior {
                    truncated = true;
                    break;
                }
                let val = i0(x, v)?;
                lo = lo.min(val);
                hi = hi.max(val);
                let (k1x, k1v) = rhs(x, v)?;
                let (k2x, k2v) = rhs(x + k1x * (dt / 2.0), v + k1v * (dt / 2.0))?;
                let (k3x, k3v) = rhs(x + k2x * (dt / 2.0), v + k2v * (dt / 2.0))?;
                let (k4x, k4v) = rhs(x + k3x * dt, v + k3v * dt)?;
                x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0);
                v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
            }
            let mean = 0.5 * (lo + hi);
            Ok(FlowVariation {
                variation: if mean.abs() > 0.0 { (hi - lo) / mean.abs() } else { 0.0 },
                truncated,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};
    use crate::metric::ScalarField;

    fn disk() -> ParamDomain {
        build_domain(DomainSpec::Disk { r: 1.0 }, 0.01).unwrap()
    }

    #[test]
    fn identical_fields_have_zero_jet_deviation() {
        let d = disk();
        let f = MetricField::conformal_preset();
        let recv = vec![(0usize, 0.0), (0usize, 2.0)];
        let devs = boundary_jet_check(&f, &f, &d, &recv, 0.01).unwrap();
        for dev in devs {
            assert!(dev.order0 < 1e-10);
            assert!(dev.order1 < 1e-10);
        }
    }

    #[test]
    fn quadratic_normal_bump_agrees_to_first_order() {
        let d = disk();
        let flat = MetricField::euclidean();
        // (1 + 3 t^2) * euclidean with t the signed depth below the unit
        // circle; smooth across the boundary so the stencil sees no kink
        let bump = |p: Point| {
            let t = 1.0 - p.norm();
            1.0 + 3.0 * t * t
        };
        let f2 = MetricField::general(
            ScalarField::from_fn("bump", move |p| bump(p)),
            ScalarField::from_fn("zero", |_| 0.0),
            ScalarField::from_fn("bump", move |p| bump(p)),
            1e-5,
        );
        let recv = vec![(0usize, 0.5), (0usize, 3.0)];
        let h = 0.01;
        let devs = boundary_jet_check(&flat, &f2, &d, &recv, h).unwrap();
        for dev in devs {
            assert!(dev.order0 <= 10.0 * h * h, "order0 {}", dev.order0);
            assert!(dev.order1 <= 10.0 * h * h, "order1 {}", dev.order1);
        }
    }

    #[test]
    fn constant_scaling_is_flagged_at_order_zero() {
        let d = disk();
        let flat = MetricField::euclidean();
        let scaled = MetricField::general(
            ScalarField::from_fn("1.1", |_| 1.1),
            ScalarField::from_fn("0", |_| 0.0),
            ScalarField::from_fn("1.1", |_| 1.1),
            1e-5,
        );
        let devs = boundary_jet_check(&flat, &scaled, &d, &[(0usize, 1.0)], 0.01).unwrap();
        assert!((devs[0].order0 - 0.1).abs() < 1e-6);
    }

    #[test]
    fn projective_residual_identity_and_scaling() {
        let pts: Vec<Point> = (0..9)
            .map(|k| Point::new(-0.5 + 0.5 * (k % 3) as f64, -0.5 + 0.5 * (k / 3) as f64))
            .collect();
        let f = MetricField::conformal_preset();
        let rep = projective_residual(&f, &f, &pts).unwrap();
        assert!(rep.residual <= 1e-10);
        assert!(rep.beta.iter().all(|b| b[0].abs() < 1e-10 && b[1].abs() < 1e-10));

        // constant conformal scaling leaves the symbols unchanged
        let scaled = MetricField::general(
            ScalarField::from_fn("4", |_| 4.0),
            ScalarField::from_fn("0", |_| 0.0),
            ScalarField::from_fn("4", |_| 4.0),
            1e-5,
        );
        let rep2 = projective_residual(&MetricField::euclidean(), &scaled, &pts).unwrap();
        assert!(rep2.residual <= 1e-10);
    }

    #[test]
    fn projective_residual_flags_the_conformal_pair() {
        let pts: Vec<Point> = (0..9)
            .map(|k| Point::new(-0.5 + 0.5 * (k % 3) as f64, -0.5 + 0.5 * (k / 3) as f64))
            .collect();
        let rep = projective_residual(
            &MetricField::euclidean(),
            &MetricField::conformal_preset(),
            &pts,
        )
        .unwrap();
        assert!(rep.residual > 0.01, "residual {}", rep.residual);
    }

    #[test]
    fn projective_residual_is_swap_symmetric() {
        let pts = vec![Point::new(0.2, -0.1), Point::new(-0.4, 0.3)];
        let a = projective_residual(&MetricField::euclidean(), &MetricField::conformal_preset(), &pts)
            .unwrap();
        let b = projective_residual(&MetricField::conformal_preset(), &MetricField::euclidean(), &pts)
            .unwrap();
        assert!((a.residual - b.residual).abs() <= 1e-10);
        for (x, y) in a.beta.iter().zip(b.beta.iter()) {
            assert!((x[0] + y[0]).abs() <= 1e-10);
            assert!((x[1] + y[1]).abs() <= 1e-10);
        }
    }

    #[test]
    fn matveev_identity_and_scaling_are_invariant() {
        let d = disk();
        let g = MetricField::conformal_preset();
        let seeds = vec![
            (Point::new(0.1, 0.0), Point::new(0.3, 1.0)),
            (Point::new(-0.2, 0.1), Point::new(1.0, -0.5)),
        ];
        let same = matveev_flow_test(&g, &g, &d, &seeds, 0.5, 0.005).unwrap();
        for v in &same {
            assert!(v.variation <= 1e-6, "variation {}", v.variation);
        }
        let scaled = MetricField::general(
            ScalarField::from_fn("4(1+.3x)^2", |p| 4.0 * (1.0 + 0.3 * p.x).powi(2)),
            ScalarField::from_fn("0", |_| 0.0),
            ScalarField::from_fn("4(1+.3x)^2", |p| 4.0 * (1.0 + 0.3 * p.x).powi(2)),
            1e-5,
        );
        let sc = matveev_flow_test(&g, &scaled, &d, &seeds, 0.5, 0.005).unwrap();
        for v in &sc {
            assert!(v.variation <= 1e-6, "variation {}", v.variation);
        }
    }

    #[test]
    fn matveev_flags_nonequivalent_metrics() {
        let d = disk();
        let seeds = vec![(Point::new(0.1, -0.2), Point::new(0.6, 0.8))];
        let out = matveev_flow_test(
            &MetricField::euclidean(),
            &MetricField::conformal_preset(),
            &d,
            &seeds,
            0.5,
            0.005,
        )
        .unwrap();
        assert!(out[0].variation > 1e-3, "variation {}", out[0].variation);
    }

    #[test]
    fn matveev_variation_refines_at_integrator_order() {
        let d = disk();
        let g = MetricField::conformal_preset();
        let seeds = vec![(Point::new(0.05, 0.1), Point::new(1.0, 0.4))];
        let coarse = matveev_flow_test(&g, &g, &d, &seeds, 0.4, 0.02).unwrap()[0].variation;
        let fine = matveev_flow_test(&g, &g, &d, &seeds, 0.4, 0.01).unwrap()[0].variation;
        assert!(
            fine <= coarse / 8.0 + 1e-14,
            "coarse {coarse}, fine {fine}: refinement below order 3"
        );
    }
}
