//! Unit-speed geodesic integration with boundary exit detection.
//!
//! State is (position, velocity); the velocity is renormalized to unit metric
//! length every few steps to hold the energy level without a stiff solver.
//! The first boundary crossing is refined by bisection on the step parameter.

use crate::domain::{ParamDomain, Region};
use crate::error::{Result, TtdError};
use crate::metric::MetricField;
use crate::Point;

#[derive(Debug, Clone)]
pub struct PathSample {
    pub t: f64,
    pub pos: Point,
    pub vel: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// First boundary crossing: exit parameter, exit point, Euclidean
    /// crossing angle against the boundary tangent, and whether the crossing
    /// was flagged as tangential.
    Exit {
        time: f64,
        point: Point,
        angle: f64,
        tangential: bool,
    },
    Tmax,
    Breakdown,
}

#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub samples: Vec<PathSample>,
    pub step: f64,
    pub terminated_by: Termination,
}

impl GeodesicPath {
    pub fn length(&self) -> f64 {
        match &self.terminated_by {
            Termination::Exit { time, .. } => *time,
            _ => self.samples.last().map(|s| s.t).unwrap_or(0.0),
        }
    }
}

/// Angle threshold below which a boundary crossing counts as tangential.
pub const GRAZING_ANGLE_TOL: f64 = 1e-3;

const RENORM_EVERY: usize = 10;

#[derive(Clone, Copy)]
struct State {
    x: Point,
    v: Point,
}

fn rhs(field: &MetricField, s: State) -> Option<State> {
    let (_, gamma) = field.at(s.x).ok()?;
    let mut acc = Point::zeros();
    for k in 0..2 {
        let mut a = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                a += gamma[k][i][j] * s.v[i] * s.v[j];
            }
        }
        acc[k] = -a;
    }
    Some(State { x: s.v, v: acc })
}

fn rk4_step(field: &MetricField, s: State, dt: f64) -> Option<State> {
    let k1 = rhs(field, s)?;
    let k2 = rhs(
        field,
        State {
            x: s.x + k1.x * (dt / 2.0),
            v: s.v + k1.v * (dt / 2.0),
        },
    )?;
    let k3 = rhs(
        field,
        State {
            x: s.x + k2.x * (dt / 2.0),
            v: s.v + k2.v * (dt / 2.0),
        },
    )?;
    let k4 = rhs(
        field,
        State {
            x: s.x + k3.x * dt,
            v: s.v + k3.v * dt,
        },
    )?;
    Some(State {
        x: s.x + (k1.x + k2.x * 2.0 + k3.x * 2.0 + k4.x) * (dt / 6.0),
        v: s.v + (k1.v + k2.v * 2.0 + k3.v * 2.0 + k4.v) * (dt / 6.0),
    })
}

fn crossing_angle(domain: &ParamDomain, p: Point, v: Point) -> f64 {
    let (ci, s, _) = domain.nearest_boundary(p);
    let t = domain.curves[ci].tangent_at(s);
    let vn = v.norm();
    if vn == 0.0 {
        return 0.0;
    }
    let cosang = (v.dot(&t) / vn).clamp(-1.0, 1.0);
    // angle against the tangent line, in [0, pi/2]
    let a = cosang.abs().acos();
    a.min(std::f64::consts::FRAC_PI_2)
}

/// Integrate the geodesic from `x` with initial unit velocity `v` until the
/// first boundary crossing or `tmax`. `x` must lie in the closed region and
/// `|v|_g` must be 1 within 1e-9.
pub fn shoot_geodesic(
    field: &MetricField,
    domain: &ParamDomain,
    x: Point,
    v: Point,
    tmax: f64,
) -> Result<GeodesicPath> {
    if domain.classify(x) == Region::Exterior {
        return Err(TtdError::Domain(format!("start point ({}, {}) is exterior", x.x, x.y)));
    }
    let speed = field.norm_sq(x, v)?.sqrt();
    if (speed - 1.0).abs() > 1e-9 {
        return Err(TtdError::Parameter(format!(
            "initial velocity must be unit length in the metric, |v|_g = {speed}"
        )));
    }

    let dt = domain.h / 2.0;
    let mut samples = Vec::with_capacity((tmax / dt) as usize + 2);
    let mut s = State { x, v };
    let mut t = 0.0;
    samples.push(PathSample { t, pos: s.x, vel: s.v });

    // A start on the boundary moving outward (or tangent to a convex piece)
    // leaves immediately: probe one refined step.
    if domain.classify(x) == Region::Boundary {
        let probe_dt = domain.h / 100.0;
        if let Some(probe) = rk4_step(field, s, probe_dt) {
            if !domain.contains(probe.x) {
                let angle = crossing_angle(domain, s.x, s.v);
                return Ok(GeodesicPath {
                    samples,
                    step: dt,
                    terminated_by: Termination::Exit {
                        time: 0.0,
                        point: s.x,
                        angle,
                        tangential: angle < GRAZING_ANGLE_TOL,
                    },
                });
            }
        }
    }

    let mut since_renorm = 0;
    while t < tmax {
        let step = dt.min(tmax - t);
        let next = match rk4_step(field, s, step) {
            Some(n) if n.x.iter().all(|c| c.is_finite()) && n.v.norm() < 1e6 => n,
            _ => {
                return Ok(GeodesicPath {
                    samples,
                    step: dt,
                    terminated_by: Termination::Breakdown,
                })
            }
        };
        if !domain.contains(next.x) {
            // bisect the crossing; well below the h/100 resolution floor
            let mut lo = 0.0;
            let mut hi = step;
            let target = (domain.h / 100.0).min(1e-9);
            while hi - lo > target {
                let mid = 0.5 * (lo + hi);
                match rk4_step(field, s, mid) {
                    Some(m) if domain.contains(m.x) => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
            }
            let at_exit = rk4_step(field, s, lo).unwrap_or(s);
            let time = t + lo;
            let angle = crossing_angle(domain, at_exit.x, at_exit.v);
            samples.push(PathSample {
                t: time,
                pos: at_exit.x,
                vel: at_exit.v,
            });
            return Ok(GeodesicPath {
                samples,
                step: dt,
                terminated_by: Termination::Exit {
                    time,
                    point: at_exit.x,
                    angle,
                    tangential: angle < GRAZING_ANGLE_TOL,
                },
            });
        }
        s = next;
        t += step;
        since_renorm += 1;
        if since_renorm >= RENORM_EVERY {
            since_renorm = 0;
            if let Ok(u) = field.normalize(s.x, s.v) {
                s.v = u;
            }
        }
        samples.push(PathSample { t, pos: s.x, vel: s.v });
    }
    Ok(GeodesicPath {
        samples,
        step: dt,
        terminated_by: Termination::Tmax,
    })
}

/// First positive boundary-crossing parameter; infinity when the budget
/// `tmax` is exhausted first. Also reports the tangential-grazing flag.
pub fn exit_time(
    field: &MetricField,
    domain: &ParamDomain,
    x: Point,
    v: Point,
    tmax: f64,
) -> Result<(f64, bool)> {
    let path = shoot_geodesic(field, domain, x, v, tmax)?;
    match path.terminated_by {
        Termination::Exit { time, tangential, .. } => Ok((time, tangential)),
        Termination::Tmax => Ok((f64::INFINITY, false)),
        Termination::Breakdown => Err(TtdError::Geometry("geodesic breakdown before exit".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};

    fn disk() -> ParamDomain {
        build_domain(DomainSpec::Disk { r: 1.0 }, 0.01).unwrap()
    }

    fn annulus() -> ParamDomain {
        build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.01).unwrap()
    }

    #[test]
    fn diameter_of_the_disk() {
        let f = MetricField::euclidean();
        let d = disk();
        let (t, _) = exit_time(&f, &d, Point::new(1.0, 0.0), Point::new(-1.0, 0.0), 5.0).unwrap();
        assert!((t - 2.0).abs() < 1e-6, "exit parameter {t}");
        let path = shoot_geodesic(&f, &d, Point::new(1.0, 0.0), Point::new(-1.0, 0.0), 5.0).unwrap();
        match path.terminated_by {
            Termination::Exit { point, .. } => {
                assert!((point - Point::new(-1.0, 0.0)).norm() < 1e-4);
            }
            other => panic!("expected exit, got {other:?}"),
        }
    }

    #[test]
    fn straight_lines_stay_straight() {
        let f = MetricField::euclidean();
        let d = disk();
        let x = Point::new(-0.9, 0.05);
        let v = Point::new(0.8, 0.6).normalize();
        let path = shoot_geodesic(&f, &d, x, v, 5.0).unwrap();
        let len = path.length();
        for s in &path.samples {
            let chord_point = x + v * s.t;
            assert!((s.pos - chord_point).norm() <= 1e-8 * len.max(1.0));
        }
    }

    #[test]
    fn boundary_tangent_start_on_the_disk_exits_immediately() {
        let f = MetricField::euclidean();
        let d = disk();
        let (t, _) = exit_time(&f, &d, Point::new(1.0, 0.0), Point::new(0.0, 1.0), 5.0).unwrap();
        assert_eq!(t, 0.0);
    }

    #[test]
    fn annulus_chord_from_the_inner_circle() {
        let f = MetricField::euclidean();
        let d = annulus();
        // tangent to the hole: a straight chord to the outer circle
        let path =
            shoot_geodesic(&f, &d, Point::new(1.0, 0.0), Point::new(0.0, 1.0), 5.0).unwrap();
        match path.terminated_by {
            Termination::Exit { time, point, .. } => {
                assert!((time - 3f64.sqrt()).abs() < 1e-6, "length {time}");
                assert!((point - Point::new(1.0, 3f64.sqrt())).norm() < 1e-4);
            }
            other => panic!("expected exit, got {other:?}"),
        }
    }

    #[test]
    fn annulus_radial_exit() {
        let f = MetricField::euclidean();
        let d = annulus();
        let (t, _) = exit_time(&f, &d, Point::new(1.5, 0.0), Point::new(1.0, 0.0), 5.0).unwrap();
        assert!((t - 0.5).abs() < 1e-6);
    }

    #[test]
    fn unit_speed_holds_along_conformal_paths() {
        let f = MetricField::conformal_preset();
        let d = disk();
        let v0 = f.normalize(Point::zeros(), Point::new(0.0, 1.0)).unwrap();
        let path = shoot_geodesic(&f, &d, Point::zeros(), v0, 5.0).unwrap();
        assert!(path.samples.len() > 10);
        for s in &path.samples {
            let speed = f.norm_sq(s.pos, s.vel).unwrap().sqrt();
            assert!((speed - 1.0).abs() < 1e-6, "speed {speed} at t={}", s.t);
        }
        // graded-index bending: rays curve toward the larger factor, here +x
        match path.terminated_by {
            Termination::Exit { point, .. } => assert!(point.x > 0.0, "exit at {point:?}"),
            other => panic!("expected exit, got {other:?}"),
        }
    }

    #[test]
    fn non_unit_velocity_is_rejected() {
        let f = MetricField::euclidean();
        let d = disk();
        let err = shoot_geodesic(&f, &d, Point::zeros(), Point::new(2.0, 0.0), 1.0);
        assert!(matches!(err, Err(TtdError::Parameter(_))));
    }

    #[test]
    fn tmax_budget_gives_infinite_exit_time() {
        let f = MetricField::euclidean();
        let d = disk();
        let (t, _) = exit_time(&f, &d, Point::zeros(), Point::new(1.0, 0.0), 0.25).unwrap();
        assert!(t.is_infinite());
    }
}
