//! Riemannian metric fields on the parameter plane.
//!
//! A field is Euclidean, conformal (`g = c(x)^2 I`), or general symmetric
//! (`g11, g12, g22` as scalar fields). Derivatives of the components feed the
//! Christoffel symbols; they come either from analytic gradients attached to
//! the scalar fields or from central differences with step `delta_g`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{BoundaryAtlas, ParamDomain};
use crate::error::{Result, TtdError};
use crate::expr::Expr;
use crate::{Mat2, Point};

type FieldFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(Point) -> Point + Send + Sync>;

/// Scalar field over the plane, with an optional analytic gradient.
#[derive(Clone)]
pub struct ScalarField {
    f: FieldFn,
    grad: Option<GradFn>,
    label: String,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.label)
    }
}

impl ScalarField {
    pub fn from_expr(src: &str) -> Result<ScalarField> {
        let e = Expr::parse(src)?;
        Ok(ScalarField {
            f: Arc::new(move |p: Point| e.eval(p.x, p.y)),
            grad: None,
            label: src.to_string(),
        })
    }

    pub fn from_fn<F>(label: &str, f: F) -> ScalarField
    where
        F: Fn(Point) -> f64 + Send + Sync + 'static,
    {
        ScalarField {
            f: Arc::new(f),
            grad: None,
            label: label.to_string(),
        }
    }

    pub fn with_grad<G>(mut self, grad: G) -> ScalarField
    where
        G: Fn(Point) -> Point + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    pub fn eval(&self, p: Point) -> f64 {
        (self.f)(p)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn gradient(&self, p: Point, step: f64) -> Point {
        if let Some(g) = &self.grad {
            return g(p);
        }
        let fx = ((self.f)(p + Point::new(step, 0.0)) - (self.f)(p - Point::new(step, 0.0)))
            / (2.0 * step);
        let fy = ((self.f)(p + Point::new(0.0, step)) - (self.f)(p - Point::new(0.0, step)))
            / (2.0 * step);
        Point::new(fx, fy)
    }
}

#[derive(Clone, Debug)]
pub enum MetricKind {
    Euclidean,
    Conformal(ScalarField),
    General {
        g11: ScalarField,
        g12: ScalarField,
        g22: ScalarField,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MetricSpec {
    Euclidean,
    Conformal { c: String },
    General { g11: String, g12: String, g22: String },
}

#[derive(Clone, Debug)]
pub struct MetricField {
    pub kind: MetricKind,
    /// Central-difference step for component derivatives when no analytic
    /// gradient is available.
    pub delta_g: f64,
}

/// Christoffel symbols: `gamma[k][i][j]`.
pub type Christoffel = [[[f64; 2]; 2]; 2];

impl MetricField {
    pub fn euclidean() -> MetricField {
        MetricField {
            kind: MetricKind::Euclidean,
            delta_g: 1e-5,
        }
    }

    pub fn conformal(c: ScalarField, delta_g: f64) -> MetricField {
        MetricField {
            kind: MetricKind::Conformal(c),
            delta_g,
        }
    }

    pub fn general(g11: ScalarField, g12: ScalarField, g22: ScalarField, delta_g: f64) -> MetricField {
        MetricField {
            kind: MetricKind::General { g11, g12, g22 },
            delta_g,
        }
    }

    pub fn from_spec(spec: &MetricSpec, h: f64) -> Result<MetricField> {
        let delta_g = (h / 10.0).max(1e-5);
        Ok(match spec {
            MetricSpec::Euclidean => MetricField::euclidean(),
            MetricSpec::Conformal { c } => MetricField::conformal(ScalarField::from_expr(c)?, delta_g),
            MetricSpec::General { g11, g12, g22 } => MetricField::general(
                ScalarField::from_expr(g11)?,
                ScalarField::from_expr(g12)?,
                ScalarField::from_expr(g22)?,
                delta_g,
            ),
        })
    }

    /// The conformal preset `c = 1 + 0.3 x` with its analytic gradient.
    pub fn conformal_preset() -> MetricField {
        let c = ScalarField::from_fn("1+0.3*x", |p| 1.0 + 0.3 * p.x)
            .with_grad(|_| Point::new(0.3, 0.0));
        MetricField::conformal(c, 1e-5)
    }

    /// Round unit sphere in stereographic coordinates: `c = 2 / (1 + |x|^2)`.
    /// A disk of radius greater than 1 covers more than the half sphere.
    pub fn sphere_preset() -> MetricField {
        let c = ScalarField::from_fn("2/(1+x^2+y^2)", |p| 2.0 / (1.0 + p.norm_squared()))
            .with_grad(|p| {
                let d = 1.0 + p.norm_squared();
                Point::new(-4.0 * p.x / (d * d), -4.0 * p.y / (d * d))
            });
        MetricField::conformal(c, 1e-5)
    }

    /// Metric tensor at `p`. Errors when the evaluation is not symmetric
    /// positive definite.
    pub fn tensor(&self, p: Point) -> Result<Mat2> {
        let g = match &self.kind {
            MetricKind::Euclidean => Mat2::identity(),
            MetricKind::Conformal(c) => {
                let v = c.eval(p);
                Mat2::identity() * (v * v)
            }
            MetricKind::General { g11, g12, g22 } => {
                let a = g11.eval(p);
                let b = g12.eval(p);
                let d = g22.eval(p);
                Mat2::new(a, b, b, d)
            }
        };
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        if !(g[(0, 0)] > 0.0 && det > 0.0) || !det.is_finite() {
            return Err(TtdError::Metric {
                x: p.x,
                y: p.y,
                reason: format!("tensor not positive definite (g11={}, det={det})", g[(0, 0)]),
            });
        }
        Ok(g)
    }

    /// Component derivatives `dg[l][i][j] = d g_ij / d x^l`.
    fn tensor_derivatives(&self, p: Point) -> [[[f64; 2]; 2]; 2] {
        let mut dg = [[[0.0; 2]; 2]; 2];
        match &self.kind {
            MetricKind::Euclidean => {}
            MetricKind::Conformal(c) => {
                let v = c.eval(p);
                let grad = c.gradient(p, self.delta_g);
                for l in 0..2 {
                    let s = 2.0 * v * grad[l];
                    dg[l][0][0] = s;
                    dg[l][1][1] = s;
                }
            }
            MetricKind::General { g11, g12, g22 } => {
                let d11 = g11.gradient(p, self.delta_g);
                let d12 = g12.gradient(p, self.delta_g);
                let d22 = g22.gradient(p, self.delta_g);
                for l in 0..2 {
                    dg[l][0][0] = d11[l];
                    dg[l][0][1] = d12[l];
                    dg[l][1][0] = d12[l];
                    dg[l][1][1] = d22[l];
                }
            }
        }
        dg
    }

    /// Metric and Christoffel symbols at `p`.
    pub fn at(&self, p: Point) -> Result<(Mat2, Christoffel)> {
        let g = self.tensor(p)?;
        if matches!(self.kind, MetricKind::Euclidean) {
            return Ok((g, [[[0.0; 2]; 2]; 2]));
        }
        let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
        let ginv = Mat2::new(g[(1, 1)], -g[(0, 1)], -g[(1, 0)], g[(0, 0)]) / det;
        let dg = self.tensor_derivatives(p);
        let mut gamma = [[[0.0; 2]; 2]; 2];
        for k in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = 0.0;
                    for l in 0..2 {
                        s += ginv[(k, l)] * (dg[i][l][j] + dg[j][l][i] - dg[l][i][j]);
                    }
                    gamma[k][i][j] = 0.5 * s;
                }
            }
        }
        Ok((g, gamma))
    }

    /// Squared metric norm of a vector at `p`.
    pub fn norm_sq(&self, p: Point, v: Point) -> Result<f64> {
        let g = self.tensor(p)?;
        Ok((g * v).dot(&v))
    }

    /// Length of the straight segment from `a` to `b` under the metric
    /// (Simpson in the segment parameter).
    pub fn segment_length(&self, a: Point, b: Point) -> f64 {
        let d = b - a;
        let w = |p: Point| {
            let g = match self.tensor(p) {
                Ok(g) => g,
                Err(_) => return f64::INFINITY,
            };
            (g * d).dot(&d).max(0.0).sqrt()
        };
        match &self.kind {
            MetricKind::Euclidean => d.norm(),
            _ => (w(a) + 4.0 * w(a + d * 0.5) + w(b)) / 6.0,
        }
    }

    /// Renormalize `v` to unit metric length at `p`.
    pub fn normalize(&self, p: Point, v: Point) -> Result<Point> {
        let n = self.norm_sq(p, v)?.sqrt();
        if n <= 0.0 || !n.is_finite() {
            return Err(TtdError::Parameter("cannot normalize zero vector".into()));
        }
        Ok(v / n)
    }
}

/// Tangential metric value `g(T, T)` at every receiver, where `T` is the unit
/// Euclidean boundary tangent.
pub fn boundary_metric_restriction(
    field: &MetricField,
    domain: &ParamDomain,
    atlas: &BoundaryAtlas,
) -> Result<Vec<f64>> {
    atlas
        .receivers
        .iter()
        .map(|r| {
            let t = domain.curves[r.curve].tangent_at(r.s);
            field.norm_sq(r.pos, t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, DomainSpec};

    #[test]
    fn euclidean_is_flat() {
        let f = MetricField::euclidean();
        let (g, gamma) = f.at(Point::new(0.3, -0.7)).unwrap();
        assert_eq!(g, Mat2::identity());
        assert_eq!(gamma, [[[0.0; 2]; 2]; 2]);
    }

    #[test]
    fn conformal_christoffels_match_the_analytic_form() {
        // For g = c^2 I the symbols are built from d(ln c); at the origin with
        // c = 1 + 0.3 x that gives gamma^1_11 = 0.3, gamma^1_22 = -0.3,
        // gamma^2_12 = 0.3.
        let f = MetricField::conformal_preset();
        let (g, gamma) = f.at(Point::zeros()).unwrap();
        assert!((g - Mat2::identity()).norm() < 1e-12);
        assert!((gamma[0][0][0] - 0.3).abs() < 1e-12);
        assert!((gamma[0][1][1] + 0.3).abs() < 1e-12);
        assert!((gamma[1][0][1] - 0.3).abs() < 1e-12);
        assert!((gamma[1][0][0]).abs() < 1e-12);
    }

    #[test]
    fn sampled_scheme_agrees_with_analytic() {
        let analytic = MetricField::conformal_preset();
        let sampled = MetricField::conformal(
            ScalarField::from_expr("1+0.3*x").unwrap(),
            1e-5,
        );
        for p in [Point::new(0.0, 0.0), Point::new(1.1, -0.4), Point::new(-0.8, 0.9)] {
            let (_, ga) = analytic.at(p).unwrap();
            let (_, gs) = sampled.at(p).unwrap();
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        assert!(
                            (ga[k][i][j] - gs[k][i][j]).abs() < 10.0 * 1e-5 * 1e-5 + 1e-12,
                            "mismatch at {p:?} [{k}][{i}][{j}]"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_symmetry_is_exact() {
        let f = MetricField::conformal(ScalarField::from_expr("1+0.3*x").unwrap(), 1e-5);
        for p in [Point::new(0.2, 0.1), Point::new(-1.0, 2.0)] {
            let (_, gamma) = f.at(p).unwrap();
            for k in 0..2 {
                assert_eq!(gamma[k][0][1], gamma[k][1][0]);
            }
        }
    }

    #[test]
    fn spd_violation_reports_the_point() {
        let f = MetricField::conformal(ScalarField::from_fn("zero", |_| 0.0), 1e-5);
        match f.tensor(Point::new(2.0, 3.0)) {
            Err(TtdError::Metric { x, y, .. }) => {
                assert_eq!((x, y), (2.0, 3.0));
            }
            other => panic!("expected metric error, got {other:?}"),
        }
    }

    #[test]
    fn spd_on_probe_grid_for_presets() {
        let presets = [
            MetricField::euclidean(),
            MetricField::conformal_preset(),
            MetricField::sphere_preset(),
        ];
        for f in &presets {
            for i in 0..100 {
                for j in 0..100 {
                    let p = Point::new(-2.0 + 4.0 * i as f64 / 99.0, -2.0 + 4.0 * j as f64 / 99.0);
                    f.tensor(p).unwrap();
                }
            }
        }
    }

    #[test]
    fn boundary_restriction_values() {
        let disk = build_domain(DomainSpec::Disk { r: 1.0 }, 0.01).unwrap();
        let atlas = BoundaryAtlas::build(&disk, 16, &[]).unwrap();

        let flat = boundary_metric_restriction(&MetricField::euclidean(), &disk, &atlas).unwrap();
        assert!(flat.iter().all(|v| (v - 1.0).abs() < 1e-12));

        let conf = boundary_metric_restriction(&MetricField::conformal_preset(), &disk, &atlas).unwrap();
        for (r, v) in atlas.receivers.iter().zip(conf.iter()) {
            let c = 1.0 + 0.3 * r.pos.x;
            assert!((v - c * c).abs() < 1e-12);
        }

        let ann = build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.01).unwrap();
        let atlas2 = BoundaryAtlas::build(&ann, 32, &[]).unwrap();
        let flat2 = boundary_metric_restriction(&MetricField::euclidean(), &ann, &atlas2).unwrap();
        let inner = atlas2.curve_ranges[1].clone();
        assert!(flat2[inner].iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
}
