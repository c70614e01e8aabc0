//! Run configuration: domain, metric, receivers, source sampling, seeds and
//! the tolerance knobs used by the reconstruction and equivalence passes.
//! Unknown keys are rejected; tolerances must stay positive.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{build_domain, BoundaryAtlas, DomainSpec, ParamDomain};
use crate::engine::Engine;
use crate::error::{Result, TtdError};
use crate::metric::{MetricField, MetricSpec};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub domain: DomainSpec,
    pub metric: MetricSpec,
    pub h: f64,
    pub receivers: usize,
    /// Arclength offset of the first receiver on each curve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub receiver_offsets: Vec<f64>,
    /// Source sampling: "grid:<pitch>" or "random:<count>:<seed>".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub tolerances: ToleranceOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// Optional per-run tolerance overrides; anything unset falls back to the
/// defaults derived from `h`.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grad_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cond_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_radius_mult: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jac_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smooth_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub angle_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noncut_max: Option<f64>,
}

/// Resolved tolerance set. Defaults are small multiples of the dominant
/// O(h) graph-distance error.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub h: f64,
    /// Closest-boundary multiplicity ties.
    pub tie_tol: f64,
    /// Boundary-membership threshold on sup f_p.
    pub boundary_tol: f64,
    /// Gradient match tolerance for geodesic-image recovery.
    pub grad_tol: f64,
    /// Dataset matching residual scale.
    pub match_tol: f64,
    /// Interior-chart condition number ceiling.
    pub cond_max: f64,
    /// Chart patch radius as a multiple of receiver spacing.
    pub patch_radius_mult: f64,
    /// Boundary-chart Jacobian floor (normal-incidence rejection).
    pub jac_tol: f64,
    /// Second-difference bound certifying smooth recovered distance.
    pub smooth_max: f64,
    /// Tangential-grazing angle.
    pub angle_tol: f64,
    /// Second-difference bound for the non-cut certificate.
    pub noncut_max: f64,
}

impl Tolerances {
    pub fn for_pitch(h: f64) -> Tolerances {
        Tolerances {
            h,
            tie_tol: 3.0 * h,
            boundary_tol: 6.0 * h,
            grad_tol: 0.05,
            match_tol: 8.0 * h,
            cond_max: 50.0,
            patch_radius_mult: 10.0,
            jac_tol: 0.05,
            smooth_max: 10.0,
            angle_tol: 1e-3,
            noncut_max: 10.0,
        }
    }

    /// Tie tolerance for the cut-locus classifier. A source at offset d from
    /// the cut set sees its two competing boundary distances split by 2d, so
    /// the classifier tube matches a d-tube when this is twice `tie_tol`.
    pub fn cut_tie_tol(&self) -> f64 {
        2.0 * self.tie_tol
    }
}

impl RunConfig {
    pub fn from_json(src: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(src)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(TtdError::Parameter(format!(
                "unsupported config schema_version {}",
                self.schema_version
            )));
        }
        if !(self.h > 0.0) {
            return Err(TtdError::Parameter("h must be positive".into()));
        }
        if self.receivers == 0 {
            return Err(TtdError::Parameter("receivers must be positive".into()));
        }
        if self.noise_sigma < 0.0 {
            return Err(TtdError::Parameter("noise_sigma must be nonnegative".into()));
        }
        let t = self.resolve_tolerances();
        for (name, v) in [
            ("tie_tol", t.tie_tol),
            ("boundary_tol", t.boundary_tol),
            ("grad_tol", t.grad_tol),
            ("match_tol", t.match_tol),
            ("cond_max", t.cond_max),
            ("patch_radius_mult", t.patch_radius_mult),
            ("jac_tol", t.jac_tol),
            ("smooth_max", t.smooth_max),
            ("angle_tol", t.angle_tol),
            ("noncut_max", t.noncut_max),
        ] {
            if !(v > 0.0) {
                return Err(TtdError::Parameter(format!("tolerance {name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn resolve_tolerances(&self) -> Tolerances {
        let mut t = Tolerances::for_pitch(self.h);
        let o = &self.tolerances;
        if let Some(v) = o.tie_tol {
            t.tie_tol = v;
        }
        if let Some(v) = o.boundary_tol {
            t.boundary_tol = v;
        }
        if let Some(v) = o.grad_tol {
            t.grad_tol = v;
        }
        if let Some(v) = o.match_tol {
            t.match_tol = v;
        }
        if let Some(v) = o.cond_max {
            t.cond_max = v;
        }
        if let Some(v) = o.patch_radius_mult {
            t.patch_radius_mult = v;
        }
        if let Some(v) = o.jac_tol {
            t.jac_tol = v;
        }
        if let Some(v) = o.smooth_max {
            t.smooth_max = v;
        }
        if let Some(v) = o.angle_tol {
            t.angle_tol = v;
        }
        if let Some(v) = o.noncut_max {
            t.noncut_max = v;
        }
        t
    }

    pub fn build_domain(&self) -> Result<ParamDomain> {
        build_domain(self.domain.clone(), self.h)
    }

    pub fn build_engine(&self) -> Result<Engine> {
        let domain = Arc::new(self.build_domain()?);
        let field = Arc::new(MetricField::from_spec(&self.metric, self.h)?);
        let atlas = Arc::new(BoundaryAtlas::build(&domain, self.receivers, &self.receiver_offsets)?);
        Engine::new(domain, field, atlas)
    }

    /// Hash of the canonical config serialization; embedded in datasets and
    /// reports so pipeline stages can be cross-checked.
    pub fn provenance(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(crate::dataset::provenance_hash(&bytes))
    }
}
