//! Forward synthesis of travel-time-difference records.
//!
//! Arrival times carry the per-receiver distances and the emission time as
//! separate fields; the difference matrix is computed from the distances
//! alone, so its bytes cannot depend on the emission time. A record stores
//! the difference vector against receiver 0 (the full antisymmetric matrix is
//! a rank-1 difference of that vector and is reconstructed on demand).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::domain::Region;
use crate::engine::Engine;
use crate::error::{Result, TtdError};
use crate::Point;

/// Arrival times of one source at every receiver: distances plus a shared
/// emission time. `values()` materializes d_i + s.
#[derive(Debug, Clone)]
pub struct ArrivalTimes {
    pub distances: Vec<f64>,
    pub emission: f64,
}

impl ArrivalTimes {
    pub fn values(&self) -> Vec<f64> {
        self.distances.iter().map(|d| d + self.emission).collect()
    }
}

/// Per-receiver arrival times for a source at `p` with emission time `s`.
pub fn arrival_times(engine: &Engine, p: Point, s: f64) -> Result<ArrivalTimes> {
    if engine.domain.classify(p) == Region::Exterior {
        return Err(TtdError::Domain(format!("source ({}, {}) is exterior", p.x, p.y)));
    }
    Ok(ArrivalTimes {
        distances: engine.distances_to_receivers(p)?,
        emission: s,
    })
}

/// One anonymized source: the difference vector v_i = d(p, z_i) - d(p, z_0).
#[derive(Debug, Clone, PartialEq)]
pub struct TtdRecord {
    pub id: String,
    pub v: Vec<f64>,
}

impl TtdRecord {
    /// Matrix entry D[i][j] = d(p, z_i) - d(p, z_j).
    pub fn dd(&self, i: usize, j: usize) -> f64 {
        self.v[i] - self.v[j]
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

/// Lattice pitch for stored difference values. Snapping entries to this grid
/// keeps sums and differences of a few entries exact in f64, so the matrix
/// identities (antisymmetry, cocycle) hold bit for bit; the rounding is ten
/// thousand times below any mesh-level tolerance.
pub const VALUE_LATTICE: f64 = 1.0 / 8_589_934_592.0; // 2^-33

fn snap(v: f64) -> f64 {
    (v / VALUE_LATTICE).round() * VALUE_LATTICE
}

/// Difference record from arrival times. Emission time cancels by
/// construction: only the distance vector enters.
pub fn ttd_matrix(id: &str, arrivals: &ArrivalTimes) -> Result<TtdRecord> {
    if arrivals.distances.is_empty() {
        return Err(TtdError::Data("empty arrival vector".into()));
    }
    if arrivals.distances.iter().any(|d| !d.is_finite()) {
        return Err(TtdError::Data("non-finite arrival time".into()));
    }
    let base = arrivals.distances[0];
    Ok(TtdRecord {
        id: id.to_string(),
        v: arrivals.distances.iter().map(|d| snap(d - base)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SourceSpec {
    Grid { pitch: f64 },
    Random { count: usize, seed: u64 },
    Explicit { points: Vec<Point> },
}

impl SourceSpec {
    pub fn parse(s: &str) -> Result<SourceSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["grid", p] => Ok(SourceSpec::Grid {
                pitch: p
                    .parse()
                    .map_err(|_| TtdError::Parameter(format!("bad grid pitch {p:?}")))?,
            }),
            ["random", c, seed] => Ok(SourceSpec::Random {
                count: c
                    .parse()
                    .map_err(|_| TtdError::Parameter(format!("bad count {c:?}")))?,
                seed: seed
                    .parse()
                    .map_err(|_| TtdError::Parameter(format!("bad seed {seed:?}")))?,
            }),
            _ => Err(TtdError::Parameter(format!(
                "source spec {s:?} is not grid:<pitch> or random:<count>:<seed>"
            ))),
        }
    }
}

/// Hidden ground truth, stored in the sealed dataset section only.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize, PartialEq)]
pub struct SealedTruth {
    pub positions: Vec<[f64; 2]>,
    pub emissions: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub records: Vec<TtdRecord>,
    pub sealed: SealedTruth,
    pub rejected: Vec<RejectedSource>,
}

#[derive(Debug, Clone)]
pub struct RejectedSource {
    pub point: Point,
    pub reason: String,
}

#[derive(Debug, Clone, Copy)]
pub struct SynthOptions {
    /// Gaussian noise on arrival times, standard deviation in time units.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { noise_sigma: 0.0, seed: 0 }
    }
}

fn sample_sources(engine: &Engine, spec: &SourceSpec) -> (Vec<Point>, Vec<RejectedSource>) {
    let mut rejected = Vec::new();
    let mut keep = Vec::new();
    match spec {
        SourceSpec::Grid { pitch } => {
            let (lo, hi) = engine.domain.bbox();
            let i0 = (lo.x / pitch).floor() as i64;
            let i1 = (hi.x / pitch).ceil() as i64;
            let j0 = (lo.y / pitch).floor() as i64;
            let j1 = (hi.y / pitch).ceil() as i64;
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let p = Point::new(i as f64 * pitch, j as f64 * pitch);
                    if engine.domain.classify(p) == Region::Interior {
                        keep.push(p);
                    }
                }
            }
        }
        SourceSpec::Random { count, seed } => {
            let mut rng = ChaCha12Rng::seed_from_u64(*seed);
            let (lo, hi) = engine.domain.bbox();
            let mut tries = 0usize;
            while keep.len() < *count && tries < count * 1000 {
                tries += 1;
                let p = Point::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
                if engine.domain.classify(p) == Region::Interior {
                    keep.push(p);
                }
            }
        }
        SourceSpec::Explicit { points } => {
            for &p in points {
                if engine.domain.classify(p) == Region::Interior {
                    keep.push(p);
                } else {
                    rejected.push(RejectedSource {
                        point: p,
                        reason: "source on or outside the boundary".into(),
                    });
                }
            }
        }
    }
    (keep, rejected)
}

/// Synthesize one record per interior source. Emission times are seeded and
/// deterministic; they never reach the difference vectors.
pub fn synth_dataset(engine: &Engine, spec: &SourceSpec, opts: SynthOptions) -> Result<Dataset> {
    let (points, rejected) = sample_sources(engine, spec);
    if points.is_empty() {
        return Err(TtdError::Data("no interior sources in the sampling spec".into()));
    }
    engine.warm_receiver_fields()?;

    let mut emissions = Vec::with_capacity(points.len());
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    for _ in &points {
        emissions.push(rng.gen_range(0.0..10.0));
    }

    let records: Result<Vec<TtdRecord>> = points
        .par_iter()
        .enumerate()
        .map(|(k, &p)| {
            let mut arr = arrival_times(engine, p, emissions[k])?;
            if opts.noise_sigma > 0.0 {
                // deterministic per record
                let mut nrng = ChaCha12Rng::seed_from_u64(opts.seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                for d in arr.distances.iter_mut() {
                    let (u1, u2): (f64, f64) = (nrng.gen_range(1e-12..1.0), nrng.gen_range(0.0..1.0));
                    let gauss = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                    *d += opts.noise_sigma * gauss;
                }
            }
            ttd_matrix(&format!("src-{k:06}"), &arr)
        })
        .collect();

    Ok(Dataset {
        records: records?,
        sealed: SealedTruth {
            positions: points.iter().map(|p| [p.x, p.y]).collect(),
            emissions,
        },
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_domain, BoundaryAtlas, DomainSpec};
    use crate::metric::MetricField;
    use std::sync::Arc;

    fn disk_engine() -> Engine {
        let dom = Arc::new(build_domain(DomainSpec::Disk { r: 1.0 }, 0.02).unwrap());
        let atlas = Arc::new(BoundaryAtlas::build(&dom, 16, &[]).unwrap());
        Engine::new(dom, Arc::new(MetricField::euclidean()), atlas).unwrap()
    }

    fn annulus_engine() -> Engine {
        let dom = Arc::new(build_domain(DomainSpec::Annulus { r_in: 1.0, r_out: 2.0 }, 0.02).unwrap());
        let atlas = Arc::new(BoundaryAtlas::build(&dom, 32, &[]).unwrap());
        Engine::new(dom, Arc::new(MetricField::euclidean()), atlas).unwrap()
    }

    #[test]
    fn center_arrivals_are_radii_plus_emission() {
        let e = disk_engine();
        let a = arrival_times(&e, Point::zeros(), 0.0).unwrap();
        for v in a.values() {
            assert!((v - 1.0).abs() < 2.0 * 0.02);
        }
        let b = arrival_times(&e, Point::zeros(), 5.0).unwrap();
        for v in b.values() {
            assert!((v - 6.0).abs() < 2.0 * 0.02);
        }
    }

    #[test]
    fn emission_time_cancels_bitwise() {
        let e = disk_engine();
        let p = Point::new(0.3, -0.2);
        let a = arrival_times(&e, p, 0.0).unwrap();
        let b = ArrivalTimes {
            distances: a.distances.clone(),
            emission: 7.0,
        };
        let ra = ttd_matrix("p", &a).unwrap();
        let rb = ttd_matrix("p", &b).unwrap();
        for (x, y) in ra.v.iter().zip(rb.v.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn record_invariants_hold_exactly() {
        let e = annulus_engine();
        let a = arrival_times(&e, Point::new(1.2, 0.0), 3.0).unwrap();
        let r = ttd_matrix("p", &a).unwrap();
        let m = r.len();
        for i in 0..m {
            assert_eq!(r.dd(i, i), 0.0);
            for j in 0..m {
                assert_eq!(r.dd(i, j), -r.dd(j, i));
                for k in (0..m).step_by(7) {
                    assert_eq!(r.dd(i, j) + r.dd(j, k), r.dd(i, k));
                }
            }
        }
    }

    #[test]
    fn center_record_is_nearly_zero() {
        let e = disk_engine();
        let a = arrival_times(&e, Point::zeros(), 0.0).unwrap();
        let r = ttd_matrix("c", &a).unwrap();
        for i in 0..r.len() {
            for j in 0..r.len() {
                assert!(r.dd(i, j).abs() < 4.0 * 0.02);
            }
        }
    }

    #[test]
    fn annulus_radial_differences() {
        let e = annulus_engine();
        let a = arrival_times(&e, Point::new(1.2, 0.0), 0.0).unwrap();
        // receiver nearest (1,0) on the inner curve and nearest (2,0) on the outer
        let inner = e.atlas.curve_ranges[1].clone();
        let outer = e.atlas.curve_ranges[0].clone();
        let near_inner = inner
            .clone()
            .min_by(|&i, &j| a.distances[i].partial_cmp(&a.distances[j]).unwrap())
            .unwrap();
        let near_outer = outer
            .clone()
            .min_by(|&i, &j| a.distances[i].partial_cmp(&a.distances[j]).unwrap())
            .unwrap();
        assert!((a.distances[near_inner] - 0.2).abs() < 2.0 * 0.02 + 0.01);
        assert!((a.distances[near_outer] - 0.8).abs() < 2.0 * 0.02 + 0.01);
        let r = ttd_matrix("p", &a).unwrap();
        assert!((r.dd(near_inner, near_outer) + 0.6).abs() < 4.0 * 0.02 + 0.02);
    }

    #[test]
    fn random_sampling_is_deterministic() {
        let e = disk_engine();
        let spec = SourceSpec::Random { count: 20, seed: 7 };
        let a = synth_dataset(&e, &spec, SynthOptions::default()).unwrap();
        let b = synth_dataset(&e, &spec, SynthOptions::default()).unwrap();
        assert_eq!(a.records.len(), 20);
        for (ra, rb) in a.records.iter().zip(b.records.iter()) {
            assert_eq!(ra.id, rb.id);
            for (x, y) in ra.v.iter().zip(rb.v.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(a.sealed, b.sealed);
    }

    #[test]
    fn boundary_sources_are_rejected_with_reason() {
        let e = disk_engine();
        let spec = SourceSpec::Explicit {
            points: vec![Point::new(0.2, 0.0), Point::new(1.0, 0.0), Point::new(2.0, 0.0)],
        };
        let ds = synth_dataset(&e, &spec, SynthOptions::default()).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.rejected.len(), 2);
    }

    #[test]
    fn grid_source_count_tracks_the_area() {
        let e = annulus_engine();
        let ds = synth_dataset(&e, &SourceSpec::Grid { pitch: 0.1 }, SynthOptions::default()).unwrap();
        // area pi*(4-1) over pitch^2, boundary-clipped
        let expect = std::f64::consts::PI * 3.0 / 0.01;
        let n = ds.records.len() as f64;
        assert!(
            (n - expect).abs() < 0.08 * expect,
            "got {n} records, expected about {expect}"
        );
    }

    #[test]
    fn source_spec_parsing() {
        assert_eq!(SourceSpec::parse("grid:0.1").unwrap(), SourceSpec::Grid { pitch: 0.1 });
        assert_eq!(
            SourceSpec::parse("random:100:7").unwrap(),
            SourceSpec::Random { count: 100, seed: 7 }
        );
        assert!(SourceSpec::parse("fibonacci:3").is_err());
    }
}
