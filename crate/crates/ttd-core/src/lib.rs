//! Forward synthesis and data-side reconstruction for travel-time-difference
//! measurements on compact 2-D Riemannian domains with boundary.
//!
//! The forward side builds a planar parameter domain, a metric tensor field on
//! it, and an intrinsic distance engine that respects non-convex boundaries.
//! From those it synthesizes, per hidden interior source, the matrix of
//! arrival-time differences seen by boundary receivers. The reconstruction
//! side consumes only the boundary discretization and those difference
//! matrices: it recovers boundary distances, classifies sources against the
//! boundary cut locus, builds boundary and interior coordinate charts, matches
//! datasets across a boundary relabeling, and recovers geodesic images and the
//! tangential boundary metric. A separate module checks geometric side
//! conditions: boundary visibility, metric jets on the boundary, projective
//! equivalence of connections, and invariance of the Matveev quantity along
//! the geodesic flow.

pub mod config;
pub mod dataset;
pub mod domain;
pub mod engine;
pub mod equivalence;
pub mod error;
pub mod expr;
pub mod geodesic;
pub mod metric;
pub mod reconstruction;
pub mod synthesis;

pub use error::{Result, TtdError};

/// Planar point. Everything runs in dimension 2; the column type keeps the
/// linear algebra explicit.
pub type Point = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
