//! H-polytopes and the support-function calculus built on them.
//!
//! Every set lives in H-representation. Tightening, membership, inclusion
//! and Minkowski-sum tests all reduce to support LPs.

mod ops;
mod polytope;
mod sample;

pub use ops::{
    axis_directions, contains_point, inclusion_check, minkowski_support, pontryagin_diff, push_unique_direction,
    support, template_outer, InclusionReport, LinearMap, MinkowskiSum, PontryaginDiff, Singleton, SupportFunction,
};
pub use polytope::{BoxSet, HPolytope, GEOM_TOL, LP_TOL};
pub use sample::{hit_and_run, sample_box, vertices_2d};
