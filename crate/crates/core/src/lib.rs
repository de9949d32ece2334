//! Minimal and robust solvers for the generalized pose-and-scale problem.
//!
//! Four world points `x_i` observed along four rays `p_i + s_i u_i` of a
//! generalized camera determine the similarity transform taking the points
//! onto the rays. The solvers here recover the depths `s_i` directly from
//! 4-point congruence constraints (ratios along the two "diagonals" and
//! ratios of edge lengths) and only then align the point pairs.

pub mod alignment;
pub mod congruence;
pub mod coplanar;
pub mod geometry;
pub mod pipeline;
pub mod quartic;
pub mod robust;
pub mod seeding;
pub mod synthbench;

pub use geometry::{
    AffineTransform, Correspondence, GeneralizedCamera, PinholeCamera, Ray, Rotation,
    SimilarityTransform, Vec2, Vec3,
};
