//! Flow-curvature and flow-torsion invariant manifolds of autonomous vector
//! fields in two and three dimensions.
//!
//! The zero set of `m₂ = det[V, γ]` (planar fields) or of
//! `m₃ = γ̇·(γ∧V)` (spatial fields) is where trajectory curvature,
//! respectively torsion, vanishes. This crate evaluates these scalars with
//! exact derivatives, checks the Darboux identities they satisfy, integrates
//! trajectories, and extracts the zero sets as polylines or meshes.

pub mod jet;
pub mod models;
pub mod kinematics;
pub mod levelset;
pub mod manifold;
pub mod integrate;
pub mod cli;
