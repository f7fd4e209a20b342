//! Weighted relative capacities on uniform grids.
//!
//! The crate computes the distance-weighted relative capacity
//! `cap_{p,β}(E, Ω) = inf ∫_Ω |∇u|^p d(x, Ω^c)^β dx` over compactly supported
//! test functions `u ≥ 1` on `E`, and uses it to probe the chain of
//! estimates that links weighted Hardy–Sobolev inequalities, Whitney-ball
//! capacity bounds and quasiadditivity of capacity over Whitney covers.
//!
//! Module map:
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`geometry`] | shapes, grid domains, exact distance fields, ball measures |
//! | [`whitney`] | greedy Whitney ball covers and Lipschitz partitions of unity |
//! | [`family`] | seeded condenser families: balls, unions, clusters, sublevel sets |
//! | [`capacity`] | discrete weighted p-energy and its projected minimization |
//! | [`hardy`] | Hardy–Sobolev functionals, Maz'ya ratios, truncation chains |
//! | [`maximal`] | local maximal operator and discrete convolution |
//! | [`quasiadd`] | quasiadditivity scans, ball bounds and the boundary-collapse example |
//!
//! The crate is `no_std` (it needs `alloc`). The `parallel` feature pulls in
//! `std` and rayon to spread independent capacity solves over threads;
//! results are aggregated in input order either way.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod capacity;
pub mod error;
pub mod family;
pub mod geometry;
pub mod hardy;
pub mod maximal;
pub mod quasiadd;
pub mod whitney;

mod math;
mod par;
mod transform;

pub use capacity::{
    ball_test_upper_bound, discrete_gradient, energy, lipschitz_upper_bound, solve_capacity,
    CapacityProblem, CapacityResult, CellSet, Field, SolverConfig, SolverStats,
};
pub use error::{Error, Result};
pub use geometry::{
    build_domain, distance_to_set, measure_of_ball, DistanceWeight, GridDomain, MeasureMode,
    ShapeSpec,
};
pub use hardy::{
    hs_lhs, hs_rhs, interpolation_check, mazya_scan, rayleigh_lower_bound, truncation_chain_check,
    HSParams, IntegrandMode,
};
pub use maximal::{
    discrete_convolution, local_maximal, maximal_bound_check, upper_gradient_check,
    ConvolutionConfig, MaximalConfig,
};
pub use quasiadd::{
    ball_bounds_scan, equivalence_experiment, example_62_sequence, quasiadd_scan,
    weak_quasiadd_scan,
};
pub use whitney::{
    build_cover, build_cover_with, build_partition, verify_cover, PartitionOfUnity, WhitneyCover,
};
