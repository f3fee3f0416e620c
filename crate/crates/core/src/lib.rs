//! Numerical toolkit for contact Hamiltonian dynamics on explicit charts.
//!
//! The crate builds contact vector fields and flows from Hamiltonians,
//! manipulates contact dynamical systems as a group (composition, inversion,
//! conjugation), measures them with oscillation+mean norms and C0 metrics,
//! reparameterizes and regularizes isotopies, runs the synthesis pipeline
//! that rebuilds a system with the same time-one map under sup-norm control,
//! and houses the non-smooth rotation family with its quantitative
//! certificates.

pub mod chart;
pub mod config;
pub mod error;
pub mod experiments;
pub mod expr;
pub mod flow;
pub mod grid;
pub mod ham;
pub mod linalg;
pub mod mainlemma;
pub mod metrics;
pub mod nonsmooth;
pub mod regularize;
pub mod reparam;
pub mod report;
pub mod smooth;
pub mod system;

pub use chart::{make_chart, Chart, ChartKind, ChartRef, DomainBox, FormScale, PointTangentPair};
pub use error::{Error, ParseError, Result};
pub use flow::{
    conformal_factor, integrate_flow, ConformalFactor, FlowMap, FlowSample, Isotopy, PointMap,
};
pub use ham::{contact_vector_field, poisson_bracket, ContactVectorField, HamKind, Hamiltonian};
pub use metrics::{
    c0_distance, contact_distance, displacement_check, energy_upper_bound, ham_norm, norm_profile,
    EnergyEstimate, MetricReport, NormKind, NormReport,
};
pub use reparam::{
    boundary_flatten, constant_speed, reparameterize, rescale_interval, MonotoneSpline, ReparamFn,
};
pub use system::{
    compose, conjugate, direct_flow_check, group_difference, invert, reparam_system, Automorphism,
    ContactDynamicalSystem, Provenance,
};
