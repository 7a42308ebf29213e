//! Numerical weak KAM tools for mechanical Hamiltonians `1/2 |p|^2 + V(x)` on the flat
//! torus of dimension one or two: critical constants, semiconcave viscosity solutions,
//! superdifferentials and their minimal-norm selections, the generalized gradient flow,
//! and occupational measures of its orbits.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod flow;
pub mod io;
pub mod measures;
pub mod potential;
pub mod semiconcave;
pub mod stencil;
pub mod torus;
pub mod weakkam;

pub use error::{Error, Result};
pub use flow::{critical_time, energy_residual, integrate, FlowParams, Sample, Trajectory};
pub use measures::{
    dichotomy_classify, ClassificationReport, DichotomyConfig, DichotomyContext, LimitConfig,
    LimitReport, OccupationalMeasure, Verdict,
};
pub use potential::{critical_constant, oscillation, MaxSet, Potential};
pub use semiconcave::{
    classify_point, min_norm_selection, CriticalSets, MetricField, PointClass, PointKind,
    SuperdifferentialPolytope, Tolerances,
};
pub use torus::{torus_distance, wrap, GridShape, Momentum, PeriodicGrid, TorusPoint};
pub use weakkam::{
    builtin_solution, solve_distance_like, solve_lax_oleinik, verify_viscosity, LaxOleinikConfig,
    Provenance, ValueFunction, ViscosityReport, ViscosityTolerances,
};
