//! Empirical convexity certification and representational probes.

mod boundary;
mod gradcheck;
mod jensen;
mod probe;

pub use gradcheck::{gradient_check, relative_error, GradCheck};
pub use boundary::{boundary_extract, midpoint_convexity, BoundaryGrid, GridSpec, MidpointResult};
pub use jensen::{
    jensen_check, structural_audit, BoxSampler, ConvexityReport, InputSampler, StructuralAudit, WorstTriple,
    DEFAULT_TOLERANCE,
};
pub use probe::{identity_fit_probe, ProbeBudget};
