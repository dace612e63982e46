//! Problem instances: the simple set `X`, the monotone operator `F`, the
//! convex constraints `g`, and constructors with known KKT points.

pub mod canonical;
mod constraints;
pub(crate) mod document;
mod instance;
mod kkt;
mod operator;
mod set;

pub use constraints::{
    linearize_constraints, ConstraintFn, ConstraintSet, JacobianBoundMethod, MG_INFLATION, MG_SAMPLES,
};
pub use document::{
    instance_from_json, instance_to_json, load_instance, save_instance, ConstraintDocument, InstanceDocument,
    KnownSolutionDocument, MetadataDocument, OperatorDocument, METADATA_RTOL,
};
pub use instance::{KktResiduals, KnownSolution, ProblemConstants, ProblemInstance, KKT_TOL};
pub use kkt::{build_kkt_instance, KktConstraint, KktSpec};
pub use operator::{
    min_symmetric_eigenvalue, sign, spectral_norm, Operator, OperatorFn, OperatorKind, MONOTONICITY_TOL,
};
pub use set::{project_simplex, SimpleSet};
