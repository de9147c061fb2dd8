//! The constrained nuclear-norm design program and its solver.
//!
//! For every integral-image location `i` the program asks that the distortion
//! `h_iᵀ(P − I)U_{2:n} w_d` has a standard deviation no larger than `Δ_i`,
//! which is a second-order cone constraint `(b_i − A_i(P), Δ_i) ∈ K_i` with
//! `A_i(P) = Σ_U Pᵀ h_i` and `b_i = Σ_U h_i`. The smoothed objective
//! `τ‖P‖_* + ½‖P‖_F²` is minimised by singular value thresholding on the dual.

mod operator;
mod problem;
mod prox;
mod sensing;
mod svt;

pub use operator::{
    apply_adjoint, apply_forward, estimate_spectral_norm, spectral_norm_trace, weighted_norm_trace, RowAggregation,
};
pub use problem::{build_design_problem, DesignProblem, DistortionSpec};
pub use prox::{project_soc, project_soc_in_place, shrink_singular_values, shrink_with_nuclear_norm};
pub use sensing::{assemble_q, make_sensing_operator, SensingDesign, SensingOperatorPair, RANK_THRESHOLD};
pub use svt::{
    default_tau, svt_solve, Acceleration, ConstraintScaling, IterationRecord, SvtConfig, SvtOutcome, SvtState,
};
