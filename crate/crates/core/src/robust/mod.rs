//! Robust training: worst-case dynamics search inside a Wasserstein ball,
//! alternated with policy updates.

mod closed_form;
mod inner;
mod line_search;
mod objective;
mod train;

pub use closed_form::{
    closed_form_minimizer, conjugate_gradient, constraint_value, kkt_residuals, solve_spd,
    ClosedFormStep, KktResiduals, SolveMethod,
};
pub use inner::{
    initial_state, inner_descent_step, inner_loop, InnerContext, InnerLimits, InnerOutcome,
    InnerState, StepOutcome, StopReason, sample_in_ellipsoid,
};
pub use line_search::{wolfe_search, LineObjective, LineSearchResult, WolfeConfig};
pub use objective::{AnalyticObjective, DynamicsObjective, ZoReturnObjective};
pub use train::{
    default_sigma, estimate_reference_hessian, train, train_with_callback, CsvSink, GradientConfig,
    HessianConfig, TrainOutcome, TrainRecord, TrainReport, Wr2lConfig,
};
