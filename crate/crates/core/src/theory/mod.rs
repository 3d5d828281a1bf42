//! Exact checks of the entropy-increment results on enumerable state sets.

pub mod generator;
pub mod increment;
pub mod prop1;
pub mod props;

pub use generator::{prop3_instance, random_kernel, random_uncertainty, random_visited, Prop3Instance};
pub use increment::{
    derivative_limit, entropy_increment, next_visited, richardson_derivative, step_grid, uniform_covariance,
    uniform_curriculum, vu_curriculum, GoalTag, OutcomeKernel, EPS_GRID,
};
pub use prop1::{check_prop1_bound, empirical_prop1_bound, gaussian_gap, BoundReport, LogConcaveFamily};
pub use props::{check_prop2, check_prop3, IncrementReport, PremiseFlags, Verdict};
