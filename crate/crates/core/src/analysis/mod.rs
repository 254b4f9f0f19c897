//! Small-sample behavior of the scalar filter: gain convergence, shock
//! expansions of the update and analytic power.

mod coefficients;
mod gain;
mod power;

pub use coefficients::{
    asymptotic_coefficients, enumerate_coefficients_oracle, exact_coefficients, CoefficientMode, CoefficientTable,
    EnumeratedCoefficients, Term, MAX_ENUMERATION_ORDER,
};
pub use gain::{
    contraction_check, exact_variance_map_step, fixed_point, gain_sequence, gain_sums, linear_map_decomposition,
    variance_map_iterate, Contraction, FixedPoint, GainTrajectory,
};
pub use power::{coefficients_for, monte_carlo_power, power, size, theta, CurveKind, MonteCarloPower, PowerCurve};
