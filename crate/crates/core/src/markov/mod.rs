//! Generator construction and interval transition probabilities.

mod expm;
mod misclass;
mod spec;
mod spline;

pub use expm::{
    transition_probability, transition_probability_with_partials, IntensityMatrix, TransitionMatrix,
    TransitionPartials, DEGENERATE_RATE_GAP,
};
pub(crate) use expm::closed_form;
pub use misclass::MisclassificationMatrix;
pub use spec::{
    build_intensity, default_wave_times, expit, logit, CovariateVector, IntervalDesign, ModelParams,
    ModelSpecFile, ParameterLayout, TransitionFunctionalSpec,
};
pub use spline::{spline_basis, Knots};
pub(crate) use spline::quantile_sorted;
