//! Random-walk state-space filters over an estimated trend series.

mod diagnostics;
mod filter;
mod fit;
mod forecast;

pub use diagnostics::{
    autocorrelation, bic, bowman_shenton, diagnostics, ljung_box, DiagnosticsReport, TestStat, DEFAULT_LJUNG_BOX_LAGS,
};
pub use filter::{run_filter, DiffuseInit, FilterModel, FilterOutput, FilterStep, MeasurementMode, Variant};
pub use fit::{fit_filter, FilterFit, FilterFitConfig, ParameterEstimate};
pub use forecast::{forecast, Forecast, ForecastStep, FORECAST_HEADER};
