//! Split-sample forecast-encompassing test for nested direct multi-step
//! forecasts, with the simulation designs and empirical pipeline built on it.

pub mod config;
pub mod dgp;
pub mod error;
pub mod inflation;
pub mod linalg;
pub mod local_power;
pub mod monte_carlo;
pub mod normal;
pub mod regression;

pub use enc_test::{
    encompassing_test, encompassing_test_with, Centering, EncompassingResult, ForecastErrorSet,
    HacConfig, SplitSpec,
};
pub use error::{EncError, Result};
pub use local_power::{local_power_mild, local_power_stationary, LocalPower, LocalPowerInput};
pub use regression::{recursive_forecast_errors, DirectDesign, TimeSeriesMatrix};
