//! Daily platelet demand forecasting.
//!
//! The crate covers the whole path from granular transfusion records to a
//! model comparison:
//!
//! - [`data`]: ingestion, daily aggregation, the 29-column feature set,
//!   standardization and the two train/test scenarios.
//! - [`stats`]: error metrics, ACF/PACF, ADF, Mann-Whitney U, one-way ANOVA,
//!   boxplot summaries and STL.
//! - [`arima`]: CSS-estimated ARIMA with stepwise AIC order search.
//! - [`additive`]: trend + Fourier seasonality + holiday regression.
//! - [`lasso`]: coordinate-descent lasso, cross-validation and bootstrap bands.
//! - [`lstm`]: a small LSTM regressor trained with Adam.
//! - [`synth`]: a seeded generator for calibrated synthetic transfusion data.
//! - [`harness`]: scenario runs, metric tables and plot-data files.

pub mod additive;
pub mod arima;
pub mod data;
pub mod error;
pub mod harness;
pub mod lasso;
pub mod linalg;
pub mod lstm;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
