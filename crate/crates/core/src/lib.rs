//! Forward modeling and analysis toolkit for delay-line liquid-crystal
//! reconfigurable intelligent surfaces (LC-RIS).
//!
//! The crate models the full desk-scale analysis chain of a reflect-type
//! LC-RIS built on tunable delay-line phase shifters:
//!
//! * [`materials`]: LC mixture and substrate stack, bias-voltage tuning
//!   curve, response-time and power estimators.
//! * [`phase_shifter`]: effective line permittivity, round-trip phase,
//!   insertion loss, figure of merit and compactness.
//! * [`aperture`]: element layouts on rectangular or triangular grids,
//!   column bias groups, aperture area.
//! * [`tolerance`]: fabrication-tolerance fields: uniform, tilted and
//!   correlated-random LC thickness maps, metallization misalignment.
//! * [`scattering`]: per-element reflection coefficients, far-field
//!   patterns, metal-plate RCS reference and RCS normalization.
//! * [`steering`]: phase-profile synthesis, wrapping, voltage mapping,
//!   beam-squint prediction.
//! * [`metrics`]: aperture efficiency, peak tracking, bandwidth metrics,
//!   measurement reduction, loss budgets.
//! * [`optimizer`]: derivative-free bias-voltage optimization per column
//!   or per element.
//! * [`scenario`]: TOML scenario configs tying everything together for
//!   the command-line frontend.

pub mod aperture;
pub mod error;
pub mod materials;
pub mod metrics;
pub mod optimizer;
pub mod phase_shifter;
pub mod scattering;
pub mod scenario;
pub mod steering;
pub mod tolerance;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Free-space wavelength in meters for a frequency in Hz.
pub fn wavelength(frequency_hz: f64) -> f64 {
    SPEED_OF_LIGHT / frequency_hz
}

pub use error::{Error, Result};
