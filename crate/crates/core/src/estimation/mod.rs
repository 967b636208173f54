//! Mean-energy estimation from re-cooling fluorescence, experiment design,
//! and heating-rate regression.

mod design;
mod fit;
mod heating;
mod trace;

pub use design::{design_cache, measurement_time, measurement_time_auto};
pub use fit::{fit_mean_energy, Calibration, FitOptions, FitOutcome, FitResult, SensitivityLimit};
pub use heating::{heating_rate_from_fits, heating_rate_from_points, HeatingPoint, HeatingRate};
pub use trace::{simulate_trace, FluorescenceTrace, SimulationOptions, TraceMetadata};
