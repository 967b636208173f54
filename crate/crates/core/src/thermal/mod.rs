//! Initial-energy distributions and the fluorescence averaged over them.
//!
//! A single cooling trajectory from the top of the energy range is
//! integrated once ([`PropagatorCache`]); any other starting energy lies on
//! the same trajectory at a later time, so the ensemble average reduces to a
//! weighted sum of time-shifted copies of that one trajectory.

mod average;
mod cache;
mod distribution;

pub use average::{averaged_rate, photon_budget, AveragedPoint, ShiftWeights};
pub use cache::{build_cache, cooling_span, default_dtau, CacheHeader, PropagatorCache};
pub use distribution::{
    make_excited_thermal, parametric_amplify, EnergyDistribution, SamplingOptions,
};
