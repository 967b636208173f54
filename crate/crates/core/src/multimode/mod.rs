//! Cooling of one motional mode in the presence of the other two, with and
//! without RF micromotion on the transverse modes.

mod bessel;
mod profile;
mod rates;

pub use bessel::{bessel_j_upto, sideband_cutoff, sideband_weights};
pub use profile::{
    combined_doppler_pdf, effective_profile, elliptic_k_complement, micromotion_profile, modulation_index,
    LineProfile, DEFAULT_NODES,
};
pub use rates::{
    cooling_rate_3d, cooling_rate_3d_micromotion, evolve_modes, find_stable_points, mode_rates,
    scattering_rate_3d, Axis, EvolveOptions, ModeSet, Rate3dOptions,
};
