//! Monte Carlo integration of the two-level optical Bloch equations along
//! classical secular trajectories with kinematic micromotion, driven by the
//! mean light force.
//!
//! The internal state is propagated in the frame rotating at the laser
//! frequency (rotating-wave approximation). Each time step is a symmetric
//! splitting of exact maps: detuning phase plus spontaneous decay, and the
//! Rabi rotation. The secular motion is advanced by exact harmonic
//! rotations with half-step light-force kicks.

mod ensemble;
mod master;
mod trajectory;

pub use ensemble::{ensemble_fluorescence, EnsembleOptions, EnsembleTrace, HeatingModel, InitialSampler};
pub use master::{step_master, BlochCoefficients, TwoLevelState};
pub use trajectory::{
    default_dt, micromotion_amplitude, simulate_trajectory, InitialCondition, MotionState, Trajectory,
    TrajectoryOptions,
};
