//! Bohmian and W-Bohmian dynamics with spin on periodic grids.
//!
//! The crate is organized bottom-up:
//!
//! * [`lattice`]: grids, spinor fields, spectral derivatives, interpolation,
//!   sampling.
//! * [`evolution`]: Hamiltonians with pulsed matrix potentials and split-step
//!   propagation of fields and density ensembles.
//! * [`densities`]: statistical, reduced, combined, conditional and
//!   fundamental density matrices in ensemble form.
//! * [`guidance`]: velocity fields, trajectory co-integration, equivariance
//!   and continuity diagnostics.
//! * [`scenarios`]: the two-particle sequential Stern-Gerlach experiment on a
//!   singlet, plus analytic fixtures.
//! * [`cli`]: configuration files, runs and output artifacts.

pub mod cli;
pub mod densities;
pub mod error;
pub mod evolution;
pub mod guidance;
pub mod lattice;
pub mod rng;
pub mod scenarios;
mod spectral;

pub use densities::{
    combined, conditional, conditional_wavefunction, eigendecompose, fidelity_with_pure, frobenius_distance,
    macro_conditional, position_density, purity, reduced, region_probability, statistical, to_kernel, validate,
    AxisBox, Bipartition, DensityEnsemble, KernelDensity, Validate, ValidationReport,
};
pub use error::{Error, Result};
pub use evolution::{
    evolve_ensemble, evolve_field, step_schrodinger, unitarity_deviation, Hamiltonian, PotentialField,
    PropagationResult, Propagator,
};
pub use guidance::{
    conditional_velocity, continuity_residual, equivariance_distance, integrate_trajectories, integrate_trajectory,
    velocity_from_density, velocity_from_wavefunction, CoIntegrator, QuantumState, Trajectory, VelocityField,
};
pub use lattice::{inner_product, Axis, ConfigPoint, DensityField, GridSpec, SpinorField};
pub use rng::StreamId;
