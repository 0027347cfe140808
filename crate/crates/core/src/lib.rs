//! Numerical toolkit for the plasma analogy of lowest-Landau-level quasi-hole states.
//!
//! Mean-field Coulomb-gas densities, Monte Carlo sampling of the Gibbs measure,
//! exact diagonalization of the contact interaction and the resulting energy bounds.

pub mod bargmann_ed;
pub mod error;
pub mod params;
pub mod plasma_mc;
pub mod quadrature;
pub mod meanfield;
pub mod radial_measures;
pub mod trial_energy;

pub use error::{Error, Result};
pub use params::ModelParams;
pub use radial_measures::{
    coulomb_energy, newton_potential, relative_entropy, smeared_charge_correction,
    total_variation, NewtonPotential, RadialDensity, RadialGrid, RadialMeasure,
    SignedRadialMeasure,
};
pub use meanfield::{
    electrostatic_profile, functional_energies, mf_minimize, optimal_vortex, potential_w,
    thermal_profile, DecayEnvelope, FunctionalEnergies, MeanFieldSolution,
};
pub use plasma_mc::{
    estimate_density, hamiltonian, onsager_fluctuation, pair_test_function, Chain,
    DensityEstimate, PlasmaConfiguration, SamplerConfig,
};
pub use bargmann_ed::{
    enumerate_basis, momentum_regime, pair_matrix_element, sector_spectrum, yrast_curve,
    FockState, SectorSpectrum,
};
pub use trial_energy::{
    evaluate_trial_energy, lower_bound_e, main_term_energy, phase_diagram, trial_momentum,
    upper_bound, CutoffPair, EnergyReport,
};
