//! Post-processing of discrete solutions: an `H(div)`-conforming flux that is
//! in equilibrium with the data, and an `H^1`-conforming potential.

pub mod flux;
pub mod potential;

pub use flux::{
    equilibrated_flux_mixed, equilibrated_flux_primal, verify_equilibration, EquilibratedFlux, EquilibrationReport,
};
pub use potential::{average_potential, local_potential_mixed, LagrangeSpace};
