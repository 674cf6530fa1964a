//! Sparse identification of ODEs and PDEs from noisy gridded data, with
//! candidate libraries constrained by Hamiltonian, conservation-law and
//! gradient-flow structure, in strong or weak form.

pub mod dictionary;
pub mod diff;
pub mod error;
pub mod grid;
pub mod harness;
pub mod model;
pub mod noise;
pub mod pipeline;
pub mod regression;
pub mod sim;
pub mod symbolic;
pub mod systems;
pub mod weak;

pub use error::{Error, Result};
