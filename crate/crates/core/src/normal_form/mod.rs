//! Canonical thickening λ_F of a Morse-Bott contact set-up, its structural identities,
//! and block-form CR structures adapted to the orbit locus.

mod adapted;
mod setup;
mod thickening;

pub use adapted::{check_adapted, make_adapted_j, model_frame, standard_j, symplectic_conjugate, AdaptedJ, AdaptedReport};
pub use setup::{coupling_null_space, standard_omega, MorseBottSetup, SetupReport};
pub use thickening::{
    build_thickening, radial_identities, reeb_of_thickening, split_contact_distribution, tube_points, RadialReport,
    Splitting, ThickeningChart, ThickeningOptions, ZeroSectionReeb,
};

use thiserror::Error;

use crate::contact_core::ContactError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum NormalFormError {
    #[error("invalid set-up: {0}")]
    BadSetup(String),
    #[error("λ_F is not verified contact at fiber radius {radius}")]
    NotContact { radius: f64 },
    #[error("bad block data: {0}")]
    BadBlocks(String),
    #[error("J² ≠ −Π (error {0:.3e})")]
    NotComplexStructure(f64),
    #[error(transparent)]
    Contact(#[from] ContactError),
}
