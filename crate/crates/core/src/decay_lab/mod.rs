//! Three-interval decay engine, model cylinder evolution, decay-rate fits, center of mass
//! on the Reeb locus, and the action/charge functionals of cylinder maps.

mod action;
mod center;
mod cylinder;
mod fit;
mod three_interval;

pub use action::{action_charge, ActionCharge, CylinderMap};
pub use center::{center_of_mass, mean_zero_check, CenterOfMassOptions, CenterOfMassResult, ChartReebModel, FlatTorus, ReebLocusModel};
pub use cylinder::{
    solve_cylinder, solve_cylinder_cn, CylinderField, CylinderGrid, Forcing, TauPerturbation, CN_MAX_PICARD,
};
pub use fit::{decay_rate, decay_rate_series, DecayFit, DEFAULT_FLOOR};
pub use three_interval::{
    gamma_of_c, growth_factor, random_hypothesis_sequence, three_interval_bound, IntervalSeq, ThreeIntervalReport,
    HYPOTHESIS_SLACK,
};

use thiserror::Error;

use crate::contact_core::ContactError;
use crate::reeb_dynamics::DynamicsError;
use crate::spectral::SpectralError;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum DecayError {
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("grid too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("mode mismatch: {0}")]
    ModeMismatch(String),
    #[error("unsupported forcing: {0}")]
    UnsupportedForcing(String),
    #[error("τ-dependent march did not contract after {iterations} sweeps (update {update:.3e})")]
    NoContraction { iterations: usize, update: f64 },
    #[error("only {points} slices in the fit window")]
    InsufficientDecay { points: usize },
    #[error("loop is outside the tube: distance {distance:.3e} ≥ {radius:.3e}")]
    OutsideTube { distance: f64, radius: f64 },
    #[error("Newton iteration did not converge (last residual {:.3e})", .history.last().copied().unwrap_or(f64::NAN))]
    NoConvergence { history: Vec<f64> },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Contact(#[from] ContactError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}
