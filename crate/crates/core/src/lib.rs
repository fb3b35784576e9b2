//! Numerical laboratory for contact geometry: Reeb dynamics, Morse-Bott thickenings,
//! asymptotic operators and exponential decay on cylinders.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod contact_core;
pub mod linalg;
pub mod reeb_dynamics;
pub mod normal_form;
pub mod spectral;
pub mod decay_lab;
pub mod scenario;
