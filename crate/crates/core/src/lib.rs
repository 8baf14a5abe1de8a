//! Creation of macroscopic quantum superposition states in a two-component
//! Bose condensate by measuring outcoupled atoms.
//!
//! The crate covers the generic one-dimensional collapse picture
//! ([`collapse`]), exact two-mode Fock algebra ([`fock`]), the coherent
//! snapshot measurement ([`coherent`]), continuous one-by-one detection
//! simulated by quantum trajectories ([`qmc`]), interference-based
//! detection of the superposition ([`interference`]) and brute-force
//! references for small systems ([`oracle`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod collapse;
pub mod coherent;
pub mod config;
pub mod error;
pub mod fock;
pub mod histogram;
pub mod interference;
pub mod oracle;
pub mod qmc;

pub use error::{Error, ErrorCategory, Result};
pub use histogram::CountHistogram;
