//! Numerical laboratory for dimensional collapse in contrastive learning.
//!
//! The crate computes exact InfoNCE gradients for paired embeddings, trains
//! bias-free linear (and rectified) stacks by gradient descent on toy
//! augmented data, and measures what happens to their spectra: singular
//! value decay, conserved quantities, alignment between adjacent layers, and
//! the behaviour of sub-vector contrastive losses with fixed projectors.

pub mod analysis;
pub mod config;
pub mod csvfmt;
pub mod directclr;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod infonce;
pub mod models;
pub mod numerics;
pub mod rng;
pub mod synthdata;

pub use error::{Error, Result};
pub use numerics::{Matrix, Vector};
