//! File formats, run configuration and the command-line driver around
//! [`c2f_core`].

pub mod cli;
pub mod config;
pub mod dataset;
pub mod nifti;
pub mod report;
pub mod rvol;
pub mod weights;
