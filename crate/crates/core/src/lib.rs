//! Coarse-to-fine volumetric binary segmentation.
//!
//! The crate is `no_std` (with `alloc`) so the algorithmic core can be embedded
//! anywhere; file formats, configuration files and the command line live in the
//! `c2f` companion crate. Enable the `parallel` feature to spread per-sample
//! training work over a rayon thread pool.
//!
//! Stages of a test-time case:
//!
//! 1. **Coarse** – every axial slice is resized to a fixed image size, segmented
//!    and mapped back, giving a coarse mask.
//! 2. **Guidance** – the coarse mask is split into connected components. Exactly two
//!    components above the voxel threshold is normal and the coarse mask is used
//!    as-is; otherwise a sagittal correction model rebuilds the guidance mask.
//! 3. **Fine** – each kidney in the guidance mask gets fixed-pixel-size axial
//!    patches around its centroid; the patch predictions are pasted back and merged.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod components;
pub mod error;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod volume;

pub use error::{Error, Result};
