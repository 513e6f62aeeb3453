//! Unsupervised light-field disparity estimation.

pub mod config;
pub mod dataset;
pub mod dispnet;
mod error;
pub mod fusion;
pub mod geometry;
pub mod losses;
mod image;
pub mod lightfield;
pub mod metrics;
pub mod occlusion;
mod nn;
pub mod params;
pub mod pfm;
pub mod pipeline;
pub mod samples;
pub mod synth;
pub mod train;
pub mod viz;

pub use error::{Error, Result};
pub use image::{DisparityMap, Image};
pub use lfdepth_autodiff as autodiff;
