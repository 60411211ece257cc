//! Shrub detection in high-resolution RGB imagery.

pub mod augment;
pub mod classifier;
pub mod detect;
pub mod eval;
pub mod obia;
pub mod preprocess;
pub mod raster;
pub mod resample;
pub mod synth;
pub mod texture;
