pub mod aesthetics;
pub mod analysis;
pub mod baselines;
pub mod cli;
pub mod clustering;
pub mod descriptors;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod frame_io;
pub mod imageops;
pub mod quality_filter;
pub mod scoring;
pub mod seeding;
pub mod selection;

pub use error::{Error, Result};
