pub mod audio;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod gmm;
pub mod hmm;
pub mod manifest;
pub mod model_io;
pub mod pipeline;
pub mod prosody;
pub mod seed;
pub mod sphmm;
pub mod synth;

pub use error::{Error, Result};
