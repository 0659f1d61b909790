pub mod affinity;
pub mod candidates;
pub mod config;
pub mod error;
pub mod evalsynth;
pub mod imgproc;
pub mod mapping;
pub mod motion;
pub mod pruning;
pub mod targetness;
pub mod video_io;

pub use config::PipelineConfig;
pub use error::{Error, Result};
