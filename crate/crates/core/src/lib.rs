pub mod changepoint;
pub mod error;
pub mod gp;
pub mod graph;
pub mod metrics;
pub mod panel;
pub mod partition;
pub mod pipeline;
pub mod regime;
pub mod score;
pub mod search;
pub mod seed;
pub mod subsample;
pub mod synth;

pub use error::{Error, Result};
