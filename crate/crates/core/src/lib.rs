pub mod cli;
pub mod datastore;
pub mod error;
pub mod fieldgen;
pub mod gp;
pub mod nn;
pub mod pca;
pub mod pipeline;
pub mod rng;
pub mod search;
pub mod study;

pub use error::{Error, Result};
