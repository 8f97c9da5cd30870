pub mod cli;
pub mod config;
pub mod corpus;
pub mod crf;
pub mod embeddings;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod experiments;
pub mod mixer;
pub mod model;
pub mod params;
pub mod recurrent;
pub mod rng;
pub mod tagger;
pub mod training;

pub use error::{Error, Result};
