pub mod baseline;
pub mod catalog;
pub mod cli;
pub mod evaluation;
pub mod ids;
pub mod ingest;
pub mod time;
pub mod featurize;
pub mod model;
pub mod numkernel;
pub mod pipeline;
pub mod sampler;
pub mod seed;
pub mod synth;
pub mod training;
