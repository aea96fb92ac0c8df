pub mod model;
pub mod proposal;
pub mod lookup;
pub mod episode;
pub mod curation;
pub mod baselines;
pub mod protocol;
pub mod synth;
pub mod cost;
pub mod report;
pub mod runner;
pub mod server;
pub mod cli;
