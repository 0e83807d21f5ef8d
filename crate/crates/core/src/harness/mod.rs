//! Instance generation, instance files, experiment sweeps and run records.

pub mod experiment;
pub mod generators;
pub mod instance;
pub mod record;
