pub mod codec;
pub mod geometry;
pub mod metrics;
pub mod molgraph;
pub mod oracles;
pub mod synthetic;
