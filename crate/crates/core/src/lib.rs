pub mod dataset;
pub mod decision;
pub mod extraction;
pub mod hashing;
pub mod kb;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod synthetic;
