pub mod agent;
pub mod aggregation;
pub mod dataset;
pub mod eval;
pub mod gateway;
pub mod pipeline;
pub mod qc;
pub mod sampler;
pub mod synth;
pub mod taxonomy;
pub mod web;
