//! Discrete-event simulator for 3D MPSoC memory hierarchies: coherent
//! clusters on a snooping bus, a mesh network between clusters, stacked
//! cache tiers and pluggable memory technologies.

pub mod arch;
pub mod cache;
pub mod cli;
pub mod engine;
pub mod interconnect;
pub mod memtech;
pub mod metrics;
pub mod workload;
