// SPDX-License-Identifier: Apache-2.0

//! Design-space exploration and cycle-level simulation for an adaptive
//! systolic array running mixed neural and vector-symbolic workloads.
//!
//! The pipeline: parse a [`WorkloadSpec`], build a [`DataflowGraph`], search
//! with [`run_dse`], emit a [`DesignConfigDoc`] and replay it on the
//! [`sim`] array against the [`oracles`].

pub mod cost;
pub mod dse;
pub mod graph;
pub mod oracles;
pub mod report;
pub mod sim;
pub mod workload;

pub use cost::{CostReport, HwConfig, MappingScheme, MemoryPlan, VsaMode};
pub use dse::{run_dse, DesignPoint, DseParams, SearchStats};
pub use graph::DataflowGraph;
pub use report::DesignConfigDoc;
pub use workload::{builtin_workload, parse_workload, Precision, WorkloadSpec};
