// SPDX-License-Identifier: Apache-2.0

//! Shared inputs for the criterion benches.

use nsflow_core::graph::DataflowGraph;
use nsflow_core::oracles::Matrix;
use nsflow_core::workload::builtin_workload;

/// Fused graph of the bundled mixed workload at symbolic share `ratio`.
pub fn resnet_graph(ratio: f64) -> DataflowGraph {
    let spec = builtin_workload(&format!("resnet18-symbolic({ratio})")).expect("bundled workload");
    DataflowGraph::build(&spec).expect("bundled workload is a DAG")
}

/// Deterministic INT8-range matrix.
pub fn int8_matrix(rows: usize, cols: usize, salt: usize) -> Matrix<i32> {
    Matrix::from_fn(rows, cols, |r, c| ((r * 31 + c * 17 + salt * 7) % 255) as i32 - 127)
}

/// Deterministic INT4-range vector.
pub fn int4_vector(len: usize, salt: usize) -> Vec<i32> {
    (0..len).map(|i| ((i * 5 + salt * 3) % 16) as i32 - 8).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_stay_in_range() {
        assert!(int8_matrix(9, 9, 3).data.iter().all(|v| (-127..=127).contains(v)));
        assert!(int4_vector(40, 1).iter().all(|v| (-8..=7).contains(v)));
        assert!(!resnet_graph(0.2).r_v.is_empty());
    }
}
