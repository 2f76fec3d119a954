// SPDX-License-Identifier: Apache-2.0

//! Dataflow graph construction.
//!
//! A workload is turned into a staged graph in five passes: pick the
//! critical path of one loop, attach every other node to the critical node
//! at the same depth, overlay the next loop's NN layers on this loop's VSA
//! tail, bind a runtime function to every node and annotate memory costs.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::cost::{layer_cycles_unchecked, pick_mode, vsa_spatial_unchecked, vsa_temporal_unchecked, VsaMode};
use crate::workload::{ElemwiseDims, ElemwiseOp, LayerDims, Payload, VsaDims, WorkloadSpec};

/// Configuration used to order and overlay nodes before a design exists.
pub const REFERENCE_H: u64 = 4;
pub const REFERENCE_W: u64 = 4;
pub const REFERENCE_N: u64 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("workload has no nodes")]
    EmptySpec,
    #[error("workload graph is cyclic")]
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Layer,
    Vsa,
    Elemwise,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Layer => "layer",
            NodeKind::Vsa => "vsa",
            NodeKind::Elemwise => "elemwise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stage {
    pub critical: String,
    pub attached: Vec<String>,
    pub depth: usize,
}

impl Stage {
    pub fn members(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.critical).chain(&self.attached)
    }
}

/// Next-loop layer `layer` runs while VSA nodes `r_v[start..=end]` of the
/// current loop are still executing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapWindow {
    pub layer: String,
    pub vsa_start: String,
    pub vsa_end: String,
    pub layer_index: usize,
    pub start: usize,
    pub end: usize,
}

/// Cost model a node is evaluated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuntimeFn {
    /// Weight-stationary tile model.
    Layer { m: u64, n: u64, k: u64 },
    /// Spatial/temporal streaming model.
    Vsa { n_vec: u64, d: u64 },
    /// Lane-parallel SIMD model.
    Simd { elements: u64, op: ElemwiseOp },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MemoryTotals {
    pub filters: u64,
    pub vsa_data: u64,
    pub max_node: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataflowGraph {
    pub name: String,
    pub loop_count: u64,
    pub stages: Vec<Stage>,
    pub r_l: Vec<String>,
    pub layers: Vec<LayerDims>,
    pub r_v: Vec<String>,
    pub vsa: Vec<VsaDims>,
    pub elemwise_ids: Vec<String>,
    pub elemwise: Vec<ElemwiseDims>,
    pub windows: Vec<OverlapWindow>,
    pub edges: Vec<(String, String)>,
    pub runtime: BTreeMap<String, RuntimeFn>,
    pub memory_cost: BTreeMap<String, u64>,
    pub output_bytes: BTreeMap<String, u64>,
    pub totals: MemoryTotals,
    kinds: BTreeMap<String, NodeKind>,
}

impl DataflowGraph {
    /// Runs all five construction passes.
    pub fn build(spec: &WorkloadSpec) -> Result<Self, GraphError> {
        let path = critical_path(spec)?;
        let stages = attach_parallel(spec, &path)?;
        let graph = fuse_loops(spec, stages, spec.loop_count);
        Ok(annotate_memory(bind_runtime(graph), spec))
    }

    pub fn kind_of(&self, id: &str) -> Option<&NodeKind> {
        self.kinds.get(id)
    }

    pub fn elemwise_dims(&self, id: &str) -> Option<&ElemwiseDims> {
        self.elemwise_ids.iter().position(|e| e == id).map(|i| &self.elemwise[i])
    }

    /// Node ids in stage order.
    pub fn node_order(&self) -> impl Iterator<Item = &str> {
        self.stages.iter().flat_map(|s| s.members()).map(|s| s.as_str())
    }

    pub fn node_count(&self) -> usize {
        self.stages.iter().map(|s| 1 + s.attached.len()).sum()
    }

    pub fn is_critical(&self, id: &str) -> bool {
        self.stages.iter().any(|s| s.critical == id)
    }
}

/// Array cycles of a node on the reference configuration; SIMD nodes do not
/// occupy the array and count as zero.
pub fn reference_cycles(payload: &Payload) -> u64 {
    let (h, w, n) = (REFERENCE_H, REFERENCE_W, REFERENCE_N);
    match payload {
        Payload::Layer(l) => layer_cycles_unchecked(h, w, n, l),
        Payload::Vsa(v) => pick_mode(vsa_temporal_unchecked(h, w, n, v), vsa_spatial_unchecked(h, w, n, v)).0,
        Payload::Elemwise(_) => 0,
    }
}

struct Adjacency {
    succ: Vec<Vec<usize>>,
    pred: Vec<Vec<usize>>,
}

fn adjacency(spec: &WorkloadSpec) -> Adjacency {
    let index = spec.index();
    let mut succ = vec![Vec::new(); spec.nodes.len()];
    let mut pred = vec![Vec::new(); spec.nodes.len()];
    for (v, node) in spec.nodes.iter().enumerate() {
        for dep in &node.deps {
            if let Some(&u) = index.get(dep.as_str()) {
                succ[u].push(v);
                pred[v].push(u);
            }
        }
    }
    Adjacency { succ, pred }
}

fn topo_order(spec: &WorkloadSpec, adj: &Adjacency) -> Result<Vec<usize>, GraphError> {
    let mut indeg: Vec<usize> = adj.pred.iter().map(|p| p.len()).collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..spec.nodes.len()).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(spec.nodes.len());
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for &s in &adj.succ[v] {
            indeg[s] -= 1;
            if indeg[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() == spec.nodes.len() {
        Ok(order)
    } else {
        Err(GraphError::Cyclic)
    }
}

/// Longest source-to-sink path of one loop, by node count, then by summed
/// reference runtime, then lexicographically smallest id sequence.
pub fn critical_path(spec: &WorkloadSpec) -> Result<Vec<String>, GraphError> {
    if spec.nodes.is_empty() {
        return Err(GraphError::EmptySpec);
    }
    let adj = adjacency(spec);
    topo_order(spec, &adj)?;
    let runtime: Vec<u64> = spec.nodes.iter().map(|n| reference_cycles(&n.payload)).collect();

    // Best suffix starting at each node, memoised depth-first.
    #[derive(Clone)]
    struct Suffix {
        count: usize,
        runtime: u64,
        path: Vec<usize>,
    }
    fn better(a: &Suffix, b: &Suffix, spec: &WorkloadSpec) -> bool {
        if a.count != b.count {
            return a.count > b.count;
        }
        if a.runtime != b.runtime {
            return a.runtime > b.runtime;
        }
        let ids = |s: &Suffix| s.path.iter().map(|&i| spec.nodes[i].id.as_str()).collect::<Vec<_>>();
        ids(a) < ids(b)
    }
    fn best_from(
        v: usize,
        spec: &WorkloadSpec,
        adj: &Adjacency,
        runtime: &[u64],
        memo: &mut [Option<Suffix>],
    ) -> Suffix {
        if let Some(s) = &memo[v] {
            return s.clone();
        }
        let mut best: Option<Suffix> = None;
        for &s in &adj.succ[v] {
            let cand = best_from(s, spec, adj, runtime, memo);
            if best.as_ref().is_none_or(|b| better(&cand, b, spec)) {
                best = Some(cand);
            }
        }
        let mut out = Suffix { count: 1, runtime: runtime[v], path: vec![v] };
        if let Some(b) = best {
            out.count += b.count;
            out.runtime += b.runtime;
            out.path.extend(b.path);
        }
        memo[v] = Some(out.clone());
        out
    }

    let mut memo = vec![None; spec.nodes.len()];
    let mut best: Option<Suffix> = None;
    for v in (0..spec.nodes.len()).filter(|&v| adj.pred[v].is_empty()) {
        let cand = best_from(v, spec, &adj, &runtime, &mut memo);
        if best.as_ref().is_none_or(|b| better(&cand, b, spec)) {
            best = Some(cand);
        }
    }
    let best = best.expect("an acyclic non-empty graph has a source");
    Ok(best.path.into_iter().map(|i| spec.nodes[i].id.clone()).collect())
}

/// Assigns every node its depth (longest distance from a source) and attaches
/// off-path nodes to the critical node at that depth.
pub fn attach_parallel(spec: &WorkloadSpec, path: &[String]) -> Result<Vec<Stage>, GraphError> {
    let adj = adjacency(spec);
    let order = topo_order(spec, &adj)?;
    let mut depth = vec![0usize; spec.nodes.len()];
    for &v in &order {
        depth[v] = adj.pred[v].iter().map(|&u| depth[u] + 1).max().unwrap_or(0);
    }
    let mut stages: Vec<Stage> =
        path.iter().enumerate().map(|(d, id)| Stage { critical: id.clone(), attached: Vec::new(), depth: d }).collect();
    let on_path: std::collections::HashSet<&str> = path.iter().map(|s| s.as_str()).collect();
    let mut off: Vec<usize> = (0..spec.nodes.len()).filter(|&v| !on_path.contains(spec.nodes[v].id.as_str())).collect();
    off.sort_by(|&a, &b| spec.nodes[a].id.cmp(&spec.nodes[b].id));
    for v in off {
        // A longest path visits every depth level, so the index exists.
        let stage = stages.get_mut(depth[v]).expect("depth bounded by critical path length");
        stage.attached.push(spec.nodes[v].id.clone());
    }
    Ok(stages)
}

/// Builds the fused graph: node sets in stage order plus next-loop overlap
/// windows computed on the reference configuration timeline.
pub fn fuse_loops(spec: &WorkloadSpec, stages: Vec<Stage>, loop_count: u64) -> DataflowGraph {
    let index = spec.index();
    let mut g = DataflowGraph {
        name: spec.name.clone(),
        loop_count,
        stages,
        r_l: Vec::new(),
        layers: Vec::new(),
        r_v: Vec::new(),
        vsa: Vec::new(),
        elemwise_ids: Vec::new(),
        elemwise: Vec::new(),
        windows: Vec::new(),
        edges: Vec::new(),
        runtime: BTreeMap::new(),
        memory_cost: BTreeMap::new(),
        output_bytes: BTreeMap::new(),
        totals: MemoryTotals::default(),
        kinds: BTreeMap::new(),
    };

    // VSA stage intervals of the current loop, starting when its NN part ends.
    let mut vsa_spans: Vec<(u64, u64, usize, usize)> = Vec::new();
    let mut vsa_clock = 0u64;
    for stage in &g.stages {
        let first = g.r_v.len();
        let mut dur = 0;
        for id in stage.members() {
            let node = &spec.nodes[index[id.as_str()]];
            match &node.payload {
                Payload::Layer(l) => {
                    g.r_l.push(id.clone());
                    g.layers.push(*l);
                    g.kinds.insert(id.clone(), NodeKind::Layer);
                }
                Payload::Vsa(v) => {
                    g.r_v.push(id.clone());
                    g.vsa.push(*v);
                    g.kinds.insert(id.clone(), NodeKind::Vsa);
                    dur += reference_cycles(&node.payload);
                }
                Payload::Elemwise(e) => {
                    g.elemwise_ids.push(id.clone());
                    g.elemwise.push(*e);
                    g.kinds.insert(id.clone(), NodeKind::Elemwise);
                }
            }
        }
        if g.r_v.len() > first {
            vsa_spans.push((vsa_clock, vsa_clock + dur, first, g.r_v.len() - 1));
            vsa_clock += dur;
        }
    }
    for stage in &g.stages {
        for id in stage.members() {
            for dep in &spec.nodes[index[id.as_str()]].deps {
                g.edges.push((dep.clone(), id.clone()));
            }
        }
    }

    if loop_count >= 2 && !g.r_v.is_empty() {
        let mut clock = 0u64;
        for (li, (id, dims)) in g.r_l.iter().zip(&g.layers).enumerate() {
            let (a, b) = (clock, clock + layer_cycles_unchecked(REFERENCE_H, REFERENCE_W, REFERENCE_N, dims));
            clock = b;
            let live: Vec<&(u64, u64, usize, usize)> =
                vsa_spans.iter().filter(|(s, e, _, _)| *s < b && *e > a).collect();
            if let (Some(first), Some(last)) = (live.first(), live.last()) {
                g.windows.push(OverlapWindow {
                    layer: id.clone(),
                    vsa_start: g.r_v[first.2].clone(),
                    vsa_end: g.r_v[last.3].clone(),
                    layer_index: li,
                    start: first.2,
                    end: last.3,
                });
            }
        }
    }
    g
}

/// Tags every node with the cost model matching its payload.
pub fn bind_runtime(mut graph: DataflowGraph) -> DataflowGraph {
    for (id, l) in graph.r_l.iter().zip(&graph.layers) {
        graph.runtime.insert(id.clone(), RuntimeFn::Layer { m: l.m, n: l.n, k: l.k });
    }
    for (id, v) in graph.r_v.iter().zip(&graph.vsa) {
        graph.runtime.insert(id.clone(), RuntimeFn::Vsa { n_vec: v.n_vec, d: v.d });
    }
    for (id, e) in graph.elemwise_ids.iter().zip(&graph.elemwise) {
        graph.runtime.insert(id.clone(), RuntimeFn::Simd { elements: e.elements, op: e.op_kind });
    }
    graph
}

/// Per-node memory cost and graph-wide totals.
pub fn annotate_memory(mut graph: DataflowGraph, spec: &WorkloadSpec) -> DataflowGraph {
    let mut totals = MemoryTotals::default();
    for node in &spec.nodes {
        let cost = match &node.payload {
            Payload::Layer(l) => {
                totals.filters += l.filter_bytes;
                l.filter_bytes
            }
            Payload::Vsa(v) => {
                totals.vsa_data += v.data_bytes;
                v.data_bytes
            }
            Payload::Elemwise(e) => node.precision.bytes_for(e.elements),
        };
        totals.total += cost;
        totals.max_node = totals.max_node.max(cost);
        graph.memory_cost.insert(node.id.clone(), cost);
        graph.output_bytes.insert(node.id.clone(), node.output_bytes());
    }
    graph.totals = totals;
    graph
}

/// Graphviz rendering: critical nodes as boxes, attached nodes as ellipses,
/// overlap windows as dashed edges from next-loop layers.
pub fn to_dot(graph: &DataflowGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph \"{}\" {{", graph.name.replace('"', "'"));
    let _ = writeln!(out, "  rankdir=TB;");
    for stage in &graph.stages {
        let _ = writeln!(out, "  subgraph \"stage{}\" {{ rank=same;", stage.depth);
        let _ = writeln!(out, "    \"{}\" [shape=box];", stage.critical);
        for id in &stage.attached {
            let _ = writeln!(out, "    \"{id}\" [shape=ellipse];");
        }
        let _ = writeln!(out, "  }}");
    }
    for (from, to) in &graph.edges {
        let _ = writeln!(out, "  \"{from}\" -> \"{to}\";");
    }
    for w in &graph.windows {
        for vid in &graph.r_v[w.start..=w.end] {
            let _ =
                writeln!(out, "  \"{}\" -> \"{vid}\" [style=dashed, constraint=false, label=\"next loop\"];", w.layer);
        }
    }
    out.push_str("}\n");
    out
}

/// Maps ids to indices of `r_l` / `r_v`.
pub fn position_map(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

/// Reference-configuration mode of the VSA set, for reports.
pub fn reference_mode(graph: &DataflowGraph) -> VsaMode {
    let ones = vec![REFERENCE_N; graph.vsa.len()];
    crate::cost::vsa_total(REFERENCE_H, REFERENCE_W, &ones, &graph.vsa).map(|(_, m)| m).unwrap_or(VsaMode::Temporal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{OperatorNode, Precision, VsaOp};

    fn l(id: &str, deps: &[&str]) -> OperatorNode {
        OperatorNode::layer(id, LayerDims::new(4, 8, 8, Precision::INT8), Precision::INT8, deps)
    }

    fn v(id: &str, deps: &[&str]) -> OperatorNode {
        OperatorNode::vsa(id, VsaDims::new(2, 8, 8, VsaOp::Bind, Precision::INT4), Precision::INT4, deps)
    }

    fn spec(nodes: Vec<OperatorNode>, loops: u64) -> WorkloadSpec {
        WorkloadSpec { name: "t".into(), loop_count: loops, nodes }
    }

    #[test]
    fn chain_critical_path() {
        let s = spec(vec![l("L1", &[]), l("L2", &["L1"]), v("V1", &["L2"])], 1);
        assert_eq!(critical_path(&s).unwrap(), vec!["L1", "L2", "V1"]);
        let stages = attach_parallel(&s, &critical_path(&s).unwrap()).unwrap();
        assert!(stages.iter().all(|s| s.attached.is_empty()));
    }

    #[test]
    fn diamond_ties_break_on_id() {
        let s = spec(vec![l("L1", &[]), v("V2", &["L1"]), v("V1", &["L1"]), v("V3", &["V1", "V2"])], 1);
        let path = critical_path(&s).unwrap();
        assert_eq!(path, vec!["L1", "V1", "V3"]);
        let stages = attach_parallel(&s, &path).unwrap();
        let got: Vec<(&str, Vec<&str>)> =
            stages.iter().map(|s| (s.critical.as_str(), s.attached.iter().map(|a| a.as_str()).collect())).collect();
        assert_eq!(got, vec![("L1", vec![]), ("V1", vec!["V2"]), ("V3", vec![])]);
    }

    #[test]
    fn runtime_breaks_count_ties() {
        // Same length; the heavier VSA branch wins despite its larger id.
        let heavy =
            OperatorNode::vsa("Vz", VsaDims::new(64, 64, 64, VsaOp::Bind, Precision::INT4), Precision::INT4, &["L1"]);
        let s = spec(vec![l("L1", &[]), v("Va", &["L1"]), heavy], 1);
        assert_eq!(critical_path(&s).unwrap(), vec!["L1", "Vz"]);
    }

    #[test]
    fn single_node() {
        let s = spec(vec![l("only", &[])], 1);
        assert_eq!(critical_path(&s).unwrap(), vec!["only"]);
        assert_eq!(critical_path(&spec(vec![], 1)), Err(GraphError::EmptySpec));
    }

    #[test]
    fn two_off_path_nodes_share_depth() {
        let s = spec(vec![l("L1", &[]), l("L2", &["L1"]), v("V1", &["L1"]), v("V2", &["L1"]), l("L3", &["L2"])], 1);
        let g = DataflowGraph::build(&s).unwrap();
        assert_eq!(g.stages[1].critical, "L2");
        assert_eq!(g.stages[1].attached, vec!["V1", "V2"]);
        assert_eq!(g.node_count(), 5);
    }

    #[test]
    fn single_loop_has_no_windows() {
        let s = spec(vec![l("L1", &[]), v("V1", &["L1"])], 1);
        assert!(DataflowGraph::build(&s).unwrap().windows.is_empty());
    }

    #[test]
    fn nn_only_has_no_windows() {
        let s = spec(vec![l("L1", &[]), l("L2", &["L1"])], 4);
        assert!(DataflowGraph::build(&s).unwrap().windows.is_empty());
    }

    #[test]
    fn parallel_vsa_tail_spans_both_layers() {
        // Layers take 56 reference cycles each; the VSA stage takes 2 * 76,
        // covering the whole 112-cycle NN re-run.
        let big = |id: &str| {
            OperatorNode::vsa(id, VsaDims::new(8, 8, 8, VsaOp::Bind, Precision::INT4), Precision::INT4, &["L2"])
        };
        let s = spec(vec![l("L1", &[]), l("L2", &["L1"]), big("V1"), big("V2")], 2);
        let g = DataflowGraph::build(&s).unwrap();
        let w: Vec<(&str, &str, &str)> =
            g.windows.iter().map(|w| (w.layer.as_str(), w.vsa_start.as_str(), w.vsa_end.as_str())).collect();
        assert_eq!(w, vec![("L1", "V1", "V2"), ("L2", "V1", "V2")]);
    }

    #[test]
    fn chained_vsa_tail_splits_windows() {
        // Layers 56 cycles each; V1 = 38, V2 = 38 (chain).
        let s = spec(vec![l("L1", &[]), l("L2", &["L1"]), v("V1", &["L2"]), v("V2", &["V1"])], 3);
        let g = DataflowGraph::build(&s).unwrap();
        let w: Vec<(&str, &str, &str)> =
            g.windows.iter().map(|w| (w.layer.as_str(), w.vsa_start.as_str(), w.vsa_end.as_str())).collect();
        // L1 spans [0,56) over V1 [0,38) and V2 [38,76); L2 [56,112) only V2.
        assert_eq!(w, vec![("L1", "V1", "V2"), ("L2", "V2", "V2")]);
    }

    #[test]
    fn runtime_tags_follow_payload() {
        let e = OperatorNode::elemwise(
            "E1",
            ElemwiseDims { elements: 16, op_kind: ElemwiseOp::Softmax },
            Precision::FP16,
            &["V1"],
        );
        let s = spec(vec![l("L1", &[]), v("V1", &["L1"]), e], 1);
        let g = DataflowGraph::build(&s).unwrap();
        assert_eq!(g.runtime["L1"], RuntimeFn::Layer { m: 4, n: 8, k: 8 });
        assert_eq!(g.runtime["V1"], RuntimeFn::Vsa { n_vec: 2, d: 8 });
        assert_eq!(g.runtime["E1"], RuntimeFn::Simd { elements: 16, op: ElemwiseOp::Softmax });
    }

    #[test]
    fn memory_annotation() {
        let mut big = LayerDims::new(4, 8, 8, Precision::INT8);
        big.filter_bytes = 2_700_000;
        let vec_node = OperatorNode::vsa(
            "V1",
            VsaDims::new(1024, 1024, 1024, VsaOp::Bind, Precision::INT4),
            Precision::INT4,
            &["L1"],
        );
        let s = spec(vec![OperatorNode::layer("L1", big, Precision::INT8, &[]), vec_node], 1);
        let g = DataflowGraph::build(&s).unwrap();
        assert_eq!(g.memory_cost["L1"], 2_700_000);
        assert_eq!(g.memory_cost["V1"], 512 * 1024);
        assert_eq!(g.totals.total, g.memory_cost.values().sum::<u64>());
        assert_eq!(g.totals.max_node, 2_700_000);
    }

    #[test]
    fn dot_shapes_and_windows() {
        let s = spec(vec![l("L1", &[]), v("V2", &["L1"]), v("V1", &["L1"]), v("V3", &["V1", "V2"])], 2);
        let dot = to_dot(&DataflowGraph::build(&s).unwrap());
        assert!(dot.contains("\"V2\" [shape=ellipse]"));
        assert!(dot.contains("\"L1\" [shape=box]"));
        assert!(dot.contains("style=dashed"));
    }
}
