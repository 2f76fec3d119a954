// SPDX-License-Identifier: Apache-2.0

//! Workload descriptors.
//!
//! A workload is a small DAG of operator nodes (GEMM-lowered NN layers,
//! vector-symbolic kernels and element-wise SIMD ops) plus the number of
//! times the whole graph is iterated. Descriptors are JSON documents:
//!
//! ```json
//! {
//!   "name": "tiny-nsai",
//!   "loop_count": 1,
//!   "nodes": [
//!     { "id": "L1", "kind": "layer", "m": 4, "n": 8, "k": 8, "precision": "INT8", "deps": [] },
//!     { "id": "V1", "kind": "vsa", "n_vec": 2, "d": 8, "block": 8, "op_kind": "bind",
//!       "precision": "INT4", "deps": ["L1"] }
//!   ]
//! }
//! ```
//!
//! Byte fields (`filter_bytes`, `ifmap_bytes`, `ofmap_bytes`, `data_bytes`)
//! are optional and default to the element count times the element size of
//! the node's precision.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Precision {
    FP16,
    FP8,
    INT8,
    INT4,
}

impl Precision {
    pub fn bits(self) -> u64 {
        match self {
            Precision::FP16 => 16,
            Precision::FP8 | Precision::INT8 => 8,
            Precision::INT4 => 4,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Precision::INT8 | Precision::INT4)
    }

    /// Inclusive value range of an integer precision.
    pub fn int_range(self) -> Option<(i32, i32)> {
        match self {
            Precision::INT8 => Some((-128, 127)),
            Precision::INT4 => Some((-8, 7)),
            _ => None,
        }
    }

    /// Storage for `elements` values, rounded up to whole bytes.
    pub fn bytes_for(self, elements: u64) -> u64 {
        (elements * self.bits()).div_ceil(8)
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Precision::FP16 => "FP16",
            Precision::FP8 => "FP8",
            Precision::INT8 => "INT8",
            Precision::INT4 => "INT4",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VsaOp {
    /// Circular convolution.
    Bind,
    /// Circular correlation.
    Unbind,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElemwiseOp {
    Add,
    MulDiv,
    ExpLogTanh,
    Norm,
    Softmax,
    ReduceSum,
}

/// GEMM-lowered layer: an `m x n` input against an `n x k` weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerDims {
    pub m: u64,
    pub n: u64,
    pub k: u64,
    pub filter_bytes: u64,
    pub ifmap_bytes: u64,
    pub ofmap_bytes: u64,
}

impl LayerDims {
    /// Dimensions with byte fields derived from `precision`.
    pub fn new(m: u64, n: u64, k: u64, precision: Precision) -> Self {
        LayerDims {
            m,
            n,
            k,
            filter_bytes: precision.bytes_for(n * k),
            ifmap_bytes: precision.bytes_for(m * n),
            ofmap_bytes: precision.bytes_for(m * k),
        }
    }

    pub fn macs(&self) -> u64 {
        self.m * self.n * self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VsaDims {
    pub n_vec: u64,
    pub d: u64,
    pub block: u64,
    pub op_kind: VsaOp,
    pub data_bytes: u64,
}

impl VsaDims {
    pub fn new(n_vec: u64, d: u64, block: u64, op_kind: VsaOp, precision: Precision) -> Self {
        VsaDims { n_vec, d, block, op_kind, data_bytes: precision.bytes_for(n_vec * d) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElemwiseDims {
    pub elements: u64,
    pub op_kind: ElemwiseOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Layer(LayerDims),
    Vsa(VsaDims),
    Elemwise(ElemwiseDims),
}

impl Payload {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Payload::Layer(_) => "layer",
            Payload::Vsa(_) => "vsa",
            Payload::Elemwise(_) => "elemwise",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperatorNode {
    pub id: String,
    pub payload: Payload,
    pub precision: Precision,
    pub deps: Vec<String>,
}

impl OperatorNode {
    pub fn layer(id: &str, dims: LayerDims, precision: Precision, deps: &[&str]) -> Self {
        Self::with_payload(id, Payload::Layer(dims), precision, deps)
    }

    pub fn vsa(id: &str, dims: VsaDims, precision: Precision, deps: &[&str]) -> Self {
        Self::with_payload(id, Payload::Vsa(dims), precision, deps)
    }

    pub fn elemwise(id: &str, dims: ElemwiseDims, precision: Precision, deps: &[&str]) -> Self {
        Self::with_payload(id, Payload::Elemwise(dims), precision, deps)
    }

    fn with_payload(id: &str, payload: Payload, precision: Precision, deps: &[&str]) -> Self {
        OperatorNode { id: id.to_string(), payload, precision, deps: deps.iter().map(|d| d.to_string()).collect() }
    }

    /// Bytes this node keeps resident: filter+activations for layers, operand
    /// data for VSA kernels, the element buffer for SIMD ops.
    pub fn footprint_bytes(&self) -> u64 {
        match &self.payload {
            Payload::Layer(l) => l.filter_bytes + l.ifmap_bytes + l.ofmap_bytes,
            Payload::Vsa(v) => v.data_bytes,
            Payload::Elemwise(e) => self.precision.bytes_for(e.elements),
        }
    }

    /// Bytes written back by the node.
    pub fn output_bytes(&self) -> u64 {
        match &self.payload {
            Payload::Layer(l) => l.ofmap_bytes,
            Payload::Vsa(v) => match v.op_kind {
                VsaOp::Bind | VsaOp::Unbind => self.precision.bytes_for(v.n_vec * v.d),
                VsaOp::Similarity => self.precision.bytes_for(v.n_vec),
            },
            Payload::Elemwise(e) => match e.op_kind {
                ElemwiseOp::ReduceSum => self.precision.bytes_for(1),
                _ => self.precision.bytes_for(e.elements),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadSpec {
    pub name: String,
    pub loop_count: u64,
    pub nodes: Vec<OperatorNode>,
}

impl WorkloadSpec {
    pub fn node(&self, id: &str) -> Option<&OperatorNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Position of every node id in `nodes`.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect()
    }
}

/// A single problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub node: Option<String>,
    pub message: String,
}

impl Diagnostic {
    fn node(id: &str, message: impl Into<String>) -> Self {
        Diagnostic { node: Some(id.to_string()), message: message.into() }
    }

    fn global(message: impl Into<String>) -> Self {
        Diagnostic { node: None, message: message.into() }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.node {
            Some(id) => write!(f, "node `{id}`: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("node `{id}`: unknown node kind `{kind}`")]
    UnknownKind { id: String, kind: String },
    #[error("node `{id}`: {message}")]
    Field { id: String, message: String },
    #[error("node `{node}` depends on unknown node `{missing}`")]
    DanglingDependency { node: String, missing: String },
    #[error("dependency cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("invalid workload: {}", join_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown builtin workload `{0}`")]
    UnknownBuiltin(String),
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadDoc {
    name: String,
    loop_count: u64,
    nodes: Vec<NodeDoc>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ifmap_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ofmap_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_vec: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    block: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_bytes: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elements: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    op_kind: Option<String>,
    precision: Option<Precision>,
    #[serde(default)]
    deps: Vec<String>,
}

impl NodeDoc {
    fn from_node(node: &OperatorNode) -> Self {
        let mut doc = NodeDoc {
            id: node.id.clone(),
            kind: node.payload.kind_name().to_string(),
            precision: Some(node.precision),
            deps: node.deps.clone(),
            ..NodeDoc::default()
        };
        match &node.payload {
            Payload::Layer(l) => {
                doc.m = Some(l.m);
                doc.n = Some(l.n);
                doc.k = Some(l.k);
                doc.filter_bytes = Some(l.filter_bytes);
                doc.ifmap_bytes = Some(l.ifmap_bytes);
                doc.ofmap_bytes = Some(l.ofmap_bytes);
            }
            Payload::Vsa(v) => {
                doc.n_vec = Some(v.n_vec);
                doc.d = Some(v.d);
                doc.block = Some(v.block);
                doc.op_kind = Some(enum_name(&v.op_kind));
                doc.data_bytes = Some(v.data_bytes);
            }
            Payload::Elemwise(e) => {
                doc.elements = Some(e.elements);
                doc.op_kind = Some(enum_name(&e.op_kind));
            }
        }
        doc
    }

    fn into_node(self) -> Result<OperatorNode, WorkloadError> {
        let id = self.id.clone();
        let field_err = |message: String| WorkloadError::Field { id: id.clone(), message };
        let precision = self.precision.ok_or_else(|| field_err("missing field `precision`".into()))?;
        let require = |name: &str, v: Option<u64>| v.ok_or_else(|| field_err(format!("missing field `{name}`")));
        let forbid = |names: &[(&str, bool)]| -> Result<(), WorkloadError> {
            match names.iter().find(|(_, present)| *present) {
                Some((name, _)) => Err(field_err(format!("field `{name}` is not allowed on a {} node", self.kind))),
                None => Ok(()),
            }
        };
        let payload = match self.kind.as_str() {
            "layer" => {
                forbid(&[
                    ("n_vec", self.n_vec.is_some()),
                    ("d", self.d.is_some()),
                    ("block", self.block.is_some()),
                    ("data_bytes", self.data_bytes.is_some()),
                    ("elements", self.elements.is_some()),
                    ("op_kind", self.op_kind.is_some()),
                ])?;
                let (m, n, k) = (require("m", self.m)?, require("n", self.n)?, require("k", self.k)?);
                let mut dims = LayerDims::new(m, n, k, precision);
                if let Some(b) = self.filter_bytes {
                    dims.filter_bytes = b;
                }
                if let Some(b) = self.ifmap_bytes {
                    dims.ifmap_bytes = b;
                }
                if let Some(b) = self.ofmap_bytes {
                    dims.ofmap_bytes = b;
                }
                Payload::Layer(dims)
            }
            "vsa" => {
                forbid(&[
                    ("m", self.m.is_some()),
                    ("n", self.n.is_some()),
                    ("k", self.k.is_some()),
                    ("filter_bytes", self.filter_bytes.is_some()),
                    ("ifmap_bytes", self.ifmap_bytes.is_some()),
                    ("ofmap_bytes", self.ofmap_bytes.is_some()),
                    ("elements", self.elements.is_some()),
                ])?;
                let op_name = self.op_kind.clone().ok_or_else(|| field_err("missing field `op_kind`".into()))?;
                let op: VsaOp =
                    parse_enum(&op_name).map_err(|_| field_err(format!("unknown vsa op_kind `{op_name}`")))?;
                let n_vec = require("n_vec", self.n_vec)?;
                let d = require("d", self.d)?;
                let block = self.block.unwrap_or(d);
                let mut dims = VsaDims::new(n_vec, d, block, op, precision);
                if let Some(b) = self.data_bytes {
                    dims.data_bytes = b;
                }
                Payload::Vsa(dims)
            }
            "elemwise" => {
                forbid(&[
                    ("m", self.m.is_some()),
                    ("n", self.n.is_some()),
                    ("k", self.k.is_some()),
                    ("filter_bytes", self.filter_bytes.is_some()),
                    ("ifmap_bytes", self.ifmap_bytes.is_some()),
                    ("ofmap_bytes", self.ofmap_bytes.is_some()),
                    ("n_vec", self.n_vec.is_some()),
                    ("d", self.d.is_some()),
                    ("block", self.block.is_some()),
                    ("data_bytes", self.data_bytes.is_some()),
                ])?;
                let op_name = self.op_kind.clone().ok_or_else(|| field_err("missing field `op_kind`".into()))?;
                let op: ElemwiseOp =
                    parse_enum(&op_name).map_err(|_| field_err(format!("unknown elemwise op_kind `{op_name}`")))?;
                Payload::Elemwise(ElemwiseDims { elements: require("elements", self.elements)?, op_kind: op })
            }
            other => {
                return Err(WorkloadError::UnknownKind { id: self.id, kind: other.to_string() });
            }
        };
        Ok(OperatorNode { id: self.id, payload, precision, deps: self.deps })
    }
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enum variants serialize to strings"),
    }
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T, serde_json::Error> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
}

/// Parses and validates a workload document.
pub fn parse_workload(text: &str) -> Result<WorkloadSpec, WorkloadError> {
    let doc: WorkloadDoc = serde_json::from_str(text).map_err(|e| WorkloadError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let nodes = doc.nodes.into_iter().map(NodeDoc::into_node).collect::<Result<Vec<_>, _>>()?;
    let spec = WorkloadSpec { name: doc.name, loop_count: doc.loop_count, nodes };

    let ids: BTreeSet<&str> = spec.nodes.iter().map(|n| n.id.as_str()).collect();
    for node in &spec.nodes {
        if let Some(missing) = node.deps.iter().find(|d| !ids.contains(d.as_str())) {
            return Err(WorkloadError::DanglingDependency { node: node.id.clone(), missing: missing.clone() });
        }
    }
    if let Some(cycle) = find_cycle(&spec) {
        return Err(WorkloadError::Cycle(cycle));
    }
    let diagnostics = validate(&spec);
    if !diagnostics.is_empty() {
        return Err(WorkloadError::Invalid(diagnostics));
    }
    Ok(spec)
}

/// Renders a workload as a JSON document with every byte field explicit.
pub fn serialize_workload(spec: &WorkloadSpec) -> String {
    let doc = WorkloadDoc {
        name: spec.name.clone(),
        loop_count: spec.loop_count,
        nodes: spec.nodes.iter().map(NodeDoc::from_node).collect(),
    };
    serde_json::to_string_pretty(&doc).expect("workload documents always serialize")
}

/// Returns the node ids of one dependency cycle, rotated so the smallest id
/// comes first, or `None` if the graph is acyclic. Dangling deps are ignored.
pub fn find_cycle(spec: &WorkloadSpec) -> Option<Vec<String>> {
    let index = spec.index();
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    let mut mark = vec![Mark::New; spec.nodes.len()];
    let mut stack: Vec<usize> = Vec::new();

    fn visit(
        v: usize,
        spec: &WorkloadSpec,
        index: &HashMap<&str, usize>,
        mark: &mut [Mark],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        mark[v] = Mark::Active;
        stack.push(v);
        for dep in &spec.nodes[v].deps {
            let Some(&u) = index.get(dep.as_str()) else { continue };
            match mark[u] {
                Mark::Active => {
                    let pos = stack.iter().position(|&x| x == u).unwrap();
                    return Some(stack[pos..].to_vec());
                }
                Mark::New => {
                    if let Some(c) = visit(u, spec, index, mark, stack) {
                        return Some(c);
                    }
                }
                Mark::Done => {}
            }
        }
        stack.pop();
        mark[v] = Mark::Done;
        None
    }

    for v in 0..spec.nodes.len() {
        if mark[v] == Mark::New {
            if let Some(mut cycle) = visit(v, spec, &index, &mut mark, &mut stack) {
                // Walked along deps; report in execution order.
                cycle.reverse();
                let start = (0..cycle.len()).min_by_key(|&i| &spec.nodes[cycle[i]].id).unwrap();
                cycle.rotate_left(start);
                return Some(cycle.into_iter().map(|i| spec.nodes[i].id.clone()).collect());
            }
        }
    }
    None
}

/// Checks every workload invariant; an empty result means the spec is valid.
pub fn validate(spec: &WorkloadSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if spec.nodes.is_empty() {
        out.push(Diagnostic::global("workload has no nodes"));
    }
    if spec.loop_count < 1 {
        out.push(Diagnostic::global("loop_count ≥ 1"));
    }

    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    for node in &spec.nodes {
        *seen.entry(node.id.as_str()).or_default() += 1;
    }
    for (id, count) in &seen {
        if *count > 1 {
            out.push(Diagnostic::node(id, format!("id is declared {count} times")));
        }
    }

    for node in &spec.nodes {
        let id = node.id.as_str();
        match &node.payload {
            Payload::Layer(l) => {
                for (name, v) in [("m", l.m), ("n", l.n), ("k", l.k)] {
                    if v < 1 {
                        out.push(Diagnostic::node(id, format!("{name} ≥ 1")));
                    }
                }
            }
            Payload::Vsa(v) => {
                for (name, x) in [("n_vec", v.n_vec), ("d", v.d), ("block", v.block)] {
                    if x < 1 {
                        out.push(Diagnostic::node(id, format!("{name} ≥ 1")));
                    }
                }
                if v.block >= 1 && v.d % v.block != 0 {
                    out.push(Diagnostic::node(id, "block must divide d"));
                }
            }
            Payload::Elemwise(e) => {
                if e.elements < 1 {
                    out.push(Diagnostic::node(id, "elements ≥ 1"));
                }
            }
        }
        for dep in &node.deps {
            if dep == &node.id {
                out.push(Diagnostic::node(id, "node depends on itself"));
            } else if !seen.contains_key(dep.as_str()) {
                out.push(Diagnostic::node(id, format!("dependency `{dep}` does not exist")));
            }
        }
    }

    if let Some(cycle) = find_cycle(spec) {
        out.push(Diagnostic::node(&cycle[0], format!("dependency cycle: {}", cycle.join(" -> "))));
    }

    if !spec.nodes.is_empty() && seen.len() == spec.nodes.len() {
        let components = weak_components(spec);
        if components > 1 {
            out.push(Diagnostic::global(format!(
                "loop body must be one connected graph, found {components} components"
            )));
        }
    }
    out
}

fn weak_components(spec: &WorkloadSpec) -> usize {
    let index = spec.index();
    let mut parent: Vec<usize> = (0..spec.nodes.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    for (v, node) in spec.nodes.iter().enumerate() {
        for dep in &node.deps {
            if let Some(&u) = index.get(dep.as_str()) {
                let (a, b) = (find(&mut parent, v), find(&mut parent, u));
                parent[a] = b;
            }
        }
    }
    (0..spec.nodes.len()).filter(|&v| find(&mut parent, v) == v).count()
}

/// Returns one of the bundled workloads: `tiny-nsai` or
/// `resnet18-symbolic(<ratio>)` with `0 < ratio < 1`.
pub fn builtin_workload(name: &str) -> Result<WorkloadSpec, WorkloadError> {
    let name = name.trim();
    if name == "tiny-nsai" {
        return Ok(tiny_nsai());
    }
    if let Some(arg) = name.strip_prefix("resnet18-symbolic(").and_then(|s| s.strip_suffix(')')) {
        let ratio: f64 = arg.trim().parse().map_err(|_| WorkloadError::UnknownBuiltin(name.to_string()))?;
        if ratio > 0.0 && ratio < 1.0 {
            return Ok(resnet18_symbolic(ratio));
        }
    }
    Err(WorkloadError::UnknownBuiltin(name.to_string()))
}

fn tiny_nsai() -> WorkloadSpec {
    WorkloadSpec {
        name: "tiny-nsai".into(),
        loop_count: 1,
        nodes: vec![
            OperatorNode::layer("L1", LayerDims::new(4, 8, 8, Precision::INT8), Precision::INT8, &[]),
            OperatorNode::vsa("V1", VsaDims::new(2, 8, 8, VsaOp::Bind, Precision::INT4), Precision::INT4, &["L1"]),
        ],
    }
}

/// Loop iterations of the resnet18-symbolic workload (one per reasoning panel).
pub const RESNET_SYMBOLIC_LOOPS: u64 = 16;
/// Dimension of the lowered vector-symbolic blocks.
pub const RESNET_SYMBOLIC_DIM: u64 = 32;

const ATTRIBUTES: [&str; 4] = ["type", "size", "color", "pos"];

fn conv(id: &str, in_hw: u64, out_hw: u64, cin: u64, cout: u64, ksize: u64, deps: &[&str]) -> OperatorNode {
    let p = Precision::INT8;
    let mut dims = LayerDims::new(out_hw * out_hw, ksize * ksize * cin, cout, p);
    dims.ifmap_bytes = p.bytes_for(in_hw * in_hw * cin);
    OperatorNode::layer(id, dims, p, deps)
}

fn resnet18_layers() -> Vec<OperatorNode> {
    let mut nodes = vec![conv("conv1", 224, 112, 3, 64, 7, &[])];
    nodes.push(conv("l1_0a", 56, 56, 64, 64, 3, &["conv1"]));
    nodes.push(conv("l1_0b", 56, 56, 64, 64, 3, &["l1_0a"]));
    nodes.push(conv("l1_1a", 56, 56, 64, 64, 3, &["l1_0b"]));
    nodes.push(conv("l1_1b", 56, 56, 64, 64, 3, &["l1_1a"]));
    let mut prev = "l1_1b".to_string();
    let mut in_hw = 56;
    let mut cin = 64;
    for (stage, cout) in [(2u64, 128u64), (3, 256), (4, 512)] {
        let out_hw = in_hw / 2;
        let a0 = format!("l{stage}_0a");
        let b0 = format!("l{stage}_0b");
        let ds = format!("l{stage}_0ds");
        let a1 = format!("l{stage}_1a");
        let b1 = format!("l{stage}_1b");
        nodes.push(conv(&a0, in_hw, out_hw, cin, cout, 3, &[&prev]));
        nodes.push(conv(&ds, in_hw, out_hw, cin, cout, 1, &[&prev]));
        nodes.push(conv(&b0, out_hw, out_hw, cout, cout, 3, &[&a0]));
        nodes.push(conv(&a1, out_hw, out_hw, cout, cout, 3, &[&b0, &ds]));
        nodes.push(conv(&b1, out_hw, out_hw, cout, cout, 3, &[&a1]));
        prev = b1;
        in_hw = out_hw;
        cin = cout;
    }
    let p = Precision::INT8;
    let mut fc = LayerDims::new(1, 512, 1000, p);
    fc.ifmap_bytes = p.bytes_for(512);
    nodes.push(OperatorNode::layer("fc", fc, p, &[&prev]));
    nodes
}

/// ResNet18 followed, per loop, by an attribute-wise symbolic back end whose
/// operand bytes are `ratio` of the total memory footprint.
fn resnet18_symbolic(ratio: f64) -> WorkloadSpec {
    let mut nodes = resnet18_layers();
    let nn_bytes: u64 = nodes.iter().map(|n| n.footprint_bytes()).sum();
    let target = (ratio / (1.0 - ratio) * nn_bytes as f64).round() as u64;

    // bind, unbind, rule execution, similarity; similarity scans the codebook
    // and carries a double share.
    const WEIGHTS: [u64; 4] = [1, 1, 1, 2];
    let per_attr_weight: u64 = WEIGHTS.iter().sum();
    let total_weight = per_attr_weight * ATTRIBUTES.len() as u64;
    let p = Precision::INT4;
    let d = RESNET_SYMBOLIC_DIM;
    let mut assigned = 0u64;
    let mut slot = 0u64;

    let mut next_bytes = |w: u64, last: bool| -> u64 {
        slot += w;
        let upto = if last { target } else { target * slot / total_weight };
        let b = upto - assigned;
        assigned = upto;
        b
    };
    let vsa = |id: String, op: VsaOp, bytes: u64, deps: &[&str]| {
        let n_vec = (bytes * 8 / (d * p.bits())).max(1);
        let mut dims = VsaDims::new(n_vec, d, d, op, p);
        dims.data_bytes = bytes;
        OperatorNode::vsa(&id, dims, p, deps)
    };

    for (ai, attr) in ATTRIBUTES.iter().enumerate() {
        let last_attr = ai + 1 == ATTRIBUTES.len();
        let bind = format!("{attr}_bind");
        let unbind = format!("{attr}_unbind");
        let exec = format!("{attr}_exec");
        let sim = format!("{attr}_sim");
        let b_bind = next_bytes(WEIGHTS[0], false);
        let b_unbind = next_bytes(WEIGHTS[1], false);
        let b_exec = next_bytes(WEIGHTS[2], false);
        let b_sim = next_bytes(WEIGHTS[3], last_attr);
        let bind_node = vsa(bind.clone(), VsaOp::Bind, b_bind, &["fc"]);
        let bind_elems = match &bind_node.payload {
            Payload::Vsa(v) => v.n_vec * v.d,
            _ => unreachable!(),
        };
        nodes.push(bind_node);
        nodes.push(OperatorNode::elemwise(
            &format!("{attr}_norm"),
            ElemwiseDims { elements: bind_elems, op_kind: ElemwiseOp::Norm },
            Precision::FP16,
            &[&bind],
        ));
        nodes.push(vsa(unbind.clone(), VsaOp::Unbind, b_unbind, &[&bind]));
        nodes.push(vsa(exec.clone(), VsaOp::Bind, b_exec, &[&unbind]));
        nodes.push(vsa(sim, VsaOp::Similarity, b_sim, &[&exec]));
    }

    WorkloadSpec { name: format!("resnet18-symbolic({ratio})"), loop_count: RESNET_SYMBOLIC_LOOPS, nodes }
}

/// Fraction of the NN+VSA footprint held by VSA operands.
pub fn symbolic_share(spec: &WorkloadSpec) -> f64 {
    let (mut nn, mut vsa) = (0u64, 0u64);
    for node in &spec.nodes {
        match node.payload {
            Payload::Layer(_) => nn += node.footprint_bytes(),
            Payload::Vsa(_) => vsa += node.footprint_bytes(),
            Payload::Elemwise(_) => {}
        }
    }
    vsa as f64 / (nn + vsa) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"{
        "name": "tiny", "loop_count": 1,
        "nodes": [
            {"id": "L1", "kind": "layer", "m": 4, "n": 8, "k": 8, "precision": "INT8", "deps": []},
            {"id": "V1", "kind": "vsa", "n_vec": 2, "d": 8, "block": 8, "op_kind": "bind",
             "precision": "INT4", "deps": ["L1"]}
        ]
    }"#;

    #[test]
    fn parses_minimal_document() {
        let spec = parse_workload(TINY).unwrap();
        assert_eq!(spec.nodes.len(), 2);
        assert_eq!(spec.loop_count, 1);
        let Payload::Layer(l) = spec.nodes[0].payload else { panic!() };
        assert_eq!((l.m, l.n, l.k), (4, 8, 8));
        assert_eq!(l.filter_bytes, 64);
        let Payload::Vsa(v) = spec.nodes[1].payload else { panic!() };
        assert_eq!(v.data_bytes, 8);
        assert!(find_cycle(&spec).is_none());
    }

    #[test]
    fn dangling_dependency_names_missing_id() {
        let text = TINY.replace(r#""deps": ["L1"]"#, r#""deps": ["missing"]"#);
        match parse_workload(&text) {
            Err(WorkloadError::DanglingDependency { node, missing }) => {
                assert_eq!(node, "V1");
                assert_eq!(missing, "missing");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycle_lists_members() {
        let text = r#"{"name": "c", "loop_count": 1, "nodes": [
            {"id": "v1", "kind": "vsa", "n_vec": 1, "d": 4, "op_kind": "bind", "precision": "INT4", "deps": ["v2"]},
            {"id": "v2", "kind": "vsa", "n_vec": 1, "d": 4, "op_kind": "bind", "precision": "INT4", "deps": ["v1"]}
        ]}"#;
        match parse_workload(text) {
            Err(WorkloadError::Cycle(ids)) => assert_eq!(ids, vec!["v1", "v2"]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_workload("{\n  \"name\": \"x\",\n  \"loop_count\": ,\n}").unwrap_err();
        match err {
            WorkloadError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let text = TINY.replace(r#""kind": "vsa""#, r#""kind": "pooling""#);
        assert!(matches!(parse_workload(&text), Err(WorkloadError::UnknownKind { kind, .. }) if kind == "pooling"));
    }

    #[test]
    fn misplaced_field_is_rejected() {
        let text = TINY.replace(r#""m": 4,"#, r#""m": 4, "n_vec": 3,"#);
        assert!(matches!(parse_workload(&text), Err(WorkloadError::Field { .. })));
    }

    #[test]
    fn validate_reports_block_and_dims() {
        let mut spec = parse_workload(TINY).unwrap();
        assert!(validate(&spec).is_empty());
        if let Payload::Vsa(v) = &mut spec.nodes[1].payload {
            v.block = 3;
        }
        if let Payload::Layer(l) = &mut spec.nodes[0].payload {
            l.m = 0;
        }
        let diags = validate(&spec);
        let text: Vec<String> = diags.iter().map(|d| d.to_string()).collect();
        assert!(text.iter().any(|t| t.contains("V1") && t.contains("block must divide d")), "{text:?}");
        assert!(text.iter().any(|t| t.contains("L1") && t.contains("m ≥ 1")), "{text:?}");
    }

    #[test]
    fn validate_flags_disconnected_graph() {
        let mut spec = parse_workload(TINY).unwrap();
        spec.nodes[1].deps.clear();
        assert!(validate(&spec).iter().any(|d| d.message.contains("connected")));
    }

    #[test]
    fn tiny_builtin() {
        let spec = builtin_workload("tiny-nsai").unwrap();
        assert_eq!(spec.nodes.len(), 2);
        assert!(validate(&spec).is_empty());
        let Payload::Vsa(v) = spec.nodes[1].payload else { panic!() };
        assert_eq!((v.n_vec, v.d), (2, 8));
    }

    #[test]
    fn unknown_builtin() {
        assert!(builtin_workload("vgg").is_err());
        assert!(builtin_workload("resnet18-symbolic(1.5)").is_err());
    }

    #[test]
    fn resnet_symbolic_balanced_share() {
        let spec = builtin_workload("resnet18-symbolic(0.5)").unwrap();
        assert!(validate(&spec).is_empty(), "{:?}", validate(&spec));
        let nn: u64 =
            spec.nodes.iter().filter(|n| matches!(n.payload, Payload::Layer(_))).map(|n| n.footprint_bytes()).sum();
        let vsa: u64 = spec
            .nodes
            .iter()
            .filter_map(|n| match n.payload {
                Payload::Vsa(v) => Some(v.data_bytes),
                _ => None,
            })
            .sum();
        let block_bytes = Precision::INT4.bytes_for(RESNET_SYMBOLIC_DIM);
        assert!(nn.abs_diff(vsa) <= block_bytes, "nn {nn} vsa {vsa}");
    }

    #[test]
    fn resnet_symbolic_share_at_080() {
        let spec = builtin_workload("resnet18-symbolic(0.8)").unwrap();
        assert!((symbolic_share(&spec) - 0.8).abs() <= 0.01);
    }

    #[test]
    fn resnet_has_expected_layer_count() {
        let spec = builtin_workload("resnet18-symbolic(0.2)").unwrap();
        let layers = spec.nodes.iter().filter(|n| matches!(n.payload, Payload::Layer(_))).count();
        assert_eq!(layers, 21);
        let Payload::Layer(c1) = spec.nodes[0].payload else { panic!() };
        assert_eq!((c1.m, c1.n, c1.k), (12544, 147, 64));
    }

    #[test]
    fn precision_bytes() {
        assert_eq!(Precision::INT4.bytes_for(1024 * 1024), 512 * 1024);
        assert_eq!(Precision::INT4.bytes_for(3), 2);
        assert_eq!(Precision::FP16.bytes_for(3), 6);
        assert_eq!(Precision::INT4.int_range(), Some((-8, 7)));
        assert_eq!(Precision::FP8.int_range(), None);
    }
}
