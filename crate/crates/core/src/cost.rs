// SPDX-License-Identifier: Apache-2.0

//! Analytical runtime and memory models for the adaptive array.
//!
//! All cycle counts are exact integers. Layer nodes follow the weight
//! stationary tile model, VSA nodes the spatial/temporal streaming model,
//! element-wise nodes a lane-parallel SIMD model.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{DataflowGraph, NodeKind};
use crate::workload::{ElemwiseOp, LayerDims, VsaDims};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CostError {
    #[error("argument `{0}` must be at least 1")]
    ZeroArgument(&'static str),
    #[error("{what}: expected {expected} entries, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
}

/// Sub-array shape and count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HwConfig {
    #[serde(rename = "H")]
    pub h: u64,
    #[serde(rename = "W")]
    pub w: u64,
    #[serde(rename = "N")]
    pub n: u64,
}

impl HwConfig {
    pub fn new(h: u64, w: u64, n: u64) -> Self {
        HwConfig { h, w, n }
    }

    pub fn pes(&self) -> u64 {
        self.h * self.w * self.n
    }
}

impl fmt::Display for HwConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.h, self.w, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VsaMode {
    Spatial,
    Temporal,
}

/// Sub-array allocation per layer node (`n_l`, indexed like `R_l`) and per
/// VSA node (`n_v`, indexed like `R_v`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MappingScheme {
    pub n_l: Vec<u64>,
    pub n_v: Vec<u64>,
    pub mode_v: VsaMode,
    pub sequential: bool,
}

impl MappingScheme {
    pub fn uniform(layers: usize, vsa: usize, n_l: u64, n_v: u64) -> Self {
        MappingScheme { n_l: vec![n_l; layers], n_v: vec![n_v; vsa], mode_v: VsaMode::Temporal, sequential: false }
    }

    /// Every kernel gets the whole array in turn.
    pub fn sequential(layers: usize, vsa: usize, n: u64) -> Self {
        MappingScheme { n_l: vec![n; layers], n_v: vec![n; vsa], mode_v: VsaMode::Temporal, sequential: true }
    }

    /// Violations of the allocation bounds and window capacity constraints.
    pub fn violations(&self, graph: &DataflowGraph, n: u64) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_l.len() != graph.r_l.len() {
            out.push(format!("N_l has {} entries, workload has {} layers", self.n_l.len(), graph.r_l.len()));
        }
        if self.n_v.len() != graph.r_v.len() {
            out.push(format!("N_v has {} entries, workload has {} VSA nodes", self.n_v.len(), graph.r_v.len()));
        }
        if !out.is_empty() {
            return out;
        }
        let hi = if self.sequential { n } else { n.saturating_sub(1) };
        for (id, &a) in graph.r_l.iter().zip(&self.n_l) {
            if a < 1 || a > hi {
                out.push(format!("N_l[{id}] = {a} outside [1, {hi}]"));
            }
        }
        for (id, &a) in graph.r_v.iter().zip(&self.n_v) {
            if a < 1 || a > hi {
                out.push(format!("N_v[{id}] = {a} outside [1, {hi}]"));
            }
        }
        if !self.sequential {
            for w in &graph.windows {
                let peak = self.n_v[w.start..=w.end].iter().copied().max().unwrap_or(0);
                let li = w.layer_index;
                if self.n_l[li] + peak > n {
                    out.push(format!("window of `{}`: N_l {} + max N_v {} > N = {n}", w.layer, self.n_l[li], peak));
                }
            }
        }
        out
    }
}

fn nonzero(name: &'static str, v: u64) -> Result<(), CostError> {
    if v == 0 {
        Err(CostError::ZeroArgument(name))
    } else {
        Ok(())
    }
}

/// Cycles of one layer on `n_l` sub-arrays:
/// `(2H + W + m - 2) * ceil(ceil(n / n_l) / H) * ceil(k / W)`.
pub fn layer_cycles(h: u64, w: u64, n_l: u64, dims: &LayerDims) -> Result<u64, CostError> {
    nonzero("H", h)?;
    nonzero("W", w)?;
    nonzero("N_l", n_l)?;
    nonzero("m", dims.m)?;
    nonzero("n", dims.n)?;
    nonzero("k", dims.k)?;
    Ok(layer_cycles_unchecked(h, w, n_l, dims))
}

#[inline]
pub(crate) fn layer_cycles_unchecked(h: u64, w: u64, n_l: u64, dims: &LayerDims) -> u64 {
    (2 * h + w + dims.m - 2) * dims.n.div_ceil(n_l).div_ceil(h) * dims.k.div_ceil(w)
}

/// Per-batch streaming latency `3H + d - 1`.
pub fn stream_latency(h: u64, d: u64) -> u64 {
    3 * h + d - 1
}

/// `n_vec * ceil(d / (W * H * n_v)) * T`.
pub fn vsa_spatial(h: u64, w: u64, n_v: u64, dims: &VsaDims) -> Result<u64, CostError> {
    check_vsa(h, w, n_v, dims)?;
    Ok(vsa_spatial_unchecked(h, w, n_v, dims))
}

/// `ceil(n_vec / W) * ceil(d / (H * n_v)) * T`.
pub fn vsa_temporal(h: u64, w: u64, n_v: u64, dims: &VsaDims) -> Result<u64, CostError> {
    check_vsa(h, w, n_v, dims)?;
    Ok(vsa_temporal_unchecked(h, w, n_v, dims))
}

fn check_vsa(h: u64, w: u64, n_v: u64, dims: &VsaDims) -> Result<(), CostError> {
    nonzero("H", h)?;
    nonzero("W", w)?;
    nonzero("N_v", n_v)?;
    nonzero("n_vec", dims.n_vec)?;
    nonzero("d", dims.d)
}

#[inline]
pub(crate) fn vsa_spatial_unchecked(h: u64, w: u64, n_v: u64, dims: &VsaDims) -> u64 {
    dims.n_vec * dims.d.div_ceil(w * h * n_v) * stream_latency(h, dims.d)
}

#[inline]
pub(crate) fn vsa_temporal_unchecked(h: u64, w: u64, n_v: u64, dims: &VsaDims) -> u64 {
    dims.n_vec.div_ceil(w) * dims.d.div_ceil(h * n_v) * stream_latency(h, dims.d)
}

pub fn vsa_cycles(mode: VsaMode, h: u64, w: u64, n_v: u64, dims: &VsaDims) -> Result<u64, CostError> {
    match mode {
        VsaMode::Spatial => vsa_spatial(h, w, n_v, dims),
        VsaMode::Temporal => vsa_temporal(h, w, n_v, dims),
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), CostError> {
    if expected == got {
        Ok(())
    } else {
        Err(CostError::LengthMismatch { what, expected, got })
    }
}

/// Sum of [`layer_cycles`] over all layer nodes.
pub fn nn_total(h: u64, w: u64, n_l: &[u64], layers: &[LayerDims]) -> Result<u64, CostError> {
    check_len("N_l", layers.len(), n_l.len())?;
    layers.iter().zip(n_l).map(|(d, &a)| layer_cycles(h, w, a, d)).sum()
}

/// Faster of the two whole-set VSA sums; ties go to temporal.
pub fn vsa_total(h: u64, w: u64, n_v: &[u64], nodes: &[VsaDims]) -> Result<(u64, VsaMode), CostError> {
    check_len("N_v", nodes.len(), n_v.len())?;
    let mut temporal = 0;
    let mut spatial = 0;
    for (d, &a) in nodes.iter().zip(n_v) {
        temporal += vsa_temporal(h, w, a, d)?;
        spatial += vsa_spatial(h, w, a, d)?;
    }
    Ok(pick_mode(temporal, spatial))
}

#[inline]
pub(crate) fn pick_mode(temporal: u64, spatial: u64) -> (u64, VsaMode) {
    if spatial < temporal {
        (spatial, VsaMode::Spatial)
    } else {
        (temporal, VsaMode::Temporal)
    }
}

/// Whole array per kernel, run back to back.
pub fn seq_cycles(h: u64, w: u64, n: u64, graph: &DataflowGraph) -> Result<u64, CostError> {
    nonzero("N", n)?;
    let t_nn = nn_total(h, w, &vec![n; graph.layers.len()], &graph.layers)?;
    let (t_vsa, _) = vsa_total(h, w, &vec![n; graph.vsa.len()], &graph.vsa)?;
    Ok(t_nn + t_vsa)
}

/// Cycles over `loops` iterations. Sequential runs repeat `t_seq`; parallel
/// runs fill with the first NN pass, overlap NN and VSA in steady state and
/// drain with the last VSA pass.
pub fn pipeline_total(sequential: bool, loops: u64, t_nn: u64, t_vsa: u64, t_para: u64, t_seq: u64) -> u64 {
    if sequential {
        loops * t_seq
    } else {
        t_nn + loops.saturating_sub(1) * t_para + t_vsa
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_node_cycles: BTreeMap<String, u64>,
    pub t_nn: u64,
    pub t_vsa: u64,
    pub t_para: u64,
    pub t_seq: u64,
    pub mode_v: VsaMode,
    pub sequential: bool,
    pub loop_count: u64,
    pub total: u64,
}

impl CostReport {
    /// One `node,kind,cycles` row per node, in graph order.
    pub fn to_csv(&self, graph: &DataflowGraph) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["node", "kind", "cycles"]).unwrap();
        for id in graph.node_order() {
            let kind = graph.kind_of(id).map(NodeKind::name).unwrap_or("?");
            let cycles = self.per_node_cycles.get(id).copied().unwrap_or(0);
            wtr.write_record([id, kind, &cycles.to_string()]).unwrap();
        }
        String::from_utf8(wtr.into_inner().unwrap()).unwrap()
    }
}

/// Evaluates every runtime term of a design point.
pub fn evaluate(graph: &DataflowGraph, cfg: HwConfig, mapping: &MappingScheme) -> Result<CostReport, CostError> {
    let HwConfig { h, w, n } = cfg;
    check_len("N_l", graph.layers.len(), mapping.n_l.len())?;
    check_len("N_v", graph.vsa.len(), mapping.n_v.len())?;
    let t_seq = seq_cycles(h, w, n, graph)?;
    let t_nn = nn_total(h, w, &mapping.n_l, &graph.layers)?;
    let (t_vsa, mode_v) = vsa_total(h, w, &mapping.n_v, &graph.vsa)?;
    let t_para = t_nn.max(t_vsa);

    let mut per_node_cycles = BTreeMap::new();
    for ((id, d), &a) in graph.r_l.iter().zip(&graph.layers).zip(&mapping.n_l) {
        per_node_cycles.insert(id.clone(), layer_cycles(h, w, a, d)?);
    }
    for ((id, d), &a) in graph.r_v.iter().zip(&graph.vsa).zip(&mapping.n_v) {
        per_node_cycles.insert(id.clone(), vsa_cycles(mode_v, h, w, a, d)?);
    }
    for (id, e) in graph.elemwise_ids.iter().zip(&graph.elemwise) {
        per_node_cycles.insert(id.clone(), elemwise_cycles(e.elements, e.op_kind, MIN_SIMD_LANES));
    }
    let loop_count = graph.loop_count;
    let total = pipeline_total(mapping.sequential, loop_count, t_nn, t_vsa, t_para, t_seq);
    Ok(CostReport {
        per_node_cycles,
        t_nn,
        t_vsa,
        t_para,
        t_seq,
        mode_v,
        sequential: mapping.sequential,
        loop_count,
        total,
    })
}

/// Total runtime over the graph's loop count.
pub fn total_runtime(graph: &DataflowGraph, cfg: HwConfig, mapping: &MappingScheme) -> Result<u64, CostError> {
    evaluate(graph, cfg, mapping).map(|r| r.total)
}

/// On-chip buffer sizes in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryPlan {
    #[serde(rename = "M_A1")]
    pub m_a1: u64,
    #[serde(rename = "M_A2")]
    pub m_a2: u64,
    #[serde(rename = "M_B")]
    pub m_b: u64,
    #[serde(rename = "M_C")]
    pub m_c: u64,
    pub cache: u64,
    /// Single merged Mem A region, present when kernels run one at a time.
    #[serde(rename = "M_A_merged")]
    pub m_a_merged: Option<u64>,
    pub simd_lanes: u64,
}

impl MemoryPlan {
    pub fn from_blocks(m_a1: u64, m_a2: u64, m_b: u64, m_c: u64, sequential: bool, simd_lanes: u64) -> Self {
        MemoryPlan {
            m_a1,
            m_a2,
            m_b,
            m_c,
            cache: 2 * (m_a1 + m_a2 + m_b + m_c),
            m_a_merged: sequential.then_some(m_a1 + m_a2),
            simd_lanes,
        }
    }

    pub fn cache_identity_holds(&self) -> bool {
        self.cache == 2 * (self.m_a1 + self.m_a2 + self.m_b + self.m_c)
    }
}

/// Decimal megabytes, as printed in reports.
pub fn megabytes(bytes: u64) -> f64 {
    bytes as f64 / 1e6
}

pub fn memory_plan(graph: &DataflowGraph, cfg: HwConfig, mapping: &MappingScheme) -> MemoryPlan {
    let m_a1 = graph.layers.iter().map(|l| l.filter_bytes).max().unwrap_or(0);
    let m_a2 = graph.vsa.iter().map(|v| v.data_bytes).max().unwrap_or(0);
    let m_b = graph.layers.iter().map(|l| l.ifmap_bytes).max().unwrap_or(0);
    let m_c = graph.output_bytes.values().copied().max().unwrap_or(0);
    let (lanes, _) = simd_size(graph, cfg, mapping);
    MemoryPlan::from_blocks(m_a1, m_a2, m_b, m_c, mapping.sequential, lanes)
}

pub const MIN_SIMD_LANES: u64 = 8;
pub const MAX_SIMD_LANES: u64 = 512;

/// Cycles per element batch: 1 for add/mul/reduce, 4 for transcendental and
/// normalising ops.
pub fn op_latency(op: ElemwiseOp) -> u64 {
    match op {
        ElemwiseOp::Add | ElemwiseOp::MulDiv | ElemwiseOp::ReduceSum => 1,
        ElemwiseOp::ExpLogTanh | ElemwiseOp::Norm | ElemwiseOp::Softmax => 4,
    }
}

pub fn elemwise_cycles(elements: u64, op: ElemwiseOp, lanes: u64) -> u64 {
    elements.div_ceil(lanes) * op_latency(op)
}

/// Smallest power-of-two lane count that hides every stage's attached
/// element-wise work behind that stage's array cycles. Clamps at
/// [`MAX_SIMD_LANES`] and returns a diagnostic when hiding is impossible.
pub fn simd_size(graph: &DataflowGraph, cfg: HwConfig, mapping: &MappingScheme) -> (u64, Option<String>) {
    let Ok(report) = evaluate(graph, cfg, mapping) else {
        return (MIN_SIMD_LANES, Some("mapping does not match graph".into()));
    };
    let mut lanes = MIN_SIMD_LANES;
    loop {
        let blocking = graph.stages.iter().find(|stage| {
            let mut array = 0;
            let mut simd = 0;
            for id in std::iter::once(&stage.critical).chain(&stage.attached) {
                match graph.elemwise_dims(id) {
                    Some(e) if id != &stage.critical => simd += elemwise_cycles(e.elements, e.op_kind, lanes),
                    Some(_) => {}
                    None => array += report.per_node_cycles.get(id).copied().unwrap_or(0),
                }
            }
            simd > array
        });
        match blocking {
            None => return (lanes, None),
            Some(stage) if lanes >= MAX_SIMD_LANES => {
                return (
                    MAX_SIMD_LANES,
                    Some(format!(
                        "element-wise work attached to `{}` cannot be hidden even with {MAX_SIMD_LANES} lanes",
                        stage.critical
                    )),
                );
            }
            Some(_) => lanes *= 2,
        }
    }
}
