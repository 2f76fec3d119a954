// SPDX-License-Identifier: Apache-2.0

//! Design documents, ablation sweeps and simulator replay.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cost::{
    evaluate, layer_cycles, megabytes, seq_cycles, stream_latency, vsa_cycles, CostError, CostReport, HwConfig,
    MappingScheme, MemoryPlan, VsaMode,
};
use crate::dse::{run_dse, DseError, DseOutcome, DseParams};
use crate::graph::DataflowGraph;
use crate::oracles::{blockwise, circ_conv, circ_corr, gemm, Matrix};
use crate::sim::{configure, ColumnRef, ConvSchedule, FoldingConfig, SimError};
use crate::workload::{
    builtin_workload, parse_workload, serialize_workload, Payload, Precision, VsaOp, WorkloadError, WorkloadSpec,
};

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read `{path}`: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// Reads a workload file, or a bundled one when `arg` is `builtin:<name>`.
pub fn load_workload(arg: &str) -> Result<WorkloadSpec, LoadError> {
    if let Some(name) = arg.strip_prefix("builtin:") {
        return Ok(builtin_workload(name)?);
    }
    let text =
        std::fs::read_to_string(Path::new(arg)).map_err(|source| LoadError::Io { path: arg.to_string(), source })?;
    Ok(parse_workload(&text)?)
}

/// Hex SHA-256 of the canonical serialization.
pub fn workload_hash(spec: &WorkloadSpec) -> String {
    hex::encode(Sha256::digest(serialize_workload(spec).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadRef {
    pub name: String,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    #[serde(rename = "N_l")]
    pub n_l: u64,
    #[serde(rename = "N_v")]
    pub n_v: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeMapping {
    #[serde(rename = "R_l")]
    pub r_l: Vec<String>,
    #[serde(rename = "N_l")]
    pub n_l: Vec<u64>,
    #[serde(rename = "R_v")]
    pub r_v: Vec<String>,
    #[serde(rename = "N_v")]
    pub n_v: Vec<u64>,
    pub mode_v: VsaMode,
    pub sequential: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Precisions {
    pub nn: String,
    pub symbolic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleSummary {
    pub t_nn: u64,
    pub t_vsa: u64,
    pub t_para: u64,
    pub t_seq: u64,
    pub total: u64,
    pub loop_count: u64,
}

impl From<&CostReport> for CycleSummary {
    fn from(r: &CostReport) -> Self {
        CycleSummary {
            t_nn: r.t_nn,
            t_vsa: r.t_vsa,
            t_para: r.t_para,
            t_seq: r.t_seq,
            total: r.total,
            loop_count: r.loop_count,
        }
    }
}

/// Accelerator configuration and schedule emitted by the search.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfigDoc {
    pub workload: WorkloadRef,
    pub array: HwConfig,
    pub default_partition: Partition,
    pub per_node_mapping: NodeMapping,
    /// Stage members, critical node first.
    pub stage_order: Vec<Vec<String>>,
    pub simd_lanes: u64,
    pub memory: MemoryPlan,
    pub precisions: Precisions,
    pub cycles: CycleSummary,
}

fn precision_label(spec: &WorkloadSpec, pick: impl Fn(&Payload) -> bool) -> String {
    let set: BTreeSet<String> =
        spec.nodes.iter().filter(|n| pick(&n.payload)).map(|n| n.precision.to_string()).collect();
    if set.is_empty() {
        "none".into()
    } else {
        set.into_iter().collect::<Vec<_>>().join("/")
    }
}

impl DesignConfigDoc {
    pub fn new(spec: &WorkloadSpec, graph: &DataflowGraph, outcome: &DseOutcome) -> Self {
        let p = &outcome.point;
        let default_partition = if p.mapping.sequential {
            Partition { n_l: p.cfg.n, n_v: p.cfg.n }
        } else {
            let bar = outcome.phase1.mapping.n_l.first().copied().unwrap_or(0);
            Partition { n_l: bar, n_v: p.cfg.n - bar }
        };
        DesignConfigDoc {
            workload: WorkloadRef { name: spec.name.clone(), hash: workload_hash(spec) },
            array: p.cfg,
            default_partition,
            per_node_mapping: NodeMapping {
                r_l: graph.r_l.clone(),
                n_l: p.mapping.n_l.clone(),
                r_v: graph.r_v.clone(),
                n_v: p.mapping.n_v.clone(),
                mode_v: p.cost.mode_v,
                sequential: p.mapping.sequential,
            },
            stage_order: graph.stages.iter().map(|s| s.members().cloned().collect()).collect(),
            simd_lanes: outcome.plan.simd_lanes,
            memory: outcome.plan,
            precisions: Precisions {
                nn: precision_label(spec, |p| matches!(p, Payload::Layer(_))),
                symbolic: precision_label(spec, |p| matches!(p, Payload::Vsa(_))),
            },
            cycles: CycleSummary::from(&p.cost),
        }
    }

    pub fn mapping(&self) -> MappingScheme {
        let m = &self.per_node_mapping;
        MappingScheme { n_l: m.n_l.clone(), n_v: m.n_v.clone(), mode_v: m.mode_v, sequential: m.sequential }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config was generated for workload `{expected}`, got `{got}`")]
    WorkloadMismatch { expected: String, got: String },
    #[error("config node order does not match the workload graph")]
    NodeOrder,
    #[error("invalid mapping: {}", .0.join("; "))]
    Mapping(Vec<String>),
    #[error("array must have H, W, N >= 1")]
    Array,
    #[error("recomputed cycles {got:?} differ from the config's {expected:?}")]
    Cycles { expected: CycleSummary, got: CycleSummary },
    #[error("memory plan breaks cache = 2 * (M_A1 + M_A2 + M_B + M_C)")]
    Memory,
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// Re-checks a config against its workload and re-runs the cost model; the
/// cycle numbers must come out identical.
pub fn verify_config(
    spec: &WorkloadSpec,
    graph: &DataflowGraph,
    doc: &DesignConfigDoc,
) -> Result<CostReport, ConfigError> {
    let hash = workload_hash(spec);
    if doc.workload.hash != hash {
        return Err(ConfigError::WorkloadMismatch { expected: doc.workload.hash.clone(), got: hash });
    }
    if doc.per_node_mapping.r_l != graph.r_l || doc.per_node_mapping.r_v != graph.r_v {
        return Err(ConfigError::NodeOrder);
    }
    let HwConfig { h, w, n } = doc.array;
    if h == 0 || w == 0 || n == 0 {
        return Err(ConfigError::Array);
    }
    let mapping = doc.mapping();
    let problems = mapping.violations(graph, n);
    if !problems.is_empty() {
        return Err(ConfigError::Mapping(problems));
    }
    if !doc.memory.cache_identity_holds() {
        return Err(ConfigError::Memory);
    }
    let report = evaluate(graph, doc.array, &mapping)?;
    let got = CycleSummary::from(&report);
    if got != doc.cycles {
        return Err(ConfigError::Cycles { expected: doc.cycles.clone(), got });
    }
    Ok(report)
}

/// Human-readable summary lines of a config.
pub fn summary_lines(doc: &DesignConfigDoc, freq_mhz: Option<f64>) -> Vec<(String, String)> {
    let m = &doc.memory;
    let mut rows = vec![
        ("workload".to_string(), doc.workload.name.clone()),
        ("array".to_string(), doc.array.to_string()),
        ("mode".to_string(), if doc.per_node_mapping.sequential { "sequential".into() } else { "parallel".into() }),
        ("default_partition".to_string(), format!("{} : {}", doc.default_partition.n_l, doc.default_partition.n_v)),
        ("vsa_mapping".to_string(), format!("{:?}", doc.per_node_mapping.mode_v).to_lowercase()),
        ("simd_lanes".to_string(), doc.simd_lanes.to_string()),
        ("mem_a1_mb".to_string(), format!("{:.2}", megabytes(m.m_a1))),
        ("mem_a2_mb".to_string(), format!("{:.2}", megabytes(m.m_a2))),
        ("mem_b_mb".to_string(), format!("{:.2}", megabytes(m.m_b))),
        ("mem_c_mb".to_string(), format!("{:.2}", megabytes(m.m_c))),
        ("cache_mb".to_string(), format!("{:.2}", megabytes(m.cache))),
        ("cache_bytes".to_string(), m.cache.to_string()),
        ("total_cycles".to_string(), doc.cycles.total.to_string()),
    ];
    if let Some(f) = freq_mhz {
        rows.push(("total_ms".to_string(), format!("{:.6}", cycles_to_ms(doc.cycles.total, f))));
    }
    rows
}

pub fn cycles_to_ms(cycles: u64, freq_mhz: f64) -> f64 {
    cycles as f64 / (freq_mhz * 1e3)
}

/// Baseline and search results for one symbolic share.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub symbolic_share: f64,
    pub t_baseline_seq: u64,
    pub t_nsflow_phase1: u64,
    pub t_nsflow_phase2: u64,
    pub speedup_p1: f64,
    pub speedup_p2: f64,
    #[serde(rename = "H")]
    pub h: u64,
    #[serde(rename = "W")]
    pub w: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub sequential: bool,
}

/// Square-as-possible single array with `max_pes` PEs.
pub fn baseline_array(max_pes: u64) -> HwConfig {
    let bits = 63 - max_pes.max(1).leading_zeros() as u64;
    let h = 1u64 << bits.div_ceil(2);
    HwConfig::new(h, max_pes / h, 1)
}

/// For every ratio: the monolithic baseline running kernels back to back,
/// against the searched design after Phase I and after Phase II.
pub fn run_ablation(ratios: &[f64], params: &DseParams) -> Result<Vec<AblationRow>, AblationError> {
    let base = baseline_array(params.max_pes);
    let mut rows = Vec::new();
    for &r in ratios {
        if !(r > 0.0 && r < 1.0) {
            return Err(AblationError::Ratio(r));
        }
        let spec = builtin_workload(&format!("resnet18-symbolic({r})"))?;
        let graph = DataflowGraph::build(&spec).expect("bundled workload is a DAG");
        let t_base = graph.loop_count * seq_cycles(base.h, base.w, base.n, &graph)?;
        let out = run_dse(&graph, params)?;
        let (p1, p2) = (out.phase1.cost.total, out.point.cost.total);
        rows.push(AblationRow {
            symbolic_share: r,
            t_baseline_seq: t_base,
            t_nsflow_phase1: p1,
            t_nsflow_phase2: p2,
            speedup_p1: t_base as f64 / p1 as f64,
            speedup_p2: t_base as f64 / p2 as f64,
            h: out.point.cfg.h,
            w: out.point.cfg.w,
            n: out.point.cfg.n,
            sequential: out.point.mapping.sequential,
        });
    }
    Ok(rows)
}

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("ratio {0} outside (0, 1)")]
    Ratio(f64),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Dse(#[from] DseError),
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.serialize(r).expect("rows serialize");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

/// Measured against analytical cycles for one replayed node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReplay {
    pub node: String,
    pub kind: &'static str,
    pub analytical: u64,
    pub measured: Option<u64>,
    pub oracle_equal: Option<bool>,
    /// Tiles or passes the node took, the unit of the timing tolerance.
    pub units: u64,
    /// The analytical figure is only an upper bound (short blocks finish
    /// faster than a full-vector stream).
    pub upper_bound: bool,
    pub note: String,
}

impl NodeReplay {
    pub fn timing_ok(&self) -> bool {
        let tol = 2 * self.units.max(1);
        self.measured.is_none_or(|m| {
            if self.upper_bound {
                m <= self.analytical + tol
            } else {
                m.abs_diff(self.analytical) <= tol
            }
        })
    }

    pub fn passed(&self) -> bool {
        self.oracle_equal != Some(false) && self.timing_ok()
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Default cap on simulated PE-steps (cycles times all PEs) per node; larger nodes are reported
/// with their analytical cycles only.
pub const REPLAY_BUDGET: u64 = 20_000_000;

fn random_vec(rng: &mut ChaCha8Rng, len: usize, p: Precision) -> Vec<i32> {
    let (lo, hi) = p.int_range().unwrap_or((-8, 7));
    (0..len).map(|_| rng.gen_range(lo..=hi)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: Precision) -> Matrix<i32> {
    Matrix { rows, cols, data: random_vec(rng, rows * cols, p) }
}

fn to_i64(v: Vec<i32>) -> Vec<i64> {
    v.into_iter().map(i64::from).collect()
}

/// `B'[i] = B[-i mod d]`, which turns correlation into convolution.
fn involution(b: &[i32]) -> Vec<i32> {
    let d = b.len();
    (0..d).map(|i| b[(d - i) % d]).collect()
}

/// Replays every array node of a verified config on the simulator with
/// random operands and compares against the oracles and the cost model.
pub fn replay(
    spec: &WorkloadSpec,
    graph: &DataflowGraph,
    doc: &DesignConfigDoc,
    seed: u64,
    budget: u64,
) -> Result<Vec<NodeReplay>, ReplayError> {
    let report = verify_config(spec, graph, doc)?;
    let HwConfig { h, w, n } = doc.array;
    let (hu, wu, nu) = (h as usize, w as usize, n as usize);
    let mapping = doc.mapping();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    for (i, (id, dims)) in graph.r_l.iter().zip(&graph.layers).enumerate() {
        let g = mapping.n_l[i];
        let analytical = layer_cycles(h, w, g, dims).map_err(ConfigError::from)?;
        let units = dims.n.div_ceil(g).div_ceil(h) * dims.k.div_ceil(w);
        let mut row = NodeReplay {
            node: id.clone(),
            kind: "layer",
            analytical,
            measured: None,
            oracle_equal: None,
            units,
            upper_bound: false,
            note: String::new(),
        };
        if analytical.saturating_mul(h * w * n) > budget {
            row.note = "over simulation budget".into();
            out.push(row);
            continue;
        }
        let p = spec.node(id).map_or(Precision::INT8, |n| n.precision);
        let a = random_matrix(&mut rng, dims.m as usize, dims.n as usize, p);
        let b = random_matrix(&mut rng, dims.n as usize, dims.k as usize, p);
        let mut sim = configure(hu, wu, nu, FoldingConfig::split(nu, g as usize))?;
        let r = sim.run_gemm(0, &a, &b)?;
        let expect = gemm(&a.map(i64::from), &b.map(i64::from)).expect("shapes agree");
        row.measured = Some(r.cycles);
        row.oracle_equal = Some((0..expect.rows).all(|i| r.outputs[i] == expect.row(i)));
        out.push(row);
    }

    for (j, (id, dims)) in graph.r_v.iter().zip(&graph.vsa).enumerate() {
        let nv = mapping.n_v[j];
        let analytical = vsa_cycles(report.mode_v, h, w, nv, dims).map_err(ConfigError::from)?;
        let units = analytical / stream_latency(h, dims.d).max(1);
        let mut row = NodeReplay {
            node: id.clone(),
            kind: "vsa",
            analytical,
            measured: None,
            oracle_equal: None,
            units,
            upper_bound: dims.block < dims.d,
            note: String::new(),
        };
        if analytical.saturating_mul(h * w * n) > budget {
            row.note = "over simulation budget".into();
            out.push(row);
            continue;
        }
        let p = spec.node(id).map_or(Precision::INT4, |n| n.precision);
        let (d, block) = (dims.d as usize, dims.block as usize);
        let a: Vec<Vec<i32>> = (0..dims.n_vec).map(|_| random_vec(&mut rng, d, p)).collect();
        let b: Vec<Vec<i32>> = (0..dims.n_vec).map(|_| random_vec(&mut rng, d, p)).collect();
        let correlate = dims.op_kind != VsaOp::Bind;
        // Correlation runs as convolution with each block's key involuted.
        let streamed: Vec<Vec<i32>> = if correlate {
            b.iter().map(|v| v.chunks(block).flat_map(involution).collect()).collect()
        } else {
            b.clone()
        };
        let first = nu - nv as usize;
        let columns: Vec<ColumnRef> =
            (first..nu).flat_map(|s| (0..wu).map(move |c| ColumnRef { sub_array: s, col: c })).collect();
        let schedule = match report.mode_v {
            VsaMode::Temporal => ConvSchedule::Temporal { w: wu, n_v: nv as usize },
            VsaMode::Spatial => ConvSchedule::Spatial,
        };
        let folding = if mapping.sequential { FoldingConfig::all_vsa(nu) } else { FoldingConfig::split(nu, first) };
        let mut sim = configure(hu, wu, nu, folding)?;
        let r = sim.run_circconv_tiled(&columns, &a, &streamed, block, schedule)?;
        let kernel = if correlate { circ_corr::<i32> } else { circ_conv::<i32> };
        let equal = a
            .iter()
            .zip(&b)
            .zip(&r.outputs)
            .all(|((x, y), got)| to_i64(blockwise(kernel, x, y, block).expect("block divides d")) == *got);
        row.measured = Some(r.cycles);
        row.oracle_equal = Some(equal);
        if dims.op_kind == VsaOp::Similarity {
            row.note = "scored as blockwise correlation; lag 0 is the dot product".into();
        }
        out.push(row);
    }

    for id in &graph.elemwise_ids {
        out.push(NodeReplay {
            node: id.clone(),
            kind: "elemwise",
            analytical: report.per_node_cycles.get(id).copied().unwrap_or(0),
            measured: None,
            oracle_equal: None,
            units: 0,
            upper_bound: false,
            note: "SIMD unit is modelled analytically".into(),
        });
    }
    Ok(out)
}

/// Outcome of randomized simulator-vs-oracle checks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OracleCheck {
    pub gemm_cases: u64,
    pub conv_cases: u64,
    pub gemm_mismatches: u64,
    pub conv_mismatches: u64,
    /// Tiles whose measured latency is more than 2 cycles from `2H + W + m - 2`.
    pub tile_timing_violations: u64,
    /// Passes whose measured latency is more than 2 cycles from `3H + d - 1`.
    pub pass_timing_violations: u64,
    pub failures: Vec<String>,
}

impl OracleCheck {
    pub fn mismatches(&self) -> u64 {
        self.gemm_mismatches + self.conv_mismatches
    }

    pub fn clean(&self) -> bool {
        self.mismatches() == 0 && self.tile_timing_violations == 0 && self.pass_timing_violations == 0
    }
}

const SIDES: [usize; 4] = [2, 4, 8, 16];

/// `cases` random GEMMs (INT8) and `cases` random blockwise convolutions
/// (INT4, block no taller than a column) on random array shapes.
pub fn check_oracles(seed: u64, cases: u64) -> Result<OracleCheck, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = OracleCheck::default();
    for case in 0..cases {
        let (h, w) = (SIDES[rng.gen_range(0..4)], SIDES[rng.gen_range(0..4)]);
        let n_sub = rng.gen_range(1..=3);
        let group = rng.gen_range(1..=n_sub);
        let (m, n, k) = (rng.gen_range(1..=24), rng.gen_range(1..=40), rng.gen_range(1..=24));
        let a = random_matrix(&mut rng, m, n, Precision::INT8);
        let b = random_matrix(&mut rng, n, k, Precision::INT8);
        let mut sim = configure(h, w, n_sub, FoldingConfig::split(n_sub, group))?;
        let r = sim.run_gemm(0, &a, &b)?;
        let expect = gemm(&a.map(i64::from), &b.map(i64::from)).expect("shapes agree");
        rep.gemm_cases += 1;
        if (0..m).any(|i| r.outputs[i] != expect.row(i)) {
            rep.gemm_mismatches += 1;
            rep.failures.push(format!("gemm case {case}: {m}x{n}x{k} on {h}x{w}, group {group}"));
        }
        let tile = (2 * h + w + m - 2) as u64;
        if r.max_unit_latency.abs_diff(tile) > 2 {
            rep.tile_timing_violations += 1;
            rep.failures.push(format!("gemm case {case}: tile latency {} vs {tile}", r.max_unit_latency));
        }
    }
    for case in 0..cases {
        let (h, w) = (SIDES[rng.gen_range(0..4)], SIDES[rng.gen_range(0..4)]);
        let block = rng.gen_range(1..=h);
        let d = block * rng.gen_range(1..=3);
        let vecs = rng.gen_range(1..=4);
        let a: Vec<Vec<i32>> = (0..vecs).map(|_| random_vec(&mut rng, d, Precision::INT4)).collect();
        let b: Vec<Vec<i32>> = (0..vecs).map(|_| random_vec(&mut rng, d, Precision::INT4)).collect();
        let columns: Vec<ColumnRef> = (0..rng.gen_range(1..=w)).map(|c| ColumnRef { sub_array: 0, col: c }).collect();
        let mut sim = configure(h, w, 1, FoldingConfig::all_vsa(1))?;
        let r = sim.run_circconv(&columns, &a, &b, block)?;
        rep.conv_cases += 1;
        let equal = a
            .iter()
            .zip(&b)
            .zip(&r.outputs)
            .all(|((x, y), got)| to_i64(blockwise(circ_conv, x, y, block).unwrap()) == *got);
        if !equal {
            rep.conv_mismatches += 1;
            rep.failures.push(format!("conv case {case}: d={d} block={block} on {h}x{w}"));
        }
        let t = stream_latency(h as u64, block as u64);
        if r.max_unit_latency.abs_diff(t) > 2 {
            rep.pass_timing_violations += 1;
            rep.failures.push(format!("conv case {case}: pass latency {} vs {t}", r.max_unit_latency));
        }
    }
    Ok(rep)
}
