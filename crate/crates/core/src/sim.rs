// SPDX-License-Identifier: Apache-2.0

//! Cycle-level functional simulator of the folded systolic array.
//!
//! Every sub-array is an `H x W` grid of PEs. NN sub-arrays run a
//! weight-stationary GEMM dataflow: weights shift down into the stationary
//! registers, activations move right through the streaming registers and
//! partial sums flow down. VSA sub-arrays compute one circular convolution
//! per column: the first vector sits in the stationary registers and the
//! second streams down through alternating passing and streaming registers,
//! so it advances one row every two cycles while partial sums advance one
//! row per cycle.

use std::fmt::Write as _;

use thiserror::Error;

use crate::oracles::Matrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("folding assigns {got} sub-arrays, array has {expected}")]
    FoldingSize { expected: usize, got: usize },
    #[error("NN group {0} is not contiguous")]
    NonContiguous(u32),
    #[error("array dimensions must be at least 1")]
    ZeroDim,
    #[error("no NN group {0}")]
    UnknownGroup(u32),
    #[error("column {0:?} is not on a VSA sub-array")]
    NotVsaColumn(ColumnRef),
    #[error("column {0:?} used by two jobs")]
    ColumnConflict(ColumnRef),
    #[error("sub-array {0} used by two jobs")]
    SubArrayConflict(usize),
    #[error("dimension mismatch: {0}")]
    Dims(String),
    #[error("block {block} exceeds column height {h}")]
    BlockTooTall { block: usize, h: usize },
    #[error("accumulator overflow")]
    Overflow,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PeState {
    pub stationary: i32,
    pub streaming: i32,
    pub passing: i32,
    pub acc: i32,
    pub passing_bypassed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubArrayRole {
    /// Member of a fused NN group.
    Nn(u32),
    /// Every column runs its own circular convolution.
    Vsa,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldingConfig {
    pub assignment: Vec<SubArrayRole>,
}

impl FoldingConfig {
    pub fn all_vsa(n: usize) -> Self {
        FoldingConfig { assignment: vec![SubArrayRole::Vsa; n] }
    }

    pub fn all_nn(n: usize) -> Self {
        FoldingConfig { assignment: vec![SubArrayRole::Nn(0); n] }
    }

    /// First `nn` sub-arrays form group 0, the rest run VSA.
    pub fn split(n: usize, nn: usize) -> Self {
        let mut assignment = vec![SubArrayRole::Vsa; n];
        assignment[..nn.min(n)].fill(SubArrayRole::Nn(0));
        FoldingConfig { assignment }
    }

    pub fn group(&self, id: u32) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == SubArrayRole::Nn(id)).collect()
    }

    fn check(&self, n: usize) -> Result<(), SimError> {
        if self.assignment.len() != n {
            return Err(SimError::FoldingSize { expected: n, got: self.assignment.len() });
        }
        let mut seen = Vec::new();
        for role in &self.assignment {
            if let SubArrayRole::Nn(g) = *role {
                if !seen.contains(&g) {
                    seen.push(g);
                    let members = self.group(g);
                    if members.last().unwrap() - members[0] + 1 != members.len() {
                        return Err(SimError::NonContiguous(g));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub sub_array: usize,
    pub col: usize,
}

/// Values presented at a sub-array's edge ports during one step. Ports are
/// cleared after every step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortInputs {
    /// Activations entering column 0, per row (GEMM mode).
    pub left: Vec<i32>,
    /// Stream entering row 0, per column (convolution mode).
    pub stream: Vec<i32>,
    /// Value shifted into the top stationary register, per column.
    pub load: Vec<Option<i32>>,
}

impl PortInputs {
    fn new(h: usize, w: usize) -> Self {
        PortInputs { left: vec![0; h], stream: vec![0; w], load: vec![None; w] }
    }

    fn clear(&mut self) {
        self.left.fill(0);
        self.stream.fill(0);
        self.load.fill(None);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub cycles: u64,
    pub outputs: Vec<Vec<i64>>,
    /// Useful MACs over PE-cycles of the resources the job held.
    pub utilization: f64,
    /// Longest observed load-to-last-output span of a single tile or pass.
    pub max_unit_latency: u64,
}

/// One accumulator value, recorded when tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRecord {
    pub cycle: u64,
    pub sub_array: usize,
    pub row: usize,
    pub col: usize,
    pub acc: i32,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    h: usize,
    w: usize,
    folding: FoldingConfig,
    pes: Vec<Vec<PeState>>,
    ports: Vec<PortInputs>,
    cycle: u64,
    overflow: bool,
    trace: Option<Vec<TraceRecord>>,
}

/// Instantiates `n` zeroed `h x w` sub-arrays with the given roles.
pub fn configure(h: usize, w: usize, n: usize, folding: FoldingConfig) -> Result<Simulator, SimError> {
    if h == 0 || w == 0 || n == 0 {
        return Err(SimError::ZeroDim);
    }
    folding.check(n)?;
    let pes = folding
        .assignment
        .iter()
        .map(|role| {
            vec![PeState { passing_bypassed: matches!(role, SubArrayRole::Nn(_)), ..PeState::default() }; h * w]
        })
        .collect();
    Ok(Simulator { h, w, folding, pes, ports: vec![PortInputs::new(h, w); n], cycle: 0, overflow: false, trace: None })
}

impl Simulator {
    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn n(&self) -> usize {
        self.pes.len()
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn overflowed(&self) -> bool {
        self.overflow
    }

    pub fn folding(&self) -> &FoldingConfig {
        &self.folding
    }

    pub fn pe(&self, sub: usize, row: usize, col: usize) -> &PeState {
        &self.pes[sub][row * self.w + col]
    }

    pub fn pe_mut(&mut self, sub: usize, row: usize, col: usize) -> &mut PeState {
        &mut self.pes[sub][row * self.w + col]
    }

    pub fn ports_mut(&mut self, sub: usize) -> &mut PortInputs {
        &mut self.ports[sub]
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    /// `cycle,sub_array,row,col,acc` rows.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("cycle,sub_array,row,col,acc\n");
        for t in self.trace() {
            let _ = writeln!(out, "{},{},{},{},{}", t.cycle, t.sub_array, t.row, t.col, t.acc);
        }
        out
    }

    fn mac(&mut self, up: i32, a: i32, b: i32) -> i32 {
        match a.checked_mul(b).and_then(|p| p.checked_add(up)) {
            Some(v) => v,
            None => {
                self.overflow = true;
                up.wrapping_add(a.wrapping_mul(b))
            }
        }
    }

    /// Advances every PE one cycle. All registers latch from the previous
    /// state at once.
    pub fn step(&mut self) {
        let (h, w) = (self.h, self.w);
        for s in 0..self.pes.len() {
            let old = self.pes[s].clone();
            let ports = self.ports[s].clone();
            let at = |r: usize, c: usize| &old[r * w + c];
            for r in 0..h {
                for c in 0..w {
                    let me = *at(r, c);
                    let up = if r == 0 { 0 } else { at(r - 1, c).acc };
                    let stationary = match ports.load[c] {
                        Some(top) if r == 0 => top,
                        Some(_) => at(r - 1, c).stationary,
                        None => me.stationary,
                    };
                    let next = if me.passing_bypassed {
                        let left_in = if c == 0 { ports.left[r] } else { at(r, c - 1).streaming };
                        PeState {
                            stationary,
                            streaming: left_in,
                            passing: 0,
                            acc: self.mac(up, me.stationary, left_in),
                            passing_bypassed: true,
                        }
                    } else {
                        let pass_in = if r == 0 { ports.stream[c] } else { at(r - 1, c).streaming };
                        PeState {
                            stationary,
                            streaming: me.passing,
                            passing: pass_in,
                            acc: self.mac(up, me.stationary, me.streaming),
                            passing_bypassed: false,
                        }
                    };
                    self.pes[s][r * w + c] = next;
                }
            }
            if let Some(trace) = self.trace.as_mut() {
                for (i, pe) in self.pes[s].iter().enumerate() {
                    trace.push(TraceRecord { cycle: self.cycle, sub_array: s, row: i / w, col: i % w, acc: pe.acc });
                }
            }
            self.ports[s].clear();
        }
        self.cycle += 1;
    }

    /// Runs several jobs side by side, one shared clock. Each job owns
    /// disjoint sub-arrays or columns.
    pub fn run_concurrent(&mut self, jobs: &mut [Job]) -> Result<Vec<SimResult>, SimError> {
        let mut subs = std::collections::BTreeSet::new();
        let mut cols = std::collections::BTreeSet::new();
        for job in jobs.iter() {
            match job {
                Job::Gemm(g) => {
                    for &s in &g.subs {
                        if !subs.insert(s) {
                            return Err(SimError::SubArrayConflict(s));
                        }
                    }
                }
                Job::Conv(c) => {
                    for &col in &c.columns {
                        if !cols.insert(col) {
                            return Err(SimError::ColumnConflict(col));
                        }
                    }
                }
            }
        }
        let total = jobs.iter().map(Job::len).max().unwrap_or(0);
        self.overflow = false;
        for t in 0..total {
            for job in jobs.iter_mut() {
                if t < job.len() {
                    job.drive(t, self);
                }
            }
            self.step();
            for job in jobs.iter_mut() {
                if t < job.len() {
                    job.observe(t, self);
                }
            }
        }
        if self.overflow {
            return Err(SimError::Overflow);
        }
        let (h, w) = (self.h as u64, self.w as u64);
        Ok(jobs.iter().map(|j| j.result(h, w)).collect())
    }

    /// `A (m x n) * B (n x k)` on NN group `group`. The inner dimension is
    /// split across the group's sub-arrays and partial sums are added at the
    /// group output.
    pub fn run_gemm(&mut self, group: u32, a: &Matrix<i32>, b: &Matrix<i32>) -> Result<SimResult, SimError> {
        let mut jobs = [Job::Gemm(GemmJob::new(self, group, a, b)?)];
        Ok(self.run_concurrent(&mut jobs)?.remove(0))
    }

    /// Blockwise circular convolution of every `a_vecs[i]` with `b_vecs[i]`.
    /// Blocks are dealt round-robin over `columns`, one block per pass.
    pub fn run_circconv(
        &mut self,
        columns: &[ColumnRef],
        a_vecs: &[Vec<i32>],
        b_vecs: &[Vec<i32>],
        block: usize,
    ) -> Result<SimResult, SimError> {
        if block > self.h {
            return Err(SimError::BlockTooTall { block, h: self.h });
        }
        let mut jobs = [Job::Conv(ConvJob::new(self, columns, a_vecs, b_vecs, block, ConvSchedule::Packed)?)];
        Ok(self.run_concurrent(&mut jobs)?.remove(0))
    }

    /// Like [`Simulator::run_circconv`] but accepts blocks taller than a
    /// column: each block is cut into `H`-row chunks whose partial results
    /// are summed. `schedule` decides which column runs which chunk.
    pub fn run_circconv_tiled(
        &mut self,
        columns: &[ColumnRef],
        a_vecs: &[Vec<i32>],
        b_vecs: &[Vec<i32>],
        block: usize,
        schedule: ConvSchedule,
    ) -> Result<SimResult, SimError> {
        let mut jobs = [Job::Conv(ConvJob::new(self, columns, a_vecs, b_vecs, block, schedule)?)];
        Ok(self.run_concurrent(&mut jobs)?.remove(0))
    }
}

/// A computation bound to part of the array.
#[derive(Debug, Clone)]
pub enum Job {
    Gemm(GemmJob),
    Conv(ConvJob),
}

impl Job {
    fn len(&self) -> u64 {
        match self {
            Job::Gemm(g) => g.tiles as u64 * g.period,
            Job::Conv(c) => c.len,
        }
    }

    fn drive(&mut self, t: u64, sim: &mut Simulator) {
        match self {
            Job::Gemm(g) => g.drive(t, sim),
            Job::Conv(c) => c.drive(t, sim),
        }
    }

    fn observe(&mut self, t: u64, sim: &Simulator) {
        match self {
            Job::Gemm(g) => g.observe(t, sim),
            Job::Conv(c) => c.observe(t, sim),
        }
    }

    fn result(&self, h: u64, w: u64) -> SimResult {
        let cycles = self.len();
        let (outputs, macs, pes, latency) = match self {
            Job::Gemm(g) => (g.out.clone(), g.macs, h * w * g.subs.len() as u64, g.max_latency),
            Job::Conv(c) => (c.out.clone(), c.macs, h * c.columns.len() as u64, c.max_latency),
        };
        let utilization = if cycles == 0 { 0.0 } else { macs as f64 / (cycles * pes) as f64 };
        SimResult { cycles, outputs, utilization, max_unit_latency: latency }
    }
}

#[derive(Debug, Clone)]
pub struct GemmJob {
    subs: Vec<usize>,
    a: Matrix<i32>,
    b: Matrix<i32>,
    h: usize,
    w: usize,
    /// Inner-dimension rows per sub-array.
    slice: usize,
    col_tiles: usize,
    tiles: usize,
    period: u64,
    out: Vec<Vec<i64>>,
    macs: u64,
    tile_start: u64,
    max_latency: u64,
}

impl GemmJob {
    pub fn new(sim: &Simulator, group: u32, a: &Matrix<i32>, b: &Matrix<i32>) -> Result<Self, SimError> {
        if a.cols != b.rows {
            return Err(SimError::Dims(format!("A is {}x{}, B is {}x{}", a.rows, a.cols, b.rows, b.cols)));
        }
        if a.rows == 0 || a.cols == 0 || b.cols == 0 {
            return Err(SimError::Dims("empty operand".into()));
        }
        let subs = sim.folding.group(group);
        if subs.is_empty() {
            return Err(SimError::UnknownGroup(group));
        }
        let (h, w) = (sim.h, sim.w);
        let slice = a.cols.div_ceil(subs.len());
        let col_tiles = b.cols.div_ceil(w);
        let tiles = slice.div_ceil(h) * col_tiles;
        Ok(GemmJob {
            period: (2 * h + w + a.rows - 2) as u64,
            out: vec![vec![0; b.cols]; a.rows],
            macs: (a.rows * a.cols * b.cols) as u64,
            subs,
            a: a.clone(),
            b: b.clone(),
            h,
            w,
            slice,
            col_tiles,
            tiles,
            tile_start: 0,
            max_latency: 0,
        })
    }

    /// Inner index fed to row `r` of sub-array slot `j` during `tile`.
    fn inner(&self, j: usize, tile: usize, r: usize) -> Option<usize> {
        let p = j * self.slice + (tile / self.col_tiles) * self.h + r;
        (p < ((j + 1) * self.slice).min(self.a.cols)).then_some(p)
    }

    fn drive(&mut self, t: u64, sim: &mut Simulator) {
        let tile = (t / self.period) as usize;
        let phase = (t % self.period) as usize;
        let c0 = (tile % self.col_tiles) * self.w;
        for (j, &s) in self.subs.iter().enumerate() {
            let ports = sim.ports_mut(s);
            if phase < self.h {
                let r = self.h - 1 - phase;
                for c in 0..self.w {
                    let v = match (self.inner(j, tile, r), c0 + c < self.b.cols) {
                        (Some(p), true) => self.b.get(p, c0 + c),
                        _ => 0,
                    };
                    ports.load[c] = Some(v);
                }
            } else {
                let u = phase - self.h;
                for r in 0..self.h {
                    if let (Some(i), Some(p)) = (u.checked_sub(r).filter(|&i| i < self.a.rows), self.inner(j, tile, r))
                    {
                        ports.left[r] = self.a.get(i, p);
                    }
                }
            }
        }
    }

    fn observe(&mut self, t: u64, sim: &Simulator) {
        let tile = (t / self.period) as usize;
        let phase = (t % self.period) as usize;
        if phase == 0 {
            self.tile_start = t;
        }
        if phase < self.h {
            return;
        }
        let u = phase - self.h;
        let c0 = (tile % self.col_tiles) * self.w;
        for c in 0..self.w {
            let Some(i) = u.checked_sub(self.h - 1 + c).filter(|&i| i < self.a.rows) else { continue };
            if i == self.a.rows - 1 && c == self.w - 1 {
                self.max_latency = self.max_latency.max(t + 1 - self.tile_start);
            }
            if c0 + c >= self.b.cols {
                continue;
            }
            for &s in &self.subs {
                self.out[i][c0 + c] += i64::from(sim.pe(s, self.h - 1, c).acc);
            }
        }
    }
}

/// How convolution chunks are placed on columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvSchedule {
    /// Work items dealt round-robin over the listed columns.
    Packed,
    /// Vectors across the `w` columns of each sub-array, chunks of one vector
    /// across `n_v` sub-arrays. Columns must be listed sub-array-major.
    Temporal { w: usize, n_v: usize },
    /// One vector at a time, its chunks spread over every listed column.
    Spatial,
}

#[derive(Debug, Clone, Copy)]
struct Pass {
    start: u64,
    column: usize,
    vector: usize,
    block: usize,
    offset: usize,
}

#[derive(Debug, Clone)]
pub struct ConvJob {
    columns: Vec<ColumnRef>,
    a: Vec<Vec<i32>>,
    b: Vec<Vec<i32>>,
    h: usize,
    block: usize,
    pass_len: u64,
    passes: Vec<Pass>,
    /// Per column: passes in start order.
    queue: Vec<Vec<usize>>,
    len: u64,
    out: Vec<Vec<i64>>,
    macs: u64,
    max_latency: u64,
}

impl ConvJob {
    pub fn new(
        sim: &Simulator,
        columns: &[ColumnRef],
        a_vecs: &[Vec<i32>],
        b_vecs: &[Vec<i32>],
        block: usize,
        schedule: ConvSchedule,
    ) -> Result<Self, SimError> {
        if a_vecs.len() != b_vecs.len() {
            return Err(SimError::Dims(format!("{} A vectors, {} B vectors", a_vecs.len(), b_vecs.len())));
        }
        if columns.is_empty() {
            return Err(SimError::Dims("no columns".into()));
        }
        let d = a_vecs.first().map_or(0, Vec::len);
        if a_vecs.iter().chain(b_vecs).any(|v| v.len() != d) {
            return Err(SimError::Dims("vectors differ in length".into()));
        }
        if block == 0 || !d.is_multiple_of(block) {
            return Err(SimError::Dims(format!("block {block} does not divide {d}")));
        }
        for &col in columns {
            if col.sub_array >= sim.n()
                || col.col >= sim.w
                || sim.folding.assignment[col.sub_array] != SubArrayRole::Vsa
            {
                return Err(SimError::NotVsaColumn(col));
            }
        }
        let h = sim.h;
        let pass_len = (3 * h + block - 1) as u64;
        let chunks = block.div_ceil(h);
        let per_vector = (d / block) * chunks;
        let mut passes = Vec::new();
        for v in 0..a_vecs.len() {
            for item in 0..per_vector {
                let (blk, ch) = (item / chunks, item % chunks);
                let (column, round) = match schedule {
                    ConvSchedule::Packed => {
                        let k = v * per_vector + item;
                        (k % columns.len(), k / columns.len())
                    }
                    ConvSchedule::Temporal { w, n_v } => {
                        if w * n_v != columns.len() {
                            return Err(SimError::Dims(format!("{w} x {n_v} schedule over {} columns", columns.len())));
                        }
                        let vec_rounds = per_vector.div_ceil(n_v);
                        ((item % n_v) * w + v % w, (v / w) * vec_rounds + item / n_v)
                    }
                    ConvSchedule::Spatial => {
                        let vec_rounds = per_vector.div_ceil(columns.len());
                        (item % columns.len(), v * vec_rounds + item / columns.len())
                    }
                };
                passes.push(Pass { start: round as u64 * pass_len, column, vector: v, block: blk, offset: ch * h });
            }
        }
        let mut queue = vec![Vec::new(); columns.len()];
        for (i, p) in passes.iter().enumerate() {
            queue[p.column].push(i);
        }
        for q in &mut queue {
            q.sort_by_key(|&i| passes[i].start);
        }
        let len = passes.iter().map(|p| p.start + pass_len).max().unwrap_or(0);
        Ok(ConvJob {
            columns: columns.to_vec(),
            a: a_vecs.to_vec(),
            b: b_vecs.to_vec(),
            h,
            block,
            pass_len,
            passes,
            queue,
            len,
            out: vec![vec![0; d]; a_vecs.len()],
            macs: (a_vecs.len() * d * block) as u64,
            max_latency: 0,
        })
    }

    fn active(&self, column: usize, t: u64) -> Option<(Pass, u64)> {
        self.queue[column]
            .iter()
            .map(|&i| self.passes[i])
            .find(|p| p.start <= t && t < p.start + self.pass_len)
            .map(|p| (p, t - p.start))
    }

    fn drive(&mut self, t: u64, sim: &mut Simulator) {
        let (h, b) = (self.h, self.block);
        let lead = 2 * h - 2;
        for (ci, col) in self.columns.iter().enumerate() {
            let Some((p, local)) = self.active(ci, t) else { continue };
            let local = local as usize;
            let base = p.block * b;
            let ports = sim.ports_mut(col.sub_array);
            if local < h {
                let r = h - 1 - local;
                let v = if p.offset + r < b { self.a[p.vector][base + p.offset + r] } else { 0 };
                ports.load[col.col] = Some(v);
            }
            if local + 1 >= h {
                // Stream value for step `local`: B[(local - lead - offset) mod b].
                let idx = (local as i64 - lead as i64 - p.offset as i64).rem_euclid(b as i64) as usize;
                ports.stream[col.col] = self.b[p.vector][base + idx];
            }
        }
    }

    fn observe(&mut self, t: u64, sim: &Simulator) {
        let (h, b) = (self.h, self.block);
        for (ci, col) in self.columns.iter().enumerate() {
            let Some((p, local)) = self.active(ci, t) else { continue };
            let Some(n) = (local as usize).checked_sub(3 * h - 1).filter(|&n| n < b) else { continue };
            self.out[p.vector][p.block * b + n] += i64::from(sim.pe(col.sub_array, h - 1, col.col).acc);
            if n == b - 1 {
                self.max_latency = self.max_latency.max(local + 1);
            }
        }
    }
}
