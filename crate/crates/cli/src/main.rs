// SPDX-License-Identifier: Apache-2.0

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nsflow_core::dse::{run_dse, trace_csv, DseError, DseParams};
use nsflow_core::graph::{to_dot, DataflowGraph};
use nsflow_core::report::{
    ablation_csv, check_oracles, cycles_to_ms, load_workload, replay, run_ablation, summary_lines, AblationError,
    ConfigError, DesignConfigDoc, LoadError, ReplayError, REPLAY_BUDGET,
};
use nsflow_core::workload::WorkloadError;
use nsflow_core::WorkloadSpec;

#[derive(Parser)]
#[command(name = "nsflow", version, about = "Design-space exploration and simulation for adaptive systolic arrays")]
struct Cli {
    /// Seed for every randomized operand and check.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Report format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Clock used to convert cycles to milliseconds in reports.
    #[arg(long, global = true)]
    freq_mhz: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a workload.
    Validate {
        /// Workload file, or `builtin:<name>`.
        workload: String,
    },
    /// Search for the best array shape and mapping.
    Dse {
        workload: String,
        #[arg(long, default_value_t = 1024)]
        max_pes: u64,
        #[arg(long, default_value_t = 8)]
        iter_max: u32,
        /// Keep shapes that break the aspect-ratio constraint.
        #[arg(long)]
        no_prune: bool,
        /// Where to write the design configuration.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to write the Phase I search trace.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Replay a configuration on the cycle-level simulator.
    Simulate {
        workload: String,
        #[arg(long)]
        config: PathBuf,
        /// Also run randomized simulator-vs-oracle checks.
        #[arg(long)]
        check_oracles: bool,
        #[arg(long, default_value_t = 200)]
        cases: u64,
        /// Largest node to simulate, in PE-steps.
        #[arg(long, default_value_t = REPLAY_BUDGET)]
        budget: u64,
    },
    /// Sweep the symbolic share of the bundled mixed workload.
    Ablation {
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.1,0.2,0.4,0.6,0.8")]
        ratios: Vec<f64>,
        #[arg(long, default_value_t = 1024)]
        max_pes: u64,
        #[arg(long, default_value_t = 8)]
        iter_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the fused dataflow graph as DOT.
    Graph {
        workload: String,
        #[arg(long)]
        dot: Option<PathBuf>,
    },
}

/// A failure carrying its process exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(msg: impl Display) -> Self {
        Failure { code: 1, message: msg.to_string() }
    }

    fn io(msg: impl Display) -> Self {
        Failure { code: 2, message: msg.to_string() }
    }

    fn internal(msg: impl Display) -> Self {
        Failure { code: 3, message: format!("internal error: {msg}") }
    }
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Io { .. } => Failure::io(e),
            LoadError::Workload(_) => Failure::invalid(e),
        }
    }
}

impl From<DseError> for Failure {
    fn from(e: DseError) -> Self {
        match e {
            DseError::NoCandidates(_) => Failure::invalid(e),
            _ => Failure::internal(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Cost(_) => Failure::internal(e),
            _ => Failure::invalid(e),
        }
    }
}

impl From<ReplayError> for Failure {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::Config(c) => c.into(),
            ReplayError::Sim(s) => Failure::internal(s),
        }
    }
}

impl From<AblationError> for Failure {
    fn from(e: AblationError) -> Self {
        match e {
            AblationError::Ratio(_) | AblationError::Workload(_) => Failure::invalid(e),
            AblationError::Cost(_) | AblationError::Dse(_) => Failure::internal(e),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::io(format!("cannot write `{}`: {e}", path.display())))
}

fn build_graph(spec: &WorkloadSpec) -> Result<DataflowGraph, Failure> {
    DataflowGraph::build(spec).map_err(Failure::invalid)
}

fn to_json<T: serde::Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn key_value_csv(rows: &[(String, String)]) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["key", "value"]).expect("in-memory writer");
    for (k, v) in rows {
        wtr.write_record([k, v]).expect("in-memory writer");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

fn cmd_validate(workload: &str) -> Result<String, Failure> {
    match load_workload(workload) {
        Ok(spec) => Ok(format!("ok: {} ({} nodes, loop_count {})\n", spec.name, spec.nodes.len(), spec.loop_count)),
        Err(LoadError::Workload(WorkloadError::Invalid(diags))) => {
            let lines: Vec<String> = diags.iter().map(|d| format!("error: {d}")).collect();
            Err(Failure::invalid(lines.join("\n")))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_dse(
    cli: &Cli,
    workload: &str,
    params: DseParams,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Result<String, Failure> {
    let spec = load_workload(workload)?;
    let graph = build_graph(&spec)?;
    let outcome = run_dse(&graph, &params)?;
    let doc = DesignConfigDoc::new(&spec, &graph, &outcome);
    if let Some(path) = out {
        write_file(path, &doc.to_json())?;
    }
    if let Some(path) = trace {
        write_file(path, &trace_csv(&outcome.trace))?;
    }
    if let Some(msg) = &outcome.simd_diagnostic {
        eprintln!("warning: {msg}");
    }
    Ok(match cli.format {
        Format::Json => doc.to_json(),
        Format::Csv => key_value_csv(&summary_lines(&doc, cli.freq_mhz)),
    })
}

fn cmd_simulate(
    cli: &Cli,
    workload: &str,
    config: &Path,
    check: bool,
    cases: u64,
    budget: u64,
) -> Result<String, Failure> {
    let spec = load_workload(workload)?;
    let graph = build_graph(&spec)?;
    let text =
        fs::read_to_string(config).map_err(|e| Failure::io(format!("cannot read `{}`: {e}", config.display())))?;
    let doc = DesignConfigDoc::from_json(&text)?;
    let rows = replay(&spec, &graph, &doc, cli.seed, budget)?;
    let oracle = if check { Some(check_oracles(cli.seed, cases).map_err(Failure::internal)?) } else { None };

    let mut report = match cli.format {
        Format::Json => to_json(&serde_json::json!({ "nodes": rows, "oracle_checks": oracle })),
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(Vec::new());
            wtr.write_record(["node", "kind", "analytical", "measured", "oracle_equal", "timing_ok", "note"])
                .expect("in-memory writer");
            for r in &rows {
                let measured = r.measured.map(|m| m.to_string()).unwrap_or_default();
                let equal = r.oracle_equal.map(|e| e.to_string()).unwrap_or_default();
                let fields = [
                    &r.node,
                    r.kind,
                    &r.analytical.to_string(),
                    &measured,
                    &equal,
                    &r.timing_ok().to_string(),
                    &r.note,
                ];
                wtr.write_record(fields).expect("in-memory writer");
            }
            let mut s = String::from_utf8(wtr.into_inner().expect("in-memory writer")).expect("csv is utf-8");
            if let Some(o) = &oracle {
                s.push_str(&format!(
                    "# oracle checks: {} gemm, {} conv, {} mismatches, {} timing violations\n",
                    o.gemm_cases,
                    o.conv_cases,
                    o.mismatches(),
                    o.tile_timing_violations + o.pass_timing_violations
                ));
            }
            s
        }
    };
    if let Some(f) = cli.freq_mhz {
        let total = doc.cycles.total;
        if cli.format == Format::Csv {
            report.push_str(&format!("# total {total} cycles = {:.6} ms at {f} MHz\n", cycles_to_ms(total, f)));
        }
    }

    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.node.as_str()).collect();
    if !failed.is_empty() {
        print!("{report}");
        return Err(Failure::invalid(format!("simulation disagrees with the model on: {}", failed.join(", "))));
    }
    if let Some(o) = oracle.filter(|o| !o.clean()) {
        print!("{report}");
        return Err(Failure::invalid(format!("oracle checks failed:\n{}", o.failures.join("\n"))));
    }
    Ok(report)
}

fn cmd_ablation(cli: &Cli, ratios: &[f64], params: DseParams, out: Option<&Path>) -> Result<String, Failure> {
    let rows = run_ablation(ratios, &params)?;
    let csv = ablation_csv(&rows);
    if let Some(path) = out {
        write_file(path, &csv)?;
    }
    Ok(match cli.format {
        Format::Json => to_json(&rows),
        Format::Csv => csv,
    })
}

fn cmd_graph(workload: &str, dot: Option<&Path>) -> Result<String, Failure> {
    let spec = load_workload(workload)?;
    let text = to_dot(&build_graph(&spec)?);
    match dot {
        Some(path) => {
            write_file(path, &text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn dse_params(max_pes: u64, iter_max: u32, no_prune: bool) -> Result<DseParams, Failure> {
    if max_pes < 4 {
        return Err(Failure::invalid("--max-pes must be at least 4"));
    }
    let mut params = DseParams::new(max_pes);
    params.iter_max = iter_max;
    params.prune = !no_prune;
    Ok(params)
}

fn run(cli: &Cli) -> Result<String, Failure> {
    if let Some(f) = cli.freq_mhz.filter(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Failure::invalid(format!("--freq-mhz must be positive, got {f}")));
    }
    match &cli.command {
        Command::Validate { workload } => cmd_validate(workload),
        Command::Dse { workload, max_pes, iter_max, no_prune, out, trace } => {
            cmd_dse(cli, workload, dse_params(*max_pes, *iter_max, *no_prune)?, out.as_deref(), trace.as_deref())
        }
        Command::Simulate { workload, config, check_oracles, cases, budget } => {
            cmd_simulate(cli, workload, config, *check_oracles, *cases, *budget)
        }
        Command::Ablation { ratios, max_pes, iter_max, out } => {
            cmd_ablation(cli, ratios, dse_params(*max_pes, *iter_max, false)?, out.as_deref())
        }
        Command::Graph { workload, dot } => cmd_graph(workload, dot.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("{}", f.message);
            ExitCode::from(f.code)
        }
    }
}
