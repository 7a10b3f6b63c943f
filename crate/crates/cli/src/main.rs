use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bclearer::collect::DEFAULT_CHUNK_SIZE;
use bclearer::fixture::{generate_fixture, FixtureSpec};
use bclearer::graph::{ContentId, UnifiedGraph};
use bclearer::onto::{export_definitions, extract_definitions, OntoError};
use bclearer::pipeline::{
    load_config, run_pipeline, verify_workspace, BUnitRegistry, PipelineError, RunOptions, RunReport, Workspace,
    WorkspaceLock,
};
use bclearer::provenance::{Direction, ProvenanceStore};
use bclearer::reuse::{reuse_export, ExportFormat};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bclearer", version, about = "Run and inspect ontologization pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Back,
    Forward,
}

#[derive(Clone, Copy, ValueEnum)]
enum TraceFormat {
    Dot,
    Text,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportArg {
    CsvTables,
    Triples,
    Dot,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a pipeline config and print the run-root hash.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "BCLEARER_WORKSPACE")]
        workspace: PathBuf,
        #[arg(long)]
        parallel_slices: bool,
    },
    /// Show where an item came from, or what was made from it.
    Trace {
        id: String,
        #[arg(long, env = "BCLEARER_WORKSPACE")]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "back")]
        direction: DirectionArg,
        #[arg(long, value_enum, default_value = "text")]
        format: TraceFormat,
    },
    /// Re-hash stored snapshots and re-run the last run's report checks.
    Verify {
        #[arg(long, env = "BCLEARER_WORKSPACE")]
        workspace: PathBuf,
        /// Only re-check this gate (its position in the config's gate list).
        #[arg(long)]
        gate: Option<usize>,
    },
    /// Print a definition for every type of the last run's final graph.
    Definitions {
        #[arg(long, env = "BCLEARER_WORKSPACE")]
        workspace: PathBuf,
    },
    /// Export the last run's final graph.
    Export {
        #[arg(long, env = "BCLEARER_WORKSPACE")]
        workspace: PathBuf,
        #[arg(long, value_enum, default_value = "csv-tables")]
        format: ExportArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Store files as snapshots and print their ids.
    Collect {
        #[arg(long, env = "BCLEARER_WORKSPACE")]
        workspace: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Write the three-company accounting corpus and its pipeline config.
    Fixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        pairs: usize,
        /// Internal transactions per system, as SYSTEM=COUNT.
        #[arg(long = "internal", value_parser = parse_internal)]
        internal: Vec<(String, usize)>,
    },
}

fn parse_internal(s: &str) -> Result<(String, usize), String> {
    let (system, n) = s.split_once('=').ok_or("expected SYSTEM=COUNT")?;
    Ok((system.to_string(), n.parse().map_err(|e| format!("{e}"))?))
}

/// 1: the data or a check failed. 2: inputs, config or workspace unusable.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn check(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::BUnit { source, .. } if !source.is_input_error() => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            config,
            workspace,
            parallel_slices,
        } => cmd_run(&config, &workspace, parallel_slices),
        Command::Trace {
            id,
            workspace,
            direction,
            format,
        } => cmd_trace(&workspace, &id, direction, format),
        Command::Verify { workspace, gate } => cmd_verify(&workspace, gate),
        Command::Definitions { workspace } => cmd_definitions(&workspace),
        Command::Export { workspace, format, out } => cmd_export(&workspace, format, &out),
        Command::Collect {
            workspace,
            chunk_size,
            files,
        } => cmd_collect(&workspace, chunk_size, &files),
        Command::Fixture { out, pairs, internal } => {
            let mut spec = FixtureSpec {
                intercompany_pairs: pairs,
                ..FixtureSpec::default()
            };
            if !internal.is_empty() {
                spec.internal_transactions = internal.into_iter().collect();
            }
            generate_fixture(&spec, &out).map_err(|e| Failure::input(format!("{}: {e}", out.display())))?;
            eprintln!("fixture written to {}", out.display());
            Ok(())
        }
    }
}

fn cmd_run(config: &Path, workspace: &Path, parallel_slices: bool) -> Result<(), Failure> {
    let options = RunOptions {
        parallel_slices,
        registry: BUnitRegistry::standard(),
    };
    let config = load_config(config, &options.registry)?;
    let report = run_pipeline(&config, &Workspace::new(workspace), &options)?;
    eprintln!(
        "run {}: {} bUnits, {} gates",
        report.run_id,
        report.bunits.len(),
        report.gates.len()
    );
    if !report.passed() {
        for g in report.failed_gates() {
            let reasons: Vec<String> = g.actions.iter().flat_map(|a| a.failures()).collect();
            eprintln!("gate {} failed: {}", g.name(), reasons.join("; "));
        }
        if !report.completed {
            eprintln!("run stopped before completion");
        }
        return Err(Failure::check("one or more gates failed"));
    }
    println!("{}", report.run_root);
    Ok(())
}

/// Opens an existing workspace for reading.
fn open(workspace: &Path) -> Result<(Workspace, WorkspaceLock), Failure> {
    if !workspace.is_dir() {
        return Err(Failure::input(format!("no workspace at {}", workspace.display())));
    }
    let ws = Workspace::new(workspace);
    let lock = ws.lock()?;
    Ok((ws, lock))
}

fn latest(ws: &Workspace) -> Result<RunReport, Failure> {
    ws.latest_report()?
        .ok_or_else(|| Failure::input(format!("{} holds no completed run", ws.root().display())))
}

fn final_graphs(ws: &Workspace, report: &RunReport) -> Result<Vec<(String, UnifiedGraph)>, Failure> {
    report
        .final_graphs()
        .into_iter()
        .map(|(scope, id)| Ok((scope, ws.read_graph(&id)?)))
        .collect()
}

fn cmd_trace(workspace: &Path, id: &str, direction: DirectionArg, format: TraceFormat) -> Result<(), Failure> {
    let id: ContentId = id
        .parse()
        .map_err(|e| Failure::input(format!("malformed id: {e}")))?;
    let (ws, _lock) = open(workspace)?;
    let report = latest(&ws)?;
    let store: ProvenanceStore = ws.read_provenance()?;
    if !store.mentions(&id) {
        return Err(Failure::check(format!("{id} does not appear in the provenance log")));
    }

    let graphs = final_graphs(&ws, &report)?;
    let snapshots = ws.snapshots();
    let mut names: BTreeMap<ContentId, String> = BTreeMap::new();
    for s in &report.slices {
        for (source, snap) in &s.snapshots {
            names.insert(*snap, format!("snapshot {source}"));
            if let Ok(m) = snapshots.manifest(snap) {
                for (i, c) in m.chunks.iter().enumerate() {
                    names.entry(c.hash).or_insert_with(|| format!("chunk {i} of {source}"));
                }
            }
        }
        for (qid, q) in &s.verifier.queries {
            names.insert(*qid, format!("query {}", q.name));
        }
    }
    let label = |item: ContentId| -> String {
        if let Some(n) = names.get(&item) {
            return n.clone();
        }
        for (_, g) in &graphs {
            if let Some(e) = g.element(&item) {
                return format!("{} {:?}", e.kind.name(), e.payload);
            }
            if g.triple(&item).is_some() {
                return "triple".to_string();
            }
        }
        item.short()
    };

    let direction = match direction {
        DirectionArg::Back => Direction::Back,
        DirectionArg::Forward => Direction::Forward,
    };
    match format {
        TraceFormat::Dot => print!("{}", store.export_ontogenic_tree(id, direction, &label)),
        TraceFormat::Text => {
            let lineage = store.walk(id, direction);
            let mut out = format!("{id} {}\n", label(id));
            // Load edges fan out to every element of a table; list only the
            // endpoints that belong to this lineage.
            let show = |ids: &[ContentId]| -> String {
                ids.iter()
                    .filter(|i| lineage.items.contains(i))
                    .map(|i| format!("{i} ({})", label(*i)))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            for &i in &lineage.edges {
                let e = &store.edges()[i];
                let _ = writeln!(
                    out,
                    "  {} {}: {} -> {}",
                    e.kind,
                    e.transform,
                    show(&e.sources),
                    show(&e.targets)
                );
            }
            print!("{out}");
        }
    }
    Ok(())
}

fn cmd_verify(workspace: &Path, gate: Option<usize>) -> Result<(), Failure> {
    let (ws, _lock) = open(workspace)?;
    let check = verify_workspace(&ws, gate)?;
    for f in &check.chunk_failures {
        eprintln!("integrity: {f}");
    }
    for g in &check.gates {
        for f in &g.failures {
            eprintln!("gate {}: {f}", g.name);
        }
    }
    let summary = serde_json::json!({
        "snapshots": check.snapshots,
        "chunk_failures": check.chunk_failures,
        "gates": check.gates.iter().map(|g| serde_json::json!({"gate": g.name, "failures": g.failures})).collect::<Vec<_>>(),
        "passed": check.passed(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if check.passed() {
        Ok(())
    } else {
        Err(Failure::check("verification failed"))
    }
}

fn cmd_definitions(workspace: &Path) -> Result<(), Failure> {
    let (ws, _lock) = open(workspace)?;
    let report = latest(&ws)?;
    let mut lines = BTreeSet::new();
    for (scope, graph) in final_graphs(&ws, &report)? {
        let defs = extract_definitions(&graph).map_err(|e| match e {
            OntoError::NotSeeded => Failure::check(format!(
                "{scope} was never seeded with the foundational categories; add an apply_seed bUnit"
            )),
            other => Failure::check(other.to_string()),
        })?;
        lines.extend(export_definitions(&graph, &defs).lines().map(str::to_string));
    }
    for l in lines {
        println!("{l}");
    }
    Ok(())
}

fn cmd_export(workspace: &Path, format: ExportArg, out: &Path) -> Result<(), Failure> {
    let (ws, _lock) = open(workspace)?;
    let report = latest(&ws)?;
    let format = match format {
        ExportArg::CsvTables => ExportFormat::CsvTables,
        ExportArg::Triples => ExportFormat::Triples,
        ExportArg::Dot => ExportFormat::Dot,
    };
    for (scope, graph) in final_graphs(&ws, &report)? {
        let written = reuse_export(&graph, format, &out.join(scope)).map_err(|e| Failure::input(e.to_string()))?;
        for p in written {
            println!("{}", p.display());
        }
    }
    Ok(())
}

fn cmd_collect(workspace: &Path, chunk_size: usize, files: &[PathBuf]) -> Result<(), Failure> {
    let ws = Workspace::new(workspace);
    let _lock = ws.lock()?;
    let store = ws.snapshots();
    for f in files {
        let snap = store
            .collect(f, chunk_size)
            .map_err(|e| Failure::input(e.to_string()))?;
        println!("{}\t{}", snap.id, f.display());
    }
    Ok(())
}
