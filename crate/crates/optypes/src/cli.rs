//! Command-line surface over the library.
//!
//! Exit codes: 0 when the command succeeds (and any checked relation holds),
//! 1 when a checked relation fails, 2 on usage or parse errors, 3 on an
//! internal invariant breach. Failures print a machine-readable error object
//! on standard error.

use clap::{Parser, Subcommand, ValueEnum};
use optypes::{
    complete_compat, dedup, expand_space, forward_compat, generate_type_equivalent_convs,
    load_graph, load_space, mode_divergence, parse_op_literal, preset_grid, preset_space,
    render_grid_document, render_space_document, save_graph, save_space, signature_string,
    type_equiv_within, DedupLevel, DocumentError, GenerationGrid, GridRange, Mode, OpGraph,
    Operation, Provenance, Replacement, SearchSpace, SeedSelector, Shape, ShapeDomain,
    SpaceDocument, DEFAULT_DOMAIN_HI,
};
use std::path::{Path, PathBuf};

/// Environment variable overriding the default pointwise-equality sweep
/// bound (4096).
pub const DOMAIN_HI_ENV: &str = "OPTYPES_DOMAIN_HI";

pub const EXIT_RELATION_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Parser)]
#[command(name = "optypes", version, about = "Type relations, graph rewrites and search-space generation for tensor operations")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide a relation between two operation literals.
    Check {
        #[command(subcommand)]
        relation: CheckCommand,
    },
    /// Generate type-equivalent convolutions from a seed over a grid.
    Generate {
        /// Seed operation literal, e.g. "conv k=3 p=1 d=1 s=1".
        #[arg(long)]
        seed: String,
        /// Grid preset code (T1_kd04 ... T1_pd16) or custom spec
        /// "K=1..4,P=none,D=1..4".
        #[arg(long)]
        grid: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
        mode: ModeArg,
        /// Write the expanded space and report as a space document.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also print where strict and paper mode disagree.
        #[arg(long)]
        diff_modes: bool,
    },
    /// Print the type classes of a space document.
    Partition { file: PathBuf },
    /// Remove equivalent operations from a space document.
    Dedup {
        file: PathBuf,
        #[arg(long, value_enum)]
        level: LevelArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate or rewrite operation graphs.
    Graph {
        #[command(subcommand)]
        op: GraphCommand,
    },
    /// Emit preset documents.
    Preset {
        #[command(subcommand)]
        what: PresetCommand,
    },
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Exit 0 iff the two operations are type-equivalent.
    TypeEq { a: String, b: String },
    /// Forward and complete compatibility over an input domain.
    Compat {
        a: String,
        b: String,
        /// Per-axis interval "LO" or "LO:HI" applied to every axis.
        #[arg(long)]
        domain: String,
    },
}

#[derive(Subcommand)]
enum GraphCommand {
    /// Propagate an input shape through the graph and report every node.
    Validate {
        file: PathBuf,
        /// Comma-separated extents, e.g. "32,32".
        #[arg(long)]
        input_shape: String,
    },
    /// Replace a node with a type-equivalent operation or subgraph.
    Interchange {
        file: PathBuf,
        #[arg(long)]
        node: String,
        /// Operation literal or path to a graph document.
        #[arg(long, value_name = "OP|FILE")]
        with: String,
        #[arg(long)]
        out: PathBuf,
        /// Permit instant equivalence at this shape only (prints a warning).
        #[arg(long)]
        at: Option<String>,
    },
}

#[derive(Subcommand)]
enum PresetCommand {
    /// Print a preset search-space document (S0, 3a, 3b, 3c, 3d, 3E, 3F, 3G).
    Space { code: String },
    /// Print a preset generation grid (T1_kd04 ... T1_pd16).
    Grid { code: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Strict,
    Paper,
}

impl From<ModeArg> for Mode {
    fn from(arg: ModeArg) -> Mode {
        match arg {
            ModeArg::Strict => Mode::Strict,
            ModeArg::Paper => Mode::Paper,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Complete,
    Type,
}

impl From<LevelArg> for DedupLevel {
    fn from(arg: LevelArg) -> DedupLevel {
        match arg {
            LevelArg::Complete => DedupLevel::Complete,
            LevelArg::Type => DedupLevel::Type,
        }
    }
}

/// A command failure with its exit code; rendered as a JSON object on stderr.
pub struct Failure {
    pub kind: String,
    pub message: String,
    pub exit: i32,
}

impl Failure {
    fn usage(kind: &str, message: impl ToString) -> Self {
        Failure { kind: kind.to_string(), message: message.to_string(), exit: EXIT_USAGE }
    }

    fn relation(kind: &str, message: impl ToString) -> Self {
        Failure { kind: kind.to_string(), message: message.to_string(), exit: EXIT_RELATION_FAILED }
    }

    pub fn render(&self) -> String {
        serde_json::json!({ "error": { "kind": self.kind, "message": self.message } }).to_string()
    }
}

impl From<DocumentError> for Failure {
    fn from(err: DocumentError) -> Self {
        let kind = match &err {
            DocumentError::Parse { .. } => "parse",
            DocumentError::SchemaVersionMismatch { .. } => "schema-version",
            DocumentError::InvalidOp { .. } => "invalid-op",
            DocumentError::InvalidLiteral { .. } => "invalid-literal",
            DocumentError::UnknownPreset(_) => "unknown-preset",
            DocumentError::InvalidGraph(_) => "invalid-graph",
            DocumentError::Io { .. } => "io",
        };
        Failure::usage(kind, err)
    }
}

fn domain_hi() -> Result<i64, Failure> {
    match std::env::var(DOMAIN_HI_ENV) {
        Ok(value) => value.parse::<i64>().ok().filter(|&v| v >= 1).ok_or_else(|| {
            Failure::usage("env", format!("{DOMAIN_HI_ENV} must be a positive integer, got {value:?}"))
        }),
        Err(_) => Ok(DEFAULT_DOMAIN_HI),
    }
}

fn parse_shape(text: &str) -> Result<Shape, Failure> {
    let extents: Result<Vec<i64>, _> = text.split(',').map(|t| t.trim().parse::<i64>()).collect();
    let extents = extents.map_err(|_| {
        Failure::usage("invalid-shape", format!("expected comma-separated extents, got {text:?}"))
    })?;
    Shape::new(extents).map_err(|e| Failure::usage("invalid-shape", e))
}

fn parse_domain(text: &str, rank: usize) -> Result<ShapeDomain, Failure> {
    let bad = || Failure::usage("invalid-domain", format!("expected LO or LO:HI, got {text:?}"));
    let (lo, hi) = match text.split_once(':') {
        Some((lo, hi)) => {
            (lo.trim().parse::<i64>().map_err(|_| bad())?, Some(hi.trim().parse::<i64>().map_err(|_| bad())?))
        }
        None => (text.trim().parse::<i64>().map_err(|_| bad())?, None),
    };
    ShapeDomain::square(lo, hi, rank).map_err(|e| Failure::usage("invalid-domain", e))
}

fn parse_grid_spec(text: &str) -> Result<GenerationGrid, Failure> {
    if let Ok(grid) = preset_grid(text) {
        return Ok(grid);
    }
    let bad = |message: String| Failure::usage("invalid-grid", message);
    let mut kernel = None;
    let mut padding = None;
    let mut dilation = None;
    let mut assigned = [false; 3];
    for part in text.split(',') {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| bad(format!("expected K=..,P=..,D=.., got {part:?}")))?;
        let slot = match key.trim() {
            "K" | "k" => 0,
            "P" | "p" => 1,
            "D" | "d" => 2,
            other => return Err(bad(format!("unknown grid field {other:?}"))),
        };
        if assigned[slot] {
            return Err(bad(format!("grid field {key:?} given twice")));
        }
        assigned[slot] = true;
        let range = match value.trim() {
            "none" | "None" => None,
            bounds => {
                let (lo, hi) = bounds
                    .split_once("..")
                    .ok_or_else(|| bad(format!("expected lo..hi or none, got {bounds:?}")))?;
                let lo = lo.trim().parse::<i64>().map_err(|_| bad(format!("bad bound in {bounds:?}")))?;
                let hi = hi.trim().parse::<i64>().map_err(|_| bad(format!("bad bound in {bounds:?}")))?;
                Some(GridRange::new(lo, hi))
            }
        };
        match slot {
            0 => kernel = range,
            1 => padding = range,
            _ => dilation = range,
        }
    }
    if !assigned.iter().all(|&a| a) {
        return Err(bad("grid spec must give all of K, P and D".to_string()));
    }
    GenerationGrid::new(kernel, padding, dilation).map_err(|e| Failure::usage("invalid-grid", e))
}

fn literal(text: &str) -> Result<Operation, Failure> {
    parse_op_literal(text).map_err(Failure::from)
}

fn load_space_checked(path: &Path) -> Result<SpaceDocument, Failure> {
    let (doc, warnings) = load_space(path)?;
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
    Ok(doc)
}

fn load_graph_checked(path: &Path) -> Result<OpGraph, Failure> {
    let (graph, warnings) = load_graph(path)?;
    for warning in warnings {
        eprintln!("warning: {warning}");
    }
    Ok(graph)
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Check { relation } => check(relation),
        Command::Generate { seed, grid, mode, out, diff_modes } => {
            generate(&seed, &grid, mode.into(), out.as_deref(), diff_modes)
        }
        Command::Partition { file } => partition(&file),
        Command::Dedup { file, level, out } => run_dedup(&file, level.into(), &out),
        Command::Graph { op } => match op {
            GraphCommand::Validate { file, input_shape } => graph_validate(&file, &input_shape),
            GraphCommand::Interchange { file, node, with, out, at } => {
                graph_interchange(&file, &node, &with, &out, at.as_deref())
            }
        },
        Command::Preset { what } => match what {
            PresetCommand::Space { code } => {
                let space = preset_space(&code)?;
                print!("{}", render_space_document(&SpaceDocument::new(space)));
                Ok(())
            }
            PresetCommand::Grid { code } => {
                let grid = preset_grid(&code).map_err(|e| Failure::usage("unknown-preset", e))?;
                print!("{}", render_grid_document(&grid));
                Ok(())
            }
        },
    }
}

fn check(relation: CheckCommand) -> Result<(), Failure> {
    match relation {
        CheckCommand::TypeEq { a, b } => {
            let hi = domain_hi()?;
            let op_a = literal(&a)?;
            let op_b = literal(&b)?;
            println!("a: {} {}", signature_string(&op_a.dimfn.signature()), op_a.label);
            println!("b: {} {}", signature_string(&op_b.dimfn.signature()), op_b.label);
            let verdict = type_equiv_within(&op_a, &op_b, hi);
            let confidence = if verdict.sampled { " (sampled)" } else { "" };
            if verdict.holds {
                println!("type-equivalent{confidence}");
                Ok(())
            } else {
                println!("not type-equivalent{confidence}");
                Err(Failure::relation("not-type-equivalent", "dimension functions differ"))
            }
        }
        CheckCommand::Compat { a, b, domain } => {
            let op_a = literal(&a)?;
            let op_b = literal(&b)?;
            let domain = parse_domain(&domain, op_a.rank())?;
            let fwd = forward_compat(&op_a, &op_b, &domain)
                .map_err(|e| Failure::usage("domain", e))?;
            let rev = forward_compat(&op_b, &op_a, &domain)
                .map_err(|e| Failure::usage("domain", e))?;
            let both = complete_compat(&op_a, &op_b, &domain)
                .map_err(|e| Failure::usage("domain", e))?;
            println!("forward  a -> b: {fwd}");
            println!("forward  b -> a: {rev}");
            println!("complete a <-> b: {both}");
            if both {
                Ok(())
            } else {
                Err(Failure::relation("not-compatible", "operations are not completely compatible"))
            }
        }
    }
}

fn generate(
    seed_text: &str,
    grid_text: &str,
    mode: Mode,
    out: Option<&Path>,
    diff_modes: bool,
) -> Result<(), Failure> {
    let seed = literal(seed_text)?;
    let grid = parse_grid_spec(grid_text)?;
    let report = generate_type_equivalent_convs(&seed, &grid, mode)
        .map_err(|e| Failure::usage("generator", e))?;
    println!(
        "seed {} over {}: accepted {}, rejected {} ({} mode)",
        report.seed,
        grid,
        report.accepted.len(),
        report.rejected.len(),
        mode,
    );
    if diff_modes {
        let divergence = mode_divergence(&seed, &grid).map_err(|e| Failure::usage("generator", e))?;
        println!(
            "mode divergence: {} strict-only, {} paper-only",
            divergence.strict_only.len(),
            divergence.paper_only.len()
        );
        for g in &divergence.strict_only {
            println!("  strict-only (k={} p={} d={})", g.k, g.p, g.d);
        }
        for g in &divergence.paper_only {
            println!("  paper-only  (k={} p={} d={})", g.k, g.p, g.d);
        }
    }
    if let Some(path) = out {
        let base = SearchSpace::from_ops("generated", vec![seed.clone()], Provenance::User);
        let expanded = expand_space(&base, &SeedSelector::AllConvs, &grid, mode)
            .map_err(|e| Failure::usage("generator", e))?;
        let doc = SpaceDocument::new(expanded).with_report(report);
        save_space(&doc, path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn partition(file: &Path) -> Result<(), Failure> {
    let hi = domain_hi()?;
    let doc = load_space_checked(file)?;
    let classes = optypes::partition_types(&doc.space, hi);
    println!(
        "space {}: {} ops, {} type class{}",
        doc.space.name(),
        doc.space.len(),
        classes.len(),
        if classes.len() == 1 { "" } else { "es" }
    );
    for (i, class) in classes.iter().enumerate() {
        let confidence = if class.sampled { "sampled" } else { "exact" };
        println!(
            "class {i}: {} — {} member{} ({confidence})",
            signature_string(&class.signature),
            class.members.len(),
            if class.members.len() == 1 { "" } else { "s" }
        );
        for &member in &class.members {
            println!("  [{member}] {}", doc.space.op(member).label);
        }
    }
    Ok(())
}

fn run_dedup(file: &Path, level: DedupLevel, out: &Path) -> Result<(), Failure> {
    let hi = domain_hi()?;
    let doc = load_space_checked(file)?;
    let deduped = dedup(&doc.space, level, hi);
    println!("kept {} of {} ops", deduped.len(), doc.space.len());
    let mut result = SpaceDocument::new(deduped);
    result.report = doc.report;
    save_space(&result, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn graph_validate(file: &Path, input_shape: &str) -> Result<(), Failure> {
    let graph = load_graph_checked(file)?;
    let shape = parse_shape(input_shape)?;
    let flow = graph
        .validate_at(&shape)
        .map_err(|e| Failure::relation("shape-invalid", e))?;
    for (id, shape) in &flow.node_shapes {
        println!("{id}: {shape}");
    }
    for (id, shape) in &flow.output_shapes {
        println!("output {id}: {shape}");
    }
    Ok(())
}

fn graph_interchange(
    file: &Path,
    node: &str,
    with: &str,
    out: &Path,
    at: Option<&str>,
) -> Result<(), Failure> {
    let graph = load_graph_checked(file)?;
    let replacement = match parse_op_literal(with) {
        Ok(op) => Replacement::Op(op),
        Err(literal_err) => {
            if Path::new(with).exists() {
                Replacement::Subgraph(load_graph_checked(Path::new(with))?)
            } else {
                return Err(literal_err.into());
            }
        }
    };
    let rewritten = match at {
        None => graph
            .interchange(node, replacement)
            .map_err(|e| Failure::relation("interchange", e))?,
        Some(shape_text) => {
            let shape = parse_shape(shape_text)?;
            let rewrite = graph
                .interchange_at(node, replacement, &shape)
                .map_err(|e| Failure::relation("interchange", e))?;
            println!(
                "warning: replacement verified at {} only; other input shapes may break downstream",
                rewrite.checked_at
            );
            rewrite.graph
        }
    };
    save_graph(&rewritten, out)?;
    println!("wrote {}", out.display());
    Ok(())
}
