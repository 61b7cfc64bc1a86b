//! Search-space model, presets, and document persistence.
//!
//! A search space is an ordered multiset of operations, each tagged with its
//! origin. Spaces, operation graphs and generation reports are persisted as
//! versioned JSON documents with a canonical serialization (fixed field
//! order, two-space indent, trailing newline), so a parsed-and-reserialized
//! canonical document is byte-identical.

use crate::catalog::{
    make_conv, make_conv_transpose, make_identity, make_pool, Channels, ConvParams, Operation,
    PoolKind,
};
use crate::generator::{GenerationGrid, GenerationReport, Mode};
use crate::graph::OpGraph;
use crate::relations::{AxisInterval, ShapeDomain};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Version written into every document.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DocumentError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unsupported schema version {found} (supported: {supported})")]
    SchemaVersionMismatch { found: u32, supported: u32 },
    #[error("invalid operation at index {index}: {message}")]
    InvalidOp { index: usize, message: String },
    #[error("invalid operation literal {literal:?}: {message}")]
    InvalidLiteral { literal: String, message: String },
    #[error("unknown space preset: {0}")]
    UnknownPreset(String),
    #[error("invalid graph document: {0}")]
    InvalidGraph(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// Where an operation in a space came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "origin", rename_all = "kebab-case")]
pub enum Provenance {
    Baseline,
    PaperPreset,
    Generated { seed: String, grid: GenerationGrid, mode: Mode },
    User,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceEntry {
    pub op: Operation,
    pub provenance: Provenance,
}

/// A named, ordered multiset of operations with per-operation provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    name: String,
    entries: Vec<SpaceEntry>,
}

impl SearchSpace {
    pub fn new(name: impl Into<String>) -> Self {
        SearchSpace { name: name.into(), entries: Vec::new() }
    }

    pub fn from_entries(name: impl Into<String>, entries: Vec<SpaceEntry>) -> Self {
        SearchSpace { name: name.into(), entries }
    }

    /// Builds a space where every operation shares one provenance tag.
    pub fn from_ops(name: impl Into<String>, ops: Vec<Operation>, provenance: Provenance) -> Self {
        let entries = ops
            .into_iter()
            .map(|op| SpaceEntry { op, provenance: provenance.clone() })
            .collect();
        SearchSpace { name: name.into(), entries }
    }

    pub fn push(&mut self, op: Operation, provenance: Provenance) {
        self.entries.push(SpaceEntry { op, provenance });
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rename(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn entries(&self) -> &[SpaceEntry] {
        &self.entries
    }

    pub fn ops(&self) -> impl Iterator<Item = &Operation> {
        self.entries.iter().map(|e| &e.op)
    }

    pub fn op(&self, index: usize) -> &Operation {
        &self.entries[index].op
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn labels(&self) -> Vec<&str> {
        self.ops().map(|op| op.label.as_str()).collect()
    }

    /// A new space holding the entries at the given indices, in the given
    /// order.
    pub fn select(&self, indices: &[usize]) -> SearchSpace {
        SearchSpace {
            name: self.name.clone(),
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
        }
    }

    /// True when both spaces hold the same operations in the same order,
    /// ignoring names and provenance.
    pub fn same_roster(&self, other: &SearchSpace) -> bool {
        self.len() == other.len() && self.ops().zip(other.ops()).all(|(a, b)| a == b)
    }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// All space preset codes.
pub const SPACE_PRESETS: [&str; 8] = ["S0", "3a", "3b", "3c", "3d", "3E", "3F", "3G"];

/// The baseline space: six operations, every one with the identity dimension
/// function, so any arrangement stays compatible from input to output.
///
/// Roster (2-axis, square): plain 3x3 and 5x5 convolutions at padding 1 and
/// 2, depthwise-separable 3x3 and 5x5 convolutions modeled by their spatial
/// shape behavior (identical to the plain convolutions, distinguished by
/// label), and 3x3 max/avg pooling at padding 1.
pub fn baseline_space() -> SearchSpace {
    let conv = |k, p, label: &str| {
        make_conv(ConvParams::square(k, p, 1, 1, 2)).expect("baseline params are valid").with_label(label)
    };
    let pool = |kind, label: &str| {
        make_pool(kind, ConvParams::square(3, 1, 1, 1, 2)).expect("baseline params are valid").with_label(label)
    };
    SearchSpace::from_ops(
        "S0",
        vec![
            conv(3, 1, "conv_3x3"),
            conv(5, 2, "conv_5x5"),
            conv(3, 1, "sep_conv_3x3"),
            conv(5, 2, "sep_conv_5x5"),
            pool(PoolKind::Max, "max_pool_3x3"),
            pool(PoolKind::Avg, "avg_pool_3x3"),
        ],
        Provenance::Baseline,
    )
}

/// The five identity-typed dilated convolutions added across the presets.
fn dilated_conv_tuples() -> [(i64, i64, i64); 5] {
    [(3, 2, 2), (3, 3, 3), (5, 4, 2), (5, 6, 3), (5, 12, 6)]
}

fn preset_conv(k: i64, p: i64, d: i64) -> Operation {
    make_conv(ConvParams::square(k, p, d, 1, 2)).expect("preset params are valid")
}

fn preset_conv_transpose(k: i64, p: i64, d: i64) -> Operation {
    make_conv_transpose(ConvParams::square(k, p, d, 1, 2)).expect("preset params are valid")
}

/// Materializes a preset search space by code.
pub fn preset_space(code: &str) -> Result<SearchSpace, DocumentError> {
    let mut space = baseline_space().rename(code);
    let tuples = dilated_conv_tuples();
    let add_set = |space: &mut SearchSpace, copies: usize| {
        for _ in 0..copies {
            for &(k, p, d) in &tuples {
                space.push(preset_conv(k, p, d), Provenance::PaperPreset);
            }
        }
    };
    match code {
        "S0" => {}
        "3a" => add_set(&mut space, 1),
        "3b" => add_set(&mut space, 6),
        "3c" => add_set(&mut space, 20),
        "3d" => add_set(&mut space, 50),
        "3E" => {
            let (k, p, d) = tuples[0];
            space.push(preset_conv(k, p, d), Provenance::PaperPreset);
        }
        "3F" => {
            for &(k, p, d) in &tuples[..2] {
                space.push(preset_conv(k, p, d), Provenance::PaperPreset);
            }
        }
        "3G" => {
            add_set(&mut space, 1);
            for &(k, p, d) in &tuples {
                space.push(preset_conv_transpose(k, p, d), Provenance::PaperPreset);
            }
        }
        other => return Err(DocumentError::UnknownPreset(other.to_string())),
    }
    Ok(space)
}

// ---------------------------------------------------------------------------
// Operation literals (CLI grammar)
// ---------------------------------------------------------------------------

/// Parses the compact operation grammar used on the command line:
/// `conv k=3 p=2 d=2 s=1`, `max_pool k=3 p=1 s=1`, `identity`.
///
/// Literal operations are square and 2-axis; per-axis parameters go through
/// documents. Defaults: `p=0 d=1 s=1`.
pub fn parse_op_literal(text: &str) -> Result<Operation, DocumentError> {
    let bad = |message: String| DocumentError::InvalidLiteral { literal: text.to_string(), message };
    let mut tokens = text.split_whitespace();
    let kind = tokens.next().ok_or_else(|| bad("empty literal".to_string()))?;

    let mut k: Option<i64> = None;
    let mut p: i64 = 0;
    let mut d: i64 = 1;
    let mut s: i64 = 1;
    let mut seen: Vec<&str> = Vec::new();
    let pool = matches!(kind, "max_pool" | "avg_pool");
    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got {token:?}")))?;
        let value: i64 = value
            .parse()
            .map_err(|_| bad(format!("{key} must be an integer, got {value:?}")))?;
        if seen.contains(&key) {
            return Err(bad(format!("duplicate key {key:?}")));
        }
        match key {
            "k" => k = Some(value),
            "p" => p = value,
            "d" if !pool => d = value,
            "s" => s = value,
            other => return Err(bad(format!("unknown key {other:?} for {kind}"))),
        }
        seen.push(key);
    }

    let kernel = || k.ok_or_else(|| bad(format!("{kind} requires k=")));
    let op = match kind {
        "identity" => {
            if !seen.is_empty() {
                return Err(bad("identity takes no parameters".to_string()));
            }
            make_identity(2)
        }
        "conv" => make_conv(ConvParams::square(kernel()?, p, d, s, 2))
            .map_err(|e| bad(e.to_string()))?,
        "conv_transpose" => make_conv_transpose(ConvParams::square(kernel()?, p, d, s, 2))
            .map_err(|e| bad(e.to_string()))?,
        "max_pool" => make_pool(PoolKind::Max, ConvParams::square(kernel()?, p, 1, s, 2))
            .map_err(|e| bad(e.to_string()))?,
        "avg_pool" => make_pool(PoolKind::Avg, ConvParams::square(kernel()?, p, 1, s, 2))
            .map_err(|e| bad(e.to_string()))?,
        other => return Err(bad(format!("unknown operation kind {other:?}"))),
    };
    Ok(op)
}

// ---------------------------------------------------------------------------
// Document encoding
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
struct ChannelsDoc {
    #[serde(rename = "in")]
    input: Option<i64>,
    #[serde(rename = "out")]
    output: Option<i64>,
}

/// The on-disk encoding of one operation. Parameter vectors are per-axis;
/// `axes` is written only for parameterless kinds, where the rank cannot be
/// recovered from `k`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct OpDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s: Option<Vec<i64>>,
    #[serde(default)]
    channels: ChannelsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

fn op_to_doc(op: &Operation) -> OpDoc {
    OpDoc {
        kind: op.kind.to_string(),
        axes: if op.params.is_none() { Some(op.rank()) } else { None },
        k: op.params.as_ref().map(|p| p.kernel.clone()),
        p: op.params.as_ref().map(|p| p.padding.clone()),
        d: op.params.as_ref().map(|p| p.dilation.clone()),
        s: op.params.as_ref().map(|p| p.stride.clone()),
        channels: ChannelsDoc { input: op.channels.input, output: op.channels.output },
        label: Some(op.label.clone()),
    }
}

fn op_from_doc(doc: &OpDoc, index: usize, warnings: &mut Vec<String>) -> Result<Operation, DocumentError> {
    let invalid = |message: String| DocumentError::InvalidOp { index, message };
    let mut warn = |field: &str, default: &str| {
        warnings.push(format!("op {index}: missing {field}, defaulted to {default}"));
    };
    let op = match doc.kind.as_str() {
        "identity" => {
            if doc.k.is_some() || doc.p.is_some() || doc.d.is_some() || doc.s.is_some() {
                return Err(invalid("identity takes no parameters".to_string()));
            }
            let rank = match doc.axes {
                Some(rank) if rank >= 1 => rank,
                Some(rank) => return Err(invalid(format!("axes must be >= 1, got {rank}"))),
                None => {
                    warn("axes", "2");
                    2
                }
            };
            make_identity(rank)
        }
        kind @ ("conv" | "conv_transpose" | "max_pool" | "avg_pool") => {
            let kernel = doc.k.clone().ok_or_else(|| invalid(format!("{kind} requires k")))?;
            let rank = kernel.len();
            if let Some(axes) = doc.axes {
                if axes != rank {
                    return Err(invalid(format!("axes={axes} disagrees with k of length {rank}")));
                }
            }
            let padding = doc.p.clone().unwrap_or_else(|| {
                warn("p", "0");
                vec![0; rank]
            });
            let dilation = doc.d.clone().unwrap_or_else(|| {
                warn("d", "1");
                vec![1; rank]
            });
            let stride = doc.s.clone().unwrap_or_else(|| {
                warn("s", "1");
                vec![1; rank]
            });
            let params = ConvParams { kernel, padding, dilation, stride };
            let built = match kind {
                "conv" => make_conv(params),
                "conv_transpose" => make_conv_transpose(params),
                "max_pool" => make_pool(PoolKind::Max, params),
                "avg_pool" => make_pool(PoolKind::Avg, params),
                _ => unreachable!(),
            };
            built.map_err(|e| invalid(e.to_string()))?
        }
        other => return Err(invalid(format!("unknown operation kind {other:?}"))),
    };
    let op = op.with_channels(Channels { input: doc.channels.input, output: doc.channels.output });
    match &doc.label {
        Some(label) => Ok(op.with_label(label.clone())),
        None => {
            warnings.push(format!("op {index}: missing label, defaulted to the canonical literal"));
            Ok(op)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryRaw {
    op: OpDoc,
    provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceRaw {
    name: String,
    ops: Vec<EntryRaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceDocRaw {
    schema: u32,
    space: SpaceRaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    report: Option<GenerationReport>,
}

/// A versioned search-space document, optionally carrying the generation
/// report that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceDocument {
    pub schema: u32,
    pub space: SearchSpace,
    pub report: Option<GenerationReport>,
}

impl SpaceDocument {
    pub fn new(space: SearchSpace) -> Self {
        SpaceDocument { schema: SCHEMA_VERSION, space, report: None }
    }

    pub fn with_report(mut self, report: GenerationReport) -> Self {
        self.report = Some(report);
        self
    }
}

fn canonical_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("document types always serialize");
    text.push('\n');
    text
}

fn parse_error(err: &serde_json::Error) -> DocumentError {
    DocumentError::Parse { line: err.line(), column: err.column(), message: err.to_string() }
}

/// Canonical serialization of a space document.
pub fn render_space_document(doc: &SpaceDocument) -> String {
    let raw = SpaceDocRaw {
        schema: doc.schema,
        space: SpaceRaw {
            name: doc.space.name().to_string(),
            ops: doc
                .space
                .entries()
                .iter()
                .map(|entry| EntryRaw { op: op_to_doc(&entry.op), provenance: entry.provenance.clone() })
                .collect(),
        },
        report: doc.report.clone(),
    };
    canonical_json(&raw)
}

/// Parses a space document, returning it with any schema-default warnings.
pub fn parse_space_document(text: &str) -> Result<(SpaceDocument, Vec<String>), DocumentError> {
    let raw: SpaceDocRaw = serde_json::from_str(text).map_err(|e| parse_error(&e))?;
    if raw.schema != SCHEMA_VERSION {
        return Err(DocumentError::SchemaVersionMismatch {
            found: raw.schema,
            supported: SCHEMA_VERSION,
        });
    }
    let mut warnings = Vec::new();
    let mut entries = Vec::with_capacity(raw.space.ops.len());
    for (index, entry) in raw.space.ops.iter().enumerate() {
        let op = op_from_doc(&entry.op, index, &mut warnings)?;
        entries.push(SpaceEntry { op, provenance: entry.provenance.clone() });
    }
    let document = SpaceDocument {
        schema: raw.schema,
        space: SearchSpace::from_entries(raw.space.name, entries),
        report: raw.report,
    };
    Ok((document, warnings))
}

fn read_file(path: &Path) -> Result<String, DocumentError> {
    std::fs::read_to_string(path).map_err(|e| DocumentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), DocumentError> {
    std::fs::write(path, contents).map_err(|e| DocumentError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_space(path: impl AsRef<Path>) -> Result<(SpaceDocument, Vec<String>), DocumentError> {
    parse_space_document(&read_file(path.as_ref())?)
}

pub fn save_space(doc: &SpaceDocument, path: impl AsRef<Path>) -> Result<(), DocumentError> {
    write_file(path.as_ref(), &render_space_document(doc))
}

// ---------------------------------------------------------------------------
// Graph documents
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IntervalRaw {
    lo: i64,
    hi: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NodeRaw {
    id: String,
    op: OpDoc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InputRaw {
    node: String,
    domain: Vec<IntervalRaw>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphRaw {
    nodes: Vec<NodeRaw>,
    edges: Vec<(String, String)>,
    inputs: Vec<InputRaw>,
    #[serde(default)]
    outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphDocRaw {
    schema: u32,
    graph: GraphRaw,
}

/// Canonical serialization of an operation graph.
pub fn render_graph_document(graph: &OpGraph) -> String {
    let raw = GraphDocRaw {
        schema: SCHEMA_VERSION,
        graph: GraphRaw {
            nodes: graph
                .nodes()
                .iter()
                .map(|(id, op)| NodeRaw { id: id.clone(), op: op_to_doc(op) })
                .collect(),
            edges: graph.edges().to_vec(),
            inputs: graph
                .inputs()
                .iter()
                .map(|(node, domain)| InputRaw {
                    node: node.clone(),
                    domain: domain
                        .axes()
                        .iter()
                        .map(|iv| IntervalRaw { lo: iv.lo, hi: iv.hi })
                        .collect(),
                })
                .collect(),
            outputs: graph.outputs().to_vec(),
        },
    };
    canonical_json(&raw)
}

/// Parses a graph document and rebuilds the validated graph structure.
pub fn parse_graph_document(text: &str) -> Result<(OpGraph, Vec<String>), DocumentError> {
    let raw: GraphDocRaw = serde_json::from_str(text).map_err(|e| parse_error(&e))?;
    if raw.schema != SCHEMA_VERSION {
        return Err(DocumentError::SchemaVersionMismatch {
            found: raw.schema,
            supported: SCHEMA_VERSION,
        });
    }
    let mut warnings = Vec::new();
    let mut nodes = Vec::with_capacity(raw.graph.nodes.len());
    for (index, node) in raw.graph.nodes.iter().enumerate() {
        let op = op_from_doc(&node.op, index, &mut warnings)?;
        nodes.push((node.id.clone(), op));
    }
    let mut inputs = Vec::with_capacity(raw.graph.inputs.len());
    for input in &raw.graph.inputs {
        let axes = input
            .domain
            .iter()
            .map(|iv| AxisInterval { lo: iv.lo, hi: iv.hi })
            .collect();
        let domain = ShapeDomain::new(axes)
            .map_err(|e| DocumentError::InvalidGraph(format!("input {}: {e}", input.node)))?;
        inputs.push((input.node.clone(), domain));
    }
    let graph = OpGraph::new(nodes, raw.graph.edges, inputs, raw.graph.outputs)
        .map_err(|e| DocumentError::InvalidGraph(e.to_string()))?;
    Ok((graph, warnings))
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<(OpGraph, Vec<String>), DocumentError> {
    parse_graph_document(&read_file(path.as_ref())?)
}

pub fn save_graph(graph: &OpGraph, path: impl AsRef<Path>) -> Result<(), DocumentError> {
    write_file(path.as_ref(), &render_graph_document(graph))
}

/// Canonical serialization of a grid preset or custom grid.
pub fn render_grid_document(grid: &GenerationGrid) -> String {
    canonical_json(grid)
}
