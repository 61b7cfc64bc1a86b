//! A type system for tensor operations.
//!
//! Operations are cataloged by their dimension functions — the per-axis maps
//! from input extents to output extents. Two operations with the same
//! dimension function belong to the same type and can be interchanged
//! anywhere in a network without disturbing downstream shapes. On top of
//! that foundation this crate decides equivalence and compatibility
//! relations, partitions and deduplicates search spaces, validates and
//! rewrites operation graphs, and generates new convolutions that are
//! type-equivalent to a seed by brute-force search over parameter grids.
//!
//! Everything is immutable after construction and every operation is pure,
//! so values can be shared and sent across threads freely.

pub mod algebra;
pub mod catalog;
pub mod generator;
pub mod graph;
pub mod relations;
pub mod space;

pub use algebra::{
    functions_equal, signature_string, AlgebraError, AxisFn, AxisSig, DimensionFunction,
    Equivalence, Shape, DEFAULT_DOMAIN_HI,
};
pub use catalog::{
    make_conv, make_conv_transpose, make_identity, make_pool, CatalogError, Channels, ConvParams,
    OpKind, Operation, PoolKind,
};
pub use generator::{
    expand_space, generate_type_equivalent_convs, mode_divergence, preset_grid, DerivedField,
    GeneratedConv, GenerationGrid, GenerationReport, GeneratorError, GridRange, Mode,
    ModeDivergence, RejectReason, RejectedCandidate, SeedSelector, GRID_PRESETS,
};
pub use graph::{
    DomainFlow, GraphError, InstantRewrite, OpGraph, Replacement, ShapeFlow,
};
pub use relations::{
    complete_compat, complete_equiv, dedup, forward_compat, instant_equiv, partition_types,
    type_equiv, type_equiv_within, AxisInterval, DedupLevel, ShapeDomain, TypeClass,
};
pub use space::{
    baseline_space, load_graph, load_space, parse_graph_document, parse_op_literal,
    parse_space_document, preset_space, render_grid_document, render_graph_document,
    render_space_document, save_graph, save_space, DocumentError, Provenance, SearchSpace,
    SpaceDocument, SpaceEntry, SCHEMA_VERSION, SPACE_PRESETS,
};
