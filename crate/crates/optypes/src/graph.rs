//! Operation DAGs with shape checking, composite dimension functions for
//! subgraphs, and the type-preserving interchange rewrite.
//!
//! A graph's input nodes carry declared shape domains; validation propagates
//! a concrete shape (or a per-axis interval domain) topologically and checks
//! every edge. Nodes with several incoming edges require all incoming shapes
//! to be equal, the usual add/concat-on-matching-maps join. Rewrites are
//! persistent: `interchange` returns a new graph and leaves the original
//! untouched.

use crate::algebra::{functions_equal, signature_string, AlgebraError, DimensionFunction, Shape, DEFAULT_DOMAIN_HI};
use crate::catalog::Operation;
use crate::relations::{AxisInterval, ShapeDomain};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("cycle detected at node {node:?}")]
    CycleDetected { node: String },
    #[error("shape mismatch on edge {src:?} -> {dst:?}: expected {expected}, got {got}")]
    ShapeMismatch { src: String, dst: String, expected: Shape, got: Shape },
    #[error("domain mismatch on edge {src:?} -> {dst:?}")]
    DomainMismatch { src: String, dst: String },
    #[error("input to node {node:?} is below its minimum: axis {axis} needs >= {min_input}, got {got}")]
    InputBelowMinimum { node: String, axis: usize, min_input: i64, got: i64 },
    #[error("shape {got} is outside the declared domain of input node {node:?}")]
    InputOutsideDomain { node: String, got: Shape },
    #[error("channel mismatch on edge {src:?} -> {dst:?}")]
    ChannelMismatch { src: String, dst: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("input node {0:?} has incoming edges")]
    InputHasPredecessors(String),
    #[error("node {0:?} is not reachable from any input")]
    UnreachableNode(String),
    #[error("node {node:?} expects rank {expected}, got {got}")]
    RankMismatch { node: String, expected: usize, got: usize },
    #[error("no directed path from {from:?} to {to:?}")]
    NoPath { from: String, to: String },
    #[error("parallel paths from {from:?} to {to:?} compose to different dimension functions")]
    AmbiguousRegion { from: String, to: String },
    #[error("replacement for {node:?} is not type-equivalent: node has {node_signature}, replacement has {replacement_signature}")]
    NotTypeEquivalent { node: String, node_signature: String, replacement_signature: String },
    #[error("replacement for {node:?} does not match its output at {at}")]
    NotInstantEquivalent { node: String, at: Shape },
    #[error("invalid replacement: {0}")]
    InvalidReplacement(String),
    #[error(transparent)]
    Algebra(#[from] AlgebraError),
}

/// An immutable DAG of operations.
#[derive(Debug, Clone, PartialEq)]
pub struct OpGraph {
    nodes: BTreeMap<String, Operation>,
    edges: Vec<(String, String)>,
    inputs: BTreeMap<String, ShapeDomain>,
    outputs: Vec<String>,
}

/// Concrete shapes at every node after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeFlow {
    pub node_shapes: BTreeMap<String, Shape>,
    pub output_shapes: Vec<(String, Shape)>,
}

/// Interval domains at every node after validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainFlow {
    pub node_domains: BTreeMap<String, ShapeDomain>,
    pub output_domains: Vec<(String, ShapeDomain)>,
}

/// What to put in place of a node during interchange.
#[derive(Debug, Clone)]
pub enum Replacement {
    Op(Operation),
    Subgraph(OpGraph),
}

/// An interchange that was only checked at one input shape, not over the
/// whole domain. Downstream shapes are guaranteed unchanged only when the
/// graph is fed exactly the recorded shape.
#[derive(Debug, Clone)]
pub struct InstantRewrite {
    pub graph: OpGraph,
    pub checked_at: Shape,
}

impl OpGraph {
    /// Builds a graph and checks its structure: unique ids, known edge
    /// endpoints, source-only input nodes, and reachability of every node
    /// from some input. Acyclicity is checked during validation.
    pub fn new(
        nodes: Vec<(String, Operation)>,
        edges: Vec<(String, String)>,
        inputs: Vec<(String, ShapeDomain)>,
        outputs: Vec<String>,
    ) -> Result<Self, GraphError> {
        let mut node_map = BTreeMap::new();
        for (id, op) in nodes {
            if node_map.insert(id.clone(), op).is_some() {
                return Err(GraphError::DuplicateNode(id));
            }
        }
        for (src, dst) in &edges {
            for endpoint in [src, dst] {
                if !node_map.contains_key(endpoint) {
                    return Err(GraphError::UnknownNode(endpoint.clone()));
                }
            }
        }
        let mut input_map = BTreeMap::new();
        for (id, domain) in inputs {
            let op = node_map.get(&id).ok_or_else(|| GraphError::UnknownNode(id.clone()))?;
            if edges.iter().any(|(_, dst)| dst == &id) {
                return Err(GraphError::InputHasPredecessors(id));
            }
            if domain.rank() != op.rank() {
                return Err(GraphError::RankMismatch {
                    node: id,
                    expected: op.rank(),
                    got: domain.rank(),
                });
            }
            input_map.insert(id, domain);
        }
        for id in &outputs {
            if !node_map.contains_key(id) {
                return Err(GraphError::UnknownNode(id.clone()));
            }
        }

        // Every node must be reachable from an input.
        let mut reachable: BTreeSet<&String> = input_map.keys().collect();
        loop {
            let mut grew = false;
            for (src, dst) in &edges {
                if reachable.contains(src) && reachable.insert(dst) {
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if let Some(stranded) = node_map.keys().find(|id| !reachable.contains(id)) {
            return Err(GraphError::UnreachableNode(stranded.clone()));
        }

        let outputs = if outputs.is_empty() {
            // Default to every sink node.
            node_map
                .keys()
                .filter(|id| !edges.iter().any(|(src, _)| src == *id))
                .cloned()
                .collect()
        } else {
            outputs
        };
        Ok(OpGraph { nodes: node_map, edges, inputs: input_map, outputs })
    }

    pub fn node(&self, id: &str) -> Option<&Operation> {
        self.nodes.get(id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &String> {
        self.nodes.keys()
    }

    pub fn nodes(&self) -> &BTreeMap<String, Operation> {
        &self.nodes
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn inputs(&self) -> &BTreeMap<String, ShapeDomain> {
        &self.inputs
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    fn successors<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a String> {
        self.edges.iter().filter(move |(src, _)| src == id).map(|(_, dst)| dst)
    }

    /// Kahn's algorithm with a lexicographic ready queue, so the order (and
    /// therefore any reported error) is a pure function of the graph.
    fn topo_order(&self) -> Result<Vec<String>, GraphError> {
        let mut indegree: BTreeMap<&String, usize> =
            self.nodes.keys().map(|id| (id, 0)).collect();
        for (_, dst) in &self.edges {
            *indegree.get_mut(dst).unwrap() += 1;
        }
        let mut ready: BTreeSet<String> = indegree
            .iter()
            .filter(|(_, &deg)| deg == 0)
            .map(|(id, _)| (*id).clone())
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            for succ in self.successors(&id) {
                let deg = indegree.get_mut(succ).unwrap();
                *deg -= 1;
                if *deg == 0 {
                    ready.insert(succ.clone());
                }
            }
            order.push(id);
        }
        if order.len() != self.nodes.len() {
            let node = self
                .nodes
                .keys()
                .find(|id| !order.contains(id))
                .expect("some node is missing from a short topological order")
                .clone();
            return Err(GraphError::CycleDetected { node });
        }
        Ok(order)
    }

    /// The earliest edge (in edge-list order) into `dst`, used to pick the
    /// deterministic "expected" side of a join mismatch.
    fn incoming_in_edge_order<'a>(&'a self, dst: &'a str) -> Vec<(&'a String, &'a String)> {
        self.edges
            .iter()
            .filter(|(_, d)| d == dst)
            .map(|(s, d)| (s, d))
            .collect()
    }

    fn check_channels(&self, dst: &str) -> Result<(), GraphError> {
        for (src, _) in self.incoming_in_edge_order(dst) {
            let producer = &self.nodes[src];
            let consumer = &self.nodes[dst];
            if !producer.channels.feeds(&consumer.channels) {
                return Err(GraphError::ChannelMismatch { src: src.clone(), dst: dst.to_string() });
            }
        }
        Ok(())
    }

    /// Propagates one concrete input shape (fed to every input node) through
    /// the graph. Fails on the first offending edge in canonical order.
    pub fn validate_at(&self, shape: &Shape) -> Result<ShapeFlow, GraphError> {
        let order = self.topo_order()?;
        let mut shapes: BTreeMap<String, Shape> = BTreeMap::new();
        for id in &order {
            let op = &self.nodes[id];
            let incoming = if let Some(domain) = self.inputs.get(id) {
                if !domain.contains(shape) {
                    return Err(GraphError::InputOutsideDomain { node: id.clone(), got: shape.clone() });
                }
                shape.clone()
            } else {
                let preds = self.incoming_in_edge_order(id);
                let first = &shapes[preds[0].0];
                for (src, _) in &preds[1..] {
                    if &shapes[*src] != first {
                        return Err(GraphError::ShapeMismatch {
                            src: (*src).clone(),
                            dst: id.clone(),
                            expected: first.clone(),
                            got: shapes[*src].clone(),
                        });
                    }
                }
                first.clone()
            };
            self.check_channels(id)?;
            let out = op.dimfn.eval(&incoming).map_err(|err| match err {
                AlgebraError::InputBelowMinimum { axis, min_input, got } => {
                    GraphError::InputBelowMinimum { node: id.clone(), axis, min_input, got }
                }
                other => GraphError::Algebra(other),
            })?;
            shapes.insert(id.clone(), out);
        }
        let output_shapes = self
            .outputs
            .iter()
            .map(|id| (id.clone(), shapes[id].clone()))
            .collect();
        Ok(ShapeFlow { node_shapes: shapes, output_shapes })
    }

    /// Propagates a per-axis interval domain instead of a single shape. The
    /// image of an interval under a monotone dimension function is bracketed
    /// by the images of its endpoints.
    pub fn validate_domain(&self, domain: &ShapeDomain) -> Result<DomainFlow, GraphError> {
        let order = self.topo_order()?;
        let mut domains: BTreeMap<String, ShapeDomain> = BTreeMap::new();
        for id in &order {
            let op = &self.nodes[id];
            let incoming = if self.inputs.contains_key(id) {
                domain.clone()
            } else {
                let preds = self.incoming_in_edge_order(id);
                let first = domains[preds[0].0].clone();
                for (src, _) in &preds[1..] {
                    if domains[*src] != first {
                        return Err(GraphError::DomainMismatch {
                            src: (*src).clone(),
                            dst: id.clone(),
                        });
                    }
                }
                first
            };
            self.check_channels(id)?;
            if incoming.rank() != op.rank() {
                return Err(GraphError::RankMismatch {
                    node: id.clone(),
                    expected: op.rank(),
                    got: incoming.rank(),
                });
            }
            let mut axes = Vec::with_capacity(op.rank());
            for (axis, iv) in incoming.axes().iter().enumerate() {
                let lo = op.dimfn.eval_axis(axis, iv.lo).map_err(|err| match err {
                    AlgebraError::InputBelowMinimum { axis, min_input, got } => {
                        GraphError::InputBelowMinimum { node: id.clone(), axis, min_input, got }
                    }
                    other => GraphError::Algebra(other),
                })?;
                let hi = match iv.hi {
                    Some(h) => Some(op.dimfn.eval_axis(axis, h).map_err(GraphError::Algebra)?),
                    None => None,
                };
                axes.push(AxisInterval { lo, hi });
            }
            domains.insert(id.clone(), ShapeDomain::new(axes)?);
        }
        let output_domains = self
            .outputs
            .iter()
            .map(|id| (id.clone(), domains[id].clone()))
            .collect();
        Ok(DomainFlow { node_domains: domains, output_domains })
    }

    /// Composite dimension function of the region between two nodes: the
    /// composition of member functions along any directed path, required to
    /// agree across parallel paths. Both endpoints' own operations are part
    /// of the composition.
    pub fn subgraph_dimfn(&self, from: &str, to: &str) -> Result<DimensionFunction, GraphError> {
        for id in [from, to] {
            if !self.nodes.contains_key(id) {
                return Err(GraphError::UnknownNode(id.to_string()));
            }
        }
        let mut paths: Vec<Vec<String>> = Vec::new();
        let mut stack = vec![from.to_string()];
        self.collect_paths(from, to, &mut stack, &mut paths);
        if paths.is_empty() {
            return Err(GraphError::NoPath { from: from.to_string(), to: to.to_string() });
        }
        let mut composites = Vec::with_capacity(paths.len());
        for path in &paths {
            let mut dimfn = self.nodes[&path[0]].dimfn.clone();
            for id in &path[1..] {
                dimfn = dimfn.then(&self.nodes[id].dimfn)?;
            }
            composites.push(dimfn.canonicalize());
        }
        for other in &composites[1..] {
            let verdict = functions_equal(&composites[0], other, DEFAULT_DOMAIN_HI)?;
            if !verdict.holds {
                return Err(GraphError::AmbiguousRegion {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
        }
        Ok(composites.swap_remove(0))
    }

    fn collect_paths(
        &self,
        current: &str,
        to: &str,
        stack: &mut Vec<String>,
        paths: &mut Vec<Vec<String>>,
    ) {
        if current == to {
            paths.push(stack.clone());
            return;
        }
        let next: Vec<String> = self.successors(current).cloned().collect();
        for succ in next {
            if stack.contains(&succ) {
                continue; // simple paths only
            }
            stack.push(succ.clone());
            self.collect_paths(&succ, to, stack, paths);
            stack.pop();
        }
    }

    fn replacement_dimfn(&self, replacement: &Replacement) -> Result<DimensionFunction, GraphError> {
        match replacement {
            Replacement::Op(op) => Ok(op.dimfn.clone()),
            Replacement::Subgraph(sub) => {
                let (entry, exit) = sub.single_entry_exit()?;
                sub.subgraph_dimfn(&entry, &exit)
            }
        }
    }

    fn single_entry_exit(&self) -> Result<(String, String), GraphError> {
        if self.inputs.len() != 1 || self.outputs.len() != 1 {
            return Err(GraphError::InvalidReplacement(format!(
                "replacement subgraph must have exactly one input and one output, found {} and {}",
                self.inputs.len(),
                self.outputs.len()
            )));
        }
        Ok((self.inputs.keys().next().unwrap().clone(), self.outputs[0].clone()))
    }

    /// Replaces a node with a type-equivalent operation or single-entry
    /// subgraph, returning a new graph. Because the replacement has the same
    /// dimension function over the whole input domain, every shape outside
    /// the replaced region is unchanged.
    pub fn interchange(&self, node_id: &str, replacement: Replacement) -> Result<OpGraph, GraphError> {
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| GraphError::UnknownNode(node_id.to_string()))?;
        let repl_dimfn = self.replacement_dimfn(&replacement)?;
        let verdict = functions_equal(&node.dimfn, &repl_dimfn, DEFAULT_DOMAIN_HI)?;
        if !verdict.holds {
            return Err(GraphError::NotTypeEquivalent {
                node: node_id.to_string(),
                node_signature: signature_string(&node.dimfn.signature()),
                replacement_signature: signature_string(&repl_dimfn.signature()),
            });
        }
        self.splice(node_id, replacement)
    }

    /// Interchange under instant equivalence only: the replacement is checked
    /// at a single caller-supplied shape and the result carries that shape as
    /// a warning marker.
    pub fn interchange_at(
        &self,
        node_id: &str,
        replacement: Replacement,
        at: &Shape,
    ) -> Result<InstantRewrite, GraphError> {
        let node = self
            .nodes
            .get(node_id)
            .ok_or_else(|| GraphError::UnknownNode(node_id.to_string()))?;
        let repl_dimfn = self.replacement_dimfn(&replacement)?;
        if node.dimfn.eval(at)? != repl_dimfn.eval(at)? {
            return Err(GraphError::NotInstantEquivalent {
                node: node_id.to_string(),
                at: at.clone(),
            });
        }
        let graph = self.splice(node_id, replacement)?;
        Ok(InstantRewrite { graph, checked_at: at.clone() })
    }

    fn splice(&self, node_id: &str, replacement: Replacement) -> Result<OpGraph, GraphError> {
        match replacement {
            Replacement::Op(op) => {
                let mut graph = self.clone();
                graph.nodes.insert(node_id.to_string(), op);
                Ok(graph)
            }
            Replacement::Subgraph(sub) => {
                let (entry, exit) = sub.single_entry_exit()?;
                let rename = |sub_id: &str| format!("{node_id}.{sub_id}");
                let mut nodes = self.nodes.clone();
                nodes.remove(node_id);
                for (sub_id, op) in &sub.nodes {
                    let new_id = rename(sub_id);
                    if nodes.insert(new_id.clone(), op.clone()).is_some() {
                        return Err(GraphError::DuplicateNode(new_id));
                    }
                }
                let new_entry = rename(&entry);
                let new_exit = rename(&exit);
                let mut edges: Vec<(String, String)> = self
                    .edges
                    .iter()
                    .map(|(src, dst)| {
                        let src = if src == node_id { new_exit.clone() } else { src.clone() };
                        let dst = if dst == node_id { new_entry.clone() } else { dst.clone() };
                        (src, dst)
                    })
                    .collect();
                edges.extend(
                    sub.edges.iter().map(|(src, dst)| (rename(src), rename(dst))),
                );
                let mut inputs = self.inputs.clone();
                if let Some(domain) = inputs.remove(node_id) {
                    inputs.insert(new_entry.clone(), domain);
                }
                let outputs = self
                    .outputs
                    .iter()
                    .map(|id| if id == node_id { new_exit.clone() } else { id.clone() })
                    .collect();
                Ok(OpGraph { nodes, edges, inputs, outputs })
            }
        }
    }
}
