//! Randomized invariants over the algebra, the relations and the document
//! round trip.

use optypes::{
    complete_equiv, dedup, forward_compat, functions_equal, instant_equiv, make_conv,
    make_conv_transpose, make_identity, make_pool, parse_space_document, partition_types,
    render_space_document, type_equiv, AxisFn, ConvParams, DedupLevel, DimensionFunction,
    OpGraph, Operation, PoolKind, Provenance, SearchSpace, Shape, ShapeDomain, SpaceDocument,
    DEFAULT_DOMAIN_HI,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

fn conv(k: i64, p: i64, d: i64, s: i64) -> Operation {
    make_conv(ConvParams::square(k, p, d, s, 2)).unwrap()
}

fn conv_t(k: i64, p: i64, d: i64, s: i64) -> Operation {
    make_conv_transpose(ConvParams::square(k, p, d, s, 2)).unwrap()
}

fn pool(kind: PoolKind, k: i64, p: i64, s: i64) -> Operation {
    make_pool(kind, ConvParams::square(k, p, 1, s, 2)).unwrap()
}

/// A pool with deliberate type coincidences, so random sampling hits real
/// positive cases of every relation.
fn op_pool() -> Vec<Operation> {
    vec![
        make_identity(2),
        conv(3, 1, 1, 1),
        conv(5, 2, 1, 1),
        conv(3, 2, 2, 1),
        conv(5, 4, 2, 1),
        pool(PoolKind::Max, 3, 1, 1),
        pool(PoolKind::Avg, 3, 1, 1),
        conv_t(3, 2, 2, 1),
        conv(3, 0, 1, 1),
        conv(5, 1, 1, 1),
        conv(7, 2, 1, 1),
        conv(3, 1, 1, 2),
        conv(2, 0, 1, 2),
        pool(PoolKind::Avg, 2, 0, 2),
        conv_t(3, 0, 1, 2),
        conv(9, 0, 1, 1),
    ]
}

fn arb_floor() -> impl Strategy<Value = AxisFn> {
    (1i64..=4, -16i64..=16).prop_map(|(stride, offset)| AxisFn::FloorAffine { stride, offset })
}

fn arb_conv_params() -> impl Strategy<Value = ConvParams> {
    (1i64..=9, 0i64..=8, 1i64..=4, 1i64..=3)
        .prop_map(|(k, p, d, s)| ConvParams::square(k, p, d, s, 2))
}

proptest! {
    /// Signature equality of closed forms coincides with pointwise equality
    /// over the whole sweep domain.
    #[test]
    fn canonical_equality_matches_pointwise(a in arb_floor(), b in arb_floor()) {
        let f = DimensionFunction::from_axes(vec![a]);
        let g = DimensionFunction::from_axes(vec![b]);
        let lo = f.min_input()[0].max(g.min_input()[0]);
        let pointwise = (lo..=DEFAULT_DOMAIN_HI)
            .all(|i| f.eval_axis(0, i).unwrap() == g.eval_axis(0, i).unwrap());
        let verdict = functions_equal(&f, &g, DEFAULT_DOMAIN_HI).unwrap();
        prop_assert_eq!(verdict.holds, pointwise);
        prop_assert!(!verdict.sampled);
    }

    /// Every cataloged dimension function is monotone nondecreasing.
    #[test]
    fn catalog_dimfns_are_monotone(params in arb_conv_params(), transpose in any::<bool>()) {
        let op = if transpose {
            make_conv_transpose(params).unwrap()
        } else {
            make_conv(params).unwrap()
        };
        let lo = op.dimfn.min_input()[0];
        let mut prev = op.dimfn.eval_axis(0, lo).unwrap();
        for i in lo + 1..lo + 128 {
            let next = op.dimfn.eval_axis(0, i).unwrap();
            prop_assert!(next >= prev, "eval({i}) = {next} < eval({}) = {prev}", i - 1);
            prev = next;
        }
    }

    /// Canonicalization never changes the value of an in-domain input.
    #[test]
    fn fusion_is_sound(chain in prop::collection::vec(arb_floor(), 2..5)) {
        let f = DimensionFunction::from_axes(vec![AxisFn::Composite(chain)]);
        let fused = f.canonicalize();
        let lo = f.min_input()[0];
        prop_assert_eq!(fused.min_input(), f.min_input());
        for i in lo..lo + 256 {
            prop_assert_eq!(f.eval_axis(0, i).unwrap(), fused.eval_axis(0, i).unwrap());
        }
    }

    /// Composition is associative at the evaluation level.
    #[test]
    fn composition_is_associative(
        a in arb_floor(),
        b in arb_floor(),
        c in arb_floor(),
        probe in 0i64..256,
    ) {
        let f = DimensionFunction::from_axes(vec![a]);
        let g = DimensionFunction::from_axes(vec![b]);
        let h = DimensionFunction::from_axes(vec![c]);
        let left = f.then(&g).unwrap().then(&h).unwrap();
        let right = f.then(&g.then(&h).unwrap()).unwrap();
        prop_assert_eq!(left.min_input(), right.min_input());
        let x = left.min_input()[0] + probe;
        prop_assert_eq!(left.eval_axis(0, x).unwrap(), right.eval_axis(0, x).unwrap());
    }

    /// Rebuilding the dimension function from stored parameters reproduces
    /// the constructed one.
    #[test]
    fn params_round_trip_to_dimfn(params in arb_conv_params(), which in 0usize..3) {
        let op = match which {
            0 => make_conv(params).unwrap(),
            1 => make_conv_transpose(params).unwrap(),
            _ => {
                let undilated = ConvParams {
                    dilation: vec![1; params.rank()],
                    ..params
                };
                make_pool(PoolKind::Max, undilated).unwrap()
            }
        };
        prop_assert_eq!(op.rebuilt_dimfn(), op.dimfn);
    }

    /// Type equivalence is an equivalence relation, and the implication chain
    /// complete => type => instant holds.
    #[test]
    fn relation_algebra(
        i in 0usize..16,
        j in 0usize..16,
        l in 0usize..16,
        probe in 0i64..32,
    ) {
        let pool = op_pool();
        let (a, b, c) = (&pool[i], &pool[j], &pool[l]);

        prop_assert!(type_equiv(a, a));
        prop_assert_eq!(type_equiv(a, b), type_equiv(b, a));
        if type_equiv(a, b) && type_equiv(b, c) {
            prop_assert!(type_equiv(a, c));
        }
        if complete_equiv(a, b) {
            prop_assert!(type_equiv(a, b));
        }
        if type_equiv(a, b) {
            let lo = a.dimfn.min_input()[0].max(b.dimfn.min_input()[0]);
            let at = Shape::square(lo + probe, 2).unwrap();
            prop_assert!(instant_equiv(a, b, &at).unwrap());
        }
    }

    /// Anything is forward-compatible with identity over any valid domain.
    #[test]
    fn identity_accepts_any_output(i in 0usize..16, lo_bump in 0i64..32) {
        let pool = op_pool();
        let op = &pool[i];
        let lo = op.dimfn.min_input().iter().copied().max().unwrap() + lo_bump;
        let domain = ShapeDomain::square(lo, Some(lo + 64), 2).unwrap();
        prop_assert!(forward_compat(op, &make_identity(2), &domain).unwrap());
    }

    /// Type-level dedup keeps exactly the first member of every type class.
    #[test]
    fn dedup_refines_partition(picks in prop::collection::vec(0usize..16, 0..24)) {
        let pool = op_pool();
        let ops: Vec<Operation> = picks.iter().map(|&i| pool[i].clone()).collect();
        let space = SearchSpace::from_ops("random", ops, Provenance::User);
        let classes = partition_types(&space, DEFAULT_DOMAIN_HI);
        let deduped = dedup(&space, DedupLevel::Type, DEFAULT_DOMAIN_HI);
        prop_assert_eq!(classes.len(), deduped.len());
        for (class, kept) in classes.iter().zip(deduped.ops()) {
            prop_assert_eq!(space.op(class.members[0]), kept);
        }
    }

    /// Composing the region's dimension functions agrees with propagating a
    /// shape node by node.
    #[test]
    fn subgraph_dimfn_matches_propagation(
        picks in prop::collection::vec(0usize..16, 1..5),
        bump in 0i64..32,
    ) {
        let pool = op_pool();
        let ops: Vec<Operation> = picks.iter().map(|&i| pool[i].clone()).collect();
        let nodes: Vec<(String, Operation)> = ops
            .iter()
            .enumerate()
            .map(|(i, op)| (format!("n{i}"), op.clone()))
            .collect();
        let edges = (1..nodes.len())
            .map(|i| (format!("n{}", i - 1), format!("n{i}")))
            .collect();
        let last = format!("n{}", nodes.len() - 1);
        let graph = OpGraph::new(
            nodes,
            edges,
            vec![("n0".to_string(), ShapeDomain::square(1, None, 2).unwrap())],
            vec![last.clone()],
        )
        .unwrap();
        let composite = graph.subgraph_dimfn("n0", &last).unwrap();
        let x = composite.min_input().iter().copied().max().unwrap() + bump;
        let shape = Shape::square(x, 2).unwrap();
        let flow = graph.validate_at(&shape).unwrap();
        prop_assert_eq!(&flow.node_shapes[&last], &composite.eval(&shape).unwrap());
    }

    /// Space documents survive the round trip byte-identically.
    #[test]
    fn documents_round_trip(picks in prop::collection::vec(0usize..16, 0..12)) {
        let pool = op_pool();
        let ops: Vec<Operation> = picks.iter().map(|&i| pool[i].clone()).collect();
        let doc = SpaceDocument::new(SearchSpace::from_ops("random", ops, Provenance::User));
        let rendered = render_space_document(&doc);
        let (parsed, warnings) = parse_space_document(&rendered).unwrap();
        prop_assert!(warnings.is_empty());
        prop_assert_eq!(&parsed.space, &doc.space);
        prop_assert_eq!(render_space_document(&parsed), rendered);
    }
}

/// Validation is a pure function of the graph: listing nodes and edges in a
/// different order changes nothing about the propagated shapes.
#[test]
fn validate_is_order_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7090);
    // Identity-typed subset of the pool, so every join is shape-valid.
    let pool: Vec<Operation> = op_pool()[..8].to_vec();
    for _ in 0..50 {
        let n = rng.gen_range(3..=10usize);
        let mut nodes: Vec<(String, Operation)> = (0..n)
            .map(|i| (format!("n{i}"), pool[rng.gen_range(0..pool.len())].clone()))
            .collect();
        let mut edges: Vec<(String, String)> = Vec::new();
        for i in 1..n {
            let parent = rng.gen_range(0..i);
            edges.push((format!("n{parent}"), format!("n{i}")));
            if i >= 2 && rng.gen_bool(0.4) {
                let extra = rng.gen_range(0..i);
                if extra != parent {
                    edges.push((format!("n{extra}"), format!("n{i}")));
                }
            }
        }
        let inputs = vec![("n0".to_string(), ShapeDomain::square(1, None, 2).unwrap())];
        let shape = Shape::new(vec![rng.gen_range(4..=64), rng.gen_range(4..=64)]).unwrap();

        let graph = OpGraph::new(nodes.clone(), edges.clone(), inputs.clone(), vec![]).unwrap();
        let reference: BTreeMap<String, Shape> = graph.validate_at(&shape).unwrap().node_shapes;

        for _ in 0..4 {
            nodes.shuffle(&mut rng);
            edges.shuffle(&mut rng);
            let reordered = OpGraph::new(nodes.clone(), edges.clone(), inputs.clone(), vec![]).unwrap();
            assert_eq!(reordered.validate_at(&shape).unwrap().node_shapes, reference);
        }
    }
}
