//! Equivalence and compatibility relations over operations, plus type
//! partitioning and deduplication.
//!
//! Three equivalences of decreasing strength: complete equivalence (all
//! properties equal), type equivalence (equal dimension functions), and
//! instant equivalence (dimension functions agreeing at one input). Two
//! compatibility relations govern sequencing: forward compatibility (every
//! output of A is an acceptable input of B) and complete compatibility
//! (forward in both directions).

use crate::algebra::{
    functions_equal, AlgebraError, AxisSig, Equivalence, Shape, DEFAULT_DOMAIN_HI,
};
use crate::catalog::Operation;
use crate::space::SearchSpace;

/// Per-axis integer interval of acceptable extents; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisInterval {
    pub lo: i64,
    pub hi: Option<i64>,
}

/// Per-axis interval domain of shapes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeDomain(Vec<AxisInterval>);

impl ShapeDomain {
    pub fn new(axes: Vec<AxisInterval>) -> Result<Self, AlgebraError> {
        if axes.is_empty() {
            return Err(AlgebraError::AxisMismatch { expected: 1, got: 0 });
        }
        for (axis, iv) in axes.iter().enumerate() {
            if iv.lo < 1 {
                return Err(AlgebraError::InvalidExtent { axis, extent: iv.lo });
            }
            if let Some(hi) = iv.hi {
                if hi < iv.lo {
                    return Err(AlgebraError::InvalidExtent { axis, extent: hi });
                }
            }
        }
        Ok(ShapeDomain(axes))
    }

    /// The same interval on every axis.
    pub fn square(lo: i64, hi: Option<i64>, rank: usize) -> Result<Self, AlgebraError> {
        Self::new(vec![AxisInterval { lo, hi }; rank])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn axes(&self) -> &[AxisInterval] {
        &self.0
    }

    pub fn contains(&self, shape: &Shape) -> bool {
        shape.rank() == self.rank()
            && shape.extents().iter().zip(&self.0).all(|(&e, iv)| {
                e >= iv.lo && iv.hi.is_none_or(|hi| e <= hi)
            })
    }
}

/// All properties equal: kind, parameters, channels, dimension function and
/// label. Equality of everything, not just shape behavior.
pub fn complete_equiv(a: &Operation, b: &Operation) -> bool {
    a == b
}

/// Equal dimension functions, ignoring kind and channels. Decided exactly via
/// canonical signatures when possible, by sweep otherwise.
pub fn type_equiv(a: &Operation, b: &Operation) -> bool {
    type_equiv_within(a, b, DEFAULT_DOMAIN_HI).holds
}

/// Type equivalence with an explicit sweep bound; the verdict records whether
/// sampling was needed.
pub fn type_equiv_within(a: &Operation, b: &Operation, domain_hi: i64) -> Equivalence {
    match functions_equal(&a.dimfn, &b.dimfn, domain_hi) {
        Ok(verdict) => verdict,
        // Operations of different rank are never type-equivalent.
        Err(_) => Equivalence { holds: false, sampled: false },
    }
}

/// Dimension functions intersect at the given input shape.
pub fn instant_equiv(a: &Operation, b: &Operation, at: &Shape) -> Result<bool, AlgebraError> {
    Ok(a.dimfn.eval(at)? == b.dimfn.eval(at)?)
}

/// Every output shape `a` produces over `input_domain` is an acceptable input
/// shape of `b`.
///
/// The image of an interval under a monotone dimension function starts at the
/// image of the interval's low end, and acceptable-input domains are
/// up-closed (`[min_input, ∞)` per axis), so containment reduces to checking
/// the image minimum against `b`'s minimum. Exact even when strides make the
/// image skip integers.
pub fn forward_compat(
    a: &Operation,
    b: &Operation,
    input_domain: &ShapeDomain,
) -> Result<bool, AlgebraError> {
    if input_domain.rank() != a.rank() {
        return Err(AlgebraError::AxisMismatch { expected: a.rank(), got: input_domain.rank() });
    }
    if b.rank() != a.rank() {
        return Err(AlgebraError::AxisMismatch { expected: a.rank(), got: b.rank() });
    }
    for (axis, iv) in input_domain.axes().iter().enumerate() {
        let lo_image = a.dimfn.eval_axis(axis, iv.lo)?;
        if lo_image < b.dimfn.min_input()[axis] {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Mutually forward-compatible over the same input domain.
pub fn complete_compat(
    a: &Operation,
    b: &Operation,
    input_domain: &ShapeDomain,
) -> Result<bool, AlgebraError> {
    Ok(forward_compat(a, b, input_domain)? && forward_compat(b, a, input_domain)?)
}

/// An equivalence class of operations sharing a dimension function.
///
/// `members` are indices into the partitioned space, in first-seen order.
/// `sampled` is set when any membership decision needed a pointwise sweep.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypeClass {
    pub signature: Vec<AxisSig>,
    pub members: Vec<usize>,
    pub sampled: bool,
}

/// Groups a search space's operations by canonical dimension-function
/// signature. Opaque functions form singleton classes unless pointwise-equal
/// to an existing class representative over `[.., domain_hi]`. Class order is
/// by first-seen member, so the partition is deterministic.
pub fn partition_types(space: &SearchSpace, domain_hi: i64) -> Vec<TypeClass> {
    let mut classes: Vec<TypeClass> = Vec::new();
    let mut reps: Vec<&Operation> = Vec::new();
    for (index, op) in space.ops().enumerate() {
        let sig = op.dimfn.signature();
        let opaque = sig.contains(&AxisSig::Opaque);
        let mut joined = false;
        for (class, rep) in classes.iter_mut().zip(&reps) {
            if rep.rank() != op.rank() {
                continue;
            }
            if opaque || class.signature.contains(&AxisSig::Opaque) {
                let verdict = functions_equal(&op.dimfn, &rep.dimfn, domain_hi)
                    .unwrap_or(Equivalence { holds: false, sampled: false });
                if verdict.holds {
                    class.members.push(index);
                    class.sampled |= verdict.sampled;
                    joined = true;
                    break;
                }
            } else if class.signature == sig {
                class.members.push(index);
                joined = true;
                break;
            }
        }
        if !joined {
            classes.push(TypeClass { signature: sig, members: vec![index], sampled: false });
            reps.push(op);
        }
    }
    classes
}

/// The equivalence level at which duplicates are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DedupLevel {
    Complete,
    Type,
}

/// Removes equivalent operations at the chosen level, keeping the first
/// occurrence in input order so existing indices into the space stay
/// meaningful. Stable and idempotent.
pub fn dedup(space: &SearchSpace, level: DedupLevel, domain_hi: i64) -> SearchSpace {
    let keep: Vec<usize> = match level {
        DedupLevel::Complete => {
            let mut kept: Vec<usize> = Vec::new();
            for (index, op) in space.ops().enumerate() {
                if !kept.iter().any(|&k| complete_equiv(space.op(k), op)) {
                    kept.push(index);
                }
            }
            kept
        }
        DedupLevel::Type => partition_types(space, domain_hi)
            .into_iter()
            .map(|class| class.members[0])
            .collect(),
    };
    let mut keep = keep;
    keep.sort_unstable();
    space.select(&keep)
}
