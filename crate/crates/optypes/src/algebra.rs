//! Shapes and dimension functions.
//!
//! A dimension function maps the per-axis extents of data entering an
//! operation to the extents leaving it. Strided layers collapse to the
//! floor-affine form `I ↦ floor((I + a) / s) + 1`, transposed layers to the
//! reverse form `I ↦ (I - 1)·s + b`, and anything built by composition is
//! kept as an ordered chain. Equality of two dimension functions is decided
//! exactly whenever both sides reduce to a closed form, and by a pointwise
//! sweep otherwise.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Default upper bound of the pointwise-equality sweep, per axis.
///
/// Large enough to exceed any practical image extent while keeping a full
/// sweep well under a millisecond.
pub const DEFAULT_DOMAIN_HI: i64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlgebraError {
    #[error("axis count mismatch: expected {expected}, got {got}")]
    AxisMismatch { expected: usize, got: usize },
    #[error("input {got} on axis {axis} is below the minimum acceptable extent {min_input}")]
    InputBelowMinimum { axis: usize, min_input: i64, got: i64 },
    #[error("extent {extent} on axis {axis} is not a positive integer")]
    InvalidExtent { axis: usize, extent: i64 },
}

/// Per-axis positive extents of data flowing between operations.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape(Vec<i64>);

impl Shape {
    /// Builds a shape, rejecting empty or non-positive extents.
    pub fn new(extents: Vec<i64>) -> Result<Self, AlgebraError> {
        if extents.is_empty() {
            return Err(AlgebraError::AxisMismatch { expected: 1, got: 0 });
        }
        for (axis, &extent) in extents.iter().enumerate() {
            if extent < 1 {
                return Err(AlgebraError::InvalidExtent { axis, extent });
            }
        }
        Ok(Shape(extents))
    }

    /// Square shape: the same extent on every axis.
    pub fn square(extent: i64, rank: usize) -> Result<Self, AlgebraError> {
        Self::new(vec![extent; rank])
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn extents(&self) -> &[i64] {
        &self.0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{e}")?;
        }
        write!(f, ")")
    }
}

/// A single-axis dimension function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AxisFn {
    /// `I ↦ floor((I + offset) / stride) + 1`, the shape rule of strided
    /// sliding-window layers. `stride ≥ 1`.
    FloorAffine { stride: i64, offset: i64 },
    /// `I ↦ (I - 1)·stride + offset`, the shape rule of transposed
    /// convolutions. `stride ≥ 1`.
    ReverseAffine { stride: i64, offset: i64 },
    /// An ordered chain, applied left to right.
    Composite(Vec<AxisFn>),
}

impl AxisFn {
    pub fn identity() -> Self {
        AxisFn::FloorAffine { stride: 1, offset: -1 }
    }

    /// Applies the raw formula without any domain check.
    fn apply(&self, input: i64) -> i64 {
        match self {
            AxisFn::FloorAffine { stride, offset } => (input + offset).div_euclid(*stride) + 1,
            AxisFn::ReverseAffine { stride, offset } => (input - 1) * stride + offset,
            AxisFn::Composite(chain) => chain.iter().fold(input, |acc, f| f.apply(acc)),
        }
    }

    /// Smallest input for which this function (and every stage of a chain)
    /// produces an extent ≥ 1.
    fn min_input(&self) -> i64 {
        match self {
            // floor((I + a)/s) + 1 ≥ 1  ⇔  I ≥ -a
            AxisFn::FloorAffine { offset, .. } => 1.max(-offset),
            // (I - 1)·s + b ≥ 1  ⇔  I ≥ 1 + ceil((1 - b)/s)
            AxisFn::ReverseAffine { stride, offset } => {
                1.max(1 + (1 - offset + stride - 1).div_euclid(*stride))
            }
            AxisFn::Composite(chain) => {
                let mut min = 1;
                let mut prefix: Vec<&AxisFn> = Vec::new();
                for stage in chain {
                    let target = stage.min_input();
                    min = if prefix.is_empty() {
                        min.max(target)
                    } else {
                        least_input_reaching(
                            |i| prefix.iter().fold(i, |acc, f| f.apply(acc)),
                            min,
                            target,
                        )
                    };
                    prefix.push(stage);
                }
                min
            }
        }
    }

    /// Canonical signature, fusing chains where the rewrite is provably exact.
    fn signature(&self) -> AxisSig {
        match self.canonicalize() {
            AxisFn::FloorAffine { stride: 1, offset } => {
                AxisSig::Affine { slope: 1, intercept: offset + 1 }
            }
            AxisFn::FloorAffine { stride, offset } => AxisSig::Floor { stride, offset },
            // (I - 1)·s + b = s·I + (b - s), exact for all I
            AxisFn::ReverseAffine { stride, offset } => {
                AxisSig::Affine { slope: stride, intercept: offset - stride }
            }
            AxisFn::Composite(_) => AxisSig::Opaque,
        }
    }

    /// Fuses adjacent floor-affine stages when the inner stride is 1:
    /// `floor((I + a1)/1) + 1` followed by `floor((I' + a2)/s2) + 1` equals
    /// `floor((I + a1 + a2 + 1)/s2) + 1` on every integer. Chains that do not
    /// reduce this way are left as composites.
    fn canonicalize(&self) -> AxisFn {
        let AxisFn::Composite(chain) = self else {
            return self.clone();
        };
        // Flatten nested composites, then fuse left to right.
        let mut flat: Vec<AxisFn> = Vec::new();
        for stage in chain {
            match stage.canonicalize() {
                AxisFn::Composite(inner) => flat.extend(inner),
                single => flat.push(single),
            }
        }
        let mut fused: Vec<AxisFn> = Vec::new();
        for stage in flat {
            match (fused.last(), &stage) {
                (
                    Some(AxisFn::FloorAffine { stride: 1, offset: a1 }),
                    AxisFn::FloorAffine { stride: s2, offset: a2 },
                ) => {
                    let combined = AxisFn::FloorAffine { stride: *s2, offset: a1 + a2 + 1 };
                    fused.pop();
                    fused.push(combined);
                }
                _ => fused.push(stage),
            }
        }
        if fused.len() == 1 {
            fused.pop().unwrap()
        } else {
            AxisFn::Composite(fused)
        }
    }
}

/// Canonical per-axis signature of a dimension function.
///
/// Field equality on non-opaque signatures coincides with pointwise equality
/// over every valid input: a floor form with stride ≥ 2 has plateaus that
/// recur with period `stride`, so two distinct floor forms (or a floor form
/// and any affine form) disagree at arbitrarily large inputs, and two affine
/// forms agree everywhere only when slope and intercept match. Slope-1 floor
/// forms and reverse forms are both normalized to the affine case so that the
/// comparison stays exact across families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisSig {
    /// `I ↦ slope·I + intercept`, exact.
    Affine { slope: i64, intercept: i64 },
    /// `I ↦ floor((I + offset)/stride) + 1` with `stride ≥ 2`.
    Floor { stride: i64, offset: i64 },
    /// No exact closed form; equality is decided by sweep.
    Opaque,
}

impl fmt::Display for AxisSig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AxisSig::Affine { slope: 1, intercept: 0 } => write!(f, "I"),
            AxisSig::Affine { slope: 1, intercept } => write!(f, "I{intercept:+}"),
            AxisSig::Affine { slope, intercept: 0 } => write!(f, "{slope}*I"),
            AxisSig::Affine { slope, intercept } => write!(f, "{slope}*I{intercept:+}"),
            AxisSig::Floor { stride, offset } => {
                write!(f, "floor((I{offset:+})/{stride})+1")
            }
            AxisSig::Opaque => write!(f, "opaque"),
        }
    }
}

/// Verdict of a dimension-function comparison.
///
/// `holds` is the answer; `sampled` is true when at least one axis had to be
/// decided by a finite sweep instead of an exact signature match. A negative
/// sweep verdict is never sampled: a concrete counterexample is a proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Equivalence {
    pub holds: bool,
    pub sampled: bool,
}

/// A per-axis dimension function with its domain boundary.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DimensionFunction {
    axes: Vec<AxisFn>,
    min_input: Vec<i64>,
}

impl DimensionFunction {
    /// Builds a dimension function from per-axis entries, deriving the
    /// smallest acceptable input on each axis.
    pub fn from_axes(axes: Vec<AxisFn>) -> Self {
        let min_input = axes.iter().map(AxisFn::min_input).collect();
        DimensionFunction { axes, min_input }
    }

    /// The identity map on `rank` axes.
    pub fn identity(rank: usize) -> Self {
        Self::from_axes(vec![AxisFn::identity(); rank])
    }

    pub fn rank(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[AxisFn] {
        &self.axes
    }

    /// Per-axis smallest acceptable input extent.
    pub fn min_input(&self) -> &[i64] {
        &self.min_input
    }

    /// Applies the function to a shape. Inputs below the per-axis minimum are
    /// domain errors, never clamped.
    pub fn eval(&self, input: &Shape) -> Result<Shape, AlgebraError> {
        if input.rank() != self.rank() {
            return Err(AlgebraError::AxisMismatch {
                expected: self.rank(),
                got: input.rank(),
            });
        }
        let mut out = Vec::with_capacity(self.rank());
        for (axis, (&extent, f)) in input.extents().iter().zip(&self.axes).enumerate() {
            let min = self.min_input[axis];
            if extent < min {
                return Err(AlgebraError::InputBelowMinimum { axis, min_input: min, got: extent });
            }
            out.push(f.apply(extent));
        }
        Ok(Shape(out))
    }

    /// Evaluates a single axis without constructing shapes.
    pub fn eval_axis(&self, axis: usize, input: i64) -> Result<i64, AlgebraError> {
        let min = self.min_input[axis];
        if input < min {
            return Err(AlgebraError::InputBelowMinimum { axis, min_input: min, got: input });
        }
        Ok(self.axes[axis].apply(input))
    }

    /// Sequential composition: `self` applied first, `then` applied to its
    /// output. The minimum input of the result is the smallest input whose
    /// image through `self` is acceptable to `then`, found by monotone
    /// search.
    pub fn then(&self, then: &DimensionFunction) -> Result<DimensionFunction, AlgebraError> {
        if then.rank() != self.rank() {
            return Err(AlgebraError::AxisMismatch {
                expected: self.rank(),
                got: then.rank(),
            });
        }
        let mut axes = Vec::with_capacity(self.rank());
        let mut min_input = Vec::with_capacity(self.rank());
        for (axis, (f, g)) in self.axes.iter().zip(&then.axes).enumerate() {
            let mut chain = Vec::new();
            match f {
                AxisFn::Composite(stages) => chain.extend(stages.iter().cloned()),
                single => chain.push(single.clone()),
            }
            match g {
                AxisFn::Composite(stages) => chain.extend(stages.iter().cloned()),
                single => chain.push(single.clone()),
            }
            min_input.push(least_input_reaching(
                |i| f.apply(i),
                self.min_input[axis],
                then.min_input[axis],
            ));
            axes.push(AxisFn::Composite(chain));
        }
        Ok(DimensionFunction { axes, min_input })
    }

    /// Returns the function with every provably exact chain fusion applied.
    /// The domain boundary is kept as constructed; fusion never changes the
    /// value on any in-domain input.
    pub fn canonicalize(&self) -> DimensionFunction {
        DimensionFunction {
            axes: self.axes.iter().map(AxisFn::canonicalize).collect(),
            min_input: self.min_input.clone(),
        }
    }

    /// Canonical per-axis signatures.
    pub fn signature(&self) -> Vec<AxisSig> {
        self.axes.iter().map(AxisFn::signature).collect()
    }

    /// True when some axis has no exact closed form.
    pub fn is_opaque(&self) -> bool {
        self.signature().contains(&AxisSig::Opaque)
    }
}

/// Renders a signature vector like `[I, floor((I-2)/2)+1]`.
pub fn signature_string(sig: &[AxisSig]) -> String {
    let parts: Vec<String> = sig.iter().map(|s| s.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

/// Decides whether two dimension functions are equal on their shared domain.
///
/// Axes where both sides have exact signatures are decided by signature
/// equality. Any axis involving an opaque chain falls back to a pointwise
/// sweep over `[max(min_input), domain_hi]` and a positive answer is flagged
/// as sampled. Callers must pass a `domain_hi` at or above both minimum
/// inputs; an empty sweep range holds vacuously and stays flagged sampled.
pub fn functions_equal(
    f: &DimensionFunction,
    g: &DimensionFunction,
    domain_hi: i64,
) -> Result<Equivalence, AlgebraError> {
    if f.rank() != g.rank() {
        return Err(AlgebraError::AxisMismatch { expected: f.rank(), got: g.rank() });
    }
    let fsig = f.signature();
    let gsig = g.signature();
    let mut sampled = false;
    for axis in 0..f.rank() {
        match (fsig[axis], gsig[axis]) {
            (AxisSig::Opaque, _) | (_, AxisSig::Opaque) => {
                let lo = f.min_input[axis].max(g.min_input[axis]);
                for i in lo..=domain_hi {
                    if f.axes[axis].apply(i) != g.axes[axis].apply(i) {
                        return Ok(Equivalence { holds: false, sampled: false });
                    }
                }
                sampled = true;
            }
            (a, b) => {
                if a != b {
                    return Ok(Equivalence { holds: false, sampled: false });
                }
            }
        }
    }
    Ok(Equivalence { holds: true, sampled })
}

/// Smallest `i ≥ start` with `f(i) ≥ target`, for monotone nondecreasing and
/// unbounded `f`. Exponential probing followed by binary search.
fn least_input_reaching(f: impl Fn(i64) -> i64, start: i64, target: i64) -> i64 {
    if f(start) >= target {
        return start;
    }
    let mut step = 1i64;
    let mut lo = start; // f(lo) < target
    let mut hi = start + step;
    while f(hi) < target {
        lo = hi;
        step = step.saturating_mul(2);
        hi = hi.saturating_add(step);
    }
    while lo + 1 < hi {
        let mid = lo + (hi - lo) / 2;
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}
