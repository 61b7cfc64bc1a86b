//! Constructors for concrete operations.
//!
//! Each constructor binds layer parameters to a dimension function once, at
//! build time: a convolution with kernel `k`, padding `p`, dilation `d` and
//! stride `s` maps an extent `I` to `floor((I + 2p - d(k-1) - 1) / s) + 1`,
//! which is the floor-affine form with offset `a = 2p - d(k-1) - 1`. Pools
//! use the same rule with `d = 1`; transposed convolutions use the reverse
//! rule `(I - 1)s - 2p + d(k-1) + 1`.

use crate::algebra::{AxisFn, DimensionFunction};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("invalid {field} on axis {axis}: {value} ({reason})")]
    InvalidParams { field: &'static str, axis: usize, value: i64, reason: &'static str },
    #[error("parameter vectors disagree on axis count: {field} has {got}, expected {expected}")]
    RankMismatch { field: &'static str, expected: usize, got: usize },
}

/// Convolution-family parameters, one value per spatial axis.
///
/// Rectangular (per-axis) parameters are allowed; the presets are square.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConvParams {
    pub kernel: Vec<i64>,
    pub padding: Vec<i64>,
    pub dilation: Vec<i64>,
    pub stride: Vec<i64>,
}

impl ConvParams {
    /// Square parameters replicated over `rank` axes.
    pub fn square(kernel: i64, padding: i64, dilation: i64, stride: i64, rank: usize) -> Self {
        ConvParams {
            kernel: vec![kernel; rank],
            padding: vec![padding; rank],
            dilation: vec![dilation; rank],
            stride: vec![stride; rank],
        }
    }

    pub fn rank(&self) -> usize {
        self.kernel.len()
    }

    /// True when every parameter is constant across axes.
    pub fn is_square(&self) -> bool {
        let all_same = |v: &[i64]| v.windows(2).all(|w| w[0] == w[1]);
        all_same(&self.kernel)
            && all_same(&self.padding)
            && all_same(&self.dilation)
            && all_same(&self.stride)
    }

    fn validate(&self) -> Result<(), CatalogError> {
        let rank = self.kernel.len();
        if rank == 0 {
            return Err(CatalogError::RankMismatch { field: "kernel", expected: 1, got: 0 });
        }
        for (field, values) in [("padding", &self.padding), ("dilation", &self.dilation), ("stride", &self.stride)] {
            if values.len() != rank {
                return Err(CatalogError::RankMismatch { field, expected: rank, got: values.len() });
            }
        }
        let positive = [
            ("kernel", &self.kernel, 1),
            ("dilation", &self.dilation, 1),
            ("stride", &self.stride, 1),
            ("padding", &self.padding, 0),
        ];
        for (field, values, min) in positive {
            for (axis, &value) in values.iter().enumerate() {
                if value < min {
                    let reason = if min == 1 { "must be >= 1" } else { "must be >= 0" };
                    return Err(CatalogError::InvalidParams { field, axis, value, reason });
                }
            }
        }
        Ok(())
    }
}

/// Channel counts carried as metadata: `None` is a wildcard that matches any
/// count. Channels never enter dimension functions; the shape tuples cover
/// spatial axes only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Channels {
    pub input: Option<i64>,
    pub output: Option<i64>,
}

impl Channels {
    pub fn wildcard() -> Self {
        Channels::default()
    }

    /// Exact-match-or-wildcard check of this operation's output against a
    /// consumer's input.
    pub fn feeds(&self, consumer: &Channels) -> bool {
        match (self.output, consumer.input) {
            (Some(out), Some(inp)) => out == inp,
            _ => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    Avg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OpKind {
    Conv,
    ConvTranspose,
    Pool(PoolKind),
    Identity,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            OpKind::Conv => "conv",
            OpKind::ConvTranspose => "conv_transpose",
            OpKind::Pool(PoolKind::Max) => "max_pool",
            OpKind::Pool(PoolKind::Avg) => "avg_pool",
            OpKind::Identity => "identity",
        };
        write!(f, "{name}")
    }
}

/// A cataloged layer: its kind, parameters, channel metadata, the dimension
/// function derived from the parameters, and a display label.
///
/// The label is presentation metadata and participates in whole-operation
/// equality (two entries that differ only in label are distinct catalog
/// members), but it never influences shape behavior.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Operation {
    pub kind: OpKind,
    pub params: Option<ConvParams>,
    pub channels: Channels,
    pub dimfn: DimensionFunction,
    pub label: String,
}

impl Operation {
    pub fn rank(&self) -> usize {
        self.dimfn.rank()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn with_channels(mut self, channels: Channels) -> Self {
        self.channels = channels;
        self
    }

    /// The parseable literal form of this operation, independent of any
    /// custom label: `conv k=3 p=2 d=2 s=1`, `max_pool k=3 p=1 s=1`,
    /// `identity`.
    pub fn canonical_literal(&self) -> String {
        match &self.params {
            None => self.kind.to_string(),
            Some(params) => default_label(self.kind, params),
        }
    }

    /// Rebuilds the dimension function from the stored parameters. Always
    /// equal to `self.dimfn`; constructors derive one from the other exactly
    /// once.
    pub fn rebuilt_dimfn(&self) -> DimensionFunction {
        match (&self.kind, &self.params) {
            (OpKind::Identity, _) => DimensionFunction::identity(self.rank()),
            (OpKind::Conv | OpKind::Pool(_), Some(p)) => conv_dimfn(p),
            (OpKind::ConvTranspose, Some(p)) => conv_transpose_dimfn(p),
            _ => unreachable!("non-identity operation without parameters"),
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label)
    }
}

fn conv_dimfn(params: &ConvParams) -> DimensionFunction {
    let axes = (0..params.rank())
        .map(|i| AxisFn::FloorAffine {
            stride: params.stride[i],
            offset: 2 * params.padding[i] - params.dilation[i] * (params.kernel[i] - 1) - 1,
        })
        .collect();
    DimensionFunction::from_axes(axes)
}

fn conv_transpose_dimfn(params: &ConvParams) -> DimensionFunction {
    let axes = (0..params.rank())
        .map(|i| AxisFn::ReverseAffine {
            stride: params.stride[i],
            offset: params.dilation[i] * (params.kernel[i] - 1) - 2 * params.padding[i] + 1,
        })
        .collect();
    DimensionFunction::from_axes(axes)
}

fn scalar_or_list(values: &[i64]) -> String {
    if values.windows(2).all(|w| w[0] == w[1]) {
        values[0].to_string()
    } else {
        values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("x")
    }
}

fn default_label(kind: OpKind, params: &ConvParams) -> String {
    let k = scalar_or_list(&params.kernel);
    let p = scalar_or_list(&params.padding);
    let d = scalar_or_list(&params.dilation);
    let s = scalar_or_list(&params.stride);
    match kind {
        OpKind::Pool(_) => format!("{kind} k={k} p={p} s={s}"),
        _ => format!("{kind} k={k} p={p} d={d} s={s}"),
    }
}

/// Builds a convolution from validated parameters.
pub fn make_conv(params: ConvParams) -> Result<Operation, CatalogError> {
    params.validate()?;
    let dimfn = conv_dimfn(&params);
    let label = default_label(OpKind::Conv, &params);
    Ok(Operation { kind: OpKind::Conv, params: Some(params), channels: Channels::wildcard(), dimfn, label })
}

/// Builds a transposed convolution from validated parameters.
pub fn make_conv_transpose(params: ConvParams) -> Result<Operation, CatalogError> {
    params.validate()?;
    let dimfn = conv_transpose_dimfn(&params);
    let label = default_label(OpKind::ConvTranspose, &params);
    Ok(Operation {
        kind: OpKind::ConvTranspose,
        params: Some(params),
        channels: Channels::wildcard(),
        dimfn,
        label,
    })
}

/// Builds a pooling operation. Pools take kernel, padding and stride only;
/// the dilation vector must be all ones.
pub fn make_pool(kind: PoolKind, params: ConvParams) -> Result<Operation, CatalogError> {
    params.validate()?;
    if let Some(axis) = params.dilation.iter().position(|&d| d != 1) {
        return Err(CatalogError::InvalidParams {
            field: "dilation",
            axis,
            value: params.dilation[axis],
            reason: "pooling is undilated (must be 1)",
        });
    }
    let dimfn = conv_dimfn(&params);
    let label = default_label(OpKind::Pool(kind), &params);
    Ok(Operation {
        kind: OpKind::Pool(kind),
        params: Some(params),
        channels: Channels::wildcard(),
        dimfn,
        label,
    })
}

/// The identity (skip) operation on `rank` spatial axes.
pub fn make_identity(rank: usize) -> Operation {
    Operation {
        kind: OpKind::Identity,
        params: None,
        channels: Channels::wildcard(),
        dimfn: DimensionFunction::identity(rank),
        label: "identity".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{functions_equal, AxisSig, Shape, DEFAULT_DOMAIN_HI};

    fn conv(k: i64, p: i64, d: i64, s: i64) -> Operation {
        make_conv(ConvParams::square(k, p, d, s, 2)).unwrap()
    }

    #[test]
    fn dilated_conv_is_identity_typed() {
        let op = conv(3, 2, 2, 1);
        assert_eq!(op.dimfn.signature(), vec![AxisSig::Affine { slope: 1, intercept: 0 }; 2]);
    }

    #[test]
    fn widely_dilated_conv_is_identity_typed() {
        // offset = 24 - 6*4 - 1 = -1
        let op = conv(5, 12, 6, 1);
        assert_eq!(op.dimfn.signature(), DimensionFunction::identity(2).signature());
    }

    #[test]
    fn pointwise_conv_is_identity_typed() {
        let op = conv(1, 0, 1, 1);
        assert_eq!(op.dimfn.signature(), DimensionFunction::identity(2).signature());
    }

    #[test]
    fn conv_transpose_identity_cases() {
        let op = make_conv_transpose(ConvParams::square(3, 2, 2, 1, 1)).unwrap();
        let out = op.dimfn.eval(&Shape::new(vec![32]).unwrap()).unwrap();
        assert_eq!(out, Shape::new(vec![32]).unwrap());

        let unit = make_conv_transpose(ConvParams::square(1, 0, 1, 1, 1)).unwrap();
        let verdict =
            functions_equal(&unit.dimfn, &DimensionFunction::identity(1), DEFAULT_DOMAIN_HI)
                .unwrap();
        assert!(verdict.holds && !verdict.sampled);
    }

    #[test]
    fn conv_transpose_upsamples() {
        let op = make_conv_transpose(ConvParams::square(3, 0, 1, 2, 1)).unwrap();
        let out = op.dimfn.eval(&Shape::new(vec![5]).unwrap()).unwrap();
        assert_eq!(out, Shape::new(vec![11]).unwrap());
    }

    #[test]
    fn pool_shape_rules() {
        let same = make_pool(PoolKind::Max, ConvParams::square(3, 1, 1, 1, 1)).unwrap();
        assert_eq!(same.dimfn.signature(), DimensionFunction::identity(1).signature());

        let halving = make_pool(PoolKind::Avg, ConvParams::square(2, 0, 1, 2, 1)).unwrap();
        let out = halving.dimfn.eval(&Shape::new(vec![32]).unwrap()).unwrap();
        assert_eq!(out, Shape::new(vec![16]).unwrap());

        let unit = make_pool(PoolKind::Max, ConvParams::square(1, 0, 1, 1, 1)).unwrap();
        assert_eq!(unit.dimfn.signature(), DimensionFunction::identity(1).signature());
    }

    #[test]
    fn pool_rejects_dilation() {
        let err = make_pool(PoolKind::Max, ConvParams::square(3, 1, 2, 1, 1)).unwrap_err();
        assert!(matches!(err, CatalogError::InvalidParams { field: "dilation", .. }));
    }

    #[test]
    fn invalid_params_reported_with_field_and_axis() {
        let mut params = ConvParams::square(3, 1, 1, 1, 2);
        params.kernel[1] = 0;
        let err = make_conv(params).unwrap_err();
        assert_eq!(
            err,
            CatalogError::InvalidParams { field: "kernel", axis: 1, value: 0, reason: "must be >= 1" }
        );
    }

    #[test]
    fn dimfn_never_drifts_from_params() {
        let ops = [
            conv(3, 2, 2, 1),
            conv(7, 1, 1, 1),
            make_conv_transpose(ConvParams::square(5, 4, 2, 1, 2)).unwrap(),
            make_pool(PoolKind::Avg, ConvParams::square(3, 1, 1, 2, 2)).unwrap(),
            make_identity(2),
        ];
        for op in &ops {
            assert_eq!(op.rebuilt_dimfn(), op.dimfn, "dimfn drifted for {}", op.label);
        }
    }

    #[test]
    fn interchange_triple_under_the_shape_rule() {
        // A 5x5 with p=2 and a dilated 3x3 with p=2 preserve extents; a 7x7
        // with p=1 shrinks the map by 4, so it is not interchangeable with
        // the other two.
        let five = conv(5, 2, 1, 1);
        let dilated = conv(3, 2, 2, 1);
        let seven = conv(7, 1, 1, 1);
        let eq = |a: &Operation, b: &Operation| {
            functions_equal(&a.dimfn, &b.dimfn, DEFAULT_DOMAIN_HI).unwrap().holds
        };
        assert!(eq(&five, &dilated));
        assert!(!eq(&seven, &five));
        assert!(!eq(&seven, &dilated));
        assert_eq!(seven.dimfn.signature(), vec![AxisSig::Affine { slope: 1, intercept: -4 }; 2]);
    }

    #[test]
    fn rectangular_params_are_allowed() {
        let params = ConvParams {
            kernel: vec![3, 5],
            padding: vec![1, 2],
            dilation: vec![1, 1],
            stride: vec![1, 1],
        };
        let op = make_conv(params).unwrap();
        assert!(!op.params.as_ref().unwrap().is_square());
        assert_eq!(op.label, "conv k=3x5 p=1x2 d=1 s=1");
        assert_eq!(op.dimfn.signature(), DimensionFunction::identity(2).signature());
    }

    #[test]
    fn channel_wildcard_feeds_anything() {
        let any = Channels::wildcard();
        let fixed = Channels { input: Some(64), output: Some(128) };
        assert!(any.feeds(&fixed));
        assert!(fixed.feeds(&any));
        assert!(!fixed.feeds(&Channels { input: Some(64), output: None }));
        assert!(fixed.feeds(&Channels { input: Some(128), output: None }));
    }
}
