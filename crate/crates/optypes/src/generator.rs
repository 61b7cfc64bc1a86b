//! Brute-force generation of type-equivalent convolutions.
//!
//! Given a seed convolution `(k, p, d)` and a generation grid that bounds two
//! of `(k', p', d')` to inclusive integer ranges and leaves the third `None`,
//! the generator walks the Cartesian product of the two bounded ranges and
//! derives the third field so the candidate keeps the seed's dimension
//! function. Stride is not varied; candidates inherit the seed's stride.
//!
//! Two derivation modes exist for the kernel field. `Paper` uses
//! `k' = (2p' - 2p - d(k-1)) / (d'+1)`; `Strict` solves the equal-offset
//! condition `2p' - d'(k'-1) = 2p - d(k-1)` directly, giving
//! `k' = (2p' - 2p + d(k-1)) / d' + 1`. Every candidate from either mode is
//! post-verified against the seed's dimension function, so neither mode can
//! emit an operation that is not genuinely type-equivalent; the two modes'
//! accepted sets can be diffed with [`mode_divergence`].

use crate::catalog::{make_conv, ConvParams, OpKind, Operation};
use crate::relations::{dedup, type_equiv, DedupLevel};
use crate::space::{Provenance, SearchSpace};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("invalid generation grid: {0}")]
    InvalidGrid(String),
    #[error("invalid seed: {0}")]
    InvalidSeed(String),
    #[error("unknown grid preset: {0}")]
    UnknownPreset(String),
}

/// Inclusive integer range of a bounded grid field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridRange {
    pub lo: i64,
    pub hi: i64,
}

impl GridRange {
    pub fn new(lo: i64, hi: i64) -> Self {
        GridRange { lo, hi }
    }
}

impl fmt::Display for GridRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

/// Generation parameters: two bounded fields, one derived (`None`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationGrid {
    pub name: Option<String>,
    #[serde(rename = "k")]
    pub kernel: Option<GridRange>,
    #[serde(rename = "p")]
    pub padding: Option<GridRange>,
    #[serde(rename = "d")]
    pub dilation: Option<GridRange>,
}

impl GenerationGrid {
    pub fn new(
        kernel: Option<GridRange>,
        padding: Option<GridRange>,
        dilation: Option<GridRange>,
    ) -> Result<Self, GeneratorError> {
        let nones = [kernel.is_none(), padding.is_none(), dilation.is_none()]
            .iter()
            .filter(|&&n| n)
            .count();
        if nones != 1 {
            return Err(GeneratorError::InvalidGrid(format!(
                "exactly one of K, P, D must be None, found {nones}"
            )));
        }
        for (field, range) in [("K", kernel), ("P", padding), ("D", dilation)] {
            if let Some(r) = range {
                if r.lo < 1 || r.lo > r.hi {
                    return Err(GeneratorError::InvalidGrid(format!(
                        "{field} range {r} must satisfy 1 <= lo <= hi"
                    )));
                }
            }
        }
        Ok(GenerationGrid { name: None, kernel, padding, dilation })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// The field left `None`, i.e. the one the generator derives.
    pub fn derived_field(&self) -> DerivedField {
        if self.kernel.is_none() {
            DerivedField::Kernel
        } else if self.padding.is_none() {
            DerivedField::Padding
        } else {
            DerivedField::Dilation
        }
    }
}

impl fmt::Display for GenerationGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |r: &Option<GridRange>| match r {
            Some(range) => range.to_string(),
            None => "none".to_string(),
        };
        write!(
            f,
            "K={} P={} D={}",
            show(&self.kernel),
            show(&self.padding),
            show(&self.dilation)
        )
    }
}

/// Which convolution property the generator derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DerivedField {
    #[serde(rename = "k")]
    Kernel,
    #[serde(rename = "p")]
    Padding,
    #[serde(rename = "d")]
    Dilation,
}

/// Derivation mode for the kernel field when `K` is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Strict,
    Paper,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Strict => write!(f, "strict"),
            Mode::Paper => write!(f, "paper"),
        }
    }
}

/// An accepted `(k', p', d')` tuple with its derived-field marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedConv {
    pub k: i64,
    pub p: i64,
    pub d: i64,
    pub derived: DerivedField,
}

impl GeneratedConv {
    pub fn tuple(&self) -> (i64, i64, i64) {
        (self.k, self.p, self.d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    NonIntegerDerivation,
    OutOfBounds,
    FailedVerification,
    Duplicate,
}

/// A grid cell that produced no accepted operation. The derived field is
/// `None` when the derivation itself had no integer solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedCandidate {
    pub k: Option<i64>,
    pub p: Option<i64>,
    pub d: Option<i64>,
    pub reason: RejectReason,
}

/// Full account of one generation run: every grid cell ends up either in
/// `accepted` or in `rejected` with a reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub seed: String,
    pub grid: GenerationGrid,
    pub mode: Mode,
    pub accepted: Vec<GeneratedConv>,
    pub rejected: Vec<RejectedCandidate>,
}

/// Accepted-set difference between the two derivation modes on the same seed
/// and grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeDivergence {
    pub strict_only: Vec<GeneratedConv>,
    pub paper_only: Vec<GeneratedConv>,
}

fn seed_params(seed: &Operation) -> Result<(i64, i64, i64, i64, usize), GeneratorError> {
    if seed.kind != OpKind::Conv {
        return Err(GeneratorError::InvalidSeed(format!(
            "seed must be a convolution, got {}",
            seed.kind
        )));
    }
    let params = seed
        .params
        .as_ref()
        .ok_or_else(|| GeneratorError::InvalidSeed("seed has no parameters".to_string()))?;
    if !params.is_square() {
        return Err(GeneratorError::InvalidSeed(
            "seed parameters must be square across axes".to_string(),
        ));
    }
    Ok((params.kernel[0], params.padding[0], params.dilation[0], params.stride[0], params.rank()))
}

fn exact_div(numerator: i64, denominator: i64) -> Option<i64> {
    if denominator == 0 || numerator % denominator != 0 {
        None
    } else {
        Some(numerator / denominator)
    }
}

/// Walks the grid in lexicographic `(k', p', d')` order and reports every
/// accepted and rejected candidate. Each accepted tuple is verified
/// type-equivalent to the seed before it is admitted.
pub fn generate_type_equivalent_convs(
    seed: &Operation,
    grid: &GenerationGrid,
    mode: Mode,
) -> Result<GenerationReport, GeneratorError> {
    let (k, p, d, stride, rank) = seed_params(seed)?;
    let derived = grid.derived_field();

    let cells: Vec<(i64, i64)> = {
        let range = |r: &GridRange| (r.lo..=r.hi).collect::<Vec<_>>();
        let (outer, inner) = match derived {
            DerivedField::Kernel => (range(&grid.padding.unwrap()), range(&grid.dilation.unwrap())),
            DerivedField::Padding => (range(&grid.kernel.unwrap()), range(&grid.dilation.unwrap())),
            DerivedField::Dilation => (range(&grid.kernel.unwrap()), range(&grid.padding.unwrap())),
        };
        outer.iter().flat_map(|&a| inner.iter().map(move |&b| (a, b))).collect()
    };

    let mut accepted: Vec<GeneratedConv> = Vec::new();
    let mut rejected: Vec<RejectedCandidate> = Vec::new();
    for (a, b) in cells {
        // (a, b) are the two bounded fields in (k', p', d') order.
        let derivation = match derived {
            DerivedField::Padding => exact_div(b * (a - 1), 2),
            DerivedField::Dilation => exact_div(2 * b, a - 1),
            DerivedField::Kernel => match mode {
                Mode::Paper => exact_div(2 * a - 2 * p - d * (k - 1), b + 1),
                Mode::Strict => exact_div(2 * a - 2 * p + d * (k - 1), b).map(|q| q + 1),
            },
        };
        let partial = |value: Option<i64>| match derived {
            DerivedField::Kernel => (value, Some(a), Some(b)),
            DerivedField::Padding => (Some(a), value, Some(b)),
            DerivedField::Dilation => (Some(a), Some(b), value),
        };
        let Some(value) = derivation else {
            let (dk, dp, dd) = partial(None);
            rejected.push(RejectedCandidate { k: dk, p: dp, d: dd, reason: RejectReason::NonIntegerDerivation });
            continue;
        };
        let (dk, dp, dd) = partial(Some(value));
        let (ck, cp, cd) = (dk.unwrap(), dp.unwrap(), dd.unwrap());
        if ck < 1 || cp < 0 || cd < 1 {
            rejected.push(RejectedCandidate { k: dk, p: dp, d: dd, reason: RejectReason::OutOfBounds });
            continue;
        }
        let candidate = make_conv(ConvParams::square(ck, cp, cd, stride, rank))
            .expect("bounds-checked candidate parameters are valid");
        if !type_equiv(&candidate, seed) {
            rejected.push(RejectedCandidate { k: dk, p: dp, d: dd, reason: RejectReason::FailedVerification });
            continue;
        }
        if accepted.iter().any(|g| g.tuple() == (ck, cp, cd)) {
            rejected.push(RejectedCandidate { k: dk, p: dp, d: dd, reason: RejectReason::Duplicate });
            continue;
        }
        accepted.push(GeneratedConv { k: ck, p: cp, d: cd, derived });
    }

    Ok(GenerationReport {
        seed: seed.canonical_literal(),
        grid: grid.clone(),
        mode,
        accepted,
        rejected,
    })
}

/// Runs both derivation modes and diffs their accepted sets.
pub fn mode_divergence(
    seed: &Operation,
    grid: &GenerationGrid,
) -> Result<ModeDivergence, GeneratorError> {
    let strict = generate_type_equivalent_convs(seed, grid, Mode::Strict)?;
    let paper = generate_type_equivalent_convs(seed, grid, Mode::Paper)?;
    let in_other = |list: &[GeneratedConv], g: &GeneratedConv| {
        list.iter().any(|other| other.tuple() == g.tuple())
    };
    Ok(ModeDivergence {
        strict_only: strict
            .accepted
            .iter()
            .filter(|g| !in_other(&paper.accepted, g))
            .copied()
            .collect(),
        paper_only: paper
            .accepted
            .iter()
            .filter(|g| !in_other(&strict.accepted, g))
            .copied()
            .collect(),
    })
}

/// Which operations of a space to use as generation seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedSelector {
    AllConvs,
    Labels(Vec<String>),
}

/// Extends a space with every operation generated from the selected seeds,
/// deduplicated at the complete level. Original entries keep their order;
/// generated entries are appended in seed order, then acceptance order.
pub fn expand_space(
    space: &SearchSpace,
    selector: &SeedSelector,
    grid: &GenerationGrid,
    mode: Mode,
) -> Result<SearchSpace, GeneratorError> {
    let seeds: Vec<&Operation> = match selector {
        SeedSelector::AllConvs => space.ops().filter(|op| op.kind == OpKind::Conv).collect(),
        SeedSelector::Labels(labels) => {
            let mut picked = Vec::new();
            for label in labels {
                let op = space
                    .ops()
                    .find(|op| op.label == *label)
                    .ok_or_else(|| GeneratorError::InvalidSeed(format!("no operation labeled {label:?}")))?;
                picked.push(op);
            }
            picked
        }
    };
    let mut result = space.clone();
    for seed in seeds {
        let report = generate_type_equivalent_convs(seed, grid, mode)?;
        let stride = seed.params.as_ref().expect("seed is a conv").stride[0];
        for gen in &report.accepted {
            let op = make_conv(ConvParams::square(gen.k, gen.p, gen.d, stride, seed.rank()))
                .expect("accepted tuples are valid");
            result.push(
                op,
                Provenance::Generated {
                    seed: report.seed.clone(),
                    grid: grid.clone(),
                    mode,
                },
            );
        }
    }
    Ok(dedup(&result, DedupLevel::Complete, crate::algebra::DEFAULT_DOMAIN_HI))
}

/// Grid presets: two bounded ranges topping out at 4, 8, 12 or 16, with the
/// kernel range starting at 2 whenever the padding range is bounded.
pub fn preset_grid(code: &str) -> Result<GenerationGrid, GeneratorError> {
    let (family, hi) = code
        .strip_prefix("T1_")
        .and_then(|rest| rest.split_at_checked(2))
        .ok_or_else(|| GeneratorError::UnknownPreset(code.to_string()))?;
    let hi: i64 = match hi {
        "04" => 4,
        "08" => 8,
        "12" => 12,
        "16" => 16,
        _ => return Err(GeneratorError::UnknownPreset(code.to_string())),
    };
    let grid = match family {
        "kd" => GenerationGrid::new(Some(GridRange::new(1, hi)), None, Some(GridRange::new(1, hi))),
        "kp" => GenerationGrid::new(Some(GridRange::new(2, hi)), Some(GridRange::new(1, hi)), None),
        "pd" => GenerationGrid::new(None, Some(GridRange::new(1, hi)), Some(GridRange::new(1, hi))),
        _ => return Err(GeneratorError::UnknownPreset(code.to_string())),
    };
    Ok(grid.expect("preset ranges are valid").with_name(code))
}

/// All preset grid codes, in table order.
pub const GRID_PRESETS: [&str; 12] = [
    "T1_kd04", "T1_kd08", "T1_kd12", "T1_kd16",
    "T1_kp04", "T1_kp08", "T1_kp12", "T1_kp16",
    "T1_pd04", "T1_pd08", "T1_pd12", "T1_pd16",
];

#[cfg(test)]
mod tests {
    use super::*;

    fn seed() -> Operation {
        make_conv(ConvParams::square(3, 1, 1, 1, 2)).unwrap()
    }

    #[test]
    fn grid_requires_exactly_one_none() {
        assert!(GenerationGrid::new(None, None, Some(GridRange::new(1, 4))).is_err());
        assert!(GenerationGrid::new(
            Some(GridRange::new(1, 4)),
            Some(GridRange::new(1, 4)),
            Some(GridRange::new(1, 4))
        )
        .is_err());
        assert!(GenerationGrid::new(Some(GridRange::new(4, 1)), None, Some(GridRange::new(1, 4))).is_err());
    }

    #[test]
    fn preset_grids_match_the_table() {
        let kd08 = preset_grid("T1_kd08").unwrap();
        assert_eq!(kd08.kernel, Some(GridRange::new(1, 8)));
        assert_eq!(kd08.padding, None);
        assert_eq!(kd08.dilation, Some(GridRange::new(1, 8)));

        let kp04 = preset_grid("T1_kp04").unwrap();
        assert_eq!(kp04.kernel, Some(GridRange::new(2, 4)));
        assert_eq!(kp04.padding, Some(GridRange::new(1, 4)));
        assert_eq!(kp04.dilation, None);

        let kp16 = preset_grid("T1_kp16").unwrap();
        assert_eq!(kp16.kernel, Some(GridRange::new(2, 16)));
        assert_eq!(kp16.padding, Some(GridRange::new(1, 16)));

        let pd16 = preset_grid("T1_pd16").unwrap();
        assert_eq!(pd16.kernel, None);
        assert_eq!(pd16.padding, Some(GridRange::new(1, 16)));
        assert_eq!(pd16.dilation, Some(GridRange::new(1, 16)));

        assert!(matches!(preset_grid("T1_xx99"), Err(GeneratorError::UnknownPreset(_))));
    }

    #[test]
    fn rejects_non_conv_seed() {
        let id = crate::catalog::make_identity(2);
        let grid = preset_grid("T1_kd04").unwrap();
        assert!(matches!(
            generate_type_equivalent_convs(&id, &grid, Mode::Strict),
            Err(GeneratorError::InvalidSeed(_))
        ));
    }

    #[test]
    fn padding_derivation_regenerates_seed_and_dilated_variant() {
        // P = None, K = [2,4], D = [1,4]
        let grid = GenerationGrid::new(
            Some(GridRange::new(2, 4)),
            None,
            Some(GridRange::new(1, 4)),
        )
        .unwrap();
        let report = generate_type_equivalent_convs(&seed(), &grid, Mode::Strict).unwrap();
        let tuples: Vec<(i64, i64, i64)> = report.accepted.iter().map(|g| g.tuple()).collect();
        assert!(tuples.contains(&(3, 1, 1)), "seed should be regenerated");
        assert!(tuples.contains(&(3, 2, 2)), "dilated variant should appear");
        // (k'=4, d'=1) derives p' = 3/2, rejected as non-integer.
        assert!(report.rejected.iter().any(|r| {
            r.k == Some(4) && r.d == Some(1) && r.reason == RejectReason::NonIntegerDerivation
        }));
    }

    #[test]
    fn dilation_derivation_finds_table_member() {
        // D = None, K = [2,8], P = [1,8]; (k'=5, p'=4) derives d' = 2.
        let grid = GenerationGrid::new(
            Some(GridRange::new(2, 8)),
            Some(GridRange::new(1, 8)),
            None,
        )
        .unwrap();
        let report = generate_type_equivalent_convs(&seed(), &grid, Mode::Strict).unwrap();
        assert!(report.accepted.iter().any(|g| g.tuple() == (5, 4, 2)));
    }

    #[test]
    fn accepted_counts_on_small_presets() {
        let cases = [("T1_kd04", 12usize), ("T1_kp04", 9), ("T1_pd04", 11)];
        for (code, expected) in cases {
            let grid = preset_grid(code).unwrap();
            let report = generate_type_equivalent_convs(&seed(), &grid, Mode::Strict).unwrap();
            assert_eq!(report.accepted.len(), expected, "accepted count for {code}");
            let cells = report.accepted.len() + report.rejected.len();
            let expect_cells = match grid.derived_field() {
                DerivedField::Kernel => 16,
                DerivedField::Padding => 16,
                DerivedField::Dilation => 12,
            };
            assert_eq!(cells, expect_cells, "every cell accounted for in {code}");
        }
    }

    #[test]
    fn every_accepted_tuple_is_verified() {
        for code in GRID_PRESETS {
            let grid = preset_grid(code).unwrap();
            for mode in [Mode::Strict, Mode::Paper] {
                let report = generate_type_equivalent_convs(&seed(), &grid, mode).unwrap();
                for g in &report.accepted {
                    let op = make_conv(ConvParams::square(g.k, g.p, g.d, 1, 2)).unwrap();
                    assert!(type_equiv(&op, &seed()), "unverified tuple {:?} from {code}", g.tuple());
                }
            }
        }
    }

    #[test]
    fn paper_mode_diverges_on_kernel_derivation() {
        let grid = preset_grid("T1_pd04").unwrap();
        let divergence = mode_divergence(&seed(), &grid).unwrap();
        assert_eq!(divergence.strict_only.len(), 11);
        assert!(divergence.paper_only.is_empty());
        // Bounded-kernel grids derive identically in both modes.
        let kd = preset_grid("T1_kd04").unwrap();
        let no_diff = mode_divergence(&seed(), &kd).unwrap();
        assert!(no_diff.strict_only.is_empty() && no_diff.paper_only.is_empty());
    }

    #[test]
    fn expanding_baseline_with_single_yield_grid_matches_preset() {
        use crate::space::{baseline_space, preset_space};
        // K=[3,3], D=[2,2] derives p'=2 from every baseline conv seed, so the
        // expansion adds exactly conv(3,2,2).
        let grid = GenerationGrid::new(
            Some(GridRange::new(3, 3)),
            None,
            Some(GridRange::new(2, 2)),
        )
        .unwrap();
        let expanded =
            expand_space(&baseline_space(), &SeedSelector::AllConvs, &grid, Mode::Strict).unwrap();
        assert!(expanded.same_roster(&preset_space("3E").unwrap()));

        // Idempotent: the regenerated operation collapses in the dedup.
        let twice = expand_space(&expanded, &SeedSelector::AllConvs, &grid, Mode::Strict).unwrap();
        assert!(twice.same_roster(&expanded));
    }

    #[test]
    fn expanding_with_empty_acceptance_leaves_space_unchanged() {
        use crate::space::baseline_space;
        // K=[4,4], D=[1,1] derives p' = 3/2 for every seed: nothing accepted.
        let grid = GenerationGrid::new(
            Some(GridRange::new(4, 4)),
            None,
            Some(GridRange::new(1, 1)),
        )
        .unwrap();
        let expanded =
            expand_space(&baseline_space(), &SeedSelector::AllConvs, &grid, Mode::Strict).unwrap();
        assert!(expanded.same_roster(&baseline_space()));
    }

    #[test]
    fn label_selector_requires_existing_conv() {
        use crate::space::baseline_space;
        let grid = preset_grid("T1_kd04").unwrap();
        let err = expand_space(
            &baseline_space(),
            &SeedSelector::Labels(vec!["missing".to_string()]),
            &grid,
            Mode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, GeneratorError::InvalidSeed(_)));

        let picked = expand_space(
            &baseline_space(),
            &SeedSelector::Labels(vec!["conv_3x3".to_string()]),
            &grid,
            Mode::Strict,
        )
        .unwrap();
        assert!(picked.len() > baseline_space().len());
    }

    #[test]
    fn reports_are_deterministic() {
        let grid = preset_grid("T1_pd08").unwrap();
        let a = generate_type_equivalent_convs(&seed(), &grid, Mode::Strict).unwrap();
        let b = generate_type_equivalent_convs(&seed(), &grid, Mode::Strict).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
