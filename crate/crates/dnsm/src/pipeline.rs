//! The three-stage decomposition pipeline.
//!
//! 1. Seed disc polytopes on a grid inside the shape and fit with the
//!    overlap-rewarding energy, so redundant polytopes pile onto the same
//!    regions.
//! 2. Greedily prune polytopes with low significance.
//! 3. Refit the survivors with the overlap-penalizing energy, which fills
//!    the gaps pruning left and shrinks residual double coverage.
//!
//! The result is a label map (background 0, parts 1..), a connectivity
//! graph over parts, and diagnostics comparing the compact model against
//! the input raster.

use crate::convexity::{global_concavity, prune, PruneParams, RegionStats};
use crate::error::{Error, Result};
use crate::hull::{convex_hull, hull_contains};
use crate::model::{init_polytopes, DnsmModel, FlatModel, ModelConfig};
use crate::optimizer::{fit, FitParams, FitTrace, OverlapSign};
use crate::raster::ShapeRaster;

/// Settings for a full decomposition run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    /// Disc radius for initialization, in normalized units.
    pub radius: f64,
    /// Grid spacing for initialization, in normalized units.
    pub spacing: f64,
    /// Half-space count and slope for the seeded polytopes; the polytope
    /// count is determined by the grid.
    pub config: ModelConfig,
    /// Stage-1 fit; must use [`OverlapSign::Maximize`].
    pub step1: FitParams,
    pub prune: PruneParams,
    /// Stage-3 fit; must use [`OverlapSign::Penalize`].
    pub step3: FitParams,
}

impl PipelineParams {
    pub const DEFAULT_RADIUS: f64 = 0.08;
    pub const DEFAULT_SPACING: f64 = 0.08;

    pub fn validate(&self) -> Result<()> {
        if self.step1.overlap_sign != OverlapSign::Maximize {
            return Err(Error::InvalidConfig(
                "stage 1 must maximize overlap".into(),
            ));
        }
        if self.step3.overlap_sign != OverlapSign::Penalize {
            return Err(Error::InvalidConfig(
                "stage 3 must penalize overlap".into(),
            ));
        }
        self.step1.validate()?;
        self.step3.validate()?;
        self.prune.validate()
    }
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            radius: Self::DEFAULT_RADIUS,
            spacing: Self::DEFAULT_SPACING,
            config: ModelConfig {
                n_polytopes: 1, // overridden by grid initialization
                m_halfspaces: 16,
                dimension: 2,
                slope: ModelConfig::DEFAULT_SLOPE,
            },
            step1: FitParams::maximize(),
            prune: PruneParams::threshold(PruneParams::DEFAULT_THRESHOLD),
            step3: FitParams::penalize(),
        }
    }
}

/// Per-pixel part labels: 0 is background, parts count from 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: u32,
    height: u32,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Self {
        assert_eq!(labels.len(), (width * height) as usize);
        LabelMap {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u32 {
        self.labels[(row * self.width + col) as usize]
    }

    /// Row-major label values.
    pub fn values(&self) -> &[u32] {
        &self.labels
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

/// Model-vs-input agreement counters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Diagnostics {
    /// Input foreground pixels the model misses (`f < 0.5`).
    pub gap_pixel_count: usize,
    /// Pixels claimed by two or more polytopes at the 0.5 level.
    pub overlap_pixel_count: usize,
    /// Dice coefficient between model foreground and input foreground.
    pub dice_vs_input: f64,
}

/// Final decomposition: the compact model plus its rasterized parts.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub model: DnsmModel,
    pub labels: LabelMap,
    /// `connectivity[k]` lists the parts adjacent to part `k + 1`, as
    /// 1-based labels in increasing order. Symmetric by construction.
    pub connectivity: Vec<Vec<u32>>,
    pub diagnostics: Diagnostics,
}

/// Everything the pipeline produced, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub result: DecompositionResult,
    /// Stage-1 model restricted to the pruning survivors.
    pub pruned_model: DnsmModel,
    /// Indices removed during pruning, in removal order.
    pub removed: Vec<usize>,
    /// Post-prune statistics of the survivors (stage-1 geometry).
    pub pruned_stats: Vec<RegionStats>,
    /// Global concavity derived from `pruned_stats`.
    pub dnsm_concavity: f64,
    pub step1_trace: FitTrace,
    pub step3_trace: FitTrace,
}

/// Labels every pixel of the model foreground with its strongest polytope.
///
/// A pixel gets label `i + 1` when `f >= 0.5` and polytope `i` attains the
/// maximum membership there (ties broken toward the lower index), and 0
/// otherwise. Note the domain is the *model's* foreground: the compact
/// model is the final representation, and disagreement with the input
/// shows up in [`Diagnostics`] instead.
pub fn label_map(m: &DnsmModel, shape: &ShapeRaster) -> LabelMap {
    analyze(m, shape).0
}

/// Label map plus gap/overlap/dice diagnostics in one pass.
pub fn analyze(m: &DnsmModel, shape: &ShapeRaster) -> (LabelMap, Diagnostics) {
    let flat = FlatModel::from_model(m);
    let mut g = vec![0.0; flat.n];
    let mut labels = Vec::with_capacity((shape.width() * shape.height()) as usize);
    let mut gaps = 0usize;
    let mut overlaps = 0usize;
    let mut model_fg = 0usize;
    let mut intersection = 0usize;

    for (row, col, input_fg) in shape.pixels() {
        let x = shape.frame().point_of(row, col);
        flat.memberships(x, &mut g, None);

        let mut not_any = 1.0;
        let mut above = 0usize;
        let mut best = 0usize;
        let mut best_g = f64::NEG_INFINITY;
        for (i, &gi) in g.iter().enumerate() {
            not_any *= 1.0 - gi;
            if gi >= 0.5 {
                above += 1;
            }
            if gi > best_g {
                best_g = gi;
                best = i;
            }
        }
        let f = 1.0 - not_any;

        if above >= 2 {
            overlaps += 1;
        }
        if f >= 0.5 {
            model_fg += 1;
            if input_fg {
                intersection += 1;
            }
            labels.push(best as u32 + 1);
        } else {
            if input_fg {
                gaps += 1;
            }
            labels.push(0);
        }
    }

    let denom = model_fg + shape.foreground_count();
    let dice = if denom > 0 {
        2.0 * intersection as f64 / denom as f64
    } else {
        0.0
    };

    (
        LabelMap::new(shape.width(), shape.height(), labels),
        Diagnostics {
            gap_pixel_count: gaps,
            overlap_pixel_count: overlaps,
            dice_vs_input: dice,
        },
    )
}

/// Adjacency between parts: `i` and `r` are connected when some pair of
/// 4-neighbor pixels carries labels `i` and `r`.
pub fn connectivity(labels: &LabelMap) -> Vec<Vec<u32>> {
    let parts = labels.max_label() as usize;
    let mut adjacent = vec![std::collections::BTreeSet::new(); parts];
    let (w, h) = (labels.width(), labels.height());
    for row in 0..h {
        for col in 0..w {
            let a = labels.get(row, col);
            if a == 0 {
                continue;
            }
            let mut link = |b: u32| {
                if b != 0 && b != a {
                    adjacent[(a - 1) as usize].insert(b);
                    adjacent[(b - 1) as usize].insert(a);
                }
            };
            if col + 1 < w {
                link(labels.get(row, col + 1));
            }
            if row + 1 < h {
                link(labels.get(row + 1, col));
            }
        }
    }
    adjacent
        .into_iter()
        .map(|set| set.into_iter().collect())
        .collect()
}

/// Runs the full three-stage decomposition.
pub fn decompose(shape: &ShapeRaster, params: &PipelineParams) -> Result<DecompositionResult> {
    decompose_run(shape, params).map(|run| run.result)
}

/// Like [`decompose`], but keeps intermediate stages for reporting.
pub fn decompose_run(shape: &ShapeRaster, params: &PipelineParams) -> Result<PipelineRun> {
    params.validate()?;
    let seeded = init_polytopes(shape, params.radius, params.spacing, &params.config)?;
    let (stage1, step1_trace) = fit(&seeded, shape, &params.step1)?;
    let (pruned_model, removed, pruned_stats) = prune(&stage1, shape, &params.prune)?;
    let (final_model, step3_trace) = fit(&pruned_model, shape, &params.step3)?;

    let (labels, diagnostics) = analyze(&final_model, shape);
    let connectivity = connectivity(&labels);
    let dnsm_concavity = global_concavity(&pruned_stats);

    Ok(PipelineRun {
        result: DecompositionResult {
            model: final_model,
            labels,
            connectivity,
            diagnostics,
        },
        pruned_model,
        removed,
        pruned_stats,
        dnsm_concavity,
        step1_trace,
        step3_trace,
    })
}

/// Convexity defect of one labeled part, as the fraction of its convex
/// hull left uncovered even after dilating the part by one pixel.
///
/// The hull is taken over the part's pixel corners; a hull pixel counts as
/// covered when it or any 8-neighbor carries the part label. Near zero for
/// convex parts; grows with concavities that rasterization cannot excuse.
pub fn part_hull_excess(labels: &LabelMap, part: u32) -> f64 {
    assert!(part >= 1, "parts are labeled from 1");
    let mut corners: Vec<[i64; 2]> = Vec::new();
    let mut member = vec![false; labels.values().len()];
    for row in 0..labels.height() {
        for col in 0..labels.width() {
            if labels.get(row, col) == part {
                member[(row * labels.width() + col) as usize] = true;
                let (c, r) = (i64::from(col), i64::from(row));
                corners.extend_from_slice(&[[c, r], [c + 1, r], [c, r + 1], [c + 1, r + 1]]);
            }
        }
    }
    if corners.is_empty() {
        return 0.0;
    }

    // Work in doubled coordinates so pixel centers stay integral.
    let hull: Vec<[i64; 2]> = convex_hull(&corners)
        .into_iter()
        .map(|p| [2 * p[0], 2 * p[1]])
        .collect();

    let covered = |row: i64, col: i64| -> bool {
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (r, c) = (row + dr, col + dc);
                if r >= 0
                    && c >= 0
                    && r < i64::from(labels.height())
                    && c < i64::from(labels.width())
                    && member[(r as u32 * labels.width() + c as u32) as usize]
                {
                    return true;
                }
            }
        }
        false
    };

    let min_c = corners.iter().map(|p| p[0]).min().unwrap();
    let max_c = corners.iter().map(|p| p[0]).max().unwrap();
    let min_r = corners.iter().map(|p| p[1]).min().unwrap();
    let max_r = corners.iter().map(|p| p[1]).max().unwrap();

    let mut hull_pixels = 0usize;
    let mut uncovered = 0usize;
    for row in min_r..max_r {
        for col in min_c..max_c {
            if hull_contains(&hull, [2 * col + 1, 2 * row + 1]) {
                hull_pixels += 1;
                if !covered(row, col) {
                    uncovered += 1;
                }
            }
        }
    }
    if hull_pixels == 0 {
        0.0
    } else {
        uncovered as f64 / hull_pixels as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::convexity::PruneMode;
    use crate::model::{disc_polytope, eval_model, eval_polytope, Discriminant, Polytope};
    use crate::optimizer::energy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l_shape(side: u32) -> ShapeRaster {
        // Vertical bar plus a bottom stub: classic two-rectangle L.
        let bar = side / 3;
        ShapeRaster::from_fn(side, side, move |r, c| c < bar || r >= side - bar).unwrap()
    }

    fn small_pipeline(keep: PruneMode) -> PipelineParams {
        PipelineParams {
            radius: 0.1,
            spacing: 0.1,
            config: ModelConfig {
                n_polytopes: 1,
                m_halfspaces: 8,
                dimension: 2,
                slope: 60.0,
            },
            step1: FitParams {
                max_iters: 120,
                ..FitParams::maximize()
            },
            prune: PruneParams {
                mode: keep,
                t_exponent: 0.25,
            },
            step3: FitParams {
                max_iters: 120,
                ..FitParams::penalize()
            },
        }
    }

    #[test]
    fn one_covering_polytope_labels_all_foreground_alike() {
        let shape =
            ShapeRaster::from_fn(24, 24, |r, c| (6..18).contains(&r) && (6..18).contains(&c))
                .unwrap();
        let cfg = ModelConfig::new(1, 4, 400.0).unwrap();
        let m = DnsmModel::new(cfg, vec![disc_polytope([0.5, 0.5], 0.25, 4, 400.0)]).unwrap();
        let labels = label_map(&m, &shape);
        for (row, col, fg) in shape.pixels() {
            assert_eq!(labels.get(row, col) == 1, fg);
        }
    }

    #[test]
    fn disjoint_polytopes_partition_their_memberships() {
        let shape = ShapeRaster::from_fn(32, 32, |_, _| true).unwrap();
        let cfg = ModelConfig::new(2, 4, 400.0).unwrap();
        let m = DnsmModel::new(
            cfg,
            vec![
                disc_polytope([0.25, 0.5], 0.12, 4, 400.0),
                disc_polytope([0.75, 0.5], 0.12, 4, 400.0),
            ],
        )
        .unwrap();
        let labels = label_map(&m, &shape);
        for (row, col, _) in shape.pixels() {
            let x = shape.frame().point_of(row, col);
            let g1 = eval_polytope(&m.polytopes()[0], &x);
            let g2 = eval_polytope(&m.polytopes()[1], &x);
            let expected = if eval_model(&m, &x) >= 0.5 {
                if g1 >= g2 {
                    1
                } else {
                    2
                }
            } else {
                0
            };
            assert_eq!(labels.get(row, col), expected);
        }
    }

    #[test]
    fn argmax_labeling_matches_brute_force_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let n = rng.gen_range(2..=5);
            let shape = ShapeRaster::from_fn(16, 16, |_, _| true).unwrap();
            let polys: Vec<Polytope> = (0..n)
                .map(|_| Polytope {
                    discriminants: (0..4)
                        .map(|_| {
                            Discriminant::new(
                                vec![rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)],
                                rng.gen_range(-15.0..15.0),
                            )
                        })
                        .collect(),
                })
                .collect();
            let cfg = ModelConfig::new(n, 4, 60.0).unwrap();
            let m = DnsmModel::new(cfg, polys.clone()).unwrap();
            let labels = label_map(&m, &shape);
            for (row, col, _) in shape.pixels() {
                let x = shape.frame().point_of(row, col);
                let g: Vec<f64> = polys.iter().map(|p| eval_polytope(p, &x)).collect();
                let f = eval_model(&m, &x);
                let expected = if f >= 0.5 {
                    let mut best = 0;
                    for i in 1..n {
                        if g[i] > g[best] {
                            best = i;
                        }
                    }
                    best as u32 + 1
                } else {
                    0
                };
                assert_eq!(labels.get(row, col), expected, "at ({row}, {col})");
            }
        }
    }

    #[test]
    fn l_shape_decomposes_into_two_touching_parts() {
        let shape = l_shape(48);
        let run = decompose_run(&shape, &small_pipeline(PruneMode::KeepTopK(2))).unwrap();
        let result = &run.result;
        assert_eq!(result.model.n_polytopes(), 2);
        assert!(result.diagnostics.dice_vs_input >= 0.9);

        // Exactly the two parts, adjacent to each other.
        assert_eq!(result.connectivity.len(), 2);
        assert_eq!(result.connectivity[0], vec![2]);
        assert_eq!(result.connectivity[1], vec![1]);
    }

    #[test]
    fn stage3_reduces_overlap_and_gaps() {
        let shape = l_shape(48);
        let params = small_pipeline(PruneMode::KeepTopK(2));
        let run = decompose_run(&shape, &params).unwrap();

        let (_, before) = analyze(&run.pruned_model, &shape);
        let (_, after) = analyze(&run.result.model, &shape);
        assert!(
            after.overlap_pixel_count <= before.overlap_pixel_count,
            "overlap grew: {} -> {}",
            before.overlap_pixel_count,
            after.overlap_pixel_count
        );
        assert!(
            after.gap_pixel_count <= before.gap_pixel_count,
            "gaps grew: {} -> {}",
            before.gap_pixel_count,
            after.gap_pixel_count
        );
    }

    #[test]
    fn decomposition_is_deterministic() {
        let shape = l_shape(32);
        let params = small_pipeline(PruneMode::KeepTopK(2));
        let a = decompose(&shape, &params).unwrap();
        let b = decompose(&shape, &params).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.model.params(), b.model.params());
    }

    #[test]
    fn mismatched_overlap_signs_are_rejected() {
        let shape = l_shape(24);
        let mut params = small_pipeline(PruneMode::KeepTopK(1));
        params.step1.overlap_sign = OverlapSign::Penalize;
        assert!(decompose(&shape, &params).is_err());
    }

    #[test]
    fn hull_excess_separates_convex_from_concave_parts() {
        // One rectangular part: essentially no excess.
        let mut labels = vec![0u32; 40 * 40];
        for r in 10..30 {
            for c in 5..25 {
                labels[r * 40 + c] = 1;
            }
        }
        let rect = LabelMap::new(40, 40, labels);
        assert!(part_hull_excess(&rect, 1) <= 0.02);

        // An L-shaped part: the hull fills the notch.
        let mut labels = vec![0u32; 40 * 40];
        for r in 0..40 {
            for c in 0..40 {
                if c < 12 || r >= 28 {
                    labels[r * 40 + c] = 1;
                }
            }
        }
        let l = LabelMap::new(40, 40, labels);
        assert!(part_hull_excess(&l, 1) > 0.2);
    }

    #[test]
    fn connectivity_is_symmetric() {
        let labels = LabelMap::new(
            4,
            1,
            vec![1, 2, 2, 3],
        );
        let adj = connectivity(&labels);
        assert_eq!(adj, vec![vec![2], vec![1, 3], vec![2]]);
        for (k, neighbors) in adj.iter().enumerate() {
            for &n in neighbors {
                assert!(adj[(n - 1) as usize].contains(&(k as u32 + 1)));
            }
        }
    }

    #[test]
    fn convex_input_keeps_zero_concavity() {
        let shape =
            ShapeRaster::from_fn(40, 40, |r, c| (8..32).contains(&r) && (8..32).contains(&c))
                .unwrap();
        let run = decompose_run(&shape, &small_pipeline(PruneMode::KeepTopK(1))).unwrap();
        assert_eq!(run.pruned_model.n_polytopes(), 1);
        assert_eq!(run.dnsm_concavity, 0.0);
        // Stage-3 energy landed at a sane place.
        let e = energy(&run.result.model, &shape, &small_pipeline(PruneMode::KeepTopK(1)).step3);
        assert!(e.total.is_finite());
    }
}
