//! Per-polytope significance, greedy pruning, and shape convexity measures.
//!
//! A fitted model assigns each foreground pixel to every polytope whose
//! membership reaches 0.5. The significance of polytope `i` is
//!
//! ```text
//! C(i) = (R_unq(i) / R(i)) * (R(i) / R_largest)^t
//! ```
//!
//! where `R(i)` is its covered-region size, `R_unq(i)` the part covered by
//! no other polytope, and `R_largest` the largest covered region in the
//! current set. `C` ranks how much a polytope contributes as a convex part;
//! pruning repeatedly drops the least significant polytope and recounts,
//! since every removal can grow the survivors' unique regions.
//!
//! The sum of `C` over all polytopes except the largest is a global
//! concavity measure: zero for a convex shape, growing with the number and
//! relative weight of extra convex parts. The classical perimeter-based and
//! region-based measures are provided for comparison.

use crate::error::{Error, Result};
use crate::hull::{convex_hull, polygon_area_doubled, polygon_perimeter};
use crate::model::{DnsmModel, FlatModel};
use crate::raster::ShapeRaster;

/// Region counts and significance for one polytope.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegionStats {
    /// Foreground pixels with membership at least 0.5.
    pub region_size: usize,
    /// Those covered by this polytope alone.
    pub unique_size: usize,
    /// Filled by [`significance`]; zero until then.
    pub significance: f64,
}

/// When greedy pruning stops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneMode {
    /// Keep exactly this many polytopes.
    KeepTopK(usize),
    /// Keep removing while the minimum significance is below this.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneParams {
    pub mode: PruneMode,
    /// Exponent `t` of the relative-size factor.
    pub t_exponent: f64,
}

impl PruneParams {
    pub const DEFAULT_T: f64 = 0.25;
    pub const DEFAULT_THRESHOLD: f64 = 0.1;

    pub fn keep_top_k(k: usize) -> Self {
        PruneParams {
            mode: PruneMode::KeepTopK(k),
            t_exponent: Self::DEFAULT_T,
        }
    }

    pub fn threshold(c_min: f64) -> Self {
        PruneParams {
            mode: PruneMode::Threshold(c_min),
            t_exponent: Self::DEFAULT_T,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            PruneMode::KeepTopK(k) if k < 1 => {
                Err(Error::InvalidConfig("keep-k must be at least 1".into()))
            }
            PruneMode::Threshold(c) if !(c > 0.0) => {
                Err(Error::InvalidConfig("significance threshold must be positive".into()))
            }
            _ if !(self.t_exponent > 0.0) => {
                Err(Error::InvalidConfig("t exponent must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Global and per-part convexity summary for one shape.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvexityReport {
    /// Sum of significances over all polytopes except the largest.
    pub dnsm_concavity: f64,
    /// `1 - hull_perimeter / shape_perimeter`.
    pub pb_concavity: f64,
    /// `1 - shape_area / hull_area`.
    pub rb_concavity: f64,
    pub per_polytope: Vec<RegionStats>,
}

impl ConvexityReport {
    /// Assembles a report; the global concavity is derived from the stats.
    pub fn new(per_polytope: Vec<RegionStats>, pb_concavity: f64, rb_concavity: f64) -> Self {
        ConvexityReport {
            dnsm_concavity: global_concavity(&per_polytope),
            pb_concavity,
            rb_concavity,
            per_polytope,
        }
    }
}

/// Which polytopes cover each foreground pixel, hardened at the 0.5 level.
pub(crate) struct Memberships {
    /// One entry per foreground pixel (row-major order): member polytopes.
    pub per_pixel: Vec<Vec<u32>>,
}

impl Memberships {
    pub fn compute(m: &DnsmModel, shape: &ShapeRaster) -> Self {
        let flat = FlatModel::from_model(m);
        let mut g = vec![0.0; flat.n];
        let mut per_pixel = Vec::with_capacity(shape.foreground_count());
        for (row, col, fg) in shape.pixels() {
            if !fg {
                continue;
            }
            let x = shape.frame().point_of(row, col);
            flat.memberships(x, &mut g, None);
            per_pixel.push(
                g.iter()
                    .enumerate()
                    .filter(|(_, &gi)| gi >= 0.5)
                    .map(|(i, _)| i as u32)
                    .collect(),
            );
        }
        Memberships { per_pixel }
    }

    /// Region and unique counts over the active subset.
    pub fn counts(&self, active: &[bool]) -> Vec<RegionStats> {
        let mut stats = vec![
            RegionStats {
                region_size: 0,
                unique_size: 0,
                significance: 0.0,
            };
            active.len()
        ];
        let mut live = Vec::new();
        for members in &self.per_pixel {
            live.clear();
            live.extend(members.iter().copied().filter(|&i| active[i as usize]));
            for &i in &live {
                stats[i as usize].region_size += 1;
            }
            if let [only] = live[..] {
                stats[only as usize].unique_size += 1;
            }
        }
        stats
    }
}

/// Counts each polytope's covered and uniquely covered foreground pixels.
///
/// A pixel belongs to polytope `i` when `g_i >= 0.5` and the pixel is
/// foreground in the input; coverage outside the shape does not count.
/// Significance is left at zero.
pub fn compute_regions(m: &DnsmModel, shape: &ShapeRaster) -> Vec<RegionStats> {
    let members = Memberships::compute(m, shape);
    members.counts(&vec![true; m.n_polytopes()])
}

/// Fills in `C(i) = (R_unq / R) * (R / R_largest)^t`.
///
/// Polytopes with empty regions get zero. Errors when every region is
/// empty, since the relative-size factor is then undefined.
pub fn significance(stats: &[RegionStats], t: f64) -> Result<Vec<RegionStats>> {
    let largest = stats.iter().map(|s| s.region_size).max().unwrap_or(0);
    if largest == 0 {
        return Err(Error::AllRegionsEmpty);
    }
    Ok(stats
        .iter()
        .map(|s| {
            let significance = if s.region_size == 0 {
                0.0
            } else {
                let unique_ratio = s.unique_size as f64 / s.region_size as f64;
                let size_ratio = s.region_size as f64 / largest as f64;
                unique_ratio * size_ratio.powf(t)
            };
            RegionStats {
                significance,
                ..*s
            }
        })
        .collect())
}

/// Sum of significances excluding the largest polytope (ties broken toward
/// the lower index). Zero when at most one polytope covers anything.
pub fn global_concavity(stats: &[RegionStats]) -> f64 {
    let Some(largest) = stats
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.region_size
                .cmp(&b.region_size)
                .then(ib.cmp(ia)) // prefer the lower index on ties
        })
        .map(|(i, _)| i)
    else {
        return 0.0;
    };
    stats
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != largest)
        .map(|(_, s)| s.significance)
        .sum()
}

/// Greedily removes the least significant polytope until the stopping mode
/// is met, recounting regions after every removal.
///
/// Exactly one polytope is dropped per round even when several tie, since a
/// removal changes the survivors' unique regions. Ties break toward the
/// lower index; polytopes with no unique region have `C = 0` and therefore
/// go first. Returns the pruned model, the removed indices in removal
/// order, and the final statistics aligned with the pruned model.
pub fn prune(
    m: &DnsmModel,
    shape: &ShapeRaster,
    p: &PruneParams,
) -> Result<(DnsmModel, Vec<usize>, Vec<RegionStats>)> {
    p.validate()?;
    let n = m.n_polytopes();
    if let PruneMode::KeepTopK(k) = p.mode {
        if k > n {
            return Err(Error::KeepTooLarge { k, n });
        }
    }

    let members = Memberships::compute(m, shape);
    let mut active = vec![true; n];
    let mut active_count = n;
    let mut removed = Vec::new();

    loop {
        let stats = significance(&members.counts(&active), p.t_exponent)?;
        let min_c = stats
            .iter()
            .enumerate()
            .filter(|(i, _)| active[*i])
            .map(|(i, s)| (s.significance, i))
            .fold(None::<(f64, usize)>, |best, (c, i)| match best {
                Some((bc, bi)) if bc <= c => Some((bc, bi)),
                _ => Some((c, i)),
            });

        let stop = match p.mode {
            PruneMode::KeepTopK(k) => active_count <= k,
            PruneMode::Threshold(c_min) => {
                min_c.map(|(c, _)| c >= c_min).unwrap_or(true) || active_count <= 1
            }
        };
        if stop {
            let survivors: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
            if survivors.is_empty() {
                return Err(Error::NoSurvivors);
            }
            let final_stats: Vec<RegionStats> =
                survivors.iter().map(|&i| stats[i]).collect();
            return Ok((m.select(&survivors)?, removed, final_stats));
        }

        let (_, victim) = min_c.expect("at least one active polytope");
        active[victim] = false;
        active_count -= 1;
        removed.push(victim);
    }
}

/// Classical perimeter-based and region-based concavities of a raster shape.
///
/// The convex hull is taken over the corner points of boundary pixels, so
/// it encloses the full pixel squares: the shape area (foreground pixel
/// count) never exceeds the hull area and the hull perimeter never exceeds
/// the crack perimeter of a connected shape. Both results are clamped to
/// `[0, 1)` for robustness on disconnected masks.
///
/// Returns `(pb, rb)` where `pb = 1 - hull_perimeter / shape_perimeter`
/// (shape perimeter counted as exposed 4-neighbor pixel edges) and
/// `rb = 1 - shape_area / hull_area`.
pub fn baseline_concavities(shape: &ShapeRaster) -> (f64, f64) {
    let mut corners: Vec<[i64; 2]> = Vec::new();
    let mut crack_perimeter = 0u64;
    for (row, col, fg) in shape.pixels() {
        if !fg {
            continue;
        }
        let exposed = |r: i64, c: i64| -> bool {
            r < 0
                || c < 0
                || r >= i64::from(shape.height())
                || c >= i64::from(shape.width())
                || !shape.is_foreground(r as u32, c as u32)
        };
        let (r, c) = (i64::from(row), i64::from(col));
        let mut boundary = false;
        for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            if exposed(r + dr, c + dc) {
                crack_perimeter += 1;
                boundary = true;
            }
        }
        if boundary {
            corners.extend_from_slice(&[
                [c, r],
                [c + 1, r],
                [c, r + 1],
                [c + 1, r + 1],
            ]);
        }
    }

    let hull = convex_hull(&corners);
    let hull_area = polygon_area_doubled(&hull) as f64 / 2.0;
    let hull_perimeter = polygon_perimeter(&hull);
    let shape_area = shape.foreground_count() as f64;

    let rb = if hull_area > 0.0 {
        1.0 - shape_area / hull_area
    } else {
        0.0
    };
    let pb = if crack_perimeter > 0 {
        1.0 - hull_perimeter / crack_perimeter as f64
    } else {
        0.0
    };
    (pb.max(0.0), rb.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{disc_polytope, eval_polytope, DnsmModel, ModelConfig, Polytope};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_model(centers: &[[f64; 2]], apothem: f64) -> DnsmModel {
        let cfg = ModelConfig::new(centers.len(), 4, 400.0).unwrap();
        let polys = centers
            .iter()
            .map(|&c| disc_polytope(c, apothem, 4, 400.0))
            .collect();
        DnsmModel::new(cfg, polys).unwrap()
    }

    fn full_raster(side: u32) -> ShapeRaster {
        ShapeRaster::from_fn(side, side, |_, _| true).unwrap()
    }

    #[test]
    fn disjoint_polytopes_have_fully_unique_regions() {
        let m = square_model(&[[0.25, 0.25], [0.75, 0.75]], 0.15);
        let stats = compute_regions(&m, &full_raster(32));
        for s in &stats {
            assert!(s.region_size > 0);
            assert_eq!(s.unique_size, s.region_size);
        }
    }

    #[test]
    fn coincident_polytopes_have_no_unique_region() {
        let m = square_model(&[[0.5, 0.5], [0.5, 0.5]], 0.2);
        let stats = compute_regions(&m, &full_raster(32));
        for s in &stats {
            assert!(s.region_size > 0);
            assert_eq!(s.unique_size, 0);
        }
    }

    #[test]
    fn regions_match_the_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.gen_range(1..=8);
            let side = rng.gen_range(8..=32);
            let shape = loop {
                let bits: Vec<bool> = (0..side * side).map(|_| rng.gen_bool(0.6)).collect();
                if bits.iter().any(|&b| b) {
                    break ShapeRaster::from_bits(side, side, bits).unwrap();
                }
            };
            let polys: Vec<Polytope> = (0..n)
                .map(|_| {
                    disc_polytope(
                        [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                        rng.gen_range(0.05..0.4),
                        5,
                        rng.gen_range(10.0..100.0),
                    )
                })
                .collect();
            let cfg = ModelConfig::new(n, 5, 60.0).unwrap();
            let m = DnsmModel::new(cfg, polys.clone()).unwrap();

            let stats = compute_regions(&m, &shape);

            // Independent recount straight from the definitions.
            let mut region = vec![0usize; n];
            let mut unique = vec![0usize; n];
            for (row, col, fg) in shape.pixels() {
                if !fg {
                    continue;
                }
                let x = shape.frame().point_of(row, col);
                let inside: Vec<usize> = (0..n)
                    .filter(|&i| eval_polytope(&polys[i], &x) >= 0.5)
                    .collect();
                for &i in &inside {
                    region[i] += 1;
                }
                if inside.len() == 1 {
                    unique[inside[0]] += 1;
                }
            }
            for i in 0..n {
                assert_eq!(stats[i].region_size, region[i]);
                assert_eq!(stats[i].unique_size, unique[i]);
            }
        }
    }

    #[test]
    fn significance_arithmetic() {
        let stats = vec![
            RegionStats {
                region_size: 100,
                unique_size: 50,
                significance: 0.0,
            },
            RegionStats {
                region_size: 1600,
                unique_size: 1600,
                significance: 0.0,
            },
        ];
        let filled = significance(&stats, 0.25).unwrap();
        // 0.5 * (100 / 1600)^0.25 = 0.5 * 0.5
        assert!((filled[0].significance - 0.25).abs() < 1e-12);
        assert!((filled[1].significance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lone_polytope_has_unit_significance() {
        let m = square_model(&[[0.5, 0.5]], 0.2);
        let stats = significance(&compute_regions(&m, &full_raster(32)), 0.25).unwrap();
        assert!((stats[0].significance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_disjoint_polytopes_both_score_one() {
        let m = square_model(&[[0.25, 0.5], [0.75, 0.5]], 0.15);
        let stats = significance(&compute_regions(&m, &full_raster(64)), 0.25).unwrap();
        assert!((stats[0].significance - 1.0).abs() < 1e-12);
        assert!((stats[1].significance - 1.0).abs() < 1e-12);
        assert!((global_concavity(&stats) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn significance_stays_within_unit_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.gen_range(2..=6);
            let centers: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.gen_range(0.2..0.8), rng.gen_range(0.2..0.8)])
                .collect();
            let m = square_model(&centers, 0.18);
            let Ok(stats) = significance(&compute_regions(&m, &full_raster(48)), 0.25) else {
                continue;
            };
            for s in &stats {
                assert!((0.0..=1.0).contains(&s.significance));
                assert!(s.unique_size <= s.region_size);
                if s.unique_size == 0 {
                    assert_eq!(s.significance, 0.0);
                }
            }
        }
    }

    #[test]
    fn empty_coverage_is_an_error() {
        let stats = vec![RegionStats {
            region_size: 0,
            unique_size: 0,
            significance: 0.0,
        }];
        assert!(matches!(significance(&stats, 0.25), Err(Error::AllRegionsEmpty)));
    }

    #[test]
    fn fully_covered_polytope_is_removed_first() {
        // Two big squares whose union swallows a small middle square.
        let m = square_model(&[[0.35, 0.5], [0.65, 0.5], [0.5, 0.5]], 0.2);
        let shape = full_raster(64);
        let (pruned, removed, stats) = prune(&m, &shape, &PruneParams::keep_top_k(2)).unwrap();
        assert_eq!(removed, vec![2]);
        assert_eq!(pruned.n_polytopes(), 2);
        assert_eq!(stats.len(), 2);
        assert!(stats.iter().all(|s| s.region_size > 0));
    }

    #[test]
    fn keeping_everything_removes_nothing() {
        let m = square_model(&[[0.3, 0.5], [0.7, 0.5]], 0.15);
        let shape = full_raster(32);
        let (pruned, removed, _) = prune(&m, &shape, &PruneParams::keep_top_k(2)).unwrap();
        assert!(removed.is_empty());
        assert_eq!(pruned.params(), m.params());
    }

    #[test]
    fn keep_k_larger_than_n_is_an_error() {
        let m = square_model(&[[0.5, 0.5]], 0.2);
        assert!(matches!(
            prune(&m, &full_raster(16), &PruneParams::keep_top_k(5)),
            Err(Error::KeepTooLarge { k: 5, n: 1 })
        ));
    }

    #[test]
    fn threshold_pruning_keeps_significant_parts() {
        let m = square_model(&[[0.3, 0.5], [0.7, 0.5], [0.5, 0.5]], 0.18);
        let shape = full_raster(64);
        let (pruned, _, stats) = prune(&m, &shape, &PruneParams::threshold(0.2)).unwrap();
        assert_eq!(pruned.n_polytopes(), 2);
        assert!(stats.iter().all(|s| s.significance >= 0.2));
    }

    #[test]
    fn removal_never_shrinks_surviving_unique_regions() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let n = rng.gen_range(3..=7);
            let centers: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.gen_range(0.25..0.75), rng.gen_range(0.25..0.75)])
                .collect();
            let m = square_model(&centers, 0.2);
            let shape = full_raster(48);
            let members = Memberships::compute(&m, &shape);

            let mut active = vec![true; n];
            for round in 0..n - 1 {
                let before = members.counts(&active);
                let stats = match significance(&before, 0.25) {
                    Ok(s) => s,
                    Err(_) => break,
                };
                let victim = (0..n)
                    .filter(|&i| active[i])
                    .min_by(|&a, &b| {
                        stats[a]
                            .significance
                            .partial_cmp(&stats[b].significance)
                            .unwrap()
                    })
                    .unwrap();
                active[victim] = false;
                let after = members.counts(&active);
                for i in (0..n).filter(|&i| active[i]) {
                    assert!(
                        after[i].unique_size >= before[i].unique_size,
                        "round {round}: unique shrank for {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn concavity_is_zero_exactly_when_one_region_is_nonempty() {
        let single = significance(
            &[
                RegionStats { region_size: 40, unique_size: 40, significance: 0.0 },
                RegionStats { region_size: 0, unique_size: 0, significance: 0.0 },
            ],
            0.25,
        )
        .unwrap();
        assert_eq!(global_concavity(&single), 0.0);

        let double = significance(
            &[
                RegionStats { region_size: 40, unique_size: 40, significance: 0.0 },
                RegionStats { region_size: 10, unique_size: 10, significance: 0.0 },
            ],
            0.25,
        )
        .unwrap();
        assert!(global_concavity(&double) > 0.0);
    }

    #[test]
    fn rectangles_are_convex_under_both_baselines() {
        let shape = ShapeRaster::from_fn(60, 40, |r, c| (5..35).contains(&r) && (10..50).contains(&c))
            .unwrap();
        let (pb, rb) = baseline_concavities(&shape);
        assert!(pb.abs() < 0.02, "pb {pb}");
        assert!(rb.abs() < 0.02, "rb {rb}");
    }

    #[test]
    fn slit_square_splits_the_baselines() {
        // 100x100 square with a 1-pixel-wide, 40-deep slit from the top:
        // barely any area lost (rb stays small) but a long extra boundary
        // (pb jumps). Analytic targets 0.004 and 1 - 400/480.
        let shape = ShapeRaster::from_fn(100, 100, |r, c| !(c == 50 && r < 40)).unwrap();
        let (pb, rb) = baseline_concavities(&shape);
        assert!((rb - 0.004).abs() < 0.03, "rb {rb}");
        assert!((pb - (1.0 - 400.0 / 480.0)).abs() < 0.03, "pb {pb}");
    }

    #[test]
    fn baselines_are_stable_under_upscaling() {
        let l_shape = |r: u32, c: u32, s: u32| -> bool {
            (c < 24 * s && r < 64 * s) || (r >= 40 * s && r < 64 * s && c < 64 * s)
        };
        let small = ShapeRaster::from_fn(64, 64, |r, c| l_shape(r, c, 1)).unwrap();
        let big = ShapeRaster::from_fn(128, 128, |r, c| l_shape(r, c, 2)).unwrap();
        let (pb1, rb1) = baseline_concavities(&small);
        let (pb2, rb2) = baseline_concavities(&big);
        assert!((pb1 - pb2).abs() < 0.02);
        assert!((rb1 - rb2).abs() < 0.02);
    }
}
