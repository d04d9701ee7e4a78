// Scratch harness for picking fitting defaults. Not part of the library.
use dnsm::pipeline::analyze;
use dnsm::*;

fn plus(side: u32, half_w: u32) -> ShapeRaster {
    let mid = side / 2;
    let band = move |v: u32| v >= mid - half_w && v < mid + half_w;
    ShapeRaster::from_fn(side, side, move |r, c| band(r) || band(c)).unwrap()
}

fn main() {
    // (half_width, m, slope, spacing, radius, iters, eta3)
    let cases: [(u32, usize, f64, f64, f64, usize, f64); 4] = [
        (12, 16, 60.0, 0.1, 0.1, 250, 1.0),
        (12, 16, 60.0, 0.1, 0.1, 250, 3.0),
        (2, 12, 120.0, 0.04, 0.03, 250, 1.0),
        (1, 12, 200.0, 0.02, 0.02, 250, 1.0),
    ];
    for (hw, m, slope, spacing, radius, iters, eta3) in cases {
        let side = 96u32;
        let shape = plus(side, hw);
        let fg = shape.foreground_count();
        let params = PipelineParams {
            radius,
            spacing,
            config: ModelConfig {
                n_polytopes: 1,
                m_halfspaces: m,
                dimension: 2,
                slope,
            },
            step1: FitParams {
                max_iters: iters,
                ..FitParams::maximize()
            },
            prune: PruneParams::keep_top_k(2),
            step3: FitParams {
                eta: eta3,
                max_iters: iters,
                ..FitParams::penalize()
            },
        };
        let t0 = std::time::Instant::now();
        match decompose_run(&shape, &params) {
            Ok(run) => {
                let (_, before) = analyze(&run.pruned_model, &shape);
                let d = &run.result.diagnostics;
                println!(
                    "w {:>2} m {m:>2} slope {slope:>5} eta3 {eta3}: seeded {:>3} | overlap {} -> {} ({:.2}% of fg {fg}) | dice {:.4} gaps {} | conn {:?} ({:.1?})",
                    2 * hw,
                    run.pruned_model.n_polytopes() + run.removed.len(),
                    before.overlap_pixel_count,
                    d.overlap_pixel_count,
                    100.0 * d.overlap_pixel_count as f64 / fg as f64,
                    d.dice_vs_input,
                    d.gap_pixel_count,
                    run.result.connectivity,
                    t0.elapsed()
                );
            }
            Err(e) => println!("w {:>2} m {m:>2} slope {slope:>5}: ERROR {e} ({:.1?})", 2 * hw, t0.elapsed()),
        }
    }
}
