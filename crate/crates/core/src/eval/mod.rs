//! Synthetic ground truth, accuracy measures and the benchmark harness.

pub mod bench;
pub mod sequence;
pub mod synth;
pub mod texture;

pub use bench::{
    benchmark, benchmark_pair, evaluate_pair, evaluate_pairs, summarize, write_csv, BenchmarkConfig, BenchmarkRow,
    PairOutcome, Pipeline,
};
pub use sequence::{near_duplicates, sequence_texture, synth_strip, StripParams, SyntheticSequence};
pub use synth::{overlap_fraction, synth_pair, SynthPair, SynthParams};
pub use texture::{add_noise, benchmark_corpus, checkerboard, mucosa_texture, noise_image, TextureParams};

use crate::homography::Homography;

/// Grid spacing, in pixels, of the MED evaluation.
pub const MED_STEP: usize = 4;

/// Mean Euclidean distance between the images of the same pixels under two
/// transforms, over every `MED_STEP`-th pixel of a `width x height` frame.
/// Infinite if either transform sends a grid point to infinity.
pub fn med(h_est: &Homography, h_gt: &Homography, width: usize, height: usize) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in (0..height).step_by(MED_STEP) {
        for x in (0..width).step_by(MED_STEP) {
            let (x, y) = (x as f64, y as f64);
            let (ua, va, wa) = h_est.apply_raw(x, y);
            let (ub, vb, wb) = h_gt.apply_raw(x, y);
            if wa.abs() < 1e-12 || wb.abs() < 1e-12 {
                return f64::INFINITY;
            }
            sum += (ua - ub).hypot(va - vb);
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
