//! End-to-end acceptance checks. Each test writes one PASS/FAIL line to
//! stderr (uncaptured) before asserting.

use std::io::Write;
use std::sync::OnceLock;

use lumen::eval::{
    benchmark, benchmark_corpus, med, mucosa_texture, near_duplicates, noise_image, synth_pair, synth_strip,
    BenchmarkConfig, BenchmarkRow, StripParams, SynthParams, TextureParams,
};
use lumen::features::Match;
use lumen::image::{Image, Mask};
use lumen::nmi::{
    bspline, joint_histogram, nmi_gradient, nmi_hessian, nmi_value, DerivativeOrder, HistogramConfig, PairView,
    N_PARAMS,
};
use lumen::optimizer::{ml_step, multiscale_register_masked, LevelSchedule};
use lumen::quality::ssim;
use lumen::rectify::{rectify_homography, rectify_image, AttitudePose, CameraFrameChain};
use lumen::robust::{filter_outliers, fit_homography, initial_transform, InitConfig, OutlierMethod, PointFeature, RobustConfig};
use lumen::stitch::{idw_weights, register_pair, stitch_sequence, PairStatus, PreparedFrame, SequenceFrame, StitchOptions};
use lumen::{parameter_scale, Homography, Point2};
use nalgebra::{Matrix3, SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn report(criterion: u32, pass: bool, detail: impl AsRef<str>) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {criterion}: {verdict} | {}", detail.as_ref());
}

fn row<'a>(rows: &'a [BenchmarkRow], name: &str) -> &'a BenchmarkRow {
    rows.iter().find(|r| r.method == name).unwrap_or_else(|| panic!("missing row {name}"))
}

/// The 200-pair benchmark shared by criteria 1 and 2.
fn benchmark_rows() -> &'static Vec<BenchmarkRow> {
    static ROWS: OnceLock<Vec<BenchmarkRow>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let corpus = benchmark_corpus(8, 512, 500);
        let cfg = BenchmarkConfig::default();
        assert_eq!(cfg.pairs, 200);
        let rows = benchmark(&corpus, &cfg).expect("benchmark runs");
        let mut out = Vec::new();
        lumen::eval::write_csv(&rows, &mut out).unwrap();
        let _ = writeln!(std::io::stderr(), "{}", String::from_utf8_lossy(&out));
        rows
    })
}

#[test]
fn criterion_1_registration_accuracy() {
    let rows = benchmark_rows();
    let med_of = |name: &str| row(rows, name).med_mean.unwrap_or(f64::INFINITY);
    let (hy, nmi, feat) = (med_of("hybrid"), med_of("nmi-identity"), med_of("feature-only"));
    let pass = hy <= 1.5 && hy < nmi && nmi < feat;
    report(
        1,
        pass,
        format!(
            "mean MED hybrid {hy:.3} / nmi-identity {nmi:.3} / feature-only {feat:.3} px (failures {} / {} / {})",
            row(rows, "hybrid").failures,
            row(rows, "nmi-identity").failures,
            row(rows, "feature-only").failures
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_2_correct_rate_ordering() {
    let rows = benchmark_rows();
    let cr = |name: &str| row(rows, name).correct_rate.unwrap_or(f64::NEG_INFINITY);
    let combos: Vec<(String, f64)> = ["sift", "pca-sift"]
        .iter()
        .flat_map(|d| ["ht", "ransac", "msac", "mlesac"].iter().map(move |m| format!("{d}+{m}")))
        .map(|n| {
            let v = cr(&n);
            (n, v)
        })
        .collect();
    let best = cr("pca-sift+mlesac");
    let is_max = combos.iter().all(|(_, v)| *v <= best);
    let ordered = ["sift", "pca-sift"].iter().all(|d| {
        let c = |m: &str| cr(&format!("{d}+{m}"));
        c("mlesac") >= c("msac") && c("msac") >= c("ransac") && c("ransac") >= c("ht")
    });
    let listing: Vec<String> = combos.iter().map(|(n, v)| format!("{n} {v:.1}")).collect();
    report(2, is_max && ordered, format!("CR %: {}", listing.join(", ")));
    assert!(is_max && ordered);
}

/// Five smooth 96x96 pairs related by small known motions.
fn derivative_pairs() -> Vec<(Image, Image, Homography)> {
    let src = mucosa_texture(256, 256, 77, &TextureParams::default());
    (0..5)
        .map(|i| {
            let params = SynthParams {
                width: 96,
                height: 96,
                rotation: 3f64.to_radians(),
                scale: (0.97, 1.03),
                shift: 3.0,
                shear: 0.01,
                projective: 1e-5,
                noise: 0.0,
                seed: 40 + i,
                ..SynthParams::default()
            };
            let p = synth_pair(&src, &params).unwrap();
            (p.a, p.b, p.h_gt)
        })
        .collect()
}

fn nudged(mu: &Homography, scale: &[f64; 8], k: usize, h: f64) -> Homography {
    let mut p = mu.params();
    p[k] += h * scale[k];
    Homography::from_params(&p).unwrap()
}

/// Keeps samples away from the moving frame's border, so small parameter
/// changes never move a sample in or out of the overlap.
fn interior_mask(n: usize) -> Mask {
    Mask::from_fn(n, n, |x, y| (12..n - 12).contains(&x) && (12..n - 12).contains(&y))
}

struct DerivativeErrors {
    gradient: f64,
    hessian: f64,
    histogram: f64,
}

fn derivative_errors(step: f64) -> DerivativeErrors {
    let cfg = HistogramConfig::default();
    let pairs = derivative_pairs();
    let mask = interior_mask(96);
    let scale = parameter_scale(96, 96);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let perturb = Normal::new(0.0, 2e-3).unwrap();
    let mut near_identity = || {
        let mut p = Homography::identity().params();
        for k in 0..8 {
            p[k] += perturb.sample(&mut rng) * scale[k];
        }
        Homography::from_params(&p).unwrap()
    };

    // Gradient: 10 random points near the identity per pair.
    let mut gradient = 0.0f64;
    for (a, b, _) in &pairs {
        let pair = PairView::new(a, b).with_masks(Some(&mask), None);
        for _ in 0..10 {
            let mu = near_identity();
            let g = nmi_gradient(pair, &mu, &cfg).unwrap();
            for k in 0..N_PARAMS {
                let fp = nmi_value(pair, &nudged(&mu, &scale, k, step), &cfg).unwrap();
                let fm = nmi_value(pair, &nudged(&mu, &scale, k, -step), &cfg).unwrap();
                let fd = (fp - fm) / (2.0 * step);
                let an = g[k] * scale[k];
                gradient = gradient.max((fd - an).abs() / an.abs().max(1e-12));
            }
        }
    }

    // Hessian diagonal at the optimum against differences of the gradient.
    let mut hessian = 0.0f64;
    for (a, b, h_gt) in &pairs {
        let pair = PairView::new(a, b).with_masks(Some(&mask), None);
        let hess = nmi_hessian(pair, h_gt, &cfg).unwrap();
        for k in 0..N_PARAMS {
            let gp = nmi_gradient(pair, &nudged(h_gt, &scale, k, step), &cfg).unwrap();
            let gm = nmi_gradient(pair, &nudged(h_gt, &scale, k, -step), &cfg).unwrap();
            let fd = (gp[k] - gm[k]) * scale[k] / (2.0 * step);
            let an = hess[(k, k)] * scale[k] * scale[k];
            hessian = hessian.max((fd - an).abs() / an.abs());
        }
    }

    let mut histogram = 0.0f64;
    for (a, b, _) in &pairs {
        let pair = PairView::new(a, b).with_masks(Some(&mask), None);
        let mu = near_identity();
        let jh = joint_histogram(pair, &mu, &cfg, DerivativeOrder::First).unwrap();
        let dp = jh.dp.as_ref().unwrap();
        for k in 0..N_PARAMS {
            let hp = joint_histogram(pair, &nudged(&mu, &scale, k, step), &cfg, DerivativeOrder::None).unwrap();
            let hm = joint_histogram(pair, &nudged(&mu, &scale, k, -step), &cfg, DerivativeOrder::None).unwrap();
            for c in 0..jh.p.len() {
                let fd = (hp.p[c] - hm.p[c]) / (2.0 * step);
                histogram = histogram.max((fd - dp[c * N_PARAMS + k] * scale[k]).abs());
            }
        }
    }
    DerivativeErrors { gradient, hessian, histogram }
}

#[test]
fn criterion_3_derivative_oracles() {
    // Bilinear sampling makes the objective piecewise smooth: one sample
    // crossing a pixel line inside the step shifts a difference quotient
    // by a step-independent amount. The verdict uses a step (normalized
    // units) short enough that crossings are unlikely; the 1e-4 figures
    // are reported for reference.
    let fine = derivative_errors(1e-8);
    let coarse = derivative_errors(1e-4);
    let pass = fine.gradient < 1e-3 && fine.hessian < 0.10 && fine.histogram < 1e-5;
    report(
        3,
        pass,
        format!(
            "step 1e-8: gradient rel err {:.2e} (<1e-3), Hessian diagonal rel err {:.3} (<0.10), dp/dmu abs err {:.2e} (<1e-5); step 1e-4: {:.2e} / {:.3} / {:.2e}",
            fine.gradient, fine.hessian, fine.histogram, coarse.gradient, coarse.hessian, coarse.histogram
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_normalization() {
    let cfg = HistogramConfig::default();
    let mut worst_sum = 0.0f64;
    let mut worst_marginal = 0.0f64;
    for (a, b, h_gt) in derivative_pairs() {
        for mu in [Homography::identity(), h_gt] {
            let jh = joint_histogram(PairView::new(&a, &b), &mu, &cfg, DerivativeOrder::None).unwrap();
            worst_sum = worst_sum.max((jh.p.iter().sum::<f64>() - 1.0).abs());
            for i in 0..jh.bins_a {
                let row: f64 = (0..jh.bins_b).map(|j| jh.at(i, j)).sum();
                worst_marginal = worst_marginal.max((row - jh.p_a[i]).abs());
            }
            for j in 0..jh.bins_b {
                let col: f64 = (0..jh.bins_a).map(|i| jh.at(i, j)).sum();
                worst_marginal = worst_marginal.max((col - jh.p_b[j]).abs());
            }
        }
    }
    let mut worst_unity = 0.0f64;
    for i in 0..=10_000 {
        let x = -5.0 + 10.0 * i as f64 / 10_000.0;
        let s: f64 = (-8..=8).map(|k| bspline(3, x - k as f64)).sum();
        worst_unity = worst_unity.max((s - 1.0).abs());
    }
    let points: Vec<(usize, usize)> = (0..40).map(|i| (20 + i, 10 + (i * 7) % 30)).collect();
    let mut worst_weights = 0.0f64;
    for y in 0..64 {
        for x in 0..96 {
            let s: f64 = idw_weights((x as f64, y as f64), &points).iter().sum();
            worst_weights = worst_weights.max((s - 1.0).abs());
        }
    }
    let pass = worst_sum <= 1e-9 && worst_marginal <= 1e-12 && worst_unity <= 1e-12 && worst_weights <= 1e-12;
    report(
        4,
        pass,
        format!(
            "histogram sum {worst_sum:.1e}, marginals {worst_marginal:.1e}, B-spline unity {worst_unity:.1e}, blend weights {worst_weights:.1e}"
        ),
    );
    assert!(pass);
}

fn random_homography(rng: &mut ChaCha8Rng) -> Homography {
    let m = Matrix3::new(
        rng.random_range(0.8..1.2),
        rng.random_range(-0.2..0.2),
        rng.random_range(-30.0..30.0),
        rng.random_range(-0.2..0.2),
        rng.random_range(0.8..1.2),
        rng.random_range(-30.0..30.0),
        rng.random_range(-5e-4..5e-4),
        rng.random_range(-5e-4..5e-4),
        1.0,
    );
    Homography::new(m).unwrap()
}

#[test]
fn criterion_5_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_dlt = 0.0f64;
    let mut worst_round = 0.0f64;
    for _ in 0..100 {
        let h = random_homography(&mut rng);
        let a: Vec<Point2> = (0..12)
            .map(|_| Point2::new(rng.random_range(0.0..256.0), rng.random_range(0.0..256.0)))
            .collect();
        let b: Vec<Point2> = a.iter().map(|p| h.apply_point(*p).unwrap()).collect();
        let fit = fit_homography(&a, &b).unwrap();
        worst_dlt = worst_dlt.max(fit.frobenius_distance(&h));

        let g = random_homography(&mut rng);
        let inv = h.invert().unwrap();
        worst_round = worst_round.max(h.compose(&inv).unwrap().frobenius_distance(&Homography::identity()));
        let left = h.compose(&g).unwrap().compose(&inv).unwrap();
        let right = h.compose(&g.compose(&inv).unwrap()).unwrap();
        worst_round = worst_round.max(left.frobenius_distance(&right));
        for p in &a {
            let q = inv.apply_point(h.apply_point(*p).unwrap()).unwrap();
            worst_round = worst_round.max(q.dist(*p));
        }
    }

    let cfg = HistogramConfig::default();
    let mut worst_self = 0.0f64;
    for seed in 0..5 {
        let x = mucosa_texture(96, 96, 900 + seed, &TextureParams::default());
        let v = nmi_value(PairView::new(&x, &x), &Homography::identity(), &cfg).unwrap();
        worst_self = worst_self.max((v - 2.0).abs());
    }

    // Newton step on a concave quadratic lands on its maximizer.
    let mut worst_newton = 0.0f64;
    for _ in 0..50 {
        let q = SMatrix::<f64, 8, 8>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let hess = -(q * q.transpose() + SMatrix::<f64, 8, 8>::identity());
        let x_star = SVector::<f64, 8>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let x0 = SVector::<f64, 8>::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let grad = hess * (x0 - x_star);
        let step = ml_step(&grad, &hess, 0.0).unwrap();
        worst_newton = worst_newton.max((x0 + step - x_star).amax());
    }

    let pass = worst_dlt <= 1e-8 && worst_self <= 1e-6 && worst_round <= 1e-9 && worst_newton <= 1e-9;
    report(
        5,
        pass,
        format!(
            "DLT {worst_dlt:.1e}, NMI(x,x) dev {worst_self:.1e}, round trips {worst_round:.1e}, Newton {worst_newton:.1e}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_6_mlesac_robustness() {
    let mut good_trials = 0;
    let mut worst_recall = 1.0f64;
    let mut total_false = 0;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let h = random_homography(&mut rng);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut pa = Vec::new();
        let mut pb = Vec::new();
        let mut planted_inlier = Vec::new();
        while pa.len() < 100 {
            let p = Point2::new(rng.random_range(0.0..256.0), rng.random_range(0.0..256.0));
            let q = h.apply_point(p).unwrap();
            if pa.len() < 70 {
                pa.push(PointFeature::at(p.x, p.y));
                pb.push(PointFeature::at(q.x + noise.sample(&mut rng), q.y + noise.sample(&mut rng)));
                planted_inlier.push(true);
            } else {
                // A planted outlier lands well away from where it should.
                let r = Point2::new(rng.random_range(0.0..256.0), rng.random_range(0.0..256.0));
                if r.dist(q) < 10.0 {
                    continue;
                }
                pa.push(PointFeature::at(p.x, p.y));
                pb.push(PointFeature::at(r.x, r.y));
                planted_inlier.push(false);
            }
        }
        let matches: Vec<Match> = (0..100)
            .map(|i| Match {
                index_a: i,
                index_b: i,
                d1: 0.0,
                d2: 1.0,
                ratio: 0.0,
            })
            .collect();
        let cfg = RobustConfig {
            seed: trial,
            ..RobustConfig::for_image(256, 256)
        };
        let res = filter_outliers(&matches, &pa, &pb, OutlierMethod::Mlesac, &cfg).unwrap();
        let kept_in = res.inliers.iter().filter(|m| planted_inlier[m.index_a]).count();
        let kept_out = res.inliers.len() - kept_in;
        let recall = kept_in as f64 / 70.0;
        worst_recall = worst_recall.min(recall);
        total_false += kept_out;
        if recall >= 0.95 && kept_out == 0 {
            good_trials += 1;
        }
    }
    let pass = good_trials >= 99;
    report(
        6,
        pass,
        format!("{good_trials}/100 trials with recall >= 95% and no outlier kept (worst recall {worst_recall:.2}, outliers kept {total_false})"),
    );
    assert!(pass);
}

fn frames_of(images: &[Image]) -> Vec<SequenceFrame> {
    images
        .iter()
        .enumerate()
        .map(|(i, f)| SequenceFrame::new(format!("{i:03}"), f.clone()))
        .collect()
}

fn prepared(img: &Image) -> PreparedFrame {
    lumen::stitch::prepare_frame(&SequenceFrame::new("x", img.clone()), true).unwrap()
}

#[test]
fn criterion_7_gate_behavior() {
    let opts = StitchOptions::default();
    // Pairs spanning the threshold: shifted views with growing noise.
    let src = mucosa_texture(320, 160, 71, &lumen::eval::sequence_texture());
    let mut violations = 0;
    let (mut below, mut above) = (0, 0);
    for i in 0..16 {
        let shift = 2 + 2 * (i % 4);
        let a = src.crop(20, 16, 128, 128).unwrap();
        let b = lumen::eval::add_noise(&src.crop(20 + shift, 16, 128, 128).unwrap(), 0.02 * (i / 4) as f64, i as u64);
        let r = register_pair(&prepared(&a), &prepared(&b), &opts).unwrap();
        let s = ssim(&a, &b).unwrap().clamp(0.0, 1.0);
        if s <= opts.gate_threshold {
            below += 1;
            if r.status != PairStatus::GateRejected {
                violations += 1;
            }
        } else {
            above += 1;
        }
    }
    let mut identical_rejected = 0;
    for seed in 0..10 {
        let x = mucosa_texture(96, 96, 300 + seed, &TextureParams::default());
        if !lumen::quality::gate(&x, &x, opts.gate_threshold).unwrap().admitted {
            identical_rejected += 1;
        }
    }
    let mut count_mismatch = 0;
    for seed in 0..4u64 {
        let mut seq = synth_strip(&StripParams {
            frames: 8,
            size: 96,
            seed: 60 + seed,
            ..StripParams::default()
        })
        .unwrap()
        .frames;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..seed {
            let k = rng.random_range(1..seq.len());
            seq[k] = noise_image(96, 96, 1000 + k as u64);
        }
        let out = stitch_sequence(&frames_of(&seq), &opts).unwrap();
        let rejected = out
            .manifest
            .frames
            .iter()
            .filter(|f| f.pair.as_ref().is_some_and(|p| p.status != PairStatus::Registered))
            .count();
        if out.segments.len() != 1 + rejected {
            count_mismatch += 1;
        }
    }
    let pass = violations == 0 && identical_rejected == 0 && count_mismatch == 0;
    report(
        7,
        pass,
        format!(
            "{violations} low-SSIM pairs registered ({below} below / {above} above threshold), {identical_rejected} identical pairs rejected, {count_mismatch} sequences with segment count != 1 + rejections"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_drift_at_scale() {
    let params = StripParams::default();
    assert_eq!((params.frames, params.size), (152, 480));
    let seq = synth_strip(&params).unwrap();
    // Pairwise overlap of the ground truth.
    let min_overlap = seq
        .globals
        .windows(2)
        .map(|w| {
            let rel = w[1].invert().unwrap().compose(&w[0]).unwrap();
            lumen::eval::overlap_fraction(&rel, 480, 480)
        })
        .fold(1.0f64, f64::min);
    let out = stitch_sequence(&frames_of(&seq.frames), &StitchOptions::default()).unwrap();
    let last = out.manifest.frames.last().unwrap();
    let est = Homography::from_array(&last.global_mu).unwrap();
    let drift = med(&est, seq.globals.last().unwrap(), 480, 480);
    let per_pair = drift / (params.frames - 1) as f64;
    let seams_worse = out
        .manifest
        .frames
        .iter()
        .filter_map(|f| f.blend)
        .filter(|b| b.jump_after > b.jump_before)
        .count();
    let pass = out.segments.len() == 1 && min_overlap >= 0.6 && per_pair <= 0.5 && seams_worse == 0;
    report(
        8,
        pass,
        format!(
            "{} segment(s), min pairwise overlap {min_overlap:.2}, accumulated MED {drift:.2} px over {} pairs ({per_pair:.3} px/pair), {seams_worse} pairs with a larger seam jump after blending",
            out.segments.len(),
            params.frames - 1
        ),
    );
    assert!(pass);
}

/// Pixel where the ray through rectified pixel `p` meets the image plane of
/// a camera rotated by `r` (`x_cam = r x_rect`), by explicit projection.
fn project_through(p: Point2, r: &Matrix3<f64>, focal: f64, c: f64) -> Option<Point2> {
    let ray = nalgebra::Vector3::new((p.x - c) / focal, (p.y - c) / focal, 1.0);
    let d = r * ray;
    (d.z > 1e-9).then(|| Point2::new(focal * d.x / d.z + c, focal * d.y / d.z + c))
}

fn rot_x(b: f64) -> Matrix3<f64> {
    let (s, c) = b.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

/// Renders what a camera tilted by `beta` sees of the plane shown by the
/// fronto-parallel crop of `src` at `origin` through `h` (rectified frame
/// pixels to the crop).
fn tilted_view(src: &Image, origin: (f64, f64), h: &Homography, beta: f64, focal: f64, size: usize) -> Option<Image> {
    let c = (size as f64 - 1.0) / 2.0;
    let r_inv = rot_x(beta).transpose();
    let mut data = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let p = project_through(Point2::new(x as f64, y as f64), &r_inv, focal, c)?;
            let q = h.apply_point(p).ok()?;
            data.push(src.sample(q.x + origin.0, q.y + origin.1)?);
        }
    }
    Image::new(size, size, data).ok()
}

fn register_masked(a: &Image, ma: Option<&Mask>, b: &Image, mb: Option<&Mask>) -> Homography {
    let enh = |img: &Image| lumen::quality::enhance(img);
    let (ea, eb) = (enh(a), enh(b));
    let start = initial_transform(&ea, &eb, &InitConfig::default())
        .map(|(mu, _)| mu)
        .unwrap_or_else(|_| Homography::identity());
    multiscale_register_masked(&ea, ma, &eb, mb, &start, &LevelSchedule::default())
        .map(|(mu, _)| mu)
        .unwrap_or(start)
}

#[test]
fn criterion_9_rectification() {
    let size = 256usize;
    let focal = 256.0;
    let c = (size as f64 - 1.0) / 2.0;
    let chain = CameraFrameChain::identity(1).unwrap();
    let corners = [
        Point2::new(0.0, 0.0),
        Point2::new(255.0, 0.0),
        Point2::new(0.0, 255.0),
        Point2::new(255.0, 255.0),
    ];
    // Corner round trip over tilts up to 60 degrees.
    let mut worst_corner = 0.0f64;
    for i in 0..=24 {
        let beta = (-60.0 + 5.0 * i as f64).to_radians();
        let pose = AttitudePose::from_angles(beta, 0.0, 0.0, focal).unwrap();
        let rect = rectify_homography(&pose, &chain, size, size).unwrap();
        let mut sum = 0.0;
        let mut n = 0;
        for p in corners {
            // Where the tilted camera sees the corner, then back.
            if let Some(u) = project_through(p, &rot_x(beta), focal, c) {
                sum += rect.apply_point(u).unwrap().dist(p);
                n += 1;
            }
        }
        assert!(n > 0);
        worst_corner = worst_corner.max(sum / n as f64);
    }

    // Registration with and without rectification: a wide-angle camera
    // whose tilt changes independently between the two captures.
    let focal = 128.0;
    let src = benchmark_corpus(1, 1536, 900).pop().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut with_rect, mut without) = (Vec::new(), Vec::new());
    while with_rect.len() < 12 {
        let h_gt = {
            let theta: f64 = rng.random_range(-0.1..0.1);
            let (s, co) = theta.sin_cos();
            let (tx, ty) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            Homography::translation(c + tx, c + ty)
                .compose(&Homography::new(Matrix3::new(co, -s, 0.0, s, co, 0.0, 0.0, 0.0, 1.0)).unwrap())
                .unwrap()
                .compose(&Homography::translation(-c, -c))
                .unwrap()
        };
        let (beta_a, beta_b): (f64, f64) = (
            rng.random_range(-35f64..35.0).to_radians(),
            rng.random_range(-35f64..35.0).to_radians(),
        );
        let origin = (640.0, 640.0);
        // a shows the crop directly; b shows it through h_gt^-1 so that
        // b(h_gt x) = a(x).
        let (Some(a), Some(b)) = (
            tilted_view(&src, origin, &Homography::identity(), beta_a, focal, size),
            tilted_view(&src, origin, &h_gt.invert().unwrap(), beta_b, focal, size),
        ) else {
            continue;
        };
        let pose_a = AttitudePose::from_angles(beta_a, 0.0, 0.0, focal).unwrap();
        let pose_b = AttitudePose::from_angles(beta_b, 0.0, 0.0, focal).unwrap();
        let (ra, ma) = rectify_image(&a, &pose_a, &chain).unwrap();
        let (rb, mb) = rectify_image(&b, &pose_b, &chain).unwrap();
        let mu_rect = register_masked(&ra, Some(&ma), &rb, Some(&mb));
        with_rect.push(med(&mu_rect, &h_gt, size, size));

        // Raw frames: bring the estimate into rectified coordinates.
        let to_rect_a = rectify_homography(&pose_a, &chain, size, size).unwrap();
        let to_rect_b = rectify_homography(&pose_b, &chain, size, size).unwrap();
        let mu_raw = register_masked(&a, None, &b, None);
        let mu_in_rect = to_rect_b.compose(&mu_raw).unwrap().compose(&to_rect_a.invert().unwrap()).unwrap();
        without.push(med(&mu_in_rect, &h_gt, size, size));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mr, mw) = (mean(&with_rect), mean(&without));
    let pass = worst_corner < 0.5 && mr < mw;
    report(
        9,
        pass,
        format!("corner MED {worst_corner:.2e} px; registration MED with rectification {mr:.3} vs without {mw:.3} px"),
    );
    assert!(pass);
}

#[test]
fn criterion_10_near_duplicates_collapse() {
    let seq = near_duplicates(40, 256, 10).unwrap();
    let out = stitch_sequence(&frames_of(&seq.frames), &StitchOptions::default()).unwrap();
    let reduction = 1.0 - out.segments.len() as f64 / 40.0;
    let pass = out.segments.len() == 1 && reduction >= 0.5;
    report(
        10,
        pass,
        format!("40 near-duplicate frames -> {} segment(s) ({:.1}% fewer outputs)", out.segments.len(), 100.0 * reduction),
    );
    assert!(pass);
}
