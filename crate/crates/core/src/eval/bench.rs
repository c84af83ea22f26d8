//! Benchmark harness over synthetic pairs: registration accuracy of the
//! feature-only, NMI-only and hybrid pipelines, and the correct rate of
//! every detector/outlier-filter combination.

use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{extract_features, match_descriptors_with, DescriptorKind, Features};
use crate::homography::Homography;
use crate::image::Image;
use crate::optimizer::{multiscale_register, LevelSchedule};
use crate::quality::{ClaheSharpen, Enhancer};
use crate::robust::{
    correct_rate, filter_outliers, initial_transform, transfer_error, InitConfig, OutlierMethod, PointFeature,
    RobustConfig,
};

use super::med;
use super::synth::{synth_pair, SynthParams, SynthPair};

/// Registration pipelines compared by MED.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    /// Feature-based homography alone.
    FeatureOnly,
    /// NMI refinement started from the identity.
    NmiIdentity,
    /// NMI refinement seeded by the feature homography.
    Hybrid,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::FeatureOnly, Pipeline::NmiIdentity, Pipeline::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::FeatureOnly => "feature-only",
            Pipeline::NmiIdentity => "nmi-identity",
            Pipeline::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "feature-only" | "pca-sift" | "features" => Ok(Pipeline::FeatureOnly),
            "nmi-identity" | "nmi" => Ok(Pipeline::NmiIdentity),
            "hybrid" | "proposed" => Ok(Pipeline::Hybrid),
            other => Err(Error::InvalidArgument(format!("unknown pipeline '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub pairs: usize,
    pub synth: SynthParams,
    pub pipelines: Vec<Pipeline>,
    /// Also score every descriptor x outlier-filter combination.
    pub correct_rates: bool,
    pub init: InitConfig,
    pub schedule: LevelSchedule,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            pairs: 200,
            synth: SynthParams::default(),
            pipelines: Pipeline::ALL.to_vec(),
            correct_rates: true,
            init: InitConfig::default(),
            schedule: LevelSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub pairs: usize,
    pub successes: usize,
    pub failures: usize,
    pub med_mean: Option<f64>,
    pub med_sd: Option<f64>,
    pub time_mean: f64,
    pub time_sd: f64,
    pub correct_rate: Option<f64>,
}

/// Per-pair outcome of one pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOutcome {
    /// MED of the pipeline's output. A failed stage leaves its starting
    /// transform as the output (the identity, or the feature seed).
    pub med: f64,
    pub failed: bool,
    pub seconds: f64,
}

/// Per-pair counts of one filter combination.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterCounts {
    /// Correct candidates before filtering.
    pub all_correct: usize,
    pub kept_correct: usize,
    pub kept_false: usize,
    pub seconds: f64,
    /// False when the pair had too few candidates to be scored.
    pub scored: bool,
}

#[derive(Debug, Clone)]
pub struct PairOutcome {
    pub index: usize,
    pub pipelines: Vec<(Pipeline, PipelineOutcome)>,
    pub filters: Vec<(DescriptorKind, OutlierMethod, FilterCounts)>,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

fn run_pipelines(pair: &SynthPair, cfg: &BenchmarkConfig) -> Vec<(Pipeline, PipelineOutcome)> {
    let (w, h) = pair.a.dims();
    let score = |mu: &Homography| med(mu, &pair.h_gt, w, h);
    let mut init_cfg = cfg.init.clone();
    init_cfg.robust.width = w;
    init_cfg.robust.height = h;
    let mut seed: Option<(Option<Homography>, f64)> = None;
    let mut feature_seed = || {
        if seed.is_none() {
            let t = Instant::now();
            let r = initial_transform(&pair.a, &pair.b, &init_cfg).ok().map(|(mu, _)| mu);
            seed = Some((r, t.elapsed().as_secs_f64()));
        }
        seed.expect("set above")
    };
    let mut out = Vec::new();
    for &p in &cfg.pipelines {
        let outcome = match p {
            Pipeline::FeatureOnly => {
                let (mu, secs) = feature_seed();
                PipelineOutcome {
                    med: score(&mu.unwrap_or_else(Homography::identity)),
                    failed: mu.is_none(),
                    seconds: secs,
                }
            }
            Pipeline::NmiIdentity => {
                let t = Instant::now();
                let r = multiscale_register(&pair.a, &pair.b, &Homography::identity(), &cfg.schedule);
                let ok = r.ok().filter(|(_, rep)| !rep.failed).map(|(m, _)| m);
                PipelineOutcome {
                    med: score(&ok.unwrap_or_else(Homography::identity)),
                    failed: ok.is_none(),
                    seconds: t.elapsed().as_secs_f64(),
                }
            }
            Pipeline::Hybrid => {
                let (mu0, init_secs) = feature_seed();
                let start = mu0.unwrap_or_else(Homography::identity);
                let t = Instant::now();
                let r = multiscale_register(&pair.a, &pair.b, &start, &cfg.schedule);
                let ok = r.ok().filter(|(_, rep)| !rep.failed).map(|(m, _)| m);
                PipelineOutcome {
                    med: score(&ok.unwrap_or(start)),
                    failed: ok.is_none(),
                    seconds: init_secs + t.elapsed().as_secs_f64(),
                }
            }
        };
        out.push((p, outcome));
    }
    out
}

fn run_filters(pair: &SynthPair, cfg: &BenchmarkConfig) -> Vec<(DescriptorKind, OutlierMethod, FilterCounts)> {
    let (w, h) = pair.a.dims();
    let robust = RobustConfig {
        width: w,
        height: h,
        ..cfg.init.robust.clone()
    };
    let h_inv = pair.h_gt.invert().expect("generated homographies are invertible");
    let mut out = Vec::new();
    for kind in [DescriptorKind::Sift, DescriptorKind::PcaSift] {
        let basis = cfg.init.basis.as_deref();
        let features = |img: &Image| extract_features(img, kind, &cfg.init.detector, basis).unwrap_or_default();
        let (fa, fb): (Features, Features) = (features(&pair.a), features(&pair.b));
        let matches = match_descriptors_with(&fa.descriptors, &fb.descriptors, &cfg.init.matching).unwrap_or_default();
        let pa: Vec<PointFeature> = fa.keypoints.iter().map(PointFeature::from).collect();
        let pb: Vec<PointFeature> = fb.keypoints.iter().map(PointFeature::from).collect();
        let is_correct = |m: &crate::features::Match| {
            transfer_error(&pair.h_gt, &h_inv, pa[m.index_a].pos, pb[m.index_b].pos) <= robust.inlier_threshold
        };
        let all_correct = matches.iter().filter(|m| is_correct(m)).count();
        for method in OutlierMethod::ALL {
            let mut counts = FilterCounts {
                all_correct,
                ..Default::default()
            };
            if all_correct > 0 && matches.len() >= crate::robust::MIN_CANDIDATES {
                counts.scored = true;
                let t = Instant::now();
                if let Ok(r) = filter_outliers(&matches, &pa, &pb, method, &robust) {
                    counts.kept_correct = r.inliers.iter().filter(|m| is_correct(m)).count();
                    counts.kept_false = r.inliers.len() - counts.kept_correct;
                }
                counts.seconds = t.elapsed().as_secs_f64();
            }
            out.push((kind, method, counts));
        }
    }
    out
}

/// Generates pair `index` of the benchmark and evaluates it.
pub fn evaluate_pair(corpus: &[Image], index: usize, cfg: &BenchmarkConfig) -> Result<PairOutcome> {
    let pair = benchmark_pair(corpus, index, &cfg.synth)?;
    let enhancer = ClaheSharpen::default();
    let pair = SynthPair {
        a: enhancer.enhance(&pair.a),
        b: enhancer.enhance(&pair.b),
        h_gt: pair.h_gt,
    };
    Ok(PairOutcome {
        index,
        pipelines: run_pipelines(&pair, cfg),
        filters: if cfg.correct_rates { run_filters(&pair, cfg) } else { Vec::new() },
    })
}

/// The raw (unenhanced) synthetic pair number `index`.
pub fn benchmark_pair(corpus: &[Image], index: usize, synth: &SynthParams) -> Result<SynthPair> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("benchmark corpus is empty".into()));
    }
    let params = SynthParams {
        seed: synth.seed.wrapping_mul(1_000_003).wrapping_add(index as u64),
        ..synth.clone()
    };
    synth_pair(&corpus[index % corpus.len()], &params)
}

/// Evaluates all pairs, in parallel when the `parallel` feature is on.
/// Outcomes come back sorted by pair index.
pub fn evaluate_pairs(corpus: &[Image], cfg: &BenchmarkConfig) -> Result<Vec<PairOutcome>> {
    #[cfg(feature = "parallel")]
    let results: Vec<Result<PairOutcome>> = {
        use rayon::prelude::*;
        (0..cfg.pairs)
            .into_par_iter()
            .map(|i| evaluate_pair(corpus, i, cfg))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<PairOutcome>> = (0..cfg.pairs).map(|i| evaluate_pair(corpus, i, cfg)).collect();
    results.into_iter().collect()
}

/// Aggregates pair outcomes into one row per pipeline and per filter
/// combination. Correct rates are pooled: `(sum c - sum f) / sum a`.
pub fn summarize(outcomes: &[PairOutcome], cfg: &BenchmarkConfig) -> Vec<BenchmarkRow> {
    let mut rows = Vec::new();
    for &p in &cfg.pipelines {
        let mut meds = Vec::new();
        let mut times = Vec::new();
        let mut failures = 0;
        for o in outcomes {
            for (q, r) in &o.pipelines {
                if *q == p {
                    times.push(r.seconds);
                    failures += r.failed as usize;
                    // Points sent to infinity have no meaningful distance.
                    meds.push(if r.med.is_finite() { r.med } else { f64::MAX.sqrt() });
                }
            }
        }
        let (mm, ms) = mean_sd(&meds);
        let (tm, ts) = mean_sd(&times);
        rows.push(BenchmarkRow {
            method: p.name().to_string(),
            pairs: outcomes.len(),
            successes: meds.len() - failures,
            failures,
            med_mean: (!meds.is_empty()).then_some(mm),
            med_sd: (!meds.is_empty()).then_some(ms),
            time_mean: tm,
            time_sd: ts,
            correct_rate: None,
        });
    }
    if cfg.correct_rates {
        for kind in [DescriptorKind::Sift, DescriptorKind::PcaSift] {
            for method in OutlierMethod::ALL {
                let (mut a, mut c, mut f, mut scored) = (0, 0, 0, 0);
                let mut times = Vec::new();
                for o in outcomes {
                    for (k, m, counts) in &o.filters {
                        if *k == kind && *m == method && counts.scored {
                            scored += 1;
                            a += counts.all_correct;
                            c += counts.kept_correct;
                            f += counts.kept_false;
                            times.push(counts.seconds);
                        }
                    }
                }
                let (tm, ts) = mean_sd(&times);
                rows.push(BenchmarkRow {
                    method: format!("{}+{}", kind.name(), method.name()),
                    pairs: outcomes.len(),
                    successes: scored,
                    failures: outcomes.len() - scored,
                    med_mean: None,
                    med_sd: None,
                    time_mean: tm,
                    time_sd: ts,
                    correct_rate: correct_rate(c, f, a).ok(),
                });
            }
        }
    }
    rows
}

/// Generates `cfg.pairs` synthetic pairs from `corpus` and aggregates the
/// configured measurements.
pub fn benchmark(corpus: &[Image], cfg: &BenchmarkConfig) -> Result<Vec<BenchmarkRow>> {
    let outcomes = evaluate_pairs(corpus, cfg)?;
    Ok(summarize(&outcomes, cfg))
}

pub fn write_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::texture::{mucosa_texture, TextureParams};

    #[test]
    fn identity_pair_scores_zero() {
        let corpus = vec![mucosa_texture(300, 300, 4, &TextureParams::default())];
        let cfg = BenchmarkConfig {
            pairs: 1,
            synth: SynthParams::still(256, 256),
            pipelines: vec![Pipeline::Hybrid],
            correct_rates: false,
            ..Default::default()
        };
        let rows = benchmark(&corpus, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].successes + rows[0].failures, 1);
        assert!(rows[0].med_mean.unwrap() < 0.05);
    }

    #[test]
    fn rows_serialize_to_csv() {
        let rows = vec![BenchmarkRow {
            method: "hybrid".into(),
            pairs: 2,
            successes: 1,
            failures: 1,
            med_mean: Some(0.5),
            med_sd: Some(0.0),
            time_mean: 1.0,
            time_sd: 0.1,
            correct_rate: None,
        }];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("method,pairs,successes,failures,med_mean,med_sd,time_mean,time_sd,correct_rate"));
        assert!(text.contains("hybrid,2,1,1,0.5,0.0,1.0,0.1,"));
    }

    #[test]
    fn pipeline_names_parse() {
        for p in Pipeline::ALL {
            assert_eq!(Pipeline::parse(p.name()).unwrap(), p);
        }
    }
}
