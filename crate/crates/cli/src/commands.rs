use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use lumen::eval::{benchmark, benchmark_corpus, write_csv, BenchmarkConfig, Pipeline, SynthParams};
use lumen::features::{
    detect_keypoints, extract_features, extract_patch, train_pca_basis, DescriptorKind, DetectorParams, PcaBasis,
    ScaleSpace,
};
use lumen::image::{load_image, save_png};
use lumen::quality::enhance;
use lumen::nmi::{joint_histogram, DerivativeOrder, PairView};
use lumen::rectify::load_attitude_csv;
use lumen::stitch::{prepare_frame, register_pair, stitch_sequence, PairStatus, SequenceFrame};
use lumen::warp::{warp_masked, Extent};
use lumen::{Homography, Image};
use serde::Serialize;

use crate::config::{Overrides, RunConfig};
use crate::{CliError, EXIT_GATE_REJECTED, EXIT_REGISTRATION_FAILED};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn frame_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Loads frames and, when a sidecar is given, attaches each frame's attitude
/// by file stem. Every frame needs a row once a sidecar is in use.
fn load_frames(paths: &[PathBuf], attitude: Option<&Path>) -> Result<Vec<SequenceFrame>, CliError> {
    let poses = match attitude {
        Some(p) => {
            let rows = load_attitude_csv(p)?;
            Some(rows.into_iter().map(|r| (r.frame_id, (r.pose, r.chain))).collect::<HashMap<_, _>>())
        }
        None => None,
    };
    let mut frames = Vec::with_capacity(paths.len());
    for path in paths {
        let id = frame_id(path);
        let mut frame = SequenceFrame::new(id.clone(), load_image(path)?);
        if let Some(poses) = &poses {
            let pose = poses
                .get(&id)
                .ok_or_else(|| CliError::usage(format!("attitude sidecar has no row for frame '{id}'")))?;
            frame.attitude = Some(pose.clone());
        }
        frames.push(frame);
    }
    Ok(frames)
}

#[derive(Serialize)]
struct RegisterEntry<'a> {
    frame_a: String,
    frame_b: String,
    #[serde(flatten)]
    registration: &'a lumen::stitch::PairRegistration,
    /// Row-major transform from `frame_a` pixels into `frame_b`.
    mu_matrix: Option<[f64; 9]>,
}

/// Frame `a` on the left; on the right, `a` averaged with `b` resampled into
/// `a`'s pixel grid under `mu` (plain `a` where `b` does not reach).
fn overlay(a: &Image, b: &Image, mu: &Homography) -> Result<Image, CliError> {
    let (w, h) = a.dims();
    let (warped, mask) = warp_masked(b, None, &mu.invert()?, Extent::new(w, h), 0.0)?;
    Ok(Image::from_fn(2 * w, h, |x, y| {
        if x < w {
            a.get(x, y)
        } else {
            let x = x - w;
            if mask.get(x, y) {
                0.5 * (a.get(x, y) + warped.get(x, y))
            } else {
                a.get(x, y)
            }
        }
    })?)
}

pub fn register(
    a: &Path,
    b: &Path,
    out: &Path,
    attitude: Option<&Path>,
    dump_hist: Option<&Path>,
    overrides: &Overrides,
) -> Result<u8, CliError> {
    let cfg = RunConfig::resolve(overrides)?;
    let opts = cfg.stitch_options()?;
    let frames = load_frames(&[a.to_path_buf(), b.to_path_buf()], attitude)?;
    let pa = prepare_frame(&frames[0], opts.enhance)?;
    let pb = prepare_frame(&frames[1], opts.enhance)?;
    let reg = register_pair(&pa, &pb, &opts)?;

    create_dir(out)?;
    let entry = RegisterEntry {
        frame_a: frames[0].id.clone(),
        frame_b: frames[1].id.clone(),
        registration: &reg,
        mu_matrix: reg.mu.map(|m| m.to_array()),
    };
    let json = serde_json::to_string_pretty(&entry).map_err(|e| CliError::usage(e.to_string()))?;
    write_file(&out.join("registration.json"), json.as_bytes())?;

    let mu = reg.mu.unwrap_or_else(Homography::identity);
    save_png(&overlay(&pa.raw, &pb.raw, &mu)?, out.join("overlay.png"))?;

    if let (Some(path), Some(mu)) = (dump_hist, reg.mu) {
        let pair = PairView::new(&pa.enhanced, &pb.enhanced).with_masks(pa.mask.as_ref(), pb.mask.as_ref());
        let jh = joint_histogram(pair, &mu, &opts.schedule.histogram, DerivativeOrder::None)?;
        let mut text = String::new();
        for i in 0..jh.bins_a {
            let row: Vec<String> = (0..jh.bins_b).map(|j| format!("{:e}", jh.at(i, j))).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        write_file(path, text.as_bytes())?;
    }

    println!(
        "{} ssim={:.4} nmi={}",
        match reg.status {
            PairStatus::Registered => "registered",
            PairStatus::GateRejected => "gate-rejected",
            PairStatus::RegistrationFailed => "registration-failed",
        },
        reg.gate.ssim,
        reg.nmi.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
    );
    Ok(match reg.status {
        PairStatus::Registered => 0,
        PairStatus::GateRejected => EXIT_GATE_REJECTED,
        PairStatus::RegistrationFailed => EXIT_REGISTRATION_FAILED,
    })
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image paths from a directory (sorted by name) or a list file (one path
/// per line, relative paths resolved against the list's directory).
pub fn collect_inputs(input: &Path) -> Result<Vec<PathBuf>, CliError> {
    let meta = fs::metadata(input).map_err(|e| CliError::io(input, e))?;
    let paths = if meta.is_dir() {
        let mut v = Vec::new();
        for entry in fs::read_dir(input).map_err(|e| CliError::io(input, e))? {
            let p = entry.map_err(|e| CliError::io(input, e))?.path();
            if p.is_file() && is_image(&p) {
                v.push(p);
            }
        }
        v.sort();
        v
    } else {
        let text = fs::read_to_string(input).map_err(|e| CliError::io(input, e))?;
        let base = input.parent().unwrap_or(Path::new("."));
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect()
    };
    if paths.is_empty() {
        return Err(CliError::usage(format!("no input images in {}", input.display())));
    }
    Ok(paths)
}

pub fn stitch(
    input: &Path,
    out: &Path,
    attitude: Option<&Path>,
    include_timings: bool,
    overrides: &Overrides,
) -> Result<u8, CliError> {
    let cfg = RunConfig::resolve(overrides)?;
    let opts = cfg.stitch_options()?;
    let paths = collect_inputs(input)?;
    let frames = load_frames(&paths, attitude)?;
    info!("stitching {} frames", frames.len());
    let result = stitch_sequence(&frames, &opts)?;

    create_dir(out)?;
    for (i, seg) in result.segments.iter().enumerate() {
        let (img, _) = seg.render()?;
        save_png(&img, out.join(format!("segment_{i:03}.png")))?;
    }
    let json = result.manifest.to_json(include_timings)?;
    write_file(&out.join("manifest.json"), json.as_bytes())?;
    println!("{} frames -> {} segment(s)", frames.len(), result.segments.len());
    Ok(0)
}

pub fn eval(
    pairs: usize,
    methods: &str,
    correct_rates: bool,
    size: usize,
    out: &Path,
    overrides: &Overrides,
) -> Result<u8, CliError> {
    if pairs == 0 || size < 64 {
        return Err(CliError::usage("eval needs at least one pair and --size >= 64"));
    }
    let cfg = RunConfig::resolve(overrides)?;
    let pipelines = methods
        .split(',')
        .map(str::trim)
        .filter(|m| !m.is_empty())
        .map(|m| Pipeline::parse(m).map_err(|e| CliError::usage(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    if pipelines.is_empty() {
        return Err(CliError::usage("no methods given"));
    }
    let bench = BenchmarkConfig {
        pairs,
        synth: SynthParams {
            width: size,
            height: size,
            seed: cfg.seed,
            ..SynthParams::default()
        },
        pipelines,
        correct_rates,
        init: cfg.init_config()?,
        schedule: cfg.schedule(),
    };
    let corpus = benchmark_corpus(8, 2 * size, cfg.seed);
    let rows = benchmark(&corpus, &bench)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let file = fs::File::create(out).map_err(|e| CliError::io(out, e))?;
    write_csv(&rows, file)?;
    for r in &rows {
        println!(
            "{:<24} med={} failures={}/{}",
            r.method,
            r.med_mean.map(|m| format!("{m:.3}")).unwrap_or_else(|| "-".into()),
            r.failures,
            r.pairs
        );
    }
    Ok(0)
}

fn descriptor_kind(name: &str) -> Result<DescriptorKind, CliError> {
    match name {
        "sift" => Ok(DescriptorKind::Sift),
        "pca-sift" | "pcasift" => Ok(DescriptorKind::PcaSift),
        other => Err(CliError::usage(format!("unknown descriptor '{other}'"))),
    }
}

/// Frames go through the same contrast enhancement as in registration
/// unless `raw` is set.
fn load_for_features(path: &Path, raw: bool) -> Result<Image, CliError> {
    let img = load_image(path)?;
    Ok(if raw { img } else { enhance(&img) })
}

pub fn features_dump(
    image: &Path,
    raw: bool,
    descriptor: Option<&str>,
    basis: Option<&Path>,
    out: Option<&Path>,
) -> Result<u8, CliError> {
    let img = load_for_features(image, raw)?;
    let basis = basis.map(PcaBasis::load).transpose()?;
    let (keypoints, descriptors) = match descriptor {
        Some(name) => {
            let f = extract_features(&img, descriptor_kind(name)?, &DetectorParams::default(), basis.as_ref())?;
            (f.keypoints, Some(f.descriptors))
        }
        None => (detect_keypoints(&img)?, None),
    };

    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| CliError::io(p, e))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| CliError {
        code: crate::EXIT_IO,
        message: e.to_string(),
    };
    let mut header: Vec<String> = ["x", "y", "scale", "orientation", "response"].map(String::from).to_vec();
    if let Some(d) = descriptors.as_ref().and_then(|d| d.first()) {
        header.extend((0..d.len()).map(|i| format!("d{i}")));
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, k) in keypoints.iter().enumerate() {
        let mut rec = vec![k.x, k.y, k.scale, k.orientation, k.response];
        if let Some(d) = &descriptors {
            rec.extend_from_slice(d[i].values());
        }
        w.write_record(rec.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError {
        code: crate::EXIT_IO,
        message: e.to_string(),
    })?;
    Ok(0)
}

pub fn pca_train(images: &[PathBuf], raw: bool, out: &Path, dim: usize) -> Result<u8, CliError> {
    if dim == 0 {
        return Err(CliError::usage("--dim must be positive"));
    }
    let params = DetectorParams::default();
    let mut corpus = Vec::new();
    for path in images {
        let img = load_for_features(path, raw)?;
        let space = ScaleSpace::build(&img, &params)?;
        corpus.extend(space.detect(&params).iter().filter_map(|kp| extract_patch(&space, kp).ok()));
    }
    let basis = match train_pca_basis(&corpus, dim) {
        Ok(b) => b,
        Err(e @ lumen::Error::CorpusTooSmall { .. }) => return Err(CliError::usage(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    basis.save(out)?;
    println!(
        "{} patches, d={}, explained variance {:.3}",
        corpus.len(),
        dim,
        basis.explained_variance(&corpus)
    );
    Ok(0)
}
