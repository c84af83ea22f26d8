//! Frame-by-frame pipeline: gate, feature seed, NMI refinement and map
//! accumulation, splitting into segments whenever a pair is rejected.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::homography::Homography;
use crate::image::{Image, Mask};
use crate::optimizer::{multiscale_register_masked, LevelReport, LevelSchedule};
use crate::quality::{gate, ClaheSharpen, Enhancer, GateDecision, NoEnhancement, DEFAULT_GATE_THRESHOLD};
use crate::rectify::{rectify_image, AttitudePose, CameraFrameChain};
use crate::robust::{initial_transform, InitConfig};

use super::map::{StitchMap, DEFAULT_MAX_DIM};
use super::seam::BlendReport;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct StitchOptions {
    pub gate_threshold: f64,
    /// Contrast enhancement before feature extraction and NMI.
    pub enhance: bool,
    pub init: InitConfig,
    pub schedule: LevelSchedule,
    /// Start the NMI search at the identity when the feature seed fails.
    pub identity_fallback: bool,
    pub max_canvas: usize,
}

impl Default for StitchOptions {
    fn default() -> Self {
        Self {
            gate_threshold: DEFAULT_GATE_THRESHOLD,
            enhance: true,
            init: InitConfig::default(),
            schedule: LevelSchedule::default(),
            identity_fallback: true,
            max_canvas: DEFAULT_MAX_DIM,
        }
    }
}

/// One input frame with optional attitude for rectification.
#[derive(Debug, Clone)]
pub struct SequenceFrame {
    pub id: String,
    pub image: Image,
    pub attitude: Option<(AttitudePose, CameraFrameChain)>,
}

impl SequenceFrame {
    pub fn new(id: impl Into<String>, image: Image) -> Self {
        Self {
            id: id.into(),
            image,
            attitude: None,
        }
    }
}

/// A frame after rectification and enhancement.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    /// Rectified intensities; these go on the map and into the gate.
    pub raw: Image,
    /// Enhanced intensities used for registration.
    pub enhanced: Image,
    pub mask: Option<Mask>,
}

pub fn prepare_frame(frame: &SequenceFrame, enhance: bool) -> Result<PreparedFrame> {
    let (raw, mask) = match &frame.attitude {
        Some((pose, chain)) => {
            let (img, mask) = rectify_image(&frame.image, pose, chain)?;
            (img, Some(mask))
        }
        None => (frame.image.clone(), None),
    };
    let enhanced = if enhance {
        ClaheSharpen::default().enhance(&raw)
    } else {
        NoEnhancement.enhance(&raw)
    };
    Ok(PreparedFrame { raw, enhanced, mask })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairStatus {
    Registered,
    GateRejected,
    RegistrationFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitRecord {
    pub inliers: usize,
    /// The feature seed failed and the search started at the identity.
    pub fallback: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct Timings {
    pub init_ms: f64,
    pub refine_ms: f64,
    pub blend_ms: f64,
}

/// Result of registering one consecutive pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRegistration {
    pub status: PairStatus,
    pub gate: GateDecision,
    pub init: Option<InitRecord>,
    /// Maps the first frame's pixels into the second frame.
    pub mu: Option<Homography>,
    pub nmi: Option<f64>,
    pub iterations: Option<usize>,
    pub levels: Vec<LevelReport>,
    #[serde(skip)]
    pub timings: Timings,
}

/// Gate, seed and refine one pair of prepared frames.
pub fn register_pair(prev: &PreparedFrame, cur: &PreparedFrame, opts: &StitchOptions) -> Result<PairRegistration> {
    let decision = gate(&prev.raw, &cur.raw, opts.gate_threshold)?;
    let mut out = PairRegistration {
        status: PairStatus::GateRejected,
        gate: decision,
        init: None,
        mu: None,
        nmi: None,
        iterations: None,
        levels: Vec::new(),
        timings: Timings::default(),
    };
    if !decision.admitted {
        return Ok(out);
    }
    let t = Instant::now();
    let mut init_cfg = opts.init.clone();
    init_cfg.robust.width = prev.enhanced.width();
    init_cfg.robust.height = prev.enhanced.height();
    let seed = initial_transform(&prev.enhanced, &cur.enhanced, &init_cfg);
    out.timings.init_ms = t.elapsed().as_secs_f64() * 1e3;
    let start = match seed {
        Ok((mu, res)) => {
            out.init = Some(InitRecord {
                inliers: res.inliers.len(),
                fallback: false,
                error: None,
            });
            mu
        }
        Err(e) => {
            out.init = Some(InitRecord {
                inliers: 0,
                fallback: opts.identity_fallback,
                error: Some(e.to_string()),
            });
            if !opts.identity_fallback {
                out.status = PairStatus::RegistrationFailed;
                return Ok(out);
            }
            Homography::identity()
        }
    };
    let t = Instant::now();
    let refined = multiscale_register_masked(
        &prev.enhanced,
        prev.mask.as_ref(),
        &cur.enhanced,
        cur.mask.as_ref(),
        &start,
        &opts.schedule,
    );
    out.timings.refine_ms = t.elapsed().as_secs_f64() * 1e3;
    match refined {
        Ok((mu, report)) if !report.failed => {
            out.status = PairStatus::Registered;
            out.mu = Some(mu);
            out.nmi = report.final_nmi;
            out.iterations = Some(report.total_iterations());
            out.levels = report.levels;
        }
        Ok((_, report)) => {
            out.status = PairStatus::RegistrationFailed;
            out.levels = report.levels;
        }
        Err(_) => out.status = PairStatus::RegistrationFailed,
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub index: usize,
    pub frame_id: String,
    pub segment: usize,
    /// Absent for the first frame of the sequence.
    pub pair: Option<PairRegistration>,
    /// Row-major pairwise transform (previous frame into this one).
    pub pairwise_mu: Option<[f64; 9]>,
    /// Row-major map from this frame into its segment's global frame.
    pub global_mu: [f64; 9],
    pub blend: Option<BlendReport>,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentRecord {
    pub index: usize,
    pub first_frame: usize,
    pub last_frame: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Global coordinates of the rendered map's top-left pixel.
    pub origin: (i64, i64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub seed: u64,
    pub gate_threshold: f64,
    pub outlier_method: String,
    pub bins: usize,
    pub max_iters: usize,
    pub tolerance: f64,
    pub frames: Vec<FrameRecord>,
    pub segments: Vec<SegmentRecord>,
}

impl Manifest {
    /// JSON with the timing fields zeroed, for reproducibility checks.
    pub fn to_json(&self, include_timings: bool) -> Result<String> {
        let mut m = self.clone();
        if !include_timings {
            for f in &mut m.frames {
                f.timings = Timings::default();
            }
        }
        serde_json::to_string_pretty(&m).map_err(|e| Error::InvalidArgument(format!("manifest: {e}")))
    }
}

pub struct StitchOutput {
    pub segments: Vec<StitchMap>,
    pub manifest: Manifest,
}

fn segment_record(index: usize, map: &StitchMap, first: usize, last: usize) -> SegmentRecord {
    let (width, height) = map.covered_bounds().map(|(_, _, w, h)| (w, h)).unwrap_or((0, 0));
    SegmentRecord {
        index,
        first_frame: first,
        last_frame: last,
        frames: last - first + 1,
        width,
        height,
        origin: map.render_origin().unwrap_or((0, 0)),
    }
}

/// Registers consecutive frames and accumulates them into map segments.
pub fn stitch_sequence(frames: &[SequenceFrame], opts: &StitchOptions) -> Result<StitchOutput> {
    if frames.is_empty() {
        return Err(Error::InvalidArgument("no frames to stitch".into()));
    }
    let mut manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: opts.init.robust.seed,
        gate_threshold: opts.gate_threshold,
        outlier_method: opts.init.method.name().to_string(),
        bins: opts.schedule.histogram.bins_b,
        max_iters: opts.schedule.max_iter_per_level,
        tolerance: opts.schedule.convergence_tol,
        frames: Vec::with_capacity(frames.len()),
        segments: Vec::new(),
    };
    let mut segments = Vec::new();

    let mut prev = prepare_frame(&frames[0], opts.enhance)?;
    let mut map = StitchMap::new(&frames[0].id, &prev.raw, prev.mask.as_ref(), opts.max_canvas)?;
    let mut first = 0;
    manifest.frames.push(FrameRecord {
        index: 0,
        frame_id: frames[0].id.clone(),
        segment: 0,
        pair: None,
        pairwise_mu: None,
        global_mu: Homography::identity().to_array(),
        blend: None,
        timings: Timings::default(),
    });

    for (k, frame) in frames.iter().enumerate().skip(1) {
        let cur = prepare_frame(frame, opts.enhance)?;
        let pair = register_pair(&prev, &cur, opts)?;
        let mut timings = pair.timings;
        let placed = match pair.mu {
            Some(mu) => {
                let global = map
                    .last_global()
                    .copied()
                    .unwrap_or_else(Homography::identity)
                    .compose(&mu.invert()?)?;
                let t = Instant::now();
                match map.accumulate(&frame.id, &cur.raw, cur.mask.as_ref(), &global) {
                    Ok(report) => {
                        timings.blend_ms = t.elapsed().as_secs_f64() * 1e3;
                        Some((global, report))
                    }
                    Err(Error::MapTooLarge(..)) => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        };
        let (global, blend) = match placed {
            Some((g, report)) => (g, report),
            None => {
                manifest.segments.push(segment_record(segments.len(), &map, first, k - 1));
                let fresh = StitchMap::new(&frame.id, &cur.raw, cur.mask.as_ref(), opts.max_canvas)?;
                segments.push(std::mem::replace(&mut map, fresh));
                first = k;
                (Homography::identity(), None)
            }
        };
        manifest.frames.push(FrameRecord {
            index: k,
            frame_id: frame.id.clone(),
            segment: segments.len(),
            pairwise_mu: pair.mu.map(|m| m.to_array()),
            pair: Some(pair),
            global_mu: global.to_array(),
            blend,
            timings,
        });
        prev = cur;
    }
    manifest
        .segments
        .push(segment_record(segments.len(), &map, first, frames.len() - 1));
    segments.push(map);
    Ok(StitchOutput { segments, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{med, noise_image, synth_strip, StripParams};

    fn strip(n: usize) -> (Vec<SequenceFrame>, Vec<Homography>) {
        let seq = synth_strip(&StripParams {
            frames: n,
            size: 128,
            seed: 4,
            ..StripParams::default()
        })
        .unwrap();
        let frames = seq
            .frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| SequenceFrame::new(format!("f{i}"), f))
            .collect();
        (frames, seq.globals)
    }

    #[test]
    fn single_frame_is_one_segment() {
        let (frames, _) = strip(1);
        let out = stitch_sequence(&frames, &StitchOptions::default()).unwrap();
        assert_eq!(out.segments.len(), 1);
        assert_eq!(out.segments[0].render().unwrap().0, frames[0].image);
    }

    #[test]
    fn dissimilar_frame_splits_the_sequence() {
        let (mut frames, _) = strip(5);
        frames[2] = SequenceFrame::new("noise", noise_image(128, 128, 3));
        let out = stitch_sequence(&frames, &StitchOptions::default()).unwrap();
        // Rejected entering and leaving the noise frame.
        let rejected = out
            .manifest
            .frames
            .iter()
            .filter(|f| matches!(&f.pair, Some(p) if p.status != PairStatus::Registered))
            .count();
        assert_eq!(rejected, 2);
        assert_eq!(out.segments.len(), 1 + rejected);
        assert_eq!(out.manifest.segments.len(), out.segments.len());
    }

    #[test]
    fn strip_tracks_ground_truth() {
        let (frames, truth) = strip(4);
        let out = stitch_sequence(&frames, &StitchOptions::default()).unwrap();
        assert_eq!(out.segments.len(), 1);
        for (rec, gt) in out.manifest.frames.iter().zip(&truth) {
            let est = Homography::from_array(&rec.global_mu).unwrap();
            let e = med(&est, gt, 128, 128);
            assert!(e < 0.5, "frame {}: {e}", rec.index);
        }
        let json = out.manifest.to_json(false).unwrap();
        assert!(json.contains("\"schema_version\": 1"));
        let again = stitch_sequence(&frames, &StitchOptions::default()).unwrap();
        assert_eq!(json, again.manifest.to_json(false).unwrap());
    }
}
