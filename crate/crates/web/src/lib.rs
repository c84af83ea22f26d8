//! WebAssembly bindings for a single-page demo. Images cross the boundary
//! as encoded PNG or JPEG bytes and come back as PNG bytes.

use std::io::Cursor;

use lumen::image::decode_image;
use lumen::optimizer::{multiscale_register, LevelSchedule};
use lumen::quality::{enhance, gate};
use lumen::robust::{initial_transform, InitConfig};
use lumen::warp::{warp, Extent};
use lumen::{Homography, Image};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Frames are halved until their longer side fits, to keep the page responsive.
pub const MAX_SIDE: usize = 320;

fn shrink(mut img: Image) -> Image {
    while img.width().max(img.height()) > MAX_SIDE {
        img = img.gaussian_blur(1.0).decimate();
    }
    img
}

fn load(bytes: &[u8]) -> Result<Image, String> {
    decode_image(bytes).map(shrink).map_err(|e| e.to_string())
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>, String> {
    let mut out = Cursor::new(Vec::new());
    img.to_luma8()
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| e.to_string())?;
    Ok(out.into_inner())
}

#[derive(Debug, Serialize)]
pub struct GateReport {
    pub ssim: f64,
    pub admitted: bool,
    pub threshold: f64,
}

pub fn gate_report(a: &[u8], b: &[u8], threshold: f64) -> Result<GateReport, String> {
    let (a, b) = (load(a)?, load(b)?);
    let d = gate(&a, &b, threshold).map_err(|e| e.to_string())?;
    Ok(GateReport {
        ssim: d.ssim,
        admitted: d.admitted,
        threshold: d.threshold,
    })
}

#[derive(Debug, Serialize)]
pub struct PairReport {
    pub status: &'static str,
    pub ssim: f64,
    pub feature_inliers: Option<usize>,
    pub nmi: Option<f64>,
    pub iterations: usize,
    /// Row-major map from the first frame's pixels into the second's.
    pub mu: Option<[f64; 9]>,
    #[serde(skip)]
    pub overlay: Vec<u8>,
}

/// `a` averaged with `b` resampled into `a`'s grid.
fn overlay(a: &Image, b: &Image, mu: &Homography) -> Result<Image, String> {
    let inv = mu.invert().map_err(|e| e.to_string())?;
    let (wb, mask) = warp(b, &inv, Extent::of(a), 0.0).map_err(|e| e.to_string())?;
    Image::from_fn(a.width(), a.height(), |x, y| {
        if mask.get(x, y) {
            0.5 * (a.get(x, y) + wb.get(x, y))
        } else {
            a.get(x, y)
        }
    })
    .map_err(|e| e.to_string())
}

/// Gate, feature seed and NMI refinement on one pair.
pub fn register_report(a: &[u8], b: &[u8], threshold: f64) -> Result<PairReport, String> {
    let (a, b) = (load(a)?, load(b)?);
    if a.dims() != b.dims() {
        return Err(format!("frames differ in size: {:?} vs {:?}", a.dims(), b.dims()));
    }
    let d = gate(&a, &b, threshold).map_err(|e| e.to_string())?;
    let mut report = PairReport {
        status: "gate-rejected",
        ssim: d.ssim,
        feature_inliers: None,
        nmi: None,
        iterations: 0,
        mu: None,
        overlay: Vec::new(),
    };
    if d.admitted {
        let (ea, eb) = (enhance(&a), enhance(&b));
        let seed = match initial_transform(&ea, &eb, &InitConfig::default()) {
            Ok((mu, res)) => {
                report.feature_inliers = Some(res.inliers.len());
                mu
            }
            Err(_) => Homography::identity(),
        };
        match multiscale_register(&ea, &eb, &seed, &LevelSchedule::default()) {
            Ok((mu, rep)) if !rep.failed => {
                report.status = "registered";
                report.nmi = rep.final_nmi;
                report.iterations = rep.total_iterations();
                report.mu = Some(mu.to_array());
            }
            _ => report.status = "registration-failed",
        }
    }
    let mu = report.mu.map(|m| Homography::from_array(&m)).transpose().map_err(|e| e.to_string())?;
    report.overlay = encode_png(&overlay(&a, &b, &mu.unwrap_or_else(Homography::identity))?)?;
    Ok(report)
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

/// SSIM gate decision as JSON.
#[wasm_bindgen(js_name = gatePair)]
pub fn gate_pair(a: &[u8], b: &[u8], threshold: f64) -> Result<String, JsError> {
    let r = gate_report(a, b, threshold).map_err(js)?;
    serde_json::to_string(&r).map_err(|e| JsError::new(&e.to_string()))
}

/// Contrast-enhanced frame as PNG bytes.
#[wasm_bindgen(js_name = enhanceImage)]
pub fn enhance_image(bytes: &[u8]) -> Result<Vec<u8>, JsError> {
    let img = load(bytes).map_err(js)?;
    encode_png(&enhance(&img)).map_err(js)
}

#[wasm_bindgen]
pub struct Registration {
    summary: String,
    overlay: Vec<u8>,
}

#[wasm_bindgen]
impl Registration {
    /// JSON summary: status, SSIM, inliers, NMI, iterations and transform.
    #[wasm_bindgen(getter)]
    pub fn summary(&self) -> String {
        self.summary.clone()
    }

    /// Overlay of the registered pair as PNG bytes.
    #[wasm_bindgen(getter)]
    pub fn overlay(&self) -> Vec<u8> {
        self.overlay.clone()
    }
}

#[wasm_bindgen(js_name = registerPair)]
pub fn register_pair(a: &[u8], b: &[u8], threshold: f64) -> Result<Registration, JsError> {
    let r = register_report(a, b, threshold).map_err(js)?;
    let summary = serde_json::to_string_pretty(&r).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(Registration {
        summary,
        overlay: r.overlay,
    })
}
