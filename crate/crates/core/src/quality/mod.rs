//! Pre-registration enhancement and the structural-similarity gate that
//! decides whether two consecutive frames are similar enough to register.

mod enhance;
mod ssim;

pub use enhance::{enhance, ClaheSharpen, Enhancer, NoEnhancement};
pub use ssim::{gate, ssim, GateDecision, SsimParams, DEFAULT_GATE_THRESHOLD};
