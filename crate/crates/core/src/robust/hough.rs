//! Similarity-pose voting over matched keypoints.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::features::Match;

use super::{PointFeature, RobustConfig};

const ROTATION_BIN: f64 = 15.0 * std::f64::consts::PI / 180.0;
const ROTATION_BINS: i64 = 24;
/// Scale bins are a factor sqrt(2) wide: half a unit of log2.
const LOG_SCALE_BIN: f64 = 0.5;

/// Continuous bin coordinates of the similarity taking `fa` onto `fb`.
fn pose(fa: &PointFeature, fb: &PointFeature, cfg: &RobustConfig) -> Option<[f64; 4]> {
    if fa.scale <= 0.0 || fb.scale <= 0.0 {
        return None;
    }
    let s = fb.scale / fa.scale;
    let rot = (fb.orientation - fa.orientation).rem_euclid(TAU);
    let (sn, cs) = rot.sin_cos();
    let tx = fb.pos.x - s * (cs * fa.pos.x - sn * fa.pos.y);
    let ty = fb.pos.y - s * (sn * fa.pos.x + cs * fa.pos.y);
    let bx = (cfg.width as f64 / 8.0).max(1.0);
    let by = (cfg.height as f64 / 8.0).max(1.0);
    Some([tx / bx, ty / by, rot / ROTATION_BIN, s.log2() / LOG_SCALE_BIN])
}

/// Indices (into `matches`) of the matches voting for the most popular
/// similarity bin. Each match votes for the two nearest bins along every
/// axis; ties go to the smallest bin key.
pub(super) fn densest_bin(
    matches: &[Match],
    a: &[PointFeature],
    b: &[PointFeature],
    cfg: &RobustConfig,
) -> Vec<usize> {
    let mut votes: BTreeMap<[i64; 4], Vec<usize>> = BTreeMap::new();
    for (i, m) in matches.iter().enumerate() {
        let Some(c) = pose(&a[m.index_a], &b[m.index_b], cfg) else {
            continue;
        };
        let lo: Vec<i64> = c.iter().map(|v| (v - 0.5).floor() as i64).collect();
        for corner in 0..16 {
            let mut key = [0i64; 4];
            for (d, k) in key.iter_mut().enumerate() {
                *k = lo[d] + ((corner >> d) & 1) as i64;
            }
            key[2] = key[2].rem_euclid(ROTATION_BINS);
            let list = votes.entry(key).or_default();
            // Rotation wrap can fold two corners onto one bin.
            if list.last() != Some(&i) {
                list.push(i);
            }
        }
    }
    let mut best: Vec<usize> = Vec::new();
    for list in votes.into_values() {
        if list.len() > best.len() {
            best = list;
        }
    }
    best
}
