use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::descriptor::Descriptor;

pub const DEFAULT_RATIO: f64 = 0.80;

/// Candidate correspondence between descriptor `index_a` of the first set
/// and `index_b` of the second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    /// Distance to the nearest neighbour.
    pub d1: f64,
    /// Distance to the second-nearest neighbour.
    pub d2: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Matches with `d1 / d2` above this are ambiguous and dropped.
    pub ratio_threshold: f64,
    /// Keep only pairs that are each other's nearest neighbour.
    pub mutual: bool,
    /// Accept matches against a one-element second set (no ratio test).
    pub accept_singletons: bool,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ratio_threshold: DEFAULT_RATIO,
            mutual: true,
            accept_singletons: false,
        }
    }
}

/// Nearest and second-nearest squared distances and the nearest index.
fn two_nearest(q: &Descriptor, set: &[Descriptor]) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
    for (j, c) in set.iter().enumerate() {
        let d = q.distance_sq(c);
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = j;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], ratio_threshold: f64) -> Result<Vec<Match>> {
    match_descriptors_with(
        a,
        b,
        &MatchParams {
            ratio_threshold,
            ..MatchParams::default()
        },
    )
}

/// Ratio-tested nearest neighbours from `a` into `b`, optionally reduced
/// to mutual best pairs.
pub fn match_descriptors_with(a: &[Descriptor], b: &[Descriptor], params: &MatchParams) -> Result<Vec<Match>> {
    if a.is_empty() {
        return Err(Error::TooFewDescriptors(0));
    }
    if b.len() < 2 && !(params.accept_singletons && b.len() == 1) {
        return Err(Error::TooFewDescriptors(b.len()));
    }
    let back: Vec<usize> = if params.mutual {
        b.iter().map(|q| two_nearest(q, a).0).collect()
    } else {
        Vec::new()
    };
    let mut out = Vec::new();
    for (i, q) in a.iter().enumerate() {
        let (j, s1, s2) = two_nearest(q, b);
        let (d1, d2) = (s1.sqrt(), s2.sqrt());
        let ratio = if b.len() == 1 {
            0.0
        } else if d2 > 0.0 {
            d1 / d2
        } else {
            // Two exact duplicates: fully ambiguous.
            1.0
        };
        if ratio > params.ratio_threshold {
            continue;
        }
        if params.mutual && back[j] != i {
            continue;
        }
        out.push(Match {
            index_a: i,
            index_b: j,
            d1,
            d2: if d2.is_finite() { d2 } else { d1 },
            ratio,
        });
    }
    Ok(out)
}
