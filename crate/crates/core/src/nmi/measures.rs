//! Entropies, mutual information and normalized mutual information, with
//! analytic first and second derivatives in the transform parameters.

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::homography::Homography;

use super::histogram::{
    joint_histogram, pair_index, DerivativeOrder, HistogramConfig, JointHistogram, PairView, N_PAIRS,
    N_PARAMS,
};

pub type ParamVector = SVector<f64, N_PARAMS>;
pub type ParamMatrix = SMatrix<f64, N_PARAMS, N_PARAMS>;

const LN2: f64 = std::f64::consts::LN_2;

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

/// Marginal entropies `(H_a, H_b)` in bits.
pub fn marginal_entropies(jh: &JointHistogram) -> (f64, f64) {
    (
        -jh.p_a.iter().map(|&p| plogp(p)).sum::<f64>(),
        -jh.p_b.iter().map(|&p| plogp(p)).sum::<f64>(),
    )
}

/// Joint entropy in bits; empty cells contribute nothing.
pub fn joint_entropy(jh: &JointHistogram) -> f64 {
    -jh.p.iter().map(|&p| plogp(p)).sum::<f64>()
}

/// Mutual information in bits.
pub fn mutual_information(jh: &JointHistogram) -> f64 {
    let mut mi = 0.0;
    for a in 0..jh.bins_a {
        let pa = jh.p_a[a];
        if pa <= 0.0 {
            continue;
        }
        for b in 0..jh.bins_b {
            let p = jh.at(a, b);
            if p > 0.0 {
                mi += p * (p / (pa * jh.p_b[b])).log2();
            }
        }
    }
    mi.max(0.0)
}

/// `1 + MI / E`.
pub fn nmi(jh: &JointHistogram) -> Result<f64> {
    let e = joint_entropy(jh);
    if e <= 1e-12 {
        return Err(Error::DegenerateEntropy);
    }
    Ok(1.0 + mutual_information(jh) / e)
}

/// NMI of a pair under `mu`, together with its gradient and Hessian with
/// respect to the eight raw parameters.
#[derive(Debug, Clone)]
pub struct NmiEvaluation {
    pub value: f64,
    pub mutual_information: f64,
    pub joint_entropy: f64,
    pub gradient: ParamVector,
    pub hessian: ParamMatrix,
    pub sample_count: usize,
}

/// NMI value only (no derivatives).
pub fn nmi_value(pair: PairView<'_>, mu: &Homography, cfg: &HistogramConfig) -> Result<f64> {
    nmi(&joint_histogram(pair, mu, cfg, DerivativeOrder::None)?)
}

pub fn nmi_gradient(pair: PairView<'_>, mu: &Homography, cfg: &HistogramConfig) -> Result<ParamVector> {
    let jh = joint_histogram(pair, mu, cfg, DerivativeOrder::First)?;
    Ok(derivatives_from_histogram(&jh)?.gradient)
}

pub fn nmi_hessian(pair: PairView<'_>, mu: &Homography, cfg: &HistogramConfig) -> Result<ParamMatrix> {
    Ok(evaluate(pair, mu, cfg)?.hessian)
}

pub fn evaluate(pair: PairView<'_>, mu: &Homography, cfg: &HistogramConfig) -> Result<NmiEvaluation> {
    let jh = joint_histogram(pair, mu, cfg, DerivativeOrder::Second)?;
    derivatives_from_histogram(&jh)
}

/// Assembles value, gradient and Hessian from a histogram carrying
/// `dp/dmu` (and optionally `d2p/dmu2`).
///
/// With `H(q) = -sum q log2 q` and `sum dq = sum d2q = 0`:
/// `dH = -sum dq log2 q` and
/// `d2H = -sum d2q log2 q - sum dq dq^T / (q ln 2)`.
/// The fixed marginal does not move, so `dMI = dH_b - dE`. The quotient
/// rule on `1 + MI/E` is applied in full. Without second-order histogram
/// terms the `d2q` sums are dropped and the Hessian is left at zero
/// (only the gradient is meaningful).
pub fn derivatives_from_histogram(jh: &JointHistogram) -> Result<NmiEvaluation> {
    let dp = jh
        .dp
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("histogram built without derivatives".into()))?;
    let d2p = jh.d2p.as_deref();
    let e = joint_entropy(jh);
    if e <= 1e-12 {
        return Err(Error::DegenerateEntropy);
    }
    let mi = mutual_information(jh);
    let (bins_a, bins_b) = (jh.bins_a, jh.bins_b);

    let mut d_e = ParamVector::zeros();
    let mut s_ab = ParamMatrix::zeros();
    let mut t_ab = [0.0; N_PAIRS];
    let mut dpb = vec![ParamVector::zeros(); bins_b];
    let mut d2pb = vec![[0.0; N_PAIRS]; if d2p.is_some() { bins_b } else { 0 }];
    for a in 0..bins_a {
        for b in 0..bins_b {
            let c = a * bins_b + b;
            let p = jh.p[c];
            let d = ParamVector::from_column_slice(&dp[c * N_PARAMS..(c + 1) * N_PARAMS]);
            dpb[b] += d;
            if let Some(d2) = d2p {
                let cell = &d2[c * N_PAIRS..(c + 1) * N_PAIRS];
                for (acc, v) in d2pb[b].iter_mut().zip(cell) {
                    *acc += v;
                }
                if p > 0.0 {
                    let lp = p.log2();
                    for (acc, v) in t_ab.iter_mut().zip(cell) {
                        *acc += v * lp;
                    }
                }
            }
            if p <= 0.0 {
                continue;
            }
            d_e -= d * p.log2();
            if d2p.is_some() {
                s_ab += d * d.transpose() / p;
            }
        }
    }
    let mut d_hb = ParamVector::zeros();
    let mut s_b = ParamMatrix::zeros();
    let mut t_b = [0.0; N_PAIRS];
    for b in 0..bins_b {
        let pb = jh.p_b[b];
        if pb <= 0.0 {
            continue;
        }
        let lp = pb.log2();
        d_hb -= dpb[b] * lp;
        if d2p.is_some() {
            s_b += dpb[b] * dpb[b].transpose() / pb;
            for (acc, v) in t_b.iter_mut().zip(&d2pb[b]) {
                *acc += v * lp;
            }
        }
    }
    let d_mi = d_hb - d_e;
    let e2 = e * e;
    let gradient = (d_mi * e - d_e * mi) / e2;

    let mut hessian = ParamMatrix::zeros();
    if d2p.is_some() {
        let unpack = |t: &[f64; N_PAIRS]| {
            ParamMatrix::from_fn(|k, l| t[pair_index(k.min(l), k.max(l))])
        };
        let dd_e = -unpack(&t_ab) - s_ab / LN2;
        let dd_hb = -unpack(&t_b) - s_b / LN2;
        let dd_mi = dd_hb - dd_e;
        hessian = dd_mi / e
            - (d_mi * d_e.transpose() + d_e * d_mi.transpose()) / e2
            - dd_e * (mi / e2)
            + d_e * d_e.transpose() * (2.0 * mi / (e2 * e));
        hessian = (hessian + hessian.transpose()) * 0.5;
    }

    Ok(NmiEvaluation {
        value: 1.0 + mi / e,
        mutual_information: mi,
        joint_entropy: e,
        gradient,
        hessian,
        sample_count: jh.sample_count,
    })
}
