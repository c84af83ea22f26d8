//! Normalized mutual information between a fixed and a transformed moving
//! image, estimated with cubic B-spline Parzen windows.

pub mod bspline;
pub mod histogram;
pub mod measures;

pub use bspline::{bspline, bspline_derivative};
pub use histogram::{
    joint_histogram, pair_index, point_jacobian, DerivativeOrder, HistogramConfig, JointHistogram, PairView, MIN_OVERLAP,
    N_PAIRS, N_PARAMS,
};
pub use measures::{
    derivatives_from_histogram, evaluate, joint_entropy, marginal_entropies, mutual_information,
    nmi, nmi_gradient, nmi_hessian, nmi_value, NmiEvaluation, ParamMatrix, ParamVector,
};
