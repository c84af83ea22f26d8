use std::io::{Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::Image;

use super::descriptor::Descriptor;
use super::detect::{DetectorParams, Keypoint, ScaleSpace};

/// Gradient samples per patch side.
pub const PATCH_SIDE: usize = 39;
/// Length of a gradient patch: x and y derivatives at 39 x 39 sites.
pub const PATCH_DIM: usize = 2 * PATCH_SIDE * PATCH_SIDE;
pub const DEFAULT_PCA_DIM: usize = 36;
const MAGIC: &[u8; 8] = b"LUMNPCA1";
/// Patch half-width in units of the keypoint scale.
const PATCH_EXTENT: f64 = 6.0;
const SUBSPACE_ITERS: usize = 12;
const OVERSAMPLE: usize = 8;

/// Mean patch and orthonormal projection rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    mean: Vec<f64>,
    /// `dim` rows of length `patch_dim`, row-major.
    rows: Vec<f64>,
    dim: usize,
}

impl PcaBasis {
    pub fn new(mean: Vec<f64>, rows: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || mean.is_empty() || rows.len() != dim * mean.len() {
            return Err(Error::BasisFormat(format!(
                "{} row values for {} x {}",
                rows.len(),
                dim,
                mean.len()
            )));
        }
        Ok(Self { mean, rows, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn patch_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.patch_dim();
        &self.rows[i * p..(i + 1) * p]
    }

    /// Coordinates of `v - mean` along each row.
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(r, (x, m))| r * (x - m))
                    .sum()
            })
            .collect()
    }

    /// Fraction of the corpus variance captured by the rows.
    pub fn explained_variance(&self, corpus: &[Vec<f64>]) -> f64 {
        let (mut kept, mut total) = (0.0, 0.0);
        for v in corpus {
            total += v.iter().zip(&self.mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>();
            kept += self.project(v).iter().map(|c| c * c).sum::<f64>();
        }
        if total > 0.0 {
            kept / total
        } else {
            1.0
        }
    }

    /// Binary layout: 8-byte magic `LUMNPCA1`, `dim` and `patch_dim` as
    /// little-endian u32, then the mean and the row-major basis as
    /// little-endian f64.
    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.patch_dim() as u32).to_le_bytes())?;
        for v in self.mean.iter().chain(&self.rows) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let fmt = |e: std::io::Error| Error::BasisFormat(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != MAGIC {
            return Err(Error::BasisFormat("bad magic".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(fmt)?;
        let dim = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word).map_err(fmt)?;
        let patch_dim = u32::from_le_bytes(word) as usize;
        if dim == 0 || patch_dim == 0 || dim > patch_dim {
            return Err(Error::BasisFormat(format!("bad header {dim} x {patch_dim}")));
        }
        let mut values = vec![0.0; patch_dim * (dim + 1)];
        let mut buf = [0u8; 8];
        for v in values.iter_mut() {
            r.read_exact(&mut buf).map_err(fmt)?;
            *v = f64::from_le_bytes(buf);
        }
        let rows = values.split_off(patch_dim);
        Self::new(values, rows, dim)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_to(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::read_from(bytes.as_slice())
    }

    /// Basis shipped with the crate, trained on gradient patches of
    /// enhanced synthetic mucosa frames.
    pub fn builtin() -> &'static PcaBasis {
        static BASIS: OnceLock<PcaBasis> = OnceLock::new();
        BASIS.get_or_init(|| {
            PcaBasis::read_from(&include_bytes!("../../assets/pca_basis.bin")[..])
                .expect("bundled basis is well formed")
        })
    }
}

/// Top-`d` principal directions of `corpus` by subspace iteration.
pub fn train_pca_basis(corpus: &[Vec<f64>], d: usize) -> Result<PcaBasis> {
    let need = 10 * d.max(1);
    if corpus.len() < need {
        return Err(Error::CorpusTooSmall {
            got: corpus.len(),
            need,
        });
    }
    let p = corpus[0].len();
    if p == 0 || corpus.iter().any(|v| v.len() != p) {
        return Err(Error::InvalidArgument("corpus vectors differ in length".into()));
    }
    if d > p {
        return Err(Error::RankDeficient(d));
    }
    let n = corpus.len();
    let mut mean = vec![0.0; p];
    for v in corpus {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let x = DMatrix::from_fn(n, p, |i, j| corpus[i][j] - mean[j]);

    let k = (d + OVERSAMPLE).min(p).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut q = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(&mut rng));
    q = q.qr().q();
    for _ in 0..SUBSPACE_ITERS {
        let z = &x * &q;
        q = (x.transpose() * z).qr().q();
    }
    let b = &x * &q;
    let small = b.transpose() * b;
    let eig = SymmetricEigen::new(small);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let floor = 1e-12 * top.max(1e-300);
    if eig.eigenvalues[order[d - 1]] <= floor {
        return Err(Error::RankDeficient(d));
    }
    let mut rows = Vec::with_capacity(d * p);
    for &c in order.iter().take(d) {
        let dir = &q * eig.eigenvectors.column(c);
        let norm = dir.norm();
        rows.extend(dir.iter().map(|v| v / norm));
    }
    PcaBasis::new(mean, rows, d)
}

/// Oriented gradient patch around `kp`, normalized to unit length.
pub fn extract_patch(space: &ScaleSpace, kp: &Keypoint) -> Result<Vec<f64>> {
    let img = space.level_image(kp);
    let f = (1usize << kp.octave) as f64;
    let (cx, cy) = (kp.x / f, kp.y / f);
    let sigma = kp.octave_scale(space.sigma, space.intervals);
    let side = PATCH_SIDE + 2;
    let half = (side / 2) as f64;
    let step = PATCH_EXTENT * sigma / half;
    let (sin, cos) = kp.orientation.sin_cos();
    let mut samples = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let (u, v) = ((c as f64 - half) * step, (r as f64 - half) * step);
            let x = cx + cos * u - sin * v;
            let y = cy + sin * u + cos * v;
            samples[r * side + c] = img.sample(x, y).ok_or(Error::SupportOutsideImage)?;
        }
    }
    let mut out = Vec::with_capacity(PATCH_DIM);
    for r in 1..side - 1 {
        for c in 1..side - 1 {
            out.push(samples[r * side + c + 1] - samples[r * side + c - 1]);
            out.push(samples[(r + 1) * side + c] - samples[(r - 1) * side + c]);
        }
    }
    let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n <= 1e-12 {
        return Err(Error::DegenerateDescriptor);
    }
    out.iter_mut().for_each(|v| *v /= n);
    Ok(out)
}

/// Projects the keypoint's gradient patch onto `basis`.
pub fn describe_pca_sift_in(space: &ScaleSpace, kp: &Keypoint, basis: &PcaBasis) -> Result<Descriptor> {
    if basis.patch_dim() != PATCH_DIM {
        return Err(Error::BasisFormat(format!(
            "basis patch length {} != {PATCH_DIM}",
            basis.patch_dim()
        )));
    }
    Descriptor::new(basis.project(&extract_patch(space, kp)?))
}

pub fn describe_pca_sift(img: &Image, kp: &Keypoint, basis: &PcaBasis) -> Result<Descriptor> {
    let space = ScaleSpace::build(img, &DetectorParams::default())?;
    if kp.octave >= space.octaves() {
        return Err(Error::SupportOutsideImage);
    }
    describe_pca_sift_in(&space, kp, basis)
}
