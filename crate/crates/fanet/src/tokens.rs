//! Frequency-domain tokenization.
//!
//! The field of view is discretized into P bins; each bin becomes one token
//! that fuses the bin's steering vector with the observed sparse snapshot.
//! Complex values are split into real/imaginary channels to mirror the
//! network's two-channel output head.

use ndarray::Array2;
use num_complex::Complex64;

use crate::array::{steering_vector, ArrayGeometry, Snapshot, Span};
use crate::error::{Error, Result};
use crate::sparse::{sparsity_level, SparseMask};

/// Uniform angular grid over the FOV with a precomputed steering vector per
/// bin (the N x P grid manifold, stored column-wise).
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    fov_deg: Span,
    angles_deg: Vec<f64>,
    steering: Vec<Vec<Complex64>>,
    n_elements: usize,
}

impl FrequencyGrid {
    pub fn fov_deg(&self) -> Span {
        self.fov_deg
    }

    pub fn p_bins(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn angle(&self, p: usize) -> f64 {
        self.angles_deg[p]
    }

    /// Grid manifold column p: the steering vector at bin angle p.
    pub fn steering(&self, p: usize) -> &[Complex64] {
        &self.steering[p]
    }
}

/// Uniform grid of `p_bins` angles over `fov`, endpoints included, with the
/// grid manifold precomputed.
pub fn build_grid(fov_deg: Span, p_bins: usize, geometry: &ArrayGeometry) -> Result<FrequencyGrid> {
    if p_bins < 2 {
        return Err(Error::invalid_argument(format!(
            "grid needs at least 2 bins, got {p_bins}"
        )));
    }
    if fov_deg.is_degenerate() || !(fov_deg.lo < fov_deg.hi) {
        return Err(Error::invalid_argument(
            "field of view must be a non-degenerate interval",
        ));
    }
    let step = fov_deg.width() / (p_bins - 1) as f64;
    let angles_deg: Vec<f64> = (0..p_bins).map(|p| fov_deg.lo + step * p as f64).collect();
    let steering = angles_deg
        .iter()
        .map(|&theta| steering_vector(geometry, theta))
        .collect();
    Ok(FrequencyGrid {
        fov_deg,
        angles_deg,
        steering,
        n_elements: geometry.n_elements(),
    })
}

/// Token layout options. The defaults append a scalar sparsity-level feature
/// to every token; the per-element mask channel is off. Both can be toggled
/// for a layout that carries only steering vector and sparse signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenConfig {
    pub sparsity_feature: bool,
    pub mask_channel: bool,
}

impl Default for TokenConfig {
    fn default() -> Self {
        TokenConfig {
            sparsity_feature: true,
            mask_channel: false,
        }
    }
}

/// Feature width of one token for an N-element array: four length-N blocks
/// (Re/Im steering, Re/Im signal) plus the optional mask channel and
/// sparsity scalar.
pub fn token_width(n_elements: usize, cfg: &TokenConfig) -> usize {
    4 * n_elements
        + if cfg.mask_channel { n_elements } else { 0 }
        + usize::from(cfg.sparsity_feature)
}

/// P tokens of width F: row p is
/// `[Re a(theta_p) | Im a(theta_p) | Re y_s | Im y_s | (mask) | (sparsity)]`.
/// The signal blocks are identical across rows; only the steering blocks
/// distinguish bins.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub features: Array2<f64>,
    pub mask: SparseMask,
}

impl TokenBatch {
    pub fn p_bins(&self) -> usize {
        self.features.nrows()
    }

    pub fn width(&self) -> usize {
        self.features.ncols()
    }
}

/// Builds the token batch for a zero-filled sparse snapshot.
pub fn tokenize(
    sparse_snapshot: &Snapshot,
    mask: &SparseMask,
    grid: &FrequencyGrid,
    cfg: &TokenConfig,
) -> Result<TokenBatch> {
    let n = grid.n_elements();
    if sparse_snapshot.len() != n {
        return Err(Error::invalid_argument(format!(
            "snapshot length {} vs grid manifold rows {n}",
            sparse_snapshot.len()
        )));
    }
    if mask.len() != n {
        return Err(Error::invalid_argument(format!(
            "mask length {} vs grid manifold rows {n}",
            mask.len()
        )));
    }
    let level = sparsity_level(mask, n)?;
    let p_bins = grid.p_bins();
    let width = token_width(n, cfg);
    let mut features = Array2::<f64>::zeros((p_bins, width));
    for p in 0..p_bins {
        let steer = grid.steering(p);
        let mut row = features.row_mut(p);
        for i in 0..n {
            row[i] = steer[i].re;
            row[n + i] = steer[i].im;
            row[2 * n + i] = sparse_snapshot.samples[i].re;
            row[3 * n + i] = sparse_snapshot.samples[i].im;
        }
        let mut offset = 4 * n;
        if cfg.mask_channel {
            for i in 0..n {
                row[offset + i] = f64::from(u8::from(mask.is_observed(i)));
            }
            offset += n;
        }
        if cfg.sparsity_feature {
            row[offset] = level;
        }
    }
    Ok(TokenBatch {
        features,
        mask: mask.clone(),
    })
}
