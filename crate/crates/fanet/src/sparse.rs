//! Selection-matrix semantics and the sparse & noise augmentation layer.
//!
//! A sparse array observes a subset of the full aperture. Missing entries are
//! zero-filled rather than dropped so every consumer sees a fixed length-N
//! shape; zero is the unique value that adds no energy. In the training path
//! noise is applied to the full snapshot first and the mask last, so missing
//! entries stay exactly zero.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::{Snapshot, Span};
use crate::error::{Error, Result};

/// Boolean observation pattern over the N array elements. At least one
/// element must be observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMask {
    observed: Vec<bool>,
}

impl SparseMask {
    pub fn from_observed(observed: Vec<bool>) -> Result<Self> {
        if observed.is_empty() {
            return Err(Error::invalid_argument("mask must not be empty"));
        }
        if !observed.iter().any(|&o| o) {
            return Err(Error::invalid_argument(
                "mask must observe at least one element",
            ));
        }
        Ok(SparseMask { observed })
    }

    pub fn all_observed(n: usize) -> Result<Self> {
        Self::from_observed(vec![true; n])
    }

    /// Mask with the given (0-based) elements missing.
    pub fn from_missing_indices(n: usize, missing: &[usize]) -> Result<Self> {
        let mut observed = vec![true; n];
        for &idx in missing {
            if idx >= n {
                return Err(Error::invalid_argument(format!(
                    "missing index {idx} out of range for {n} elements"
                )));
            }
            observed[idx] = false;
        }
        Self::from_observed(observed)
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_observed(&self, idx: usize) -> bool {
        self.observed[idx]
    }

    /// Number of observed (true) entries.
    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        self.observed
            .iter()
            .enumerate()
            .filter_map(|(i, &o)| (!o).then_some(i))
            .collect()
    }
}

/// Hyperparameters of the augmentation layer: how sparse and how noisy the
/// training inputs may get.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Fraction of elements that may be removed, in `[0, 1)`.
    pub max_sparsity: f64,
    /// SNR interval in dB; `[inf, inf]` disables noise.
    pub snr_range_db: Span,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_sparsity: 0.4,
            snr_range_db: Span { lo: 10.0, hi: 30.0 },
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.max_sparsity) {
            return Err(Error::invalid_argument(format!(
                "max_sparsity must lie in [0, 1), got {}",
                self.max_sparsity
            )));
        }
        if !(self.snr_range_db.lo <= self.snr_range_db.hi) {
            return Err(Error::invalid_argument("snr_range_db: lo > hi"));
        }
        Ok(())
    }
}

/// Fraction of removed elements, `1 - M/N`.
pub fn sparsity_level(mask: &SparseMask, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid_argument("array size must be positive"));
    }
    if mask.len() != n {
        return Err(Error::invalid_argument(format!(
            "mask length {} does not match array size {n}",
            mask.len()
        )));
    }
    // (N - M)/N rather than 1 - M/N keeps the ratio exact in floating point
    Ok((n - mask.observed_count()) as f64 / n as f64)
}

/// Mask with exactly `num_missing` elements removed, positions uniform
/// without replacement.
pub fn random_mask<R: Rng + ?Sized>(rng: &mut R, n: usize, num_missing: usize) -> Result<SparseMask> {
    if num_missing >= n {
        return Err(Error::invalid_argument(format!(
            "cannot remove {num_missing} of {n} elements"
        )));
    }
    let mut observed = vec![true; n];
    for idx in rand::seq::index::sample(rng, n, num_missing) {
        observed[idx] = false;
    }
    SparseMask::from_observed(observed)
}

/// Zero-filled sparse snapshot: observed entries pass through unchanged,
/// missing entries become exactly 0.
pub fn apply_mask(snapshot: &Snapshot, mask: &SparseMask) -> Result<Snapshot> {
    if snapshot.len() != mask.len() {
        return Err(Error::invalid_argument(format!(
            "snapshot length {} vs mask length {}",
            snapshot.len(),
            mask.len()
        )));
    }
    let samples = snapshot
        .samples
        .iter()
        .zip(mask.observed())
        .map(|(&s, &o)| if o { s } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(Snapshot::new(samples))
}

/// Adds i.i.d. circular complex Gaussian noise at the given SNR. The noise
/// variance is referenced to the mean per-element power of the input
/// snapshot, so SNR is independent of the number of targets. `snr_db = inf`
/// returns the input unchanged.
pub fn add_noise<R: Rng + ?Sized>(snapshot: &Snapshot, snr_db: f64, rng: &mut R) -> Result<Snapshot> {
    if snr_db == f64::INFINITY {
        return Ok(snapshot.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid_argument(format!("snr_db must be finite or +inf, got {snr_db}")));
    }
    let p_sig = snapshot.mean_power();
    if p_sig == 0.0 {
        return Err(Error::invalid_argument(
            "SNR is undefined for an all-zero snapshot",
        ));
    }
    let sigma2 = p_sig / 10f64.powf(snr_db / 10.0);
    let per_part = (sigma2 / 2.0).sqrt();
    let samples = snapshot
        .samples
        .iter()
        .map(|&s| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            s + Complex64::new(per_part * re, per_part * im)
        })
        .collect();
    Ok(Snapshot::new(samples))
}

/// Training-path augmentation: one missing-element count and one SNR drawn
/// per batch, masks drawn independently per snapshot, noise applied to the
/// full snapshot and the mask applied last.
///
/// Per-batch draw order: `num_missing`, then `snr_db`, then per snapshot a
/// mask followed by its noise samples.
pub fn augment_batch<R: Rng + ?Sized>(
    clean_batch: &[Snapshot],
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(Vec<Snapshot>, Vec<SparseMask>)> {
    cfg.validate()?;
    if clean_batch.is_empty() {
        return Err(Error::invalid_argument("batch must not be empty"));
    }
    let n = clean_batch[0].len();
    let max_missing = ((cfg.max_sparsity * n as f64).floor() as usize).min(n.saturating_sub(1));
    let num_missing = rng.random_range(0..=max_missing);
    let snr_db = cfg.snr_range_db.sample(rng);

    let mut sparse_noisy = Vec::with_capacity(clean_batch.len());
    let mut masks = Vec::with_capacity(clean_batch.len());
    for clean in clean_batch {
        let mask = random_mask(rng, n, num_missing)?;
        let noisy = add_noise(clean, snr_db, rng)?;
        sparse_noisy.push(apply_mask(&noisy, &mask)?);
        masks.push(mask);
    }
    Ok((sparse_noisy, masks))
}
