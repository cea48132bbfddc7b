//! Uniform linear array signal model: steering vectors, manifold matrices,
//! and synthetic single-snapshot scene generation.
//!
//! Element positions are expressed in wavelengths, so the carrier wavelength
//! never appears explicitly; only `d_n / lambda` enters the phase. Angles are
//! degrees at every API boundary and radians internally.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]` of scalars (degrees, dB, amplitudes, ...).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Span {
    pub lo: f64,
    pub hi: f64,
}

impl Span {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid_argument(format!(
                "empty interval: lo {lo} > hi {hi}"
            )));
        }
        Ok(Span { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    /// Uniform draw; a degenerate interval returns `lo` exactly, which also
    /// covers the infinite "noiseless" SNR sentinel.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_degenerate() {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

/// Element positions of the full N-element array, in wavelengths from the
/// reference element.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    spacings: Vec<f64>,
}

impl ArrayGeometry {
    /// Half-wavelength ULA: `d_n = (n-1)/2` for n = 1..=N.
    pub fn ula(n_elements: usize) -> Result<Self> {
        Self::with_spacing(n_elements, 0.5)
    }

    /// Uniform array with the given inter-element spacing in wavelengths.
    pub fn with_spacing(n_elements: usize, spacing_wl: f64) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::invalid_argument("array needs at least one element"));
        }
        if !(spacing_wl > 0.0) || !spacing_wl.is_finite() {
            return Err(Error::invalid_argument(format!(
                "element spacing must be positive and finite, got {spacing_wl}"
            )));
        }
        let spacings = (0..n_elements).map(|n| n as f64 * spacing_wl).collect();
        Ok(ArrayGeometry { spacings })
    }

    /// Arbitrary strictly increasing positions with `d_1 = 0`.
    pub fn from_spacings(spacings: Vec<f64>) -> Result<Self> {
        if spacings.is_empty() {
            return Err(Error::invalid_argument("array needs at least one element"));
        }
        if spacings[0] != 0.0 {
            return Err(Error::invalid_argument(
                "reference element must sit at position 0",
            ));
        }
        if spacings.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid_argument(
                "element positions must be strictly increasing",
            ));
        }
        Ok(ArrayGeometry { spacings })
    }

    pub fn n_elements(&self) -> usize {
        self.spacings.len()
    }

    /// Position of element `n` (0-based) in wavelengths.
    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }
}

/// Far-field point targets: a DOA angle and complex reflection coefficient
/// per target.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub angles_deg: Vec<f64>,
    pub coefficients: Vec<Complex64>,
}

impl TargetSet {
    pub fn new(angles_deg: Vec<f64>, coefficients: Vec<Complex64>) -> Result<Self> {
        if angles_deg.is_empty() {
            return Err(Error::invalid_argument("target set must not be empty"));
        }
        if angles_deg.len() != coefficients.len() {
            return Err(Error::invalid_argument(format!(
                "{} angles vs {} coefficients",
                angles_deg.len(),
                coefficients.len()
            )));
        }
        if angles_deg.iter().any(|a| !a.is_finite()) {
            return Err(Error::invalid_argument("non-finite target angle"));
        }
        Ok(TargetSet {
            angles_deg,
            coefficients,
        })
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }
}

/// One time sample of the array output: a length-N complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub samples: Vec<Complex64>,
}

impl Snapshot {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Snapshot { samples }
    }

    pub fn zeros(n: usize) -> Self {
        Snapshot {
            samples: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean per-element power `(1/N) sum |y_n|^2`.
    pub fn mean_power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }

    pub fn norm(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Steering vector `a(theta)`: element n responds with phase
/// `exp(i 2 pi d_n sin(theta))`. Element 1 is exactly 1.
pub fn steering_vector(geometry: &ArrayGeometry, theta_deg: f64) -> Vec<Complex64> {
    let sin_theta = theta_deg.to_radians().sin();
    geometry
        .spacings()
        .iter()
        .map(|&d| Complex64::from_polar(1.0, std::f64::consts::TAU * d * sin_theta))
        .collect()
}

/// N x K manifold matrix, stored column-major: `result[k]` is the steering
/// vector at `angles_deg[k]`.
pub fn manifold(geometry: &ArrayGeometry, angles_deg: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    if angles_deg.is_empty() {
        return Err(Error::invalid_argument("manifold needs at least one angle"));
    }
    Ok(angles_deg
        .iter()
        .map(|&theta| steering_vector(geometry, theta))
        .collect())
}

/// Noiseless snapshot `A(theta) s`, computed element by element.
pub fn synthesize_clean(geometry: &ArrayGeometry, targets: &TargetSet) -> Snapshot {
    let tau = std::f64::consts::TAU;
    let samples = geometry
        .spacings()
        .iter()
        .map(|&d| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (theta, s) in targets.angles_deg.iter().zip(&targets.coefficients) {
                acc += s * Complex64::from_polar(1.0, tau * d * theta.to_radians().sin());
            }
            acc
        })
        .collect();
    Snapshot::new(samples)
}

/// Scene-generation recipe shared by training data and Monte Carlo trials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneConfig {
    pub fov_deg: Span,
    pub k_max: usize,
    pub amp_range: Span,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            fov_deg: Span { lo: -30.0, hi: 30.0 },
            k_max: 2,
            amp_range: Span { lo: 0.5, hi: 1.0 },
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.fov_deg.is_degenerate() || !(self.fov_deg.lo < self.fov_deg.hi) {
            return Err(Error::invalid_argument(
                "scene field of view must be a non-degenerate interval",
            ));
        }
        if self.k_max < 1 {
            return Err(Error::invalid_argument("k_max must be at least 1"));
        }
        if !(self.amp_range.lo <= self.amp_range.hi) || self.amp_range.lo < 0.0 {
            return Err(Error::invalid_argument(
                "amplitude range must satisfy 0 <= lo <= hi",
            ));
        }
        Ok(())
    }
}

/// Random target set with exactly `k` targets: angles i.i.d. uniform over the
/// FOV, amplitudes uniform over `amp_range`, phases uniform over `[0, 2 pi)`.
/// Per-target draw order is (angle, amplitude, phase).
pub fn sample_targets_with_k<R: Rng + ?Sized>(
    rng: &mut R,
    fov_deg: Span,
    k: usize,
    amp_range: Span,
) -> Result<TargetSet> {
    if fov_deg.is_degenerate() || !(fov_deg.lo < fov_deg.hi) {
        return Err(Error::invalid_argument(
            "field of view must be a non-degenerate interval",
        ));
    }
    if k == 0 {
        return Err(Error::invalid_argument("need at least one target"));
    }
    if !(amp_range.lo <= amp_range.hi) {
        return Err(Error::invalid_argument("empty amplitude interval"));
    }
    let mut angles = Vec::with_capacity(k);
    let mut coeffs = Vec::with_capacity(k);
    for _ in 0..k {
        angles.push(fov_deg.sample(rng));
        let amp = amp_range.sample(rng);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        coeffs.push(Complex64::from_polar(amp, phase));
    }
    TargetSet::new(angles, coeffs)
}

/// Random target set with K drawn uniformly from `{1..=k_max}`.
pub fn sample_targets<R: Rng + ?Sized>(
    rng: &mut R,
    fov_deg: Span,
    k_max: usize,
    amp_range: Span,
) -> Result<TargetSet> {
    if k_max < 1 {
        return Err(Error::invalid_argument("k_max must be at least 1"));
    }
    let k = rng.random_range(1..=k_max);
    sample_targets_with_k(rng, fov_deg, k, amp_range)
}
