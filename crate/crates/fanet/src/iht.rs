//! Model-based comparator: single-snapshot interpolation by iterative hard
//! thresholding on a Hankel lifting of the signal.
//!
//! A clean K-target ULA snapshot lifts to a rank-K Hankel matrix, so the
//! iteration alternates a data-consistency step on the observed entries with
//! a truncated-SVD projection onto rank r, reading the signal back off the
//! anti-diagonals.

use ndarray::Array2;
use num_complex::Complex64;

use crate::array::Snapshot;
use crate::error::{Error, Result};
use crate::sparse::SparseMask;
use crate::svd::one_sided_jacobi;

/// Free parameters of the iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IhtConfig {
    /// Target rank of the Hankel lift (number of assumed components).
    pub rank: usize,
    /// Hankel row count L; the lift is L x (N-L+1). Zero selects the
    /// maximally square `ceil(N/2)` at run time.
    pub pencil: usize,
    pub max_iters: usize,
    /// Relative-change stopping tolerance.
    pub tol: f64,
    /// Step size on the observed-entry residual.
    pub step: f64,
    /// Re-clamp observed entries to the measurements after each projection.
    /// Off by default: measurements are noisy and the comparison target is
    /// the denoised signal.
    pub clamp_observed: bool,
}

impl Default for IhtConfig {
    fn default() -> Self {
        IhtConfig {
            rank: 2,
            pencil: 0,
            max_iters: 200,
            tol: 1e-6,
            step: 1.0,
            clamp_observed: false,
        }
    }
}

impl IhtConfig {
    /// Pencil parameter actually used for an N-element snapshot.
    pub fn effective_pencil(&self, n: usize) -> usize {
        if self.pencil == 0 {
            n.div_ceil(2)
        } else {
            self.pencil
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n < 3 {
            return Err(Error::invalid_argument(
                "Hankel interpolation needs at least 3 elements",
            ));
        }
        let l = self.effective_pencil(n);
        if l < 2 || l > n - 1 {
            return Err(Error::invalid_argument(format!(
                "pencil {l} out of range for {n} elements"
            )));
        }
        let max_rank = l.min(n - l + 1);
        if self.rank == 0 || self.rank > max_rank {
            return Err(Error::invalid_argument(format!(
                "rank {} out of range, must be 1..={max_rank}",
                self.rank
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid_argument("tolerance must be positive"));
        }
        if !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::invalid_argument("step must lie in (0, 1]"));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid_argument("max_iters must be positive"));
        }
        Ok(())
    }
}

/// L x (N-L+1) Hankel lifting of a snapshot; constant along anti-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelLift {
    pub matrix: Array2<Complex64>,
}

/// Lifts a length-N signal: `H[i][j] = signal[i + j]`.
pub fn hankel(signal: &[Complex64], pencil: usize) -> Result<HankelLift> {
    let n = signal.len();
    if n < 3 || pencil < 2 || pencil > n - 1 {
        return Err(Error::invalid_argument(format!(
            "pencil {pencil} out of range for signal length {n}"
        )));
    }
    let cols = n - pencil + 1;
    let matrix = Array2::from_shape_fn((pencil, cols), |(i, j)| signal[i + j]);
    Ok(HankelLift { matrix })
}

/// Maps an L x (N-L+1) matrix back to a length-N signal by averaging each
/// anti-diagonal; the exact inverse of [`hankel`] on true Hankel matrices.
pub fn dehankel(matrix: &Array2<Complex64>, n: usize) -> Result<Vec<Complex64>> {
    let (rows, cols) = matrix.dim();
    if rows == 0 || cols == 0 || rows + cols != n + 1 {
        return Err(Error::invalid_argument(format!(
            "{rows} x {cols} matrix cannot unfold to length {n}"
        )));
    }
    let mut sums = vec![Complex64::new(0.0, 0.0); n];
    let mut counts = vec![0usize; n];
    for j in 0..cols {
        for i in 0..rows {
            sums[i + j] += matrix[[i, j]];
            counts[i + j] += 1;
        }
    }
    Ok(sums
        .into_iter()
        .zip(counts)
        .map(|(s, c)| s / c as f64)
        .collect())
}

/// Best rank-r approximation via truncated SVD. The result does not depend
/// on the SVD's phase convention since only `u_k sigma_k v_k^H` products
/// enter the output; ties in singular values break toward the lower index.
pub fn hard_threshold(matrix: &Array2<Complex64>, rank: usize) -> Result<Array2<Complex64>> {
    let (rows, cols) = matrix.dim();
    if rank > rows.min(cols) {
        return Err(Error::invalid_argument(format!(
            "rank {rank} exceeds min dimension of {rows} x {cols}"
        )));
    }
    let svd = one_sided_jacobi(matrix);
    let mut out = Array2::from_elem((rows, cols), Complex64::new(0.0, 0.0));
    for &k in svd.order().iter().take(rank) {
        for j in 0..cols {
            let vkj = svd.v[k][j].conj();
            for i in 0..rows {
                out[[i, j]] += svd.w[k][i] * vkj;
            }
        }
    }
    Ok(out)
}

/// Outcome of one interpolation run; non-convergence is reported here, never
/// as an error.
#[derive(Debug, Clone, PartialEq)]
pub struct IhtResult {
    pub snapshot: Snapshot,
    pub converged: bool,
    pub iterations: usize,
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Interpolates a zero-filled sparse snapshot by alternating the observed-
/// entry data-consistency step with a rank-r Hankel projection.
pub fn iht_interpolate(
    sparse: &Snapshot,
    mask: &SparseMask,
    cfg: &IhtConfig,
) -> Result<IhtResult> {
    let n = sparse.len();
    if mask.len() != n {
        return Err(Error::invalid_argument(format!(
            "snapshot length {n} vs mask length {}",
            mask.len()
        )));
    }
    cfg.validate(n)?;
    if mask.observed_count() < cfg.rank {
        return Err(Error::invalid_argument(format!(
            "{} observed entries cannot pin rank {}",
            mask.observed_count(),
            cfg.rank
        )));
    }
    let pencil = cfg.effective_pencil(n);
    let measured = crate::sparse::apply_mask(sparse, mask)?;
    let y_s = &measured.samples;

    let mut x = y_s.clone();
    let mut converged = false;
    let mut iterations = 0usize;
    for _ in 0..cfg.max_iters {
        iterations += 1;
        let mut g = x.clone();
        for (i, gi) in g.iter_mut().enumerate() {
            if mask.is_observed(i) {
                *gi += cfg.step * (y_s[i] - x[i]);
            }
        }
        let lifted = hankel(&g, pencil)?;
        let projected = hard_threshold(&lifted.matrix, cfg.rank)?;
        let mut next = dehankel(&projected, n)?;
        if cfg.clamp_observed {
            for (i, v) in next.iter_mut().enumerate() {
                if mask.is_observed(i) {
                    *v = y_s[i];
                }
            }
        }
        let diff: f64 = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let denom = norm(&x).max(f64::MIN_POSITIVE);
        x = next;
        if diff / denom < cfg.tol {
            converged = true;
            break;
        }
    }
    Ok(IhtResult {
        snapshot: Snapshot::new(x),
        converged,
        iterations,
    })
}
