//! One-sided Jacobi SVD for small complex matrices.
//!
//! The Hankel lifts this crate thresholds are at most tens of rows/columns,
//! where cyclic one-sided Jacobi is simple, unconditionally convergent, and
//! accurate to machine precision. The factorization maintains
//! `A = W V^H` exactly at every step (W starts as A and both factors absorb
//! the same unitary column rotations), so reconstruction identities hold
//! even before convergence; convergence makes the columns of W orthogonal,
//! at which point `W = U diag(sigma)`.

use ndarray::Array2;
use num_complex::Complex64;

const SWEEP_TOL: f64 = 1e-14;
const MAX_SWEEPS: usize = 60;

/// Factorization of an m x n matrix A as `W V^H` with `w[k]` the k-th
/// scaled left vector `sigma_k u_k` (length m) and `v[k]` the k-th right
/// vector (length n). `sigmas[k] = ||w[k]||`, unsorted.
pub(crate) struct JacobiSvd {
    pub w: Vec<Vec<Complex64>>,
    pub v: Vec<Vec<Complex64>>,
    pub sigmas: Vec<f64>,
}

impl JacobiSvd {
    /// Column indices by descending singular value; ties break low-index
    /// first so the factorization order is deterministic.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.sigmas.len()).collect();
        order.sort_by(|&a, &b| {
            self.sigmas[b]
                .partial_cmp(&self.sigmas[a])
                .unwrap()
                .then(a.cmp(&b))
        });
        order
    }

    /// Singular values in descending order.
    #[cfg_attr(not(test), allow(dead_code))]
    pub fn sorted_sigmas(&self) -> Vec<f64> {
        self.order().iter().map(|&k| self.sigmas[k]).collect()
    }
}

fn rotate_pair(cols: &mut [Vec<Complex64>], p: usize, q: usize, c: f64, s: f64, phase: Complex64) {
    let (head, tail) = cols.split_at_mut(q);
    let col_p = &mut head[p];
    let col_q = &mut tail[0];
    let conj_phase = phase.conj();
    for (a, b) in col_p.iter_mut().zip(col_q.iter_mut()) {
        let wa = *a;
        let wb = conj_phase * *b;
        *a = c * wa - s * wb;
        *b = s * wa + c * wb;
    }
}

/// Cyclic one-sided Jacobi on the columns of `a`.
pub(crate) fn one_sided_jacobi(a: &Array2<Complex64>) -> JacobiSvd {
    let (m, n) = a.dim();
    let mut w: Vec<Vec<Complex64>> = (0..n).map(|j| (0..m).map(|i| a[[i, j]]).collect()).collect();
    let mut v: Vec<Vec<Complex64>> = (0..n)
        .map(|j| {
            let mut e = vec![Complex64::new(0.0, 0.0); n];
            e[j] = Complex64::new(1.0, 0.0);
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = Complex64::new(0.0, 0.0);
                for i in 0..m {
                    alpha += w[p][i].norm_sqr();
                    beta += w[q][i].norm_sqr();
                    gamma += w[p][i].conj() * w[q][i];
                }
                let g = gamma.norm();
                if alpha == 0.0 || beta == 0.0 || g <= SWEEP_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma / g;
                let tau = (beta - alpha) / (2.0 * g);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s, phase);
                rotate_pair(&mut v, p, q, c, s, phase);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigmas = w
        .iter()
        .map(|col| col.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt())
        .collect();
    JacobiSvd { w, v, sigmas }
}
