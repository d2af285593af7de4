//! Independent oracles shared by unit tests.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Haar-ish random orthogonal matrix from the QR factorization of a Gaussian
/// matrix.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let mut q = q;
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Smallest `||g - e||²` over all `e` with at most `keep` nonzeros, by
/// enumerating every support set.
pub fn brute_force_truncation_error(g: &[f64], keep: usize) -> f64 {
    let n = g.len();
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize > keep {
            continue;
        }
        let dropped: f64 = (0..n)
            .filter(|i| mask & (1 << i) == 0)
            .map(|i| g[i] * g[i])
            .sum();
        best = best.min(dropped);
    }
    best
}
