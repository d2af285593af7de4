//! Reference implementations the library is checked against. They are
//! written the slow, obvious way and share no code with the crate beyond
//! its data types.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use mocap_lsdt::synth::{gen_synthetic, SyntheticParams};
use mocap_lsdt::{CodecConfig, InitKind, MotionSequence, TransformModel};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Uniformly distributed orthogonal matrix: QR of a Gaussian matrix with the
/// signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `max |Bᵀ B - I|` by explicit dot products.
pub fn orthogonality_defect(b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = (0..n).map(|k| b[(i, k)] * b[(j, k)]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    worst
}

/// Smallest achievable `||g - e||²` over every `e` with at most `keep`
/// nonzeros, by enumerating all supports.
pub fn best_subset_error(g: &[f64], keep: usize) -> f64 {
    let n = g.len();
    assert!(n <= 20);
    (0u32..1 << n)
        .filter(|mask| mask.count_ones() as usize <= keep)
        .map(|mask| {
            (0..n)
                .filter(|i| mask & (1 << i) == 0)
                .map(|i| g[i] * g[i])
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min)
}

/// `Tr(B M Eᵀ)` by explicit sums.
pub fn trace_objective(b: &DMatrix<f64>, m: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    let bm = b * m;
    bm.iter().zip(e.iter()).map(|(x, y)| x * y).sum()
}

/// Orthonormal DCT-II of a sequence, straight from the definition.
pub fn dct_ii(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|k| {
            let a = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            a * x
                .iter()
                .enumerate()
                .map(|(t, v)| v * (PI * (2 * t + 1) as f64 * k as f64 / (2.0 * n)).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Smallest `f32` not below `v`, by walking the bit pattern.
pub fn f32_round_up(v: f64) -> f32 {
    assert!(v >= 0.0 && v.is_finite());
    let mut s = v as f32;
    while (s as f64) < v {
        s = f32::from_bits(s.to_bits() + 1);
    }
    s
}

/// Dead-zone quantizer step for a block whose largest magnitude is `max`.
pub fn step_for(max: f64, bits: u8) -> f64 {
    f32_round_up(max) as f64 / ((1i64 << (bits - 1)) - 1) as f64
}

/// Quantize-dequantize one value with rounding half away from zero.
pub fn requantize(c: f64, step: f64) -> f64 {
    if step == 0.0 {
        return 0.0;
    }
    let q = (c.abs() / step + 0.5).floor();
    c.signum() * q * step
}

/// The predictive frame codec written as one loop: predict from the last
/// reconstruction, transform, quantize with a per-frame scale, add back.
/// Returns the reconstruction the decoder must produce.
pub fn reference_frame_codec(seq: &MotionSequence, bases: &[DMatrix<f64>; 3], bits: u8) -> [DMatrix<f64>; 3] {
    let (j, f) = (seq.joints(), seq.frames());
    std::array::from_fn(|d| {
        let b = &bases[d];
        let m = &seq.data()[d];
        let mut out = DMatrix::zeros(j, f);
        let mut prev = vec![0.0; j];
        for i in 0..f {
            let c: Vec<f64> = (0..j)
                .map(|r| (0..j).map(|k| b[(r, k)] * (m[(k, i)] - prev[k])).sum())
                .collect();
            let max = c.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let step = step_for(max, bits);
            let chat: Vec<f64> = c.iter().map(|&v| requantize(v, step)).collect();
            for k in 0..j {
                prev[k] += (0..j).map(|r| b[(r, k)] * chat[r]).sum::<f64>();
                out[(k, i)] = prev[k];
            }
        }
        out
    })
}

/// Clip-codec coefficients `B · (clip · U)` for one axis and one clip.
pub fn reference_clip_coeffs(b: &DMatrix<f64>, clip: &DMatrix<f64>) -> DMatrix<f64> {
    let (j, l) = clip.shape();
    let mut temporal = DMatrix::zeros(j, l);
    for r in 0..j {
        let row: Vec<f64> = clip.row(r).iter().copied().collect();
        for (k, v) in dct_ii(&row).into_iter().enumerate() {
            temporal[(r, k)] = v;
        }
    }
    b * temporal
}

/// Shannon entropy in bits of a frequency profile.
pub fn entropy_bits(freqs: &[u64]) -> f64 {
    let total: u64 = freqs.iter().sum();
    freqs
        .iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}

/// Smooth synthetic motion with the given shape and subspace rank.
pub fn smooth_motion(joints: usize, frames: usize, rank: usize, seed: u64) -> MotionSequence {
    let mut p = SyntheticParams::new(joints, frames, rank.min(joints));
    p.skeleton_seed = seed ^ 0x5eed;
    gen_synthetic(&p, seed).unwrap()
}

/// Motion with independent Gaussian coordinates; the worst case for every
/// transform.
pub fn noise_motion<R: Rng>(rng: &mut R, joints: usize, frames: usize, scale: f64) -> MotionSequence {
    let data = std::array::from_fn(|_| gaussian_matrix(rng, joints, frames) * scale);
    MotionSequence::new(data, 120.0).unwrap()
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

/// The committed golden configurations: file name, input, model, codec.
pub fn golden_cases() -> Vec<(&'static str, MotionSequence, TransformModel, CodecConfig)> {
    let seq = smooth_motion(12, 150, 4, 2024);
    let dct = TransformModel::from_init(12, InitKind::Dct).unwrap();
    let haar = TransformModel::from_init(12, InitKind::Haar).unwrap();
    vec![
        ("frame_b8.mccs", seq.clone(), dct.clone(), CodecConfig::frame(8)),
        ("clip_l60_b10.mccs", seq.clone(), dct, CodecConfig::clip(60, 10)),
        ("clip_l7_b12_haar.mccs", seq, haar, CodecConfig::clip(7, 12)),
    ]
}
