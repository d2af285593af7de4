//! Deterministic synthetic motion for tests and benchmarks.
//!
//! Each axis is `A·z(t) + r + τ(t)·1`: `k` latent curves `z`, each a sum of
//! low-frequency sinusoids with geometrically decaying amplitude, mixed into `J` joints by a random `J×k` matrix
//! `A`, plus a translation `τ` shared by all joints and optional fixed
//! per-joint rest offsets. The mixing matrices come
//! from `skeleton_seed`, the curves from the per-sequence seed, so sequences
//! with different seeds share one spatial subspace.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::motion::{MotionSequence, DEFAULT_FPS};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub joints: usize,
    pub frames: usize,
    /// Rank `k` of the mixing matrix.
    pub rank: usize,
    pub frame_rate: f64,
    /// Sinusoids summed into each latent curve.
    pub components: usize,
    /// Highest sinusoid frequency in Hz.
    pub max_freq_hz: f64,
    /// Peak amplitude of the first latent curve.
    pub amplitude: f64,
    /// Ratio between the peak amplitudes of successive latent curves.
    pub decay: f64,
    /// Peak amplitude of the shared translation.
    pub translation: f64,
    /// Spread of the fixed per-joint rest offsets; 0 places every joint's
    /// motion around the origin.
    pub rest_pose: f64,
    /// Standard deviation of i.i.d. Gaussian noise added to every coordinate.
    pub noise: f64,
    pub skeleton_seed: u64,
}

impl SyntheticParams {
    pub fn new(joints: usize, frames: usize, rank: usize) -> Self {
        Self {
            joints,
            frames,
            rank,
            frame_rate: DEFAULT_FPS,
            components: 3,
            max_freq_hz: 1.5,
            amplitude: 20.0,
            decay: 0.7,
            translation: 50.0,
            rest_pose: 0.0,
            noise: 0.0,
            skeleton_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints == 0 || self.frames == 0 {
            return Err(Error::invalid("J and F must be positive"));
        }
        if self.rank == 0 || self.rank > self.joints {
            return Err(Error::invalid(format!(
                "rank must be in 1..={}, got {}",
                self.joints, self.rank
            )));
        }
        if self.components == 0 {
            return Err(Error::invalid("at least one sinusoid per curve is required"));
        }
        for (name, v) in [
            ("frame rate", self.frame_rate),
            ("max frequency", self.max_freq_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::invalid(format!("decay must be in (0, 1], got {}", self.decay)));
        }
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("translation", self.translation),
            ("rest pose", self.rest_pose),
            ("noise", self.noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Upper bound on `|m_{i+1} - m_i|` for one joint coordinate, ignoring
    /// noise: every sinusoid's slope is at most `2π·f·a`.
    pub fn max_step(&self, mixing_abs_row_sum: f64) -> f64 {
        let per_curve = TAU * self.max_freq_hz * self.amplitude / self.frame_rate;
        let translation = TAU * 0.25 * self.max_freq_hz * self.translation / self.frame_rate;
        mixing_abs_row_sum * per_curve + translation
    }
}

/// The fixed part of a generated skeleton: per-axis `J×k` mixing matrices
/// with `N(0, 1/k)` entries and per-axis rest offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub mixing: [DMatrix<f64>; 3],
    pub rest: [DVector<f64>; 3],
}

pub fn skeleton(params: &SyntheticParams) -> Result<Skeleton> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.skeleton_seed);
    let scale = (params.rank as f64).sqrt().recip();
    let mut normal = move || <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng);
    let mixing = std::array::from_fn(|_| DMatrix::from_fn(params.joints, params.rank, |_, _| scale * normal()));
    let rest = std::array::from_fn(|_| DVector::from_fn(params.joints, |_, _| params.rest_pose * normal()));
    Ok(Skeleton { mixing, rest })
}

struct Sinusoid {
    amp: f64,
    freq: f64,
    phase: f64,
}

/// A curve bounded by `peak` built from `n` sinusoids below `max_freq` Hz.
fn random_curve<R: Rng>(rng: &mut R, n: usize, peak: f64, max_freq: f64) -> Vec<Sinusoid> {
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights
        .into_iter()
        .map(|w| Sinusoid {
            amp: peak * w / total,
            freq: rng.random_range(0.05 * max_freq..=max_freq),
            phase: rng.random_range(0.0..TAU),
        })
        .collect()
}

fn eval(curve: &[Sinusoid], t: f64) -> f64 {
    curve.iter().map(|s| s.amp * (TAU * s.freq * t + s.phase).sin()).sum()
}

pub fn gen_synthetic(params: &SyntheticParams, seed: u64) -> Result<MotionSequence> {
    let skel = skeleton(params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (f, k) = (params.frames, params.rank);
    let noise = Normal::new(0.0, params.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut data = Vec::with_capacity(3);
    for (a, rest) in skel.mixing.iter().zip(&skel.rest) {
        let curves: Vec<Vec<Sinusoid>> = (0..k)
            .map(|l| {
                let peak = params.amplitude * params.decay.powi(l as i32);
                random_curve(&mut rng, params.components, peak, params.max_freq_hz)
            })
            .collect();
        // The translation moves at a quarter of the limb frequencies.
        let translation = random_curve(&mut rng, params.components, params.translation, 0.25 * params.max_freq_hz);
        let z = DMatrix::from_fn(k, f, |l, i| eval(&curves[l], i as f64 / params.frame_rate));
        let mut m = a * z;
        for (i, mut col) in m.column_iter_mut().enumerate() {
            col += rest;
            col.add_scalar_mut(eval(&translation, i as f64 / params.frame_rate));
        }
        if params.noise > 0.0 {
            for v in m.iter_mut() {
                *v += noise.sample(&mut rng);
            }
        }
        data.push(m);
    }
    MotionSequence::new(data.try_into().unwrap(), params.frame_rate)
}
