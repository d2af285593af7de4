//! Distortion, compression ratio and the sparsity–distortion protocol.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lsdt::TransformModel;
use crate::motion::MotionSequence;
use crate::stream::{CodecKind, CompressedStream};
use crate::transforms::{haar_dwt_forward, haar_padded_len, haar_dwt_inverse, spatial_dct, truncate_in_place};

/// Uncompressed cost of one key point: three 32-bit floats.
pub const BITS_PER_KEY_POINT: u64 = 96;

/// Levels of the Haar baseline.
pub const HAAR_BASELINE_LEVELS: u32 = 3;

fn check_shapes(orig: &MotionSequence, recon: &MotionSequence) -> Result<()> {
    if orig.joints() != recon.joints() || orig.frames() != recon.frames() {
        return Err(Error::shape(format!(
            "sequences are {}x{} and {}x{}",
            orig.joints(),
            orig.frames(),
            recon.joints(),
            recon.frames()
        )));
    }
    Ok(())
}

fn joint_errors(orig: &MotionSequence, recon: &MotionSequence) -> DMatrix<f64> {
    let (a, b) = (orig.data(), recon.data());
    DMatrix::from_fn(orig.joints(), orig.frames(), |j, i| {
        (0..3)
            .map(|d| (a[d][(j, i)] - b[d][(j, i)]).powi(2))
            .sum::<f64>()
            .sqrt()
    })
}

/// Mean Euclidean joint error over all joints and frames.
pub fn distortion(orig: &MotionSequence, recon: &MotionSequence) -> Result<f64> {
    check_shapes(orig, recon)?;
    let e = joint_errors(orig, recon);
    Ok(e.sum() / e.len() as f64)
}

/// Mean Euclidean error of each joint over all frames.
pub fn per_joint_distortion(orig: &MotionSequence, recon: &MotionSequence) -> Result<Vec<f64>> {
    check_shapes(orig, recon)?;
    let e = joint_errors(orig, recon);
    let f = orig.frames() as f64;
    Ok(e.row_iter().map(|row| row.sum() / f).collect())
}

/// `F·J·96` over the stream size in bits.
pub fn compression_ratio(frames: usize, joints: usize, stream_bytes: usize) -> Result<f64> {
    if stream_bytes == 0 {
        return Err(Error::invalid("stream size must be positive"));
    }
    let original = frames as u64 * joints as u64 * BITS_PER_KEY_POINT;
    Ok(original as f64 / (8 * stream_bytes) as f64)
}

/// Compression ratio of a stream, counting every serialized byte.
pub fn stream_compression_ratio(stream: &CompressedStream) -> f64 {
    compression_ratio(stream.frames, stream.joints, stream.byte_len()).expect("streams are never empty")
}

/// One point on a rate–distortion curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RDPoint {
    pub codec: CodecKind,
    /// Clip length for the clip codec.
    pub clip_len: Option<usize>,
    pub bits: u8,
    pub cr: f64,
    pub distortion: f64,
    pub stream_bytes: usize,
}

/// Spatial transforms compared by the sparsity protocol.
#[derive(Debug, Clone, Copy)]
pub enum SpatialTransform<'a> {
    Learned(&'a TransformModel),
    Dct,
    HaarDwt,
}

impl SpatialTransform<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            SpatialTransform::Learned(_) => "lsdt",
            SpatialTransform::Dct => "dct",
            SpatialTransform::HaarDwt => "dwt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPoint {
    pub transform: &'static str,
    pub fraction: f64,
    pub distortion: f64,
}

/// Number of coefficients kept at `fraction` of `joints`.
pub fn kept_count(fraction: f64, joints: usize) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction must be in (0, 1], got {fraction}")));
    }
    Ok(((fraction * joints as f64 - 1e-9).ceil() as usize).clamp(1, joints))
}

impl SpatialTransform<'_> {
    /// Coefficients per frame vector; the Haar baseline works on the
    /// zero-padded length.
    pub fn coefficient_count(&self, joints: usize) -> usize {
        match self {
            SpatialTransform::HaarDwt => haar_padded_len(joints, HAAR_BASELINE_LEVELS),
            _ => joints,
        }
    }
}

/// Keeps the `keep` largest coefficients of every frame vector under
/// `transform` and returns the reconstruction.
pub fn sparsify(seq: &MotionSequence, transform: SpatialTransform<'_>, keep: usize) -> Result<MotionSequence> {
    let j = seq.joints();
    let n = transform.coefficient_count(j);
    if keep > n {
        return Err(Error::invalid(format!("cannot keep {keep} of {n} coefficients")));
    }
    let dct = match transform {
        SpatialTransform::Dct => Some(spatial_dct(j)?.into_matrix()),
        _ => None,
    };
    let mut out = Vec::with_capacity(3);
    for d in 0..3 {
        let m = &seq.data()[d];
        let recon = match transform {
            SpatialTransform::HaarDwt => {
                let mut r = DMatrix::zeros(j, seq.frames());
                let mut scratch = Vec::new();
                for (i, col) in m.as_slice().chunks_exact(j).enumerate() {
                    let mut g = haar_dwt_forward(col, HAAR_BASELINE_LEVELS)?;
                    truncate_in_place(&mut g, keep, &mut scratch);
                    let v = haar_dwt_inverse(&g, HAAR_BASELINE_LEVELS)?;
                    r.column_mut(i).copy_from_slice(&v[..j]);
                }
                r
            }
            _ => {
                let basis = match transform {
                    SpatialTransform::Learned(model) => {
                        if model.joints() != j {
                            return Err(Error::ModelMismatch(format!(
                                "model has J={}, data has J={j}",
                                model.joints()
                            )));
                        }
                        model.basis(d).matrix()
                    }
                    _ => dct.as_ref().unwrap(),
                };
                let mut g = basis * m;
                let mut scratch = Vec::new();
                for col in g.as_mut_slice().chunks_exact_mut(j) {
                    truncate_in_place(col, keep, &mut scratch);
                }
                basis.tr_mul(&g)
            }
        };
        out.push(recon);
    }
    MotionSequence::new(out.try_into().unwrap(), seq.frame_rate())
}

/// Distortion after keeping `ceil(f·n)` of the `n` coefficients of each
/// frame vector, for each fraction `f`.
pub fn sparsity_distortion_curve(
    seq: &MotionSequence,
    transform: SpatialTransform<'_>,
    fractions: &[f64],
) -> Result<Vec<SparsityPoint>> {
    fractions
        .par_iter()
        .map(|&fraction| {
            let keep = kept_count(fraction, transform.coefficient_count(seq.joints()))?;
            let recon = sparsify(seq, transform, keep)?;
            Ok(SparsityPoint {
                transform: transform.name(),
                fraction,
                distortion: distortion(seq, &recon)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(j: usize, f: usize, off: f64) -> MotionSequence {
        let data = std::array::from_fn(|d| DMatrix::from_fn(j, f, |r, c| (r * 7 + c * 3 + d) as f64 * 0.1 + off));
        MotionSequence::new(data, 120.0).unwrap()
    }

    #[test]
    fn distortion_examples() {
        let a = seq(1, 1, 0.0);
        let mut data = a.data().clone();
        data[0][(0, 0)] += 3.0;
        data[1][(0, 0)] += 4.0;
        let b = MotionSequence::new(data, 120.0).unwrap();
        assert_eq!(distortion(&a, &a).unwrap(), 0.0);
        assert!((distortion(&a, &b).unwrap() - 5.0).abs() < 1e-12);

        let a = seq(2, 2, 0.0);
        let mut data = a.data().clone();
        data[0][(1, 0)] += 1.0;
        let b = MotionSequence::new(data, 120.0).unwrap();
        assert!((distortion(&a, &b).unwrap() - 0.25).abs() < 1e-12);
        let pj = per_joint_distortion(&a, &b).unwrap();
        assert_eq!(pj[0], 0.0);
        assert!((pj[1] - 0.5).abs() < 1e-12);
        assert!(distortion(&a, &seq(3, 2, 0.0)).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(compression_ratio(100, 31, 3720).unwrap(), 10.0);
        assert_eq!(compression_ratio(10, 2, 10 * 2 * 12).unwrap(), 1.0);
        assert!(compression_ratio(1, 1, 0).is_err());
    }

    #[test]
    fn kept_counts() {
        assert_eq!(kept_count(1.0, 31).unwrap(), 31);
        assert_eq!(kept_count(0.25, 31).unwrap(), 8);
        assert_eq!(kept_count(0.1, 31).unwrap(), 4);
        assert_eq!(kept_count(0.25, 8).unwrap(), 2);
        assert!(kept_count(0.0, 8).is_err());
        assert!(kept_count(1.5, 8).is_err());
    }

    #[test]
    fn full_fraction_is_lossless() {
        let s = seq(31, 12, 2.0);
        for t in [SpatialTransform::Dct, SpatialTransform::HaarDwt] {
            let curve = sparsity_distortion_curve(&s, t, &[1.0]).unwrap();
            assert!(curve[0].distortion <= 1e-9, "{}", t.name());
        }
    }
}
