//! Uniform scalar quantization with a dead zone.
//!
//! A segment of coefficients is quantized with step `Δ = max_abs / (2^(b-1) - 1)`
//! and round-half-away-from-zero. Indices that round to zero are dropped,
//! which is the hard threshold at `Δ/2`; the survivors form a
//! [`SparseVectorCode`].

use crate::error::{Error, Result};

pub const MIN_BITS: u8 = 2;
pub const MAX_BITS: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    bits: u8,
    max_abs: f32,
}

impl QuantizerSpec {
    pub fn new(bits: u8, max_abs: f32) -> Result<Self> {
        check_bits(bits)?;
        if !(max_abs.is_finite() && max_abs >= 0.0) {
            return Err(Error::invalid(format!("quantizer scale must be >= 0, got {max_abs}")));
        }
        Ok(Self { bits, max_abs })
    }

    /// Spec for a segment, with the scale rounded up to the nearest `f32`
    /// so that it still bounds every coefficient after serialization.
    pub fn for_segment<'a>(bits: u8, coeffs: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let max = coeffs.into_iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Self::new(bits, f32_ceil(max))
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn max_abs(&self) -> f32 {
        self.max_abs
    }

    /// Largest representable index magnitude, `2^(b-1) - 1`.
    pub fn max_index(&self) -> i32 {
        max_index(self.bits)
    }

    /// Step size `Δ`.
    pub fn step(&self) -> f64 {
        self.max_abs as f64 / self.max_index() as f64
    }
}

pub fn check_bits(bits: u8) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::invalid(format!(
            "quantizer bits must be in {MIN_BITS}..={MAX_BITS}, got {bits}"
        )));
    }
    Ok(())
}

pub fn max_index(bits: u8) -> i32 {
    (1i32 << (bits - 1)) - 1
}

/// Smallest `f32` that is `>= v` (for finite, non-negative `v`).
pub fn f32_ceil(v: f64) -> f32 {
    let r = v as f32;
    if (r as f64) < v {
        r.next_up()
    } else {
        r
    }
}

/// Nonzero quantization indices of one coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SparseVectorCode {
    /// Strictly increasing positions.
    pub locations: Vec<u32>,
    /// Nonzero indices, one per location.
    pub values: Vec<i32>,
}

impl SparseVectorCode {
    pub fn count(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Checks the structural invariants against a vector length.
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.locations.len() != self.values.len() {
            return Err(Error::invalid("locations and values differ in length"));
        }
        let mut prev: Option<u32> = None;
        for &loc in &self.locations {
            if loc as usize >= len {
                return Err(Error::invalid(format!("location {loc} outside 0..{len}")));
            }
            if prev.is_some_and(|p| loc <= p) {
                return Err(Error::invalid("locations are not strictly increasing"));
            }
            prev = Some(loc);
        }
        if self.values.contains(&0) {
            return Err(Error::invalid("zero value in sparse code"));
        }
        Ok(())
    }
}

/// Quantizes `coeffs`, dropping entries whose index rounds to zero.
pub fn quantize(coeffs: &[f64], spec: &QuantizerSpec) -> Result<SparseVectorCode> {
    let mut code = SparseVectorCode::default();
    quantize_into(coeffs, spec, &mut code)?;
    Ok(code)
}

/// [`quantize`] into a reusable code.
pub fn quantize_into(coeffs: &[f64], spec: &QuantizerSpec, code: &mut SparseVectorCode) -> Result<()> {
    code.locations.clear();
    code.values.clear();
    let step = spec.step();
    let max_abs = spec.max_abs as f64;
    let limit = spec.max_index();
    for (j, &c) in coeffs.iter().enumerate() {
        if !(c.abs() <= max_abs + 0.5 * step) {
            return Err(Error::QuantizerMismatch { value: c, max_abs });
        }
        if step == 0.0 {
            continue;
        }
        // f64::round is half-away-from-zero.
        let q = (c / step).round().clamp(-limit as f64, limit as f64) as i32;
        if q != 0 {
            code.locations.push(j as u32);
            code.values.push(q);
        }
    }
    Ok(())
}

/// Reconstructs a length-`len` vector from `code`.
pub fn dequantize(code: &SparseVectorCode, spec: &QuantizerSpec, len: usize) -> Result<Vec<f64>> {
    code.validate(len)?;
    let mut out = vec![0.0; len];
    dequantize_into(code, spec.step(), &mut out);
    Ok(out)
}

/// Writes `q * step` at each coded location; other entries are zeroed.
/// `code` must already be valid for `out.len()`.
pub fn dequantize_into(code: &SparseVectorCode, step: f64, out: &mut [f64]) {
    out.fill(0.0);
    for (&loc, &q) in code.locations.iter().zip(&code.values) {
        out[loc as usize] = q as f64 * step;
    }
}
