//! Orthonormal transforms: temporal/spatial DCT-II, multi-level Haar DWT,
//! the hard-truncation operator and forward/inverse application of an
//! orthogonal matrix.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Max-abs deviation from identity tolerated by every [`OrthonormalBasis`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Dct,
    HaarDwt,
    Learned,
    Custom,
}

/// A square matrix with orthonormal rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    matrix: DMatrix<f64>,
    kind: BasisKind,
}

impl OrthonormalBasis {
    /// Wraps `matrix`, checking `M Mᵀ = Mᵀ M = I` to [`ORTHONORMAL_TOL`].
    pub fn new(matrix: DMatrix<f64>, kind: BasisKind) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::shape(format!(
                "basis must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let err = orthogonality_error(&matrix);
        if !(err <= ORTHONORMAL_TOL) {
            return Err(Error::InvariantViolation(format!(
                "{kind:?} basis deviates from orthonormal by {err:e}"
            )));
        }
        Ok(Self { matrix, kind })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            kind: BasisKind::Custom,
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn transpose(&self) -> Self {
        Self {
            matrix: self.matrix.transpose(),
            kind: self.kind,
        }
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }
}

/// `max(|M Mᵀ − I|, |Mᵀ M − I|)` entrywise.
pub fn orthogonality_error(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let a = (m * m.transpose() - &eye).amax();
    let b = (m.transpose() * m - &eye).amax();
    a.max(b)
}

/// Orthonormal DCT-II matrix `U` of size `len`, with
/// `U[n][k] = a_k cos(π (2n + 1) k / (2 len))`, so that a row vector times `U`
/// gives its DCT coefficients and `U Uᵀ = I`.
pub fn dct_matrix(len: usize) -> Result<OrthonormalBasis> {
    if len == 0 {
        return Err(Error::invalid("DCT length must be at least 1"));
    }
    let l = len as f64;
    let a0 = (1.0 / l).sqrt();
    let ak = (2.0 / l).sqrt();
    let m = DMatrix::from_fn(len, len, |n, k| {
        let alpha = if k == 0 { a0 } else { ak };
        alpha * (PI * (2 * n + 1) as f64 * k as f64 / (2.0 * l)).cos()
    });
    OrthonormalBasis::new(m, BasisKind::Dct)
}

/// Spatial DCT as a left-multiplied transform: rows of the returned matrix are
/// the DCT basis functions, so `B x` gives the coefficients of column `x`.
pub fn spatial_dct(len: usize) -> Result<OrthonormalBasis> {
    Ok(dct_matrix(len)?.transpose())
}

/// Length after zero padding `len` to a multiple of `2^levels`.
pub fn haar_padded_len(len: usize, levels: u32) -> usize {
    let block = 1usize << levels;
    len.div_ceil(block).max(1) * block
}

/// Orthonormal multi-level Haar analysis. The input is zero-padded to
/// [`haar_padded_len`]; the output is laid out as
/// `[approx_L, detail_L, ..., detail_1]`.
pub fn haar_dwt_forward(v: &[f64], levels: u32) -> Result<Vec<f64>> {
    if levels == 0 {
        return Err(Error::invalid("Haar levels must be at least 1"));
    }
    let n = haar_padded_len(v.len(), levels);
    let mut buf = vec![0.0; n];
    buf[..v.len()].copy_from_slice(v);
    let mut tmp = vec![0.0; n];
    let mut width = n;
    for _ in 0..levels {
        let half = width / 2;
        for i in 0..half {
            let (a, b) = (buf[2 * i], buf[2 * i + 1]);
            tmp[i] = (a + b) * FRAC_1_SQRT_2;
            tmp[half + i] = (a - b) * FRAC_1_SQRT_2;
        }
        buf[..width].copy_from_slice(&tmp[..width]);
        width = half;
    }
    Ok(buf)
}

/// Inverse of [`haar_dwt_forward`]; returns the padded-length signal.
pub fn haar_dwt_inverse(coeffs: &[f64], levels: u32) -> Result<Vec<f64>> {
    if levels == 0 {
        return Err(Error::invalid("Haar levels must be at least 1"));
    }
    let n = coeffs.len();
    if n == 0 || n % (1usize << levels) != 0 {
        return Err(Error::shape(format!(
            "Haar coefficient length {n} is not a multiple of 2^{levels}"
        )));
    }
    let mut buf = coeffs.to_vec();
    let mut tmp = vec![0.0; n];
    let mut width = n >> (levels - 1);
    for _ in 0..levels {
        let half = width / 2;
        for i in 0..half {
            let (a, d) = (buf[i], buf[half + i]);
            tmp[2 * i] = (a + d) * FRAC_1_SQRT_2;
            tmp[2 * i + 1] = (a - d) * FRAC_1_SQRT_2;
        }
        buf[..width].copy_from_slice(&tmp[..width]);
        width *= 2;
    }
    Ok(buf)
}

/// A `len x len` orthonormal matrix built from the Haar analysis functions.
///
/// When `len` is a multiple of `2^levels` this is exactly the Haar analysis
/// matrix. Otherwise the leading `len x len` block of the padded analysis
/// matrix is projected onto the nearest orthogonal matrix (its polar factor).
pub fn haar_basis(len: usize, levels: u32) -> Result<OrthonormalBasis> {
    if len == 0 {
        return Err(Error::invalid("Haar basis size must be at least 1"));
    }
    let padded = haar_padded_len(len, levels);
    let mut full = DMatrix::zeros(padded, padded);
    let mut unit = vec![0.0; padded];
    for col in 0..padded {
        unit.fill(0.0);
        unit[col] = 1.0;
        let c = haar_dwt_forward(&unit, levels)?;
        full.set_column(col, &DVector::from_vec(c));
    }
    let m = if padded == len {
        full
    } else {
        nearest_orthogonal(&full.view((0, 0), (len, len)).into_owned())?
    };
    OrthonormalBasis::new(m, BasisKind::HaarDwt)
}

/// Polar factor `U Vᵀ` of `m = U S Vᵀ`: the orthogonal matrix closest to `m`
/// in Frobenius norm.
pub fn nearest_orthogonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = m.clone().try_svd(true, true, f64::EPSILON, 0).ok_or_else(|| {
        Error::SvdFailure("polar decomposition did not converge".into())
    })?;
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    Ok(u * v_t)
}

/// Keeps the `keep` largest-magnitude entries of `g` in place, zeroes the
/// rest and returns the squared norm of what was zeroed. When magnitudes tie
/// at the cut, lower indices are kept. `scratch` is reused between calls.
pub fn truncate_in_place(g: &mut [f64], keep: usize, scratch: &mut Vec<u64>) -> f64 {
    if keep >= g.len() {
        return 0.0;
    }
    if keep == 0 {
        let dropped = g.iter().map(|v| v * v).sum();
        g.fill(0.0);
        return dropped;
    }
    // Bit patterns of non-negative floats order like the floats themselves.
    scratch.clear();
    scratch.extend(g.iter().map(|v| v.abs().to_bits()));
    let at = g.len() - keep;
    let cut = f64::from_bits(*scratch.select_nth_unstable(at).1);
    let above = g.iter().filter(|v| v.abs() > cut).count();
    let mut ties = keep - above;
    let mut dropped = 0.0;
    for v in g.iter_mut() {
        let a = v.abs();
        if a > cut {
            continue;
        }
        if a == cut && ties > 0 {
            ties -= 1;
            continue;
        }
        dropped += *v * *v;
        *v = 0.0;
    }
    dropped
}

/// The truncation operator: best approximation of `g` with at most `keep`
/// nonzeros.
pub fn truncate(g: &[f64], keep: usize) -> Result<Vec<f64>> {
    if keep > g.len() {
        return Err(Error::invalid(format!(
            "cannot keep {keep} entries of a length-{} vector",
            g.len()
        )));
    }
    let mut out = g.to_vec();
    truncate_in_place(&mut out, keep, &mut Vec::new());
    Ok(out)
}

/// `B X`.
pub fn apply_forward(basis: &OrthonormalBasis, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.nrows() != basis.size() {
        return Err(Error::shape(format!(
            "basis of size {} applied to {} rows",
            basis.size(),
            x.nrows()
        )));
    }
    Ok(basis.matrix() * x)
}

/// `Bᵀ Y`, the exact inverse of [`apply_forward`].
pub fn apply_inverse(basis: &OrthonormalBasis, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if y.nrows() != basis.size() {
        return Err(Error::shape(format!(
            "basis of size {} applied to {} rows",
            basis.size(),
            y.nrows()
        )));
    }
    Ok(basis.matrix().tr_mul(y))
}
