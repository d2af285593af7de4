//! Learning the spatial decorrelation transform.
//!
//! For each coordinate axis we look for an orthogonal `J x J` matrix `B` and
//! sparse codes `E` (at most `P` nonzeros per column) minimizing
//! `||B M - E||_F²` over the training frames `M`. The problem is solved by
//! alternating two exact steps:
//!
//! * sparse step: with `B` fixed, each column of `E` is the truncation of the
//!   matching column of `B M` to its `P` largest-magnitude entries;
//! * Procrustes step: with `E` fixed, `B = V Uᵀ` where `M Eᵀ = U S Vᵀ`, which
//!   maximizes `Tr(B M Eᵀ)` over orthogonal matrices.
//!
//! Each step solves its subproblem exactly, so the objective never increases.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::motion::MotionSequence;
use crate::transforms::{
    haar_basis, orthogonality_error, truncate_in_place, spatial_dct, BasisKind, OrthonormalBasis,
};

pub const DEFAULT_SPARSITY: usize = 8;
pub const DEFAULT_MAX_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-8;
/// Number of iterations the early-stop test looks back over.
pub const STOP_WINDOW: usize = 10;
/// Haar levels used for the `haar` initialization.
pub const HAAR_LEVELS: u32 = 3;

pub const MODEL_MAGIC: &[u8; 4] = b"LSDT";
pub const MODEL_VERSION: u16 = 1;
const MODEL_HEADER_LEN: usize = 4 + 2 + 2 + 2 + 4 + 8 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Dct,
    Haar,
    Identity,
}

impl InitKind {
    pub fn code(self) -> u8 {
        match self {
            InitKind::Dct => 0,
            InitKind::Haar => 1,
            InitKind::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(InitKind::Dct),
            1 => Ok(InitKind::Haar),
            2 => Ok(InitKind::Identity),
            other => Err(Error::FormatMismatch(format!("unknown init code {other}"))),
        }
    }

    /// The starting orthogonal matrix for `joints` markers.
    pub fn basis(self, joints: usize) -> Result<OrthonormalBasis> {
        match self {
            InitKind::Dct => spatial_dct(joints),
            InitKind::Haar => haar_basis(joints, HAAR_LEVELS),
            InitKind::Identity => Ok(OrthonormalBasis::identity(joints)),
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Dct => "dct",
            InitKind::Haar => "haar",
            InitKind::Identity => "identity",
        })
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dct" => Ok(InitKind::Dct),
            "haar" | "dwt" => Ok(InitKind::Haar),
            "identity" => Ok(InitKind::Identity),
            other => Err(Error::invalid(format!("unknown init {other:?}"))),
        }
    }
}

/// Which vectors of a sequence become training columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FrameSource {
    /// Raw frames `m_i`.
    #[default]
    Raw,
    /// Frame differences `m_i - m_{i-1}`, closer to what the frame codec sees.
    Residual,
}

/// Training columns for each axis.
#[derive(Debug, Clone)]
pub struct TrainingBatch {
    pub m: [DMatrix<f64>; 3],
    pub source: String,
}

impl TrainingBatch {
    pub fn new(m: [DMatrix<f64>; 3], source: impl Into<String>) -> Result<Self> {
        let shape = m[0].shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::invalid("training batch needs J >= 1 and N >= 1"));
        }
        if m.iter().any(|a| a.shape() != shape) {
            return Err(Error::shape("training matrices differ in shape"));
        }
        if m.iter().any(|a| a.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFiniteValue {
                location: "training batch".into(),
            });
        }
        Ok(Self {
            m,
            source: source.into(),
        })
    }

    /// Concatenates the frames of `seqs` (or their successive differences).
    pub fn from_sequences(seqs: &[MotionSequence], source: FrameSource) -> Result<Self> {
        let first = seqs
            .first()
            .ok_or_else(|| Error::invalid("no training sequences"))?;
        let joints = first.joints();
        if seqs.iter().any(|s| s.joints() != joints) {
            return Err(Error::shape("training sequences differ in marker count"));
        }
        let columns: usize = seqs
            .iter()
            .map(|s| match source {
                FrameSource::Raw => s.frames(),
                FrameSource::Residual => s.frames() - 1,
            })
            .sum();
        if columns == 0 {
            return Err(Error::invalid("training sequences contain no usable frames"));
        }
        let mut m = [
            DMatrix::zeros(joints, columns),
            DMatrix::zeros(joints, columns),
            DMatrix::zeros(joints, columns),
        ];
        let mut col = 0;
        for seq in seqs {
            for (d, dst) in m.iter_mut().enumerate() {
                let src = &seq.data()[d];
                match source {
                    FrameSource::Raw => {
                        dst.columns_mut(col, src.ncols()).copy_from(src);
                    }
                    FrameSource::Residual => {
                        for i in 1..src.ncols() {
                            dst.set_column(col + i - 1, &(src.column(i) - src.column(i - 1)));
                        }
                    }
                }
            }
            col += match source {
                FrameSource::Raw => seq.frames(),
                FrameSource::Residual => seq.frames() - 1,
            };
        }
        let label = match source {
            FrameSource::Raw => "raw frames",
            FrameSource::Residual => "frame residuals",
        };
        Self::new(m, format!("{label} of {} sequence(s)", seqs.len()))
    }

    pub fn joints(&self) -> usize {
        self.m[0].nrows()
    }

    pub fn len(&self) -> usize {
        self.m[0].ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_sparsity(joints: usize, sparsity: usize) -> Result<()> {
    if sparsity == 0 || sparsity > joints {
        return Err(Error::invalid(format!(
            "sparsity P must be in 1..={joints}, got {sparsity}"
        )));
    }
    Ok(())
}

/// Truncates every column of `G` to its `sparsity` largest-magnitude entries
/// and returns the squared norm of what was dropped.
fn truncate_columns(g: &mut DMatrix<f64>, sparsity: usize) -> f64 {
    let rows = g.nrows();
    let mut scratch = Vec::with_capacity(rows);
    g.as_mut_slice()
        .chunks_exact_mut(rows)
        .map(|col| truncate_in_place(col, sparsity, &mut scratch))
        .sum()
}

/// `||C - E||_F²`, summed in storage order.
fn residual_energy(c: &DMatrix<f64>, e: &DMatrix<f64>) -> f64 {
    c.iter().zip(e.iter()).fold(0.0, |acc, (a, b)| acc + (a - b) * (a - b))
}

/// `M Eᵀ`, visiting only the nonzeros of `E`.
fn sparse_cross(m: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    let j = m.nrows();
    let mut cross = DMatrix::zeros(j, e.nrows());
    let out = cross.as_mut_slice();
    for (mi, ei) in m.as_slice().chunks_exact(j).zip(e.as_slice().chunks_exact(e.nrows())) {
        for (k, &w) in ei.iter().enumerate() {
            if w != 0.0 {
                for (c, &v) in out[k * j..(k + 1) * j].iter_mut().zip(mi) {
                    *c += w * v;
                }
            }
        }
    }
    cross
}

/// Sparse step: `E = T(B M)` column by column.
pub fn sparse_step(basis: &DMatrix<f64>, m: &DMatrix<f64>, sparsity: usize) -> Result<DMatrix<f64>> {
    if !basis.is_square() || basis.ncols() != m.nrows() {
        return Err(Error::shape(format!(
            "basis {}x{} does not conform to data {}x{}",
            basis.nrows(),
            basis.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    check_sparsity(m.nrows(), sparsity)?;
    let mut e = basis * m;
    truncate_columns(&mut e, sparsity);
    Ok(e)
}

/// Procrustes step: the orthogonal `B` maximizing `Tr(B M Eᵀ)`, i.e.
/// `B = V Uᵀ` for `M Eᵀ = U S Vᵀ`.
pub fn procrustes_step(m: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.shape() != e.shape() {
        return Err(Error::shape(format!(
            "data {:?} and codes {:?} differ in shape",
            m.shape(),
            e.shape()
        )));
    }
    procrustes_from_cross(m * e.transpose())
}

fn procrustes_from_cross(cross: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if cross.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure("non-finite cross-correlation".into()));
    }
    let svd = cross
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::SvdFailure("SVD did not converge".into()))?;
    let mut u = svd.u.unwrap();
    let mut v_t = svd.v_t.unwrap();
    // Fix the sign of each singular pair: the largest-magnitude entry of every
    // left singular vector is nonnegative. B itself is unaffected.
    for i in 0..u.ncols() {
        let col = u.column(i);
        let pivot = col.iter().copied().fold(0.0f64, |best, v| {
            if v.abs() > best.abs() {
                v
            } else {
                best
            }
        });
        if pivot < 0.0 {
            u.column_mut(i).neg_mut();
            v_t.row_mut(i).neg_mut();
        }
    }
    Ok(v_t.tr_mul(&u.transpose()))
}

/// `||B M - E||_F²`.
pub fn objective(basis: &DMatrix<f64>, m: &DMatrix<f64>, e: &DMatrix<f64>) -> Result<f64> {
    if basis.ncols() != m.nrows() || basis.nrows() != e.nrows() || m.ncols() != e.ncols() {
        return Err(Error::shape("objective operands do not conform"));
    }
    Ok((basis * m - e).norm_squared())
}

/// Training parameters shared by all axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub sparsity: usize,
    pub max_iters: usize,
    /// Stop once the objective drops by less than this fraction over
    /// [`STOP_WINDOW`] iterations.
    pub tol: f64,
    pub init: InitKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            sparsity: DEFAULT_SPARSITY,
            max_iters: DEFAULT_MAX_ITERS,
            tol: DEFAULT_TOL,
            init: InitKind::Dct,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, joints: usize) -> Result<()> {
        check_sparsity(joints, self.sparsity)?;
        if self.max_iters == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Objective values after each half of one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfSteps {
    pub after_sparse: f64,
    pub after_procrustes: f64,
}

/// Alternating minimization for a single axis, advanced one iteration at a
/// time.
pub struct AxisTrainer<'a> {
    m: &'a DMatrix<f64>,
    sparsity: usize,
    basis: DMatrix<f64>,
    /// `B M` for the current basis.
    coeffs: DMatrix<f64>,
}

impl<'a> AxisTrainer<'a> {
    pub fn new(m: &'a DMatrix<f64>, sparsity: usize, init: DMatrix<f64>) -> Result<Self> {
        check_sparsity(m.nrows(), sparsity)?;
        if init.shape() != (m.nrows(), m.nrows()) {
            return Err(Error::shape("initial basis does not match marker count"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                location: "training batch".into(),
            });
        }
        Ok(Self {
            m,
            sparsity,
            coeffs: &init * m,
            basis: init,
        })
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    /// One sparse step followed by one Procrustes step.
    pub fn step(&mut self) -> Result<HalfSteps> {
        let mut e = self.coeffs.clone();
        truncate_columns(&mut e, self.sparsity);
        // Both half-steps are scored by the same summation. Once the support
        // settles, every term of the sparse score is then <= the matching
        // term of the previous refit, so the reported sequence is monotone
        // in floating point, not just in exact arithmetic.
        let after_sparse = residual_energy(&self.coeffs, &e);
        let candidate = procrustes_from_cross(sparse_cross(self.m, &e))?;
        let coeffs = &candidate * self.m;
        let refit = residual_energy(&coeffs, &e);
        // The refit is optimal in exact arithmetic; only accept it if rounding
        // did not make it measurably worse than the current basis.
        let after_procrustes = if refit <= after_sparse {
            self.basis = candidate;
            self.coeffs = coeffs;
            refit
        } else {
            after_sparse
        };
        Ok(HalfSteps {
            after_sparse,
            after_procrustes,
        })
    }
}

/// Result of training one axis.
#[derive(Debug, Clone)]
pub struct AxisFit {
    pub basis: DMatrix<f64>,
    /// Objective after each completed iteration.
    pub trace: Vec<f64>,
}

/// Runs the alternating minimization on one axis.
pub fn train_axis(m: &DMatrix<f64>, config: &TrainConfig) -> Result<AxisFit> {
    config.validate(m.nrows())?;
    let init = config.init.basis(m.nrows())?.into_matrix();
    let energy = m.norm_squared();
    let mut trainer = AxisTrainer::new(m, config.sparsity, init)?;
    let mut trace = Vec::with_capacity(config.max_iters);
    for _ in 0..config.max_iters {
        let steps = trainer.step()?;
        trace.push(steps.after_procrustes);
        if steps.after_procrustes <= f64::EPSILON * f64::EPSILON * energy {
            break;
        }
        if trace.len() > STOP_WINDOW {
            let then = trace[trace.len() - 1 - STOP_WINDOW];
            let now = steps.after_procrustes;
            if then > 0.0 && (then - now) / then < config.tol {
                break;
            }
        }
    }
    Ok(AxisFit {
        basis: trainer.into_basis(),
        trace,
    })
}

/// Provenance recorded with a trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    pub sparsity: usize,
    pub max_iters: usize,
    pub frames: u64,
    pub init: InitKind,
    /// Per-axis objective after each iteration. Empty for loaded models.
    pub objective_trace: [Vec<f64>; 3],
    /// Early-stop tolerance, if known.
    pub tol: Option<f64>,
}

impl TrainMeta {
    /// Metadata for bases that were not produced by training.
    pub fn untrained(init: InitKind) -> Self {
        Self {
            sparsity: 0,
            max_iters: 0,
            frames: 0,
            init,
            objective_trace: Default::default(),
            tol: None,
        }
    }
}

/// Three learned orthogonal matrices, one per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformModel {
    bases: [OrthonormalBasis; 3],
    pub meta: TrainMeta,
}

impl TransformModel {
    pub fn new(bases: [OrthonormalBasis; 3], meta: TrainMeta) -> Result<Self> {
        let j = bases[0].size();
        if bases.iter().any(|b| b.size() != j) {
            return Err(Error::shape("model bases differ in size"));
        }
        if j > u16::MAX as usize {
            return Err(Error::invalid(format!("J = {j} exceeds the 16-bit limit")));
        }
        Ok(Self { bases, meta })
    }

    /// A model built directly from an initialization, without training.
    pub fn from_init(joints: usize, init: InitKind) -> Result<Self> {
        let b = init.basis(joints)?;
        let b = OrthonormalBasis::new(b.into_matrix(), BasisKind::Custom)?;
        Self::new(
            [b.clone(), b.clone(), b],
            TrainMeta {
                sparsity: joints,
                ..TrainMeta::untrained(init)
            },
        )
    }

    pub fn joints(&self) -> usize {
        self.bases[0].size()
    }

    pub fn basis(&self, d: usize) -> &OrthonormalBasis {
        &self.bases[d]
    }

    pub fn bases(&self) -> &[OrthonormalBasis; 3] {
        &self.bases
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let j = self.joints();
        let mut out = Vec::with_capacity(MODEL_HEADER_LEN + 3 * j * j * 8 + 4);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.extend_from_slice(&(j as u16).to_le_bytes());
        out.extend_from_slice(&(self.meta.sparsity.min(u16::MAX as usize) as u16).to_le_bytes());
        out.extend_from_slice(&(self.meta.max_iters.min(u32::MAX as usize) as u32).to_le_bytes());
        out.extend_from_slice(&self.meta.frames.to_le_bytes());
        out.push(self.meta.init.code());
        for basis in &self.bases {
            let m = basis.matrix();
            for r in 0..j {
                for c in 0..j {
                    out.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::FormatMismatch("not an LSDT model file".into()));
        }
        if bytes.len() < MODEL_HEADER_LEN + 4 {
            return Err(Error::FormatMismatch("model header truncated".into()));
        }
        let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
        let version = u16_at(4);
        if version != MODEL_VERSION {
            return Err(Error::UnsupportedVersion(version as u32));
        }
        let j = u16_at(6) as usize;
        let sparsity = u16_at(8) as usize;
        let max_iters = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let frames = u64::from_le_bytes(bytes[14..22].try_into().unwrap());
        let init = InitKind::from_code(bytes[22])?;
        let expected = MODEL_HEADER_LEN + 3 * j * j * 8 + 4;
        if j == 0 || bytes.len() != expected {
            return Err(Error::FormatMismatch(format!(
                "model for J={j} should be {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut offset = MODEL_HEADER_LEN;
        let mut mats = Vec::with_capacity(3);
        for axis in ["x", "y", "z"] {
            let mut m = DMatrix::zeros(j, j);
            for r in 0..j {
                for c in 0..j {
                    m[(r, c)] = f64::from_le_bytes(bytes[offset..offset + 8].try_into().unwrap());
                    offset += 8;
                }
            }
            let err = orthogonality_error(&m);
            if !(err <= crate::transforms::ORTHONORMAL_TOL) {
                return Err(Error::InvariantViolation(format!(
                    "{axis} basis deviates from orthonormal by {err:e}"
                )));
            }
            mats.push(OrthonormalBasis::new(m, BasisKind::Learned)?);
        }
        let stored = u32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
        let computed = crc32fast::hash(&bytes[..offset]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let bases: [OrthonormalBasis; 3] = mats.try_into().unwrap();
        Self::new(
            bases,
            TrainMeta {
                sparsity,
                max_iters,
                frames,
                init,
                objective_trace: Default::default(),
                tol: None,
            },
        )
    }
}

/// Trains one basis per axis; the three axes run in parallel.
pub fn train_lsdt(batch: &TrainingBatch, config: &TrainConfig) -> Result<TransformModel> {
    config.validate(batch.joints())?;
    let fits: Vec<AxisFit> = batch
        .m
        .par_iter()
        .map(|m| train_axis(m, config))
        .collect::<Result<_>>()?;
    let mut traces: [Vec<f64>; 3] = Default::default();
    let mut bases = Vec::with_capacity(3);
    for (d, fit) in fits.into_iter().enumerate() {
        traces[d] = fit.trace;
        bases.push(OrthonormalBasis::new(fit.basis, BasisKind::Learned)?);
    }
    TransformModel::new(
        bases.try_into().unwrap(),
        TrainMeta {
            sparsity: config.sparsity,
            max_iters: config.max_iters,
            frames: batch.len() as u64,
            init: config.init,
            objective_trace: traces,
            tol: Some(config.tol),
        },
    )
}

pub fn save_model(model: &TransformModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TransformModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TransformModel::from_bytes(&bytes)
}
