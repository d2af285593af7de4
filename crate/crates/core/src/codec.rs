//! The frame-based (predictive) and clip-based (temporal DCT) codecs.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bitio::BitWriter;
use crate::entropy::{encode_payload, encode_vector, EntropyTables};
use crate::error::{Error, Result};
use crate::lsdt::TransformModel;
use crate::motion::{clip_lengths, MotionSequence, DEFAULT_FPS};
use crate::quant::{check_bits, dequantize_into, quantize, QuantizerSpec, SparseVectorCode};
use crate::stream::{CodecKind, CompressedStream};
use crate::transforms::dct_matrix;

/// Everything needed to pick and parameterize an encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    pub codec: CodecKind,
    pub bits: u8,
    /// Clip length; ignored by the frame codec.
    pub clip_len: usize,
}

impl CodecConfig {
    pub fn frame(bits: u8) -> Self {
        Self {
            codec: CodecKind::Frame,
            bits,
            clip_len: 0,
        }
    }

    pub fn clip(clip_len: usize, bits: u8) -> Self {
        Self {
            codec: CodecKind::Clip,
            bits,
            clip_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)?;
        if self.codec == CodecKind::Clip && !(1..=u16::MAX as usize).contains(&self.clip_len) {
            return Err(Error::invalid(format!(
                "clip length must be in 1..={}, got {}",
                u16::MAX,
                self.clip_len
            )));
        }
        Ok(())
    }
}

/// One coded block: a frame's coefficient vector or a clip's coefficient
/// matrix, for one axis.
#[derive(Debug, Clone)]
pub struct BlockTrace {
    pub segment: usize,
    pub axis: usize,
    pub spec: QuantizerSpec,
    /// Transform coefficients before quantization.
    pub coeffs: DMatrix<f64>,
    pub dequantized: DMatrix<f64>,
}

/// Encoder-side view of a run: every coded block and the reconstruction the
/// encoder predicts the decoder will produce.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    pub blocks: Vec<BlockTrace>,
    pub reconstruction: MotionSequence,
}

fn check_model(model: &TransformModel, joints: usize) -> Result<()> {
    if model.joints() != joints {
        return Err(Error::ModelMismatch(format!(
            "model has J={}, data has J={joints}",
            model.joints()
        )));
    }
    Ok(())
}

fn check_stream(stream: &CompressedStream, model: &TransformModel, codec: CodecKind) -> Result<()> {
    if stream.codec != codec {
        return Err(Error::FormatMismatch(format!(
            "expected a {codec} stream, found {}",
            stream.codec
        )));
    }
    check_model(model, stream.joints)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    codec: CodecKind,
    joints: usize,
    frames: usize,
    clip_len: usize,
    bits: u8,
    scales: [Vec<f32>; 3],
    codes: &[SparseVectorCode],
    tables: EntropyTables,
) -> Result<CompressedStream> {
    if joints > u16::MAX as usize || frames > u32::MAX as usize {
        return Err(Error::invalid(format!(
            "J={joints}, F={frames} exceed the stream header range"
        )));
    }
    let payload = encode_payload(codes, joints, bits, &tables)?;
    Ok(CompressedStream {
        codec,
        joints,
        frames,
        clip_len,
        bits,
        scales,
        tables,
        payload_bits: payload.bit_len(),
        payload: payload.into_bytes(),
    })
}

pub fn encode(seq: &MotionSequence, model: &TransformModel, config: &CodecConfig) -> Result<CompressedStream> {
    config.validate()?;
    match config.codec {
        CodecKind::Frame => encode_frame_based(seq, model, config.bits),
        CodecKind::Clip => encode_clip_based(seq, model, config.clip_len, config.bits),
    }
}

pub fn encode_traced(
    seq: &MotionSequence,
    model: &TransformModel,
    config: &CodecConfig,
) -> Result<(CompressedStream, EncodeTrace)> {
    config.validate()?;
    match config.codec {
        CodecKind::Frame => encode_frame_based_traced(seq, model, config.bits),
        CodecKind::Clip => encode_clip_based_traced(seq, model, config.clip_len, config.bits),
    }
}

pub fn decode(stream: &CompressedStream, model: &TransformModel) -> Result<MotionSequence> {
    match stream.codec {
        CodecKind::Frame => decode_frame_based(stream, model),
        CodecKind::Clip => decode_clip_based(stream, model),
    }
}

// Frame codec

/// Output of the frame encoder for one frame.
#[derive(Debug, Clone)]
pub struct EncodedFrame {
    pub index: usize,
    pub specs: [QuantizerSpec; 3],
    pub codes: [SparseVectorCode; 3],
    pub coeffs: [DVector<f64>; 3],
    pub dequantized: [DVector<f64>; 3],
}

/// `recon += Bᵀ ĉ`; shared by encoder and decoder so both sides run the
/// same arithmetic.
fn advance(recon: &mut DVector<f64>, basis: &DMatrix<f64>, dequantized: &DVector<f64>) {
    *recon += basis.tr_mul(dequantized);
}

/// Closed-loop predictive encoder. Each frame is coded against the
/// reconstruction of the previous one, starting from zero.
#[derive(Debug, Clone)]
pub struct FrameEncoder<'m> {
    model: &'m TransformModel,
    bits: u8,
    frames: usize,
    recon: [DVector<f64>; 3],
}

impl<'m> FrameEncoder<'m> {
    pub fn new(model: &'m TransformModel, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        let j = model.joints();
        Ok(Self {
            model,
            bits,
            frames: 0,
            recon: std::array::from_fn(|_| DVector::zeros(j)),
        })
    }

    pub fn frames_encoded(&self) -> usize {
        self.frames
    }

    /// The reconstruction of the last encoded frame (zero before the first).
    pub fn reconstruction(&self) -> &[DVector<f64>; 3] {
        &self.recon
    }

    /// Codes one frame given per-axis coordinate slices, scaling each axis by
    /// its own coefficient range.
    pub fn encode_frame(&mut self, frame: [&[f64]; 3]) -> Result<EncodedFrame> {
        self.encode_frame_with(frame, None)
    }

    /// Like [`FrameEncoder::encode_frame`], but with caller-chosen scales.
    pub fn encode_frame_with(&mut self, frame: [&[f64]; 3], scales: Option<[f32; 3]>) -> Result<EncodedFrame> {
        let j = self.model.joints();
        for (d, values) in frame.iter().enumerate() {
            if values.len() != j {
                return Err(Error::ModelMismatch(format!(
                    "frame {} axis {d} has {} values, model has J={j}",
                    self.frames,
                    values.len()
                )));
            }
            if let Some(k) = values.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteValue {
                    location: format!("frame {}, joint {k}", self.frames),
                });
            }
        }
        let mut specs = Vec::with_capacity(3);
        let mut codes = Vec::with_capacity(3);
        let mut coeffs = Vec::with_capacity(3);
        let mut dequantized = Vec::with_capacity(3);
        for d in 0..3 {
            let basis = self.model.basis(d).matrix();
            let residual = DVector::from_iterator(
                j,
                frame[d].iter().zip(self.recon[d].iter()).map(|(m, p)| m - p),
            );
            let c = basis * residual;
            let spec = match scales {
                Some(s) => QuantizerSpec::new(self.bits, s[d])?,
                None => QuantizerSpec::for_segment(self.bits, c.iter())?,
            };
            let code = quantize(c.as_slice(), &spec)?;
            let mut chat = DVector::zeros(j);
            dequantize_into(&code, spec.step(), chat.as_mut_slice());
            advance(&mut self.recon[d], basis, &chat);
            specs.push(spec);
            codes.push(code);
            coeffs.push(c);
            dequantized.push(chat);
        }
        let index = self.frames;
        self.frames += 1;
        Ok(EncodedFrame {
            index,
            specs: specs.try_into().unwrap(),
            codes: codes.try_into().unwrap(),
            coeffs: coeffs.try_into().unwrap(),
            dequantized: dequantized.try_into().unwrap(),
        })
    }
}

/// Mirror of [`FrameEncoder`] on the decoding side.
#[derive(Debug, Clone)]
pub struct FrameDecoder<'m> {
    model: &'m TransformModel,
    bits: u8,
    recon: [DVector<f64>; 3],
    scratch: DVector<f64>,
}

impl<'m> FrameDecoder<'m> {
    pub fn new(model: &'m TransformModel, bits: u8) -> Result<Self> {
        check_bits(bits)?;
        let j = model.joints();
        Ok(Self {
            model,
            bits,
            recon: std::array::from_fn(|_| DVector::zeros(j)),
            scratch: DVector::zeros(j),
        })
    }

    pub fn decode_frame(&mut self, codes: [&SparseVectorCode; 3], scales: [f32; 3]) -> Result<&[DVector<f64>; 3]> {
        let j = self.model.joints();
        for d in 0..3 {
            codes[d].validate(j).map_err(|e| Error::corrupt(e.to_string()))?;
            let spec = QuantizerSpec::new(self.bits, scales[d])?;
            dequantize_into(codes[d], spec.step(), self.scratch.as_mut_slice());
            advance(&mut self.recon[d], self.model.basis(d).matrix(), &self.scratch);
        }
        Ok(&self.recon)
    }
}

fn frame_slices(seq: &MotionSequence, i: usize) -> [&[f64]; 3] {
    let j = seq.joints();
    std::array::from_fn(|d| &seq.data()[d].as_slice()[i * j..(i + 1) * j])
}

struct FrameRun {
    scales: [Vec<f32>; 3],
    codes: Vec<SparseVectorCode>,
    trace: Option<EncodeTrace>,
}

fn run_frame_encoder(seq: &MotionSequence, model: &TransformModel, bits: u8, traced: bool) -> Result<FrameRun> {
    check_model(model, seq.joints())?;
    let (j, f) = (seq.joints(), seq.frames());
    let mut encoder = FrameEncoder::new(model, bits)?;
    let mut scales: [Vec<f32>; 3] = std::array::from_fn(|_| Vec::with_capacity(f));
    let mut codes = Vec::with_capacity(3 * f);
    let mut blocks = Vec::new();
    let mut recon: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(j, if traced { f } else { 0 }));
    for i in 0..f {
        let out = encoder.encode_frame(frame_slices(seq, i))?;
        for d in 0..3 {
            scales[d].push(out.specs[d].max_abs());
            if traced {
                recon[d].set_column(i, &encoder.reconstruction()[d]);
                blocks.push(BlockTrace {
                    segment: i,
                    axis: d,
                    spec: out.specs[d],
                    coeffs: DMatrix::from_column_slice(j, 1, out.coeffs[d].as_slice()),
                    dequantized: DMatrix::from_column_slice(j, 1, out.dequantized[d].as_slice()),
                });
            }
        }
        codes.extend(out.codes);
    }
    let trace = if traced {
        Some(EncodeTrace {
            blocks,
            reconstruction: MotionSequence::new(recon, seq.frame_rate())?,
        })
    } else {
        None
    };
    Ok(FrameRun { scales, codes, trace })
}

/// Offline frame codec: two passes, with Huffman tables fitted to the data.
pub fn encode_frame_based(seq: &MotionSequence, model: &TransformModel, bits: u8) -> Result<CompressedStream> {
    let run = run_frame_encoder(seq, model, bits, false)?;
    let tables = EntropyTables::from_codes(&run.codes)?;
    assemble(CodecKind::Frame, seq.joints(), seq.frames(), 0, bits, run.scales, &run.codes, tables)
}

pub fn encode_frame_based_traced(
    seq: &MotionSequence,
    model: &TransformModel,
    bits: u8,
) -> Result<(CompressedStream, EncodeTrace)> {
    let run = run_frame_encoder(seq, model, bits, true)?;
    let tables = EntropyTables::from_codes(&run.codes)?;
    let stream = assemble(CodecKind::Frame, seq.joints(), seq.frames(), 0, bits, run.scales, &run.codes, tables)?;
    Ok((stream, run.trace.unwrap()))
}

/// Frame codec with tables fixed in advance, as in streaming mode.
pub fn encode_frame_based_with_tables(
    seq: &MotionSequence,
    model: &TransformModel,
    bits: u8,
    tables: &EntropyTables,
) -> Result<CompressedStream> {
    let run = run_frame_encoder(seq, model, bits, false)?;
    assemble(
        CodecKind::Frame,
        seq.joints(),
        seq.frames(),
        0,
        bits,
        run.scales,
        &run.codes,
        tables.clone(),
    )
}

pub fn decode_frame_based(stream: &CompressedStream, model: &TransformModel) -> Result<MotionSequence> {
    check_stream(stream, model, CodecKind::Frame)?;
    let (j, f) = (stream.joints, stream.frames);
    let codes = stream.decode_codes()?;
    let mut decoder = FrameDecoder::new(model, stream.bits)?;
    let mut out: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(j, f));
    for i in 0..f {
        let frame = decoder.decode_frame(
            [&codes[3 * i], &codes[3 * i + 1], &codes[3 * i + 2]],
            [stream.scales[0][i], stream.scales[1][i], stream.scales[2][i]],
        )?;
        for d in 0..3 {
            out[d].set_column(i, &frame[d]);
        }
    }
    MotionSequence::new(out, DEFAULT_FPS)
}

/// Bits appended to the payload by one streamed frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameEmission {
    pub index: usize,
    pub bits: u64,
}

/// Frame codec that writes each frame's payload bits as soon as the frame
/// arrives. The tables must be fixed up front; the container is completed
/// by [`StreamingFrameEncoder::finish`].
#[derive(Debug, Clone)]
pub struct StreamingFrameEncoder<'m> {
    encoder: FrameEncoder<'m>,
    tables: EntropyTables,
    payload: BitWriter,
    scales: [Vec<f32>; 3],
}

impl<'m> StreamingFrameEncoder<'m> {
    pub fn new(model: &'m TransformModel, bits: u8, tables: EntropyTables) -> Result<Self> {
        Ok(Self {
            encoder: FrameEncoder::new(model, bits)?,
            tables,
            payload: BitWriter::new(),
            scales: Default::default(),
        })
    }

    pub fn push_frame(&mut self, frame: [&[f64]; 3]) -> Result<FrameEmission> {
        let out = self.encoder.encode_frame(frame)?;
        let j = self.encoder.model.joints();
        let before = self.payload.bit_len();
        for d in 0..3 {
            encode_vector(&out.codes[d], j, self.encoder.bits, &self.tables, &mut self.payload)?;
            self.scales[d].push(out.specs[d].max_abs());
        }
        Ok(FrameEmission {
            index: out.index,
            bits: self.payload.bit_len() - before,
        })
    }

    /// Payload bits emitted so far.
    pub fn payload(&self) -> &BitWriter {
        &self.payload
    }

    pub fn reconstruction(&self) -> &[DVector<f64>; 3] {
        self.encoder.reconstruction()
    }

    pub fn finish(self) -> Result<CompressedStream> {
        let frames = self.encoder.frames_encoded();
        if frames == 0 {
            return Err(Error::invalid("no frames were encoded"));
        }
        let joints = self.encoder.model.joints();
        if joints > u16::MAX as usize || frames > u32::MAX as usize {
            return Err(Error::invalid("sequence exceeds the stream header range"));
        }
        Ok(CompressedStream {
            codec: CodecKind::Frame,
            joints,
            frames,
            clip_len: 0,
            bits: self.encoder.bits,
            scales: self.scales,
            tables: self.tables,
            payload_bits: self.payload.bit_len(),
            payload: self.payload.into_bytes(),
        })
    }
}

// Clip codec

/// Per-run state of the clip codec: the model plus temporal DCT bases for
/// every clip length the run needs.
#[derive(Debug, Clone)]
pub struct ClipCodecPlan<'m> {
    model: &'m TransformModel,
    clip_len: usize,
    bits: u8,
    /// Clip length -> (U_t, U_tᵀ).
    dct: HashMap<usize, (DMatrix<f64>, DMatrix<f64>)>,
}

struct CodedClip {
    specs: [QuantizerSpec; 3],
    /// Axis-major, then column.
    codes: Vec<SparseVectorCode>,
    blocks: Vec<BlockTrace>,
    recon: Option<[DMatrix<f64>; 3]>,
}

impl<'m> ClipCodecPlan<'m> {
    pub fn new(model: &'m TransformModel, clip_len: usize, bits: u8, frames: usize) -> Result<Self> {
        CodecConfig::clip(clip_len, bits).validate()?;
        let mut dct = HashMap::new();
        for len in clip_lengths(frames, clip_len) {
            if let std::collections::hash_map::Entry::Vacant(e) = dct.entry(len) {
                let u = dct_matrix(len)?.into_matrix();
                let ut = u.transpose();
                e.insert((u, ut));
            }
        }
        Ok(Self {
            model,
            clip_len,
            bits,
            dct,
        })
    }

    pub fn clip_len(&self) -> usize {
        self.clip_len
    }

    /// The cached temporal DCT of length `len`, if this plan uses it.
    pub fn temporal_basis(&self, len: usize) -> Option<&DMatrix<f64>> {
        self.dct.get(&len).map(|(u, _)| u)
    }

    fn bases(&self, len: usize) -> Result<&(DMatrix<f64>, DMatrix<f64>)> {
        self.dct
            .get(&len)
            .ok_or_else(|| Error::invalid(format!("no temporal basis prepared for clip length {len}")))
    }

    fn encode_clip(&self, seq: &MotionSequence, index: usize, start: usize, len: usize, traced: bool) -> Result<CodedClip> {
        let j = seq.joints();
        let (u, ut) = self.bases(len)?;
        let mut specs = Vec::with_capacity(3);
        let mut codes = Vec::with_capacity(3 * len);
        let mut blocks = Vec::new();
        let mut recon = Vec::new();
        for d in 0..3 {
            let basis = self.model.basis(d).matrix();
            let temporal = seq.data()[d].columns(start, len) * u;
            let c = basis * temporal;
            let spec = QuantizerSpec::for_segment(self.bits, c.iter())?;
            let mut chat = DMatrix::zeros(j, len);
            for k in 0..len {
                let code = quantize(&c.as_slice()[k * j..(k + 1) * j], &spec)?;
                if traced {
                    dequantize_into(&code, spec.step(), &mut chat.as_mut_slice()[k * j..(k + 1) * j]);
                }
                codes.push(code);
            }
            if traced {
                recon.push(basis.tr_mul(&chat) * ut);
                blocks.push(BlockTrace {
                    segment: index,
                    axis: d,
                    spec,
                    coeffs: c,
                    dequantized: chat,
                });
            }
            specs.push(spec);
        }
        Ok(CodedClip {
            specs: specs.try_into().unwrap(),
            codes,
            blocks,
            recon: traced.then(|| recon.try_into().unwrap()),
        })
    }

    /// Reconstructs one clip from its `3 * len` codes (axis-major).
    pub fn decode_clip(&self, codes: &[SparseVectorCode], scales: [f32; 3], len: usize) -> Result<[DMatrix<f64>; 3]> {
        let j = self.model.joints();
        if codes.len() != 3 * len {
            return Err(Error::corrupt(format!(
                "clip of {len} frames needs {} vectors, got {}",
                3 * len,
                codes.len()
            )));
        }
        let (_, ut) = self.bases(len)?;
        let mut out = Vec::with_capacity(3);
        for d in 0..3 {
            let spec = QuantizerSpec::new(self.bits, scales[d])?;
            let mut chat = DMatrix::zeros(j, len);
            for k in 0..len {
                let code = &codes[d * len + k];
                code.validate(j).map_err(|e| Error::corrupt(e.to_string()))?;
                dequantize_into(code, spec.step(), &mut chat.as_mut_slice()[k * j..(k + 1) * j]);
            }
            out.push(self.model.basis(d).matrix().tr_mul(&chat) * ut);
        }
        Ok(out.try_into().unwrap())
    }
}

fn clip_starts(frames: usize, clip_len: usize) -> Vec<(usize, usize)> {
    let mut start = 0;
    clip_lengths(frames, clip_len)
        .into_iter()
        .map(|len| {
            let s = start;
            start += len;
            (s, len)
        })
        .collect()
}

fn run_clip_encoder(
    seq: &MotionSequence,
    model: &TransformModel,
    clip_len: usize,
    bits: u8,
    traced: bool,
) -> Result<(CompressedStream, Option<EncodeTrace>)> {
    check_model(model, seq.joints())?;
    let plan = ClipCodecPlan::new(model, clip_len, bits, seq.frames())?;
    let clips = clip_starts(seq.frames(), clip_len);
    let coded: Vec<CodedClip> = clips
        .par_iter()
        .enumerate()
        .map(|(i, &(start, len))| plan.encode_clip(seq, i, start, len, traced))
        .collect::<Result<_>>()?;
    let mut scales: [Vec<f32>; 3] = Default::default();
    let mut codes = Vec::with_capacity(3 * seq.frames());
    let mut blocks = Vec::new();
    let mut recon: [DMatrix<f64>; 3] =
        std::array::from_fn(|_| DMatrix::zeros(seq.joints(), if traced { seq.frames() } else { 0 }));
    for (clip, &(start, len)) in coded.into_iter().zip(&clips) {
        for d in 0..3 {
            scales[d].push(clip.specs[d].max_abs());
        }
        codes.extend(clip.codes);
        blocks.extend(clip.blocks);
        if let Some(r) = clip.recon {
            for d in 0..3 {
                recon[d].columns_mut(start, len).copy_from(&r[d]);
            }
        }
    }
    let tables = EntropyTables::from_codes(&codes)?;
    let stream = assemble(
        CodecKind::Clip,
        seq.joints(),
        seq.frames(),
        clip_len,
        bits,
        scales,
        &codes,
        tables,
    )?;
    let trace = if traced {
        Some(EncodeTrace {
            blocks,
            reconstruction: MotionSequence::new(recon, seq.frame_rate())?,
        })
    } else {
        None
    };
    Ok((stream, trace))
}

pub fn encode_clip_based(
    seq: &MotionSequence,
    model: &TransformModel,
    clip_len: usize,
    bits: u8,
) -> Result<CompressedStream> {
    Ok(run_clip_encoder(seq, model, clip_len, bits, false)?.0)
}

pub fn encode_clip_based_traced(
    seq: &MotionSequence,
    model: &TransformModel,
    clip_len: usize,
    bits: u8,
) -> Result<(CompressedStream, EncodeTrace)> {
    let (stream, trace) = run_clip_encoder(seq, model, clip_len, bits, true)?;
    Ok((stream, trace.unwrap()))
}

pub fn decode_clip_based(stream: &CompressedStream, model: &TransformModel) -> Result<MotionSequence> {
    check_stream(stream, model, CodecKind::Clip)?;
    let (j, f) = (stream.joints, stream.frames);
    let plan = ClipCodecPlan::new(model, stream.clip_len, stream.bits, f)?;
    let codes = stream.decode_codes()?;
    let clips = clip_starts(f, stream.clip_len);
    let decoded: Vec<[DMatrix<f64>; 3]> = clips
        .par_iter()
        .enumerate()
        .map(|(i, &(start, len))| {
            let scales = [stream.scales[0][i], stream.scales[1][i], stream.scales[2][i]];
            plan.decode_clip(&codes[3 * start..3 * (start + len)], scales, len)
        })
        .collect::<Result<_>>()?;
    let mut out: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(j, f));
    for (clip, &(start, len)) in decoded.iter().zip(&clips) {
        for d in 0..3 {
            out[d].columns_mut(start, len).copy_from(&clip[d]);
        }
    }
    MotionSequence::new(out, DEFAULT_FPS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lsdt::InitKind;
    use crate::testutil::random_orthogonal;
    use crate::transforms::{BasisKind, OrthonormalBasis};
    use crate::lsdt::{TrainMeta, TransformModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn smooth(j: usize, f: usize, seed: u64) -> MotionSequence {
        let data = std::array::from_fn(|d| {
            DMatrix::from_fn(j, f, |r, c| {
                let t = c as f64 / 30.0;
                10.0 * ((r + 1) as f64 * 0.3 + d as f64 + seed as f64).sin() * (t + r as f64 * 0.1).cos()
                    + 3.0 * (0.5 * t + d as f64).sin()
            })
        });
        MotionSequence::new(data, 120.0).unwrap()
    }

    fn random_model(j: usize, seed: u64) -> TransformModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bases = std::array::from_fn(|_| {
            OrthonormalBasis::new(random_orthogonal(&mut rng, j), BasisKind::Custom).unwrap()
        });
        TransformModel::new(bases, TrainMeta::untrained(InitKind::Identity)).unwrap()
    }

    #[test]
    fn single_frame_has_one_vector_per_axis() {
        let seq = smooth(5, 1, 0);
        let model = random_model(5, 1);
        let stream = encode_frame_based(&seq, &model, 10).unwrap();
        assert_eq!(stream.decode_codes().unwrap().len(), 3);
        assert_eq!(stream.segments(), 1);
    }

    #[test]
    fn identical_frames_with_first_frame_scale() {
        let seq = smooth(7, 1, 3);
        let model = random_model(7, 2);
        for bits in [8, 12, 16] {
            let mut enc = FrameEncoder::new(&model, bits).unwrap();
            let first = enc.encode_frame(frame_slices(&seq, 0)).unwrap();
            let scales = first.specs.map(|s| s.max_abs());
            let second = enc.encode_frame_with(frame_slices(&seq, 0), Some(scales)).unwrap();
            assert!(second.codes.iter().all(|c| c.count() == 0), "bits {bits}");
        }
    }

    #[test]
    fn round_trips_and_model_mismatch() {
        let seq = smooth(6, 37, 1);
        let model = random_model(6, 4);
        for config in [CodecConfig::frame(12), CodecConfig::clip(8, 12), CodecConfig::clip(1, 12)] {
            let stream = encode(&seq, &model, &config).unwrap();
            let bytes = stream.to_bytes();
            let back = decode(&CompressedStream::from_bytes(&bytes).unwrap(), &model).unwrap();
            assert_eq!((back.joints(), back.frames()), (6, 37));
            assert!(matches!(decode(&stream, &random_model(5, 0)), Err(Error::ModelMismatch(_))));
        }
    }

    #[test]
    fn constant_clip_uses_only_dc() {
        let data = std::array::from_fn(|d| DMatrix::from_fn(4, 32, |r, _| (r + d) as f64 * 1.5 + 0.25));
        let seq = MotionSequence::new(data, 120.0).unwrap();
        let model = random_model(4, 9);
        let (stream, _) = encode_clip_based_traced(&seq, &model, 16, 12).unwrap();
        let codes = stream.decode_codes().unwrap();
        for (i, code) in codes.iter().enumerate() {
            let column = i % 16;
            if column != 0 {
                assert_eq!(code.count(), 0, "vector {i}");
            }
        }
    }

    #[test]
    fn streaming_matches_batch() {
        let seq = smooth(5, 20, 2);
        let model = random_model(5, 5);
        let tables = EntropyTables::prior(5, 10).unwrap();
        let batch = encode_frame_based_with_tables(&seq, &model, 10, &tables).unwrap();
        let mut streaming = StreamingFrameEncoder::new(&model, 10, tables).unwrap();
        let mut total = 0;
        for i in 0..seq.frames() {
            let e = streaming.push_frame(frame_slices(&seq, i)).unwrap();
            assert_eq!(e.index, i);
            total += e.bits;
            assert_eq!(streaming.payload().bit_len(), total);
        }
        assert_eq!(streaming.finish().unwrap().to_bytes(), batch.to_bytes());
    }

    #[test]
    fn codec_mismatch_is_reported() {
        let seq = smooth(4, 10, 0);
        let model = random_model(4, 0);
        let stream = encode_frame_based(&seq, &model, 8).unwrap();
        assert!(decode_clip_based(&stream, &model).is_err());
        assert!(encode(&seq, &model, &CodecConfig::clip(0, 8)).is_err());
        assert!(encode(&seq, &model, &CodecConfig::frame(1)).is_err());
    }
}
