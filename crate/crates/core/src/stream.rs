//! The compressed stream container.
//!
//! All integers are little-endian:
//!
//! ```text
//! "MCCS" | version u8 | codec u8 (0 = frame, 1 = clip) | J u16 | F u32
//! | L u16 (0 for the frame codec) | b u8 | segment count u32
//! | max_abs f32 x (3 * segments), axis-major then segment order
//! | value symbol count u16 | value code lengths u8 x count
//! | gap symbol count u16   | gap code lengths u8 x count
//! | payload bit length u64 | payload, zero-padded to a byte | CRC32
//! ```
//!
//! The CRC covers every preceding byte.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::entropy::{decode_payload, value_alphabet_len, EntropyTables};
use crate::error::{Error, Result};
use crate::huffman::CanonicalCode;
use crate::motion::clip_lengths;
use crate::quant::{check_bits, QuantizerSpec, SparseVectorCode};

pub const STREAM_MAGIC: &[u8; 4] = b"MCCS";
pub const STREAM_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodecKind {
    Frame,
    Clip,
}

impl CodecKind {
    pub fn id(self) -> u8 {
        match self {
            CodecKind::Frame => 0,
            CodecKind::Clip => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(CodecKind::Frame),
            1 => Ok(CodecKind::Clip),
            other => Err(Error::corrupt(format!("unknown codec id {other}"))),
        }
    }
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodecKind::Frame => "frame",
            CodecKind::Clip => "clip",
        })
    }
}

impl FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frame" => Ok(CodecKind::Frame),
            "clip" => Ok(CodecKind::Clip),
            other => Err(Error::invalid(format!("unknown codec {other:?}"))),
        }
    }
}

/// A complete compressed sequence: header, tables and payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedStream {
    pub codec: CodecKind,
    pub joints: usize,
    pub frames: usize,
    /// Clip length; 0 for the frame codec.
    pub clip_len: usize,
    pub bits: u8,
    /// Per-segment scales, `scales[axis][segment]`.
    pub scales: [Vec<f32>; 3],
    pub tables: EntropyTables,
    pub payload: Vec<u8>,
    pub payload_bits: u64,
}

impl CompressedStream {
    pub fn segments(&self) -> usize {
        self.scales[0].len()
    }

    /// Quantizer for one (axis, segment) pair.
    pub fn spec(&self, axis: usize, segment: usize) -> Result<QuantizerSpec> {
        QuantizerSpec::new(self.bits, self.scales[axis][segment])
    }

    /// Vector count and length the payload must contain.
    pub fn expected_vectors(&self) -> usize {
        3 * self.frames
    }

    /// Segments implied by the header fields.
    fn expected_segments(&self) -> usize {
        match self.codec {
            CodecKind::Frame => self.frames,
            CodecKind::Clip => clip_lengths(self.frames, self.clip_len.max(1)).len(),
        }
    }

    /// Entropy-decodes the payload into sparse codes, in stream order.
    pub fn decode_codes(&self) -> Result<Vec<SparseVectorCode>> {
        decode_payload(
            &self.payload,
            self.payload_bits,
            self.expected_vectors(),
            self.joints,
            self.bits,
            &self.tables,
        )
    }

    /// Serialized size in bytes, header and checksum included.
    pub fn byte_len(&self) -> usize {
        let segs = self.segments();
        4 + 1 + 1 + 2 + 4 + 2 + 1 + 4
            + 12 * segs
            + 2
            + trimmed_len(&self.tables.values)
            + 2
            + trimmed_len(&self.tables.gaps)
            + 8
            + self.payload.len()
            + 4
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(STREAM_MAGIC);
        out.push(STREAM_VERSION);
        out.push(self.codec.id());
        out.extend_from_slice(&(self.joints as u16).to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.clip_len as u16).to_le_bytes());
        out.push(self.bits);
        out.extend_from_slice(&(self.segments() as u32).to_le_bytes());
        for axis in &self.scales {
            for s in axis {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        for table in [&self.tables.values, &self.tables.gaps] {
            let n = trimmed_len(table);
            out.extend_from_slice(&(n as u16).to_le_bytes());
            out.extend_from_slice(&table.lengths()[..n]);
        }
        out.extend_from_slice(&self.payload_bits.to_le_bytes());
        out.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(out.len(), self.byte_len());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != STREAM_MAGIC {
            return Err(Error::FormatMismatch("not an MCCS stream".into()));
        }
        if bytes.len() < 8 {
            return Err(Error::corrupt("stream truncated"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }
        let mut r = ByteReader { bytes: body, pos: 4 };
        let version = r.u8()?;
        if version != STREAM_VERSION {
            return Err(Error::UnsupportedVersion(version as u32));
        }
        let codec = CodecKind::from_id(r.u8()?)?;
        let joints = r.u16()? as usize;
        let frames = r.u32()? as usize;
        let clip_len = r.u16()? as usize;
        let bits = r.u8()?;
        check_bits(bits).map_err(|_| Error::corrupt(format!("bit depth {bits} out of range")))?;
        if joints == 0 || frames == 0 {
            return Err(Error::corrupt("empty sequence in header"));
        }
        match codec {
            CodecKind::Frame if clip_len != 0 => {
                return Err(Error::corrupt("frame stream with nonzero clip length"))
            }
            CodecKind::Clip if clip_len == 0 => {
                return Err(Error::corrupt("clip stream with zero clip length"))
            }
            _ => {}
        }
        let segments = r.u32()? as usize;
        if segments > body.len() {
            return Err(Error::corrupt("segment count exceeds stream size"));
        }
        let mut scales: [Vec<f32>; 3] = Default::default();
        for axis in scales.iter_mut() {
            axis.reserve(segments);
            for _ in 0..segments {
                let s = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
                if !(s.is_finite() && s >= 0.0) {
                    return Err(Error::corrupt(format!("invalid segment scale {s}")));
                }
                axis.push(s);
            }
        }
        let value_len = r.u16()? as usize;
        if value_len > value_alphabet_len(bits) {
            return Err(Error::corrupt("value table larger than the alphabet"));
        }
        let values = CanonicalCode::from_lengths(r.take(value_len)?.to_vec())?;
        let gap_len = r.u16()? as usize;
        if gap_len > joints {
            return Err(Error::corrupt("gap table larger than the vector length"));
        }
        let gaps = CanonicalCode::from_lengths(r.take(gap_len)?.to_vec())?;
        let payload_bits = r.u64()?;
        let payload_bytes = payload_bits.div_ceil(8);
        if payload_bytes != (body.len() - r.pos) as u64 {
            return Err(Error::corrupt(format!(
                "payload of {payload_bits} bits does not match {} remaining bytes",
                body.len() - r.pos
            )));
        }
        let payload = r.take(payload_bytes as usize)?.to_vec();
        let stream = Self {
            codec,
            joints,
            frames,
            clip_len,
            bits,
            scales,
            tables: EntropyTables { values, gaps },
            payload,
            payload_bits,
        };
        if stream.expected_segments() != segments {
            return Err(Error::corrupt(format!(
                "{segments} segments recorded, header implies {}",
                stream.expected_segments()
            )));
        }
        Ok(stream)
    }
}

/// Alphabet length with trailing uncoded symbols removed.
fn trimmed_len(code: &CanonicalCode) -> usize {
    code.lengths()
        .iter()
        .rposition(|&l| l > 0)
        .map_or(0, |i| i + 1)
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::corrupt(format!("stream truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn save_stream(stream: &CompressedStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, stream.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<CompressedStream> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    CompressedStream::from_bytes(&bytes)
}
