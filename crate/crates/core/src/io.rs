//! Motion file formats.
//!
//! * CSV: optional first line `# J=<int> fps=<real>`, then one frame per line
//!   with `3J` comma-separated values in marker-major order
//!   (`x1,y1,z1,x2,...`).
//! * raw-f32: 16-byte header (`MCP1`, `J: u32`, `F: u32`, `fps: f32`, all
//!   little-endian) followed by `F * 3J` little-endian `f32` values in the
//!   same marker-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::motion::{MotionSequence, DEFAULT_FPS};

pub const RAW_MAGIC: &[u8; 4] = b"MCP1";
const RAW_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionFormat {
    Csv,
    RawF32,
}

impl MotionFormat {
    /// Guesses the format from a file extension; anything other than `.csv`
    /// is treated as raw-f32.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MotionFormat::Csv,
            _ => MotionFormat::RawF32,
        }
    }
}

impl FromStr for MotionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(MotionFormat::Csv),
            "raw" | "raw-f32" | "f32" => Ok(MotionFormat::RawF32),
            other => Err(Error::invalid(format!("unknown motion format {other:?}"))),
        }
    }
}

/// Loads a motion file. `joints_hint` supplies `J` for CSV files without a
/// header line; without either, `J` is the row width divided by three.
pub fn load_motion(
    path: impl AsRef<Path>,
    format: MotionFormat,
    joints_hint: Option<usize>,
) -> Result<MotionSequence> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        MotionFormat::Csv => read_csv(BufReader::new(file), joints_hint),
        MotionFormat::RawF32 => {
            let mut bytes = Vec::new();
            BufReader::new(file)
                .read_to_end(&mut bytes)
                .map_err(|e| Error::io(path, e))?;
            decode_raw_f32(&bytes)
        }
    }
}

pub fn save_motion(seq: &MotionSequence, path: impl AsRef<Path>, format: MotionFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        MotionFormat::Csv => write_csv(seq, &mut w),
        MotionFormat::RawF32 => w.write_all(&encode_raw_f32(seq)),
    }
    .and_then(|_| w.flush())
    .map_err(|e| Error::io(path, e))
}

pub fn write_csv<W: Write>(seq: &MotionSequence, w: &mut W) -> std::io::Result<()> {
    writeln!(w, "# J={} fps={}", seq.joints(), seq.frame_rate())?;
    let mut line = String::new();
    for i in 0..seq.frames() {
        line.clear();
        for (k, v) in seq.interleaved_frame(i).iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            // Display for f64 is shortest round-trip, so CSV is lossless too.
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(reader: R, joints_hint: Option<usize>) -> Result<MotionSequence> {
    let mut frames = CsvFrameReader::new(reader, joints_hint);
    let mut rows = Vec::new();
    while let Some(row) = frames.next_frame()? {
        rows.push(row);
    }
    let joints = frames
        .joints()
        .ok_or_else(|| Error::Malformed {
            location: "end of file".into(),
            message: "no frames".into(),
        })?;
    MotionSequence::from_interleaved_frames(joints, &rows, frames.frame_rate())
}

/// Reads CSV frames one line at a time, so encoders can consume a stream.
pub struct CsvFrameReader<R> {
    reader: R,
    joints: Option<usize>,
    frame_rate: f64,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> CsvFrameReader<R> {
    pub fn new(reader: R, joints_hint: Option<usize>) -> Self {
        Self {
            reader,
            joints: joints_hint,
            frame_rate: DEFAULT_FPS,
            line_no: 0,
            buf: String::new(),
        }
    }

    /// `J`, once known from the header, the hint, or the first row.
    pub fn joints(&self) -> Option<usize> {
        self.joints
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// Reads the header (if any) without consuming a frame. Returns `J` if it
    /// is known at that point.
    pub fn read_header(&mut self) -> Result<Option<usize>> {
        loop {
            let peek = self
                .reader
                .fill_buf()
                .map_err(|e| Error::io("<csv>", e))?;
            match peek.first() {
                Some(b'#') | Some(b'\n') | Some(b'\r') => {
                    self.read_line()?;
                    let line = std::mem::take(&mut self.buf);
                    self.parse_comment(line.trim())?;
                }
                _ => return Ok(self.joints),
            }
        }
    }

    /// Next frame in marker-major order, or `None` at end of input.
    pub fn next_frame(&mut self) -> Result<Option<Vec<f64>>> {
        loop {
            if self.read_line()? == 0 {
                return Ok(None);
            }
            let line = std::mem::take(&mut self.buf);
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if trimmed.starts_with('#') {
                self.parse_comment(trimmed)?;
                continue;
            }
            return self.parse_row(trimmed).map(Some);
        }
    }

    fn read_line(&mut self) -> Result<usize> {
        self.buf.clear();
        let n = self
            .reader
            .read_line(&mut self.buf)
            .map_err(|e| Error::io("<csv>", e))?;
        if n > 0 {
            self.line_no += 1;
        }
        Ok(n)
    }

    fn location(&self) -> String {
        format!("line {}", self.line_no)
    }

    fn parse_comment(&mut self, line: &str) -> Result<()> {
        // Only the first line may carry the J/fps header; later comments are
        // free-form.
        if self.line_no != 1 {
            return Ok(());
        }
        for token in line.trim_start_matches('#').split_whitespace() {
            let Some((key, value)) = token.split_once('=') else {
                continue;
            };
            let bad = |what: &str| Error::Malformed {
                location: self.location(),
                message: format!("bad {what} value {value:?}"),
            };
            match key {
                "J" => {
                    let j: usize = value.parse().map_err(|_| bad("J"))?;
                    if j == 0 {
                        return Err(bad("J"));
                    }
                    self.joints = Some(j);
                }
                "fps" => {
                    let fps: f64 = value.parse().map_err(|_| bad("fps"))?;
                    if !(fps.is_finite() && fps > 0.0) {
                        return Err(bad("fps"));
                    }
                    self.frame_rate = fps;
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn parse_row(&mut self, line: &str) -> Result<Vec<f64>> {
        let mut row = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let field = field.trim();
            let v: f64 = field.parse().map_err(|_| Error::Malformed {
                location: format!("{}, column {}", self.location(), col + 1),
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    location: format!("{}, column {}", self.location(), col + 1),
                });
            }
            row.push(v);
        }
        let joints = match self.joints {
            Some(j) => j,
            None => {
                if row.len() % 3 != 0 {
                    return Err(Error::Malformed {
                        location: self.location(),
                        message: format!("{} values is not a multiple of 3", row.len()),
                    });
                }
                self.joints = Some(row.len() / 3);
                row.len() / 3
            }
        };
        if row.len() != 3 * joints {
            return Err(Error::RowLengthMismatch {
                location: self.location(),
                expected: 3 * joints,
                found: row.len(),
            });
        }
        Ok(row)
    }
}

pub fn encode_raw_f32(seq: &MotionSequence) -> Vec<u8> {
    let (j, f) = (seq.joints(), seq.frames());
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 12 * j * f);
    out.extend_from_slice(RAW_MAGIC);
    out.extend_from_slice(&(j as u32).to_le_bytes());
    out.extend_from_slice(&(f as u32).to_le_bytes());
    out.extend_from_slice(&(seq.frame_rate() as f32).to_le_bytes());
    for i in 0..f {
        for v in seq.interleaved_frame(i) {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_raw_f32(bytes: &[u8]) -> Result<MotionSequence> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::Malformed {
            location: "offset 0".into(),
            message: format!("file is {} bytes, header needs 16", bytes.len()),
        });
    }
    if &bytes[0..4] != RAW_MAGIC {
        return Err(Error::FormatMismatch(format!(
            "expected magic MCP1, found {:?}",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let j = u32_at(4) as usize;
    let f = u32_at(8) as usize;
    let fps = f32::from_le_bytes(bytes[12..16].try_into().unwrap()) as f64;
    let expected = RAW_HEADER_LEN + 12 * j * f;
    if bytes.len() != expected {
        return Err(Error::Malformed {
            location: format!("offset {}", bytes.len().min(expected)),
            message: format!("expected {expected} bytes for J={j} F={f}, found {}", bytes.len()),
        });
    }
    let mut frames = Vec::with_capacity(f);
    let mut offset = RAW_HEADER_LEN;
    for _ in 0..f {
        let mut row = Vec::with_capacity(3 * j);
        for _ in 0..3 * j {
            let v = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    location: format!("offset {offset}"),
                });
            }
            row.push(v as f64);
            offset += 4;
        }
        frames.push(row);
    }
    MotionSequence::from_interleaved_frames(j, &frames, fps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn csv(text: &str, hint: Option<usize>) -> Result<MotionSequence> {
        read_csv(text.as_bytes(), hint)
    }

    #[test]
    fn csv_infers_shape() {
        let row: Vec<String> = (0..93).map(|v| format!("{}.5", v)).collect();
        let text = format!("{}\n{}\n", row.join(","), row.join(","));
        let seq = csv(&text, None).unwrap();
        assert_eq!((seq.joints(), seq.frames()), (31, 2));

        let seq = csv("# J=2 fps=60\n1,2,3,4,5,6\n", None).unwrap();
        assert_eq!((seq.joints(), seq.frames()), (2, 1));
        assert_eq!(seq.frame_rate(), 60.0);
        assert_eq!(seq.position(1, 0), [4.0, 5.0, 6.0]);
    }

    #[test]
    fn csv_errors_carry_line() {
        let err = csv("# J=1\n1,2,3\n1,nan,3\n", None).unwrap_err();
        match err {
            Error::NonFiniteValue { location } => assert!(location.contains("line 3"), "{location}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            csv("# J=2\n1,2,3\n", None),
            Err(Error::RowLengthMismatch { expected: 6, found: 3, .. })
        ));
        assert!(matches!(csv("# J=zero\n1,2,3\n", None), Err(Error::Malformed { .. })));
        assert!(matches!(csv("1,2,x\n", None), Err(Error::Malformed { .. })));
        assert!(matches!(csv("1,2,3,4\n", None), Err(Error::Malformed { .. })));
        // Hint supplies J when the header is missing.
        assert_eq!(csv("1,2,3,4,5,6\n", Some(2)).unwrap().joints(), 2);
    }

    #[test]
    fn raw_f32_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data = [0, 1, 2].map(|_| {
            DMatrix::from_fn(31, 100, |_, _| rng.random_range(-500.0f32..500.0) as f64)
        });
        let seq = MotionSequence::new(data, 120.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.raw");
        save_motion(&seq, &path, MotionFormat::RawF32).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = load_motion(&path, MotionFormat::RawF32, None).unwrap();
        assert_eq!(back, seq);
        save_motion(&back, &path, MotionFormat::RawF32).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn csv_round_trip_within_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let data = [0, 1, 2].map(|_| DMatrix::from_fn(5, 20, |_, _| rng.random_range(-1e3..1e3)));
        let seq = MotionSequence::new(data, 120.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("seq.csv");
        save_motion(&seq, &path, MotionFormat::Csv).unwrap();
        let back = load_motion(&path, MotionFormat::Csv, None).unwrap();
        for d in 0..3 {
            for (a, b) in seq.data()[d].iter().zip(back.data()[d].iter()) {
                assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn raw_rejects_bad_input() {
        assert!(matches!(decode_raw_f32(b"MCP"), Err(Error::Malformed { .. })));
        let mut bytes = b"XXXX".to_vec();
        bytes.extend_from_slice(&[0; 12]);
        assert!(matches!(decode_raw_f32(&bytes), Err(Error::FormatMismatch(_))));
        let mut bytes = RAW_MAGIC.to_vec();
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&120f32.to_le_bytes());
        bytes.extend_from_slice(&[0; 8]);
        assert!(matches!(decode_raw_f32(&bytes), Err(Error::Malformed { .. })));
        bytes.extend_from_slice(&f32::INFINITY.to_le_bytes());
        assert!(matches!(decode_raw_f32(&bytes), Err(Error::NonFiniteValue { .. })));
    }

    #[test]
    fn unwritable_path_is_io_failure() {
        let seq = csv("1,2,3\n", None).unwrap();
        let err = save_motion(&seq, "/nonexistent-dir/x/y.csv", MotionFormat::Csv).unwrap_err();
        assert!(matches!(err, Error::IoFailure { .. }));
    }
}
