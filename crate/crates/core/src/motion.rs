//! Motion data model shared by the codecs, the trainer and the benchmarks.
//!
//! A sequence of `F` frames over `J` markers is stored as three `J x F`
//! matrices, one per coordinate axis. Column `i` of the `x` matrix holds the
//! `x` coordinates of every marker at frame `i`; row `j` is the `x`
//! trajectory of marker `j`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default capture rate used when a source does not state one.
pub const DEFAULT_FPS: f64 = 120.0;

/// One of the three coordinate axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            _ => Err(Error::InvalidDimension(s.to_string())),
        }
    }
}

/// A validated marker sequence. Immutable once constructed.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    frame_rate: f64,
    data: [DMatrix<f64>; 3],
}

impl MotionSequence {
    /// Builds a sequence from per-axis `J x F` matrices.
    pub fn new(data: [DMatrix<f64>; 3], frame_rate: f64) -> Result<Self> {
        let shape = data[0].shape();
        if shape.0 == 0 || shape.1 == 0 {
            return Err(Error::shape(format!(
                "sequence needs at least one marker and one frame, got {}x{}",
                shape.0, shape.1
            )));
        }
        for (axis, m) in Axis::ALL.iter().zip(&data) {
            if m.shape() != shape {
                return Err(Error::shape(format!(
                    "{axis} matrix is {}x{}, expected {}x{}",
                    m.nrows(),
                    m.ncols(),
                    shape.0,
                    shape.1
                )));
            }
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                let (joint, frame) = (pos % shape.0, pos / shape.0);
                return Err(Error::NonFiniteValue {
                    location: format!("{axis} coordinate of joint {joint}, frame {frame}"),
                });
            }
        }
        if !(frame_rate.is_finite() && frame_rate > 0.0) {
            return Err(Error::invalid(format!(
                "frame rate must be positive, got {frame_rate}"
            )));
        }
        Ok(Self { frame_rate, data })
    }

    /// Builds a sequence from frames laid out marker-major: `x1 y1 z1 x2 ...`.
    pub fn from_interleaved_frames(
        joints: usize,
        frames: &[Vec<f64>],
        frame_rate: f64,
    ) -> Result<Self> {
        let f = frames.len();
        let mut data = [
            DMatrix::zeros(joints, f),
            DMatrix::zeros(joints, f),
            DMatrix::zeros(joints, f),
        ];
        for (i, row) in frames.iter().enumerate() {
            if row.len() != 3 * joints {
                return Err(Error::RowLengthMismatch {
                    location: format!("frame {i}"),
                    expected: 3 * joints,
                    found: row.len(),
                });
            }
            for j in 0..joints {
                for d in 0..3 {
                    data[d][(j, i)] = row[3 * j + d];
                }
            }
        }
        Self::new(data, frame_rate)
    }

    pub fn joints(&self) -> usize {
        self.data[0].nrows()
    }

    pub fn frames(&self) -> usize {
        self.data[0].ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// The `J x F` matrix for one axis.
    pub fn dimension_matrix(&self, axis: Axis) -> &DMatrix<f64> {
        &self.data[axis.index()]
    }

    pub fn data(&self) -> &[DMatrix<f64>; 3] {
        &self.data
    }

    pub fn into_data(self) -> [DMatrix<f64>; 3] {
        self.data
    }

    /// Position of `joint` at `frame` as `[x, y, z]`.
    pub fn position(&self, joint: usize, frame: usize) -> [f64; 3] {
        [
            self.data[0][(joint, frame)],
            self.data[1][(joint, frame)],
            self.data[2][(joint, frame)],
        ]
    }

    /// Frame `i` as three `J`-vectors.
    pub fn frame(&self, i: usize) -> [DVector<f64>; 3] {
        [
            self.data[0].column(i).into_owned(),
            self.data[1].column(i).into_owned(),
            self.data[2].column(i).into_owned(),
        ]
    }

    /// Frame `i` in marker-major interleaved order.
    pub fn interleaved_frame(&self, i: usize) -> Vec<f64> {
        let j = self.joints();
        let mut out = Vec::with_capacity(3 * j);
        for joint in 0..j {
            out.extend_from_slice(&self.position(joint, i));
        }
        out
    }

    /// Frames `[start, start + len)` as a new sequence.
    pub fn slice_frames(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.frames() {
            return Err(Error::invalid(format!(
                "frame range {start}..{} outside 0..{}",
                start + len,
                self.frames()
            )));
        }
        let data = self
            .data
            .clone()
            .map(|m| m.columns(start, len).into_owned());
        Self::new(data, self.frame_rate)
    }
}

/// A run of consecutive frames cut from a parent sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub start_frame: usize,
    pub data: [DMatrix<f64>; 3],
}

impl Clip {
    pub fn len(&self) -> usize {
        self.data[0].ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Cuts `seq` into consecutive clips of `clip_len` frames. A trailing
/// remainder shorter than `clip_len` becomes its own clip.
pub fn partition_clips(seq: &MotionSequence, clip_len: usize) -> Result<Vec<Clip>> {
    if clip_len == 0 {
        return Err(Error::invalid("clip length must be at least 1"));
    }
    let f = seq.frames();
    let mut clips = Vec::with_capacity(f.div_ceil(clip_len));
    let mut start = 0;
    while start < f {
        let len = clip_len.min(f - start);
        clips.push(Clip {
            start_frame: start,
            data: std::array::from_fn(|d| seq.data[d].columns(start, len).into_owned()),
        });
        start += len;
    }
    Ok(clips)
}

/// Lengths of the clips `partition_clips` would produce, without copying data.
pub fn clip_lengths(frames: usize, clip_len: usize) -> Vec<usize> {
    let mut out = vec![clip_len; frames / clip_len];
    if frames % clip_len != 0 {
        out.push(frames % clip_len);
    }
    out
}
