//! Motion-capture compression with a learned orthogonal spatial transform.
//!
//! Training learns one orthogonal `J×J` matrix per coordinate axis that
//! makes frame vectors sparse. Two codecs use it: a predictive frame codec
//! with no latency and a clip codec that adds a temporal DCT over `L`
//! frames. Both write the same self-describing stream format.

pub mod bench;
pub mod bitio;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod huffman;
pub mod io;
pub mod lsdt;
pub mod metrics;
pub mod motion;
pub mod quant;
pub mod stream;
pub mod synth;
pub mod transforms;

#[cfg(test)]
mod testutil;

pub use codec::{decode, encode, CodecConfig};
pub use error::{Error, Result};
pub use lsdt::{load_model, save_model, train_lsdt, InitKind, TrainConfig, TrainingBatch, TransformModel};
pub use metrics::{compression_ratio, distortion, per_joint_distortion, RDPoint, SparsityPoint};
pub use motion::{partition_clips, Axis, Clip, MotionSequence};
pub use quant::{QuantizerSpec, SparseVectorCode};
pub use stream::{CodecKind, CompressedStream};
pub use transforms::OrthonormalBasis;
