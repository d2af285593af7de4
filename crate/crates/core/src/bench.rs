//! Rate–distortion sweeps and CSV/gnuplot output.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::codec::{decode, encode, CodecConfig};
use crate::error::{Error, Result};
use crate::lsdt::TransformModel;
use crate::metrics::{distortion, stream_compression_ratio, RDPoint, SparsityPoint};
use crate::motion::MotionSequence;
use crate::stream::CodecKind;

/// Every configuration a sweep covers, ordered by (codec, L, b). The frame
/// codec ignores `clip_lens`.
pub fn sweep_configs(codecs: &[CodecKind], bits: &[u8], clip_lens: &[usize]) -> Result<Vec<CodecConfig>> {
    if bits.is_empty() {
        return Err(Error::InvalidSweep("no bit depths given".into()));
    }
    if codecs.is_empty() {
        return Err(Error::InvalidSweep("no codecs given".into()));
    }
    let mut codecs = codecs.to_vec();
    codecs.sort();
    codecs.dedup();
    let mut out = Vec::new();
    for codec in codecs {
        match codec {
            CodecKind::Frame => out.extend(bits.iter().map(|&b| CodecConfig::frame(b))),
            CodecKind::Clip => {
                if clip_lens.is_empty() {
                    return Err(Error::InvalidSweep("clip codec needs at least one clip length".into()));
                }
                for &l in clip_lens {
                    out.extend(bits.iter().map(|&b| CodecConfig::clip(l, b)));
                }
            }
        }
    }
    for c in &out {
        c.validate().map_err(|e| Error::InvalidSweep(e.to_string()))?;
    }
    out.sort_by_key(|c| (c.codec, c.clip_len, c.bits));
    Ok(out)
}

/// Encodes and decodes `seq` at one configuration.
pub fn rd_point(seq: &MotionSequence, model: &TransformModel, config: &CodecConfig) -> Result<RDPoint> {
    let stream = encode(seq, model, config)?;
    let recon = decode(&stream, model)?;
    Ok(RDPoint {
        codec: config.codec,
        clip_len: (config.codec == CodecKind::Clip).then_some(config.clip_len),
        bits: config.bits,
        cr: stream_compression_ratio(&stream),
        distortion: distortion(seq, &recon)?,
        stream_bytes: stream.byte_len(),
    })
}

/// Measures every configuration of the sweep; cells run in parallel and
/// come back in configuration order.
pub fn rd_sweep(
    seq: &MotionSequence,
    model: &TransformModel,
    codecs: &[CodecKind],
    bits: &[u8],
    clip_lens: &[usize],
) -> Result<Vec<RDPoint>> {
    let configs = sweep_configs(codecs, bits, clip_lens)?;
    configs.par_iter().map(|c| rd_point(seq, model, c)).collect()
}

fn provenance_line<W: Write>(w: &mut W, provenance: Option<&str>) -> io::Result<()> {
    if let Some(p) = provenance {
        for line in p.lines() {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// `sequence,codec,L,b,CR,D`, one row per (sequence, point); L is 0 for
/// the frame codec.
pub fn write_rd_csv<W: Write>(w: &mut W, rows: &[(&str, RDPoint)], provenance: Option<&str>) -> io::Result<()> {
    provenance_line(w, provenance)?;
    writeln!(w, "sequence,codec,L,b,CR,D")?;
    for (seq, p) in rows {
        writeln!(
            w,
            "{seq},{},{},{},{},{}",
            p.codec,
            p.clip_len.unwrap_or(0),
            p.bits,
            p.cr,
            p.distortion
        )?;
    }
    Ok(())
}

/// `sequence,transform,fraction,D`.
pub fn write_sparsity_csv<W: Write>(
    w: &mut W,
    rows: &[(&str, SparsityPoint)],
    provenance: Option<&str>,
) -> io::Result<()> {
    provenance_line(w, provenance)?;
    writeln!(w, "sequence,transform,fraction,D")?;
    for (seq, p) in rows {
        writeln!(w, "{seq},{},{},{}", p.transform, p.fraction, p.distortion)?;
    }
    Ok(())
}

/// `dim,iteration,objective`, iterations counted from 1.
pub fn write_convergence_csv<W: Write>(w: &mut W, model: &TransformModel, provenance: Option<&str>) -> io::Result<()> {
    provenance_line(w, provenance)?;
    writeln!(w, "dim,iteration,objective")?;
    for (d, trace) in model.meta.objective_trace.iter().enumerate() {
        let dim = ["x", "y", "z"][d];
        for (i, v) in trace.iter().enumerate() {
            writeln!(w, "{dim},{},{v}", i + 1)?;
        }
    }
    Ok(())
}

/// A gnuplot script drawing D against CR, one curve per (codec, L), all
/// sequences pooled.
pub fn rd_gnuplot_script(csv_path: &str, points: &[RDPoint]) -> String {
    let mut series: Vec<(CodecKind, usize)> = points
        .iter()
        .map(|p| (p.codec, p.clip_len.unwrap_or(0)))
        .collect();
    series.sort();
    series.dedup();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set xlabel 'compression ratio'\nset ylabel 'distortion'\nset key top left\n");
    let plots: Vec<String> = series
        .iter()
        .map(|(codec, l)| {
            let title = match codec {
                CodecKind::Frame => "frame".to_string(),
                CodecKind::Clip => format!("clip L={l}"),
            };
            format!(
                "'{csv_path}' every ::1 using (strcol(2) eq '{codec}' && $3 == {l} ? $5 : NaN):6 with linespoints title '{title}'"
            )
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}

/// A gnuplot script drawing D against the kept fraction per transform.
pub fn sparsity_gnuplot_script(csv_path: &str, points: &[SparsityPoint]) -> String {
    let mut names: Vec<&str> = points.iter().map(|p| p.transform).collect();
    names.sort();
    names.dedup();
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set xlabel 'nonzero fraction'\nset ylabel 'distortion'\n");
    let plots: Vec<String> = names
        .iter()
        .map(|t| {
            format!("'{csv_path}' every ::1 using (strcol(2) eq '{t}' ? $3 : NaN):4 with linespoints title '{t}'")
        })
        .collect();
    s.push_str("plot ");
    s.push_str(&plots.join(", \\\n     "));
    s.push('\n');
    s
}
