//! Payload coding of sparse vectors.
//!
//! Each vector of length `n` is written as
//!
//! 1. its nonzero count in `ceil(log2(n + 1))` fixed bits,
//! 2. the location gaps (first location, then each difference minus one),
//!    Huffman coded with the gap table,
//! 3. the quantized values, Huffman coded with the value table.
//!
//! Values are mapped to symbols by sign-folding (`1, -1, 2, -2, ...` become
//! `0, 1, 2, 3, ...`), so small magnitudes get small symbol numbers and the
//! transmitted length tables stay short.

use crate::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};
use crate::huffman::CanonicalCode;
use crate::quant::{max_index, SparseVectorCode};

/// Fixed width of the per-vector nonzero count.
pub fn count_bits(len: usize) -> u32 {
    usize::BITS - len.leading_zeros()
}

pub fn value_to_symbol(q: i32) -> u32 {
    debug_assert!(q != 0);
    2 * (q.unsigned_abs() - 1) + (q < 0) as u32
}

pub fn symbol_to_value(s: u32) -> i32 {
    let mag = (s / 2 + 1) as i32;
    if s % 2 == 1 {
        -mag
    } else {
        mag
    }
}

/// Size of the value alphabet for `bits`: every nonzero index in
/// `[-(2^(b-1) - 1), 2^(b-1) - 1]`.
pub fn value_alphabet_len(bits: u8) -> usize {
    2 * max_index(bits) as usize
}

/// Symbol histograms gathered from a set of sparse codes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolStats {
    pub values: Vec<u64>,
    pub gaps: Vec<u64>,
}

impl SymbolStats {
    pub fn add(&mut self, code: &SparseVectorCode) {
        let mut prev: Option<u32> = None;
        for (&loc, &q) in code.locations.iter().zip(&code.values) {
            let gap = match prev {
                None => loc,
                Some(p) => loc - p - 1,
            } as usize;
            bump(&mut self.gaps, gap);
            bump(&mut self.values, value_to_symbol(q) as usize);
            prev = Some(loc);
        }
    }

    pub fn from_codes<'a>(codes: impl IntoIterator<Item = &'a SparseVectorCode>) -> Self {
        let mut stats = Self::default();
        for code in codes {
            stats.add(code);
        }
        stats
    }
}

fn bump(hist: &mut Vec<u64>, symbol: usize) {
    if hist.len() <= symbol {
        hist.resize(symbol + 1, 0);
    }
    hist[symbol] += 1;
}

/// The value and location-gap codes used for one stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntropyTables {
    pub values: CanonicalCode,
    pub gaps: CanonicalCode,
}

impl EntropyTables {
    /// Optimal tables for exactly these statistics. An empty histogram yields
    /// an empty table.
    pub fn from_stats(stats: &SymbolStats) -> Result<Self> {
        Ok(Self {
            values: table_for(&stats.values)?,
            gaps: table_for(&stats.gaps)?,
        })
    }

    pub fn from_codes<'a>(codes: impl IntoIterator<Item = &'a SparseVectorCode>) -> Result<Self> {
        Self::from_stats(&SymbolStats::from_codes(codes))
    }

    /// Tables covering the whole alphabet for vectors of length `len` at
    /// `bits`, shaped by `stats` with add-one smoothing. Every valid code can
    /// be written with them, so they can be fixed before any data is seen.
    pub fn covering(stats: &SymbolStats, len: usize, bits: u8) -> Result<Self> {
        let smooth = |hist: &[u64], size: usize| -> Vec<u64> {
            (0..size)
                .map(|s| hist.get(s).copied().unwrap_or(0) + 1)
                .collect()
        };
        Ok(Self {
            values: CanonicalCode::from_frequencies(&smooth(&stats.values, value_alphabet_len(bits)))?,
            gaps: CanonicalCode::from_frequencies(&smooth(&stats.gaps, len))?,
        })
    }

    /// Data-independent covering tables: value symbols decay geometrically
    /// with magnitude at a rate tied to the quantizer range, gaps decay
    /// geometrically with ratio 0.7.
    pub fn prior(len: usize, bits: u8) -> Result<Self> {
        let alphabet = value_alphabet_len(bits);
        let scale = (max_index(bits) as f64 / 4.0).max(1.0);
        let values: Vec<u64> = (0..alphabet)
            .map(|s| ((1u64 << 30) as f64 * (-(s as f64) / (2.0 * scale)).exp()) as u64 + 1)
            .collect();
        let gaps: Vec<u64> = (0..len)
            .map(|g| ((1u64 << 30) as f64 * 0.7f64.powi(g as i32)) as u64 + 1)
            .collect();
        Ok(Self {
            values: CanonicalCode::from_frequencies(&values)?,
            gaps: CanonicalCode::from_frequencies(&gaps)?,
        })
    }
}

fn table_for(hist: &[u64]) -> Result<CanonicalCode> {
    if hist.iter().all(|&f| f == 0) {
        CanonicalCode::from_lengths(Vec::new())
    } else {
        CanonicalCode::from_frequencies(hist)
    }
}

/// Writes one sparse vector of length `len`.
pub fn encode_vector(
    code: &SparseVectorCode,
    len: usize,
    bits: u8,
    tables: &EntropyTables,
    out: &mut BitWriter,
) -> Result<()> {
    code.validate(len)?;
    let limit = max_index(bits);
    out.write_bits(code.count() as u64, count_bits(len));
    let mut prev: Option<u32> = None;
    for &loc in &code.locations {
        let gap = match prev {
            None => loc,
            Some(p) => loc - p - 1,
        };
        tables.gaps.encode(gap, out, "gap")?;
        prev = Some(loc);
    }
    for &q in &code.values {
        if q.abs() > limit {
            return Err(Error::invalid(format!(
                "value {q} outside the {bits}-bit alphabet"
            )));
        }
        tables.values.encode(value_to_symbol(q), out, "value")?;
    }
    Ok(())
}

/// Reads one sparse vector of length `len`.
pub fn decode_vector(
    input: &mut BitReader<'_>,
    len: usize,
    bits: u8,
    tables: &EntropyTables,
) -> Result<SparseVectorCode> {
    let count = input.read_bits(count_bits(len))? as usize;
    if count > len {
        return Err(Error::corrupt(format!("count {count} exceeds vector length {len}")));
    }
    let mut code = SparseVectorCode {
        locations: Vec::with_capacity(count),
        values: Vec::with_capacity(count),
    };
    let mut next = 0u64;
    for _ in 0..count {
        let gap = tables.gaps.decode(input)? as u64;
        let loc = next + gap;
        if loc >= len as u64 {
            return Err(Error::corrupt(format!("location {loc} outside 0..{len}")));
        }
        code.locations.push(loc as u32);
        next = loc + 1;
    }
    let limit = max_index(bits);
    for _ in 0..count {
        let q = symbol_to_value(tables.values.decode(input)?);
        if q.abs() > limit {
            return Err(Error::corrupt(format!("value {q} outside the {bits}-bit alphabet")));
        }
        code.values.push(q);
    }
    Ok(code)
}

/// Writes every code in order.
pub fn encode_payload(
    codes: &[SparseVectorCode],
    len: usize,
    bits: u8,
    tables: &EntropyTables,
) -> Result<BitWriter> {
    let mut out = BitWriter::new();
    for code in codes {
        encode_vector(code, len, bits, tables, &mut out)?;
    }
    Ok(out)
}

/// Reads `vectors` codes of length `len`; the payload must be consumed
/// exactly.
pub fn decode_payload(
    payload: &[u8],
    bit_len: u64,
    vectors: usize,
    len: usize,
    bits: u8,
    tables: &EntropyTables,
) -> Result<Vec<SparseVectorCode>> {
    if payload.len() as u64 * 8 < bit_len {
        return Err(Error::corrupt("payload shorter than its recorded bit length"));
    }
    let mut input = BitReader::new(payload, bit_len);
    let codes = (0..vectors)
        .map(|_| decode_vector(&mut input, len, bits, tables))
        .collect::<Result<Vec<_>>>()?;
    if input.remaining() != 0 {
        return Err(Error::corrupt(format!(
            "{} unread payload bits",
            input.remaining()
        )));
    }
    Ok(codes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn count_field_width() {
        assert_eq!(count_bits(31), 5);
        assert_eq!(count_bits(32), 6);
        assert_eq!(count_bits(1), 1);
        assert_eq!(count_bits(6), 3);
    }

    #[test]
    fn empty_vector_costs_only_the_count() {
        let tables = EntropyTables::from_codes(std::iter::empty()).unwrap();
        let w = encode_payload(&[SparseVectorCode::default()], 31, 8, &tables).unwrap();
        assert_eq!(w.bit_len(), 5);
        let back = decode_payload(w.as_bytes(), w.bit_len(), 1, 31, 8, &tables).unwrap();
        assert!(back[0].is_empty());
    }

    #[test]
    fn symbol_folding() {
        let vals = [1, -1, 2, -2, 3];
        let syms: Vec<u32> = vals.iter().map(|&v| value_to_symbol(v)).collect();
        assert_eq!(syms, vec![0, 1, 2, 3, 4]);
        for v in -300..=300 {
            if v != 0 {
                assert_eq!(symbol_to_value(value_to_symbol(v)), v);
            }
        }
        assert_eq!(value_alphabet_len(16), 65534);
        assert!(value_to_symbol(-32767) < value_alphabet_len(16) as u32);
    }

    #[test]
    fn missing_symbol_and_bad_values() {
        let a = SparseVectorCode { locations: vec![0], values: vec![1] };
        let tables = EntropyTables::from_codes([&a]).unwrap();
        let b = SparseVectorCode { locations: vec![1], values: vec![1] };
        assert!(matches!(
            encode_payload(&[b], 4, 8, &tables),
            Err(Error::MissingSymbol { table: "gap", .. })
        ));
        let c = SparseVectorCode { locations: vec![0], values: vec![200] };
        assert!(encode_payload(&[c], 4, 8, &tables).is_err());
    }

    #[test]
    fn truncated_payload() {
        let a = SparseVectorCode { locations: vec![0, 3], values: vec![5, -2] };
        let tables = EntropyTables::from_codes([&a]).unwrap();
        let w = encode_payload(&[a.clone(), a], 8, 8, &tables).unwrap();
        assert!(decode_payload(w.as_bytes(), w.bit_len() - 1, 2, 8, 8, &tables).is_err());
        assert!(decode_payload(w.as_bytes(), w.bit_len(), 3, 8, 8, &tables).is_err());
    }

    #[test]
    fn covering_tables_encode_anything() {
        for tables in [
            EntropyTables::prior(31, 10).unwrap(),
            EntropyTables::covering(&SymbolStats::default(), 31, 10).unwrap(),
        ] {
            let code = SparseVectorCode {
                locations: vec![0, 17, 30],
                values: vec![511, -511, 1],
            };
            let w = encode_payload(std::slice::from_ref(&code), 31, 10, &tables).unwrap();
            let back = decode_payload(w.as_bytes(), w.bit_len(), 1, 31, 10, &tables).unwrap();
            assert_eq!(back[0], code);
        }
    }

    fn arb_code(len: usize, bits: u8) -> impl Strategy<Value = SparseVectorCode> {
        let limit = max_index(bits);
        prop::collection::btree_map(0..len as u32, (1..=limit, any::<bool>()), 0..=len).prop_map(
            |m| SparseVectorCode {
                locations: m.keys().copied().collect(),
                values: m.values().map(|&(v, neg)| if neg { -v } else { v }).collect(),
            },
        )
    }

    proptest! {
        #[test]
        fn payload_round_trip(codes in prop::collection::vec(arb_code(31, 12), 1..60)) {
            let tables = EntropyTables::from_codes(&codes).unwrap();
            let w = encode_payload(&codes, 31, 12, &tables).unwrap();
            let back = decode_payload(w.as_bytes(), w.bit_len(), codes.len(), 31, 12, &tables).unwrap();
            prop_assert_eq!(back, codes);
        }
    }
}
