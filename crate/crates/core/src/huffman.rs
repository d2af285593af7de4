//! Canonical Huffman codes.
//!
//! Code lengths come from the textbook merge of the two lightest subtrees.
//! Codewords are then assigned canonically (shorter codes first, ties by
//! symbol), so a table is fully described by its per-symbol lengths.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::bitio::{BitReader, BitWriter};
use crate::error::{Error, Result};

/// Longest codeword the bit writer can emit in one call.
pub const MAX_CODE_LEN: u8 = 64;

/// Huffman code lengths for `freqs[symbol]`. Symbols with zero frequency get
/// length 0 (no codeword). A lone symbol gets a 1-bit code.
pub fn code_lengths(freqs: &[u64]) -> Result<Vec<u8>> {
    let used: Vec<usize> = (0..freqs.len()).filter(|&s| freqs[s] > 0).collect();
    let mut lengths = vec![0u8; freqs.len()];
    match used.len() {
        0 => return Err(Error::invalid("Huffman code needs at least one symbol")),
        1 => {
            lengths[used[0]] = 1;
            return Ok(lengths);
        }
        _ => {}
    }
    // Nodes 0..used.len() are leaves; merged nodes are appended. Ties go to
    // the older node, which keeps the result deterministic.
    let mut parent: Vec<usize> = vec![usize::MAX; used.len()];
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = used
        .iter()
        .enumerate()
        .map(|(node, &s)| Reverse((freqs[s], node)))
        .collect();
    while heap.len() > 1 {
        let Reverse((wa, a)) = heap.pop().unwrap();
        let Reverse((wb, b)) = heap.pop().unwrap();
        let node = parent.len();
        parent.push(usize::MAX);
        parent[a] = node;
        parent[b] = node;
        heap.push(Reverse((wa.saturating_add(wb), node)));
    }
    // Parents always have larger ids, so depths fill in one reverse sweep.
    let mut depth = vec![0u32; parent.len()];
    for node in (0..parent.len() - 1).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    for (leaf, &s) in used.iter().enumerate() {
        if depth[leaf] > MAX_CODE_LEN as u32 {
            return Err(Error::invalid(format!(
                "Huffman code length {} exceeds {MAX_CODE_LEN}",
                depth[leaf]
            )));
        }
        lengths[s] = depth[leaf] as u8;
    }
    Ok(lengths)
}

/// A canonical prefix code over symbols `0..lengths.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalCode {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    /// Symbols sorted by (length, symbol).
    sorted: Vec<u32>,
    /// For each length `l`: first canonical code, index into `sorted`, count.
    first_code: Vec<u64>,
    first_index: Vec<usize>,
    count: Vec<usize>,
}

impl CanonicalCode {
    pub fn from_frequencies(freqs: &[u64]) -> Result<Self> {
        Self::from_lengths(code_lengths(freqs)?)
    }

    /// Rebuilds the code from lengths alone; rejects length sets that cannot
    /// form a prefix code.
    pub fn from_lengths(lengths: Vec<u8>) -> Result<Self> {
        if lengths.len() > u32::MAX as usize {
            return Err(Error::invalid("alphabet too large"));
        }
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        if max_len > MAX_CODE_LEN {
            return Err(Error::corrupt(format!("code length {max_len} exceeds {MAX_CODE_LEN}")));
        }
        let kraft: u128 = lengths
            .iter()
            .filter(|&&l| l > 0)
            .map(|&l| 1u128 << (MAX_CODE_LEN - l))
            .sum();
        if kraft > 1u128 << MAX_CODE_LEN {
            return Err(Error::corrupt("code lengths violate the Kraft inequality"));
        }
        let mut sorted: Vec<u32> = (0..lengths.len() as u32)
            .filter(|&s| lengths[s as usize] > 0)
            .collect();
        sorted.sort_by_key(|&s| (lengths[s as usize], s));

        let slots = max_len as usize + 1;
        let mut first_code = vec![0u64; slots];
        let mut first_index = vec![0usize; slots];
        let mut count = vec![0usize; slots];
        let mut codes = vec![0u64; lengths.len()];
        let mut code = 0u64;
        let mut prev_len = 0u8;
        for (i, &s) in sorted.iter().enumerate() {
            let len = lengths[s as usize];
            if len != prev_len {
                code <<= len - prev_len;
                first_code[len as usize] = code;
                first_index[len as usize] = i;
                prev_len = len;
            }
            codes[s as usize] = code;
            count[len as usize] += 1;
            code = code.wrapping_add(1);
        }
        Ok(Self {
            lengths,
            codes,
            sorted,
            first_code,
            first_index,
            count,
        })
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    /// Number of symbols in the alphabet (coded or not).
    pub fn alphabet_len(&self) -> usize {
        self.lengths.len()
    }

    pub fn has_symbol(&self, symbol: u32) -> bool {
        self.lengths.get(symbol as usize).is_some_and(|&l| l > 0)
    }

    /// `(codeword, length)` of `symbol`, if it has one.
    pub fn codeword(&self, symbol: u32) -> Option<(u64, u8)> {
        self.has_symbol(symbol)
            .then(|| (self.codes[symbol as usize], self.lengths[symbol as usize]))
    }

    pub fn encode(&self, symbol: u32, out: &mut BitWriter, table: &'static str) -> Result<()> {
        let (code, len) = self
            .codeword(symbol)
            .ok_or(Error::MissingSymbol { table, symbol })?;
        out.write_bits(code, len as u32);
        Ok(())
    }

    pub fn decode(&self, input: &mut BitReader<'_>) -> Result<u32> {
        let mut code = 0u64;
        for len in 1..self.first_code.len() {
            code = (code << 1) | input.read_bit()? as u64;
            let offset = code.wrapping_sub(self.first_code[len]);
            if self.count[len] > 0 && code >= self.first_code[len] && (offset as usize) < self.count[len] {
                return Ok(self.sorted[self.first_index[len] + offset as usize]);
            }
        }
        Err(Error::corrupt("bit pattern matches no codeword"))
    }

    /// Frequency-weighted mean codeword length.
    pub fn mean_length(&self, freqs: &[u64]) -> f64 {
        let total: u64 = freqs.iter().sum();
        let bits: u64 = freqs
            .iter()
            .zip(&self.lengths)
            .map(|(&f, &l)| f * l as u64)
            .sum();
        bits as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_symbol_textbook() {
        assert_eq!(code_lengths(&[2, 1, 1]).unwrap(), vec![1, 2, 2]);
        let code = CanonicalCode::from_frequencies(&[2, 1, 1]).unwrap();
        assert_eq!(code.codeword(0), Some((0b0, 1)));
        assert_eq!(code.codeword(1), Some((0b10, 2)));
        assert_eq!(code.codeword(2), Some((0b11, 2)));
    }

    #[test]
    fn single_symbol_gets_one_bit() {
        assert_eq!(code_lengths(&[0, 0, 5]).unwrap(), vec![0, 0, 1]);
        let code = CanonicalCode::from_frequencies(&[0, 0, 5]).unwrap();
        let mut w = BitWriter::new();
        code.encode(2, &mut w, "t").unwrap();
        code.encode(2, &mut w, "t").unwrap();
        let mut r = BitReader::new(w.as_bytes(), w.bit_len());
        assert_eq!(code.decode(&mut r).unwrap(), 2);
        assert_eq!(code.decode(&mut r).unwrap(), 2);
        assert!(code.encode(0, &mut w, "t").is_err());
    }

    #[test]
    fn empty_is_rejected() {
        assert!(code_lengths(&[]).is_err());
        assert!(code_lengths(&[0, 0]).is_err());
    }

    #[test]
    fn kraft_violation_rejected() {
        assert!(CanonicalCode::from_lengths(vec![1, 1, 1]).is_err());
        assert!(CanonicalCode::from_lengths(vec![1, 2, 2]).is_ok());
    }

    #[test]
    fn every_codeword_decodes_to_itself() {
        let freqs: Vec<u64> = (1..=40).map(|i| (i * i * 7919) % 1000 + 1).collect();
        let code = CanonicalCode::from_frequencies(&freqs).unwrap();
        for s in 0..40u32 {
            let (c, l) = code.codeword(s).unwrap();
            // No other codeword is a prefix of this one.
            for t in 0..40u32 {
                let (c2, l2) = code.codeword(t).unwrap();
                if t != s && l2 <= l {
                    assert_ne!(c >> (l - l2), c2, "{t} prefixes {s}");
                }
            }
            let mut w = BitWriter::new();
            w.write_bits(c, l as u32);
            let mut r = BitReader::new(w.as_bytes(), w.bit_len());
            assert_eq!(code.decode(&mut r).unwrap(), s);
        }
    }

    proptest! {
        #[test]
        fn round_trip_and_optimality(
            freqs in prop::collection::vec(0u64..1000, 2..80),
            picks in prop::collection::vec(any::<prop::sample::Index>(), 1..200),
        ) {
            prop_assume!(freqs.iter().any(|&f| f > 0));
            let code = CanonicalCode::from_frequencies(&freqs).unwrap();
            let used: Vec<u32> = (0..freqs.len() as u32).filter(|&s| freqs[s as usize] > 0).collect();
            let msg: Vec<u32> = picks.iter().map(|i| used[i.index(used.len())]).collect();
            let mut w = BitWriter::new();
            for &s in &msg {
                code.encode(s, &mut w, "t").unwrap();
            }
            let mut r = BitReader::new(w.as_bytes(), w.bit_len());
            for &s in &msg {
                prop_assert_eq!(code.decode(&mut r).unwrap(), s);
            }
            let total: u64 = freqs.iter().sum();
            let entropy: f64 = freqs.iter().filter(|&&f| f > 0)
                .map(|&f| { let p = f as f64 / total as f64; -p * p.log2() })
                .sum();
            prop_assert!(code.mean_length(&freqs) <= entropy + 1.0 + 1e-12);
            prop_assert!(code.mean_length(&freqs) + 1e-12 >= entropy);
        }
    }
}
