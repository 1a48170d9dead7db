//! Canonical Huffman codes over signed integer symbols.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::error::{Error, Result};

/// Longest code length the encoder and decoder accept.
pub const MAX_CODE_LEN: u8 = 63;

/// Canonical code table. Codes are assigned in order of (length, symbol).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    /// `(symbol, code length)` sorted by symbol.
    entries: Vec<(i64, u8)>,
    codes: HashMap<i64, (u64, u8)>,
    /// Symbols in canonical order.
    canonical: Vec<i64>,
    /// Per length `l`: first canonical code, number of codes, index of the first
    /// symbol of that length in `canonical`.
    first_code: Vec<u64>,
    count: Vec<u64>,
    first_index: Vec<usize>,
}

impl SymbolTable {
    /// Builds Huffman code lengths by repeatedly merging the two lightest
    /// subtrees. Ties go to the lower combined count, then to the subtree
    /// containing the smaller symbol. A lone symbol gets a 1-bit code.
    pub fn from_frequencies(freqs: &BTreeMap<i64, u64>) -> Result<Self> {
        let live: Vec<(i64, u64)> = freqs.iter().filter(|(_, &c)| c > 0).map(|(&s, &c)| (s, c)).collect();
        if live.is_empty() {
            return Err(Error::InvalidTable("no symbol has a positive count".into()));
        }
        if live.len() == 1 {
            return SymbolTable::from_lengths(&[(live[0].0, 1)]);
        }

        // Nodes: leaves first, then internal nodes; parent links give depths.
        let mut parent: Vec<usize> = vec![usize::MAX; live.len()];
        let mut heap: BinaryHeap<Reverse<(u64, i64, usize)>> = live
            .iter()
            .enumerate()
            .map(|(i, &(s, c))| Reverse((c, s, i)))
            .collect();
        while heap.len() > 1 {
            let Reverse((c1, m1, a)) = heap.pop().expect("len > 1");
            let Reverse((c2, m2, b)) = heap.pop().expect("len > 1");
            let node = parent.len();
            parent.push(usize::MAX);
            parent[a] = node;
            parent[b] = node;
            heap.push(Reverse((c1 + c2, m1.min(m2), node)));
        }

        let mut depth = vec![0u8; parent.len()];
        for n in (0..parent.len()).rev() {
            if parent[n] != usize::MAX {
                depth[n] = depth[parent[n]] + 1;
            }
        }
        let lengths: Vec<(i64, u8)> = live.iter().enumerate().map(|(i, &(s, _))| (s, depth[i])).collect();
        SymbolTable::from_lengths(&lengths)
    }

    /// Rebuilds the canonical code from `(symbol, length)` pairs.
    pub fn from_lengths(pairs: &[(i64, u8)]) -> Result<Self> {
        let mut entries = pairs.to_vec();
        entries.sort_unstable();
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidTable("duplicate symbol".into()));
        }
        if let Some(&(s, l)) = entries.iter().find(|(_, l)| *l == 0 || *l > MAX_CODE_LEN) {
            return Err(Error::InvalidTable(format!("symbol {s} has code length {l}")));
        }
        let max_len = entries.iter().map(|e| e.1).max().unwrap_or(0) as usize;
        let mut count = vec![0u64; max_len + 1];
        for &(_, l) in &entries {
            count[l as usize] += 1;
        }
        // Kraft: Σ count[l] 2^(max-l) <= 2^max, evaluated exactly in u128.
        let kraft: u128 = (1..=max_len).map(|l| u128::from(count[l]) << (max_len - l)).sum();
        if max_len > 0 && kraft > 1u128 << max_len {
            return Err(Error::InvalidTable("code lengths violate the Kraft inequality".into()));
        }

        let mut canonical: Vec<(u8, i64)> = entries.iter().map(|&(s, l)| (l, s)).collect();
        canonical.sort_unstable();
        let mut first_code = vec![0u64; max_len + 1];
        let mut first_index = vec![0usize; max_len + 1];
        let mut code = 0u64;
        let mut index = 0usize;
        for l in 1..=max_len {
            code = (code + if l > 1 { count[l - 1] } else { 0 }) << 1;
            first_code[l] = code;
            first_index[l] = index;
            index += count[l] as usize;
        }
        let mut codes = HashMap::with_capacity(entries.len());
        let mut next = first_code.clone();
        for &(l, s) in &canonical {
            codes.insert(s, (next[l as usize], l));
            next[l as usize] += 1;
        }

        Ok(SymbolTable {
            entries,
            codes,
            canonical: canonical.into_iter().map(|(_, s)| s).collect(),
            first_code,
            count,
            first_index,
        })
    }

    pub fn from_symbols(symbols: impl IntoIterator<Item = i64>) -> Result<Self> {
        SymbolTable::from_frequencies(&frequencies(symbols))
    }

    /// `(symbol, length)` pairs sorted by symbol.
    pub fn entries(&self) -> &[(i64, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(code, length)` of a symbol.
    pub fn code(&self, symbol: i64) -> Option<(u64, u8)> {
        self.codes.get(&symbol).copied()
    }

    pub fn kraft_sum(&self) -> f64 {
        self.entries.iter().map(|&(_, l)| (-f64::from(l)).exp2()).sum()
    }

    fn max_len(&self) -> usize {
        self.count.len().saturating_sub(1)
    }
}

pub fn frequencies(symbols: impl IntoIterator<Item = i64>) -> BTreeMap<i64, u64> {
    let mut freqs = BTreeMap::new();
    for s in symbols {
        *freqs.entry(s).or_insert(0) += 1;
    }
    freqs
}

/// Byte-aligned bit string, most significant bit first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BitBuffer {
    pub bytes: Vec<u8>,
    /// Number of meaningful bits; the rest of the last byte is zero padding.
    pub bit_len: u64,
}

impl BitBuffer {
    pub fn pad_bits(&self) -> u8 {
        (self.bytes.len() as u64 * 8 - self.bit_len) as u8
    }

    fn push(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            let bit = (code >> i) & 1;
            let pos = self.bit_len;
            if pos % 8 == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().expect("pushed") |= 0x80 >> (pos % 8);
            }
            self.bit_len += 1;
        }
    }

    fn bit(&self, pos: u64) -> u8 {
        (self.bytes[(pos / 8) as usize] >> (7 - pos % 8)) & 1
    }
}

pub fn encode_symbols(symbols: &[i64], table: &SymbolTable) -> Result<BitBuffer> {
    let mut out = BitBuffer::default();
    for &s in symbols {
        let (code, len) = table.code(s).ok_or(Error::UnknownSymbol(s))?;
        out.push(code, len);
    }
    Ok(out)
}

/// Decodes exactly `count` symbols, which must consume every payload bit.
pub fn decode_symbols(bits: &BitBuffer, table: &SymbolTable, count: usize) -> Result<Vec<i64>> {
    if bits.bit_len > bits.bytes.len() as u64 * 8 {
        return Err(Error::Format("bit length exceeds buffer".into()));
    }
    let max_len = table.max_len();
    let mut out = Vec::with_capacity(count);
    let mut pos = 0u64;
    while out.len() < count {
        let start = pos;
        let mut code = 0u64;
        let mut found = None;
        for l in 1..=max_len {
            if pos >= bits.bit_len {
                return Err(Error::BitsExhausted {
                    decoded: out.len(),
                    expected: count,
                });
            }
            code = (code << 1) | u64::from(bits.bit(pos));
            pos += 1;
            let offset = code.wrapping_sub(table.first_code[l]);
            if code >= table.first_code[l] && offset < table.count[l] {
                found = Some(table.canonical[table.first_index[l] + offset as usize]);
                break;
            }
        }
        match found {
            Some(s) => out.push(s),
            None if max_len == 0 => {
                return Err(Error::BitsExhausted {
                    decoded: 0,
                    expected: count,
                })
            }
            None => return Err(Error::InvalidPrefix(start)),
        }
    }
    if pos != bits.bit_len {
        return Err(Error::TrailingBits(bits.bit_len - pos));
    }
    Ok(out)
}

/// Empirical Shannon entropy in bits per symbol.
pub fn entropy_bits(freqs: &BTreeMap<i64, u64>) -> f64 {
    let total: u64 = freqs.values().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    freqs
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Average code length in bits per symbol for the given distribution.
pub fn mean_code_length(table: &SymbolTable, freqs: &BTreeMap<i64, u64>) -> f64 {
    let total: u64 = freqs.values().sum();
    let bits: u64 = freqs
        .iter()
        .map(|(s, &c)| c * u64::from(table.code(*s).map_or(0, |(_, l)| l)))
        .sum();
    bits as f64 / total as f64
}
