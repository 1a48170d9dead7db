//! Canonical Huffman coding of integer symbols and the compressed container.

mod container;
mod huffman;

pub use container::{CompressedStream, StreamHeader, STREAM_MAGIC, STREAM_VERSION};
pub use huffman::{
    decode_symbols, encode_symbols, entropy_bits, frequencies, mean_code_length, BitBuffer,
    SymbolTable, MAX_CODE_LEN,
};

use crate::bytes::{ByteReader, ByteWriter};
use crate::error::Result;

/// Serializes a table as an entry count followed by `(i64 symbol, u8 length)`
/// pairs in symbol order. An absent table is written as zero entries.
pub(crate) fn write_table(w: &mut ByteWriter, table: Option<&SymbolTable>) {
    let entries = table.map_or(&[][..], SymbolTable::entries);
    w.u32(entries.len() as u32);
    for &(s, l) in entries {
        w.i64(s);
        w.u8(l);
    }
}

pub(crate) fn read_table(r: &mut ByteReader<'_>) -> Result<Option<SymbolTable>> {
    let n = r.u32("table length")? as usize;
    if n == 0 {
        return Ok(None);
    }
    // each entry is 9 bytes; bound the allocation by what is actually present
    let mut pairs = Vec::with_capacity(n.min(r.remaining() / 9));
    for _ in 0..n {
        pairs.push((r.i64("table symbol")?, r.u8("code length")?));
    }
    SymbolTable::from_lengths(&pairs).map(Some)
}
