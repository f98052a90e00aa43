//! Byte-oriented canonical Huffman coding with code lengths limited to 15.
//!
//! Coded form: a 32-byte bitmap of the symbols present, one 4-bit code
//! length per present symbol (ascending symbol order, high nibble first,
//! zero-padded to a byte), then the codes packed MSB-first and zero-padded
//! to a byte. A plane with a single distinct symbol uses length 0 and
//! carries no code bits; the symbol count comes from the caller.

use super::CodecError;

pub const MAX_CODE_LEN: u8 = 15;
const BITMAP_LEN: usize = 32;

pub fn histogram(data: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &b in data {
        h[b as usize] += 1;
    }
    h
}

/// Optimal code lengths under the 15-bit limit (package-merge). Absent
/// symbols get 0; a lone symbol also gets 0.
pub fn code_lengths(counts: &[u64; 256]) -> [u8; 256] {
    let mut lens = [0u8; 256];
    let mut leaves: Vec<(u64, u8)> = (0..=255u8).filter(|&s| counts[s as usize] > 0).map(|s| (counts[s as usize], s)).collect();
    if leaves.len() < 2 {
        return lens;
    }
    leaves.sort_unstable();
    // an item is (weight, leaf symbols it contains)
    let as_items = |l: &[(u64, u8)]| -> Vec<(u64, Vec<u8>)> { l.iter().map(|&(w, s)| (w, vec![s])).collect() };
    let mut list = as_items(&leaves);
    for _ in 1..MAX_CODE_LEN {
        let packages = list.chunks_exact(2).map(|p| (p[0].0 + p[1].0, [p[0].1.as_slice(), p[1].1.as_slice()].concat()));
        let mut merged = Vec::with_capacity(leaves.len() + list.len() / 2);
        let mut leaf_iter = as_items(&leaves).into_iter().peekable();
        for pkg in packages {
            while leaf_iter.peek().is_some_and(|l| l.0 <= pkg.0) {
                merged.push(leaf_iter.next().unwrap());
            }
            merged.push(pkg);
        }
        merged.extend(leaf_iter);
        list = merged;
    }
    for (_, syms) in &list[..2 * leaves.len() - 2] {
        for &s in syms {
            lens[s as usize] += 1;
        }
    }
    lens
}

/// Canonical codes: shorter codes first, ties by symbol value.
fn canonical_codes(lens: &[u8; 256]) -> [u16; 256] {
    let mut order: Vec<u8> = (0..=255u8).filter(|&s| lens[s as usize] > 0).collect();
    order.sort_by_key(|&s| (lens[s as usize], s));
    let mut codes = [0u16; 256];
    let mut code = 0u16;
    let mut prev_len = 0u8;
    for s in order {
        let l = lens[s as usize];
        code <<= l - prev_len;
        codes[s as usize] = code;
        code += 1;
        prev_len = l;
    }
    codes
}

/// Size in bytes of the coded form for `data`, without building it.
pub fn coded_len(data: &[u8]) -> usize {
    let counts = histogram(data);
    let lens = code_lengths(&counts);
    let present = counts.iter().filter(|&&c| c > 0).count();
    let bits: u64 = (0..256).map(|s| counts[s] * u64::from(lens[s])).sum();
    BITMAP_LEN + present.div_ceil(2) + bits.div_ceil(8) as usize
}

pub fn entropy_encode(data: &[u8]) -> Vec<u8> {
    let counts = histogram(data);
    let lens = code_lengths(&counts);
    let codes = canonical_codes(&lens);
    let present: Vec<u8> = (0..=255u8).filter(|&s| counts[s as usize] > 0).collect();

    let mut out = vec![0u8; BITMAP_LEN];
    for &s in &present {
        out[s as usize / 8] |= 1 << (s % 8);
    }
    for pair in present.chunks(2) {
        let hi = lens[pair[0] as usize];
        let lo = pair.get(1).map_or(0, |&s| lens[s as usize]);
        out.push(hi << 4 | lo);
    }

    let mut acc: u32 = 0;
    let mut nbits = 0u32;
    for &b in data {
        let l = u32::from(lens[b as usize]);
        acc = acc << l | u32::from(codes[b as usize]);
        nbits += l;
        while nbits >= 8 {
            nbits -= 8;
            out.push((acc >> nbits) as u8);
        }
        acc &= (1 << nbits) - 1;
    }
    if nbits > 0 {
        out.push((acc << (8 - nbits)) as u8);
    }
    out
}

/// Decodes exactly `len` symbols; `coded` must be consumed completely.
pub fn entropy_decode(coded: &[u8], len: usize) -> Result<Vec<u8>, CodecError> {
    if coded.len() < BITMAP_LEN {
        return Err(CodecError::Truncated { needed: BITMAP_LEN - coded.len() });
    }
    let present: Vec<u8> = (0..=255u8).filter(|&s| coded[s as usize / 8] >> (s % 8) & 1 == 1).collect();
    let table_len = BITMAP_LEN + present.len().div_ceil(2);
    if coded.len() < table_len {
        return Err(CodecError::Truncated { needed: table_len - coded.len() });
    }
    let nibble = |i: usize| {
        let b = coded[BITMAP_LEN + i / 2];
        if i.is_multiple_of(2) { b >> 4 } else { b & 0x0f }
    };
    if present.len() % 2 == 1 && nibble(present.len()) != 0 {
        return Err(CodecError::CorruptTable("non-zero padding nibble"));
    }
    let bits = &coded[table_len..];

    match present.len() {
        0 => {
            if len != 0 {
                return Err(CodecError::CorruptTable("symbols requested from an empty table"));
            }
            if !bits.is_empty() {
                return Err(CodecError::TrailingBytes(bits.len()));
            }
            return Ok(Vec::new());
        }
        1 => {
            if nibble(0) != 0 {
                return Err(CodecError::CorruptTable("a lone symbol must have length 0"));
            }
            if !bits.is_empty() {
                return Err(CodecError::TrailingBytes(bits.len()));
            }
            return Ok(vec![present[0]; len]);
        }
        _ => {}
    }

    let mut count = [0u16; MAX_CODE_LEN as usize + 1];
    let mut lens = [0u8; 256];
    for (i, &s) in present.iter().enumerate() {
        let l = nibble(i);
        if l == 0 {
            return Err(CodecError::CorruptTable("zero length for a present symbol"));
        }
        lens[s as usize] = l;
        count[l as usize] += 1;
    }
    // the code must be complete: Σ 2^-l = 1
    let kraft: u32 = (1..=MAX_CODE_LEN as usize).map(|l| u32::from(count[l]) << (MAX_CODE_LEN as usize - l)).sum();
    if kraft != 1 << MAX_CODE_LEN {
        return Err(CodecError::CorruptTable("code lengths do not form a complete prefix code"));
    }
    // every symbol costs at least one bit
    if len > bits.len().saturating_mul(8) {
        return Err(CodecError::CorruptBitstream);
    }
    let mut sorted: Vec<u8> = present.clone();
    sorted.sort_by_key(|&s| (lens[s as usize], s));

    let mut out = Vec::with_capacity(len);
    let mut pos = 0usize;
    while out.len() < len {
        // canonical decode: walk lengths, comparing against the first code of each
        let mut code: i32 = 0;
        let mut first: i32 = 0;
        let mut index: i32 = 0;
        let mut found = false;
        for l in 1..=MAX_CODE_LEN as usize {
            if pos >= bits.len() * 8 {
                return Err(CodecError::CorruptBitstream);
            }
            code |= i32::from(bits[pos / 8] >> (7 - pos % 8) & 1);
            pos += 1;
            let c = i32::from(count[l]);
            if code - first < c {
                out.push(sorted[(index + code - first) as usize]);
                found = true;
                break;
            }
            index += c;
            first = (first + c) << 1;
            code <<= 1;
        }
        if !found {
            return Err(CodecError::CorruptBitstream);
        }
    }
    let used = pos.div_ceil(8);
    if used != bits.len() {
        return Err(CodecError::TrailingBytes(bits.len() - used));
    }
    if !pos.is_multiple_of(8) && bits[used - 1] & (0xff >> (pos % 8)) != 0 {
        return Err(CodecError::CorruptBitstream);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    /// Cost of an unrestricted Huffman code: the sum of all merge weights.
    fn huffman_cost(counts: &[u64; 256]) -> u64 {
        let mut heap: BinaryHeap<Reverse<u64>> = counts.iter().copied().filter(|&c| c > 0).map(Reverse).collect();
        if heap.len() < 2 {
            return 0;
        }
        let mut cost = 0;
        while heap.len() > 1 {
            let a = heap.pop().unwrap().0;
            let b = heap.pop().unwrap().0;
            cost += a + b;
            heap.push(Reverse(a + b));
        }
        cost
    }

    #[test]
    fn empty_input() {
        let c = entropy_encode(&[]);
        assert_eq!(c, vec![0u8; 32]);
        assert_eq!(entropy_decode(&c, 0).unwrap(), Vec::<u8>::new());
        assert!(entropy_decode(&c, 1).is_err());
    }

    #[test]
    fn single_symbol_has_no_code_bits() {
        let data = vec![7u8; 1000];
        let c = entropy_encode(&data);
        assert_eq!(c.len(), 33);
        assert_eq!(entropy_decode(&c, 1000).unwrap(), data);
    }

    #[test]
    fn aab() {
        let c = entropy_encode(b"aab");
        // table: bitmap + one byte of two nibbles; codes: 3 bits in one byte
        assert_eq!(c.len(), 32 + 1 + 1);
        assert_eq!(entropy_decode(&c, 3).unwrap(), b"aab");
    }

    #[test]
    fn skewed_source_matches_length_oracle() {
        let mut data = vec![0u8; 900];
        data.extend((0..100).map(|i| 1 + (i % 15) as u8));
        let c = entropy_encode(&data);
        assert!(c.len() < data.len());
        let bits = huffman_cost(&histogram(&data));
        assert_eq!(c.len(), 32 + 8 + bits.div_ceil(8) as usize);
        assert_eq!(entropy_decode(&c, data.len()).unwrap(), data);
    }

    #[test]
    fn fibonacci_counts_hit_the_length_limit() {
        // unrestricted Huffman would need 24-bit codes here
        let mut fib = vec![1u64, 1];
        while fib.len() < 26 {
            fib.push(fib[fib.len() - 1] + fib[fib.len() - 2]);
        }
        let mut data = Vec::new();
        for (s, &f) in fib.iter().enumerate() {
            data.extend(std::iter::repeat_n(s as u8, f as usize));
        }
        let lens = code_lengths(&histogram(&data));
        assert_eq!(*lens.iter().max().unwrap(), MAX_CODE_LEN);
        let kraft: f64 = lens.iter().filter(|&&l| l > 0).map(|&l| 0.5f64.powi(l as i32)).sum();
        assert_eq!(kraft, 1.0);
        let c = entropy_encode(&data);
        assert_eq!(entropy_decode(&c, data.len()).unwrap(), data);
    }

    #[test]
    fn all_256_symbols() {
        let data: Vec<u8> = (0..=255u8).cycle().take(5000).collect();
        let c = entropy_encode(&data);
        assert_eq!(entropy_decode(&c, data.len()).unwrap(), data);
        assert_eq!(c.len(), coded_len(&data));
    }

    #[test]
    fn corrupt_inputs_error() {
        let data = b"hello huffman world".to_vec();
        let c = entropy_encode(&data);
        assert!(entropy_decode(&c[..c.len() - 1], data.len()).is_err());
        // zero padding may decode as one more symbol; far more cannot
        assert!(entropy_decode(&c, data.len() + 16).is_err());
        let mut extra = c.clone();
        extra.push(0);
        assert!(entropy_decode(&extra, data.len()).is_err());
        let mut table = c.clone();
        table[32] ^= 0x30;
        assert!(entropy_decode(&table, data.len()).is_err());
        assert!(entropy_decode(&[0u8; 5], 0).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_and_optimal_size(data in proptest::collection::vec(any::<u8>(), 0..3000), skew in 0u8..4) {
            let data: Vec<u8> = data.into_iter().map(|b| b >> (2 * skew)).collect();
            let c = entropy_encode(&data);
            prop_assert_eq!(&entropy_decode(&c, data.len()).unwrap(), &data);
            prop_assert_eq!(c.len(), coded_len(&data));
            // below the length limit, package-merge and Huffman cost the same
            let counts = histogram(&data);
            let lens = code_lengths(&counts);
            let bits: u64 = (0..256).map(|s| counts[s] * u64::from(lens[s])).sum();
            prop_assert_eq!(bits, huffman_cost(&counts));
        }

        #[test]
        fn decoder_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200), len in 0usize..400) {
            let _ = entropy_decode(&bytes, len);
        }
    }
}
