use super::bits::BitVec;

/// One run of the label-map code: (class, run length).
pub type RleEntry = (u8, u16);

/// Row-major run-length code of a label map with entries in {1..M}.
/// Runs longer than 65535 are split.
pub fn encode_label_map(labels: &[u8]) -> Vec<RleEntry> {
    let mut entries = Vec::new();
    let mut iter = labels.iter();
    let mut current = match iter.next() {
        Some(&c) => c,
        None => return entries,
    };
    let mut run: u32 = 1;
    let flush = |class: u8, mut run: u32, out: &mut Vec<RleEntry>| {
        while run > u16::MAX as u32 {
            out.push((class, u16::MAX));
            run -= u16::MAX as u32;
        }
        if run > 0 {
            out.push((class, run as u16));
        }
    };
    for &c in iter {
        if c == current {
            run += 1;
        } else {
            flush(current, run, &mut entries);
            current = c;
            run = 1;
        }
    }
    flush(current, run, &mut entries);
    entries
}

/// Inverse of [`encode_label_map`], total under corruption: classes are
/// clamped to {1..M}, output is truncated or padded with class 1 to hit
/// `expected_len`, and any repair sets the corruption flag.
pub fn decode_label_map(entries: &[RleEntry], expected_len: usize, m: u8) -> (Vec<u8>, bool) {
    let mut out = Vec::with_capacity(expected_len);
    let mut corrupted = false;
    'outer: for &(class, run) in entries {
        let c = if class == 0 || class > m {
            corrupted = true;
            1
        } else {
            class
        };
        for _ in 0..run {
            if out.len() == expected_len {
                corrupted = true;
                break 'outer;
            }
            out.push(c);
        }
    }
    if out.len() < expected_len {
        corrupted = true;
        out.resize(expected_len, 1);
    }
    (out, corrupted)
}

/// Bit cost of the label segment: u32 entry count plus 24 bits per entry.
pub fn label_map_bits(entries: &[RleEntry]) -> usize {
    32 + 24 * entries.len()
}

/// Packs RLE entries as raw bits (class u8 then run u16, MSB-first) for
/// channel simulation; excludes the entry-count field.
pub fn entries_to_bits(entries: &[RleEntry]) -> BitVec {
    let mut bits = BitVec::new();
    for &(class, run) in entries {
        bits.push_bits(class as u32, 8);
        bits.push_bits(run as u32, 16);
    }
    bits
}

pub fn entries_from_bits(bits: &BitVec) -> Vec<RleEntry> {
    let n = bits.len() / 24;
    let read = |start: usize, len: usize| -> u32 {
        let mut v = 0u32;
        for i in 0..len {
            v = (v << 1) | bits.get(start + i) as u32;
        }
        v
    };
    (0..n)
        .map(|i| {
            let base = i * 24;
            ((read(base, 8)) as u8, read(base + 8, 16) as u16)
        })
        .collect()
}
