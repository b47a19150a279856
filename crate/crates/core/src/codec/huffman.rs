use super::bits::BitVec;
use super::CodecError;

/// Canonical Huffman table: code lengths per symbol, codes derived from
/// lengths so only (symbol, length) pairs travel in the bitstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanTable {
    /// Sorted by symbol.
    lengths: Vec<(u8, u8)>,
}

/// Result of decoding a payload that may have traversed a noisy channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeOutcome {
    pub symbols: Vec<u8>,
    pub corrupted: bool,
}

impl HuffmanTable {
    /// Optimal prefix code for the empirical frequencies of `symbols`.
    /// A single-symbol alphabet gets code length 1.
    pub fn build(symbols: &[u8]) -> Result<Self, CodecError> {
        if symbols.is_empty() {
            return Err(CodecError::EmptyAlphabet);
        }
        let mut freq = [0u64; 256];
        for &s in symbols {
            freq[s as usize] += 1;
        }
        let leaves: Vec<(u8, u64)> = (0..256u16)
            .filter(|&s| freq[s as usize] > 0)
            .map(|s| (s as u8, freq[s as usize]))
            .collect();
        if leaves.len() == 1 {
            return Ok(Self { lengths: vec![(leaves[0].0, 1)] });
        }
        // Two-queue merge over leaves sorted by (freq, symbol); ties
        // prefer leaves, keeping the construction deterministic.
        #[derive(Debug)]
        enum Tree {
            Leaf(u8),
            Node(Box<Tree>, Box<Tree>),
        }
        let mut q1: std::collections::VecDeque<(u64, Tree)> = {
            let mut sorted = leaves.clone();
            sorted.sort_by_key(|&(s, f)| (f, s));
            sorted.into_iter().map(|(s, f)| (f, Tree::Leaf(s))).collect()
        };
        let mut q2: std::collections::VecDeque<(u64, Tree)> = std::collections::VecDeque::new();
        let pop_min = |q1: &mut std::collections::VecDeque<(u64, Tree)>,
                       q2: &mut std::collections::VecDeque<(u64, Tree)>| {
            match (q1.front(), q2.front()) {
                (Some(a), Some(b)) => {
                    if a.0 <= b.0 {
                        q1.pop_front().unwrap()
                    } else {
                        q2.pop_front().unwrap()
                    }
                }
                (Some(_), None) => q1.pop_front().unwrap(),
                (None, Some(_)) => q2.pop_front().unwrap(),
                (None, None) => unreachable!("queues exhausted"),
            }
        };
        while q1.len() + q2.len() > 1 {
            let a = pop_min(&mut q1, &mut q2);
            let b = pop_min(&mut q1, &mut q2);
            q2.push_back((a.0 + b.0, Tree::Node(Box::new(a.1), Box::new(b.1))));
        }
        let root = pop_min(&mut q1, &mut q2).1;
        let mut lengths = Vec::with_capacity(leaves.len());
        fn walk(t: &Tree, depth: u8, out: &mut Vec<(u8, u8)>) {
            match t {
                Tree::Leaf(s) => out.push((*s, depth.max(1))),
                Tree::Node(l, r) => {
                    walk(l, depth + 1, out);
                    walk(r, depth + 1, out);
                }
            }
        }
        walk(&root, 0, &mut lengths);
        lengths.sort_by_key(|&(s, _)| s);
        Ok(Self { lengths })
    }

    /// Reconstructs a table from (symbol, length) pairs, e.g. read back
    /// from a serialized stream.
    pub fn from_lengths(pairs: Vec<(u8, u8)>) -> Result<Self, CodecError> {
        if pairs.is_empty() {
            return Err(CodecError::EmptyAlphabet);
        }
        let mut lengths = pairs;
        lengths.sort_by_key(|&(s, _)| s);
        for w in lengths.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(CodecError::Malformed(format!(
                    "duplicate symbol {} in Huffman table",
                    w[0].0
                )));
            }
        }
        if lengths.iter().any(|&(_, l)| l == 0) {
            return Err(CodecError::Malformed("zero code length".into()));
        }
        let table = Self { lengths };
        if table.kraft_sum() > 1.0 + 1e-12 {
            return Err(CodecError::Malformed("Kraft inequality violated".into()));
        }
        Ok(table)
    }

    pub fn lengths(&self) -> &[(u8, u8)] {
        &self.lengths
    }

    pub fn kraft_sum(&self) -> f64 {
        self.lengths.iter().map(|&(_, l)| 0.5f64.powi(l as i32)).sum()
    }

    fn max_len(&self) -> u8 {
        self.lengths.iter().map(|&(_, l)| l).max().unwrap_or(0)
    }

    /// Symbols sorted by (length, symbol) with their canonical codes.
    fn canonical_codes(&self) -> Vec<(u8, u8, u32)> {
        let mut by_len: Vec<(u8, u8)> = self.lengths.iter().map(|&(s, l)| (s, l)).collect();
        by_len.sort_by_key(|&(s, l)| (l, s));
        let mut out = Vec::with_capacity(by_len.len());
        let mut code: u32 = 0;
        let mut prev_len: u8 = 0;
        for (s, l) in by_len {
            code <<= l - prev_len;
            out.push((s, l, code));
            code += 1;
            prev_len = l;
        }
        out
    }

    pub fn code_for(&self, symbol: u8) -> Option<(u8, u32)> {
        self.canonical_codes()
            .into_iter()
            .find(|&(s, _, _)| s == symbol)
            .map(|(_, l, c)| (l, c))
    }

    /// Concatenated canonical codewords, MSB-first.
    pub fn encode(&self, symbols: &[u8]) -> Result<BitVec, CodecError> {
        let codes = self.canonical_codes();
        let mut lut: [Option<(u8, u32)>; 256] = [None; 256];
        for (s, l, c) in codes {
            lut[s as usize] = Some((l, c));
        }
        let mut bits = BitVec::new();
        for &s in symbols {
            let (l, c) = lut[s as usize].ok_or(CodecError::UnknownSymbol(s))?;
            bits.push_bits(c, l as usize);
        }
        Ok(bits)
    }

    /// Decodes exactly `count` symbols. Always total: a codeword that
    /// cannot match (over-long run or truncated tail) becomes symbol
    /// index 0 and raises the corruption flag.
    pub fn decode(&self, bits: &BitVec, count: usize) -> DecodeOutcome {
        let codes = self.canonical_codes();
        let max_len = self.max_len() as usize;
        // first_code / count / symbol list per length.
        let mut first = vec![0u32; max_len + 1];
        let mut num = vec![0u32; max_len + 1];
        let mut offset = vec![0usize; max_len + 1];
        let syms: Vec<u8> = codes.iter().map(|&(s, _, _)| s).collect();
        for (i, &(_, l, c)) in codes.iter().enumerate() {
            let l = l as usize;
            if num[l] == 0 {
                first[l] = c;
                offset[l] = i;
            }
            num[l] += 1;
        }
        let mut out = Vec::with_capacity(count);
        let mut corrupted = false;
        let mut code: u32 = 0;
        let mut len: usize = 0;
        let mut pos = 0;
        while out.len() < count && pos < bits.len() {
            code = (code << 1) | bits.get(pos) as u32;
            len += 1;
            pos += 1;
            if len <= max_len && num[len] > 0 {
                let f = first[len];
                if code >= f && code - f < num[len] {
                    out.push(syms[offset[len] + (code - f) as usize]);
                    code = 0;
                    len = 0;
                    continue;
                }
            }
            if len >= max_len {
                // No codeword matches this prefix; noise policy maps it
                // to center index 0.
                out.push(0);
                corrupted = true;
                code = 0;
                len = 0;
            }
        }
        if out.len() < count {
            if len > 0 {
                corrupted = true;
            }
            while out.len() < count {
                out.push(0);
                corrupted = true;
            }
        }
        DecodeOutcome { symbols: out, corrupted }
    }
}

/// Empirical entropy in bits per symbol of a symbol grid.
pub fn empirical_entropy(symbols: &[u8]) -> f64 {
    let mut freq = [0u64; 256];
    for &s in symbols {
        freq[s as usize] += 1;
    }
    let n = symbols.len() as f64;
    freq.iter()
        .filter(|&&f| f > 0)
        .map(|&f| {
            let p = f as f64 / n;
            -p * p.log2()
        })
        .sum()
}
