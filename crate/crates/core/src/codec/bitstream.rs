use super::bits::BitVec;
use super::huffman::HuffmanTable;
use super::rle::{label_map_bits, RleEntry};
use super::CodecError;

pub const MAGIC: &[u8; 4] = b"RLSC";
pub const VERSION: u8 = 1;

/// Fixed header of a semantic bitstream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamHeader {
    /// Number of semantic concepts.
    pub m: u16,
    /// Feature channels per concept.
    pub n: u16,
    /// Downscaled grid width.
    pub w: u16,
    /// Downscaled grid height.
    pub h: u16,
    /// Number of quantization levels.
    pub q: u8,
}

impl StreamHeader {
    pub fn pixel_count(&self) -> usize {
        (self.w as usize * 8) * (self.h as usize * 8)
    }

    pub fn symbols_per_concept(&self) -> usize {
        self.n as usize * self.w as usize * self.h as usize
    }
}

/// One concept's entropy-coded payload with its Huffman table.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptSegment {
    /// Concept index m in 1..=M; implicit in the wire order.
    pub class_id: u8,
    pub level: u8,
    pub table: HuffmanTable,
    pub payload: BitVec,
}

impl ConceptSegment {
    pub fn payload_bits(&self) -> usize {
        self.payload.len()
    }
}

/// Bit-exact container for one coded image.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticBitstream {
    pub header: StreamHeader,
    pub segments: Vec<ConceptSegment>,
    pub label_entries: Vec<RleEntry>,
}

/// Rate accounting for one stream. `psi_bpp` follows the transmitted-bit
/// definition (label bits plus concept payload bits over pixel count);
/// header and table overhead is reported separately.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RateReport {
    pub psi_bpp: f64,
    pub payload_bits: usize,
    pub label_bits: usize,
    pub total_file_bits: usize,
}

impl SemanticBitstream {
    pub fn rate_psi(&self) -> RateReport {
        let payload_bits: usize = self.segments.iter().map(|s| s.payload_bits()).sum();
        let label_bits = label_map_bits(&self.label_entries);
        let pixels = self.header.pixel_count();
        RateReport {
            psi_bpp: (payload_bits + label_bits) as f64 / pixels as f64,
            payload_bits,
            label_bits,
            total_file_bits: self.serialize().len() * 8,
        }
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.header.m.to_le_bytes());
        out.extend_from_slice(&self.header.n.to_le_bytes());
        out.extend_from_slice(&self.header.w.to_le_bytes());
        out.extend_from_slice(&self.header.h.to_le_bytes());
        out.push(self.header.q);
        for seg in &self.segments {
            out.push(seg.level);
            out.extend_from_slice(&(seg.payload.len() as u32).to_le_bytes());
            let lengths = seg.table.lengths();
            out.extend_from_slice(&(lengths.len() as u16).to_le_bytes());
            for &(sym, len) in lengths {
                out.push(sym);
                out.push(len);
            }
            out.extend_from_slice(seg.payload.as_bytes());
        }
        out.extend_from_slice(&(self.label_entries.len() as u32).to_le_bytes());
        for &(class, run) in &self.label_entries {
            out.push(class);
            out.extend_from_slice(&run.to_le_bytes());
        }
        out
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(CodecError::BadMagic { offset: 0 });
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(CodecError::UnsupportedVersion { found: version });
        }
        let header = StreamHeader {
            m: r.u16()?,
            n: r.u16()?,
            w: r.u16()?,
            h: r.u16()?,
            q: r.u8()?,
        };
        let mut segments = Vec::with_capacity(header.m as usize);
        for class_id in 1..=header.m {
            let level = r.u8()?;
            let payload_bits = r.u32()? as usize;
            let count = r.u16()? as usize;
            let mut pairs = Vec::with_capacity(count);
            for _ in 0..count {
                let sym = r.u8()?;
                let len = r.u8()?;
                pairs.push((sym, len));
            }
            let payload_bytes = r.take(payload_bits.div_ceil(8))?.to_vec();
            segments.push(ConceptSegment {
                class_id: class_id as u8,
                level,
                table: HuffmanTable::from_lengths(pairs)?,
                payload: BitVec::from_bytes(payload_bytes, payload_bits),
            });
        }
        let entry_count = r.u32()? as usize;
        let mut label_entries = Vec::with_capacity(entry_count);
        for _ in 0..entry_count {
            let class = r.u8()?;
            let run = r.u16()?;
            label_entries.push((class, run));
        }
        if r.pos != bytes.len() {
            return Err(CodecError::Malformed(format!(
                "{} trailing bytes at offset {}",
                bytes.len() - r.pos,
                r.pos
            )));
        }
        Ok(Self { header, segments, label_entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.pos + n > self.bytes.len() {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::rle::encode_label_map;
    use crate::RngStream;

    fn random_stream(rng: &mut RngStream) -> SemanticBitstream {
        let m = 1 + rng.next_usize(6) as u16;
        let header = StreamHeader { m, n: 4, w: 8, h: 4, q: 6 };
        let count = header.symbols_per_concept();
        let segments = (1..=m)
            .map(|class_id| {
                let level = 1 + rng.next_usize(6) as u8;
                let alphabet = 1usize << level;
                let syms: Vec<u8> =
                    (0..count).map(|_| rng.next_usize(alphabet) as u8).collect();
                let table = HuffmanTable::build(&syms).unwrap();
                let payload = table.encode(&syms).unwrap();
                ConceptSegment { class_id: class_id as u8, level, table, payload }
            })
            .collect();
        let labels: Vec<u8> =
            (0..header.pixel_count()).map(|_| 1 + rng.next_usize(m as usize) as u8).collect();
        SemanticBitstream { header, segments, label_entries: encode_label_map(&labels) }
    }

    #[test]
    fn round_trip_random_streams() {
        let mut rng = RngStream::new(21, 0);
        for _ in 0..50 {
            let s = random_stream(&mut rng);
            let bytes = s.serialize();
            let back = SemanticBitstream::deserialize(&bytes).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn corrupt_magic_names_offset_zero() {
        let mut rng = RngStream::new(21, 1);
        let mut bytes = random_stream(&mut rng).serialize();
        bytes[0] = b'X';
        assert_eq!(
            SemanticBitstream::deserialize(&bytes),
            Err(CodecError::BadMagic { offset: 0 })
        );
    }

    #[test]
    fn future_version_rejected() {
        let mut rng = RngStream::new(21, 2);
        let mut bytes = random_stream(&mut rng).serialize();
        bytes[4] = VERSION + 1;
        assert_eq!(
            SemanticBitstream::deserialize(&bytes),
            Err(CodecError::UnsupportedVersion { found: VERSION + 1 })
        );
    }

    #[test]
    fn truncation_reports_offset() {
        let mut rng = RngStream::new(21, 3);
        let bytes = random_stream(&mut rng).serialize();
        let cut = &bytes[..bytes.len() - 3];
        match SemanticBitstream::deserialize(cut) {
            Err(CodecError::Truncated { .. }) => {}
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn psi_matches_manual_bit_count() {
        let mut rng = RngStream::new(21, 4);
        let s = random_stream(&mut rng);
        let report = s.rate_psi();
        let manual_payload: usize = s.segments.iter().map(|seg| seg.payload.len()).sum();
        let manual_label = 32 + 24 * s.label_entries.len();
        assert_eq!(report.payload_bits, manual_payload);
        assert_eq!(report.label_bits, manual_label);
        let pixels = s.header.pixel_count() as f64;
        assert_eq!(report.psi_bpp, (manual_payload + manual_label) as f64 / pixels);
        assert_eq!(report.total_file_bits, s.serialize().len() * 8);
    }

    #[test]
    fn psi_monotone_in_segment_length() {
        let mut rng = RngStream::new(21, 5);
        let s = random_stream(&mut rng);
        let base = s.rate_psi().psi_bpp;
        let mut bigger = s.clone();
        let mut payload = bigger.segments[0].payload.clone();
        payload.push(true);
        bigger.segments[0].payload = payload;
        assert!(bigger.rate_psi().psi_bpp > base);
    }
}
