//! File formats: PPM/PGM images, and versioned binary checkpoints for
//! named parameter blocks.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::{ParamBlock, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RLCK";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}

fn format_err<T>(msg: impl Into<String>) -> Result<T, IoError> {
    Err(IoError::Format(msg.into()))
}

/// Writes a [3, H, W] image with values in [0, 1] as binary PPM (P6).
pub fn write_ppm(path: &Path, image: &Tensor, height: usize, width: usize) -> Result<(), IoError> {
    let hw = height * width;
    if image.len() != 3 * hw {
        return format_err(format!(
            "image has {} values, expected {} for {width}x{height}",
            image.len(),
            3 * hw
        ));
    }
    let mut bytes = format!("P6\n{width} {height}\n255\n").into_bytes();
    for p in 0..hw {
        for ch in 0..3 {
            let v = image.data()[ch * hw + p].clamp(0.0, 1.0);
            bytes.push((v * 255.0).round() as u8);
        }
    }
    Ok(fs::write(path, bytes)?)
}

/// Writes a label map as binary PGM (P5) with one byte per pixel.
pub fn write_pgm(path: &Path, labels: &[u8], height: usize, width: usize) -> Result<(), IoError> {
    if labels.len() != height * width {
        return format_err(format!(
            "label map has {} entries, expected {}",
            labels.len(),
            height * width
        ));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend_from_slice(labels);
    Ok(fs::write(path, bytes)?)
}

/// Netpbm header tokenizer: skips whitespace and `#` comments.
fn pnm_tokens(bytes: &[u8], count: usize) -> Result<(Vec<usize>, usize), IoError> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    while out.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return format_err("truncated netpbm header");
        }
        let tok = std::str::from_utf8(&bytes[start..i])
            .map_err(|_| IoError::Format("non-ascii netpbm header".into()))?;
        out.push(
            tok.parse::<usize>()
                .map_err(|_| IoError::Format(format!("bad netpbm header token {tok:?}")))?,
        );
    }
    // Exactly one whitespace byte separates the header from the raster.
    Ok((out, i + 1))
}

/// Reads a binary PPM into ([3, H, W] tensor in [0, 1], height, width).
pub fn read_ppm(path: &Path) -> Result<(Tensor, usize, usize), IoError> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"P6") {
        return format_err("not a binary PPM (missing P6 magic)");
    }
    let (head, data_at) = pnm_tokens(&bytes[2..], 3)?;
    let (width, height, maxval) = (head[0], head[1], head[2]);
    if maxval != 255 {
        return format_err(format!("unsupported PPM maxval {maxval}"));
    }
    let hw = height * width;
    let raster = &bytes[2 + data_at..];
    if raster.len() < 3 * hw {
        return format_err(format!("PPM raster has {} bytes, expected {}", raster.len(), 3 * hw));
    }
    let mut data = vec![0.0f64; 3 * hw];
    for p in 0..hw {
        for ch in 0..3 {
            data[ch * hw + p] = raster[3 * p + ch] as f64 / 255.0;
        }
    }
    Ok((Tensor::new(vec![3, height, width], data).expect("ppm tensor"), height, width))
}

/// Reads a binary PGM into (labels, height, width).
pub fn read_pgm(path: &Path) -> Result<(Vec<u8>, usize, usize), IoError> {
    let bytes = fs::read(path)?;
    if !bytes.starts_with(b"P5") {
        return format_err("not a binary PGM (missing P5 magic)");
    }
    let (head, data_at) = pnm_tokens(&bytes[2..], 3)?;
    let (width, height, maxval) = (head[0], head[1], head[2]);
    if maxval != 255 {
        return format_err(format!("unsupported PGM maxval {maxval}"));
    }
    let hw = height * width;
    let raster = &bytes[2 + data_at..];
    if raster.len() < hw {
        return format_err(format!("PGM raster has {} bytes, expected {hw}", raster.len()));
    }
    Ok((raster[..hw].to_vec(), height, width))
}

fn push_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes named parameter blocks: little-endian integers, f64 data,
/// magic + version up front like the bitstream container.
pub fn checkpoint_bytes(blocks: &[(&str, &ParamBlock<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(CHECKPOINT_VERSION);
    out.extend_from_slice(&(blocks.len() as u16).to_le_bytes());
    for (name, block) in blocks {
        push_str(&mut out, name);
        out.extend_from_slice(&(block.len() as u32).to_le_bytes());
        for (pname, tensor) in block.iter() {
            push_str(&mut out, pname);
            out.push(tensor.shape().len() as u8);
            for &d in tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, blocks: &[(&str, &ParamBlock<f64>)]) -> Result<(), IoError> {
    Ok(fs::write(path, checkpoint_bytes(blocks))?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.bytes.len() {
            return format_err(format!(
                "checkpoint truncated at offset {}: needed {} more bytes",
                self.pos,
                self.pos + n - self.bytes.len()
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, IoError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, IoError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, IoError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String, IoError> {
        let len = self.u16()? as usize;
        let b = self.take(len)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| IoError::Format("non-utf8 name in checkpoint".into()))
    }
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<Vec<(String, ParamBlock<f64>)>, IoError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return format_err("bad checkpoint magic");
    }
    let version = r.u8()?;
    if version != CHECKPOINT_VERSION {
        return format_err(format!("unsupported checkpoint version {version}"));
    }
    let block_count = r.u16()? as usize;
    let mut blocks = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let bname = r.string()?;
        let tensor_count = r.u32()? as usize;
        let mut block = ParamBlock::new();
        for _ in 0..tensor_count {
            let pname = r.string()?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let count: usize = shape.iter().product();
            let raw = r.take(8 * count)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            block.insert(
                &pname,
                Tensor::new(shape, data)
                    .map_err(|e| IoError::Format(format!("bad tensor {pname}: {e}")))?,
            );
        }
        blocks.push((bname, block));
    }
    if r.pos != bytes.len() {
        return format_err(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos));
    }
    Ok(blocks)
}

pub fn load_checkpoint(path: &Path) -> Result<Vec<(String, ParamBlock<f64>)>, IoError> {
    checkpoint_from_bytes(&fs::read(path)?)
}

/// Convenience lookup for one named block.
pub fn block_named(
    blocks: &[(String, ParamBlock<f64>)],
    name: &str,
) -> Result<ParamBlock<f64>, IoError> {
    blocks
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, b)| b.clone())
        .ok_or_else(|| IoError::Format(format!("checkpoint has no {name:?} block")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::RngStream;

    #[test]
    fn ppm_round_trip_is_exact_on_representable_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        // Values on the 1/255 grid survive the byte round trip exactly.
        let (h, w) = (8, 16);
        let mut rng = RngStream::new(50, 0);
        let data: Vec<f64> =
            (0..3 * h * w).map(|_| rng.next_usize(256) as f64 / 255.0).collect();
        let img = Tensor::new(vec![3, h, w], data).unwrap();
        write_ppm(&path, &img, h, w).unwrap();
        let (back, bh, bw) = read_ppm(&path).unwrap();
        assert_eq!((bh, bw), (h, w));
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_round_trip_and_header_comments() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.pgm");
        let labels: Vec<u8> = (0..64).map(|i| 1 + (i % 4) as u8).collect();
        write_pgm(&path, &labels, 8, 8).unwrap();
        let (back, h, w) = read_pgm(&path).unwrap();
        assert_eq!((h, w), (8, 8));
        assert_eq!(back, labels);
        // Comment-laden header parses too.
        let mut with_comment = b"P5\n# a comment\n8 8\n255\n".to_vec();
        with_comment.extend_from_slice(&labels);
        std::fs::write(&path, with_comment).unwrap();
        let (back, _, _) = read_pgm(&path).unwrap();
        assert_eq!(back, labels);
    }

    #[test]
    fn ppm_clamps_out_of_range_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clamp.ppm");
        let img = Tensor::new(vec![3, 1, 1], vec![-0.5, 0.5, 1.7]).unwrap();
        write_ppm(&path, &img, 1, 1).unwrap();
        let (back, _, _) = read_ppm(&path).unwrap();
        assert_eq!(back.data()[0], 0.0);
        assert_eq!(back.data()[2], 1.0);
    }

    #[test]
    fn checkpoint_round_trip_preserves_all_tensors() {
        let mut rng = RngStream::new(51, 0);
        let mut a: ParamBlock<f64> = ParamBlock::new();
        a.insert_randn("w", vec![3, 4], 1.0, &mut rng);
        a.insert_randn("b", vec![4], 1.0, &mut rng);
        let mut b: ParamBlock<f64> = ParamBlock::new();
        b.insert_randn("head.1.w", vec![2, 2, 2], 0.5, &mut rng);
        let bytes = checkpoint_bytes(&[("encoder", &a), ("generator", &b)]);
        let blocks = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(blocks.len(), 2);
        let a2 = block_named(&blocks, "encoder").unwrap();
        for name in ["w", "b"] {
            assert_eq!(a2.get(name).unwrap(), a.get(name).unwrap());
        }
        let b2 = block_named(&blocks, "generator").unwrap();
        assert_eq!(b2.get("head.1.w").unwrap(), b.get("head.1.w").unwrap());
        assert!(block_named(&blocks, "missing").is_err());
    }

    #[test]
    fn corrupt_checkpoints_rejected() {
        let mut p: ParamBlock<f64> = ParamBlock::new();
        p.insert_zeros("w", vec![2]);
        let bytes = checkpoint_bytes(&[("only", &p)]);
        assert!(checkpoint_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(checkpoint_from_bytes(&bad_magic).is_err());
        let mut bad_version = bytes.clone();
        bad_version[4] = CHECKPOINT_VERSION + 1;
        assert!(checkpoint_from_bytes(&bad_version).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(checkpoint_from_bytes(&trailing).is_err());
    }
}
