//! Versioned binary tensor container shared by weight files and dataset
//! exports.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "SNAS" | version u32 | skeleton_hash u64 | tensor_count u32
//! per tensor: ndims u32 | dims u64 x ndims | payload f32 x prod(dims)
//! label block: present u8 (0 or 1) [| split u8 | count u64 | labels u32 x count]
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SNAS";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub dims: Vec<u64>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelBlock {
    pub split: u8,
    pub labels: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub skeleton_hash: u64,
    pub tensors: Vec<RawTensor>,
    pub labels: Option<LabelBlock>,
}

pub fn write<W: Write>(mut out: W, c: &Container) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&c.skeleton_hash.to_le_bytes())?;
    out.write_all(&(c.tensors.len() as u32).to_le_bytes())?;
    for t in &c.tensors {
        let expected: u64 = t.dims.iter().product();
        if expected != t.data.len() as u64 {
            return Err(Error::Shape(format!(
                "tensor dims {:?} do not match {} values",
                t.dims,
                t.data.len()
            )));
        }
        out.write_all(&(t.dims.len() as u32).to_le_bytes())?;
        for d in &t.dims {
            out.write_all(&d.to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(t.data.len() * 4);
        for v in &t.data {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&payload)?;
    }
    match &c.labels {
        None => out.write_all(&[0])?,
        Some(block) => {
            out.write_all(&[1, block.split])?;
            out.write_all(&(block.labels.len() as u64).to_le_bytes())?;
            for l in &block.labels {
                out.write_all(&l.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf)
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("unexpected end of file".into())
    } else {
        Error::Io(e)
    }
}

pub fn read<R: Read>(mut r: R) -> Result<Container> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("missing SNAS magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let skeleton_hash = u64::from_le_bytes(read_array(&mut r)?);
    let count = u32::from_le_bytes(read_array(&mut r)?);
    let mut tensors = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let ndims = u32::from_le_bytes(read_array(&mut r)?);
        if ndims > 8 {
            return Err(Error::Format(format!("tensor with {ndims} dimensions")));
        }
        let dims = (0..ndims)
            .map(|_| read_array(&mut r).map(u64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("tensor size overflow".into()))?;
        let mut payload = Vec::new();
        (&mut r).take(len).read_to_end(&mut payload)?;
        if payload.len() as u64 != len {
            return Err(Error::Format("unexpected end of file".into()));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push(RawTensor { dims, data });
    }
    let labels = match read_array::<1, _>(&mut r)?[0] {
        0 => None,
        1 => {
            let split = read_array::<1, _>(&mut r)?[0];
            let n = u64::from_le_bytes(read_array(&mut r)?);
            let labels = (0..n)
                .map(|_| read_array(&mut r).map(u32::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            Some(LabelBlock { split, labels })
        }
        flag => return Err(Error::Format(format!("bad label-block flag {flag}"))),
    };
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after label block".into()));
    }
    Ok(Container {
        skeleton_hash,
        tensors,
        labels,
    })
}

pub fn write_file(path: &Path, c: &Container) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf, c)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_file(path: &Path) -> Result<Container> {
    read(io::Cursor::new(fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let c = Container {
            skeleton_hash: 0x0102_0304_0506_0708,
            tensors: vec![RawTensor {
                dims: vec![1],
                data: vec![1.0],
            }],
            labels: None,
        };
        let mut buf = Vec::new();
        write(&mut buf, &c).unwrap();
        assert_eq!(&buf[..4], b"SNAS");
        assert_eq!(&buf[4..8], &[1, 0, 0, 0]);
        assert_eq!(&buf[8..16], &[8, 7, 6, 5, 4, 3, 2, 1]);
        assert_eq!(&buf[16..20], &[1, 0, 0, 0]);
        assert_eq!(&buf[20..24], &[1, 0, 0, 0]);
        assert_eq!(&buf[32..36], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 37);
    }

    #[test]
    fn rejects_corruption() {
        assert!(matches!(read(&b"SNAX"[..]), Err(Error::Format(_))));
        let c = Container {
            skeleton_hash: 1,
            tensors: vec![RawTensor {
                dims: vec![2],
                data: vec![1.0, 2.0],
            }],
            labels: None,
        };
        let mut buf = Vec::new();
        write(&mut buf, &c).unwrap();
        assert!(matches!(read(&buf[..buf.len() - 3]), Err(Error::Format(_))));
        buf.push(0);
        assert!(matches!(read(&buf[..]), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            hash in any::<u64>(),
            bits in proptest::collection::vec(any::<u32>(), 0..64),
            labels in proptest::option::of(proptest::collection::vec(any::<u32>(), 0..16)),
        ) {
            let c = Container {
                skeleton_hash: hash,
                tensors: vec![RawTensor { dims: vec![bits.len() as u64], data: bits.iter().map(|b| f32::from_bits(*b)).collect() }],
                labels: labels.map(|labels| LabelBlock { split: 1, labels }),
            };
            let mut buf = Vec::new();
            write(&mut buf, &c).unwrap();
            let back = read(&buf[..]).unwrap();
            let got: Vec<u32> = back.tensors[0].data.iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(got, bits);
            prop_assert_eq!(back.skeleton_hash, hash);
            prop_assert_eq!(back.labels, c.labels);
        }
    }
}
