//! `SKT1` binary tensor files.
//!
//! Layout: magic `SKT1`, `u8` dtype tag (0 = f32), `u8` ndim, `ndim` little-endian
//! `u32` dims, then the row-major little-endian `f32` payload. Tensors with fewer
//! than four dims are read with leading unit dims.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SKT1";
pub const DTYPE_F32: u8 = 0;

pub fn encode(t: &Tensor<f32>) -> Vec<u8> {
    let mut buf = Vec::with_capacity(6 + 16 + 4 * t.len());
    buf.extend_from_slice(MAGIC);
    buf.push(DTYPE_F32);
    buf.push(4);
    for d in t.dims() {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode(mut bytes: &[u8]) -> Result<Tensor<f32>> {
    let fmt = |m: &str| Error::Format(m.to_string());
    let mut head = [0u8; 6];
    bytes.read_exact(&mut head).map_err(|_| fmt("truncated header"))?;
    if &head[..4] != MAGIC {
        return Err(fmt("bad magic"));
    }
    if head[4] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype tag {}", head[4])));
    }
    let ndim = head[5] as usize;
    if !(1..=4).contains(&ndim) {
        return Err(Error::Format(format!("unsupported ndim {ndim}")));
    }
    let mut dims = [1usize; 4];
    for slot in dims[4 - ndim..].iter_mut() {
        let mut d = [0u8; 4];
        bytes.read_exact(&mut d).map_err(|_| fmt("truncated dims"))?;
        *slot = u32::from_le_bytes(d) as usize;
    }
    let len: usize = dims.iter().product();
    if bytes.len() != 4 * len {
        return Err(Error::Format(format!("payload holds {} bytes, dims {dims:?} need {}", bytes.len(), 4 * len)));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    Tensor::from_vec(dims, data)
}

pub fn write(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn read(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    decode(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_bytes() {
        let t = Tensor::from_vec([1, 1, 1, 2], vec![1.0f32, -2.0]).unwrap();
        let b = encode(&t);
        assert_eq!(&b[..6], b"SKT1\x00\x04");
        assert_eq!(&b[6..10], &1u32.to_le_bytes());
        assert_eq!(&b[18..22], &2u32.to_le_bytes());
        assert_eq!(&b[22..26], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 30);
    }

    #[test]
    fn short_ndim_gets_leading_ones() {
        let mut b = b"SKT1\x00\x01".to_vec();
        b.extend_from_slice(&3u32.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0] {
            b.extend_from_slice(&v.to_le_bytes());
        }
        let t = decode(&b).unwrap();
        assert_eq!(t.dims(), [1, 1, 1, 3]);
    }

    #[test]
    fn rejects_corrupt() {
        assert!(decode(b"SKT2\x00\x01").is_err());
        assert!(decode(b"SKT1\x01\x01\x01\x00\x00\x00").is_err());
        let mut b = encode(&Tensor::zeros([1, 1, 2, 2]));
        b.pop();
        assert!(decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(dims in proptest::array::uniform4(1usize..5), seed in any::<u64>()) {
            let t = Tensor::<f32>::random(dims, 10.0, seed);
            prop_assert_eq!(decode(&encode(&t)).unwrap(), t);
        }
    }
}
