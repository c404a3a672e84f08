//! Versioned named-parameter archive.
//!
//! Layout: magic `UDSCKPT1`, u32 metadata length, metadata JSON (caller
//! supplied, typically the model config), u32 parameter count, then per
//! parameter: name, shape, raw little-endian f64 data.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"UDSCKPT1";

pub type Snapshot = BTreeMap<String, (Vec<usize>, Vec<f64>)>;

pub fn write_checkpoint<W: Write>(out: &mut W, meta: &str, params: &Snapshot) -> Result<()> {
    out.write_all(MAGIC)?;
    let mb = meta.as_bytes();
    out.write_all(&(mb.len() as u32).to_le_bytes())?;
    out.write_all(mb)?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, (shape, data)) in params {
        let nb = name.as_bytes();
        out.write_all(&(nb.len() as u32).to_le_bytes())?;
        out.write_all(nb)?;
        out.write_all(&(shape.len() as u32).to_le_bytes())?;
        for &d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        out.write_all(&(data.len() as u64).to_le_bytes())?;
        for &v in data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<(String, Snapshot)> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::validation("not a checkpoint file (bad magic)"));
    }
    let meta_len = read_u32(input)? as usize;
    let mut meta = vec![0u8; meta_len];
    input.read_exact(&mut meta)?;
    let meta = String::from_utf8(meta)
        .map_err(|_| Error::validation("checkpoint metadata is not UTF-8"))?;
    let count = read_u32(input)? as usize;
    let mut params = Snapshot::new();
    for _ in 0..count {
        let name_len = read_u32(input)? as usize;
        let mut name = vec![0u8; name_len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::validation("checkpoint parameter name is not UTF-8"))?;
        let ndims = read_u32(input)? as usize;
        let mut shape = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            shape.push(read_u64(input)? as usize);
        }
        let n = read_u64(input)? as usize;
        if n != shape.iter().product::<usize>() {
            return Err(Error::validation(format!(
                "checkpoint entry {}: data length {} does not match shape {:?}",
                name, n, shape
            )));
        }
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            input.read_exact(&mut buf)?;
            data.push(f64::from_le_bytes(buf));
        }
        params.insert(name, (shape, data));
    }
    Ok((meta, params))
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut params = Snapshot::new();
        params.insert("a".into(), (vec![2, 2], vec![1.0, -2.5, 0.0, 3.25]));
        params.insert("b".into(), (vec![3], vec![0.1, 0.2, 0.3]));
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "{\"v\":1}", &params).unwrap();
        let (meta, got) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(meta, "{\"v\":1}");
        assert_eq!(got, params);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"NOTACKPT0000".to_vec();
        assert!(read_checkpoint(&mut buf.as_slice()).is_err());
    }
}
