//! Binary named-tensor container.
//!
//! ```text
//! ADALOG-CHECKPOINT 1\n
//! key=value\n            (repeated; values are single-line)
//! \n                     (blank line ends the header)
//! record*                name_len:u32 name:utf8 rank:u32 dims:u32*rank payload:f32*prod(dims)
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Read, Write};

use super::Tensor;
use crate::{Error, Result};

const MAGIC: &str = "ADALOG-CHECKPOINT 1";

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub header: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn value(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn write_container<W: Write>(mut w: W, c: &Container) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    for (k, v) in &c.header {
        if k.contains(['=', '\n']) || v.contains('\n') || k.is_empty() {
            return Err(Error::format("checkpoint header", format!("bad entry `{k}`")));
        }
        writeln!(w, "{k}={v}")?;
    }
    writeln!(w)?;
    for t in &c.tensors {
        let expected: usize = t.shape.iter().product();
        if expected != t.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}: shape {:?} but {} values",
                t.name,
                t.shape,
                t.data.len()
            )));
        }
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut payload = Vec::with_capacity(4 * t.data.len());
        for &v in &t.data {
            payload.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&payload)?;
    }
    Ok(())
}

fn read_u32(bytes: &[u8], pos: &mut usize) -> Result<u32> {
    let end = *pos + 4;
    let chunk = bytes
        .get(*pos..end)
        .ok_or_else(|| Error::format("checkpoint", "truncated record"))?;
    *pos = end;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
}

pub fn read_container<R: Read>(mut r: R) -> Result<Container> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<String> {
        let rest = &bytes[*pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format("checkpoint", "unterminated header"))?;
        *pos += nl + 1;
        String::from_utf8(rest[..nl].to_vec())
            .map_err(|_| Error::format("checkpoint", "header is not UTF-8"))
    };
    if next_line(&mut pos)? != MAGIC {
        return Err(Error::format("checkpoint", "bad magic line"));
    }
    let mut header = Vec::new();
    loop {
        let line = next_line(&mut pos)?;
        if line.is_empty() {
            break;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format("checkpoint", format!("header line `{line}`")))?;
        header.push((k.to_string(), v.to_string()));
    }
    let mut tensors = Vec::new();
    while pos < bytes.len() {
        let name_len = read_u32(&bytes, &mut pos)? as usize;
        let name = bytes
            .get(pos..pos + name_len)
            .ok_or_else(|| Error::format("checkpoint", "truncated name"))?;
        let name = String::from_utf8(name.to_vec())
            .map_err(|_| Error::format("checkpoint", "tensor name is not UTF-8"))?;
        pos += name_len;
        let rank = read_u32(&bytes, &mut pos)? as usize;
        let shape = (0..rank)
            .map(|_| read_u32(&bytes, &mut pos).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let payload = bytes
            .get(pos..pos + 4 * n)
            .ok_or_else(|| Error::format("checkpoint", format!("truncated payload for {name}")))?;
        pos += 4 * n;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    Ok(Container { header, tensors })
}
