//! Versioned binary container of named matrices plus key=value metadata.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MSMGNCKP"                      8 bytes
//! version: u32                    currently 1
//! meta_len: u32, meta: UTF-8      "key=value" lines
//! blocks: u32
//! per block:
//!   name_len: u32, name: UTF-8
//!   rows: u32, cols: u32
//!   rows * cols f64, row-major
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MSMGNCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    blocks: Vec<(String, Array2<f64>)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: &str, value: impl ToString) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::parse("checkpoint", format!("missing metadata key {key:?}")))
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.meta(key)?;
        v.parse()
            .map_err(|_| Error::parse("checkpoint", format!("bad value {v:?} for {key:?}")))
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.blocks.push((name.into(), value));
    }

    pub fn push_vec(&mut self, name: impl Into<String>, value: &[f64]) {
        self.push(name, Array2::from_shape_vec((1, value.len()), value.to_vec()).expect("row vector"));
    }

    pub fn get(&self, name: &str) -> Result<&Array2<f64>> {
        self.blocks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::parse("checkpoint", format!("missing block {name:?}")))
    }

    pub fn get_vec(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.get(name)?.iter().copied().collect())
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.blocks.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn write_to(&self, out: &mut impl Write) -> io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let meta: String = self.meta.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        write_bytes(out, meta.as_bytes())?;
        out.write_all(&(self.blocks.len() as u32).to_le_bytes())?;
        for (name, value) in &self.blocks {
            write_bytes(out, name.as_bytes())?;
            out.write_all(&(value.nrows() as u32).to_le_bytes())?;
            out.write_all(&(value.ncols() as u32).to_le_bytes())?;
            for v in value.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let bad = |reason: String| Error::parse("checkpoint", reason);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| bad("truncated header".into()))?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let meta_text = String::from_utf8(read_bytes(&mut r)?).map_err(|_| bad("metadata is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in meta_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("bad metadata line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let count = read_u32(&mut r)?;
        let mut blocks = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = String::from_utf8(read_bytes(&mut r)?).map_err(|_| bad("block name is not UTF-8".into()))?;
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let len = rows.checked_mul(cols).filter(|&n| n * 8 <= r.len());
            let len = len.ok_or_else(|| bad(format!("block {name:?} is truncated")))?;
            let mut data = Vec::with_capacity(len);
            for chunk in r[..len * 8].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().expect("8 bytes")));
            }
            r = &r[len * 8..];
            let value = Array2::from_shape_vec((rows, cols), data).expect("length checked");
            blocks.push((name, value));
        }
        if !r.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.len())));
        }
        Ok(Checkpoint { meta, blocks })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn write_bytes(out: &mut impl Write, bytes: &[u8]) -> io::Result<()> {
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::parse("checkpoint", "unexpected end of file"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes(r: &mut &[u8]) -> Result<Vec<u8>> {
    let n = read_u32(r)? as usize;
    if n > r.len() {
        return Err(Error::parse("checkpoint", "unexpected end of file"));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head.to_vec())
}
