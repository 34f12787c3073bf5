//! Binary trajectory files.
//!
//! Layout, all numbers little-endian:
//!
//! ```text
//! "MSMGNTRJ"        8 bytes
//! version: u32      currently 1
//! mesh_hash: u64    TriMesh::content_hash of the mesh
//! nodes: u64
//! steps: u64        frames stored = steps + 1
//! dt: f64
//! width: u32        values per node
//! (steps + 1) * nodes * width f64, frame-major then node-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MSMGNTRJ";
pub const TRAJECTORY_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 8 + 8 + 4;

/// Time-indexed node values with a fixed timestep, including the initial
/// state.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub mesh_hash: u64,
    pub dt: f64,
    pub num_nodes: usize,
    pub width: usize,
    frames: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(mesh_hash: u64, dt: f64, num_nodes: usize, width: usize, initial: Vec<f64>) -> Result<Self> {
        let mut t = Trajectory {
            mesh_hash,
            dt,
            num_nodes,
            width,
            frames: Vec::new(),
        };
        t.push(initial)?;
        Ok(t)
    }

    pub fn push(&mut self, frame: Vec<f64>) -> Result<()> {
        if frame.len() != self.num_nodes * self.width {
            return Err(Error::shape("trajectory frame", self.num_nodes * self.width, frame.len()));
        }
        if let Some(i) = frame.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                op: format!("trajectory frame {} at value {i}", self.frames.len()),
            });
        }
        self.frames.push(frame);
        Ok(())
    }

    /// Number of steps `T`; there are `T + 1` frames.
    pub fn steps(&self) -> usize {
        self.frames.len() - 1
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.frames[t]
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.frames.len() * self.num_nodes * self.width);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&TRAJECTORY_VERSION.to_le_bytes());
        out.extend_from_slice(&self.mesh_hash.to_le_bytes());
        out.extend_from_slice(&(self.num_nodes as u64).to_le_bytes());
        out.extend_from_slice(&(self.steps() as u64).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for f in &self.frames {
            for v in f {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::parse("trajectory", reason);
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("not a trajectory file".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
        let version = u32_at(8);
        if version != TRAJECTORY_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mesh_hash = u64_at(12);
        let num_nodes = u64_at(20) as usize;
        let steps = u64_at(28) as usize;
        let dt = f64::from_bits(u64_at(36));
        let width = u32_at(44) as usize;
        let per_frame = num_nodes
            .checked_mul(width)
            .ok_or_else(|| bad("frame size overflows".into()))?;
        let expected = steps
            .checked_add(1)
            .and_then(|f| f.checked_mul(per_frame))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| bad("payload size overflows".into()))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() != expected {
            return Err(bad(format!("expected {expected} payload bytes, found {}", payload.len())));
        }
        let mut values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut frames = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            frames.push(values.by_ref().take(per_frame).collect());
        }
        Ok(Trajectory {
            mesh_hash,
            dt,
            num_nodes,
            width,
            frames,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Trajectory::from_bytes(&bytes)
    }
}
