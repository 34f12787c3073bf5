//! The `msmesh v1` text format.
//!
//! ```text
//! msmesh v1
//! edge_min <float>
//! nodes <N>
//! <x> <y> <kind>          (N lines, kind in interior|wall|inflow|outflow|obstacle)
//! triangles <M>
//! <i> <j> <k>             (M lines, zero-based, counter-clockwise)
//! ```
//!
//! Floats use the shortest representation that parses back to the same
//! bits, so a write/read round trip is exact.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{NodeKind, TriMesh};
use crate::error::{Error, Result};

const MAGIC: &str = "msmesh v1";

pub(crate) fn write_to(mesh: &TriMesh, out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "edge_min {:?}", mesh.edge_min())?;
    writeln!(out, "nodes {}", mesh.num_nodes())?;
    for (p, k) in mesh.positions().iter().zip(mesh.kinds()) {
        writeln!(out, "{:?} {:?} {}", p[0], p[1], k)?;
    }
    writeln!(out, "triangles {}", mesh.num_triangles())?;
    for t in mesh.triangles() {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    Ok(())
}

pub fn write_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_to(mesh, &mut out)
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(file), &path.display().to_string())
}

struct Lines<R> {
    inner: io::Lines<R>,
    what: String,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next(&mut self) -> Result<String> {
        loop {
            self.line += 1;
            match self.inner.next() {
                None => return Err(self.err("unexpected end of file")),
                Some(Err(e)) => return Err(self.err(e.to_string())),
                Some(Ok(s)) if s.trim().is_empty() => continue,
                Some(Ok(s)) => return Ok(s.trim().to_string()),
            }
        }
    }

    fn err(&self, reason: impl Into<String>) -> Error {
        Error::parse(format!("{} line {}", self.what, self.line), reason)
    }

    fn keyed(&mut self, key: &str) -> Result<String> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok(v.trim().to_string()),
            _ => Err(self.err(format!("expected `{key} <value>`, found {line:?}"))),
        }
    }

    fn count(&mut self, key: &str) -> Result<usize> {
        let v = self.keyed(key)?;
        v.parse().map_err(|_| self.err(format!("bad {key} count {v:?}")))
    }
}

pub(crate) fn read_from(reader: impl BufRead, what: &str) -> Result<TriMesh> {
    let mut lines = Lines {
        inner: reader.lines(),
        what: what.to_string(),
        line: 0,
    };
    let magic = lines.next()?;
    if magic != MAGIC {
        return Err(lines.err(format!("expected header {MAGIC:?}, found {magic:?}")));
    }
    let v = lines.keyed("edge_min")?;
    let edge_min: f64 = v.parse().map_err(|_| lines.err(format!("bad edge_min {v:?}")))?;

    let n = lines.count("nodes")?;
    let mut positions = Vec::with_capacity(n);
    let mut kinds = Vec::with_capacity(n);
    for _ in 0..n {
        let line = lines.next()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [x, y, k] => match (x.parse::<f64>(), y.parse::<f64>(), NodeKind::parse(k)) {
                (Ok(x), Ok(y), Some(k)) => Some(([x, y], k)),
                _ => None,
            },
            _ => None,
        };
        let (p, k) = parsed.ok_or_else(|| lines.err(format!("expected `x y kind`, found {line:?}")))?;
        positions.push(p);
        kinds.push(k);
    }

    let m = lines.count("triangles")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        let line = lines.next()?;
        let idx: Vec<usize> = line
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| lines.err(format!("expected `i j k`, found {line:?}")))?;
        let tri: [usize; 3] = idx
            .try_into()
            .map_err(|_| lines.err(format!("expected three indices, found {line:?}")))?;
        triangles.push(tri);
    }
    loop {
        match lines.inner.next() {
            None => break,
            Some(Ok(s)) if s.trim().is_empty() => continue,
            Some(_) => return Err(lines.err("trailing content after the last triangle")),
        }
    }
    TriMesh::new(positions, triangles, kinds, edge_min)
}
