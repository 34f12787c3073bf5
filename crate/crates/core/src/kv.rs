//! `key=value` text used for configs and metadata files. Blank lines and
//! lines starting with `#` are ignored; whitespace around keys and values
//! is trimmed.

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::error::{Error, Result};

/// Parses `text`, rejecting malformed lines and duplicate keys.
pub fn parse(text: &str, what: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(what, format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::parse(what, format!("line {}: empty key", n + 1)));
        }
        if out.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::parse(what, format!("line {}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(out)
}

pub fn format(map: &BTreeMap<String, String>) -> String {
    let mut s = String::new();
    for (k, v) in map {
        writeln!(s, "{k}={v}").expect("writing to a String cannot fail");
    }
    s
}

/// Typed lookup of a required key.
pub fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str, what: &str) -> Result<T> {
    let v = map
        .get(key)
        .ok_or_else(|| Error::parse(what, format!("missing key {key:?}")))?;
    v.parse()
        .map_err(|_| Error::parse(what, format!("bad value {v:?} for {key:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = parse("# comment\n a = 1 \n\nb=x=y\n", "t").unwrap();
        assert_eq!(m["a"], "1");
        assert_eq!(m["b"], "x=y");
        assert_eq!(parse(&format(&m), "t").unwrap(), m);
        assert_eq!(get::<u32>(&m, "a", "t").unwrap(), 1);
        assert!(get::<u32>(&m, "b", "t").is_err());
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(parse("novalue\n", "t").is_err());
        assert!(parse("a=1\na=2\n", "t").is_err());
        assert!(parse("=1\n", "t").is_err());
    }
}
