//! Checkpoint container: a text header followed by a binary parameter blob.
//!
//! ```text
//! FRCKPT1
//! <key> <value>              one line per header entry, in order
//! param <name> <n> <c> <h> <w> <offset>
//! end
//! S2CP | count u64 | count × f64   (little-endian)
//! ```
//!
//! Offsets count f64 elements from the start of the blob payload.

use std::fs;
use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const TEXT_MAGIC: &str = "FRCKPT1";
const BLOB_MAGIC: &[u8; 4] = b"S2CP";

#[derive(Debug, Clone, Default)]
pub struct CheckpointFile {
    pub header: Vec<(String, String)>,
    pub params: Vec<(String, Tensor)>,
}

impl CheckpointFile {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.header.iter().filter(move |(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing header key {key:?}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut text = format!("{TEXT_MAGIC}\n");
        for (k, v) in &self.header {
            if k.is_empty() || k.contains(char::is_whitespace) || v.contains('\n') || k == "param" || k == "end" {
                return Err(Error::Checkpoint(format!("unencodable header entry {k:?}")));
            }
            text.push_str(&format!("{k} {v}\n"));
        }
        let mut offset = 0usize;
        for (name, t) in &self.params {
            if name.contains(char::is_whitespace) {
                return Err(Error::Checkpoint(format!("parameter name {name:?} has whitespace")));
            }
            let [n, c, h, w] = t.shape();
            text.push_str(&format!("param {name} {n} {c} {h} {w} {offset}\n"));
            offset += t.len();
        }
        text.push_str("end\n");
        let mut out = text.into_bytes();
        out.extend_from_slice(BLOB_MAGIC);
        out.extend_from_slice(&(offset as u64).to_le_bytes());
        for (_, t) in &self.params {
            t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        let end = bytes
            .windows(5)
            .position(|w| w == b"\nend\n")
            .ok_or_else(|| bad("no end of header"))?
            + 1;
        let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not utf-8"))?;
        let mut lines = text.lines();
        if lines.next() != Some(TEXT_MAGIC) {
            return Err(bad("bad checkpoint magic"));
        }
        let mut header = Vec::new();
        let mut table = Vec::new();
        for line in lines {
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            if k == "param" {
                let f: Vec<&str> = v.split(' ').collect();
                if f.len() != 6 {
                    return Err(bad("malformed param line"));
                }
                let nums: Vec<usize> = f[1..]
                    .iter()
                    .map(|s| s.parse().map_err(|_| bad("bad param number")))
                    .collect::<Result<_>>()?;
                table.push((f[0].to_string(), [nums[0], nums[1], nums[2], nums[3]], nums[4]));
            } else {
                header.push((k.to_string(), v.to_string()));
            }
        }
        let blob = &bytes[end + 4..];
        if blob.len() < 12 || &blob[..4] != BLOB_MAGIC {
            return Err(bad("missing parameter blob"));
        }
        let count = u64::from_le_bytes(blob[4..12].try_into().unwrap()) as usize;
        let payload = &blob[12..];
        if payload.len() != count * 8 {
            return Err(Error::Truncated(format!(
                "checkpoint blob {} bytes, expected {}",
                payload.len(),
                count * 8
            )));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut params = Vec::with_capacity(table.len());
        for (name, shape, offset) in table {
            let len: usize = shape.iter().product();
            let slice = values
                .get(offset..offset + len)
                .ok_or_else(|| bad("param offset out of range"))?;
            let t = Tensor::new(shape, slice.to_vec())?;
            t.ensure_finite(&format!("checkpoint parameter {name}"))?;
            params.push((name, t));
        }
        Ok(CheckpointFile { header, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bit_exact() {
        let ck = CheckpointFile {
            header: vec![("arch".into(), "levels=2 base=8".into()), ("note".into(), "weekend".into()), ("seed".into(), "7".into())],
            params: vec![
                ("a.w".into(), Tensor::new([2, 1, 1, 3], vec![0.1, -0.0, 1e-300, 3.5, f64::MAX, -2.0]).unwrap()),
                ("a.b".into(), Tensor::zeros([1, 2, 1, 1])),
            ],
        };
        let bytes = ck.to_bytes().unwrap();
        let back = CheckpointFile::from_bytes(&bytes).unwrap();
        assert_eq!(back.header, ck.header);
        assert_eq!(back.params.len(), 2);
        for ((na, ta), (nb, tb)) in ck.params.iter().zip(&back.params) {
            assert_eq!(na, nb);
            assert!(ta.bits_eq(tb));
        }
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let ck = CheckpointFile {
            header: vec![],
            params: vec![("p".into(), Tensor::zeros([1, 1, 1, 2]))],
        };
        let bytes = ck.to_bytes().unwrap();
        assert!(CheckpointFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(CheckpointFile::from_bytes(b"NOPE\nend\n").is_err());
        let bad = CheckpointFile {
            header: vec![("two words".into(), "x".into())],
            params: vec![],
        };
        assert!(bad.to_bytes().is_err());
    }
}
