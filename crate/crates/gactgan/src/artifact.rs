//! Versioned binary artifact files: an 8-byte magic, a JSON header, then
//! little-endian f64 payload arrays. Used for checkpoints and posterior
//! files, where JSON-encoding megabytes of weights would be wasteful.

use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use std::io::{Read, Write};
use std::path::Path;

pub fn write_artifact<H: Serialize>(
    path: &Path,
    magic: &[u8; 8],
    header: &H,
    arrays: &[&[f64]],
) -> Result<()> {
    let header_bytes = serde_json::to_vec(header).expect("header serializes");
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(magic).map_err(io)?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())
        .map_err(io)?;
    w.write_all(&header_bytes).map_err(io)?;
    let total: u64 = arrays.iter().map(|a| a.len() as u64).sum();
    w.write_all(&total.to_le_bytes()).map_err(io)?;
    for arr in arrays {
        for v in *arr {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads an artifact written by [`write_artifact`]; the payload comes back
/// as one flat vector that the caller splits by its known layout.
pub fn read_artifact<H: DeserializeOwned>(path: &Path, magic: &[u8; 8]) -> Result<(H, Vec<f64>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = std::io::BufReader::new(file);
    let mut got_magic = [0u8; 8];
    r.read_exact(&mut got_magic)
        .map_err(|_| Error::format(path, "truncated artifact"))?;
    if &got_magic != magic {
        return Err(Error::format(
            path,
            format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&got_magic),
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let mut len8 = [0u8; 8];
    r.read_exact(&mut len8)
        .map_err(|_| Error::format(path, "truncated header length"))?;
    let header_len = u64::from_le_bytes(len8) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes)
        .map_err(|_| Error::format(path, "truncated header"))?;
    let header: H = serde_json::from_slice(&header_bytes)
        .map_err(|e| Error::format(path, format!("header parse: {e}")))?;
    r.read_exact(&mut len8)
        .map_err(|_| Error::format(path, "truncated payload length"))?;
    let total = u64::from_le_bytes(len8) as usize;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != total * 8 {
        return Err(Error::format(
            path,
            format!("payload size {} != declared {}", bytes.len(), total * 8),
        ));
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((header, payload))
}

/// Splits a flat payload into consecutive chunks of the given lengths.
pub fn split_payload(payload: Vec<f64>, lens: &[usize]) -> Result<Vec<Vec<f64>>> {
    let expected: usize = lens.iter().sum();
    if payload.len() != expected {
        return Err(Error::Numeric(format!(
            "payload length {} does not match expected {}",
            payload.len(),
            expected
        )));
    }
    let mut out = Vec::with_capacity(lens.len());
    let mut rest = payload;
    for &len in lens {
        let tail = rest.split_off(len);
        out.push(rest);
        rest = tail;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Hdr {
        name: String,
        n: usize,
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        let hdr = Hdr {
            name: "x".into(),
            n: 3,
        };
        let a = [1.0, 2.0, 3.0];
        let b = [-0.5];
        write_artifact(&path, b"GACTEST1", &hdr, &[&a, &b]).unwrap();
        let (h2, payload): (Hdr, _) = read_artifact(&path, b"GACTEST1").unwrap();
        assert_eq!(h2, hdr);
        let parts = split_payload(payload, &[3, 1]).unwrap();
        assert_eq!(parts[0], a.to_vec());
        assert_eq!(parts[1], b.to_vec());
    }

    #[test]
    fn rejects_wrong_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bin");
        write_artifact(&path, b"GACTEST1", &Hdr { name: "x".into(), n: 0 }, &[]).unwrap();
        let r: Result<(Hdr, Vec<f64>)> = read_artifact(&path, b"GACTEST2");
        assert!(r.is_err());
    }
}
