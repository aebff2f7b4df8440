//! Embedding persistence.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! b"HOMF1" | m: u64 | n: u64 | k: u64 | U row-major f64 | V row-major f64
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::EmbeddingPair;
use crate::error::{HomfError, Result};
use crate::fsutil::write_atomic;

const MAGIC: &[u8; 5] = b"HOMF1";

pub fn encode_embeddings(e: &EmbeddingPair) -> Vec<u8> {
    let rows = e.m + e.n;
    let mut out = Vec::with_capacity(5 + 24 + 2 * rows * e.k * 8);
    out.extend_from_slice(MAGIC);
    for d in [e.m, e.n, e.k] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for mat in [&e.u, &e.v] {
        for x in mat.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn decode_embeddings(mut bytes: &[u8]) -> Result<EmbeddingPair> {
    let mut magic = [0u8; 5];
    bytes
        .read_exact(&mut magic)
        .map_err(|_| HomfError::Format("truncated header".into()))?;
    if &magic != MAGIC {
        return Err(HomfError::Format("missing HOMF1 magic".into()));
    }
    let mut word = [0u8; 8];
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        bytes
            .read_exact(&mut word)
            .map_err(|_| HomfError::Format("truncated header".into()))?;
        *d = usize::try_from(u64::from_le_bytes(word))
            .map_err(|_| HomfError::Format("dimension overflows usize".into()))?;
    }
    let [m, n, k] = dims;
    let rows = m
        .checked_add(n)
        .ok_or_else(|| HomfError::Format("dimension overflow".into()))?;
    let per = rows
        .checked_mul(k)
        .ok_or_else(|| HomfError::Format("dimension overflow".into()))?;
    if bytes.len() != 2 * per * 8 {
        return Err(HomfError::Format(format!(
            "payload is {} bytes, expected {}",
            bytes.len(),
            2 * per * 8
        )));
    }
    let mut read_mat = |bytes: &mut &[u8]| -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(per);
        for _ in 0..per {
            bytes
                .read_exact(&mut word)
                .map_err(|_| HomfError::Format("truncated payload".into()))?;
            data.push(f64::from_le_bytes(word));
        }
        Array2::from_shape_vec((rows, k), data).map_err(|e| HomfError::Format(e.to_string()))
    };
    let u = read_mat(&mut bytes)?;
    let v = read_mat(&mut bytes)?;
    let e = EmbeddingPair { m, n, k, u, v };
    e.validate()?;
    Ok(e)
}

pub fn write_embeddings(path: &Path, e: &EmbeddingPair) -> Result<()> {
    write_atomic(path, &encode_embeddings(e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingPair> {
    let bytes = std::fs::read(path).map_err(|err| HomfError::io(path, err))?;
    decode_embeddings(&bytes)
}

/// Text export: `U` rows, a blank line, then `V` rows; space-separated.
pub fn write_embeddings_text(path: &Path, e: &EmbeddingPair) -> Result<()> {
    let mut out = Vec::new();
    for (idx, mat) in [&e.u, &e.v].into_iter().enumerate() {
        if idx > 0 {
            writeln!(out).expect("write to vec");
        }
        for row in mat.rows() {
            let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "{}", line.join(" ")).expect("write to vec");
        }
    }
    write_atomic(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factor::init_embeddings;

    #[test]
    fn layout_is_bit_exact() {
        let e = init_embeddings(1, 2, 2, 9).unwrap();
        let bytes = encode_embeddings(&e);
        assert_eq!(&bytes[..5], b"HOMF1");
        assert_eq!(u64::from_le_bytes(bytes[5..13].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[13..21].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[21..29].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 29 + 2 * 3 * 2 * 8);
        assert_eq!(f64::from_le_bytes(bytes[29..37].try_into().unwrap()), e.u[[0, 0]]);
        assert_eq!(f64::from_le_bytes(bytes[37..45].try_into().unwrap()), e.u[[0, 1]]);
        let v_start = 29 + 6 * 8;
        assert_eq!(
            f64::from_le_bytes(bytes[v_start..v_start + 8].try_into().unwrap()),
            e.v[[0, 0]]
        );
        assert_eq!(decode_embeddings(&bytes).unwrap(), e);
    }

    #[test]
    fn rejects_corrupt_input() {
        let e = init_embeddings(2, 2, 3, 1).unwrap();
        let bytes = encode_embeddings(&e);
        assert!(decode_embeddings(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_embeddings(&bad).is_err());
        assert!(decode_embeddings(b"HOM").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let e = init_embeddings(3, 2, 4, 11).unwrap();
        let path = dir.path().join("emb.homf");
        write_embeddings(&path, &e).unwrap();
        assert_eq!(read_embeddings(&path).unwrap(), e);
        let txt = dir.path().join("emb.txt");
        write_embeddings_text(&txt, &e).unwrap();
        let text = std::fs::read_to_string(&txt).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5 + 1 + 5);
        let first: Vec<f64> = lines[0].split(' ').map(|t| t.parse().unwrap()).collect();
        assert_eq!(first, e.u.row(0).to_vec());
    }
}
