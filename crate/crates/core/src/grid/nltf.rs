//! Binary triangle-field format `NLTF`.
//!
//! Layout: magic `NLTF`, version byte `0x01`, five little-endian `u64`
//! (`n_tau, d, n_y, r, m`), then the `f64` payload in little-endian order
//! (`i` ascending, `j = 0..=i`, spatial node row-major, component). `T`, `L`
//! and the problem identifier live in a JSON sidecar `<name>.meta.json`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{GridParams, TriangleField, TriangleGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NLTF";
pub const VERSION: u8 = 0x01;

/// Sidecar metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "L")]
    pub box_len: f64,
    pub problem: String,
}

/// Header fields stored in the binary file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub n_tau: u64,
    pub d: u64,
    pub n_y: u64,
    pub r: u64,
    pub m: u64,
}

pub fn write_field<W: Write>(mut w: W, field: &TriangleField) -> Result<()> {
    let g = field.grid();
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION])?;
    for v in [g.n_tau(), g.d(), g.n_y(), g.r(), g.m()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(8 * g.slice_len());
    for v in field.payload() {
        buf.extend_from_slice(&v.to_le_bytes());
        if buf.len() >= 1 << 16 {
            w.write_all(&buf)?;
            buf.clear();
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads header and payload; the caller supplies `T` and `L`.
pub fn read_raw<R: Read>(mut r: R) -> Result<(Header, Vec<f64>)> {
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
    if &magic[..4] != MAGIC {
        return Err(Error::Format("bad magic, expected NLTF".into()));
    }
    if magic[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", magic[4])));
    }
    let mut word = [0u8; 8];
    let mut vals = [0u64; 5];
    for v in vals.iter_mut() {
        r.read_exact(&mut word)
            .map_err(|e| Error::Format(format!("truncated header: {e}")))?;
        *v = u64::from_le_bytes(word);
    }
    let header = Header {
        n_tau: vals[0],
        d: vals[1],
        n_y: vals[2],
        r: vals[3],
        m: vals[4],
    };
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Format("payload is not a whole number of f64".into()));
    }
    let payload = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok((header, payload))
}

pub fn read_field<R: Read>(r: R, t_final: f64, box_len: f64) -> Result<TriangleField> {
    let (h, payload) = read_raw(r)?;
    let grid = TriangleGrid::new(GridParams {
        t_final,
        n_tau: h.n_tau as usize,
        box_len,
        n_y: h.n_y as usize,
        d: h.d as usize,
        r: h.r as usize,
        m: h.m as usize,
    })?;
    TriangleField::from_payload(&grid, &payload)
}

/// Sidecar path: `dir/name.nltf` → `dir/name.meta.json`.
pub fn meta_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "field".into());
    path.with_file_name(format!("{stem}.meta.json"))
}

pub fn save(path: &Path, field: &TriangleField, problem: &str) -> Result<()> {
    let f = fs::File::create(path)?;
    write_field(std::io::BufWriter::new(f), field)?;
    let meta = FieldMeta {
        t_final: field.grid().t_final(),
        box_len: field.grid().box_len(),
        problem: problem.to_string(),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(meta_path(path), json)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(TriangleField, FieldMeta)> {
    let meta_text = fs::read_to_string(meta_path(path))?;
    let meta: FieldMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Format(e.to_string()))?;
    let f = fs::File::open(path)?;
    let field = read_field(std::io::BufReader::new(f), meta.t_final, meta.box_len)?;
    Ok((field, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn header_layout_is_bit_exact() {
        let g = build_grid(1.0, 2, 1.0, 5, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = p.t + 10.0 * p.s + p.y[0]);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        assert_eq!(&buf[..4], b"NLTF");
        assert_eq!(buf[4], 1);
        assert_eq!(u64::from_le_bytes(buf[5..13].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(buf[13..21].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[21..29].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(buf[29..37].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(buf[37..45].try_into().unwrap()), 1);
        // 6 slices of 5 nodes
        assert_eq!(buf.len(), 45 + 8 * 30);
        // third slice in payload order is (i=1, j=1)
        let third = f64::from_le_bytes(buf[45 + 8 * 10..45 + 8 * 11].try_into().unwrap());
        assert_eq!(third, f.get(1, 1, 0, 0));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let bytes = b"NLTX\x01".to_vec();
        assert!(matches!(read_raw(&bytes[..]), Err(Error::Format(_))));
    }

    #[test]
    fn meta_path_replaces_extension() {
        assert_eq!(
            meta_path(Path::new("out/field.nltf")),
            PathBuf::from("out/field.meta.json")
        );
    }
}
