//! Parameter checkpoints: a flat little-endian `f64` blob plus a text
//! manifest with one `name<TAB>shape<TAB>offset` line per array.
//!
//! Shapes are written as `d0xd1x...` (`scalar` for rank 0); offsets count
//! bytes from the start of the blob.

use std::fs;
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn save(store: &ParamStore, blob_path: &Path, manifest_path: &Path) -> Result<()> {
    let mut blob = Vec::with_capacity(store.num_scalars() * 8);
    let mut manifest = String::from("# name\tshape\toffset\n");
    for (_, name, t) in store.iter() {
        let shape = if t.shape().is_empty() {
            "scalar".to_string()
        } else {
            t.shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x")
        };
        manifest.push_str(&format!("{name}\t{shape}\t{}\n", blob.len()));
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(blob_path, blob).map_err(|e| Error::io(blob_path, e))?;
    fs::write(manifest_path, manifest).map_err(|e| Error::io(manifest_path, e))?;
    Ok(())
}

pub fn load(blob_path: &Path, manifest_path: &Path) -> Result<ParamStore> {
    let blob = fs::read(blob_path).map_err(|e| Error::io(blob_path, e))?;
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let path = manifest_path.display().to_string();
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.clone(),
        line,
        msg,
    };
    let mut store = ParamStore::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                line_no,
                format!("expected 3 tab-separated fields, got {}", fields.len()),
            ));
        }
        let shape: Vec<usize> = if fields[1] == "scalar" {
            vec![]
        } else {
            fields[1]
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(line_no, format!("bad shape {:?}: {e}", fields[1])))?
        };
        let offset: usize = fields[2]
            .parse()
            .map_err(|e| parse_err(line_no, format!("bad offset {:?}: {e}", fields[2])))?;
        let n: usize = shape.iter().product();
        let end = offset + n * 8;
        if end > blob.len() {
            return Err(parse_err(
                line_no,
                format!("array {} overruns the blob", fields[0]),
            ));
        }
        let data = blob[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        store.insert(fields[0], Tensor::new(&shape, data)?)?;
    }
    Ok(store)
}
