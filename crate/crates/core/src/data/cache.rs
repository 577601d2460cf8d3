//! Versioned binary cache of an encoded dataset together with its schema.
//!
//! Layout, all integers little-endian:
//! `"OEDS"`, `u32` version, `u32` field count, per field (`u32`-length name,
//! `u8` kind, `u64` offset, `u32` token count, `u32`-length tokens in local
//! index order), `u64` row count, then per row a `u8` label followed by one
//! `u32` global index per field.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader, ByteWriter};

use super::raw::FieldKind;
use super::schema::{EncodedDataset, FieldInfo, FieldSchema};

pub const DATASET_MAGIC: &[u8; 4] = b"OEDS";
pub const DATASET_VERSION: u32 = 1;

pub fn dataset_to_bytes(schema: &FieldSchema, ds: &EncodedDataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(DATASET_MAGIC);
    w.u32(DATASET_VERSION);
    w.u32(schema.n_fields() as u32);
    for f in &schema.fields {
        w.str(&f.name);
        w.u8(match f.kind {
            FieldKind::Categorical => 0,
            FieldKind::Numeric => 1,
        });
        w.u64(f.offset as u64);
        w.u32(f.tokens.len() as u32);
        for t in &f.tokens {
            w.str(t);
        }
    }
    w.u64(ds.len() as u64);
    for r in 0..ds.len() {
        w.u8(ds.label(r));
        for &i in ds.row(r) {
            w.u32(i);
        }
    }
    w.finish()
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<(FieldSchema, EncodedDataset)> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != DATASET_MAGIC {
        return Err(Error::Corrupt("bad dataset magic".into()));
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Version {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let n_fields = r.u32()? as usize;
    let mut fields = Vec::with_capacity(n_fields);
    for _ in 0..n_fields {
        let name = r.str()?;
        let kind = match r.u8()? {
            0 => FieldKind::Categorical,
            1 => FieldKind::Numeric,
            k => return Err(Error::Corrupt(format!("unknown field kind {k}"))),
        };
        let offset = r.u64()? as usize;
        let n_tokens = r.u32()? as usize;
        let tokens = (0..n_tokens).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
        fields.push(FieldInfo::new(name, kind, tokens, offset));
    }
    let schema = FieldSchema::from_fields(fields)?;
    let n_rows = r.u64()? as usize;
    let mut labels = Vec::with_capacity(n_rows.min(bytes.len()));
    let mut indices = Vec::with_capacity((n_rows * n_fields).min(bytes.len()));
    for _ in 0..n_rows {
        labels.push(r.u8()?);
        for _ in 0..n_fields {
            indices.push(r.u32()?);
        }
    }
    r.expect_end()?;
    let ds = EncodedDataset::from_parts(n_fields, labels, indices)?;
    ds.validate(&schema)
        .map_err(|e| Error::Corrupt(format!("dataset indices: {e}")))?;
    Ok((schema, ds))
}

pub fn write_dataset(path: &Path, schema: &FieldSchema, ds: &EncodedDataset) -> Result<()> {
    write_atomic(path, &dataset_to_bytes(schema, ds))
}

pub fn read_dataset(path: &Path) -> Result<(FieldSchema, EncodedDataset)> {
    dataset_from_bytes(&std::fs::read(path)?)
}
