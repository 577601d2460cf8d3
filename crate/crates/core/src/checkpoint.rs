//! Binary checkpoint files.
//!
//! Layout: magic `OECK`, `u32` format version, kind string, canonical config
//! text, a count of named sections, then the sections. Each section is either
//! a tensor (rank, `u64` dims, little-endian `f64` values) or an opaque blob.
//! A SHA-256 digest of everything before it closes the file. Files are
//! written to a temporary sibling and renamed into place.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::data::FieldSchema;
use crate::error::{Error, Result};
use crate::io::{write_atomic, ByteReader, ByteWriter};
use crate::mask::{DimensionMask, EmbeddingMask};
use crate::matrix::Matrix;
use crate::model::{CtrModel, EmbeddingTable, Mlp};
use crate::nn::{Affine, BatchNorm};
use crate::pipeline::{EpochRecord, Retrained, Supernet};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OECK";
pub const CHECKPOINT_VERSION: u32 = 1;

const TAG_TENSOR: u8 = 0;
const TAG_BLOB: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Section {
    Tensor { shape: Vec<usize>, data: Vec<f64> },
    Blob(Vec<u8>),
}

/// An in-memory checkpoint: kind, config text and named sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub config: String,
    pub sections: Vec<(String, Section)>,
}

impl Container {
    pub fn new(kind: &str, config: &str) -> Self {
        Self {
            kind: kind.to_string(),
            config: config.to_string(),
            sections: Vec::new(),
        }
    }

    pub fn put_tensor(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.sections
            .push((name.to_string(), Section::Tensor { shape, data }));
    }

    pub fn put_matrix<T: Scalar>(&mut self, name: &str, m: &Matrix<T>) {
        self.put_tensor(
            name,
            vec![m.rows(), m.cols()],
            m.data().iter().map(|v| v.as_f64()).collect(),
        );
    }

    pub fn put_vector<T: Scalar>(&mut self, name: &str, v: &[T]) {
        self.put_tensor(name, vec![v.len()], v.iter().map(|x| x.as_f64()).collect());
    }

    pub fn put_blob(&mut self, name: &str, bytes: Vec<u8>) {
        self.sections.push((name.to_string(), Section::Blob(bytes)));
    }

    pub fn has(&self, name: &str) -> bool {
        self.sections.iter().any(|(n, _)| n == name)
    }

    fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::Corrupt(format!("missing section {name:?}")))
    }

    pub fn tensor(&self, name: &str) -> Result<(&[usize], &[f64])> {
        match self.section(name)? {
            Section::Tensor { shape, data } => Ok((shape, data)),
            Section::Blob(_) => Err(Error::Corrupt(format!("section {name:?} is not a tensor"))),
        }
    }

    pub fn matrix<T: Scalar>(&self, name: &str) -> Result<Matrix<T>> {
        let (shape, data) = self.tensor(name)?;
        if shape.len() != 2 {
            return Err(Error::Corrupt(format!(
                "section {name:?} has rank {}, expected 2",
                shape.len()
            )));
        }
        Matrix::from_vec(shape[0], shape[1], data.iter().map(|&v| T::of(v)).collect())
    }

    pub fn vector<T: Scalar>(&self, name: &str) -> Result<Vec<T>> {
        let (shape, data) = self.tensor(name)?;
        if shape.len() != 1 {
            return Err(Error::Corrupt(format!(
                "section {name:?} has rank {}, expected 1",
                shape.len()
            )));
        }
        Ok(data.iter().map(|&v| T::of(v)).collect())
    }

    fn counts(&self, name: &str) -> Result<Vec<usize>> {
        self.vector::<f64>(name)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) {
                    Ok(v as usize)
                } else {
                    Err(Error::Corrupt(format!(
                        "section {name:?} holds non-integer {v}"
                    )))
                }
            })
            .collect()
    }

    pub fn blob(&self, name: &str) -> Result<&[u8]> {
        match self.section(name)? {
            Section::Blob(b) => Ok(b),
            Section::Tensor { .. } => {
                Err(Error::Corrupt(format!("section {name:?} is not a blob")))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.kind);
        w.str(&self.config);
        w.u32(self.sections.len() as u32);
        for (name, s) in &self.sections {
            w.str(name);
            match s {
                Section::Tensor { shape, data } => {
                    w.u8(TAG_TENSOR);
                    w.u32(shape.len() as u32);
                    for &d in shape {
                        w.u64(d as u64);
                    }
                    for &v in data {
                        w.f64(v);
                    }
                }
                Section::Blob(b) => {
                    w.u8(TAG_BLOB);
                    w.blob(b);
                }
            }
        }
        let mut bytes = w.finish();
        let digest = Sha256::digest(&bytes);
        bytes.extend_from_slice(&digest);
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CHECKPOINT_MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Corrupt(format!(
                "checkpoint truncated at {} bytes",
                bytes.len()
            )));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(Error::Corrupt("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Corrupt(
                "checkpoint digest mismatch (truncated or modified)".into(),
            ));
        }
        let mut r = ByteReader::new(&body[8..]);
        let kind = r.str()?;
        let config = r.str()?;
        let n = r.u32()? as usize;
        let mut sections = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let name = r.str()?;
            let section = match r.u8()? {
                TAG_TENSOR => {
                    let rank = r.u32()? as usize;
                    let mut shape = Vec::with_capacity(rank.min(8));
                    for _ in 0..rank {
                        shape.push(r.u64()? as usize);
                    }
                    let len = shape
                        .iter()
                        .try_fold(1usize, |a, &d| a.checked_mul(d))
                        .ok_or_else(|| {
                            Error::Corrupt(format!("section {name:?} shape overflows"))
                        })?;
                    let raw = r.take(
                        len.checked_mul(8)
                            .ok_or_else(|| Error::Corrupt("tensor too large".into()))?,
                    )?;
                    let data = raw
                        .chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect();
                    Section::Tensor { shape, data }
                }
                TAG_BLOB => Section::Blob(r.blob()?.to_vec()),
                t => {
                    return Err(Error::Corrupt(format!(
                        "section {name:?} has unknown tag {t}"
                    )))
                }
            };
            sections.push((name, section));
        }
        r.expect_end()?;
        Ok(Self {
            kind,
            config,
            sections,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::Corrupt(format!(
                "expected a {kind} checkpoint, found {:?}",
                self.kind
            )))
        }
    }
}

fn put_model<T: Scalar>(c: &mut Container, schema: &FieldSchema, model: &CtrModel<T>) {
    c.put_tensor(
        "schema.cardinalities",
        vec![schema.n_fields()],
        schema.cardinalities().iter().map(|&v| v as f64).collect(),
    );
    c.put_matrix("embedding", &model.embedding.weights);
    for (i, l) in model.interaction.layers.iter().enumerate() {
        c.put_matrix(&format!("mlp.{i}.weight"), &l.affine.weight);
        c.put_matrix(&format!("mlp.{i}.bias"), &l.affine.bias);
        if let Some(bn) = &l.bn {
            c.put_matrix(&format!("mlp.{i}.bn.gamma"), &bn.gamma);
            c.put_matrix(&format!("mlp.{i}.bn.beta"), &bn.beta);
            c.put_vector(&format!("mlp.{i}.bn.running_mean"), &bn.running_mean);
            c.put_vector(&format!("mlp.{i}.bn.running_var"), &bn.running_var);
        }
    }
    c.put_matrix("head.weight", &model.interaction.head.weight);
    c.put_matrix("head.bias", &model.interaction.head.bias);
}

/// Rebuilds a model; the schema must have the cardinalities it was saved with.
fn get_model<T: Scalar>(c: &Container, schema: &FieldSchema) -> Result<CtrModel<T>> {
    let cards = c.counts("schema.cardinalities")?;
    if cards != schema.cardinalities() {
        return Err(Error::InvalidArgument(
            "checkpoint was trained on a dataset with different field cardinalities".into(),
        ));
    }
    let embedding = EmbeddingTable::from_weights(c.matrix::<T>("embedding")?);
    let mut layers = Vec::new();
    for i in 0.. {
        let w = format!("mlp.{i}.weight");
        if !c.has(&w) {
            break;
        }
        let affine = Affine::from_parts(c.matrix(&w)?, c.matrix(&format!("mlp.{i}.bias"))?)?;
        let bn = if c.has(&format!("mlp.{i}.bn.gamma")) {
            let mut bn = BatchNorm::new(affine.fan_out());
            bn.gamma = c.matrix(&format!("mlp.{i}.bn.gamma"))?;
            bn.beta = c.matrix(&format!("mlp.{i}.bn.beta"))?;
            bn.running_mean = c.vector(&format!("mlp.{i}.bn.running_mean"))?;
            bn.running_var = c.vector(&format!("mlp.{i}.bn.running_var"))?;
            let w = affine.fan_out();
            if bn.gamma.shape() != (1, w)
                || bn.beta.shape() != (1, w)
                || bn.running_mean.len() != w
                || bn.running_var.len() != w
            {
                return Err(Error::Corrupt(format!(
                    "batchnorm {i} has inconsistent widths"
                )));
            }
            Some(bn)
        } else {
            None
        };
        layers.push((affine, bn));
    }
    let head = Affine::from_parts(c.matrix("head.weight")?, c.matrix("head.bias")?)?;
    CtrModel::from_parts(schema, embedding, Mlp::from_parts(layers, head)?)
}

fn put_history(c: &mut Container, history: &[EpochRecord], best_epoch: usize) {
    let cols = 6;
    let mut data = Vec::with_capacity(history.len() * cols);
    for h in history {
        data.extend([
            h.epoch as f64,
            h.train_loss,
            h.val_auc,
            h.val_logloss,
            h.kept_rows as f64,
            h.sparsity,
        ]);
    }
    c.put_tensor("history", vec![history.len(), cols], data);
    c.put_tensor("best_epoch", vec![1], vec![best_epoch as f64]);
}

fn get_history(c: &Container) -> Result<(Vec<EpochRecord>, usize)> {
    let m = c.matrix::<f64>("history")?;
    if m.cols() != 6 || m.rows() == 0 {
        return Err(Error::Corrupt(format!(
            "history has shape {}",
            m.shape_str()
        )));
    }
    let history = (0..m.rows())
        .map(|r| {
            let v = m.row(r);
            EpochRecord {
                epoch: v[0] as usize,
                train_loss: v[1],
                val_auc: v[2],
                val_logloss: v[3],
                kept_rows: v[4] as usize,
                sparsity: v[5],
            }
        })
        .collect::<Vec<_>>();
    let best = c.counts("best_epoch")?;
    match best.as_slice() {
        &[b] if b < history.len() => Ok((history, b)),
        _ => Err(Error::Corrupt("best epoch out of range".into())),
    }
}

fn mask_to_f64(m: &EmbeddingMask) -> impl Iterator<Item = f64> + '_ {
    m.as_slice().iter().map(|&k| if k { 1.0 } else { 0.0 })
}

fn mask_from_f64(v: &[f64]) -> Result<EmbeddingMask> {
    v.iter()
        .map(|&x| match x {
            0.0 => Ok(false),
            1.0 => Ok(true),
            _ => Err(Error::Corrupt(format!("embedding mask entry {x}"))),
        })
        .collect::<Result<Vec<_>>>()
        .map(EmbeddingMask::from_bools)
}

pub fn supernet_to_container<T: Scalar>(
    config: &str,
    schema: &FieldSchema,
    net: &Supernet<T>,
) -> Container {
    let mut c = Container::new("supernet", config);
    put_model(&mut c, schema, &net.model);
    c.put_vector("thresholds", &net.thresholds);
    put_history(&mut c, &net.history, net.best_epoch);
    let rows = net.m_e.len();
    c.put_tensor(
        "mask_history",
        vec![net.mask_history.len(), rows],
        net.mask_history.iter().flat_map(mask_to_f64).collect(),
    );
    c
}

pub fn supernet_from_container<T: Scalar>(
    c: &Container,
    schema: &FieldSchema,
) -> Result<Supernet<T>> {
    c.expect_kind("supernet")?;
    let model = get_model::<T>(c, schema)?;
    let thresholds = c.vector::<T>("thresholds")?;
    if thresholds.len() != schema.n_fields() {
        return Err(Error::Corrupt(
            "threshold count does not match field count".into(),
        ));
    }
    let (history, best_epoch) = get_history(c)?;
    let masks = c.matrix::<f64>("mask_history")?;
    if masks.rows() != history.len() || masks.cols() != schema.total_rows() {
        return Err(Error::Corrupt(format!(
            "mask history has shape {}",
            masks.shape_str()
        )));
    }
    let mask_history = (0..masks.rows())
        .map(|r| mask_from_f64(masks.row(r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Supernet {
        model,
        thresholds,
        m_e: mask_history[best_epoch].clone(),
        best_epoch,
        history,
        mask_history,
    })
}

pub fn retrained_to_container<T: Scalar>(
    config: &str,
    schema: &FieldSchema,
    r: &Retrained<T>,
) -> Container {
    let mut c = Container::new("retrained", config);
    put_model(&mut c, schema, &r.model);
    c.put_tensor("m_e", vec![r.m_e.len()], mask_to_f64(&r.m_e).collect());
    c.put_tensor(
        "m_d",
        vec![r.m_d.n_fields()],
        r.m_d.dims().iter().map(|&d| d as f64).collect(),
    );
    put_history(&mut c, &r.history, r.best_epoch);
    c
}

pub fn retrained_from_container<T: Scalar>(
    c: &Container,
    schema: &FieldSchema,
) -> Result<Retrained<T>> {
    c.expect_kind("retrained")?;
    let model = get_model::<T>(c, schema)?;
    let (_, m_e) = c.tensor("m_e")?;
    let m_e = mask_from_f64(m_e)?;
    if m_e.len() != schema.total_rows() {
        return Err(Error::Corrupt(
            "embedding mask length does not match the table".into(),
        ));
    }
    let m_d = DimensionMask::new(c.counts("m_d")?, model.dim())
        .map_err(|e| Error::Corrupt(e.to_string()))?;
    m_d.check_schema(schema)?;
    let (history, best_epoch) = get_history(c)?;
    Ok(Retrained {
        model,
        m_e,
        m_d,
        best_epoch,
        history,
    })
}

pub fn save_supernet<T: Scalar>(
    path: &Path,
    config: &str,
    schema: &FieldSchema,
    net: &Supernet<T>,
) -> Result<()> {
    supernet_to_container(config, schema, net).save(path)
}

/// Loads a supernet checkpoint together with the config text it was written with.
pub fn load_supernet<T: Scalar>(
    path: &Path,
    schema: &FieldSchema,
) -> Result<(String, Supernet<T>)> {
    let c = Container::load(path)?;
    let net = supernet_from_container(&c, schema)?;
    Ok((c.config, net))
}

pub fn save_retrained<T: Scalar>(
    path: &Path,
    config: &str,
    schema: &FieldSchema,
    r: &Retrained<T>,
) -> Result<()> {
    retrained_to_container(config, schema, r).save(path)
}

pub fn load_retrained<T: Scalar>(
    path: &Path,
    schema: &FieldSchema,
) -> Result<(String, Retrained<T>)> {
    let c = Container::load(path)?;
    let r = retrained_from_container(&c, schema)?;
    Ok((c.config, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut c = Container::new("test", "a = 1\n");
        c.put_tensor(
            "x",
            vec![2, 3],
            vec![1.0, -2.5, 0.0, f64::MIN_POSITIVE, 1e300, -0.0],
        );
        c.put_blob("b", vec![1, 2, 3]);
        let bytes = c.to_bytes();
        let back = Container::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(
            back.tensor("x").unwrap().1[5].to_bits(),
            (-0.0f64).to_bits()
        );
    }

    #[test]
    fn truncation_and_tampering_detected() {
        let mut c = Container::new("test", "");
        c.put_tensor("x", vec![4], vec![1.0; 4]);
        let bytes = c.to_bytes();
        for cut in [0, 3, 8, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(Container::from_bytes(&bytes[..cut]), Err(Error::Corrupt(_))),
                "cut {cut}"
            );
        }
        let mut bad = bytes.clone();
        bad[20] ^= 1;
        assert!(matches!(
            Container::from_bytes(&bad),
            Err(Error::Corrupt(_))
        ));
    }

    #[test]
    fn version_checked() {
        let mut bytes = Container::new("x", "").to_bytes();
        bytes[4] = 9;
        assert!(matches!(
            Container::from_bytes(&bytes),
            Err(Error::Version { found: 9, .. })
        ));
    }
}
