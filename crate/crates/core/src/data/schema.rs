use std::collections::HashMap;

use crate::error::{Error, Result};

use super::raw::{FieldKind, RawDataset};

/// Vocabulary and index range of one field. Local index 0 is the OOV slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldInfo {
    pub name: String,
    pub kind: FieldKind,
    /// Kept tokens; token `tokens[k]` has local index `k + 1`.
    pub tokens: Vec<String>,
    pub offset: usize,
    vocab: HashMap<String, usize>,
}

impl FieldInfo {
    pub fn new(name: String, kind: FieldKind, tokens: Vec<String>, offset: usize) -> Self {
        let vocab = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        Self {
            name,
            kind,
            tokens,
            offset,
            vocab,
        }
    }

    /// `|f_(i)|`: kept tokens plus the OOV slot.
    pub fn cardinality(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn local_index(&self, token: &str) -> usize {
        self.vocab.get(token).copied().unwrap_or(0)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.cardinality()
    }
}

/// Maps raw tokens of every field onto rows of one global embedding table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    pub fields: Vec<FieldInfo>,
    /// Global row -> owning field.
    field_of_row: Vec<usize>,
}

impl FieldSchema {
    pub fn from_fields(fields: Vec<FieldInfo>) -> Result<Self> {
        let mut expected = 0;
        let mut field_of_row = Vec::new();
        for (i, f) in fields.iter().enumerate() {
            if f.offset != expected {
                return Err(Error::Corrupt(format!(
                    "field {i} offset {} should be {expected}",
                    f.offset
                )));
            }
            expected += f.cardinality();
            field_of_row.extend(std::iter::repeat_n(i, f.cardinality()));
        }
        Ok(Self {
            fields,
            field_of_row,
        })
    }

    /// Schema with anonymous tokens, for tests and synthetic tables of known size.
    pub fn with_cardinalities(cardinalities: &[usize]) -> Result<Self> {
        let mut offset = 0;
        let mut fields = Vec::new();
        for (i, &c) in cardinalities.iter().enumerate() {
            if c == 0 {
                return Err(Error::InvalidArgument(
                    "cardinality must be at least 1".into(),
                ));
            }
            let tokens = (1..c).map(|k| format!("t{k}")).collect();
            fields.push(FieldInfo::new(
                format!("f{i}"),
                FieldKind::Categorical,
                tokens,
                offset,
            ));
            offset += c;
        }
        Self::from_fields(fields)
    }

    /// Field count `n`.
    pub fn n_fields(&self) -> usize {
        self.fields.len()
    }

    /// Total row count `|f|`.
    pub fn total_rows(&self) -> usize {
        self.field_of_row.len()
    }

    #[inline]
    pub fn field_of(&self, row: usize) -> usize {
        self.field_of_row[row]
    }

    pub fn field_of_rows(&self) -> &[usize] {
        &self.field_of_row
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.fields.iter().map(FieldInfo::cardinality).collect()
    }

    /// Inverse of encoding: `(field, Some(token))`, or `None` for an OOV slot.
    pub fn decode(&self, global: usize) -> Option<(usize, Option<&str>)> {
        let field = *self.field_of_row.get(global)?;
        let local = global - self.fields[field].offset;
        let token = (local > 0).then(|| self.fields[field].tokens[local - 1].as_str());
        Some((field, token))
    }
}

/// Builds per-field vocabularies. Tokens seen fewer than `min_count` times fold
/// into the OOV slot; kept tokens are ordered by descending frequency, ties by
/// token.
pub fn build_schema(raw: &RawDataset, min_count: usize) -> Result<FieldSchema> {
    if raw.rows.is_empty() || raw.n_fields() == 0 {
        return Err(Error::EmptyInput);
    }
    let mut fields = Vec::with_capacity(raw.n_fields());
    let mut offset = 0;
    for i in 0..raw.n_fields() {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for row in &raw.rows {
            *counts.entry(row.values[i].as_str()).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count.max(1))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = kept.into_iter().map(|(t, _)| t.to_string()).collect();
        let info = FieldInfo::new(
            raw.field_names[i].clone(),
            raw.field_kinds[i],
            tokens,
            offset,
        );
        offset += info.cardinality();
        fields.push(info);
    }
    FieldSchema::from_fields(fields)
}

/// Rows of global embedding indices, one index per field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDataset {
    n_fields: usize,
    labels: Vec<u8>,
    indices: Vec<u32>,
}

impl EncodedDataset {
    pub fn new(n_fields: usize) -> Self {
        Self {
            n_fields,
            labels: Vec::new(),
            indices: Vec::new(),
        }
    }

    pub fn from_parts(n_fields: usize, labels: Vec<u8>, indices: Vec<u32>) -> Result<Self> {
        if indices.len() != labels.len() * n_fields {
            return Err(Error::Length {
                what: "encoded indices",
                expected: labels.len() * n_fields,
                found: indices.len(),
            });
        }
        Ok(Self {
            n_fields,
            labels,
            indices,
        })
    }

    pub fn push(&mut self, label: u8, row: &[u32]) {
        debug_assert_eq!(row.len(), self.n_fields);
        self.labels.push(label);
        self.indices.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_fields(&self) -> usize {
        self.n_fields
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[u32] {
        &self.indices[i * self.n_fields..(i + 1) * self.n_fields]
    }

    #[inline]
    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// Copies the listed rows, in order.
    pub fn subset(&self, rows: &[usize]) -> EncodedDataset {
        let mut out = EncodedDataset::new(self.n_fields);
        for &r in rows {
            out.push(self.labels[r], self.row(r));
        }
        out
    }

    /// Checks every index against its field's range.
    pub fn validate(&self, schema: &FieldSchema) -> Result<()> {
        if self.n_fields != schema.n_fields() {
            return Err(Error::Length {
                what: "fields per row",
                expected: schema.n_fields(),
                found: self.n_fields,
            });
        }
        for r in 0..self.len() {
            for (j, &idx) in self.row(r).iter().enumerate() {
                let range = schema.fields[j].range();
                if !range.contains(&(idx as usize)) {
                    return Err(Error::IndexOutOfRange {
                        row: r,
                        field: j,
                        index: idx as usize,
                        lo: range.start,
                        hi: range.end,
                    });
                }
            }
        }
        Ok(())
    }

    /// Occurrence count of every global index.
    pub fn frequencies(&self, total_rows: usize) -> Vec<u64> {
        let mut freq = vec![0u64; total_rows];
        for &i in &self.indices {
            freq[i as usize] += 1;
        }
        freq
    }
}

/// Encodes raw tokens as global indices: `offset(i) + local`, OOV at `offset(i)`.
pub fn encode(raw: &RawDataset, schema: &FieldSchema) -> Result<EncodedDataset> {
    if raw.n_fields() != schema.n_fields() {
        return Err(Error::Length {
            what: "fields",
            expected: schema.n_fields(),
            found: raw.n_fields(),
        });
    }
    let n = schema.n_fields();
    let mut out = EncodedDataset::new(n);
    let mut buf = vec![0u32; n];
    for (r, row) in raw.rows.iter().enumerate() {
        if row.values.len() != n {
            return Err(Error::RowArity {
                row: r,
                expected: n,
                found: row.values.len(),
            });
        }
        for (i, (tok, field)) in row.values.iter().zip(&schema.fields).enumerate() {
            buf[i] = (field.offset + field.local_index(tok)) as u32;
        }
        out.push(row.label, &buf);
    }
    Ok(out)
}
