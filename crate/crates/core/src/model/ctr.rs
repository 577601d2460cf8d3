use std::ops::Range;

use crate::data::{EncodedDataset, FieldSchema};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{sigmoid, sigmoid_backward, AdamConfig, AdamState, Mode};
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::embedding::{EmbeddingTable, RowGrads};
use super::masked::MaskedEmbedding;
use super::mlp::{Interaction, Mlp};

/// Gradients produced by one backward pass.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// `dÊ`: gradient w.r.t. the masked embedding rows the batch referenced.
    /// Columns a field's dimension mask removed carry zero, since those
    /// entries are constants of the forward pass.
    pub embedding: RowGrads<T>,
    /// Interaction parameter gradients, ordered as [`Interaction::params`].
    pub params: Vec<Matrix<T>>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    indices: Vec<u32>,
    dims: Vec<usize>,
    probs: Matrix<T>,
}

/// Embedding table plus interaction network.
#[derive(Debug, Clone)]
pub struct CtrModel<T, I = Mlp<T>> {
    pub embedding: EmbeddingTable<T>,
    pub interaction: I,
    field_ranges: Vec<Range<usize>>,
    param_adam: Vec<AdamState<T>>,
    cache: Option<ForwardCache<T>>,
}

impl<T: Scalar> CtrModel<T, Mlp<T>> {
    /// Xavier-initialized table and MLP. The embedding table is drawn first.
    pub fn new(
        schema: &FieldSchema,
        dim: usize,
        hidden: &[usize],
        batchnorm: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let embedding = EmbeddingTable::new(schema.total_rows(), dim, rng)?;
        let mlp = Mlp::new(schema.n_fields() * dim, hidden, batchnorm, rng);
        Self::from_parts(schema, embedding, mlp)
    }
}

impl<T: Scalar, I: Interaction<T>> CtrModel<T, I> {
    pub fn from_parts(
        schema: &FieldSchema,
        embedding: EmbeddingTable<T>,
        interaction: I,
    ) -> Result<Self> {
        if embedding.rows() != schema.total_rows() {
            return Err(Error::Length {
                what: "embedding rows",
                expected: schema.total_rows(),
                found: embedding.rows(),
            });
        }
        if interaction.input_width() != schema.n_fields() * embedding.dim() {
            return Err(Error::Length {
                what: "interaction input width",
                expected: schema.n_fields() * embedding.dim(),
                found: interaction.input_width(),
            });
        }
        let param_adam = interaction
            .params()
            .into_iter()
            .map(AdamState::for_param)
            .collect();
        Ok(Self {
            embedding,
            interaction,
            field_ranges: schema.fields.iter().map(|f| f.range()).collect(),
            param_adam,
            cache: None,
        })
    }

    pub fn n_fields(&self) -> usize {
        self.field_ranges.len()
    }

    pub fn dim(&self) -> usize {
        self.embedding.dim()
    }

    /// Concatenates each row's masked embeddings into `[B x n·D]`.
    fn gather(&self, masked: &MaskedEmbedding<T>, batch: &EncodedDataset) -> Result<Matrix<T>> {
        let n = self.n_fields();
        let d = self.dim();
        if batch.n_fields() != n {
            return Err(Error::Length {
                what: "fields per row",
                expected: n,
                found: batch.n_fields(),
            });
        }
        if masked.table.shape() != self.embedding.weights.shape() {
            return Err(Error::Shape {
                left: masked.table.shape_str(),
                right: self.embedding.weights.shape_str(),
            });
        }
        let mut x = Matrix::zeros(batch.len(), n * d);
        for r in 0..batch.len() {
            for (j, &idx) in batch.row(r).iter().enumerate() {
                let idx = idx as usize;
                let range = &self.field_ranges[j];
                if !range.contains(&idx) {
                    return Err(Error::IndexOutOfRange {
                        row: r,
                        field: j,
                        index: idx,
                        lo: range.start,
                        hi: range.end,
                    });
                }
                x.row_mut(r)[j * d..(j + 1) * d].copy_from_slice(masked.table.row(idx));
            }
        }
        Ok(x)
    }

    /// Click probabilities for the batch; caches what `backward` needs.
    pub fn forward(
        &mut self,
        masked: &MaskedEmbedding<T>,
        batch: &EncodedDataset,
        mode: Mode,
    ) -> Result<Vec<T>> {
        self.cache = None;
        let x = self.gather(masked, batch)?;
        let probs = sigmoid(&self.interaction.forward(&x, mode)?);
        let out = probs.data().to_vec();
        self.cache = Some(ForwardCache {
            indices: batch.indices().to_vec(),
            dims: masked.dims.dims().to_vec(),
            probs,
        });
        Ok(out)
    }

    /// Eval-mode probabilities; `&self`, so safe to share across threads.
    pub fn predict(&self, masked: &MaskedEmbedding<T>, batch: &EncodedDataset) -> Result<Vec<T>> {
        let x = self.gather(masked, batch)?;
        Ok(sigmoid(&self.interaction.predict(&x)?).into_vec())
    }

    /// Backpropagates `d loss / d probability` from the last `forward`.
    pub fn backward(&mut self, dprobs: &[T]) -> Result<Gradients<T>> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let b = cache.probs.rows();
        if dprobs.len() != b {
            return Err(Error::Length {
                what: "probability gradient",
                expected: b,
                found: dprobs.len(),
            });
        }
        let dprob = Matrix::from_vec(b, 1, dprobs.to_vec())?;
        let dlogit = sigmoid_backward(&cache.probs, &dprob)?;
        let (dx, params) = self.interaction.backward(&dlogit)?;

        let n = self.n_fields();
        let d = self.dim();
        let mut embedding = RowGrads::new(d);
        let mut buf = vec![T::zero(); d];
        for r in 0..b {
            let row = dx.row(r);
            for j in 0..n {
                let keep = cache.dims[j];
                buf[..keep].copy_from_slice(&row[j * d..j * d + keep]);
                buf[keep..].fill(T::zero());
                embedding.accumulate(cache.indices[r * n + j] as usize, &buf);
            }
        }
        Ok(Gradients { embedding, params })
    }

    /// Adam step on the interaction parameters.
    pub fn apply_param_grads(&mut self, cfg: &AdamConfig, grads: &[Matrix<T>]) -> Result<()> {
        let params = self.interaction.params_mut();
        if params.len() != grads.len() || params.len() != self.param_adam.len() {
            return Err(Error::Length {
                what: "parameter gradients",
                expected: params.len(),
                found: grads.len(),
            });
        }
        for ((p, g), st) in params.into_iter().zip(grads).zip(&mut self.param_adam) {
            st.step(cfg, p, g)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{DimensionMask, EmbeddingMask};
    use crate::model::apply_masks;

    fn setup(bn: bool) -> (FieldSchema, CtrModel<f64>, EncodedDataset) {
        let schema = FieldSchema::with_cardinalities(&[3, 4]).unwrap();
        let model = CtrModel::new(&schema, 3, &[5, 4], bn, &mut Rng::seed_from_u64(8)).unwrap();
        let mut batch = EncodedDataset::new(2);
        batch.push(1, &[0, 3]);
        batch.push(0, &[2, 6]);
        batch.push(1, &[2, 4]);
        (schema, model, batch)
    }

    #[test]
    fn zero_table_zero_bias_gives_half() {
        let (schema, model, batch) = setup(false);
        let masked = apply_masks(
            &model.embedding.weights,
            &EmbeddingMask::zeros(schema.total_rows()),
            &DimensionMask::full(2, 3),
            &schema,
        )
        .unwrap();
        // First-layer input is all zeros, so every hidden activation is relu(0) = 0.
        let p = model.predict(&masked, &batch).unwrap();
        assert!(p.iter().all(|&v| v == 0.5), "{p:?}");
    }

    #[test]
    fn untouched_rows_absent_and_duplicates_sum() {
        let (schema, mut model, batch) = setup(false);
        let masked = MaskedEmbedding::unmasked(model.embedding.weights.clone(), 2);
        model.forward(&masked, &batch, Mode::Train).unwrap();
        let g = model.backward(&[0.1, -0.2, 0.3]).unwrap();
        let touched: Vec<usize> = g.embedding.iter().map(|(r, _)| r).collect();
        assert_eq!(touched, vec![0, 2, 3, 4, 6]);
        assert!(!g.embedding.contains(1) && !g.embedding.contains(5));
        let _ = schema;

        // row 2 appears in two batch rows: its gradient equals the sum of single-row passes
        let mut one = EncodedDataset::new(2);
        one.push(0, &[2, 6]);
        let mut two = EncodedDataset::new(2);
        two.push(1, &[2, 4]);
        model.forward(&masked, &one, Mode::Train).unwrap();
        let g1 = model.backward(&[-0.2]).unwrap();
        model.forward(&masked, &two, Mode::Train).unwrap();
        let g2 = model.backward(&[0.3]).unwrap();
        for c in 0..3 {
            let sum = g1.embedding.get(2).unwrap()[c] + g2.embedding.get(2).unwrap()[c];
            assert!((g.embedding.get(2).unwrap()[c] - sum).abs() < 1e-15);
        }
    }

    #[test]
    fn backward_without_forward_errors() {
        let (_, mut model, _) = setup(false);
        assert!(matches!(model.backward(&[0.0]), Err(Error::NoForwardCache)));
    }

    #[test]
    fn out_of_range_index_reports_row_and_field() {
        let (_, model, _) = setup(false);
        let masked = MaskedEmbedding::unmasked(model.embedding.weights.clone(), 2);
        let mut bad = EncodedDataset::new(2);
        bad.push(0, &[0, 3]);
        bad.push(0, &[3, 3]);
        let err = model.predict(&masked, &bad).unwrap_err();
        assert!(
            matches!(
                err,
                Error::IndexOutOfRange {
                    row: 1,
                    field: 0,
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn eval_is_batch_independent() {
        let (_, mut model, batch) = setup(true);
        let masked = MaskedEmbedding::unmasked(model.embedding.weights.clone(), 2);
        // move the running statistics away from their initial values
        model.forward(&masked, &batch, Mode::Train).unwrap();
        let all = model.predict(&masked, &batch).unwrap();
        for (r, want) in all.iter().enumerate() {
            let p = model.predict(&masked, &batch.subset(&[r])).unwrap();
            assert!((p[0] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn masked_columns_get_zero_gradient() {
        let (schema, mut model, batch) = setup(false);
        let md = DimensionMask::new(vec![1, 2], 3).unwrap();
        let masked = apply_masks(
            &model.embedding.weights,
            &EmbeddingMask::ones(7),
            &md,
            &schema,
        )
        .unwrap();
        model.forward(&masked, &batch, Mode::Train).unwrap();
        let g = model.backward(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(&g.embedding.get(0).unwrap()[1..], &[0.0, 0.0]);
        assert_eq!(g.embedding.get(3).unwrap()[2], 0.0);
    }
}
