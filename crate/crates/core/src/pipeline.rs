//! Training phases: supernet training with row pruning and random dimension
//! masks, candidate evaluation for the search, and retraining under fixed masks.

use crate::config::{DataSource, RunConfig};
use crate::data::{build_schema, encode, synth_generate, EncodedDataset, FieldSchema, RawDataset};
use crate::error::{Error, Result};
use crate::mask::{DimensionMask, EmbeddingMask};
use crate::metrics::{auc, logloss, sparsity};
use crate::model::{apply_masks, CtrModel, MaskedEmbedding, RowGrads};
use crate::nn::{bce_loss, AdamConfig, Mode};
use crate::prune::{gen_embedding_mask, masked_embed_grads, ThresholdVector};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::search::{evolutionary_search, sample_dim_mask, SearchOutcome, SearchParams};

/// Hyperparameters shared by the training phases.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub batchnorm: bool,
    pub lr: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr_t: f64,
    pub alpha: f64,
    pub t_init: f64,
    pub eval_batch: usize,
}

impl From<&RunConfig> for TrainSettings {
    fn from(c: &RunConfig) -> Self {
        Self {
            dim: c.dim,
            hidden: c.mlp.clone(),
            batchnorm: c.batchnorm,
            lr: c.lr,
            l2: c.l2,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            lr_t: c.lr_t,
            alpha: c.alpha,
            t_init: c.t_init,
            eval_batch: c.eval_batch,
        }
    }
}

/// Raw rows for a config: the synthetic generator, or a delimited file with
/// its numeric fields discretized.
pub fn load_raw(cfg: &RunConfig) -> Result<RawDataset> {
    match cfg.data_source {
        DataSource::Synth => synth_generate(&cfg.synth_spec(), cfg.seed),
        DataSource::Csv => {
            let mut raw = RawDataset::load_delimited(
                std::path::Path::new(&cfg.data_path),
                cfg.data_delimiter,
                &cfg.numeric_fields,
            )?;
            raw.discretize(cfg.log_base);
            Ok(raw)
        }
    }
}

/// Schema and encoded rows for a config.
pub fn prepare_dataset(cfg: &RunConfig) -> Result<(FieldSchema, EncodedDataset)> {
    let raw = load_raw(cfg)?;
    let schema = build_schema(&raw, cfg.min_count)?;
    let ds = encode(&raw, &schema)?;
    Ok((schema, ds))
}

/// Per-epoch summary. Validation numbers use the masks in force at the end of
/// the epoch (the current `m_e` and full dimensions for the supernet).
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_logloss: f64,
    pub kept_rows: usize,
    pub sparsity: f64,
}

/// The supernet snapshot from its best validation epoch.
#[derive(Debug, Clone)]
pub struct Supernet<T> {
    pub model: CtrModel<T>,
    pub thresholds: Vec<T>,
    /// `m_e*`: the embedding mask at the best epoch.
    pub m_e: EmbeddingMask,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    /// Embedding mask at the end of every epoch.
    pub mask_history: Vec<EmbeddingMask>,
}

impl<T> Supernet<T> {
    pub fn val_auc(&self) -> f64 {
        self.history[self.best_epoch].val_auc
    }
}

/// A model retrained from scratch under fixed masks (the best epoch's weights).
#[derive(Debug, Clone)]
pub struct Retrained<T> {
    pub model: CtrModel<T>,
    pub m_e: EmbeddingMask,
    pub m_d: DimensionMask,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl<T> Retrained<T> {
    pub fn val_auc(&self) -> f64 {
        self.history[self.best_epoch].val_auc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMetrics {
    pub auc: f64,
    pub logloss: f64,
    pub rows: usize,
}

/// Shuffled mini-batches. With batchnorm a trailing batch of one row is merged
/// into the previous one, since batch statistics need two rows.
fn batches(n: usize, batch_size: usize, merge_single: bool, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let mut out: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if merge_single && out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().extend(last);
    }
    out
}

/// Eval-mode click probabilities, scored in chunks of `eval_batch` rows.
pub fn predict_dataset<T: Scalar>(
    model: &CtrModel<T>,
    masked: &MaskedEmbedding<T>,
    ds: &EncodedDataset,
    eval_batch: usize,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ds.len());
    let rows: Vec<usize> = (0..ds.len()).collect();
    for chunk in rows.chunks(eval_batch.max(1)) {
        let p = model.predict(masked, &ds.subset(chunk))?;
        out.extend(p.into_iter().map(Scalar::as_f64));
    }
    Ok(out)
}

/// AUC and logloss of `model` on `ds` under the given masks.
pub fn evaluate<T: Scalar>(
    model: &CtrModel<T>,
    m_e: &EmbeddingMask,
    m_d: &DimensionMask,
    schema: &FieldSchema,
    ds: &EncodedDataset,
    eval_batch: usize,
) -> Result<EvalMetrics> {
    if ds.is_empty() {
        return Err(Error::EmptyInput);
    }
    let masked = apply_masks(&model.embedding.weights, m_e, m_d, schema)?;
    let scores = predict_dataset(model, &masked, ds, eval_batch)?;
    Ok(EvalMetrics {
        auc: auc(ds.labels(), &scores)?,
        logloss: logloss(ds.labels(), &scores)?,
        rows: ds.len(),
    })
}

/// Validation AUC of the supernet under `(m_e*, m_d)`. Pure: the supernet is
/// only read.
pub fn evaluate_candidate<T: Scalar>(
    supernet: &Supernet<T>,
    schema: &FieldSchema,
    m_d: &DimensionMask,
    val: &EncodedDataset,
    eval_batch: usize,
) -> Result<f64> {
    Ok(evaluate(&supernet.model, &supernet.m_e, m_d, schema, val, eval_batch)?.auc)
}

fn check_data(schema: &FieldSchema, train: &EncodedDataset, val: &EncodedDataset) -> Result<()> {
    if train.len() < 2 {
        return Err(Error::BatchTooSmall(train.len()));
    }
    if val.is_empty() {
        return Err(Error::EmptyInput);
    }
    train.validate(schema)?;
    val.validate(schema)
}

fn finite_loss(loss: f64, phase: &str, epoch: usize, batch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Diverged(format!(
            "{phase}: non-finite loss at epoch {epoch}, batch {batch}"
        )))
    }
}

/// Trains the supernet. Every mini-batch recomputes `m_e` from the current
/// table and thresholds and draws a fresh uniform dimension mask. After each
/// epoch the model is scored on `val` with full dimensions; training stops once
/// validation AUC has not improved for `patience` epochs, and the best epoch's
/// snapshot is returned.
pub fn train_supernet<T: Scalar>(
    schema: &FieldSchema,
    train: &EncodedDataset,
    val: &EncodedDataset,
    s: &TrainSettings,
    rng: &mut Rng,
) -> Result<Supernet<T>> {
    check_data(schema, train, val)?;
    let n = schema.n_fields();
    let mut model = CtrModel::<T>::new(schema, s.dim, &s.hidden, s.batchnorm, rng)?;
    let mut thresholds = ThresholdVector::<T>::new(n, s.t_init, s.lr_t);
    let adam = AdamConfig::new(s.lr, s.l2);
    let full = DimensionMask::full(n, s.dim);

    let mut history = Vec::new();
    let mut mask_history = Vec::new();
    let mut best: Option<(usize, CtrModel<T>, Vec<T>, EmbeddingMask)> = None;
    let mut stale = 0;

    for epoch in 0..s.max_epochs {
        let mut loss_sum = 0.0;
        let mut loss_rows = 0usize;
        for (bi, rows) in batches(train.len(), s.batch_size, s.batchnorm, rng)
            .iter()
            .enumerate()
        {
            let batch = train.subset(rows);
            let m_e = gen_embedding_mask(&model.embedding.weights, thresholds.values(), schema)?;
            let m_d = sample_dim_mask(rng, n, s.dim);
            let masked = apply_masks(&model.embedding.weights, &m_e, &m_d, schema)?;
            let probs = model.forward(&masked, &batch, Mode::Train)?;
            let labels: Vec<T> = batch.labels().iter().map(|&y| T::of(y as f64)).collect();
            let (loss, dprobs) = bce_loss(&labels, &probs);
            finite_loss(loss.as_f64(), "supernet", epoch, bi)?;
            loss_sum += loss.as_f64() * batch.len() as f64;
            loss_rows += batch.len();

            let grads = model.backward(&dprobs)?;
            let (de, dt) = masked_embed_grads(
                &grads.embedding,
                &model.embedding.weights,
                &m_e,
                thresholds.values(),
                schema,
            )?;
            model.apply_param_grads(&adam, &grads.params)?;
            model.embedding.apply(&adam, &de)?;
            thresholds.step(&dt, s.alpha)?;
        }

        let m_e = gen_embedding_mask(&model.embedding.weights, thresholds.values(), schema)?;
        let m = evaluate(&model, &m_e, &full, schema, val, s.eval_batch)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / loss_rows as f64,
            val_auc: m.auc,
            val_logloss: m.logloss,
            kept_rows: m_e.kept_count(),
            sparsity: sparsity(&m_e, &full, schema, s.dim)?,
        });
        mask_history.push(m_e.clone());

        let improved = best
            .as_ref()
            .is_none_or(|(b, ..)| m.auc > history[*b].val_auc);
        if improved {
            best = Some((epoch, model.clone(), thresholds.values().to_vec(), m_e));
            stale = 0;
        } else {
            stale += 1;
            if stale >= s.patience {
                break;
            }
        }
    }

    let (best_epoch, model, thresholds, m_e) = best.expect("at least one epoch runs");
    Ok(Supernet {
        model,
        thresholds,
        m_e,
        best_epoch,
        history,
        mask_history,
    })
}

/// Evolutionary search over dimension masks, scoring each candidate by the
/// supernet's validation AUC.
pub fn search_dimensions<T: Scalar>(
    supernet: &Supernet<T>,
    schema: &FieldSchema,
    val: &EncodedDataset,
    params: &SearchParams,
    eval_batch: usize,
    rng: &mut Rng,
) -> Result<SearchOutcome> {
    if val.is_empty() {
        return Err(Error::EmptyInput);
    }
    let fitness = |m: &DimensionMask| evaluate_candidate(supernet, schema, m, val, eval_batch);
    evolutionary_search(
        &fitness,
        schema.n_fields(),
        supernet.model.dim(),
        params,
        rng,
    )
}

/// Trains a freshly initialized model with `m_e` and `m_d` held fixed. Pruned
/// rows receive no updates; the returned table has every masked entry zeroed.
/// With identity masks this is plain training of the uncompressed model.
pub fn retrain<T: Scalar>(
    schema: &FieldSchema,
    train: &EncodedDataset,
    val: &EncodedDataset,
    m_e: &EmbeddingMask,
    m_d: &DimensionMask,
    s: &TrainSettings,
    rng: &mut Rng,
) -> Result<Retrained<T>> {
    check_data(schema, train, val)?;
    if m_d.max_dim() != s.dim {
        return Err(Error::Length {
            what: "dimension mask width",
            expected: s.dim,
            found: m_d.max_dim(),
        });
    }
    let mut model = CtrModel::<T>::new(schema, s.dim, &s.hidden, s.batchnorm, rng)?;
    let adam = AdamConfig::new(s.lr, s.l2);

    let mut history = Vec::new();
    let mut best: Option<(usize, CtrModel<T>)> = None;
    let mut stale = 0;

    for epoch in 0..s.max_epochs {
        let mut loss_sum = 0.0;
        let mut loss_rows = 0usize;
        for (bi, rows) in batches(train.len(), s.batch_size, s.batchnorm, rng)
            .iter()
            .enumerate()
        {
            let batch = train.subset(rows);
            let masked = apply_masks(&model.embedding.weights, m_e, m_d, schema)?;
            let probs = model.forward(&masked, &batch, Mode::Train)?;
            let labels: Vec<T> = batch.labels().iter().map(|&y| T::of(y as f64)).collect();
            let (loss, dprobs) = bce_loss(&labels, &probs);
            finite_loss(loss.as_f64(), "retrain", epoch, bi)?;
            loss_sum += loss.as_f64() * batch.len() as f64;
            loss_rows += batch.len();

            let grads = model.backward(&dprobs)?;
            let mut de = RowGrads::new(s.dim);
            for (j, g) in grads.embedding.iter() {
                if m_e.is_kept(j) {
                    de.insert(j, g.to_vec());
                }
            }
            model.apply_param_grads(&adam, &grads.params)?;
            model.embedding.apply(&adam, &de)?;
        }

        let m = evaluate(&model, m_e, m_d, schema, val, s.eval_batch)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / loss_rows as f64,
            val_auc: m.auc,
            val_logloss: m.logloss,
            kept_rows: m_e.kept_count(),
            sparsity: sparsity(m_e, m_d, schema, s.dim)?,
        });

        let improved = best
            .as_ref()
            .is_none_or(|(b, _)| m.auc > history[*b].val_auc);
        if improved {
            best = Some((epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
            if stale >= s.patience {
                break;
            }
        }
    }

    let (best_epoch, mut model) = best.expect("at least one epoch runs");
    let compact = apply_masks(&model.embedding.weights, m_e, m_d, schema)?;
    model.embedding.weights = compact.table;
    Ok(Retrained {
        model,
        m_e: m_e.clone(),
        m_d: m_d.clone(),
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split, SynthSpec};

    fn small() -> (FieldSchema, EncodedDataset, EncodedDataset) {
        let spec = SynthSpec::new(vec![20, 10, 15], 2, 2000);
        let raw = synth_generate(&spec, 5).unwrap();
        let schema = build_schema(&raw, 1).unwrap();
        let ds = encode(&raw, &schema).unwrap();
        let s = split(&ds, (0.8, 0.1, 0.1), 5).unwrap();
        (schema, s.train, s.val)
    }

    fn settings() -> TrainSettings {
        TrainSettings::from(&RunConfig {
            dim: 4,
            mlp: vec![8],
            max_epochs: 2,
            batch_size: 128,
            ..RunConfig::default()
        })
    }

    #[test]
    fn batches_cover_and_merge_single() {
        let b = batches(9, 4, true, &mut Rng::seed_from_u64(0));
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![4, 5]);
        let b = batches(9, 4, false, &mut Rng::seed_from_u64(0));
        assert_eq!(b.len(), 3);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..9).collect::<Vec<_>>());
    }

    #[test]
    fn supernet_history_and_best_epoch() {
        let (schema, train, val) = small();
        let net = train_supernet::<f64>(
            &schema,
            &train,
            &val,
            &settings(),
            &mut Rng::seed_from_u64(1),
        )
        .unwrap();
        assert!(!net.history.is_empty() && net.history.len() <= 2);
        assert_eq!(net.mask_history.len(), net.history.len());
        assert_eq!(net.m_e, net.mask_history[net.best_epoch]);
        let best = net
            .history
            .iter()
            .map(|h| h.val_auc)
            .fold(f64::MIN, f64::max);
        assert_eq!(net.val_auc(), best);
    }

    #[test]
    fn candidate_evaluation_matches_recorded_auc() {
        let (schema, train, val) = small();
        let s = settings();
        let net =
            train_supernet::<f64>(&schema, &train, &val, &s, &mut Rng::seed_from_u64(1)).unwrap();
        let full = DimensionMask::full(3, 4);
        let a = evaluate_candidate(&net, &schema, &full, &val, 7).unwrap();
        assert_eq!(a.to_bits(), net.val_auc().to_bits());
    }

    #[test]
    fn retrain_zeroes_masked_entries() {
        let (schema, train, val) = small();
        let mut m_e = EmbeddingMask::ones(schema.total_rows());
        m_e.set(3, false);
        let m_d = DimensionMask::new(vec![1, 4, 2], 4).unwrap();
        let r = retrain::<f64>(
            &schema,
            &train,
            &val,
            &m_e,
            &m_d,
            &settings(),
            &mut Rng::seed_from_u64(2),
        )
        .unwrap();
        let w = &r.model.embedding.weights;
        assert!(w.row(3).iter().all(|&v| v == 0.0));
        assert!(w.row(0)[1..].iter().all(|&v| v == 0.0));
        assert!(w.row(0)[0] != 0.0);
    }

    #[test]
    fn empty_validation_is_an_error() {
        let (schema, train, _) = small();
        let empty = EncodedDataset::new(3);
        assert!(train_supernet::<f64>(
            &schema,
            &train,
            &empty,
            &settings(),
            &mut Rng::seed_from_u64(1)
        )
        .is_err());
    }
}
