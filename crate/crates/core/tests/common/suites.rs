//! Randomized check suites shared by the integration tests and the
//! acceptance target. Each returns a one-line summary on success and the first
//! mismatch on failure.
#![allow(
    dead_code,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop
)]

use embtab::data::FieldSchema;
use embtab::mask::{DimensionMask, EmbeddingMask};
use embtab::matrix::Matrix;
use embtab::model::{apply_masks, CtrModel, Interaction, MaskedEmbedding, RowGrads};
use embtab::nn::{
    affine_backward, affine_forward, batchnorm_backward, batchnorm_forward, bce_loss, relu,
    relu_backward, sigmoid, sigmoid_backward, Mode,
};
use embtab::search::{crossover, evolutionary_search, mutate, SearchParams};
use embtab::{metrics, prune, Rng};

use super::{self as oracle};

pub type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

fn random_table(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix<f64> {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| scale * rng.normal()).collect(),
    )
    .unwrap()
}

fn to_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Closed-form checks for the mask, regularizer and search operators.
pub fn formulas(seed: u64) -> Outcome {
    let mut rng = Rng::derive(seed, "formulas");
    let mut cases = 0usize;

    // H's branch values, verbatim
    for (x, want) in [(0.0, 2.0), (0.4, 0.4), (-0.7, 0.4), (1.5, 0.0)] {
        ensure!(
            prune::longtail_h(x) == want,
            "H({x}) = {} want {want}",
            prune::longtail_h(x)
        );
        cases += 1;
    }
    ensure!(prune::unit_step(0.0f64) == 0.0, "S(0) must be 0");

    for _ in 0..2000 {
        // mix in exact branch edges and values near them
        let x = match rng.index(4) {
            0 => [0.0, 0.4, -0.4, 1.0, -1.0, 1e-300, -1e-300][rng.index(7)],
            1 => rng.uniform(-0.45, 0.45),
            _ => rng.uniform(-3.0, 3.0),
        };
        ensure!(prune::unit_step(x) == oracle::unit_step(x), "S({x})");
        ensure!(prune::longtail_h(x) == oracle::longtail_h(x), "H({x})");
        cases += 2;
    }

    for _ in 0..1000 {
        let n = rng.int_inclusive(1, 10);
        let t: Vec<f64> = (0..n).map(|_| rng.uniform(-3.0, 3.0)).collect();
        let (v, g) = prune::sparse_reg(&t);
        let (ov, og) = oracle::sparse_reg(&t);
        ensure!(v == ov && g == og, "sparse_reg({t:?})");
        cases += 1;
    }

    for _ in 0..1000 {
        let cards: Vec<usize> = (0..rng.int_inclusive(1, 5))
            .map(|_| rng.int_inclusive(1, 6))
            .collect();
        let schema = FieldSchema::with_cardinalities(&cards).unwrap();
        let d = rng.int_inclusive(1, 6);
        let keep: Vec<bool> = (0..schema.total_rows())
            .map(|_| rng.bernoulli(0.6))
            .collect();
        let dims: Vec<usize> = (0..cards.len()).map(|_| rng.int_inclusive(1, d)).collect();
        let m_e = EmbeddingMask::from_bools(keep.clone());
        let m_d = DimensionMask::new(dims.clone(), d).unwrap();

        let s = metrics::sparsity(&m_e, &m_d, &schema, d).unwrap();
        let os = oracle::sparsity(&keep, &dims, schema.field_of_rows(), d);
        ensure!((s - os).abs() <= 1e-15, "sparsity {s} vs {os}");

        let table = random_table(&mut rng, schema.total_rows(), d, 1.0);
        let masked = apply_masks(&table, &m_e, &m_d, &schema).unwrap();
        let want = oracle::apply_masks(&to_rows(&table), &keep, &dims, schema.field_of_rows());
        ensure!(
            to_rows(&masked.table) == want,
            "apply_masks mismatch for dims {dims:?}"
        );
        cases += 2;
    }

    for _ in 0..1000 {
        let n = rng.int_inclusive(2, 10);
        let d = rng.int_inclusive(1, 8);
        let a: Vec<usize> = (0..n).map(|_| rng.int_inclusive(1, d)).collect();
        let b: Vec<usize> = (0..n).map(|_| rng.int_inclusive(1, d)).collect();
        let ma = DimensionMask::new(a.clone(), d).unwrap();
        let mb = DimensionMask::new(b.clone(), d).unwrap();

        // replay the cut draw on a clone of the generator
        let mut replay = rng.clone();
        let cut = replay.int_inclusive(1, n - 1);
        let child = crossover(&ma, &mb, &mut rng).unwrap();
        ensure!(
            child.dims() == oracle::crossover(&a, &b, cut).as_slice(),
            "crossover cut {cut}"
        );

        let prob = [0.0, 1.0, rng.unit()][rng.index(3)];
        let mut replay = rng.clone();
        let want: Vec<usize> = a
            .iter()
            .map(|&old| {
                if replay.bernoulli(prob) {
                    replay.int_inclusive(1, d)
                } else {
                    old
                }
            })
            .collect();
        let got = mutate(&ma, prob, &mut rng);
        ensure!(got.dims() == want.as_slice(), "mutate prob {prob}");
        if prob == 0.0 {
            ensure!(got == ma, "mutate with prob 0 must be the identity");
        }
        cases += 2;
    }
    Ok(format!("{cases} cases"))
}

/// Affine, ReLU, sigmoid, batchnorm and BCE backward passes against central
/// differences with `h = 1e-5`.
pub fn layer_gradients(seed: u64, trials: usize) -> Outcome {
    let mut rng = Rng::derive(seed, "layer-gradients");
    let h = 1e-5;
    let tol = 1e-5;
    let mut checks = 0usize;
    let mut worst: f64 = 0.0;
    let check = |what: &str, analytic: f64, numeric: f64, worst: &mut f64| -> Result<(), String> {
        let e = oracle::rel_err(analytic, numeric);
        *worst = worst.max(e);
        if e > tol {
            return Err(format!(
                "{what}: analytic {analytic} vs numeric {numeric} (rel {e:.2e})"
            ));
        }
        Ok(())
    };

    for _ in 0..trials {
        let b = rng.int_inclusive(1, 4);
        let n_in = rng.int_inclusive(1, 4);
        let n_out = rng.int_inclusive(1, 4);
        let x = random_matrix(&mut rng, b, n_in);
        let w = random_matrix(&mut rng, n_in, n_out);
        let bias = random_matrix(&mut rng, 1, n_out);
        let r = random_matrix(&mut rng, b, n_out);
        let loss = |x: &Matrix<f64>, w: &Matrix<f64>, bias: &Matrix<f64>| -> f64 {
            let y = affine_forward(x, w, bias).unwrap();
            y.data().iter().zip(r.data()).map(|(a, b)| a * b).sum()
        };
        let g = affine_backward(&x, &w, &r).unwrap();
        for i in 0..x.data().len() {
            let num = oracle::central_diff(
                |v| {
                    let mut p = x.clone();
                    p.data_mut()[i] = v;
                    loss(&p, &w, &bias)
                },
                x.data()[i],
                h,
            );
            check("affine dx", g.dx.data()[i], num, &mut worst)?;
        }
        for i in 0..w.data().len() {
            let num = oracle::central_diff(
                |v| {
                    let mut p = w.clone();
                    p.data_mut()[i] = v;
                    loss(&x, &p, &bias)
                },
                w.data()[i],
                h,
            );
            check("affine dW", g.dweight.data()[i], num, &mut worst)?;
        }
        for i in 0..bias.data().len() {
            let num = oracle::central_diff(
                |v| {
                    let mut p = bias.clone();
                    p.data_mut()[i] = v;
                    loss(&x, &w, &p)
                },
                bias.data()[i],
                h,
            );
            check("affine db", g.dbias.data()[i], num, &mut worst)?;
        }

        // ReLU away from the kink
        let z = x.map(|v| if v.abs() < 1e-3 { v + 0.01 } else { v });
        let rz = random_matrix(&mut rng, b, n_in);
        let gz = relu_backward(&z, &rz).unwrap();
        for i in 0..z.data().len() {
            let num = oracle::central_diff(
                |v| {
                    let mut p = z.clone();
                    p.data_mut()[i] = v;
                    relu(&p)
                        .data()
                        .iter()
                        .zip(rz.data())
                        .map(|(a, b)| a * b)
                        .sum()
                },
                z.data()[i],
                h,
            );
            check("relu", gz.data()[i], num, &mut worst)?;
        }

        let y = sigmoid(&x);
        let gs = sigmoid_backward(&y, &rz).unwrap();
        for i in 0..x.data().len() {
            let num = oracle::central_diff(
                |v| {
                    let mut p = x.clone();
                    p.data_mut()[i] = v;
                    sigmoid(&p)
                        .data()
                        .iter()
                        .zip(rz.data())
                        .map(|(a, b)| a * b)
                        .sum()
                },
                x.data()[i],
                h,
            );
            check("sigmoid", gs.data()[i], num, &mut worst)?;
        }

        // batchnorm in train mode
        let bb = rng.int_inclusive(2, 8);
        let xb = random_matrix(&mut rng, bb, n_out);
        let gamma = random_matrix(&mut rng, 1, n_out);
        let beta = random_matrix(&mut rng, 1, n_out);
        let rb = random_matrix(&mut rng, bb, n_out);
        let bn_loss = |x: &Matrix<f64>, gamma: &Matrix<f64>, beta: &Matrix<f64>| -> f64 {
            let (mut rm, mut rv) = (vec![0.0; n_out], vec![1.0; n_out]);
            let (y, _) = batchnorm_forward(x, gamma, beta, Mode::Train, &mut rm, &mut rv).unwrap();
            y.data().iter().zip(rb.data()).map(|(a, b)| a * b).sum()
        };
        let (mut rm, mut rv) = (vec![0.0; n_out], vec![1.0; n_out]);
        let (_, cache) =
            batchnorm_forward(&xb, &gamma, &beta, Mode::Train, &mut rm, &mut rv).unwrap();
        let gb = batchnorm_backward(&cache.unwrap(), &gamma, &rb).unwrap();
        for i in 0..xb.data().len() {
            let num = oracle::central_diff(
                |v| {
                    let mut p = xb.clone();
                    p.data_mut()[i] = v;
                    bn_loss(&p, &gamma, &beta)
                },
                xb.data()[i],
                h,
            );
            check("batchnorm dx", gb.dx.data()[i], num, &mut worst)?;
        }
        for i in 0..n_out {
            let num = oracle::central_diff(
                |v| {
                    let mut p = gamma.clone();
                    p.data_mut()[i] = v;
                    bn_loss(&xb, &p, &beta)
                },
                gamma.data()[i],
                h,
            );
            check("batchnorm dgamma", gb.dgamma.data()[i], num, &mut worst)?;
            let num = oracle::central_diff(
                |v| {
                    let mut p = beta.clone();
                    p.data_mut()[i] = v;
                    bn_loss(&xb, &gamma, &p)
                },
                beta.data()[i],
                h,
            );
            check("batchnorm dbeta", gb.dbeta.data()[i], num, &mut worst)?;
        }

        // BCE with respect to the probabilities
        let labels: Vec<f64> = (0..b).map(|i| (i % 2) as f64).collect();
        let probs: Vec<f64> = (0..b).map(|_| rng.uniform(0.05, 0.95)).collect();
        let (_, dp) = bce_loss(&labels, &probs);
        for i in 0..b {
            let num = oracle::central_diff(
                |v| {
                    let mut p = probs.clone();
                    p[i] = v;
                    bce_loss(&labels, &p).0
                },
                probs[i],
                h,
            );
            check("bce", dp[i], num, &mut worst)?;
        }
        checks += 1;
    }
    Ok(format!(
        "{checks} randomized shapes per layer, worst rel err {worst:.2e}"
    ))
}

/// Smallest |pre-activation| over all hidden layers, to keep finite
/// differences off the ReLU kink.
fn min_preactivation(model: &CtrModel<f64>, x: &Matrix<f64>) -> f64 {
    let mut hcur = x.clone();
    let mut min = f64::INFINITY;
    for layer in &model.interaction.layers {
        let z = layer.affine.predict(&hcur).unwrap();
        min = z.data().iter().fold(min, |m, v| m.min(v.abs()));
        hcur = relu(&z);
    }
    min
}

fn gather(model: &CtrModel<f64>, batch: &embtab::data::EncodedDataset) -> Matrix<f64> {
    let d = model.dim();
    let n = model.n_fields();
    let mut x = Matrix::zeros(batch.len(), n * d);
    for r in 0..batch.len() {
        for (j, &idx) in batch.row(r).iter().enumerate() {
            x.row_mut(r)[j * d..(j + 1) * d]
                .copy_from_slice(model.embedding.weights.row(idx as usize));
        }
    }
    x
}

/// Full unmasked model (batchnorm off): embedding and parameter gradients
/// against central differences of the BCE loss.
pub fn model_gradients(seed: u64, trials: usize) -> Outcome {
    let mut rng = Rng::derive(seed, "model-gradients");
    let h = 1e-5;
    let tol = 1e-5;
    let mut done = 0;
    let mut entries = 0usize;
    let mut worst: f64 = 0.0;
    while done < trials {
        let schema = oracle::random_schema(&mut rng, 3, 4);
        let d = rng.int_inclusive(1, 3);
        let hidden: Vec<usize> = (0..rng.int_inclusive(0, 2))
            .map(|_| rng.int_inclusive(1, 4))
            .collect();
        let mut model = CtrModel::<f64>::new(&schema, d, &hidden, false, &mut rng).unwrap();
        // larger embeddings than Xavier so every term matters
        model.embedding.weights = random_table(&mut rng, schema.total_rows(), d, 0.7);
        let rows = rng.int_inclusive(2, 5);
        let batch = oracle::random_batch(&mut rng, &schema, rows);
        if min_preactivation(&model, &gather(&model, &batch)) < 1e-3 {
            continue;
        }
        let labels: Vec<f64> = batch.labels().iter().map(|&y| y as f64).collect();
        let n = schema.n_fields();

        let loss_of = |m: &CtrModel<f64>| -> f64 {
            let masked = MaskedEmbedding::unmasked(m.embedding.weights.clone(), n);
            let p = m.predict(&masked, &batch).unwrap();
            bce_loss(&labels, &p).0
        };
        let masked = MaskedEmbedding::unmasked(model.embedding.weights.clone(), n);
        let probs = model.forward(&masked, &batch, Mode::Train).unwrap();
        let (_, dp) = bce_loss(&labels, &probs);
        let grads = model.backward(&dp).unwrap();

        for (row, g) in grads.embedding.iter() {
            for c in 0..d {
                let x0 = model.embedding.weights[(row, c)];
                let mut probe = model.clone();
                let num = oracle::central_diff(
                    |v| {
                        probe.embedding.weights.row_mut(row)[c] = v;
                        loss_of(&probe)
                    },
                    x0,
                    h,
                );
                let e = oracle::rel_err(g[c], num);
                worst = worst.max(e);
                ensure!(
                    e <= tol,
                    "dE[{row},{c}]: analytic {} vs numeric {num}",
                    g[c]
                );
                entries += 1;
            }
        }
        let n_params = model.interaction.params().len();
        for (pi, pg) in grads.params.iter().enumerate().take(n_params) {
            for k in 0..pg.data().len() {
                let mut probe = model.clone();
                let x0 = probe.interaction.params()[pi].data()[k];
                let num = oracle::central_diff(
                    |v| {
                        probe.interaction.params_mut()[pi].data_mut()[k] = v;
                        loss_of(&probe)
                    },
                    x0,
                    h,
                );
                let e = oracle::rel_err(pg.data()[k], num);
                worst = worst.max(e);
                ensure!(
                    e <= tol,
                    "param {pi}[{k}]: analytic {} vs numeric {num}",
                    pg.data()[k]
                );
                entries += 1;
            }
        }
        done += 1;
    }
    Ok(format!(
        "{trials} random models, {entries} entries, worst rel err {worst:.2e}"
    ))
}

/// `masked_embed_grads` against the per-row symbolic oracle on 1-4 row tables.
pub fn masked_grads(seed: u64, trials: usize) -> Outcome {
    let mut rng = Rng::derive(seed, "masked-grads");
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let rows = rng.int_inclusive(1, 4);
        let n_fields = rng.int_inclusive(1, rows);
        // split `rows` into `n_fields` non-empty fields
        let mut cards = vec![1; n_fields];
        for _ in n_fields..rows {
            let k = rng.index(n_fields);
            cards[k] += 1;
        }
        let schema = FieldSchema::with_cardinalities(&cards).unwrap();
        let d = rng.int_inclusive(1, 4);
        let table = random_table(&mut rng, rows, d, 0.3);
        let t: Vec<f64> = (0..n_fields).map(|_| rng.uniform(-0.5, 1.5)).collect();
        let m_e = prune::gen_embedding_mask(&table, &t, &schema).unwrap();
        let mut d_hat = RowGrads::new(d);
        for j in 0..rows {
            if rng.bernoulli(0.8) {
                d_hat.insert(j, (0..d).map(|_| rng.normal()).collect());
            }
        }
        let (de, dt) = prune::masked_embed_grads(&d_hat, &table, &m_e, &t, &schema).unwrap();
        let mut want_dt = vec![0.0; n_fields];
        for j in 0..rows {
            let Some(g) = d_hat.get(j) else {
                ensure!(de.get(j).is_none(), "untouched row {j} got a gradient");
                continue;
            };
            let field = schema.field_of(j);
            let (want, dtj) = oracle::masked_row_grads(g, table.row(j), t[field]);
            want_dt[field] += dtj;
            let got = de.get(j).ok_or(format!("row {j} missing"))?;
            for c in 0..d {
                let e = (got[c] - want[c]).abs();
                worst = worst.max(e);
                ensure!(e <= 1e-12, "dE[{j},{c}] {} vs {}", got[c], want[c]);
            }
        }
        for k in 0..n_fields {
            let e = (dt[k] - want_dt[k]).abs();
            worst = worst.max(e);
            ensure!(e <= 1e-12, "dt[{k}] {} vs {}", dt[k], want_dt[k]);
        }
    }
    // the worked example: E = [0.2, -0.1], t = 0.25, dÊ = [1, 1]
    let schema = FieldSchema::with_cardinalities(&[1]).unwrap();
    let table = Matrix::<f64>::from_rows(&[vec![0.2, -0.1]]).unwrap();
    let mut g = RowGrads::<f64>::new(2);
    g.insert(0, vec![1.0, 1.0]);
    let m_e = prune::gen_embedding_mask(&table, &[0.25], &schema).unwrap();
    let (de, dt) = prune::masked_embed_grads(&g, &table, &m_e, &[0.25], &schema).unwrap();
    let row = de.get(0).unwrap();
    ensure!(
        (row[0] - 1.36).abs() < 1e-12 && (row[1] - 1.18).abs() < 1e-12,
        "worked example dE {row:?}"
    );
    ensure!((dt[0] + 0.18).abs() < 1e-12, "worked example dt {}", dt[0]);
    Ok(format!("{trials} cases, worst abs err {worst:.1e}"))
}

/// AUC against the pairwise oracle (with ties) and logloss against mean CE.
pub fn metric_oracles(seed: u64, trials: usize) -> Outcome {
    let mut rng = Rng::derive(seed, "metrics");
    let mut worst: f64 = 0.0;
    for trial in 0..trials {
        let n = rng.int_inclusive(2, 300);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.bernoulli(0.4) as u8).collect();
        labels[0] = 1;
        labels[1] = 0;
        // coarse grids force ties; every fourth trial is continuous
        let levels = [3usize, 10, 50, 0][trial % 4];
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if levels == 0 {
                    rng.unit()
                } else {
                    rng.index(levels) as f64 / levels as f64
                }
            })
            .collect();
        let a = metrics::auc(&labels, &scores).map_err(|e| e.to_string())?;
        let o = oracle::auc_pairwise(&labels, &scores);
        worst = worst.max((a - o).abs());
        ensure!((a - o).abs() <= 1e-12, "auc {a} vs pairwise {o} (n {n})");

        let probs: Vec<f64> = (0..n)
            .map(|_| [0.0, 1.0, rng.unit()][rng.index(3)])
            .collect();
        let l = metrics::logloss(&labels, &probs).map_err(|e| e.to_string())?;
        let ol = oracle::logloss(&labels, &probs);
        ensure!((l - ol).abs() <= 1e-12 * ol.max(1.0), "logloss {l} vs {ol}");
    }
    Ok(format!(
        "{trials} score vectors, worst auc diff {worst:.1e}"
    ))
}

/// Search on a rigged fitness `-sum(d_i)`: best-ever history must never
/// decrease, and the optimum (all ones) should be found.
pub fn rigged_search(seeds: std::ops::Range<u64>) -> Result<(usize, usize), String> {
    let params = SearchParams::default();
    let fitness =
        |m: &DimensionMask| -> embtab::Result<f64> { Ok(-(m.dims().iter().sum::<usize>() as f64)) };
    let mut found = 0;
    let total = seeds.end - seeds.start;
    for seed in seeds {
        let out = evolutionary_search(&fitness, 8, 8, &params, &mut Rng::derive(seed, "rigged"))
            .map_err(|e| e.to_string())?;
        ensure!(
            out.best_history.len() == params.iterations + 1,
            "history length {}",
            out.best_history.len()
        );
        ensure!(
            out.best_history.windows(2).all(|w| w[1] >= w[0]),
            "best-ever fitness decreased for seed {seed}: {:?}",
            out.best_history
        );
        if out.best.mask.dims().iter().all(|&d| d == 1) {
            found += 1;
        }
    }
    Ok((found, total as usize))
}
