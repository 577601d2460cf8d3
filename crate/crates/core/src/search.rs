//! Field-wise dimension search: uniform mask sampling for supernet training
//! and the evolutionary search over masks that follows it.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::mask::DimensionMask;
use crate::rng::Rng;

/// Each `d_i` drawn independently and uniformly from `1..=D`.
pub fn sample_dim_mask(rng: &mut Rng, n_fields: usize, max_dim: usize) -> DimensionMask {
    let dims = (0..n_fields)
        .map(|_| rng.int_inclusive(1, max_dim))
        .collect();
    DimensionMask::new(dims, max_dim.max(1)).expect("draws lie in [1, D]")
}

/// Single-point crossover at a cut drawn uniformly from `1..n`.
pub fn crossover(a: &DimensionMask, b: &DimensionMask, rng: &mut Rng) -> Result<DimensionMask> {
    let n = a.n_fields();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "crossover needs at least 2 fields, got {n}"
        )));
    }
    let cut = rng.int_inclusive(1, n - 1);
    crossover_at(a, b, cut)
}

/// `a[..cut] ++ b[cut..]`.
pub fn crossover_at(a: &DimensionMask, b: &DimensionMask, cut: usize) -> Result<DimensionMask> {
    if a.n_fields() != b.n_fields() || a.max_dim() != b.max_dim() {
        return Err(Error::Length {
            what: "crossover parent",
            expected: a.n_fields(),
            found: b.n_fields(),
        });
    }
    if cut > a.n_fields() {
        return Err(Error::InvalidArgument(format!(
            "cut {cut} beyond {} fields",
            a.n_fields()
        )));
    }
    let dims = a.dims()[..cut]
        .iter()
        .chain(&b.dims()[cut..])
        .copied()
        .collect();
    DimensionMask::new(dims, a.max_dim())
}

/// Independently per field, with probability `prob` resample `d_i` uniformly
/// from `1..=D` (possibly drawing the same value again).
pub fn mutate(c: &DimensionMask, prob: f64, rng: &mut Rng) -> DimensionMask {
    let d = c.max_dim();
    let dims = c
        .dims()
        .iter()
        .map(|&old| {
            if rng.bernoulli(prob) {
                rng.int_inclusive(1, d)
            } else {
                old
            }
        })
        .collect();
    DimensionMask::new(dims, d).expect("draws lie in [1, D]")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchParams {
    pub n_mutation: usize,
    pub n_crossover: usize,
    pub iterations: usize,
    pub prob: f64,
    pub topk: usize,
    /// Redraws allowed for a child that duplicates an already seen mask.
    pub max_redraws: usize,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            n_mutation: 10,
            n_crossover: 10,
            iterations: 30,
            prob: 0.1,
            topk: 15,
            max_redraws: 10,
        }
    }
}

/// A dimension mask with its fitness (`NaN` until evaluated).
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub mask: DimensionMask,
    pub fitness: f64,
}

impl Candidate {
    pub fn unevaluated(mask: DimensionMask) -> Self {
        Self {
            mask,
            fitness: f64::NAN,
        }
    }
}

/// Scores a dimension mask; higher is better.
pub trait Fitness {
    fn fitness(&self, mask: &DimensionMask) -> Result<f64>;
}

impl<F> Fitness for F
where
    F: Fn(&DimensionMask) -> Result<f64>,
{
    fn fitness(&self, mask: &DimensionMask) -> Result<f64> {
        self(mask)
    }
}

/// One evaluation in the search log.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchRecord {
    pub iteration: usize,
    pub candidate: usize,
    pub mask: DimensionMask,
    pub fitness: f64,
}

/// Best-ever candidates, sorted by fitness descending then discovery order.
#[derive(Debug, Clone, Default)]
pub struct TopK {
    k: usize,
    entries: Vec<(Candidate, usize)>,
    discovered: usize,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        Self {
            k: k.max(1),
            entries: Vec::new(),
            discovered: 0,
        }
    }

    pub fn update(&mut self, evaluated: &[Candidate]) {
        for c in evaluated {
            let order = self.discovered;
            self.discovered += 1;
            if self.entries.iter().any(|(e, _)| e.mask == c.mask) {
                continue;
            }
            self.entries.push((c.clone(), order));
        }
        self.entries
            .sort_by(|(a, oa), (b, ob)| b.fitness.total_cmp(&a.fitness).then(oa.cmp(ob)));
        self.entries.truncate(self.k);
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.entries.first().map(|(c, _)| c)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.entries.iter().map(|(c, _)| c)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn get(&self, i: usize) -> &DimensionMask {
        &self.entries[i].0.mask
    }
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best: Candidate,
    /// Best-ever fitness after each evaluation round (`iterations + 1` entries).
    pub best_history: Vec<f64>,
    pub log: Vec<SearchRecord>,
    pub final_topk: Vec<Candidate>,
}

impl SearchOutcome {
    /// Tab-separated `iteration, candidate, mask, fitness` records.
    pub fn log_tsv(&self) -> String {
        let mut out = String::from("iteration\tcandidate\tmask\tfitness\n");
        for r in &self.log {
            writeln!(
                out,
                "{}\t{}\t{}\t{}",
                r.iteration, r.candidate, r.mask, r.fitness
            )
            .unwrap();
        }
        out
    }
}

/// Evolutionary search over per-field dimension masks.
///
/// Starts from `n_mutation + n_crossover` random masks. Every round evaluates
/// the population, merges it into the best-ever top-k (deduplicated by mask),
/// then breeds `n_crossover` children from random top-k pairs and `n_mutation`
/// children from random top-k members. A final round evaluates the last
/// population, so `iterations = 0` returns the best initial mask.
pub fn evolutionary_search<F: Fitness + ?Sized>(
    fitness: &F,
    n_fields: usize,
    max_dim: usize,
    params: &SearchParams,
    rng: &mut Rng,
) -> Result<SearchOutcome> {
    if n_fields == 0 || max_dim == 0 {
        return Err(Error::InvalidArgument(
            "search needs at least one field and D >= 1".into(),
        ));
    }
    let pop_size = params.n_mutation + params.n_crossover;
    if pop_size == 0 {
        return Err(Error::InvalidArgument(
            "population size n_m + n_c must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&params.prob) {
        return Err(Error::InvalidArgument(format!(
            "mutation probability {} outside [0, 1]",
            params.prob
        )));
    }

    let mut seen: HashSet<DimensionMask> = HashSet::new();
    let mut cache: HashMap<DimensionMask, f64> = HashMap::new();
    let mut topk = TopK::new(params.topk);
    let mut log = Vec::new();
    let mut best_history = Vec::with_capacity(params.iterations + 1);

    let mut population: Vec<DimensionMask> = Vec::with_capacity(pop_size);
    while population.len() < pop_size {
        let m = draw_fresh(params, &seen, &population, || {
            Ok(sample_dim_mask(rng, n_fields, max_dim))
        })?;
        population.push(m);
    }

    for iteration in 0..=params.iterations {
        let mut evaluated = Vec::with_capacity(population.len());
        for (ci, mask) in population.iter().enumerate() {
            let f = match cache.get(mask) {
                Some(&f) => f,
                None => {
                    let f = fitness.fitness(mask)?;
                    if !f.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "non-finite fitness for mask {mask}"
                        )));
                    }
                    cache.insert(mask.clone(), f);
                    f
                }
            };
            seen.insert(mask.clone());
            log.push(SearchRecord {
                iteration,
                candidate: ci,
                mask: mask.clone(),
                fitness: f,
            });
            evaluated.push(Candidate {
                mask: mask.clone(),
                fitness: f,
            });
        }
        topk.update(&evaluated);
        best_history.push(topk.best().expect("population is non-empty").fitness);
        if iteration == params.iterations {
            break;
        }

        let mut next: Vec<DimensionMask> = Vec::with_capacity(pop_size);
        for _ in 0..params.n_mutation {
            let child = draw_fresh(params, &seen, &next, || {
                let parent = topk.get(rng.index(topk.len()));
                Ok(mutate(parent, params.prob, rng))
            })?;
            next.push(child);
        }
        for _ in 0..params.n_crossover {
            let child = draw_fresh(params, &seen, &next, || {
                if n_fields < 2 || topk.len() < 2 {
                    // nothing to exchange; fall back to mutation
                    let parent = topk.get(rng.index(topk.len()));
                    return Ok(mutate(parent, params.prob, rng));
                }
                let a = rng.index(topk.len());
                let mut b = rng.index(topk.len() - 1);
                if b >= a {
                    b += 1;
                }
                crossover(topk.get(a), topk.get(b), rng)
            })?;
            next.push(child);
        }
        population = next;
    }

    Ok(SearchOutcome {
        best: topk.best().cloned().expect("population is non-empty"),
        best_history,
        log,
        final_topk: topk.candidates().cloned().collect(),
    })
}

fn draw_fresh(
    params: &SearchParams,
    seen: &HashSet<DimensionMask>,
    pending: &[DimensionMask],
    mut draw: impl FnMut() -> Result<DimensionMask>,
) -> Result<DimensionMask> {
    let mut m = draw()?;
    for _ in 0..params.max_redraws {
        if !seen.contains(&m) && !pending.contains(&m) {
            break;
        }
        m = draw()?;
    }
    Ok(m)
}
