//! The numerical comparison: an exact risk/regret sweep over Dirichlet-drawn
//! label distributions and a synthetic linear-model training comparison with
//! a hand-rolled Adam optimizer. Both emit CSV.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::consistency::RegionRecord;
use crate::embeddings::{enumerate, RepresentativeSet};
use crate::error::{Error, Result};
use crate::losses::{bayes_risk_topk, subgradient, surrogate_loss, topk_loss, LossId};
use crate::properties::{prop_over_reps, ARGMIN_TOL};
use crate::simplex::{argmax_link, DirichletSampler, Label, LabelSpace, ProbVector, ScoreVector};
use crate::util::{derive_seed, format_sig12, pairwise_sum};

/// Configuration of the risk/regret sweep.
///
/// For each `alpha`, distributions are drawn from a Dirichlet whose first two
/// concentration parameters are `alpha` and the rest 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: usize,
    pub k: usize,
    pub alphas: Vec<f64>,
    pub samples_per_alpha: usize,
    pub seed: u64,
    pub losses: Vec<LossId>,
}

impl SweepConfig {
    /// The default sweep: n=5, k=3, alpha from 1/8 to 8 by octaves, 1000
    /// samples per alpha, all four surrogates.
    pub fn default_sweep() -> Self {
        SweepConfig {
            n: 5,
            k: 3,
            alphas: vec![0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            samples_per_alpha: 1000,
            seed: 7,
            losses: vec![LossId::L2, LossId::L3, LossId::L4, LossId::Lk],
        }
    }

    pub fn space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.n, self.k)
    }

    pub fn validate(&self) -> Result<()> {
        self.space()?;
        if self.alphas.is_empty() {
            return Err(Error::Config("alphas must be non-empty".into()));
        }
        if self.alphas.iter().any(|&a| a <= 0.0 || !a.is_finite()) {
            return Err(Error::Config("alphas must be positive and finite".into()));
        }
        if self.samples_per_alpha < 1 {
            return Err(Error::Config("samples_per_alpha must be at least 1".into()));
        }
        if self.losses.is_empty() {
            return Err(Error::Config("losses must be non-empty".into()));
        }
        Ok(())
    }

    /// Concentration vector for one alpha: `(alpha, alpha, 1, ..., 1)`.
    pub fn concentration(&self, alpha: f64) -> Vec<f64> {
        let mut c = vec![1.0; self.n];
        for slot in c.iter_mut().take(2.min(self.n)) {
            *slot = alpha;
        }
        c
    }

    /// The distributions drawn for one alpha index; the sweep consumes
    /// exactly these, so callers can reproduce any cell of the output.
    pub fn samples_for_alpha(&self, alpha_index: usize) -> Result<Vec<ProbVector>> {
        let alpha = *self
            .alphas
            .get(alpha_index)
            .ok_or_else(|| Error::range(format!("alpha index {alpha_index} out of range")))?;
        crate::simplex::dirichlet_sample(
            &self.concentration(alpha),
            derive_seed(self.seed, alpha_index as u64),
            self.samples_per_alpha,
        )
    }
}

/// Configuration of the training comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub base_p: Vec<f64>,
    pub k: usize,
    pub alpha: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub losses: Vec<LossId>,
}

impl TrainConfig {
    /// The default training run: the five-label base distribution with k=3,
    /// 10000 train / 1000 test draws, 200 epochs of Adam at 0.01.
    ///
    /// No alpha grid is canonical for this experiment; sweeping
    /// `{1, 4, 16, 64, 256}` over separate runs covers the diffuse-to-
    /// concentrated range. The default picks the concentrated end.
    pub fn default_train() -> Self {
        TrainConfig {
            base_p: vec![0.15, 0.15, 0.15, 0.2, 0.35],
            k: 3,
            alpha: 64.0,
            train_size: 10_000,
            test_size: 1_000,
            epochs: 200,
            learning_rate: 0.01,
            batch_size: 128,
            seed: 7,
            losses: vec![LossId::L2, LossId::L3, LossId::L4, LossId::Lk],
        }
    }

    pub fn space(&self) -> Result<LabelSpace> {
        LabelSpace::new(self.base_p.len(), self.k)
    }

    pub fn validate(&self) -> Result<()> {
        self.space()?;
        ProbVector::new(self.base_p.clone()).map_err(|e| Error::Config(format!("base_p: {e}")))?;
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be positive and finite".into()));
        }
        if self.train_size < 1 || self.test_size < 1 {
            return Err(Error::Config(
                "train_size and test_size must be at least 1".into(),
            ));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.losses.is_empty() {
            return Err(Error::Config("losses must be non-empty".into()));
        }
        if let Some(l) = self.losses.iter().find(|l| !l.is_surrogate()) {
            return Err(Error::Config(format!("cannot train the discrete loss {l}")));
        }
        Ok(())
    }
}

fn pick_lex_first<'a>(reps: &'a RepresentativeSet, optima: &[usize]) -> &'a ScoreVector {
    optima
        .iter()
        .map(|&i| &reps.entries[i].embed)
        .min_by(|a, b| a.lex_cmp(b))
        .expect("optima are non-empty")
}

/// Expected top-k loss after minimizing a surrogate over its representative
/// set and linking; exact in `p`, no label sampling.
fn linked_topk_risk(reps: &RepresentativeSet, p: &ProbVector) -> Result<f64> {
    let value = prop_over_reps(reps, p, ARGMIN_TOL)?;
    let chosen = pick_lex_first(reps, &value.optima);
    let linked = argmax_link(chosen, reps.space)?;
    let hit: f64 = linked.members().iter().map(|&y| p.prob(y)).sum();
    Ok(1.0 - hit)
}

fn risk_with_reps(reps: &RepresentativeSet, samples: &[ProbVector]) -> Result<f64> {
    let mut terms = Vec::with_capacity(samples.len());
    for p in samples {
        terms.push(linked_topk_risk(reps, p)?);
    }
    Ok(pairwise_sum(&terms) / samples.len() as f64)
}

fn mean_bayes_risk(space: LabelSpace, samples: &[ProbVector]) -> Result<f64> {
    let mut terms = Vec::with_capacity(samples.len());
    for p in samples {
        terms.push(bayes_risk_topk(p, space)?);
    }
    Ok(pairwise_sum(&terms) / samples.len() as f64)
}

/// Mean top-k risk of surrogate minimization plus linking over the samples.
/// For the discrete loss this is the Bayes risk itself (the oracle row).
pub fn risk(loss: LossId, space: LabelSpace, samples: &[ProbVector]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::usage("risk needs at least one sample"));
    }
    if loss.is_surrogate() {
        risk_with_reps(&enumerate(loss, space)?, samples)
    } else {
        mean_bayes_risk(space, samples)
    }
}

/// Risk minus the mean Bayes risk; nonnegative up to rounding.
pub fn regret(loss: LossId, space: LabelSpace, samples: &[ProbVector]) -> Result<f64> {
    Ok(risk(loss, space, samples)? - mean_bayes_risk(space, samples)?)
}

/// One sweep cell.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub loss: LossId,
    pub risk: f64,
    pub regret: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Runs the full sweep: per (alpha, loss), the exact risk and regret over
/// freshly drawn distributions. Deterministic in the config.
pub fn regret_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let space = cfg.space()?;
    let reps: Vec<(LossId, Option<RepresentativeSet>)> = cfg
        .losses
        .iter()
        .map(|&loss| {
            if loss.is_surrogate() {
                Ok((loss, Some(enumerate(loss, space)?)))
            } else {
                Ok((loss, None))
            }
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(cfg.alphas.len() * cfg.losses.len());
    for (ai, &alpha) in cfg.alphas.iter().enumerate() {
        let samples = cfg.samples_for_alpha(ai)?;
        let bayes = mean_bayes_risk(space, &samples)?;
        for (loss, reps) in &reps {
            let risk = match reps {
                Some(reps) => risk_with_reps(reps, &samples)?,
                None => bayes,
            };
            records.push(SweepRecord {
                alpha,
                loss: *loss,
                risk,
                regret: risk - bayes,
                n_samples: samples.len(),
                seed: cfg.seed,
            });
        }
    }
    Ok(records)
}

/// Adam moment estimates for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One Adam update with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    for i in 0..params.len() {
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * grads[i];
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * grads[i] * grads[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Linear scorer `u = W x + b` stored as one flat parameter vector
/// (row-major weights, then bias).
#[derive(Debug, Clone)]
pub struct LinearModel {
    n: usize,
    params: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(n: usize) -> Self {
        LinearModel {
            n,
            params: vec![0.0; n * n + n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn scores(&self, x: &[f64]) -> ScoreVector {
        debug_assert_eq!(x.len(), self.n);
        let n = self.n;
        let mut u = vec![0.0; n];
        for (i, slot) in u.iter_mut().enumerate() {
            let row = &self.params[i * n..(i + 1) * n];
            let mut acc = self.params[n * n + i];
            for (w, xi) in row.iter().zip(x.iter()) {
                acc += w * xi;
            }
            *slot = acc;
        }
        ScoreVector::new(u).expect("finite parameters yield finite scores")
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }
}

/// One labeled example: features are the conditional distribution itself.
struct Example {
    x: Vec<f64>,
    y: Label,
}

fn draw_dataset(cfg: &TrainConfig, count: usize, seed: u64) -> Result<Vec<Example>> {
    let concentration: Vec<f64> = cfg.base_p.iter().map(|&b| cfg.alpha * b).collect();
    let mut sampler = DirichletSampler::new(&concentration, seed)?;
    Ok((0..count)
        .map(|_| {
            let p = sampler.sample_one();
            let y = sampler.sample_label(&p);
            Example {
                x: p.as_slice().to_vec(),
                y,
            }
        })
        .collect())
}

fn mean_surrogate_loss(
    loss: LossId,
    model: &LinearModel,
    data: &[Example],
    space: LabelSpace,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(data.len());
    for ex in data {
        terms.push(surrogate_loss(loss, &model.scores(&ex.x), ex.y, space)?);
    }
    Ok(pairwise_sum(&terms) / data.len() as f64)
}

fn mean_test_topk_loss(model: &LinearModel, data: &[Example], space: LabelSpace) -> Result<f64> {
    let mut terms = Vec::with_capacity(data.len());
    for ex in data {
        let linked = argmax_link(&model.scores(&ex.x), space)?;
        terms.push(topk_loss(&linked, ex.y, space)?);
    }
    Ok(pairwise_sum(&terms) / data.len() as f64)
}

/// One per-epoch training row. Epoch 0 is the zero-initialized model.
#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub alpha: f64,
    pub loss: LossId,
    pub seed: u64,
    pub epoch: usize,
    pub train_surrogate_loss: f64,
    pub test_topk_loss: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Final held-out top-k loss per trained surrogate.
    pub final_test: Vec<(LossId, f64)>,
}

/// Trains one linear model per surrogate with minibatch Adam on subgradients
/// and evaluates the linked top-k loss on held-out draws.
pub fn train_and_eval(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let space = cfg.space()?;
    let n = space.n();
    let train = draw_dataset(cfg, cfg.train_size, derive_seed(cfg.seed, 0))?;
    let test = draw_dataset(cfg, cfg.test_size, derive_seed(cfg.seed, 1))?;

    let mut records = Vec::new();
    let mut final_test = Vec::new();
    for &loss in &cfg.losses {
        // Every surrogate sees the same data and the same batch order.
        let mut shuffle_rng = ChaCha12Rng::seed_from_u64(derive_seed(cfg.seed, 2));
        let mut model = LinearModel::zeros(n);
        let mut state = AdamState::new(model.params().len());
        let mut grad = vec![0.0; model.params().len()];

        records.push(EpochRecord {
            alpha: cfg.alpha,
            loss,
            seed: cfg.seed,
            epoch: 0,
            train_surrogate_loss: mean_surrogate_loss(loss, &model, &train, space)?,
            test_topk_loss: mean_test_topk_loss(&model, &test, space)?,
        });

        let mut order: Vec<usize> = (0..train.len()).collect();
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for &idx in batch {
                    let ex = &train[idx];
                    let gu = subgradient(loss, &model.scores(&ex.x), ex.y, space)?;
                    for (i, &gi) in gu.as_slice().iter().enumerate() {
                        if gi != 0.0 {
                            for j in 0..n {
                                grad[i * n + j] += gi * ex.x[j] * scale;
                            }
                            grad[n * n + i] += gi * scale;
                        }
                    }
                }
                adam_step(model.params_mut(), &grad, &mut state, cfg.learning_rate);
            }
            if !model.is_finite() {
                return Err(Error::Training {
                    loss: loss.to_string(),
                    detail: format!("non-finite parameters after epoch {epoch}"),
                });
            }
            records.push(EpochRecord {
                alpha: cfg.alpha,
                loss,
                seed: cfg.seed,
                epoch,
                train_surrogate_loss: mean_surrogate_loss(loss, &model, &train, space)?,
                test_topk_loss: mean_test_topk_loss(&model, &test, space)?,
            });
        }
        let last = records.last().expect("at least the epoch-0 row");
        final_test.push((loss, last.test_topk_loss));
    }
    Ok(TrainOutcome {
        records,
        final_test,
    })
}

/// A record that knows its CSV header and field rendering.
pub trait CsvRecord {
    fn header() -> &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

impl CsvRecord for SweepRecord {
    fn header() -> &'static [&'static str] {
        &["alpha", "loss", "risk", "regret", "n_samples", "seed"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_sig12(self.alpha),
            self.loss.to_string(),
            format_sig12(self.risk),
            format_sig12(self.regret),
            self.n_samples.to_string(),
            self.seed.to_string(),
        ]
    }
}

impl CsvRecord for EpochRecord {
    fn header() -> &'static [&'static str] {
        &[
            "alpha",
            "loss",
            "seed",
            "epoch",
            "train_surrogate_loss",
            "test_topk_loss",
        ]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            format_sig12(self.alpha),
            self.loss.to_string(),
            self.seed.to_string(),
            self.epoch.to_string(),
            format_sig12(self.train_surrogate_loss),
            format_sig12(self.test_topk_loss),
        ]
    }
}

impl CsvRecord for RegionRecord {
    fn header() -> &'static [&'static str] {
        &[
            "sample_id",
            "p",
            "predicate",
            "link_consistent",
            "link_agnostic",
            "near_tie",
        ]
    }

    fn fields(&self) -> Vec<String> {
        let p = self
            .p
            .iter()
            .map(|&x| format_sig12(x))
            .collect::<Vec<_>>()
            .join(";");
        vec![
            self.sample_id.to_string(),
            p,
            self.predicate.map(|b| b.to_string()).unwrap_or_default(),
            self.link_consistent.to_string(),
            self.link_agnostic.to_string(),
            self.near_tie.to_string(),
        ]
    }
}

/// Writes records as RFC 4180 CSV with a header row; floats carry 12
/// significant digits.
pub fn write_csv<R: CsvRecord, W: std::io::Write>(records: &[R], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer
        .write_record(R::header())
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    for record in records {
        writer
            .write_record(record.fields())
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    writer
        .flush()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    Ok(())
}

/// [`write_csv`] to a file path.
pub fn emit_csv<R: CsvRecord>(records: &[R], path: &Path) -> Result<()> {
    write_csv(records, std::fs::File::create(path)?)
}
