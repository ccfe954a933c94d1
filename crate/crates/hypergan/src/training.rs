//! Adversarial training: discriminator/encoder loss, generator loss,
//! similarity regularization, and the joint optimization loop.
//!
//! Per batch of positives, one discriminator step then one generator step:
//!
//! - D step: generate one negative per positive (fixed noise and size for
//!   the batch), score both sets through the current encoder, minimize
//!   `-mean(pos) + mean(neg)`; the gradient also trains the encoder.
//! - G step: rebuild the same negatives on a live tape (same noise/sizes),
//!   score them through soft membership weighting, minimize
//!   `-mean(neg) + beta * penalty`, where the penalty is the bowl-shaped
//!   function of the cosine between each positive's pooled embedding and
//!   its paired generated negative's. Node embeddings are detached on this
//!   step, so only the discriminator loss trains the encoder.
//!
//! The penalty is added with a positive sign by default: it is zero when
//! the pair similarity sits at the target k and grows without bound as the
//! pair becomes indistinguishable (or maximally dissimilar), which is what
//! keeps generated negatives from collapsing onto positives. `RegSign::Raw`
//! flips the sign for comparison runs.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Value};
use crate::discriminator::{aggregate_candidate, predict, score_candidate};
use crate::encoder::{encode, IncidenceGroups};
use crate::error::{Error, Result};
use crate::eval::{evaluate, select_best, EvalReport};
use crate::generator::{decode_membership, encode_positive, one_hot, sample_noise, select_topn};
use crate::hypergraph::{Hypergraph, SplitSet};
use crate::matrix::Matrix;
use crate::model::{Model, ModelDims, ModelParams};
use crate::rng::{named_stream, StreamRng};
use crate::sampler::SizeDistribution;

/// Clamp guard for the theta poles of the regularizer.
pub const THETA_EPS: f64 = 1e-4;
/// Norm guard inside cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

const SIZE_FLOOR: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegSign {
    /// Add the penalty to the minimized objective (default).
    Penalty,
    /// Subtract it (the literal sign of the formula), for comparison runs.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_d: f64,
    pub lr_g: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Similarity the generated negatives are steered toward, in (0,1).
    pub k: f64,
    /// Penalty curvature, >= 1.
    pub p: f64,
    /// Regularization weight, >= 0.
    pub beta: f64,
    /// Embedding width.
    pub d: usize,
    /// Encoder layer count.
    pub layers: usize,
    /// Generator conv channels.
    pub channels: usize,
    /// Generator noise width.
    pub noise_dim: usize,
    pub seed: u64,
    pub eval_every: usize,
    pub reg_sign: RegSign,
    /// When false the AdaIN style affines start zeroed and stay frozen, so
    /// the generator ignores the guiding positive (ablation switch).
    pub guidance: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_d: 1e-3,
            lr_g: 1e-3,
            batch_size: 32,
            epochs: 100,
            k: 0.5,
            p: 2.0,
            beta: 0.1,
            d: 64,
            layers: 2,
            channels: 32,
            noise_dim: 16,
            seed: 7,
            eval_every: 5,
            reg_sign: RegSign::Penalty,
            guidance: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.k && self.k < 1.0) {
            return Err(Error::Parameter(format!("k must lie in (0,1), got {}", self.k)));
        }
        if self.p < 1.0 {
            return Err(Error::Parameter(format!("p must be >= 1, got {}", self.p)));
        }
        if self.beta < 0.0 {
            return Err(Error::Parameter(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.lr_d < 0.0 || self.lr_g < 0.0 {
            return Err(Error::Parameter("learning rates must be >= 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Parameter("eval_every must be >= 1".into()));
        }
        if self.d == 0 || self.channels == 0 || self.noise_dim == 0 {
            return Err(Error::Parameter("d, channels and noise_dim must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dims_for(&self, h: &Hypergraph) -> ModelDims {
        ModelDims {
            num_nodes: h.num_nodes(),
            feature_dim: h.features().cols(),
            embed_dim: self.d,
            layers: self.layers,
            channels: self.channels,
            noise_dim: self.noise_dim,
        }
    }
}

// ── Losses ──────────────────────────────────────────────────────────

/// Critic-style discriminator loss: -mean(pos_scores) + mean(neg_scores).
pub fn loss_discriminator(
    tape: &mut Tape,
    pos_scores: &[Value],
    neg_scores: &[Value],
) -> Result<Value> {
    if pos_scores.is_empty() || pos_scores.len() != neg_scores.len() {
        return Err(Error::Parameter(format!(
            "discriminator loss needs equal nonempty batches, got {} positives and {} negatives",
            pos_scores.len(),
            neg_scores.len()
        )));
    }
    let pos = tape.concat_rows(pos_scores)?;
    let neg = tape.concat_rows(neg_scores)?;
    let mean_pos = tape.mean_all(pos)?;
    let mean_neg = tape.mean_all(neg)?;
    let neg_mean_pos = tape.scale(mean_pos, -1.0);
    tape.add(neg_mean_pos, mean_neg)
}

/// Generator loss: -mean(neg_scores), pushing generated negatives to fool
/// the discriminator.
pub fn loss_generator(tape: &mut Tape, neg_scores: &[Value]) -> Result<Value> {
    if neg_scores.is_empty() {
        return Err(Error::Parameter("generator loss needs a nonempty batch".into()));
    }
    let neg = tape.concat_rows(neg_scores)?;
    let mean_neg = tape.mean_all(neg)?;
    Ok(tape.scale(mean_neg, -1.0))
}

pub struct RegLoss {
    pub loss: Value,
    /// Raw (pre-clamp) cosine of each pair, for reporting.
    pub thetas: Vec<Value>,
}

/// Similarity regularizer over paired pooled embeddings: row i of `q_pos`
/// pairs with row i of `q_neg`. Each pair's cosine is clamped to
/// [eps, 1-eps] and pushed through the bowl penalty; the mean is returned.
pub fn loss_regularization(
    tape: &mut Tape,
    q_pos: Value,
    q_neg: Value,
    k: f64,
    p: f64,
    eps: f64,
) -> Result<RegLoss> {
    if !(0.0 < k && k < 1.0) {
        return Err(Error::Parameter(format!("k must lie in (0,1), got {k}")));
    }
    let (rows, cols) = tape.data(q_pos).shape();
    if tape.data(q_neg).shape() != (rows, cols) {
        let (nr, nc) = tape.data(q_neg).shape();
        return Err(Error::Shape(format!(
            "paired embeddings disagree: {rows}x{cols} vs {nr}x{nc}"
        )));
    }
    if rows == 0 {
        return Err(Error::Parameter("regularizer needs at least one pair".into()));
    }
    let mut thetas = Vec::with_capacity(rows);
    for i in 0..rows {
        let a = tape.gather_rows(q_pos, &[i])?;
        let b = tape.gather_rows(q_neg, &[i])?;
        thetas.push(tape.cosine_similarity(a, b, COSINE_EPS)?);
    }
    let stacked = tape.concat_rows(&thetas)?;
    let penalties = tape.similarity_penalty(stacked, k, p, eps)?;
    let loss = tape.mean_all(penalties)?;
    Ok(RegLoss { loss, thetas })
}

// ── Optimizer ───────────────────────────────────────────────────────

/// Adam with bias correction; one instance per parameter group.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[&Matrix]) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: shapes.iter().map(|s| Matrix::zeros(s.rows(), s.cols())).collect(),
            v: shapes.iter().map(|s| Matrix::zeros(s.rows(), s.cols())).collect(),
        }
    }

    pub fn step(&mut self, mut params: Vec<&mut Matrix>, grads: &[Matrix]) {
        assert_eq!(params.len(), grads.len());
        assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (i, param) in params.iter_mut().enumerate() {
            let g = grads[i].as_slice();
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            let p = param.as_mut_slice();
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                if self.lr != 0.0 {
                    let mhat = m[j] / c1;
                    let vhat = v[j] / c2;
                    p[j] -= self.lr * mhat / (vhat.sqrt() + self.eps);
                }
            }
        }
    }
}

// ── Training loop ───────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_reg: f64,
    pub mean_theta: f64,
    pub val_avg_auroc: Option<f64>,
}

impl EpochRecord {
    pub fn csv_header() -> &'static str {
        "epoch,loss_d,loss_g,loss_reg,mean_theta,val_avg_auroc"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch,
            self.loss_d,
            self.loss_g,
            self.loss_reg,
            self.mean_theta,
            self.val_avg_auroc.map(|v| v.to_string()).unwrap_or_default()
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub noise_pos: [u64; 2],
    pub sampler_pos: [u64; 2],
    pub shuffle_pos: [u64; 2],
}

fn split_pos(pos: u128) -> [u64; 2] {
    [(pos >> 64) as u64, pos as u64]
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters after the final epoch.
    pub final_model: Model,
    /// Best-validation snapshot (the checkpoint to keep).
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub validation_history: Vec<(usize, EvalReport)>,
}

/// Run the adversarial loop over the training split, evaluating on the
/// validation split every `eval_every` epochs (and on the final epoch) and
/// retaining the parameters that maximize averaged validation AUROC.
pub fn train(h: &Hypergraph, splits: &SplitSet, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if splits.train.is_empty() {
        return Err(Error::Parameter("training split is empty".into()));
    }
    if let Some(&bad) = splits
        .train
        .iter()
        .chain(&splits.valid)
        .chain(&splits.test)
        .find(|&&e| e >= h.num_edges())
    {
        return Err(Error::Parameter(format!(
            "split references edge {bad}, hypergraph has {}",
            h.num_edges()
        )));
    }

    let dims = config.dims_for(h);
    let mut init_rng = named_stream(config.seed, "init");
    let mut params = ModelParams::init(dims, &mut init_rng);
    if !config.guidance {
        params.generator.zero_style_affines();
    }
    let style_frozen: Vec<usize> =
        if config.guidance { Vec::new() } else { params.generator.style_tensor_indices() };

    // The incidence used for encoding holds training positives only.
    let groups = IncidenceGroups::from_edges(h, &splits.train);
    let sizes = SizeDistribution::from_training_edges(h, &splits.train, SIZE_FLOOR);

    let mut noise_rng = named_stream(config.seed, "noise");
    let mut sampler_rng = named_stream(config.seed, "sampler");
    let mut shuffle_rng = named_stream(config.seed, "shuffle");

    let mut adam_d = {
        let mut shapes = params.encoder.tensors();
        shapes.extend(params.discriminator.tensors());
        Adam::new(config.lr_d, &shapes)
    };
    let mut adam_g = Adam::new(config.lr_g, &params.generator.tensors());

    let mut history: Vec<EpochRecord> = Vec::with_capacity(config.epochs);
    let mut validation_history: Vec<(usize, EvalReport)> = Vec::new();
    let mut best: Option<(usize, EvalReport, ModelParams)> = None;

    for epoch in 1..=config.epochs {
        let mut order = splits.train.clone();
        use rand::seq::SliceRandom;
        order.shuffle(&mut shuffle_rng);

        let mut sums = (0.0, 0.0, 0.0, 0.0); // loss_d, loss_g, loss_reg, theta
        let mut batches = 0usize;

        for (batch_idx, batch) in order.chunks(config.batch_size).enumerate() {
            // One noise vector and one target size per positive, shared by
            // both steps so they see the same generated negatives.
            let mut batch_sizes = Vec::with_capacity(batch.len());
            let mut batch_noise = Vec::with_capacity(batch.len());
            for _ in batch {
                batch_sizes.push(sizes.sample(&mut sampler_rng)?);
                batch_noise.push(sample_noise(config.noise_dim, &mut noise_rng));
            }

            let loss_d = discriminator_step(
                h, &groups, &mut params, &mut adam_d, batch, &batch_sizes, &batch_noise,
            )?;
            let (loss_g, loss_reg, mean_theta) = generator_step(
                h,
                &groups,
                &mut params,
                &mut adam_g,
                &style_frozen,
                config,
                batch,
                &batch_sizes,
                &batch_noise,
            )?;

            if !loss_d.is_finite() || !loss_g.is_finite() || !loss_reg.is_finite() {
                return Err(Error::Numerical(format!(
                    "epoch {epoch} batch {batch_idx}: non-finite losses \
                     (loss_d={loss_d}, loss_g={loss_g}, loss_reg={loss_reg})"
                )));
            }

            sums.0 += loss_d;
            sums.1 += loss_g;
            sums.2 += loss_reg;
            sums.3 += mean_theta;
            batches += 1;
        }

        let mut record = EpochRecord {
            epoch,
            loss_d: sums.0 / batches as f64,
            loss_g: sums.1 / batches as f64,
            loss_reg: sums.2 / batches as f64,
            mean_theta: sums.3 / batches as f64,
            val_avg_auroc: None,
        };

        let is_last = epoch == config.epochs;
        if (epoch % config.eval_every == 0 || is_last) && !splits.valid.is_empty() {
            let report = validation_report(h, &groups, &dims, &params, splits, config, epoch)?;
            record.val_avg_auroc = report.avg_auroc;
            let improved = match &best {
                None => true,
                Some((_, b, _)) => {
                    report.avg_auroc.unwrap_or(f64::NEG_INFINITY)
                        > b.avg_auroc.unwrap_or(f64::NEG_INFINITY)
                }
            };
            if improved {
                best = Some((epoch, report.clone(), params.clone()));
            }
            validation_history.push((epoch, report));
        }
        history.push(record);
    }

    let (best_epoch, best_report, best_params) = match best {
        Some(b) => (b.0, Some(b.1), b.2),
        // No validation split: keep the final parameters.
        None => (config.epochs, None, params.clone()),
    };
    debug_assert_eq!(select_best(&validation_history), best_report.as_ref().map(|_| best_epoch));

    let rng_state = RngState {
        seed: config.seed,
        noise_pos: split_pos(noise_rng.get_word_pos()),
        sampler_pos: split_pos(sampler_rng.get_word_pos()),
        shuffle_pos: split_pos(shuffle_rng.get_word_pos()),
    };
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: config.clone(),
        epoch: best_epoch,
        dims,
        params: best_params,
        rng: rng_state,
        best: best_report.map(|report| BestRecord { epoch: best_epoch, report }),
    };

    Ok(TrainOutcome {
        final_model: Model { dims, params },
        checkpoint,
        history,
        validation_history,
    })
}

/// Scores candidate sets with the given parameters (training-split
/// incidence), shared by validation and the CLI.
pub fn score_sets_with(
    dims: &ModelDims,
    params: &ModelParams,
    h: &Hypergraph,
    groups: &IncidenceGroups,
    sets: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let enc = params.encoder.bind(&mut tape);
    let disc = params.discriminator.bind(&mut tape);
    let x = tape.leaf(h.features().clone());
    let (p, _q) = encode(&mut tape, &enc, groups, x)?;
    debug_assert_eq!(tape.data(p).rows(), dims.num_nodes);
    let mut scores = Vec::with_capacity(sets.len());
    for set in sets {
        let y = score_candidate(&mut tape, &disc, p, set, None)?;
        scores.push(tape.scalar_value(y));
    }
    Ok(scores)
}

fn validation_report(
    h: &Hypergraph,
    groups: &IncidenceGroups,
    dims: &ModelDims,
    params: &ModelParams,
    splits: &SplitSet,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EvalReport> {
    let evaluation = evaluate(
        |sets| score_sets_with(dims, params, h, groups, sets),
        h,
        &splits.valid,
        config.seed,
        epoch,
    )?;
    Ok(evaluation.report)
}

/// Generated negatives as constants: node ids plus their membership values.
struct DraftNegative {
    ids: Vec<usize>,
    weights: Vec<f64>,
}

fn draft_negatives(
    h: &Hypergraph,
    params: &ModelParams,
    batch: &[usize],
    batch_sizes: &[usize],
    batch_noise: &[Matrix],
) -> Result<Vec<DraftNegative>> {
    let mut scratch = Tape::new();
    let gen = params.generator.bind(&mut scratch);
    let mut out = Vec::with_capacity(batch.len());
    for (j, &pos) in batch.iter().enumerate() {
        let onehot = scratch.leaf(one_hot(h.edge(pos), h.num_nodes()));
        let q = encode_positive(&mut scratch, &gen, onehot)?;
        let z = scratch.leaf(batch_noise[j].clone());
        let c = decode_membership(&mut scratch, &gen, q, z)?;
        let membership = scratch.data(c).as_slice();
        let ids = select_topn(membership, batch_sizes[j])?;
        let weights: Vec<f64> = ids.iter().map(|&v| membership[v]).collect();
        out.push(DraftNegative { ids, weights });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn discriminator_step(
    h: &Hypergraph,
    groups: &IncidenceGroups,
    params: &mut ModelParams,
    adam: &mut Adam,
    batch: &[usize],
    batch_sizes: &[usize],
    batch_noise: &[Matrix],
) -> Result<f64> {
    // Generator runs off-tape here: its outputs are constants for D.
    let drafts = draft_negatives(h, params, batch, batch_sizes, batch_noise)?;

    let mut tape = Tape::new();
    let enc = params.encoder.bind(&mut tape);
    let disc = params.discriminator.bind(&mut tape);
    let x = tape.leaf(h.features().clone());
    let (p, _q) = encode(&mut tape, &enc, groups, x)?;

    let mut pos_scores = Vec::with_capacity(batch.len());
    let mut neg_scores = Vec::with_capacity(batch.len());
    for (j, &pos) in batch.iter().enumerate() {
        pos_scores.push(score_candidate(&mut tape, &disc, p, h.edge(pos), None)?);
        let w = tape.leaf(Matrix::col_vector(&drafts[j].weights));
        neg_scores.push(score_candidate(&mut tape, &disc, p, &drafts[j].ids, Some(w))?);
    }
    let loss = loss_discriminator(&mut tape, &pos_scores, &neg_scores)?;
    let loss_val = tape.scalar_value(loss);
    tape.backward(loss)?;

    let mut grads: Vec<Matrix> = Vec::new();
    for v in enc.values().into_iter().chain(disc.values()) {
        grads.push(tape.grad(v).clone());
    }
    let mut targets = params.encoder.tensors_mut();
    targets.extend(params.discriminator.tensors_mut());
    adam.step(targets, &grads);
    Ok(loss_val)
}

#[allow(clippy::too_many_arguments)]
fn generator_step(
    h: &Hypergraph,
    groups: &IncidenceGroups,
    params: &mut ModelParams,
    adam: &mut Adam,
    style_frozen: &[usize],
    config: &TrainConfig,
    batch: &[usize],
    batch_sizes: &[usize],
    batch_noise: &[Matrix],
) -> Result<(f64, f64, f64)> {
    let mut tape = Tape::new();
    let enc = params.encoder.bind(&mut tape);
    let gen = params.generator.bind(&mut tape);
    let disc = params.discriminator.bind(&mut tape);
    let x = tape.leaf(h.features().clone());
    let (p_live, _q) = encode(&mut tape, &enc, groups, x)?;
    // Only the discriminator loss trains the encoder.
    let p = tape.detach(p_live);

    let mut neg_scores = Vec::with_capacity(batch.len());
    let mut q_pos_rows = Vec::with_capacity(batch.len());
    let mut q_neg_rows = Vec::with_capacity(batch.len());
    for (j, &pos) in batch.iter().enumerate() {
        let onehot = tape.leaf(one_hot(h.edge(pos), h.num_nodes()));
        let latent = encode_positive(&mut tape, &gen, onehot)?;
        let z = tape.leaf(batch_noise[j].clone());
        let c = decode_membership(&mut tape, &gen, latent, z)?;
        let ids = select_topn(tape.data(c).as_slice(), batch_sizes[j])?;
        let c_col = tape.reshape(c, h.num_nodes(), 1)?;
        let w = tape.gather_rows(c_col, &ids)?;
        let q_neg = aggregate_candidate(&mut tape, p, &ids, Some(w))?;
        neg_scores.push(predict(&mut tape, &disc, q_neg)?);
        q_neg_rows.push(q_neg);
        q_pos_rows.push(aggregate_candidate(&mut tape, p, h.edge(pos), None)?);
    }

    let l_g = loss_generator(&mut tape, &neg_scores)?;
    let q_pos = tape.concat_rows(&q_pos_rows)?;
    let q_neg = tape.concat_rows(&q_neg_rows)?;
    let reg = loss_regularization(&mut tape, q_pos, q_neg, config.k, config.p, THETA_EPS)?;
    let weight = match config.reg_sign {
        RegSign::Penalty => config.beta,
        RegSign::Raw => -config.beta,
    };
    let reg_scaled = tape.scale(reg.loss, weight);
    let total = tape.add(l_g, reg_scaled)?;

    let l_g_val = tape.scalar_value(l_g);
    let reg_val = tape.scalar_value(reg.loss);
    let mean_theta = reg.thetas.iter().map(|&t| tape.scalar_value(t)).sum::<f64>()
        / reg.thetas.len() as f64;
    tape.backward(total)?;

    let mut grads: Vec<Matrix> = gen.values().iter().map(|&v| tape.grad(v).clone()).collect();
    for &idx in style_frozen {
        let g = &mut grads[idx];
        *g = Matrix::zeros(g.rows(), g.cols());
    }
    adam.step(params.generator.tensors_mut(), &grads);
    Ok((l_g_val, reg_val, mean_theta))
}

// ── Checkpointing ───────────────────────────────────────────────────

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BestRecord {
    pub epoch: usize,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub epoch: usize,
    pub dims: ModelDims,
    pub params: ModelParams,
    pub rng: RngState,
    pub best: Option<BestRecord>,
}

impl Checkpoint {
    pub fn model(&self) -> Model {
        Model { dims: self.dims, params: self.params.clone() }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    /// A checkpoint that cannot be parsed or carries a different version is
    /// a version error, regardless of how it was damaged.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let ckpt: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Re-derive the training rng streams at their stored positions.
    pub fn restore_streams(&self) -> (StreamRng, StreamRng, StreamRng) {
        let restore = |name: &str, pos: [u64; 2]| -> StreamRng {
            let mut rng = named_stream(self.rng.seed, name);
            rng.set_word_pos(((pos[0] as u128) << 64) | pos[1] as u128);
            rng
        };
        (
            restore("noise", self.rng.noise_pos),
            restore("sampler", self.rng.sampler_pos),
            restore("shuffle", self.rng.shuffle_pos),
        )
    }
}
