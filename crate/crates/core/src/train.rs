//! Training: ADAMAX updates, cross-entropy loss, the epoch loop, and
//! versioned checkpoints.
//!
//! One batch is processed as independent per-example tapes whose
//! gradients are averaged before a single optimizer step; the batch
//! loss therefore equals the mean of the per-example losses exactly.
//! Everything is driven by one seed: parameter initialization, epoch
//! shuffling and embedding dropout, so a (seed, config, data) triple
//! fully determines the trained model.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::compare::ComparisonKind;
use crate::data::{MatchInstance, TaskShape};
use crate::embedding::{EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::metrics::ScoredQuestion;
use crate::model::{argmax, ForwardCtx, Model, ModelConfig};
use crate::tape::{GradientMap, Tape};
use crate::tensor::Tensor;

/// Optimizer and loop settings. Defaults: ADAMAX with betas 0.9/0.999,
/// learning rate 0.002, batch size 30, hidden dimension 150, no weight
/// decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub dropout: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub comparison: ComparisonKind,
    pub windows: Vec<usize>,
    pub hidden_dim: usize,
    /// Record training accuracy in the per-epoch log.
    pub log_accuracy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.002,
            batch_size: 30,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            dropout: 0.0,
            max_epochs: 20,
            seed: 42,
            comparison: ComparisonKind::SubMultNn,
            windows: vec![1, 2, 3],
            hidden_dim: 150,
            log_accuracy: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-parameter ADAMAX state: first moment `m`, infinity-norm
/// accumulator `u`, and the shared step counter.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamaxState {
    pub m: BTreeMap<String, Tensor>,
    pub u: BTreeMap<String, Tensor>,
    pub step: u64,
}

impl AdamaxState {
    pub fn new() -> Self {
        AdamaxState::default()
    }
}

/// One ADAMAX update:
/// `m <- b1*m + (1-b1)*g`, `u <- max(b2*u, |g|)`,
/// `theta <- theta - lr/(1-b1^t) * m/(u+eps)`.
/// Bias correction applies to the first moment only; there is no
/// weight decay. Parameters without a gradient entry decay their state
/// but do not move (their gradient is zero).
pub fn adamax_step(
    params: &mut crate::model::ModelParams,
    grads: &GradientMap,
    state: &mut AdamaxState,
    cfg: &TrainConfig,
) -> Result<()> {
    if let Some(name) = grads.find_non_finite() {
        return Err(Error::Training(format!(
            "non-finite gradient for parameter {name}"
        )));
    }
    state.step += 1;
    let correction = 1.0 - cfg.beta1.powi(state.step as i32);
    for (name, tensor) in params.named_tensors_mut() {
        let zero = Tensor::zeros(tensor.shape());
        let grad = grads.get(&name).unwrap_or(&zero);
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(tensor.shape()));
        let u = state
            .u
            .entry(name.clone())
            .or_insert_with(|| Tensor::zeros(tensor.shape()));
        for k in 0..tensor.numel() {
            let g = grad.data()[k];
            let mk = cfg.beta1 * m.data()[k] + (1.0 - cfg.beta1) * g;
            let uk = (cfg.beta2 * u.data()[k]).max(g.abs());
            m.data_mut()[k] = mk;
            u.data_mut()[k] = uk;
            tensor.data_mut()[k] -= cfg.learning_rate / correction * mk / (uk + cfg.epsilon);
        }
    }
    Ok(())
}

/// Cross-entropy of a probability vector against a gold index:
/// `-log(probs[gold] + 1e-12)`.
pub fn cross_entropy(probs: &Tensor, gold: usize) -> Result<f64> {
    if gold >= probs.numel() {
        return Err(Error::Input(format!(
            "gold index {gold} out of range for {} outputs",
            probs.numel()
        )));
    }
    Ok(-(probs.data()[gold] + 1e-12).ln())
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_accuracy: Option<f64>,
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub opt_state: AdamaxState,
}

/// Fraction of instances whose argmax prediction is in the correct set.
pub fn eval_accuracy(model: &Model, data: &[MatchInstance]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let mut hits = 0usize;
    for inst in data {
        let pred = model.predict(inst)?;
        if inst.label.correct_indices().contains(&pred.index) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Candidate scores per question, for MAP/MRR evaluation of selection
/// datasets.
pub fn scored_questions(model: &Model, data: &[MatchInstance]) -> Result<Vec<ScoredQuestion>> {
    data.iter()
        .map(|inst| {
            let pred = model.predict(inst)?;
            Ok(ScoredQuestion {
                scores: pred.probs,
                correct: inst.label.correct_indices(),
            })
        })
        .collect()
}

/// Run the epoch loop, updating the model in place. Shuffling, batching
/// and dropout all draw from one RNG seeded by `cfg.seed`, so repeated
/// runs with identical inputs produce identical histories and weights.
pub fn train(cfg: &TrainConfig, model: &mut Model, data: &[MatchInstance]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("cannot train on an empty dataset".into()));
    }
    // Distinct stream from parameter initialization, which uses cfg.seed
    // directly inside Model::init.
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut state = AdamaxState::new();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut acc = GradientMap::default();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let inst = &data[idx];
                let mut tape = Tape::new();
                let mut ctx = ForwardCtx::train(cfg.dropout, &mut rng);
                let (loss, _) = model.instance_loss(&mut tape, inst, &mut ctx)?;
                let loss_value = tape.value(loss).data()[0];
                if !loss_value.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss at epoch {epoch}, batch {batch_no}, instance {} ({})",
                        inst.id,
                        param_norms(model)
                    )));
                }
                batch_loss += loss_value;
                let grads = tape.backward(loss)?;
                for (name, grad) in grads.iter() {
                    acc.accumulate(name, grad);
                }
            }
            acc.scale(1.0 / batch.len() as f64);
            adamax_step(&mut model.params, &acc, &mut state, cfg)?;
            epoch_loss += batch_loss;
        }
        let mean_loss = epoch_loss / data.len() as f64;
        let train_accuracy = if cfg.log_accuracy {
            Some(eval_accuracy(model, data)?)
        } else {
            None
        };
        history.push(EpochRecord {
            epoch,
            mean_loss,
            train_accuracy,
        });
    }
    Ok(TrainOutcome {
        history,
        opt_state: state,
    })
}

fn param_norms(model: &Model) -> String {
    let parts: Vec<String> = model
        .params
        .named_tensors()
        .iter()
        .map(|(name, t)| format!("{name}={:.3e}", t.norm()))
        .collect();
    format!("parameter norms: {}", parts.join(", "))
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model frozen to disk: hyper-parameters, named weight
/// tensors, the vocabulary, the frozen embedding table, and optionally
/// the optimizer state. Serialized as JSON; floats round-trip
/// bit-exactly through their shortest decimal representation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub comparison: ComparisonKind,
    pub windows: Vec<usize>,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub task_shape: TaskShape,
    pub num_classes: usize,
    pub params: BTreeMap<String, Tensor>,
    pub vocab: Vec<String>,
    pub embeddings: Tensor,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt_state: Option<AdamaxState>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, opt_state: Option<&AdamaxState>) -> Self {
        let params = model
            .params
            .named_tensors()
            .into_iter()
            .map(|(name, t)| (name, t.clone()))
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            comparison: model.params.comparison,
            windows: model.params.windows.clone(),
            hidden_dim: model.params.hidden_dim,
            embed_dim: model.params.embed_dim,
            task_shape: model.params.task_shape,
            num_classes: model.params.num_classes,
            params,
            vocab: model.vocab.tokens().to_vec(),
            embeddings: model.embeddings.matrix().clone(),
            opt_state: opt_state.cloned(),
        }
    }

    /// Serialize to pretty JSON. Output is deterministic: tensors are
    /// named in sorted maps and floats use shortest round-trip form.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path.as_ref())?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::Format(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Format(format!("unreadable checkpoint: {e}")))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    /// Reject a checkpoint trained with a different comparison function.
    pub fn ensure_comparison(&self, kind: ComparisonKind) -> Result<()> {
        if self.comparison != kind {
            return Err(Error::Config(format!(
                "checkpoint was trained with comparison {} but {} was requested",
                self.comparison, kind
            )));
        }
        Ok(())
    }

    /// Reject a checkpoint whose head does not fit the dataset shape.
    pub fn ensure_task_shape(&self, shape: TaskShape) -> Result<()> {
        if self.task_shape != shape {
            return Err(Error::Config(format!(
                "checkpoint was trained for task shape {} but the dataset is {}",
                self.task_shape, shape
            )));
        }
        Ok(())
    }

    /// Rebuild the model, validating every tensor shape against a
    /// freshly initialized parameter set.
    pub fn into_model(self) -> Result<(Model, Option<AdamaxState>)> {
        let vocab = Vocabulary::from_ordered_tokens(self.vocab)?;
        let embeddings = EmbeddingTable::from_matrix(self.embeddings)?;
        if embeddings.dim() != self.embed_dim {
            return Err(Error::Format(format!(
                "embedding matrix dimension {} does not match recorded {}",
                embeddings.dim(),
                self.embed_dim
            )));
        }
        let cfg = ModelConfig {
            comparison: self.comparison,
            windows: self.windows.clone(),
            hidden_dim: self.hidden_dim,
            task_shape: self.task_shape,
            num_classes: self.num_classes,
        };
        let mut model = Model::init(&cfg, vocab, embeddings, 0)?;
        let expected: Vec<String> = model
            .params
            .named_tensors()
            .into_iter()
            .map(|(n, _)| n)
            .collect();
        for (name, tensor) in model.params.named_tensors_mut() {
            let stored = self.params.get(&name).ok_or_else(|| {
                Error::Format(format!("checkpoint is missing parameter {name}"))
            })?;
            if stored.shape() != tensor.shape() {
                return Err(Error::Format(format!(
                    "checkpoint parameter {name} has shape {} (expected {})",
                    stored.shape_string(),
                    tensor.shape_string()
                )));
            }
            *tensor = stored.clone();
        }
        for name in self.params.keys() {
            if !expected.contains(name) {
                return Err(Error::Format(format!(
                    "checkpoint has unexpected parameter {name}"
                )));
            }
        }
        Ok((model, self.opt_state))
    }
}

/// Argmax prediction for every instance, for accuracy computations.
pub fn predictions(model: &Model, data: &[MatchInstance]) -> Result<Vec<usize>> {
    data.iter()
        .map(|inst| model.predict(inst).map(|p| argmax(&p.probs)))
        .collect()
}
