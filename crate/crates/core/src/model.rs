//! The assembled matching model: CNN aggregation, decision heads, and
//! the end-to-end forward passes for all three task shapes.
//!
//! A forward pass embeds the token sequences (dropout at training
//! time), preprocesses both sides with one shared gate, attends over
//! the first sequence, compares column-wise, aggregates the comparison
//! columns with per-window convolutions under max-over-time pooling,
//! and hands the pooled vector to a selection or classification head.
//! In the three-sequence shape both the question and each candidate are
//! matched against the plot, and their comparison columns are stacked
//! before aggregation; the question-side matching is computed once and
//! shared across candidates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::compare::{compare, ComparisonKind, ComparisonParams, ComparisonVars};
use crate::data::{Label, MatchInstance, TaskShape};
use crate::embedding::{embedding_dropout, EmbeddingTable, Vocabulary};
use crate::error::{Error, Result};
use crate::layers::{
    attend, glorot_matrix, glorot_vector, preprocess, AttentionParams, AttentionVars,
    PreprocessParams, PreprocessVars,
};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Per-window convolution filters. Filter banks always emit `hidden`
/// channels, so the aggregated vector has length `windows.len() * hidden`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorParams {
    pub windows: Vec<usize>,
    pub filters: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

impl AggregatorParams {
    pub fn init<R: Rng>(windows: &[usize], in_dim: usize, out_dim: usize, rng: &mut R) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("aggregator needs at least one window size".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for &w in windows {
            if w < 1 {
                return Err(Error::Config("window sizes must be at least 1".into()));
            }
            if !seen.insert(w) {
                return Err(Error::Config(format!("duplicate window size {w}")));
            }
        }
        let filters = windows
            .iter()
            .map(|&w| glorot_matrix(out_dim, w * in_dim, rng))
            .collect();
        let biases = windows.iter().map(|_| Tensor::zeros(&[out_dim])).collect();
        Ok(AggregatorParams {
            windows: windows.to_vec(),
            filters,
            biases,
        })
    }

    /// Length of the aggregated output vector.
    pub fn output_dim(&self) -> usize {
        self.windows.len() * self.filters[0].rows()
    }

    pub fn bind(&self, tape: &mut Tape) -> AggregatorVars {
        let filters = self
            .windows
            .iter()
            .zip(&self.filters)
            .map(|(w, f)| tape.param(format!("agg.win{w}.filters"), f))
            .collect();
        let biases = self
            .windows
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| tape.param(format!("agg.win{w}.bias"), b))
            .collect();
        AggregatorVars {
            windows: self.windows.clone(),
            filters,
            biases,
        }
    }
}

/// Conv nodes recorded during a forward pass, one `(window, node)`
/// pair per filter bank.
pub type ConvTrace = Vec<(usize, Var)>;

#[derive(Clone, Debug)]
pub struct AggregatorVars {
    pub windows: Vec<usize>,
    pub filters: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Aggregate comparison columns into one fixed-length vector: one
/// ReLU convolution + max-over-time pool per window size, concatenated
/// in window-list order.
pub fn aggregate(tape: &mut Tape, t: Var, agg: &AggregatorVars) -> Result<Var> {
    let (r, _) = aggregate_traced(tape, t, agg)?;
    Ok(r)
}

/// Like [`aggregate`], also returning the per-window conv nodes so
/// callers can read back pooling positions.
pub fn aggregate_traced(
    tape: &mut Tape,
    t: Var,
    agg: &AggregatorVars,
) -> Result<(Var, ConvTrace)> {
    if agg.windows.is_empty() {
        return Err(Error::Config("aggregator needs at least one window size".into()));
    }
    let mut pooled = Vec::with_capacity(agg.windows.len());
    let mut trace = Vec::with_capacity(agg.windows.len());
    for ((&w, &f), &b) in agg.windows.iter().zip(&agg.filters).zip(&agg.biases) {
        let conv = tape.conv_maxpool(t, f, w, b)?;
        pooled.push(conv);
        trace.push((w, conv));
    }
    let r = tape.concat(&pooled)?;
    Ok((r, trace))
}

/// Parameters of the K-way candidate selection head.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionHeadParams {
    pub w_s: Tensor,
    pub w: Tensor,
    pub b_s: Tensor,
    /// Scalar bias, stored as a 1-element tensor.
    pub b: Tensor,
}

impl SelectionHeadParams {
    pub fn init<R: Rng>(hidden: usize, agg_dim: usize, rng: &mut R) -> Self {
        SelectionHeadParams {
            w_s: glorot_matrix(hidden, agg_dim, rng),
            w: glorot_vector(hidden, rng),
            b_s: Tensor::zeros(&[hidden]),
            b: Tensor::zeros(&[1]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> HeadVars {
        HeadVars::Selection {
            w_s: tape.param("head.w_s", &self.w_s),
            w: tape.param("head.w", &self.w),
            b_s: tape.param("head.b_s", &self.b_s),
            b: tape.param("head.b", &self.b),
        }
    }
}

/// Parameters of the pair classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHeadParams {
    pub w_c: Tensor,
    pub b_c: Tensor,
}

impl ClassifierHeadParams {
    pub fn init<R: Rng>(classes: usize, agg_dim: usize, rng: &mut R) -> Self {
        ClassifierHeadParams {
            w_c: glorot_matrix(classes, agg_dim, rng),
            b_c: Tensor::zeros(&[classes]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> HeadVars {
        HeadVars::Classifier {
            w_c: tape.param("head.w_c", &self.w_c),
            b_c: tape.param("head.b_c", &self.b_c),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadParams {
    Selection(SelectionHeadParams),
    Classifier(ClassifierHeadParams),
}

#[derive(Clone, Copy, Debug)]
pub enum HeadVars {
    Selection { w_s: Var, w: Var, b_s: Var, b: Var },
    Classifier { w_c: Var, b_c: Var },
}

/// Probability of each of the K candidates from their aggregated
/// vectors (the columns of `r_mat`): `softmax(w^T tanh(W_s R + b_s) + b)`.
pub fn select_candidate(tape: &mut Tape, r_mat: Var, head: &HeadVars) -> Result<Var> {
    let (w_s, w, b_s, b) = match head {
        HeadVars::Selection { w_s, w, b_s, b } => (*w_s, *w, *b_s, *b),
        HeadVars::Classifier { .. } => {
            return Err(Error::Config(
                "select_candidate called with a classifier head".into(),
            ))
        }
    };
    let rv = tape.value(r_mat);
    if !rv.is_matrix() {
        return Err(Error::Dimension(format!(
            "select_candidate over {}",
            rv.shape_string()
        )));
    }
    let k = rv.cols();
    if k == 0 {
        return Err(Error::Contract("selection over zero candidates".into()));
    }
    let hidden = tape.value(w).numel();
    let proj = tape.matmul(w_s, r_mat)?;
    let proj = tape.add_broadcast(proj, b_s)?;
    let act = tape.tanh(proj);
    let w_row = tape.reshape(w, &[1, hidden])?;
    let scores = tape.matmul(w_row, act)?;
    let scores = tape.add_broadcast(scores, b)?;
    let scores_col = tape.reshape(scores, &[k, 1])?;
    let probs = tape.softmax_columns(scores_col)?;
    tape.reshape(probs, &[k])
}

/// Class distribution from one aggregated vector: `softmax(W_c r + b_c)`.
pub fn classify(tape: &mut Tape, r: Var, head: &HeadVars) -> Result<Var> {
    let (w_c, b_c) = match head {
        HeadVars::Classifier { w_c, b_c } => (*w_c, *b_c),
        HeadVars::Selection { .. } => {
            return Err(Error::Config("classify called with a selection head".into()))
        }
    };
    let rv = tape.value(r);
    let classes = tape.value(w_c).rows();
    let agg_dim = tape.value(w_c).cols();
    if !rv.is_vector() || rv.numel() != agg_dim {
        return Err(Error::Dimension(format!(
            "classify input {} does not match weights {}",
            rv.shape_string(),
            tape.value(w_c).shape_string()
        )));
    }
    let col = tape.reshape(r, &[agg_dim, 1])?;
    let logits = tape.matmul(w_c, col)?;
    let logits = tape.add_broadcast(logits, b_c)?;
    let probs = tape.softmax_columns(logits)?;
    tape.reshape(probs, &[classes])
}

/// Model hyper-parameters, fixed at initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub comparison: ComparisonKind,
    pub windows: Vec<usize>,
    pub hidden_dim: usize,
    pub task_shape: TaskShape,
    /// Classes of the pair-classification head; ignored by selection tasks.
    pub num_classes: usize,
}

/// Every learned weight of the model, each housed and named. The
/// frozen embedding table lives outside, on [`Model`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub comparison: ComparisonKind,
    pub windows: Vec<usize>,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub task_shape: TaskShape,
    pub num_classes: usize,
    pub pre: PreprocessParams,
    pub att: AttentionParams,
    pub cmp: ComparisonParams,
    pub agg: AggregatorParams,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn init<R: Rng>(cfg: &ModelConfig, embed_dim: usize, rng: &mut R) -> Result<Self> {
        if cfg.hidden_dim < 1 {
            return Err(Error::Config("hidden dimension must be at least 1".into()));
        }
        if embed_dim < 1 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        let l = cfg.hidden_dim;
        let cmp_dim = cfg.comparison.output_dim(l);
        let agg_in = match cfg.task_shape {
            TaskShape::SelectFromKWithPlot => 2 * cmp_dim,
            _ => cmp_dim,
        };
        let agg = AggregatorParams::init(&cfg.windows, agg_in, l, rng)?;
        let agg_dim = agg.output_dim();
        let head = match cfg.task_shape {
            TaskShape::ClassifyPair => {
                if cfg.num_classes < 2 {
                    return Err(Error::Config("classification needs at least 2 classes".into()));
                }
                HeadParams::Classifier(ClassifierHeadParams::init(cfg.num_classes, agg_dim, rng))
            }
            _ => HeadParams::Selection(SelectionHeadParams::init(l, agg_dim, rng)),
        };
        Ok(ModelParams {
            comparison: cfg.comparison,
            windows: cfg.windows.clone(),
            hidden_dim: l,
            embed_dim,
            task_shape: cfg.task_shape,
            num_classes: cfg.num_classes,
            pre: PreprocessParams::init(l, embed_dim, rng),
            att: AttentionParams::init(l, rng),
            cmp: ComparisonParams::init(cfg.comparison, l, rng),
            agg,
            head,
        })
    }

    /// All parameter tensors with their names, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("pre.w_i".into(), &self.pre.w_i),
            ("pre.w_u".into(), &self.pre.w_u),
            ("pre.b_i".into(), &self.pre.b_i),
            ("pre.b_u".into(), &self.pre.b_u),
            ("att.w_g".into(), &self.att.w_g),
            ("att.b_g".into(), &self.att.b_g),
        ];
        match &self.cmp {
            ComparisonParams::None => {}
            ComparisonParams::Affine { w, b } => {
                out.push(("cmp.w".into(), w));
                out.push(("cmp.b".into(), b));
            }
            ComparisonParams::Bilinear { t, b } => {
                out.push(("cmp.t".into(), t));
                out.push(("cmp.b".into(), b));
            }
        }
        for ((w, f), b) in self.agg.windows.iter().zip(&self.agg.filters).zip(&self.agg.biases) {
            out.push((format!("agg.win{w}.filters"), f));
            out.push((format!("agg.win{w}.bias"), b));
        }
        match &self.head {
            HeadParams::Selection(h) => {
                out.push(("head.w_s".into(), &h.w_s));
                out.push(("head.w".into(), &h.w));
                out.push(("head.b_s".into(), &h.b_s));
                out.push(("head.b".into(), &h.b));
            }
            HeadParams::Classifier(h) => {
                out.push(("head.w_c".into(), &h.w_c));
                out.push(("head.b_c".into(), &h.b_c));
            }
        }
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("pre.w_i".into(), &mut self.pre.w_i),
            ("pre.w_u".into(), &mut self.pre.w_u),
            ("pre.b_i".into(), &mut self.pre.b_i),
            ("pre.b_u".into(), &mut self.pre.b_u),
            ("att.w_g".into(), &mut self.att.w_g),
            ("att.b_g".into(), &mut self.att.b_g),
        ];
        match &mut self.cmp {
            ComparisonParams::None => {}
            ComparisonParams::Affine { w, b } => {
                out.push(("cmp.w".into(), w));
                out.push(("cmp.b".into(), b));
            }
            ComparisonParams::Bilinear { t, b } => {
                out.push(("cmp.t".into(), t));
                out.push(("cmp.b".into(), b));
            }
        }
        for ((w, f), b) in self
            .agg
            .windows
            .iter()
            .zip(self.agg.filters.iter_mut())
            .zip(self.agg.biases.iter_mut())
        {
            out.push((format!("agg.win{w}.filters"), f));
            out.push((format!("agg.win{w}.bias"), b));
        }
        match &mut self.head {
            HeadParams::Selection(h) => {
                out.push(("head.w_s".into(), &mut h.w_s));
                out.push(("head.w".into(), &mut h.w));
                out.push(("head.b_s".into(), &mut h.b_s));
                out.push(("head.b".into(), &mut h.b));
            }
            HeadParams::Classifier(h) => {
                out.push(("head.w_c".into(), &mut h.w_c));
                out.push(("head.b_c".into(), &mut h.b_c));
            }
        }
        out
    }

    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        ModelVars {
            pre: self.pre.bind(tape),
            att: self.att.bind(tape),
            cmp: self.cmp.bind(tape),
            agg: self.agg.bind(tape),
            head: match &self.head {
                HeadParams::Selection(h) => h.bind(tape),
                HeadParams::Classifier(h) => h.bind(tape),
            },
        }
    }
}

/// Tape handles for one bound parameter set.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub pre: PreprocessVars,
    pub att: AttentionVars,
    pub cmp: ComparisonVars,
    pub agg: AggregatorVars,
    pub head: HeadVars,
}

/// Training/evaluation mode for a forward pass. Dropout only applies
/// while a rate and RNG are present.
pub struct ForwardCtx<'r> {
    dropout: Option<(f64, &'r mut ChaCha20Rng)>,
}

impl ForwardCtx<'static> {
    pub fn eval() -> Self {
        ForwardCtx { dropout: None }
    }
}

impl<'r> ForwardCtx<'r> {
    pub fn train(rate: f64, rng: &'r mut ChaCha20Rng) -> Self {
        ForwardCtx {
            dropout: Some((rate, rng)),
        }
    }

    fn apply_dropout(&mut self, x: Tensor) -> Result<Tensor> {
        match &mut self.dropout {
            Some((rate, rng)) => embedding_dropout(&x, *rate, true, *rng),
            None => Ok(x),
        }
    }
}

/// Pooling maxima of one filter bank, for activation inspection.
#[derive(Clone, Debug, Serialize)]
pub struct WindowMaxima {
    pub window: usize,
    /// Winning window start position per output dimension.
    pub positions: Vec<usize>,
    /// Pooled value per output dimension.
    pub values: Vec<f64>,
    /// Whether the winning window extends past the real sequence into
    /// the zero padding.
    pub covers_pad: Vec<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateActivations {
    pub tokens: Vec<String>,
    /// Length of the sequence the convolution ran over (the candidate
    /// for two-sequence tasks, the plot for three-sequence tasks).
    pub sequence_len: usize,
    pub windows: Vec<WindowMaxima>,
}

/// Everything needed to redraw a max-activation heat row per example.
#[derive(Clone, Debug, Serialize)]
pub struct InstanceActivations {
    pub id: String,
    pub question: Vec<String>,
    pub plot: Option<Vec<String>>,
    pub candidates: Vec<CandidateActivations>,
    pub probs: Vec<f64>,
}

/// The model: learned parameters plus the frozen embedding table and
/// the vocabulary it is indexed by.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: ModelParams,
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
}

/// Argmax with ties broken toward the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Initialize all parameters from a seeded RNG. The embedding table
    /// is stored as-is and never updated.
    pub fn init(
        cfg: &ModelConfig,
        vocab: Vocabulary,
        embeddings: EmbeddingTable,
        seed: u64,
    ) -> Result<Self> {
        if embeddings.vocab_size() != vocab.len() {
            return Err(Error::Config(format!(
                "embedding table covers {} tokens but the vocabulary has {}",
                embeddings.vocab_size(),
                vocab.len()
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let params = ModelParams::init(cfg, embeddings.dim(), &mut rng)?;
        Ok(Model {
            params,
            vocab,
            embeddings,
        })
    }

    fn embed(
        &self,
        tape: &mut Tape,
        tokens: &[String],
        side: &str,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        if tokens.is_empty() {
            return Err(Error::Input(format!("empty {side} sequence")));
        }
        let indices = self.vocab.encode(tokens);
        let embedded = self.embeddings.lookup(&indices)?;
        let embedded = ctx.apply_dropout(embedded)?;
        Ok(tape.constant(embedded))
    }

    /// Match an attended sequence against a positions sequence (both
    /// already preprocessed), producing the comparison matrix with one
    /// column per position of the second sequence.
    fn compare_against(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        attended_bar: Var,
        positions_bar: Var,
    ) -> Result<Var> {
        let (_, h) = attend(tape, attended_bar, positions_bar, &vars.att, None)?;
        compare(tape, self.params.comparison, &vars.cmp, positions_bar, h)
    }

    /// Two-sequence forward pass to the aggregated vector `r`.
    pub fn forward_two_seq(
        &self,
        tape: &mut Tape,
        q_tokens: &[String],
        a_tokens: &[String],
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let vars = self.params.bind(tape);
        let x_q = self.embed(tape, q_tokens, "first (question/premise)", ctx)?;
        let x_a = self.embed(tape, a_tokens, "second (answer/hypothesis)", ctx)?;
        let qbar = preprocess(tape, x_q, &vars.pre)?;
        let abar = preprocess(tape, x_a, &vars.pre)?;
        let t = self.compare_against(tape, &vars, qbar, abar)?;
        aggregate(tape, t, &vars.agg)
    }

    /// Three-sequence forward pass: returns the `agg_dim x K` matrix of
    /// per-candidate aggregated vectors.
    pub fn forward_three_seq(
        &self,
        tape: &mut Tape,
        plot_tokens: &[String],
        q_tokens: &[String],
        candidates: &[Vec<String>],
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let vars = self.params.bind(tape);
        let (r_mat, _) = self.three_seq_candidates(tape, &vars, plot_tokens, q_tokens, candidates, ctx)?;
        Ok(r_mat)
    }

    fn three_seq_candidates(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        plot_tokens: &[String],
        q_tokens: &[String],
        candidates: &[Vec<String>],
        ctx: &mut ForwardCtx,
    ) -> Result<(Var, Vec<ConvTrace>)> {
        if plot_tokens.is_empty() {
            return Err(Error::Input("empty plot sequence".into()));
        }
        if candidates.is_empty() {
            return Err(Error::Input("no candidates to match".into()));
        }
        let x_p = self.embed(tape, plot_tokens, "plot", ctx)?;
        let x_q = self.embed(tape, q_tokens, "question", ctx)?;
        let pbar = preprocess(tape, x_p, &vars.pre)?;
        let qbar = preprocess(tape, x_q, &vars.pre)?;
        // Question-vs-plot comparison columns, shared by all candidates.
        let t_q = self.compare_against(tape, vars, qbar, pbar)?;

        let mut columns = Vec::with_capacity(candidates.len());
        let mut traces = Vec::with_capacity(candidates.len());
        for (k, cand) in candidates.iter().enumerate() {
            let x_a = self.embed(tape, cand, &format!("candidate {k}"), ctx)?;
            let abar = preprocess(tape, x_a, &vars.pre)?;
            let t_a = self.compare_against(tape, vars, abar, pbar)?;
            let stacked = tape.concat_rows(t_q, t_a)?;
            let (r_k, trace) = aggregate_traced(tape, stacked, &vars.agg)?;
            columns.push(r_k);
            traces.push(trace);
        }
        let r_mat = tape.stack_columns(&columns)?;
        Ok((r_mat, traces))
    }

    fn two_seq_candidates(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        q_tokens: &[String],
        candidates: &[Vec<String>],
        ctx: &mut ForwardCtx,
    ) -> Result<(Var, Vec<ConvTrace>)> {
        if candidates.is_empty() {
            return Err(Error::Input("no candidates to match".into()));
        }
        let x_q = self.embed(tape, q_tokens, "question", ctx)?;
        let qbar = preprocess(tape, x_q, &vars.pre)?;
        let mut columns = Vec::with_capacity(candidates.len());
        let mut traces = Vec::with_capacity(candidates.len());
        for (k, cand) in candidates.iter().enumerate() {
            let x_a = self.embed(tape, cand, &format!("candidate {k}"), ctx)?;
            let abar = preprocess(tape, x_a, &vars.pre)?;
            let t = self.compare_against(tape, vars, qbar, abar)?;
            let (r_k, trace) = aggregate_traced(tape, t, &vars.agg)?;
            columns.push(r_k);
            traces.push(trace);
        }
        let r_mat = tape.stack_columns(&columns)?;
        Ok((r_mat, traces))
    }

    fn probs_traced(
        &self,
        tape: &mut Tape,
        inst: &MatchInstance,
        ctx: &mut ForwardCtx,
    ) -> Result<(Var, Vec<ConvTrace>)> {
        let vars = self.params.bind(tape);
        match self.params.task_shape {
            TaskShape::ClassifyPair => {
                let x_q = self.embed(tape, &inst.question, "premise", ctx)?;
                let x_a = self.embed(tape, &inst.candidates[0], "hypothesis", ctx)?;
                let qbar = preprocess(tape, x_q, &vars.pre)?;
                let abar = preprocess(tape, x_a, &vars.pre)?;
                let t = self.compare_against(tape, &vars, qbar, abar)?;
                let (r, trace) = aggregate_traced(tape, t, &vars.agg)?;
                let probs = classify(tape, r, &vars.head)?;
                Ok((probs, vec![trace]))
            }
            TaskShape::SelectFromK => {
                let (r_mat, traces) =
                    self.two_seq_candidates(tape, &vars, &inst.question, &inst.candidates, ctx)?;
                let probs = select_candidate(tape, r_mat, &vars.head)?;
                Ok((probs, traces))
            }
            TaskShape::SelectFromKWithPlot => {
                let plot = inst
                    .plot
                    .as_ref()
                    .ok_or_else(|| Error::Input(format!("instance {} has no plot", inst.id)))?;
                let (r_mat, traces) = self.three_seq_candidates(
                    tape,
                    &vars,
                    plot,
                    &inst.question,
                    &inst.candidates,
                    ctx,
                )?;
                let probs = select_candidate(tape, r_mat, &vars.head)?;
                Ok((probs, traces))
            }
        }
    }

    /// Class or candidate probabilities for one instance.
    pub fn instance_probs(
        &self,
        tape: &mut Tape,
        inst: &MatchInstance,
        ctx: &mut ForwardCtx,
    ) -> Result<Var> {
        let (probs, _) = self.probs_traced(tape, inst, ctx)?;
        Ok(probs)
    }

    /// Cross-entropy loss node for one instance, plus the probability
    /// node. With multiple correct candidates the loss is the negative
    /// log of their total probability.
    pub fn instance_loss(
        &self,
        tape: &mut Tape,
        inst: &MatchInstance,
        ctx: &mut ForwardCtx,
    ) -> Result<(Var, Var)> {
        let probs = self.instance_probs(tape, inst, ctx)?;
        let targets = match &inst.label {
            Label::Class(c) => vec![*c],
            Label::Correct(set) => set.clone(),
        };
        let loss = tape.neg_log_picked(probs, &targets)?;
        Ok((loss, probs))
    }

    /// Deterministic evaluation-mode prediction.
    pub fn predict(&self, inst: &MatchInstance) -> Result<Prediction> {
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx::eval();
        let probs = self.instance_probs(&mut tape, inst, &mut ctx)?;
        let probs = tape.value(probs).data().to_vec();
        Ok(Prediction {
            index: argmax(&probs),
            probs,
        })
    }

    /// Evaluation-mode forward pass that records, per candidate and per
    /// window size, which sequence position produced each pooled
    /// maximum.
    pub fn activations(&self, inst: &MatchInstance) -> Result<InstanceActivations> {
        let mut tape = Tape::new();
        let mut ctx = ForwardCtx::eval();
        let (probs, traces) = self.probs_traced(&mut tape, inst, &mut ctx)?;
        let probs = tape.value(probs).data().to_vec();

        let seq_len = |k: usize| match self.params.task_shape {
            TaskShape::SelectFromKWithPlot => inst.plot.as_ref().map(|p| p.len()).unwrap_or(0),
            _ => inst.candidates[k].len(),
        };
        let candidates = traces
            .into_iter()
            .enumerate()
            .map(|(k, trace)| {
                let len = seq_len(k);
                let windows = trace
                    .into_iter()
                    .map(|(window, conv)| {
                        let positions = tape
                            .conv_argmax(conv)
                            .expect("trace nodes are conv nodes")
                            .to_vec();
                        let values = tape.value(conv).data().to_vec();
                        let covers_pad = positions.iter().map(|&p| p + window > len).collect();
                        WindowMaxima {
                            window,
                            positions,
                            values,
                            covers_pad,
                        }
                    })
                    .collect();
                CandidateActivations {
                    tokens: inst.candidates[k].clone(),
                    sequence_len: len,
                    windows,
                }
            })
            .collect();
        Ok(InstanceActivations {
            id: inst.id.clone(),
            question: inst.question.clone(),
            plot: inst.plot.clone(),
            candidates,
            probs,
        })
    }
}

/// Outcome of one evaluation-mode prediction.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub index: usize,
    pub probs: Vec<f64>,
}
