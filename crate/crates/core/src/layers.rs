//! Preprocessing and attention layers.
//!
//! Preprocessing is a recurrence-free gate: each embedded column is
//! mapped to `sigmoid(W_i x + b_i) * tanh(W_u x + b_u)` independently of
//! its neighbours, with one parameter set shared by both sequences.
//! Attention is one-directional: for every position of the second
//! sequence it produces a softmax-weighted combination of the first
//! sequence's preprocessed columns.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Uniform init in `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`.
pub(crate) fn glorot_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::random_uniform(&[rows, cols], -limit, limit, rng)
}

pub(crate) fn glorot_vector<R: Rng>(len: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (len + 1) as f64).sqrt();
    Tensor::random_uniform(&[len], -limit, limit, rng)
}

/// Gate parameters, shared between both sides of a matching.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessParams {
    pub w_i: Tensor,
    pub w_u: Tensor,
    pub b_i: Tensor,
    pub b_u: Tensor,
}

impl PreprocessParams {
    pub fn init<R: Rng>(hidden: usize, embed: usize, rng: &mut R) -> Self {
        PreprocessParams {
            w_i: glorot_matrix(hidden, embed, rng),
            w_u: glorot_matrix(hidden, embed, rng),
            b_i: Tensor::zeros(&[hidden]),
            b_u: Tensor::zeros(&[hidden]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_i.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.w_i.cols()
    }

    pub fn bind(&self, tape: &mut Tape) -> PreprocessVars {
        PreprocessVars {
            w_i: tape.param("pre.w_i", &self.w_i),
            w_u: tape.param("pre.w_u", &self.w_u),
            b_i: tape.param("pre.b_i", &self.b_i),
            b_u: tape.param("pre.b_u", &self.b_u),
        }
    }
}

/// Tape handles for bound preprocessing parameters.
#[derive(Clone, Copy, Debug)]
pub struct PreprocessVars {
    pub w_i: Var,
    pub w_u: Var,
    pub b_i: Var,
    pub b_u: Var,
}

/// Gated projection of an embedded sequence: `d x L` in, `l x L` out.
/// Column `j` of the output depends only on column `j` of the input.
pub fn preprocess(tape: &mut Tape, x: Var, p: &PreprocessVars) -> Result<Var> {
    let xv = tape.value(x);
    let wv = tape.value(p.w_i);
    if !xv.is_matrix() || xv.rows() != wv.cols() {
        return Err(Error::Dimension(format!(
            "preprocess input {} does not match weights {}",
            tape.value(x).shape_string(),
            tape.value(p.w_i).shape_string()
        )));
    }
    let gate_pre = tape.matmul(p.w_i, x)?;
    let gate_pre = tape.add_broadcast(gate_pre, p.b_i)?;
    let gate = tape.sigmoid(gate_pre);
    let cand_pre = tape.matmul(p.w_u, x)?;
    let cand_pre = tape.add_broadcast(cand_pre, p.b_u)?;
    let cand = tape.tanh(cand_pre);
    tape.mul(gate, cand)
}

/// Attention parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionParams {
    pub w_g: Tensor,
    pub b_g: Tensor,
}

/// Initial weight placed on the diagonal of the attention projection.
/// Starting near the identity biases attention toward matching a
/// position with its look-alike on the other side, which the gradient
/// then refines; a plain small random init leaves early attention so
/// diffuse that free-form comparison functions latch onto token
/// identities instead of the matching structure.
const ATTENTION_IDENTITY_INIT: f64 = 2.0;

impl AttentionParams {
    pub fn init<R: Rng>(hidden: usize, rng: &mut R) -> Self {
        let mut w_g = glorot_matrix(hidden, hidden, rng);
        for i in 0..hidden {
            let v = w_g.at(i, i) + ATTENTION_IDENTITY_INIT;
            w_g.set(i, i, v);
        }
        AttentionParams {
            w_g,
            b_g: Tensor::zeros(&[hidden]),
        }
    }

    pub fn bind(&self, tape: &mut Tape) -> AttentionVars {
        AttentionVars {
            w_g: tape.param("att.w_g", &self.w_g),
            b_g: tape.param("att.b_g", &self.b_g),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionVars {
    pub w_g: Var,
    pub b_g: Var,
}

/// Score used to exclude padded positions from the softmax. After the
/// per-column max subtraction this underflows to an exact zero weight.
const MASKED_SCORE: f64 = -1e30;

/// One-directional attention over the first sequence.
///
/// Returns `(G, H)`: `G` is the `Q x A` weight matrix whose columns each
/// sum to 1 (softmax over the first-sequence axis), and `H` is `l x A`
/// with column `j` the G-weighted sum of `qbar`'s columns. An optional
/// mask marks which `qbar` positions are real; masked positions get an
/// effectively minus-infinite score. At least one position must remain.
pub fn attend(
    tape: &mut Tape,
    qbar: Var,
    abar: Var,
    p: &AttentionVars,
    q_mask: Option<&[bool]>,
) -> Result<(Var, Var)> {
    let (qv, av) = (tape.value(qbar), tape.value(abar));
    if !qv.is_matrix() || !av.is_matrix() || qv.rows() != av.rows() {
        return Err(Error::Dimension(format!(
            "attend over {} and {}",
            qv.shape_string(),
            av.shape_string()
        )));
    }
    let (q_len, a_len) = (qv.cols(), av.cols());
    if q_len == 0 {
        return Err(Error::Contract(
            "attention over an empty first sequence".into(),
        ));
    }
    if let Some(mask) = q_mask {
        if mask.len() != q_len {
            return Err(Error::Dimension(format!(
                "attention mask length {} does not match sequence length {q_len}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::Contract("attention mask excludes every position".into()));
        }
    }

    let projected = tape.matmul(p.w_g, qbar)?;
    let projected = tape.add_broadcast(projected, p.b_g)?;
    let projected_t = tape.transpose(projected)?;
    let mut scores = tape.matmul(projected_t, abar)?;
    if let Some(mask) = q_mask {
        let mut penalty = Tensor::zeros(&[q_len, a_len]);
        for (i, &keep) in mask.iter().enumerate() {
            if !keep {
                for j in 0..a_len {
                    penalty.set(i, j, MASKED_SCORE);
                }
            }
        }
        let penalty = tape.constant(penalty);
        scores = tape.add(scores, penalty)?;
    }
    let g = tape.softmax_columns(scores)?;
    let h = tape.matmul(qbar, g)?;
    Ok((g, h))
}
