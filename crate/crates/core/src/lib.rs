//! A compare-aggregate engine for matching token sequences.
//!
//! The model matches two (or three) sequences by comparing small units
//! instead of whole-sequence vectors: embedded tokens pass through a
//! gated preprocessing layer, an attention layer pairs every position
//! of one sequence with a weighted summary of the other, a pluggable
//! word-level comparison function turns each pair into a vector, and a
//! one-layer CNN with max-over-time pooling aggregates those vectors
//! for a selection or classification head.
//!
//! Six comparison functions are available behind one interface: `nn`,
//! `ntn`, `euccos`, `sub`, `mult` and `submult-nn`. Everything runs on
//! a small tape-based reverse-mode autodiff engine in double precision,
//! trains with ADAMAX over frozen word embeddings, and is fully
//! deterministic given a seed.
//!
//! ```
//! use cmpagg::compare::ComparisonKind;
//! use cmpagg::data::{generate_synthetic, SyntheticTask, TaskShape};
//! use cmpagg::embedding::{EmbeddingTable, Vocabulary};
//! use cmpagg::model::{Model, ModelConfig};
//! use cmpagg::train::{train, eval_accuracy, TrainConfig};
//!
//! let data = generate_synthetic(SyntheticTask::Containment, 30, 64, 7)?;
//! let vocab = Vocabulary::from_tokens(data.iter().flat_map(|i| i.all_tokens()));
//! let embeddings = EmbeddingTable::random(8, &vocab, 7)?;
//!
//! let cfg = TrainConfig {
//!     comparison: ComparisonKind::Sub,
//!     windows: vec![1, 2],
//!     hidden_dim: 8,
//!     max_epochs: 5,
//!     seed: 7,
//!     ..TrainConfig::default()
//! };
//! let model_cfg = ModelConfig {
//!     comparison: cfg.comparison,
//!     windows: cfg.windows.clone(),
//!     hidden_dim: cfg.hidden_dim,
//!     task_shape: TaskShape::SelectFromK,
//!     num_classes: 2,
//! };
//! let mut model = Model::init(&model_cfg, vocab, embeddings, cfg.seed)?;
//! let outcome = train(&cfg, &mut model, &data)?;
//! assert_eq!(outcome.history.len(), 5);
//! let acc = eval_accuracy(&model, &data)?;
//! assert!(acc > 0.0);
//! # Ok::<(), cmpagg::Error>(())
//! ```

pub mod compare;
pub mod data;
pub mod embedding;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use compare::ComparisonKind;
pub use data::{MatchInstance, TaskShape};
pub use error::{Error, Result};
pub use model::{Model, ModelConfig};
pub use tape::{GradientMap, Tape, Var};
pub use tensor::Tensor;
pub use train::{Checkpoint, TrainConfig};

// The guide chapters double as doc-tests so their snippets cannot rot.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/tensors-and-gradients.md")]
    mod tensors_and_gradients {}
    #[doc = include_str!("../../../book/src/matching-model.md")]
    mod matching_model {}
    #[doc = include_str!("../../../book/src/comparison-functions.md")]
    mod comparison_functions {}
    #[doc = include_str!("../../../book/src/aggregation-and-heads.md")]
    mod aggregation_and_heads {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/data-and-metrics.md")]
    mod data_and_metrics {}
}
