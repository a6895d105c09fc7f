//! Matching-phase sequential recommendation with counterfactual sequence
//! synthesis.
//!
//! The baseline model embeds items with a lookup table and encodes a user
//! by mean-pooling the embeddings of their behaviors (or of attention-pooled
//! interest concepts) and passing the result through a small MLP. Training
//! optionally identifies indispensable and dispensable concepts in each
//! behavior sequence, replaces a fraction of them with substitutes drawn
//! from a FIFO concept memory, and contrasts the resulting counterfactual
//! user representations with the observed one and with the target item.
//!
//! Modules, bottom up:
//! - [`numkit`]: dense kernels, reverse-mode tape, Adam, gradient checking.
//! - [`data`]: interaction logs, k-core filtering, splits, example windows,
//!   synthetic data.
//! - [`model`]: parameters, encoders, sampled softmax, checkpoints,
//!   popularity baseline.
//! - [`causal`]: concept scoring and splitting, concept memory,
//!   counterfactual transformation and synthesis.
//! - [`losses`]: the two contrastive objectives and their combination.
//! - [`eval`]: exact top-N retrieval and Recall/NDCG/HitRate.
//! - [`trainer`]: the training loop.

pub mod causal;
pub mod data;
mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numkit;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
