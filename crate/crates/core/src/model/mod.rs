//! The matching model: a lookup item encoder and a mean-pooling MLP user
//! encoder, optionally fed with attention-pooled interest concepts.
//!
//! Encoder functions operate on a [`Tape`] borrowed from
//! [`ModelParams::set`]; parameter tensors are addressed by the fixed ids
//! below.

mod checkpoint;
mod popularity;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, Dense1, Dense2, ParamSet, Tape, Var};
use crate::rng;

pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, CheckpointHeader, TensorInfo};
pub use popularity::Popularity;

pub const ITEM_EMBEDDINGS: usize = 0;
pub const MLP_WEIGHTS: [usize; 3] = [1, 3, 5];
pub const MLP_BIASES: [usize; 3] = [2, 4, 6];
pub const ATTN_W1: usize = 7;
pub const ATTN_W2: usize = 8;

/// Which concepts feed the user encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Behaviors are pooled directly; counterfactuals act on items.
    Item,
    /// Attention-pooled concepts are pooled; counterfactuals act on them.
    Interest,
    /// Interest-level encoder; counterfactuals act on either level.
    Hierarchical,
}

impl Variant {
    pub fn encoder(self) -> EncoderLevel {
        match self {
            Variant::Item => EncoderLevel::Item,
            Variant::Interest | Variant::Hierarchical => EncoderLevel::Interest,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Item => "item",
            Variant::Interest => "interest",
            Variant::Hierarchical => "hierarchical",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "item" => Ok(Variant::Item),
            "interest" => Ok(Variant::Interest),
            "hierarchical" | "h" => Ok(Variant::Hierarchical),
            _ => Err(Error::Config(format!("unknown variant `{s}`"))),
        }
    }
}

/// Input granularity of the user encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncoderLevel {
    Item,
    Interest,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_items: usize,
    pub dim: usize,
    pub hidden: usize,
    pub attn_dim: usize,
    pub n_concepts: usize,
}

impl ModelConfig {
    pub fn new(n_items: usize) -> Self {
        Self {
            n_items,
            dim: 64,
            hidden: 256,
            attn_dim: 64,
            n_concepts: 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_items == 0 {
            return Err(Error::EmptyDataset);
        }
        for (name, v) in [
            ("dim", self.dim),
            ("hidden", self.hidden),
            ("attn_dim", self.attn_dim),
            ("n_concepts", self.n_concepts),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// `(name, rows, cols)` of every tensor in declaration order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let d = self.dim;
        let h = self.hidden;
        vec![
            ("item_embeddings".into(), self.n_items, d),
            ("mlp0.weight".into(), h, d),
            ("mlp0.bias".into(), 1, h),
            ("mlp1.weight".into(), h, h),
            ("mlp1.bias".into(), 1, h),
            ("mlp2.weight".into(), d, h),
            ("mlp2.bias".into(), 1, d),
            ("attn.w1".into(), self.attn_dim, d),
            ("attn.w2".into(), self.n_concepts, self.attn_dim),
        ]
    }
}

/// All trainable tensors plus the configuration that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub seed: u64,
    pub set: ParamSet,
}

impl ModelParams {
    /// Weights and embeddings uniform in `[−1/√d, 1/√d]`, biases zero.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let bound = 1.0 / (config.dim as f64).sqrt();
        let mut rng = rng::stream(seed, &[0x1a17]);
        let mut set = ParamSet::new();
        for (name, rows, cols) in config.layout() {
            let data = if name.ends_with(".bias") {
                vec![0.0; rows * cols]
            } else {
                (0..rows * cols)
                    .map(|_| rng.random_range(-bound..=bound))
                    .collect()
            };
            set.push(name, Dense2::from_vec(rows, cols, data)?);
        }
        Ok(Self { config, seed, set })
    }

    pub fn from_parts(config: ModelConfig, seed: u64, set: ParamSet) -> Result<Self> {
        let layout = config.layout();
        if layout.len() != set.len() {
            return Err(Error::Config(format!(
                "expected {} tensors, found {}",
                layout.len(),
                set.len()
            )));
        }
        for (id, (name, rows, cols)) in layout.into_iter().enumerate() {
            let t = set.get(id);
            if set.name(id) != name || t.shape() != (rows, cols) {
                return Err(Error::Dimension {
                    op: "model tensor",
                    left: (rows, cols),
                    right: t.shape(),
                });
            }
        }
        Ok(Self { config, seed, set })
    }

    pub fn item_table(&self) -> &Dense2 {
        self.set.get(ITEM_EMBEDDINGS)
    }

    pub fn n_items(&self) -> usize {
        self.config.n_items
    }

    /// Representation of `ids` under the given encoder, without recording
    /// gradients anywhere.
    pub fn user_vector(&self, level: EncoderLevel, ids: &[usize]) -> Result<Dense1> {
        let mut tape = Tape::new(&self.set);
        let x = embed_items(&mut tape, ids)?;
        let u = match level {
            EncoderLevel::Item => user_rep_item_level(&mut tape, x)?,
            EncoderLevel::Interest => {
                let concepts = interest_concepts(&mut tape, x)?;
                user_rep_interest_level(&mut tape, concepts.concepts)?
            }
        };
        Ok(tape.value(u).to_dense1())
    }
}

/// Embedding rows of `ids`, in order.
pub fn embed_items(tape: &mut Tape, ids: &[usize]) -> Result<Var> {
    tape.gather(ITEM_EMBEDDINGS, ids)
}

/// The three-layer perceptron applied to every row of `x`: rectifiers
/// between layers, linear output.
pub fn mlp(tape: &mut Tape, x: Var) -> Result<Var> {
    let mut h = x;
    for layer in 0..3 {
        let w = tape.param(MLP_WEIGHTS[layer]);
        let b = tape.param(MLP_BIASES[layer]);
        h = tape.affine(h, w, b)?;
        if layer < 2 {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

fn nonempty(tape: &Tape, x: Var) -> Result<()> {
    let t = tape.value(x).rows();
    if t == 0 {
        return Err(Error::SequenceTooShort { len: 0, min: 1 });
    }
    Ok(())
}

/// `MLP(mean of the rows of x)`.
pub fn user_rep_item_level(tape: &mut Tape, x: Var) -> Result<Var> {
    nonempty(tape, x)?;
    let pooled = tape.mean_rows(x)?;
    mlp(tape, pooled)
}

/// Interest concepts of a `t × d` behavior matrix.
pub struct InterestConcepts {
    /// `K × d` concept matrix `C = Aᵀ X`.
    pub concepts: Var,
    /// `K × t` attention; row `k` is concept `k`'s distribution over the
    /// behaviors (the transpose of `A`).
    pub attention: Var,
}

impl InterestConcepts {
    /// The `t × K` attention matrix `A`.
    pub fn attention_matrix(&self, tape: &Tape) -> Dense2 {
        tape.value(self.attention).transpose()
    }
}

/// `A = softmax(W2 tanh(W1 Xᵀ))ᵀ` with the softmax taken over behaviors,
/// and `C = Aᵀ X`.
pub fn interest_concepts(tape: &mut Tape, x: Var) -> Result<InterestConcepts> {
    nonempty(tape, x)?;
    let w1 = tape.param(ATTN_W1);
    let w2 = tape.param(ATTN_W2);
    let hidden = tape.matmul_t(w1, x)?;
    let hidden = tape.tanh(hidden);
    let logits = tape.matmul(w2, hidden)?;
    let attention = tape.softmax_rows(logits);
    let concepts = tape.matmul(attention, x)?;
    Ok(InterestConcepts {
        concepts,
        attention,
    })
}

/// `MLP(mean of the concept rows)`.
pub fn user_rep_interest_level(tape: &mut Tape, c: Var) -> Result<Var> {
    nonempty(tape, c)?;
    let pooled = tape.mean_rows(c)?;
    mlp(tape, pooled)
}

/// Inner-product similarity.
pub fn score(u: &Dense1, y: &Dense1) -> Result<f64> {
    if u.len() != y.len() {
        return Err(Error::Dimension {
            op: "score",
            left: (1, u.len()),
            right: (1, y.len()),
        });
    }
    Ok(dot(u.data(), y.data()))
}

/// `−log(e^{φ(u,y)} / (e^{φ(u,y)} + Σ_neg e^{φ(u,y')}))` for a `1 × d`
/// user node.
pub fn sampled_softmax_loss(
    tape: &mut Tape,
    user: Var,
    target: usize,
    negatives: &[usize],
) -> Result<Var> {
    if negatives.is_empty() {
        return Err(Error::EmptyInput("negative sample"));
    }
    if negatives.contains(&target) {
        return Err(Error::TargetInNegatives(target));
    }
    let mut ids = Vec::with_capacity(negatives.len() + 1);
    ids.push(target);
    ids.extend_from_slice(negatives);
    let candidates = embed_items(tape, &ids)?;
    let logits = tape.matmul_t(user, candidates)?;
    tape.softmax_nll(logits, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{grad_check, Grads};

    fn small(seed: u64) -> ModelParams {
        ModelParams::init(
            ModelConfig {
                n_items: 12,
                dim: 6,
                hidden: 10,
                attn_dim: 5,
                n_concepts: 3,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = small(1);
        assert_eq!(a, small(1));
        assert_ne!(a, small(2));
        let bound = 1.0 / 6f64.sqrt();
        for (id, t) in a.set.tensors().iter().enumerate() {
            if a.set.name(id).ends_with("bias") {
                assert!(t.data().iter().all(|&v| v == 0.0));
            } else {
                assert!(t.data().iter().all(|v| v.abs() <= bound));
            }
        }
    }

    #[test]
    fn default_shapes() {
        let p = ModelParams::init(
            ModelConfig {
                n_items: 30,
                ..ModelConfig::new(30)
            },
            0,
        )
        .unwrap();
        let mut tape = Tape::new(&p.set);
        let x = embed_items(&mut tape, &[0, 1, 2, 3, 4]).unwrap();
        let c = interest_concepts(&mut tape, x).unwrap();
        assert_eq!(c.attention_matrix(&tape).shape(), (5, 20));
        assert_eq!(tape.value(c.concepts).shape(), (20, 64));
    }

    #[test]
    fn repeated_ids_embed_identically() {
        let p = small(3);
        let mut tape = Tape::new(&p.set);
        let x = embed_items(&mut tape, &[4, 4]).unwrap();
        assert_eq!(tape.value(x).row(0), tape.value(x).row(1));
        let e = embed_items(&mut tape, &[]).unwrap();
        assert_eq!(tape.value(e).shape(), (0, 6));
        assert!(user_rep_item_level(&mut tape, e).is_err());
        assert!(matches!(
            embed_items(&mut tape, &[12]),
            Err(Error::Vocabulary { index: 12, size: 12 })
        ));
    }

    #[test]
    fn item_level_pooling_invariances() {
        let p = small(4);
        let one = p.user_vector(EncoderLevel::Item, &[7]).unwrap();
        let twice = p.user_vector(EncoderLevel::Item, &[7, 7]).unwrap();
        assert_eq!(one, twice);
        let a = p.user_vector(EncoderLevel::Item, &[1, 2, 3]).unwrap();
        let b = p.user_vector(EncoderLevel::Item, &[3, 1, 2]).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_w2_gives_uniform_attention_and_mean_concepts() {
        let mut p = small(5);
        p.set.get_mut(ATTN_W2).fill(0.0);
        let ids = [0, 3, 5, 8];
        let mut tape = Tape::new(&p.set);
        let x = embed_items(&mut tape, &ids).unwrap();
        let c = interest_concepts(&mut tape, x).unwrap();
        let a = c.attention_matrix(&tape);
        assert!(a.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let mean = crate::numkit::mean_rows(tape.value(x));
        for k in 0..3 {
            for (u, v) in tape.value(c.concepts).row(k).iter().zip(mean.row(0)) {
                assert!((u - v).abs() < 1e-15);
            }
        }
        // interest-level output then matches the item-level encoder
        let ui = p.user_vector(EncoderLevel::Interest, &ids).unwrap();
        let uu = p.user_vector(EncoderLevel::Item, &ids).unwrap();
        for (u, v) in ui.data().iter().zip(uu.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_columns_are_distributions() {
        let p = small(6);
        let mut tape = Tape::new(&p.set);
        let x = embed_items(&mut tape, &[0, 1, 2, 9, 11]).unwrap();
        let c = interest_concepts(&mut tape, x).unwrap();
        let a = c.attention_matrix(&tape);
        for k in 0..a.cols() {
            let s: f64 = (0..a.rows()).map(|i| a.get(i, k)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_examples() {
        let s = |a: Vec<f64>, b: Vec<f64>| score(&a.into(), &b.into());
        assert_eq!(s(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(s(vec![1.0, 2.0], vec![3.0, 4.0]).unwrap(), 11.0);
        assert!(s(vec![1.0], vec![1.0, 2.0]).is_err());
        let (u, y): (Dense1, Dense1) = (vec![0.3, -1.2].into(), vec![2.0, 0.5].into());
        let cos = score(&u, &y).unwrap() / (u.norm() * y.norm());
        assert!((cos * u.norm() * y.norm() - score(&u, &y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn sampled_softmax_uniform_and_errors() {
        let mut ps = ParamSet::new();
        ps.push("e", Dense2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let mut tape = Tape::new(&ps);
        let u = tape.constant(Dense2::row_vector(vec![0.5, 0.5]));
        let l = sampled_softmax_loss(&mut tape, u, 0, &[1]).unwrap();
        assert!((tape.value(l).item() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(
            sampled_softmax_loss(&mut tape, u, 0, &[0]),
            Err(Error::TargetInNegatives(0))
        ));
        assert!(sampled_softmax_loss(&mut tape, u, 0, &[]).is_err());
        let far = tape.constant(Dense2::row_vector(vec![1e3, -1e3]));
        let l = sampled_softmax_loss(&mut tape, far, 0, &[1]).unwrap();
        assert!(tape.value(l).item() < 1e-300);
    }

    #[test]
    fn sampled_softmax_gradients_match_finite_differences() {
        let p = small(8);
        let f = |ps: &ParamSet, g: &mut Grads| {
            let mut tape = Tape::new(ps);
            let x = embed_items(&mut tape, &[1, 2, 5]).unwrap();
            let u = user_rep_item_level(&mut tape, x).unwrap();
            let l = sampled_softmax_loss(&mut tape, u, 3, &[0, 7, 9]).unwrap();
            tape.backward(l, 1.0, g).unwrap();
            tape.value(l).item()
        };
        let r = grad_check(f, &p.set, 1e-5);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn scaling_items_preserves_ranking() {
        let p = small(9);
        let u = p.user_vector(EncoderLevel::Item, &[0, 1]).unwrap();
        let table = p.item_table();
        let scores: Vec<f64> = (0..table.rows())
            .map(|i| dot(u.data(), table.row(i)))
            .collect();
        let c = 2.5;
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut scaled_order: Vec<usize> = (0..scores.len()).collect();
        let scaled: Vec<f64> = (0..table.rows())
            .map(|i| dot(u.data(), &table.row(i).iter().map(|v| v * c).collect::<Vec<_>>()))
            .collect();
        for (s, t) in scores.iter().zip(&scaled) {
            assert!((s * c - t).abs() < 1e-12);
        }
        scaled_order.sort_by(|&a, &b| scaled[b].total_cmp(&scaled[a]).then(a.cmp(&b)));
        assert_eq!(order, scaled_order);
    }
}
