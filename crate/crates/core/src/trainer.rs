//! Mini-batch training with sampled softmax, optional counterfactual
//! contrastive terms, Adam updates, validation and early stopping.

use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::causal::{synthesize_counterfactuals, MemoryEntry, Memories, VariantConfig};
use crate::data::{
    make_eval_examples, make_training_examples, EvalSet, InteractionLog, TrainingExample, UserSplit,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate, MetricsReport, DEFAULT_CUTOFFS};
use crate::losses::{loss_co, loss_ii_terms, LossBreakdown, Reduction};
use crate::model::{
    embed_items, interest_concepts, sampled_softmax_loss, user_rep_interest_level,
    user_rep_item_level, EncoderLevel, ModelConfig, ModelParams, Variant,
};
use crate::numkit::{adam_step, AdamConfig, AdamState, Dense2, Grads, ParamSet, Tape, Var};
use crate::rng::{self, Rng};

const STREAM_SHUFFLE: u64 = 1;
const STREAM_NEGATIVES: u64 = 2;
const STREAM_COUNTERFACTUAL: u64 = 3;

/// Switches for the contrastive terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub disable_co: bool,
    pub disable_ii: bool,
    /// Keep only the positive half of the independence loss.
    pub pos_only: bool,
    /// Keep only the negative half of the independence loss.
    pub neg_only: bool,
}

impl Ablation {
    pub const NAMES: [&'static str; 5] = ["none", "no-co", "no-ii", "pos-only", "neg-only"];

    pub fn from_name(name: &str) -> Result<Self> {
        let mut a = Self::default();
        match name {
            "none" | "full" => {}
            "no-co" => a.disable_co = true,
            "no-ii" => a.disable_ii = true,
            "pos-only" => a.pos_only = true,
            "neg-only" => a.neg_only = true,
            "base" => {
                a.disable_co = true;
                a.disable_ii = true;
            }
            _ => {
                return Err(Error::Config(format!(
                    "unknown ablation `{name}` (expected one of none, no-co, no-ii, pos-only, neg-only, base)"
                )))
            }
        }
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pos_only && self.neg_only {
            return Err(Error::Config("pos_only and neg_only cannot both be set".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub negatives_per_example: usize,
    /// Validate every this many steps; 0 validates at the end of each epoch.
    pub eval_every: usize,
    /// Validations without improvement before stopping; 0 never stops early.
    pub patience: usize,
    /// Emit a log record every this many steps.
    pub log_every: usize,
    /// Longest behavior prefix fed to the encoder.
    pub max_len: usize,
    /// Share of each held-out history used as encoder input.
    pub prefix_frac: f64,
    pub co_reduction: Reduction,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::new(Variant::Item)
    }
}

impl TrainConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            epochs: match variant {
                Variant::Item => 10,
                Variant::Interest | Variant::Hierarchical => 30,
            },
            batch_size: 1024,
            lr: 0.003,
            weight_decay: 1e-5,
            seed: 0,
            negatives_per_example: 10,
            eval_every: 0,
            patience: 3,
            log_every: 1,
            max_len: 50,
            prefix_frac: 0.8,
            co_reduction: Reduction::Sum,
            ablation: Ablation::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ablation.validate()?;
        for (name, v) in [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("negatives_per_example", self.negatives_per_example),
            ("log_every", self.log_every),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if !(self.prefix_frac > 0.0 && self.prefix_frac < 1.0) {
            return Err(Error::Config("prefix_frac must lie in (0, 1)".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Which contrastive terms enter the objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ActiveTerms {
    pub co: bool,
    pub ii_positive: bool,
    pub ii_negative: bool,
    pub co_reduction: Reduction,
}

impl ActiveTerms {
    pub fn new(ablation: &Ablation, vcfg: &VariantConfig, co_reduction: Reduction) -> Self {
        let half_only = ablation.pos_only || ablation.neg_only;
        let co = !ablation.disable_co && !half_only && vcfg.lambda1 != 0.0;
        let ii = !ablation.disable_ii && vcfg.lambda2 != 0.0;
        Self {
            co,
            ii_positive: ii && !ablation.neg_only,
            ii_negative: ii && !ablation.pos_only,
            co_reduction,
        }
    }

    pub fn none() -> Self {
        Self {
            co: false,
            ii_positive: false,
            ii_negative: false,
            co_reduction: Reduction::Sum,
        }
    }

    pub fn any(&self) -> bool {
        self.co || self.ii_positive || self.ii_negative
    }
}

/// `k` distinct items drawn uniformly from the vocabulary minus `target`.
pub fn sample_negatives(vocab_size: usize, target: usize, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if target >= vocab_size {
        return Err(Error::Vocabulary {
            index: target,
            size: vocab_size,
        });
    }
    if k > vocab_size - 1 {
        return Err(Error::TooManyNegatives {
            requested: k,
            vocab: vocab_size,
        });
    }
    Ok(sample(rng, vocab_size - 1, k)
        .into_iter()
        .map(|i| if i >= target { i + 1 } else { i })
        .collect())
}

/// True once the best value is `patience` or more evaluations old.
pub fn early_stop(history: &[f64], patience: usize) -> bool {
    if patience == 0 || history.is_empty() {
        return false;
    }
    let mut best = 0;
    for (i, &v) in history.iter().enumerate() {
        if v > history[best] {
            best = i;
        }
    }
    history.len() - 1 - best >= patience
}

/// A training example with its sampled negatives and counterfactual stream.
#[derive(Clone, Debug)]
pub struct PreparedExample<'a> {
    pub example: &'a TrainingExample,
    pub negatives: Vec<usize>,
    pub cf_rng: Rng,
}

/// Result of one example's forward pass.
pub struct ExampleObjective {
    pub total: Var,
    pub loss: LossBreakdown,
    /// Detached observational interest concepts, when computed.
    pub concepts: Option<Dense2>,
}

fn encode(tape: &mut Tape, level: EncoderLevel, ids: &[usize]) -> Result<Var> {
    let x = embed_items(tape, ids)?;
    match level {
        EncoderLevel::Item => user_rep_item_level(tape, x),
        EncoderLevel::Interest => {
            let ic = interest_concepts(tape, x)?;
            user_rep_interest_level(tape, ic.concepts)
        }
    }
}

/// Records `matching + λ1·co + λ2·ii` for one example on `tape`.
///
/// Counterfactuals are synthesized only when a contrastive term is active
/// and the prefix has at least two behaviors; otherwise the plain encoder
/// is used and only the matching loss contributes.
pub fn example_objective(
    tape: &mut Tape,
    example: &TrainingExample,
    negatives: &[usize],
    vcfg: &VariantConfig,
    terms: &ActiveTerms,
    memories: &mut Memories,
    rng: &mut Rng,
) -> Result<ExampleObjective> {
    let synthesis = if terms.any() && example.prefix.len() >= 2 {
        Some(synthesize_counterfactuals(
            tape,
            &example.prefix,
            example.target,
            vcfg,
            memories,
            rng,
        )?)
    } else {
        None
    };
    let user = match &synthesis {
        Some(s) => s.observational,
        None => encode(tape, vcfg.variant.encoder(), &example.prefix)?,
    };
    let matching = sampled_softmax_loss(tape, user, example.target, negatives)?;
    let mut loss = LossBreakdown {
        matching: tape.value(matching).item(),
        ..LossBreakdown::default()
    };
    let mut parts = vec![matching];
    let mut concepts = None;
    if let Some(s) = &synthesis {
        if terms.co {
            let co = loss_co(
                tape,
                user,
                &s.positives,
                &s.negatives,
                vcfg.margin_co,
                terms.co_reduction,
            )?;
            loss.co = tape.value(co).item();
            parts.push(tape.scale(co, vcfg.lambda1));
        }
        if terms.ii_positive || terms.ii_negative {
            let y = embed_items(tape, &[example.target])?;
            let halves = loss_ii_terms(tape, &s.positives, &s.negatives, y, vcfg.margin_ii)?;
            let ii = match (terms.ii_positive, terms.ii_negative) {
                (true, true) => tape.add(halves.positive, halves.negative)?,
                (true, false) => halves.positive,
                _ => halves.negative,
            };
            loss.ii = tape.value(ii).item();
            parts.push(tape.scale(ii, vcfg.lambda2));
        }
        concepts = s.concepts.map(|c| tape.value(c).clone());
    }
    let total = tape.sum_all(&parts)?;
    loss.total = tape.value(total).item();
    Ok(ExampleObjective {
        total,
        loss,
        concepts,
    })
}

/// Batch-mean losses plus what the batch contributes to the memories.
pub struct BatchOutput {
    pub loss: LossBreakdown,
    pub concepts: Vec<Option<Dense2>>,
}

/// Runs every example on its own tape and, when `grads` is given,
/// accumulates the gradient of the batch-mean objective into it.
pub fn batch_objective(
    params: &ParamSet,
    batch: &[PreparedExample<'_>],
    vcfg: &VariantConfig,
    terms: &ActiveTerms,
    memories: &mut Memories,
    mut grads: Option<&mut Grads>,
) -> Result<BatchOutput> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut sum = LossBreakdown::default();
    let mut concepts = Vec::with_capacity(batch.len());
    for item in batch {
        let mut tape = Tape::new(params);
        let mut rng = item.cf_rng.clone();
        let obj = example_objective(
            &mut tape,
            item.example,
            &item.negatives,
            vcfg,
            terms,
            memories,
            &mut rng,
        )?;
        if let Some(g) = grads.as_deref_mut() {
            tape.backward(obj.total, scale, g)?;
        }
        sum.matching += obj.loss.matching;
        sum.co += obj.loss.co;
        sum.ii += obj.loss.ii;
        sum.total += obj.loss.total;
        concepts.push(obj.concepts);
    }
    Ok(BatchOutput {
        loss: LossBreakdown {
            matching: sum.matching * scale,
            co: sum.co * scale,
            ii: sum.ii * scale,
            total: sum.total * scale,
        },
        concepts,
    })
}

/// Training examples and the validation set drawn from a user split.
#[derive(Clone, Debug)]
pub struct TrainingData {
    pub examples: Vec<TrainingExample>,
    pub validation: EvalSet,
    pub n_items: usize,
}

impl TrainingData {
    pub fn from_split(log: &InteractionLog, split: &UserSplit, cfg: &TrainConfig) -> Result<Self> {
        let examples = make_training_examples(log, &split.train, cfg.max_len)?;
        if examples.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let validation = if split.val.is_empty() {
            EvalSet::default()
        } else {
            make_eval_examples(log, &split.val, cfg.prefix_frac)?
        };
        Ok(Self {
            examples,
            validation,
            n_items: log.n_items(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRecord {
    pub step: usize,
    pub epoch: usize,
    pub report: MetricsReport,
}

/// Progress notifications emitted during [`train`].
pub enum TrainEvent<'a> {
    Log(&'a TrainLogRecord),
    Validation {
        record: &'a ValidationRecord,
        params: &'a ModelParams,
        is_best: bool,
    },
}

pub struct TrainOutcome {
    pub final_params: ModelParams,
    /// Parameters at the best validation Recall@50; the final ones when no
    /// validation ran.
    pub best_params: ModelParams,
    pub best_report: Option<MetricsReport>,
    pub records: Vec<TrainLogRecord>,
    pub validations: Vec<ValidationRecord>,
    pub steps: usize,
    pub stopped_early: bool,
    /// Largest concept-memory occupancy seen after any step.
    pub peak_memory_len: usize,
}

const SELECTION_CUTOFF: usize = 50;

fn selection_score(report: &MetricsReport) -> f64 {
    report
        .recall_at(SELECTION_CUTOFF)
        .or_else(|| report.metrics.last().map(|m| m.recall))
        .unwrap_or(0.0)
}

/// Trains from freshly initialized parameters. Deterministic given the
/// seed and the data.
pub fn train(
    data: &TrainingData,
    model: &ModelConfig,
    cfg: &TrainConfig,
    vcfg: &VariantConfig,
    on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    vcfg.validate()?;
    if vcfg.variant != cfg.variant {
        return Err(Error::Config(format!(
            "training variant {} differs from counterfactual variant {}",
            cfg.variant.name(),
            vcfg.variant.name()
        )));
    }
    if model.n_items != data.n_items {
        return Err(Error::Config(format!(
            "model has {} items, data has {}",
            model.n_items, data.n_items
        )));
    }
    if cfg.variant.encoder() == EncoderLevel::Interest && vcfg.k != model.n_concepts {
        return Err(Error::Config(format!(
            "K = {} but the model has {} interest concepts",
            vcfg.k, model.n_concepts
        )));
    }
    if data.examples.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut params = ModelParams::init(model.clone(), cfg.seed)?;
    let mut adam = AdamState::new(&params.set);
    let adam_cfg = cfg.adam();
    let terms = ActiveTerms::new(&cfg.ablation, vcfg, cfg.co_reduction);
    let mut memories = Memories::new(vcfg.memory_capacity, model.n_items, model.dim);
    let uses_item_memory = vcfg.level_counts().item_positives + vcfg.level_counts().item_negatives > 0;
    let uses_interest_memory =
        vcfg.level_counts().interest_positives + vcfg.level_counts().interest_negatives > 0;
    let mut grads = Grads::zeros_like(&params.set);
    let started = Instant::now();

    let mut records = Vec::new();
    let mut validations: Vec<ValidationRecord> = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(f64, ModelParams, MetricsReport)> = None;
    let mut step = 0usize;
    let mut stopped_early = false;
    let mut peak_memory_len = 0usize;
    let mut order: Vec<usize> = (0..data.examples.len()).collect();

    let mut validate = |step: usize,
                        epoch: usize,
                        params: &ModelParams,
                        on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>|
     -> Result<bool> {
        if data.validation.examples.is_empty() {
            return Ok(false);
        }
        let report = evaluate(params, cfg.variant, &data.validation, &DEFAULT_CUTOFFS)?;
        let score = selection_score(&report);
        let is_best = best.as_ref().is_none_or(|(b, _, _)| score > *b);
        if is_best {
            best = Some((score, params.clone(), report.clone()));
        }
        history.push(score);
        let record = ValidationRecord {
            step,
            epoch,
            report,
        };
        on_event(TrainEvent::Validation {
            record: &record,
            params,
            is_best,
        })?;
        validations.push(record);
        Ok(early_stop(&history, cfg.patience))
    };

    'epochs: for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, &[STREAM_SHUFFLE, epoch as u64]));
        for chunk in order.chunks(cfg.batch_size) {
            let batch = chunk
                .iter()
                .enumerate()
                .map(|(pos, &i)| {
                    let example = &data.examples[i];
                    let keys = [step as u64, pos as u64];
                    let mut neg_rng = rng::stream(cfg.seed, &[STREAM_NEGATIVES, keys[0], keys[1]]);
                    let negatives = sample_negatives(
                        model.n_items,
                        example.target,
                        cfg.negatives_per_example,
                        &mut neg_rng,
                    )?;
                    Ok(PreparedExample {
                        example,
                        negatives,
                        cf_rng: rng::stream(cfg.seed, &[STREAM_COUNTERFACTUAL, keys[0], keys[1]]),
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            grads.zero();
            let out = batch_objective(&params.set, &batch, vcfg, &terms, &mut memories, Some(&mut grads))?;
            if !out.loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            adam_step(&mut params.set, &grads, &mut adam, &adam_cfg)?;

            if terms.any() {
                for (item, concepts) in batch.iter().zip(out.concepts) {
                    if uses_item_memory {
                        memories
                            .item
                            .enqueue(item.example.prefix.iter().map(|&i| MemoryEntry::Item(i)))?;
                    }
                    if let (true, Some(c)) = (uses_interest_memory, concepts) {
                        memories.interest.enqueue(
                            (0..c.rows()).map(|r| MemoryEntry::Vector(c.row(r).to_vec())),
                        )?;
                    }
                }
                peak_memory_len = peak_memory_len.max(memories.item.len()).max(memories.interest.len());
            }

            step += 1;
            if step.is_multiple_of(cfg.log_every) {
                let record = TrainLogRecord {
                    step,
                    epoch,
                    loss: out.loss,
                    wall_ms: started.elapsed().as_millis() as u64,
                };
                on_event(TrainEvent::Log(&record))?;
                records.push(record);
            }
            if cfg.eval_every > 0 && step.is_multiple_of(cfg.eval_every) && validate(step, epoch, &params, on_event)? {
                stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.eval_every == 0 && validate(step, epoch, &params, on_event)? {
            stopped_early = true;
            break;
        }
    }

    let (best_params, best_report) = match best {
        Some((_, p, r)) => (p, Some(r)),
        None => (params.clone(), None),
    };
    Ok(TrainOutcome {
        final_params: params,
        best_params,
        best_report,
        records,
        validations,
        steps: step,
        stopped_early,
        peak_memory_len,
    })
}
