//! Training state, the pretraining and episodic fine-tuning steps, and the
//! three training modes.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_grads, prepare_episode, LossConfig};
use super::optim::{Adam, AdamConfig};
use super::sampler::{EpisodeSampler, SamplerConfig};
use crate::encoding::{
    pretrain_logits, pretrain_logits_backward, Classifier, EmbeddingProvider, HeadParams, Tensors, DEFAULT_HIDDEN,
};
use crate::error::{Error, Result};
use crate::metricspace::{PrototypeBank, DEFAULT_GAMMA};
use crate::par::Exec;
use crate::tagging::{scheme_for, Scheme};
use crate::types::{Episode, Instance, LabelSeq, RelationId, SchemeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingMode {
    /// Episodic training from scratch.
    NoPretrain,
    /// Sequence-tagging pretraining only.
    PretrainOnly,
    /// Pretraining followed by episodic fine-tuning.
    PretrainFinetune,
}

impl TrainingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainingMode::NoPretrain => "no-pretrain",
            TrainingMode::PretrainOnly => "pretrain-only",
            TrainingMode::PretrainFinetune => "pretrain-finetune",
        }
    }

    pub fn pretrains(self) -> bool {
        self != TrainingMode::NoPretrain
    }

    pub fn finetunes(self) -> bool {
        self != TrainingMode::PretrainOnly
    }
}

impl std::str::FromStr for TrainingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "no-pretrain" => Ok(TrainingMode::NoPretrain),
            "pretrain-only" => Ok(TrainingMode::PretrainOnly),
            "pretrain-finetune" => Ok(TrainingMode::PretrainFinetune),
            other => Err(Error::Config(format!("unknown training mode {other:?}"))),
        }
    }
}

/// Which optimizer phase the head moments belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Init,
    Pretrain,
    Finetune,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Init => 0,
            Phase::Pretrain => 1,
            Phase::Finetune => 2,
        }
    }

    pub fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(Phase::Init),
            1 => Ok(Phase::Pretrain),
            2 => Ok(Phase::Finetune),
            other => Err(Error::Checkpoint(format!("unknown phase {other}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub heads: HeadParams,
    pub classifier: Option<Classifier>,
    pub prototypes: PrototypeBank,
    pub adam_heads: Adam,
    pub adam_classifier: Option<Adam>,
    pub phase: Phase,
    pub step: u64,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(scheme: SchemeId, embed_dim: usize, hidden: usize, gamma: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let heads = HeadParams::init(scheme, embed_dim, hidden, &mut rng);
        let alphabet = scheme_for(scheme).layout_for(1).alphabet;
        TrainState {
            adam_heads: Adam::new(AdamConfig::default(), &heads),
            heads,
            classifier: None,
            prototypes: PrototypeBank::new(&alphabet, hidden, gamma),
            adam_classifier: None,
            phase: Phase::Init,
            step: 0,
            rng,
        }
    }

    pub fn scheme(&self) -> SchemeId {
        self.heads.scheme
    }

    pub fn alphabet(&self) -> Vec<usize> {
        scheme_for(self.scheme()).layout_for(1).alphabet
    }

    /// Switches the optimizer to `phase`, resetting the moments when the
    /// phase changes, and adds the classifier for pretraining.
    pub fn enter_phase(&mut self, phase: Phase, adam: AdamConfig) {
        if self.phase != phase {
            self.adam_heads = Adam::new(adam, &self.heads);
            self.phase = phase;
        }
        self.adam_heads.cfg = adam;
        if phase == Phase::Pretrain {
            if self.classifier.is_none() {
                let cls = Classifier::init(self.scheme(), self.heads.hidden(), &self.alphabet(), &mut self.rng);
                self.adam_classifier = Some(Adam::new(adam, &cls));
                self.classifier = Some(cls);
            }
            if let Some(a) = &mut self.adam_classifier {
                a.cfg = adam;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.heads.is_finite()
            && self.classifier.as_ref().is_none_or(|c| c.is_finite())
            && self.prototypes.chunks.iter().flatten().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// One source-domain training sequence for pretraining.
#[derive(Clone, Debug)]
pub struct PretrainExample {
    pub instance: Instance,
    pub relation: RelationId,
    pub labels: LabelSeq,
}

/// Every instance is labelled for each source relation it holds, plus one
/// source relation it lacks (an all-negative sequence).
pub fn pretrain_examples<R: Rng>(
    data: &[Instance],
    relations: &[RelationId],
    scheme: &dyn Scheme,
    rng: &mut R,
) -> Vec<PretrainExample> {
    let allowed: std::collections::HashSet<RelationId> = relations.iter().copied().collect();
    let mut out = Vec::new();
    for inst in data {
        let inst = crate::ingest::mask_triples(inst, &allowed);
        let present: BTreeSet<RelationId> = inst.triples.iter().map(|t| t.relation).collect();
        let absent: Vec<RelationId> = relations.iter().copied().filter(|r| !present.contains(r)).collect();
        let mut rels: Vec<RelationId> = present.into_iter().collect();
        if let Some(&r) = absent.choose(rng) {
            rels.push(r);
        }
        for r in rels {
            out.push(PretrainExample { labels: scheme.encode(inst.len(), &inst.triples, r), instance: inst.clone(), relation: r });
        }
    }
    out
}

/// Mean per-position cross-entropy of the pretraining classifier and its
/// gradients for heads and classifier.
pub fn pretrain_loss_and_grads(
    batch: &[PretrainExample],
    heads: &HeadParams,
    cls: &Classifier,
    provider: &dyn EmbeddingProvider,
) -> Result<(f64, HeadParams, Classifier)> {
    if batch.is_empty() {
        return Err(Error::Dimension("empty pretraining batch".into()));
    }
    let mut gh = heads.zeros_like();
    let mut gc = cls.zeros_like();
    let mut loss = 0.0;
    let per_example = 1.0 / batch.len() as f64;
    for ex in batch {
        if ex.labels.layout.scheme != heads.scheme {
            return Err(Error::Dimension(format!("{} labels for {} heads", ex.labels.layout.scheme, heads.scheme)));
        }
        let emb = provider.embed(&ex.instance, ex.relation)?.values;
        let hidden = heads.apply(emb.view())?;
        let logits = pretrain_logits(&hidden, cls)?;
        let chunks = logits.len();
        let mut d_logits = Vec::with_capacity(chunks);
        for (c, z) in logits.iter().enumerate() {
            let gold = ex.labels.chunk(c);
            if gold.len() != z.nrows() {
                return Err(Error::Dimension(format!("{} logits for {} labels", z.nrows(), gold.len())));
            }
            let w = per_example / (chunks * gold.len()) as f64;
            let mut dz = Array2::zeros(z.dim());
            for (p, &g) in gold.iter().enumerate() {
                let row = z.row(p);
                let hi = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = row.iter().map(|&v| (v - hi).exp()).sum();
                loss += w * (hi + sum.ln() - row[g as usize]);
                for l in 0..z.ncols() {
                    dz[[p, l]] = w * ((row[l] - hi).exp() / sum - (l == g as usize) as u8 as f64);
                }
            }
            d_logits.push(dz);
        }
        let d_hidden = pretrain_logits_backward(&hidden, cls, &d_logits, &mut gc);
        heads.backward(emb.view(), &d_hidden, &mut gh);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("pretraining loss".into()));
    }
    Ok((loss, gh, gc))
}

/// One Adam step on heads and classifier. Returns the batch loss before the
/// step.
pub fn pretrain_step(state: &mut TrainState, batch: &[PretrainExample], provider: &dyn EmbeddingProvider) -> Result<f64> {
    let cls = state.classifier.as_ref().ok_or_else(|| Error::Config("pretraining needs a classifier".into()))?;
    let (loss, gh, gc) = pretrain_loss_and_grads(batch, &state.heads, cls, provider)?;
    state.adam_heads.step(&mut state.heads, &gh)?;
    let (cls, opt) = match (&mut state.classifier, &mut state.adam_classifier) {
        (Some(c), Some(o)) => (c, o),
        _ => return Err(Error::Config("classifier optimizer missing".into())),
    };
    opt.step(cls, &gc)?;
    state.step += 1;
    Ok(loss)
}

/// One Adam step on the heads from an episode. BiTT prototypes then move
/// toward the support states computed before the step.
pub fn finetune_step(
    state: &mut TrainState,
    ep: &Episode,
    provider: &dyn EmbeddingProvider,
    cfg: &LossConfig,
    exec: Exec,
) -> Result<f64> {
    let prep = prepare_episode(ep, state.scheme(), provider)?;
    let protos = (state.scheme() == SchemeId::Bitt).then_some(&state.prototypes);
    let (loss, grads) = loss_and_grads(&prep, &state.heads, protos, cfg, exec)?;
    if state.scheme() == SchemeId::Bitt {
        let mut pending = Vec::new();
        for batch in &prep.categories {
            let states = batch.support.iter().map(|e| state.heads.apply(e.view())).collect::<Result<Vec<_>>>()?;
            for c in 0..state.prototypes.chunks.len() {
                let views: Vec<_> = states.iter().map(|h| h.chunk(c).view()).collect();
                let stacked = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal hidden sizes");
                let labels: Vec<u8> = batch.support_labels.iter().flat_map(|l| l.chunk(c).iter().copied()).collect();
                pending.push((c, stacked, labels));
            }
        }
        state.adam_heads.step(&mut state.heads, &grads)?;
        for (c, stacked, labels) in pending {
            state.prototypes.update(c, stacked.view(), &labels)?;
        }
    } else {
        state.adam_heads.step(&mut state.heads, &grads)?;
    }
    state.step += 1;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub scheme: SchemeId,
    pub hidden: usize,
    pub gamma: f64,
    pub pretrain_lr: f64,
    pub finetune_lr: f64,
    pub batch_size: usize,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub sampler: SamplerConfig,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            scheme: SchemeId::TpLinker,
            hidden: DEFAULT_HIDDEN,
            gamma: DEFAULT_GAMMA,
            pretrain_lr: super::optim::DEFAULT_LR,
            finetune_lr: super::optim::DEFAULT_LR,
            batch_size: 128,
            pretrain_steps: 1000,
            finetune_steps: 1000,
            sampler: SamplerConfig::default(),
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.validate()?;
        if self.hidden == 0 || self.batch_size == 0 {
            return Err(Error::Config("hidden size and batch size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.loss.top_e < 2 {
            return Err(Error::Config(format!("top_e must be at least 2, got {}", self.loss.top_e)));
        }
        Ok(())
    }

    pub fn pretrain_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.pretrain_lr, ..Default::default() }
    }

    pub fn finetune_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.finetune_lr, ..Default::default() }
    }
}

/// Runs `steps` pretraining steps on random batches of `examples`. Returns
/// the loss of every step.
pub fn pretrain(
    state: &mut TrainState,
    cfg: &TrainConfig,
    examples: &[PretrainExample],
    steps: usize,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(Error::Infeasible("no pretraining examples".into()));
    }
    state.enter_phase(Phase::Pretrain, cfg.pretrain_adam());
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let batch: Vec<PretrainExample> =
            (0..cfg.batch_size).map(|_| examples[state.rng.gen_range(0..examples.len())].clone()).collect();
        let loss = pretrain_step(state, &batch, provider)?;
        if step % 100 == 0 {
            log::info!("pretrain step {step}: loss {loss:.5}");
        }
        losses.push(loss);
    }
    Ok(losses)
}

/// Runs `steps` episodic fine-tuning steps on episodes from `sampler`.
pub fn finetune(
    state: &mut TrainState,
    cfg: &TrainConfig,
    sampler: &EpisodeSampler<'_>,
    steps: usize,
    provider: &dyn EmbeddingProvider,
    exec: Exec,
) -> Result<Vec<f64>> {
    state.enter_phase(Phase::Finetune, cfg.finetune_adam());
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let ep = sampler.sample(&mut state.rng)?;
        let loss = finetune_step(state, &ep, provider, &cfg.loss, exec)?;
        if step % 100 == 0 {
            log::info!("finetune step {step}: loss {loss:.5}");
        }
        losses.push(loss);
    }
    Ok(losses)
}

/// Trains a fresh state on the source data according to `mode`.
pub fn train(
    mode: TrainingMode,
    cfg: &TrainConfig,
    data: &[Instance],
    relations: &[RelationId],
    provider: &dyn EmbeddingProvider,
    exec: Exec,
) -> Result<TrainState> {
    cfg.validate()?;
    let mut state = TrainState::new(cfg.scheme, provider.dim(), cfg.hidden, cfg.gamma, cfg.seed);
    let scheme = scheme_for(cfg.scheme);
    if mode.pretrains() {
        let examples = pretrain_examples(data, relations, scheme, &mut state.rng);
        pretrain(&mut state, cfg, &examples, cfg.pretrain_steps, provider)?;
    }
    if mode.finetunes() {
        let sampler = EpisodeSampler::new(data, relations, scheme, cfg.sampler)?;
        finetune(&mut state, cfg, &sampler, cfg.finetune_steps, provider, exec)?;
    }
    Ok(state)
}
