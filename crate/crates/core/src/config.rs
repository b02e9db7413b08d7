//! JSON run configuration shared by the command-line tools.
//!
//! Every hyperparameter has a default; a data source must be given
//! explicitly. Unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoding::{CachedEncoder, EmbeddingProvider, HashEncoder, DEFAULT_HASH_DIM, DEFAULT_HIDDEN};
use crate::error::{Error, Result};
use crate::fewshot::{DistanceMode, LossConfig, SamplerConfig, TrainConfig, TrainingMode, DEFAULT_LR};
use crate::ingest::{build_split, mask_triples, nyt24_catalog, read_instances, EmbeddingCache, InvalidPolicy, RelationPolicy, SplitMode};
use crate::metricspace::{NegativeFill, DEFAULT_GAMMA, DEFAULT_TOP_E};
use crate::synth::{synthetic_corpus, SynthConfig};
use crate::types::{Instance, RelationCatalog, RelationId, SchemeId, DEFAULT_MAX_SEQ_LEN};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    #[default]
    Hash,
    Cache,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    pub seed: u64,
    /// FSRE cache file, required for `cache`.
    pub cache: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { kind: EncoderKind::Hash, dim: DEFAULT_HASH_DIM, seed: 0, cache: None }
    }
}

/// Where instances come from: JSONL files with a task split, or the
/// built-in synthetic corpus.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Source-domain instances.
    pub train: Option<PathBuf>,
    /// Target-domain instances; the training file is reused when absent.
    pub eval: Option<PathBuf>,
    pub split: Option<SplitMode>,
    pub synthetic: Option<SynthConfig>,
    /// Stop at the first invalid instance instead of skipping it.
    pub strict: bool,
    pub max_seq_len: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub encoder: EncoderConfig,
    pub scheme: SchemeId,
    pub mode: TrainingMode,
    pub negative: NegativeFill,
    pub distance: DistanceMode,
    pub n: usize,
    pub k: usize,
    pub top_e: usize,
    pub hidden: usize,
    pub gamma: f64,
    pub pretrain_lr: f64,
    pub finetune_lr: f64,
    pub batch_size: usize,
    pub pretrain_steps: usize,
    pub finetune_steps: usize,
    pub eval_iterations: usize,
    pub max_attempts: usize,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            encoder: EncoderConfig::default(),
            scheme: SchemeId::TpLinker,
            mode: TrainingMode::PretrainFinetune,
            negative: NegativeFill::Min,
            distance: DistanceMode::Accel,
            n: 2,
            k: 1,
            top_e: DEFAULT_TOP_E,
            hidden: DEFAULT_HIDDEN,
            gamma: DEFAULT_GAMMA,
            pretrain_lr: DEFAULT_LR,
            finetune_lr: DEFAULT_LR,
            batch_size: 128,
            pretrain_steps: 1000,
            finetune_steps: 1000,
            eval_iterations: 500,
            max_attempts: 10_000,
            seed: 0,
            checkpoint: None,
        }
    }
}

/// Instances and relation split resolved from a [`DataConfig`].
#[derive(Clone, Debug)]
pub struct Dataset {
    pub catalog: RelationCatalog,
    pub split_name: String,
    pub train: Vec<Instance>,
    pub eval: Vec<Instance>,
    pub source: Vec<RelationId>,
    pub target: Vec<RelationId>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        if self.encoder.dim == 0 {
            return Err(Error::Config("encoder.dim must be positive".into()));
        }
        if self.encoder.kind == EncoderKind::Cache && self.encoder.cache.is_none() {
            return Err(Error::Config("missing key encoder.cache for the cache encoder".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig { n: self.n, k: self.k, max_attempts: self.max_attempts, seed: self.seed }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig { distance: self.distance, negative: self.negative, top_e: self.top_e }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            scheme: self.scheme,
            hidden: self.hidden,
            gamma: self.gamma,
            pretrain_lr: self.pretrain_lr,
            finetune_lr: self.finetune_lr,
            batch_size: self.batch_size,
            pretrain_steps: self.pretrain_steps,
            finetune_steps: self.finetune_steps,
            sampler: self.sampler(),
            loss: self.loss(),
            seed: self.seed,
        }
    }

    pub fn dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        if let Some(syn) = &d.synthetic {
            if d.train.is_some() || d.eval.is_some() {
                return Err(Error::Config("data.synthetic excludes data.train and data.eval".into()));
            }
            let corpus = synthetic_corpus(syn)?;
            return Ok(Dataset {
                train: corpus.instances_with(&corpus.source),
                eval: corpus.instances_with(&corpus.target),
                split_name: "SYNTHETIC".into(),
                catalog: corpus.catalog,
                source: corpus.source,
                target: corpus.target,
            });
        }
        let train_path = d.train.as_ref().ok_or_else(|| Error::Config("missing key data.train".into()))?;
        let split = d.split.clone().ok_or_else(|| Error::Config("missing key data.split".into()))?;
        let mut catalog = match split {
            SplitMode::Custom { .. } => RelationCatalog::default(),
            _ => nyt24_catalog(),
        };
        let max_len = d.max_seq_len.unwrap_or(DEFAULT_MAX_SEQ_LEN);
        let policy = if d.strict { InvalidPolicy::Fatal } else { InvalidPolicy::Skip };
        let train = read_instances(train_path, &mut catalog, RelationPolicy::Grow, max_len, policy)?;
        let eval = match &d.eval {
            Some(p) => read_instances(p, &mut catalog, RelationPolicy::Grow, max_len, policy)?.instances,
            None => train.instances.clone(),
        };
        let split = build_split(&catalog, &split)?;
        let (source, target) = (split.source_set(), split.target_set());
        let keep = |data: Vec<Instance>, allowed: &HashSet<RelationId>| -> Vec<Instance> {
            data.iter()
                .map(|i| mask_triples(i, allowed))
                .filter(|i| !i.triples.is_empty())
                .collect()
        };
        Ok(Dataset {
            train: keep(train.instances, &source),
            eval: keep(eval, &target),
            split_name: split.name,
            catalog,
            source: split.source,
            target: split.target,
        })
    }

    pub fn provider(&self, catalog: &RelationCatalog) -> Result<Box<dyn EmbeddingProvider>> {
        match self.encoder.kind {
            EncoderKind::Hash => Ok(Box::new(HashEncoder::new(catalog, self.encoder.seed, self.encoder.dim))),
            EncoderKind::Cache => {
                let path = self.encoder.cache.as_ref().ok_or_else(|| Error::Config("missing key encoder.cache".into()))?;
                Ok(Box::new(CachedEncoder::new(EmbeddingCache::open(path)?, self.encoder.dim)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!((c.hidden, c.top_e, c.gamma, c.batch_size, c.n, c.k), (32, 3, 0.9, 128, 2, 1));
        assert_eq!(c.pretrain_lr, 2e-5);
        assert_eq!(c.eval_iterations, 500);
        assert_eq!(c.encoder.kind, EncoderKind::Hash);
    }

    #[test]
    fn roundtrips_through_json() {
        let c = RunConfig {
            scheme: SchemeId::Bitt,
            negative: NegativeFill::Avg,
            distance: DistanceMode::Exact,
            data: DataConfig { synthetic: Some(SynthConfig::default()), ..Default::default() },
            ..Default::default()
        };
        assert_eq!(RunConfig::from_json(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"hiden": 4}"#), Err(Error::Config(_))));
    }

    #[test]
    fn names_parse() {
        let c = RunConfig::from_json(
            r#"{"scheme": "bitt", "negative": "avg", "distance": "exact", "mode": "no-pretrain",
                "data": {"split": "inter-b", "train": "x.jsonl"}}"#,
        )
        .unwrap();
        assert_eq!(c.mode, TrainingMode::NoPretrain);
        assert_eq!(c.data.split, Some(SplitMode::InterB));
    }

    #[test]
    fn missing_data_keys() {
        let c = RunConfig::default();
        assert!(matches!(c.dataset(), Err(Error::Config(m)) if m.contains("data.train")));
        let c = RunConfig::from_json(r#"{"encoder": {"kind": "cache"}}"#);
        assert!(matches!(c, Err(Error::Config(m)) if m.contains("encoder.cache")));
    }

    #[test]
    fn synthetic_dataset_splits_domains() {
        let c = RunConfig {
            data: DataConfig { synthetic: Some(SynthConfig { per_relation: 5, ..Default::default() }), ..Default::default() },
            ..Default::default()
        };
        let d = c.dataset().unwrap();
        assert_eq!(d.train.len(), 20);
        assert_eq!(d.eval.len(), 20);
        assert!(d.train.iter().all(|i| i.triples.iter().all(|t| d.source.contains(&t.relation))));
    }
}
