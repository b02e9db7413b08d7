//! Strict triple matching, episodic evaluation and the distance benchmark.

mod bench;

pub use bench::{audit_negative_fill, bench_distance, BenchConfig, BenchReport, FillAudit, PathTiming};

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::{EmbeddingProvider, HeadParams};
use crate::error::Result;
use crate::fewshot::{predict_triples, EpisodeSampler};
use crate::par::{map_slice, Exec};
use crate::types::{Episode, Triple};

/// True positive, false positive and false negative counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// A predicted triple counts only if head span, tail span and relation are
/// all equal to a gold triple. Duplicates are ignored on both sides.
pub fn match_triples(pred: &[Triple], gold: &[Triple]) -> MatchCounts {
    let p: BTreeSet<&Triple> = pred.iter().collect();
    let g: BTreeSet<&Triple> = gold.iter().collect();
    let tp = p.intersection(&g).count() as u64;
    MatchCounts { tp, fp: p.len() as u64 - tp, fn_: g.len() as u64 - tp }
}

/// Micro-averaged scores over a run of episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub seed: u64,
    pub counts: MatchCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl EvalReport {
    pub fn from_counts(episodes: usize, seed: u64, counts: MatchCounts) -> Self {
        EvalReport {
            episodes,
            seed,
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
        }
    }

    pub fn table(&self) -> String {
        format!(
            "episodes  tp  fp  fn  precision  recall  f1\n{}  {}  {}  {}  {:.4}  {:.4}  {:.4}\n",
            self.episodes, self.counts.tp, self.counts.fp, self.counts.fn_, self.precision, self.recall, self.f1
        )
    }
}

/// Draws `iterations` episodes with a generator seeded by `seed`, predicts
/// every query and accumulates strict matches. Sampling is sequential, so the
/// episodes depend only on the seed; predictions run under `exec`.
pub fn episode_eval(
    heads: &HeadParams,
    provider: &dyn EmbeddingProvider,
    sampler: &EpisodeSampler<'_>,
    iterations: usize,
    seed: u64,
    exec: Exec,
) -> Result<EvalReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let episodes = (0..iterations).map(|_| sampler.sample(&mut rng)).collect::<Result<Vec<Episode>>>()?;
    evaluate_episodes(heads, provider, &episodes, seed, exec)
}

/// Scores a fixed list of episodes.
pub fn evaluate_episodes(
    heads: &HeadParams,
    provider: &dyn EmbeddingProvider,
    episodes: &[Episode],
    seed: u64,
    exec: Exec,
) -> Result<EvalReport> {
    // Parallelism lives at the episode level; each prediction runs sequentially.
    let inner = if exec.is_parallel() { Exec::Sequential } else { exec };
    let per_episode = map_slice(exec, episodes, |ep| {
        predict_triples(ep, heads, provider, inner).map(|pred| match_triples(&pred, &ep.query_gold))
    });
    let mut counts = MatchCounts::default();
    for c in per_episode {
        counts.add(c?);
    }
    Ok(EvalReport::from_counts(episodes.len(), seed, counts))
}
