//! Exhaustive versus accelerated pair distances on random episodes.

use std::time::Instant;

use ndarray::{Array2, ArrayView2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metricspace::{
    accel_pair_sums, exact_pair_fill, exact_pair_sums, fill_negative, fill_positive, sqdist_with,
    top_e_candidates, ExactFill, NegativeDistances, NegativeFill, PairRoute, SupportBlocks, TopE,
};
use crate::par::Exec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Query length.
    pub m: usize,
    /// Number of support instances.
    pub support: usize,
    /// Length of each support instance; the query length when absent.
    pub support_len: Option<usize>,
    pub e: usize,
    /// Positive support cells `|W_S|`.
    pub positives: usize,
    pub hidden: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { m: 50, support: 4, support_len: None, e: 3, positives: 8, hidden: 32, repetitions: 5, seed: 0 }
    }
}

/// Per-path timings in milliseconds, one entry per repetition.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathTiming {
    pub runs_ms: Vec<f64>,
    pub median_ms: f64,
}

impl PathTiming {
    fn from_runs(mut runs_ms: Vec<f64>) -> Self {
        let mut sorted = runs_ms.clone();
        sorted.sort_by(f64::total_cmp);
        let median_ms = match sorted.len() {
            0 => 0.0,
            n if n % 2 == 1 => sorted[n / 2],
            n => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
        };
        runs_ms.shrink_to_fit();
        PathTiming { runs_ms, median_ms }
    }
}

/// How the min-mode negative fill compares with the exhaustive negative
/// minimum, cell by cell.
///
/// `premise_violations` counts cells whose top-`E` candidates hold no negative
/// pair at all. `ordering_violations` counts cells where the first candidate
/// left after removing the positive distance is not a negative pair; this is
/// exactly when the min fill can differ from the true negative minimum, and it
/// includes cells with two positives ahead of the first negative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillAudit {
    pub cells: u64,
    pub premise_violations: u64,
    pub mismatches_with_premise: u64,
    pub ordering_violations: u64,
    pub mismatches_with_ordering: u64,
}

impl FillAudit {
    pub fn add(&mut self, o: FillAudit) {
        self.cells += o.cells;
        self.premise_violations += o.premise_violations;
        self.mismatches_with_premise += o.mismatches_with_premise;
        self.ordering_violations += o.ordering_violations;
        self.mismatches_with_ordering += o.mismatches_with_ordering;
    }

    pub fn violation_rate(&self) -> f64 {
        if self.cells == 0 {
            0.0
        } else {
            self.premise_violations as f64 / self.cells as f64
        }
    }
}

fn label_of(route: PairRoute, blocks: &SupportBlocks, labels: &[&[u8]]) -> u8 {
    let s = blocks.instance_of(route.row);
    let (off, ms) = (blocks.offset(s), blocks.len_of(s));
    labels[s][(route.row - off) * ms + (route.col - off)]
}

/// Compares a min-mode negative fill against the exhaustive fill of the same
/// chunk.
pub fn audit_negative_fill(
    top: &TopE,
    negative: &NegativeDistances,
    exact: &ExactFill,
    blocks: &SupportBlocks,
    labels: &[&[u8]],
    tol: f64,
) -> FillAudit {
    let mut audit = FillAudit::default();
    for i in 0..top.m_head {
        for j in 0..top.m_tail {
            audit.cells += 1;
            let cell = top.cell(i, j);
            let is_neg: Vec<bool> = cell.iter().map(|c| label_of(c.route, blocks, labels) == 0).collect();
            let dp = exact.positive.as_ref().map(|p| p.values[[i, j]]);
            let removed = dp.and_then(|p| cell.iter().position(|c| c.value == p));
            let first_left = (0..cell.len()).find(|&k| Some(k) != removed);
            let premise = is_neg.iter().any(|&n| n);
            let ordering = first_left.is_some_and(|k| is_neg[k]);
            let got = negative.values[[i, j]];
            let mismatch = match &exact.negative {
                Some(n) => (got - n.values[[i, j]]).abs() > tol || !got.is_finite(),
                None => got.is_finite(),
            };
            if premise {
                audit.mismatches_with_premise += mismatch as u64;
            } else {
                audit.premise_violations += 1;
            }
            if ordering {
                audit.mismatches_with_ordering += mismatch as u64;
            } else {
                audit.ordering_violations += 1;
            }
        }
    }
    audit
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub parallel: bool,
    pub pair_sum_count_exact: u64,
    pub pair_sum_count_accel: u64,
    pub closed_form_exact: u64,
    pub closed_form_accel: u64,
    pub count_ratio: f64,
    pub wall_times: BenchTimes,
    pub speedup: f64,
    pub audit: FillAudit,
    pub violation_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchTimes {
    pub exact: PathTiming,
    pub accel: PathTiming,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let c = &self.config;
        format!(
            "m={} |S|={} E={} |W_S|={}\n\
             path    pair sums      closed form    median ms\n\
             exact   {:<14} {:<14} {:.3}\n\
             accel   {:<14} {:<14} {:.3}\n\
             count ratio {:.2}  speedup {:.2}x  violation rate {:.4}\n",
            c.m,
            c.support,
            c.e,
            c.positives,
            self.pair_sum_count_exact,
            self.closed_form_exact,
            self.wall_times.exact.median_ms,
            self.pair_sum_count_accel,
            self.closed_form_accel,
            self.wall_times.accel.median_ms,
            self.count_ratio,
            self.speedup,
            self.violation_rate
        )
    }
}

/// Random query/support states and one positive cell set per repetition.
struct BenchCase {
    dh: Array2<f64>,
    dt: Array2<f64>,
    labels: Vec<Vec<u8>>,
    positives: Vec<PairRoute>,
}

fn make_case(cfg: &BenchConfig, blocks: &SupportBlocks, rng: &mut ChaCha8Rng, exec: Exec) -> Result<BenchCase> {
    let mut states = |rows: usize| Array2::from_shape_fn((rows, cfg.hidden), |_| rng.gen_range(-1.0..1.0));
    let (qh, qt, sh, st) = (states(cfg.m), states(cfg.m), states(blocks.total()), states(blocks.total()));
    let dh = sqdist_with(exec, qh.view(), sh.view())?;
    let dt = sqdist_with(exec, qt.view(), st.view())?;
    let mut labels: Vec<Vec<u8>> = (0..blocks.instances()).map(|s| vec![0; blocks.len_of(s).pow(2)]).collect();
    let mut positives = Vec::with_capacity(cfg.positives);
    for flat in sample(rng, blocks.pair_count(), cfg.positives).into_iter() {
        let mut rest = flat;
        let mut s = 0;
        while rest >= blocks.len_of(s).pow(2) {
            rest -= blocks.len_of(s).pow(2);
            s += 1;
        }
        labels[s][rest] = 1;
        let ms = blocks.len_of(s);
        positives.push(PairRoute { row: blocks.offset(s) + rest / ms, col: blocks.offset(s) + rest % ms });
    }
    positives.sort();
    Ok(BenchCase { dh, dt, labels, positives })
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Runs both paths `repetitions` times on fresh random cases and reports the
/// measured pair-sum counters, their closed forms, timings and how often the
/// min-mode negative fill departs from the exhaustive one.
pub fn bench_distance(cfg: &BenchConfig, exec: Exec) -> Result<BenchReport> {
    if cfg.m == 0 || cfg.support == 0 || cfg.hidden == 0 || cfg.repetitions == 0 {
        return Err(Error::Config("bench needs m, support, hidden and repetitions > 0".into()));
    }
    let blocks = SupportBlocks::uniform(cfg.support, cfg.support_len.unwrap_or(cfg.m));
    if blocks.len_of(0) == 0 {
        return Err(Error::Config("support instances need at least one token".into()));
    }
    if cfg.positives > blocks.pair_count() {
        return Err(Error::Config(format!("{} positives exceed {} support pairs", cfg.positives, blocks.pair_count())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut exact_runs, mut accel_runs) = (Vec::new(), Vec::new());
    let (mut exact_count, mut accel_count) = (0u64, 0u64);
    let mut audit = FillAudit::default();
    for _ in 0..cfg.repetitions {
        let case = make_case(cfg, &blocks, &mut rng, exec)?;
        let label_refs: Vec<&[u8]> = case.labels.iter().map(Vec::as_slice).collect();
        let (dh, dt): (ArrayView2<f64>, ArrayView2<f64>) = (case.dh.view(), case.dt.view());

        let t = Instant::now();
        let exact = exact_pair_fill(dh, dt, &blocks, &label_refs, exec)?;
        exact_runs.push(ms_since(t));

        let t = Instant::now();
        let (pos, pos_sums) = fill_positive(dh, dt, &blocks, &case.positives, exec)?;
        let top = top_e_candidates(dh, dt, &blocks, cfg.e, exec)?;
        let neg = fill_negative(&top, pos.as_ref(), NegativeFill::Min);
        accel_runs.push(ms_since(t));

        exact_count = exact.pair_sums;
        accel_count = pos_sums + top.pair_sums;
        audit.add(audit_negative_fill(&top, &neg, &exact, &blocks, &label_refs, 1e-9));
    }
    let exact = PathTiming::from_runs(exact_runs);
    let accel = PathTiming::from_runs(accel_runs);
    let speedup = if accel.median_ms > 0.0 { exact.median_ms / accel.median_ms } else { f64::INFINITY };
    Ok(BenchReport {
        config: cfg.clone(),
        parallel: exec.is_parallel(),
        pair_sum_count_exact: exact_count,
        pair_sum_count_accel: accel_count,
        closed_form_exact: exact_pair_sums(cfg.m, &blocks),
        closed_form_accel: accel_pair_sums(cfg.m, &blocks, cfg.positives, cfg.e),
        count_ratio: exact_count as f64 / accel_count.max(1) as f64,
        wall_times: BenchTimes { exact, accel },
        speedup,
        violation_rate: audit.violation_rate(),
        audit,
    })
}
