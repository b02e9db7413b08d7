//! `fsre`: sampling, tagging, training, evaluation and benchmarking from the
//! command line.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use fsre_core::config::{Dataset, RunConfig};
use fsre_core::encoding::EmbeddingProvider;
use fsre_core::eval::{bench_distance, episode_eval, BenchConfig};
use fsre_core::fewshot::{
    finetune, load_checkpoint, pretrain, pretrain_examples, save_checkpoint, train, DistanceMode, EpisodeSampler,
    TrainState,
};
use fsre_core::ingest::{parse_instances, write_instances, EmbeddingCache, InvalidPolicy, RelationPolicy};
use fsre_core::metricspace::NegativeFill;
use fsre_core::par::Exec;
use fsre_core::synth::{synthetic_corpus, SynthConfig};
use fsre_core::tagging::scheme_for;
use fsre_core::{Error, Instance, RelationCatalog, RelationId, SchemeId, Triple, DEFAULT_MAX_SEQ_LEN};
use serde_json::json;

#[derive(Parser)]
#[command(name = "fsre", version, about = "Few-shot joint relation extraction by sequence tagging")]
struct Cli {
    /// Run every kernel on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw episodes from the source or target domain and print them as JSON lines.
    Sample {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 5)]
        count: usize,
        /// Sample target-domain episodes instead of source-domain ones.
        #[arg(long)]
        target: bool,
    },
    /// Encode one instance for a relation, print the label matrices and decode them back.
    Tag {
        /// JSONL file; the first instance is used.
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        relation: String,
        #[arg(long, default_value = "tplinker")]
        scheme: SchemeId,
    },
    /// Sequence-tagging pretraining on the source domain.
    Pretrain {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Episodic fine-tuning on the source domain.
    Finetune {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint to start from; random heads when absent.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Episodic evaluation on the target domain. Trains according to the
    /// configured mode unless a checkpoint is given.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Print only the JSON report.
        #[arg(long)]
        json: bool,
    },
    /// Exact against accelerated label distances on random states.
    Bench {
        #[arg(long, default_value_t = 50)]
        m: usize,
        #[arg(long, default_value_t = 4)]
        support: usize,
        #[arg(long, default_value_t = 3)]
        e: usize,
        #[arg(long, default_value_t = 8)]
        positives: usize,
        #[arg(long, default_value_t = 32)]
        hidden: usize,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: bool,
    },
    /// Summarize an embedding cache.
    CacheInfo {
        path: PathBuf,
        /// Checksum every record.
        #[arg(long)]
        verify: bool,
    },
    /// Write the synthetic template corpus as JSONL.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        per_relation: usize,
        #[arg(long, default_value_t = 0.0)]
        two_clause_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scheme: Option<SchemeId>,
    /// Negative fill: min or avg.
    #[arg(long)]
    negative: Option<NegativeFill>,
    /// Distance mode: exact or accel.
    #[arg(long)]
    distance: Option<DistanceMode>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    top_e: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    pretrain_steps: Option<usize>,
    #[arg(long)]
    finetune_steps: Option<usize>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = std::result::Result<(), Failure>;

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(&self.config)?;
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(seed, scheme, negative, distance, n, k, top_e, pretrain_steps, finetune_steps);
        if let Some(it) = self.iterations {
            cfg.eval_iterations = it;
        }
        if self.checkpoint.is_some() {
            cfg.checkpoint = self.checkpoint.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn announce(cfg: &RunConfig, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "resolved config:\n{}", cfg.to_json())?;
    writeln!(out, "seed: {}", cfg.seed)
}

fn triple_json(t: &Triple, catalog: &RelationCatalog) -> serde_json::Value {
    json!({
        "head": [t.head.start, t.head.end],
        "relation": catalog.name(t.relation).unwrap_or("?"),
        "tail": [t.tail.start, t.tail.end],
    })
}

fn check_scheme(state: &TrainState, cfg: &RunConfig, provider: &dyn EmbeddingProvider) -> Outcome {
    if state.scheme() != cfg.scheme {
        return Err(Failure::Usage(format!("checkpoint holds {} heads, config asks for {}", state.scheme(), cfg.scheme)));
    }
    if state.heads.embed_dim() != provider.dim() {
        return Err(Failure::Usage(format!(
            "checkpoint expects {}-dimensional embeddings, encoder gives {}",
            state.heads.embed_dim(),
            provider.dim()
        )));
    }
    Ok(())
}

fn sample(cfg: &RunConfig, data: &Dataset, count: usize, target: bool, out: &mut impl Write) -> Outcome {
    let (instances, relations) = if target { (&data.eval, &data.target) } else { (&data.train, &data.source) };
    let sampler = EpisodeSampler::new(instances, relations, scheme_for(cfg.scheme), cfg.sampler())?;
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(cfg.seed);
    for _ in 0..count {
        let ep = sampler.sample(&mut rng)?;
        let line = json!({
            "categories": ep.categories.iter().map(|&c| data.catalog.name(c).unwrap_or("?")).collect::<Vec<_>>(),
            "support": ep.support.iter().map(|s| s.instance.id).collect::<Vec<_>>(),
            "query": ep.query.id,
            "query_gold": ep.query_gold.iter().map(|t| triple_json(t, &data.catalog)).collect::<Vec<_>>(),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn tag(path: &Path, relation: &str, scheme: SchemeId, out: &mut impl Write) -> Outcome {
    let mut catalog = RelationCatalog::default();
    let report = parse_instances(
        BufReader::new(File::open(path)?),
        &mut catalog,
        RelationPolicy::Grow,
        DEFAULT_MAX_SEQ_LEN,
        InvalidPolicy::Fatal,
    )?;
    let inst: &Instance = report.instances.first().ok_or_else(|| Failure::Data(format!("{} holds no instance", path.display())))?;
    let r: RelationId = catalog.intern(relation).map_err(Failure::from)?;
    let tagger = scheme_for(scheme);
    let m = inst.len();
    let labels = tagger.encode(m, &inst.triples, r);
    writeln!(out, "instance {} ({m} tokens): {}", inst.id, inst.tokens.join(" "))?;
    writeln!(out, "scheme {scheme}, layout {}", labels.layout)?;
    for c in 0..labels.layout.chunks() {
        writeln!(out, "chunk {c}:")?;
        let chunk = labels.chunk(c);
        let width = if chunk.len() == m * m { m } else { chunk.len() };
        for row in chunk.chunks(width.max(1)) {
            let cells: Vec<String> = row.iter().map(u8::to_string).collect();
            writeln!(out, "  {}", cells.join(" "))?;
        }
    }
    let decoded = tagger.decode(&labels, r, m)?;
    let gold: BTreeSet<Triple> = inst.triples_of(r).copied().collect();
    for t in &decoded {
        writeln!(out, "decoded: {}", triple_json(t, &catalog))?;
    }
    let same = decoded.iter().copied().collect::<BTreeSet<_>>() == gold;
    writeln!(out, "roundtrip: {}", if same { "ok" } else { "differs (the labels also fit another triple set)" })?;
    Ok(())
}

fn pretrain_cmd(cfg: &RunConfig, data: &Dataset, provider: &dyn EmbeddingProvider, out_path: &Path, out: &mut impl Write) -> Outcome {
    let tc = cfg.train_config();
    let mut state = TrainState::new(cfg.scheme, provider.dim(), cfg.hidden, cfg.gamma, cfg.seed);
    let examples = pretrain_examples(&data.train, &data.source, scheme_for(cfg.scheme), &mut state.rng);
    let losses = pretrain(&mut state, &tc, &examples, cfg.pretrain_steps, provider)?;
    save_checkpoint(out_path, &state)?;
    writeln!(out, "pretrained {} steps on {} examples, final loss {:.6}", losses.len(), examples.len(), losses.last().copied().unwrap_or(f64::NAN))?;
    writeln!(out, "checkpoint: {}", out_path.display())?;
    Ok(())
}

fn finetune_cmd(
    cfg: &RunConfig,
    data: &Dataset,
    provider: &dyn EmbeddingProvider,
    init: Option<&Path>,
    out_path: &Path,
    exec: Exec,
    out: &mut impl Write,
) -> Outcome {
    let mut state = match init {
        Some(p) => {
            let s = load_checkpoint(p)?;
            check_scheme(&s, cfg, provider)?;
            s
        }
        None => TrainState::new(cfg.scheme, provider.dim(), cfg.hidden, cfg.gamma, cfg.seed),
    };
    let sampler = EpisodeSampler::new(&data.train, &data.source, scheme_for(cfg.scheme), cfg.sampler())?;
    let losses = finetune(&mut state, &cfg.train_config(), &sampler, cfg.finetune_steps, provider, exec)?;
    save_checkpoint(out_path, &state)?;
    writeln!(out, "fine-tuned {} steps, final loss {:.6}", losses.len(), losses.last().copied().unwrap_or(f64::NAN))?;
    writeln!(out, "checkpoint: {}", out_path.display())?;
    Ok(())
}

fn eval_cmd(cfg: &RunConfig, data: &Dataset, provider: &dyn EmbeddingProvider, exec: Exec, json_only: bool, out: &mut impl Write) -> Outcome {
    let state = match &cfg.checkpoint {
        Some(p) => {
            let s = load_checkpoint(p)?;
            check_scheme(&s, cfg, provider)?;
            s
        }
        None => {
            log::info!("no checkpoint given; training in {} mode", cfg.mode.as_str());
            train(cfg.mode, &cfg.train_config(), &data.train, &data.source, provider, exec)?
        }
    };
    let sampler = EpisodeSampler::new(&data.eval, &data.target, scheme_for(cfg.scheme), cfg.sampler())?;
    let report = episode_eval(&state.heads, provider, &sampler, cfg.eval_iterations, cfg.seed, exec)?;
    writeln!(out, "{}", serde_json::to_string(&report).map_err(|e| Failure::Data(e.to_string()))?)?;
    if !json_only {
        writeln!(out, "split {}, {} target episodes", data.split_name, report.episodes)?;
        write!(out, "{}", report.table())?;
    }
    Ok(())
}

fn cache_info(path: &Path, verify: bool, out: &mut impl Write) -> Outcome {
    let cache = EmbeddingCache::open(path)?;
    let instances: BTreeSet<u64> = cache.records().iter().map(|r| r.instance_id).collect();
    let relations: BTreeSet<u32> = cache.records().iter().map(|r| r.relation_id).collect();
    let tokens: usize = cache.records().iter().map(|r| r.m).sum();
    writeln!(out, "path: {}", path.display())?;
    writeln!(out, "version: {}", cache.version())?;
    writeln!(out, "dim: {}", cache.dim())?;
    writeln!(out, "records: {}", cache.len())?;
    writeln!(out, "instances: {}", instances.len())?;
    writeln!(out, "relations: {}", relations.len())?;
    writeln!(out, "token rows: {tokens}")?;
    if verify {
        let bad = cache.verify();
        writeln!(out, "checksum failures: {bad}")?;
        if bad > 0 {
            return Err(Failure::Data(format!("{bad} records fail their checksum")));
        }
    }
    Ok(())
}

fn gen_synthetic(cfg: &SynthConfig, path: &Path, out: &mut impl Write) -> Outcome {
    let corpus = synthetic_corpus(cfg)?;
    let mut w = BufWriter::new(File::create(path)?);
    write_instances(&mut w, &corpus.instances, &corpus.catalog)?;
    w.flush()?;
    let names = |ids: &[RelationId]| ids.iter().map(|&r| corpus.catalog.name(r).unwrap_or("?").to_string()).collect::<Vec<_>>();
    let split = json!({"custom": {"source": names(&corpus.source), "target": names(&corpus.target)}});
    writeln!(out, "wrote {} instances to {}", corpus.instances.len(), path.display())?;
    writeln!(out, "split: {split}")?;
    Ok(())
}

fn run(cli: Cli, out: &mut impl Write) -> Outcome {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Tag { instance, relation, scheme } => tag(&instance, &relation, scheme, out),
        Command::Bench { m, support, e, positives, hidden, repetitions, seed, json } => {
            let cfg = BenchConfig { m, support, support_len: None, e, positives, hidden, repetitions, seed };
            let report = bench_distance(&cfg, exec)?;
            writeln!(out, "{}", serde_json::to_string(&report).map_err(|e| Failure::Data(e.to_string()))?)?;
            if !json {
                write!(out, "{}", report.table())?;
            }
            Ok(())
        }
        Command::CacheInfo { path, verify } => cache_info(&path, verify, out),
        Command::GenSynthetic { out: path, per_relation, two_clause_rate, seed } => {
            let cfg = SynthConfig { per_relation, two_clause_rate, seed, ..Default::default() };
            gen_synthetic(&cfg, &path, out)
        }
        Command::Sample { run, count, target } => {
            let cfg = run.resolve()?;
            announce(&cfg, out)?;
            sample(&cfg, &cfg.dataset()?, count, target, out)
        }
        Command::Pretrain { run, out: path } => {
            let cfg = run.resolve()?;
            announce(&cfg, out)?;
            let data = cfg.dataset()?;
            let provider = cfg.provider(&data.catalog)?;
            pretrain_cmd(&cfg, &data, provider.as_ref(), &path, out)
        }
        Command::Finetune { run, init, out: path } => {
            let cfg = run.resolve()?;
            announce(&cfg, out)?;
            let data = cfg.dataset()?;
            let provider = cfg.provider(&data.catalog)?;
            finetune_cmd(&cfg, &data, provider.as_ref(), init.as_deref(), &path, exec, out)
        }
        Command::Eval { run, json } => {
            let cfg = run.resolve()?;
            if !json {
                announce(&cfg, out)?;
            }
            let data = cfg.dataset()?;
            let provider = cfg.provider(&data.catalog)?;
            eval_cmd(&cfg, &data, provider.as_ref(), exec, json, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            let _ = out.flush();
            eprintln!("error: {msg}\n\n{}", Cli::command().render_usage());
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            let _ = out.flush();
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
