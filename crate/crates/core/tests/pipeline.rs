use fsre_core::encoding::{HashEncoder, HeadParams};
use fsre_core::eval::{episode_eval, evaluate_episodes};
use fsre_core::fewshot::{
    decode_checkpoint, encode_checkpoint, predict_triples, train, EpisodeSampler, SamplerConfig, TrainConfig, TrainingMode,
};
use fsre_core::par::Exec;
use fsre_core::synth::{synthetic_corpus, SynthConfig};
use fsre_core::tagging::scheme_for;
use fsre_core::{Episode, Instance, RelationCatalog, RelationId, SchemeId, Span, SupportItem, Triple};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unique_instance(id: u64, rng: &mut ChaCha8Rng) -> Instance {
    let m = rng.gen_range(5..=9);
    let tokens = (0..m).map(|k| format!("u{id}_{k}")).collect();
    let mut triples = Vec::new();
    for r in 0..2u32 {
        let h = rng.gen_range(0..m - 2);
        let t = rng.gen_range(h + 1..m - 1);
        triples.push(Triple::new(Span::new(h, h + 1), RelationId(r), Span::new(t, t + 2)));
    }
    Instance::new(id, tokens, triples)
}

/// The query sits in its own support set, so every query token has an exact
/// match at distance zero.
fn self_support_episode(scheme: SchemeId, rng: &mut ChaCha8Rng) -> Episode {
    let tagger = scheme_for(scheme);
    let categories = vec![RelationId(0), RelationId(1)];
    let query = unique_instance(0, rng);
    let support = [query.clone(), unique_instance(1, rng), unique_instance(2, rng)]
        .into_iter()
        .map(|inst| {
            let labels = categories.iter().map(|&c| tagger.encode(inst.len(), &inst.triples, c)).collect();
            SupportItem { instance: inst, labels }
        })
        .collect();
    Episode { categories, support, query_gold: query.triples.clone(), query }
}

#[test]
fn self_support_scores_perfectly() {
    let catalog = RelationCatalog::from_names(["/a/b/c", "/a/b/d"]).unwrap();
    let enc = HashEncoder::new(&catalog, 3, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for scheme in [SchemeId::TpLinker, SchemeId::Bitt] {
        let heads = HeadParams::init(scheme, 16, 8, &mut rng);
        let eps: Vec<Episode> = (0..20).map(|_| self_support_episode(scheme, &mut rng)).collect();
        for ep in &eps {
            assert_eq!(predict_triples(ep, &heads, &enc, Exec::Sequential).unwrap(), ep.query_gold);
        }
        let report = evaluate_episodes(&heads, &enc, &eps, 0, Exec::default()).unwrap();
        assert_eq!((report.precision, report.recall, report.f1), (1.0, 1.0, 1.0));
    }
}

#[test]
fn training_is_reproducible_and_thread_independent() {
    let corpus = synthetic_corpus(&SynthConfig { per_relation: 15, ..Default::default() }).unwrap();
    let enc = HashEncoder::new(&corpus.catalog, 1, 16);
    let src = corpus.instances_with(&corpus.source);
    let cfg = TrainConfig {
        hidden: 8,
        pretrain_lr: 1e-2,
        finetune_lr: 1e-3,
        batch_size: 8,
        pretrain_steps: 10,
        finetune_steps: 10,
        seed: 4,
        ..Default::default()
    };
    let a = train(TrainingMode::PretrainFinetune, &cfg, &src, &corpus.source, &enc, Exec::Sequential).unwrap();
    let b = train(TrainingMode::PretrainFinetune, &cfg, &src, &corpus.source, &enc, Exec::Parallel).unwrap();
    assert_eq!(encode_checkpoint(&a), encode_checkpoint(&b));
    let restored = decode_checkpoint(&encode_checkpoint(&a)).unwrap();
    assert_eq!(restored.heads, a.heads);

    let tgt = corpus.instances_with(&corpus.target);
    let sampler = EpisodeSampler::new(&tgt, &corpus.target, scheme_for(SchemeId::TpLinker), SamplerConfig::default()).unwrap();
    let r1 = episode_eval(&a.heads, &enc, &sampler, 30, 9, Exec::Sequential).unwrap();
    let r2 = episode_eval(&restored.heads, &enc, &sampler, 30, 9, Exec::Parallel).unwrap();
    assert_eq!(r1, r2);
}

#[test]
fn every_mode_trains_both_schemes() {
    let corpus = synthetic_corpus(&SynthConfig { per_relation: 10, ..Default::default() }).unwrap();
    let enc = HashEncoder::new(&corpus.catalog, 1, 16);
    let src = corpus.instances_with(&corpus.source);
    for scheme in [SchemeId::TpLinker, SchemeId::Bitt] {
        for mode in [TrainingMode::NoPretrain, TrainingMode::PretrainOnly, TrainingMode::PretrainFinetune] {
            let cfg = TrainConfig { scheme, hidden: 8, batch_size: 4, pretrain_steps: 3, finetune_steps: 3, ..Default::default() };
            let state = train(mode, &cfg, &src, &corpus.source, &enc, Exec::default()).unwrap();
            assert!(state.is_finite(), "{scheme} {}", mode.as_str());
            assert_eq!(state.step as usize, 3 * (mode.pretrains() as usize + mode.finetunes() as usize));
        }
    }
}
