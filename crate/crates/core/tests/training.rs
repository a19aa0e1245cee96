use valb::corpus::{generate_synthetic, split_dataset};
use valb::embed::build_vocabs;
use valb::eval::MatchLevel;
use valb::parse::{parse_corpus, ParseOptions};
use valb::tagger::FORBIDDEN_SCORE;
use valb::train::{evaluate_model, finetune, load_model, save_model, train, TrainConfig};
use valb::{AnnotatedLog, Error, Hyperparams, SplitSpec, Tag, TagMode, TaggerModel};

fn small_hp(mode: TagMode) -> Hyperparams {
    Hyperparams {
        word_dim: 16,
        char_emb_dim: 16,
        char_filters: 8,
        lstm_hidden: 16,
        n_tags: mode.tags().len(),
        ..Hyperparams::default()
    }
}

fn init(logs: &[AnnotatedLog], hp: Hyperparams, mode: TagMode, seed: u64) -> TaggerModel {
    let (wv, cv) = build_vocabs(logs, 1).unwrap();
    TaggerModel::init(hp, mode, wv, cv, None, seed).unwrap()
}

fn corpus(seed: u64, templates: usize, logs: usize) -> Vec<AnnotatedLog> {
    generate_synthetic(seed, templates, logs).unwrap().0
}

#[test]
fn memorizes_twenty_logs() {
    let logs: Vec<AnnotatedLog> = corpus(5, 5, 100).into_iter().take(20).collect();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let out = train(init(&logs, Hyperparams::default(), TagMode::Multiclass, 5), &logs, &logs, &cfg).unwrap();
    assert_eq!(out.history.len(), cfg.epochs);
    let last = out.history.last().unwrap().train_loss;
    assert!(last < 0.05, "final training loss {last}");
    assert!(!out.loss_flagged);
    assert!(out.best.metric >= out.history[0].val_metric);
}

#[test]
fn same_seed_same_run() {
    let logs = corpus(2, 5, 100);
    let (tr, va, _) = split_dataset(&logs, &SplitSpec::standard(2)).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let m = init(&tr, small_hp(TagMode::Multiclass), TagMode::Multiclass, 9);
        train(m, &tr, &va, &cfg).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.history.len(), 4);
    assert_eq!(a.best.epoch, b.best.epoch);
    assert_eq!(a.history, b.history);
    assert_eq!(a.best.model, b.best.model);
}

#[test]
fn forbidden_transitions_survive_training() {
    let logs = corpus(3, 5, 100);
    let (tr, va, _) = split_dataset(&logs, &SplitSpec::standard(3)).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let m = train(init(&tr, small_hp(TagMode::Multiclass), TagMode::Multiclass, 3), &tr, &va, &cfg)
        .unwrap()
        .into_model();
    let o = m.tags.index_of(Tag::Outside).unwrap();
    let i_oid = m.tags.index_of("I-OID".parse().unwrap()).unwrap();
    let n = m.tags.len();
    assert_eq!(m.params.layers.trans.data[o * n + i_oid], FORBIDDEN_SCORE);
    assert_eq!(m.params.layers.start.data[i_oid], FORBIDDEN_SCORE);
    // the padding rows of both embedding tables stay zero
    let wd = m.hp.word_dim;
    assert!(m.params.word_emb.data[..wd].iter().all(|&x| x == 0.0));
    assert!(m.params.char_emb.data[..m.hp.char_emb_dim].iter().all(|&x| x == 0.0));
}

#[test]
fn save_load_tags_identically() {
    let logs = corpus(4, 5, 100);
    let (tr, va, te) = split_dataset(&logs, &SplitSpec::standard(4)).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let m = train(init(&tr, small_hp(TagMode::Multiclass), TagMode::Multiclass, 4), &tr, &va, &cfg)
        .unwrap()
        .into_model();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.valb");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.predict(&te), m.predict(&te));
}

#[test]
fn binary_model_needs_explicit_collapse() {
    let logs = corpus(6, 5, 100);
    let binary: Vec<AnnotatedLog> = logs.iter().map(|l| l.to_binary()).collect();
    let (tr, va, te) = split_dataset(&binary, &SplitSpec::standard(6)).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        mode: TagMode::Binary,
        ..TrainConfig::default()
    };
    let m = train(init(&tr, small_hp(TagMode::Binary), TagMode::Binary, 6), &tr, &va, &cfg)
        .unwrap()
        .into_model();
    let (_, _, multi_te) = split_dataset(&logs, &SplitSpec::standard(6)).unwrap();
    assert!(matches!(
        evaluate_model(&m, &multi_te, false, MatchLevel::Span),
        Err(Error::Mode(_))
    ));
    let collapsed = evaluate_model(&m, &multi_te, true, MatchLevel::Span).unwrap();
    let direct = evaluate_model(&m, &te, false, MatchLevel::Span).unwrap();
    assert_eq!(collapsed.general_accuracy, direct.general_accuracy);

    // a multiclass config cannot train on a binary model
    let bad = TrainConfig {
        mode: TagMode::Multiclass,
        ..cfg
    };
    assert!(matches!(train(m, &tr, &va, &bad), Err(Error::Mode(_))));
}

#[test]
fn finetune_guards_and_runs() {
    let logs = corpus(7, 5, 100);
    let (tr, va, _) = split_dataset(&logs, &SplitSpec::standard(7)).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        ..TrainConfig::default()
    };
    let m = init(&tr, small_hp(TagMode::Multiclass), TagMode::Multiclass, 7);
    assert!(matches!(finetune(&m, &[], &va, &cfg), Err(Error::InvalidArgument(_))));
    assert!(matches!(finetune(&m, &tr, &[], &cfg), Err(Error::InvalidArgument(_))));
    for n in [5, 10] {
        let out = finetune(&m, &tr[..n], &va[..n], &cfg).unwrap();
        assert_eq!(out.history.len(), 2);
        // vocabularies are reused
        assert_eq!(out.model().word_vocab, m.word_vocab);
    }
}

#[test]
fn parses_trained_corpus_into_its_templates() {
    let logs = corpus(8, 5, 200);
    let (tr, va, _) = split_dataset(&logs, &SplitSpec::new(0.6, 0.2, 0.2, 8).unwrap()).unwrap();
    let m = train(init(&tr, Hyperparams::default(), TagMode::Multiclass, 8), &tr, &va, &TrainConfig::default())
        .unwrap()
        .into_model();
    let lines: Vec<String> = logs[..100].iter().map(|l| l.message()).collect();
    let parsed = parse_corpus(&m, &lines, &ParseOptions::default());
    assert!(parsed.errors.is_empty());
    assert_eq!(parsed.store.len(), 5);
    assert_eq!(parsed.store.entries().iter().map(|e| e.count).sum::<usize>(), 100);
}
