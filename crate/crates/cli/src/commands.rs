//! One function per subcommand.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use valb::corpus::synth::Lexicon;
use valb::corpus::{
    derive_binary_annotations, read_annotations, read_structured, render_annotations, split_dataset, ReadMode,
    StructuredColumns, SynthConfig,
};
use valb::embed::{build_vocabs, load_word_vectors};
use valb::eval::{evaluate, MatchLevel};
use valb::io_util::write_atomic;
use valb::parse::{parse_annotated, parse_corpus, CorpusParse, ParseOptions};
use valb::train::{load_model, save_model, EpochRecord, TrainOutcome};
use valb::{tokenize, AnnotatedLog, SplitSpec, TagMode, TaggerModel, VariableCategory};

use crate::config::{echo_run_config, RunConfig};
use crate::{DeriveArgs, EvalArgs, FinetuneArgs, InspectArgs, ParseArgs, SplitArgs, SynthArgs, TagArgs, TrainArgs};
use crate::UsageError;

fn require_file(path: &Path, what: &str) -> Result<(), UsageError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(UsageError(format!("{what} file {} does not exist", path.display())))
    }
}

fn read_mode(strict: bool) -> ReadMode {
    if strict {
        ReadMode::Strict
    } else {
        ReadMode::Lenient
    }
}

fn warn_json(kind: &str, line: usize, message: impl std::fmt::Display) {
    eprintln!(
        "{}",
        serde_json::json!({ "warning": kind, "line": line, "message": message.to_string() })
    );
}

/// Reads annotations, reporting skipped blocks as JSON warnings.
fn load_annotations(path: &Path, what: &str, strict: bool) -> anyhow::Result<Vec<AnnotatedLog>> {
    require_file(path, what)?;
    let ann = read_annotations(path, read_mode(strict))?;
    for e in &ann.skipped {
        let line = match e {
            valb::Error::Iob { line, .. } | valb::Error::Format { line, .. } | valb::Error::Tag { line, .. } => *line,
            _ => 0,
        };
        warn_json(e.kind(), line, e);
    }
    Ok(ann.logs)
}

/// The mode a set of annotations is written in; all-`O` sets fit either.
fn corpus_mode(logs: &[AnnotatedLog]) -> Option<TagMode> {
    let modes: Vec<TagMode> = logs.iter().filter_map(|l| l.mode()).collect();
    if modes.contains(&TagMode::Binary) {
        Some(TagMode::Binary)
    } else {
        modes.first().copied()
    }
}

/// Adapts annotations to a model mode: multiclass data trains binary models
/// after collapsing; the reverse is impossible.
fn adapt(logs: Vec<AnnotatedLog>, mode: TagMode, what: &str) -> anyhow::Result<Vec<AnnotatedLog>> {
    match (mode, corpus_mode(&logs)) {
        (TagMode::Binary, Some(TagMode::Multiclass)) => Ok(logs.iter().map(|l| l.to_binary()).collect()),
        (TagMode::Multiclass, Some(TagMode::Binary)) => Err(valb::Error::Mode(format!(
            "{what} set has binary annotations but the model is multiclass"
        ))
        .into()),
        _ => Ok(logs),
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{name}.{suffix}"))
}

fn render_settings(command: &str, settings: &[(&str, String)]) -> String {
    let mut out = format!("# valb {command}\n");
    for (k, v) in settings {
        let _ = writeln!(out, "{k} = {v}");
    }
    out
}

fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

fn report_outcome(out: &TrainOutcome, flags_history: Option<&Path>) -> anyhow::Result<()> {
    if let Some(p) = flags_history {
        write_atomic(p, history_jsonl(&out.history).as_bytes())?;
    }
    if out.loss_flagged {
        eprintln!(
            "{}",
            serde_json::json!({ "warning": "LossStalled", "message": "training loss did not decrease over a 5-epoch window" })
        );
    }
    println!(
        "{}",
        serde_json::json!({
            "best_epoch": out.best.epoch,
            "best_metric": out.best.metric,
            "epochs": out.history.len(),
        })
    );
    Ok(())
}

pub fn split(a: &SplitArgs) -> anyhow::Result<()> {
    let ratios: Vec<f64> = a
        .ratios
        .split(',')
        .map(|r| r.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| UsageError(format!("--ratios must be three numbers, got `{}`", a.ratios)))?;
    let [tr, va, te] = ratios[..] else {
        return Err(UsageError(format!("--ratios must be three numbers, got `{}`", a.ratios)).into());
    };
    let spec = SplitSpec::new(tr, va, te, a.seed).map_err(|e| UsageError(e.to_string()))?;
    let logs = load_annotations(&a.input, "input", a.strict)?;
    let (train, val, test) = split_dataset(&logs, &spec)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let outputs = [("train.txt", &train), ("val.txt", &val), ("test.txt", &test)];
    for (name, set) in outputs {
        write_atomic(&a.out_dir.join(name), render_annotations(set).as_bytes())?;
    }
    let text = render_settings(
        "split",
        &[
            ("input", a.input.display().to_string()),
            ("ratios", a.ratios.clone()),
            ("seed", a.seed.to_string()),
            ("strict", a.strict.to_string()),
        ],
    );
    write_atomic(&a.out_dir.join("run-config.txt"), text.as_bytes())?;
    println!(
        "{}",
        serde_json::json!({ "train": train.len(), "val": val.len(), "test": test.len() })
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut overrides = a.model.overrides();
    overrides.extend(a.flags.overrides());
    let rc = RunConfig::resolve(a.flags.config.as_deref(), &overrides)?;
    let cfg = rc.train_config()?;
    let hp = rc.hyperparams()?;
    require_file(&a.train, "train")?;
    require_file(&a.val, "val")?;
    let train_set = adapt(load_annotations(&a.train, "train", a.flags.strict)?, cfg.mode, "train")?;
    let val_set = adapt(load_annotations(&a.val, "val", a.flags.strict)?, cfg.mode, "validation")?;

    let (wv, cv) = build_vocabs(&train_set, rc.min_freq()?)?;
    let pretrained = match rc.embeddings() {
        Some(p) => {
            require_file(&p, "embeddings")?;
            let loaded = load_word_vectors(&p, &wv, hp.word_dim, cfg.seed)?;
            log::info!("pretrained vectors cover {:.1}% of the vocabulary", loaded.coverage * 100.0);
            Some(loaded.matrix)
        }
        None => None,
    };
    let init = TaggerModel::init(hp, cfg.mode, wv, cv, pretrained.as_deref(), cfg.seed)?;
    let outcome = valb::train::train(init, &train_set, &val_set, &cfg)?;
    save_model(outcome.model(), &a.out)?;

    let text = rc.render("train", &[("train", &a.train), ("val", &a.val), ("out", &a.out)]);
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.flags.history.as_deref());
    echo_run_config(&text, &outputs)?;
    report_outcome(&outcome, a.flags.history.as_deref())
}

pub fn finetune(a: &FinetuneArgs) -> anyhow::Result<()> {
    require_file(&a.model, "model")?;
    require_file(&a.train, "train")?;
    require_file(&a.val, "val")?;
    let model = load_model(&a.model)?;
    let mut rc = RunConfig::resolve(a.flags.config.as_deref(), &a.flags.overrides())?;
    rc.set("mode", model.mode());
    let cfg = rc.train_config()?;
    let train_set = adapt(load_annotations(&a.train, "train", a.flags.strict)?, cfg.mode, "train")?;
    let val_set = adapt(load_annotations(&a.val, "val", a.flags.strict)?, cfg.mode, "validation")?;
    let outcome = valb::train::finetune(&model, &train_set, &val_set, &cfg)?;
    save_model(outcome.model(), &a.out)?;

    let text = rc.render(
        "finetune",
        &[("model", &a.model), ("train", &a.train), ("val", &a.val), ("out", &a.out)],
    );
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.flags.history.as_deref());
    echo_run_config(&text, &outputs)?;
    report_outcome(&outcome, a.flags.history.as_deref())
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    require_file(path, "input")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text.lines().map(str::to_string).collect())
}

pub fn tag(a: &TagArgs) -> anyhow::Result<()> {
    require_file(&a.model, "model")?;
    let model = load_model(&a.model)?;
    let lines = read_lines(&a.input)?;
    let mut tokenized = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        match tokenize(line) {
            Ok(t) => tokenized.push(t),
            Err(e) => warn_json(e.kind(), i + 1, "empty line skipped"),
        }
    }
    let tags = model.tag_many(&tokenized);
    let logs = tokenized
        .into_iter()
        .zip(tags)
        .map(|(toks, tags)| AnnotatedLog::new(toks, tags))
        .collect::<valb::Result<Vec<_>>>()?;
    write_atomic(&a.output, render_annotations(&logs).as_bytes())?;
    let text = render_settings(
        "tag",
        &[
            ("model", a.model.display().to_string()),
            ("input", a.input.display().to_string()),
            ("output", a.output.display().to_string()),
        ],
    );
    echo_run_config(&text, &[&a.output])?;
    Ok(())
}

pub fn parse(a: &ParseArgs) -> anyhow::Result<()> {
    let preserve = VariableCategory::parse_list(&a.preserve).map_err(|e| UsageError(e.to_string()))?;
    if a.wildcard.is_empty() || a.wildcard.chars().any(char::is_whitespace) {
        return Err(UsageError("--wildcard must be a non-empty string without whitespace".into()).into());
    }
    let opts = ParseOptions {
        wildcard: a.wildcard.clone(),
        ..ParseOptions::preserving(preserve)
    };
    let (parsed, source): (CorpusParse, Vec<(&str, String)>) = match (&a.annotations, &a.model, &a.input) {
        (Some(ann), _, _) => {
            let logs = load_annotations(ann, "annotations", false)?;
            (parse_annotated(&logs, &opts), vec![("annotations", ann.display().to_string())])
        }
        (None, Some(model), Some(input)) => {
            require_file(model, "model")?;
            let m = load_model(model)?;
            let lines = read_lines(input)?;
            (
                parse_corpus(&m, &lines, &opts),
                vec![("model", model.display().to_string()), ("input", input.display().to_string())],
            )
        }
        _ => return Err(UsageError("give --model with --input, or --annotations".into()).into()),
    };
    for e in &parsed.errors {
        warn_json(e.error.kind(), e.line_no, "line skipped");
    }
    write_atomic(&a.output, parsed.records_jsonl().as_bytes())?;
    if let Some(t) = &a.templates {
        write_atomic(t, parsed.store.to_jsonl().as_bytes())?;
    }

    let mut settings = source;
    settings.push(("preserve", a.preserve.clone()));
    settings.push(("wildcard", a.wildcard.clone()));
    settings.push(("output", a.output.display().to_string()));
    if let Some(t) = &a.templates {
        settings.push(("templates", t.display().to_string()));
    }
    let mut outputs = vec![a.output.as_path()];
    outputs.extend(a.templates.as_deref());
    echo_run_config(&render_settings("parse", &settings), &outputs)?;
    println!(
        "{}",
        serde_json::json!({
            "lines": parsed.records.len() + parsed.errors.len(),
            "parsed": parsed.records.len(),
            "skipped": parsed.errors.len(),
            "templates": parsed.store.len(),
        })
    );
    Ok(())
}

pub fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let mut gold = load_annotations(&a.gold, "gold", false)?;
    let mut pred = load_annotations(&a.pred, "pred", false)?;
    if a.binary {
        gold = gold.iter().map(|l| l.to_binary()).collect();
        pred = pred.iter().map(|l| l.to_binary()).collect();
    } else if let (Some(g), Some(p)) = (corpus_mode(&gold), corpus_mode(&pred)) {
        if g != p {
            return Err(valb::Error::Mode(format!(
                "gold annotations are {g} but predictions are {p}; pass --binary to compare static vs. variable only"
            ))
            .into());
        }
    }
    let level = if a.token_level { MatchLevel::Token } else { MatchLevel::Span };
    let report = evaluate(&pred, &gold, level)?;
    print!("{}", report.to_text());
    if let Some(r) = &a.report {
        write_atomic(r, report.to_json().as_bytes())?;
        let text = render_settings(
            "eval",
            &[
                ("gold", a.gold.display().to_string()),
                ("pred", a.pred.display().to_string()),
                ("report", r.display().to_string()),
                ("token_level", a.token_level.to_string()),
                ("binary", a.binary.to_string()),
            ],
        );
        echo_run_config(&text, &[r])?;
    }
    Ok(())
}

pub fn derive_annotations(a: &DeriveArgs) -> anyhow::Result<()> {
    require_file(&a.structured, "structured")?;
    let columns = StructuredColumns {
        content: a.content_col.clone(),
        template: a.template_col.clone(),
    };
    let rows = read_structured(&a.structured, &columns)?;
    let mut logs = Vec::new();
    let mut errors = String::new();
    for row in &rows {
        match derive_binary_annotations(&row.content, &row.template) {
            Ok(l) => logs.push(l),
            Err(e) => {
                let entry = serde_json::json!({
                    "record": row.record,
                    "error": e.kind(),
                    "reason": e.to_string(),
                    "content": row.content,
                    "template": row.template,
                });
                errors.push_str(&entry.to_string());
                errors.push('\n');
            }
        }
    }
    let errors_path = sidecar(&a.out, "errors.jsonl");
    write_atomic(&a.out, render_annotations(&logs).as_bytes())?;
    write_atomic(&errors_path, errors.as_bytes())?;
    let text = render_settings(
        "derive-annotations",
        &[
            ("structured", a.structured.display().to_string()),
            ("content_col", a.content_col.clone()),
            ("template_col", a.template_col.clone()),
            ("out", a.out.display().to_string()),
        ],
    );
    echo_run_config(&text, &[&a.out])?;
    println!(
        "{}",
        serde_json::json!({ "rows": rows.len(), "annotated": logs.len(), "failed": rows.len() - logs.len() })
    );
    Ok(())
}

pub fn synth(a: &SynthArgs) -> anyhow::Result<()> {
    let lexicon: Lexicon = serde_json::from_value(serde_json::Value::String(a.lexicon.clone()))
        .map_err(|_| UsageError(format!("unknown lexicon `{}` (expected full, familya or familyb)", a.lexicon)))?;
    let mut cfg = SynthConfig::new(a.seed, a.templates, a.logs).with_lexicon(lexicon);
    if let Some(r) = a.polymorphic_rate {
        cfg.polymorphic_rate = r;
    }
    let (logs, spec) = cfg.generate().map_err(|e| UsageError(e.to_string()))?;
    write_atomic(&a.out, render_annotations(&logs).as_bytes())?;
    write_atomic(&sidecar(&a.out, "spec.json"), serde_json::to_string_pretty(&spec)?.as_bytes())?;

    let mut coverage = format!("templates {}\nlogs {}\n", spec.templates.len(), logs.len());
    for c in VariableCategory::ALL {
        let n = spec.category_counts.get(c.abbrev()).copied().unwrap_or(0);
        let _ = writeln!(coverage, "{} {n}", c.abbrev());
    }
    write_atomic(&sidecar(&a.out, "coverage.txt"), coverage.as_bytes())?;
    let text = render_settings(
        "synth",
        &[
            ("seed", a.seed.to_string()),
            ("templates", a.templates.to_string()),
            ("logs", a.logs.to_string()),
            ("lexicon", a.lexicon.clone()),
            ("polymorphic_rate", cfg.polymorphic_rate.to_string()),
            ("out", a.out.display().to_string()),
        ],
    );
    echo_run_config(&text, &[&a.out])?;
    print!("{coverage}");
    Ok(())
}

pub fn inspect(a: &InspectArgs) -> anyhow::Result<()> {
    require_file(&a.model, "model")?;
    let m = load_model(&a.model)?;
    let info = serde_json::json!({
        "mode": m.mode().to_string(),
        "n_tags": m.hp.n_tags,
        "tags": m.tags.tags().iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        "hyperparams": m.hp,
        "word_vocab": m.word_vocab.len(),
        "char_vocab": m.char_vocab.len(),
        "parameters": m.params.num_scalars(),
    });
    println!("{}", serde_json::to_string_pretty(&info)?);
    Ok(())
}
