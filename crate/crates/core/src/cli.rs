//! The `saecon` command-line tool: prepare, train, eval, predict, sweep and
//! baseline over a [`RunConfig`].

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::{sweep_key, EncoderMode, ImbalanceMode, RunConfig};
use crate::corpus::{
    carve_dev, class_counts, count_triple, flip_augment, load_absa, load_cpc, load_cpc_unlabeled, make_splits,
    upsample, write_absa_jsonl, write_cpc_jsonl, AbsaInstance, CpcFormat, CpcInstance, CpcLabel, SplitBundle,
};
use crate::encode::{
    load_conllu, load_static_embeddings, tokenize, write_conllu, write_static_embeddings, ContextualSidecar,
    LabelVocab, ParsedSentence,
};
use crate::eval::{case_study, evaluate_cpc, majority_baseline, sentiment_distance, write_case_study_csv, EvalReport};
use crate::features::{Featurizer, VectorSource};
use crate::model::SaeconModel;
use crate::train::{load_checkpoint, save_checkpoint, train, write_metric_log, Manifest, TrainData, TrainOutcome};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "saecon", version, about = "Comparative preference classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config file, or `default` for the built-in settings.
    #[arg(long, global = true, default_value = "default")]
    pub config: String,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// `KEY=VALUE` override applied after the config file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory (default `runs/<command>`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate, split and augment the corpora; cache parses and vectors.
    Prepare,
    /// Train a model and write a checkpoint plus the metric log.
    Train,
    /// Score a checkpoint on the dev or test split.
    Eval {
        #[arg(long, default_value = "runs/train/checkpoint")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Label every instance of a CPC file.
    Predict {
        #[arg(long, default_value = "runs/train/checkpoint")]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    /// Train once per value of one hyperparameter.
    Sweep {
        /// A config key or one of lr, dim, lambda, lambda_s, lambda_d, layers, alpha, ratio, batch_size.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Majority-class predictor on the test split.
    Baseline,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Prepare => "prepare",
            Command::Train => "train",
            Command::Eval { .. } => "eval",
            Command::Predict { .. } => "predict",
            Command::Sweep { .. } => "sweep",
            Command::Baseline => "baseline",
        }
    }
}

/// Parses `args` (program name first) and runs the command. Failures print
/// `error[code]: message` on one line.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}

/// The effective configuration: file, then `--set` overrides, then `--seed`.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config)?;
    for pair in &cli.overrides {
        cfg.set_pair(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| Path::new("runs").join(cli.command.name()));
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_provenance(&out, cli, &cfg)?;
    match &cli.command {
        Command::Prepare => prepare(&cfg, &out),
        Command::Train => train_command(&cfg, &out),
        Command::Eval { checkpoint, split } => eval_command(&cfg, checkpoint, split, &out),
        Command::Predict { checkpoint, input } => predict_command(&cfg, checkpoint, input, &out),
        Command::Sweep { param, values } => sweep_command(&cfg, param, values, &out),
        Command::Baseline => baseline_command(&cfg, &out),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_provenance(out: &Path, cli: &Cli, cfg: &RunConfig) -> Result<()> {
    write_file(&out.join("config.txt"), cfg.to_text())?;
    let record = json!({
        "command": cli.command.name(),
        "config": cli.config,
        "overrides": cli.overrides,
        "seed": cfg.train.seed,
        "version": concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")),
    });
    write_file(&out.join("provenance.json"), serde_json::to_string_pretty(&record)?)
}

fn load_cpc_file(path: &Path) -> Result<Vec<CpcInstance>> {
    load_cpc(path, CpcFormat::from_path(path))
}

/// The three CPC splits (seeded by `seed`) and the ABSA training set.
pub fn load_corpora(cfg: &RunConfig, seed: u64) -> Result<(SplitBundle, Vec<AbsaInstance>)> {
    let d = &cfg.data;
    let splits = if let Some(train_path) = &d.cpc_train {
        let train = load_cpc_file(train_path)?;
        let (train, dev) = match &d.cpc_dev {
            Some(p) => (train, load_cpc_file(p)?),
            None => carve_dev(&train, seed),
        };
        let test = match &d.cpc_test {
            Some(p) => load_cpc_file(p)?,
            None => Vec::new(),
        };
        SplitBundle::from_presplit(train, dev, test)?
    } else if let Some(path) = &d.cpc {
        make_splits(&load_cpc_file(path)?, seed)?
    } else {
        return Err(Error::Config("no CPC corpus: set data.cpc or data.cpc_train".into()));
    };
    let absa = match &d.absa_train {
        Some(p) => load_absa(p)?,
        None => Vec::new(),
    };
    Ok((splits, absa))
}

/// Training data after the configured imbalance treatment.
pub fn augment(cfg: &RunConfig, train: &[CpcInstance]) -> Result<Vec<CpcInstance>> {
    match cfg.data.imbalance {
        ImbalanceMode::Flip => Ok(flip_augment(train)),
        ImbalanceMode::Upsample => upsample(train),
        ImbalanceMode::Weighted | ImbalanceMode::None => Ok(train.to_vec()),
    }
}

fn load_parses(cfg: &RunConfig) -> Result<Vec<ParsedSentence>> {
    let mut all = Vec::new();
    for p in &cfg.data.parses {
        all.extend(load_conllu(p)?);
    }
    Ok(all)
}

/// Featurizer over the configured vector source and parses.
pub fn featurizer(cfg: &RunConfig, vocab: Option<LabelVocab>) -> Result<Featurizer> {
    let source = match cfg.data.encoder {
        EncoderMode::Static => {
            let path = cfg
                .data
                .embeddings
                .as_ref()
                .ok_or_else(|| Error::Config("static encoder needs data.embeddings".into()))?;
            VectorSource::Static(load_static_embeddings(path)?)
        }
        EncoderMode::Contextual => {
            let path = cfg
                .data
                .sidecar
                .as_ref()
                .ok_or_else(|| Error::Config("contextual encoder needs data.sidecar".into()))?;
            VectorSource::Contextual(ContextualSidecar::open(path)?)
        }
    };
    let mut f = Featurizer::new(source).with_parses(load_parses(cfg)?);
    if let Some(v) = vocab {
        f = f.with_vocab(v);
    }
    Ok(f)
}

fn prepare(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (splits, absa) = load_corpora(cfg, cfg.train.seed)?;
    let train = augment(cfg, &splits.train)?;
    let files = [
        ("cpc_train.jsonl", &train),
        ("cpc_dev.jsonl", &splits.dev),
        ("cpc_test.jsonl", &splits.test),
    ];
    for (name, data) in files {
        write_cpc_jsonl(&out.join(name), data)?;
    }
    write_absa_jsonl(&out.join("absa_train.jsonl"), &absa)?;

    let mut w = csv::Writer::from_path(out.join("counts.csv")).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record(["split", "better", "worse", "none"])?;
    let rows = [
        ("train", count_triple(&splits.train)),
        ("train_augmented", count_triple(&train)),
        ("dev", count_triple(&splits.dev)),
        ("test", count_triple(&splits.test)),
    ];
    for (name, (b, wo, n)) in rows {
        w.write_record([name.to_string(), b.to_string(), wo.to_string(), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    let parses = load_parses(cfg)?;
    let mut prepared = cfg.clone();
    if !parses.is_empty() {
        write_conllu(&parses, &out.join("parses.conllu"))?;
        prepared.data.parses = vec![out.join("parses.conllu")];
    }
    let mut feat = featurizer(cfg, None)?;
    feat.cpc_all(&train, true)?;
    feat.absa_all(&absa, true)?;
    write_file(&out.join("label_vocab.json"), serde_json::to_string_pretty(&feat.vocab)?)?;

    let mut stats = json!({
        "label_vocab": feat.vocab.len(),
        "unparsed_sentences": feat.unparsed,
    });
    if let VectorSource::Static(table) = &feat.source {
        let mut vocab: BTreeSet<String> = BTreeSet::new();
        let sentences = train
            .iter()
            .chain(&splits.dev)
            .chain(&splits.test)
            .map(|i| &i.sentence)
            .chain(absa.iter().map(|i| &i.sentence));
        for s in sentences {
            vocab.extend(tokenize(s).tokens.into_iter().map(|t| t.to_lowercase()));
        }
        for p in &parses {
            vocab.extend(p.tokens.tokens.iter().map(|t| t.to_lowercase()));
        }
        let cache = table.restricted(vocab.iter().map(String::as_str));
        write_static_embeddings(&cache, &out.join("embeddings.txt"))?;
        stats["vocabulary"] = json!(vocab.len());
        stats["covered"] = json!(cache.len());
        prepared.data.embeddings = Some(out.join("embeddings.txt"));
    }
    write_file(&out.join("stats.json"), serde_json::to_string_pretty(&stats)?)?;

    prepared.data.cpc = None;
    prepared.data.cpc_train = Some(out.join("cpc_train.jsonl"));
    prepared.data.cpc_dev = Some(out.join("cpc_dev.jsonl"));
    prepared.data.cpc_test = Some(out.join("cpc_test.jsonl"));
    prepared.data.absa_train = Some(out.join("absa_train.jsonl"));
    write_file(&out.join("prepared.cfg"), prepared.to_text())?;
    log::info!(
        "prepared {} train ({} after augmentation), {} dev, {} test, {} ABSA",
        splits.train.len(),
        train.len(),
        splits.dev.len(),
        splits.test.len(),
        absa.len()
    );
    Ok(())
}

/// A trained model with everything needed to score it.
pub struct Fitted {
    pub model: SaeconModel<f32>,
    pub outcome: TrainOutcome,
    pub featurizer: Featurizer,
    pub splits: SplitBundle,
    pub manifest: Manifest,
}

/// Loads data, builds a model sized from it and trains it.
pub fn fit(cfg: &RunConfig) -> Result<Fitted> {
    let seed = cfg.train.seed;
    let (splits, absa) = load_corpora(cfg, seed)?;
    let train_set = augment(cfg, &splits.train)?;
    let mut tcfg = cfg.train.clone();
    tcfg.class_weights = cfg.effective_class_weights(&class_counts(&train_set))?;

    let mut feat = featurizer(cfg, None)?;
    let cpc_train = feat.cpc_all(&train_set, true)?;
    let absa_train = feat.absa_all(&absa, true)?;
    let cpc_dev = feat.cpc_all(&splits.dev, false)?;
    if feat.unparsed > 0 {
        log::info!("{} sentences had no parse and use a chain graph", feat.unparsed);
    }
    let mut mcfg = cfg.model.clone();
    mcfg.d0 = feat
        .d0()
        .ok_or_else(|| Error::Data("no input vectors were read".into()))?;
    mcfg.n_labels = feat.vocab.len();
    let mut model = SaeconModel::<f32>::new(mcfg, seed)?;
    log::info!("model with {} parameters", model.num_parameters());
    let data = TrainData {
        cpc_train: &cpc_train,
        absa_train: &absa_train,
        cpc_dev: &cpc_dev,
    };
    let outcome = train(&mut model, &data, &tcfg)?;

    let mut manifest = Manifest::new(&model, feat.vocab.clone());
    manifest.train = Some(tcfg);
    manifest.epoch = outcome.best_epoch;
    manifest.dev_metric = Some(outcome.best_score);
    let encoder = match cfg.data.encoder {
        EncoderMode::Static => "static",
        EncoderMode::Contextual => "contextual",
    };
    manifest.extra.insert("encoder".into(), encoder.into());
    Ok(Fitted {
        model,
        outcome,
        featurizer: feat,
        splits,
        manifest,
    })
}

fn train_command(cfg: &RunConfig, out: &Path) -> Result<()> {
    let fitted = fit(cfg)?;
    write_metric_log(&fitted.outcome.log, &out.join("metrics.csv"))?;
    save_checkpoint(&fitted.model, &fitted.manifest, &out.join("checkpoint"))?;
    let summary = json!({
        "best_epoch": fitted.outcome.best_epoch,
        "best_dev_score": fitted.outcome.best_score,
        "dev_micro_f1": fitted.outcome.best_report.micro_f1,
        "parameters": fitted.model.num_parameters(),
    });
    write_file(&out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "best epoch {} dev micro-F1 {:.4}",
        fitted.outcome.best_epoch, fitted.outcome.best_report.micro_f1
    );
    Ok(())
}

/// `report.csv` (long), `metrics.csv` (one wide row), `report.txt`.
pub fn write_report_files(report: &EvalReport, split: &str, out: &Path) -> Result<()> {
    report.write_csv(&out.join("report.csv"))?;
    let mut w = csv::Writer::from_path(out.join("metrics.csv")).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record(["split", "micro_f1", "f1_better", "f1_worse", "f1_none", "support"])?;
    w.write_record([
        split.to_string(),
        report.micro_f1.to_string(),
        report.f1[0].to_string(),
        report.f1[1].to_string(),
        report.f1[2].to_string(),
        report.total().to_string(),
    ])?;
    w.flush().map_err(|e| Error::io(out, e))?;
    write_file(&out.join("report.txt"), report.table())
}

fn check_width(feat: &Featurizer, model: &SaeconModel<f32>) -> Result<()> {
    match feat.d0() {
        Some(d) if d != model.config.d0 => Err(Error::shape(
            format!("{}-wide input vectors for this checkpoint", model.config.d0),
            d.to_string(),
        )),
        _ => Ok(()),
    }
}

fn eval_command(cfg: &RunConfig, checkpoint: &Path, split: &str, out: &Path) -> Result<()> {
    let (model, manifest) = load_checkpoint(checkpoint)?;
    let seed = manifest.train.as_ref().map_or(cfg.train.seed, |t| t.seed);
    let (splits, _) = load_corpora(cfg, seed)?;
    let data = match split {
        "dev" => splits.dev,
        "test" => splits.test,
        other => return Err(Error::Config(format!("unknown split {other:?} (dev|test)"))),
    };
    if data.is_empty() {
        return Err(Error::Data(format!("the {split} split is empty")));
    }
    let mut feat = featurizer(cfg, Some(manifest.labels.clone()))?;
    check_width(&feat, &model)?;
    let examples = feat.cpc_all(&data, false)?;
    check_width(&feat, &model)?;
    let report = evaluate_cpc(&model, &examples)?;
    write_report_files(&report, split, out)?;
    if model.senti_head.is_some() {
        write_case_study_csv(&case_study(&model, &data, &examples)?, &out.join("case_study.csv"))?;
    }
    print!("{}", report.table());
    Ok(())
}

fn predict_command(cfg: &RunConfig, checkpoint: &Path, input: &Path, out: &Path) -> Result<()> {
    let (model, manifest) = load_checkpoint(checkpoint)?;
    let data = match CpcFormat::from_path(input) {
        CpcFormat::Jsonl => load_cpc_unlabeled(input)?,
        CpcFormat::Csv => load_cpc(input, CpcFormat::Csv)?,
    };
    let mut feat = featurizer(cfg, Some(manifest.labels))?;
    check_width(&feat, &model)?;
    let mut lines = String::new();
    for inst in &data {
        let ex = feat.cpc(inst, false)?;
        check_width(&feat, &model)?;
        let p = model.cpc_forward(&ex.input)?;
        let mut senti = p.entity_sentiments();
        if inst.swapped {
            senti.reverse();
        }
        let (sa, sb, delta) = match senti[..] {
            [a, b] => (json!(a.as_str()), json!(b.as_str()), json!(sentiment_distance(a, b))),
            _ => (json!(null), json!(null), json!(null)),
        };
        let row = json!({
            "id": inst.id,
            "pred": p.label().as_str(),
            "probs": p.probs,
            "senti_a": sa,
            "senti_b": sb,
            "delta": delta,
        });
        lines.push_str(&row.to_string());
        lines.push('\n');
    }
    write_file(&out.join("predictions.jsonl"), lines)?;
    println!("{} predictions", data.len());
    Ok(())
}

fn sweep_command(cfg: &RunConfig, param: &str, values: &[String], out: &Path) -> Result<()> {
    let key = sweep_key(param);
    let mut rows = Vec::new();
    for value in values {
        let mut run = cfg.clone();
        run.set(key, value)?;
        log::info!("sweep {key} = {value}");
        let fitted = fit(&run)?;
        let test = fitted.splits.test.clone();
        let mut feat = fitted.featurizer;
        let report = if test.is_empty() {
            None
        } else {
            Some(evaluate_cpc(&fitted.model, &feat.cpc_all(&test, false)?)?)
        };
        rows.push((value.clone(), fitted.outcome.best_epoch, fitted.outcome.best_report.micro_f1, report));
    }
    let name: String = param
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    let path = out.join(format!("sweep_{name}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::Data(e.to_string()))?;
    w.write_record([
        "param",
        "value",
        "best_epoch",
        "dev_micro_f1",
        "test_micro_f1",
        "test_f1_better",
        "test_f1_worse",
        "test_f1_none",
    ])?;
    for (value, epoch, dev, report) in rows {
        let t = |f: fn(&EvalReport) -> f64| report.as_ref().map(|r| f(r).to_string()).unwrap_or_default();
        w.write_record([
            key.to_string(),
            value,
            epoch.to_string(),
            dev.to_string(),
            t(|r| r.micro_f1),
            t(|r| r.f1[0]),
            t(|r| r.f1[1]),
            t(|r| r.f1[2]),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn baseline_command(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (splits, _) = load_corpora(cfg, cfg.train.seed)?;
    if splits.test.is_empty() {
        return Err(Error::Data("the test split is empty".into()));
    }
    let labels = |d: &[CpcInstance]| d.iter().map(|i| i.label).collect::<Vec<CpcLabel>>();
    let report = majority_baseline(&labels(&splits.train), &labels(&splits.test))?;
    write_report_files(&report, "test", out)?;
    print!("{}", report.table());
    Ok(())
}
