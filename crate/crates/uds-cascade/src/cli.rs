//! Command-line interface: train, parse, eval, augment, gradcheck, and
//! selfcheck subcommands over one JSON run configuration.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::augment;
use crate::check;
use crate::config::RunConfig;
use crate::encoder::EncoderKind;
use crate::error::{Error, Result};
use crate::eval;
use crate::graph::conllu::parse_conllu;
use crate::graph::jsonl::{load_graphs, save_graphs, UdsRecord};
use crate::graph::{AttributeSchema, AttributeSet, SemanticGraph};
use crate::injection::InjectionMode;
use crate::model::{ModelConfig, ParseOutput, ParserModel};
use crate::syntax::DecodeMode;
use crate::training;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(
    name = "uds-cascade",
    version,
    about = "Cascade parser for decompositional semantic graphs",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    cmd: Command,
}

/// Flags that override fields of the JSON run config.
#[derive(Args, Debug, Clone)]
struct Overrides {
    /// JSON run configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for init, shuffling, dropout, and restarts
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Encoder architecture
    #[arg(long, global = true, value_parser = ["bilstm", "transformer"])]
    encoder: Option<String>,
    /// Syntax injection mode
    #[arg(long = "syntax-mode", global = true, value_parser = ["none", "multitask", "gcn", "attention"])]
    syntax_mode: Option<String>,
    /// Enable residual span-pooling refinement
    #[arg(long = "span-refine", global = true)]
    span_refine: bool,
    /// Hill-climbing restarts for S-score
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Sentence-parallel workers for parse/eval/augment
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a parser on gold Graph JSONL
    Train {
        /// Training records (Graph JSONL)
        #[arg(long)]
        train: PathBuf,
        /// Validation records (Graph JSONL)
        #[arg(long)]
        dev: Option<PathBuf>,
        /// Override the configured epoch count
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Parse plain text or CoNLL-U into Graph JSONL
    Parse {
        /// Checkpoint produced by train
        #[arg(long)]
        model: PathBuf,
        /// Input file: .conllu, or one pre-tokenized sentence per line
        #[arg(long)]
        input: PathBuf,
    },
    /// Score predicted graphs against gold
    Eval {
        /// Predicted records; omit to parse with --model instead
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Gold records (Graph JSONL)
        #[arg(long)]
        gold: PathBuf,
        /// Checkpoint to parse the gold sentences with
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Pseudo-label a text corpus with a trained parser
    Augment {
        /// Checkpoint produced by train
        #[arg(long)]
        model: PathBuf,
        /// Plain text, one pre-tokenized sentence per line
        #[arg(long)]
        input: PathBuf,
        /// Drop sentences longer than this
        #[arg(long = "max-len")]
        max_len: Option<usize>,
    },
    /// Finite-difference audit of every differentiable stage
    Gradcheck,
    /// Run the fast invariant suite
    Selfcheck,
}

pub fn run(args: Vec<String>) -> i32 {
    let env = env_logger::Env::new().filter_or("UDS_CASCADE_LOG", "error");
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(Error::Validation(msg)) => {
            eprintln!("validation failure: {msg}");
            EXIT_VALIDATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load_run_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.seed = seed;
    }
    if let Some(kind) = &o.encoder {
        cfg.encoder.kind = match kind.as_str() {
            "transformer" => EncoderKind::Transformer,
            _ => EncoderKind::Bilstm,
        };
    }
    if let Some(mode) = &o.syntax_mode {
        cfg.syntax_mode = match mode.as_str() {
            "multitask" => InjectionMode::Multitask,
            "gcn" => InjectionMode::Gcn,
            "attention" => InjectionMode::Attention,
            _ => InjectionMode::None,
        };
    }
    if o.span_refine {
        cfg.span_refine = true;
    }
    if let Some(r) = o.restarts {
        cfg.restarts = r;
    }
    if let Some(w) = o.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = load_run_config(&cli.overrides)?;
    let out = cli.overrides.out.clone();
    match cli.cmd {
        Command::Train { train, dev, epochs } => cmd_train(&cfg, &train, dev.as_deref(), epochs, out),
        Command::Parse { model, input } => cmd_parse(&cfg, &model, &input, out),
        Command::Eval { pred, gold, model } => {
            cmd_eval(&cfg, pred.as_deref(), &gold, model.as_deref(), out)
        }
        Command::Augment {
            model,
            input,
            max_len,
        } => cmd_augment(&cfg, &model, &input, max_len.unwrap_or(cfg.max_len), out),
        Command::Gradcheck => cmd_gradcheck(cfg.seed),
        Command::Selfcheck => cmd_selfcheck(cfg.seed),
    }
}

fn load_model(path: &Path) -> Result<ParserModel> {
    let file = fs::File::open(path)?;
    ParserModel::load(&mut BufReader::new(file))
}

fn forms_of(rec: &UdsRecord) -> Vec<String> {
    rec.sent.tokens.iter().map(|t| t.form.clone()).collect()
}

fn read_sentences(input: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(input)?;
    if input.extension().and_then(|e| e.to_str()) == Some("conllu") {
        Ok(parse_conllu(&text)?
            .into_iter()
            .map(|s| s.tokens.into_iter().map(|t| t.form).collect())
            .collect())
    } else {
        Ok(text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect())
    }
}

/// Sentence-parallel parsing with order-preserving assembly. Each worker
/// rebuilds the model from the exported snapshot.
fn parse_many(
    model: &ParserModel,
    sents: &[Vec<String>],
    decode: DecodeMode,
    workers: usize,
) -> Result<Vec<ParseOutput>> {
    if workers <= 1 || sents.len() < 2 {
        return sents.iter().map(|s| model.parse_sentence(s, decode)).collect();
    }
    let snapshot = model.store.export();
    let chunk = sents.len().div_ceil(workers);
    let chunks: Vec<&[Vec<String>]> = sents.chunks(chunk).collect();
    let results = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|slice| {
                let cfg = model.cfg.clone();
                let snapshot = snapshot.clone();
                scope.spawn(move || -> std::result::Result<Vec<ParseOutput>, String> {
                    let worker =
                        ParserModel::from_snapshot(cfg, &snapshot).map_err(|e| e.to_string())?;
                    slice
                        .iter()
                        .map(|s| worker.parse_sentence(s, decode).map_err(|e| e.to_string()))
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("worker panicked".into())))
            .collect::<std::result::Result<Vec<_>, String>>()
    })
    .map_err(Error::Config)?;
    Ok(results.into_iter().flatten().collect())
}

fn cmd_train(
    cfg: &RunConfig,
    train_path: &Path,
    dev_path: Option<&Path>,
    epochs: Option<usize>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (schema, train_set) = load_graphs(train_path)?;
    if train_set.is_empty() {
        return Err(Error::validation("training corpus is empty"));
    }
    let dev_set = match dev_path {
        Some(p) => load_graphs(p)?.1,
        None => Vec::new(),
    };
    let model_cfg = ModelConfig::from_corpus(
        &train_set,
        cfg.encoder.clone(),
        cfg.injection(),
        schema,
        cfg.seed,
    )?;
    let mut model = ParserModel::new(model_cfg)?;
    let mut train_cfg = cfg.train_config();
    if let Some(e) = epochs {
        train_cfg.epochs = e;
    }
    let outcome = training::train(&mut model, &train_set, &dev_set, &train_cfg)?;
    let best = ParserModel::from_snapshot(model.cfg.clone(), &outcome.best_snapshot)?;
    let ckpt = out.unwrap_or_else(|| PathBuf::from("model.ckpt"));
    let mut file = fs::File::create(&ckpt)?;
    best.save(&mut file)?;
    let log_path = ckpt.with_extension("csv");
    fs::write(&log_path, outcome.csv())?;
    println!(
        "trained {} epochs; best epoch {}; checkpoint {}; log {}",
        train_cfg.epochs,
        outcome.best_epoch,
        ckpt.display(),
        log_path.display()
    );
    Ok(())
}

fn cmd_parse(cfg: &RunConfig, model_path: &Path, input: &Path, out: Option<PathBuf>) -> Result<()> {
    let model = load_model(model_path)?;
    let sents = read_sentences(input)?;
    let outputs = parse_many(&model, &sents, cfg.train.decode, cfg.workers)?;
    let mut records = Vec::new();
    for output in &outputs {
        records.push(output.record()?);
    }
    let path = out.unwrap_or_else(|| PathBuf::from("parsed.jsonl"));
    save_graphs(&path, &model.cfg.schema, &records)?;
    println!("parsed {} sentences into {}", records.len(), path.display());
    Ok(())
}

/// Per-sentence predictions in the shape both eval paths share.
struct PredRow {
    heads: Vec<usize>,
    deprels: Vec<String>,
    pos: Vec<String>,
    graph: SemanticGraph,
    attrs: AttributeSet,
}

#[derive(Serialize)]
struct EvalReport {
    s_precision: f64,
    s_recall: f64,
    s_f1: f64,
    uas: f64,
    las: f64,
    pos_acc: f64,
    attr_rho_macro: f64,
    attr_f1_macro: f64,
    per_attribute: Vec<eval::attributes::AttrRow>,
    skipped_attributes: Vec<String>,
}

fn cmd_eval(
    cfg: &RunConfig,
    pred: Option<&Path>,
    gold: &Path,
    model: Option<&Path>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (_, gold_set) = load_graphs(gold)?;
    let rows: Vec<PredRow> = match (pred, model) {
        (Some(p), _) => {
            let (_, pred_set) = load_graphs(p)?;
            if pred_set.len() != gold_set.len() {
                return Err(Error::validation(format!(
                    "{} predicted records vs {} gold",
                    pred_set.len(),
                    gold_set.len()
                )));
            }
            pred_set
                .into_iter()
                .map(|r| PredRow {
                    heads: r.sent.heads.clone(),
                    deprels: r.sent.deprels.clone(),
                    pos: r.sent.tokens.iter().map(|t| t.pos.clone()).collect(),
                    graph: r.graph,
                    attrs: r.attrs,
                })
                .collect()
        }
        (None, Some(m)) => {
            let model = load_model(m)?;
            let sents: Vec<Vec<String>> = gold_set.iter().map(forms_of).collect();
            let outputs = parse_many(&model, &sents, cfg.train.decode, cfg.workers)?;
            outputs
                .into_iter()
                .zip(&gold_set)
                .map(|(o, g)| {
                    Ok(PredRow {
                        heads: o.heads,
                        deprels: o.deprels,
                        pos: o.pos,
                        graph: o.graph,
                        attrs: model.oracle_attributes(g)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        (None, None) => {
            return Err(Error::validation("eval needs --pred or --model"));
        }
    };

    let mut sem = eval::CorpusCounts::default();
    let mut syn = eval::SyntaxCounts::default();
    let mut attr_sets = Vec::new();
    for (i, (row, g)) in rows.iter().zip(&gold_set).enumerate() {
        sem.add(&eval::s_score(
            (&g.sent, &row.graph),
            (&g.sent, &g.graph),
            cfg.restarts,
            cfg.seed.wrapping_add(i as u64),
        ));
        syn.add(&g.sent, &row.heads, &row.deprels, &row.pos)?;
        attr_sets.push((row.attrs.clone(), g.attrs.clone()));
    }
    let (s_precision, s_recall, s_f1) = sem.prf();
    let attrs = eval::attribute_metrics(&attr_sets, &attr_sets);
    let report = EvalReport {
        s_precision,
        s_recall,
        s_f1,
        uas: syn.uas(),
        las: syn.las(),
        pos_acc: syn.pos_acc(),
        attr_rho_macro: attrs.rho_macro,
        attr_f1_macro: attrs.f1_macro,
        per_attribute: attrs.rows,
        skipped_attributes: attrs.skipped,
    };
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(path) = out {
        fs::write(&path, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn cmd_augment(
    cfg: &RunConfig,
    model_path: &Path,
    input: &Path,
    max_len: usize,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = load_model(model_path)?;
    let sents = read_sentences(input)?;
    let chunk = sents.len().div_ceil(cfg.workers.max(1)).max(1);
    let mut records = Vec::new();
    let mut skipped = 0;
    for slice in sents.chunks(chunk) {
        let (mut recs, skip) = augment::pseudo_label(slice, &model, &cfg.rules);
        records.append(&mut recs);
        skipped += skip;
    }
    let (kept, drops) = augment::filter_invalid(records, max_len);
    let path = out.unwrap_or_else(|| PathBuf::from("pseudo.jsonl"));
    save_graphs(&path, &AttributeSchema::default(), &kept)?;
    let report_path = drop_report_path(&path);
    fs::write(&report_path, serde_json::to_string_pretty(&drops)?)?;
    println!(
        "kept {} of {} sentences ({} parse failures); output {}; drop report {}",
        kept.len(),
        sents.len(),
        skipped,
        path.display(),
        report_path.display()
    );
    Ok(())
}

fn drop_report_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("pseudo")
        .to_string();
    name.push_str(".drops.json");
    out.with_file_name(name)
}

fn cmd_gradcheck(seed: u64) -> Result<()> {
    let report = check::gradcheck_report(seed)?;
    let mut worst: f64 = 0.0;
    for (name, err) in &report {
        println!("{name:12} max relative error {err:.3e}");
        worst = worst.max(*err);
    }
    if worst > check::GRADCHECK_TOLERANCE {
        return Err(Error::validation(format!(
            "gradient error {worst:.3e} exceeds {:.0e}",
            check::GRADCHECK_TOLERANCE
        )));
    }
    Ok(())
}

fn cmd_selfcheck(seed: u64) -> Result<()> {
    let report = check::selfcheck_report(seed)?;
    let mut failed = 0;
    for (name, ok) in &report {
        println!("{} {}", if *ok { "PASS" } else { "FAIL" }, name);
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::validation(format!("{failed} selfcheck probes failed")));
    }
    Ok(())
}
