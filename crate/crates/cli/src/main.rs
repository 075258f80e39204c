use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kurdsent::annotation::{
    aggregate, apply_overrides, group_by_unit, krippendorff_alpha, load_annotations, load_overrides,
    to_classification_dataset, Projection, TiePolicy,
};
use kurdsent::augment::{generate_silver, zero_shot_eval, BalanceSpec};
use kurdsent::classifiers::{
    load_model, save_model, train_decision_tree, train_linear_svm, train_logreg, train_random_forest, Classifier,
    ModelFile, SentimentModel, TrainConfig,
};
use kurdsent::corpus::{
    filter_documents, load_jsonl, save_jsonl, split_dataset, strip_emoji, Dataset, ScriptPredicate,
    TEACHER_CONFIDENCE_KEY, TRANSLATION_KEY,
};
use kurdsent::eval::{evaluate, render_csv, render_table, EvaluationReport, Setting};
use kurdsent::experiment::{run_experiment, write_outputs, Clients, EmojiMode, ExperimentConfig, ModelKind, System};
use kurdsent::features::{fit_tfidf, tokenize};
use kurdsent::neural::{train_bilstm, BiLstmModel, NeuralTrainConfig};
use kurdsent::synth::{generate, write_bundle, SynthConfig};
use kurdsent::{seed, Error, SentimentLabel};

#[derive(Parser)]
#[command(name = "kurdsent", version, about = "Central Kurdish sentiment analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter and normalize a raw JSONL corpus.
    Prep {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Statistics sidecar; defaults to <output>.stats.json.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Inter-annotator agreement, optionally writing the aggregated gold set.
    Alpha {
        annotations: PathBuf,
        /// Documents to label with the aggregated annotations.
        #[arg(long, requires = "output")]
        documents: Option<PathBuf>,
        #[arg(long, requires = "documents")]
        output: Option<PathBuf>,
        /// Manual final labels: JSONL of {"unit_id", "final"}.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Resolve disagreement within one subjectivity by plurality.
        #[arg(long)]
        plurality: bool,
    },
    /// Translate and label an unlabeled pool into balanced silver data.
    Augment {
        pool: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        clients: ClientArgs,
        #[arg(long, default_value_t = 1500)]
        per_class: usize,
        #[arg(long, default_value_t = 500)]
        emoji_min: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Provenance sidecar; defaults to <output>.provenance.jsonl.
        #[arg(long)]
        provenance: Option<PathBuf>,
    },
    /// Train one model and save it.
    Train {
        train: PathBuf,
        /// lr, svm, dt, rf or bilstm.
        #[arg(short, long, value_parser = parse_trainable)]
        model: ModelKind,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        strip_emoji: bool,
        #[arg(long, default_value_t = 30)]
        trees: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
    },
    /// Score a saved model on a labeled test set.
    Evaluate {
        model: PathBuf,
        test: PathBuf,
        /// Also write the metrics CSV here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the experiment grid from a TOML config.
    Experiment {
        config: PathBuf,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_delimiter = ',', value_parser = parse_model)]
        models: Option<Vec<ModelKind>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_system)]
        systems: Option<Vec<System>>,
        #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
        emoji_modes: Option<Vec<EmojiMode>>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Translate-and-classify a labeled test set with the teacher alone.
    ZeroShot {
        test: PathBuf,
        #[command(flatten)]
        clients: ClientArgs,
        #[arg(long)]
        strip_emoji: bool,
    },
    /// Write a synthetic gold set, pool and teacher lexicon.
    Synth {
        #[arg(short, long)]
        output_dir: PathBuf,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long)]
        pool_size: Option<usize>,
    },
}

#[derive(Args)]
struct ClientArgs {
    /// Teacher lexicon TSV, used when TEACHER_URL is unset.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    neutral_band: i32,
    /// JSONL translation cache.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl ClientArgs {
    fn clients(&self) -> kurdsent::Result<Clients> {
        let cfg = ExperimentConfig {
            lexicon: self.lexicon.clone(),
            neutral_band: self.neutral_band,
            translation_cache: self.cache.clone(),
            ..Default::default()
        };
        let clients = Clients::from_config(&cfg)?;
        if clients.teacher.is_none() {
            return Err(Error::InvalidArgument("no teacher: pass --lexicon or set TEACHER_URL".into()));
        }
        Ok(clients)
    }
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_trainable(s: &str) -> Result<ModelKind, String> {
    match parse_model(s)? {
        ModelKind::Teacher => Err("the teacher is not trainable".into()),
        m => Ok(m),
    }
}

fn parse_system(s: &str) -> Result<System, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<EmojiMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_stem().unwrap_or_default().to_os_string();
    name.push(suffix);
    path.with_file_name(name)
}

fn write(path: &Path, text: &str) -> kurdsent::Result<()> {
    fs::write(path, text).map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable") + "\n"
}

fn prep(input: &Path, output: &Path, stats: Option<PathBuf>) -> kurdsent::Result<()> {
    let ds = load_jsonl(input)?;
    let (kept, st) = filter_documents(&ds, &ScriptPredicate)?;
    save_jsonl(&kept, output)?;
    let stats_path = stats.unwrap_or_else(|| sidecar(output, ".stats.json"));
    write(&stats_path, &to_json(&st))?;
    println!("kept {} of {}", st.kept, st.input);
    for (reason, n) in &st.dropped {
        println!("dropped {n} ({reason})");
    }
    Ok(())
}

fn alpha(
    annotations: &Path,
    documents: Option<PathBuf>,
    output: Option<PathBuf>,
    overrides: Option<PathBuf>,
    plurality: bool,
) -> kurdsent::Result<()> {
    let records = load_annotations(annotations)?;
    for p in Projection::ALL {
        match krippendorff_alpha(&records, |l| p.value(l)) {
            Ok(r) => {
                let shown = r.alpha.map_or_else(|| "undefined (no variation)".to_string(), |a| format!("{a:.4}"));
                println!("{}: alpha = {shown} ({} pairable units)", p.name(), r.pairable_units);
                println!("  values: {}", r.values.join(", "));
                for (v, row) in r.values.iter().zip(&r.coincidences) {
                    let cells: Vec<String> = row.iter().map(|c| format!("{c:.3}")).collect();
                    println!("  {v}: {}", cells.join(" "));
                }
            }
            Err(e) => println!("{}: alpha undefined: {e}", p.name()),
        }
    }
    if let (Some(docs), Some(out)) = (documents, output) {
        let policy = if plurality { TiePolicy::Plurality } else { TiePolicy::Mixed };
        let mut final_labels = aggregate(&group_by_unit(&records), policy);
        if let Some(o) = overrides {
            apply_overrides(&mut final_labels, &load_overrides(o)?);
        }
        let docs = load_jsonl(docs)?;
        let (gold, dropped) = to_classification_dataset(&final_labels, docs.documents())?;
        save_jsonl(&gold, &out)?;
        let [p, n, u] = gold.class_counts();
        println!("wrote {} documents (positive {p}, negative {n}, neutral {u}); dropped {dropped}", gold.len());
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct Provenance<'a> {
    id: &'a str,
    label: Option<SentimentLabel>,
    confidence: Option<f64>,
    translation: Option<&'a serde_json::Value>,
}

fn augment(
    pool: &Path,
    output: &Path,
    clients: &ClientArgs,
    spec: BalanceSpec,
    provenance: Option<PathBuf>,
) -> kurdsent::Result<()> {
    let c = clients.clients()?;
    let pool = load_jsonl(pool)?;
    let silver = generate_silver(&pool, c.translator.as_ref(), c.teacher.as_deref().expect("checked"), &spec)?;
    save_jsonl(&silver, output)?;
    let lines: String = silver
        .iter()
        .map(|d| {
            let p = Provenance {
                id: &d.id,
                label: d.label,
                confidence: d.confidence(),
                translation: d.meta.get(TRANSLATION_KEY),
            };
            serde_json::to_string(&p).expect("serializable") + "\n"
        })
        .collect();
    write(&provenance.unwrap_or_else(|| sidecar(output, ".provenance.jsonl")), &lines)?;
    let [p, n, u] = silver.class_counts();
    println!("wrote {} silver documents (positive {p}, negative {n}, neutral {u})", silver.len());
    debug_assert!(silver.iter().all(|d| d.meta.contains_key(TEACHER_CONFIDENCE_KEY)));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    path: &Path,
    kind: ModelKind,
    output: &Path,
    seed: u64,
    strip: bool,
    trees: usize,
    epochs: usize,
) -> kurdsent::Result<()> {
    let mut ds = load_jsonl(path)?;
    if strip {
        ds = ds.map_text(strip_emoji);
    }
    if kind == ModelKind::Bilstm {
        let (fit, valid) = split_dataset(&ds, 0.9, seed::derive_named(seed, "valid"))?;
        let cfg = NeuralTrainConfig { seed, epochs, ..Default::default() };
        let model = train_bilstm(&fit, &valid, &cfg)?;
        model.save(output, Some(&cfg))?;
        println!("trained BiLSTM on {} documents ({} for validation)", fit.len(), valid.len());
        return Ok(());
    }
    let tokens: Vec<Vec<String>> = ds.iter().map(|d| tokenize(&d.normalized_text)).collect();
    let tfidf = fit_tfidf(&tokens)?;
    let x: Vec<_> = tokens.iter().map(|t| tfidf.transform(t)).collect();
    let y = ds.labels()?;
    let cfg = TrainConfig { seed, n_estimators: trees, ..Default::default() };
    let model = match kind {
        ModelKind::Lr => SentimentModel::LogReg(train_logreg(&x, &y, &cfg)?),
        ModelKind::Svm => SentimentModel::Svm(train_linear_svm(&x, &y, &cfg)?),
        ModelKind::Dt => SentimentModel::Tree(train_decision_tree(&x, &y, &cfg)?),
        ModelKind::Rf => SentimentModel::Forest(train_random_forest(&x, &y, &cfg)?),
        ModelKind::Bilstm | ModelKind::Teacher => unreachable!("rejected while parsing"),
    };
    save_model(&ModelFile { model, tfidf: Some(tfidf), strip_emoji: strip }, output)?;
    println!("trained {kind} on {} documents", ds.len());
    Ok(())
}

fn is_bilstm_checkpoint(path: &Path) -> kurdsent::Result<bool> {
    let text = fs::read_to_string(path).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))?;
    Ok(value.get("format").and_then(|f| f.as_str()).is_some_and(|f| f.starts_with("kurdsent-bilstm")))
}

fn print_report(r: &EvaluationReport) {
    print!("{}", render_table(std::slice::from_ref(r)));
    if let Some(cm) = &r.confusion {
        println!("\nconfusion (rows = reference, columns = predicted)");
        let names: Vec<&str> = cm.class_order.iter().map(|l| l.as_str()).collect();
        println!("{:>10}  {}", "", names.iter().map(|n| format!("{n:>9}")).collect::<String>());
        for (name, row) in names.iter().zip(&cm.counts) {
            println!("{name:>10}  {}", row.iter().map(|c| format!("{c:>9}")).collect::<String>());
        }
    }
}

fn evaluate_cmd(model: &Path, test: &Path, csv: Option<PathBuf>) -> kurdsent::Result<()> {
    let ds = load_jsonl(test)?;
    let refs = ds.labels()?;
    let (name, preds) = if is_bilstm_checkpoint(model)? {
        let m = BiLstmModel::load(model)?;
        let texts: Vec<&str> = ds.iter().map(|d| d.normalized_text.as_str()).collect();
        ("BiLSTM".to_string(), m.predict_texts(&texts)?.into_iter().map(|p| p.label).collect::<Vec<_>>())
    } else {
        let mf = load_model(model)?;
        let tfidf = mf.tfidf.as_ref().ok_or_else(|| Error::Model("model file has no vectorizer".into()))?;
        let ds = if mf.strip_emoji { ds.map_text(strip_emoji) } else { ds.clone() };
        let preds = ds
            .iter()
            .map(|d| mf.model.predict(&tfidf.transform(&tokenize(&d.normalized_text))).map(|p| p.label))
            .collect::<kurdsent::Result<Vec<_>>>()?;
        let name = match mf.model {
            SentimentModel::LogReg(_) => ModelKind::Lr,
            SentimentModel::Svm(_) => ModelKind::Svm,
            SentimentModel::Tree(_) => ModelKind::Dt,
            SentimentModel::Forest(_) => ModelKind::Rf,
        };
        (name.to_string(), preds)
    };
    let setting = Setting { model: name, test_set: test.display().to_string(), ..Default::default() };
    let report = evaluate(&refs, &preds, setting)?;
    print_report(&report);
    if let Some(path) = csv {
        write(&path, &render_csv(std::slice::from_ref(&report), &[]))?;
    }
    Ok(())
}

fn zero_shot(test: &Path, clients: &ClientArgs, strip: bool) -> kurdsent::Result<()> {
    let c = clients.clients()?;
    let mut ds: Dataset = load_jsonl(test)?;
    if strip {
        ds = ds.map_text(strip_emoji);
    }
    let setting = Setting {
        model: "Teacher".into(),
        test_set: test.display().to_string(),
        system: "Zero-shot".into(),
        emoji_mode: if strip { "without" } else { "with" }.into(),
        seed: 0,
    };
    let report = zero_shot_eval(&ds, c.translator.as_ref(), c.teacher.as_deref().expect("checked"), setting)?;
    print_report(&report);
    Ok(())
}

fn run(cli: Cli) -> kurdsent::Result<()> {
    match cli.command {
        Command::Prep { input, output, stats } => prep(&input, &output, stats),
        Command::Alpha { annotations, documents, output, overrides, plurality } => {
            alpha(&annotations, documents, output, overrides, plurality)
        }
        Command::Augment { pool, output, clients, per_class, emoji_min, seed, provenance } => {
            let spec = BalanceSpec { per_class_target: per_class, emoji_min_per_class: emoji_min, seed };
            augment(&pool, &output, &clients, spec, provenance)
        }
        Command::Train { train: path, model, output, seed, strip_emoji, trees, epochs } => {
            train(&path, model, &output, seed, strip_emoji, trees, epochs)
        }
        Command::Evaluate { model, test, csv } => evaluate_cmd(&model, &test, csv),
        Command::Experiment { config, output_dir, seed, models, systems, emoji_modes, threads } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(d) = output_dir {
                cfg.output_dir = std::env::current_dir().map(|c| c.join(d)).unwrap_or_default();
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.models = models.unwrap_or(cfg.models);
            cfg.systems = systems.unwrap_or(cfg.systems);
            cfg.emoji_modes = emoji_modes.unwrap_or(cfg.emoji_modes);
            cfg.threads = threads.unwrap_or(cfg.threads);
            cfg.validate()?;
            let out = run_experiment(&cfg)?;
            let files = write_outputs(&out, &cfg, cfg.resolve(&cfg.output_dir))?;
            print!("{}", render_table(&out.reports));
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::ZeroShot { test, clients, strip_emoji } => zero_shot(&test, &clients, strip_emoji),
        Command::Synth { output_dir, seed, pool_size } => {
            let defaults = SynthConfig::default();
            let cfg = SynthConfig { seed, pool_size: pool_size.unwrap_or(defaults.pool_size), ..defaults };
            let corpus = generate(&cfg)?;
            write_bundle(&corpus, &output_dir)?;
            println!("wrote {} gold and {} pool documents to {}", corpus.gold.len(), corpus.pool.len(), output_dir.display());
            Ok(())
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
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
