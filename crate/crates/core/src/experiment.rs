//! The baseline / upsample / merged experiment grid.
//!
//! For every emoji mode and training system, each selected model is
//! trained once and scored on the gold test set and, for the balanced
//! systems, on that system's own test set. The teacher's zero-shot row is
//! added once. Results are a pure function of the input files, the config
//! and the seed, whatever the thread count.
//!
//! Balanced test sets share the gold test documents and are topped up with
//! silver documents that never appear in the matching training set, so that
//! each class holds `target - floor(ratio * target)` documents.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{
    generate_silver, merge, upsample, zero_shot_eval, BalanceSpec, CachingTranslator, HttpTeacher, HttpTranslator,
    IdentityTranslator, LexiconTeacher, NoisyTeacher, TeacherClient, TranslatorClient,
};
use crate::classifiers::{
    train_decision_tree, train_linear_svm, train_logreg, train_random_forest, Classifier, TrainConfig,
};
use crate::corpus::{load_jsonl, split_dataset, strip_emoji, train_count, Dataset, SentimentLabel};
use crate::error::{Error, Result};
use crate::eval::{evaluate, render_csv, render_size_curve, render_table, EvaluationReport, Setting, SizePoint};
use crate::features::{fit_tfidf, tokenize, SparseVector};
use crate::neural::{train_bilstm, NeuralTrainConfig};
use crate::seed;

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $key:literal, $display:literal;)* }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),* }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),*];

            pub fn key(self) -> &'static str {
                match self { $($name::$variant => $key),* }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($name::$variant => $display),* })
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($key => Ok($name::$variant),)*
                    _ => Err(Error::InvalidArgument(format!(
                        "unknown {} {s:?}; expected one of {}",
                        stringify!($name),
                        [$($key),*].join(", ")
                    ))),
                }
            }
        }
    };
}

named_enum!(ModelKind {
    Lr => "lr", "LR";
    Svm => "svm", "SVM";
    Dt => "dt", "DT";
    Rf => "rf", "RF";
    Bilstm => "bilstm", "BiLSTM";
    Teacher => "teacher", "Teacher";
});

named_enum!(System {
    Baseline => "baseline", "Baseline";
    Upsample => "upsample", "Upsample";
    Merged => "merged", "Merged";
});

named_enum!(EmojiMode {
    Without => "without", "without";
    With => "with", "with";
});

/// Flat experiment configuration, read from TOML. Relative paths resolve
/// against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub gold: PathBuf,
    /// Unlabeled documents to turn into silver data.
    pub pool: Option<PathBuf>,
    /// Ready-made silver data; used instead of `pool` when set.
    pub silver: Option<PathBuf>,
    /// Teacher lexicon TSV for the offline teacher.
    pub lexicon: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub translation_cache: Option<PathBuf>,
    pub seed: u64,
    pub split_ratio: f64,
    pub upsample_target: usize,
    pub merged_target: usize,
    pub silver_per_class: usize,
    pub silver_emoji_min: usize,
    pub neutral_band: i32,
    pub teacher_flip_rate: f64,
    pub models: Vec<ModelKind>,
    pub systems: Vec<System>,
    pub emoji_modes: Vec<EmojiMode>,
    /// Worker threads for grid cells; 0 uses all cores.
    pub threads: usize,
    pub rf_trees: usize,
    pub bilstm_epochs: usize,
    pub bilstm_batch_size: usize,
    pub bilstm_learning_rate: f64,
    pub bilstm_max_len: usize,
    /// Share of the BiLSTM training set held out for model selection.
    pub bilstm_valid_fraction: f64,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            gold: PathBuf::from("gold.jsonl"),
            pool: None,
            silver: None,
            lexicon: None,
            output_dir: PathBuf::from("results"),
            translation_cache: None,
            seed: 0,
            split_ratio: 0.8,
            upsample_target: 700,
            merged_target: 1700,
            silver_per_class: 1500,
            silver_emoji_min: 500,
            neutral_band: 0,
            teacher_flip_rate: 0.0,
            models: ModelKind::ALL.to_vec(),
            systems: System::ALL.to_vec(),
            emoji_modes: EmojiMode::ALL.to_vec(),
            threads: 0,
            rf_trees: 30,
            bilstm_epochs: 10,
            bilstm_batch_size: 32,
            bilstm_learning_rate: 1e-3,
            bilstm_max_len: 64,
            bilstm_valid_fraction: 0.1,
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].matches('\n').count() + 1);
            Error::parse(path, line, e.message().to_string())
        })?;
        cfg.base_dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must lie strictly between 0 and 1");
        }
        if self.upsample_target == 0 || self.merged_target == 0 || self.silver_per_class == 0 {
            return bad("balance targets must be positive");
        }
        if self.silver_emoji_min > self.silver_per_class {
            return bad("silver_emoji_min exceeds silver_per_class");
        }
        if self.models.is_empty() || self.systems.is_empty() || self.emoji_modes.is_empty() {
            return bad("models, systems and emoji_modes must be non-empty");
        }
        if !(0.0..=1.0).contains(&self.teacher_flip_rate) {
            return bad("teacher_flip_rate must lie in [0, 1]");
        }
        if !(self.bilstm_valid_fraction > 0.0 && self.bilstm_valid_fraction < 1.0) {
            return bad("bilstm_valid_fraction must lie strictly between 0 and 1");
        }
        if self.rf_trees == 0 || self.bilstm_batch_size == 0 || self.bilstm_max_len == 0 {
            return bad("rf_trees, bilstm_batch_size and bilstm_max_len must be positive");
        }
        Ok(())
    }

    /// Canonical TOML of everything except `base_dir`.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of [`ExperimentConfig::to_toml`],
    /// ignoring `threads`, which never changes results.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { threads: 0, ..self.clone() };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// One-line summary for error messages.
    pub fn echo(&self) -> String {
        let keys = |v: Vec<&str>| v.join(",");
        format!(
            "gold={} seed={} models={} systems={} emoji_modes={} targets={}/{}",
            self.gold.display(),
            self.seed,
            keys(self.models.iter().map(|m| m.key()).collect()),
            keys(self.systems.iter().map(|s| s.key()).collect()),
            keys(self.emoji_modes.iter().map(|m| m.key()).collect()),
            self.upsample_target,
            self.merged_target,
        )
    }

    fn needs_silver(&self) -> bool {
        self.systems.iter().any(|s| *s != System::Baseline)
    }

    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig { seed, n_estimators: self.rf_trees, ..Default::default() }
    }

    fn neural_config(&self, seed: u64) -> NeuralTrainConfig {
        NeuralTrainConfig {
            learning_rate: self.bilstm_learning_rate,
            batch_size: self.bilstm_batch_size,
            epochs: self.bilstm_epochs,
            seed,
            max_len: self.bilstm_max_len,
            ..Default::default()
        }
    }
}

/// Translator and teacher used for silver generation and the zero-shot row.
pub struct Clients {
    pub translator: Box<dyn TranslatorClient>,
    pub teacher: Option<Box<dyn TeacherClient>>,
}

impl Clients {
    /// Remote clients when `TRANSLATOR_URL` / `TEACHER_URL` are set;
    /// otherwise the identity translator and the lexicon teacher. The
    /// translator is always cached.
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let translator: Box<dyn TranslatorClient> = match (HttpTranslator::from_env(), &cfg.translation_cache) {
            (Some(http), Some(p)) => Box::new(CachingTranslator::with_file(http, cfg.resolve(p))?),
            (Some(http), None) => Box::new(CachingTranslator::new(http)),
            (None, Some(p)) => Box::new(CachingTranslator::with_file(IdentityTranslator::new(), cfg.resolve(p))?),
            (None, None) => Box::new(CachingTranslator::new(IdentityTranslator::new())),
        };
        let teacher: Option<Box<dyn TeacherClient>> = match HttpTeacher::from_env() {
            Some(http) => Some(Box::new(http)),
            None => match &cfg.lexicon {
                Some(p) => {
                    let lex = LexiconTeacher::from_tsv(cfg.resolve(p), cfg.neutral_band)?;
                    if cfg.teacher_flip_rate > 0.0 {
                        let seed = seed::derive_named(cfg.seed, "teacher-noise");
                        Some(Box::new(NoisyTeacher { inner: lex, flip_rate: cfg.teacher_flip_rate, seed }))
                    } else {
                        Some(Box::new(lex))
                    }
                }
                None => None,
            },
        };
        Ok(Clients { translator, teacher })
    }
}

/// Train and test documents of one system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemData {
    pub system: System,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentData {
    pub gold_test: Dataset,
    pub systems: Vec<SystemData>,
}

fn without(ds: &Dataset, ids: &Dataset) -> Result<Dataset> {
    let used: std::collections::HashSet<&str> = ids.iter().map(|d| d.id.as_str()).collect();
    Dataset::new(ds.iter().filter(|d| !used.contains(d.id.as_str())).cloned().collect())
}

/// Splits gold, produces silver if needed, and builds each system's train
/// and test sets.
pub fn prepare_data(cfg: &ExperimentConfig, clients: &Clients) -> Result<ExperimentData> {
    let echo = &cfg.echo();
    let stage = |name: &'static str| move |e: Error| e.in_stage(name, echo);
    let gold = load_jsonl(cfg.resolve(&cfg.gold)).map_err(stage("load gold"))?;
    gold.labels().map_err(stage("load gold"))?;
    let (gold_train, gold_test) =
        split_dataset(&gold, cfg.split_ratio, seed::derive_named(cfg.seed, "split")).map_err(stage("split"))?;

    let silver = if !cfg.needs_silver() {
        Dataset::empty()
    } else if let Some(p) = &cfg.silver {
        load_jsonl(cfg.resolve(p)).map_err(stage("load silver"))?
    } else if let Some(p) = &cfg.pool {
        let pool = load_jsonl(cfg.resolve(p)).map_err(stage("load pool"))?;
        let teacher = clients.teacher.as_deref().ok_or_else(|| {
            Error::InvalidArgument("silver generation needs a lexicon or TEACHER_URL".into()).in_stage("silver", echo)
        })?;
        let spec = BalanceSpec {
            per_class_target: cfg.silver_per_class,
            emoji_min_per_class: cfg.silver_emoji_min,
            seed: seed::derive_named(cfg.seed, "silver"),
        };
        generate_silver(&pool, clients.translator.as_ref(), teacher, &spec).map_err(stage("silver"))?
    } else {
        return Err(Error::InvalidArgument("upsample and merged systems need `pool` or `silver`".into())
            .in_stage("silver", echo));
    };

    let mut systems = Vec::new();
    for &system in &cfg.systems {
        let data = match system {
            System::Baseline => SystemData { system, train: gold_train.clone(), test: gold_test.clone() },
            System::Upsample | System::Merged => {
                let (target, name) = match system {
                    System::Upsample => (cfg.upsample_target, "upsample"),
                    _ => (cfg.merged_target, "merged"),
                };
                let train_target = train_count(cfg.split_ratio, target);
                let balance = if system == System::Upsample { upsample } else { merge };
                let (train, _) =
                    balance(&gold_train, &silver, train_target, seed::derive_named(cfg.seed, &format!("{name}/train")))
                        .map_err(stage("balance train"))?;
                let unused = without(&silver, &train).map_err(stage("balance test"))?;
                let (test, _) = balance(
                    &gold_test,
                    &unused,
                    target - train_target,
                    seed::derive_named(cfg.seed, &format!("{name}/test")),
                )
                .map_err(stage("balance test"))?;
                SystemData { system, train, test }
            }
        };
        systems.push(data);
    }
    Ok(ExperimentData { gold_test, systems })
}

fn apply_mode(ds: &Dataset, mode: EmojiMode) -> Dataset {
    match mode {
        EmojiMode::With => ds.clone(),
        EmojiMode::Without => ds.map_text(strip_emoji),
    }
}

fn tokens(ds: &Dataset) -> Vec<Vec<String>> {
    ds.iter().map(|d| tokenize(&d.normalized_text)).collect()
}

/// Everything a grid cell needs: one emoji mode, one system.
struct Context {
    mode: EmojiMode,
    system: System,
    train: Dataset,
    x_train: Vec<SparseVector>,
    y_train: Vec<SentimentLabel>,
    /// (test set name, documents, features)
    tests: Vec<(System, Dataset, Vec<SparseVector>)>,
}

fn row_rank(test_set: System, system: System) -> usize {
    match (test_set, system) {
        (System::Baseline, System::Baseline) => 0,
        (System::Baseline, System::Upsample) => 1,
        (System::Baseline, System::Merged) => 2,
        (System::Upsample, _) => 3,
        _ => 4,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub reports: Vec<EvaluationReport>,
    pub size_points: Vec<SizePoint>,
    pub config_hash: String,
}

fn predict_all(model: &dyn Classifier, xs: &[SparseVector]) -> Result<Vec<SentimentLabel>> {
    xs.iter().map(|x| model.predict(x).map(|p| p.label)).collect()
}

fn run_cell(cfg: &ExperimentConfig, ctx: &Context, model: ModelKind) -> Result<Vec<EvaluationReport>> {
    let cell_seed = seed::derive_named(cfg.seed, &format!("{}/{}/{}", ctx.mode.key(), ctx.system.key(), model.key()));
    let tc = cfg.train_config(cell_seed);
    let (x, y) = (&ctx.x_train, &ctx.y_train);
    let predictions: Vec<Vec<SentimentLabel>> = match model {
        ModelKind::Lr | ModelKind::Svm | ModelKind::Dt | ModelKind::Rf => {
            let trained: Box<dyn Classifier> = match model {
                ModelKind::Lr => Box::new(train_logreg(x, y, &tc)?),
                ModelKind::Svm => Box::new(train_linear_svm(x, y, &tc)?),
                ModelKind::Dt => Box::new(train_decision_tree(x, y, &tc)?),
                _ => Box::new(train_random_forest(x, y, &tc)?),
            };
            ctx.tests.iter().map(|(_, _, xt)| predict_all(trained.as_ref(), xt)).collect::<Result<_>>()?
        }
        ModelKind::Bilstm => {
            let (fit, valid) = split_dataset(&ctx.train, 1.0 - cfg.bilstm_valid_fraction, cell_seed)?;
            let net = train_bilstm(&fit, &valid, &cfg.neural_config(cell_seed))?;
            ctx.tests
                .iter()
                .map(|(_, ds, _)| {
                    let texts: Vec<&str> = ds.iter().map(|d| d.normalized_text.as_str()).collect();
                    Ok(net.predict_texts(&texts)?.into_iter().map(|p| p.label).collect())
                })
                .collect::<Result<_>>()?
        }
        ModelKind::Teacher => unreachable!("the teacher is not trained"),
    };
    ctx.tests
        .iter()
        .zip(predictions)
        .map(|((test_set, ds, _), preds)| {
            let setting = Setting {
                model: model.to_string(),
                test_set: test_set.to_string(),
                system: ctx.system.to_string(),
                emoji_mode: ctx.mode.key().to_string(),
                seed: cfg.seed,
            };
            evaluate(&ds.labels()?, &preds, setting)
        })
        .collect()
}

/// Runs the configured grid with the given clients.
pub fn run_with_clients(cfg: &ExperimentConfig, clients: &Clients) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let echo = cfg.echo();
    let data = prepare_data(cfg, clients)?;

    let build_context = |mode: EmojiMode, sd: &SystemData| -> Result<Context> {
        let train = apply_mode(&sd.train, mode);
        let tfidf = fit_tfidf(&tokens(&train))?;
        let x_train = tokens(&train).iter().map(|t| tfidf.transform(t)).collect();
        let y_train = train.labels()?;
        let mut tests = vec![(System::Baseline, apply_mode(&data.gold_test, mode))];
        if sd.system != System::Baseline {
            tests.push((sd.system, apply_mode(&sd.test, mode)));
        }
        let tests = tests
            .into_iter()
            .map(|(name, ds)| {
                let x = tokens(&ds).iter().map(|t| tfidf.transform(t)).collect();
                (name, ds, x)
            })
            .collect();
        Ok(Context { mode, system: sd.system, train, x_train, y_train, tests })
    };

    let run = || -> Result<ExperimentOutput> {
        let combos: Vec<(EmojiMode, &SystemData)> =
            cfg.emoji_modes.iter().flat_map(|&m| data.systems.iter().map(move |s| (m, s))).collect();
        let contexts: Vec<Context> = combos
            .par_iter()
            .map(|(m, s)| build_context(*m, s).map_err(|e| e.in_stage("features", &echo)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<_>>()?;
        let trained: Vec<ModelKind> = cfg.models.iter().copied().filter(|m| *m != ModelKind::Teacher).collect();
        let jobs: Vec<(usize, ModelKind)> =
            (0..contexts.len()).flat_map(|c| trained.iter().map(move |&m| (c, m))).collect();
        let results: Vec<Result<Vec<EvaluationReport>>> = jobs
            .par_iter()
            .map(|&(c, m)| {
                let ctx = &contexts[c];
                run_cell(cfg, ctx, m)
                    .map_err(|e| e.in_stage(&format!("train {} on {} ({})", m.key(), ctx.system.key(), ctx.mode.key()), &echo))
            })
            .collect();

        let mut keyed = Vec::new();
        let mut size_points = Vec::new();
        for (&(c, m), res) in jobs.iter().zip(results) {
            let ctx = &contexts[c];
            for report in res? {
                let test_set: System = report.setting.test_set.parse()?;
                if test_set == ctx.system {
                    let own_test = ctx.tests.iter().find(|(t, _, _)| *t == test_set).map_or(0, |(_, ds, _)| ds.len());
                    size_points.push(SizePoint {
                        model: report.setting.model.clone(),
                        emoji_mode: report.setting.emoji_mode.clone(),
                        system: ctx.system.to_string(),
                        train_size: ctx.train.len(),
                        dataset_size: ctx.train.len() + own_test,
                        f1_weighted: report.weighted.f1,
                        f1_macro: report.macro_avg.f1,
                    });
                }
                let mode_rank = cfg.emoji_modes.iter().position(|x| *x == ctx.mode).unwrap_or(0);
                let model_rank = cfg.models.iter().position(|x| *x == m).unwrap_or(0);
                keyed.push(((mode_rank, model_rank, row_rank(test_set, ctx.system)), report));
            }
        }

        if cfg.models.contains(&ModelKind::Teacher) {
            let teacher = clients.teacher.as_deref().ok_or_else(|| {
                Error::InvalidArgument("the teacher row needs a lexicon or TEACHER_URL".into()).in_stage("zero-shot", &echo)
            })?;
            let mode = if cfg.emoji_modes.contains(&EmojiMode::Without) { EmojiMode::Without } else { EmojiMode::With };
            let setting = Setting {
                model: ModelKind::Teacher.to_string(),
                test_set: System::Baseline.to_string(),
                system: "Zero-shot".into(),
                emoji_mode: mode.key().into(),
                seed: cfg.seed,
            };
            let test = apply_mode(&data.gold_test, mode);
            let report = zero_shot_eval(&test, clients.translator.as_ref(), teacher, setting)
                .map_err(|e| e.in_stage("zero-shot", &echo))?;
            let mode_rank = cfg.emoji_modes.iter().position(|x| *x == mode).unwrap_or(0);
            keyed.push(((mode_rank, usize::MAX, 0), report));
        }
        keyed.sort_by_key(|k| k.0);
        size_points.sort_by(|a, b| {
            (a.emoji_mode.as_str(), a.model.as_str(), a.train_size).cmp(&(b.emoji_mode.as_str(), b.model.as_str(), b.train_size))
        });
        Ok(ExperimentOutput {
            reports: keyed.into_iter().map(|(_, r)| r).collect(),
            size_points,
            config_hash: cfg.hash(),
        })
    };

    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run)
    } else {
        run()
    }
}

/// Runs the configured grid with clients from [`Clients::from_config`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let clients = Clients::from_config(cfg).map_err(|e| e.in_stage("clients", &cfg.echo()))?;
    run_with_clients(cfg, &clients)
}

pub const REPORT_FILE: &str = "report.txt";
pub const RESULTS_FILE: &str = "results.csv";
pub const SIZE_CURVE_FILE: &str = "size_curve.csv";

/// Writes the text table, the metrics CSV and the size curve CSV, each
/// headed by the tool version, config hash and seed.
pub fn write_outputs(out: &ExperimentOutput, cfg: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let header = [
        ("tool", format!("kurdsent {}", crate::VERSION)),
        ("config_hash", out.config_hash.clone()),
        ("seed", cfg.seed.to_string()),
    ];
    let comments: String = header.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect();
    let files = [
        (REPORT_FILE, format!("{comments}\n{}", render_table(&out.reports))),
        (RESULTS_FILE, render_csv(&out.reports, &header)),
        (SIZE_CURVE_FILE, render_size_curve(&out.size_points, &header)),
    ];
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
