//! The `tweak` command line.
//!
//! Every subcommand echoes its effective configuration as one JSON line on
//! stderr before doing any work. Failures print one JSON error record on
//! stderr and exit with 1 (runtime) or 2 (usage, configuration, inputs).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::decoder::{DecodeConfig, DecodeTrace, StepRecord, Strategy, TOY_MAX_LEN};
use crate::dictionary::PerturbationDictionary;
use crate::eval::{
    compare_report, default_length_bounds, evaluate_outputs, length_split_report, position_histogram, run_decode, sweep,
    sweep_table, RunResult, SweepAxis,
};
use crate::fate::{build_fate, instances_to_jsonl, pairs_to_jsonl, read_pairs, FateConfig, PerturbationPools, SplitPolicy, TemplateSet};
use crate::hvm::{cell_accuracy, train_hvm, HvmModel, TrainConfig};
use crate::knowledge::{parse_dataset, to_jsonl, DatasetFormat, K2TInstance};
use crate::lm::{LanguageModel, RemoteLm, ToyLm, Vocabulary};
use crate::protocol::BRIDGE_ADDR_ENV;
use crate::verifier::{HvmVerifier, NliVerifier, OracleNli, OracleVerifier, RemoteHvm, RemoteNli, RuleOracle, Verifier};
use crate::world::{adversarial_lm_corpus, generate_world, WorldConfig};

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(name = "tweak", version, about = "Faithfulness-aware decoding for knowledge-to-text generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic world: corpus, perturbation pools, templates, dictionary, LM training data.
    MakeCorpus(MakeCorpusArgs),
    /// Train the n-gram toy LM on the references of a corpus.
    TrainLm(TrainLmArgs),
    /// Synthesize FATE instances and labeled hypothesis pairs.
    SynthFate(SynthFateArgs),
    /// Train the tabular HVM on hypothesis pairs.
    TrainHvm(TrainHvmArgs),
    /// Decode a corpus and write outputs plus traces.
    Decode(DecodeArgs),
    /// Score a run (decoding first unless outputs are given).
    Eval(EvalArgs),
    /// Re-run decoding over a list of alpha or beam-size values.
    Sweep(SweepArgs),
    /// Compare saved run reports side by side.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct MakeCorpusArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long, default_value_t = 1)]
    pub min_triples: usize,
    #[arg(long, default_value_t = 4)]
    pub max_triples: usize,
    #[arg(long, default_value_t = 0.3)]
    pub two_word_rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Copies of a perturbed description per faithful one in `lm_train.jsonl`.
    #[arg(long, default_value_t = 2)]
    pub lm_bias: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainLmArgs {
    /// Corpus whose references are the training sentences (JSONL or TSV).
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub order: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub smoothing: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthFateArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub pools: PathBuf,
    #[arg(long)]
    pub templates: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Split points per pair: a count, or `all`.
    #[arg(long, default_value = "1")]
    pub splits: Splits,
    /// Sampling weights for subject, relation, object.
    #[arg(long, default_value = "1,1,1", value_parser = parse_weights)]
    pub position_weights: Weights,
    #[arg(long)]
    pub no_balance: bool,
    /// Receives `fate.jsonl`, `pairs.jsonl` and `dictionary.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainHvmArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub dictionary: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2.0)]
    pub lr: f64,
    #[arg(long, default_value_t = 17)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VerifierKind {
    /// Rule oracle over the perturbation dictionary.
    Oracle,
    /// NLI adapter backed by the rule oracle.
    NliOracle,
    NliRemote,
    HvmLocal,
    HvmRemote,
}

/// Flags shared by every command that decodes.
#[derive(Debug, Args, Serialize)]
pub struct DecodeFlags {
    #[arg(long)]
    pub corpus: PathBuf,
    /// `toy:<model.json>` or `remote:<host:port>`.
    #[arg(long)]
    pub lm: Option<LmSpec>,
    /// Vocabulary JSON for a remote LM.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "beam")]
    pub strategy: Strategy,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub prune_width: Option<usize>,
    #[arg(long)]
    pub rollout_cap: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    /// Fixed faithfulness weight in place of the strategy's schedule.
    #[arg(long)]
    pub fixed_weight: Option<f64>,
    #[arg(long)]
    pub no_rollout_cache: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub verifier: Option<VerifierKind>,
    /// Perturbation dictionary for the oracle, HVM features and hallucination rate.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// HVM model file for `--verifier hvm-local`.
    #[arg(long)]
    pub hvm: Option<PathBuf>,
    #[arg(long, env = BRIDGE_ADDR_ENV)]
    pub bridge: Option<String>,
    /// Only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct DecodeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub flags: DecodeFlags,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub flags: DecodeFlags,
    /// Score these decode outputs instead of decoding.
    #[arg(long)]
    pub outputs: Option<PathBuf>,
    /// Trace file matching `--outputs`, for verdict counts and histograms.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
    /// Run report JSON, consumable by `compare`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hallucination-position histogram CSV.
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Print metrics grouped by number of input triples.
    #[arg(long)]
    pub length_split: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Alpha,
    BeamSize,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub flags: DecodeFlags,
    #[arg(long, value_enum)]
    pub axis: Axis,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Run reports written by `eval --out`.
    #[arg(long, num_args = 1.., required = true)]
    pub runs: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "target")]
pub enum LmSpec {
    Toy(PathBuf),
    Remote(String),
}

impl FromStr for LmSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("toy", path)) if !path.is_empty() => Ok(LmSpec::Toy(path.into())),
            Some(("remote", addr)) if !addr.is_empty() => Ok(LmSpec::Remote(addr.to_owned())),
            _ => Err(format!("expected `toy:<path>` or `remote:<addr>`, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Splits(pub SplitPolicy);

impl FromStr for Splits {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "all" {
            return Ok(Splits(SplitPolicy::All));
        }
        s.parse()
            .map(|n| Splits(SplitPolicy::Random(n)))
            .map_err(|_| format!("expected a count or `all`, got `{s}`"))
    }
}

pub type Weights = [f64; 3];

fn parse_weights(s: &str) -> Result<Weights, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    let w: Weights = parts
        .try_into()
        .map_err(|_| "expected three comma-separated weights".to_string())?;
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
        return Err("weights must be non-negative with a positive sum".into());
    }
    Ok(w)
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    MissingPath(PathBuf),
    /// Unreadable or invalid input file.
    Input { path: PathBuf, message: String },
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Runtime(_) => EXIT_RUNTIME,
            _ => EXIT_USAGE,
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        let (kind, path) = match self {
            CliError::Usage(_) => ("usage", None),
            CliError::MissingPath(p) => ("missing_path", Some(p)),
            CliError::Input { path, .. } => ("invalid_input", Some(path)),
            CliError::Runtime(_) => ("runtime", None),
        };
        let mut rec = serde_json::Map::new();
        rec.insert("error".into(), kind.into());
        rec.insert("message".into(), self.to_string().into());
        if let Some(p) = path {
            rec.insert("path".into(), p.display().to_string().into());
        }
        rec.insert("exit_code".into(), self.exit_code().into());
        serde_json::Value::Object(rec).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
            CliError::MissingPath(p) => write!(f, "no such file: {}", p.display()),
            CliError::Input { path, message } => write!(f, "{}: {message}", path.display()),
        }
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn existing(path: &Path) -> Result<&Path, CliError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingPath(path.to_owned()))
    }
}

fn invalid(path: &Path) -> impl Fn(&dyn fmt::Display) -> CliError + '_ {
    move |e| CliError::Input {
        path: path.to_owned(),
        message: e.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(existing(path)?).map_err(|e| invalid(path)(&e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| invalid(path)(&e))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn read_corpus(path: &Path) -> Result<Vec<K2TInstance>, CliError> {
    parse_dataset(existing(path)?, DatasetFormat::from_path(path)).map_err(|e| invalid(path)(&e))
}

fn read_templates(path: &Path) -> Result<TemplateSet, CliError> {
    let raw: BTreeMap<String, String> = read_json(path)?;
    let mut set = TemplateSet::new();
    for (rel, template) in raw {
        set.insert(rel, template).map_err(|e| invalid(path)(&e))?;
    }
    Ok(set)
}

fn read_dictionary(path: &Path) -> Result<PerturbationDictionary, CliError> {
    PerturbationDictionary::from_json(&read_text(path)?).map_err(|e| invalid(path)(&e))
}

fn to_json_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn echo_config(value: &serde_json::Value) {
    eprintln!("{value}");
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let rendered = e.to_string();
            let message: Vec<&str> = rendered
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            let err = CliError::Usage(message.join(" ").trim_start_matches("error: ").to_owned());
            eprintln!("{}", err.record());
            return err.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.record());
            err.exit_code()
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::MakeCorpus(a) => make_corpus(a),
        Command::TrainLm(a) => train_lm(a),
        Command::SynthFate(a) => synth_fate(a),
        Command::TrainHvm(a) => train_hvm_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Compare(a) => compare_cmd(a),
    }
}

fn make_corpus(a: &MakeCorpusArgs) -> Result<(), CliError> {
    let config = WorldConfig {
        instances: a.instances,
        min_triples: a.min_triples,
        max_triples: a.max_triples,
        two_word_rate: a.two_word_rate,
        seed: a.seed,
    };
    if config.min_triples == 0 || config.min_triples > config.max_triples || config.max_triples > crate::world::RELATIONS.len() {
        return Err(usage(format!(
            "triples per instance must satisfy 1 <= min <= max <= {}",
            crate::world::RELATIONS.len()
        )));
    }
    if !(0.0..=1.0).contains(&config.two_word_rate) {
        return Err(usage("two-word rate must lie in [0, 1]"));
    }
    echo_config(&serde_json::json!({"command": "make-corpus", "world": config, "lm_bias": a.lm_bias, "out_dir": a.out_dir}));
    let world = generate_world(&config);
    let lm_pairs = adversarial_lm_corpus(&world, a.lm_bias, a.seed).map_err(runtime)?;
    let lm_corpus: Vec<K2TInstance> = lm_pairs
        .into_iter()
        .map(|(facts, text)| K2TInstance::new(facts, vec![text]))
        .collect();
    let dir = &a.out_dir;
    write_file(&dir.join("corpus.jsonl"), &to_jsonl(&world.corpus))?;
    write_file(&dir.join("pools.json"), &to_json_pretty(&world.pools))?;
    write_file(&dir.join("templates.json"), &to_json_pretty(&world.templates))?;
    write_file(&dir.join("dictionary.json"), &world.dictionary.to_json())?;
    write_file(&dir.join("lm_train.jsonl"), &to_jsonl(&lm_corpus))?;
    println!("wrote {} instances to {}", world.corpus.len(), dir.display());
    Ok(())
}

fn train_lm(a: &TrainLmArgs) -> Result<(), CliError> {
    echo_config(&serde_json::json!({"command": "train-lm", "flags": a}));
    let corpus = read_corpus(&a.corpus)?;
    let pairs: Vec<_> = corpus
        .iter()
        .flat_map(|inst| inst.references.iter().map(|r| (inst.facts.clone(), r.clone())))
        .collect();
    let lm = ToyLm::train(&pairs, a.order, a.smoothing).map_err(usage)?;
    write_file(&a.out, &lm.to_json())?;
    println!(
        "trained order-{} model on {} sentences, vocabulary {}",
        lm.order(),
        pairs.len(),
        lm.vocabulary().len()
    );
    Ok(())
}

fn synth_fate(a: &SynthFateArgs) -> Result<(), CliError> {
    let config = FateConfig {
        splits: a.splits.0,
        seed: a.seed,
        position_weights: a.position_weights,
        balance: !a.no_balance,
    };
    echo_config(&serde_json::json!({"command": "synth-fate", "flags": a, "config": config}));
    let corpus = read_corpus(&a.corpus)?;
    let pools: PerturbationPools = read_json(&a.pools)?;
    let templates = read_templates(&a.templates)?;
    let data = build_fate(&corpus, &pools, &templates, &config).map_err(usage)?;
    let dir = &a.out_dir;
    write_file(&dir.join("fate.jsonl"), &instances_to_jsonl(&data.instances))?;
    write_file(&dir.join("pairs.jsonl"), &pairs_to_jsonl(&data.pairs))?;
    write_file(&dir.join("dictionary.json"), &data.dictionary.to_json())?;
    println!(
        "wrote {} instances and {} hypothesis pairs to {}",
        data.instances.len(),
        data.pairs.len(),
        dir.display()
    );
    Ok(())
}

fn train_hvm_cmd(a: &TrainHvmArgs) -> Result<(), CliError> {
    let config = TrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        seed: a.seed,
    };
    echo_config(&serde_json::json!({"command": "train-hvm", "flags": a, "config": config}));
    let pairs = read_pairs(existing(&a.pairs)?).map_err(|e| invalid(&a.pairs)(&e))?;
    let dictionary = read_dictionary(&a.dictionary)?;
    let model = train_hvm(&pairs, &dictionary, config).map_err(runtime)?;
    let acc = cell_accuracy(&model, &pairs, &dictionary).map_err(runtime)?;
    model.save(&a.out).map_err(runtime)?;
    let loss = model.training().map_or(f64::NAN, |m| m.final_loss);
    println!("final loss {loss:.6}, training cell accuracy {acc:.4}");
    Ok(())
}

/// A loaded decoding setup.
struct Session {
    corpus: Vec<K2TInstance>,
    lm: Option<Box<dyn LanguageModel>>,
    verifier: Option<Box<dyn Verifier>>,
    oracle: Option<RuleOracle>,
    config: DecodeConfig,
}

impl Session {
    fn lm(&self) -> Result<&dyn LanguageModel, CliError> {
        self.lm.as_deref().ok_or_else(|| usage("--lm is required to decode"))
    }
}

impl DecodeFlags {
    fn config(&self) -> DecodeConfig {
        let toy = !matches!(self.lm, Some(LmSpec::Remote(_)));
        let mut c = if toy {
            DecodeConfig::toy(self.strategy)
        } else {
            DecodeConfig::new(self.strategy)
        };
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(alpha) = self.alpha {
            c.alpha = alpha;
        }
        if let Some(m) = self.max_len {
            c.max_len = m;
        } else if toy {
            c.max_len = TOY_MAX_LEN;
        }
        c.prune_width = self.prune_width;
        c.rollout_cap = self.rollout_cap;
        c.weight_override = self.fixed_weight;
        c.cache_rollouts = !self.no_rollout_cache;
        c.seed = self.seed;
        c
    }

    fn bridge(&self) -> Result<&str, CliError> {
        self.bridge
            .as_deref()
            .ok_or_else(|| usage(format!("remote components need --bridge or {BRIDGE_ADDR_ENV}")))
    }

    fn dictionary(&self) -> Result<Option<PerturbationDictionary>, CliError> {
        self.dictionary.as_deref().map(read_dictionary).transpose()
    }

    fn load(&self, command: &str, extra: serde_json::Value, need_lm: bool) -> Result<Session, CliError> {
        let config = self.config();
        config.validate().map_err(usage)?;
        echo_config(&serde_json::json!({
            "command": command,
            "flags": self,
            "decode_config": config,
            "extra": extra,
        }));
        let mut corpus = read_corpus(&self.corpus)?;
        if let Some(n) = self.limit {
            corpus.truncate(n);
        }
        let dictionary = self.dictionary()?.map(Arc::new);
        let oracle = dictionary.as_deref().cloned().map(RuleOracle::new);
        let lm: Option<Box<dyn LanguageModel>> = match (&self.lm, need_lm) {
            (None, true) => return Err(usage("--lm is required to decode")),
            (None, false) => None,
            (Some(LmSpec::Toy(path)), _) => {
                let text = read_text(path)?;
                Some(Box::new(ToyLm::from_json(&text).map_err(|e| invalid(path)(&e))?))
            }
            (Some(LmSpec::Remote(addr)), _) => {
                let path = self.vocab.as_deref().ok_or_else(|| usage("a remote LM needs --vocab"))?;
                let vocab: Vocabulary = read_json(path)?;
                Some(Box::new(RemoteLm::connect(addr.as_str(), vocab).map_err(runtime)?))
            }
        };
        let needs_dictionary = |kind: VerifierKind| {
            dictionary
                .clone()
                .ok_or_else(|| usage(format!("--verifier {} needs --dictionary", kind.to_possible_value().expect("named").get_name())))
        };
        let verifier: Option<Box<dyn Verifier>> = match self.verifier {
            None => None,
            Some(kind @ VerifierKind::Oracle) => Some(Box::new(OracleVerifier::new(Arc::new(RuleOracle::new(
                (*needs_dictionary(kind)?).clone(),
            ))))),
            Some(kind @ VerifierKind::NliOracle) => Some(Box::new(NliVerifier::new(OracleNli::new(Arc::new(
                RuleOracle::new((*needs_dictionary(kind)?).clone()),
            ))))),
            Some(VerifierKind::NliRemote) => Some(Box::new(NliVerifier::new(
                RemoteNli::connect(self.bridge()?).map_err(runtime)?,
            ))),
            Some(VerifierKind::HvmRemote) => Some(Box::new(RemoteHvm::connect(self.bridge()?).map_err(runtime)?)),
            Some(kind @ VerifierKind::HvmLocal) => {
                let path = self.hvm.as_deref().ok_or_else(|| usage("--verifier hvm-local needs --hvm"))?;
                let model = HvmModel::load(existing(path)?).map_err(|e| invalid(path)(&e))?;
                let v = HvmVerifier::new(Arc::new(model), needs_dictionary(kind)?).map_err(|e| invalid(path)(&e))?;
                Some(Box::new(v))
            }
        };
        if need_lm && config.strategy.is_tweak() && verifier.is_none() {
            return Err(usage(format!("strategy {} needs --verifier", config.strategy)));
        }
        Ok(Session {
            corpus,
            lm,
            verifier,
            oracle,
            config,
        })
    }
}

/// One line of decode output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub index: usize,
    pub output: String,
}

/// One line of a multi-instance trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceLine {
    pub instance: usize,
    #[serde(flatten)]
    pub step: StepRecord,
}

pub fn traces_to_jsonl(traces: &[DecodeTrace]) -> String {
    let mut out = String::new();
    for (instance, trace) in traces.iter().enumerate() {
        for step in &trace.steps {
            let line = TraceLine {
                instance,
                step: step.clone(),
            };
            out.push_str(&serde_json::to_string(&line).expect("trace records serialize"));
            out.push('\n');
        }
    }
    out
}

/// Groups trace lines back into per-instance traces (`instances` of them).
pub fn traces_from_jsonl(text: &str, instances: usize) -> Result<Vec<DecodeTrace>, String> {
    let mut traces = vec![DecodeTrace::default(); instances];
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let rec: TraceLine = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        let slot = traces
            .get_mut(rec.instance)
            .ok_or_else(|| format!("line {}: instance {} out of range", i + 1, rec.instance))?;
        slot.steps.push(rec.step);
    }
    Ok(traces)
}

pub fn outputs_to_jsonl(outputs: &[String]) -> String {
    let mut out = String::new();
    for (index, o) in outputs.iter().enumerate() {
        let rec = OutputRecord {
            index,
            output: o.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("outputs serialize"));
        out.push('\n');
    }
    out
}

pub fn outputs_from_jsonl(text: &str) -> Result<Vec<String>, String> {
    let mut recs: Vec<OutputRecord> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect::<Result<_, _>>()?;
    recs.sort_by_key(|r| r.index);
    if recs.iter().enumerate().any(|(i, r)| r.index != i) {
        return Err("output indices must be 0..n without gaps".into());
    }
    Ok(recs.into_iter().map(|r| r.output).collect())
}

fn print_summary(run: &RunResult) {
    let s = &run.summary;
    let fmt = |v: Option<f64>, d: usize| v.map_or_else(|| "-".into(), |x| format!("{x:.d$}"));
    println!(
        "{}: instances {}  bleu {}  oracle_halluc_rate {}  negative_verdicts {}",
        run.label,
        s.instances,
        fmt(s.bleu, 2),
        fmt(s.hallucination_rate, 4),
        s.negative_verdicts
    );
}

fn decode_cmd(a: &DecodeArgs) -> Result<(), CliError> {
    let extra = serde_json::json!({"out": a.out, "trace": a.trace});
    let s = a.flags.load("decode", extra, true)?;
    let run = run_decode(&s.corpus, s.lm()?, s.verifier.as_deref(), s.oracle.as_ref(), &s.config, true).map_err(runtime)?;
    write_file(&a.out, &outputs_to_jsonl(&run.outputs))?;
    if let Some(path) = &a.trace {
        write_file(path, &traces_to_jsonl(&run.traces))?;
    }
    print_summary(&run);
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> Result<(), CliError> {
    let extra = serde_json::json!({
        "outputs": a.outputs, "traces": a.traces, "label": a.label, "out": a.out,
        "histogram": a.histogram, "bins": a.bins, "length_split": a.length_split,
    });
    if a.bins == 0 {
        return Err(usage("--bins must be >= 1"));
    }
    let s = a.flags.load("eval", extra, a.outputs.is_none())?;
    let mut run = match &a.outputs {
        Some(path) => {
            let outputs = outputs_from_jsonl(&read_text(path)?).map_err(|e| invalid(path)(&e))?;
            let traces = match &a.traces {
                Some(tp) => traces_from_jsonl(&read_text(tp)?, s.corpus.len()).map_err(|e| invalid(tp)(&e))?,
                None => Vec::new(),
            };
            let label = path.display().to_string();
            evaluate_outputs(&label, s.config.effective(), &s.corpus, outputs, traces, s.oracle.as_ref()).map_err(|e| invalid(path)(&e))?
        }
        None => run_decode(&s.corpus, s.lm()?, s.verifier.as_deref(), s.oracle.as_ref(), &s.config, true).map_err(runtime)?,
    };
    if let Some(label) = &a.label {
        run.label = label.clone();
    }
    print_summary(&run);
    if a.length_split {
        let groups = length_split_report(&s.corpus, &run, &default_length_bounds()).map_err(runtime)?;
        println!("{:>10}  {:>9}  {:>8}  {:>18}", "triples", "instances", "bleu", "oracle_halluc_rate");
        for g in groups {
            let fmt = |v: Option<f64>, d: usize| v.map_or_else(|| "-".into(), |x| format!("{x:.d$}"));
            println!(
                "{:>10}  {:>9}  {:>8}  {:>18}",
                format!("{}-{}", g.min_triples, g.max_triples),
                g.size,
                fmt(g.bleu, 2),
                fmt(g.hallucination_rate, 4)
            );
        }
    }
    if let Some(path) = &a.histogram {
        let hist = position_histogram(&run.traces, a.bins);
        write_file(path, &hist.to_csv())?;
    }
    if let Some(path) = &a.out {
        run.traces.clear();
        write_file(path, &to_json_pretty(&run))?;
    }
    Ok(())
}

fn sweep_cmd(a: &SweepArgs) -> Result<(), CliError> {
    let axis = match a.axis {
        Axis::Alpha => SweepAxis::Alpha,
        Axis::BeamSize => SweepAxis::BeamSize,
    };
    if axis == SweepAxis::BeamSize && a.values.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
        return Err(usage("beam sizes must be positive integers"));
    }
    if axis == SweepAxis::Alpha && a.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(usage("alpha values must be finite and non-negative"));
    }
    let extra = serde_json::json!({"axis": a.axis, "values": a.values, "out": a.out});
    let s = a.flags.load("sweep", extra, true)?;
    let rows = sweep(&s.corpus, s.lm()?, s.verifier.as_deref(), s.oracle.as_ref(), &s.config, axis, &a.values).map_err(runtime)?;
    print!("{}", sweep_table(axis, &rows));
    if let Some(path) = &a.out {
        write_file(path, &to_json_pretty(&serde_json::json!({"axis": axis, "rows": rows})))?;
    }
    Ok(())
}

fn compare_cmd(a: &CompareArgs) -> Result<(), CliError> {
    echo_config(&serde_json::json!({"command": "compare", "flags": a}));
    let runs = a.runs.iter().map(|p| read_json::<RunResult>(p)).collect::<Result<Vec<_>, _>>()?;
    let cmp = compare_report(&runs).map_err(usage)?;
    print!("{}", cmp.table());
    if let Some(path) = &a.out {
        write_file(path, &(cmp.to_json() + "\n"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lm_spec_parsing() {
        assert_eq!("toy:m.json".parse::<LmSpec>().unwrap(), LmSpec::Toy("m.json".into()));
        assert_eq!(
            "remote:127.0.0.1:9000".parse::<LmSpec>().unwrap(),
            LmSpec::Remote("127.0.0.1:9000".into())
        );
        assert!("toy:".parse::<LmSpec>().is_err());
        assert!("gpt:x".parse::<LmSpec>().is_err());
    }

    #[test]
    fn splits_and_weights() {
        assert_eq!("all".parse::<Splits>().unwrap().0, SplitPolicy::All);
        assert_eq!("3".parse::<Splits>().unwrap().0, SplitPolicy::Random(3));
        assert!("x".parse::<Splits>().is_err());
        assert_eq!(parse_weights("1,2,0").unwrap(), [1.0, 2.0, 0.0]);
        assert!(parse_weights("1,2").is_err());
        assert!(parse_weights("0,0,0").is_err());
    }

    #[test]
    fn strategy_defaults_follow_lm_kind() {
        let cli = Cli::try_parse_from(["tweak", "decode", "--corpus", "c", "--lm", "toy:m", "--strategy", "tweak-hvm", "--out", "o"]).unwrap();
        let Command::Decode(a) = cli.command else { panic!() };
        let c = a.flags.config();
        assert_eq!((c.k, c.alpha, c.max_len), (4, 8.0, 64));
        let cli = Cli::try_parse_from(["tweak", "decode", "--corpus", "c", "--lm", "remote:h:1", "--out", "o"]).unwrap();
        let Command::Decode(a) = cli.command else { panic!() };
        let c = a.flags.config();
        assert_eq!((c.k, c.max_len), (5, 384));
    }

    #[test]
    fn missing_model_is_a_usage_error_naming_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("c.jsonl");
        fs::write(&corpus, "{\"facts\":[[\"A\",\"r\",\"B\"]],\"references\":[\"A r B\"]}\n").unwrap();
        let missing = dir.path().join("nope.json");
        let err = execute(
            &Cli::try_parse_from([
                "tweak".as_ref(),
                "decode".as_ref(),
                "--corpus".as_ref(),
                corpus.as_os_str(),
                "--lm".as_ref(),
                format!("toy:{}", missing.display()).as_ref(),
                "--out".as_ref(),
                dir.path().join("o.jsonl").as_os_str(),
            ] as [&std::ffi::OsStr; 8])
            .unwrap()
            .command,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let rec: serde_json::Value = serde_json::from_str(&err.record()).unwrap();
        assert_eq!(rec["path"], missing.display().to_string());
        assert!(!err.record().contains('\n'));
    }

    #[test]
    fn output_and_trace_files_round_trip() {
        let outs = vec!["a b".to_string(), String::new()];
        assert_eq!(outputs_from_jsonl(&outputs_to_jsonl(&outs)).unwrap(), outs);
        assert!(outputs_from_jsonl("{\"index\":1,\"output\":\"x\"}").is_err());
        let traces = vec![DecodeTrace::default(); 2];
        assert_eq!(traces_from_jsonl(&traces_to_jsonl(&traces), 2).unwrap(), traces);
    }
}
