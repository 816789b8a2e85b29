//! Command-line front end: `generate | train | eval | ablate | verify`.
//!
//! Every command reads an optional JSON [`RunConfig`] (unknown keys are
//! rejected), applies flag overrides, and writes its artifacts atomically
//! under the output directory. Wall-clock timings go to separate
//! `timing.json` files so primary outputs stay byte-identical across runs
//! with the same seed.

pub mod verify;

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, ablation_csv, ablation_suite, AblationGrid, EmbeddingVariant, EvalMode, EvalReport, Scorer};
use crate::io::{read_json, read_jsonl, write_atomic, write_json, write_jsonl};
use crate::models::rule::{rule_fit, FrequencyPrior};
use crate::models::{checkpoint, InputDims, Model, ModelConfig, ModelKind};
use crate::relation::{
    build_abduction_dataset, group_by_video, AbductionExample, EmbeddingEntry, EmbeddingSource, EmbeddingTable, SemanticLookup,
    Setup, SnapshotRecord, Vocabulary,
};
use crate::seed::derive_seed;
use crate::synthworld::{oracle_map, SyntheticSplits, WorldOverrides, WorldSpec, ORACLE_MAX_ACTIONS};
use crate::train::{prepare, train_runs, Prepared, RunSummary, TrainConfig};

/// File names inside a generated dataset directory.
pub mod layout {
    pub const WORLD: &str = "world.json";
    pub const VOCAB: &str = "vocab.json";
    pub const TRAIN: &str = "train.jsonl";
    pub const TEST: &str = "test.jsonl";
    pub const EMBEDDINGS: &str = "embeddings.jsonl";
    pub const EMBEDDINGS_RANDOM: &str = "embeddings_random.jsonl";
    pub const ORACLE: &str = "oracle.json";
}

/// Width of the random alternate embedding table written by `generate`.
pub const RANDOM_EMBEDDING_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeCounts {
    pub train: usize,
    pub test: usize,
}

impl Default for EpisodeCounts {
    fn default() -> Self {
        EpisodeCounts { train: 500, test: 100 }
    }
}

/// Paths of an on-disk dataset in the JSON-lines format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub train: PathBuf,
    pub test: PathBuf,
    pub vocab: PathBuf,
    pub embeddings: PathBuf,
    /// Second embedding table; doubles the ablation grid.
    #[serde(default)]
    pub embeddings_alt: Option<PathBuf>,
    /// World file, when the data is synthetic (enables the oracle).
    #[serde(default)]
    pub world: Option<PathBuf>,
}

impl DataPaths {
    /// The layout written by `generate`.
    pub fn from_dir(dir: &Path) -> Self {
        let world = dir.join(layout::WORLD);
        DataPaths {
            train: dir.join(layout::TRAIN),
            test: dir.join(layout::TEST),
            vocab: dir.join(layout::VOCAB),
            embeddings: dir.join(layout::EMBEDDINGS),
            embeddings_alt: None,
            world: world.exists().then_some(world),
        }
    }

    fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.train.as_path(), &self.test, &self.vocab, &self.embeddings];
        v.extend(self.embeddings_alt.as_deref());
        v.extend(self.world.as_deref());
        v
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub mode: EvalMode,
    pub setup: Setup,
}

/// Everything a command needs. Exactly one of `world` (generate in memory)
/// and `data` (read files) is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub world: Option<WorldOverrides>,
    #[serde(default)]
    pub data: Option<DataPaths>,
    #[serde(default)]
    pub episodes: EpisodeCounts,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "TrainConfig::toy")]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for RunConfig {
    /// The default synthetic world, toy training recipe (lr ×100).
    fn default() -> Self {
        RunConfig {
            world: Some(WorldOverrides::default()),
            data: None,
            episodes: EpisodeCounts::default(),
            model: ModelConfig::default(),
            train: TrainConfig::toy(),
            eval: EvalSection::default(),
            out: default_out(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.world, &self.data) {
            (Some(_), Some(_)) => return Err(Error::Config("set either `world` or `data`, not both".into())),
            (None, None) => return Err(Error::Config("one of `world` or `data` is required".into())),
            (None, Some(d)) => {
                if let Some(missing) = d.all().into_iter().find(|p| !p.exists()) {
                    return Err(Error::Config(format!("data file {} does not exist", missing.display())));
                }
            }
            (Some(_), None) => {}
        }
        if self.model.model_kind.is_neural() {
            self.model.validate()?;
        }
        self.train.validate()
    }
}

/// Datasets resolved from a [`RunConfig`], either generated or read.
pub struct LoadedData {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub embeddings_alt: Option<(String, EmbeddingTable)>,
    pub train: Vec<SnapshotRecord>,
    pub test: Vec<SnapshotRecord>,
    pub world: Option<WorldSpec>,
    pub d_raw: usize,
}

impl LoadedData {
    pub fn n_actions(&self) -> usize {
        self.vocab.actions.len()
    }

    pub fn lookup(&self) -> Result<SemanticLookup> {
        SemanticLookup::new(&self.vocab, &self.embeddings)
    }

    pub fn dataset(&self, records: &[SnapshotRecord], setup: Setup) -> Result<Vec<AbductionExample>> {
        build_abduction_dataset(&group_by_video(records.to_vec()), setup, self.n_actions())
    }

    pub fn dims(&self) -> InputDims {
        InputDims {
            d_raw: self.d_raw,
            d_emb: self.embeddings.dim(),
            n_actions: self.n_actions(),
        }
    }
}

fn read_embeddings(path: &Path) -> Result<EmbeddingTable> {
    EmbeddingTable::from_entries(read_jsonl::<EmbeddingEntry>(path)?, EmbeddingSource::Pretrained)
}

pub fn load_data(cfg: &RunConfig) -> Result<LoadedData> {
    cfg.validate()?;
    if let Some(o) = &cfg.world {
        let splits = SyntheticSplits::generate(cfg.seed, o, cfg.episodes.train, cfg.episodes.test)?;
        let w = &splits.world;
        return Ok(LoadedData {
            vocab: w.vocabulary(),
            embeddings: w.onehot_embeddings(),
            embeddings_alt: Some((
                "random".into(),
                w.random_embeddings(RANDOM_EMBEDDING_DIM, derive_seed(cfg.seed, 3)),
            )),
            train: SyntheticSplits::records(&splits.train),
            test: SyntheticSplits::records(&splits.test),
            d_raw: w.d_raw,
            world: Some(splits.world),
        });
    }
    let d = cfg.data.as_ref().expect("validated");
    let vocab: Vocabulary = read_json(&d.vocab)?;
    let train: Vec<SnapshotRecord> = read_jsonl(&d.train)?;
    let test: Vec<SnapshotRecord> = read_jsonl(&d.test)?;
    let d_raw = train
        .first()
        .map(|r| r.human_feature.len())
        .ok_or_else(|| Error::Data(format!("{}: no records", d.train.display())))?;
    for r in train.iter().chain(&test) {
        r.validate(d_raw, vocab.objects.len(), vocab.actions.len())?;
    }
    let embeddings_alt = match &d.embeddings_alt {
        Some(p) => Some((
            p.file_stem().map_or("alt".into(), |s| s.to_string_lossy().into_owned()),
            read_embeddings(p)?,
        )),
        None => None,
    };
    Ok(LoadedData {
        embeddings: read_embeddings(&d.embeddings)?,
        embeddings_alt,
        world: d.world.as_deref().map(read_json).transpose()?,
        vocab,
        train,
        test,
        d_raw,
    })
}

// ---- command line --------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(name = "abduction", version, about = "Infer past actions from the human-object relations of one scene")]
pub struct Cli {
    /// JSON run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and its train/test splits.
    Generate(GenerateArgs),
    /// Train a model (or all five) with the configured recipe.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline.
    Eval(EvalArgs),
    /// Run the semantics × scheduler × pooling (× embedding) ablation grid.
    Ablate(AblateArgs),
    /// Run the property suite: gradient checks, invariances, oracles.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Training episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Test episodes.
    #[arg(long)]
    pub test_episodes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset directory written by `generate` (replaces the config's world/data).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// all_past | last_two
    #[arg(long)]
    pub setup: Option<Setup>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model kind, or `all` for every neural model plus the rule baseline.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    All,
    Last,
}

impl From<ModeArg> for EvalMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::All => EvalMode::All,
            ModeArg::Last => EvalMode::LastSnapshot,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Noisy-or rule-based inference from object categories.
    Rule,
    /// Training-set action frequencies, ignoring the scene.
    Prior,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint to evaluate.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    pub checkpoint: Option<PathBuf>,
    /// Baseline fitted on the train split instead of a checkpoint.
    #[arg(long)]
    pub baseline: Option<Baseline>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Also print the top-k actions of the first example.
    #[arg(long)]
    pub topk: Option<usize>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Models to ablate.
    #[arg(long, value_delimiter = ',', default_value = "mlp,transformer")]
    pub models: Vec<ModelKind>,
    /// Alternate embedding table (JSON lines); doubles the grid.
    #[arg(long)]
    pub embeddings_alt: Option<PathBuf>,
    /// Only the configured cell (semantics, scheduler and pooling as configured).
    #[arg(long)]
    pub single_cell: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Run only checks whose name starts with this prefix (repeatable).
    #[arg(long)]
    pub only: Vec<String>,
    /// Inject a known bug to confirm the suite catches it.
    #[arg(long, hide = true)]
    pub inject_fault: Option<FaultArg>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FaultArg {
    JaccardSign,
}

/// Parse arguments, run, and return the process exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = cli.out {
        cfg.out = o;
    }
    match cli.command {
        Command::Generate(a) => {
            if let Some(n) = a.episodes {
                cfg.episodes.train = n;
            }
            if let Some(n) = a.test_episodes {
                cfg.episodes.test = n;
            }
            let g = cmd_generate(&cfg)?;
            println!("wrote {} train / {} test episodes to {}", g.train_episodes, g.test_episodes, cfg.out.display());
            if let Some(m) = g.oracle_test_map {
                println!("oracle mAP (test, all_past): {m:.2}");
            }
            Ok(())
        }
        Command::Train(a) => {
            apply_data_args(&mut cfg, &a.data);
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if let Some(r) = a.runs {
                cfg.train.runs = r;
            }
            match a.model.as_deref() {
                Some("all") => {
                    let rows = cmd_compare(&cfg)?;
                    print!("{}", eval::results_table(&rows));
                    Ok(())
                }
                other => {
                    if let Some(m) = other {
                        cfg.model.model_kind = m.parse()?;
                    }
                    let s = cmd_train(&cfg)?;
                    println!(
                        "{}: mAP {:.2} ± {:.2} over {} run(s) (config {})",
                        cfg.model.model_kind,
                        s.map_mean,
                        s.map_std,
                        s.runs,
                        &s.config_hash[..12]
                    );
                    Ok(())
                }
            }
        }
        Command::Eval(a) => {
            apply_data_args(&mut cfg, &a.data);
            if let Some(m) = a.mode {
                cfg.eval.mode = m.into();
            }
            let source = match (&a.checkpoint, a.baseline) {
                (Some(p), _) => EvalSource::Checkpoint(p.clone()),
                (None, Some(b)) => EvalSource::Baseline(b),
                (None, None) => return Err(Error::Config("pass --checkpoint or --baseline".into())),
            };
            let (report, names, topk) = cmd_eval(&cfg, &source, a.topk)?;
            print!("{}", report.to_table(&names));
            if let Some(t) = topk {
                println!("{}: predicted [{}], ground truth [{}]", t.video_id, t.predicted.join(", "), t.ground_truth.join(", "));
            }
            Ok(())
        }
        Command::Ablate(a) => {
            apply_data_args(&mut cfg, &a.data);
            if let Some(p) = &a.embeddings_alt {
                match &mut cfg.data {
                    Some(d) => d.embeddings_alt = Some(p.clone()),
                    None => return Err(Error::Config("--embeddings-alt needs a file dataset (--data)".into())),
                }
            }
            let rows = cmd_ablate(&cfg, &a.models, a.single_cell)?;
            for r in &rows {
                println!("{:<50} {:>8} {:<8} {:>7.2} ± {:.2}", r.label(), r.pooling, r.embedding, r.map_mean, r.map_std);
            }
            Ok(())
        }
        Command::Verify(a) => {
            let opts = verify::VerifyOptions {
                only: a.only,
                fault: a.inject_fault.map(|FaultArg::JaccardSign| verify::Fault::FlipJaccardBackward),
            };
            cmd_verify(&opts)
        }
    }
}

fn apply_data_args(cfg: &mut RunConfig, a: &DataArgs) {
    if let Some(dir) = &a.data {
        cfg.world = None;
        cfg.data = Some(DataPaths::from_dir(dir));
    }
    if let Some(s) = a.setup {
        cfg.eval.setup = s;
    }
}

// ---- commands ------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub train_episodes: usize,
    pub test_episodes: usize,
    /// `None` when the action vocabulary is too large for the oracle.
    pub oracle_test_map: Option<f64>,
}

/// Write a synthetic world and its splits in the dataset format.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    let o = cfg
        .world
        .as_ref()
        .ok_or_else(|| Error::Config("generate needs a `world` section".into()))?;
    let splits = SyntheticSplits::generate(cfg.seed, o, cfg.episodes.train, cfg.episodes.test)?;
    let w = &splits.world;
    let out = &cfg.out;
    write_json(&out.join(layout::WORLD), w)?;
    write_json(&out.join(layout::VOCAB), &w.vocabulary())?;
    write_jsonl(&out.join(layout::TRAIN), &SyntheticSplits::records(&splits.train))?;
    write_jsonl(&out.join(layout::TEST), &SyntheticSplits::records(&splits.test))?;
    write_jsonl(&out.join(layout::EMBEDDINGS), &w.onehot_embeddings().entries())?;
    let random = w.random_embeddings(RANDOM_EMBEDDING_DIM, derive_seed(cfg.seed, 3));
    write_jsonl(&out.join(layout::EMBEDDINGS_RANDOM), &random.entries())?;
    let oracle_test_map = if w.n_actions <= ORACLE_MAX_ACTIONS {
        Some(oracle_map(w, &splits.test)?)
    } else {
        None
    };
    let summary = GenerateSummary {
        train_episodes: splits.train.len(),
        test_episodes: splits.test.len(),
        oracle_test_map,
    };
    write_json(&out.join(layout::ORACLE), &summary)?;
    Ok(summary)
}

fn write_timing(dir: &Path, start: Instant) -> Result<()> {
    write_json(
        &dir.join("timing.json"),
        &serde_json::json!({ "seconds": start.elapsed().as_secs_f64() }),
    )
}

/// Prepared train and test splits for the configured setup.
pub fn prepared_splits(data: &LoadedData, setup: Setup, use_semantics: bool) -> Result<(Vec<Prepared>, Vec<Prepared>)> {
    let lookup = data.lookup()?;
    let train = prepare(&data.dataset(&data.train, setup)?, &lookup, use_semantics)?;
    let test = prepare(&data.dataset(&data.test, setup)?, &lookup, use_semantics)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("a split has no usable examples".into()));
    }
    Ok((train, test))
}

/// Train `cfg.train.runs` replicas; writes per-run checkpoints and epoch
/// logs under `{out}/{model}/run{r}/` and `{out}/{model}/summary.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<RunSummary> {
    let kind = cfg.model.model_kind;
    if !kind.is_neural() {
        return Err(Error::Config(format!(
            "`{kind}` is fitted, not trained; use `eval --baseline rule`"
        )));
    }
    let start = Instant::now();
    let data = load_data(cfg)?;
    let (train, test) = prepared_splits(&data, cfg.eval.setup, cfg.model.use_semantics)?;
    let (outcomes, maps, summary) = train_runs(&cfg.model, &cfg.train, data.dims(), &train, &test, cfg.seed)?;
    let dir = cfg.out.join(kind.name());
    for (r, (o, m)) in outcomes.iter().zip(&maps).enumerate() {
        let run = dir.join(format!("run{r}"));
        checkpoint::save(&o.model, &run.join("checkpoint.bin"))?;
        write_jsonl(&run.join("metrics.jsonl"), &o.curve)?;
        write_json(&run.join("test.json"), &serde_json::json!({ "map": m }))?;
    }
    write_json(&dir.join("summary.json"), &summary)?;
    write_timing(&dir, start)?;
    Ok(summary)
}

/// Train every neural model and fit the rule baseline on the same splits;
/// returns `(display name, mean test mAP)` rows in results-table order.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<(String, f64)>> {
    let data = load_data(cfg)?;
    let mut rows = Vec::new();
    let train_ex = data.dataset(&data.train, cfg.eval.setup)?;
    let (_, test) = prepared_splits(&data, cfg.eval.setup, true)?;
    let rule = rule_fit(&train_ex, data.n_actions())?;
    rows.push((eval::display_name(ModelKind::Rule).to_string(), eval::mean_ap_of(&rule, &test)?));
    for kind in ModelKind::NEURAL {
        let mut c = cfg.clone();
        c.model.model_kind = kind;
        let s = cmd_train(&c)?;
        rows.push((eval::display_name(kind).to_string(), s.map_mean));
    }
    write_atomic(&cfg.out.join("results.md"), eval::results_table(&rows).as_bytes())?;
    Ok(rows)
}

#[derive(Clone, Debug)]
pub enum EvalSource {
    Checkpoint(PathBuf),
    Baseline(Baseline),
}

/// Score the test split; writes `{out}/eval/{model}_{setup}_{all|last}.json` and `.txt`.
pub fn cmd_eval(
    cfg: &RunConfig,
    source: &EvalSource,
    topk: Option<usize>,
) -> Result<(EvalReport, Vec<String>, Option<eval::TopkReport>)> {
    let data = load_data(cfg)?;
    let setup = cfg.eval.setup;
    let names = data.vocab.actions.clone();
    let (scorer, id, use_semantics): (Box<dyn Scorer>, String, bool) = match source {
        EvalSource::Checkpoint(p) => {
            let model = checkpoint::load(p)?;
            check_dims(&model, &data, p)?;
            let sem = model.net.config.use_semantics;
            let id = model.kind().name().to_string();
            (Box::new(model), id, sem)
        }
        EvalSource::Baseline(b) => {
            let train_ex = data.dataset(&data.train, setup)?;
            match b {
                Baseline::Rule => (Box::new(rule_fit(&train_ex, data.n_actions())?), "rule".into(), true),
                Baseline::Prior => (Box::new(FrequencyPrior::fit(&train_ex, data.n_actions())?), "prior".into(), true),
            }
        }
    };
    let (_, test) = prepared_splits(&data, setup, use_semantics)?;
    let report = eval::evaluate(scorer.as_ref(), &id, cfg.seed, setup, &test, cfg.eval.mode)?;
    let dir = cfg.out.join("eval");
    let mode = match cfg.eval.mode {
        EvalMode::All => "all",
        EvalMode::LastSnapshot => "last",
    };
    let stem = format!("{}_{setup}_{mode}", report.model);
    write_json(&dir.join(format!("{stem}.json")), &report)?;
    write_atomic(&dir.join(format!("{stem}.txt")), report.to_table(&names).as_bytes())?;
    let top = match (topk, test.first()) {
        (Some(k), Some(ex)) => Some(eval::topk_report(scorer.as_ref(), ex, Some(k), &names)?),
        _ => None,
    };
    Ok((report, names, top))
}

fn check_dims(model: &Model, data: &LoadedData, path: &Path) -> Result<()> {
    let (have, want) = (model.net.dims, data.dims());
    if have != want {
        return Err(Error::Data(format!(
            "{}: checkpoint expects d_raw {}, d_emb {}, {} actions; dataset has d_raw {}, d_emb {}, {} actions",
            path.display(),
            have.d_raw,
            have.d_emb,
            have.n_actions,
            want.d_raw,
            want.d_emb,
            want.n_actions
        )));
    }
    Ok(())
}

/// Run the ablation grid; writes `{out}/ablation.csv` and `{out}/ablation.json`.
pub fn cmd_ablate(cfg: &RunConfig, kinds: &[ModelKind], single_cell: bool) -> Result<Vec<eval::AblationRow>> {
    let data = load_data(cfg)?;
    let mut embeddings = vec![EmbeddingVariant {
        name: "primary".into(),
        lookup: data.lookup()?,
    }];
    if cfg.data.as_ref().is_some_and(|d| d.embeddings_alt.is_some()) {
        let (name, table) = data.embeddings_alt.as_ref().expect("loaded with data");
        embeddings.push(EmbeddingVariant {
            name: name.clone(),
            lookup: SemanticLookup::new(&data.vocab, table)?,
        });
    }
    let grid = if single_cell {
        AblationGrid {
            semantics: vec![cfg.model.use_semantics],
            scheduler: vec![cfg.train.scheduler],
            pooling: vec![cfg.model.pooling],
            embeddings,
        }
    } else {
        AblationGrid::full(embeddings)
    };
    let setup = cfg.eval.setup;
    let train = data.dataset(&data.train, setup)?;
    let test = data.dataset(&data.test, setup)?;
    let rows = ablation_suite(kinds, &cfg.model, &cfg.train, &grid, data.d_raw, data.n_actions(), &train, &test, cfg.seed)?;
    write_atomic(&cfg.out.join("ablation.csv"), ablation_csv(&rows).as_bytes())?;
    write_json(&cfg.out.join("ablation.json"), &rows)?;
    Ok(rows)
}

/// Print one line per check; fails with the names of failing checks.
pub fn cmd_verify(opts: &verify::VerifyOptions) -> Result<()> {
    let start = Instant::now();
    let report = verify::run_suite(opts, |c| {
        println!(
            "{} {:<40} {:>7.2}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    });
    println!(
        "{} of {} checks passed in {:.1}s",
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        start.elapsed().as_secs_f64()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Verification(report.failures()))
    }
}

