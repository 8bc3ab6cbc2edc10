use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use super::config::resolve;
use super::manifest::{output_layout, RunOutputs};
use crate::data::{
    generate_synthetic, load_concept_dataset, split, write_csv_to, Dataset, DatasetFormat, LoadOptions, SplitFractions,
    SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::info::{mrmr_rank, ranking_stability, read_ranking_csv, write_ranking_csv, ConceptRanking, MrmrOptions};
use crate::intervene::{
    accuracy_at_k, expected_cost, fit_geometric_decay, minimal_sufficient_levels, planted_minimal_levels,
    write_curves_csv, write_traces_csv, AccuracyCurve, DecayFit, HeadPolicy, LevelHistogram,
};
use crate::model::{init_model, train, LossConfig, MatryoshkaModel, ModelMode, NestingSchedule};
use crate::theory::{
    expected_cost_bound, hellman_raviv_report, regime_classify, simulate_regimes, write_bound_reports, RegimeClass,
    RegimeParams, DEFAULT_BINS,
};

/// Data source flags shared by several commands.
#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Dataset path.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<String>,
    /// `csv` or `cub`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<String>,
    /// Class count (inferred when absent).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
}

fn load_data(data: &Option<String>, format: &str, classes: Option<usize>) -> Result<(Dataset, PathBuf)> {
    let path = PathBuf::from(data.as_deref().ok_or_else(|| Error::spec("--data is required"))?);
    let format: DatasetFormat = format.parse()?;
    let ds = load_concept_dataset(&path, format, &LoadOptions { class_count: classes })?;
    Ok((ds, path))
}

/// Datasets without feature columns use their concept matrix as input.
fn with_inputs(ds: Dataset) -> Result<Dataset> {
    if ds.n_features() > 0 {
        return Ok(ds);
    }
    let features = ds.concepts().iter().map(|&c| f64::from(c)).collect();
    let names = (1..=ds.n_concepts()).map(|j| format!("f_{j}")).collect();
    Dataset::new(
        features,
        names,
        ds.concepts().to_vec(),
        ds.concept_names().to_vec(),
        ds.labels().to_vec(),
        ds.class_count(),
    )
}

fn output_path(output: &Option<String>) -> Result<PathBuf> {
    output
        .as_deref()
        .map(PathBuf::from)
        .ok_or_else(|| Error::spec("-o/--output is required"))
}

fn buffer_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Result<Vec<u8>> {
    Ok((serde_json::to_string_pretty(v)? + "\n").into_bytes())
}

fn exclude_indices(ds: &Dataset, exclude: &[String]) -> Result<Vec<usize>> {
    exclude
        .iter()
        .map(|e| {
            ds.concept_names()
                .iter()
                .position(|n| n == e)
                .or_else(|| e.parse().ok().filter(|&i: &usize| i < ds.n_concepts()))
                .ok_or_else(|| Error::spec(format!("unknown concept to exclude: {e}")))
        })
        .collect()
}

/// Powers of two below `k`, then `k`.
fn default_schedule(k: usize) -> Vec<usize> {
    let mut s: Vec<usize> = std::iter::successors(Some(1usize), |v| Some(v * 2))
        .take_while(|&v| v < k)
        .collect();
    s.push(k);
    s
}

// ---------------------------------------------------------------- synth

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<usize>,
    /// Level growth rate.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    /// Decay rate of the minimal sufficient level law.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    /// Sample count.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Near-duplicate clones per informative concept.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub copies: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_noise: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub levels: usize,
    pub base: usize,
    pub r: f64,
    pub gamma: f64,
    pub classes: usize,
    pub n: usize,
    pub copies: usize,
    pub noise: f64,
    pub feature_dim: Option<usize>,
    pub feature_noise: f64,
    pub seed: u64,
    pub output: Option<String>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        Self {
            levels: s.levels,
            base: s.base_size,
            r: s.growth_rate,
            gamma: s.decay_rate,
            classes: s.classes,
            n: s.samples,
            copies: s.redundancy_copies,
            noise: s.noise,
            feature_dim: s.feature_dim,
            feature_noise: s.feature_noise,
            seed: s.seed,
            output: None,
        }
    }
}

impl SynthConfig {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            levels: self.levels,
            base_size: self.base,
            growth_rate: self.r,
            decay_rate: self.gamma,
            classes: self.classes,
            samples: self.n,
            redundancy_copies: self.copies,
            noise: self.noise,
            seed: self.seed,
            feature_dim: self.feature_dim,
            feature_noise: self.feature_noise,
        }
    }
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let cfg: SynthConfig = resolve("synth", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let data = generate_synthetic(&cfg.spec())?;
    let (data_path, manifest_path) = output_layout(&out, "dataset.csv");
    let mut run = RunOutputs::new("synth", &cfg)?;
    run.write(&data_path, &buffer_bytes(|b| write_csv_to(&data.dataset, b))?)?;
    if out.extension().is_none() {
        let oracle = planted_minimal_levels(&data);
        let mut text = String::from("sample_id,planted_level,oracle_level\n");
        for (i, (p, o)) in data.planted_levels.iter().zip(&oracle).enumerate() {
            let o = o.map_or_else(|| "never".to_string(), |v| v.to_string());
            text.push_str(&format!("{i},{p},{o}\n"));
        }
        run.write(&out.join("planted_levels.csv"), text.as_bytes())?;
    }
    run.finish(&manifest_path)?;
    Ok(())
}

// ---------------------------------------------------------------- load

#[derive(Debug, Clone, Args, Serialize)]
pub struct LoadArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadConfig {
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub output: Option<String>,
}

impl Default for LoadConfig {
    fn default() -> Self {
        Self {
            data: None,
            format: "csv".into(),
            classes: None,
            output: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct DatasetSummary {
    samples: usize,
    concepts: usize,
    features: usize,
    classes: usize,
}

pub fn load(args: LoadArgs) -> Result<()> {
    let cfg: LoadConfig = resolve("load", &args, args.config.as_deref())?;
    let (ds, path) = load_data(&cfg.data, &cfg.format, cfg.classes)?;
    let summary = DatasetSummary {
        samples: ds.n_samples(),
        concepts: ds.n_concepts(),
        features: ds.n_features(),
        classes: ds.class_count(),
    };
    println!("{}", serde_json::to_string(&summary)?);
    if let Some(out) = &cfg.output {
        let (data_path, manifest_path) = output_layout(Path::new(out), "dataset.csv");
        let mut run = RunOutputs::new("load", &cfg)?;
        run.input(&path)?;
        run.write(&data_path, &buffer_bytes(|b| write_csv_to(&ds, b))?)?;
        run.finish(&manifest_path)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- rank

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Concepts (names or indices) kept out of the greedy selection.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Vec<String>>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub exclude: Vec<String>,
    pub output: Option<String>,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            data: None,
            format: "csv".into(),
            classes: None,
            exclude: Vec::new(),
            output: None,
        }
    }
}

pub fn rank(args: RankArgs) -> Result<()> {
    let cfg: RankConfig = resolve("rank", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let (ds, path) = load_data(&cfg.data, &cfg.format, cfg.classes)?;
    let ranking = mrmr_rank(
        &ds,
        &MrmrOptions {
            exclude: exclude_indices(&ds, &cfg.exclude)?,
        },
    )?;
    let (rank_path, manifest_path) = output_layout(&out, "ranking.csv");
    let mut run = RunOutputs::new("rank", &cfg)?;
    run.input(&path)?;
    run.write(
        &rank_path,
        &buffer_bytes(|b| write_ranking_csv(&ranking, ds.concept_names(), b))?,
    )?;
    run.finish(&manifest_path)?;
    Ok(())
}

// ---------------------------------------------------------------- stability

#[derive(Debug, Clone, Args, Serialize)]
pub struct StabilityArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    /// Fraction of rows kept in each resample.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefixes: Option<Vec<usize>>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub exclude: Vec<String>,
    pub seeds: Vec<u64>,
    pub fraction: f64,
    /// Empty means powers of two below K.
    pub prefixes: Vec<usize>,
    pub output: Option<String>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            data: None,
            format: "csv".into(),
            classes: None,
            exclude: Vec::new(),
            seeds: (0..5).collect(),
            fraction: 0.8,
            prefixes: Vec::new(),
            output: None,
        }
    }
}

pub fn stability(args: StabilityArgs) -> Result<()> {
    let cfg: StabilityConfig = resolve("stability", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let (ds, path) = load_data(&cfg.data, &cfg.format, cfg.classes)?;
    let prefixes = if cfg.prefixes.is_empty() {
        default_schedule(ds.n_concepts())
    } else {
        cfg.prefixes.clone()
    };
    let options = MrmrOptions {
        exclude: exclude_indices(&ds, &cfg.exclude)?,
    };
    let report = ranking_stability(&ds, &cfg.seeds, cfg.fraction, &prefixes, &options)?;
    let (report_path, manifest_path) = output_layout(&out, "stability.json");
    let mut run = RunOutputs::new("stability", &cfg)?;
    run.input(&path)?;
    run.write(&report_path, &json_bytes(&report)?)?;
    run.finish(&manifest_path)?;
    Ok(())
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainFlags {
    /// Ranking CSV; mRMR on the training split when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<String>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exclude: Option<Vec<String>>,
    /// Comma-separated nesting levels.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
    /// `standard` or `efficient`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// `joint` or `sequential`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<String>,
    /// `all_levels` or `random_level`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub efficient_training: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub ranking: Option<String>,
    pub exclude: Vec<String>,
    /// Empty means powers of two below K, then K.
    pub schedule: Vec<usize>,
    pub mode: String,
    pub training: String,
    pub efficient_training: String,
    pub alpha: f64,
    pub lambdas: Option<Vec<f64>>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub split: Vec<f64>,
    pub seed: u64,
    pub output: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let l = LossConfig::default();
        Self {
            data: None,
            format: "csv".into(),
            classes: None,
            ranking: None,
            exclude: Vec::new(),
            schedule: Vec::new(),
            mode: "standard".into(),
            training: "joint".into(),
            efficient_training: "all_levels".into(),
            alpha: l.alpha,
            lambdas: None,
            epochs: l.epochs,
            learning_rate: l.learning_rate,
            batch_size: l.batch_size,
            split: vec![0.7, 0.15, 0.15],
            seed: 0,
            output: None,
        }
    }
}

impl TrainConfig {
    fn loss(&self) -> Result<LossConfig> {
        Ok(LossConfig {
            alpha: self.alpha,
            lambdas: self.lambdas.clone(),
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            efficient_training: self.efficient_training.parse()?,
            training_mode: self.training.parse()?,
            seed: self.seed,
        })
    }

    fn fractions(&self) -> Result<SplitFractions> {
        match self.split.as_slice() {
            &[a, b, c] => SplitFractions::new(a, b, c),
            other => Err(Error::spec(format!("split needs three fractions, got {}", other.len()))),
        }
    }
}

struct Trained {
    ranking: ConceptRanking,
    ranking_computed: bool,
    model: MatryoshkaModel,
    history: crate::model::TrainingHistory,
    test: Dataset,
}

fn train_from(cfg: &TrainConfig, ds: Dataset) -> Result<Trained> {
    let ds = with_inputs(ds)?;
    let (train_set, val_set, test, _) = split(&ds, cfg.fractions()?, cfg.seed)?;
    let (ranking, ranking_computed) = match &cfg.ranking {
        Some(p) => (read_ranking_csv(p)?, false),
        None => (
            mrmr_rank(
                &train_set,
                &MrmrOptions {
                    exclude: exclude_indices(&ds, &cfg.exclude)?,
                },
            )?,
            true,
        ),
    };
    let k = ds.n_concepts();
    let levels = if cfg.schedule.is_empty() {
        default_schedule(k)
    } else {
        cfg.schedule.clone()
    };
    let schedule = NestingSchedule::new(levels, k)?;
    let mode: ModelMode = cfg.mode.parse()?;
    let model = init_model(
        ds.n_features(),
        k,
        ds.class_count(),
        schedule,
        mode,
        ranking.order().to_vec(),
        cfg.seed,
    )?;
    let (model, history) = train(&model, &train_set, &val_set, &cfg.loss()?)?;
    Ok(Trained {
        ranking,
        ranking_computed,
        model,
        history,
        test,
    })
}

pub fn train_cmd(args: TrainArgs) -> Result<()> {
    let cfg: TrainConfig = resolve("train", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let (ds, path) = load_data(&cfg.data, &cfg.format, cfg.classes)?;
    let names = ds.concept_names().to_vec();
    let t = train_from(&cfg, ds)?;
    let mut run = RunOutputs::new("train", &cfg)?;
    run.input(&path)?;
    if let Some(r) = &cfg.ranking {
        run.input(Path::new(r))?;
    }
    if t.ranking_computed {
        run.write(
            &out.join("ranking.csv"),
            &buffer_bytes(|b| write_ranking_csv(&t.ranking, &names, b))?,
        )?;
    }
    run.write(&out.join("model.json"), t.model.to_json()?.as_bytes())?;
    run.write(&out.join("history.csv"), &buffer_bytes(|b| t.history.write_csv(b))?)?;
    run.finish(&out.join("manifest.json"))?;
    Ok(())
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Levels to evaluate; the schedule when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: Option<String>,
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub levels: Vec<usize>,
    pub output: Option<String>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            model: None,
            data: None,
            format: "csv".into(),
            classes: None,
            levels: Vec::new(),
            output: None,
        }
    }
}

#[derive(Debug, Serialize)]
struct LevelMetrics {
    level: usize,
    accuracy: f64,
    macro_f1: f64,
}

fn load_model(path: &Option<String>) -> Result<(MatryoshkaModel, PathBuf)> {
    let p = PathBuf::from(path.as_deref().ok_or_else(|| Error::spec("--model is required"))?);
    Ok((MatryoshkaModel::load(&p)?, p))
}

pub fn evaluate(args: EvaluateArgs) -> Result<()> {
    let cfg: EvaluateConfig = resolve("evaluate", &args, args.config.as_deref())?;
    let (model, model_path) = load_model(&cfg.model)?;
    let (ds, data_path) = load_data(&cfg.data, &cfg.format, cfg.classes.or(Some(model.n_classes())))?;
    let ds = with_inputs(ds)?;
    let levels = if cfg.levels.is_empty() {
        model.schedule.levels().to_vec()
    } else {
        cfg.levels.clone()
    };
    let metrics = levels
        .iter()
        .map(|&d| {
            let (accuracy, macro_f1) = model.evaluate(&ds, d)?;
            Ok(LevelMetrics {
                level: d,
                accuracy,
                macro_f1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = json_bytes(&metrics)?;
    match &cfg.output {
        None => print!("{}", String::from_utf8_lossy(&bytes)),
        Some(out) => {
            let (p, m) = output_layout(Path::new(out), "metrics.json");
            let mut run = RunOutputs::new("evaluate", &cfg)?;
            run.input(&model_path)?;
            run.input(&data_path)?;
            run.write(&p, &bytes)?;
            run.finish(&m)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- intervene

#[derive(Debug, Clone, Args, Serialize)]
pub struct InterveneArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Intervention counts; 0 plus the schedule when absent.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// `matched`, `full_head` or `both`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    /// Compute minimal sufficient levels over every sample, not only the
    /// initially misclassified ones.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all_samples: Option<bool>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterveneConfig {
    pub model: Option<String>,
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub k_grid: Vec<usize>,
    pub policy: String,
    pub all_samples: bool,
    pub output: Option<String>,
}

impl Default for InterveneConfig {
    fn default() -> Self {
        Self {
            model: None,
            data: None,
            format: "csv".into(),
            classes: None,
            k_grid: Vec::new(),
            policy: "both".into(),
            all_samples: false,
            output: None,
        }
    }
}

fn policies(name: &str) -> Result<Vec<HeadPolicy>> {
    if name == "both" {
        Ok(vec![HeadPolicy::Matched, HeadPolicy::FullHead])
    } else {
        Ok(vec![name.parse()?])
    }
}

#[derive(Debug, Serialize)]
struct LevelReport {
    policy: HeadPolicy,
    misclassified_only: bool,
    histogram: LevelHistogram,
    decay_fit: Option<DecayFit>,
    expected_cost: Option<f64>,
}

struct InterventionOutputs {
    curves: Vec<u8>,
    traces: Vec<u8>,
    levels: Vec<u8>,
    reports: Vec<LevelReport>,
}

fn schedule_sizes(levels: &[usize]) -> Vec<usize> {
    let mut prev = 0;
    levels
        .iter()
        .map(|&l| {
            let s = l - prev;
            prev = l;
            s
        })
        .collect()
}

fn run_interventions(
    model: &MatryoshkaModel,
    ds: &Dataset,
    k_grid: &[usize],
    policy_names: &str,
    misclassified_only: bool,
) -> Result<InterventionOutputs> {
    let levels = model.schedule.levels().to_vec();
    let grid = if k_grid.is_empty() {
        std::iter::once(0).chain(levels.iter().copied()).collect()
    } else {
        k_grid.to_vec()
    };
    let order = model.permutation.clone();
    let mut curves = Vec::new();
    let mut traces = Vec::new();
    let mut reports = Vec::new();
    for policy in policies(policy_names)? {
        curves.push(AccuracyCurve {
            policy,
            ordering: "model".into(),
            points: accuracy_at_k(model, ds, &order, &grid, policy)?,
        });
        let (hist, kept) = minimal_sufficient_levels(model, ds, &order, &levels, policy, misclassified_only)?;
        let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
        reports.push(LevelReport {
            policy,
            misclassified_only,
            decay_fit: fit_geometric_decay(&counts).ok(),
            expected_cost: expected_cost(&counts, hist.never as f64, &schedule_sizes(&levels)).ok(),
            histogram: hist,
        });
        traces.extend(kept);
    }
    Ok(InterventionOutputs {
        curves: buffer_bytes(|b| write_curves_csv(&curves, b))?,
        traces: buffer_bytes(|b| write_traces_csv(&traces, b))?,
        levels: json_bytes(&reports)?,
        reports,
    })
}

pub fn intervene(args: InterveneArgs) -> Result<()> {
    let cfg: InterveneConfig = resolve("intervene", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let (model, model_path) = load_model(&cfg.model)?;
    let (ds, data_path) = load_data(&cfg.data, &cfg.format, cfg.classes.or(Some(model.n_classes())))?;
    let ds = with_inputs(ds)?;
    let o = run_interventions(&model, &ds, &cfg.k_grid, &cfg.policy, !cfg.all_samples)?;
    let mut run = RunOutputs::new("intervene", &cfg)?;
    run.input(&model_path)?;
    run.input(&data_path)?;
    run.write(&out.join("curves.csv"), &o.curves)?;
    run.write(&out.join("traces.csv"), &o.traces)?;
    run.write(&out.join("levels.json"), &o.levels)?;
    run.finish(&out.join("manifest.json"))?;
    Ok(())
}

// ---------------------------------------------------------------- decay-fit

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecayFitArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Per-level counts of the minimal sufficient level.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counts: Option<Vec<f64>>,
    /// Count of samples no level fixed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub never: Option<f64>,
    /// Level sizes `k_i` for the expected cost.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecayFitConfig {
    pub counts: Vec<f64>,
    pub never: f64,
    pub sizes: Vec<usize>,
    pub output: Option<String>,
}

#[derive(Debug, Serialize)]
struct DecayReport {
    fit: DecayFit,
    expected_cost: Option<f64>,
}

pub fn decay_fit(args: DecayFitArgs) -> Result<()> {
    let cfg: DecayFitConfig = resolve("decay-fit", &args, args.config.as_deref())?;
    let fit = fit_geometric_decay(&cfg.counts)?;
    let expected_cost = if cfg.sizes.is_empty() {
        None
    } else {
        Some(expected_cost(&cfg.counts, cfg.never, &cfg.sizes)?)
    };
    let bytes = json_bytes(&DecayReport { fit, expected_cost })?;
    match &cfg.output {
        None => print!("{}", String::from_utf8_lossy(&bytes)),
        Some(out) => {
            let (p, m) = output_layout(Path::new(out), "decay.json");
            let mut run = RunOutputs::new("decay-fit", &cfg)?;
            run.write(&p, &bytes)?;
            run.finish(&m)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- regimes

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegimesArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    /// Level counts `L` to simulate.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimesConfig {
    pub r: f64,
    pub gamma: f64,
    pub base: f64,
    pub levels: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
    pub output: Option<String>,
}

impl Default for RegimesConfig {
    fn default() -> Self {
        Self {
            r: 2.0,
            gamma: 0.5,
            base: 2.0,
            levels: (1..=12).collect(),
            samples: 100_000,
            seed: 0,
            output: None,
        }
    }
}

pub fn regimes(args: RegimesArgs) -> Result<()> {
    let cfg: RegimesConfig = resolve("regimes", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let table = simulate_regimes(cfg.r, cfg.gamma, cfg.base, &cfg.levels, cfg.samples, cfg.seed)?;
    let (p, m) = output_layout(&out, "regimes.csv");
    let mut run = RunOutputs::new("regimes", &cfg)?;
    run.write(&p, &buffer_bytes(|b| table.write_csv(b))?)?;
    run.finish(&m)?;
    Ok(())
}

// ---------------------------------------------------------------- bound

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    /// Bin centres for discretising soft concepts.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
    /// `matched` or `full_head`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub model: Option<String>,
    pub data: Option<String>,
    pub format: String,
    pub classes: Option<usize>,
    pub k_grid: Vec<usize>,
    pub bins: Vec<f64>,
    pub policy: String,
    pub output: Option<String>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            model: None,
            data: None,
            format: "csv".into(),
            classes: None,
            k_grid: Vec::new(),
            bins: DEFAULT_BINS.to_vec(),
            policy: "full_head".into(),
            output: None,
        }
    }
}

fn bound_grid(model: &MatryoshkaModel, k_grid: &[usize]) -> Vec<usize> {
    if k_grid.is_empty() {
        std::iter::once(0)
            .chain(model.schedule.levels().iter().copied())
            .collect()
    } else {
        k_grid.to_vec()
    }
}

pub fn bound(args: BoundArgs) -> Result<()> {
    let cfg: BoundConfig = resolve("bound", &args, args.config.as_deref())?;
    let out = output_path(&cfg.output)?;
    let (model, model_path) = load_model(&cfg.model)?;
    let (ds, data_path) = load_data(&cfg.data, &cfg.format, cfg.classes.or(Some(model.n_classes())))?;
    let ds = with_inputs(ds)?;
    let reports = hellman_raviv_report(
        &model,
        &ds,
        &bound_grid(&model, &cfg.k_grid),
        &cfg.bins,
        cfg.policy.parse()?,
    )?;
    let (p, m) = output_layout(&out, "bound.json");
    let mut run = RunOutputs::new("bound", &cfg)?;
    run.input(&model_path)?;
    run.input(&data_path)?;
    run.write(&p, &buffer_bytes(|b| write_bound_reports(&reports, b))?)?;
    run.finish(&m)?;
    Ok(())
}

// ---------------------------------------------------------------- pipeline

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub train: TrainFlags,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<f64>>,
    #[arg(short, long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    pub k_grid: Vec<usize>,
    pub bins: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            k_grid: Vec::new(),
            bins: DEFAULT_BINS.to_vec(),
        }
    }
}

/// Cost regime implied by a trained model: growth rate fitted to the
/// schedule's level sizes, decay rate fitted to the minimal sufficient level
/// histogram.
#[derive(Debug, Serialize)]
struct RegimeReport {
    growth_rate: Option<f64>,
    decay: Option<DecayFit>,
    spectral_ratio: Option<f64>,
    classification: Option<RegimeClass>,
    expected_cost: Option<f64>,
    expected_cost_bound: Option<f64>,
}

fn regime_report(levels: &[usize], hist: &LevelHistogram) -> RegimeReport {
    let sizes = schedule_sizes(levels);
    let size_counts: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let growth = fit_geometric_decay(&size_counts).ok().map(|f| f.gamma_hat);
    let counts: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let decay = fit_geometric_decay(&counts).ok();
    let classification = match (growth, decay) {
        (Some(r), Some(d)) => regime_classify(r, d.gamma_hat).ok(),
        _ => None,
    };
    let bound = match (growth, decay) {
        (Some(r), Some(d)) => expected_cost_bound(&RegimeParams {
            growth_rate: r,
            decay_rate: d.gamma_hat,
            base_size: sizes[0] as f64,
            levels: levels.len(),
            norm_const: d.c_hat,
        })
        .ok(),
        _ => None,
    };
    RegimeReport {
        growth_rate: growth,
        spectral_ratio: growth.zip(decay).map(|(r, d)| r * d.gamma_hat),
        decay,
        classification,
        expected_cost: expected_cost(&counts, hist.never as f64, &sizes).ok(),
        expected_cost_bound: bound,
    }
}

pub fn pipeline(args: PipelineArgs) -> Result<()> {
    let cfg: PipelineConfig = resolve("pipeline", &args, args.config.as_deref())?;
    let out = output_path(&cfg.train.output)?;
    let (ds, path) = load_data(&cfg.train.data, &cfg.train.format, cfg.train.classes)?;
    let names = ds.concept_names().to_vec();
    let t = train_from(&cfg.train, ds)?;
    let o = run_interventions(&t.model, &t.test, &cfg.k_grid, "both", true)?;
    let matched = o
        .reports
        .iter()
        .find(|r| r.policy == HeadPolicy::Matched)
        .expect("both policies run");
    let regime = regime_report(t.model.schedule.levels(), &matched.histogram);
    let bounds = hellman_raviv_report(
        &t.model,
        &t.test,
        &bound_grid(&t.model, &cfg.k_grid),
        &cfg.bins,
        HeadPolicy::FullHead,
    )?;

    let mut run = RunOutputs::new("pipeline", &cfg)?;
    run.input(&path)?;
    if let Some(r) = &cfg.train.ranking {
        run.input(Path::new(r))?;
    }
    run.write(
        &out.join("ranking.csv"),
        &buffer_bytes(|b| write_ranking_csv(&t.ranking, &names, b))?,
    )?;
    run.write(&out.join("model.json"), t.model.to_json()?.as_bytes())?;
    run.write(&out.join("history.csv"), &buffer_bytes(|b| t.history.write_csv(b))?)?;
    run.write(&out.join("curves.csv"), &o.curves)?;
    run.write(&out.join("traces.csv"), &o.traces)?;
    run.write(&out.join("levels.json"), &o.levels)?;
    run.write(&out.join("regime.json"), &json_bytes(&regime)?)?;
    run.write(
        &out.join("bound.json"),
        &buffer_bytes(|b| write_bound_reports(&bounds, b))?,
    )?;
    run.finish(&out.join("manifest.json"))?;
    Ok(())
}
