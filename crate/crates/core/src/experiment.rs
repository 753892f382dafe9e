//! End-to-end runs: train the target (plain and convexified), compute its
//! sensitivity, fit a shadow-model attack, then sweep mechanisms and
//! per-query budgets and measure accuracy loss and leakage. Repeated over
//! derived seeds; every repetition writes its artifacts to its own
//! subdirectory and can be resumed.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! report.csv                     one row per (mechanism, epsilon) plus baseline rows
//! run.json                       config, fingerprint, per-repetition status
//! rep-000/split.json             target train / test / shadow-pool row indices
//! rep-000/target-<loss>.json     checkpoints
//! rep-000/sensitivity-<loss>.json
//! rep-000/attack-baseline-<loss>.csv
//! rep-000/attack-dp-<mechanism>-eps<epsilon>.csv
//! rep-000/summary.json           full-precision metrics for the repetition
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{self, AttackConfig, AttackModel, AttackResult};
use crate::data::{self, CsvFormat, Example, LabeledDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::mechanisms::{Mechanism, PrivacyBudget};
use crate::nn::{self, Checkpoint, LossKind, NetworkTopology, TrainedModel, TrainingConfig};
use crate::predict::DpPredictor;
use crate::rng;
use crate::sensitivity::{self, SensitivityReport};

pub const REPORT_FILE: &str = "report.csv";
pub const METADATA_FILE: &str = "run.json";
pub const SUMMARY_FILE: &str = "summary.json";

pub const REPORT_COLUMNS: [&str; 14] = [
    "kind",
    "loss",
    "mechanism",
    "epsilon",
    "repetitions",
    "train_accuracy",
    "test_accuracy",
    "accuracy_gap",
    "oaro_bound",
    "accuracy_loss_mean",
    "accuracy_loss_std",
    "leakage_mean",
    "leakage_std",
    "leakage_bound",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        #[serde(default)]
        format: CsvFormat,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<LabeledDataset> {
        match self {
            DatasetSource::Synthetic(spec) => data::make_synthetic(spec),
            DatasetSource::Csv { path, format } => data::load_dataset(path, format),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSettings {
    pub shadow_count: usize,
    pub hidden: usize,
    pub training: TrainingConfig,
}

impl Default for AttackSettings {
    fn default() -> Self {
        AttackSettings {
            shadow_count: 5,
            hidden: 64,
            training: TrainingConfig::attack_model(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSource,
    /// Min-max scale features to [-1, 1] before splitting.
    #[serde(default = "default_true")]
    pub normalize: bool,
    pub hidden: Vec<usize>,
    /// Target training. `loss` and `seed` are set per model and repetition.
    pub training: TrainingConfig,
    /// Per-query budgets.
    pub epsilons: Vec<f64>,
    pub mechanisms: Vec<Mechanism>,
    /// Ledger size per budget; defaults to the number of attack queries.
    #[serde(default)]
    pub queries_per_budget: Option<usize>,
    /// Rows in the target's training set (and in its test set); defaults to a quarter of the data.
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub attack: AttackSettings,
    pub repetitions: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// The overfit-prone 30-class synthetic setting.
    pub fn location_like(output_dir: impl Into<PathBuf>, master_seed: u64) -> Self {
        ExperimentConfig {
            name: "location-like".into(),
            dataset: DatasetSource::Synthetic(SyntheticSpec::location_like(master_seed)),
            normalize: true,
            hidden: vec![128],
            training: TrainingConfig {
                epochs: 300,
                batch_size: 50,
                ..TrainingConfig::default()
            },
            epsilons: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            mechanisms: vec![Mechanism::Gaussian, Mechanism::Laplace],
            queries_per_budget: None,
            train_size: None,
            attack: AttackSettings::default(),
            repetitions: 3,
            output_dir: output_dir.into(),
            master_seed,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be >= 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilon grid is empty".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::Config(format!("epsilon values must be > 0, got {e}")));
        }
        if self.mechanisms.is_empty() {
            return Err(Error::Config("no mechanism selected".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer sizes must be >= 1".into()));
        }
        if self.attack.shadow_count == 0 {
            return Err(Error::Config("need at least one shadow model".into()));
        }
        if self.queries_per_budget == Some(0) {
            return Err(Error::Config("queries_per_budget must be >= 1".into()));
        }
        if self.train_size == Some(0) {
            return Err(Error::Config("train_size must be >= 1".into()));
        }
        self.training.validate()?;
        self.attack.training.validate()
    }

    /// Hash of every setting that affects results. The output directory and
    /// the repetition count are excluded so a run can be moved or extended.
    pub fn fingerprint(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.repetitions = 0;
        let json = serde_json::to_string(&canonical)?;
        let digest = Sha256::digest(json.as_bytes());
        Ok(digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        }))
    }

    fn train_size_for(&self, rows: usize) -> usize {
        self.train_size.unwrap_or(rows / 4)
    }
}

/// `min(e^epsilon - 1, baseline_leakage)`.
pub fn theoretical_leakage_bound(epsilon: f64, baseline_leakage: f64) -> f64 {
    epsilon.exp_m1().min(baseline_leakage)
}

fn loss_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::CrossEntropy => "plain",
        LossKind::ConvexifiedCrossEntropy => "convexified",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub shadow_pool: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineCell {
    pub loss: LossKind,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub accuracy_gap: f64,
    pub oaro_bound: f64,
    pub attack: AttackResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpCell {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub dp_test_accuracy: f64,
    pub accuracy_loss: f64,
    pub attack: AttackResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionSummary {
    pub repetition: usize,
    pub fingerprint: String,
    pub train_size: usize,
    pub baselines: Vec<BaselineCell>,
    pub dp: Vec<DpCell>,
    pub errors: Vec<StageError>,
}

impl RepetitionSummary {
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn baseline(&self, loss: LossKind) -> Option<&BaselineCell> {
        self.baselines.iter().find(|b| b.loss == loss)
    }

    pub fn dp_cell(&self, mechanism: Mechanism, epsilon: f64) -> Option<&DpCell> {
        self.dp
            .iter()
            .find(|c| c.mechanism == mechanism && c.epsilon == epsilon)
    }
}

pub fn repetition_dir(output_dir: &Path, repetition: usize) -> PathBuf {
    output_dir.join(format!("rep-{repetition:03}"))
}

pub fn dp_dump_name(mechanism: Mechanism, epsilon: f64) -> String {
    format!("attack-dp-{mechanism}-eps{epsilon}.csv")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Shared per-repetition inputs.
struct Context<'a> {
    config: &'a ExperimentConfig,
    dataset: &'a LabeledDataset,
    fingerprint: &'a str,
    train_size: usize,
}

struct Target {
    model: TrainedModel,
    report: SensitivityReport,
}

fn train_target(
    ctx: &Context<'_>,
    dir: &Path,
    repetition: usize,
    loss: LossKind,
    train_set: &LabeledDataset,
    test_set: &LabeledDataset,
) -> Result<Target> {
    let name = loss_name(loss);
    let topology = NetworkTopology::new(
        ctx.dataset.feature_count(),
        ctx.config.hidden.clone(),
        ctx.dataset.classes,
    )?;
    let training = TrainingConfig {
        loss,
        seed: rng::derive_seed(ctx.config.master_seed, repetition as u64, &format!("train-{name}")),
        ..ctx.config.training.clone()
    };
    let model = nn::train(train_set, Some(test_set), &topology, &training)?;
    let checkpoint = Checkpoint::from_trained(&model);
    checkpoint.save(&dir.join(format!("target-{name}.json")))?;
    let report = sensitivity::report(&checkpoint, train_set.len(), training.l2_coefficient)?;
    report.save_json(&dir.join(format!("sensitivity-{name}.json")))?;
    Ok(Target { model, report })
}

fn run_repetition(ctx: &Context<'_>, repetition: usize) -> Result<RepetitionSummary> {
    let config = ctx.config;
    let dir = repetition_dir(&config.output_dir, repetition);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let summary_path = dir.join(SUMMARY_FILE);
    if summary_path.exists() {
        if let Ok(done) = read_json::<RepetitionSummary>(&summary_path) {
            if done.fingerprint == ctx.fingerprint && done.is_complete() {
                log::info!("repetition {repetition}: reusing {}", summary_path.display());
                return Ok(done);
            }
        }
    }

    let mut summary = RepetitionSummary {
        repetition,
        fingerprint: ctx.fingerprint.to_string(),
        train_size: ctx.train_size,
        baselines: Vec::new(),
        dp: Vec::new(),
        errors: Vec::new(),
    };
    let seed = |stage: &str| rng::derive_seed(config.master_seed, repetition as u64, stage);

    let n = ctx.train_size;
    let mut split_stream = rng::stream(seed("split"));
    let parts = data::split_indices(ctx.dataset.len(), &[n, n], &mut split_stream)?;
    let used: std::collections::HashSet<usize> = parts.iter().flatten().copied().collect();
    let split = SplitRecord {
        train: parts[0].clone(),
        test: parts[1].clone(),
        shadow_pool: (0..ctx.dataset.len()).filter(|i| !used.contains(i)).collect(),
    };
    write_json(&dir.join("split.json"), &split)?;
    let train_set = ctx.dataset.subset(&split.train, "target-train");
    let test_set = ctx.dataset.subset(&split.test, "target-test");
    let pool = ctx.dataset.subset(&split.shadow_pool, "shadow-pool");

    let mut targets = Vec::new();
    for loss in [LossKind::CrossEntropy, LossKind::ConvexifiedCrossEntropy] {
        match train_target(ctx, &dir, repetition, loss, &train_set, &test_set) {
            Ok(t) => targets.push((loss, t)),
            Err(e) => summary.errors.push(StageError {
                stage: format!("train-{}", loss_name(loss)),
                message: e.to_string(),
            }),
        }
    }

    let attack_config = AttackConfig {
        shadow_count: config.attack.shadow_count,
        shadow_size: n,
        shadow_hidden: config.hidden.clone(),
        shadow_training: TrainingConfig {
            loss: LossKind::ConvexifiedCrossEntropy,
            ..config.training.clone()
        },
        attack_hidden: config.attack.hidden,
        attack_training: config.attack.training.clone(),
        seed: seed("attack"),
    };
    let attack_model = match attack::build_shadow_corpus(&pool, &attack_config)
        .and_then(|corpus| attack::train_attack_model(&corpus, &attack_config))
    {
        Ok(m) => Some(m),
        Err(e) => {
            summary.errors.push(StageError {
                stage: "attack".into(),
                message: e.to_string(),
            });
            None
        }
    };

    let members = train_set.examples();
    let non_members = test_set.examples();
    if let Some(attack_model) = &attack_model {
        for (loss, target) in &targets {
            let eval = attack::evaluate_leakage(
                |x| target.model.network.predict(x),
                &members,
                &non_members,
                attack_model,
            )
            .and_then(|eval| {
                eval.write_dump(&dir.join(format!("attack-baseline-{}.csv", loss_name(*loss))))?;
                Ok(eval)
            });
            match eval {
                Ok(eval) => {
                    let r = &target.model.report;
                    let test_accuracy = r.test_accuracy.unwrap_or(f64::NAN);
                    summary.baselines.push(BaselineCell {
                        loss: *loss,
                        train_accuracy: r.train_accuracy,
                        test_accuracy,
                        accuracy_gap: r.train_accuracy - test_accuracy,
                        oaro_bound: target.report.oaro_bound,
                        attack: eval.result,
                    });
                }
                Err(e) => summary.errors.push(StageError {
                    stage: format!("baseline-attack-{}", loss_name(*loss)),
                    message: e.to_string(),
                }),
            }
        }
    }

    let convexified = targets
        .iter()
        .find(|(l, _)| *l == LossKind::ConvexifiedCrossEntropy)
        .map(|(_, t)| t);
    if let (Some(target), Some(attack_model)) = (convexified, &attack_model) {
        for &mechanism in &config.mechanisms {
            for &epsilon in &config.epsilons {
                let stage = format!("dp-{mechanism}-eps{epsilon}");
                match dp_cell(ctx, &dir, repetition, target, attack_model, &members, &non_members, mechanism, epsilon) {
                    Ok(cell) => summary.dp.push(cell),
                    Err(e) => summary.errors.push(StageError {
                        stage,
                        message: e.to_string(),
                    }),
                }
            }
        }
    }

    for err in &summary.errors {
        log::warn!("repetition {repetition}: {} failed: {}", err.stage, err.message);
    }
    write_json(&summary_path, &summary)?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn dp_cell(
    ctx: &Context<'_>,
    dir: &Path,
    repetition: usize,
    target: &Target,
    attack_model: &AttackModel,
    members: &[Example<'_>],
    non_members: &[Example<'_>],
    mechanism: Mechanism,
    epsilon: f64,
) -> Result<DpCell> {
    let classes = ctx.dataset.classes;
    let queries = ctx
        .config
        .queries_per_budget
        .unwrap_or(members.len() + non_members.len());
    let budget = PrivacyBudget::from_per_query(epsilon, queries, classes, mechanism)?
        .with_training_size(ctx.train_size);
    debug_assert_eq!(budget.epsilon_per_query, epsilon);
    let predictor = DpPredictor::new(&target.model.network, &target.report, &budget)?;
    // the same stream for every epsilon: common random numbers across the grid
    let mut stream = rng::stream(rng::derive_seed(
        ctx.config.master_seed,
        repetition as u64,
        &format!("dp-{mechanism}"),
    ));
    let mut released = Vec::with_capacity(members.len() + non_members.len());
    let eval = attack::evaluate_leakage(
        |x| {
            let p = predictor.predict(x, &mut stream)?;
            released.push(p.predicted_class());
            Ok(p.probabilities)
        },
        members,
        non_members,
        attack_model,
    )?;
    eval.write_dump(&dir.join(dp_dump_name(mechanism, epsilon)))?;
    let test_predictions = &released[members.len()..];
    let hits = test_predictions
        .iter()
        .zip(non_members)
        .filter(|(p, ex)| **p == ex.label)
        .count();
    let dp_test_accuracy = hits as f64 / non_members.len() as f64;
    let baseline = target.model.report.test_accuracy.unwrap_or(f64::NAN);
    Ok(DpCell {
        mechanism,
        epsilon,
        dp_test_accuracy,
        accuracy_loss: attack::accuracy_loss(dp_test_accuracy, baseline)?,
        attack: eval.result,
    })
}

/// Mean and population standard deviation.
fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub loss: LossKind,
    pub repetitions: usize,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub accuracy_gap: Option<f64>,
    pub oaro_bound: Option<f64>,
    pub leakage_mean: Option<f64>,
    pub leakage_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpRow {
    pub mechanism: Mechanism,
    pub epsilon: f64,
    pub repetitions: usize,
    pub accuracy_loss_mean: Option<f64>,
    pub accuracy_loss_std: Option<f64>,
    /// Unclamped `TPR - FPR`.
    pub leakage_mean: Option<f64>,
    pub leakage_std: Option<f64>,
    pub leakage_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub baselines: Vec<BaselineRow>,
    pub dp: Vec<DpRow>,
}

impl ExperimentReport {
    /// Aggregates repetition summaries. Cells no repetition completed are left empty.
    pub fn assemble(config: &ExperimentConfig, summaries: &[RepetitionSummary]) -> Self {
        let baselines: Vec<BaselineRow> = [LossKind::CrossEntropy, LossKind::ConvexifiedCrossEntropy]
            .into_iter()
            .map(|loss| {
                let cells: Vec<&BaselineCell> =
                    summaries.iter().filter_map(|s| s.baseline(loss)).collect();
                let col = |f: fn(&BaselineCell) -> f64| {
                    mean_std(&cells.iter().map(|c| f(c)).collect::<Vec<_>>())
                };
                let leak = col(|c| c.attack.privacy_leakage);
                BaselineRow {
                    loss,
                    repetitions: cells.len(),
                    train_accuracy: col(|c| c.train_accuracy).map(|m| m.0),
                    test_accuracy: col(|c| c.test_accuracy).map(|m| m.0),
                    accuracy_gap: col(|c| c.accuracy_gap).map(|m| m.0),
                    oaro_bound: col(|c| c.oaro_bound).map(|m| m.0),
                    leakage_mean: leak.map(|m| m.0),
                    leakage_std: leak.map(|m| m.1),
                }
            })
            .collect();
        let baseline_leakage = baselines
            .iter()
            .find(|b| b.loss == LossKind::ConvexifiedCrossEntropy)
            .and_then(|b| b.leakage_mean)
            .map(|l| l.clamp(0.0, 1.0));

        let mut dp = Vec::new();
        for &mechanism in &config.mechanisms {
            for &epsilon in &config.epsilons {
                let cells: Vec<&DpCell> = summaries
                    .iter()
                    .filter_map(|s| s.dp_cell(mechanism, epsilon))
                    .collect();
                let loss = mean_std(&cells.iter().map(|c| c.accuracy_loss).collect::<Vec<_>>());
                let leak = mean_std(
                    &cells
                        .iter()
                        .map(|c| c.attack.privacy_leakage)
                        .collect::<Vec<_>>(),
                );
                dp.push(DpRow {
                    mechanism,
                    epsilon,
                    repetitions: cells.len(),
                    accuracy_loss_mean: loss.map(|m| m.0),
                    accuracy_loss_std: loss.map(|m| m.1),
                    leakage_mean: leak.map(|m| m.0),
                    leakage_std: leak.map(|m| m.1),
                    leakage_bound: baseline_leakage.map(|b| theoretical_leakage_bound(epsilon, b)),
                });
            }
        }
        ExperimentReport {
            name: config.name.clone(),
            baselines,
            dp,
        }
    }

    pub fn row_count(&self) -> usize {
        self.baselines.len() + self.dp.len()
    }

    pub fn dp_row(&self, mechanism: Mechanism, epsilon: f64) -> Option<&DpRow> {
        self.dp
            .iter()
            .find(|r| r.mechanism == mechanism && r.epsilon == epsilon)
    }

    pub fn baseline_row(&self, loss: LossKind) -> Option<&BaselineRow> {
        self.baselines.iter().find(|r| r.loss == loss)
    }

    /// Reals at 6 decimals; `NA` marks cells no repetition completed; empty
    /// cells do not apply to the row kind.
    pub fn to_csv(&self) -> String {
        fn num(v: Option<f64>) -> String {
            match v {
                Some(v) if v.is_finite() => format!("{v:.6}"),
                _ => "NA".into(),
            }
        }
        let mut out = REPORT_COLUMNS.join(",");
        out.push('\n');
        for b in &self.baselines {
            let fields = [
                "baseline".to_string(),
                loss_name(b.loss).into(),
                String::new(),
                String::new(),
                b.repetitions.to_string(),
                num(b.train_accuracy),
                num(b.test_accuracy),
                num(b.accuracy_gap),
                num(b.oaro_bound),
                String::new(),
                String::new(),
                num(b.leakage_mean),
                num(b.leakage_std),
                String::new(),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        for r in &self.dp {
            let fields = [
                "dp".to_string(),
                loss_name(LossKind::ConvexifiedCrossEntropy).into(),
                r.mechanism.to_string(),
                format!("{:.6}", r.epsilon),
                r.repetitions.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                num(r.accuracy_loss_mean),
                num(r.accuracy_loss_std),
                num(r.leakage_mean),
                num(r.leakage_std),
                num(r.leakage_bound),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionStatus {
    pub repetition: usize,
    pub complete: bool,
    pub errors: Vec<StageError>,
}

/// Written next to the report. Contains no timestamps so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub fingerprint: String,
    pub dataset_rows: usize,
    pub dataset_features: usize,
    pub dataset_classes: usize,
    pub train_size: usize,
    pub config: ExperimentConfig,
    pub repetitions: Vec<RepetitionStatus>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub summaries: Vec<RepetitionSummary>,
    pub metadata: RunMetadata,
}

/// Runs every repetition (concurrently), then assembles and writes the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    config.validate()?;
    let mut dataset = config.dataset.load()?;
    if config.normalize {
        dataset.normalize();
    }
    let train_size = config.train_size_for(dataset.len());
    if train_size == 0 || 2 * train_size > dataset.len() {
        return Err(Error::Config(format!(
            "train_size {train_size} does not fit twice into {} rows",
            dataset.len()
        )));
    }
    std::fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let fingerprint = config.fingerprint()?;
    let ctx = Context {
        config,
        dataset: &dataset,
        fingerprint: &fingerprint,
        train_size,
    };

    let summaries: Vec<RepetitionSummary> = (0..config.repetitions)
        .into_par_iter()
        .map(|i| {
            run_repetition(&ctx, i).unwrap_or_else(|e| RepetitionSummary {
                repetition: i,
                fingerprint: fingerprint.clone(),
                train_size,
                baselines: Vec::new(),
                dp: Vec::new(),
                errors: vec![StageError {
                    stage: "repetition".into(),
                    message: e.to_string(),
                }],
            })
        })
        .collect();

    let report = ExperimentReport::assemble(config, &summaries);
    let report_path = config.output_dir.join(REPORT_FILE);
    std::fs::write(&report_path, report.to_csv()).map_err(|e| Error::io(&report_path, e))?;
    let metadata = RunMetadata {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        fingerprint,
        dataset_rows: dataset.len(),
        dataset_features: dataset.feature_count(),
        dataset_classes: dataset.classes,
        train_size,
        config: config.clone(),
        repetitions: summaries
            .iter()
            .map(|s| RepetitionStatus {
                repetition: s.repetition,
                complete: s.is_complete(),
                errors: s.errors.clone(),
            })
            .collect(),
    };
    write_json(&config.output_dir.join(METADATA_FILE), &metadata)?;
    Ok(ExperimentOutcome {
        report,
        summaries,
        metadata,
    })
}

pub fn load_summary(output_dir: &Path, repetition: usize) -> Result<RepetitionSummary> {
    read_json(&repetition_dir(output_dir, repetition).join(SUMMARY_FILE))
}

pub fn load_split(output_dir: &Path, repetition: usize) -> Result<SplitRecord> {
    read_json(&repetition_dir(output_dir, repetition).join("split.json"))
}

/// Reads an attack dump back into decisions (scores at dump precision).
pub fn read_attack_dump(path: &Path) -> Result<Vec<attack::AttackDecision>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = |j: usize| -> Result<&str> {
            rec.get(j).ok_or_else(|| Error::Data {
                path: path.display().to_string(),
                line: i + 2,
                message: format!("missing column {j}"),
            })
        };
        let parse_err = |what: &str| Error::Data {
            path: path.display().to_string(),
            line: i + 2,
            message: format!("bad {what}"),
        };
        out.push(attack::AttackDecision {
            member: field(1)? == "1",
            label: field(2)?.parse().map_err(|_| parse_err("label"))?,
            score: field(3)?.parse().map_err(|_| parse_err("score"))?,
            predicted_member: field(4)? == "1",
        });
    }
    Ok(out)
}
