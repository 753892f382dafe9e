//! The `dpinfer` command line.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numeric failure,
//! 3 privacy budget exhausted.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::attack::{self, AttackConfig};
use crate::data::{self, CsvFormat, LabeledDataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::experiment::{self, ExperimentConfig};
use crate::mechanisms::{Mechanism, PrivacyBudget, SamplingSensitivity};
use crate::nn::{self, Checkpoint, LossKind, NetworkTopology, TrainingConfig};
use crate::predict::DpPredictor;
use crate::rng;
use crate::sensitivity::{self, SensitivityReport};

#[derive(Debug, Parser)]
#[command(name = "dpinfer", version, about = "Differentially private inference for feed-forward classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a classifier and write a checkpoint.
    Train(TrainArgs),
    /// Compute the sensitivity chain for a checkpoint.
    Sensitivity(SensitivityArgs),
    /// Show how a total budget splits across queries and the two DP steps.
    Budget(BudgetArgs),
    /// Answer queries with differentially private prediction vectors.
    PredictDp(PredictArgs),
    /// Run a shadow-model membership-inference attack against a checkpoint.
    Attack(AttackArgs),
    /// Run a full experiment from a TOML config.
    Experiment(ExperimentArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LossArg {
    Plain,
    Convexified,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Plain => LossKind::CrossEntropy,
            LossArg::Convexified => LossKind::ConvexifiedCrossEntropy,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MechanismArg {
    Laplace,
    Gaussian,
}

impl From<MechanismArg> for Mechanism {
    fn from(m: MechanismArg) -> Self {
        match m {
            MechanismArg::Laplace => Mechanism::Laplace,
            MechanismArg::Gaussian => Mechanism::Gaussian,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    /// Min-max scale features to [-1, 1].
    #[arg(long)]
    pub normalize: bool,
    /// Fix the class count instead of inferring it from the labels.
    #[arg(long)]
    pub classes: Option<usize>,
}

impl DataArgs {
    fn format(&self) -> CsvFormat {
        CsvFormat {
            label_column: self.label_column.clone(),
            normalize: self.normalize,
            classes: self.classes,
        }
    }

    fn load(&self) -> Result<LabeledDataset> {
        load_with(&self.data, &self.format())
    }
}

fn load_with(path: &Path, format: &CsvFormat) -> Result<LabeledDataset> {
    let mut ds = data::load_dataset(path, format)?;
    if format.normalize {
        ds.normalize();
    }
    Ok(ds)
}

#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Coefficient of the L2 penalty on the weights.
    #[arg(long, default_value_t = 0.001)]
    pub l2: f64,
    /// Risk factor of the convexified loss.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = LossArg::Convexified)]
    pub loss: LossArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainingArgs {
    fn config(&self) -> TrainingConfig {
        TrainingConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            l2_coefficient: self.l2,
            alpha: self.alpha,
            loss: self.loss.into(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Optional held-out CSV (same columns) for test accuracy.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Hidden layer sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub hidden: Vec<usize>,
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Training-set size; defaults to the size recorded in the checkpoint.
    #[arg(long)]
    pub n: Option<usize>,
    /// L2 coefficient used in training; defaults to the recorded one.
    #[arg(long)]
    pub l2: Option<f64>,
    /// Output prefix: writes `<out>.txt` (key=value) and `<out>.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BudgetArgs {
    /// Total epsilon for all queries.
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1)]
    pub queries: usize,
    #[arg(long)]
    pub classes: usize,
    #[arg(long, value_enum, default_value_t = MechanismArg::Laplace)]
    pub mechanism: MechanismArg,
    /// Training-set size, used to report delta for Gaussian budgets.
    #[arg(long)]
    pub train_size: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sensitivity report JSON written by `dpinfer sensitivity`.
    #[arg(long)]
    pub sensitivity: PathBuf,
    /// CSV of query rows; a label column, if present, is ignored.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub normalize: bool,
    /// Total epsilon for the whole budget.
    #[arg(long)]
    pub epsilon: f64,
    /// Queries the budget covers; defaults to the number of query rows.
    #[arg(long)]
    pub budget_queries: Option<usize>,
    #[arg(long, value_enum, default_value_t = MechanismArg::Laplace)]
    pub mechanism: MechanismArg,
    /// Use exp(delta_p) instead of delta_p as the exponential-mechanism sensitivity.
    #[arg(long)]
    pub exp_sampling_sensitivity: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    /// Target checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Rows the attacker may use to train shadow models.
    #[arg(long)]
    pub shadow_data: PathBuf,
    /// Rows known to be in the target's training set.
    #[arg(long)]
    pub members: PathBuf,
    /// Rows known not to be in it; same count as members.
    #[arg(long)]
    pub non_members: PathBuf,
    #[arg(long, default_value = "label")]
    pub label_column: String,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 5)]
    pub shadows: usize,
    /// Rows per shadow training set; defaults to the member count.
    #[arg(long)]
    pub shadow_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Attack the DP release instead of the clean output (needs --sensitivity and --epsilon).
    #[arg(long)]
    pub sensitivity: Option<PathBuf>,
    /// Per-query epsilon for the DP release.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = MechanismArg::Gaussian)]
    pub mechanism: MechanismArg,
    /// Result JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-sample decisions CSV.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// TOML config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from the built-in 30-class synthetic config.
    #[arg(long, conflicts_with = "config")]
    pub location_like: bool,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub repetitions: Option<usize>,
    #[arg(long)]
    pub master_seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub mechanisms: Option<Vec<MechanismArg>>,
    #[arg(long)]
    pub queries_per_budget: Option<usize>,
    #[arg(long)]
    pub train_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Replace the dataset with a CSV file.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub shadows: Option<usize>,
    #[arg(long)]
    pub attack_hidden: Option<usize>,
    #[arg(long)]
    pub attack_learning_rate: Option<f64>,
    #[arg(long)]
    pub attack_epochs: Option<usize>,
    #[arg(long)]
    pub attack_l2: Option<f64>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    pub print_config: bool,
}

impl ExperimentArgs {
    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.location_like) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, true) => ExperimentConfig::location_like("runs/location-like", 7),
            (None, false) => {
                return Err(Error::Config(
                    "pass --config <file.toml> or --location-like".into(),
                ))
            }
        };
        macro_rules! set {
            ($flag:expr => $($field:tt)+) => {
                if let Some(v) = $flag.clone() {
                    cfg.$($field)+ = v;
                }
            };
        }
        set!(self.name => name);
        set!(self.output_dir => output_dir);
        set!(self.repetitions => repetitions);
        set!(self.master_seed => master_seed);
        set!(self.epsilons => epsilons);
        set!(self.hidden => hidden);
        set!(self.normalize => normalize);
        set!(self.learning_rate => training.learning_rate);
        set!(self.batch_size => training.batch_size);
        set!(self.epochs => training.epochs);
        set!(self.l2 => training.l2_coefficient);
        set!(self.alpha => training.alpha);
        set!(self.shadows => attack.shadow_count);
        set!(self.attack_hidden => attack.hidden);
        set!(self.attack_learning_rate => attack.training.learning_rate);
        set!(self.attack_epochs => attack.training.epochs);
        set!(self.attack_l2 => attack.training.l2_coefficient);
        if let Some(m) = &self.mechanisms {
            cfg.mechanisms = m.iter().map(|&m| m.into()).collect();
        }
        if self.queries_per_budget.is_some() {
            cfg.queries_per_budget = self.queries_per_budget;
        }
        if self.train_size.is_some() {
            cfg.train_size = self.train_size;
        }
        if let Some(path) = &self.data {
            cfg.dataset = experiment::DatasetSource::Csv {
                path: path.clone(),
                format: CsvFormat {
                    label_column: self.label_column.clone().unwrap_or_else(|| "label".into()),
                    ..CsvFormat::default()
                },
            };
        } else if let (Some(col), experiment::DatasetSource::Csv { format, .. }) =
            (&self.label_column, &mut cfg.dataset)
        {
            format.label_column = col.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    LocationLike,
    AdultLike,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long)]
    pub features: Option<usize>,
    #[arg(long)]
    pub separation: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    fn spec(&self) -> Result<SyntheticSpec> {
        let mut spec = match self.preset {
            Some(Preset::LocationLike) => SyntheticSpec::location_like(self.seed),
            Some(Preset::AdultLike) => SyntheticSpec::adult_like(self.seed),
            None => {
                let (Some(classes), Some(rows), Some(features)) =
                    (self.classes, self.rows, self.features)
                else {
                    return Err(Error::Config(
                        "pass --preset or all of --classes, --rows, --features".into(),
                    ));
                };
                SyntheticSpec {
                    classes,
                    rows,
                    features,
                    separation: self.separation.unwrap_or(1.0),
                    seed: self.seed,
                }
            }
        };
        if let Some(v) = self.classes {
            spec.classes = v;
        }
        if let Some(v) = self.rows {
            spec.rows = v;
        }
        if let Some(v) = self.features {
            spec.features = v;
        }
        if let Some(v) = self.separation {
            spec.separation = v;
        }
        Ok(spec)
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let train_set = args.data.load()?;
    let test_set = match &args.test {
        Some(p) => Some(load_with(
            p,
            &CsvFormat {
                classes: Some(train_set.classes),
                ..args.data.format()
            },
        )?),
        None => None,
    };
    let topology = NetworkTopology::new(train_set.feature_count(), args.hidden.clone(), train_set.classes)?;
    let model = nn::train(&train_set, test_set.as_ref(), &topology, &args.training.config())?;
    Checkpoint::from_trained(&model).save(&args.out)?;
    let r = &model.report;
    println!("train_size={}", r.train_size);
    println!("final_loss={:.6}", r.final_loss);
    println!("train_accuracy={:.6}", r.train_accuracy);
    if let Some(t) = r.test_accuracy {
        println!("test_accuracy={t:.6}");
    }
    println!("checkpoint={}", args.out.display());
    Ok(())
}

fn sensitivity_for(checkpoint: &Checkpoint, n: Option<usize>, l2: Option<f64>) -> Result<SensitivityReport> {
    let recorded = checkpoint.training.as_ref();
    let n = n
        .or(recorded.map(|t| t.report.train_size))
        .ok_or_else(|| Error::Config("checkpoint has no training record; pass --n".into()))?;
    let l2 = l2
        .or(recorded.map(|t| t.config.l2_coefficient))
        .ok_or_else(|| Error::Config("checkpoint has no training record; pass --l2".into()))?;
    sensitivity::report(checkpoint, n, l2)
}

fn cmd_sensitivity(args: &SensitivityArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.model)?;
    let report = sensitivity_for(&checkpoint, args.n, args.l2)?;
    let text = report.to_key_value();
    if let Some(prefix) = &args.out {
        let txt = prefix.with_extension("txt");
        std::fs::write(&txt, &text).map_err(|e| Error::io(&txt, e))?;
        report.save_json(&prefix.with_extension("json"))?;
    }
    print!("{text}");
    if report.is_degenerate() {
        log::warn!("sensitivity is degenerate; DP prediction will refuse this model");
    }
    Ok(())
}

fn cmd_budget(args: &BudgetArgs) -> Result<()> {
    let mut budget = PrivacyBudget::new(args.epsilon, args.queries, args.classes, args.mechanism.into())?;
    if let Some(n) = args.train_size {
        budget = budget.with_training_size(n);
    }
    println!("mechanism={}", budget.mechanism);
    println!("epsilon_total={:?}", budget.epsilon_total);
    println!("queries={}", budget.queries_allowed);
    println!("classes={}", budget.classes);
    println!("epsilon_per_query={:?}", budget.epsilon_per_query);
    println!("epsilon_sampling={:?}", budget.epsilon_sampling);
    println!("epsilon_neuron={:?}", budget.epsilon_neuron);
    if let Some(d) = budget.delta {
        println!("delta={d:?}");
    }
    if budget.mechanism == Mechanism::Gaussian {
        println!("gdp_delta_of_total={:?}", budget.gdp_delta_of_total());
    }
    Ok(())
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.model)?;
    let network = checkpoint.network()?;
    let report = SensitivityReport::load_json(&args.sensitivity)?;
    let mut queries = data::load_queries(&args.queries, args.label_column.as_deref())?;
    if args.normalize {
        let mut ds = LabeledDataset {
            name: "queries".into(),
            labels: vec![0; queries.len()],
            features: queries,
            classes: 2,
        };
        ds.normalize();
        queries = ds.features;
    }
    let budget = PrivacyBudget::new(
        args.epsilon,
        args.budget_queries.unwrap_or(queries.len()).max(1),
        network.topology.classes,
        args.mechanism.into(),
    )?
    .with_training_size(report.inputs.n);
    let mut predictor = DpPredictor::new(&network, &report, &budget)?;
    if args.exp_sampling_sensitivity {
        predictor = predictor.with_sampling_sensitivity(SamplingSensitivity::ExpDeltaP);
    }
    let mut stream = rng::stream(args.seed);
    let batch = predictor.predict_batch(&queries, &mut stream)?;

    let classes = network.topology.classes;
    let mut text = String::from("query_id");
    for c in 0..classes {
        text.push_str(&format!(",p_{c}"));
    }
    text.push_str(",sampled_neuron,epsilon\n");
    for (i, r) in batch.results.iter().enumerate() {
        text.push_str(&i.to_string());
        for p in &r.probabilities {
            text.push_str(&format!(",{p:.6}"));
        }
        text.push_str(&format!(",{},{:.6}\n", r.sampled_neuron, r.epsilon_consumed));
    }
    write_output(args.out.as_deref(), &text)?;
    match batch.refusal {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn cmd_attack(args: &AttackArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&args.model)?;
    let network = checkpoint.network()?;
    let classes = network.topology.classes;
    let format = CsvFormat {
        label_column: args.label_column.clone(),
        normalize: args.normalize,
        classes: Some(classes),
    };
    let pool = load_with(&args.shadow_data, &format)?;
    let members = load_with(&args.members, &format)?;
    let non_members = load_with(&args.non_members, &format)?;
    let training = checkpoint
        .training
        .as_ref()
        .map(|t| t.config.clone())
        .unwrap_or_default();
    let config = AttackConfig::mirroring(
        checkpoint.topology.hidden.clone(),
        &training,
        args.shadows,
        args.shadow_size.unwrap_or(members.len()),
        args.seed,
    );
    let corpus = attack::build_shadow_corpus(&pool, &config)?;
    let model = attack::train_attack_model(&corpus, &config)?;

    let eval = match (&args.sensitivity, args.epsilon) {
        (Some(path), Some(eps)) => {
            let report = SensitivityReport::load_json(path)?;
            let budget = PrivacyBudget::from_per_query(
                eps,
                members.len() + non_members.len(),
                classes,
                args.mechanism.into(),
            )?;
            let predictor = DpPredictor::new(&network, &report, &budget)?;
            let mut stream = rng::stream(rng::derive_seed(args.seed, 0, "attack-dp"));
            attack::evaluate_leakage(
                |x| predictor.predict(x, &mut stream).map(|p| p.probabilities),
                &members.examples(),
                &non_members.examples(),
                &model,
            )?
        }
        (None, None) => attack::evaluate_leakage(
            |x| network.predict(x),
            &members.examples(),
            &non_members.examples(),
            &model,
        )?,
        _ => {
            return Err(Error::Config(
                "--sensitivity and --epsilon must be given together".into(),
            ))
        }
    };
    let text = serde_json::to_string_pretty(&eval.result)?;
    std::fs::write(&args.out, &text).map_err(|e| Error::io(&args.out, e))?;
    if let Some(dump) = &args.dump {
        eval.write_dump(dump)?;
    }
    println!("true_positive_rate={:.6}", eval.result.true_positive_rate);
    println!("false_positive_rate={:.6}", eval.result.false_positive_rate);
    println!("privacy_leakage={:.6}", eval.result.privacy_leakage);
    println!("attack_accuracy={:.6}", eval.result.attack_accuracy);
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<()> {
    let cfg = args.resolve()?;
    if args.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let outcome = experiment::run_experiment(&cfg)?;
    print!("{}", outcome.report.to_csv());
    let failed: Vec<_> = outcome
        .summaries
        .iter()
        .filter(|s| !s.is_complete())
        .collect();
    for s in &failed {
        for e in &s.errors {
            log::error!("repetition {}: {}: {}", s.repetition, e.stage, e.message);
        }
    }
    if failed.len() == outcome.summaries.len() {
        return Err(Error::Input("every repetition failed; see run.json".into()));
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let ds = data::make_synthetic(&args.spec()?)?;
    ds.write_csv(&args.out)?;
    println!("rows={} features={} classes={}", ds.len(), ds.feature_count(), ds.classes);
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Sensitivity(a) => cmd_sensitivity(a),
        Command::Budget(a) => cmd_budget(a),
        Command::PredictDp(a) => cmd_predict(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
