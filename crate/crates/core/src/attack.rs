//! Black-box membership inference with shadow models.
//!
//! Shadow models are trained on data drawn from the same distribution as
//! the target's training set. Their outputs on their own training rows
//! (members) and on held-out rows (non-members) form a labeled corpus, from
//! which one binary attack classifier per class label is trained. The
//! attack is then pointed at the target's outputs.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{split_indices, Example, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{self, LossKind, Network, NetworkTopology, TrainingConfig};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Number of shadow models `k`.
    pub shadow_count: usize,
    /// Rows in each shadow model's training set (and in its held-out set).
    pub shadow_size: usize,
    pub shadow_hidden: Vec<usize>,
    pub shadow_training: TrainingConfig,
    pub attack_hidden: usize,
    pub attack_training: TrainingConfig,
    pub seed: u64,
}

impl AttackConfig {
    /// Shadows mirror a target trained with `target_training` on `shadow_size` rows.
    pub fn mirroring(target_hidden: Vec<usize>, target_training: &TrainingConfig, shadow_count: usize, shadow_size: usize, seed: u64) -> Self {
        AttackConfig {
            shadow_count,
            shadow_size,
            shadow_hidden: target_hidden,
            shadow_training: target_training.clone(),
            attack_hidden: 64,
            attack_training: TrainingConfig::attack_model(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shadow_count == 0 {
            return Err(Error::Config("need at least one shadow model".into()));
        }
        if self.shadow_size == 0 {
            return Err(Error::Config("shadow_size must be >= 1".into()));
        }
        if self.attack_hidden == 0 {
            return Err(Error::Config("attack_hidden must be >= 1".into()));
        }
        self.shadow_training.validate()?;
        self.attack_training.validate()
    }
}

/// One prediction vector labeled with its class and membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub probabilities: Vec<f64>,
    pub label: usize,
    pub member: bool,
    pub shadow: usize,
    /// Row index in the pool the record came from.
    pub source_row: usize,
}

/// Attack-model input: the prediction vector sorted in decreasing order.
pub fn attack_features(probabilities: &[f64]) -> Vec<f64> {
    let mut v = probabilities.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Trains `k` shadow models on disjoint train/held-out splits of `pool` and
/// records their outputs. Each shadow's split is drawn independently.
pub fn build_shadow_corpus(pool: &LabeledDataset, config: &AttackConfig) -> Result<Vec<AttackRecord>> {
    config.validate()?;
    let required = 2 * config.shadow_size;
    if pool.len() < required {
        return Err(Error::Input(format!(
            "shadow pool has {} rows; {} shadow model(s) of size {} need at least {required}",
            pool.len(),
            config.shadow_count,
            config.shadow_size
        )));
    }
    let topology = NetworkTopology::new(pool.feature_count(), config.shadow_hidden.clone(), pool.classes)?;
    let per_shadow: Vec<Vec<AttackRecord>> = (0..config.shadow_count)
        .into_par_iter()
        .map(|s| -> Result<Vec<AttackRecord>> {
            let mut split_stream = rng::stream(rng::derive_seed(config.seed, s as u64, "shadow-split"));
            let parts = split_indices(pool.len(), &[config.shadow_size, config.shadow_size], &mut split_stream)?;
            let train_set = pool.subset(&parts[0], format!("shadow-{s}-train"));
            let training = TrainingConfig {
                seed: rng::derive_seed(config.seed, s as u64, "shadow-train"),
                ..config.shadow_training.clone()
            };
            let model = nn::train(&train_set, None, &topology, &training)?;
            let mut records = Vec::with_capacity(required);
            for (member, rows) in [(true, &parts[0]), (false, &parts[1])] {
                for &row in rows {
                    records.push(AttackRecord {
                        probabilities: model.network.predict(&pool.features[row])?,
                        label: pool.labels[row],
                        member,
                        shadow: s,
                        source_row: row,
                    });
                }
            }
            Ok(records)
        })
        .collect::<Result<_>>()?;
    Ok(per_shadow.into_iter().flatten().collect())
}

/// One binary member/non-member classifier per class label.
#[derive(Debug, Clone)]
pub struct AttackModel {
    pub classes: usize,
    per_class: Vec<Option<Network>>,
    fallback: Option<Network>,
    pub skipped_classes: Vec<usize>,
}

fn fit_binary(records: &[&AttackRecord], hidden: usize, config: &TrainingConfig, seed: u64, name: String) -> Result<Network> {
    let features: Vec<Vec<f64>> = records.iter().map(|r| attack_features(&r.probabilities)).collect();
    let labels: Vec<usize> = records.iter().map(|r| usize::from(r.member)).collect();
    let m = features[0].len();
    let ds = LabeledDataset::new(name, features, labels, 2)?;
    let topo = NetworkTopology::new(m, vec![hidden], 2)?;
    let cfg = TrainingConfig {
        seed,
        ..config.clone()
    };
    Ok(nn::train(&ds, None, &topo, &cfg)?.network)
}

pub fn train_attack_model(corpus: &[AttackRecord], config: &AttackConfig) -> Result<AttackModel> {
    if corpus.is_empty() {
        return Err(Error::Input("empty attack corpus".into()));
    }
    let classes = corpus[0].probabilities.len();
    if corpus.iter().any(|r| r.probabilities.len() != classes || r.label >= classes) {
        return Err(Error::Input("attack corpus mixes prediction widths or labels".into()));
    }
    let mut by_class: Vec<Vec<&AttackRecord>> = vec![Vec::new(); classes];
    for r in corpus {
        by_class[r.label].push(r);
    }
    let per_class: Vec<Option<Network>> = by_class
        .par_iter()
        .enumerate()
        .map(|(c, rows)| {
            if rows.is_empty() {
                return Ok(None);
            }
            let seed = rng::derive_seed(config.seed, c as u64, "attack-class");
            fit_binary(rows, config.attack_hidden, &config.attack_training, seed, format!("attack-class-{c}")).map(Some)
        })
        .collect::<Result<_>>()?;
    let skipped_classes: Vec<usize> = (0..classes).filter(|&c| per_class[c].is_none()).collect();
    let fallback = if skipped_classes.is_empty() {
        None
    } else {
        log::warn!(
            "attack corpus has no rows for classes {skipped_classes:?}; using a pooled classifier for them"
        );
        let all: Vec<&AttackRecord> = corpus.iter().collect();
        let seed = rng::derive_seed(config.seed, u64::MAX, "attack-pooled");
        Some(fit_binary(&all, config.attack_hidden, &config.attack_training, seed, "attack-pooled".into())?)
    };
    Ok(AttackModel {
        classes,
        per_class,
        fallback,
        skipped_classes,
    })
}

impl AttackModel {
    /// Attack model's probability that the row was a training member.
    pub fn member_score(&self, probabilities: &[f64], label: usize) -> Result<f64> {
        if probabilities.len() != self.classes {
            return Err(Error::Dimension {
                context: "attack input",
                expected: self.classes,
                actual: probabilities.len(),
            });
        }
        let net = self
            .per_class
            .get(label)
            .and_then(Option::as_ref)
            .or(self.fallback.as_ref())
            .ok_or_else(|| Error::Input(format!("no attack classifier for label {label}")))?;
        Ok(net.predict(&attack_features(probabilities))?[1])
    }

    pub fn is_member(&self, probabilities: &[f64], label: usize) -> Result<bool> {
        Ok(self.member_score(probabilities, label)? > 0.5)
    }

    /// Fraction of records whose membership is guessed correctly.
    pub fn accuracy(&self, records: &[AttackRecord]) -> Result<f64> {
        if records.is_empty() {
            return Err(Error::Input("accuracy of an empty corpus".into()));
        }
        let mut hits = 0usize;
        for r in records {
            if self.is_member(&r.probabilities, r.label)? == r.member {
                hits += 1;
            }
        }
        Ok(hits as f64 / records.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub true_positive_rate: f64,
    pub false_positive_rate: f64,
    /// `TPR - FPR`, unclamped.
    pub privacy_leakage: f64,
    pub attack_accuracy: f64,
}

impl AttackResult {
    pub fn from_counts(true_positives: usize, positives: usize, false_positives: usize, negatives: usize) -> Result<Self> {
        if positives == 0 || negatives == 0 {
            return Err(Error::Input("leakage needs members and non-members".into()));
        }
        let tpr = true_positives as f64 / positives as f64;
        let fpr = false_positives as f64 / negatives as f64;
        let correct = true_positives + (negatives - false_positives);
        Ok(AttackResult {
            true_positive_rate: tpr,
            false_positive_rate: fpr,
            privacy_leakage: tpr - fpr,
            attack_accuracy: correct as f64 / (positives + negatives) as f64,
        })
    }

    /// Leakage restricted to the metric's nominal range [0, 1].
    pub fn leakage_clamped(&self) -> f64 {
        self.privacy_leakage.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackDecision {
    pub member: bool,
    pub label: usize,
    pub score: f64,
    pub predicted_member: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeakageEvaluation {
    pub result: AttackResult,
    pub decisions: Vec<AttackDecision>,
}

impl LeakageEvaluation {
    pub fn write_dump(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let res: std::io::Result<()> = (|| {
            writeln!(out, "sample,member,label,score,predicted_member")?;
            for (i, d) in self.decisions.iter().enumerate() {
                writeln!(
                    out,
                    "{i},{},{},{:.6},{}",
                    u8::from(d.member),
                    d.label,
                    d.score,
                    u8::from(d.predicted_member)
                )?;
            }
            out.flush()
        })();
        res.map_err(|e| Error::io(path, e))
    }
}

/// Queries the target once per sample and scores the attack.
///
/// Members are queried first, then non-members. Errors from the target
/// (including a budget refusal) propagate unchanged.
pub fn evaluate_leakage<F>(mut target: F, members: &[Example<'_>], non_members: &[Example<'_>], attack: &AttackModel) -> Result<LeakageEvaluation>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if members.len() != non_members.len() {
        return Err(Error::Input(format!(
            "member and non-member sets must be the same size ({} vs {})",
            members.len(),
            non_members.len()
        )));
    }
    let mut decisions = Vec::with_capacity(2 * members.len());
    for (member, rows) in [(true, members), (false, non_members)] {
        for ex in rows {
            let probabilities = target(ex.features)?;
            let score = attack.member_score(&probabilities, ex.label)?;
            decisions.push(AttackDecision {
                member,
                label: ex.label,
                score,
                predicted_member: score > 0.5,
            });
        }
    }
    let result = score_decisions(&decisions)?;
    Ok(LeakageEvaluation { result, decisions })
}

pub fn score_decisions(decisions: &[AttackDecision]) -> Result<AttackResult> {
    let positives = decisions.iter().filter(|d| d.member).count();
    let negatives = decisions.len() - positives;
    let tp = decisions.iter().filter(|d| d.member && d.predicted_member).count();
    let fp = decisions.iter().filter(|d| !d.member && d.predicted_member).count();
    AttackResult::from_counts(tp, positives, fp, negatives)
}

/// `1 - dp_accuracy / baseline_accuracy`.
pub fn accuracy_loss(dp_test_accuracy: f64, baseline_test_accuracy: f64) -> Result<f64> {
    if baseline_test_accuracy.is_nan() || baseline_test_accuracy <= 0.0 {
        return Err(Error::Input(format!(
            "baseline accuracy must be > 0, got {baseline_test_accuracy}"
        )));
    }
    Ok(1.0 - dp_test_accuracy / baseline_test_accuracy)
}

/// Default shadow-model training uses the same loss as the target.
pub fn default_attack_config(target_hidden: Vec<usize>, seed: u64) -> AttackConfig {
    AttackConfig::mirroring(
        target_hidden,
        &TrainingConfig {
            loss: LossKind::ConvexifiedCrossEntropy,
            ..TrainingConfig::default()
        },
        5,
        100,
        seed,
    )
}
