//! Self-training loop: classify the unlabelled pool, admit confident
//! predictions as pseudo-labels, rebalance, retrain, repeat.
//!
//! Steps are numbered from 1. Each step trains on the current labelled pool
//! (oversampled to balance), scores the remaining unlabelled samples and
//! moves the ones passing that step's [`SelectionPolicy`] into the labelled
//! pool. The loop ends when nothing is admitted, the pool runs dry, or the
//! step budget is spent. Samples never admitted get the final model's argmax
//! label, marked [`Strength::Weak`].

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{oversample_balance, ClassLabel, Dataset, LabelSet};
use crate::error::{Error, Result};
use crate::mlp::{MlpConfig, MlpModel, Posterior};
use crate::rng::{derive_seed, stream};

/// One probability range of a [`BucketScheme`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl Bucket {
    fn new(name: &str, lower: f64, upper: f64, lower_closed: bool, upper_closed: bool) -> Self {
        Bucket {
            name: name.to_string(),
            lower,
            upper,
            lower_closed,
            upper_closed,
        }
    }

    pub fn contains(&self, p: f64) -> bool {
        let above = if self.lower_closed {
            p >= self.lower
        } else {
            p > self.lower
        };
        let below = if self.upper_closed {
            p <= self.upper
        } else {
            p < self.upper
        };
        above && below
    }

    /// Interval notation, e.g. `(0.95,1.0]`.
    pub fn range_label(&self) -> String {
        format!(
            "{}{:?},{:?}{}",
            if self.lower_closed { '[' } else { '(' },
            self.lower,
            self.upper,
            if self.upper_closed { ']' } else { ')' }
        )
    }
}

/// Ordered confidence ranges that partition [0, 1]; listed best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Bucket>", into = "Vec<Bucket>")]
pub struct BucketScheme {
    buckets: Vec<Bucket>,
}

impl BucketScheme {
    pub fn new(buckets: Vec<Bucket>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if buckets.is_empty() {
            return bad("bucket scheme is empty".into());
        }
        let mut sorted: Vec<&Bucket> = buckets.iter().collect();
        sorted.sort_by(|a, b| a.lower.total_cmp(&b.lower));
        let first = sorted[0];
        let last = sorted[sorted.len() - 1];
        if first.lower != 0.0 || !first.lower_closed {
            return bad("lowest bucket must start at a closed 0".into());
        }
        if last.upper != 1.0 || !last.upper_closed {
            return bad("highest bucket must end at a closed 1".into());
        }
        for b in &sorted {
            if !(b.lower < b.upper) {
                return bad(format!("bucket {} has an empty range", b.name));
            }
        }
        for w in sorted.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            if lo.upper != hi.lower {
                return bad(format!(
                    "gap or overlap between {} and {}",
                    lo.name, hi.name
                ));
            }
            if lo.upper_closed == hi.lower_closed {
                return bad(format!(
                    "boundary {} between {} and {} must belong to exactly one bucket",
                    lo.upper, lo.name, hi.name
                ));
            }
        }
        Ok(BucketScheme { buckets })
    }

    /// Eight upper-closed ranges from VVV-good `(0.95,1.0]` down to V-poor `[0.0,0.40]`.
    pub fn standard() -> Self {
        let b = |n, lo, hi| Bucket::new(n, lo, hi, false, true);
        BucketScheme {
            buckets: vec![
                b("VVV-good", 0.95, 1.0),
                b("VV-good", 0.90, 0.95),
                b("V-good", 0.80, 0.90),
                b("Good", 0.70, 0.80),
                b("NT-good", 0.60, 0.70),
                b("NT-poor", 0.50, 0.60),
                b("Poor", 0.40, 0.50),
                Bucket::new("V-poor", 0.0, 0.40, true, true),
            ],
        }
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    /// Bucket index holding `p`. Values are clamped into [0, 1] first.
    pub fn locate(&self, p: f64) -> usize {
        let p = p.clamp(0.0, 1.0);
        self.buckets
            .iter()
            .position(|b| b.contains(p))
            .expect("validated scheme covers [0, 1]")
    }
}

impl Default for BucketScheme {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<Bucket>> for BucketScheme {
    type Error = Error;

    fn try_from(v: Vec<Bucket>) -> Result<Self> {
        BucketScheme::new(v)
    }
}

impl From<BucketScheme> for Vec<Bucket> {
    fn from(s: BucketScheme) -> Self {
        s.buckets
    }
}

/// Bucket-by-class counts; `counts[b][c]` is the number of samples whose max
/// probability falls in bucket `b` and whose argmax class is `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub buckets: Vec<String>,
    pub ranges: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl BucketTable {
    pub fn row_totals(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn class_totals(&self) -> Vec<usize> {
        let c = self.counts.first().map_or(0, Vec::len);
        (0..c)
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

pub fn bucketize(posteriors: &[Posterior], classes: usize, scheme: &BucketScheme) -> BucketTable {
    let mut counts = vec![vec![0usize; classes]; scheme.len()];
    for p in posteriors {
        counts[scheme.locate(p.max_prob())][p.argmax().0] += 1;
    }
    BucketTable {
        buckets: scheme.buckets.iter().map(|b| b.name.clone()).collect(),
        ranges: scheme.buckets.iter().map(Bucket::range_label).collect(),
        counts,
    }
}

/// Per-class admission rule for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    /// A sample is admitted when its max probability strictly exceeds the
    /// threshold of its argmax class.
    pub thresholds: Vec<f64>,
    /// Optional per-class limit on admissions per step.
    pub caps: Vec<Option<usize>>,
}

impl SelectionPolicy {
    pub fn uniform(classes: usize, threshold: f64) -> Self {
        SelectionPolicy {
            thresholds: vec![threshold; classes],
            caps: vec![None; classes],
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.thresholds.len() != classes || self.caps.len() != classes {
            return Err(Error::InvalidConfig(format!(
                "policy must list {classes} thresholds and caps"
            )));
        }
        if let Some(t) = self.thresholds.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidConfig(format!(
                "threshold {t} outside [0, 1]"
            )));
        }
        Ok(())
    }
}

/// Schedule entry: `policy` applies from `step_from` until a later entry takes over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEntry {
    pub step_from: usize,
    pub thresholds: Vec<f64>,
    pub caps: Vec<Option<usize>>,
}

/// Step-indexed selection policies, serialized as a JSON array of entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicySchedule {
    pub entries: Vec<PolicyEntry>,
}

/// Threshold for the scarce classes on the first step.
pub const IMBALANCE_THRESHOLD: f64 = 0.7;
/// Uniform threshold for every later step.
pub const LATER_THRESHOLD: f64 = 0.8;

impl PolicySchedule {
    pub fn constant(policy: SelectionPolicy) -> Self {
        PolicySchedule {
            entries: vec![PolicyEntry {
                step_from: 1,
                thresholds: policy.thresholds,
                caps: policy.caps,
            }],
        }
    }

    /// Step 1 admits only classes W and I above 0.7; later steps admit any
    /// class above 0.8. Label sets without W and I use 0.8 throughout.
    pub fn default_for(labels: &LabelSet) -> Self {
        let c = labels.len();
        let later = PolicyEntry {
            step_from: 2,
            thresholds: vec![LATER_THRESHOLD; c],
            caps: vec![None; c],
        };
        match (labels.parse("W"), labels.parse("I")) {
            (Some(w), Some(i)) => {
                let mut first = vec![1.0; c];
                first[w.0] = IMBALANCE_THRESHOLD;
                first[i.0] = IMBALANCE_THRESHOLD;
                PolicySchedule {
                    entries: vec![
                        PolicyEntry {
                            step_from: 1,
                            thresholds: first,
                            caps: vec![None; c],
                        },
                        later,
                    ],
                }
            }
            _ => Self::constant(SelectionPolicy::uniform(c, LATER_THRESHOLD)),
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if !self.entries.iter().any(|e| e.step_from <= 1) {
            return Err(Error::InvalidConfig(
                "policy schedule must cover step 1".into(),
            ));
        }
        for e in &self.entries {
            self.policy_of(e).validate(classes)?;
        }
        Ok(())
    }

    fn policy_of(&self, e: &PolicyEntry) -> SelectionPolicy {
        SelectionPolicy {
            thresholds: e.thresholds.clone(),
            caps: e.caps.clone(),
        }
    }

    /// The entry with the largest `step_from <= step`; later entries win ties.
    pub fn policy_for(&self, step: usize) -> SelectionPolicy {
        let entry = self
            .entries
            .iter()
            .filter(|e| e.step_from <= step)
            .max_by_key(|e| e.step_from)
            .expect("validated schedule covers step 1");
        self.policy_of(entry)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledSample {
    /// Index into the original unlabelled pool.
    pub pool_index: usize,
    pub label: ClassLabel,
    pub max_prob: f64,
    pub step: usize,
}

/// Admission decision over `(pool_index, posterior)` pairs.
///
/// With a cap, the most confident samples of the class win, lower pool index
/// first on equal probability. The result is sorted by pool index.
pub fn select(
    candidates: &[(usize, Posterior)],
    policy: &SelectionPolicy,
    step: usize,
) -> Vec<PseudoLabeledSample> {
    let classes = policy.thresholds.len();
    let mut per_class: Vec<Vec<PseudoLabeledSample>> = vec![Vec::new(); classes];
    for (idx, p) in candidates {
        let label = p.argmax();
        let prob = p.max_prob();
        if label.0 < classes && prob > policy.thresholds[label.0] {
            per_class[label.0].push(PseudoLabeledSample {
                pool_index: *idx,
                label,
                max_prob: prob,
                step,
            });
        }
    }
    let mut out = Vec::new();
    for (c, mut admitted) in per_class.into_iter().enumerate() {
        if let Some(Some(cap)) = policy.caps.get(c) {
            admitted.sort_by(|a, b| {
                b.max_prob
                    .total_cmp(&a.max_prob)
                    .then(a.pool_index.cmp(&b.pool_index))
            });
            admitted.truncate(*cap);
        }
        out.extend(admitted);
    }
    out.sort_by_key(|s| s.pool_index);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Strong,
    Weak,
}

/// Final label of one pool sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub pool_index: usize,
    pub label: ClassLabel,
    pub max_prob: f64,
    pub step_admitted: Option<usize>,
    pub strength: Strength,
}

/// State after one updating step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsStep {
    pub step: usize,
    /// Labelled pool size after this step's admissions.
    pub labeled: usize,
    pub unlabeled: usize,
    pub labeled_by_class: Vec<usize>,
    pub admitted: Vec<usize>,
    /// Accuracy of this step's model on the pool it was trained on.
    pub train_accuracy: f64,
    /// Accuracy on the held-back expert-labelled split, when one was given.
    pub eval_accuracy: Option<f64>,
    pub epochs_run: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsTrace {
    pub steps: Vec<DynamicsStep>,
}

impl DynamicsTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfTrainConfig {
    /// Template for every step's network; `seed` is replaced per step.
    pub mlp: MlpConfig,
    pub schedule: PolicySchedule,
    pub max_steps: usize,
    /// Continue from the previous step's weights instead of re-initializing.
    pub warm_start: bool,
    /// Oversample the labelled pool to balance before every training step.
    pub rebalance: bool,
    pub seed: u64,
}

pub const DEFAULT_MAX_STEPS: usize = 100;

impl SelfTrainConfig {
    pub fn new(mlp: MlpConfig, labels: &LabelSet) -> Self {
        SelfTrainConfig {
            mlp,
            schedule: PolicySchedule::default_for(labels),
            max_steps: DEFAULT_MAX_STEPS,
            warm_start: true,
            rebalance: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainOutcome {
    pub model: MlpModel,
    /// The step-1 network, trained on expert labels only.
    pub supervised_model: MlpModel,
    /// One entry per pool sample, in pool order.
    pub assignment: Vec<Assignment>,
    pub admitted: Vec<PseudoLabeledSample>,
    pub trace: DynamicsTrace,
}

impl SelfTrainOutcome {
    pub fn labels(&self) -> Vec<ClassLabel> {
        self.assignment.iter().map(|a| a.label).collect()
    }

    pub fn strong_count(&self) -> usize {
        self.assignment
            .iter()
            .filter(|a| a.strength == Strength::Strong)
            .count()
    }
}

pub fn run_selftrain(
    labeled: &Dataset,
    unlabeled: &Dataset,
    config: &SelfTrainConfig,
    eval: Option<&Dataset>,
) -> Result<SelfTrainOutcome> {
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    labeled.require_labels()?;
    if unlabeled.dim() != labeled.dim() {
        return Err(Error::DimensionMismatch {
            expected: labeled.dim(),
            got: unlabeled.dim(),
        });
    }
    let classes = labeled.num_classes();
    if config.mlp.input_dim != labeled.dim() || config.mlp.classes != classes {
        return Err(Error::InvalidConfig(format!(
            "network shape {}->{} does not match data {}->{}",
            config.mlp.input_dim,
            config.mlp.classes,
            labeled.dim(),
            classes
        )));
    }
    if config.max_steps == 0 {
        return Err(Error::InvalidConfig("max_steps must be >= 1".into()));
    }
    config.mlp.validate()?;
    config.schedule.validate(classes)?;

    let total = labeled.len() + unlabeled.len();
    let mut pool_data = labeled.clone();
    let mut remaining: Vec<usize> = (0..unlabeled.len()).collect();
    let mut admitted_all: Vec<PseudoLabeledSample> = Vec::new();
    let mut trace = DynamicsTrace::default();
    let mut model: Option<MlpModel> = None;
    let mut supervised: Option<MlpModel> = None;
    let mut last_posteriors: Vec<(usize, Posterior)> = Vec::new();

    for step in 1..=config.max_steps {
        let at_step = |e: Error| Error::Step {
            step,
            source: Box::new(e),
        };
        let train_set = if config.rebalance {
            oversample_balance(
                &pool_data,
                derive_seed(config.seed, stream::OVERSAMPLE, step as u64),
            )
            .map_err(at_step)?
        } else {
            pool_data.clone()
        };
        let step_seed = derive_seed(config.seed, stream::STEP, step as u64);
        let mut net = match model.take() {
            Some(mut prev) if config.warm_start => {
                prev.config.seed = step_seed;
                prev
            }
            _ => MlpModel::init(config.mlp.clone().with_seed(step_seed)).map_err(at_step)?,
        };
        let train_trace = net.train(&train_set).map_err(at_step)?;
        if supervised.is_none() {
            supervised = Some(net.clone());
        }

        let train_accuracy = net.accuracy(&pool_data).map_err(at_step)?;
        let eval_accuracy = match eval {
            Some(e) if !e.is_empty() => Some(net.accuracy(e).map_err(at_step)?),
            _ => None,
        };

        let candidates = unlabeled.subset(&remaining);
        let posts = net.predict_proba_all(&candidates).map_err(at_step)?;
        last_posteriors = remaining.iter().copied().zip(posts).collect();

        let policy = config.schedule.policy_for(step);
        let chosen = select(&last_posteriors, &policy, step);
        for s in &chosen {
            assert!(
                s.max_prob > policy.thresholds[s.label.0],
                "admitted sample below its class threshold"
            );
        }

        let mut admitted = vec![0usize; classes];
        for s in &chosen {
            admitted[s.label.0] += 1;
            let mut sample = unlabeled.sample(s.pool_index).clone();
            sample.label = Some(s.label);
            pool_data.push(sample).map_err(at_step)?;
        }
        if !chosen.is_empty() {
            let taken: std::collections::HashSet<usize> =
                chosen.iter().map(|s| s.pool_index).collect();
            remaining.retain(|i| !taken.contains(i));
            last_posteriors.retain(|(i, _)| !taken.contains(i));
        }

        debug_assert_eq!(pool_data.len() + remaining.len(), total);
        trace.steps.push(DynamicsStep {
            step,
            labeled: pool_data.len(),
            unlabeled: remaining.len(),
            labeled_by_class: pool_data.class_counts(),
            admitted,
            train_accuracy,
            eval_accuracy,
            epochs_run: train_trace.epochs_run,
            final_loss: train_trace.losses.last().copied().unwrap_or(f64::NAN),
        });
        log::info!(
            "step {step}: admitted {} ({} labelled, {} left)",
            chosen.len(),
            pool_data.len(),
            remaining.len()
        );

        let done = chosen.is_empty() || remaining.is_empty();
        admitted_all.extend(chosen);
        model = Some(net);
        if done {
            break;
        }
    }

    let model = model.expect("at least one step ran");
    let mut assignment: Vec<Option<Assignment>> = vec![None; unlabeled.len()];
    for s in &admitted_all {
        assignment[s.pool_index] = Some(Assignment {
            pool_index: s.pool_index,
            label: s.label,
            max_prob: s.max_prob,
            step_admitted: Some(s.step),
            strength: Strength::Strong,
        });
    }
    // Leftovers were scored by the final model on the last step.
    for (idx, p) in &last_posteriors {
        assignment[*idx] = Some(Assignment {
            pool_index: *idx,
            label: p.argmax(),
            max_prob: p.max_prob(),
            step_admitted: None,
            strength: Strength::Weak,
        });
    }
    let assignment = assignment
        .into_iter()
        .map(|a| a.expect("every pool sample is admitted or scored"))
        .collect();

    Ok(SelfTrainOutcome {
        model,
        supervised_model: supervised.expect("at least one step ran"),
        assignment,
        admitted: admitted_all,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountsRow {
    pub step: usize,
    pub labeled: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub step: usize,
    pub train_accuracy: f64,
    pub eval_accuracy: Option<f64>,
}

/// Plot series: labelled/unlabelled counts per step and accuracies per step.
pub fn emit_dynamics(trace: &DynamicsTrace) -> Result<(Vec<CountsRow>, Vec<AccuracyRow>)> {
    if trace.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let counts = trace
        .steps
        .iter()
        .map(|s| CountsRow {
            step: s.step,
            labeled: s.labeled,
            unlabeled: s.unlabeled,
        })
        .collect();
    let acc = trace
        .steps
        .iter()
        .map(|s| AccuracyRow {
            step: s.step,
            train_accuracy: s.train_accuracy,
            eval_accuracy: s.eval_accuracy,
        })
        .collect();
    Ok((counts, acc))
}

pub fn write_counts_csv<W: Write>(rows: &[CountsRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["step", "labeled", "unlabeled"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            r.labeled.to_string(),
            r.unlabeled.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn write_accuracy_csv<W: Write>(rows: &[AccuracyRow], w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["step", "train_accuracy", "eval_accuracy"])?;
    for r in rows {
        w.write_record([
            r.step.to_string(),
            format!("{:.6}", r.train_accuracy),
            r.eval_accuracy.map_or(String::new(), |a| format!("{a:.6}")),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// `pool_index,label,max_prob,step_admitted,strength`
pub fn write_assignment_csv<W: Write>(
    assignment: &[Assignment],
    labels: &LabelSet,
    w: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record([
        "pool_index",
        "label",
        "max_prob",
        "step_admitted",
        "strength",
    ])?;
    for a in assignment {
        w.write_record([
            a.pool_index.to_string(),
            labels.name(a.label).to_string(),
            a.max_prob.to_string(),
            a.step_admitted.map_or(String::new(), |s| s.to_string()),
            match a.strength {
                Strength::Strong => "strong".to_string(),
                Strength::Weak => "weak".to_string(),
            },
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_assignment_csv(path: impl AsRef<Path>, labels: &LabelSet) -> Result<Vec<Assignment>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(out.len() + 2, |p| p.line() as usize);
        if rec.len() != 5 {
            return Err(Error::RaggedRow {
                row,
                expected: 5,
                found: rec.len(),
            });
        }
        let num = |j: usize, name: &str| -> Result<f64> {
            rec[j].parse().map_err(|_| Error::NonNumeric {
                row,
                column: name.to_string(),
                value: rec[j].to_string(),
            })
        };
        let label = labels.parse(&rec[1]).ok_or_else(|| Error::UnknownLabel {
            row,
            token: rec[1].to_string(),
        })?;
        let step_admitted = if rec[3].is_empty() {
            None
        } else {
            Some(num(3, "step_admitted")? as usize)
        };
        let strength = match &rec[4] {
            "strong" => Strength::Strong,
            "weak" => Strength::Weak,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "row {row}: strength must be strong or weak, got {other:?}"
                )))
            }
        };
        out.push(Assignment {
            pool_index: num(0, "pool_index")? as usize,
            label,
            max_prob: num(2, "max_prob")?,
            step_admitted,
            strength,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn post(p: &[f64]) -> Posterior {
        Posterior::from_probs(p.to_vec())
    }

    #[test]
    fn standard_scheme_is_valid_partition() {
        let s = BucketScheme::standard();
        assert!(BucketScheme::new(s.buckets().to_vec()).is_ok());
        assert_eq!(s.len(), 8);
    }

    #[test]
    fn boundary_semantics() {
        let s = BucketScheme::standard();
        let name = |p: f64| s.buckets()[s.locate(p)].name.clone();
        assert_eq!(name(0.97), "VVV-good");
        assert_eq!(name(0.95), "VV-good");
        assert_eq!(name(0.40), "V-poor");
        assert_eq!(name(0.0), "V-poor");
        assert_eq!(name(1.0), "VVV-good");
        assert_eq!(name(0.4000001), "Poor");
    }

    #[test]
    fn broken_schemes_rejected() {
        let mut b = BucketScheme::standard().buckets().to_vec();
        b[0].upper_closed = false;
        assert!(BucketScheme::new(b).is_err());
        let mut b = BucketScheme::standard().buckets().to_vec();
        b[3].lower = 0.71;
        assert!(BucketScheme::new(b).is_err());
        let mut b = BucketScheme::standard().buckets().to_vec();
        b[2].lower_closed = true;
        assert!(BucketScheme::new(b).is_err());
    }

    #[test]
    fn range_labels_match_table_notation() {
        let s = BucketScheme::standard();
        assert_eq!(s.buckets()[0].range_label(), "(0.95,1.0]");
        assert_eq!(s.buckets()[7].range_label(), "[0.0,0.4]");
    }

    #[test]
    fn bucketize_counts_by_argmax() {
        let posts = vec![
            post(&[0.97, 0.01, 0.01, 0.01]),
            post(&[0.1, 0.85, 0.05, 0.0]),
            post(&[0.3, 0.3, 0.2, 0.2]),
        ];
        let t = bucketize(&posts, 4, &BucketScheme::standard());
        assert_eq!(t.total(), 3);
        assert_eq!(t.counts[0][0], 1);
        assert_eq!(t.counts[2][1], 1);
        assert_eq!(t.counts[7][0], 1);
        assert_eq!(t.class_totals(), vec![2, 1, 0, 0]);
    }

    #[test]
    fn thresholds_of_one_admit_nothing() {
        let c = vec![(0, post(&[1.0, 0.0])), (1, post(&[0.0, 1.0]))];
        assert!(select(&c, &SelectionPolicy::uniform(2, 1.0), 1).is_empty());
    }

    #[test]
    fn imbalance_policy_admits_only_scarce_classes() {
        let sched = PolicySchedule::default_for(&LabelSet::dwio());
        let p1 = sched.policy_for(1);
        assert_eq!(p1.thresholds, vec![1.0, 0.7, 0.7, 1.0]);
        assert_eq!(sched.policy_for(2).thresholds, vec![0.8; 4]);
        assert_eq!(sched.policy_for(50).thresholds, vec![0.8; 4]);
        let c = vec![
            (0, post(&[0.1, 0.72, 0.1, 0.08])),
            (1, post(&[0.99, 0.0, 0.0, 0.01])),
        ];
        let s = select(&c, &p1, 1);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].pool_index, s[0].label), (0, ClassLabel(1)));
    }

    #[test]
    fn threshold_is_strict() {
        let c = vec![(0, post(&[0.8, 0.2]))];
        assert!(select(&c, &SelectionPolicy::uniform(2, 0.8), 1).is_empty());
    }

    #[test]
    fn caps_keep_most_confident_then_lowest_index() {
        let c = vec![
            (4, post(&[0.9, 0.1])),
            (2, post(&[0.95, 0.05])),
            (7, post(&[0.9, 0.1])),
            (1, post(&[0.2, 0.8])),
        ];
        let mut pol = SelectionPolicy::uniform(2, 0.5);
        pol.caps[0] = Some(2);
        let s = select(&c, &pol, 3);
        let idx: Vec<usize> = s.iter().map(|x| x.pool_index).collect();
        assert_eq!(idx, vec![1, 2, 4]);
        assert!(s.iter().all(|x| x.step == 3));
    }

    #[test]
    fn schedule_json_shape() {
        let sched = PolicySchedule::default_for(&LabelSet::dwio());
        let json = serde_json::to_string(&sched).unwrap();
        assert!(json.starts_with(
            r#"[{"step_from":1,"thresholds":[1.0,0.7,0.7,1.0],"caps":[null,null,null,null]}"#
        ));
        assert_eq!(PolicySchedule::from_json(&json).unwrap(), sched);
        let bad = PolicySchedule {
            entries: vec![PolicyEntry {
                step_from: 2,
                thresholds: vec![0.5; 4],
                caps: vec![None; 4],
            }],
        };
        assert!(bad.validate(4).is_err());
    }

    #[test]
    fn non_dwio_default_is_uniform() {
        let sched = PolicySchedule::default_for(&LabelSet::numbered(3).unwrap());
        assert_eq!(sched.policy_for(1).thresholds, vec![0.8; 3]);
    }

    #[test]
    fn empty_trace_cannot_be_emitted() {
        assert!(emit_dynamics(&DynamicsTrace::default()).is_err());
    }
}
