//! Cross-validation harness and the metrics behind the comparison tables.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, BaselineKind, BaselineModel};
use crate::dataset::{stratified_kfold, ClassLabel, Dataset, Fold};
use crate::error::{Error, Result};
use crate::mlp::{MlpConfig, MlpModel};
use crate::rng::{derive_seed, stream};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_REPEATS: usize = 25;

/// A fitted model that labels feature vectors.
pub trait Classifier: Send + Sync {
    fn classify(&self, x: &[f64]) -> Result<ClassLabel>;
}

/// Something that can be fitted on a labelled set.
pub trait Learner: Sync {
    type Model: Classifier;
    fn name(&self) -> String;
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Self::Model>;
}

impl Classifier for MlpModel {
    fn classify(&self, x: &[f64]) -> Result<ClassLabel> {
        self.predict(x)
    }
}

impl Classifier for BaselineModel {
    fn classify(&self, x: &[f64]) -> Result<ClassLabel> {
        self.predict(x).map(|(l, _)| l)
    }
}

pub const NN_SUPERVISED: &str = "NN-supervised";
pub const NN_SEMI_SUPERVISED: &str = "NN-semi-supervised";

impl Learner for MlpConfig {
    type Model = MlpModel;

    fn name(&self) -> String {
        NN_SUPERVISED.to_string()
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<MlpModel> {
        let mut m = MlpModel::init(self.clone().with_seed(seed))?;
        m.train(train)?;
        Ok(m)
    }
}

impl Learner for BaselineKind {
    type Model = BaselineModel;

    fn name(&self) -> String {
        BaselineKind::name(self).to_string()
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<BaselineModel> {
        baselines::fit(self, train, seed)
    }
}

pub fn predict_all<M: Classifier + ?Sized>(model: &M, data: &Dataset) -> Result<Vec<ClassLabel>> {
    data.samples()
        .par_iter()
        .map(|s| model.classify(&s.features))
        .collect()
}

/// Fraction of positions where `preds` equals `truth`.
pub fn accuracy(truth: &[ClassLabel], preds: &[ClassLabel]) -> Result<f64> {
    check_lengths(truth.len(), preds.len())?;
    if truth.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(agreement_count(truth, preds)? as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub train_mean: f64,
    pub train_max: f64,
    pub train_min: f64,
    pub test_mean: f64,
    pub test_max: f64,
    pub test_min: f64,
    pub runs: usize,
}

impl AccuracyStats {
    pub fn from_runs(runs: &[RunRecord]) -> Result<Self> {
        if runs.is_empty() {
            return Err(Error::InvalidConfig("no runs to aggregate".into()));
        }
        let (train_mean, train_max, train_min) = summarize(runs.iter().map(|r| r.train_accuracy));
        let (test_mean, test_max, test_min) = summarize(runs.iter().map(|r| r.test_accuracy));
        Ok(AccuracyStats {
            train_mean,
            train_max,
            train_min,
            test_mean,
            test_max,
            test_min,
            runs: runs.len(),
        })
    }
}

/// (mean, max, min). The mean is clamped into [min, max] so rounding in the
/// sum can never break the ordering.
fn summarize(values: impl Iterator<Item = f64>) -> (f64, f64, f64) {
    let (mut sum, mut n, mut max, mut min) = (0.0, 0usize, f64::NEG_INFINITY, f64::INFINITY);
    for v in values {
        sum += v;
        n += 1;
        max = max.max(v);
        min = min.min(v);
    }
    ((sum / n as f64).clamp(min, max), max, min)
}

/// Everything one cross-validated classifier produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub classifier: String,
    pub k: usize,
    pub repeats: usize,
    pub seed: u64,
    pub stats: AccuracyStats,
    /// Ordered by (repeat, fold).
    pub runs: Vec<RunRecord>,
    /// Out-of-fold predictions per repeat; each covers every labelled sample once.
    pub out_of_fold: Vec<Vec<ClassLabel>>,
}

impl CvReport {
    /// Repeat whose out-of-fold predictions are least accurate (first on ties).
    pub fn worst_repeat(&self, truth: &[ClassLabel]) -> Result<usize> {
        let mut worst = (0, f64::INFINITY);
        for (r, preds) in self.out_of_fold.iter().enumerate() {
            let a = accuracy(truth, preds)?;
            if a < worst.1 {
                worst = (r, a);
            }
        }
        Ok(worst.0)
    }
}

/// `k`-fold stratified cross-validation repeated `repeats` times. Folds are
/// reshuffled per repeat and every run gets its own derived seed, so any
/// single run can be replayed alone. `k` equal to the sample count means
/// leave-one-out, with fold `i` holding out sample `i`.
pub fn run_cv<L: Learner>(
    learner: &L,
    labeled: &Dataset,
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<CvReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be >= 1".into()));
    }
    let truth = labeled.require_labels()?;
    let n = labeled.len();
    let splits: Vec<Vec<Fold>> = if k == n && n >= 2 {
        let loo: Vec<Fold> = (0..n)
            .map(|i| Fold {
                train: (0..n).filter(|&j| j != i).collect(),
                test: vec![i],
            })
            .collect();
        vec![loo; repeats]
    } else {
        (0..repeats)
            .map(|r| stratified_kfold(labeled, k, derive_seed(seed, stream::FOLDS, r as u64)))
            .collect::<Result<_>>()?
    };

    let jobs: Vec<(usize, usize)> = (0..repeats)
        .flat_map(|r| (0..k).map(move |f| (r, f)))
        .collect();
    let results: Vec<(RunRecord, Vec<ClassLabel>)> = jobs
        .par_iter()
        .map(|&(repeat, fold)| {
            let run_seed = derive_seed(seed, stream::RUN, (repeat * k + fold) as u64);
            let split = &splits[repeat][fold];
            let wrap = |e: Error| Error::Fold {
                repeat,
                fold,
                source: Box::new(e),
            };
            let train = labeled.subset(&split.train);
            let test = labeled.subset(&split.test);
            let model = learner.fit(&train, run_seed).map_err(wrap)?;
            let train_pred = predict_all(&model, &train).map_err(wrap)?;
            let test_pred = predict_all(&model, &test).map_err(wrap)?;
            let pick = |idx: &[usize]| idx.iter().map(|&i| truth[i]).collect::<Vec<_>>();
            let record = RunRecord {
                repeat,
                fold,
                seed: run_seed,
                train_accuracy: accuracy(&pick(&split.train), &train_pred).map_err(wrap)?,
                test_accuracy: accuracy(&pick(&split.test), &test_pred).map_err(wrap)?,
            };
            Ok((record, test_pred))
        })
        .collect::<Result<_>>()?;

    let mut out_of_fold = vec![vec![ClassLabel(0); labeled.len()]; repeats];
    let mut runs = Vec::with_capacity(results.len());
    for (record, preds) in results {
        let split = &splits[record.repeat][record.fold];
        for (&i, p) in split.test.iter().zip(preds) {
            out_of_fold[record.repeat][i] = p;
        }
        runs.push(record);
    }
    Ok(CvReport {
        classifier: learner.name(),
        k,
        repeats,
        seed,
        stats: AccuracyStats::from_runs(&runs)?,
        runs,
        out_of_fold,
    })
}

/// Confusion counts: `matrix[i][j]` samples of true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingTable {
    pub matrix: Vec<Vec<usize>>,
}

impl RoutingTable {
    pub fn classes(&self) -> usize {
        self.matrix.len()
    }

    pub fn misclassified(&self, class: usize) -> usize {
        let row = &self.matrix[class];
        row.iter().sum::<usize>() - row[class]
    }

    pub fn correct(&self) -> usize {
        (0..self.classes()).map(|i| self.matrix[i][i]).sum()
    }

    pub fn total(&self) -> usize {
        self.matrix.iter().flatten().sum()
    }

    /// Diagonal zeroed, with each row's misclassified total appended.
    pub fn report_view(&self) -> Vec<Vec<usize>> {
        (0..self.classes())
            .map(|i| {
                let mut row = self.matrix[i].clone();
                row[i] = 0;
                row.push(self.misclassified(i));
                row
            })
            .collect()
    }
}

pub fn routing_table(
    truth: &[ClassLabel],
    preds: &[ClassLabel],
    classes: usize,
) -> Result<RoutingTable> {
    check_lengths(truth.len(), preds.len())?;
    let mut matrix = vec![vec![0usize; classes]; classes];
    for (t, p) in truth.iter().zip(preds) {
        if t.0 >= classes || p.0 >= classes {
            return Err(Error::InvalidConfig(format!(
                "label index out of range for {classes} classes"
            )));
        }
        matrix[t.0][p.0] += 1;
    }
    Ok(RoutingTable { matrix })
}

/// Smallest class count over the largest.
pub fn balance_factor(counts: &[usize]) -> Result<f64> {
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::AllZeroCounts);
    }
    let min = counts.iter().copied().min().unwrap_or(0);
    Ok(min as f64 / max as f64)
}

pub fn agreement_count(a: &[ClassLabel], b: &[ClassLabel]) -> Result<usize> {
    check_lengths(a.len(), b.len())?;
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count())
}

pub fn class_counts(preds: &[ClassLabel], classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; classes];
    for p in preds {
        counts[p.0] += 1;
    }
    counts
}

fn check_lengths(left: usize, right: usize) -> Result<()> {
    if left != right {
        return Err(Error::LengthMismatch { left, right });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{LabelSet, Sample};

    struct Constant(ClassLabel);

    impl Classifier for Constant {
        fn classify(&self, _: &[f64]) -> Result<ClassLabel> {
            Ok(self.0)
        }
    }

    impl Learner for Constant {
        type Model = Constant;
        fn name(&self) -> String {
            "constant".into()
        }
        fn fit(&self, _: &Dataset, _: u64) -> Result<Constant> {
            Ok(Constant(self.0))
        }
    }

    fn labels(ix: &[usize]) -> Vec<ClassLabel> {
        ix.iter().map(|&i| ClassLabel(i)).collect()
    }

    fn grid(counts: &[usize]) -> Dataset {
        let mut samples = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(Sample::labeled(
                    vec![c as f64 * 10.0 + i as f64 * 0.01],
                    ClassLabel(c),
                ));
            }
        }
        Dataset::new(
            1,
            LabelSet::numbered(counts.len()).unwrap(),
            samples,
            "grid",
        )
        .unwrap()
    }

    #[test]
    fn constant_classifier_stats_are_flat() {
        let d = grid(&[20, 30]);
        let r = run_cv(&Constant(ClassLabel(0)), &d, 5, 25, 1).unwrap();
        assert_eq!(r.runs.len(), 125);
        assert_eq!(r.stats.runs, 125);
        let s = r.stats;
        assert_eq!(s.test_mean, 0.4);
        assert_eq!((s.test_max, s.test_min), (0.4, 0.4));
        assert_eq!((s.train_mean, s.train_max, s.train_min), (0.4, 0.4, 0.4));
    }

    #[test]
    fn knn_train_side_is_perfect() {
        let d = grid(&[12, 9, 15]);
        let r = run_cv(&BaselineKind::knn(), &d, 3, 4, 7).unwrap();
        assert_eq!(r.runs.len(), 12);
        assert_eq!(
            (r.stats.train_mean, r.stats.train_max, r.stats.train_min),
            (1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn out_of_fold_covers_every_sample() {
        let d = grid(&[10, 10]);
        let r = run_cv(&BaselineKind::knn(), &d, 5, 3, 2).unwrap();
        let truth = d.require_labels().unwrap();
        for preds in &r.out_of_fold {
            assert_eq!(preds, &truth);
        }
        assert_eq!(r.worst_repeat(&truth).unwrap(), 0);
    }

    #[test]
    fn cv_is_deterministic_and_seed_sensitive() {
        let d = grid(&[10, 10, 10]);
        let a = run_cv(&BaselineKind::bagged_trees(), &d, 5, 2, 3).unwrap();
        let b = run_cv(&BaselineKind::bagged_trees(), &d, 5, 2, 3).unwrap();
        assert_eq!(a, b);
        let c = run_cv(&BaselineKind::bagged_trees(), &d, 5, 2, 4).unwrap();
        assert_ne!(a.runs[0].seed, c.runs[0].seed);
    }

    #[test]
    fn cv_errors_carry_coordinates_or_precondition() {
        let d = grid(&[3, 10]);
        assert!(run_cv(&BaselineKind::knn(), &d, 5, 1, 0).is_err());
        assert!(run_cv(&BaselineKind::knn(), &grid(&[5, 5]), 5, 0, 0).is_err());
    }

    #[test]
    fn routing_hand_counted() {
        let t = routing_table(&labels(&[0, 0, 1]), &labels(&[1, 0, 1]), 2).unwrap();
        assert_eq!(t.report_view(), vec![vec![0, 1, 1], vec![0, 0, 0]]);
        assert_eq!(t.correct(), 2);
        let perfect = routing_table(&labels(&[0, 1, 2]), &labels(&[0, 1, 2]), 3).unwrap();
        assert!(perfect.report_view().iter().flatten().all(|&v| v == 0));
        assert!(routing_table(&labels(&[0]), &labels(&[0, 1]), 2).is_err());
    }

    #[test]
    fn balance_factor_values() {
        assert!((balance_factor(&[9036, 255, 102, 2761]).unwrap() - 0.0113).abs() < 1e-4);
        assert!((balance_factor(&[3108, 4167, 527, 4352]).unwrap() - 0.1211).abs() < 1e-4);
        assert_eq!(balance_factor(&[5, 5, 5]).unwrap(), 1.0);
        assert_eq!(balance_factor(&[0, 11998, 0, 156]).unwrap(), 0.0);
        assert!(matches!(balance_factor(&[0, 0]), Err(Error::AllZeroCounts)));
        assert!(balance_factor(&[]).is_err());
    }

    #[test]
    fn agreement_and_counts() {
        let a = labels(&[0, 1, 2, 3]);
        assert_eq!(agreement_count(&a, &a).unwrap(), 4);
        assert_eq!(agreement_count(&a, &labels(&[1, 2, 3, 0])).unwrap(), 0);
        assert!(agreement_count(&a, &a[..2]).is_err());
        assert_eq!(class_counts(&[], 4), vec![0; 4]);
        let mut expert = Vec::new();
        for (c, n) in [162usize, 50, 107, 177].iter().enumerate() {
            expert.extend(std::iter::repeat_n(ClassLabel(c), *n));
        }
        assert_eq!(class_counts(&expert, 4), vec![162, 50, 107, 177]);
    }

    #[test]
    fn leave_one_out_matches_direct_oracle() {
        let d = grid(&[4, 4]);
        let n = d.len();
        let r = run_cv(&BaselineKind::knn(), &d, n, 1, 5).unwrap();
        assert_eq!(r.runs.len(), n);
        // Direct leave-one-out over the nearest other point.
        let truth = d.require_labels().unwrap();
        let mut correct = 0;
        for i in 0..n {
            let xi = d.features(i)[0];
            let j = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| {
                    (d.features(a)[0] - xi)
                        .abs()
                        .total_cmp(&(d.features(b)[0] - xi).abs())
                })
                .unwrap();
            correct += usize::from(truth[j] == truth[i]);
        }
        let oof = accuracy(&truth, &r.out_of_fold[0]).unwrap();
        assert_eq!(oof, correct as f64 / n as f64);
    }
}
