//! Comparison classifiers: 1-NN, Gaussian naive Bayes, linear discriminant
//! analysis, one-vs-rest linear SVM and bagged CART trees.
//!
//! All of them share [`fit`] / [`BaselineModel::predict`]. Prediction is the
//! argmax of the score vector with ties going to the lowest class index.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, Dataset};
use crate::error::{Error, Result};
use crate::mlp::argmax;
use crate::rng::{derive_seed, rng_from_seed, stream};

pub const NB_VARIANCE_FLOOR: f64 = 1e-9;
pub const LDA_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BaselineKind {
    Knn {
        k: usize,
    },
    GaussianNb,
    Lda,
    LinearSvm {
        step_size: f64,
        epochs: usize,
        margin: f64,
    },
    BaggedTrees {
        trees: usize,
        /// `None` grows until leaves are pure.
        max_depth: Option<usize>,
    },
}

impl BaselineKind {
    pub fn knn() -> Self {
        BaselineKind::Knn { k: 1 }
    }

    pub fn linear_svm() -> Self {
        BaselineKind::LinearSvm {
            step_size: 0.01,
            epochs: 200,
            margin: 1.0,
        }
    }

    pub fn bagged_trees() -> Self {
        BaselineKind::BaggedTrees {
            trees: 25,
            max_depth: Some(8),
        }
    }

    /// Discriminant analysis, KNN, naive Bayes, ensemble, SVM.
    pub fn all_defaults() -> Vec<BaselineKind> {
        vec![
            BaselineKind::Lda,
            BaselineKind::knn(),
            BaselineKind::GaussianNb,
            BaselineKind::bagged_trees(),
            BaselineKind::linear_svm(),
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            BaselineKind::Knn { .. } => "KNN",
            BaselineKind::GaussianNb => "NaiveBayes",
            BaselineKind::Lda => "Discriminant analysis",
            BaselineKind::LinearSvm { .. } => "SVM",
            BaselineKind::BaggedTrees { .. } => "Ensembles",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        match *self {
            BaselineKind::Knn { k: 0 } => bad("k must be >= 1"),
            BaselineKind::BaggedTrees { trees: 0, .. } => bad("tree count must be >= 1"),
            BaselineKind::BaggedTrees {
                max_depth: Some(0), ..
            } => bad("max_depth must be >= 1"),
            BaselineKind::LinearSvm {
                step_size,
                epochs,
                margin,
            } if !(step_size > 0.0) || epochs == 0 || !(margin > 0.0) => {
                bad("svm step size, epochs and margin must be positive")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BaselineModel {
    Knn {
        k: usize,
        classes: usize,
        points: Vec<Vec<f64>>,
        labels: Vec<ClassLabel>,
    },
    GaussianNb {
        priors: Vec<f64>,
        means: Vec<Vec<f64>>,
        variances: Vec<Vec<f64>>,
    },
    Lda {
        priors: Vec<f64>,
        means: Vec<Vec<f64>>,
        /// Inverse of the ridge-repaired pooled covariance, row-major.
        precision: Vec<f64>,
        coef: Vec<Vec<f64>>,
        intercept: Vec<f64>,
    },
    LinearSvm {
        /// One `[w; b]` row per class.
        weights: Vec<Vec<f64>>,
    },
    BaggedTrees {
        classes: usize,
        trees: Vec<Tree>,
    },
}

pub fn fit(kind: &BaselineKind, labeled: &Dataset, seed: u64) -> Result<BaselineModel> {
    kind.validate()?;
    if labeled.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let labels = labeled.require_labels()?;
    let xs: Vec<&[f64]> = (0..labeled.len()).map(|i| labeled.features(i)).collect();
    let c = labeled.num_classes();
    match *kind {
        BaselineKind::Knn { k } => Ok(BaselineModel::Knn {
            k,
            classes: c,
            points: xs.iter().map(|x| x.to_vec()).collect(),
            labels,
        }),
        BaselineKind::GaussianNb => Ok(fit_nb(&xs, &labels, c)),
        BaselineKind::Lda => fit_lda(&xs, &labels, c),
        BaselineKind::LinearSvm {
            step_size,
            epochs,
            margin,
        } => Ok(fit_svm(&xs, &labels, c, step_size, epochs, margin, seed)),
        BaselineKind::BaggedTrees { trees, max_depth } => {
            Ok(fit_bagging(&xs, &labels, c, trees, max_depth, seed))
        }
    }
}

fn class_stats(xs: &[&[f64]], labels: &[ClassLabel], c: usize) -> (Vec<usize>, Vec<Vec<f64>>) {
    let d = xs[0].len();
    let mut counts = vec![0usize; c];
    let mut means = vec![vec![0.0; d]; c];
    for (x, l) in xs.iter().zip(labels) {
        counts[l.0] += 1;
        for (m, v) in means[l.0].iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        if n > 0 {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    (counts, means)
}

fn fit_nb(xs: &[&[f64]], labels: &[ClassLabel], c: usize) -> BaselineModel {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let (counts, means) = class_stats(xs, labels, c);
    let mut variances = vec![vec![0.0; d]; c];
    for (x, l) in xs.iter().zip(labels) {
        for j in 0..d {
            let dv = x[j] - means[l.0][j];
            variances[l.0][j] += dv * dv;
        }
    }
    for (v, &cnt) in variances.iter_mut().zip(&counts) {
        for s in v.iter_mut() {
            *s = if cnt > 0 { *s / cnt as f64 } else { 0.0 };
            *s = s.max(NB_VARIANCE_FLOOR);
        }
    }
    BaselineModel::GaussianNb {
        priors: counts.iter().map(|&k| k as f64 / n).collect(),
        means,
        variances,
    }
}

fn fit_lda(xs: &[&[f64]], labels: &[ClassLabel], c: usize) -> Result<BaselineModel> {
    let d = xs[0].len();
    let n = xs.len();
    let (counts, means) = class_stats(xs, labels, c);
    let present = counts.iter().filter(|&&k| k > 0).count();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (x, l) in xs.iter().zip(labels) {
        let mu = &means[l.0];
        for a in 0..d {
            let da = x[a] - mu[a];
            for b in 0..d {
                cov[(a, b)] += da * (x[b] - mu[b]);
            }
        }
    }
    cov /= n.saturating_sub(present).max(1) as f64;
    let ridge = LDA_RIDGE * cov.trace() / d as f64;
    for j in 0..d {
        cov[(j, j)] += ridge;
    }
    let chol = cov.cholesky().ok_or(Error::SingularCovariance)?;
    let precision = chol.inverse();
    if precision.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }

    let priors: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    let mut coef = Vec::with_capacity(c);
    let mut intercept = Vec::with_capacity(c);
    for k in 0..c {
        let mu = nalgebra::DVector::from_column_slice(&means[k]);
        let a = &precision * &mu;
        intercept.push(if counts[k] > 0 {
            -0.5 * mu.dot(&a) + priors[k].ln()
        } else {
            f64::NEG_INFINITY
        });
        coef.push(a.iter().copied().collect());
    }
    // nalgebra is column-major; the precision matrix is symmetric anyway.
    let precision = precision.transpose().as_slice().to_vec();
    Ok(BaselineModel::Lda {
        priors,
        means,
        precision,
        coef,
        intercept,
    })
}

fn fit_svm(
    xs: &[&[f64]],
    labels: &[ClassLabel],
    c: usize,
    step_size: f64,
    epochs: usize,
    margin: f64,
    seed: u64,
) -> BaselineModel {
    let d = xs[0].len();
    let weights = (0..c)
        .into_par_iter()
        .map(|k| {
            let mut w = vec![0.0; d + 1];
            let mut order: Vec<usize> = (0..xs.len()).collect();
            let mut rng = rng_from_seed(derive_seed(seed, stream::SVM, k as u64));
            for _ in 0..epochs {
                order.shuffle(&mut rng);
                for &i in &order {
                    let y = if labels[i].0 == k { 1.0 } else { -1.0 };
                    let x = xs[i];
                    let f = dot(&w[..d], x) + w[d];
                    if y * f < margin {
                        for (wj, xj) in w[..d].iter_mut().zip(x.iter()) {
                            *wj += step_size * y * xj;
                        }
                        w[d] += step_size * y;
                    }
                }
            }
            w
        })
        .collect();
    BaselineModel::LinearSvm { weights }
}

/// CART node, stored in a flat arena; children are arena indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: ClassLabel,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> ClassLabel {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

struct TreeBuilder<'a> {
    xs: &'a [&'a [f64]],
    labels: &'a [ClassLabel],
    classes: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn gini(counts: &[usize], n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        1.0 - counts.iter().map(|&k| (k as f64 / n).powi(2)).sum::<f64>()
    }

    fn majority(&self, idx: &[usize]) -> ClassLabel {
        let mut counts = vec![0usize; self.classes];
        for &i in idx {
            counts[self.labels[i].0] += 1;
        }
        let best = (0..self.classes).fold(0, |b, k| if counts[k] > counts[b] { k } else { b });
        ClassLabel(best)
    }

    /// Best (feature, threshold) by weighted Gini, if any split separates `idx`.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.xs[0].len();
        let n = idx.len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut sorted = idx.to_vec();
        for j in 0..d {
            sorted.sort_by(|&a, &b| self.xs[a][j].total_cmp(&self.xs[b][j]).then(a.cmp(&b)));
            let mut left = vec![0usize; self.classes];
            let mut right = vec![0usize; self.classes];
            for &i in &sorted {
                right[self.labels[i].0] += 1;
            }
            for pos in 0..n - 1 {
                let i = sorted[pos];
                left[self.labels[i].0] += 1;
                right[self.labels[i].0] -= 1;
                let (v, next) = (self.xs[i][j], self.xs[sorted[pos + 1]][j]);
                if v == next {
                    continue;
                }
                let nl = pos + 1;
                let score = nl as f64 * Self::gini(&left, nl)
                    + (n - nl) as f64 * Self::gini(&right, n - nl);
                if best.is_none_or(|(s, _, _)| score < s) {
                    best = Some((score, j, v + (next - v) / 2.0));
                }
            }
        }
        best.map(|(_, j, t)| (j, t))
    }

    fn build(&mut self, idx: &[usize], depth: usize) -> usize {
        let at = self.nodes.len();
        let first = self.labels[idx[0]];
        let pure = idx.iter().all(|&i| self.labels[i] == first);
        let capped = self.max_depth.is_some_and(|m| depth >= m);
        let split = if pure || capped || idx.len() < 2 {
            None
        } else {
            self.best_split(idx)
        };
        let Some((feature, threshold)) = split else {
            let class = self.majority(idx);
            self.nodes.push(Node::Leaf { class });
            return at;
        };
        self.nodes.push(Node::Leaf { class: first });
        let (l, r): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.xs[i][feature] <= threshold);
        let left = self.build(&l, depth + 1);
        let right = self.build(&r, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        at
    }
}

fn fit_bagging(
    xs: &[&[f64]],
    labels: &[ClassLabel],
    c: usize,
    n_trees: usize,
    max_depth: Option<usize>,
    seed: u64,
) -> BaselineModel {
    let n = xs.len();
    let trees = (0..n_trees)
        .into_par_iter()
        .map(|t| {
            // A single bag is the whole training set.
            let idx: Vec<usize> = if n_trees == 1 {
                (0..n).collect()
            } else {
                let mut rng = rng_from_seed(derive_seed(seed, stream::BAGGING, t as u64));
                (0..n).map(|_| rng.random_range(0..n)).collect()
            };
            let mut b = TreeBuilder {
                xs,
                labels,
                classes: c,
                max_depth,
                nodes: Vec::new(),
            };
            b.build(&idx, 0);
            Tree { nodes: b.nodes }
        })
        .collect();
    BaselineModel::BaggedTrees { classes: c, trees }
}

impl BaselineModel {
    pub fn classes(&self) -> usize {
        match self {
            BaselineModel::Knn { classes, .. } | BaselineModel::BaggedTrees { classes, .. } => {
                *classes
            }
            BaselineModel::GaussianNb { priors, .. } | BaselineModel::Lda { priors, .. } => {
                priors.len()
            }
            BaselineModel::LinearSvm { weights } => weights.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            BaselineModel::Knn { points, .. } => points.first().map_or(0, Vec::len),
            BaselineModel::GaussianNb { means, .. } | BaselineModel::Lda { means, .. } => {
                means[0].len()
            }
            BaselineModel::LinearSvm { weights } => weights[0].len() - 1,
            BaselineModel::BaggedTrees { .. } => usize::MAX,
        }
    }

    /// Unnormalized per-class scores whose argmax is the prediction:
    /// log joint densities for naive Bayes, discriminant values for LDA,
    /// margins for the SVM, vote fractions for KNN and the trees.
    pub fn decision_scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let d = self.input_dim();
        if d != usize::MAX && x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        Ok(match self {
            BaselineModel::Knn {
                k,
                classes,
                points,
                labels,
            } => {
                // Equidistant neighbours: lower class first, then lower training index.
                let mut order: Vec<(f64, usize, usize)> = points
                    .iter()
                    .zip(labels)
                    .enumerate()
                    .map(|(i, (p, l))| (sq_dist(p, x), l.0, i))
                    .collect();
                let k = (*k).min(order.len());
                order.select_nth_unstable_by(k - 1, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
                });
                let mut votes = vec![0.0; *classes];
                for &(_, c, _) in &order[..k] {
                    votes[c] += 1.0 / k as f64;
                }
                votes
            }
            BaselineModel::GaussianNb {
                priors,
                means,
                variances,
            } => (0..priors.len())
                .map(|c| {
                    if priors[c] == 0.0 {
                        return f64::NEG_INFINITY;
                    }
                    let mut s = priors[c].ln();
                    for j in 0..x.len() {
                        let v = variances[c][j];
                        let dv = x[j] - means[c][j];
                        s += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - dv * dv / (2.0 * v);
                    }
                    s
                })
                .collect(),
            BaselineModel::Lda {
                coef, intercept, ..
            } => coef
                .iter()
                .zip(intercept)
                .map(|(a, b)| dot(a, x) + b)
                .collect(),
            BaselineModel::LinearSvm { weights } => weights
                .iter()
                .map(|w| dot(&w[..x.len()], x) + w[x.len()])
                .collect(),
            BaselineModel::BaggedTrees { classes, trees } => {
                let mut votes = vec![0.0; *classes];
                for t in trees {
                    votes[t.predict(x).0] += 1.0;
                }
                votes.iter_mut().for_each(|v| *v /= trees.len() as f64);
                votes
            }
        })
    }

    /// Label and score vector. Naive Bayes and LDA scores are normalized posteriors.
    pub fn predict(&self, x: &[f64]) -> Result<(ClassLabel, Vec<f64>)> {
        let raw = self.decision_scores(x)?;
        let label = ClassLabel(argmax(&raw));
        let scores = match self {
            BaselineModel::GaussianNb { .. } | BaselineModel::Lda { .. } => normalize_log(&raw),
            _ => raw,
        };
        Ok((label, scores))
    }
}

/// Labels for every pool sample plus per-class counts.
pub fn classify_all(
    model: &BaselineModel,
    pool: &Dataset,
) -> Result<(Vec<ClassLabel>, Vec<usize>)> {
    let labels: Vec<ClassLabel> = pool
        .samples()
        .par_iter()
        .map(|s| model.predict(&s.features).map(|(l, _)| l))
        .collect::<Result<_>>()?;
    let mut counts = vec![0usize; model.classes()];
    for l in &labels {
        counts[l.0] += 1;
    }
    Ok((labels, counts))
}

fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logs.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
