//! Seeded synthetic well-log-shaped data with known ground truth.
//!
//! Each class is a diagonal Gaussian. The unlabelled pool is returned
//! without labels; its true classes travel separately in [`SynthData::truth`].

use std::io::Write;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ClassLabel, Dataset, LabelSet, Sample};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub labeled: usize,
    pub unlabeled: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dim: usize,
    pub labels: LabelSet,
    pub classes: Vec<ClassSpec>,
    pub seed: u64,
    /// Minimum pairwise distance between class means, in pooled-std units.
    pub separation: f64,
}

/// Expert-labelled class counts of the reference well-log set.
pub const WELL_LOG_LABELED: [usize; 4] = [162, 50, 107, 177];
/// Class skew the supervised network produced on the reference pool.
pub const WELL_LOG_POOL: [usize; 4] = [10681, 138, 128, 1207];

impl SynthConfig {
    /// Unit-variance classes whose means sit exactly `separation` apart
    /// (or more). Class `c` is shifted along the features `j` with
    /// `j % C == c`; with fewer features than classes the means lie on a line.
    pub fn separated(
        dim: usize,
        labels: LabelSet,
        labeled: &[usize],
        unlabeled: &[usize],
        separation: f64,
        seed: u64,
    ) -> Result<Self> {
        let c = labels.len();
        if labeled.len() != c || unlabeled.len() != c {
            return Err(Error::InvalidConfig(format!(
                "expected {c} labelled and unlabelled counts"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        let means: Vec<Vec<f64>> = if dim >= c {
            let width: Vec<usize> = (0..c).map(|k| (k..dim).step_by(c).count()).collect();
            let tightest = (0..c)
                .flat_map(|a| (a + 1..c).map(move |b| (a, b)))
                .map(|(a, b)| width[a] + width[b])
                .min()
                .unwrap_or(2);
            let shift = separation / (tightest as f64).sqrt();
            (0..c)
                .map(|k| {
                    (0..dim)
                        .map(|j| if j % c == k { shift } else { 0.0 })
                        .collect()
                })
                .collect()
        } else {
            (0..c)
                .map(|k| {
                    let mut m = vec![0.0; dim];
                    m[0] = k as f64 * separation;
                    m
                })
                .collect()
        };
        let classes = (0..c)
            .map(|k| ClassSpec {
                mean: means[k].clone(),
                std: vec![1.0; dim],
                labeled: labeled[k],
                unlabeled: unlabeled[k],
            })
            .collect();
        Ok(SynthConfig {
            dim,
            labels,
            classes,
            seed,
            separation,
        })
    }

    /// 17 features, {D, W, I, O}, labelled counts 162/50/107/177 and a pool
    /// skewed 10681/138/128/1207.
    pub fn well_log_shaped(separation: f64, seed: u64) -> Self {
        Self::separated(
            17,
            LabelSet::dwio(),
            &WELL_LOG_LABELED,
            &WELL_LOG_POOL,
            separation,
            seed,
        )
        .expect("static shape is valid")
    }

    /// Smallest pairwise mean distance in pooled-std units.
    pub fn achieved_separation(&self) -> f64 {
        let c = self.classes.len();
        let mut best = f64::INFINITY;
        for a in 0..c {
            for b in a + 1..c {
                let (ca, cb) = (&self.classes[a], &self.classes[b]);
                let dist = ca
                    .mean
                    .iter()
                    .zip(&cb.mean)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                let pooled_var = ca
                    .std
                    .iter()
                    .zip(&cb.std)
                    .map(|(s, t)| (s * s + t * t) / 2.0)
                    .sum::<f64>()
                    / self.dim as f64;
                best = best.min(dist / pooled_var.sqrt());
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.classes.len() != self.labels.len() {
            return bad("one class spec per label required".into());
        }
        for (k, spec) in self.classes.iter().enumerate() {
            if spec.mean.len() != self.dim || spec.std.len() != self.dim {
                return bad(format!("class {k}: mean/std width must be {}", self.dim));
            }
            if spec.std.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                return bad(format!("class {k}: standard deviations must be positive"));
            }
            if spec.mean.iter().any(|m| !m.is_finite()) {
                return bad(format!("class {k}: non-finite mean"));
            }
        }
        if !(self.separation >= 0.0) {
            return bad("separation must be >= 0".into());
        }
        let got = self.achieved_separation();
        if got + 1e-9 < self.separation {
            return bad(format!(
                "means are {got:.4} pooled stds apart, below the requested {}",
                self.separation
            ));
        }
        Ok(())
    }
}

/// Generated labelled set, unlabelled pool, and the pool's hidden classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub labeled: Dataset,
    pub pool: Dataset,
    pub truth: Vec<ClassLabel>,
}

impl SynthData {
    /// The pool with its true labels attached, for evaluation only.
    pub fn pool_with_truth(&self) -> Dataset {
        let samples = self
            .pool
            .samples()
            .iter()
            .zip(&self.truth)
            .map(|(s, &l)| Sample::labeled(s.features.clone(), l))
            .collect();
        Dataset::with_feature_names(
            self.pool.feature_names().to_vec(),
            self.pool.labels().clone(),
            samples,
            "synthetic-truth",
        )
        .expect("pool is already validated")
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut lab: Vec<Sample> = Vec::new();
    let mut pool: Vec<(Sample, ClassLabel)> = Vec::new();
    for (k, spec) in config.classes.iter().enumerate() {
        let mut rng = rng_from_seed(derive_seed(config.seed, stream::SYNTH, k as u64));
        let dists: Vec<Normal<f64>> = spec
            .mean
            .iter()
            .zip(&spec.std)
            .map(|(&m, &s)| Normal::new(m, s).expect("validated std"))
            .collect();
        let mut draw = || {
            dists
                .iter()
                .map(|d| d.sample(&mut rng))
                .collect::<Vec<f64>>()
        };
        for _ in 0..spec.labeled {
            lab.push(Sample::labeled(draw(), ClassLabel(k)));
        }
        for _ in 0..spec.unlabeled {
            pool.push((Sample::unlabeled(draw()), ClassLabel(k)));
        }
    }
    let mut rng = rng_from_seed(derive_seed(config.seed, stream::SYNTH, u64::MAX));
    lab.shuffle(&mut rng);
    pool.shuffle(&mut rng);
    let (pool, truth): (Vec<Sample>, Vec<ClassLabel>) = pool.into_iter().unzip();

    let labeled = Dataset::new(config.dim, config.labels.clone(), lab, "synthetic-labeled")?;
    let pool = Dataset::new(config.dim, config.labels.clone(), pool, "synthetic-pool")?;
    Ok(SynthData {
        labeled,
        pool,
        truth,
    })
}

/// `pool_index,label` sidecar.
pub fn write_truth_csv<W: Write>(truth: &[ClassLabel], labels: &LabelSet, w: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["pool_index", "label"])?;
    for (i, l) in truth.iter().enumerate() {
        w.write_record([i.to_string(), labels.name(*l).to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_log_shape() {
        let cfg = SynthConfig::well_log_shaped(6.0, 1);
        let data = generate(&cfg).unwrap();
        assert_eq!(data.labeled.len(), 496);
        assert_eq!(data.labeled.class_counts(), vec![162, 50, 107, 177]);
        assert_eq!(data.pool.len(), 12154);
        assert_eq!(data.truth.len(), 12154);
        assert!(data.pool.samples().iter().all(|s| s.label.is_none()));
        let mut counts = [0usize; 4];
        data.truth.iter().for_each(|l| counts[l.0] += 1);
        assert_eq!(counts, WELL_LOG_POOL);
        assert_eq!(data.labeled.dim(), 17);
        assert_eq!(data.labeled.feature_names()[3], "LLD");
    }

    #[test]
    fn separation_is_achieved() {
        for (d, c) in [(17, 4), (3, 4), (2, 2), (5, 3)] {
            let cfg = SynthConfig::separated(
                d,
                LabelSet::numbered(c).unwrap(),
                &vec![1; c],
                &vec![0; c],
                6.0,
                0,
            )
            .unwrap();
            assert!(cfg.achieved_separation() >= 6.0 - 1e-12, "{d} {c}");
            cfg.validate().unwrap();
        }
    }

    #[test]
    fn zero_std_rejected() {
        let mut cfg = SynthConfig::well_log_shaped(6.0, 1);
        cfg.classes[2].std[5] = 0.0;
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn unsatisfiable_separation_rejected() {
        let mut cfg = SynthConfig::well_log_shaped(6.0, 1);
        cfg.separation = 7.0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = SynthConfig::separated(
            4,
            LabelSet::numbered(2).unwrap(),
            &[10, 10],
            &[30, 30],
            3.0,
            9,
        )
        .unwrap();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let mut other = cfg.clone();
        other.seed = 10;
        assert_ne!(generate(&cfg).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn empirical_means_near_configured() {
        let cfg = SynthConfig::separated(
            5,
            LabelSet::numbered(3).unwrap(),
            &[0, 0, 0],
            &[2000, 1500, 1000],
            4.0,
            3,
        )
        .unwrap();
        let data = generate(&cfg).unwrap();
        for (k, spec) in cfg.classes.iter().enumerate() {
            let idx: Vec<usize> = (0..data.truth.len())
                .filter(|&i| data.truth[i].0 == k)
                .collect();
            let n = idx.len() as f64;
            for j in 0..5 {
                let m = idx.iter().map(|&i| data.pool.features(i)[j]).sum::<f64>() / n;
                assert!((m - spec.mean[j]).abs() <= 4.0 * spec.std[j] / n.sqrt());
            }
        }
    }
}
