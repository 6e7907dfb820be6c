//! Tabular well-log data: samples, label sets, CSV ingestion, min-max
//! normalization, stratified k-fold splitting and oversampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Attribute names of the reference 17-column well-log schema.
pub const WELL_LOG_ATTRIBUTES: [&str; 17] = [
    "DEPTH", "R2.5", "R0.5", "LLD", "LLS", "CNL", "AC", "CAL", "CAL1", "CAL2", "CALC", "DEVI",
    "AZIM", "CL", "GR", "SH", "TEMP",
];

/// Index of a class within a [`LabelSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLabel(pub usize);

impl ClassLabel {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered, unique class display names. The index of a name is its class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidConfig(
                "a label set needs at least two classes".into(),
            ));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if n.is_empty() || n.contains(',') {
                return Err(Error::InvalidConfig(format!("bad class name {n:?}")));
            }
            if !seen.insert(n.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate class name {n:?}")));
            }
        }
        Ok(LabelSet { names })
    }

    /// Dry, water, inferior and oil layers.
    pub fn dwio() -> Self {
        LabelSet {
            names: ["D", "W", "I", "O"].iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Classes named `C0`, `C1`, ...
    pub fn numbered(count: usize) -> Result<Self> {
        Self::new((0..count).map(|i| format!("C{i}")))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, label: ClassLabel) -> &str {
        &self.names[label.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Case-sensitive lookup.
    pub fn parse(&self, token: &str) -> Option<ClassLabel> {
        self.names.iter().position(|n| n == token).map(ClassLabel)
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassLabel> {
        (0..self.names.len()).map(ClassLabel)
    }
}

impl TryFrom<Vec<String>> for LabelSet {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelSet::new(names)
    }
}

impl From<LabelSet> for Vec<String> {
    fn from(set: LabelSet) -> Self {
        set.names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Option<ClassLabel>,
}

impl Sample {
    pub fn labeled(features: Vec<f64>, label: ClassLabel) -> Self {
        Sample {
            features,
            label: Some(label),
        }
    }

    pub fn unlabeled(features: Vec<f64>) -> Self {
        Sample {
            features,
            label: None,
        }
    }
}

/// An ordered collection of samples sharing one feature width and label set.
///
/// Construction validates widths, finiteness and label indices, so every
/// `Dataset` in circulation upholds them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
    dim: usize,
    feature_names: Vec<String>,
    labels: LabelSet,
    provenance: String,
}

impl Dataset {
    pub fn new(
        dim: usize,
        labels: LabelSet,
        samples: Vec<Sample>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let names = default_feature_names(dim);
        Self::with_feature_names(names, labels, samples, provenance)
    }

    pub fn with_feature_names(
        feature_names: Vec<String>,
        labels: LabelSet,
        samples: Vec<Sample>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let dim = feature_names.len();
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "feature width must be positive".into(),
            ));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.features.len(),
                });
            }
            if let Some(j) = s.features.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: i,
                    column: feature_names[j].clone(),
                    value: s.features[j].to_string(),
                });
            }
            if let Some(l) = s.label {
                if l.0 >= labels.len() {
                    return Err(Error::UnknownLabel {
                        row: i,
                        token: l.0.to_string(),
                    });
                }
            }
        }
        Ok(Dataset {
            samples,
            dim,
            feature_names,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn empty_like(&self) -> Self {
        Dataset {
            samples: Vec::new(),
            dim: self.dim,
            feature_names: self.feature_names.clone(),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn set_provenance(&mut self, tag: impl Into<String>) {
        self.provenance = tag.into();
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, i: usize) -> &Sample {
        &self.samples[i]
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.samples[i].features
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    /// Appends a sample after the same validation `new` performs.
    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.features.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: sample.features.len(),
            });
        }
        if let Some(j) = sample.features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: self.samples.len(),
                column: self.feature_names[j].clone(),
                value: sample.features[j].to_string(),
            });
        }
        if let Some(l) = sample.label {
            if l.0 >= self.labels.len() {
                return Err(Error::UnknownLabel {
                    row: self.samples.len(),
                    token: l.0.to_string(),
                });
            }
        }
        self.samples.push(sample);
        Ok(())
    }

    /// Labels of every sample, failing on the first unlabelled one.
    pub fn require_labels(&self) -> Result<Vec<ClassLabel>> {
        self.samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.label.ok_or(Error::Unlabeled(i)))
            .collect()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.label.is_some())
    }

    /// Per-class counts over the labelled samples.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.labels.len()];
        for l in self.samples.iter().filter_map(|s| s.label) {
            counts[l.0] += 1;
        }
        counts
    }

    /// Splits into (labelled, unlabelled), each keeping file order.
    pub fn split_labeled(&self) -> (Dataset, Dataset) {
        let (lab, unlab): (Vec<_>, Vec<_>) = self
            .samples
            .iter()
            .cloned()
            .partition(|s| s.label.is_some());
        let mut a = self.empty_like();
        a.samples = lab;
        let mut b = self.empty_like();
        b.samples = unlab;
        (a, b)
    }

    /// New dataset of the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut out = self.empty_like();
        out.samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        out
    }

    /// Concatenates `other` after `self`. Both must agree on width and labels.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if other.labels != self.labels {
            return Err(Error::InvalidConfig("label sets differ".into()));
        }
        let mut out = self.clone();
        out.samples.extend(other.samples.iter().cloned());
        Ok(out)
    }

    /// Same samples with every label removed.
    pub fn without_labels(&self) -> Dataset {
        let mut out = self.clone();
        for s in &mut out.samples {
            s.label = None;
        }
        out
    }
}

pub fn default_feature_names(dim: usize) -> Vec<String> {
    if dim == WELL_LOG_ATTRIBUTES.len() {
        WELL_LOG_ATTRIBUTES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..dim).map(|j| format!("x{j}")).collect()
    }
}

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Expected feature count; `None` accepts whatever the header declares.
    pub dim: Option<usize>,
    /// Name of the label column, if the file carries one.
    pub label_column: Option<String>,
    pub labels: LabelSet,
}

impl CsvSchema {
    pub fn new(dim: Option<usize>, label_column: Option<&str>, labels: LabelSet) -> Self {
        CsvSchema {
            dim,
            label_column: label_column.map(str::to_string),
            labels,
        }
    }

    /// 17 attributes plus a `label` column over {D, W, I, O}.
    pub fn well_log() -> Self {
        Self::new(Some(17), Some("label"), LabelSet::dwio())
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ds = read_csv(file, schema)?;
    ds.set_provenance(path.display().to_string());
    Ok(ds)
}

/// Parses dataset CSV from any reader. Row numbers in errors are file line numbers.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let label_idx = match &schema.label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))?,
        ),
        None => None,
    };
    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&j| Some(j) != label_idx)
        .collect();
    if let Some(d) = schema.dim {
        if feature_cols.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: feature_cols.len(),
            });
        }
    }
    let names: Vec<String> = feature_cols.iter().map(|&j| header[j].clone()).collect();

    let mut samples = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record
            .position()
            .map_or(samples.len() + 2, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let mut features = Vec::with_capacity(feature_cols.len());
        for &j in &feature_cols {
            let raw = &record[j];
            let v: f64 = raw.parse().map_err(|_| Error::NonNumeric {
                row,
                column: header[j].clone(),
                value: raw.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row,
                    column: header[j].clone(),
                    value: raw.to_string(),
                });
            }
            features.push(v);
        }
        let label = match label_idx {
            Some(j) if !record[j].is_empty() => {
                let token = &record[j];
                Some(
                    schema
                        .labels
                        .parse(token)
                        .ok_or_else(|| Error::UnknownLabel {
                            row,
                            token: token.to_string(),
                        })?,
                )
            }
            _ => None,
        };
        samples.push(Sample { features, label });
    }

    Dataset::with_feature_names(names, schema.labels.clone(), samples, "csv")
}

/// Writes features plus a trailing `label` column (empty for unlabelled rows).
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, file)
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.feature_names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(data.dim + 1);
    for s in &data.samples {
        row.clear();
        row.extend(s.features.iter().map(|v| v.to_string()));
        row.push(
            s.label
                .map_or(String::new(), |l| data.labels.name(l).to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMethod {
    #[default]
    MinMax,
    ZScore,
}

/// Per-feature scaling statistics.
///
/// Serialized as `{"min": [...], "max": [...]}`; z-score statistics are only
/// present when that method was used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<Vec<f64>>,
}

impl NormParams {
    pub fn method(&self) -> NormMethod {
        if self.mean.is_some() {
            NormMethod::ZScore
        } else {
            NormMethod::MinMax
        }
    }

    /// Features with zero spread; these map to 0.0.
    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.min.len())
            .filter(|&j| self.max[j] <= self.min[j])
            .collect()
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        match (&self.mean, &self.std) {
            (Some(mean), Some(std)) => x
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    if std[j] > 0.0 {
                        (v - mean[j]) / std[j]
                    } else {
                        0.0
                    }
                })
                .collect(),
            _ => x
                .iter()
                .enumerate()
                .map(|(j, &v)| {
                    let span = self.max[j] - self.min[j];
                    if span > 0.0 {
                        (v - self.min[j]) / span
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }

    /// Applies the stored scaling to every sample of `data`.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        if data.dim() != self.min.len() {
            return Err(Error::DimensionMismatch {
                expected: self.min.len(),
                got: data.dim(),
            });
        }
        let mut out = data.clone();
        for s in &mut out.samples {
            s.features = self.transform(&s.features);
        }
        Ok(out)
    }
}

/// Min-max scales each feature to [0, 1] using statistics over every sample.
pub fn normalize(data: &Dataset) -> Result<(Dataset, NormParams)> {
    normalize_with(data, NormMethod::MinMax)
}

pub fn normalize_with(data: &Dataset, method: NormMethod) -> Result<(Dataset, NormParams)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = data.dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for s in &data.samples {
        for (j, &v) in s.features.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    let mut params = NormParams {
        min,
        max,
        mean: None,
        std: None,
    };
    if method == NormMethod::ZScore {
        let n = data.len() as f64;
        let mut mean = vec![0.0; d];
        for s in &data.samples {
            for (m, v) in mean.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for s in &data.samples {
            for j in 0..d {
                let dv = s.features[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        let std = var.iter().map(|v| (v / n).sqrt()).collect();
        params.mean = Some(mean);
        params.std = Some(std);
    }
    for j in params.constant_features() {
        log::warn!(
            "feature {:?} is constant; mapped to 0.0",
            data.feature_names[j]
        );
    }
    let out = params.apply(data)?;
    Ok((out, params))
}

/// One train/test partition, as indices into the source dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified k-fold split.
///
/// Members of each class are shuffled with the seeded generator and dealt
/// round-robin into folds; the dealing position carries over from one class
/// to the next so fold sizes also stay within one of each other.
pub fn stratified_kfold(labeled: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let labels = labeled.require_labels()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labeled.num_classes()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.0].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < k {
            return Err(Error::ClassTooSmall {
                class: labeled.labels().name(ClassLabel(c)).to_string(),
                count: members.len(),
                needed: k,
            });
        }
    }

    let mut rng = rng_from_seed(seed);
    let mut fold_of = vec![0usize; labeled.len()];
    let mut cursor = 0usize;
    for members in &mut by_class {
        members.shuffle(&mut rng);
        for &i in members.iter() {
            fold_of[i] = cursor % k;
            cursor += 1;
        }
    }

    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..labeled.len()).partition(|&i| fold_of[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// Brings every class up to the majority count by resampling its own members
/// with replacement. Originals come first, in order; duplicates follow.
pub fn oversample_balance(labeled: &Dataset, seed: u64) -> Result<Dataset> {
    let labels = labeled.require_labels()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); labeled.num_classes()];
    for (i, l) in labels.iter().enumerate() {
        by_class[l.0].push(i);
    }
    if let Some(c) = by_class.iter().position(Vec::is_empty) {
        return Err(Error::ClassTooSmall {
            class: labeled.labels().name(ClassLabel(c)).to_string(),
            count: 0,
            needed: 1,
        });
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng_from_seed(seed);
    let mut out = labeled.clone();
    for members in &by_class {
        for _ in members.len()..target {
            let pick = members[rng.random_range(0..members.len())];
            out.samples.push(labeled.samples[pick].clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(rows: &[(&[f64], Option<usize>)], classes: usize) -> Dataset {
        let labels = if classes == 4 {
            LabelSet::dwio()
        } else {
            LabelSet::numbered(classes).unwrap()
        };
        let samples = rows
            .iter()
            .map(|(f, l)| Sample {
                features: f.to_vec(),
                label: l.map(ClassLabel),
            })
            .collect();
        Dataset::new(rows[0].0.len(), labels, samples, "test").unwrap()
    }

    fn counts_dataset(counts: &[usize]) -> Dataset {
        let mut samples = Vec::new();
        let mut t = 0.0;
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                samples.push(Sample::labeled(vec![t, c as f64], ClassLabel(c)));
                t += 1.0;
            }
        }
        let labels = if counts.len() == 4 {
            LabelSet::dwio()
        } else {
            LabelSet::numbered(counts.len()).unwrap()
        };
        Dataset::new(2, labels, samples, "counts").unwrap()
    }

    #[test]
    fn label_set_rejects_duplicates() {
        assert!(LabelSet::new(["A", "A"]).is_err());
        assert!(LabelSet::new(["A"]).is_err());
        let s = LabelSet::dwio();
        assert_eq!(s.parse("W"), Some(ClassLabel(1)));
        assert_eq!(s.parse("w"), None);
    }

    #[test]
    fn single_row_parse() {
        let mut text = (0..17)
            .map(|j| format!("a{j}"))
            .collect::<Vec<_>>()
            .join(",");
        text.push_str(",label\n");
        let vals: Vec<String> = (0..17)
            .map(|j| if j == 16 { "2.0".into() } else { "1.0".into() })
            .collect();
        text.push_str(&vals.join(","));
        text.push_str(",O\n");
        let d = read_csv(text.as_bytes(), &CsvSchema::well_log()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.dim(), 17);
        assert_eq!(d.num_classes(), 4);
        assert_eq!(d.sample(0).label, Some(ClassLabel(3)));
        assert_eq!(d.features(0)[16], 2.0);
    }

    #[test]
    fn ragged_row_is_named() {
        let mut text = (0..17)
            .map(|j| format!("a{j}"))
            .collect::<Vec<_>>()
            .join(",");
        text.push('\n');
        text.push_str(&vec!["1"; 17].join(","));
        text.push('\n');
        text.push_str(&vec!["1"; 16].join(","));
        text.push('\n');
        let schema = CsvSchema::new(Some(17), None, LabelSet::dwio());
        match read_csv(text.as_bytes(), &schema) {
            Err(Error::RaggedRow {
                row,
                expected,
                found,
            }) => {
                assert_eq!((row, expected, found), (3, 17, 16));
            }
            other => panic!("expected ragged row, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_and_unknown_label() {
        let schema = CsvSchema::new(Some(2), Some("label"), LabelSet::dwio());
        let err = read_csv("a,b,label\n1,x,D\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::NonNumeric { row: 2, ref column, .. } if column == "b"));
        let err = read_csv("a,b,label\n1,2,d\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { row: 2, .. }));
        let err = read_csv("a,b,label\n1,nan,D\n".as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn empty_label_token_means_unlabelled() {
        let schema = CsvSchema::new(Some(2), Some("label"), LabelSet::dwio());
        let d = read_csv("a,b,label\n1,2,D\n3,4,\n".as_bytes(), &schema).unwrap();
        assert_eq!(d.sample(0).label, Some(ClassLabel(0)));
        assert_eq!(d.sample(1).label, None);
        let (l, u) = d.split_labeled();
        assert_eq!((l.len(), u.len()), (1, 1));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_csv("/nonexistent/x.csv", &CsvSchema::well_log()).unwrap_err();
        assert_eq!(err.kind(), "io");
    }

    #[test]
    fn min_max_endpoints() {
        let d = ds(&[(&[2.0], None), (&[4.0], None), (&[6.0], None)], 2);
        let (n, p) = normalize(&d).unwrap();
        let col: Vec<f64> = (0..3).map(|i| n.features(i)[0]).collect();
        assert_eq!(col, vec![0.0, 0.5, 1.0]);
        assert!(p.constant_features().is_empty());
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let d = ds(
            &[
                (&[5.0, 1.0], None),
                (&[5.0, 2.0], None),
                (&[5.0, 3.0], None),
            ],
            2,
        );
        let (n, p) = normalize(&d).unwrap();
        assert!((0..3).all(|i| n.features(i)[0] == 0.0));
        assert_eq!(p.constant_features(), vec![0]);
    }

    #[test]
    fn normalize_empty_fails() {
        let d = Dataset::new(2, LabelSet::dwio(), vec![], "e").unwrap();
        assert!(matches!(normalize(&d), Err(Error::EmptyDataset)));
    }

    #[test]
    fn norm_params_json_shape() {
        let d = ds(&[(&[2.0], None), (&[4.0], None)], 2);
        let (_, p) = normalize(&d).unwrap();
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"min":[2.0],"max":[4.0]}"#);
    }

    #[test]
    fn zscore_switch() {
        let d = ds(&[(&[1.0], None), (&[3.0], None)], 2);
        let (n, p) = normalize_with(&d, NormMethod::ZScore).unwrap();
        assert_eq!(p.method(), NormMethod::ZScore);
        assert_eq!(n.features(0)[0], -1.0);
        assert_eq!(n.features(1)[0], 1.0);
    }

    #[test]
    fn kfold_perfectly_divisible() {
        let d = counts_dataset(&[5, 5]);
        let folds = stratified_kfold(&d, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            let classes: Vec<usize> = f
                .test
                .iter()
                .map(|&i| d.sample(i).label.unwrap().0)
                .collect();
            assert_eq!(classes.iter().filter(|&&c| c == 0).count(), 1);
            assert_eq!(classes.iter().filter(|&&c| c == 1).count(), 1);
            assert_eq!(f.train.len(), 8);
        }
    }

    #[test]
    fn kfold_table_one_counts() {
        let d = counts_dataset(&[162, 50, 107, 177]);
        let folds = stratified_kfold(&d, 5, 11).unwrap();
        for f in &folds {
            let w = f
                .test
                .iter()
                .filter(|&&i| d.sample(i).label == Some(ClassLabel(1)))
                .count();
            assert_eq!(w, 10);
            let n = f.test.len();
            assert!((99..=100).contains(&n), "fold size {n}");
        }
    }

    #[test]
    fn kfold_determinism() {
        let d = counts_dataset(&[20, 20, 20]);
        let a = stratified_kfold(&d, 5, 1).unwrap();
        assert_eq!(a, stratified_kfold(&d, 5, 1).unwrap());
        assert_ne!(a, stratified_kfold(&d, 5, 2).unwrap());
    }

    #[test]
    fn kfold_errors() {
        let d = counts_dataset(&[5, 3]);
        assert!(matches!(
            stratified_kfold(&d, 5, 0),
            Err(Error::ClassTooSmall { count: 3, .. })
        ));
        let d = ds(&[(&[1.0], Some(0)), (&[2.0], None)], 2);
        assert!(matches!(
            stratified_kfold(&d, 2, 0),
            Err(Error::Unlabeled(1))
        ));
    }

    #[test]
    fn oversample_balanced_is_unchanged() {
        let d = counts_dataset(&[3, 3, 3, 3]);
        assert_eq!(oversample_balance(&d, 4).unwrap(), d);
    }

    #[test]
    fn oversample_table_one_counts() {
        let d = counts_dataset(&[162, 50, 107, 177]);
        let o = oversample_balance(&d, 9).unwrap();
        assert_eq!(o.class_counts(), vec![177, 177, 177, 177]);
        assert_eq!(&o.samples()[..d.len()], d.samples());
    }

    #[test]
    fn oversample_empty_class_fails() {
        let d = counts_dataset(&[3, 0, 2]);
        assert!(matches!(
            oversample_balance(&d, 0),
            Err(Error::ClassTooSmall { count: 0, .. })
        ));
    }
}
