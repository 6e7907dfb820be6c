//! Table rendering, the mergeable JSON run report and plot-data files.
//!
//! Rows follow the classifier order of the accuracy table and columns follow
//! the label set order, so identical inputs render byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::LabelSet;
use crate::error::{Error, Result};
use crate::eval::{balance_factor, CvReport, RoutingTable, NN_SEMI_SUPERVISED, NN_SUPERVISED};
use crate::selftrain::{
    emit_dynamics, write_accuracy_csv, write_counts_csv, BucketTable, DynamicsTrace,
};

/// Row order of every classifier table.
pub const CLASSIFIER_ORDER: [&str; 7] = [
    "Discriminant analysis",
    "KNN",
    "NaiveBayes",
    "Ensembles",
    "SVM",
    NN_SUPERVISED,
    NN_SEMI_SUPERVISED,
];

fn classifier_rank(name: &str) -> usize {
    CLASSIFIER_ORDER
        .iter()
        .position(|n| *n == name)
        .unwrap_or(CLASSIFIER_ORDER.len())
}

fn sort_by_classifier<T>(rows: &mut [T], name: impl Fn(&T) -> &str) {
    rows.sort_by_key(|r| classifier_rank(name(r)));
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    /// File stem, e.g. `table2`.
    pub name: String,
    pub title: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }

    /// Title line, then columns padded to a common width: the first column
    /// left-aligned, the rest right-aligned.
    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let mut width = vec![0usize; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (j, cell) in r.iter().enumerate() {
                width[j] = width[j].max(cell.chars().count());
            }
        }
        let mut out = format!("{}\n", self.title);
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let mut line = String::new();
            for (j, cell) in r.iter().enumerate() {
                if j == 0 {
                    let _ = write!(line, "{cell:<w$}", w = width[0]);
                } else {
                    let _ = write!(line, "  {cell:>w$}", w = width[j]);
                }
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

fn class_headers(labels: &LabelSet, prefix: &str) -> Vec<String> {
    labels
        .names()
        .iter()
        .map(|n| format!("{prefix}{n}"))
        .collect()
}

fn cell(train: f64, test: f64) -> String {
    format!("{train:.4}/{test:.4}")
}

/// Mean, max and min accuracy as `train/test` cells.
pub fn accuracy_table(reports: &[CvReport]) -> Table {
    let mut rows: Vec<&CvReport> = reports.iter().collect();
    sort_by_classifier(&mut rows, |r| &r.classifier);
    Table {
        name: "table2".into(),
        title: "Accuracies for training and testing on the labelled set (train/test)".into(),
        header: ["Algorithm", "Mean accuracy", "Max accuracy", "Min accuracy"]
            .map(String::from)
            .to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                let s = &r.stats;
                vec![
                    r.classifier.clone(),
                    cell(s.train_mean, s.test_mean),
                    cell(s.train_max, s.test_max),
                    cell(s.train_min, s.test_min),
                ]
            })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedCounts {
    pub classifier: String,
    pub counts: Vec<usize>,
}

/// Predicted class counts on the labelled set, closed by the expert row.
pub fn labeled_counts_table(rows: &[NamedCounts], expert: &[usize], labels: &LabelSet) -> Table {
    let mut rows: Vec<&NamedCounts> = rows.iter().collect();
    sort_by_classifier(&mut rows, |r| &r.classifier);
    let mut header = vec!["Classifier".to_string()];
    header.extend(class_headers(labels, "#"));
    let mut body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            std::iter::once(r.classifier.clone())
                .chain(r.counts.iter().map(usize::to_string))
                .collect()
        })
        .collect();
    body.push(
        std::iter::once("Expert Labelled Dataset".to_string())
            .chain(expert.iter().map(usize::to_string))
            .collect(),
    );
    Table {
        name: "table3".into(),
        title: "Classification labels on the labelled set".into(),
        header,
        rows: body,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedRouting {
    pub classifier: String,
    pub table: RoutingTable,
}

/// Where each class's misclassified samples went.
pub fn routing_report_table(rows: &[NamedRouting], labels: &LabelSet) -> Table {
    let mut rows: Vec<&NamedRouting> = rows.iter().collect();
    sort_by_classifier(&mut rows, |r| &r.classifier);
    let mut header = vec!["Classifier".to_string(), "class".to_string()];
    header.extend(labels.names().iter().cloned());
    header.push("Total of misclassified samples".into());
    let mut body = Vec::new();
    for r in rows {
        for (i, view) in r.table.report_view().into_iter().enumerate() {
            let mut line = vec![
                if i == 0 {
                    r.classifier.clone()
                } else {
                    String::new()
                },
                labels.name(crate::dataset::ClassLabel(i)).to_string(),
            ];
            line.extend(view.iter().map(usize::to_string));
            body.push(line);
        }
    }
    Table {
        name: "table4".into(),
        title: "Misclassified samples on the labelled set".into(),
        header,
        rows: body,
    }
}

/// Bucket-by-class counts in scheme order, closed by a sum row.
pub fn bucket_table(name: &str, title: &str, table: &BucketTable, labels: &LabelSet) -> Table {
    let mut header = vec![
        "Performance".to_string(),
        "Range of probability".to_string(),
        "Number of samples all in classes".to_string(),
    ];
    header.extend(class_headers(labels, "#"));
    let totals = table.row_totals();
    let mut body: Vec<Vec<String>> = (0..table.counts.len())
        .map(|b| {
            let mut line = vec![
                table.buckets[b].clone(),
                table.ranges[b].clone(),
                totals[b].to_string(),
            ];
            line.extend(table.counts[b].iter().map(usize::to_string));
            line
        })
        .collect();
    let mut sum = vec!["sum".to_string(), String::new(), table.total().to_string()];
    sum.extend(table.class_totals().iter().map(usize::to_string));
    body.push(sum);
    Table {
        name: name.into(),
        title: title.into(),
        header,
        rows: body,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirstStep {
    pub labeled_by_class: Vec<usize>,
    pub unlabeled: usize,
    pub dim: usize,
}

/// Labelled and unlabelled set sizes after the first update.
pub fn first_step_table(step: &FirstStep, labels: &LabelSet) -> Table {
    let mut header: Vec<String> = ["Dataset", "#E", "#V", "#C"].map(String::from).to_vec();
    header.extend(class_headers(labels, "#"));
    let c = labels.len().to_string();
    let mut with = vec![
        "Subset with label".to_string(),
        step.labeled_by_class.iter().sum::<usize>().to_string(),
        step.dim.to_string(),
        c.clone(),
    ];
    with.extend(step.labeled_by_class.iter().map(usize::to_string));
    let mut without = vec![
        "Subset without label".to_string(),
        step.unlabeled.to_string(),
        step.dim.to_string(),
        c,
    ];
    without.extend(std::iter::repeat_n("?".to_string(), labels.len()));
    Table {
        name: "table7".into(),
        title: "Labelled samples after the first self-training step".into(),
        header,
        rows: vec![with, without],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub classifier: String,
    pub counts: Vec<usize>,
    /// Absent when every count is zero (empty pool).
    pub balance_factor: Option<f64>,
    /// Labels shared with the reference assignment, when one was given.
    pub agreement: Option<usize>,
}

impl ComparisonRow {
    pub fn new(
        classifier: impl Into<String>,
        counts: Vec<usize>,
        agreement: Option<usize>,
    ) -> Self {
        ComparisonRow {
            classifier: classifier.into(),
            balance_factor: balance_factor(&counts).ok(),
            counts,
            agreement,
        }
    }
}

/// Pool class counts, balance factor and agreement per classifier.
pub fn comparison_table(rows: &[ComparisonRow], labels: &LabelSet) -> Table {
    let mut rows: Vec<&ComparisonRow> = rows.iter().collect();
    sort_by_classifier(&mut rows, |r| &r.classifier);
    let mut header = vec!["Classifier".to_string()];
    header.extend(
        labels
            .names()
            .iter()
            .map(|n| format!("Number of samples in class {n}")),
    );
    header.push("Balance factor".into());
    header.push("Same number".into());
    let body = rows
        .iter()
        .map(|r| {
            let mut line = vec![r.classifier.clone()];
            line.extend(r.counts.iter().map(usize::to_string));
            line.push(
                r.balance_factor
                    .map_or(String::new(), |b| format!("{b:.4}")),
            );
            line.push(r.agreement.map_or(String::new(), |a| a.to_string()));
            line
        })
        .collect();
    Table {
        name: "table8".into(),
        title: "Classification of the unlabelled pool".into(),
        header,
        rows: body,
    }
}

/// Everything a run produced that the tables and figures are built from.
/// Sections a subcommand does not compute stay empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub labels: LabelSet,
    pub dim: usize,
    #[serde(default)]
    pub cv: Vec<CvReport>,
    #[serde(default)]
    pub expert_counts: Option<Vec<usize>>,
    #[serde(default)]
    pub labeled_counts: Vec<NamedCounts>,
    #[serde(default)]
    pub routing: Vec<NamedRouting>,
    #[serde(default)]
    pub buckets_labeled: Option<BucketTable>,
    #[serde(default)]
    pub buckets_pool: Option<BucketTable>,
    #[serde(default)]
    pub first_step: Option<FirstStep>,
    #[serde(default)]
    pub comparison: Vec<ComparisonRow>,
    #[serde(default)]
    pub dynamics: Option<DynamicsTrace>,
}

fn merge_named<T: Clone>(into: &mut Vec<T>, from: &[T], key: impl Fn(&T) -> &str) {
    for item in from {
        match into.iter().position(|x| key(x) == key(item)) {
            Some(i) => into[i] = item.clone(),
            None => into.push(item.clone()),
        }
    }
}

impl RunReport {
    pub fn new(labels: LabelSet, dim: usize) -> Self {
        RunReport {
            labels,
            dim,
            cv: Vec::new(),
            expert_counts: None,
            labeled_counts: Vec::new(),
            routing: Vec::new(),
            buckets_labeled: None,
            buckets_pool: None,
            first_step: None,
            comparison: Vec::new(),
            dynamics: None,
        }
    }

    /// Fold another report in; its sections win where both have one.
    pub fn merge(&mut self, other: &RunReport) -> Result<()> {
        if self.labels != other.labels || self.dim != other.dim {
            return Err(Error::InvalidConfig(
                "reports disagree on labels or feature count".into(),
            ));
        }
        merge_named(&mut self.cv, &other.cv, |r| &r.classifier);
        merge_named(&mut self.labeled_counts, &other.labeled_counts, |r| {
            &r.classifier
        });
        merge_named(&mut self.routing, &other.routing, |r| &r.classifier);
        merge_named(&mut self.comparison, &other.comparison, |r| &r.classifier);
        for (mine, theirs) in [
            (&mut self.buckets_labeled, &other.buckets_labeled),
            (&mut self.buckets_pool, &other.buckets_pool),
        ] {
            if theirs.is_some() {
                mine.clone_from(theirs);
            }
        }
        if other.expert_counts.is_some() {
            self.expert_counts.clone_from(&other.expert_counts);
        }
        if other.first_step.is_some() {
            self.first_step.clone_from(&other.first_step);
        }
        if other.dynamics.is_some() {
            self.dynamics.clone_from(&other.dynamics);
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Every table this report has data for.
    pub fn tables(&self) -> Vec<Table> {
        let l = &self.labels;
        let mut out = Vec::new();
        if !self.cv.is_empty() {
            out.push(accuracy_table(&self.cv));
        }
        if let Some(expert) = &self.expert_counts {
            if !self.labeled_counts.is_empty() {
                out.push(labeled_counts_table(&self.labeled_counts, expert, l));
            }
        }
        if !self.routing.is_empty() {
            out.push(routing_report_table(&self.routing, l));
        }
        if let Some(b) = &self.buckets_labeled {
            out.push(bucket_table(
                "table5",
                "Class probabilities on the labelled set",
                b,
                l,
            ));
        }
        if let Some(b) = &self.buckets_pool {
            out.push(bucket_table(
                "table6",
                "Class probabilities on the unlabelled pool",
                b,
                l,
            ));
        }
        if let Some(s) = &self.first_step {
            out.push(first_step_table(s, l));
        }
        if !self.comparison.is_empty() {
            out.push(comparison_table(&self.comparison, l));
        }
        out
    }
}

pub const ALL_TABLES: [&str; 7] = [
    "table2", "table3", "table4", "table5", "table6", "table7", "table8",
];
pub const ALL_FIGURES: [&str; 4] = ["fig1.csv", "fig2.csv", "fig3.csv", "fig4.csv"];

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// What [`render`] wrote and what it could not produce.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rendered {
    pub written: Vec<PathBuf>,
    pub missing: Vec<String>,
}

/// Write every available table as `.csv` and `.txt` plus the four figure
/// files into `dir`. Artifacts the report lacks data for are listed in
/// [`Rendered::missing`].
pub fn render(report: &RunReport, dir: &Path) -> Result<Rendered> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Rendered::default();
    let tables = report.tables();
    for t in &tables {
        let csv = dir.join(format!("{}.csv", t.name));
        write_file(&csv, &csv_bytes(|b| t.write_csv(b))?)?;
        let txt = dir.join(format!("{}.txt", t.name));
        write_file(&txt, t.to_text().as_bytes())?;
        out.written.extend([csv, txt]);
    }
    for name in ALL_TABLES {
        if !tables.iter().any(|t| t.name == name) {
            out.missing.push(format!("{name}.csv"));
        }
    }

    let figs: [(&str, Option<&BucketTable>); 2] = [
        ("fig1.csv", report.buckets_labeled.as_ref()),
        ("fig2.csv", report.buckets_pool.as_ref()),
    ];
    for (name, table) in figs {
        match table {
            Some(b) => {
                let mut t = bucket_table(name, "", b, &report.labels);
                t.rows.pop();
                let path = dir.join(name);
                write_file(&path, &csv_bytes(|buf| t.write_csv(buf))?)?;
                out.written.push(path);
            }
            None => out.missing.push(name.into()),
        }
    }
    match report.dynamics.as_ref().filter(|d| !d.is_empty()) {
        Some(trace) => {
            let (counts, acc) = emit_dynamics(trace)?;
            let p3 = dir.join("fig3.csv");
            write_file(&p3, &csv_bytes(|b| write_counts_csv(&counts, b))?)?;
            let p4 = dir.join("fig4.csv");
            write_file(&p4, &csv_bytes(|b| write_accuracy_csv(&acc, b))?)?;
            out.written.extend([p3, p4]);
        }
        None => out
            .missing
            .extend(["fig3.csv".to_string(), "fig4.csv".to_string()]),
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{routing_table, AccuracyStats};
    use crate::ClassLabel;

    fn stats(v: f64) -> AccuracyStats {
        AccuracyStats {
            train_mean: 1.0,
            train_max: 1.0,
            train_min: 1.0,
            test_mean: v,
            test_max: v,
            test_min: v,
            runs: 1,
        }
    }

    fn cv(name: &str, v: f64) -> CvReport {
        CvReport {
            classifier: name.into(),
            k: 5,
            repeats: 1,
            seed: 0,
            stats: stats(v),
            runs: vec![],
            out_of_fold: vec![],
        }
    }

    #[test]
    fn accuracy_rows_follow_fixed_order() {
        let t = accuracy_table(&[
            cv(NN_SUPERVISED, 0.9703),
            cv("KNN", 0.968),
            cv("Discriminant analysis", 0.5),
        ]);
        let names: Vec<&str> = t.rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(names, ["Discriminant analysis", "KNN", NN_SUPERVISED]);
        assert_eq!(t.rows[2][1], "1.0000/0.9703");
        assert_eq!(t.rows[1][1], "1.0000/0.9680");
    }

    #[test]
    fn text_is_aligned() {
        let t = accuracy_table(&[cv("KNN", 0.968), cv(NN_SUPERVISED, 0.9703)]);
        let text = t.to_text();
        let lines: Vec<&str> = text.lines().skip(1).collect();
        let w = lines[0].len();
        assert!(lines.iter().all(|l| l.len() == w), "{text}");
    }

    #[test]
    fn routing_rows_per_class() {
        let truth: Vec<ClassLabel> = [0, 0, 1, 2, 3].map(ClassLabel).to_vec();
        let preds: Vec<ClassLabel> = [1, 0, 1, 2, 0].map(ClassLabel).to_vec();
        let rt = routing_table(&truth, &preds, 4).unwrap();
        let t = routing_report_table(
            &[NamedRouting {
                classifier: "KNN".into(),
                table: rt,
            }],
            &LabelSet::dwio(),
        );
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0], ["KNN", "D", "0", "1", "0", "0", "1"]);
        assert_eq!(t.rows[3], ["", "O", "1", "0", "0", "0", "1"]);
    }

    #[test]
    fn comparison_balance_column() {
        let rows = vec![
            ComparisonRow::new(NN_SEMI_SUPERVISED, vec![3108, 4167, 527, 4352], Some(12154)),
            ComparisonRow::new("KNN", vec![9036, 255, 102, 2761], Some(3576)),
            ComparisonRow::new("SVM", vec![8863, 234, 0, 3057], None),
        ];
        let t = comparison_table(&rows, &LabelSet::dwio());
        assert_eq!(t.rows[0][0], "KNN");
        assert_eq!(t.rows[0][5], "0.0113");
        assert_eq!(t.rows[1][5], "0.0000");
        assert_eq!(t.rows[1][6], "");
        assert_eq!(t.rows[2][5], "0.1211");
        assert_eq!(t.rows[2][6], "12154");
    }

    #[test]
    fn first_step_shape() {
        let t = first_step_table(
            &FirstStep {
                labeled_by_class: vec![162, 110, 146, 177],
                unlabeled: 12055,
                dim: 17,
            },
            &LabelSet::dwio(),
        );
        assert_eq!(
            t.rows[0],
            [
                "Subset with label",
                "595",
                "17",
                "4",
                "162",
                "110",
                "146",
                "177"
            ]
        );
        assert_eq!(
            t.rows[1],
            [
                "Subset without label",
                "12055",
                "17",
                "4",
                "?",
                "?",
                "?",
                "?"
            ]
        );
    }

    #[test]
    fn merge_prefers_newer_sections() {
        let mut a = RunReport::new(LabelSet::dwio(), 17);
        a.cv.push(cv("KNN", 0.5));
        let mut b = RunReport::new(LabelSet::dwio(), 17);
        b.cv.push(cv("KNN", 0.9));
        b.cv.push(cv("SVM", 0.8));
        a.merge(&b).unwrap();
        assert_eq!(a.cv.len(), 2);
        assert_eq!(a.cv[0].stats.test_mean, 0.9);
        let c = RunReport::new(LabelSet::numbered(4).unwrap(), 17);
        assert!(a.merge(&c).is_err());
        let back = RunReport::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn render_lists_missing() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunReport::new(LabelSet::dwio(), 17);
        r.cv.push(cv("KNN", 0.5));
        let out = render(&r, dir.path()).unwrap();
        assert!(dir.path().join("table2.csv").exists());
        assert!(dir.path().join("table2.txt").exists());
        assert!(out.missing.contains(&"fig3.csv".to_string()));
        assert!(out.missing.contains(&"table8.csv".to_string()));
        assert!(!out.missing.contains(&"table2.csv".to_string()));
    }
}
