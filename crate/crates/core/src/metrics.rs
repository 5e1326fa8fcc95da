//! Evaluation, confusion matrices, CSV artifacts and multi-seed summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::nn::DenseNet;
use crate::sim::AgentId;
use crate::{Error, Result};

/// Header of the per-epoch metrics CSV.
pub const METRICS_HEADER: &str = "epoch,agent,method,local_acc,remote_acc,combined_acc,loss1,loss2,messages,seconds";

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Input("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            k,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.k + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.k..(truth + 1) * self.k]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.k).map(|i| self.row(i).iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn diagonal_sum(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Accuracies restricted to `local_classes`, to the remaining classes
    /// and to everything.
    pub fn accuracies(&self, local_classes: &BTreeSet<usize>) -> Accuracies {
        let mut acc = Accuracies::default();
        for truth in 0..self.k {
            let total: u64 = self.row(truth).iter().sum();
            let correct = self.get(truth, truth);
            if local_classes.contains(&truth) {
                acc.local_correct += correct;
                acc.local_total += total;
            } else {
                acc.remote_correct += correct;
                acc.remote_total += total;
            }
        }
        acc
    }
}

/// Raw counts behind the three reported accuracies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Accuracies {
    pub local_correct: u64,
    pub local_total: u64,
    pub remote_correct: u64,
    pub remote_total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Accuracies {
    /// Zero when no test sample belongs to a local class.
    pub fn local(&self) -> f64 {
        ratio(self.local_correct, self.local_total)
    }

    /// Zero when every test sample belongs to a local class.
    pub fn remote(&self) -> f64 {
        ratio(self.remote_correct, self.remote_total)
    }

    pub fn combined(&self) -> f64 {
        ratio(
            self.local_correct + self.remote_correct,
            self.local_total + self.remote_total,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub local_acc: f64,
    pub remote_acc: f64,
    pub combined_acc: f64,
    pub counts: Accuracies,
    pub confusion: ConfusionMatrix,
}

/// Argmax predictions of `model` on `test` (ties to the lowest class).
/// Read-only on the model.
pub fn evaluate(model: &DenseNet, test: &Dataset, local_classes: &BTreeSet<usize>) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Input("evaluation on an empty test set".into()));
    }
    if model.n_classes() != test.n_classes {
        return Err(Error::Config(format!(
            "model predicts {} classes, test set has {}",
            model.n_classes(),
            test.n_classes
        )));
    }
    if let Some(c) = local_classes.iter().find(|&&c| c >= test.n_classes) {
        return Err(Error::Config(format!(
            "local class {c} outside [0, {})",
            test.n_classes
        )));
    }
    let logits = model.predict(&test.features)?;
    let mut confusion = ConfusionMatrix::new(test.n_classes);
    for (i, &truth) in test.labels.iter().enumerate() {
        confusion.record(truth, logits.argmax_row(i));
    }
    Ok(evaluation_from_confusion(confusion, local_classes))
}

pub fn evaluation_from_confusion(confusion: ConfusionMatrix, local_classes: &BTreeSet<usize>) -> Evaluation {
    let counts = confusion.accuracies(local_classes);
    Evaluation {
        local_acc: counts.local(),
        remote_acc: counts.remote(),
        combined_acc: counts.combined(),
        counts,
        confusion,
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub agent: AgentId,
    pub method: String,
    pub local_acc: f64,
    pub remote_acc: f64,
    pub combined_acc: f64,
    pub loss1: f64,
    pub loss2: f64,
    pub messages: u64,
    pub seconds: f64,
}

pub fn format_metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{:.6}",
            r.epoch,
            r.agent,
            r.method,
            r.local_acc,
            r.remote_acc,
            r.combined_acc,
            r.loss1,
            r.loss2,
            r.messages,
            r.seconds
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_metrics_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_metrics_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::Format(format!("unexpected metrics header {other:?}")));
        }
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, line)| {
            let bad = |what: &str| Error::Format(format!("metrics line {}: bad {what}", n + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(bad("field count"));
            }
            let real = |i: usize, what: &str| f[i].parse::<f64>().map_err(|_| bad(what));
            Ok(MetricsRecord {
                epoch: f[0].parse().map_err(|_| bad("epoch"))?,
                agent: AgentId(f[1].parse().map_err(|_| bad("agent"))?),
                method: f[2].to_string(),
                local_acc: real(3, "local_acc")?,
                remote_acc: real(4, "remote_acc")?,
                combined_acc: real(5, "combined_acc")?,
                loss1: real(6, "loss1")?,
                loss2: real(7, "loss2")?,
                messages: f[8].parse().map_err(|_| bad("messages"))?,
                seconds: real(9, "seconds")?,
            })
        })
        .collect()
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text)
}

/// Class-name header line followed by one line of counts per true label.
pub fn format_confusion_csv(matrix: &ConfusionMatrix, class_names: &[String]) -> Result<String> {
    if class_names.len() != matrix.n_classes() {
        return Err(Error::Input(format!(
            "{} class names for a {}-class matrix",
            class_names.len(),
            matrix.n_classes()
        )));
    }
    let mut out = class_names.join(",");
    out.push('\n');
    for i in 0..matrix.n_classes() {
        let row: Vec<String> = matrix.row(i).iter().map(u64::to_string).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_confusion_csv(matrix: &ConfusionMatrix, class_names: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_confusion_csv(matrix, class_names)?).map_err(|e| Error::io(path, e))
}

pub fn parse_confusion_csv(text: &str) -> Result<(Vec<String>, ConfusionMatrix)> {
    let mut lines = text.lines();
    let names: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Format("empty confusion file".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<u64>().map_err(|_| Error::Format(format!("bad count {v:?}"))))
                .collect::<Result<Vec<u64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = ConfusionMatrix::from_rows(&rows).map_err(|e| Error::Format(e.to_string()))?;
    if matrix.n_classes() != names.len() {
        return Err(Error::Format("confusion header does not match matrix size".into()));
    }
    Ok((names, matrix))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation; the deviation of a single value
    /// is zero.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanStd::default();
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

/// Cross-seed statistics for one (epoch, agent) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub epoch: usize,
    pub agent: AgentId,
    pub method: String,
    pub local_acc: MeanStd,
    pub remote_acc: MeanStd,
    pub combined_acc: MeanStd,
    pub loss1: MeanStd,
    pub loss2: MeanStd,
}

/// Unweighted mean and standard deviation across runs. Every run must
/// cover the same (epoch, agent, method) cells.
pub fn summarize_runs(runs: &[Vec<MetricsRecord>]) -> Result<Vec<SummaryRow>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Input("no runs to summarize".into()))?;
    let key = |r: &MetricsRecord| (r.epoch, r.agent, r.method.clone());
    let layout: Vec<_> = first.iter().map(key).collect();
    let mut cells: BTreeMap<(usize, AgentId, String), Vec<&MetricsRecord>> = BTreeMap::new();
    for (i, run) in runs.iter().enumerate() {
        let this: Vec<_> = run.iter().map(key).collect();
        if this != layout {
            return Err(Error::Input(format!("run {i} does not match the shape of run 0")));
        }
        for r in run {
            cells.entry(key(r)).or_default().push(r);
        }
    }
    Ok(layout
        .into_iter()
        .map(|k| {
            let rs = &cells[&k];
            let stat = |f: fn(&MetricsRecord) -> f64| MeanStd::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                epoch: k.0,
                agent: k.1,
                method: k.2.clone(),
                local_acc: stat(|r| r.local_acc),
                remote_acc: stat(|r| r.remote_acc),
                combined_acc: stat(|r| r.combined_acc),
                loss1: stat(|r| r.loss1),
                loss2: stat(|r| r.loss2),
            }
        })
        .collect())
}
