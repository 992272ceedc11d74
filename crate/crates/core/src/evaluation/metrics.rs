use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{BinaryLabel, Task, TaskLabel, UnifiedCategory};
use crate::prompting::option_order;

/// Confusion counts. Failures (unparseable or missing completions) are
/// booked against the gold class: a failed illicit item is a false
/// negative, a failed benign item a false positive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Confusion {
    Binary {
        tp: usize,
        fp: usize,
        tn: usize,
        #[serde(rename = "fn")]
        fn_: usize,
    },
    /// `matrix[gold][predicted]`; the extra last column counts failures.
    Multiclass {
        labels: Vec<String>,
        matrix: Vec<Vec<usize>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub n: usize,
    pub n_failures: usize,
    /// Zero-denominator cases and similar conditions.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize, what: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0 {
        flags.push(format!("{what}_undefined"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Metrics of a binary confusion matrix.
    pub fn from_binary_counts(
        tp: usize,
        fp: usize,
        tn: usize,
        fn_: usize,
        n_failures: usize,
    ) -> Metrics {
        let mut flags = Vec::new();
        let precision = ratio(tp, tp + fp, "precision", &mut flags);
        let recall = ratio(tp, tp + fn_, "recall", &mut flags);
        let fpr = ratio(fp, fp + tn, "fpr", &mut flags);
        let n = tp + fp + tn + fn_;
        let accuracy = ratio(tp + tn, n, "accuracy", &mut flags);
        Metrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
            fpr,
            accuracy,
            confusion: Confusion::Binary { tp, fp, tn, fn_ },
            n,
            n_failures,
            flags,
        }
    }

    pub fn get(&self, metric: MetricName) -> f64 {
        match metric {
            MetricName::Precision => self.precision,
            MetricName::Recall => self.recall,
            MetricName::F1 => self.f1,
            MetricName::Fpr => self.fpr,
            MetricName::Accuracy => self.accuracy,
        }
    }
}

/// Scores `(gold, predicted)` pairs; `None` marks a failed prediction.
///
/// Binary tasks use `positive` as the positive class. Multiclass tasks
/// report macro precision/recall/F1 over the gold classes present, and FPR
/// as the share of benign items not predicted benign.
pub fn compute_metrics(
    pairs: &[(TaskLabel, Option<TaskLabel>)],
    positive: TaskLabel,
) -> Result<Metrics, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty("predictions"));
    }
    let task = positive.task();
    if let Some((g, _)) = pairs
        .iter()
        .find(|(g, p)| g.task() != task || p.is_some_and(|p| p.task() != task))
    {
        return Err(EvalError::TaskMismatch(g.to_string()));
    }
    let n_failures = pairs.iter().filter(|(_, p)| p.is_none()).count();
    match task {
        Task::Binary => {
            let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
            for (gold, pred) in pairs {
                let gold_pos = *gold == positive;
                // a failure is always wrong
                let pred_pos = match pred {
                    Some(p) => *p == positive,
                    None => !gold_pos,
                };
                match (gold_pos, pred_pos) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fn_ += 1,
                }
            }
            Ok(Metrics::from_binary_counts(tp, fp, tn, fn_, n_failures))
        }
        Task::Multiclass => Ok(multiclass(pairs, n_failures)),
    }
}

fn multiclass(pairs: &[(TaskLabel, Option<TaskLabel>)], n_failures: usize) -> Metrics {
    let classes = option_order(Task::Multiclass);
    let pos = |l: &TaskLabel| {
        classes
            .iter()
            .position(|c| c == l)
            .expect("multiclass label")
    };
    let c = classes.len();
    let mut matrix = vec![vec![0usize; c + 1]; c];
    for (gold, pred) in pairs {
        let col = pred.as_ref().map(pos).unwrap_or(c);
        matrix[pos(gold)][col] += 1;
    }
    let mut flags = Vec::new();
    let (mut p_sum, mut r_sum, mut f_sum, mut present) = (0.0, 0.0, 0.0, 0usize);
    for (i, class) in classes.iter().enumerate() {
        let support: usize = matrix[i].iter().sum();
        if support == 0 {
            continue;
        }
        present += 1;
        let predicted: usize = matrix.iter().map(|row| row[i]).sum();
        let tp = matrix[i][i];
        let p = ratio(tp, predicted, &format!("precision[{class}]"), &mut flags);
        let r = tp as f64 / support as f64;
        p_sum += p;
        r_sum += r;
        f_sum += f1_score(p, r);
    }
    let benign = pos(&TaskLabel::Category(UnifiedCategory::Benign));
    let benign_support: usize = matrix[benign].iter().sum();
    let fpr = ratio(
        benign_support - matrix[benign][benign],
        benign_support,
        "fpr",
        &mut flags,
    );
    let correct: usize = (0..c).map(|i| matrix[i][i]).sum();
    let present = present as f64;
    Metrics {
        precision: p_sum / present,
        recall: r_sum / present,
        f1: f_sum / present,
        fpr,
        accuracy: correct as f64 / pairs.len() as f64,
        confusion: Confusion::Multiclass {
            labels: classes.iter().map(|l| l.to_string()).collect(),
            matrix,
        },
        n: pairs.len(),
        n_failures,
        flags,
    }
}

/// Positive class used when scoring a task.
pub fn default_positive(task: Task) -> TaskLabel {
    match task {
        Task::Binary => TaskLabel::Binary(BinaryLabel::Illicit),
        // unused by the macro computation
        Task::Multiclass => TaskLabel::Category(UnifiedCategory::Benign),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricName {
    Precision,
    Recall,
    F1,
    Fpr,
    Accuracy,
}

impl MetricName {
    pub const ALL: [MetricName; 5] = [
        MetricName::Precision,
        MetricName::Recall,
        MetricName::F1,
        MetricName::Fpr,
        MetricName::Accuracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Precision => "precision",
            MetricName::Recall => "recall",
            MetricName::F1 => "f1",
            MetricName::Fpr => "fpr",
            MetricName::Accuracy => "accuracy",
        }
    }

    /// Column heading in rendered tables.
    pub fn heading(self) -> &'static str {
        match self {
            MetricName::Precision => "Prec.",
            MetricName::Recall => "Rec.",
            MetricName::F1 => "F1",
            MetricName::Fpr => "FPR",
            MetricName::Accuracy => "Acc.",
        }
    }
}

/// Mean and sample standard deviation (n − 1 denominator; 0 for a single
/// value).
pub fn mean_std(values: &[f64]) -> Result<(f64, f64), EvalError> {
    if values.is_empty() {
        return Err(EvalError::Empty("values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: BTreeMap<MetricName, f64>,
    pub std: BTreeMap<MetricName, f64>,
    /// Always "sample" (n − 1 denominator).
    pub std_kind: String,
    pub n_seeds: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

pub fn aggregate_seeds(per_seed: &[Metrics]) -> Result<MetricSummary, EvalError> {
    if per_seed.is_empty() {
        return Err(EvalError::Empty("per-seed metrics"));
    }
    let mut mean = BTreeMap::new();
    let mut std = BTreeMap::new();
    for m in MetricName::ALL {
        let values: Vec<f64> = per_seed.iter().map(|s| s.get(m)).collect();
        let (mu, sd) = mean_std(&values)?;
        mean.insert(m, mu);
        std.insert(m, sd);
    }
    let mut flags = Vec::new();
    if per_seed.len() == 1 {
        flags.push("single_seed: std is 0 by definition".to_string());
    }
    Ok(MetricSummary {
        mean,
        std,
        std_kind: "sample".into(),
        n_seeds: per_seed.len(),
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use BinaryLabel::*;

    fn b(l: BinaryLabel) -> TaskLabel {
        TaskLabel::Binary(l)
    }

    fn pairs(
        spec: &[(BinaryLabel, Option<BinaryLabel>, usize)],
    ) -> Vec<(TaskLabel, Option<TaskLabel>)> {
        spec.iter()
            .flat_map(|(g, p, n)| std::iter::repeat_n((b(*g), p.map(b)), *n))
            .collect()
    }

    #[test]
    fn f1_fixtures() {
        assert!((f1_score(0.9232, 0.9554) - 0.9390).abs() < 5e-4);
        assert!((f1_score(0.9382, 0.9474) - 0.9428).abs() < 5e-4);
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn perfect_classifier() {
        let m = compute_metrics(
            &pairs(&[(Illicit, Some(Illicit), 5), (Benign, Some(Benign), 5)]),
            b(Illicit),
        )
        .unwrap();
        assert_eq!(
            (m.precision, m.recall, m.f1, m.accuracy, m.fpr),
            (1.0, 1.0, 1.0, 1.0, 0.0)
        );
    }

    #[test]
    fn constant_illicit() {
        let m = compute_metrics(
            &pairs(&[(Illicit, Some(Illicit), 4), (Benign, Some(Illicit), 4)]),
            b(Illicit),
        )
        .unwrap();
        assert_eq!((m.recall, m.fpr, m.accuracy), (1.0, 1.0, 0.5));
    }

    #[test]
    fn failures_count_against_gold() {
        let m =
            compute_metrics(&pairs(&[(Illicit, None, 1), (Benign, None, 1)]), b(Illicit)).unwrap();
        assert_eq!(
            m.confusion,
            Confusion::Binary {
                tp: 0,
                fp: 1,
                tn: 0,
                fn_: 1
            }
        );
        assert_eq!(m.n_failures, 2);
        assert_eq!(m.accuracy, 0.0);
    }

    #[test]
    fn zero_denominators_flagged() {
        let m = compute_metrics(&pairs(&[(Benign, Some(Benign), 3)]), b(Illicit)).unwrap();
        assert_eq!(m.precision, 0.0);
        assert!(m.flags.iter().any(|f| f == "precision_undefined"));
        assert!(m.flags.iter().any(|f| f == "recall_undefined"));
    }

    #[test]
    fn empty_input_errors() {
        assert!(compute_metrics(&[], b(Illicit)).is_err());
        assert!(aggregate_seeds(&[]).is_err());
    }

    #[test]
    fn multiclass_macro() {
        use UnifiedCategory::*;
        let c = TaskLabel::Category;
        let p = vec![
            (c(Drug), Some(c(Drug))),
            (c(Drug), Some(c(Gambling))),
            (c(Gambling), Some(c(Gambling))),
            (c(Benign), None),
        ];
        let m = compute_metrics(&p, default_positive(Task::Multiclass)).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.fpr, 1.0);
        // drug p=1 r=.5, gambling p=.5 r=1, benign p=0 (flagged) r=0
        assert!((m.precision - 0.5).abs() < 1e-12);
        assert!((m.recall - 0.5).abs() < 1e-12);
        assert!((m.f1 - (2.0 / 3.0 * 2.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn seed_aggregation() {
        let with_f1 = |f1: f64| Metrics {
            f1,
            ..Metrics::from_binary_counts(1, 0, 1, 0, 0)
        };
        let s = aggregate_seeds(&[with_f1(0.9), with_f1(0.9), with_f1(0.9)]).unwrap();
        assert!((s.mean[&MetricName::F1] - 0.9).abs() < 1e-12);
        assert!(s.std[&MetricName::F1].abs() < 1e-12);
        let s = aggregate_seeds(&[with_f1(0.8), with_f1(1.0)]).unwrap();
        assert!((s.mean[&MetricName::F1] - 0.9).abs() < 1e-12);
        assert!((s.std[&MetricName::F1] - 0.02f64.sqrt()).abs() < 1e-12);
        let s = aggregate_seeds(&[with_f1(0.7)]).unwrap();
        assert_eq!(s.std[&MetricName::F1], 0.0);
        assert_eq!(s.flags.len(), 1);
    }
}
