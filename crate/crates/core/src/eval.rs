//! Case-level k-fold cross-validation and support-weighted metrics.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bilstm::{train, BiLstmModel, TrainConfig, TrainHistory};
use crate::encoding::{assemble_dataset, max_augmented_len, ActivityVocabulary, PrefixDataset};
use crate::error::{Error, Result};
use crate::eventlog::EventLog;
use crate::scalar::Scalar;
use crate::tensor::argmax;

/// Case ids of one fold. No case appears in more than one list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldSplit>,
}

/// Moves the last 10% of `cases` (rounded down, at least one) into a validation list.
pub fn split_validation(cases: &[String]) -> (Vec<String>, Vec<String>) {
    let n_val = (cases.len() / 10).max(1).min(cases.len());
    let cut = cases.len() - n_val;
    (cases[..cut].to_vec(), cases[cut..].to_vec())
}

/// Shuffles case ids with `seed` and cuts them into `k` contiguous test windows.
pub fn make_folds(log: &EventLog, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let n = log.len();
    if n < k {
        return Err(Error::TooFewTraces { have: n, k });
    }
    let mut cases = log.case_ids();
    cases.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = n / k + usize::from(f < n % k);
        let end = start + size;
        let test = cases[start..end].to_vec();
        let rest: Vec<String> = cases[..start]
            .iter()
            .chain(&cases[end..])
            .cloned()
            .collect();
        if rest.len() < 2 {
            return Err(Error::TooFewTraces { have: n, k });
        }
        let (train, validation) = split_validation(&rest);
        folds.push(FoldSplit {
            train,
            validation,
            test,
        });
        start = end;
    }
    Ok(FoldPlan { k, seed, folds })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricSet {
    fn values(&self) -> [f64; 4] {
        [self.accuracy, self.precision, self.recall, self.f1]
    }

    fn from_values(v: [f64; 4]) -> Self {
        Self {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub weighted: MetricSet,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision, recall and F1 (0/0 := 0) averaged with true-class support weights.
pub fn weighted_metrics(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<FoldMetrics> {
    if y_true.len() != y_pred.len() {
        return Err(Error::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&c) = y_true.iter().chain(y_pred).find(|&&c| c >= n_classes) {
        return Err(Error::ShapeMismatch(format!(
            "class {c} outside {n_classes} classes"
        )));
    }
    let mut tp = vec![0usize; n_classes];
    let mut predicted = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        support[t] += 1;
        predicted[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let total = y_true.len() as f64;
    let mut weighted = MetricSet {
        accuracy: ratio(tp.iter().sum(), y_true.len()),
        ..MetricSet::default()
    };
    let per_class: Vec<ClassMetrics> = (0..n_classes)
        .map(|c| {
            let precision = ratio(tp[c], predicted[c]);
            let recall = ratio(tp[c], support[c]);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: support[c],
            }
        })
        .collect();
    for m in &per_class {
        let w = m.support as f64 / total;
        weighted.precision += w * m.precision;
        weighted.recall += w * m.recall;
        weighted.f1 += w * m.f1;
    }
    Ok(FoldMetrics {
        weighted,
        per_class,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub folds: Vec<FoldMetrics>,
    pub avg: MetricSet,
    /// Sample standard deviation across folds (n - 1 denominator).
    pub sd: MetricSet,
}

impl MetricsReport {
    pub fn from_folds(folds: Vec<FoldMetrics>) -> Self {
        let n = folds.len() as f64;
        let mut mean = [0.0; 4];
        for f in &folds {
            for (m, v) in mean.iter_mut().zip(f.weighted.values()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 4];
        if folds.len() > 1 {
            for f in &folds {
                for ((s, v), m) in var.iter_mut().zip(f.weighted.values()).zip(mean) {
                    *s += (v - m) * (v - m) / (n - 1.0);
                }
            }
        }
        Self {
            folds,
            avg: MetricSet::from_values(mean),
            sd: MetricSet::from_values(var.map(f64::sqrt)),
        }
    }

    /// `fold,accuracy,precision,recall,f1` with `AVG` and `SD` rows.
    pub fn to_csv(&self) -> String {
        let row = |name: &str, m: &MetricSet| {
            format!(
                "{name},{:.6},{:.6},{:.6},{:.6}\n",
                m.accuracy, m.precision, m.recall, m.f1
            )
        };
        let mut out = String::from("fold,accuracy,precision,recall,f1\n");
        for (i, f) in self.folds.iter().enumerate() {
            out.push_str(&row(&(i + 1).to_string(), &f.weighted));
        }
        out.push_str(&row("AVG", &self.avg));
        out.push_str(&row("SD", &self.sd));
        out
    }
}

/// Predicted class for every sample, in order.
pub fn predict_dataset<T: Scalar>(
    model: &BiLstmModel<T>,
    data: &PrefixDataset,
) -> Result<Vec<usize>> {
    data.samples
        .par_iter()
        .map(|s| Ok(argmax(&model.forward_sample(s)?.probs)))
        .collect()
}

pub struct CvOutcome<T> {
    pub report: MetricsReport,
    pub plan: FoldPlan,
    pub models: Vec<BiLstmModel<T>>,
    pub histories: Vec<TrainHistory>,
    /// Index of the fold whose model reached the highest weighted F1.
    pub best_fold: usize,
}

/// Trains one model per fold and scores every test prefix, end label included.
///
/// Fold `f` trains with seed `train_config.seed + f`.
pub fn run_cv<T: Scalar>(
    log: &EventLog,
    train_config: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<CvOutcome<T>> {
    train_config.validate()?;
    let plan = make_folds(log, k, seed)?;
    let vocab = ActivityVocabulary::build(log)?;
    let max_len = max_augmented_len(log);

    let results: Vec<(FoldMetrics, BiLstmModel<T>, TrainHistory)> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(f, split)| {
            let data = |cases: &[String]| assemble_dataset(&log.subset(cases), &vocab, max_len);
            let (train_ds, val_ds, test_ds) = (
                data(&split.train)?,
                data(&split.validation)?,
                data(&split.test)?,
            );
            let config = TrainConfig {
                seed: train_config.seed.wrapping_add(f as u64),
                ..train_config.clone()
            };
            let (model, history) = train::<T>(&train_ds, &val_ds, &vocab, &config)?;
            let y_pred = predict_dataset(&model, &test_ds)?;
            let metrics = weighted_metrics(&test_ds.labels(), &y_pred, vocab.len())?;
            log::info!(
                "fold {}: accuracy {:.4}, f1 {:.4}, {} epochs",
                f + 1,
                metrics.weighted.accuracy,
                metrics.weighted.f1,
                history.epochs.len()
            );
            Ok((metrics, model, history))
        })
        .collect::<Result<_>>()?;

    let mut folds = Vec::with_capacity(k);
    let mut models = Vec::with_capacity(k);
    let mut histories = Vec::with_capacity(k);
    for (m, model, h) in results {
        folds.push(m);
        models.push(model);
        histories.push(h);
    }
    let mut best_fold = 0;
    for (i, f) in folds.iter().enumerate() {
        if f.weighted.f1 > folds[best_fold].weighted.f1 {
            best_fold = i;
        }
    }
    Ok(CvOutcome {
        report: MetricsReport::from_folds(folds),
        plan,
        models,
        histories,
        best_fold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eventlog::Trace;
    use std::collections::HashSet;

    fn log_n(n: usize) -> EventLog {
        EventLog::new(
            (0..n)
                .map(|i| Trace::from_activities(&format!("c{i}"), &["A", "B"]).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ten_cases_ten_folds() {
        let plan = make_folds(&log_n(10), 10, 3).unwrap();
        assert_eq!(plan.folds.len(), 10);
        for f in &plan.folds {
            assert_eq!(f.test.len(), 1);
            assert_eq!(f.validation.len(), 1);
            assert_eq!(f.train.len(), 8);
        }
        assert_eq!(plan, make_folds(&log_n(10), 10, 3).unwrap());
    }

    #[test]
    fn fold_errors() {
        assert!(matches!(
            make_folds(&log_n(3), 4, 0),
            Err(Error::TooFewTraces { have: 3, k: 4 })
        ));
        assert!(matches!(
            make_folds(&log_n(3), 2, 0),
            Err(Error::TooFewTraces { .. })
        ));
        assert!(make_folds(&log_n(5), 1, 0).is_err());
    }

    #[test]
    fn validation_carve_out() {
        let cases: Vec<String> = (0..25).map(|i| i.to_string()).collect();
        let (t, v) = split_validation(&cases);
        assert_eq!((t.len(), v.len()), (23, 2));
        assert_eq!(v, ["23", "24"]);
        let (t, v) = split_validation(&cases[..5]);
        assert_eq!((t.len(), v.len()), (4, 1));
    }

    #[test]
    fn hand_example() {
        let m = weighted_metrics(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(m.weighted.accuracy, 0.75);
        let c0 = &m.per_class[0];
        let c1 = &m.per_class[1];
        assert_eq!((c0.precision, c0.recall), (1.0, 0.5));
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((c1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c1.recall, 1.0);
        assert!((c1.f1 - 0.8).abs() < 1e-15);
        assert!((m.weighted.f1 - (0.5 * 2.0 / 3.0 + 0.5 * 0.8)).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = weighted_metrics(&[0, 1, 2], &[0, 1, 2], 4).unwrap();
        assert_eq!(
            m.weighted,
            MetricSet {
                accuracy: 1.0,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0
            }
        );
        assert_eq!(
            m.per_class[3],
            ClassMetrics {
                precision: 0.0,
                recall: 0.0,
                f1: 0.0,
                support: 0
            }
        );
        assert!(matches!(
            weighted_metrics(&[0], &[0, 1], 2),
            Err(Error::LengthMismatch(1, 2))
        ));
    }

    #[test]
    fn report_rows() {
        let fold = |a: f64| FoldMetrics {
            weighted: MetricSet {
                accuracy: a,
                precision: a,
                recall: a,
                f1: a,
            },
            per_class: vec![],
        };
        let r = MetricsReport::from_folds(vec![fold(0.8), fold(0.9), fold(1.0)]);
        assert!((r.avg.accuracy - 0.9).abs() < 1e-12);
        assert!((r.sd.f1 - 0.1).abs() < 1e-12);
        let csv = r.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "fold,accuracy,precision,recall,f1");
        assert_eq!(lines.len(), 6);
        assert!(lines[4].starts_with("AVG,0.900000"));
        assert!(lines[5].starts_with("SD,0.100000"));
    }

    proptest::proptest! {
        #[test]
        fn folds_partition_cases(n in 4usize..60, k in 2usize..8, seed in 0u64..1000) {
            proptest::prop_assume!(n >= k + 2);
            let log = log_n(n);
            let plan = make_folds(&log, k, seed).unwrap();
            let mut all_test = HashSet::new();
            for f in &plan.folds {
                let train: HashSet<_> = f.train.iter().collect();
                let val: HashSet<_> = f.validation.iter().collect();
                let test: HashSet<_> = f.test.iter().collect();
                proptest::prop_assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
                proptest::prop_assert_eq!(train.len() + val.len() + test.len(), n);
                for c in &f.test {
                    proptest::prop_assert!(all_test.insert(c.clone()));
                }
            }
            proptest::prop_assert_eq!(all_test.len(), n);
        }

        #[test]
        fn weighted_accuracy_is_micro_accuracy(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..80)
        ) {
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let m = weighted_metrics(&t, &p, 5).unwrap();
            let micro = t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / t.len() as f64;
            proptest::prop_assert!((m.weighted.accuracy - micro).abs() < 1e-15);
            // support-weighted recall is micro accuracy as well
            proptest::prop_assert!((m.weighted.recall - micro).abs() < 1e-12);
            for v in [m.weighted.precision, m.weighted.recall, m.weighted.f1] {
                proptest::prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            }
        }
    }
}
