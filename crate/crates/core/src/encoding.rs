//! Activity vocabulary, prefix generation and the padded one-hot data tensor.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::eventlog::{EventLog, Trace};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, Tensor3};

/// Reserved label appended to every trace so that termination is predictable.
pub const END_LABEL: &str = "__END__";

/// Bijection between activity labels and one-hot positions. The end symbol is last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityVocabulary {
    labels: Vec<String>,
    index_of: HashMap<String, usize>,
}

impl ActivityVocabulary {
    /// Data labels sorted lexicographically, then [`END_LABEL`].
    pub fn build(log: &EventLog) -> Result<Self> {
        if log.is_empty() {
            return Err(Error::EmptyLog);
        }
        let distinct: BTreeSet<&str> = log.traces().iter().flat_map(Trace::activities).collect();
        Self::from_data_labels(distinct.into_iter().map(str::to_string).collect())
    }

    fn from_data_labels(mut labels: Vec<String>) -> Result<Self> {
        if let Some(l) = labels.iter().find(|l| *l == END_LABEL) {
            return Err(Error::ReservedLabelCollision(l.clone()));
        }
        labels.push(END_LABEL.to_string());
        let index_of = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(Self { labels, index_of })
    }

    /// Restores a vocabulary from its serialized label list (end symbol last).
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        match labels.last() {
            Some(l) if l == END_LABEL => {}
            _ => {
                return Err(Error::CorruptModel(format!(
                    "vocabulary must end with {END_LABEL}"
                )))
            }
        }
        let data = labels[..labels.len() - 1].to_vec();
        let vocab = Self::from_data_labels(data)?;
        if vocab.index_of.len() != vocab.labels.len() {
            return Err(Error::CorruptModel(
                "vocabulary has duplicate labels".into(),
            ));
        }
        Ok(vocab)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// H: number of classes including the end symbol.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index_of.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn end_index(&self) -> usize {
        self.labels.len() - 1
    }

    pub fn encode(&self, trace: &Trace) -> Result<Vec<usize>> {
        trace
            .activities()
            .map(|a| {
                self.index_of(a).ok_or_else(|| Error::UnknownActivity {
                    label: a.to_string(),
                    case_id: trace.case_id().to_string(),
                })
            })
            .collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<&str> {
        indices.iter().map(|&i| self.label(i)).collect()
    }
}

/// Index sequence of the trace followed by the end symbol.
pub fn augment_with_end(trace: &Trace, vocab: &ActivityVocabulary) -> Result<Vec<usize>> {
    let mut seq = vocab.encode(trace)?;
    seq.push(vocab.end_index());
    Ok(seq)
}

/// All proper prefixes `seq[..k]` for `k = 1..len`, each paired with `seq[k]`.
pub fn generate_prefixes<A: Clone>(seq: &[A]) -> Vec<(Vec<A>, A)> {
    (1..seq.len())
        .map(|k| (seq[..k].to_vec(), seq[k].clone()))
        .collect()
}

/// One input sequence: the activity indices of a prefix plus its label if known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixSample {
    pub case_id: String,
    pub activities: Vec<usize>,
    pub label: Option<usize>,
}

impl PrefixSample {
    pub fn true_length(&self) -> usize {
        self.activities.len()
    }

    /// `true_length x h` one-hot rows, oldest event first.
    pub fn one_hot<T: Scalar>(&self, h: usize) -> Matrix<T> {
        let mut m = Matrix::zeros(self.activities.len(), h);
        for (t, &a) in self.activities.iter().enumerate() {
            m[(t, a)] = T::one();
        }
        m
    }

    /// `m x h` rows, left-padded with zero rows so the latest event sits in the last row.
    pub fn padded<T: Scalar>(&self, h: usize, m: usize) -> Result<Matrix<T>> {
        let k = self.activities.len();
        if k > m {
            return Err(Error::PrefixTooLong { len: k, max_len: m });
        }
        let mut out = Matrix::zeros(m, h);
        for (t, &a) in self.activities.iter().enumerate() {
            out[(m - k + t, a)] = T::one();
        }
        Ok(out)
    }
}

/// Every prefix/label pair of a log. The dense tensor view is built on demand;
/// training iterates the samples directly since padding never enters the recurrence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixDataset {
    pub samples: Vec<PrefixSample>,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl PrefixDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn true_lengths(&self) -> Vec<usize> {
        self.samples.iter().map(PrefixSample::true_length).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples
            .iter()
            .map(|s| s.label.expect("dataset samples carry labels"))
            .collect()
    }

    /// X: `|R| x M x H`, left zero padding.
    pub fn x_tensor<T: Scalar>(&self) -> Result<Tensor3<T>> {
        let mut x = Tensor3::zeros(self.samples.len(), self.max_len, self.vocab_size);
        for (i, s) in self.samples.iter().enumerate() {
            x.set_matrix(i, &s.padded(self.vocab_size, self.max_len)?)?;
        }
        Ok(x)
    }

    /// Y: `|K| x H`, one-hot labels.
    pub fn y_matrix<T: Scalar>(&self) -> Matrix<T> {
        let mut y = Matrix::zeros(self.samples.len(), self.vocab_size);
        for (i, s) in self.samples.iter().enumerate() {
            if let Some(l) = s.label {
                y[(i, l)] = T::one();
            }
        }
        y
    }
}

/// Longest trace of the log plus one for the end symbol.
pub fn max_augmented_len(log: &EventLog) -> usize {
    log.max_trace_len() + 1
}

/// Prefix samples of every trace in log order.
pub fn assemble_dataset(
    log: &EventLog,
    vocab: &ActivityVocabulary,
    max_len: usize,
) -> Result<PrefixDataset> {
    let mut samples = Vec::new();
    // single-event traces stay in the log but are never predicted from
    for trace in log.traces().iter().filter(|t| t.len() > 1) {
        let seq = augment_with_end(trace, vocab)?;
        for (prefix, label) in generate_prefixes(&seq) {
            if prefix.len() > max_len {
                return Err(Error::PrefixTooLong {
                    len: prefix.len(),
                    max_len,
                });
            }
            samples.push(PrefixSample {
                case_id: trace.case_id().to_string(),
                activities: prefix,
                label: Some(label),
            });
        }
    }
    Ok(PrefixDataset {
        samples,
        vocab_size: vocab.len(),
        max_len,
    })
}

/// Encodes a running trace for prediction; no end symbol and no label.
pub fn encode_running_trace(
    trace: &Trace,
    vocab: &ActivityVocabulary,
    max_len: usize,
) -> Result<PrefixSample> {
    if trace.len() <= 1 {
        return Err(Error::TraceTooShort { len: trace.len() });
    }
    let activities = vocab.encode(trace)?;
    if activities.len() > max_len {
        log::warn!(
            "case {}: running trace of length {} exceeds model length {max_len}",
            trace.case_id(),
            activities.len()
        );
        return Err(Error::PrefixTooLong {
            len: activities.len(),
            max_len,
        });
    }
    Ok(PrefixSample {
        case_id: trace.case_id().to_string(),
        activities,
        label: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_of(seqs: &[&[&str]]) -> EventLog {
        EventLog::new(
            seqs.iter()
                .enumerate()
                .map(|(i, s)| Trace::from_activities(&format!("c{i}"), s).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn vocabulary_is_sorted_with_end_last() {
        let v = ActivityVocabulary::build(&log_of(&[&["B", "A"]])).unwrap();
        assert_eq!(v.labels(), ["A", "B", END_LABEL]);
        assert_eq!(v.len(), 3);
        for (i, l) in v.labels().iter().enumerate() {
            assert_eq!(v.index_of(l), Some(i));
        }
        let v = ActivityVocabulary::build(&log_of(&[&["A"]])).unwrap();
        assert_eq!(v.labels(), ["A", END_LABEL]);
    }

    #[test]
    fn reserved_label_rejected() {
        assert!(matches!(
            ActivityVocabulary::build(&log_of(&[&["A", END_LABEL]])),
            Err(Error::ReservedLabelCollision(_))
        ));
        assert!(ActivityVocabulary::from_labels(vec!["A".into()]).is_err());
        assert!(
            ActivityVocabulary::from_labels(vec!["A".into(), "A".into(), END_LABEL.into()])
                .is_err()
        );
    }

    #[test]
    fn augment_appends_end() {
        let log = log_of(&[&["A", "B"], &["A"]]);
        let v = ActivityVocabulary::build(&log).unwrap();
        assert_eq!(augment_with_end(&log.traces()[0], &v).unwrap(), [0, 1, 2]);
        assert_eq!(augment_with_end(&log.traces()[1], &v).unwrap(), [0, 2]);
        let z = Trace::from_activities("cz", &["Z"]).unwrap();
        assert!(matches!(
            augment_with_end(&z, &v),
            Err(Error::UnknownActivity { label, case_id }) if label == "Z" && case_id == "cz"
        ));
    }

    #[test]
    fn prefixes_of_three() {
        assert_eq!(
            generate_prefixes(&["x1", "x2", "x3"]),
            vec![(vec!["x1"], "x2"), (vec!["x1", "x2"], "x3")]
        );
        assert_eq!(generate_prefixes(&['a', 'b']), vec![(vec!['a'], 'b')]);
        assert!(generate_prefixes(&['a']).is_empty());
    }

    #[test]
    fn dataset_layout_by_hand() {
        let log = log_of(&[&["A", "B"]]);
        let v = ActivityVocabulary::build(&log).unwrap();
        let ds = assemble_dataset(&log, &v, 3).unwrap();
        let x = ds.x_tensor::<f64>().unwrap();
        assert_eq!(x.dims(), (2, 3, 3));
        assert_eq!(
            x.matrix(0).to_rows(),
            vec![
                vec![0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0]
            ]
        );
        assert_eq!(
            x.matrix(1).to_rows(),
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0]
            ]
        );
        let y = ds.y_matrix::<f64>();
        assert_eq!(y.to_rows(), vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(ds.true_lengths(), [1, 2]);
    }

    #[test]
    fn single_event_traces_give_no_samples() {
        let log = log_of(&[&["A"], &["B"]]);
        let v = ActivityVocabulary::build(&log).unwrap();
        let ds = assemble_dataset(&log, &v, max_augmented_len(&log)).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.x_tensor::<f64>().unwrap().dims(), (0, 2, 3));
    }

    #[test]
    fn longest_trace_fits_exactly() {
        let log = log_of(&[&["A", "B", "C"], &["A"]]);
        let v = ActivityVocabulary::build(&log).unwrap();
        let m = max_augmented_len(&log);
        let ds = assemble_dataset(&log, &v, m).unwrap();
        let last = ds.samples.iter().max_by_key(|s| s.true_length()).unwrap();
        assert_eq!(m - last.true_length(), 1);
        assert!(matches!(
            assemble_dataset(&log, &v, 2),
            Err(Error::PrefixTooLong { len: 3, max_len: 2 })
        ));
    }

    #[test]
    fn running_trace_guards() {
        let log = log_of(&[&["A", "B", "A", "B"]]);
        let v = ActivityVocabulary::build(&log).unwrap();
        let short = Trace::from_activities("r", &["A"]).unwrap();
        assert!(matches!(
            encode_running_trace(&short, &v, 4),
            Err(Error::TraceTooShort { len: 1 })
        ));
        let two = Trace::from_activities("r", &["A", "B"]).unwrap();
        let s = encode_running_trace(&two, &v, 4).unwrap();
        assert_eq!(s.true_length(), 2);
        assert_eq!(s.label, None);
        let p = s.padded::<f64>(v.len(), 4).unwrap();
        assert!(p.row(0).iter().chain(p.row(1)).all(|&x| x == 0.0));
        let long = Trace::from_activities("r", &["A", "B", "A", "B", "A"]).unwrap();
        assert!(matches!(
            encode_running_trace(&long, &v, 4),
            Err(Error::PrefixTooLong { .. })
        ));
    }

    proptest::proptest! {
        #[test]
        fn sample_invariants(seqs in proptest::collection::vec(
            proptest::collection::vec(0usize..4, 1..7), 1..6)) {
            let names = ["A", "B", "C", "D"];
            let seqs: Vec<Vec<&str>> = seqs.iter().map(|s| s.iter().map(|&i| names[i]).collect()).collect();
            let refs: Vec<&[&str]> = seqs.iter().map(Vec::as_slice).collect();
            let log = log_of(&refs);
            let v = ActivityVocabulary::build(&log).unwrap();
            let m = max_augmented_len(&log);
            let ds = assemble_dataset(&log, &v, m).unwrap();
            let expected: usize = log.traces().iter().filter(|t| t.len() > 1).map(|t| t.len()).sum();
            proptest::prop_assert_eq!(ds.len(), expected);
            for s in &ds.samples {
                let x = s.padded::<f64>(v.len(), m).unwrap();
                let k = s.true_length();
                let total: f64 = x.as_slice().iter().sum();
                proptest::prop_assert_eq!(total, k as f64);
                for r in 0..m {
                    let row_sum: f64 = x.row(r).iter().sum();
                    proptest::prop_assert_eq!(row_sum, if r >= m - k { 1.0 } else { 0.0 });
                }
                let trace = log.traces().iter().find(|t| t.case_id() == s.case_id).unwrap();
                let original: Vec<&str> = trace.activities().take(k).collect();
                proptest::prop_assert_eq!(v.decode(&s.activities), original);
            }
        }
    }
}
