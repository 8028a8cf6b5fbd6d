//! Seeded synthetic event logs with known control flow.
//!
//! Two grammar kinds are supported: a Markov chain over activity-emitting
//! states, and a copy task in which the activity at a key position decides
//! the activity a fixed distance later while filler events in between are
//! drawn uniformly at random.

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eventlog::{Event, EventLog, Trace};

/// `to = None` ends the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub to: Option<usize>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarState {
    pub activity: String,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovGrammar {
    pub states: Vec<GrammarState>,
    pub initial: usize,
}

/// Positions are 1-based, matching how traces are usually described.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopyTask {
    /// `(key activity, activity it forces)` pairs.
    pub keys: Vec<(String, String)>,
    pub fillers: Vec<String>,
    pub key_position: usize,
    /// The forced activity sits at `key_position + distance`.
    pub distance: usize,
    /// Filler events appended after the forced activity.
    pub trailing: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GrammarKind {
    Markov(MarkovGrammar),
    Copy(CopyTask),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub kind: GrammarKind,
    pub n_traces: usize,
    /// Inclusive bounds on generated trace length; Markov traces outside are redrawn.
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

const MAX_REDRAWS: usize = 10_000;

impl GrammarSpec {
    /// Markov chain `labels[0] → labels[1] → … → end` with probability one.
    pub fn linear(labels: &[&str], n_traces: usize, seed: u64) -> Self {
        let states = labels
            .iter()
            .enumerate()
            .map(|(i, a)| GrammarState {
                activity: a.to_string(),
                transitions: vec![Transition {
                    to: (i + 1 < labels.len()).then_some(i + 1),
                    prob: 1.0,
                }],
            })
            .collect();
        Self {
            kind: GrammarKind::Markov(MarkovGrammar { states, initial: 0 }),
            n_traces,
            min_len: 1,
            max_len: labels.len().max(1),
            seed,
        }
    }

    /// Keys `X → P`, `Y → Q`, four fillers, key at `key_position`.
    pub fn copy_task(n_traces: usize, key_position: usize, distance: usize, seed: u64) -> Self {
        let len = key_position + distance;
        Self {
            kind: GrammarKind::Copy(CopyTask {
                keys: vec![("X".into(), "P".into()), ("Y".into(), "Q".into())],
                fillers: ["F1", "F2", "F3", "F4"].map(String::from).to_vec(),
                key_position,
                distance,
                trailing: 0,
            }),
            n_traces,
            min_len: len,
            max_len: len,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad(format!(
                "length range {}..={} is empty",
                self.min_len, self.max_len
            ));
        }
        match &self.kind {
            GrammarKind::Markov(g) => {
                if g.initial >= g.states.len() {
                    return bad(format!("initial state {} does not exist", g.initial));
                }
                for (i, s) in g.states.iter().enumerate() {
                    if s.activity.is_empty() {
                        return bad(format!("state {i} emits an empty activity"));
                    }
                    if s.transitions.is_empty() {
                        return bad(format!("state {i} has no transitions"));
                    }
                    let total: f64 = s.transitions.iter().map(|t| t.prob).sum();
                    if (total - 1.0).abs() > 1e-9
                        || s.transitions
                            .iter()
                            .any(|t| t.prob.is_nan() || t.prob < 0.0)
                    {
                        return bad(format!("state {i} transition probabilities sum to {total}"));
                    }
                    if let Some(t) = s
                        .transitions
                        .iter()
                        .find(|t| t.to.is_some_and(|to| to >= g.states.len()))
                    {
                        return bad(format!("state {i} points at missing state {:?}", t.to));
                    }
                }
                if !terminal_reachable(g) {
                    return bad("no terminal transition is reachable".into());
                }
            }
            GrammarKind::Copy(c) => {
                if c.keys.is_empty() || c.fillers.is_empty() {
                    return bad("copy task needs keys and fillers".into());
                }
                if c.key_position == 0 || c.distance == 0 {
                    return bad("key position and distance are 1-based and positive".into());
                }
                let len = c.key_position + c.distance + c.trailing;
                if len < self.min_len || len > self.max_len {
                    return bad(format!(
                        "copy traces have length {len}, outside the length range"
                    ));
                }
                let keys: Vec<&str> = c.keys.iter().map(|k| k.0.as_str()).collect();
                if c.fillers.iter().any(|f| keys.contains(&f.as_str())) {
                    return bad("fillers overlap keys".into());
                }
            }
        }
        Ok(())
    }
}

fn terminal_reachable(g: &MarkovGrammar) -> bool {
    let mut seen = vec![false; g.states.len()];
    let mut stack = vec![g.initial];
    while let Some(s) = stack.pop() {
        if std::mem::replace(&mut seen[s], true) {
            continue;
        }
        for t in &g.states[s].transitions {
            if t.prob > 0.0 {
                match t.to {
                    None => return true,
                    Some(n) => stack.push(n),
                }
            }
        }
    }
    false
}

fn pick<R: Rng>(transitions: &[Transition], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for t in transitions {
        acc += t.prob;
        if u < acc {
            return t.to;
        }
    }
    transitions.last().and_then(|t| t.to)
}

fn markov_trace<R: Rng>(g: &MarkovGrammar, spec: &GrammarSpec, rng: &mut R) -> Result<Vec<String>> {
    for _ in 0..MAX_REDRAWS {
        let mut seq = Vec::new();
        let mut state = Some(g.initial);
        while let Some(s) = state {
            seq.push(g.states[s].activity.clone());
            if seq.len() > spec.max_len {
                break;
            }
            state = pick(&g.states[s].transitions, rng);
        }
        if (spec.min_len..=spec.max_len).contains(&seq.len()) {
            return Ok(seq);
        }
    }
    Err(Error::InvalidSpec(format!(
        "could not draw a trace of length {}..={} in {MAX_REDRAWS} attempts",
        spec.min_len, spec.max_len
    )))
}

fn copy_trace<R: Rng>(c: &CopyTask, rng: &mut R) -> Vec<String> {
    let len = c.key_position + c.distance + c.trailing;
    let (key, forced) = &c.keys[rng.gen_range(0..c.keys.len())];
    (1..=len)
        .map(|pos| {
            if pos == c.key_position {
                key.clone()
            } else if pos == c.key_position + c.distance {
                forced.clone()
            } else {
                c.fillers[rng.gen_range(0..c.fillers.len())].clone()
            }
        })
        .collect()
}

/// Draws `n_traces` traces with cases `case_0001…`; events are one minute apart.
pub fn generate(spec: &GrammarSpec) -> Result<EventLog> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let width = spec.n_traces.max(1).to_string().len().max(4);
    let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
    let mut traces = Vec::with_capacity(spec.n_traces);
    for n in 0..spec.n_traces {
        let labels = match &spec.kind {
            GrammarKind::Markov(g) => markov_trace(g, spec, &mut rng)?,
            GrammarKind::Copy(c) => copy_trace(c, &mut rng),
        };
        let case_id = format!("case_{:0width$}", n + 1);
        let start = base + Duration::hours(n as i64);
        let events = labels
            .into_iter()
            .enumerate()
            .map(|(k, activity)| Event {
                case_id: case_id.clone(),
                activity,
                timestamp: start + Duration::minutes(k as i64),
            })
            .collect();
        traces.push(Trace::new(case_id, events)?);
    }
    EventLog::new(traces)
}

/// 1-based position of the event that determines the forced activity.
pub fn oracle_relevant_position(spec: &GrammarSpec, trace: &Trace) -> Result<usize> {
    let GrammarKind::Copy(c) = &spec.kind else {
        return Err(Error::NotACopyTask);
    };
    if trace.len() < c.key_position {
        return Err(Error::InvalidTrace {
            case_id: trace.case_id().to_string(),
            reason: format!("shorter than key position {}", c.key_position),
        });
    }
    Ok(c.key_position)
}

/// Prefix length at which the next activity is the forced one.
pub fn evaluation_prefix_len(spec: &GrammarSpec) -> Result<usize> {
    match &spec.kind {
        GrammarKind::Copy(c) => Ok(c.key_position + c.distance - 1),
        GrammarKind::Markov(_) => Err(Error::NotACopyTask),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn seq(t: &Trace) -> Vec<&str> {
        t.activities().collect()
    }

    #[test]
    fn linear_grammar_has_one_variant() {
        let log = generate(&GrammarSpec::linear(&["A", "B", "C"], 100, 1)).unwrap();
        assert_eq!(log.len(), 100);
        assert!(log.traces().iter().all(|t| seq(t) == ["A", "B", "C"]));
    }

    #[test]
    fn copy_task_obeys_rule() {
        let spec = GrammarSpec::copy_task(500, 1, 3, 9);
        let log = generate(&spec).unwrap();
        let mut firsts = HashMap::new();
        for t in log.traces() {
            let s = seq(t);
            assert_eq!(s.len(), 4);
            *firsts.entry(s[0]).or_insert(0) += 1;
            match s[0] {
                "X" => assert_eq!(s[3], "P"),
                "Y" => assert_eq!(s[3], "Q"),
                other => panic!("unexpected key {other}"),
            }
            assert!(s[1].starts_with('F') && s[2].starts_with('F'));
            assert_eq!(oracle_relevant_position(&spec, t).unwrap(), 1);
        }
        assert_eq!(firsts.len(), 2);
        assert_eq!(evaluation_prefix_len(&spec).unwrap(), 3);
    }

    #[test]
    fn configured_key_position() {
        let spec = GrammarSpec::copy_task(50, 3, 2, 4);
        let log = generate(&spec).unwrap();
        for t in log.traces() {
            let s = seq(t);
            assert_eq!(s[4], if s[2] == "X" { "P" } else { "Q" });
            assert_eq!(oracle_relevant_position(&spec, t).unwrap(), 3);
        }
    }

    #[test]
    fn not_a_copy_task() {
        let spec = GrammarSpec::linear(&["A", "B"], 1, 0);
        let log = generate(&spec).unwrap();
        assert!(matches!(
            oracle_relevant_position(&spec, &log.traces()[0]),
            Err(Error::NotACopyTask)
        ));
    }

    #[test]
    fn seeded_and_time_ordered() {
        let spec = GrammarSpec::copy_task(30, 1, 3, 5);
        let a = generate(&spec).unwrap();
        assert_eq!(a, generate(&spec).unwrap());
        assert_ne!(a, generate(&GrammarSpec { seed: 6, ..spec }).unwrap());
        for t in a.traces() {
            assert!(t
                .events()
                .windows(2)
                .all(|w| w[0].timestamp < w[1].timestamp));
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = GrammarSpec::linear(&["A", "B"], 1, 0);
        if let GrammarKind::Markov(g) = &mut spec.kind {
            g.states[0].transitions[0].prob = 0.5;
        }
        assert!(matches!(generate(&spec), Err(Error::InvalidSpec(_))));

        let looping = GrammarSpec {
            kind: GrammarKind::Markov(MarkovGrammar {
                states: vec![GrammarState {
                    activity: "A".into(),
                    transitions: vec![Transition {
                        to: Some(0),
                        prob: 1.0,
                    }],
                }],
                initial: 0,
            }),
            n_traces: 1,
            min_len: 1,
            max_len: 5,
            seed: 0,
        };
        assert!(matches!(looping.validate(), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn branch_frequencies_within_three_sigma() {
        // A → B (0.3) | C (0.7), then end.
        let spec = GrammarSpec {
            kind: GrammarKind::Markov(MarkovGrammar {
                states: vec![
                    GrammarState {
                        activity: "A".into(),
                        transitions: vec![
                            Transition {
                                to: Some(1),
                                prob: 0.3,
                            },
                            Transition {
                                to: Some(2),
                                prob: 0.7,
                            },
                        ],
                    },
                    GrammarState {
                        activity: "B".into(),
                        transitions: vec![Transition {
                            to: None,
                            prob: 1.0,
                        }],
                    },
                    GrammarState {
                        activity: "C".into(),
                        transitions: vec![Transition {
                            to: None,
                            prob: 1.0,
                        }],
                    },
                ],
                initial: 0,
            }),
            n_traces: 2000,
            min_len: 1,
            max_len: 3,
            seed: 77,
        };
        let log = generate(&spec).unwrap();
        let n = log.len() as f64;
        let b = log.traces().iter().filter(|t| seq(t)[1] == "B").count() as f64;
        let sigma = (n * 0.3 * 0.7).sqrt();
        assert!(
            (b - 0.3 * n).abs() < 3.0 * sigma,
            "{b} B-branches out of {n}"
        );
    }
}
