mod common;

use common::log_of;
use xnap::bilstm::{evaluate_dataset, train, TrainConfig};
use xnap::encoding::{
    assemble_dataset, max_augmented_len, ActivityVocabulary, PrefixDataset, PrefixSample,
};
use xnap::eventlog::EventLog;
use xnap::synthlog::{generate, GrammarSpec};
use xnap::Model;

fn grammar_data(n: usize, seed: u64) -> (EventLog, ActivityVocabulary, PrefixDataset) {
    let log = generate(&GrammarSpec::linear(&["A", "B", "C"], n, seed)).unwrap();
    let vocab = ActivityVocabulary::build(&log).unwrap();
    let data = assemble_dataset(&log, &vocab, max_augmented_len(&log)).unwrap();
    (log, vocab, data)
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        hidden_size: 8,
        max_epochs: epochs,
        batch_size: 32,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_weights() {
    let (_, vocab, data) = grammar_data(40, 1);
    let (a, ha): (Model, _) = train(&data, &data, &vocab, &small_config(4)).unwrap();
    let (b, hb): (Model, _) = train(&data, &data, &vocab, &small_config(4)).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(ha.to_csv().unwrap(), hb.to_csv().unwrap());
    let (c, _): (Model, _) = train(
        &data,
        &data,
        &vocab,
        &TrainConfig {
            seed: 43,
            ..small_config(4)
        },
    )
    .unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn early_stopping_restores_first_epoch() {
    // trained towards A -> B, validated on A -> C: validation only gets worse
    let log = log_of(&[&["A", "B"], &["A", "C"]]);
    let vocab = ActivityVocabulary::build(&log).unwrap();
    let m = max_augmented_len(&log);
    let a = vocab.index_of("A").unwrap();
    let sample = |label: &str| PrefixSample {
        case_id: "x".into(),
        activities: vec![a],
        label: vocab.index_of(label),
    };
    let train_data = PrefixDataset {
        samples: vec![sample("B"); 16],
        vocab_size: vocab.len(),
        max_len: m,
    };
    let val_data = PrefixDataset {
        samples: vec![sample("C")],
        vocab_size: vocab.len(),
        max_len: m,
    };
    let config = TrainConfig {
        patience: 1,
        dropout_rate: 0.0,
        ..small_config(50)
    };
    let (model, history): (Model, _) = train(&train_data, &val_data, &vocab, &config).unwrap();
    assert_eq!(history.epochs.len(), 2);
    assert_eq!(history.best_epoch, 1);
    assert!(history.epochs[1].val_loss > history.epochs[0].val_loss);
    let (one_epoch, _): (Model, _) = train(
        &train_data,
        &val_data,
        &vocab,
        &TrainConfig {
            max_epochs: 1,
            ..config
        },
    )
    .unwrap();
    assert_eq!(model.params, one_epoch.params);
    assert_eq!(model.trained_epochs, 2);
}

#[test]
fn grammar_loss_decreases_then_converges() {
    let (log, vocab, data) = grammar_data(200, 42);
    let (short, history): (Model, _) = train(&data, &data, &vocab, &small_config(5)).unwrap();
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.train_loss).collect();
    assert_eq!(losses.len(), 5);
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
    drop(short);

    let (model, _): (Model, _) = train(&data, &data, &vocab, &small_config(200)).unwrap();
    let (_, acc) = evaluate_dataset(&model.params, &data).unwrap();
    assert!(acc >= 0.99, "training accuracy {acc}");
    assert_eq!(model.max_len, max_augmented_len(&log));
}

#[test]
fn overfits_two_event_grammar() {
    let traces: Vec<&[&str]> = vec![&["A", "B"]; 20];
    let log = log_of(&traces);
    let vocab = ActivityVocabulary::build(&log).unwrap();
    let data = assemble_dataset(&log, &vocab, max_augmented_len(&log)).unwrap();
    let (model, _): (Model, _) = train(&data, &data, &vocab, &small_config(60)).unwrap();
    let running = PrefixSample {
        case_id: "r".into(),
        activities: vec![vocab.index_of("A").unwrap()],
        label: None,
    };
    assert_eq!(
        model.predict(&running).unwrap().0,
        vocab.index_of("B").unwrap()
    );
}

#[test]
fn rejects_bad_configuration() {
    let (_, vocab, data) = grammar_data(10, 3);
    for bad in [
        TrainConfig {
            hidden_size: 0,
            ..TrainConfig::default()
        },
        TrainConfig {
            dropout_rate: 1.0,
            ..TrainConfig::default()
        },
        TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        },
    ] {
        assert!(matches!(
            train::<f64>(&data, &data, &vocab, &bad),
            Err(xnap::Error::InvalidConfig(_))
        ));
    }
}
