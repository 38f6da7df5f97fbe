use mbls::data::{gen_blobs, split, BlobSpec, SplitFractions};
use mbls::metrics::accuracy;
use mbls::model::{evaluate, train, TrainConfig};
use mbls::LossSpec;
use serde::Deserialize;

#[derive(Deserialize)]
struct Run {
    seed: u64,
    hidden_dims: Vec<usize>,
    test_accuracy: f64,
    test_confidence: f64,
}

#[derive(Deserialize)]
struct Record {
    blobs: BlobSpec,
    fractions: SplitFractions,
    train: TrainConfig,
    runs: Vec<Run>,
}

fn record() -> Record {
    let text = include_str!("fixtures/calibrated_regime.json");
    serde_json::from_str(text).unwrap()
}

#[test]
fn recorded_pilot_matches_library_defaults() {
    let rec = record();
    assert_eq!(rec.blobs, BlobSpec::default());
    assert_eq!(rec.fractions, SplitFractions::default());
    assert_eq!(
        rec.train,
        TrainConfig {
            loss: LossSpec::ce(),
            ..TrainConfig::default()
        }
    );
    assert_eq!(rec.runs.len(), 10);
    for run in rec.runs.iter().filter(|r| r.hidden_dims.is_empty()) {
        assert!(
            (0.6..=0.9).contains(&run.test_accuracy),
            "seed {}",
            run.seed
        );
    }
    for run in rec.runs.iter().filter(|r| !r.hidden_dims.is_empty()) {
        assert!(run.test_confidence > run.test_accuracy, "seed {}", run.seed);
    }
}

#[test]
fn recorded_linear_run_reproduces() {
    let rec = record();
    let run = rec.runs.iter().find(|r| r.hidden_dims.is_empty()).unwrap();
    let ds = gen_blobs(&BlobSpec {
        seed: run.seed,
        ..rec.blobs
    })
    .unwrap();
    let (tr, va, te) = split(&ds, rec.fractions, run.seed).unwrap();
    let cfg = TrainConfig {
        hidden_dims: vec![],
        seed: run.seed,
        ..rec.train
    };
    let (model, _) = train(&cfg, &tr, &va).unwrap();
    assert_eq!(
        accuracy(&evaluate(&model, &te).unwrap()).unwrap(),
        run.test_accuracy
    );
}
