//! Records the pilot run that pins the calibrated-regime blob fixture.
//!
//! Usage: `cargo run --release -p mbls-core --example fixture_pilot [OUT]`
//! (default `crates/core/tests/fixtures/calibrated_regime.json`).

use mbls::data::{gen_blobs, split, BlobSpec, SplitFractions};
use mbls::metrics::{accuracy, ece, mean_confidence};
use mbls::model::{evaluate, train, TrainConfig};
use mbls::LossSpec;
use serde::Serialize;

#[derive(Serialize)]
struct Run {
    seed: u64,
    hidden_dims: Vec<usize>,
    test_accuracy: f64,
    test_confidence: f64,
    test_ece: f64,
}

#[derive(Serialize)]
struct Record {
    blobs: BlobSpec,
    fractions: SplitFractions,
    train: TrainConfig,
    runs: Vec<Run>,
}

fn main() -> mbls::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "crates/core/tests/fixtures/calibrated_regime.json".into());
    let fractions = SplitFractions::default();
    let base = TrainConfig {
        loss: LossSpec::ce(),
        ..TrainConfig::default()
    };
    let mut runs = Vec::new();
    for seed in 0..5u64 {
        let ds = gen_blobs(&BlobSpec {
            seed,
            ..BlobSpec::default()
        })?;
        let (tr, va, te) = split(&ds, fractions, seed)?;
        for hidden in [vec![], base.hidden_dims.clone()] {
            let cfg = TrainConfig {
                hidden_dims: hidden.clone(),
                seed,
                ..base.clone()
            };
            let (model, _) = train(&cfg, &tr, &va)?;
            let preds = evaluate(&model, &te)?;
            let run = Run {
                seed,
                hidden_dims: hidden,
                test_accuracy: accuracy(&preds)?,
                test_confidence: mean_confidence(&preds)?,
                test_ece: ece(&preds, 15)?,
            };
            println!(
                "seed {seed} hidden {:?}: acc {:.4} conf {:.4} ece {:.2}%",
                run.hidden_dims,
                run.test_accuracy,
                run.test_confidence,
                100.0 * run.test_ece
            );
            runs.push(run);
        }
    }
    let record = Record {
        blobs: BlobSpec::default(),
        fractions,
        train: base,
        runs,
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    std::fs::write(&out, json + "\n").map_err(|e| mbls::Error::io(&out, e))?;
    Ok(())
}
