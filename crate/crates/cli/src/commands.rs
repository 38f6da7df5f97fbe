use std::fs;
use std::path::{Path, PathBuf};

use mbls::calibrate::{apply_temperature, fit_temperature, TemperatureFit, TemperatureGrid};
use mbls::data::{
    gen_blobs, load_dataset_csv, load_predictions_csv, reliability_to_csv, save_dataset_csv,
    save_predictions_csv, save_text, split, BlobSpec, Dataset, SplitFractions,
};
use mbls::metrics::{accuracy, aece, ece, nll, reliability_table, PredictionSet};
use mbls::model::{evaluate, train as fit_model, Checkpoint, TrainConfig};
use mbls::verify::{run_suite, VerifyOptions};
use mbls::{Error, LossSpec};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{
    CalibrateArgs, CliError, EvalArgs, GenDataArgs, SweepArgs, TrainArgs, TrainingFlags, VerifyArgs,
};

const MANIFEST: &str = "manifest.json";
const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    name: String,
    rows: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    blobs: BlobSpec,
    fractions: SplitFractions,
    split_seed: u64,
    files: Vec<ManifestFile>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    save_text(
        path,
        &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"),
    )
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(args.config.as_deref())?;
    let data = &mut config.data;
    if let Some(dir) = args.out {
        data.dir = dir;
    }
    if let Some(seed) = args.seed {
        data.blobs.seed = seed;
    }
    if let Some(seed) = args.split_seed {
        data.split_seed = seed;
    }
    if let Some(sigma) = args.noise_sigma {
        data.blobs.noise_sigma = sigma;
    }
    if let Some(n) = args.n_per_class {
        data.blobs.n_per_class = n;
    }
    config.validate()?;

    let data = &config.data;
    let ds = gen_blobs(&data.blobs)?;
    let (tr, va, te) = split(&ds, data.fractions, data.split_seed)?;
    let mut files = Vec::new();
    for (name, part) in SPLITS.iter().zip([&tr, &va, &te]) {
        let file = format!("{name}.csv");
        save_dataset_csv(part, data.dir.join(&file))?;
        files.push(ManifestFile {
            name: file,
            rows: part.len(),
        });
    }
    let manifest = Manifest {
        blobs: data.blobs,
        fractions: data.fractions,
        split_seed: data.split_seed,
        files,
    };
    write_json(&data.dir.join(MANIFEST), &manifest)?;
    println!(
        "wrote {} samples (train {}, val {}, test {}) to {}",
        ds.len(),
        tr.len(),
        va.len(),
        te.len(),
        data.dir.display()
    );
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<Manifest, Error> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(&path, e.line() as u64, e.to_string()))
}

/// Train, validation and test sets from a `gen-data` directory.
fn load_splits(dir: &Path) -> Result<(Dataset, Dataset, Dataset), Error> {
    let manifest = read_manifest(dir)?;
    let k = manifest.blobs.num_classes;
    let load = |name: &str| load_dataset_csv(dir.join(format!("{name}.csv")), Some(k));
    Ok((load("train")?, load("val")?, load("test")?))
}

fn apply_training_flags(config: &mut RunConfig, flags: &TrainingFlags) {
    if let Some(dir) = &flags.data {
        config.data.dir = dir.clone();
    }
    if let Some(dir) = &flags.out {
        config.output_dir = dir.clone();
    }
    let t = &mut config.train;
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = &flags.hidden {
        t.hidden_dims = v.clone();
    }
    if let Some(v) = flags.seed {
        t.seed = v;
    }
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(args.common.config.as_deref())?;
    apply_training_flags(&mut config, &args.common);
    let loss = &mut config.train.loss;
    if let Some(kind) = args.loss {
        loss.kind = kind;
    }
    if let Some(v) = args.alpha {
        loss.alpha = v;
    }
    if let Some(v) = args.gamma {
        loss.gamma = v;
    }
    if let Some(v) = args.ecp_weight {
        loss.ecp_weight = v;
    }
    if let Some(v) = args.margin {
        loss.margin = v;
    }
    if let Some(v) = args.lambda {
        loss.lambda = v;
    }
    config.validate()?;

    let (tr, va, te) = load_splits(&config.data.dir)?;
    let (model, history) = fit_model(&config.train, &tr, &va)?;
    let out = &config.output_dir;
    Checkpoint::new(&model, config.train.hash()).save(out.join("checkpoint.json"))?;
    save_text(out.join("history.csv"), &history.to_csv())?;
    save_text(out.join("config.json"), &config.to_json())?;
    let val = evaluate(&model, &va)?;
    let test = evaluate(&model, &te)?;
    save_predictions_csv(&val, out.join("predictions_val.csv"))?;
    save_predictions_csv(&test, out.join("predictions_test.csv"))?;
    println!(
        "{} trained for {} epochs: test Acc {} ECE {} (%), outputs in {}",
        config.train.loss.kind,
        config.train.epochs,
        pct(accuracy(&test)?),
        pct(ece(&test, config.metrics.ece_bins)?),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    samples: usize,
    classes: usize,
    accuracy: f64,
    ece: f64,
    /// `None` when there are fewer samples than bins.
    aece: Option<f64>,
    nll: f64,
    ece_bins: usize,
    diagram_bins: usize,
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map_or_else(|| "predictions".into(), |s| s.to_string_lossy());
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let preds = load_predictions_csv(&args.predictions)?;
    if preds.is_empty() {
        return Err(Error::Usage(format!(
            "{} holds no predictions",
            args.predictions.display()
        ))
        .into());
    }
    let report = EvalReport {
        samples: preds.len(),
        classes: preds.num_classes(),
        accuracy: accuracy(&preds)?,
        ece: ece(&preds, args.bins)?,
        aece: if preds.len() >= args.bins {
            Some(aece(&preds, args.bins)?)
        } else {
            None
        },
        nll: nll(&preds)?,
        ece_bins: args.bins,
        diagram_bins: args.diagram_bins,
    };
    let table = reliability_table(&preds, args.diagram_bins)?;
    let table_path = args
        .reliability_out
        .unwrap_or_else(|| sibling(&args.predictions, ".reliability.csv"));
    save_text(&table_path, &reliability_to_csv(&table))?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }

    println!("samples      {} (K = {})", report.samples, report.classes);
    println!("Acc (%)      {}", pct(report.accuracy));
    println!("ECE (%)      {}  [{} bins]", pct(report.ece), args.bins);
    match report.aece {
        Some(v) => println!("AECE (%)     {}  [{} bins]", pct(v), args.bins),
        None => println!("AECE (%)     n/a  [needs at least {} samples]", args.bins),
    }
    println!("NLL          {:.4}", report.nll);
    println!(
        "reliability  {}  [{} bins]",
        table_path.display(),
        args.diagram_bins
    );
    Ok(())
}

#[derive(Serialize)]
struct TestSummary {
    accuracy: f64,
    nll_pre: f64,
    nll_post: f64,
    ece_pre: f64,
    ece_post: f64,
}

#[derive(Serialize)]
struct CalibrationReport {
    validation: TemperatureFit,
    test: TestSummary,
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let grid = TemperatureGrid::new(args.t_min, args.t_max, args.step)?;
    let val = load_predictions_csv(&args.val)?;
    let test = load_predictions_csv(&args.test)?;
    if val.num_classes() != test.num_classes() {
        return Err(Error::Usage(format!(
            "validation has {} classes but test has {}",
            val.num_classes(),
            test.num_classes()
        ))
        .into());
    }
    let fit = fit_temperature(&val, grid, args.bins)?;
    let scaled: PredictionSet = apply_temperature(&test, fit.t_star)?;
    let summary = TestSummary {
        accuracy: accuracy(&test)?,
        nll_pre: nll(&test)?,
        nll_post: nll(&scaled)?,
        ece_pre: ece(&test, args.bins)?,
        ece_post: ece(&scaled, args.bins)?,
    };
    let out = args
        .out
        .unwrap_or_else(|| args.test.with_file_name("calibration.json"));
    if let Some(path) = &args.calibrated_out {
        save_predictions_csv(&scaled, path)?;
    }
    println!(
        "T* = {:.4} (grid [{}, {}] step {}, {} points)",
        fit.t_star, fit.grid.t_min, fit.grid.t_max, fit.grid.step, fit.grid_points
    );
    println!(
        "validation ECE (%) {} -> {}",
        pct(fit.ece_pre),
        pct(fit.ece_post)
    );
    println!(
        "test       ECE (%) {} -> {}",
        pct(summary.ece_pre),
        pct(summary.ece_post)
    );
    println!(
        "test       NLL     {:.4} -> {:.4}",
        summary.nll_pre, summary.nll_post
    );
    write_json(
        &out,
        &CalibrationReport {
            validation: fit,
            test: summary,
        },
    )?;
    println!("report written to {}", out.display());
    Ok(())
}

pub fn verify(args: VerifyArgs) -> Result<(), CliError> {
    let opts = VerifyOptions {
        seed: args.seed,
        gradient_fault: args.inject_gradient_fault,
        ..VerifyOptions::default()
    };
    let report = run_suite(&opts)?;
    for p in &report.properties {
        println!(
            "{:<28} {:>7}/{:<7} {}  worst {:.3e}",
            p.name,
            p.checked - p.failures,
            p.checked,
            if p.passed() { "pass" } else { "FAIL" },
            p.worst
        );
    }
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    let failed: Vec<&str> = report
        .properties
        .iter()
        .filter(|p| !p.passed())
        .map(|p| p.name.as_str())
        .collect();
    if failed.is_empty() {
        println!(
            "all {} properties passed (seed {})",
            report.properties.len(),
            args.seed
        );
        Ok(())
    } else {
        Err(CliError::Verification(failed.join(", ")))
    }
}

struct Scores {
    val_accuracy: f64,
    val_ece: f64,
    test_accuracy: f64,
    test_ece: f64,
}

fn train_and_score(
    base: &TrainConfig,
    loss: LossSpec,
    splits: &(Dataset, Dataset, Dataset),
    bins: usize,
) -> Result<Scores, Error> {
    let config = TrainConfig {
        loss,
        ..base.clone()
    };
    config.validate()?;
    let (model, _) = fit_model(&config, &splits.0, &splits.1)?;
    let val = evaluate(&model, &splits.1)?;
    let test = evaluate(&model, &splits.2)?;
    Ok(Scores {
        val_accuracy: accuracy(&val)?,
        val_ece: ece(&val, bins)?,
        test_accuracy: accuracy(&test)?,
        test_ece: ece(&test, bins)?,
    })
}

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sweep_margin(args: SweepArgs) -> Result<(), CliError> {
    let mut config = RunConfig::load(args.common.config.as_deref())?;
    apply_training_flags(&mut config, &args.common);
    config.validate()?;
    if args.margins.is_empty() {
        return Err(Error::Usage("at least one margin is required".into()).into());
    }
    let splits = load_splits(&config.data.dir)?;
    let bins = config.metrics.ece_bins;
    let base = &config.train;

    let mut sweep = String::from("margin,val_accuracy,val_ece,test_accuracy,test_ece\n");
    println!("{:>8} {:>8} {:>8}", "margin", "Acc (%)", "ECE (%)");
    for &m in &args.margins {
        let s = train_and_score(base, LossSpec::mbls(m, args.lambda), &splits, bins)?;
        sweep += &format!(
            "{},{},{},{},{}\n",
            real(m),
            real(s.val_accuracy),
            real(s.val_ece),
            real(s.test_accuracy),
            real(s.test_ece)
        );
        println!("{m:>8} {:>8} {:>8}", pct(s.test_accuracy), pct(s.test_ece));
    }

    let mut matched = String::from("weight,method,test_accuracy,test_ece\n");
    let ce = train_and_score(base, LossSpec::ce(), &splits, bins)?;
    matched += &format!(
        "{},ce,{},{}\n",
        real(0.0),
        real(ce.test_accuracy),
        real(ce.test_ece)
    );
    println!("{:>8} {:>10} {:>10}", "weight", "LS ECE", "MbLS0 ECE");
    println!(
        "{:>8} {:>10} {:>10}",
        "0 (CE)",
        pct(ce.test_ece),
        pct(ce.test_ece)
    );
    for &w in &args.weights {
        let a = train_and_score(base, LossSpec::ls(w), &splits, bins)?;
        let b = train_and_score(base, LossSpec::mbls(0.0, w), &splits, bins)?;
        matched += &format!(
            "{},ls,{},{}\n",
            real(w),
            real(a.test_accuracy),
            real(a.test_ece)
        );
        matched += &format!(
            "{},mbls,{},{}\n",
            real(w),
            real(b.test_accuracy),
            real(b.test_ece)
        );
        println!("{w:>8} {:>10} {:>10}", pct(a.test_ece), pct(b.test_ece));
    }

    let out = &config.output_dir;
    save_text(out.join("margin_sweep.csv"), &sweep)?;
    save_text(out.join("matched_weights.csv"), &matched)?;
    save_text(out.join("config.json"), &config.to_json())?;
    println!("tables written to {}", out.display());
    Ok(())
}
