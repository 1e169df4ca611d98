//! Single-run experiment driver: executes one training run and writes the
//! run directory (manifest, metrics CSV, dataset, checkpoints, decomposition
//! traces, charts).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use dpgd_core::analysis::evaluate_test_metrics;
use dpgd_core::{
    run_training_with, Activation, Dataset, Error as CoreError, Mode, NoiseSpec, RunHooks,
    RunRecord, SignalSpec, TestMetrics, Weights,
};

use crate::config::ExperimentConfig;
use crate::svg::{line_chart, Series};
use crate::CliError;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub created_unix: u64,
    pub wall_clock_secs: f64,
    pub seeds: ManifestSeeds,
    pub config: ExperimentConfig,
    /// Canonical flat config text; reparse + rerun reproduces the metrics.
    pub config_text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestSeeds {
    pub data: u64,
    pub train: u64,
    pub eval: u64,
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub record: RunRecord,
}

fn map_core(e: CoreError) -> CliError {
    match e {
        CoreError::Divergence { step, detail } => CliError::Divergence { step, detail },
        other => CliError::Other(other.to_string()),
    }
}

pub fn build_inputs(cfg: &ExperimentConfig) -> Result<(Dataset, Activation), CliError> {
    let signal = SignalSpec::uniform_direction(cfg.data.d, cfg.data.mu_norm).map_err(map_core)?;
    let noise = NoiseSpec::new(cfg.data.sigma_p).map_err(map_core)?;
    let data = Dataset::sample(cfg.data.n, &signal, &noise, cfg.data.seed).map_err(map_core)?;
    let act = Activation::new(cfg.model.kappa, cfg.model.q).map_err(map_core)?;
    Ok((data, act))
}

/// Execute the configured run and write all artifacts under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let started = Instant::now();
    let (data, act) = build_inputs(cfg)?;
    let train_cfg = cfg.train_config().map_err(map_core)?;
    let eval_cfg = cfg.eval_config();
    let signal = data.signal().clone();
    let noise = *data.noise();

    // Test metrics are only computable in direct mode (kernel mode never
    // materializes weights).
    let mut eval_hook = |_step: u64, w: &Weights| -> TestMetrics {
        evaluate_test_metrics(w, &signal, &noise, &act, &eval_cfg)
            .expect("eval config validated upfront")
    };
    let hooks = match train_cfg.mode {
        Mode::Direct => RunHooks { eval: Some(&mut eval_hook), injected_projections: None },
        Mode::Kernel => RunHooks::default(),
    };
    let record = run_training_with(&data, &act, &train_cfg, hooks).map_err(map_core)?;

    fs::create_dir_all(out_dir)?;
    write_artifacts(cfg, &data, &record, out_dir, started.elapsed().as_secs_f64())?;
    Ok(RunOutput { dir: out_dir.to_path_buf(), record })
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    data: &Dataset,
    record: &RunRecord,
    dir: &Path,
    wall_clock_secs: f64,
) -> Result<(), CliError> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        wall_clock_secs,
        seeds: ManifestSeeds { data: cfg.data.seed, train: cfg.train.seed, eval: cfg.eval.seed },
        config: cfg.clone(),
        config_text: cfg.render(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;

    let mut metrics = Vec::new();
    record.write_metrics_csv(&mut metrics).map_err(map_core)?;
    fs::write(dir.join("metrics.csv"), metrics)?;

    let mut ds_buf = Vec::new();
    data.export(&mut ds_buf).map_err(map_core)?;
    fs::write(dir.join("dataset.bin"), ds_buf)?;

    let ck_dir = dir.join("checkpoints");
    fs::create_dir_all(&ck_dir)?;
    save_weights(&record.initial_weights, &ck_dir.join("w_init.bin"))?;
    if let Some(w) = &record.final_weights {
        save_weights(w, &ck_dir.join("w_final.bin"))?;
    }
    for (step, w) in &record.checkpoints {
        save_weights(w, &ck_dir.join(format!("step_{step:08}.bin")))?;
    }

    if let Some(dec) = &record.decomposition {
        let mut buf = Vec::new();
        dec.write_trace_csv(&mut buf).map_err(map_core)?;
        fs::write(dir.join("decomp_trace.csv"), buf)?;
        let mut buf = Vec::new();
        dec.write_lambda_csv(&mut buf).map_err(map_core)?;
        fs::write(dir.join("lambda_trace.csv"), buf)?;
        if let Some(sum) = dec.final_state.noise_sum() {
            let mut f = fs::File::create(dir.join("noise_sum.bin"))?;
            f.write_all(b"DPGDNS01")?;
            for v in sum {
                f.write_all(&v.to_le_bytes())?;
            }
        }
    }

    if cfg.output.emit_svg {
        write_run_charts(record, dir)?;
    }
    Ok(())
}

fn save_weights(w: &Weights, path: &Path) -> Result<(), CliError> {
    let mut buf = Vec::new();
    w.save(&mut buf).map_err(map_core)?;
    fs::write(path, buf)?;
    Ok(())
}

fn write_run_charts(record: &RunRecord, dir: &Path) -> Result<(), CliError> {
    let train: Vec<(f64, f64)> =
        record.metrics.iter().map(|r| (r.step as f64, r.train_loss)).collect();
    let svg = line_chart(
        "training loss",
        "step",
        "loss",
        &[Series { label: "train".into(), points: train }],
        true,
    );
    fs::write(dir.join("train_loss.svg"), svg)?;

    let test_loss: Vec<(f64, f64)> = record
        .metrics
        .iter()
        .filter_map(|r| r.test_loss.map(|v| (r.step as f64, v)))
        .collect();
    if !test_loss.is_empty() {
        let svg = line_chart(
            "test loss",
            "step",
            "loss",
            &[Series { label: "test".into(), points: test_loss }],
            false,
        );
        fs::write(dir.join("test_loss.svg"), svg)?;
    }
    let test_acc: Vec<(f64, f64)> = record
        .metrics
        .iter()
        .filter_map(|r| r.test_acc.map(|v| (r.step as f64, v)))
        .collect();
    if !test_acc.is_empty() {
        let svg = line_chart(
            "test accuracy",
            "step",
            "accuracy",
            &[Series { label: "test".into(), points: test_acc }],
            false,
        );
        fs::write(dir.join("test_acc.svg"), svg)?;
    }
    Ok(())
}

pub fn load_manifest(run_dir: &Path) -> Result<Manifest, CliError> {
    let text = fs::read_to_string(run_dir.join("manifest.json"))
        .map_err(|e| CliError::Other(format!("reading manifest: {e}")))?;
    Ok(serde_json::from_str(&text)?)
}
