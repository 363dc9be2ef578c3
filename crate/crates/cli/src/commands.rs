//! Command implementations. Each command resolves its parameters fully,
//! runs, writes its artifacts plus a manifest, and removes partial outputs
//! on failure. `rerun` replays a manifest's command bit-exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use scsc::applications::{infer_codes, inpaint, reconstruct, InpaintOptions};
use scsc::drivers::{
    train_sbcsc, train_sbcsc_observed, train_socsc, DrawPolicy, IterationStats, StreamSource,
};
use scsc::metrics::{nonzero_fraction, psnr_rescaled};
use scsc::signal::{NormalizeWindow, Signal};
use scsc::{cscd, ObservationMask, TrainConfig};

use crate::io::{file_stem, load_images, OutputTracker};
use crate::manifest::RunManifest;
use crate::mosaic::save_mosaic;
use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchParams {
    pub config: TrainConfig,
    pub normalize: bool,
    pub mosaic: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineParams {
    pub config: TrainConfig,
    pub normalize: bool,
    pub mosaic: bool,
    pub sequential_draw: bool,
    pub eval_schedule: String,
    pub test_inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructParams {
    pub dict: PathBuf,
    pub lambda: f64,
    pub admm_iters: usize,
    pub normalize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InpaintParams {
    pub dict: PathBuf,
    pub observe: f64,
    pub lambda: f64,
    pub admm_iters: usize,
    pub trials: u64,
    pub seed: u64,
    pub paste_observed: bool,
    pub normalize: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchParams {
    pub config: TrainConfig,
    pub rates: Vec<f64>,
    pub normalize: bool,
}

fn params_json<T: Serialize>(params: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(params).map_err(|e| CliError::io(format!("params serialization: {e}")))
}

fn prepare_out(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("{}: {e}", out.display())))
}

fn with_cleanup(
    tracker: &mut OutputTracker,
    body: impl FnOnce(&mut OutputTracker) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let result = body(tracker);
    if result.is_err() {
        tracker.discard_all();
    }
    result
}

pub fn run_train_batch(
    params: &BatchParams,
    inputs: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    params.config.validate().map_err(CliError::from)?;
    prepare_out(out)?;
    let mut tracker = OutputTracker::default();
    with_cleanup(&mut tracker, |tracker| {
        let mut manifest = RunManifest::start(
            "train-batch",
            params.config.seed,
            params_json(params)?,
            inputs.to_vec(),
        );
        let images = load_images(inputs, params.normalize)?;
        let outcome = train_sbcsc(&images, &params.config).map_err(CliError::from)?;

        let dict_path = out.join("dict.cscd");
        cscd::save(&dict_path, &outcome.dictionary).map_err(CliError::from)?;
        tracker.track(&dict_path);
        manifest.record_output("dict", &dict_path);

        let trace_path = out.join("trace.csv");
        outcome.trace.save(&trace_path).map_err(CliError::from)?;
        tracker.track(&trace_path);
        manifest.record_output("trace", &trace_path);

        if params.mosaic {
            let mosaic_path = out.join("filters.png");
            save_mosaic(&outcome.dictionary, &mosaic_path)?;
            tracker.track(&mosaic_path);
            manifest.record_output("mosaic", &mosaic_path);
        }

        let manifest_path = out.join("manifest.json");
        manifest.record_output("manifest", &manifest_path);
        manifest.finish_and_save(&manifest_path)?;
        tracker.track(&manifest_path);

        let last = outcome.trace.last().expect("at least one iteration");
        println!(
            "train-batch: {} iterations, objective {:.6}, nnz {:.5}, {:.2}s training time -> {}",
            last.iter,
            last.objective,
            last.nnz_frac,
            last.wall_s,
            out.display()
        );
        Ok(())
    })
}

pub fn run_train_online(
    params: &OnlineParams,
    inputs: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    params.config.validate().map_err(CliError::from)?;
    if params.eval_schedule != "pow2" {
        return Err(CliError::usage(format!(
            "unsupported eval schedule `{}`",
            params.eval_schedule
        )));
    }
    prepare_out(out)?;
    let mut tracker = OutputTracker::default();
    with_cleanup(&mut tracker, |tracker| {
        let mut manifest = RunManifest::start(
            "train-online",
            params.config.seed,
            params_json(params)?,
            inputs.to_vec(),
        );
        let policy = if params.sequential_draw {
            DrawPolicy::Sequential
        } else {
            DrawPolicy::UniformRandom
        };
        let normalize = params.normalize.then(NormalizeWindow::default);
        let stream = StreamSource::from_files(inputs.to_vec(), policy, normalize)
            .map_err(CliError::from)?;
        let test_images = if params.test_inputs.is_empty() {
            None
        } else {
            Some(load_images(&params.test_inputs, params.normalize)?)
        };
        let outcome =
            train_socsc(&stream, &params.config, test_images.as_deref()).map_err(CliError::from)?;

        let dict_path = out.join("dict.cscd");
        cscd::save(&dict_path, &outcome.dictionary).map_err(CliError::from)?;
        tracker.track(&dict_path);
        manifest.record_output("dict", &dict_path);

        let trace_path = out.join("trace.csv");
        outcome.trace.save(&trace_path).map_err(CliError::from)?;
        tracker.track(&trace_path);
        manifest.record_output("trace", &trace_path);

        if params.mosaic {
            let mosaic_path = out.join("filters.png");
            save_mosaic(&outcome.dictionary, &mosaic_path)?;
            tracker.track(&mosaic_path);
            manifest.record_output("mosaic", &mosaic_path);
        }

        let manifest_path = out.join("manifest.json");
        manifest.record_output("manifest", &manifest_path);
        manifest.finish_and_save(&manifest_path)?;
        tracker.track(&manifest_path);

        let last = outcome.trace.last().expect("at least one step");
        match (last.test_objective, last.test_psnr_db) {
            (Some(obj), Some(psnr)) => println!(
                "train-online: {} steps, test objective {:.6}, test PSNR {:.2} dB, {:.2}s training time -> {}",
                last.iter, obj, psnr, last.wall_s, out.display()
            ),
            _ => println!(
                "train-online: {} steps, batch objective {:.6}, {:.2}s training time -> {}",
                last.iter, last.objective, last.wall_s, out.display()
            ),
        }
        Ok(())
    })
}

pub fn run_reconstruct(
    params: &ReconstructParams,
    inputs: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    prepare_out(out)?;
    let mut tracker = OutputTracker::default();
    with_cleanup(&mut tracker, |tracker| {
        let mut manifest =
            RunManifest::start("reconstruct", 0, params_json(params)?, inputs.to_vec());
        let dict = cscd::load(&params.dict).map_err(CliError::from)?;
        let images = load_images(inputs, params.normalize)?;

        let metrics_path = out.join("metrics.csv");
        let mut metrics = csv::Writer::from_path(&metrics_path)
            .map_err(|e| CliError::io(format!("{}: {e}", metrics_path.display())))?;
        tracker.track(&metrics_path);
        metrics
            .write_record(["image", "psnr_db", "nnz_frac"])
            .map_err(|e| CliError::io(e.to_string()))?;

        for (path, image) in inputs.iter().zip(&images) {
            let codes =
                infer_codes(image, &dict, params.lambda, params.admm_iters).map_err(CliError::from)?;
            let recon = reconstruct(&dict, &codes).map_err(CliError::from)?;
            let psnr = psnr_rescaled(image, &recon).map_err(CliError::from)?;
            let nnz = nonzero_fraction(&codes, 0.1);
            metrics
                .write_record([
                    file_stem(path),
                    format!("{psnr}"),
                    format!("{nnz}"),
                ])
                .map_err(|e| CliError::io(e.to_string()))?;

            let png_path = out.join(format!("recon_{}.png", file_stem(path)));
            save_in_reference_range(&recon, image, &png_path)?;
            tracker.track(&png_path);
            println!("reconstruct {}: PSNR {:.2} dB, nnz {:.5}", file_stem(path), psnr, nnz);
        }
        metrics.flush().map_err(|e| CliError::io(e.to_string()))?;
        manifest.record_output("metrics", &metrics_path);

        let manifest_path = out.join("manifest.json");
        manifest.record_output("manifest", &manifest_path);
        manifest.finish_and_save(&manifest_path)?;
        tracker.track(&manifest_path);
        Ok(())
    })
}

pub fn run_inpaint(
    params: &InpaintParams,
    inputs: &[PathBuf],
    out: &Path,
) -> Result<(), CliError> {
    if !(params.observe > 0.0 && params.observe <= 1.0) {
        return Err(CliError::usage("--observe must be in (0, 1]".to_string()));
    }
    if params.trials == 0 {
        return Err(CliError::usage("--trials must be >= 1".to_string()));
    }
    prepare_out(out)?;
    let mut tracker = OutputTracker::default();
    with_cleanup(&mut tracker, |tracker| {
        let mut manifest =
            RunManifest::start("inpaint", params.seed, params_json(params)?, inputs.to_vec());
        let dict = cscd::load(&params.dict).map_err(CliError::from)?;
        let images = load_images(inputs, params.normalize)?;
        let opts = InpaintOptions {
            lambda: params.lambda,
            admm_iters: params.admm_iters,
            paste_observed: params.paste_observed,
            ..Default::default()
        };

        let metrics_path = out.join("metrics.csv");
        let mut metrics = csv::Writer::from_path(&metrics_path)
            .map_err(|e| CliError::io(format!("{}: {e}", metrics_path.display())))?;
        tracker.track(&metrics_path);
        metrics
            .write_record(["image", "trial", "observe_rate", "psnr_db", "baseline_psnr_db"])
            .map_err(|e| CliError::io(e.to_string()))?;

        for (path, image) in inputs.iter().zip(&images) {
            let mut psnr_sum = 0.0;
            let mut base_sum = 0.0;
            for trial in 0..params.trials {
                let omask = ObservationMask::random(
                    image.height(),
                    image.width(),
                    params.observe,
                    params.seed.wrapping_add(trial),
                )
                .map_err(CliError::from)?;
                let observed = omask.zero_filled(image);
                let recon = inpaint(&observed, &omask, &dict, &opts).map_err(CliError::from)?;
                let psnr = psnr_rescaled(image, &recon).map_err(CliError::from)?;
                let base = psnr_rescaled(image, &observed).map_err(CliError::from)?;
                psnr_sum += psnr;
                base_sum += base;
                metrics
                    .write_record([
                        file_stem(path),
                        trial.to_string(),
                        format!("{}", params.observe),
                        format!("{psnr}"),
                        format!("{base}"),
                    ])
                    .map_err(|e| CliError::io(e.to_string()))?;
                if trial == 0 {
                    let png_path = out.join(format!("inpaint_{}.png", file_stem(path)));
                    save_in_reference_range(&recon, image, &png_path)?;
                    tracker.track(&png_path);
                }
            }
            let n = params.trials as f64;
            println!(
                "inpaint {}: mean PSNR {:.2} dB over {} trials (zero-filled baseline {:.2} dB)",
                file_stem(path),
                psnr_sum / n,
                params.trials,
                base_sum / n
            );
        }
        metrics.flush().map_err(|e| CliError::io(e.to_string()))?;
        manifest.record_output("metrics", &metrics_path);

        let manifest_path = out.join("manifest.json");
        manifest.record_output("manifest", &manifest_path);
        manifest.finish_and_save(&manifest_path)?;
        tracker.track(&manifest_path);
        Ok(())
    })
}

pub fn run_bench(params: &BenchParams, inputs: &[PathBuf], out: &Path) -> Result<(), CliError> {
    if params.rates.is_empty() {
        return Err(CliError::usage("--rates must not be empty".to_string()));
    }
    prepare_out(out)?;
    let mut tracker = OutputTracker::default();
    with_cleanup(&mut tracker, |tracker| {
        let mut manifest = RunManifest::start(
            "bench",
            params.config.seed,
            params_json(params)?,
            inputs.to_vec(),
        );
        let images = load_images(inputs, params.normalize)?;

        let bench_path = out.join("bench.csv");
        let mut writer = csv::Writer::from_path(&bench_path)
            .map_err(|e| CliError::io(format!("{}: {e}", bench_path.display())))?;
        tracker.track(&bench_path);
        writer
            .write_record(["p", "iter", "code_update_s", "filter_update_s", "objective"])
            .map_err(|e| CliError::io(e.to_string()))?;

        for &rate in &params.rates {
            let mut cfg = params.config.clone();
            cfg.subsample_rate = rate;
            cfg.tol = 0.0; // fixed iteration count for comparable timings
            cfg.validate().map_err(CliError::from)?;
            let mut rows: Vec<IterationStats> = Vec::new();
            train_sbcsc_observed(&images, &cfg, |stats| rows.push(stats.clone()))
                .map_err(CliError::from)?;
            let mut code_total = 0.0;
            for stats in &rows {
                code_total += stats.code_update_s;
                writer
                    .write_record([
                        format!("{rate}"),
                        stats.iteration.to_string(),
                        format!("{}", stats.code_update_s),
                        format!("{}", stats.filter_update_s),
                        format!("{}", stats.objective),
                    ])
                    .map_err(|e| CliError::io(e.to_string()))?;
            }
            println!(
                "bench p={rate}: mean code update {:.4}s over {} iterations",
                code_total / rows.len() as f64,
                rows.len()
            );
        }
        writer.flush().map_err(|e| CliError::io(e.to_string()))?;
        manifest.record_output("bench", &bench_path);

        let manifest_path = out.join("manifest.json");
        manifest.record_output("manifest", &manifest_path);
        manifest.finish_and_save(&manifest_path)?;
        tracker.track(&manifest_path);
        Ok(())
    })
}

pub fn run_rerun(manifest_path: &Path, out: &Path) -> Result<(), CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    let inputs = manifest.inputs.clone();
    let parse = |e: serde_json::Error| {
        CliError::usage(format!("manifest params do not match `{}`: {e}", manifest.command))
    };
    match manifest.command.as_str() {
        "train-batch" => {
            let params: BatchParams = serde_json::from_value(manifest.params).map_err(parse)?;
            run_train_batch(&params, &inputs, out)
        }
        "train-online" => {
            let params: OnlineParams = serde_json::from_value(manifest.params).map_err(parse)?;
            run_train_online(&params, &inputs, out)
        }
        "reconstruct" => {
            let params: ReconstructParams =
                serde_json::from_value(manifest.params).map_err(parse)?;
            run_reconstruct(&params, &inputs, out)
        }
        "inpaint" => {
            let params: InpaintParams = serde_json::from_value(manifest.params).map_err(parse)?;
            run_inpaint(&params, &inputs, out)
        }
        "bench" => {
            let params: BenchParams = serde_json::from_value(manifest.params).map_err(parse)?;
            run_bench(&params, &inputs, out)
        }
        other => Err(CliError::usage(format!("manifest for unknown command `{other}`"))),
    }
}

/// Save `image` as PNG after mapping it through the reference's
/// [min, max] -> [0, 1] affine map (the same convention PSNR uses).
fn save_in_reference_range(
    image: &Signal,
    reference: &Signal,
    path: &Path,
) -> Result<(), CliError> {
    let (lo, hi) = reference.min_max();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mapped = Signal::new(image.pixels().mapv(|v| (v - lo) / span))
        .map_err(CliError::from)?;
    mapped.save_png(path).map_err(CliError::from)?;
    // make sure buffered bytes hit the disk before we report success
    std::io::stdout().flush().ok();
    Ok(())
}
