use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::{DatasetKind, TrainConfig};
use super::svg;
use crate::data::{gen_gaussian_mixture, load_idx, Dataset};
use crate::models::{evaluate, EvalMetrics, LossBreakdown, TrainState};
use crate::vq::usage_histogram;
use crate::{Error, Result};

/// Environment variable overriding `output_dir`.
pub const OUT_ENV: &str = "OTVQ_OUT";

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOSS_CURVE_FILE: &str = "loss_curve.svg";

pub fn build_dataset(cfg: &TrainConfig) -> Result<Dataset> {
    match cfg.dataset {
        DatasetKind::GaussianMixture => gen_gaussian_mixture(
            cfg.n_clusters,
            cfg.data_dim,
            cfg.points_per_cluster,
            cfg.spread,
            cfg.data_seed,
        ),
        DatasetKind::Idx => {
            let images = cfg.idx_images.as_deref().expect("validated");
            load_idx(images, cfg.idx_labels.as_deref(), cfg.idx_limit)
        }
    }
}

/// Output directory after applying the environment override.
pub fn output_dir(cfg: &TrainConfig) -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| cfg.output_dir.clone(), PathBuf::from)
}

/// Column names of `metrics.csv` for `m` latent components.
pub fn metrics_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "recon_mse", "ws_term", "kl_term", "total_loss"]
        .map(String::from)
        .to_vec();
    h.extend((0..m).map(|c| format!("perplexity_m{c}")));
    h.push("wallclock_ms".into());
    h
}

/// One logged interval: loss parts averaged over its iterations, perplexity of the codeword
/// indices chosen on its batches.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub iter: u64,
    pub recon_mse: f64,
    pub ws_term: f64,
    pub kl_term: f64,
    pub total_loss: f64,
    pub perplexity: Vec<f64>,
    pub wallclock_ms: u64,
}

impl MetricsRow {
    fn record(&self) -> Vec<String> {
        let mut r = vec![
            self.iter.to_string(),
            self.recon_mse.to_string(),
            self.ws_term.to_string(),
            self.kl_term.to_string(),
            self.total_loss.to_string(),
        ];
        r.extend(self.perplexity.iter().map(f64::to_string));
        r.push(self.wallclock_ms.to_string());
        r
    }
}

#[derive(Default)]
struct Interval {
    n: usize,
    sums: LossBreakdown,
    indices: Vec<usize>,
}

impl Interval {
    fn add(&mut self, l: &LossBreakdown, indices: Vec<usize>) {
        self.n += 1;
        self.sums.recon += l.recon;
        self.sums.ws_term += l.ws_term;
        self.sums.kl_term += l.kl_term;
        self.sums.total += l.total;
        self.indices.extend(indices);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub method: String,
    pub seed: u64,
    pub iters: u64,
    pub mse: f64,
    /// `"inf"` in the JSON file when the reconstruction is exact.
    #[serde(serialize_with = "finite_or_inf")]
    pub psnr: f64,
    pub perplexity: Vec<f64>,
    pub mean_perplexity: f64,
    pub active_codewords: Vec<usize>,
    pub usage_counts: Vec<Vec<u64>>,
}

fn finite_or_inf<S: serde::Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(if *v > 0.0 { "inf" } else { "-inf" })
    }
}

impl RunSummary {
    pub fn new(state: &TrainState, eval: &EvalMetrics) -> Self {
        Self {
            method: state.settings.method.name().into(),
            seed: state.seed,
            iters: state.iteration,
            mse: eval.mse,
            psnr: eval.psnr,
            perplexity: eval.usage.perplexity.clone(),
            mean_perplexity: eval.usage.mean_perplexity(),
            active_codewords: eval.usage.active_codewords(),
            usage_counts: eval.usage.counts.clone(),
        }
    }
}

/// Trains per `cfg`, writing metrics, checkpoint, plots and summary under `out`.
///
/// A numeric failure leaves the rows logged so far in `metrics.csv` and is returned as an
/// error.
pub fn run_experiment_in(cfg: &TrainConfig, out: &Path) -> Result<RunSummary> {
    fs::create_dir_all(out)?;
    let dataset = build_dataset(cfg)?;
    let mut state = TrainState::new(
        &cfg.model_config(),
        cfg.train_settings(),
        &dataset,
        cfg.seed,
    )?;
    let m = cfg.components;
    let mut writer = csv::Writer::from_writer(File::create(out.join(METRICS_FILE))?);
    writer.write_record(metrics_header(m)).map_err(csv_err)?;
    writer.flush()?;

    let start = Instant::now();
    let mut rows = Vec::new();
    let mut interval = Interval::default();
    for it in 0..cfg.iters {
        let x = state.sampler.next_batch(&dataset)?;
        let (loss, indices) = state.train_step_with_indices(&x)?;
        interval.add(&loss, indices);
        if (it + 1) % cfg.log_every == 0 || it + 1 == cfg.iters {
            let done = std::mem::take(&mut interval);
            let n = done.n as f64;
            let usage = usage_histogram(&done.indices, m, cfg.codebook_size)?;
            let row = MetricsRow {
                iter: state.iteration,
                recon_mse: done.sums.recon / n,
                ws_term: done.sums.ws_term / n,
                kl_term: done.sums.kl_term / n,
                total_loss: done.sums.total / n,
                perplexity: usage.perplexity,
                wallclock_ms: if cfg.record_wallclock {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            };
            writer.write_record(row.record()).map_err(csv_err)?;
            writer.flush()?;
            rows.push(row);
        }
    }
    drop(writer);

    state.save(&out.join(CHECKPOINT_FILE))?;
    let eval = evaluate(&state.model, &dataset)?;
    let summary = RunSummary::new(&state, &eval);
    write_plots(out, cfg, &rows, &eval)?;
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.into()))?;
    fs::write(out.join(SUMMARY_FILE), text + "\n")?;
    Ok(summary)
}

/// [`run_experiment_in`] at the configured (or environment-overridden) output directory.
pub fn run_experiment(cfg: &TrainConfig) -> Result<RunSummary> {
    run_experiment_in(cfg, &output_dir(cfg))
}

fn write_plots(
    out: &Path,
    cfg: &TrainConfig,
    rows: &[MetricsRow],
    eval: &EvalMetrics,
) -> Result<()> {
    let curve: Vec<(f64, f64)> = rows.iter().map(|r| (r.iter as f64, r.total_loss)).collect();
    let title = format!("{} training loss", cfg.method.name());
    svg::emit_svg(
        &out.join(LOSS_CURVE_FILE),
        &svg::line_chart(&title, "iteration", "total loss", &curve),
    )?;
    for (c, counts) in eval.usage.counts.iter().enumerate() {
        let title = format!(
            "{} codeword usage, component {c} (perplexity {:.2})",
            cfg.method.name(),
            eval.usage.perplexity[c]
        );
        svg::emit_svg(
            &out.join(format!("usage_hist_m{c}.svg")),
            &svg::histogram(&title, "codeword", "count", counts),
        )?;
    }
    Ok(())
}

/// Evaluates a saved checkpoint on the dataset described by `cfg`.
pub fn evaluate_checkpoint(checkpoint: &Path, cfg: &TrainConfig) -> Result<RunSummary> {
    let state = TrainState::load(checkpoint)?;
    let dataset = build_dataset(cfg)?;
    let eval = evaluate(&state.model, &dataset)?;
    Ok(RunSummary::new(&state, &eval))
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}
