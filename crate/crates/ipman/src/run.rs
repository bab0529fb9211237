//! Pipeline orchestration: each stage reads its inputs from the per-run
//! output directory and writes its artifacts back, so stages can be run
//! individually from the CLI or chained by `run_full`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::barrier::{compute_certificate, train_stage2, Certificate, Stage2LogRow};
use crate::config::{ExperimentConfig, MetricConvention};
use crate::error::{Error, Result};
use crate::gan::{
    coverage_report, load_gan_model, save_gan_model, train_stage1, CoverageReport, GanModel,
};
use crate::matrix::Matrix2;
use crate::metrics::{
    grid_optimize, metrics_report, multistart_optimize, trim_outliers, MetricsReport, SampleSet,
};
use crate::objectives::OptimalSet;
use crate::plot::emit_svg_scatter;
use crate::regions::{Region, RegionKind};
use crate::rng::RandomStream;

pub const FEASIBLE_CSV: &str = "samples_feasible.csv";
pub const INFEASIBLE_CSV: &str = "samples_infeasible.csv";
pub const STAGE1_LOG_CSV: &str = "stage1_log.csv";
pub const STAGE1_MODEL_BIN: &str = "stage1_model.bin";
pub const STAGE1_SUMMARY_JSON: &str = "stage1_summary.json";
pub const STAGE2_LOG_CSV: &str = "stage2_log.csv";
pub const STAGE2_MODEL_BIN: &str = "stage2_model.bin";
pub const STAGE2_SUMMARY_JSON: &str = "stage2_summary.json";
pub const ORACLE_JSON: &str = "oracle.json";
pub const GENERATED_CSV: &str = "generated_samples.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SCATTER_STAGE1_SVG: &str = "scatter_stage1.svg";
pub const SCATTER_STAGE2_SVG: &str = "scatter_stage2.svg";
pub const CONFIG_COPY_TOML: &str = "config.toml";
pub const TRIM_PERCENTILE: f64 = 90.0;

/// Grid oracle is practical up to this many dimensions; above it we fall
/// back to multistart descent.
const GRID_MAX_DIM: usize = 4;

// ---------------------------------------------------------------------------
// csv helpers

pub fn write_points_csv(path: &Path, points: &Matrix2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    let header: Vec<String> = (1..=points.cols()).map(|j| format!("x{j}")).collect();
    w.write_record(&header)?;
    for row in points.iter_rows() {
        let rec: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_points_csv(path: &Path) -> Result<Matrix2<f64>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_reader(BufReader::new(fs::File::open(path)?));
    let cols = r.headers()?.len();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Domain(format!("bad csv float '{field}' in {path:?}")))?;
            data.push(v);
        }
        rows += 1;
    }
    Matrix2::from_vec(rows, cols, data)
}

fn write_log_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(fs::File::create(path)?));
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn save_model(path: &Path, model: &GanModel<f64>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    save_gan_model(model, &mut w)
}

fn load_model(path: &Path) -> Result<GanModel<f64>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let mut r = BufReader::new(fs::File::open(path)?);
    load_gan_model(&mut r)
}

fn stage_rng(cfg: &ExperimentConfig, label: &str) -> RandomStream {
    RandomStream::new(cfg.seed).fork(label)
}

fn ensure_run_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.run_dir();
    fs::create_dir_all(&dir)?;
    let copy = dir.join(CONFIG_COPY_TOML);
    if !copy.exists() {
        let text = toml::to_string_pretty(cfg)
            .map_err(|e| Error::Config(format!("config serialize: {e}")))?;
        fs::write(copy, text)?;
    }
    Ok(dir)
}

// ---------------------------------------------------------------------------
// stage commands

/// Draws the feasible/infeasible training sets and writes them as csv.
pub fn cmd_sample(cfg: &ExperimentConfig) -> Result<(PathBuf, PathBuf)> {
    let dir = ensure_run_dir(cfg)?;
    let region = cfg.build_region()?;
    let mut rng = stage_rng(cfg, "sample");
    let feasible = region.sample_feasible(&cfg.sampler, &mut rng)?;
    let infeasible = region.sample_infeasible(&cfg.sampler, &mut rng)?;
    let fpath = dir.join(FEASIBLE_CSV);
    let ipath = dir.join(INFEASIBLE_CSV);
    write_points_csv(&fpath, &feasible)?;
    write_points_csv(&ipath, &infeasible)?;
    Ok((fpath, ipath))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage1Summary {
    pub iterations: usize,
    pub final_disc_loss: f64,
    pub final_gen_loss: f64,
    /// Last logged discriminator AUC over the training sets.
    pub final_auc: Option<f64>,
    pub coverage: CoverageReport,
}

/// Trains the GAN on the sampled sets; writes the model checkpoint, the
/// training log and (in 2-D) a scatter plot.
pub fn cmd_stage1(cfg: &ExperimentConfig) -> Result<Stage1Summary> {
    let dir = ensure_run_dir(cfg)?;
    let region = cfg.build_region()?;
    let feasible = read_points_csv(&dir.join(FEASIBLE_CSV))?;
    let infeasible = read_points_csv(&dir.join(INFEASIBLE_CSV))?;
    let mut rng = stage_rng(cfg, "stage1");
    let (model, log) = train_stage1(&feasible, &infeasible, &cfg.gan, &mut rng)?;
    save_model(&dir.join(STAGE1_MODEL_BIN), &model)?;
    write_log_csv(&dir.join(STAGE1_LOG_CSV), &log)?;
    let coverage = coverage_report(&model, &region, 1000, &mut rng.fork("coverage"))?;
    let summary = Stage1Summary {
        iterations: log.len(),
        final_disc_loss: log.last().map_or(f64::NAN, |r| r.disc_loss),
        final_gen_loss: log.last().map_or(f64::NAN, |r| r.gen_loss),
        final_auc: log.iter().rev().find_map(|r| r.auc_snapshot),
        coverage,
    };
    write_json(&dir.join(STAGE1_SUMMARY_JSON), &summary)?;
    if region.dimension() == 2 {
        scatter(cfg, &region, &model, &feasible, &dir.join(SCATTER_STAGE1_SVG))?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stage2Summary {
    pub outer_iterations_run: usize,
    pub final_lambda: f64,
    pub final_mean_f: f64,
    pub final_mean_barrier: f64,
    pub final_coverage: f64,
    pub collapse_warnings: usize,
}

fn stage2_summary(log: &[Stage2LogRow]) -> Stage2Summary {
    let last = log.last();
    Stage2Summary {
        outer_iterations_run: log.len(),
        final_lambda: last.map_or(f64::NAN, |r| r.lambda),
        final_mean_f: last.map_or(f64::NAN, |r| r.mean_f),
        final_mean_barrier: last.map_or(f64::NAN, |r| r.mean_barrier),
        final_coverage: last.map_or(f64::NAN, |r| r.coverage),
        collapse_warnings: log.iter().filter(|r| r.collapse_warning).count(),
    }
}

/// Retrains the generator against the frozen discriminator barrier; writes
/// the stage-2 checkpoint, log and (in 2-D) a scatter plot.
pub fn cmd_stage2(cfg: &ExperimentConfig) -> Result<Stage2Summary> {
    let dir = ensure_run_dir(cfg)?;
    let region = cfg.build_region()?;
    let objective = cfg.build_objective(&region)?;
    let mut model = load_model(&dir.join(STAGE1_MODEL_BIN))?;
    let mut rng = stage_rng(cfg, "stage2");
    let log = train_stage2(&mut model, &objective, &region, &cfg.barrier, &mut rng)?;
    save_model(&dir.join(STAGE2_MODEL_BIN), &model)?;
    write_log_csv(&dir.join(STAGE2_LOG_CSV), &log)?;
    let summary = stage2_summary(&log);
    write_json(&dir.join(STAGE2_SUMMARY_JSON), &summary)?;
    if region.dimension() == 2 {
        let feasible = read_points_csv(&dir.join(FEASIBLE_CSV))?;
        scatter(cfg, &region, &model, &feasible, &dir.join(SCATTER_STAGE2_SVG))?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRecord {
    /// Hash of the region/objective/oracle settings this record was computed
    /// for; stale caches are recomputed.
    pub key: String,
    pub method: String,
    pub best_point: Vec<f64>,
    pub best_value: f64,
    pub near_optimal: Vec<Vec<f64>>,
    pub tolerance: Option<f64>,
}

fn oracle_key(cfg: &ExperimentConfig) -> String {
    let payload = serde_json::to_vec(&(
        &cfg.region,
        &cfg.objective,
        cfg.evaluation.oracle_grid_step,
        cfg.evaluation.oracle_multistarts,
        cfg.evaluation.oracle_iters_per_start,
    ))
    .expect("oracle key serializes");
    let digest = Sha256::digest(&payload);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn compute_oracle(cfg: &ExperimentConfig, region: &Region<f64>) -> Result<OracleRecord> {
    let objective = cfg.build_objective(region)?;
    let key = oracle_key(cfg);
    if region.dimension() <= GRID_MAX_DIM {
        let opt = grid_optimize(region, &objective, cfg.evaluation.oracle_grid_step, None)?;
        Ok(OracleRecord {
            key,
            method: "grid".into(),
            best_point: opt.best_point,
            best_value: opt.best_value,
            near_optimal: opt.near_optimal,
            tolerance: Some(opt.tolerance),
        })
    } else {
        // oracle randomness is decoupled from the training stream
        let mut rng = stage_rng(cfg, "oracle");
        let (best_point, best_value) = multistart_optimize(
            region,
            &objective,
            cfg.evaluation.oracle_multistarts,
            cfg.evaluation.oracle_iters_per_start,
            &mut rng,
        )?;
        Ok(OracleRecord {
            key,
            method: "multistart".into(),
            near_optimal: vec![best_point.clone()],
            best_point,
            best_value,
            tolerance: None,
        })
    }
}

/// Computes (or returns the cached) ground-truth optimum for the configured
/// problem and writes it to `oracle.json`.
pub fn cmd_oracle(cfg: &ExperimentConfig) -> Result<OracleRecord> {
    let dir = ensure_run_dir(cfg)?;
    let path = dir.join(ORACLE_JSON);
    let key = oracle_key(cfg);
    if path.exists() {
        let cached: OracleRecord = read_json(&path)?;
        if cached.key == key {
            return Ok(cached);
        }
    }
    let region = cfg.build_region()?;
    let record = compute_oracle(cfg, &region)?;
    write_json(&path, &record)?;
    Ok(record)
}

/// Training summary for the dose problem: generated doses vs the training
/// distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DoseSummary {
    pub fraction_feasible_generated: f64,
    pub mean_objective_generated: f64,
    pub mean_objective_training: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationOutcome {
    pub oracle: OracleRecord,
    pub metrics_untrimmed: Option<MetricsReport>,
    pub metrics_trimmed: Option<MetricsReport>,
    pub certificate: Option<Certificate>,
    /// Populated when the certificate was refused (e.g. no feasible sample).
    pub certificate_error: Option<String>,
    pub dose: Option<DoseSummary>,
}

/// Draws evaluation samples from the stage-2 generator and reports metrics
/// against the known optimal set (falling back to the oracle's).
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<EvaluationOutcome> {
    let dir = ensure_run_dir(cfg)?;
    let region = cfg.build_region()?;
    let objective = cfg.build_objective(&region)?;
    let model = load_model(&dir.join(STAGE2_MODEL_BIN))?;
    let oracle: OracleRecord = read_json(&dir.join(ORACLE_JSON))?;
    if oracle.key != oracle_key(cfg) {
        return Err(Error::Config(
            "oracle.json is stale for this config; rerun the oracle subcommand".into(),
        ));
    }

    let mut rng = stage_rng(cfg, "evaluate");
    let points = model.generate(cfg.evaluation.n_eval_samples, &mut rng)?;
    write_points_csv(&dir.join(GENERATED_CSV), &points)?;
    let samples = SampleSet::from_points(points, &objective, &region)?;

    let optimal_set = objective.known_optimal_set.clone().unwrap_or_else(|| {
        OptimalSet::from_oracle(oracle.near_optimal.clone(), oracle.best_value)
    });
    let convention = cfg.evaluation.metric_convention;
    let metrics_untrimmed = match convention {
        MetricConvention::Untrimmed | MetricConvention::Both => {
            Some(metrics_report(&samples, &optimal_set))
        }
        MetricConvention::Trimmed => None,
    };
    let metrics_trimmed = match convention {
        MetricConvention::Trimmed | MetricConvention::Both => {
            let trimmed = trim_outliers(&samples, optimal_set.optimal_value, TRIM_PERCENTILE);
            Some(metrics_report(&trimmed, &optimal_set))
        }
        MetricConvention::Untrimmed => None,
    };

    let (certificate, certificate_error) = match compute_certificate(
        &model,
        &objective,
        &region,
        cfg.evaluation.certificate_samples,
        cfg.evaluation.certificate_epsilon,
        &mut rng.fork("certificate"),
    ) {
        Ok(c) => (Some(c), None),
        Err(Error::Certificate(msg)) => (None, Some(msg)),
        Err(e) => return Err(e),
    };

    let dose = if matches!(region.kind(), RegionKind::VaRToyDose(_)) {
        let training = read_points_csv(&dir.join(FEASIBLE_CSV))?;
        let mut mean_training = 0.0;
        for row in training.iter_rows() {
            mean_training += objective.eval(row);
        }
        mean_training /= training.rows().max(1) as f64;
        let mean_generated =
            samples.objective_values.iter().sum::<f64>() / samples.len().max(1) as f64;
        Some(DoseSummary {
            fraction_feasible_generated: samples.n_feasible() as f64 / samples.len().max(1) as f64,
            mean_objective_generated: mean_generated,
            mean_objective_training: mean_training,
        })
    } else {
        None
    };

    Ok(EvaluationOutcome {
        oracle,
        metrics_untrimmed,
        metrics_trimmed,
        certificate,
        certificate_error,
        dose,
    })
}

fn scatter(
    cfg: &ExperimentConfig,
    region: &Region<f64>,
    model: &GanModel<f64>,
    feasible: &Matrix2<f64>,
    path: &Path,
) -> Result<()> {
    let objective = cfg.build_objective(region)?;
    let mut rng = stage_rng(cfg, "plot");
    let generated = model.generate(1000, &mut rng)?;
    let feas_set = SampleSet::from_points(feasible.clone(), &objective, region)?;
    let gen_set = SampleSet::from_points(generated, &objective, region)?;
    emit_svg_scatter(&feas_set, &gen_set, region, path)
}

/// Regenerates the scatter plot from the latest available checkpoint.
pub fn cmd_plot(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = ensure_run_dir(cfg)?;
    let region = cfg.build_region()?;
    let feasible = read_points_csv(&dir.join(FEASIBLE_CSV))?;
    let (model_path, out) = if dir.join(STAGE2_MODEL_BIN).exists() {
        (dir.join(STAGE2_MODEL_BIN), dir.join(SCATTER_STAGE2_SVG))
    } else {
        (dir.join(STAGE1_MODEL_BIN), dir.join(SCATTER_STAGE1_SVG))
    };
    let model = load_model(&model_path)?;
    scatter(cfg, &region, &model, &feasible, &out)?;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub stage1: Option<Stage1Summary>,
    pub stage2: Option<Stage2Summary>,
    pub oracle: OracleRecord,
    pub metrics_untrimmed: Option<MetricsReport>,
    pub metrics_trimmed: Option<MetricsReport>,
    pub certificate: Option<Certificate>,
    pub certificate_error: Option<String>,
    pub dose: Option<DoseSummary>,
    pub timings_sec: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
}

/// Assembles `summary.json` from the evaluation outcome plus whatever stage
/// summaries exist in the run directory.
pub fn write_summary(
    cfg: &ExperimentConfig,
    outcome: &EvaluationOutcome,
    timings_sec: BTreeMap<String, f64>,
) -> Result<RunSummary> {
    let dir = ensure_run_dir(cfg)?;
    let stage1 = read_json(&dir.join(STAGE1_SUMMARY_JSON)).ok();
    let stage2 = read_json(&dir.join(STAGE2_SUMMARY_JSON)).ok();
    let artifacts = [
        FEASIBLE_CSV,
        INFEASIBLE_CSV,
        STAGE1_LOG_CSV,
        STAGE1_MODEL_BIN,
        STAGE2_LOG_CSV,
        STAGE2_MODEL_BIN,
        ORACLE_JSON,
        GENERATED_CSV,
        SCATTER_STAGE1_SVG,
        SCATTER_STAGE2_SVG,
        SUMMARY_JSON,
    ]
    .iter()
    .filter(|name| dir.join(name).exists() || **name == SUMMARY_JSON)
    .map(|name| dir.join(name).to_string_lossy().into_owned())
    .collect();
    let summary = RunSummary {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        stage1,
        stage2,
        oracle: outcome.oracle.clone(),
        metrics_untrimmed: outcome.metrics_untrimmed.clone(),
        metrics_trimmed: outcome.metrics_trimmed.clone(),
        certificate: outcome.certificate.clone(),
        certificate_error: outcome.certificate_error.clone(),
        dose: outcome.dose.clone(),
        timings_sec,
        artifacts,
    };
    write_json(&dir.join(SUMMARY_JSON), &summary)?;
    Ok(summary)
}

/// sample → stage1 → oracle → stage2 → evaluate, with per-stage timings,
/// ending in `summary.json`.
pub fn run_full(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let mut timings = BTreeMap::new();
    let mut timed = |label: &str, start: Instant| {
        timings.insert(label.to_string(), start.elapsed().as_secs_f64());
    };

    let t = Instant::now();
    cmd_sample(cfg)?;
    timed("sample", t);

    let t = Instant::now();
    cmd_stage1(cfg)?;
    timed("stage1", t);

    let t = Instant::now();
    cmd_oracle(cfg)?;
    timed("oracle", t);

    let t = Instant::now();
    cmd_stage2(cfg)?;
    timed("stage2", t);

    let t = Instant::now();
    let outcome = cmd_evaluate(cfg)?;
    timed("evaluate", t);

    write_summary(cfg, &outcome, timings)
}
