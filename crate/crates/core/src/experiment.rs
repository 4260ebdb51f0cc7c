//! Sweep orchestration and result tables.
//!
//! Output layout under the experiment's output directory:
//!
//! ```text
//! results.csv            one row per (cell, seed), full resolved config
//! summary.csv            mean and standard deviation over seeds per cell
//! timings.csv            wall time per (cell, seed)
//! history/<run>.csv      iter,loss,mae,rmse,comm_rounds
//! ```
//!
//! Wall time lives in its own file so that `results.csv` is a pure function
//! of the spec.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comm::TrainerKind;
use crate::config::TrainConfig;
use crate::data::{load_tabular, split, FormatSpec, RatingsDataset, SplitSpec};
use crate::error::{Error, Result};
use crate::privacy::PrivacyConfig;
use crate::synthetic::planted_with_density;
use crate::trainer::{run, RunResult, StopReason};

/// Where the ratings come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    File {
        path: PathBuf,
        #[serde(default = "FormatSpec::movielens_100k")]
        format: FormatSpec,
    },
    /// A planted low-rank instance.
    Planted {
        n: usize,
        m: usize,
        d: usize,
        #[serde(default = "one")]
        density: f64,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn one() -> f64 {
    1.0
}

impl DatasetSource {
    pub fn load(&self) -> Result<RatingsDataset> {
        match self {
            DatasetSource::File { path, format } => load_tabular(path, format),
            DatasetSource::Planted {
                n,
                m,
                d,
                density,
                noise,
                seed,
            } => Ok(planted_with_density(*n, *m, *d, *density, *noise, *seed).0),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DatasetSource::File { path, .. } => path.display().to_string(),
            DatasetSource::Planted { n, m, d, .. } => format!("planted-{n}x{m}-d{d}"),
        }
    }
}

/// Loads and splits a dataset. An empty test side is returned as `None`.
pub fn prepare(source: &DatasetSource, split_spec: &SplitSpec) -> Result<(RatingsDataset, Option<RatingsDataset>)> {
    let data = source.load()?;
    let (train, test) = split(&data, split_spec)?;
    let test = (test.n_ratings() > 0).then_some(test);
    Ok((train, test))
}

/// Lists of values to cross. An empty axis keeps the base config's value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    pub alpha: Vec<f64>,
    pub lambda: Vec<f64>,
    pub p: Vec<f64>,
    pub scale: Vec<f64>,
    pub delta: Vec<f64>,
    pub dropout_rate: Vec<f64>,
}

impl SweepAxes {
    /// Noise scales 0.02, 0.04 and 0.08.
    pub fn privacy() -> Self {
        Self {
            scale: vec![0.02, 0.04, 0.08],
            ..Self::default()
        }
    }

    /// Dropout rates 0 to 0.9 in steps of 0.1.
    pub fn robustness() -> Self {
        Self {
            dropout_rate: (0..10).map(|k| k as f64 / 10.0).collect(),
            ..Self::default()
        }
    }

    pub fn cell_count(&self) -> usize {
        [&self.alpha, &self.lambda, &self.p, &self.scale, &self.delta, &self.dropout_rate]
            .iter()
            .map(|axis| axis.len().max(1))
            .product()
    }

    /// Every combination, applied on top of `base`, in row-major order with
    /// `alpha` varying slowest.
    pub fn cells(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let opt = |axis: &[f64]| -> Vec<Option<f64>> {
            if axis.is_empty() {
                vec![None]
            } else {
                axis.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::with_capacity(self.cell_count());
        for alpha in opt(&self.alpha) {
            for lambda in opt(&self.lambda) {
                for p in opt(&self.p) {
                    for scale in opt(&self.scale) {
                        for delta in opt(&self.delta) {
                            for dropout in opt(&self.dropout_rate) {
                                let mut cfg = base.clone();
                                if let Some(v) = alpha {
                                    cfg.alpha = v;
                                }
                                if let Some(v) = lambda {
                                    cfg.lambda = v;
                                }
                                if let Some(v) = p {
                                    cfg.p = v;
                                }
                                if scale.is_some() || delta.is_some() {
                                    let mut privacy = cfg.privacy.unwrap_or(PrivacyConfig {
                                        delta: 0.2,
                                        scale: 0.04,
                                        add_noise: true,
                                    });
                                    if let Some(v) = scale {
                                        privacy.scale = v;
                                    }
                                    if let Some(v) = delta {
                                        privacy.delta = v;
                                    }
                                    cfg.privacy = Some(privacy);
                                }
                                if let Some(v) = dropout {
                                    cfg.dropout_rate = v;
                                }
                                out.push(cfg);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSource,
    #[serde(default)]
    pub split: SplitSpec,
    pub trainer: TrainerKind,
    #[serde(default)]
    pub config: TrainConfig,
    #[serde(default)]
    pub sweep: SweepAxes,
    /// Replicate seeds; each replaces `config.seed`.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_max_cells")]
    pub max_cells: usize,
    /// Cells evaluated concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub write_history: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_max_cells() -> usize {
    256
}

fn default_workers() -> usize {
    1
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSource, trainer: TrainerKind, config: TrainConfig) -> Self {
        Self {
            dataset,
            split: SplitSpec::default(),
            trainer,
            config,
            sweep: SweepAxes::default(),
            seeds: default_seeds(),
            max_cells: default_max_cells(),
            workers: default_workers(),
            write_history: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cells = self.sweep.cell_count();
        if cells > self.max_cells {
            return Err(Error::Config(format!(
                "sweep has {cells} cells, above the cap of {}",
                self.max_cells
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        Ok(())
    }
}

/// One line of `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub cell: usize,
    pub trainer: TrainerKind,
    pub dataset: String,
    pub seed: u64,
    pub d: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub lambda_u: f64,
    pub lambda_v: f64,
    pub p: f64,
    pub max_iters: usize,
    pub max_rounds: Option<usize>,
    pub stop_eps: f64,
    pub dropout_rate: f64,
    pub delta: Option<f64>,
    pub scale: Option<f64>,
    pub add_noise: Option<bool>,
    pub clip_predictions: bool,
    pub init_std: f64,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub status: String,
    pub stop: Option<StopReason>,
    pub iterations: Option<usize>,
    pub comm_rounds: Option<usize>,
    pub messages: Option<usize>,
    pub bytes: Option<usize>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub epsilon: Option<f64>,
}

impl ResultRow {
    fn new(cell: usize, spec: &ExperimentSpec, cfg: &TrainConfig) -> Self {
        Self {
            cell,
            trainer: spec.trainer,
            dataset: spec.dataset.label(),
            seed: cfg.seed,
            d: cfg.d,
            alpha: cfg.alpha,
            lambda: cfg.lambda,
            lambda_u: cfg.lambda_u,
            lambda_v: cfg.lambda_v,
            p: cfg.p,
            max_iters: cfg.max_iters,
            max_rounds: cfg.max_rounds,
            stop_eps: cfg.stop_eps,
            dropout_rate: cfg.dropout_rate,
            delta: cfg.privacy.map(|c| c.delta),
            scale: cfg.privacy.map(|c| c.scale),
            add_noise: cfg.privacy.map(|c| c.add_noise),
            clip_predictions: cfg.clip_predictions,
            init_std: cfg.init_std,
            test_fraction: spec.split.test_fraction,
            split_seed: spec.split.seed,
            status: String::new(),
            stop: None,
            iterations: None,
            comm_rounds: None,
            messages: None,
            bytes: None,
            mae: None,
            rmse: None,
            epsilon: cfg.privacy.filter(|c| c.add_noise).map(|c| c.budget()),
        }
    }

    fn fill(&mut self, result: &RunResult) {
        self.status = "ok".into();
        self.stop = Some(result.stop);
        self.iterations = Some(result.iterations());
        self.comm_rounds = Some(result.comm_log.rounds());
        self.messages = Some(result.comm_log.messages());
        self.bytes = Some(result.comm_log.bytes());
        if let Some(m) = result.final_metrics() {
            self.mae = Some(m.mae);
            self.rmse = Some(m.rmse);
        }
    }
}

/// Mean and sample standard deviation over the seeds of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub trainer: TrainerKind,
    pub alpha: f64,
    pub lambda: f64,
    pub p: f64,
    pub dropout_rate: f64,
    pub scale: Option<f64>,
    pub delta: Option<f64>,
    pub runs: usize,
    pub failed: usize,
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub mae_mean: Option<f64>,
    pub mae_std: Option<f64>,
    pub comm_rounds_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub cell: usize,
    pub seed: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    pub timings: Vec<TimingRow>,
}

/// `(mean, sample std)`; the std is zero for a single value.
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

fn summarize(spec: &ExperimentSpec, cells: &[TrainConfig], rows: &[ResultRow]) -> Vec<SummaryRow> {
    cells
        .iter()
        .enumerate()
        .map(|(c, cfg)| {
            let mine: Vec<&ResultRow> = rows.iter().filter(|r| r.cell == c).collect();
            let collect = |f: fn(&ResultRow) -> Option<f64>| mean_std(&mine.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
            let rmse = collect(|r| r.rmse);
            let mae = collect(|r| r.mae);
            let rounds = collect(|r| r.comm_rounds.map(|x| x as f64));
            SummaryRow {
                cell: c,
                trainer: spec.trainer,
                alpha: cfg.alpha,
                lambda: cfg.lambda,
                p: cfg.p,
                dropout_rate: cfg.dropout_rate,
                scale: cfg.privacy.map(|c| c.scale),
                delta: cfg.privacy.map(|c| c.delta),
                runs: mine.len(),
                failed: mine.iter().filter(|r| r.status != "ok").count(),
                rmse_mean: rmse.map(|x| x.0),
                rmse_std: rmse.map(|x| x.1),
                mae_mean: mae.map(|x| x.0),
                mae_std: mae.map(|x| x.1),
                comm_rounds_mean: rounds.map(|x| x.0),
            }
        })
        .collect()
}

/// Runs the sweep cross product for every seed. A failing run is recorded
/// with its error in `status` and the sweep carries on.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<ExperimentOutput> {
    spec.validate()?;
    let (train, test) = prepare(&spec.dataset, &spec.split)?;
    let cells = spec.sweep.cells(&spec.config);
    let jobs: Vec<(usize, TrainConfig)> = cells
        .iter()
        .enumerate()
        .flat_map(|(c, cfg)| {
            spec.seeds.iter().map(move |&seed| {
                let mut cfg = cfg.clone();
                cfg.seed = seed;
                (c, cfg)
            })
        })
        .collect();

    let history_dir = out_dir.filter(|_| spec.write_history).map(|d| d.join("history"));
    if let Some(dir) = &history_dir {
        std::fs::create_dir_all(dir)?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Result<(ResultRow, TimingRow)>> = pool.install(|| {
        jobs.par_iter()
            .map(|(c, cfg)| {
                let mut row = ResultRow::new(*c, spec, cfg);
                let start = Instant::now();
                match run(spec.trainer, cfg, &train, test.as_ref()) {
                    Ok(result) => {
                        row.fill(&result);
                        if let Some(dir) = &history_dir {
                            let name = format!("{}-cell{}-seed{}.csv", spec.trainer, c, cfg.seed);
                            write_history(&dir.join(name), &result)?;
                        }
                    }
                    Err(e) => row.status = format!("error: {e}"),
                }
                let timing = TimingRow {
                    cell: *c,
                    seed: cfg.seed,
                    wall_seconds: start.elapsed().as_secs_f64(),
                };
                Ok((row, timing))
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut timings = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        let (row, timing) = outcome?;
        rows.push(row);
        timings.push(timing);
    }
    let summary = summarize(spec, &cells, &rows);
    let output = ExperimentOutput { rows, summary, timings };
    if let Some(dir) = out_dir {
        write_outputs(dir, &output)?;
    }
    Ok(output)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_outputs(dir: &Path, output: &ExperimentOutput) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join("results.csv"), &output.rows)?;
    write_csv(&dir.join("summary.csv"), &output.summary)?;
    write_csv(&dir.join("timings.csv"), &output.timings)?;
    Ok(())
}

/// Per-iteration history as `iter,loss,mae,rmse,comm_rounds`.
pub fn write_history(path: &Path, result: &RunResult) -> Result<()> {
    write_csv(path, &result.history)
}

/// Outcome of one trainer in a communication comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommComparison {
    pub trainer: TrainerKind,
    pub status: String,
    /// Whether the stop criterion fired before the round cap.
    pub reached: bool,
    pub comm_rounds: Option<usize>,
    pub iterations: Option<usize>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
}

/// Runs each `(trainer, config)` pair to its stop criterion or `round_cap`
/// communication rounds, whichever comes first. The iteration budget is
/// raised so the round cap is the binding limit.
pub fn compare_communication(
    runs: &[(TrainerKind, TrainConfig)],
    train: &RatingsDataset,
    test: Option<&RatingsDataset>,
    round_cap: usize,
) -> Vec<CommComparison> {
    runs.iter()
        .map(|(kind, cfg)| {
            let mut cfg = cfg.clone();
            cfg.max_rounds = Some(round_cap);
            cfg.max_iters = cfg.max_iters.max(round_cap * 100);
            match run(*kind, &cfg, train, test) {
                Ok(r) => {
                    let m = r.final_metrics();
                    CommComparison {
                        trainer: *kind,
                        status: "ok".into(),
                        reached: r.stop == StopReason::Converged,
                        comm_rounds: Some(r.comm_log.rounds()),
                        iterations: Some(r.iterations()),
                        mae: m.map(|m| m.mae),
                        rmse: m.map(|m| m.rmse),
                    }
                }
                Err(e) => CommComparison {
                    trainer: *kind,
                    status: format!("error: {e}"),
                    reached: false,
                    comm_rounds: None,
                    iterations: None,
                    mae: None,
                    rmse: None,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desk_spec(kind: TrainerKind) -> ExperimentSpec {
        let cfg = TrainConfig {
            d: 2,
            max_iters: 30,
            ..TrainConfig::for_kind(kind)
        };
        ExperimentSpec::new(
            DatasetSource::Planted {
                n: 6,
                m: 8,
                d: 2,
                density: 0.8,
                noise: 0.1,
                seed: 1,
            },
            kind,
            cfg,
        )
    }

    #[test]
    fn empty_axes_give_one_cell() {
        let axes = SweepAxes::default();
        assert_eq!(axes.cell_count(), 1);
        assert_eq!(axes.cells(&TrainConfig::default()), vec![TrainConfig::default()]);
    }

    #[test]
    fn cross_product_order() {
        let axes = SweepAxes {
            alpha: vec![0.1, 0.2],
            dropout_rate: vec![0.0, 0.5, 0.9],
            ..SweepAxes::default()
        };
        let cells = axes.cells(&TrainConfig::default());
        assert_eq!(cells.len(), 6);
        assert_eq!((cells[0].alpha, cells[0].dropout_rate), (0.1, 0.0));
        assert_eq!((cells[5].alpha, cells[5].dropout_rate), (0.2, 0.9));
    }

    #[test]
    fn privacy_axes_install_config() {
        let cells = SweepAxes::privacy().cells(&TrainConfig::default());
        let scales: Vec<f64> = cells.iter().map(|c| c.privacy.unwrap().scale).collect();
        assert_eq!(scales, vec![0.02, 0.04, 0.08]);
        assert!(cells.iter().all(|c| c.privacy.unwrap().delta == 0.2));
    }

    #[test]
    fn cap_enforced() {
        let mut spec = desk_spec(TrainerKind::Rfrec);
        spec.sweep = SweepAxes::robustness();
        spec.max_cells = 5;
        assert!(run_experiment(&spec, None).is_err());
    }

    #[test]
    fn failures_are_recorded() {
        let mut spec = desk_spec(TrainerKind::Rfrec);
        spec.sweep.alpha = vec![0.01, 50.0];
        let out = run_experiment(&spec, None).unwrap();
        assert_eq!(out.rows.len(), 2);
        assert_eq!(out.rows[0].status, "ok");
        assert!(out.rows[1].status.starts_with("error"));
        assert_eq!(out.summary[1].failed, 1);
    }

    #[test]
    fn seeds_replicate() {
        let mut spec = desk_spec(TrainerKind::Rfrecf);
        spec.seeds = vec![1, 2, 3];
        let out = run_experiment(&spec, None).unwrap();
        assert_eq!(out.rows.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_eq!(out.summary[0].runs, 3);
        assert!(out.summary[0].rmse_std.unwrap() >= 0.0);
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
