//! Resolving the experiment spec from an optional TOML file plus flags.
//!
//! The file mirrors `ExperimentSpec`:
//!
//! ```toml
//! trainer = "rfrecf"
//! seeds = [0, 1, 2]
//!
//! [dataset]
//! kind = "file"
//! path = "data/ml-100k/u.data"
//!
//! [config]
//! alpha = 0.025
//! privacy = { delta = 0.2, scale = 0.06 }
//!
//! [sweep]
//! dropout_rate = [0.0, 0.5, 0.9]
//! ```
//!
//! Unset `[config]` keys fall back to the trainer's defaults, then flags
//! override whatever the file says.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fedmf_core::experiment::{DatasetSource, ExperimentSpec, SweepAxes};
use fedmf_core::{FormatSpec, PrivacyConfig, SplitSpec, TrainConfig, TrainerKind};
use serde::Deserialize;

pub const OUTPUT_ENV: &str = "FEDMF_OUTPUT_DIR";

/// Everything a config file may set. `config` stays untyped so it can be
/// merged over per-trainer defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileSpec {
    pub trainer: Option<TrainerKind>,
    pub dataset: Option<DatasetSource>,
    pub split: Option<SplitSpec>,
    pub config: Option<toml::Table>,
    pub sweep: Option<SweepAxes>,
    pub seeds: Option<Vec<u64>>,
    pub max_cells: Option<usize>,
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub round_cap: Option<usize>,
}

impl FileSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    /// Tab separated `user item rating timestamp`.
    #[default]
    Movielens,
    /// Whitespace separated `user item rating`.
    Whitespace,
    /// Comma separated with a header line.
    Csv,
}

impl Format {
    fn spec(self) -> FormatSpec {
        match self {
            Format::Movielens => FormatSpec::movielens_100k(),
            Format::Whitespace => FormatSpec::whitespace(),
            Format::Csv => FormatSpec {
                delimiter: "comma".parse().expect("known delimiter"),
                skip_header: true,
                ..FormatSpec::movielens_100k()
            },
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Rating file.
    #[arg(long, conflicts_with = "planted")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "movielens")]
    pub format: Format,
    /// Drop rows whose rating exceeds this value.
    #[arg(long)]
    pub max_rating: Option<f64>,
    /// Planted instance `N,M,D` (or `N M D`) instead of a file.
    #[arg(long, value_delimiter = ',', num_args = 1..=3)]
    pub planted: Option<Vec<usize>>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_u: Option<f64>,
    #[arg(long)]
    pub lambda_v: Option<f64>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub max_rounds: Option<usize>,
    /// Relative change of the averaged item matrix at which to stop; 0
    /// disables.
    #[arg(long)]
    pub stop_eps: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Clip threshold for uploaded matrices; enables perturbation.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Laplace scale for uploaded matrices; enables perturbation.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Clip uploads but add no noise.
    #[arg(long)]
    pub no_noise: bool,
    /// Report metrics on unclipped predictions.
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long)]
    pub init_std: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepArgs {
    #[arg(long = "sweep-alpha", id = "sweep_alpha", value_name = "LIST", value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long = "sweep-lambda", id = "sweep_lambda", value_name = "LIST", value_delimiter = ',')]
    pub lambda: Vec<f64>,
    #[arg(long = "sweep-p", id = "sweep_p", value_name = "LIST", value_delimiter = ',')]
    pub p: Vec<f64>,
    #[arg(long = "sweep-scale", id = "sweep_scale", value_name = "LIST", value_delimiter = ',')]
    pub scale: Vec<f64>,
    #[arg(long = "sweep-delta", id = "sweep_delta", value_name = "LIST", value_delimiter = ',')]
    pub delta: Vec<f64>,
    #[arg(long = "sweep-dropout", id = "sweep_dropout", value_name = "LIST", value_delimiter = ',')]
    pub dropout_rate: Vec<f64>,
    /// Replicate seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub max_cells: Option<usize>,
}

/// Merges the file's `[config]` table over the trainer defaults.
pub fn base_config(kind: TrainerKind, file: &FileSpec) -> Result<TrainConfig> {
    let defaults = TrainConfig::for_kind(kind);
    let Some(overrides) = &file.config else {
        return Ok(defaults);
    };
    let mut table = toml::Table::try_from(&defaults)?;
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    toml::Value::Table(table)
        .try_into()
        .context("invalid [config] section")
}

pub fn apply_train_args(cfg: &mut TrainConfig, a: &TrainArgs) -> Result<()> {
    macro_rules! set {
        ($($field:ident <- $flag:ident),*) => {
            $(if let Some(v) = a.$flag {
                cfg.$field = v;
            })*
        };
    }
    set!(d <- d, alpha <- alpha, lambda <- lambda, lambda_u <- lambda_u, lambda_v <- lambda_v,
         p <- p, max_iters <- max_iters, stop_eps <- stop_eps, seed <- seed,
         dropout_rate <- dropout, init_std <- init_std);
    if a.max_rounds.is_some() {
        cfg.max_rounds = a.max_rounds;
    }
    if a.delta.is_some() || a.scale.is_some() || a.no_noise {
        let mut privacy = cfg.privacy.unwrap_or(PrivacyConfig {
            delta: 0.2,
            scale: 0.04,
            add_noise: true,
        });
        if let Some(v) = a.delta {
            privacy.delta = v;
        }
        if let Some(v) = a.scale {
            privacy.scale = v;
        }
        if a.no_noise {
            privacy.add_noise = false;
        }
        privacy.validate()?;
        cfg.privacy = Some(privacy);
    }
    if a.no_clip {
        cfg.clip_predictions = false;
    }
    Ok(())
}

pub fn resolve_dataset(file: &FileSpec, a: &DataArgs) -> Result<(DatasetSource, SplitSpec)> {
    let dataset = if let Some(path) = &a.data {
        let mut format = a.format.spec();
        format.max_rating = a.max_rating;
        DatasetSource::File {
            path: path.clone(),
            format,
        }
    } else if let Some(dims) = &a.planted {
        if dims.len() != 3 {
            bail!("--planted takes three sizes N,M,D, got {}", dims.len());
        }
        DatasetSource::Planted {
            n: dims[0],
            m: dims[1],
            d: dims[2],
            density: 1.0,
            noise: 0.1,
            seed: 0,
        }
    } else if let Some(d) = &file.dataset {
        d.clone()
    } else {
        bail!("no dataset: pass --data, --planted, or set [dataset] in the config file");
    };
    let mut split = file.split.unwrap_or_default();
    if let Some(f) = a.test_fraction {
        split.test_fraction = f;
    }
    if let Some(s) = a.split_seed {
        split.seed = s;
    }
    Ok((dataset, split))
}

pub fn resolve_sweep(file: &FileSpec, a: &SweepArgs, fallback: SweepAxes) -> SweepAxes {
    let mut axes = file.sweep.clone().unwrap_or_default();
    let pick = |flag: &Vec<f64>, slot: &mut Vec<f64>| {
        if !flag.is_empty() {
            *slot = flag.clone();
        }
    };
    pick(&a.alpha, &mut axes.alpha);
    pick(&a.lambda, &mut axes.lambda);
    pick(&a.p, &mut axes.p);
    pick(&a.scale, &mut axes.scale);
    pick(&a.delta, &mut axes.delta);
    pick(&a.dropout_rate, &mut axes.dropout_rate);
    if axes == SweepAxes::default() {
        fallback
    } else {
        axes
    }
}

pub fn resolve_output(flag: Option<&Path>, file: &FileSpec) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| file.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("fedmf-out"))
}

/// Full experiment spec for one trainer.
pub fn build_spec(
    kind: TrainerKind,
    file: &FileSpec,
    data: &DataArgs,
    train: &TrainArgs,
    sweep: Option<(&SweepArgs, SweepAxes)>,
) -> Result<ExperimentSpec> {
    let (dataset, split) = resolve_dataset(file, data)?;
    let mut cfg = base_config(kind, file)?;
    apply_train_args(&mut cfg, train)?;
    cfg.validate(kind)?;
    let mut spec = ExperimentSpec::new(dataset, kind, cfg);
    spec.split = split;
    if let Some(w) = file.workers {
        spec.workers = w;
    }
    if let Some(c) = file.max_cells {
        spec.max_cells = c;
    }
    match sweep {
        Some((args, fallback)) => {
            spec.sweep = resolve_sweep(file, args, fallback);
            spec.seeds = if !args.seeds.is_empty() {
                args.seeds.clone()
            } else {
                file.seeds.clone().unwrap_or_else(|| vec![spec.config.seed])
            };
            if let Some(w) = args.workers {
                spec.workers = w;
            }
            if let Some(c) = args.max_cells {
                spec.max_cells = c;
            }
        }
        None => spec.seeds = vec![spec.config.seed],
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> FileSpec {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn file_config_overlays_trainer_defaults() {
        let f = file("[config]\nlambda = 20.0\n");
        let cfg = base_config(TrainerKind::Rfrecf, &f).unwrap();
        assert_eq!((cfg.lambda, cfg.alpha), (20.0, 0.025));
    }

    #[test]
    fn flags_override_file() {
        let f = file("[config]\nalpha = 0.3\nseed = 4\n");
        let mut cfg = base_config(TrainerKind::Rfrec, &f).unwrap();
        let args = TrainArgs {
            alpha: Some(0.1),
            scale: Some(0.06),
            ..TrainArgs::default()
        };
        apply_train_args(&mut cfg, &args).unwrap();
        assert_eq!((cfg.alpha, cfg.seed), (0.1, 4));
        assert_eq!(cfg.privacy.unwrap().scale, 0.06);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileSpec>("trainr = \"rfrec\"").is_err());
        let f = file("[config]\nalpah = 1.0\n");
        assert!(base_config(TrainerKind::Rfrec, &f).is_err());
    }

    #[test]
    fn sweep_fallback_only_when_unset() {
        let f = FileSpec::default();
        let none = SweepArgs::default();
        assert_eq!(resolve_sweep(&f, &none, SweepAxes::privacy()), SweepAxes::privacy());
        let some = SweepArgs {
            scale: vec![0.1],
            ..SweepArgs::default()
        };
        assert_eq!(resolve_sweep(&f, &some, SweepAxes::privacy()).scale, vec![0.1]);
    }

    #[test]
    fn dataset_required() {
        assert!(resolve_dataset(&FileSpec::default(), &DataArgs::default()).is_err());
    }
}
