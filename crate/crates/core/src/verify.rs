//! Desk-scale verification suite.
//!
//! Every check returns [`CheckRecord`]s so the CLI can emit a uniform
//! report. The instances are planted with `d = 1`: for `d ≥ 2` any
//! orthogonal rotation applied to all `u_i` and `V_(i)` leaves `F`
//! unchanged, so no minimizer is isolated.

use rand::Rng;

use crate::comm::TrainerKind;
use crate::config::TrainConfig;
use crate::data::RatingsDataset;
use crate::error::{Error, Result};
use crate::matrix::ItemMatrix;
use crate::model::{self, LocalModel};
use crate::privacy::{perturb, PrivacyConfig};
use crate::rng::{normal, stream, Stream};
use crate::synthetic::{planted, planted_with_density};
use crate::theory::{self, CheckRecord, LSampling, Optimum, RateFit};
use crate::trainer::{run, TrainerState};

/// A planted problem and the hyperparameters to study it with.
#[derive(Debug, Clone)]
pub struct DeskInstance {
    pub data: RatingsDataset,
    pub cfg: TrainConfig,
}

impl DeskInstance {
    /// Four clients, six items, rank one, noisy ratings; `λ = 2` leaves an
    /// isolated minimizer.
    pub fn standard(seed: u64) -> Self {
        let (data, _) = planted(4, 6, 1, 0.5, seed);
        let cfg = TrainConfig {
            d: 1,
            lambda: 2.0,
            lambda_u: 0.1,
            stop_eps: 0.0,
            seed,
            ..TrainConfig::default()
        };
        Self { data, cfg }
    }

    pub fn start(&self) -> TrainerState {
        TrainerState::init(&self.cfg, self.data.n_users, self.data.n_items)
    }
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over coordinates.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f_i` at one client.
pub fn fd_grad_f(model: &LocalModel, row: &crate::model::RatingRow, lambda_u: f64, h: f64) -> Result<Vec<f64>> {
    let mut m = model.clone();
    let mut out = Vec::with_capacity(model.dim());
    for k in 0..model.d() {
        let x = m.user_vec[k];
        m.user_vec[k] = x + h;
        let plus = model::local_loss(&m, row, lambda_u)?;
        m.user_vec[k] = x - h;
        let minus = model::local_loss(&m, row, lambda_u)?;
        m.user_vec[k] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    for k in 0..model.item_mat.as_slice().len() {
        let x = m.item_mat.as_slice()[k];
        m.item_mat.as_mut_slice()[k] = x + h;
        let plus = model::local_loss(&m, row, lambda_u)?;
        m.item_mat.as_mut_slice()[k] = x - h;
        let minus = model::local_loss(&m, row, lambda_u)?;
        m.item_mat.as_mut_slice()[k] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// Central differences of `ψ` with respect to `V_(i)`, with `V̄` recomputed
/// as the mean at every evaluation.
pub fn fd_grad_psi(models: &[LocalModel], client: usize, h: f64) -> Result<Vec<f64>> {
    let psi = |ms: &[LocalModel]| -> Result<f64> { Ok(model::regularizer(ms, &model::consensus(ms)?)?) };
    let mut ms = models.to_vec();
    let len = ms[client].item_mat.as_slice().len();
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let x = ms[client].item_mat.as_slice()[k];
        ms[client].item_mat.as_mut_slice()[k] = x + h;
        let plus = psi(&ms)?;
        ms[client].item_mat.as_mut_slice()[k] = x - h;
        let minus = psi(&ms)?;
        ms[client].item_mat.as_mut_slice()[k] = x;
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

fn random_models(n: usize, d: usize, m: usize, rng: &mut impl Rng) -> Vec<LocalModel> {
    (0..n)
        .map(|_| LocalModel {
            user_vec: (0..d).map(|_| normal(rng)).collect(),
            item_mat: ItemMatrix::from_col_major(d, m, (0..d * m).map(|_| normal(rng)).collect()).expect("sizes"),
        })
        .collect()
}

/// Analytic gradients of `f_i` and `ψ` against central differences on
/// `instances` random problems with `n ≤ 5`, `m ≤ 8`, `d ≤ 4`. Returns the
/// worst relative errors `(f, ψ)`.
pub fn gradient_check(instances: usize, seed: u64) -> Result<(f64, f64)> {
    let (mut worst_f, mut worst_psi) = (0.0f64, 0.0f64);
    for t in 0..instances {
        let mut rng = stream(seed, Stream::Probe, t as u64);
        let (n, m, d) = (rng.gen_range(1..=5), rng.gen_range(1..=8), rng.gen_range(1..=4));
        let (data, _) = planted_with_density(n, m, d, 0.6, 0.3, seed.wrapping_add(t as u64));
        let models = random_models(n, d, m, &mut rng);
        let lambda_u = rng.gen_range(0.0..1.0);
        let global = model::consensus(&models)?;
        for (i, (mdl, row)) in models.iter().zip(&data.rows).enumerate() {
            let g = model::grad_f(mdl, row, lambda_u)?;
            let mut analytic = g.user.clone();
            analytic.extend_from_slice(g.items.as_slice());
            worst_f = worst_f.max(relative_error(&analytic, &fd_grad_f(mdl, row, lambda_u, 1e-5)?, 1e-2));
            let gp = model::grad_psi(mdl, &global)?;
            worst_psi = worst_psi.max(relative_error(gp.as_slice(), &fd_grad_psi(&models, i, 1e-5)?, 1e-2));
        }
    }
    Ok((worst_f, worst_psi))
}

/// Reference optimum reached from the end of a long full-gradient run, so
/// that both land in the same basin.
pub fn polished_optimum(inst: &DeskInstance, warmup: usize, tol: f64, max_iters: usize) -> Result<Optimum> {
    let mut state = inst.start();
    for _ in 0..warmup {
        state.rfrec_step(&inst.cfg, &inst.data)?;
    }
    theory::reference_optimum(&inst.data, &inst.cfg, &state.models, tol, max_iters)
}

/// Result of the linear-rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RateExperiment {
    pub lambda: f64,
    pub threshold: f64,
    pub l_hat: f64,
    /// Smallest curvature over random directions and over the directions
    /// `x^k − x*` met along the run.
    pub mu_hat: f64,
    pub alpha: f64,
    pub fit: RateFit,
}

impl RateExperiment {
    /// `ρ̂ ≤ 0.8 · ln(1 − α μ̂) / 2`.
    pub fn rate_bound(&self) -> f64 {
        0.8 * (1.0 - self.alpha * self.mu_hat).ln() / 2.0
    }
}

/// Runs the full-gradient trainer with `α = 1/(L̂ + λ)` and fits the log
/// squared distance to the reference optimum.
pub fn linear_rate_experiment(inst: &DeskInstance, iters: usize) -> Result<RateExperiment> {
    let opt = polished_optimum(inst, iters, 1e-11, 200_000)?;
    let l_hat = theory::estimate_l(
        &inst.data,
        inst.cfg.lambda_u,
        &opt.models,
        &LSampling {
            samples: 4000,
            radius: 0.5,
            seed: inst.cfg.seed,
            freeze_items: false,
        },
    )?;
    let mu_hat = theory::mu_hat(&inst.data, &inst.cfg, &opt.models, 500, 0.0, inst.cfg.seed)?;
    let bounds = theory::norm_bounds(&opt.models, &inst.data);
    let threshold = theory::convexity_threshold(bounds.m_r, bounds.m_u, inst.cfg.lambda_u);
    let cfg = TrainConfig {
        alpha: 1.0 / (l_hat + inst.cfg.lambda),
        ..inst.cfg.clone()
    };
    let stepped = DeskInstance {
        data: inst.data.clone(),
        cfg: cfg.clone(),
    };
    let opt = polished_optimum(&stepped, iters, 1e-11, 200_000)?;
    let mut state = stepped.start();
    let mut errors = Vec::with_capacity(iters);
    let mut mu_traj = mu_hat;
    for k in 0..iters {
        state.rfrec_step(&cfg, &inst.data)?;
        let e = theory::point_dist_sq(&state.models, &opt.models);
        errors.push(e);
        if (k + 1) % (iters / 10).max(1) == 0 && e > 1e-16 {
            let dir: Vec<LocalModel> = state
                .models
                .iter()
                .zip(&opt.models)
                .map(|(a, b)| {
                    let mut diff = a.clone();
                    diff.user_vec.iter_mut().zip(&b.user_vec).for_each(|(x, y)| *x -= y);
                    diff.item_mat.axpy(-1.0, &b.item_mat).expect("same shape");
                    diff
                })
                .collect();
            mu_traj = mu_traj.min(theory::curvature(&inst.data, &cfg, &opt.models, &dir)?);
        }
    }
    Ok(RateExperiment {
        lambda: cfg.lambda,
        threshold,
        l_hat,
        mu_hat: mu_traj,
        alpha: cfg.alpha,
        fit: theory::check_linear_rate(&errors)?,
    })
}

/// Raises `λ` until it exceeds the convexity threshold measured at the
/// resulting stationary point, then runs [`linear_rate_experiment`].
pub fn linear_rate_above_threshold(inst: &DeskInstance, iters: usize) -> Result<RateExperiment> {
    let m_r = inst.data.max_row_norm();
    let mut lambda = 1.2 * theory::convexity_threshold(m_r, 0.0, inst.cfg.lambda_u);
    for _ in 0..4 {
        let trial = DeskInstance {
            data: inst.data.clone(),
            cfg: TrainConfig {
                lambda,
                alpha: 1.0 / (lambda + 4.0 * m_r * m_r),
                ..inst.cfg.clone()
            },
        };
        let opt = polished_optimum(&trial, iters, 1e-9, 200_000)?;
        let th = theory::convexity_threshold(m_r, theory::norm_bounds(&opt.models, &inst.data).m_u, inst.cfg.lambda_u);
        if lambda > th {
            return linear_rate_experiment(&trial, iters);
        }
        lambda = 1.2 * th;
    }
    Err(Error::Config("could not place λ above the convexity threshold".into()))
}

/// Worst `max|z|` of the unbiasedness check over `points` random points near
/// the optimum.
pub fn unbiasedness_check(inst: &DeskInstance, points: usize, draws: usize) -> Result<f64> {
    let opt = polished_optimum(inst, 5000, 1e-10, 200_000)?;
    let mut rng = stream(inst.cfg.seed, Stream::Probe, 11);
    let mut worst: f64 = 0.0;
    for t in 0..points {
        let x = jitter(&opt.models, 0.5, &mut rng);
        let check = theory::check_unbiasedness(&x, &inst.data, &inst.cfg, draws, inst.cfg.seed + t as u64)?;
        worst = worst.max(check.max_abs_z);
    }
    Ok(worst)
}

fn jitter(models: &[LocalModel], radius: f64, rng: &mut impl Rng) -> Vec<LocalModel> {
    models
        .iter()
        .map(|m| {
            let mut m = m.clone();
            m.user_vec.iter_mut().for_each(|x| *x += radius * rng.gen_range(-1.0..=1.0));
            m.item_mat
                .as_mut_slice()
                .iter_mut()
                .for_each(|x| *x += radius * rng.gen_range(-1.0..=1.0));
            m
        })
        .collect()
}

/// Worst ratios `(lhs − 3se) / rhs` of the two expected-smoothness bounds at
/// `points` random points in a box of half-width `radius` around the
/// optimum, with `L̂` estimated over the same box. Values ≤ 1 pass.
pub fn expected_smoothness_check(
    inst: &DeskInstance,
    p: f64,
    points: usize,
    draws: usize,
    radius: f64,
) -> Result<(f64, f64)> {
    let cfg = TrainConfig { p, ..inst.cfg.clone() };
    let opt = polished_optimum(inst, 5000, 1e-10, 200_000)?;
    let l_hat = theory::estimate_l(
        &inst.data,
        cfg.lambda_u,
        &opt.models,
        &LSampling {
            samples: 4000,
            radius,
            seed: cfg.seed,
            freeze_items: false,
        },
    )?;
    let mut rng = stream(cfg.seed, Stream::Probe, 12);
    let (mut w1, mut w2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in 0..points {
        let x = jitter(&opt.models, radius, &mut rng);
        let c = theory::check_expected_smoothness(&x, &opt.models, &inst.data, &cfg, l_hat, draws, cfg.seed + t as u64)?;
        w1 = w1.max((c.first.lhs - 3.0 * c.first.lhs_se) / c.first.rhs);
        w2 = w2.max((c.second.lhs - 3.0 * c.second.lhs_se) / c.second.rhs);
    }
    Ok((w1, w2))
}

/// Mean tail error `‖x^k − x*‖²` over the last half of `iters` noisy
/// full-gradient steps started at `x*`, for each noise scale. Starting in
/// the basin of `x*` keeps early noise from steering the run to another
/// stationary point.
pub fn noise_plateaus(inst: &DeskInstance, scales: &[f64], delta: f64, iters: usize) -> Result<Vec<f64>> {
    let opt = polished_optimum(inst, 5000, 1e-10, 200_000)?;
    scales
        .iter()
        .map(|&s| {
            let cfg = TrainConfig {
                privacy: Some(PrivacyConfig::new(delta, s)?),
                ..inst.cfg.clone()
            };
            let start = TrainerState::from_parts(&cfg, opt.models.clone(), opt.global.clone());
            let errors = theory::rfrec_trajectory(start, &cfg, &inst.data, &opt.models, iters)?;
            let tail = &errors[iters / 2..];
            Ok(tail.iter().sum::<f64>() / tail.len() as f64)
        })
        .collect()
}

/// Empirical variance per entry of the average of `n` clients' Laplace
/// noise, over `draws` aggregations of a `d × m` zero matrix.
pub fn aggregate_noise_variance(n: usize, d: usize, m: usize, cfg: &PrivacyConfig, draws: usize, seed: u64) -> Result<f64> {
    let zero = ItemMatrix::zeros(d, m);
    let mut rngs: Vec<_> = (0..n).map(|i| stream(seed, Stream::Noise, i as u64)).collect();
    let (mut sum, mut sum_sq, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..draws {
        let mut avg = ItemMatrix::zeros(d, m);
        for rng in rngs.iter_mut() {
            avg.axpy(1.0 / n as f64, &perturb(&zero, cfg, rng)?)?;
        }
        for &x in avg.as_slice() {
            sum += x;
            sum_sq += x * x;
            count += 1;
        }
    }
    let mean = sum / count as f64;
    Ok(sum_sq / count as f64 - mean * mean)
}

/// Communication events per iteration of the fast trainer over `iters`
/// iterations with the stop criterion off.
pub fn comm_frequency(inst: &DeskInstance, p: f64, iters: usize) -> Result<theory::CommStats> {
    let cfg = TrainConfig {
        p,
        max_iters: iters,
        stop_eps: 0.0,
        alpha: 0.01,
        ..inst.cfg.clone()
    };
    let result = run(TrainerKind::Rfrecf, &cfg, &inst.data, None)?;
    theory::comm_schedule_stats(&result.comm_log, p)
}

/// Every desk check, as report records.
pub fn run_suite(seed: u64) -> Result<Vec<CheckRecord>> {
    let inst = DeskInstance::standard(seed);
    let mut out = Vec::new();

    let (ef, ep) = gradient_check(100, seed)?;
    out.push(CheckRecord::new("grad_f_fd_rel_err", ef, 1e-4, ef <= 1e-4));
    out.push(CheckRecord::new("grad_psi_fd_rel_err", ep, 1e-4, ep <= 1e-4));

    match linear_rate_experiment(&inst, 4000) {
        Ok(r) => {
            out.push(CheckRecord::new("linear_rate_r2", 0.99, r.fit.r_squared, r.fit.r_squared >= 0.99));
            out.push(CheckRecord::new("linear_rate_slope", r.fit.slope, 0.0, r.fit.slope < 0.0));
            out.push(CheckRecord::new("linear_rate_vs_mu", r.fit.slope, r.rate_bound(), r.fit.slope <= r.rate_bound()));
        }
        Err(e) => out.push(CheckRecord::new(format!("linear_rate: {e}"), f64::NAN, f64::NAN, false)),
    }

    for p in [0.1, 0.5, 0.9] {
        let (w1, w2) = expected_smoothness_check(&inst, p, 20, 10_000, 0.2)?;
        out.push(CheckRecord::new(format!("expected_smoothness_1_p{p}"), w1, 1.0, w1 <= 1.0));
        out.push(CheckRecord::new(format!("expected_smoothness_2_p{p}"), w2, 1.0, w2 <= 1.0));
    }

    let z = unbiasedness_check(&inst, 10, 100_000)?;
    out.push(CheckRecord::new("unbiasedness_max_z", z, 3.0, z <= 3.0));

    let plateaus = noise_plateaus(&inst, &[0.02, 0.04, 0.08], 10.0, 4000)?;
    let ordered = plateaus.windows(2).all(|w| w[0] < w[1]);
    out.push(CheckRecord::new("noise_plateau_s0.02_vs_0.08", plateaus[0], plateaus[2], ordered));

    let stats = comm_frequency(&inst, 0.5, 10_000)?;
    out.push(CheckRecord::new(
        "comm_rate_p0.5",
        stats.empirical_rate,
        stats.expected_rate,
        (0.47..=0.53).contains(&stats.empirical_rate),
    ));

    let priv_cfg = PrivacyConfig::new(0.2, 0.04)?;
    let n = 10;
    let var = aggregate_noise_variance(n, 2, 5, &priv_cfg, 4000, seed)?;
    let expected = 2.0 * priv_cfg.scale * priv_cfg.scale / n as f64;
    out.push(CheckRecord::new(
        "aggregate_noise_var",
        var,
        expected,
        ((var - expected) / expected).abs() <= 0.1,
    ));
    out.push(CheckRecord::new("budget_d0.2_s0.04", priv_cfg.budget(), 10.0, priv_cfg.budget() == 10.0));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(&[1.0], &[1.0], 1e-2), 0.0);
        assert!((relative_error(&[0.0], &[1e-4], 1e-2) - 1e-2).abs() < 1e-15);
    }

    #[test]
    fn desk_optimum_is_stationary() {
        let inst = DeskInstance::standard(1);
        let opt = polished_optimum(&inst, 2000, 1e-10, 100_000).unwrap();
        assert!(opt.grad_norm <= 1e-10);
    }
}
