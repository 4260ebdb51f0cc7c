//! Numerical checks of the convergence theory on small instances.
//!
//! Points are full parameter sets `x = (x_1, …, x_n)`. The objective
//! evaluated here is the true `F`, with `V̄` the mean of the clients' item
//! matrices. Under that definition `∂ψ/∂V_(i) = V_(i) − V̄` exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::comm::{CommLog, TrainerKind};
use crate::config::TrainConfig;
use crate::data::RatingsDataset;
use crate::error::{Error, Result};
use crate::matrix::{norm_sq, ItemMatrix};
use crate::model::{self, GlobalState, LocalModel};
use crate::rng::{normal, stream, Stream};
use crate::trainer::TrainerState;

fn flatten(models: &[LocalModel]) -> Vec<f64> {
    let mut out = Vec::with_capacity(models.iter().map(LocalModel::dim).sum());
    for m in models {
        out.extend_from_slice(&m.user_vec);
        out.extend_from_slice(m.item_mat.as_slice());
    }
    out
}

fn unflatten(x: &[f64], n: usize, d: usize, m: usize) -> Vec<LocalModel> {
    let block = d + d * m;
    assert_eq!(x.len(), n * block, "flat point has the wrong length");
    x.chunks(block)
        .map(|c| LocalModel {
            user_vec: c[..d].to_vec(),
            item_mat: ItemMatrix::from_col_major(d, m, c[d..].to_vec()).expect("block size"),
        })
        .collect()
}

fn shape_of(models: &[LocalModel]) -> (usize, usize, usize) {
    let first = models.first().expect("at least one client");
    (models.len(), first.d(), first.m())
}

/// `‖x − y‖²` over every coordinate.
pub fn point_dist_sq(x: &[LocalModel], y: &[LocalModel]) -> f64 {
    flatten(x).iter().zip(flatten(y)).map(|(a, b)| (a - b).powi(2)).sum()
}

/// `F(x)` with `V̄` the current mean.
pub fn objective(models: &[LocalModel], data: &RatingsDataset, cfg: &TrainConfig) -> Result<f64> {
    let global = model::consensus(models)?;
    Ok(model::objective(models, &data.rows, &global, cfg.lambda_u, cfg.lambda)?)
}

/// Task and regularizer parts of the gradient, each flattened.
fn gradient_parts(models: &[LocalModel], data: &RatingsDataset, lambda_u: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let global = model::consensus(models)?;
    let (mut task, mut reg) = (Vec::new(), Vec::new());
    for (m, row) in models.iter().zip(&data.rows) {
        let g = model::grad_f(m, row, lambda_u)?;
        task.extend_from_slice(&g.user);
        task.extend_from_slice(g.items.as_slice());
        let p = model::grad_psi(m, &global)?;
        reg.extend(std::iter::repeat_n(0.0, m.d()));
        reg.extend_from_slice(p.as_slice());
    }
    Ok((task, reg))
}

/// `∇F(x) = ∇f(x) + λ ∇ψ(x)`, flattened client by client as `(u_i, V_(i))`.
pub fn gradient(models: &[LocalModel], data: &RatingsDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let (task, reg) = gradient_parts(models, data, cfg.lambda_u)?;
    Ok(task.iter().zip(&reg).map(|(t, r)| t + cfg.lambda * r).collect())
}

fn objective_flat(x: &[f64], shape: (usize, usize, usize), data: &RatingsDataset, cfg: &TrainConfig) -> Result<f64> {
    objective(&unflatten(x, shape.0, shape.1, shape.2), data, cfg)
}

fn gradient_flat(x: &[f64], shape: (usize, usize, usize), data: &RatingsDataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    gradient(&unflatten(x, shape.0, shape.1, shape.2), data, cfg)
}

fn perturbed(center: &[f64], radius: f64, rng: &mut impl Rng) -> Vec<f64> {
    center.iter().map(|c| c + radius * rng.gen_range(-1.0..=1.0)).collect()
}

/// Where [`estimate_l`] samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LSampling {
    /// Points per client.
    pub samples: usize,
    /// Half-width of the box around the center.
    pub radius: f64,
    pub seed: u64,
    /// Hold every `V_(i)` at the center and vary `u_i` only.
    pub freeze_items: bool,
}

/// Lower bound on the smoothness constant of the `f_i`: the largest
/// `‖∇f_i(x) − ∇f_i(y)‖ / ‖x − y‖` over consecutive sampled points in a box
/// around `center`.
pub fn estimate_l(data: &RatingsDataset, lambda_u: f64, center: &[LocalModel], opts: &LSampling) -> Result<f64> {
    if opts.samples < 2 {
        return Err(Error::Config("estimate_l needs at least 2 samples".into()));
    }
    let mut best: f64 = 0.0;
    for (i, (c, row)) in center.iter().zip(&data.rows).enumerate() {
        let mut rng = stream(opts.seed, Stream::Probe, i as u64);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> (Vec<f64>, Vec<f64>) {
            let mut m = c.clone();
            m.user_vec = perturbed(&c.user_vec, opts.radius, rng);
            if !opts.freeze_items {
                let data = perturbed(c.item_mat.as_slice(), opts.radius, rng);
                m.item_mat.as_mut_slice().copy_from_slice(&data);
            }
            let g = model::grad_f(&m, row, lambda_u).expect("shapes agree");
            let mut point = m.user_vec.clone();
            let mut grad = g.user;
            if !opts.freeze_items {
                point.extend_from_slice(m.item_mat.as_slice());
                grad.extend_from_slice(g.items.as_slice());
            }
            (point, grad)
        };
        let mut prev = draw(&mut rng);
        for _ in 1..opts.samples {
            let next = draw(&mut rng);
            let dx: f64 = prev.0.iter().zip(&next.0).map(|(a, b)| (a - b).powi(2)).sum();
            if dx > 0.0 {
                let dg: f64 = prev.1.iter().zip(&next.1).map(|(a, b)| (a - b).powi(2)).sum();
                best = best.max((dg / dx).sqrt());
            }
            prev = next;
        }
    }
    Ok(best)
}

/// A stationary point of `F` found by [`reference_optimum`].
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub models: Vec<LocalModel>,
    pub global: GlobalState,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Gradient descent on `F` with Barzilai-Borwein trial steps and Armijo
/// backtracking, until `‖∇F‖ ≤ tol`.
pub fn reference_optimum(
    data: &RatingsDataset,
    cfg: &TrainConfig,
    start: &[LocalModel],
    tol: f64,
    max_iters: usize,
) -> Result<Optimum> {
    let shape = shape_of(start);
    let mut x = flatten(start);
    let mut fx = objective_flat(&x, shape, data, cfg)?;
    let mut g = gradient_flat(&x, shape, data, cfg)?;
    let mut step = 1e-3;
    let mut gn = norm_sq(&g).sqrt();
    let mut iters = 0;
    while gn > tol {
        if iters == max_iters {
            return Err(Error::NoConvergence {
                iters,
                grad_norm: gn,
                tol,
            });
        }
        let mut t = step;
        let (x_new, f_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let fc = objective_flat(&cand, shape, data, cfg)?;
            // A few ulps of slack: near the optimum F changes below its own
            // rounding error.
            let slack = 8.0 * f64::EPSILON * fx.abs();
            if fc.is_finite() && fc <= fx - 1e-4 * t * gn * gn + slack {
                break (cand, fc);
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NoConvergence {
                    iters,
                    grad_norm: gn,
                    tol,
                });
            }
        };
        let g_new = gradient_flat(&x_new, shape, data, cfg)?;
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..x.len() {
            let s = x_new[k] - x[k];
            ss += s * s;
            sy += s * (g_new[k] - g[k]);
        }
        step = if sy > 0.0 { (ss / sy).min(1e6) } else { 2.0 * t };
        x = x_new;
        fx = f_new;
        g = g_new;
        gn = norm_sq(&g).sqrt();
        iters += 1;
    }
    let models = unflatten(&x, shape.0, shape.1, shape.2);
    let global = model::consensus(&models)?;
    Ok(Optimum {
        models,
        global,
        objective: fx,
        grad_norm: gn,
        iterations: iters,
    })
}

/// Least-squares fit of `ln e_k` against `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Points used in the fit.
    pub points: usize,
}

/// Fits `ln e_k = a + ρ̂ k` to a squared-error trajectory. The first 10% of
/// the points and everything from the first value at or below `1e-10` on
/// are discarded.
pub fn check_linear_rate(sq_errors: &[f64]) -> Result<RateFit> {
    let skip = sq_errors.len() / 10;
    let pts: Vec<(f64, f64)> = sq_errors
        .iter()
        .enumerate()
        .skip(skip)
        .take_while(|(_, &e)| e > 1e-10)
        .map(|(k, &e)| (k as f64, e.ln()))
        .collect();
    if pts.len() < 10 {
        return Err(Error::ShortTrajectory(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: pts.len(),
    })
}

/// `⟨∇F(x+hz) − ∇F(x−hz), z⟩ / 2h` for the unit vector `z` along `direction`.
pub fn curvature(data: &RatingsDataset, cfg: &TrainConfig, at: &[LocalModel], direction: &[LocalModel]) -> Result<f64> {
    let shape = shape_of(at);
    let x = flatten(at);
    let mut z = flatten(direction);
    let zn = norm_sq(&z).sqrt();
    if zn == 0.0 {
        return Err(Error::Config("curvature along a zero direction".into()));
    }
    z.iter_mut().for_each(|v| *v /= zn);
    curvature_flat(&x, &z, shape, data, cfg)
}

fn curvature_flat(x: &[f64], z: &[f64], shape: (usize, usize, usize), data: &RatingsDataset, cfg: &TrainConfig) -> Result<f64> {
    let h = 1e-5;
    let plus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + h * b).collect();
    let minus: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - h * b).collect();
    let gp = gradient_flat(&plus, shape, data, cfg)?;
    let gm = gradient_flat(&minus, shape, data, cfg)?;
    Ok(gp.iter().zip(&gm).zip(z).map(|((a, b), w)| (a - b) * w).sum::<f64>() / (2.0 * h))
}

/// Smallest directional curvature `⟨∇F(x+hz) − ∇F(x−hz), z⟩ / 2h` over random
/// unit directions `z` at points within `radius` of `center`.
pub fn mu_hat(
    data: &RatingsDataset,
    cfg: &TrainConfig,
    center: &[LocalModel],
    directions: usize,
    radius: f64,
    seed: u64,
) -> Result<f64> {
    let shape = shape_of(center);
    let c = flatten(center);
    let mut rng = stream(seed, Stream::Probe, u64::from(u32::MAX) + 1);
    let mut best = f64::INFINITY;
    for _ in 0..directions {
        let x = perturbed(&c, radius, &mut rng);
        let mut z: Vec<f64> = (0..x.len()).map(|_| normal(&mut rng)).collect();
        let zn = norm_sq(&z).sqrt();
        z.iter_mut().for_each(|v| *v /= zn);
        best = best.min(curvature_flat(&x, &z, shape, data, cfg)?);
    }
    Ok(best)
}

/// `𝓛 = max{L/(1−p), λ/p}`.
pub fn script_l(l: f64, lambda: f64, p: f64) -> f64 {
    (l / (1.0 - p)).max(lambda / p)
}

/// The `p` at which both terms of `𝓛` coincide, `λ / (L + λ)`.
pub fn optimal_p(l: f64, lambda: f64) -> f64 {
    lambda / (l + lambda)
}

/// `2 M_r² / λ_u + 6 M_u²`.
pub fn convexity_threshold(m_r: f64, m_u: f64, lambda_u: f64) -> f64 {
    2.0 * m_r * m_r / lambda_u + 6.0 * m_u * m_u
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBounds {
    pub m_u: f64,
    pub m_v: f64,
    pub m_r: f64,
}

/// Largest `‖u_i‖`, `‖V_(i)‖_F` and rating-row norm.
pub fn norm_bounds(models: &[LocalModel], data: &RatingsDataset) -> NormBounds {
    NormBounds {
        m_u: models.iter().map(|m| norm_sq(&m.user_vec).sqrt()).fold(0.0, f64::max),
        m_v: models.iter().map(|m| m.item_mat.frobenius()).fold(0.0, f64::max),
        m_r: data.max_row_norm(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryEstimates {
    pub l_hat: f64,
    pub mu_hat: f64,
    pub script_l: f64,
    pub sigma2_hat: f64,
    pub bounds: NormBounds,
    pub convexity_threshold: f64,
}

/// Settings for [`estimate_constants`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    pub samples: usize,
    pub radius: f64,
    pub directions: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            samples: 2000,
            radius: 0.2,
            directions: 200,
            seed: 0,
        }
    }
}

/// All constants at the reference point `x_ref`.
pub fn estimate_constants(
    data: &RatingsDataset,
    cfg: &TrainConfig,
    x_ref: &[LocalModel],
    opts: &ProbeOptions,
) -> Result<TheoryEstimates> {
    let l_hat = estimate_l(
        data,
        cfg.lambda_u,
        x_ref,
        &LSampling {
            samples: opts.samples,
            radius: opts.radius,
            seed: opts.seed,
            freeze_items: false,
        },
    )?;
    let mu = mu_hat(data, cfg, x_ref, opts.directions, 0.0, opts.seed)?;
    let (task, reg) = gradient_parts(x_ref, data, cfg.lambda_u)?;
    let bounds = norm_bounds(x_ref, data);
    Ok(TheoryEstimates {
        l_hat,
        mu_hat: mu,
        script_l: script_l(l_hat, cfg.lambda, cfg.p),
        sigma2_hat: sigma2(&task, &reg, cfg),
        bounds,
        convexity_threshold: convexity_threshold(bounds.m_r, bounds.m_u, cfg.lambda_u),
    })
}

/// `E‖G(x)‖²` in closed form from the two branch values.
fn sigma2(task: &[f64], reg: &[f64], cfg: &TrainConfig) -> f64 {
    norm_sq(task) / (1.0 - cfg.p) + cfg.lambda * cfg.lambda * norm_sq(reg) / cfg.p
}

/// The full estimator `G(x)` for one draw.
fn draw_g(task: &[f64], reg: &[f64], cfg: &TrainConfig, zeta: bool) -> Vec<f64> {
    if zeta {
        reg.iter().map(|r| cfg.lambda * r / cfg.p).collect()
    } else {
        task.iter().map(|t| t / (1.0 - cfg.p)).collect()
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidProbability(p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessCheck {
    /// Largest `|mean − ∇F| / SE` over coordinates.
    pub max_abs_z: f64,
    pub draws: usize,
    pub pass: bool,
}

/// Monte-Carlo mean of `G(x)` against `∇F(x)`, coordinate by coordinate.
pub fn check_unbiasedness(
    models: &[LocalModel],
    data: &RatingsDataset,
    cfg: &TrainConfig,
    draws: usize,
    seed: u64,
) -> Result<UnbiasednessCheck> {
    check_p(cfg.p)?;
    let (task, reg) = gradient_parts(models, data, cfg.lambda_u)?;
    let target: Vec<f64> = task.iter().zip(&reg).map(|(t, r)| t + cfg.lambda * r).collect();
    let mut rng = stream(seed, Stream::Probe, 7);
    let mut sum = vec![0.0; task.len()];
    let mut sum_sq = vec![0.0; task.len()];
    for _ in 0..draws {
        let g = draw_g(&task, &reg, cfg, rng.gen::<f64>() < cfg.p);
        for ((s, q), v) in sum.iter_mut().zip(sum_sq.iter_mut()).zip(&g) {
            *s += v;
            *q += v * v;
        }
    }
    let n = draws as f64;
    let mut max_abs_z: f64 = 0.0;
    for k in 0..task.len() {
        let mean = sum[k] / n;
        let var = (sum_sq[k] / n - mean * mean).max(0.0) * n / (n - 1.0);
        let se = (var / n).sqrt();
        let floor = 1e-12 * (1.0 + target[k].abs());
        let z = (mean - target[k]).abs() / se.max(floor);
        max_abs_z = max_abs_z.max(z);
    }
    Ok(UnbiasednessCheck {
        max_abs_z,
        draws,
        pass: max_abs_z <= 3.0,
    })
}

/// Monte-Carlo value of one side of an inequality, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
}

impl Bound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 3.0 * self.lhs_se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessCheck {
    /// `E‖G(x) − G(x*)‖² ≤ 2𝓛 (F(x) − F(x*))`.
    pub first: Bound,
    /// `E‖G(x)‖² ≤ 4𝓛 (F(x) − F(x*)) + 2σ²`.
    pub second: Bound,
    pub sigma2: f64,
    pub pass: bool,
}

/// Both expected-smoothness inequalities at `x`, with `G(x)` and `G(x*)`
/// sharing each draw of `ζ`.
pub fn check_expected_smoothness(
    x: &[LocalModel],
    x_ref: &[LocalModel],
    data: &RatingsDataset,
    cfg: &TrainConfig,
    l_hat: f64,
    draws: usize,
    seed: u64,
) -> Result<SmoothnessCheck> {
    check_p(cfg.p)?;
    if draws < 2 {
        return Err(Error::Config("expected-smoothness check needs at least 2 draws".into()));
    }
    let (tx, rx) = gradient_parts(x, data, cfg.lambda_u)?;
    let (ts, rs) = gradient_parts(x_ref, data, cfg.lambda_u)?;
    let gap = (objective(x, data, cfg)? - objective(x_ref, data, cfg)?).max(0.0);
    let sl = script_l(l_hat, cfg.lambda, cfg.p);
    let mut rng = stream(seed, Stream::Probe, 8);
    let (mut a, mut a2, mut b, mut b2, mut s) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for _ in 0..draws {
        let zeta = rng.gen::<f64>() < cfg.p;
        let gx = draw_g(&tx, &rx, cfg, zeta);
        let gs = draw_g(&ts, &rs, cfg, zeta);
        let diff: f64 = gx.iter().zip(&gs).map(|(p, q)| (p - q).powi(2)).sum();
        let own = norm_sq(&gx);
        a += diff;
        a2 += diff * diff;
        b += own;
        b2 += own * own;
        s += norm_sq(&gs);
    }
    let n = draws as f64;
    let se = |sum: f64, sum_sq: f64| {
        let mean = sum / n;
        ((sum_sq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
    };
    let sigma2 = s / n;
    let first = Bound {
        lhs: a / n,
        lhs_se: se(a, a2),
        rhs: 2.0 * sl * gap,
    };
    let second = Bound {
        lhs: b / n,
        lhs_se: se(b, b2),
        rhs: 4.0 * sl * gap + 2.0 * sigma2,
    };
    Ok(SmoothnessCheck {
        first,
        second,
        sigma2,
        pass: first.holds() && second.holds(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    /// Events per completed iteration.
    pub empirical_rate: f64,
    pub expected_rate: f64,
    pub z_score: f64,
    pub events: usize,
    pub iterations: usize,
}

/// Observed communication frequency against its expectation. For the fast
/// trainer the expectation is `2p(1−p)` per iteration; the variance accounts
/// for adjacent transition indicators being correlated.
pub fn comm_schedule_stats(log: &CommLog, p: f64) -> Result<CommStats> {
    let events = log.rounds();
    let iterations = log.iterations;
    match log.kind {
        TrainerKind::Fcf => Err(Error::WrongTrainerKind("schedule statistics need rfrec or rfrecf".into())),
        TrainerKind::Rfrec => Ok(CommStats {
            empirical_rate: events as f64 / iterations.max(1) as f64,
            expected_rate: 2.0,
            z_score: 0.0,
            events,
            iterations,
        }),
        TrainerKind::Rfrecf => {
            check_p(p)?;
            if iterations < 1000 {
                return Err(Error::ShortTrajectory(iterations));
            }
            let q = 2.0 * p * (1.0 - p);
            let slots = (iterations - 1) as f64;
            let expected = q * slots;
            let var = slots * q * (1.0 - q) + 2.0 * (slots - 1.0) * (p * (1.0 - p) - q * q);
            Ok(CommStats {
                empirical_rate: events as f64 / iterations as f64,
                expected_rate: q,
                z_score: (events as f64 - expected) / var.sqrt(),
                events,
                iterations,
            })
        }
    }
}

/// `‖x^k − x_ref‖²` after each of `iters` steps of the full-gradient trainer
/// started from `state`.
pub fn rfrec_trajectory(
    mut state: TrainerState,
    cfg: &TrainConfig,
    data: &RatingsDataset,
    x_ref: &[LocalModel],
    iters: usize,
) -> Result<Vec<f64>> {
    (0..iters)
        .map(|_| {
            state.rfrec_step(cfg, data)?;
            Ok(point_dist_sq(&state.models, x_ref))
        })
        .collect()
}

/// Like [`rfrec_trajectory`] for the fast trainer under a fixed schedule.
/// Errors are recorded after each step.
pub fn rfrecf_trajectory(
    mut state: TrainerState,
    cfg: &TrainConfig,
    data: &RatingsDataset,
    x_ref: &[LocalModel],
    zetas: &[bool],
) -> Result<Vec<f64>> {
    zetas
        .iter()
        .map(|&z| {
            state.rfrecf_step_with(cfg, data, z)?;
            Ok(point_dist_sq(&state.models, x_ref))
        })
        .collect()
}

/// One line of a theory report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; non-negative when the bound holds outright.
    pub margin: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, pass: bool) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            margin: rhs - lhs,
            pass,
        }
    }
}
