//! Federated trainers over the regularized objective.
//!
//! Both trainers keep every parameter update on the clients; the server only
//! averages uploaded item matrices. Each client remembers the last `V̄` it
//! received, so a client that misses an aggregation keeps stepping against
//! its stale copy and rejoins at the next cycle it takes part in.
//!
//! The full-gradient trainer performs, every iteration,
//!
//! ```text
//! x_i ← x_i − α (∇f_i(x_i) + λ (V_(i) − V̄))      on every client
//! upload Ṽ_(i), V̄ ← mean of uploads, broadcast V̄  (two rounds)
//! ```
//!
//! The fast trainer draws one shared `ζ_k ~ Bernoulli(p)` per iteration:
//!
//! | `ζ_{k−1}` | `ζ_k` | action                                               | rounds |
//! |-----------|-------|------------------------------------------------------|--------|
//! | none / 0  | 0     | `x_i ← x_i − α/(1−p) ∇f_i(x_i)`                       | 0      |
//! | 1         | 0     | broadcast, then `V_(i) ← V_(i) − (α/p) λ (V_(i) − V̄)` | 1      |
//! | 0         | 1     | upload, `V̄ ← mean`                                    | 1      |
//! | none / 1  | 1     | server idle                                          | 0      |

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comm::{CommEvent, CommLog, Direction, TrainerKind};
use crate::config::TrainConfig;
use crate::data::{evaluate, Metrics, RatingsDataset, SharedItemPredictor};
use crate::error::{Error, Result};
use crate::fcf::{fcf_round, FcfState};
use crate::matrix::ItemMatrix;
use crate::model::{self, GlobalState, LocalModel};
use crate::privacy;
use crate::rng::{normal, stream, Stream};

/// What a single iteration did to the parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    /// Local step on `F_i` followed by an aggregation.
    FullStep,
    /// Local step on `f_i` only.
    MainUpdate,
    /// Local step on `ψ_i` only.
    MovingToAverage,
    /// Server aggregation of fresh uploads.
    Aggregate,
    /// Repeated aggregation with no new uploads.
    Idle,
    /// One alternating baseline round.
    AlternatingRound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub comm_events: Vec<CommEvent>,
    pub zeta: Option<bool>,
    pub action: StepAction,
    /// `‖V̄_new − V̄_old‖_F / ‖V̄_old‖_F`, present when a fresh aggregation
    /// followed at least one task step.
    pub global_delta: Option<f64>,
}

/// Which gradient the stochastic estimator returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Task,
    Regularizer,
}

/// Per-client piece of the unbiased estimator
/// `G_i = ∇f_i / (1−p)` (task) or `λ ∇ψ_i / p` (regularizer).
pub fn stochastic_gradient(
    model: &LocalModel,
    row: &crate::model::RatingRow,
    global: &GlobalState,
    cfg: &TrainConfig,
    branch: Branch,
) -> Result<model::LocalGrad> {
    let p = cfg.p;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(match branch {
        Branch::Task => {
            let mut g = model::grad_f(model, row, cfg.lambda_u)?;
            let s = 1.0 / (1.0 - p);
            g.user.iter_mut().for_each(|x| *x *= s);
            g.items.scale(s);
            g
        }
        Branch::Regularizer => {
            let mut items = model::grad_psi(model, global)?;
            items.scale(cfg.lambda / p);
            model::LocalGrad {
                user: vec![0.0; model.d()],
                items,
            }
        }
    })
}

/// Mutable state of a federated run.
pub struct TrainerState {
    pub models: Vec<LocalModel>,
    pub global: GlobalState,
    pub iter: usize,
    pub prev_zeta: Option<bool>,
    /// Task steps taken since the last upload of the fast trainer.
    task_steps_since_upload: usize,
    /// The `V̄` each client last received.
    views: Vec<Arc<ItemMatrix>>,
    /// Participation mask of the current aggregation cycle.
    cohort: Vec<bool>,
    schedule_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
    noise_rngs: Vec<ChaCha8Rng>,
}

impl TrainerState {
    /// Gaussian initialization of every `u_i`, `V_(i)` and of `V̄`, each
    /// from its own seeded stream.
    pub fn init(cfg: &TrainConfig, n_users: usize, n_items: usize) -> Self {
        let (d, m) = (cfg.d, n_items);
        let models = (0..n_users)
            .map(|i| {
                let mut rng = stream(cfg.seed, Stream::Init, i as u64);
                let user_vec = (0..d).map(|_| cfg.init_std * normal(&mut rng)).collect();
                let data = (0..d * m).map(|_| cfg.init_std * normal(&mut rng)).collect();
                LocalModel {
                    user_vec,
                    item_mat: ItemMatrix::from_col_major(d, m, data).expect("sizes agree"),
                }
            })
            .collect();
        let mut rng = stream(cfg.seed, Stream::Init, n_users as u64);
        let avg = (0..d * m).map(|_| cfg.init_std * normal(&mut rng)).collect();
        let global = GlobalState::new(ItemMatrix::from_col_major(d, m, avg).expect("sizes agree"));
        Self::from_parts(cfg, models, global)
    }

    /// Starts from explicit parameters; every client is assumed to hold `global`.
    pub fn from_parts(cfg: &TrainConfig, models: Vec<LocalModel>, global: GlobalState) -> Self {
        let n = models.len();
        let shared = Arc::new(global.avg_item_mat.clone());
        Self {
            models,
            global,
            iter: 0,
            prev_zeta: None,
            task_steps_since_upload: 0,
            views: vec![shared; n],
            cohort: vec![true; n],
            schedule_rng: stream(cfg.seed, Stream::Schedule, 0),
            dropout_rng: stream(cfg.seed, Stream::Dropout, 0),
            noise_rngs: (0..n).map(|i| stream(cfg.seed, Stream::Noise, i as u64)).collect(),
        }
    }

    pub fn n_clients(&self) -> usize {
        self.models.len()
    }

    pub fn user_vecs(&self) -> Vec<Vec<f64>> {
        self.models.iter().map(|m| m.user_vec.clone()).collect()
    }

    /// The `V̄` client `i` currently holds.
    pub fn view(&self, client: usize) -> &ItemMatrix {
        &self.views[client]
    }

    fn payload_shape(&self) -> (usize, usize) {
        self.global.avg_item_mat.shape()
    }

    fn draw_cohort(&mut self, dropout_rate: f64) -> usize {
        let n = self.models.len();
        if dropout_rate > 0.0 {
            for slot in self.cohort.iter_mut() {
                *slot = self.dropout_rng.gen::<f64>() >= dropout_rate;
            }
        } else {
            self.cohort.iter_mut().for_each(|s| *s = true);
        }
        debug_assert_eq!(self.cohort.len(), n);
        self.cohort.iter().filter(|&&c| c).count()
    }

    /// Participants upload (possibly perturbed) item matrices and the server
    /// averages them. Returns the relative change of `V̄`, or `None` when
    /// nobody took part and `V̄` was kept.
    fn aggregate_uploads(&mut self, cfg: &TrainConfig) -> Result<Option<f64>> {
        let (d, m) = self.payload_shape();
        let mut sum = ItemMatrix::zeros(d, m);
        let mut count = 0usize;
        for i in 0..self.models.len() {
            if !self.cohort[i] {
                continue;
            }
            match &cfg.privacy {
                Some(priv_cfg) => {
                    let noisy = privacy::perturb(&self.models[i].item_mat, priv_cfg, &mut self.noise_rngs[i])
                        .map_err(|_| Error::Divergence {
                            client: i,
                            iter: self.iter,
                        })?;
                    sum.axpy(1.0, &noisy)?;
                }
                None => sum.axpy(1.0, &self.models[i].item_mat)?,
            }
            count += 1;
        }
        if count == 0 {
            return Ok(None);
        }
        let inv = count as f64;
        sum.as_mut_slice().iter_mut().for_each(|x| *x /= inv);
        if !sum.is_finite() {
            return Err(Error::Divergence {
                client: self.models.len(),
                iter: self.iter,
            });
        }
        let old_norm = self.global.avg_item_mat.frobenius();
        let change = sum.dist_sq(&self.global.avg_item_mat)?.sqrt();
        self.global = GlobalState::new(sum);
        Ok(Some(if old_norm > 0.0 { change / old_norm } else { f64::INFINITY }))
    }

    fn broadcast(&mut self) {
        let fresh = Arc::new(self.global.avg_item_mat.clone());
        for (view, &joined) in self.views.iter_mut().zip(&self.cohort) {
            if joined {
                *view = Arc::clone(&fresh);
            }
        }
    }

    fn check_finite(&self) -> Result<()> {
        let bad = self
            .models
            .par_iter()
            .position_first(|m| !m.is_finite());
        match bad {
            Some(client) => Err(Error::Divergence { client, iter: self.iter }),
            None => Ok(()),
        }
    }

    /// One iteration of the full-gradient trainer.
    pub fn rfrec_step(&mut self, cfg: &TrainConfig, data: &RatingsDataset) -> Result<StepOutcome> {
        let (alpha, lambda, lambda_u) = (cfg.alpha, cfg.lambda, cfg.lambda_u);
        self.models
            .par_iter_mut()
            .zip(self.views.par_iter())
            .zip(data.rows.par_iter())
            .for_each(|((model, view), row)| {
                model::full_step(model, row, view, lambda_u, lambda, alpha);
            });
        self.check_finite()?;

        let participants = self.draw_cohort(cfg.dropout_rate);
        let delta = self.aggregate_uploads(cfg)?;
        self.broadcast();
        let shape = self.payload_shape();
        let events = [Direction::ClientToServer, Direction::ServerToClient]
            .into_iter()
            .map(|direction| CommEvent {
                iter: self.iter,
                direction,
                participants,
                payload_shape: shape,
            })
            .collect();
        self.iter += 1;
        Ok(StepOutcome {
            comm_events: events,
            zeta: None,
            action: StepAction::FullStep,
            global_delta: delta,
        })
    }

    /// One iteration of the fast trainer with a freshly drawn `ζ_k`.
    pub fn rfrecf_step(&mut self, cfg: &TrainConfig, data: &RatingsDataset) -> Result<StepOutcome> {
        if !(cfg.p > 0.0 && cfg.p < 1.0) {
            return Err(Error::InvalidProbability(cfg.p));
        }
        let zeta = self.schedule_rng.gen::<f64>() < cfg.p;
        self.rfrecf_step_with(cfg, data, zeta)
    }

    /// One iteration of the fast trainer with a caller-chosen `ζ_k`.
    pub fn rfrecf_step_with(&mut self, cfg: &TrainConfig, data: &RatingsDataset, zeta: bool) -> Result<StepOutcome> {
        let p = cfg.p;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidProbability(p));
        }
        let shape = self.payload_shape();
        let mut events = Vec::new();
        let mut delta = None;
        let action = match (self.prev_zeta, zeta) {
            (None | Some(false), false) => {
                let (step, lambda_u) = (cfg.alpha / (1.0 - p), cfg.lambda_u);
                self.models
                    .par_iter_mut()
                    .zip(data.rows.par_iter())
                    .for_each(|(model, row)| model::task_step(model, row, lambda_u, step));
                self.check_finite()?;
                self.task_steps_since_upload += 1;
                StepAction::MainUpdate
            }
            (Some(true), false) => {
                self.broadcast();
                events.push(CommEvent {
                    iter: self.iter,
                    direction: Direction::ServerToClient,
                    participants: self.cohort.iter().filter(|&&c| c).count(),
                    payload_shape: shape,
                });
                let rate = cfg.alpha * cfg.lambda / p;
                self.models
                    .par_iter_mut()
                    .zip(self.views.par_iter())
                    .for_each(|(model, view)| model::consensus_step(&mut model.item_mat, view, rate));
                self.check_finite()?;
                StepAction::MovingToAverage
            }
            (Some(false), true) => {
                let participants = self.draw_cohort(cfg.dropout_rate);
                events.push(CommEvent {
                    iter: self.iter,
                    direction: Direction::ClientToServer,
                    participants,
                    payload_shape: shape,
                });
                delta = self.aggregate_uploads(cfg)?;
                // With no task step since the previous upload the consensus
                // step leaves the mean unchanged, so a zero change says
                // nothing about convergence.
                if self.task_steps_since_upload == 0 {
                    delta = None;
                }
                self.task_steps_since_upload = 0;
                StepAction::Aggregate
            }
            (None | Some(true), true) => StepAction::Idle,
        };
        self.prev_zeta = Some(zeta);
        self.iter += 1;
        Ok(StepOutcome {
            comm_events: events,
            zeta: Some(zeta),
            action,
            global_delta: delta,
        })
    }

    /// `Σ_i f_i(x_i)` over the given rows.
    pub fn task_loss(&self, data: &RatingsDataset, lambda_u: f64) -> Result<f64> {
        let parts: Vec<f64> = self
            .models
            .par_iter()
            .zip(data.rows.par_iter())
            .map(|(m, row)| {
                if row.is_empty() {
                    Ok(0.0)
                } else {
                    model::local_loss(m, row, lambda_u)
                }
            })
            .collect::<std::result::Result<_, _>>()?;
        if let Some(client) = parts.iter().position(|x| !x.is_finite()) {
            return Err(Error::Divergence { client, iter: self.iter });
        }
        Ok(parts.iter().sum())
    }
}

/// One line of the per-iteration history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub iter: usize,
    pub loss: f64,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    pub comm_rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    MaxRounds,
    Converged,
}

/// Output of a complete run.
pub struct RunResult {
    pub kind: TrainerKind,
    pub user_vecs: Vec<Vec<f64>>,
    pub global: GlobalState,
    /// Final client models (federated trainers only).
    pub local_models: Option<Vec<LocalModel>>,
    pub comm_log: CommLog,
    pub history: Vec<MetricRow>,
    pub stop: StopReason,
}

impl RunResult {
    pub fn iterations(&self) -> usize {
        self.comm_log.iterations
    }

    pub fn final_metrics(&self) -> Option<Metrics> {
        let last = self.history.last()?;
        Some(Metrics {
            mae: last.mae?,
            rmse: last.rmse?,
        })
    }

    pub fn evaluate(&self, test: &RatingsDataset, clip: bool) -> Result<Metrics> {
        let predictor = SharedItemPredictor {
            user_vecs: &self.user_vecs,
            item_mat: &self.global.avg_item_mat,
        };
        evaluate(&predictor, test, clip)
    }
}

fn metric_row(
    iter: usize,
    loss: f64,
    user_vecs: &[Vec<f64>],
    item_mat: &ItemMatrix,
    test: Option<&RatingsDataset>,
    clip: bool,
    comm_rounds: usize,
) -> Result<MetricRow> {
    let metrics = match test {
        Some(t) if t.n_ratings() > 0 => Some(evaluate(&SharedItemPredictor { user_vecs, item_mat }, t, clip)?),
        _ => None,
    };
    Ok(MetricRow {
        iter,
        loss,
        mae: metrics.map(|m| m.mae),
        rmse: metrics.map(|m| m.rmse),
        comm_rounds,
    })
}

fn check_data(train: &RatingsDataset, test: Option<&RatingsDataset>) -> Result<()> {
    if let Some(t) = test {
        if t.n_users != train.n_users || t.n_items != train.n_items {
            return Err(Error::Config(format!(
                "test split is {}x{}, train split is {}x{}",
                t.n_users, t.n_items, train.n_users, train.n_items
            )));
        }
    }
    if let Some(u) = train.rows.iter().position(|r| r.is_empty()) {
        return Err(Error::Config(format!("user {u} has no training ratings")));
    }
    Ok(())
}

/// Runs a trainer until `max_iters`, the round cap, or the stop criterion.
pub fn run(kind: TrainerKind, cfg: &TrainConfig, train: &RatingsDataset, test: Option<&RatingsDataset>) -> Result<RunResult> {
    cfg.validate(kind)?;
    check_data(train, test)?;
    match kind {
        TrainerKind::Fcf => run_fcf(cfg, train, test),
        _ => run_federated(kind, cfg, train, test),
    }
}

fn run_federated(
    kind: TrainerKind,
    cfg: &TrainConfig,
    train: &RatingsDataset,
    test: Option<&RatingsDataset>,
) -> Result<RunResult> {
    let state = TrainerState::init(cfg, train.n_users, train.n_items);
    run_from_state(kind, cfg, train, test, state)
}

/// Like [`run`], starting from a prepared state.
pub fn run_from_state(
    kind: TrainerKind,
    cfg: &TrainConfig,
    train: &RatingsDataset,
    test: Option<&RatingsDataset>,
    mut state: TrainerState,
) -> Result<RunResult> {
    cfg.validate(kind)?;
    let mut log = CommLog::new(kind);
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut stop = StopReason::MaxIters;
    while state.iter < cfg.max_iters {
        if cfg.max_rounds.is_some_and(|cap| log.rounds() >= cap) {
            stop = StopReason::MaxRounds;
            break;
        }
        let outcome = match kind {
            TrainerKind::Rfrec => state.rfrec_step(cfg, train)?,
            TrainerKind::Rfrecf => state.rfrecf_step(cfg, train)?,
            TrainerKind::Fcf => return Err(Error::WrongTrainerKind("fcf has no local models".into())),
        };
        log.events.extend(outcome.comm_events.iter().copied());
        if let (Some(seq), Some(z)) = (log.zeta_seq.as_mut(), outcome.zeta) {
            seq.push(z);
        }
        log.iterations += 1;
        let loss = state.task_loss(train, cfg.lambda_u)?;
        history.push(metric_row(
            state.iter,
            loss,
            &state.user_vecs(),
            &state.global.avg_item_mat,
            test,
            cfg.clip_predictions,
            log.rounds(),
        )?);
        if cfg.stop_eps > 0.0 && outcome.global_delta.is_some_and(|d| d <= cfg.stop_eps) {
            stop = StopReason::Converged;
            break;
        }
    }
    debug_assert!(log.is_consistent());
    Ok(RunResult {
        kind,
        user_vecs: state.user_vecs(),
        global: state.global,
        local_models: Some(state.models),
        comm_log: log,
        history,
        stop,
    })
}

fn run_fcf(cfg: &TrainConfig, train: &RatingsDataset, test: Option<&RatingsDataset>) -> Result<RunResult> {
    let mut state = FcfState::init(cfg, train.n_users, train.n_items);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout, 0);
    let mut log = CommLog::new(TrainerKind::Fcf);
    let mut history = Vec::with_capacity(cfg.max_iters);
    let mut stop = StopReason::MaxIters;
    for iter in 0..cfg.max_iters {
        if cfg.max_rounds.is_some_and(|cap| log.rounds() >= cap) {
            stop = StopReason::MaxRounds;
            break;
        }
        let cohort: Vec<bool> = (0..train.n_users)
            .map(|_| cfg.dropout_rate == 0.0 || dropout_rng.gen::<f64>() >= cfg.dropout_rate)
            .collect();
        let before = state.item_mat.clone();
        let events = fcf_round(&mut state, train, cfg.alpha, &cohort, iter)?;
        log.events.extend(events);
        log.iterations += 1;
        let loss = state.task_loss(train)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                client: train.n_users,
                iter,
            });
        }
        history.push(metric_row(
            iter + 1,
            loss,
            &state.user_vecs,
            &state.item_mat,
            test,
            cfg.clip_predictions,
            log.rounds(),
        )?);
        let old = before.frobenius();
        let delta = state.item_mat.dist_sq(&before)?.sqrt() / old;
        if cfg.stop_eps > 0.0 && old > 0.0 && delta <= cfg.stop_eps {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(RunResult {
        kind: TrainerKind::Fcf,
        user_vecs: state.user_vecs.clone(),
        global: GlobalState::new(state.item_mat),
        local_models: None,
        comm_log: log,
        history,
        stop,
    })
}
