//! Alternating gradient-exchange baseline.
//!
//! Clients own `u_i` and step it locally; the server owns a single item
//! matrix `V`. Each round, clients upload `h(i,j) = (r_ij − u_iᵀv_j) u_i`
//! for their observed items and the server steps
//! `v_j ← v_j − α (−2 Σ_i h(i,j) + 2 λ_v v_j)`.

use rayon::prelude::*;

use crate::comm::{CommEvent, Direction};
use crate::config::TrainConfig;
use crate::data::RatingsDataset;
use crate::error::{Error, Result};
use crate::matrix::{dot, norm_sq, ItemMatrix};
use crate::rng::{normal, stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct FcfState {
    pub user_vecs: Vec<Vec<f64>>,
    pub item_mat: ItemMatrix,
    pub lambda_u: f64,
    pub lambda_v: f64,
}

impl FcfState {
    pub fn init(cfg: &TrainConfig, n_users: usize, n_items: usize) -> Self {
        let d = cfg.d;
        let user_vecs = (0..n_users)
            .map(|i| {
                let mut rng = stream(cfg.seed, Stream::Init, i as u64);
                (0..d).map(|_| cfg.init_std * normal(&mut rng)).collect()
            })
            .collect();
        let mut rng = stream(cfg.seed, Stream::Init, n_users as u64);
        let data = (0..d * n_items).map(|_| cfg.init_std * normal(&mut rng)).collect();
        Self {
            user_vecs,
            item_mat: ItemMatrix::from_col_major(d, n_items, data).expect("sizes agree"),
            lambda_u: cfg.lambda_u,
            lambda_v: cfg.lambda_v,
        }
    }

    /// `J = Σ (r − uᵀv)² + λ_u Σ‖u_i‖² + λ_v ‖V‖²`.
    pub fn task_loss(&self, data: &RatingsDataset) -> Result<f64> {
        let mut total = self.lambda_v * self.item_mat.frobenius_sq();
        for (u, row) in self.user_vecs.iter().zip(&data.rows) {
            total += self.lambda_u * norm_sq(u);
            for (j, r) in row.iter() {
                let e = r - dot(u, self.item_mat.col(j));
                total += e * e;
            }
        }
        Ok(total)
    }
}

/// One round. Clients with `cohort[i] == false` sit the round out: they
/// neither step `u_i` nor upload. Returns the two communication events.
pub fn fcf_round(
    state: &mut FcfState,
    data: &RatingsDataset,
    alpha: f64,
    cohort: &[bool],
    iter: usize,
) -> Result<Vec<CommEvent>> {
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let d = state.item_mat.d();
    let lambda_u = state.lambda_u;
    let v = &state.item_mat;
    state
        .user_vecs
        .par_iter_mut()
        .zip(data.rows.par_iter())
        .zip(cohort.par_iter())
        .filter(|(_, &joined)| joined)
        .for_each(|((u, row), _)| {
            let mut grad: Vec<f64> = u.iter().map(|x| 2.0 * lambda_u * x).collect();
            for (j, r) in row.iter() {
                let col = v.col(j);
                let e = r - dot(u, col);
                for k in 0..d {
                    grad[k] -= 2.0 * e * col[k];
                }
            }
            for (x, g) in u.iter_mut().zip(&grad) {
                *x -= alpha * g;
            }
        });
    if let Some(client) = state.user_vecs.iter().position(|u| u.iter().any(|x| !x.is_finite())) {
        return Err(Error::Divergence { client, iter });
    }

    let mut h_sum = ItemMatrix::zeros(d, state.item_mat.m());
    for ((u, row), _) in state.user_vecs.iter().zip(&data.rows).zip(cohort).filter(|(_, &c)| c) {
        for (j, r) in row.iter() {
            let e = r - dot(u, state.item_mat.col(j));
            for (acc, x) in h_sum.col_mut(j).iter_mut().zip(u) {
                *acc += e * x;
            }
        }
    }
    let lambda_v = state.lambda_v;
    for (v, h) in state.item_mat.as_mut_slice().iter_mut().zip(h_sum.as_slice()) {
        *v -= alpha * (-2.0 * h + 2.0 * lambda_v * *v);
    }
    if !state.item_mat.is_finite() {
        return Err(Error::Divergence {
            client: state.user_vecs.len(),
            iter,
        });
    }

    let participants = cohort.iter().filter(|&&c| c).count();
    let payload_shape = state.item_mat.shape();
    Ok([Direction::ClientToServer, Direction::ServerToClient]
        .into_iter()
        .map(|direction| CommEvent {
            iter,
            direction,
            participants,
            payload_shape,
        })
        .collect())
}
