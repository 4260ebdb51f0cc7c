//! Model parameters, the regularized objective `F = f + λψ`, and its exact
//! gradients.
//!
//! Client `i` owns a user vector `u_i ∈ R^d` and a private copy of the item
//! matrix `V_(i) ∈ R^{d×m}`. The task loss only touches observed entries:
//!
//! ```text
//! f_i(u_i, V_(i)) = Σ_{j ∈ obs(i)} (r_ij − u_iᵀ v_j)² + λ_u ‖u_i‖²
//! ψ(x)            = ½ Σ_i ‖V_(i) − V̄‖²_F
//! ```
//!
//! Unobserved columns contribute nothing to `f_i` or its gradient.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::matrix::{dot, norm_sq, ItemMatrix};

/// The observed part of one user's rating vector.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingRow {
    items: Vec<usize>,
    ratings: Vec<f64>,
}

impl RatingRow {
    /// Builds a row from `(item, rating)` pairs. Item indices must be
    /// strictly increasing.
    pub fn new(entries: Vec<(usize, f64)>) -> Result<Self, ModelError> {
        let mut items = Vec::with_capacity(entries.len());
        let mut ratings = Vec::with_capacity(entries.len());
        for (item, rating) in entries {
            if let Some(&last) = items.last() {
                if item <= last {
                    return Err(ModelError::Shape {
                        expected: "strictly increasing item indices".into(),
                        found: format!("{item} after {last}"),
                    });
                }
            }
            items.push(item);
            ratings.push(rating);
        }
        Ok(Self { items, ratings })
    }

    /// Sorts by item index first; duplicate items are rejected.
    pub fn from_unsorted(mut entries: Vec<(usize, f64)>) -> Result<Self, ModelError> {
        entries.sort_by_key(|&(item, _)| item);
        Self::new(entries)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[usize] {
        &self.items
    }

    pub fn ratings(&self) -> &[f64] {
        &self.ratings
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.items.iter().copied().zip(self.ratings.iter().copied())
    }

    pub fn max_item(&self) -> Option<usize> {
        self.items.last().copied()
    }

    /// `‖R_i‖` over observed entries.
    pub fn norm(&self) -> f64 {
        norm_sq(&self.ratings).sqrt()
    }
}

/// One client's parameters `x_i = (u_i, V_(i))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalModel {
    pub user_vec: Vec<f64>,
    pub item_mat: ItemMatrix,
}

impl LocalModel {
    pub fn new(user_vec: Vec<f64>, item_mat: ItemMatrix) -> Result<Self, ModelError> {
        if user_vec.len() != item_mat.d() {
            return Err(ModelError::Shape {
                expected: format!("user vector of length {}", item_mat.d()),
                found: format!("length {}", user_vec.len()),
            });
        }
        Ok(Self { user_vec, item_mat })
    }

    pub fn zeros(d: usize, m: usize) -> Self {
        Self {
            user_vec: vec![0.0; d],
            item_mat: ItemMatrix::zeros(d, m),
        }
    }

    pub fn d(&self) -> usize {
        self.user_vec.len()
    }

    pub fn m(&self) -> usize {
        self.item_mat.m()
    }

    pub fn is_finite(&self) -> bool {
        self.user_vec.iter().all(|x| x.is_finite()) && self.item_mat.is_finite()
    }

    /// Number of scalar parameters, `d (m + 1)`.
    pub fn dim(&self) -> usize {
        self.user_vec.len() + self.item_mat.as_slice().len()
    }

    fn check_row(&self, row: &RatingRow) -> Result<(), ModelError> {
        if self.user_vec.len() != self.item_mat.d() {
            return Err(ModelError::Shape {
                expected: format!("user vector of length {}", self.item_mat.d()),
                found: format!("length {}", self.user_vec.len()),
            });
        }
        if row.is_empty() {
            return Err(ModelError::DegenerateClient);
        }
        if let Some(max) = row.max_item() {
            if max >= self.item_mat.m() {
                return Err(ModelError::Shape {
                    expected: format!("item index < {}", self.item_mat.m()),
                    found: format!("item index {max}"),
                });
            }
        }
        Ok(())
    }
}

/// The server-side average item matrix `V̄`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalState {
    pub avg_item_mat: ItemMatrix,
}

impl GlobalState {
    pub fn new(avg_item_mat: ItemMatrix) -> Self {
        Self { avg_item_mat }
    }
}

/// Gradient of a client objective with respect to `(u_i, V_(i))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGrad {
    pub user: Vec<f64>,
    pub items: ItemMatrix,
}

impl LocalGrad {
    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.user) + self.items.frobenius_sq()
    }
}

/// Residuals `r_ij − u_iᵀ v_j` over the observed entries, in row order.
pub fn residuals(model: &LocalModel, row: &RatingRow) -> Vec<f64> {
    row.iter()
        .map(|(j, r)| r - dot(&model.user_vec, model.item_mat.col(j)))
        .collect()
}

/// `f_i(x_i) = Σ_obs (r_ij − u_iᵀ v_j)² + λ_u ‖u_i‖²`.
pub fn local_loss(model: &LocalModel, row: &RatingRow, lambda_u: f64) -> Result<f64, ModelError> {
    model.check_row(row)?;
    let sse: f64 = residuals(model, row).iter().map(|e| e * e).sum();
    Ok(sse + lambda_u * norm_sq(&model.user_vec))
}

/// `ψ(x) = ½ Σ_i ‖V_(i) − V̄‖²_F`.
pub fn regularizer(models: &[LocalModel], global: &GlobalState) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for model in models {
        total += model.item_mat.dist_sq(&global.avg_item_mat)?;
    }
    Ok(0.5 * total)
}

/// `∇f_i`: `−2 Σ_obs e_j v_j + 2λ_u u_i` for the user vector and
/// `−2 e_j u_i` for each observed column (zero elsewhere).
pub fn grad_f(model: &LocalModel, row: &RatingRow, lambda_u: f64) -> Result<LocalGrad, ModelError> {
    model.check_row(row)?;
    let d = model.d();
    let mut user: Vec<f64> = model.user_vec.iter().map(|u| 2.0 * lambda_u * u).collect();
    let mut items = ItemMatrix::zeros(d, model.m());
    for ((j, _), e) in row.iter().zip(residuals(model, row)) {
        let v = model.item_mat.col(j);
        for k in 0..d {
            user[k] -= 2.0 * e * v[k];
        }
        let g = items.col_mut(j);
        for k in 0..d {
            g[k] = -2.0 * e * model.user_vec[k];
        }
    }
    Ok(LocalGrad { user, items })
}

/// `∇_{V_(i)} ψ_i = V_(i) − V̄`, with `V̄` held fixed.
pub fn grad_psi(model: &LocalModel, global: &GlobalState) -> Result<ItemMatrix, ModelError> {
    model.item_mat.check_same_shape(&global.avg_item_mat)?;
    let mut out = model.item_mat.clone();
    out.axpy(-1.0, &global.avg_item_mat)?;
    Ok(out)
}

/// Entrywise arithmetic mean of the given matrices.
pub fn aggregate(item_mats: &[&ItemMatrix]) -> Result<GlobalState, ModelError> {
    let first = item_mats.first().ok_or(ModelError::NoParticipants)?;
    let mut sum = ItemMatrix::zeros(first.d(), first.m());
    for mat in item_mats {
        sum.axpy(1.0, mat)?;
    }
    let n = item_mats.len() as f64;
    for x in sum.as_mut_slice() {
        *x /= n;
    }
    Ok(GlobalState::new(sum))
}

/// `r̂ = uᵀv`, clamped to `bounds` when given.
pub fn predict(user_vec: &[f64], item_col: &[f64], bounds: Option<(f64, f64)>) -> Result<f64, ModelError> {
    if user_vec.len() != item_col.len() {
        return Err(ModelError::Shape {
            expected: format!("vectors of equal length ({})", user_vec.len()),
            found: format!("length {}", item_col.len()),
        });
    }
    let raw = dot(user_vec, item_col);
    Ok(match bounds {
        Some((lo, hi)) => raw.clamp(lo, hi),
        None => raw,
    })
}

/// `F(x) = Σ_i f_i(x_i) + λ ψ(x)` against the given `V̄`.
pub fn objective(
    models: &[LocalModel],
    rows: &[RatingRow],
    global: &GlobalState,
    lambda_u: f64,
    lambda: f64,
) -> Result<f64, ModelError> {
    if models.len() != rows.len() {
        return Err(ModelError::Shape {
            expected: format!("{} rating rows", models.len()),
            found: format!("{}", rows.len()),
        });
    }
    let mut f = 0.0;
    for (model, row) in models.iter().zip(rows) {
        f += local_loss(model, row, lambda_u)?;
    }
    Ok(f + lambda * regularizer(models, global)?)
}

/// Mean of the clients' item matrices: the `V̄` that `F` is defined against.
pub fn consensus(models: &[LocalModel]) -> Result<GlobalState, ModelError> {
    let mats: Vec<&ItemMatrix> = models.iter().map(|m| &m.item_mat).collect();
    aggregate(&mats)
}

/// In-place gradient step `x_i ← x_i − step · ∇f_i(x_i)`. All partial
/// derivatives are taken at the pre-step point.
pub(crate) fn task_step(model: &mut LocalModel, row: &RatingRow, lambda_u: f64, step: f64) {
    let d = model.d();
    let res = residuals(model, row);
    let mut grad_u: Vec<f64> = model.user_vec.iter().map(|u| 2.0 * lambda_u * u).collect();
    for ((j, _), &e) in row.iter().zip(&res) {
        let v = model.item_mat.col(j);
        for k in 0..d {
            grad_u[k] -= 2.0 * e * v[k];
        }
    }
    let u_old = model.user_vec.clone();
    for ((j, _), &e) in row.iter().zip(&res) {
        let v = model.item_mat.col_mut(j);
        for k in 0..d {
            v[k] += step * 2.0 * e * u_old[k];
        }
    }
    for (u, g) in model.user_vec.iter_mut().zip(&grad_u) {
        *u -= step * g;
    }
}

/// In-place `V_(i) ← V_(i) − rate · (V_(i) − V̄)`.
pub(crate) fn consensus_step(item_mat: &mut ItemMatrix, global: &ItemMatrix, rate: f64) {
    for (v, g) in item_mat.as_mut_slice().iter_mut().zip(global.as_slice()) {
        *v -= rate * (*v - g);
    }
}

/// In-place `x_i ← x_i − α (∇f_i(x_i) + λ ∇ψ_i(x_i))`.
pub(crate) fn full_step(
    model: &mut LocalModel,
    row: &RatingRow,
    global: &ItemMatrix,
    lambda_u: f64,
    lambda: f64,
    alpha: f64,
) {
    let d = model.d();
    let res = residuals(model, row);
    let mut grad_u: Vec<f64> = model.user_vec.iter().map(|u| 2.0 * lambda_u * u).collect();
    for ((j, _), &e) in row.iter().zip(&res) {
        let v = model.item_mat.col(j);
        for k in 0..d {
            grad_u[k] -= 2.0 * e * v[k];
        }
    }
    consensus_step(&mut model.item_mat, global, alpha * lambda);
    for ((j, _), &e) in row.iter().zip(&res) {
        let v = model.item_mat.col_mut(j);
        for k in 0..d {
            v[k] += alpha * 2.0 * e * model.user_vec[k];
        }
    }
    for (u, g) in model.user_vec.iter_mut().zip(&grad_u) {
        *u -= alpha * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn row(entries: &[(usize, f64)]) -> RatingRow {
        RatingRow::new(entries.to_vec()).unwrap()
    }

    fn scalar_instance() -> (LocalModel, RatingRow) {
        let v = ItemMatrix::from_rows(&[vec![1.0, 3.0]]).unwrap();
        (LocalModel::new(vec![2.0], v).unwrap(), row(&[(0, 1.0), (1, 5.0)]))
    }

    #[test]
    fn rating_row_rejects_unsorted() {
        assert!(RatingRow::new(vec![(2, 1.0), (1, 1.0)]).is_err());
        assert!(RatingRow::new(vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(RatingRow::from_unsorted(vec![(2, 1.0), (1, 1.0)]).is_ok());
    }

    #[test]
    fn zero_model_zero_ratings_zero_loss() {
        let model = LocalModel::new(vec![0.0; 3], ItemMatrix::from_rows(&vec![vec![0.3, -1.0]; 3]).unwrap()).unwrap();
        let r = row(&[(0, 0.0), (1, 0.0)]);
        assert_eq!(local_loss(&model, &r, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn scalar_loss_by_hand() {
        // (1−2)² + (5−6)² + 0.1·4
        let (model, r) = scalar_instance();
        assert_relative_eq!(local_loss(&model, &r, 0.1).unwrap(), 2.4, max_relative = 1e-15);
    }

    #[test]
    fn scalar_grad_by_hand() {
        // grad_u = −2((1−2)·1 + (5−6)·3) + 2·0.1·2 = 8 + 0.4
        // grad_v0 = −2(−1)(2) = 4, grad_v1 = −2(−1)(2) = 4
        let (model, r) = scalar_instance();
        let g = grad_f(&model, &r, 0.1).unwrap();
        assert_relative_eq!(g.user[0], 8.4, max_relative = 1e-15);
        assert_eq!(g.items.col(0), &[4.0]);
        assert_eq!(g.items.col(1), &[4.0]);
    }

    #[test]
    fn perfect_fit_is_stationary() {
        let v = ItemMatrix::from_rows(&[vec![1.0, 0.5], vec![2.0, -1.0]]).unwrap();
        let u = vec![0.5, 1.5];
        let model = LocalModel::new(u.clone(), v.clone()).unwrap();
        let r = row(&[(0, dot(&u, v.col(0))), (1, dot(&u, v.col(1)))]);
        let g = grad_f(&model, &r, 0.0).unwrap();
        assert!(g.user.iter().all(|&x| x == 0.0));
        assert!(g.items.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(local_loss(&model, &r, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn unobserved_columns_have_zero_gradient() {
        let v = ItemMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let model = LocalModel::new(vec![1.0], v).unwrap();
        let g = grad_f(&model, &row(&[(1, 4.0)]), 0.0).unwrap();
        assert_eq!(g.items.col(0), &[0.0]);
        assert_eq!(g.items.col(2), &[0.0]);
        assert_eq!(g.items.col(1), &[-4.0]);
    }

    #[test]
    fn loss_errors() {
        let model = LocalModel::zeros(2, 3);
        assert_eq!(local_loss(&model, &RatingRow::default(), 0.1), Err(ModelError::DegenerateClient));
        assert!(matches!(
            local_loss(&model, &row(&[(3, 1.0)]), 0.1),
            Err(ModelError::Shape { .. })
        ));
        let bad = LocalModel {
            user_vec: vec![0.0; 3],
            item_mat: ItemMatrix::zeros(2, 3),
        };
        assert!(matches!(local_loss(&bad, &row(&[(0, 1.0)]), 0.1), Err(ModelError::Shape { .. })));
        assert!(LocalModel::new(vec![0.0; 3], ItemMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn regularizer_examples() {
        let g = GlobalState::new(ItemMatrix::from_rows(&[vec![1.0]]).unwrap());
        let a = LocalModel::new(vec![0.0], ItemMatrix::from_rows(&[vec![0.0]]).unwrap()).unwrap();
        let b = LocalModel::new(vec![0.0], ItemMatrix::from_rows(&[vec![2.0]]).unwrap()).unwrap();
        assert_eq!(regularizer(&[a, b], &g).unwrap(), 1.0);

        let same = LocalModel::new(vec![0.0], g.avg_item_mat.clone()).unwrap();
        assert_eq!(regularizer(&[same.clone(), same], &g).unwrap(), 0.0);

        let wrong = LocalModel::zeros(1, 2);
        assert!(regularizer(&[wrong], &g).is_err());
    }

    #[test]
    fn grad_psi_examples() {
        let g = GlobalState::new(ItemMatrix::from_rows(&[vec![1.0]]).unwrap());
        let a = LocalModel::new(vec![0.0], ItemMatrix::from_rows(&[vec![3.0]]).unwrap()).unwrap();
        assert_eq!(grad_psi(&a, &g).unwrap().as_slice(), &[2.0]);
        let at = LocalModel::new(vec![0.0], g.avg_item_mat.clone()).unwrap();
        assert!(grad_psi(&at, &g).unwrap().as_slice().iter().all(|&x| x == 0.0));
        assert!(grad_psi(&LocalModel::zeros(2, 1), &g).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let m = ItemMatrix::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0]]).unwrap();
        assert_eq!(aggregate(&[&m]).unwrap().avg_item_mat, m);
        let mut neg = m.clone();
        neg.scale(-1.0);
        assert!(aggregate(&[&m, &neg])
            .unwrap()
            .avg_item_mat
            .as_slice()
            .iter()
            .all(|&x| x == 0.0));
        assert_eq!(aggregate(&[]), Err(ModelError::NoParticipants));
        assert!(aggregate(&[&m, &ItemMatrix::zeros(1, 2)]).is_err());
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[1.0, 0.0], &[0.0, 1.0], None).unwrap(), 0.0);
        assert_eq!(predict(&[1.0, 2.0], &[3.0, 4.0], None).unwrap(), 11.0);
        assert_eq!(predict(&[7.3], &[1.0], Some((1.0, 5.0))).unwrap(), 5.0);
        assert_eq!(predict(&[7.3], &[1.0], None).unwrap(), 7.3);
        assert!(predict(&[1.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn in_place_steps_match_explicit_gradients() {
        let v = ItemMatrix::from_rows(&[vec![0.3, -0.2, 0.7], vec![1.1, 0.4, -0.5]]).unwrap();
        let model = LocalModel::new(vec![0.9, -0.4], v).unwrap();
        let r = row(&[(0, 3.0), (2, 1.5)]);
        let global = ItemMatrix::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.1, 0.0, 0.5]]).unwrap();
        let (lambda_u, lambda, alpha) = (0.1, 2.0, 0.05);

        let gf = grad_f(&model, &r, lambda_u).unwrap();
        let gpsi = grad_psi(&model, &GlobalState::new(global.clone())).unwrap();

        let mut stepped = model.clone();
        full_step(&mut stepped, &r, &global, lambda_u, lambda, alpha);
        for k in 0..2 {
            assert_relative_eq!(stepped.user_vec[k], model.user_vec[k] - alpha * gf.user[k], epsilon = 1e-15);
        }
        for (idx, &x) in stepped.item_mat.as_slice().iter().enumerate() {
            let expected = model.item_mat.as_slice()[idx]
                - alpha * (gf.items.as_slice()[idx] + lambda * gpsi.as_slice()[idx]);
            assert_relative_eq!(x, expected, epsilon = 1e-15);
        }

        let mut task = model.clone();
        task_step(&mut task, &r, lambda_u, alpha);
        for (idx, &x) in task.item_mat.as_slice().iter().enumerate() {
            assert_relative_eq!(
                x,
                model.item_mat.as_slice()[idx] - alpha * gf.items.as_slice()[idx],
                epsilon = 1e-15
            );
        }
    }
}
