//! Small planted low-rank instances for tests and theory checks.

use rand::Rng;

use crate::data::RatingsDataset;
use crate::matrix::{dot, ItemMatrix};
use crate::rng::{normal, stream, Stream};

/// The model the ratings were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedModel {
    pub user_vecs: Vec<Vec<f64>>,
    pub item_mat: ItemMatrix,
}

/// Fully observed `n × m` ratings `r_ij = u_iᵀv_j + noise`, with factors of
/// rank `d` drawn from `N(0, 1)`.
pub fn planted(n: usize, m: usize, d: usize, noise_std: f64, seed: u64) -> (RatingsDataset, PlantedModel) {
    planted_with_density(n, m, d, 1.0, noise_std, seed)
}

/// Like [`planted`], but each entry is observed with probability `density`.
/// Every user keeps at least one observation.
pub fn planted_with_density(
    n: usize,
    m: usize,
    d: usize,
    density: f64,
    noise_std: f64,
    seed: u64,
) -> (RatingsDataset, PlantedModel) {
    let mut rng = stream(seed, Stream::Probe, u64::from(u32::MAX));
    let user_vecs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| normal(&mut rng)).collect()).collect();
    let item_data = (0..d * m).map(|_| normal(&mut rng)).collect();
    let item_mat = ItemMatrix::from_col_major(d, m, item_data).expect("sizes agree");
    let mut triples = Vec::new();
    for (i, u) in user_vecs.iter().enumerate() {
        let forced = rng.gen_range(0..m);
        for j in 0..m {
            if j == forced || rng.gen::<f64>() < density {
                let r = dot(u, item_mat.col(j)) + noise_std * normal(&mut rng);
                triples.push((i, j, r));
            }
        }
    }
    let data = RatingsDataset::from_triples("planted", n, m, &triples).expect("indices in range");
    (data, PlantedModel { user_vecs, item_mat })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let (a, pa) = planted(4, 6, 2, 0.0, 7);
        let (b, _) = planted(4, 6, 2, 0.0, 7);
        assert_eq!(a, b);
        assert_eq!(a.n_ratings(), 24);
        let (u, j, r) = a.triples().nth(5).unwrap();
        assert!((r - dot(&pa.user_vecs[u], pa.item_mat.col(j))).abs() < 1e-12);
    }

    #[test]
    fn sparse_keeps_every_user() {
        let (data, _) = planted_with_density(8, 10, 2, 0.05, 0.1, 3);
        assert!(data.rows.iter().all(|r| !r.is_empty()));
    }
}
