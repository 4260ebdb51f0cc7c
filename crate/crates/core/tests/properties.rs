use fedmf_core::matrix::ItemMatrix;
use fedmf_core::model::{aggregate, consensus, grad_f, grad_psi, regularizer, LocalModel, RatingRow};
use fedmf_core::privacy::{perturb, PrivacyConfig};
use fedmf_core::verify::{fd_grad_f, fd_grad_psi, relative_error};
use fedmf_core::RatingsDataset;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const D: usize = 3;
const M: usize = 5;

fn matrix() -> impl Strategy<Value = ItemMatrix> {
    prop::collection::vec(-2.0..2.0f64, D * M).prop_map(|v| ItemMatrix::from_col_major(D, M, v).unwrap())
}

fn model() -> impl Strategy<Value = LocalModel> {
    (prop::collection::vec(-2.0..2.0f64, D), matrix()).prop_map(|(u, v)| LocalModel::new(u, v).unwrap())
}

fn row() -> impl Strategy<Value = RatingRow> {
    prop::collection::btree_map(0..M, 1.0..5.0f64, 1..=M)
        .prop_map(|m| RatingRow::new(m.into_iter().collect()).unwrap())
}

fn flat_grad(model: &LocalModel, row: &RatingRow, lambda_u: f64) -> Vec<f64> {
    let g = grad_f(model, row, lambda_u).unwrap();
    g.user.iter().chain(g.items.as_slice()).copied().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grad_f_matches_finite_differences(m in model(), r in row(), lambda_u in 0.0..1.0f64) {
        let analytic = flat_grad(&m, &r, lambda_u);
        let numeric = fd_grad_f(&m, &r, lambda_u, 1e-5).unwrap();
        prop_assert!(relative_error(&analytic, &numeric, 1e-2) <= 1e-4);
    }

    #[test]
    fn grad_psi_matches_finite_differences(models in prop::collection::vec(model(), 2..5), pick in 0usize..5) {
        let client = pick % models.len();
        let global = consensus(&models).unwrap();
        let analytic = grad_psi(&models[client], &global).unwrap();
        let numeric = fd_grad_psi(&models, client, 1e-5).unwrap();
        prop_assert!(relative_error(analytic.as_slice(), &numeric, 1e-2) <= 1e-4);
    }

    #[test]
    fn aggregate_is_permutation_invariant(mats in prop::collection::vec(matrix(), 1..6), rot in 0usize..6) {
        let refs: Vec<&ItemMatrix> = mats.iter().collect();
        let mut shuffled = refs.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        let a = aggregate(&refs).unwrap();
        let b = aggregate(&shuffled).unwrap();
        for (x, y) in a.avg_item_mat.as_slice().iter().zip(b.avg_item_mat.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn aggregate_is_entrywise_mean(mats in prop::collection::vec(matrix(), 1..6)) {
        let refs: Vec<&ItemMatrix> = mats.iter().collect();
        let avg = aggregate(&refs).unwrap();
        for idx in 0..D * M {
            let mean = mats.iter().map(|m| m.as_slice()[idx]).sum::<f64>() / mats.len() as f64;
            prop_assert!((avg.avg_item_mat.as_slice()[idx] - mean).abs() <= 1e-9 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn regularizer_nonnegative(models in prop::collection::vec(model(), 1..5)) {
        let global = consensus(&models).unwrap();
        prop_assert!(regularizer(&models, &global).unwrap() >= 0.0);
    }

    #[test]
    fn regularizer_zero_iff_consensus(base in model(), n in 1usize..5, bump in prop::option::of((0usize..5, 0usize..D * M, 0.1..1.0f64))) {
        let mut models = vec![base; n];
        let mut disagree = false;
        if let Some((who, idx, by)) = bump {
            if n > 1 {
                models[who % n].item_mat.as_mut_slice()[idx] += by;
                disagree = true;
            }
        }
        let psi = regularizer(&models, &consensus(&models).unwrap()).unwrap();
        if disagree {
            prop_assert!(psi > 0.0);
        } else {
            prop_assert!(psi.abs() <= 1e-24);
        }
    }

    #[test]
    fn internal_format_round_trip(
        triples in prop::collection::btree_map((0usize..6, 0usize..7), 1u8..=5, 1..30)
    ) {
        let t: Vec<(usize, usize, f64)> = triples.into_iter().map(|((u, i), r)| (u, i, r as f64)).collect();
        let data = RatingsDataset::from_triples("prop", 6, 7, &t).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.txt");
        data.write_internal(&path).unwrap();
        let back = RatingsDataset::read_internal(&path).unwrap();
        prop_assert_eq!(back.n_users, data.n_users);
        prop_assert_eq!(back.n_items, data.n_items);
        prop_assert_eq!(back.rows, data.rows);
    }

    #[test]
    fn budget_monotone(delta in 0.01..5.0f64, s1 in 0.01..1.0f64, s2 in 0.01..1.0f64) {
        let a = PrivacyConfig::new(delta, s1.min(s2)).unwrap().budget();
        let b = PrivacyConfig::new(delta, s1.max(s2)).unwrap().budget();
        prop_assert!(a >= b);
        let wider = PrivacyConfig::new(delta * 2.0, s1).unwrap().budget();
        prop_assert!(wider > PrivacyConfig::new(delta, s1).unwrap().budget());
    }

    #[test]
    fn noiseless_perturb_is_clip(m in matrix(), delta in 0.1..3.0f64, seed in any::<u64>()) {
        let cfg = PrivacyConfig::new(delta, 0.05).unwrap().without_noise();
        let out = perturb(&m, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for (x, y) in m.as_slice().iter().zip(out.as_slice()) {
            prop_assert_eq!(*y, x.clamp(-delta, delta));
        }
    }
}
