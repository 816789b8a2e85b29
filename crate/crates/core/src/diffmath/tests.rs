use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::params::{ParamId, ParamStore};

fn t(rows: &[&[f64]]) -> Tensor2 {
    Tensor2::from_rows(rows).unwrap()
}

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor2 {
    Tensor2::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Fixed random weighting so the scalar objective exercises every output entry differently.
fn weights(rng: &mut ChaCha8Rng, shape: [usize; 2]) -> Tensor2 {
    random(rng, shape[0], shape[1])
}

fn weighted_sum(out: &Tensor2, w: &Tensor2) -> f64 {
    out.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn linear_examples() {
    let x = t(&[&[1.0, 2.0]]);
    let eye = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
    assert_eq!(linear(&x, &eye, &t(&[&[0.0, 0.0]])).unwrap(), x);
    let zero = Tensor2::zeros(2, 2);
    assert_eq!(linear(&x, &zero, &t(&[&[3.0, 4.0]])).unwrap(), t(&[&[3.0, 4.0]]));
    let ones = Tensor2::filled(2, 2, 1.0);
    assert_eq!(linear(&x, &ones, &t(&[&[1.0, 0.0]])).unwrap(), t(&[&[4.0, 3.0]]));
}

#[test]
fn linear_shape_error_names_both_shapes() {
    let err = linear(&Tensor2::zeros(1, 3), &Tensor2::zeros(2, 2), &Tensor2::zeros(1, 2)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[1, 3]") && msg.contains("[2, 2]"), "{msg}");
}

#[test]
fn relu_examples() {
    assert_eq!(relu(&t(&[&[-1.0, 2.0]])), t(&[&[0.0, 2.0]]));
    assert_eq!(relu(&t(&[&[0.0]])), t(&[&[0.0]]));
    assert_eq!(relu(&t(&[&[3.5, -0.5, 0.25]])), t(&[&[3.5, 0.0, 0.25]]));
    assert_eq!(relu_backward(&t(&[&[0.0]]), &t(&[&[5.0]])), t(&[&[0.0]]));
}

#[test]
fn jaccard_examples() {
    let w = jaccard_cross(&t(&[&[1.0, 0.0]]), &t(&[&[1.0, 0.0], &[0.0, 1.0], &[2.0, 0.0], &[-1.0, 0.0]])).unwrap();
    assert_abs_diff_eq!(w.get(0, 0), 1.0, epsilon = 1e-8);
    assert_eq!(w.get(0, 1), 0.0);
    assert_abs_diff_eq!(w.get(0, 2), 0.8, epsilon = 1e-12);
    assert_abs_diff_eq!(w.get(0, 3), -1.0, epsilon = 1e-8);
}

#[test]
fn jaccard_zero_vectors_have_zero_affinity() {
    let w = jaccard_affinity(&Tensor2::zeros(2, 3));
    assert!(w.data().iter().all(|&v| v == 0.0));
    let g = jaccard_affinity_backward(&Tensor2::zeros(2, 3), &Tensor2::filled(2, 2, 1.0));
    assert!(g.is_finite());
}

#[test]
fn layer_norm_examples() {
    let ones = Tensor2::filled(1, 3, 1.0);
    let zeros3 = Tensor2::zeros(1, 3);
    let (y, _) = layer_norm(&t(&[&[1.0, 1.0, 1.0]]), &ones, &zeros3).unwrap();
    assert_eq!(y, Tensor2::zeros(1, 3));

    let (y, _) = layer_norm(&t(&[&[1.0, -1.0]]), &Tensor2::filled(1, 2, 1.0), &Tensor2::zeros(1, 2)).unwrap();
    assert_abs_diff_eq!(y.get(0, 0), 1.0, epsilon = 1e-5);
    assert_abs_diff_eq!(y.get(0, 1), -1.0, epsilon = 1e-5);

    let (y, _) = layer_norm(&t(&[&[0.0, 2.0]]), &Tensor2::filled(1, 2, 2.0), &Tensor2::filled(1, 2, 1.0)).unwrap();
    assert_abs_diff_eq!(y.get(0, 0), -1.0, epsilon = 1e-4);
    assert_abs_diff_eq!(y.get(0, 1), 3.0, epsilon = 1e-4);
}

#[test]
fn dropout_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&mut rng, 2, 3);
    let (y, mask) = dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap();
    assert_eq!(y, x);
    assert!(mask.is_none());
    let (y, _) = dropout(&x, 0.0, Mode::Train, &mut rng).unwrap();
    assert_eq!(y, x);

    let ones = Tensor2::filled(1, 4, 1.0);
    let (y, _) = dropout(&ones, 0.5, Mode::Train, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let mut replay = ChaCha8Rng::seed_from_u64(11);
    for v in y.data() {
        let dropped = replay.random::<f64>() < 0.5;
        assert_eq!(*v, if dropped { 0.0 } else { 2.0 });
    }
    assert!(matches!(dropout(&ones, 1.0, Mode::Train, &mut replay), Err(Error::Parameter(_))));
}

#[test]
fn softmax_examples() {
    assert_eq!(softmax_rows(&t(&[&[0.0, 0.0]])), t(&[&[0.5, 0.5]]));
    assert_eq!(softmax_rows(&t(&[&[1000.0, 1000.0]])), t(&[&[0.5, 0.5]]));
    let y = softmax_rows(&t(&[&[1f64.ln(), 3f64.ln()]]));
    assert_abs_diff_eq!(y.get(0, 0), 0.25, epsilon = 1e-15);
    assert_abs_diff_eq!(y.get(0, 1), 0.75, epsilon = 1e-15);
}

#[test]
fn bilinear_examples() {
    let h = t(&[&[2.0, 3.0]]);
    let o = t(&[&[4.0, 5.0]]);
    assert_eq!(bilinear_form(&h, &Tensor2::zeros(4, 2), &o).unwrap(), Tensor2::zeros(1, 2));

    // W[i][j][k] = 1 iff i = j = k
    let mut wb = Tensor2::zeros(4, 2);
    wb.set(0, 0, 1.0); // (i=0, j=0), k=0
    wb.set(3, 1, 1.0); // (i=1, j=1), k=1
    assert_eq!(bilinear_form(&h, &wb, &o).unwrap(), t(&[&[8.0, 15.0]]));

    let out = bilinear_form(&t(&[&[1.5]]), &t(&[&[-2.0]]), &t(&[&[3.0]])).unwrap();
    assert_eq!(out, t(&[&[-9.0]]));

    assert!(matches!(
        bilinear_form(&h, &Tensor2::zeros(3, 2), &o),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn pooling_examples() {
    let single = t(&[&[1.0, -2.0]]);
    assert_eq!(max_pool_set(&single).unwrap().0, single);
    assert_eq!(mean_pool_set(&single).unwrap(), single);
    assert_eq!(max_pool_set(&t(&[&[1.0, 2.0], &[3.0, 0.0]])).unwrap().0, t(&[&[3.0, 2.0]]));
    assert_eq!(max_pool_set(&t(&[&[-1.0, -2.0], &[-3.0, -1.0]])).unwrap().0, t(&[&[-1.0, -1.0]]));
    assert_eq!(mean_pool_set(&t(&[&[0.0, 2.0], &[2.0, 0.0]])).unwrap(), t(&[&[1.0, 1.0]]));
    assert_eq!(mean_pool_set(&t(&[&[1.0, 1.0], &[2.0, 2.0], &[3.0, 3.0]])).unwrap(), t(&[&[2.0, 2.0]]));
    assert!(matches!(max_pool_set(&Tensor2::zeros(0, 2)), Err(Error::EmptySet { .. })));
    assert!(matches!(mean_pool_set(&Tensor2::zeros(0, 2)), Err(Error::EmptySet { .. })));
}

#[test]
fn max_pool_ties_route_to_lowest_row() {
    let (_, arg) = max_pool_set(&t(&[&[1.0, 0.0], &[1.0, 0.0]])).unwrap();
    assert_eq!(arg, vec![0, 0]);
    let g = max_pool_backward(&arg, 2, &t(&[&[1.0, 1.0]]));
    assert_eq!(g, t(&[&[1.0, 1.0], &[0.0, 0.0]]));
}

// ---- finite-difference checks -------------------------------------------------

fn store_with(tensors: Vec<(&str, Tensor2)>) -> (ParamStore, Vec<ParamId>) {
    let mut ps = ParamStore::new();
    let ids = tensors
        .into_iter()
        .map(|(n, v)| {
            let shape = v.shape().to_vec();
            ps.add(n, shape, v).unwrap()
        })
        .collect();
    (ps, ids)
}

#[test]
fn grad_check_linear_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut ps, ids) = store_with(vec![
        ("x", random(&mut rng, 3, 4)),
        ("w", random(&mut rng, 4, 2)),
        ("b", random(&mut rng, 1, 2)),
    ]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let out = linear(ps.value(ids[0]), ps.value(ids[1]), ps.value(ids[2]))?;
        if want {
            let g = linear_backward(ps.value(ids[0]), ps.value(ids[1]), &Tensor2::filled(3, 2, 1.0));
            ps.accumulate(ids[0], &g.dx);
            ps.accumulate(ids[1], &g.dw);
            ps.accumulate(ids[2], &g.db);
        }
        Ok(out.sum())
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-6, "{report:?}");
}

#[test]
fn grad_check_jaccard_affinity() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut ps, ids) = store_with(vec![("r", random(&mut rng, 3, 4))]);
        let w = weights(&mut rng, [3, 3]);
        let report = grad_check(&mut ps, 1e-5, |ps, want| {
            let out = jaccard_affinity(ps.value(ids[0]));
            if want {
                let g = jaccard_affinity_backward(ps.value(ids[0]), &w);
                ps.accumulate(ids[0], &g);
            }
            Ok(weighted_sum(&out, &w))
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "seed {seed}: {report:?}");
    }
}

#[test]
fn grad_check_jaccard_cross() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut ps, ids) = store_with(vec![("a", random(&mut rng, 2, 5)), ("b", random(&mut rng, 4, 5))]);
    let w = weights(&mut rng, [2, 4]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let out = jaccard_cross(ps.value(ids[0]), ps.value(ids[1]))?;
        if want {
            let (da, db) = jaccard_cross_backward(ps.value(ids[0]), ps.value(ids[1]), &w);
            ps.accumulate(ids[0], &da);
            ps.accumulate(ids[1], &db);
        }
        Ok(weighted_sum(&out, &w))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn sign_flipped_jaccard_backward_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut ps, ids) = store_with(vec![("r_prime", random(&mut rng, 3, 4))]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let out = jaccard_affinity(ps.value(ids[0]));
        if want {
            let g = jaccard_affinity_backward(ps.value(ids[0]), &Tensor2::filled(3, 3, 1.0)).scale(-1.0);
            ps.accumulate(ids[0], &g);
        }
        Ok(out.sum())
    })
    .unwrap();
    assert!(report.max_rel_err > 0.5);
    assert_eq!(report.worst.unwrap().0, "r_prime");
}

#[test]
fn grad_check_layer_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut ps, ids) = store_with(vec![
        ("x", random(&mut rng, 3, 5)),
        ("gain", random(&mut rng, 1, 5)),
        ("shift", random(&mut rng, 1, 5)),
    ]);
    let w = weights(&mut rng, [3, 5]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let (out, cache) = layer_norm(ps.value(ids[0]), ps.value(ids[1]), ps.value(ids[2]))?;
        if want {
            let (dx, dg, ds) = layer_norm_backward(&cache, ps.value(ids[1]), &w);
            ps.accumulate(ids[0], &dx);
            ps.accumulate(ids[1], &dg);
            ps.accumulate(ids[2], &ds);
        }
        Ok(weighted_sum(&out, &w))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn grad_check_softmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut ps, ids) = store_with(vec![("x", random(&mut rng, 3, 4))]);
    let w = weights(&mut rng, [3, 4]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let y = softmax_rows(ps.value(ids[0]));
        if want {
            ps.accumulate(ids[0], &softmax_rows_backward(&y, &w));
        }
        Ok(weighted_sum(&y, &w))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn grad_check_bilinear() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut ps, ids) = store_with(vec![
        ("h", random(&mut rng, 1, 3)),
        ("wb", random(&mut rng, 9, 3)),
        ("o", random(&mut rng, 2, 3)),
    ]);
    let w = weights(&mut rng, [2, 3]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let (h, wb, o) = (ps.value(ids[0]), ps.value(ids[1]), ps.value(ids[2]));
        let out = bilinear_form(h, wb, o)?;
        if want {
            let (dh, dw, d_o) = bilinear_form_backward(h, wb, o, &w);
            ps.accumulate(ids[0], &dh);
            ps.accumulate(ids[1], &dw);
            ps.accumulate(ids[2], &d_o);
        }
        Ok(weighted_sum(&out, &w))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn grad_check_relu_and_pools_off_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut x = random(&mut rng, 4, 3);
    push_off_kinks(&mut x, 0.01);
    let (mut ps, ids) = store_with(vec![("x", x)]);
    let w = weights(&mut rng, [1, 3]);
    let report = grad_check(&mut ps, 1e-5, |ps, want| {
        let x = ps.value(ids[0]);
        let r = relu(x);
        let (mx, arg) = max_pool_set(&r)?;
        let mn = mean_pool_set(x)?;
        if want {
            let g_max = relu_backward(x, &max_pool_backward(&arg, 4, &w));
            let g_mean = mean_pool_backward(4, &w);
            ps.accumulate(ids[0], &g_max);
            ps.accumulate(ids[0], &g_mean);
        }
        Ok(weighted_sum(&mx, &w) + weighted_sum(&mn, &w))
    })
    .unwrap();
    assert!(report.max_rel_err < 1e-4, "{report:?}");
}

#[test]
fn grad_check_rejects_non_finite_objective() {
    let (mut ps, _) = store_with(vec![("x", Tensor2::zeros(1, 1))]);
    let err = grad_check(&mut ps, 1e-5, |_, _| Ok(f64::NAN)).unwrap_err();
    assert!(matches!(err, Error::Numeric(_)));
}

// ---- invariants ---------------------------------------------------------------

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Tensor2> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |d| Tensor2::from_vec(r, c, d).unwrap())
    })
}

proptest! {
    #[test]
    fn jaccard_symmetric_and_bounded(r in matrix(6, 5)) {
        let w = jaccard_affinity(&r);
        prop_assert!(w.max_abs_diff(&w.transpose()) < 1e-12);
        for v in w.data() {
            prop_assert!(*v >= -1.0 - 1e-9 && *v <= 1.0 + 1e-9);
        }
        for i in 0..r.rows() {
            let norm: f64 = r.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm >= 1e-3 {
                prop_assert!((w.get(i, i) - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn softmax_rows_normalized_and_shift_invariant(x in matrix(5, 6), shift in -50.0f64..50.0) {
        let y = softmax_rows(&x);
        for r in 0..y.rows() {
            prop_assert!((y.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let y2 = softmax_rows(&x.map(|v| v + shift));
        prop_assert!(y.max_abs_diff(&y2) < 1e-9);
    }

    #[test]
    fn pooling_permutation_invariant(x in matrix(7, 4), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..x.rows()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let px = x.select_rows(&idx);
        prop_assert_eq!(max_pool_set(&x).unwrap().0, max_pool_set(&px).unwrap().0);
        prop_assert!(mean_pool_set(&x).unwrap().max_abs_diff(&mean_pool_set(&px).unwrap()) < 1e-12);
    }

    #[test]
    fn relu_split_is_abs(x in matrix(4, 4)) {
        let sum = relu(&x).add(&relu(&x.scale(-1.0))).unwrap();
        prop_assert_eq!(sum, x.map(f64::abs));
    }

    #[test]
    fn dropout_eval_is_bitwise_identity(x in matrix(4, 4), p in 0.0f64..0.99, seed in any::<u64>()) {
        let (y, _) = dropout(&x, p, Mode::Eval, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert_eq!(y, x);
    }
}
