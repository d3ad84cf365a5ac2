use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dasvrda::problem::{
    full_gradient, loss_derivative, objective, prox_elastic_net, smoothness_constant, soft, Dataset, ElasticNet,
    LossKind, Problem, SparseRow,
};
use dasvrda::sampling::{draw_batch, RngStream, SamplingScheme};

const LOSSES: [LossKind; 4] = [
    LossKind::Squared,
    LossKind::Logistic,
    LossKind::SmoothedHinge { nu: 0.5 },
    LossKind::SmoothedHinge { nu: 2.0 },
];

fn random_sparse(rng: &mut ChaCha8Rng, n: usize, d: usize, density: f64, loss: LossKind) -> Problem {
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|_| {
            let mut row = Vec::new();
            for j in 0..d {
                if rng.random::<f64>() < density {
                    row.push((j, rng.random_range(-3.0..3.0)));
                }
            }
            row
        })
        .collect();
    let labels = (0..n)
        .map(|_| match loss {
            LossKind::Squared => rng.random_range(-2.0..2.0),
            _ => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect();
    let data = Dataset::from_rows(rows, labels, d).unwrap();
    Problem::new(data, loss, ElasticNet::new(0.01, 0.02).unwrap()).unwrap()
}

#[test]
fn smoothed_hinge_quadratic_piece_derivative() {
    let loss = LossKind::SmoothedHinge { nu: 0.5 };
    let d = loss_derivative(loss, 0.9, 1.0).unwrap();
    assert_relative_eq!(d, -0.2, epsilon = 1e-15);
    let h = 1e-6;
    let fd = (loss.value(0.9 + h, 1.0) - loss.value(0.9 - h, 1.0)) / (2.0 * h);
    assert_relative_eq!(fd, d, max_relative = 1e-6);
}

#[test]
fn smoothness_constant_matches_finite_difference_hessian_scan() {
    for loss in LOSSES {
        let h = 1e-5;
        let mut max_curv = 0.0f64;
        let mut t = -6.0;
        while t <= 6.0 {
            for label in [1.0, -1.0] {
                let c = (loss.derivative(t + h, label) - loss.derivative(t, label)) / h;
                max_curv = max_curv.max(c.abs());
            }
            t += 1e-3;
        }
        let row = SparseRow::new(&[0], &[1.0]);
        let l = smoothness_constant(loss, row);
        assert!(max_curv <= l * (1.0 + 1e-6), "{}: scan {} > {}", loss, max_curv, l);
        assert!(max_curv >= l * 0.99, "{}: scan {} well below {}", loss, max_curv, l);
    }
}

#[test]
fn smoothed_hinge_constant_for_half_width() {
    let row = SparseRow::new(&[0, 1], &[1.0, 0.0]);
    assert_eq!(smoothness_constant(LossKind::SmoothedHinge { nu: 0.5 }, row), 2.0);
}

#[test]
fn full_gradient_matches_dense_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for loss in LOSSES {
        for _ in 0..20 {
            let p = random_sparse(&mut rng, 3, 6, 0.5, loss);
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut dense = vec![vec![0.0; 6]; 3];
            for (i, row) in dense.iter_mut().enumerate() {
                for (j, v) in p.data.row(i).iter() {
                    row[j] = v;
                }
            }
            let mut want = vec![0.0; 6];
            for i in 0..3 {
                let t: f64 = (0..6).map(|j| dense[i][j] * x[j]).sum();
                let g = loss.derivative(t, p.data.label(i));
                for j in 0..6 {
                    want[j] += g * dense[i][j] / 3.0;
                }
            }
            let got = full_gradient(&p, &x).unwrap();
            for j in 0..6 {
                assert_relative_eq!(got[j], want[j], epsilon = 1e-14, max_relative = 1e-12);
            }
        }
    }
}

fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0, 0.0);
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

#[test]
fn objective_matches_compensated_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for loss in LOSSES {
        let p = random_sparse(&mut rng, 400, 30, 0.3, loss);
        let x: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = p.n() as f64;
        let f = kahan_sum((0..p.n()).map(|i| {
            let t = kahan_sum(p.data.row(i).iter().map(|(j, v)| v * x[j]));
            loss.value(t, p.data.label(i)) / n
        }));
        let r = p.reg.l1 * kahan_sum(x.iter().map(|v| v.abs())) + 0.5 * p.reg.l2 * kahan_sum(x.iter().map(|v| v * v));
        let got = objective(&p, &x).unwrap();
        assert_relative_eq!(got, f + r, max_relative = 1e-12);
    }
}

#[test]
fn finite_difference_full_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for loss in [LossKind::Squared, LossKind::Logistic] {
        let mut p = random_sparse(&mut rng, 50, 8, 0.6, loss);
        p.reg = ElasticNet::new(0.0, 0.0).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-0.5..0.5)).collect();
        let g = full_gradient(&p, &x).unwrap();
        let h = 1e-6;
        for j in 0..8 {
            let mut a = x.clone();
            let mut b = x.clone();
            a[j] += h;
            b[j] -= h;
            let fd = (objective(&p, &a).unwrap() - objective(&p, &b).unwrap()) / (2.0 * h);
            assert_relative_eq!(g[j], fd, epsilon = 1e-8, max_relative = 1e-6);
        }
    }
}

#[test]
fn losses_are_midpoint_convex() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for loss in LOSSES {
        for _ in 0..10_000 {
            let (t1, t2) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let mid = loss.value(0.5 * (t1 + t2), label);
            let avg = 0.5 * (loss.value(t1, label) + loss.value(t2, label));
            assert!(mid <= avg + 1e-12 * avg.abs().max(1.0), "{} at {}, {}", loss, t1, t2);
        }
    }
}

#[test]
fn derivatives_are_lipschitz() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for loss in LOSSES {
        let l = smoothness_constant(loss, SparseRow::new(&[0], &[1.0]));
        for _ in 0..10_000 {
            let (t1, t2) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let label = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let lhs = (loss.derivative(t1, label) - loss.derivative(t2, label)).abs();
            assert!(lhs <= l * (t1 - t2).abs() * (1.0 + 1e-12) + 1e-15);
        }
    }
}

#[test]
fn prox_is_nonexpansive_and_reduces_correctly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..2000 {
        let d = 5;
        let u: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
        let tau = rng.random_range(0.01..3.0);
        let reg = ElasticNet::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)).unwrap();
        let (pu, pv) = (prox_elastic_net(&u, tau, &reg), prox_elastic_net(&v, tau, &reg));
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        assert!(dist(&pu, &pv) <= dist(&u, &v) + 1e-14);

        let l1_only = ElasticNet::new(reg.l1, 0.0).unwrap();
        let soft_only: Vec<f64> = u.iter().map(|&z| soft(z, tau * reg.l1)).collect();
        assert_eq!(prox_elastic_net(&u, tau, &l1_only), soft_only);
        let l2_only = ElasticNet::new(0.0, reg.l2).unwrap();
        for (p, &z) in prox_elastic_net(&u, tau, &l2_only).iter().zip(&u) {
            assert_relative_eq!(*p, z / (1.0 + tau * reg.l2), max_relative = 1e-15);
        }
    }
}

#[test]
fn weighted_draw_frequencies_within_three_sigma() {
    let scheme = SamplingScheme::weighted(&[2.0, 1.0, 1.0]).unwrap();
    let draws = 99_999;
    let mut rng = RngStream::new(17);
    let batch = draw_batch(&scheme, &mut rng, 1).unwrap();
    assert_eq!(batch.len(), 1);
    let mut counts = [0usize; 3];
    let mut out = Vec::new();
    for _ in 0..draws / 3 {
        scheme.draw_into(&mut rng, 3, &mut out).unwrap();
        for &i in &out {
            counts[i] += 1;
        }
    }
    for (i, q) in [0.5, 0.25, 0.25].into_iter().enumerate() {
        let sigma = (draws as f64 * q * (1.0 - q)).sqrt();
        let dev = (counts[i] as f64 - draws as f64 * q).abs();
        assert!(dev <= 3.0 * sigma, "index {}: {} draws, expected {}", i, counts[i], draws as f64 * q);
    }
}

#[test]
fn importance_weight_is_mean_over_component_smoothness() {
    let scheme = SamplingScheme::weighted(&[1.0, 3.0]).unwrap();
    assert_relative_eq!(scheme.importance_weight(0), 2.0, max_relative = 1e-15);
    assert_relative_eq!(scheme.importance_weight(1), 2.0 / 3.0, max_relative = 1e-15);
    let flat = SamplingScheme::weighted(&[4.0; 5]).unwrap();
    assert!((0..5).all(|i| (flat.importance_weight(i) - 1.0).abs() < 1e-15));
}

#[test]
fn equal_seeds_give_identical_index_streams() {
    for scheme in [
        SamplingScheme::uniform(97).unwrap(),
        SamplingScheme::weighted(&(1..=97).map(|i| i as f64).collect::<Vec<_>>()).unwrap(),
        SamplingScheme::partition(96, 8).unwrap(),
    ] {
        let b = if matches!(scheme, SamplingScheme::Partition { .. }) { 8 } else { 5 };
        let (mut r1, mut r2) = (RngStream::new(42), RngStream::new(42));
        for _ in 0..1000 {
            assert_eq!(draw_batch(&scheme, &mut r1, b).unwrap(), draw_batch(&scheme, &mut r2, b).unwrap());
        }
    }
}
