use dasvrda::dasvrda::{InnerStage, ZUpdate};
use dasvrda::lazy::{compute_k_sets, lazy_one_stage_accsvrda, lazy_z, LazyContext, CoordState, LazyStage};
use dasvrda::dasvrda::{eta_default, gamma_star, one_stage_accsvrda};
use dasvrda::problem::{Dataset, ElasticNet, LossKind, Problem};
use dasvrda::sampling::{RngStream, SamplingScheme};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sparse_instance(seed: u64, n: usize, d: usize, density: f64, l1: f64, l2: f64) -> Problem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        for j in 0..d {
            if rng.random::<f64>() < density {
                row.push((j, rng.random_range(-2.0..2.0)));
            }
        }
        if row.is_empty() {
            row.push((rng.random_range(0..d), 1.0));
        }
        rows.push(row);
        labels.push(if rng.random::<bool>() { 1.0 } else { -1.0 });
    }
    let data = Dataset::from_rows(rows, labels, d).unwrap();
    Problem::new(data, LossKind::Logistic, ElasticNet::new(l1, l2).unwrap()).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

fn random_point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

#[test]
fn lazy_trajectory_matches_dense_every_iteration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..12u64 {
        let n = rng.random_range(16..=100);
        let d = rng.random_range(20..=200);
        let density = rng.random_range(0.005..0.05);
        let l1 = rng.random_range(0.0..1e-2);
        let l2 = rng.random_range(0.0..1e-2);
        let p = sparse_instance(case, n, d, density, l1, l2);
        let scheme = SamplingScheme::weighted(p.smoothness()).unwrap();
        let start = random_point(&mut rng, d, 0.5);
        let anchor = random_point(&mut rng, d, 0.5);
        for &b in &[1usize, 4, 16] {
            let m = 300;
            let gamma = gamma_star(m, b);
            let eta = eta_default(gamma, m, b, p.mean_smoothness());
            let mut dense = InnerStage::new(&p, &scheme, &start, &anchor, eta, b, ZUpdate::DualAveraging).unwrap();
            let mut lazy = LazyStage::new(&p, &scheme, &start, &anchor, eta, m, b).unwrap();
            let mut r1 = RngStream::new(case * 7 + b as u64);
            let mut r2 = RngStream::new(case * 7 + b as u64);
            for k in 1..=m {
                dense.step(&mut r1).unwrap();
                lazy.step(&mut r2).unwrap();
                assert_eq!(dense.batch(), lazy.batch());
                if k % 37 == 0 || k == m {
                    let (x, z) = lazy.materialize();
                    for j in 0..d {
                        assert!(close(x[j], dense.x()[j], 1e-9), "case {case} b {b} k {k} x[{j}]: {} vs {}", x[j], dense.x()[j]);
                        assert!(close(z[j], dense.z()[j], 1e-9), "case {case} b {b} k {k} z[{j}]");
                    }
                }
            }
            assert!(lazy.stats().max_active <= b * p.data.max_row_nnz());
        }
    }
}

#[test]
fn lazy_stage_output_matches_dense_routine() {
    let p = sparse_instance(3, 60, 150, 0.02, 1e-3, 1e-4);
    let scheme = SamplingScheme::uniform(60).unwrap();
    let start = vec![0.1; 150];
    let anchor = vec![-0.05; 150];
    let eta = eta_default(3.2, 200, 4, p.max_smoothness());
    let a = one_stage_accsvrda(&p, &start, &anchor, eta, 200, 4, &scheme, &mut RngStream::new(5)).unwrap();
    let b = lazy_one_stage_accsvrda(&p, &start, &anchor, eta, 200, 4, &scheme, &mut RngStream::new(5)).unwrap();
    for j in 0..150 {
        assert!(close(a.0[j], b.0[j], 1e-9));
        assert!(close(a.1[j], b.1[j], 1e-9));
    }
}

#[test]
fn closed_form_matches_constant_gradient_replay() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let eta = rng.random_range(1e-3..0.5);
        let reg = ElasticNet::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)).unwrap();
        let ctx = LazyContext::new(eta, reg, 200);
        let last = rng.random_range(0..100u64);
        let t = rng.random_range(last..=200);
        let z0 = rng.random_range(-3.0..3.0);
        let gt = rng.random_range(-2.0..2.0);
        let st = CoordState {
            last,
            x: rng.random_range(-1.0..1.0),
            z: rng.random_range(-1.0..1.0),
            gsum: rng.random_range(-5.0..5.0),
        };
        let mut rep = st;
        for s in last + 1..=t {
            let th_prev = (s as f64) / 2.0;
            let pair = (s * (s + 1)) as f64 / 4.0;
            rep.gsum += th_prev * gt;
            rep.z = reg.prox_scalar(z0 - eta * rep.gsum, eta * pair);
            let w = 2.0 / (s as f64 + 1.0);
            rep.x = (1.0 - w) * rep.x + w * rep.z;
        }
        let got = ctx.advance(st, z0, gt, t);
        assert!(close(got.x, rep.x, 1e-9), "{} vs {}", got.x, rep.x);
        assert!(close(got.z, rep.z, 1e-12));
        assert!(close(got.gsum, rep.gsum, 1e-12));
        if t > last {
            let pair = (t * (t + 1)) as f64 / 4.0;
            let pl = (last * (last + 1)) as f64 / 4.0;
            assert!(close(lazy_z(z0, st.gsum, gt, eta, reg.l1, reg.l2, pair, pl), rep.z, 1e-12));
        }
    }
}

#[test]
fn k_sets_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let c1 = rng.random_range(-1.0..1.0) * 10f64.powi(rng.random_range(-4..2));
        let c2 = rng.random_range(0.0..1.0) * 10f64.powi(rng.random_range(-4..2));
        let c3 = rng.random_range(-50.0..50.0);
        let z0 = rng.random_range(-50.0..50.0);
        let kj = rng.random_range(0..300u64);
        let k = kj + rng.random_range(0..400u64);
        let sets = compute_k_sets(c1, c2, c3, z0, kj, k);
        for kp in kj + 2..=k {
            let h = (kp * (kp - 1)) as f64;
            let plus = z0 > (c1 + c2) * h + c3;
            let minus = z0 < (c1 - c2) * h + c3;
            assert_eq!(sets.plus.contains(kp), plus, "plus at {kp}");
            assert_eq!(sets.minus.contains(kp), minus, "minus at {kp}");
        }
        assert!(sets.plus.is_empty() || sets.plus.start >= kj + 2);
        assert!(sets.plus.is_empty() || sets.plus.end <= k);
    }
}
