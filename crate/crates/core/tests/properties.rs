use std::io::Cursor;
use std::path::Path;

use proptest::prelude::*;

use dasvrda::dasvrda::{outer_theta, theta, theta_product, InnerStage, ZUpdate};
use dasvrda::data_io::{read_libsvm, write_libsvm, LoadOptions};
use dasvrda::lazy::{compute_k_sets, LazyStage, PrefixTables};
use dasvrda::problem::{prox_elastic_net, soft, Dataset, ElasticNet, LossKind, Problem, Regularizer};
use dasvrda::sampling::{draw_batch, RngStream, SamplingScheme};
use dasvrda::Error;

fn sparse_rows(d: usize) -> impl Strategy<Value = Vec<Vec<(usize, f64)>>> {
    prop::collection::vec(
        prop::collection::btree_map(0..d, -3.0f64..3.0, 1..=d.min(4)).prop_map(|m| m.into_iter().collect()),
        2..12,
    )
}

fn instance(rows: Vec<Vec<(usize, f64)>>, d: usize, labels_seed: u64, l1: f64, l2: f64) -> Problem {
    let labels = (0..rows.len())
        .map(|i| if (labels_seed >> (i % 64)) & 1 == 1 { 1.0 } else { -1.0 })
        .collect();
    let data = Dataset::from_rows(rows, labels, d).unwrap();
    Problem::new(data, LossKind::Logistic, ElasticNet::new(l1, l2).unwrap()).unwrap()
}

proptest! {
    #[test]
    fn prox_is_scaled_soft_threshold(
        u in prop::collection::vec(-10.0f64..10.0, 1..8),
        tau in 1e-3f64..5.0,
        l1 in 0.0f64..2.0,
        l2 in 0.0f64..2.0,
    ) {
        let reg = ElasticNet::new(l1, l2).unwrap();
        let p = prox_elastic_net(&u, tau, &reg);
        for (&pi, &ui) in p.iter().zip(&u) {
            prop_assert!(pi.abs() <= ui.abs());
            prop_assert!(pi == 0.0 || pi.signum() == ui.signum());
            prop_assert_eq!(pi == 0.0, ui.abs() <= tau * l1);
            let want = soft(ui, tau * l1) / (1.0 + tau * l2);
            prop_assert!((pi - want).abs() <= 1e-15 * want.abs().max(1.0));
            // 0 ∈ p − u + τ(λ1 ∂|p| + λ2 p)
            let residual = ui - pi - tau * l2 * pi;
            if pi != 0.0 {
                prop_assert!((residual - tau * l1 * pi.signum()).abs() <= 1e-12 * ui.abs().max(1.0));
            } else {
                prop_assert!(residual.abs() <= tau * l1 * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn inner_schedule_identities(k in 1u64..1_000_000) {
        let sum: f64 = theta_product(k);
        prop_assert_eq!(sum, theta(k as i64) * theta(k as i64 - 1));
        prop_assert_eq!(theta_product(k) - theta_product(k - 1), theta(k as i64 - 1));
    }

    #[test]
    fn outer_schedule_inequality(gamma in 1.0001f64..100.0, s in 1u64..100_000) {
        let t = outer_theta(gamma, s);
        let prev = outer_theta(gamma, s - 1);
        prop_assert!(t * (t - 1.0 + 1.0 / gamma) <= prev * prev * (1.0 + 1e-15));
    }

    #[test]
    fn k_sets_are_disjoint_prefix_or_suffix_intervals(
        c1 in -10.0f64..10.0,
        c2 in 0.0f64..10.0,
        c3 in -100.0f64..100.0,
        z0 in -100.0f64..100.0,
        kj in 0u64..1000,
        len in 0u64..1000,
    ) {
        let k = kj + len;
        let sets = compute_k_sets(c1, c2, c3, z0, kj, k);
        let (lo, hi) = (kj + 2, k);
        for iv in [sets.plus, sets.minus] {
            if !iv.is_empty() {
                prop_assert!(iv.start >= lo && iv.end <= hi);
                prop_assert!(iv.start == lo || iv.end == hi);
            }
        }
        if !sets.plus.is_empty() && !sets.minus.is_empty() {
            prop_assert!(sets.plus.end < sets.minus.start || sets.minus.end < sets.plus.start);
        }
        for kp in lo..=hi.min(lo + 50) {
            let q = (kp * (kp - 1)) as f64;
            prop_assert_eq!(sets.plus.contains(kp), z0 > (c1 + c2) * q + c3);
            prop_assert_eq!(sets.minus.contains(kp), z0 < (c1 - c2) * q + c3);
        }
    }

    #[test]
    fn prefix_tables_sum_their_terms(
        eta in 1e-4f64..1.0,
        l2 in 0.0f64..1.0,
        m in 1usize..300,
        a in 1u64..300,
        span in 0u64..300,
    ) {
        let tables = PrefixTables::new(eta, l2, m);
        prop_assert_eq!(tables.len(), m);
        let start = a.min(m as u64);
        let end = (start + span).min(m as u64);
        let (w, wp) = tables.interval_sums(dasvrda::lazy::Interval::new(start, end));
        let (mut ew, mut ewp) = (0.0, 0.0);
        for t in start..=end {
            let pair = (t * (t + 1)) as f64 / 4.0;
            let shrink = 1.0 + eta * pair * l2;
            ew += t as f64 / 2.0 / shrink;
            ewp += t as f64 / 2.0 * pair / shrink;
        }
        prop_assert!((w - ew).abs() <= 1e-10 * ew.abs().max(1.0));
        prop_assert!((wp - ewp).abs() <= 1e-10 * ewp.abs().max(1.0));
    }

    #[test]
    fn lazy_trajectory_matches_dense(
        rows in sparse_rows(12),
        labels_seed in any::<u64>(),
        l1 in 0.0f64..0.05,
        l2 in 0.0f64..0.05,
        seed in any::<u64>(),
        m in 1usize..60,
    ) {
        let n = rows.len();
        let p = instance(rows, 12, labels_seed, l1, l2);
        let scheme = SamplingScheme::weighted(p.smoothness()).unwrap();
        let b = 1 + (seed as usize) % n.min(3);
        let start: Vec<f64> = (0..12).map(|j| ((j as f64) * 0.37).sin()).collect();
        let anchor: Vec<f64> = (0..12).map(|j| ((j as f64) * 0.71).cos() * 0.5).collect();
        let eta = 0.1 / p.max_smoothness();
        let mut dense = InnerStage::new(&p, &scheme, &start, &anchor, eta, b, ZUpdate::DualAveraging).unwrap();
        let mut lazy = LazyStage::new(&p, &scheme, &start, &anchor, eta, m, b).unwrap();
        let (mut r1, mut r2) = (RngStream::new(seed), RngStream::new(seed));
        let mut active_total = 0u64;
        for _ in 0..m {
            dense.step(&mut r1).unwrap();
            lazy.step(&mut r2).unwrap();
            let batch_nnz: usize = lazy.batch().iter().map(|&i| p.data.row(i).iter().count()).sum();
            prop_assert!(lazy.active().len() <= batch_nnz);
            active_total += lazy.active().len() as u64;
            let (x, z) = lazy.materialize();
            for j in 0..12 {
                let tol = 1e-9 * dense.x()[j].abs().max(1.0);
                prop_assert!((x[j] - dense.x()[j]).abs() <= tol);
                prop_assert!((z[j] - dense.z()[j]).abs() <= 1e-9 * dense.z()[j].abs().max(1.0));
            }
        }
        let (_, _, stats) = lazy.finish();
        prop_assert!(stats.touched <= active_total);
        prop_assert!(stats.swept <= 12);
    }

    #[test]
    fn sampling_probabilities_form_a_distribution(
        smooth in prop::collection::vec(0.01f64..100.0, 1..50),
        b_pick in any::<usize>(),
    ) {
        let n = smooth.len();
        let weighted = SamplingScheme::weighted(&smooth).unwrap();
        let total: f64 = (0..n).map(|i| weighted.probability(i)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        for i in 0..n {
            let unbiased = n as f64 * weighted.probability(i) * weighted.importance_weight(i);
            prop_assert!((unbiased - 1.0).abs() <= 1e-12);
        }
        let uniform = SamplingScheme::uniform(n).unwrap();
        prop_assert!(((0..n).map(|i| uniform.probability(i)).sum::<f64>() - 1.0).abs() <= 1e-12);

        let divisors: Vec<usize> = (1..=n).filter(|b| n % b == 0).collect();
        let b = divisors[b_pick % divisors.len()];
        let part = SamplingScheme::partition(n, b).unwrap();
        if let SamplingScheme::Partition { blocks, .. } = &part {
            prop_assert_eq!(blocks.len(), b);
            let mut next = 0;
            for r in blocks {
                prop_assert_eq!(r.start, next);
                prop_assert!(!r.is_empty());
                let mass: f64 = r.clone().map(|i| part.probability(i)).sum();
                prop_assert!((mass - 1.0).abs() <= 1e-12);
                next = r.end;
            }
            prop_assert_eq!(next, n);
            let drawn = draw_batch(&part, &mut RngStream::new(b_pick as u64), b).unwrap();
            for (i, r) in drawn.iter().zip(blocks) {
                prop_assert!(r.contains(i));
            }
        } else {
            prop_assert!(false, "partition scheme has the wrong variant");
        }
    }

    #[test]
    fn libsvm_round_trip(
        rows in sparse_rows(30),
        labels in prop::collection::vec(-5.0f64..5.0, 12),
    ) {
        let labels = labels[..rows.len()].to_vec();
        let data = Dataset::from_rows(rows, labels, 30).unwrap();
        let mut buf = Vec::new();
        write_libsvm(&data, &mut buf).unwrap();
        let opts = LoadOptions { dim: Some(30), binary_labels: false, normalize: false };
        let back = read_libsvm(Cursor::new(buf), Path::new("mem"), opts).unwrap();
        prop_assert_eq!(back, data);
    }
}

/// Plain squared norm: convex and proximable, but not an elastic net.
struct Ridge(f64);

impl Regularizer for Ridge {
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.0 * x.iter().map(|v| v * v).sum::<f64>()
    }

    fn prox_in_place(&self, z: &mut [f64], scale: f64) {
        z.iter_mut().for_each(|v| *v /= 1.0 + scale * self.0);
    }
}

#[test]
fn lazy_engine_rejects_other_regularizers() {
    let data = Dataset::from_rows(vec![vec![(0, 1.0)], vec![(1, 2.0)]], vec![1.0, -1.0], 2).unwrap();
    let p = Problem::with_regularizer(data, LossKind::Logistic, Ridge(0.1)).unwrap();
    let scheme = SamplingScheme::uniform(2).unwrap();
    let result = LazyStage::new(&p, &scheme, &[0.0; 2], &[0.0; 2], 0.1, 5, 1);
    match result {
        Err(e @ Error::LazyUnsupported) => assert_eq!(e.to_string(), "lazy path requires linear loss + elastic net"),
        Err(e) => panic!("unexpected error {}", e),
        Ok(_) => panic!("lazy stage accepted a non elastic-net regularizer"),
    }
}
