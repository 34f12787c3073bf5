use std::collections::BTreeMap;
use std::sync::OnceLock;

use msmgn::analysis::{laplacian_from_edges, SpectralBasis};
use msmgn::dataset::{sample_scenarios, ScenarioRanges};
use msmgn::kv;
use msmgn::mesh::{barycentric, generate_mesh, ChannelDomain, Point, TriMesh};
use msmgn::nn::{Checkpoint, Normalizer};
use msmgn::processor::{Schedule, Step};
use msmgn::solver::{mse, Trajectory};
use msmgn::training::TrainConfig;
use ndarray::Array2;
use proptest::prelude::*;

fn mesh() -> &'static TriMesh {
    static MESH: OnceLock<TriMesh> = OnceLock::new();
    MESH.get_or_init(|| generate_mesh(&ChannelDomain::cylinder_channel([0.3, 0.2], 0.06).unwrap(), 0.02).unwrap())
}

/// Alternating H/L groups that start and end with H.
fn groups() -> impl Strategy<Value = Vec<usize>> {
    (0usize..4).prop_flat_map(|pairs| prop::collection::vec(1usize..6, 2 * pairs + 1))
}

fn schedule_text(counts: &[usize], u: usize, d: usize) -> String {
    let body: Vec<String> = counts
        .iter()
        .enumerate()
        .map(|(k, n)| format!("{n}{}", if k % 2 == 0 { 'H' } else { 'L' }))
        .collect();
    format!("p={} (U={u},D={d})", body.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schedule_counts_and_round_trip(counts in groups()) {
        let cycles = counts.len() / 2;
        let s = Schedule::parse(&schedule_text(&counts, cycles, cycles)).unwrap();
        let h: usize = counts.iter().step_by(2).sum();
        let l: usize = counts.iter().skip(1).step_by(2).sum();
        prop_assert_eq!(s.count(Step::H), h);
        prop_assert_eq!(s.count(Step::L), l);
        prop_assert_eq!(s.total_mps(), h + l + 2 * cycles);
        prop_assert_eq!(Schedule::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn schedule_rejects_wrong_transfer_counts(counts in groups(), extra in 1usize..3) {
        let cycles = counts.len() / 2;
        prop_assert!(Schedule::parse(&schedule_text(&counts, cycles + extra, cycles)).is_err());
        prop_assert!(Schedule::parse(&schedule_text(&counts, cycles, cycles + extra)).is_err());
    }

    #[test]
    fn kv_round_trip(map in prop::collection::btree_map("[a-z][a-z0-9_]{0,8}", "[A-Za-z0-9.,=()-]{0,12}", 0..8)) {
        let back = kv::parse(&kv::format(&map), "prop").unwrap();
        let trimmed: BTreeMap<String, String> = map.iter().map(|(k, v)| (k.clone(), v.trim().to_string())).collect();
        prop_assert_eq!(back, trimmed);
    }

    #[test]
    fn normalizer_matches_two_pass_statistics(
        rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 2), 1..60),
        chunk in 1usize..7,
    ) {
        let mut n = Normalizer::new(2, u64::MAX);
        for c in rows.chunks(chunk) {
            let a = Array2::from_shape_fn((c.len(), 2), |(i, j)| c[i][j]);
            n.update(a.view()).unwrap();
        }
        for j in 0..2 {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64;
            prop_assert!((n.mean()[j] - mean).abs() <= 1e-9 * (1.0 + mean.abs()));
            prop_assert!((n.std()[j] - var.sqrt().max(1e-8)).abs() <= 1e-7 * (1.0 + var.sqrt()));
        }
        let x = Array2::from_shape_fn((3, 2), |(i, j)| (i * 2 + j) as f64 - 2.5);
        let back = n.invert(&n.apply(&x));
        prop_assert!(back.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs())));
    }

    #[test]
    fn normalizer_freezes_after_budget(budget in 0u64..5, extra in 1usize..4) {
        let mut n = Normalizer::new(1, budget);
        for k in 0..budget {
            n.update(Array2::from_elem((2, 1), k as f64).view()).unwrap();
        }
        let frozen = n.clone();
        for _ in 0..extra {
            n.update(Array2::from_elem((3, 1), 99.0).view()).unwrap();
        }
        prop_assert_eq!(n, frozen);
    }

    #[test]
    fn mse_is_invariant_under_node_permutation(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..40),
        shuffle in prop::collection::vec(any::<u32>(), 40),
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
        let mut order: Vec<usize> = (0..a.len()).collect();
        order.sort_by_key(|&i| shuffle[i]);
        let pa: Vec<f64> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<f64> = order.iter().map(|&i| b[i]).collect();
        let direct = pairs.iter().map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
        prop_assert!((mse(&a, &b) - direct).abs() <= 1e-12 * (1.0 + direct));
        prop_assert!((mse(&pa, &pb) - mse(&a, &b)).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn trajectory_bytes_round_trip(
        nodes in 1usize..6,
        width in 1usize..3,
        steps in 0usize..4,
        hash in any::<u64>(),
        seed in prop::collection::vec(-1e3f64..1e3, 64),
    ) {
        let frame = |t: usize| (0..nodes * width).map(|i| seed[(t * 7 + i) % seed.len()]).collect::<Vec<_>>();
        let mut traj = Trajectory::new(hash, 0.01, nodes, width, frame(0)).unwrap();
        for t in 1..=steps {
            traj.push(frame(t)).unwrap();
        }
        let bytes = traj.to_bytes();
        prop_assert_eq!(Trajectory::from_bytes(&bytes).unwrap(), traj);
        prop_assert!(Trajectory::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn checkpoint_bytes_round_trip(
        blocks in prop::collection::vec((1usize..4, 1usize..4, -1e6f64..1e6), 0..5),
        meta in prop::collection::btree_map("[a-z]{1,6}", "[a-z0-9]{0,6}", 0..4),
    ) {
        let mut ck = Checkpoint::new();
        for (k, v) in &meta {
            ck.set_meta(k, v);
        }
        for (i, (r, c, v)) in blocks.iter().enumerate() {
            ck.push(format!("b{i}"), Array2::from_shape_fn((*r, *c), |(a, b)| v * (a as f64 + 1.0) - b as f64));
        }
        let bytes = ck.to_bytes();
        prop_assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn barycentric_weights_reproduce_the_point(
        t in prop::array::uniform3((-5.0f64..5.0, -5.0f64..5.0)),
        s in (0.0f64..1.0, 0.0f64..1.0),
    ) {
        let pts: [Point; 3] = t.map(|(x, y)| [x, y]);
        let area = (pts[1][0] - pts[0][0]) * (pts[2][1] - pts[0][1]) - (pts[2][0] - pts[0][0]) * (pts[1][1] - pts[0][1]);
        prop_assume!(area.abs() > 1e-2);
        let (a, b) = if s.0 + s.1 > 1.0 { (1.0 - s.0, 1.0 - s.1) } else { s };
        let p = [
            pts[0][0] + a * (pts[1][0] - pts[0][0]) + b * (pts[2][0] - pts[0][0]),
            pts[0][1] + a * (pts[1][1] - pts[0][1]) + b * (pts[2][1] - pts[0][1]),
        ];
        let w = barycentric(pts, p);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for d in 0..2 {
            let back: f64 = (0..3).map(|k| w[k] * pts[k][d]).sum();
            prop_assert!((back - p[d]).abs() < 1e-9);
        }
    }

    #[test]
    fn interpolation_is_exact_for_linear_fields(
        c in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
        q in prop::collection::vec((0.0f64..1.0, 0.0f64..0.4), 1..30),
    ) {
        let m = mesh();
        let obstacle = ChannelDomain::cylinder_channel([0.3, 0.2], 0.06).unwrap().obstacle.unwrap();
        let queries: Vec<Point> = q.into_iter().map(|(x, y)| [x, y]).filter(|&p| obstacle.distance(p) > 0.01).collect();
        let f = |p: &Point| c.0 + c.1 * p[0] + c.2 * p[1];
        let field: Vec<f64> = m.positions().iter().map(f).collect();
        let got = m.interpolate_field(&field, &queries).unwrap();
        let ones = m.interpolate_field(&vec![1.0; m.num_nodes()], &queries).unwrap();
        for ((p, v), one) in queries.iter().zip(got).zip(ones) {
            prop_assert!((v - f(p)).abs() <= 1e-12 * (1.0 + f(p).abs()));
            prop_assert!((one - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn laplacian_is_psd_with_zero_row_sums(
        n in 2usize..9,
        raw in prop::collection::vec((0usize..9, 0usize..9, 0.1f64..3.0), 1..20),
    ) {
        let edges: Vec<([usize; 2], f64)> = raw.into_iter().filter(|(a, b, _)| a % n != b % n).map(|(a, b, w)| ([a % n, b % n], w)).collect();
        prop_assume!(!edges.is_empty());
        let (e, w): (Vec<[usize; 2]>, Vec<f64>) = edges.into_iter().unzip();
        let l = laplacian_from_edges(n, &e, &w).unwrap();
        for i in 0..n {
            prop_assert!((0..n).map(|j| l[(i, j)]).sum::<f64>().abs() < 1e-12);
        }
        let basis = SpectralBasis::new(&l, 16).unwrap();
        prop_assert!(basis.values.iter().all(|&v| v > -1e-10));
        prop_assert!(basis.values.windows(2).all(|p| p[0] <= p[1]));
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 1.7).sin()).collect();
        let coef = basis.gft(&x).unwrap();
        let e1: f64 = x.iter().map(|v| v * v).sum();
        let e2: f64 = coef.iter().map(|v| v * v).sum();
        prop_assert!((e1 - e2).abs() <= 1e-10 * e1.max(1e-300));
    }

    #[test]
    fn learning_rate_decays_monotonically(lr in 1e-6f64..1e-1, decay in 0.01f64..1.0, steps in 1u64..10_000) {
        let cfg = TrainConfig { lr, lr_decay: decay, steps, ..TrainConfig::default() };
        prop_assert!((cfg.learning_rate(0) - lr).abs() <= 1e-15 * lr);
        prop_assert!((cfg.learning_rate(steps) - lr * decay).abs() <= 1e-12 * lr);
        let mid = cfg.learning_rate(steps / 2);
        prop_assert!(mid <= lr * (1.0 + 1e-12) && mid >= lr * decay * (1.0 - 1e-12));
    }
}

/// Pearson chi-square on 10 log-spaced bins; 16.919 is the 95% quantile
/// of chi-square with 9 degrees of freedom.
#[test]
fn edge_min_draws_are_log_uniform() {
    let r = ScenarioRanges::default().edge_min;
    let draws = sample_scenarios(10_000, 17);
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for s in &draws {
        let u = (s.edge_min.ln() - r.0.ln()) / (r.1.ln() - r.0.ln());
        counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let expected = draws.len() as f64 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 16.919, "chi2 {chi2} counts {counts:?}");
}
