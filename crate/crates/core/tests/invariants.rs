use egocorr::affinity::{clustering_metrics, r_precision, retrieve, AffinityMatrix};
use egocorr::candidates::{read_store, write_store, Candidate, CandidateFeatures, CandidateStore, Trajectory};
use egocorr::mapping::{build_map, pixel_auc};
use egocorr::motion::{median_filter_pattern, Homography};
use egocorr::pruning::{euclid_lower_bound_check, selection_count, sketch_candidates, sketch_global, upper_bound};
use egocorr::targetness::{standardize, zncc, NormalizedPatternPair};
use proptest::prelude::*;

fn series(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn standardized_series_have_zero_mean_unit_variance(x in series(2..300)) {
        let (z, degenerate) = standardize(&x);
        prop_assume!(!degenerate);
        let n = z.len() as f64;
        let mean = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn correlation_is_bounded_and_self_correlation_is_one(
        (u, v, gu, gv) in (16usize..200).prop_flat_map(|l| (series(l..l + 1), series(l..l + 1), series(l..l + 1), series(l..l + 1)))
    ) {
        let c = zncc(&NormalizedPatternPair::from_raw([&u, &v], [&gu, &gv]).unwrap());
        prop_assert!((-1.0..=1.0).contains(&c));
        let neg_v: Vec<f64> = v.iter().map(|x| -x).collect();
        let pair = NormalizedPatternPair::from_raw([&u, &v], [&u, &neg_v]).unwrap();
        prop_assume!(!pair.local_degenerate.iter().any(|&d| d));
        prop_assert!((zncc(&pair) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sketch_bound_dominates_trimmed_correlation(
        (u, v, gu, gv) in (64usize..300).prop_flat_map(|l| (series(l..l + 1), series(l..l + 1), series(l..l + 1), series(l..l + 1))),
        k in prop::sample::select(vec![1usize, 2, 4, 8, 16, 32, 64]),
    ) {
        let t = u.len() / k * k;
        let neg_v: Vec<f64> = v.iter().map(|x| -x).collect();
        let ub = upper_bound(&sketch_global(&u, &neg_v, k).unwrap(), &sketch_global(&gu, &gv, k).unwrap()).unwrap();
        let c = zncc(&NormalizedPatternPair::from_raw([&u[..t], &v[..t]], [&gu[..t], &gv[..t]]).unwrap());
        prop_assert!(ub >= c - 1e-9, "UB {} < C {}", ub, c);
    }

    #[test]
    fn piece_means_lower_bound_distance(
        (a, b) in (8usize..300).prop_flat_map(|l| (series(l..l + 1), series(l..l + 1))),
        k in 1usize..8,
    ) {
        let (lhs, rhs) = euclid_lower_bound_check(&a, &b, k).unwrap();
        prop_assert!(lhs >= rhs - 1e-9);
    }

    #[test]
    fn selection_count_is_ceiling_share(n in 0usize..100_000, p in 0.5f64..=100.0) {
        let m = selection_count(n, p);
        prop_assert!(m <= n);
        prop_assert!(m as f64 >= p / 100.0 * n as f64 - 1e-6);
        prop_assert!((m as f64) < p / 100.0 * n as f64 + 1.0);
    }

    #[test]
    fn median_filter_stays_within_range(
        x in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..80),
        half in 0usize..5,
    ) {
        let out = median_filter_pattern(&x, 2 * half + 1).unwrap();
        prop_assert_eq!(out.len(), x.len());
        for axis in 0..2 {
            let lo = x.iter().map(|p| p[axis]).fold(f64::INFINITY, f64::min);
            let hi = x.iter().map(|p| p[axis]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out.iter().all(|p| p[axis] >= lo && p[axis] <= hi));
        }
        if half == 0 {
            prop_assert_eq!(out, x);
        }
    }

    #[test]
    fn auc_complements_under_negation(
        data in prop::collection::vec((0u8..20, any::<bool>()), 2..400),
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
        let a = pixel_auc(&scores, &labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let b = pixel_auc(&neg, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn map_values_come_from_live_candidates(
        points in prop::collection::vec((0.0f32..40.0, 0.0f32..30.0, 0.0f64..1.0), 1..20),
        radius in 0.5f64..8.0,
    ) {
        let trajectories: Vec<Trajectory> = points
            .iter()
            .map(|&(x, y, _)| Trajectory { begin: 0, points: vec![[x, y]], local_motion: vec![[0.0, 0.0]] })
            .collect();
        let refs: Vec<&Trajectory> = trajectories.iter().collect();
        let scores: Vec<f64> = points.iter().map(|p| p.2).collect();
        let map = build_map(0, &refs, &scores, 40, 30, radius);
        prop_assert!(map.data.iter().all(|v| *v == 0.0 || scores.contains(v)));
        // the pixel under each point is covered by some candidate
        for &(x, y, _) in &points {
            let (px, py) = (x.round() as usize, y.round() as usize);
            if px < 40 && py < 30 && ((px as f32 - x).hypot(py as f32 - y) as f64) <= radius {
                let v = map.at(px, py);
                prop_assert!(scores.contains(&v));
            }
        }
        // nothing is drawn at a frame where no candidate is alive
        prop_assert!(build_map(1, &refs, &scores, 40, 30, radius).data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn symmetric_affinity_is_symmetric_and_round_trips(
        values in prop::collection::vec(0.0f64..1.0, 16),
    ) {
        let directed: Vec<Vec<f64>> = values.chunks(4).map(|r| r.to_vec()).collect();
        let ids: Vec<String> = (0..4).map(|i| format!("v{i}")).collect();
        let m = AffinityMatrix::from_directed(ids, &directed, true).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                prop_assert_eq!(m.values[i][j], m.values[j][i]);
            }
        }
        let back = AffinityMatrix::from_csv(&m.to_csv(), true).unwrap();
        prop_assert_eq!(&back, &m);
        let ranked = retrieve(0, &m);
        prop_assert_eq!(ranked.len(), 3);
        prop_assert!(!ranked.contains(&0));
        prop_assert!((r_precision(&ranked, &[1, 2, 3]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_partitions_score_one(labels in prop::collection::vec(0usize..4, 2..30)) {
        // relabeling clusters does not change the pairwise metrics
        let permuted: Vec<usize> = labels.iter().map(|l| (l + 1) % 4).collect();
        let m = clustering_metrics(&permuted, &labels).unwrap();
        prop_assert_eq!(m.f_measure, 1.0);
    }

    #[test]
    fn homography_inverse_round_trips(
        a in -0.3f64..0.3, b in -0.3f64..0.3, tx in -20.0f64..20.0, ty in -20.0f64..20.0,
        x in 0.0f64..320.0, y in 0.0f64..180.0,
    ) {
        let h = Homography::from_rows([[1.0 + a, b, tx], [-b, 1.0 - a, ty], [1e-4 * a, -1e-4 * b, 1.0]]).unwrap();
        let inv = h.inverse().unwrap();
        let p = h.apply(x, y);
        let q = inv.apply(p[0], p[1]);
        prop_assert!((q[0] - x).abs() < 1e-6 && (q[1] - y).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn candidate_store_round_trips(
        tracks in prop::collection::vec((0usize..50, 1usize..80, any::<u32>()), 0..12),
        with_sketch in any::<bool>(),
    ) {
        let candidates: Vec<Candidate> = tracks
            .iter()
            .map(|&(begin, len, seed)| {
                let f = |i: usize, j: u32| ((seed.wrapping_mul(2654435761).wrapping_add(j) as usize + i * 7) % 1000) as f32 / 10.0;
                Candidate {
                    trajectory: Trajectory {
                        begin,
                        points: (0..len).map(|i| [f(i, 1), f(i, 2)]).collect(),
                        local_motion: (0..len).map(|i| [f(i, 3) - 50.0, f(i, 4) - 50.0]).collect(),
                    },
                    features: CandidateFeatures::from_array(std::array::from_fn(|i| f(i, 5) as f64)),
                }
            })
            .collect();
        let sketches = with_sketch.then(|| (8, sketch_candidates(&candidates, 8)));
        let store = CandidateStore { candidates, sketches };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.egtr");
        write_store(&path, &store).unwrap();
        let back = read_store(&path).unwrap();
        prop_assert_eq!(back.candidates, store.candidates);
        prop_assert_eq!(back.sketches.is_some(), with_sketch);
        if let (Some((k, a)), Some((k2, b))) = (&back.sketches, &store.sketches) {
            prop_assert_eq!(k, k2);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                prop_assert_eq!(x.is_some(), y.is_some());
                if let (Some(x), Some(y)) = (x, y) {
                    prop_assert_eq!(x.trimmed_length, y.trimmed_length);
                    for (p, q) in x.pieces_u.iter().zip(&y.pieces_u) {
                        prop_assert!((p - q).abs() < 1e-5);
                    }
                }
            }
        }
    }
}
