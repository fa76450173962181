use fragscope_core::embedding_metrics::{
    disparity, diversity, normalize_rows, temperature_sweep, Aggregation, EmbeddingSet,
    EstimatorConfig, Partition, DEFAULT_TEMPERATURES,
};
use proptest::prelude::*;

/// Random unit-norm rows.
fn embeddings(max_rows: usize, dim: usize) -> impl Strategy<Value = EmbeddingSet> {
    (2..=max_rows).prop_flat_map(move |rows| {
        prop::collection::vec(-1.0f64..1.0, rows * dim).prop_filter_map("zero row", move |data| {
            normalize_rows(&EmbeddingSet::new(rows, dim, data).unwrap()).ok()
        })
    })
}

fn labelled(max_rows: usize, dim: usize) -> impl Strategy<Value = (EmbeddingSet, Partition)> {
    embeddings(max_rows, dim).prop_flat_map(|e| {
        let rows = e.rows();
        // first two rows seed two groups so both are non-empty
        prop::collection::vec(0usize..2, rows - 2).prop_map(move |rest| {
            let labels: Vec<String> = [0, 1]
                .into_iter()
                .chain(rest)
                .map(|g| format!("g{g}"))
                .collect();
            (e.clone(), Partition::new(labels).unwrap())
        })
    })
}

/// Householder reflection `x - 2 (x.n) n / |n|^2` applied to every row.
fn reflect(e: &EmbeddingSet, normal: &[f64]) -> EmbeddingSet {
    let nn: f64 = normal.iter().map(|x| x * x).sum();
    let rows: Vec<Vec<f64>> = e
        .iter_rows()
        .map(|r| {
            let dot: f64 = r.iter().zip(normal).map(|(a, b)| a * b).sum();
            r.iter()
                .zip(normal)
                .map(|(a, b)| a - 2.0 * dot * b / nn)
                .collect()
        })
        .collect();
    EmbeddingSet::from_rows(&rows).unwrap()
}

fn permuted(e: &EmbeddingSet, p: &Partition, perm: &[usize]) -> (EmbeddingSet, Partition) {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&i| e.row(i).to_vec()).collect();
    let labels: Vec<String> = perm.iter().map(|&i| p.labels()[i].clone()).collect();
    (
        EmbeddingSet::from_rows(&rows).unwrap(),
        Partition::new(labels).unwrap(),
    )
}

fn all_rows(e: &EmbeddingSet) -> Vec<usize> {
    (0..e.rows()).collect()
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diversity_is_at_least_one_and_grows_with_temperature(e in embeddings(24, 4)) {
        let cfg = EstimatorConfig::exact();
        let mut prev = 1.0;
        for t in DEFAULT_TEMPERATURES {
            let d = diversity(&e, &all_rows(&e), t, &cfg).unwrap();
            prop_assert!(d >= prev * (1.0 - 1e-12), "t={t}: {d} < {prev}");
            prev = d;
        }
    }

    #[test]
    fn subsampled_diversity_grows_with_temperature(e in embeddings(30, 3), seed in any::<u64>()) {
        let p = Partition::single(e.rows(), "all").unwrap();
        let r = temperature_sweep(&e, &p, &DEFAULT_TEMPERATURES, &EstimatorConfig::subsample(50, seed), Aggregation::Arithmetic).unwrap();
        for w in r.diversity[0].windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-12));
        }
    }

    #[test]
    fn scores_ignore_orthogonal_transforms(
        (e, p) in labelled(20, 4),
        normal in prop::collection::vec(-1.0f64..1.0, 4),
        t in 0.5f64..10.0,
    ) {
        prop_assume!(normal.iter().map(|x| x * x).sum::<f64>() > 1e-3);
        let r = reflect(&e, &normal);
        let cfg = EstimatorConfig::exact();
        for (_, g) in p.groups().filter(|(_, g)| g.len() > 1) {
            let a = diversity(&e, g, t, &cfg);
            let b = diversity(&r, g, t, &cfg);
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert!(rel_close(a, b, 1e-9), "{a} vs {b}");
        }
        let a = disparity(&e, &p, t, &cfg).unwrap();
        let b = disparity(&r, &p, t, &cfg).unwrap();
        prop_assert!(rel_close(a, b, 1e-9), "{a} vs {b}");
    }

    #[test]
    fn row_order_is_irrelevant_bit_for_bit(
        (e, p) in labelled(40, 3),
        key in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let mut perm: Vec<usize> = all_rows(&e);
        perm.sort_by_key(|&i| (i as u64).wrapping_mul(key | 1).rotate_left(17));
        let (e2, p2) = permuted(&e, &p, &perm);
        for cfg in [EstimatorConfig::exact(), EstimatorConfig::subsample(64, seed)] {
            let a = temperature_sweep(&e, &p, &[1.0, 20.0], &cfg, Aggregation::Geometric);
            let b = temperature_sweep(&e2, &p2, &[1.0, 20.0], &cfg, Aggregation::Geometric);
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert_eq!(format!("{:?}", a.diversity), format!("{:?}", b.diversity));
            prop_assert_eq!(format!("{:?}", a.disparity), format!("{:?}", b.disparity));
        }
    }

    #[test]
    fn thread_count_is_irrelevant_bit_for_bit((e, p) in labelled(120, 5), seed in any::<u64>()) {
        let run = |threads: usize, cfg: EstimatorConfig| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| temperature_sweep(&e, &p, &DEFAULT_TEMPERATURES, &cfg, Aggregation::Arithmetic))
        };
        for cfg in [EstimatorConfig::exact(), EstimatorConfig::subsample(5000, seed)] {
            let a = format!("{:?}", run(1, cfg));
            let b = format!("{:?}", run(4, cfg));
            let c = format!("{:?}", run(7, cfg));
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(&a, &c);
        }
    }
}

#[test]
fn identical_points_have_unit_scores() {
    let e = EmbeddingSet::from_rows(&vec![vec![0.6, 0.8]; 5]).unwrap();
    for t in DEFAULT_TEMPERATURES {
        assert_eq!(
            diversity(&e, &all_rows(&e), t, &EstimatorConfig::exact()).unwrap(),
            1.0
        );
    }
}
