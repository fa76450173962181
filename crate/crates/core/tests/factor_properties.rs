use fragscope_core::bridge_planner::{apply_bridge, symmetrize_factor, BridgeSpec};
use fragscope_core::factor_model::{
    c_diversity, c_interleave, entropy, joint_mixture, mixture_marginal, mutual_information,
    normalized_mi, prop1_predicted_nmi, prop2_nmi_upper_bound, DiscreteDistribution, Factor,
    MixtureModel, SubDatasetFactors,
};
use proptest::prelude::*;

fn masses(len: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

fn dist(prefix: &str, mass: Vec<f64>) -> DiscreteDistribution {
    let symbols = (0..mass.len()).map(|i| format!("{prefix}{i}")).collect();
    DiscreteDistribution::new(symbols, mass).unwrap()
}

/// Two components with disjoint supports on both factors.
fn disjoint_pair() -> impl Strategy<Value = MixtureModel> {
    (masses(1..=6), masses(1..=6), masses(1..=6), masses(1..=6)).prop_map(|(a, b, c, d)| {
        MixtureModel::new(vec![
            SubDatasetFactors::new(dist("a", a), dist("x", b)),
            SubDatasetFactors::new(dist("b", c), dist("y", d)),
        ])
        .unwrap()
    })
}

/// Components drawing from a shared alphabet, so supports may overlap.
fn shared_alphabet_mixture() -> impl Strategy<Value = MixtureModel> {
    prop::collection::vec((masses(1..=5), masses(1..=5)), 1..=4).prop_map(|parts| {
        MixtureModel::new(
            parts
                .into_iter()
                .map(|(u, v)| SubDatasetFactors::new(dist("s", u), dist("t", v)))
                .collect(),
        )
        .unwrap()
    })
}

fn rename(d: &DiscreteDistribution, tag: &str) -> DiscreteDistribution {
    DiscreteDistribution::new(
        d.support().iter().map(|s| format!("{tag}:{s}")).collect(),
        d.mass().to_vec(),
    )
    .unwrap()
}

fn assert_close(a: f64, b: f64, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!((a - b).abs() <= tol, "{a} vs {b}");
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nmi_is_a_ratio(mix in shared_alphabet_mixture()) {
        let n = normalized_mi(&mix);
        prop_assert!((0.0..=1.0).contains(&n.value));
        prop_assert!(mutual_information(&joint_mixture(&mix)) >= 0.0);
    }

    #[test]
    fn relabeling_symbols_changes_nothing(mix in disjoint_pair()) {
        let renamed = MixtureModel::new(
            mix.components()
                .iter()
                .map(|c| SubDatasetFactors::new(rename(&c.u, "p"), rename(&c.v, "q")))
                .collect(),
        )
        .unwrap();
        assert_close(normalized_mi(&mix).value, normalized_mi(&renamed).value, 1e-15)?;
        assert_close(c_diversity(&mix), c_diversity(&renamed), 1e-15)?;
    }

    #[test]
    fn component_order_changes_nothing(mix in shared_alphabet_mixture()) {
        let mut comps = mix.components().to_vec();
        comps.reverse();
        let rev = MixtureModel::new(comps).unwrap();
        assert_close(normalized_mi(&mix).value, normalized_mi(&rev).value, 1e-12)?;
    }

    #[test]
    fn joint_marginals_match_mixture_marginals(mix in shared_alphabet_mixture()) {
        let joint = joint_mixture(&mix);
        for (which, got) in [(Factor::U, joint.u_marginal()), (Factor::V, joint.v_marginal())] {
            let want = mixture_marginal(&mix, which);
            prop_assert_eq!(got.len(), want.len());
            for (g, w) in got.iter().zip(want.mass()) {
                assert_close(*g, *w, 1e-15)?;
            }
        }
    }

    #[test]
    fn disjoint_nmi_follows_closed_form(mix in disjoint_pair()) {
        let predicted = prop1_predicted_nmi(&mix).unwrap();
        assert_close(normalized_mi(&mix).value, predicted, 1e-10)?;
        assert_close(prop2_nmi_upper_bound(&mix).unwrap(), predicted, 1e-12)?;
        let c_int = c_interleave(&mix).unwrap();
        prop_assert!(c_int == 0.0 && c_int.is_sign_positive());
    }

    #[test]
    fn more_diversity_means_lower_nmi(mix in disjoint_pair(), extra in masses(2..=6)) {
        // Refine one component's u by splitting a point into several symbols:
        // C_diversity rises, so the disjoint-support NMI must fall.
        let mut comps = mix.components().to_vec();
        let refined = DiscreteDistribution::new(
            comps[0].u.support().iter().flat_map(|s| (0..extra.len()).map(move |j| format!("{s}.{j}"))).collect(),
            comps[0].u.mass().iter().flat_map(|p| extra.iter().map(move |q| p * q)).collect(),
        );
        prop_assume!(refined.is_ok());
        comps[0].u = refined.unwrap();
        let finer = MixtureModel::new(comps).unwrap();
        prop_assert!(c_diversity(&finer) > c_diversity(&mix));
        prop_assert!(normalized_mi(&finer).value < normalized_mi(&mix).value);
    }

    #[test]
    fn symmetrizing_either_factor_removes_dependence(mix in shared_alphabet_mixture(), on_u in any::<bool>()) {
        let f = if on_u { Factor::U } else { Factor::V };
        let s = symmetrize_factor(&mix, f);
        prop_assert!(mutual_information(&joint_mixture(&s)) < 1e-12);
        prop_assert_eq!(symmetrize_factor(&s, f), s.clone());
        let other = if on_u { Factor::V } else { Factor::U };
        for (a, b) in s.components().iter().zip(mix.components()) {
            prop_assert_eq!(a.factor(other), b.factor(other));
        }
    }

    #[test]
    fn bridge_keeps_distributions_valid(mix in shared_alphabet_mixture(), eps in 1e-9f64..(1.0 - 1e-9), n in 1usize..4, on_u in any::<bool>()) {
        let f = if on_u { Factor::U } else { Factor::V };
        let symbols: Vec<String> = (0..n).map(|i| format!("bridge{i}")).collect();
        let out = apply_bridge(&mix, &BridgeSpec::new(f, symbols.clone(), eps).unwrap()).unwrap();
        for (before, after) in mix.components().iter().zip(out.components()) {
            let d = after.factor(f);
            prop_assert!(d.mass().iter().all(|&p| p >= 0.0));
            assert_close(d.mass().iter().sum::<f64>(), 1.0, 1e-12)?;
            for s in &symbols {
                assert_close(d.prob(s), eps / n as f64, 1e-15)?;
            }
            for (s, p) in before.factor(f).iter() {
                assert_close(d.prob(s), p * (1.0 - eps), 1e-15)?;
            }
        }
    }

    #[test]
    fn shared_bridge_lowers_nmi_of_disjoint_pairs(mix in disjoint_pair(), eps in 0.01f64..0.99, on_u in any::<bool>()) {
        let f = if on_u { Factor::U } else { Factor::V };
        let out = apply_bridge(&mix, &BridgeSpec::new(f, vec!["shared"], eps).unwrap()).unwrap();
        prop_assert!(normalized_mi(&out).value < normalized_mi(&mix).value);
    }

    #[test]
    fn wide_bridge_never_raises_the_bound(a in masses(1..=5), b in masses(1..=5), c in masses(1..=5), d in masses(1..=5), eps in 0.01f64..0.99, on_u in any::<bool>()) {
        // Components share the alphabet, so supports may already overlap.
        let mix = MixtureModel::new(vec![
            SubDatasetFactors::new(dist("s", a), dist("t", b)),
            SubDatasetFactors::new(dist("s", c), dist("t", d)),
        ]).unwrap();
        let f = if on_u { Factor::U } else { Factor::V };
        // With at least 2^H bridge symbols no component loses entropy.
        let h_max = mix.components().iter().map(|c| entropy(c.factor(f))).fold(0.0, f64::max);
        let n = h_max.exp2().ceil().max(1.0) as usize;
        let symbols: Vec<String> = (0..n).map(|i| format!("bridge{i}")).collect();
        let out = apply_bridge(&mix, &BridgeSpec::new(f, symbols, eps).unwrap()).unwrap();
        prop_assert!(c_interleave(&out).unwrap() >= c_interleave(&mix).unwrap() - 1e-12);
        prop_assert!(c_diversity(&out) >= c_diversity(&mix) - 1e-12);
        prop_assert!(prop2_nmi_upper_bound(&out).unwrap() <= prop2_nmi_upper_bound(&mix).unwrap() + 1e-12);
    }
}
