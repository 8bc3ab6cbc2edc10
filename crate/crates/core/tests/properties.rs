mod common;

use common::{mi_oracle, mrmr_oracle, random_concept_table};
use mcbm::data::{
    generate_synthetic, read_csv, write_csv_to, LoadOptions, SplitFractions, SplitIndices, SyntheticSpec,
};
use mcbm::info::{entropy, mrmr_rank, mrmr_rank_columns, mutual_information, validate_permutation, MrmrOptions};
use mcbm::intervene::{intervene_prefix, intervention_traces, HeadPolicy};
use mcbm::model::{init_model, mask_for_level, Heads, MatryoshkaModel, ModelMode, NestingSchedule};
use mcbm::rng::{permutation, seeded};
use mcbm::theory::{
    bayes_error_bits_bound, channel_bound_reports, estimate_epsilon, expected_cost_bound, regime_classify,
    total_variation, ConceptChannelModel, Regime, RegimeParams,
};
use proptest::prelude::*;
use rand::Rng as _;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn symbols(max_len: usize, alphabet: u8) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1..max_len).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..alphabet, n),
            prop::collection::vec(0..alphabet, n),
        )
    })
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn mi_is_symmetric_nonnegative_and_bounded((x, y) in symbols(120, 5)) {
        let xy = mutual_information(&x, &y).unwrap().value;
        let yx = mutual_information(&y, &x).unwrap().value;
        prop_assert!((xy - yx).abs() < 1e-12);
        prop_assert!(xy >= 0.0);
        prop_assert!(xy <= entropy(&x).min(entropy(&y)) + 1e-12);
        prop_assert!((xy - mi_oracle(&x, &y)).abs() < 1e-12);
    }

    #[test]
    fn coarsening_cannot_add_information((x, y) in symbols(120, 6), cut in 1u8..6) {
        let coarse: Vec<u8> = x.iter().map(|&v| u8::from(v >= cut)).collect();
        let fine = mutual_information(&x, &y).unwrap().value;
        let lumped = mutual_information(&coarse, &y).unwrap().value;
        prop_assert!(lumped <= fine + 1e-9);
    }
}

proptest! {
    #![proptest_config(config(100))]

    #[test]
    fn mrmr_matches_enumeration_and_is_a_permutation(seed in any::<u64>(), k in 1usize..=8, n in 1usize..=120, c in 2usize..=4) {
        let mut rng = seeded(seed, 600);
        let (columns, labels) = random_concept_table(&mut rng, k, n, c);
        let ranking = mrmr_rank_columns(&columns, &labels, &MrmrOptions::default()).unwrap();
        validate_permutation(ranking.order(), k).unwrap();
        let want = mrmr_oracle(&columns, &labels);
        prop_assert_eq!(ranking.order(), want.as_slice());
        prop_assert_eq!(ranking.steps()[0].redundancy, 0.0);
    }

    #[test]
    fn split_is_a_deterministic_partition(seed in any::<u64>(), n in 3usize..300, c in 2usize..5, a in 0.1f64..0.8, b in 0.05f64..0.15) {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + seed as usize) % c).collect();
        let fractions = SplitFractions::new(a, b, 1.0 - a - b).unwrap();
        let s1 = SplitIndices::compute(&labels, fractions, seed).unwrap();
        let s2 = SplitIndices::compute(&labels, fractions, seed).unwrap();
        prop_assert_eq!(&s1, &s2);
        let mut all: Vec<usize> = s1.train.iter().chain(&s1.val).chain(&s1.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn csv_round_trip_is_identity(seed in any::<u64>(), n in 1usize..60) {
        let data = generate_synthetic(&SyntheticSpec { samples: n, seed, ..Default::default() }).unwrap().dataset;
        let mut bytes = Vec::new();
        write_csv_to(&data, &mut bytes).unwrap();
        let back = read_csv(bytes.as_slice(), &LoadOptions { class_count: Some(data.class_count()) }).unwrap();
        prop_assert_eq!(&back, &data);
        let mut again = Vec::new();
        write_csv_to(&back, &mut again).unwrap();
        prop_assert_eq!(bytes, again);
    }

    #[test]
    fn intervention_is_idempotent_and_commutes_with_permutation(seed in any::<u64>(), len in 1usize..20) {
        let mut rng = seeded(seed, 601);
        let probs: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let truth: Vec<u8> = (0..len).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let k = rng.random_range(0..=len);
        let once = intervene_prefix(&probs, &truth, k).unwrap();
        prop_assert_eq!(&intervene_prefix(&once, &truth, k).unwrap(), &once);
        prop_assert_eq!(&intervene_prefix(&probs, &truth, 0).unwrap(), &probs);
        let full = intervene_prefix(&probs, &truth, len).unwrap();
        prop_assert!(full.iter().zip(&truth).all(|(p, t)| *p == f64::from(*t)));

        // intervening on a set of positions does not depend on how the
        // vector is laid out
        let perm = permutation(&mut rng, len);
        let p_perm: Vec<f64> = perm.iter().map(|&j| probs[j]).collect();
        let t_perm: Vec<u8> = perm.iter().map(|&j| truth[j]).collect();
        let out_perm = intervene_prefix(&p_perm, &t_perm, k).unwrap();
        let mut back = vec![0.0; len];
        for (pos, &j) in perm.iter().enumerate() {
            back[j] = out_perm[pos];
        }
        let mut direct = probs.clone();
        for &j in &perm[..k] {
            direct[j] = f64::from(truth[j]);
        }
        prop_assert_eq!(back, direct);
    }

    #[test]
    fn efficient_masking_equals_truncation_and_suffix_is_inert(seed in any::<u64>(), k in 1usize..12, c in 2usize..6) {
        let model = init_model(3, k, c, NestingSchedule::new(vec![k], k).unwrap(), ModelMode::Efficient, (0..k).collect(), seed).unwrap();
        let Heads::Efficient(head) = &model.heads else { unreachable!() };
        let mut rng = seeded(seed, 602);
        let probs: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let d = rng.random_range(1..=k);
        let masked = head.masked_scores(&probs, &mask_for_level(d, k).unwrap());
        let truncated = head.truncated_scores(&probs, d);
        prop_assert!(masked.iter().zip(&truncated).all(|(a, b)| a.to_bits() == b.to_bits()));
        let mut perturbed = probs.clone();
        for p in &mut perturbed[d..] {
            *p = rng.random();
        }
        let a = model.predict_at(&probs, d).unwrap();
        let b = model.predict_at(&perturbed, d).unwrap();
        prop_assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(a.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn saved_model_forwards_bit_identically(seed in any::<u64>(), efficient in any::<bool>()) {
        let mode = if efficient { ModelMode::Efficient } else { ModelMode::Standard };
        let mut model = init_model(4, 5, 3, NestingSchedule::new(vec![2, 5], 5).unwrap(), mode, vec![4, 2, 0, 1, 3], seed).unwrap();
        let mut rng = seeded(seed, 603);
        let p: Vec<f64> = model.params().iter().map(|v| v * rng.random_range(-5.0..5.0) + rng.random_range(-1.0..1.0) / 3.0).collect();
        model.set_params(&p).unwrap();
        let back = MatryoshkaModel::from_json(&model.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a = model.forward(&x).unwrap();
        let b = back.forward(&x).unwrap();
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn mi_grows_with_each_intervened_concept(seed in any::<u64>(), k in 1usize..=8, c in 2usize..=4) {
        let model = ConceptChannelModel::random(k, c, 0.45, &mut seeded(seed, 604)).unwrap();
        let h = model.label_entropy();
        let mut prev = model.exact_mutual_info_intervened(0).unwrap();
        for kk in 1..=k {
            let next = model.exact_mutual_info_intervened(kk).unwrap();
            prop_assert!(next >= prev - 1e-12);
            prop_assert!(next <= h + 1e-9);
            prev = next;
        }
        for r in channel_bound_reports(&model, &(0..=k).collect::<Vec<_>>()).unwrap() {
            prop_assert!(r.bound_value >= 0.0 && r.epsilon >= 0.0);
            prop_assert!(r.mutual_info <= r.label_entropy + 1e-9);
        }
    }

    #[test]
    fn bayes_error_within_bits_entropy_bound(seed in any::<u64>(), k in 1usize..=6, c in 2usize..=4) {
        let model = ConceptChannelModel::random(k, c, 0.45, &mut seeded(seed, 607)).unwrap();
        for r in channel_bound_reports(&model, &(0..=k).collect::<Vec<_>>()).unwrap() {
            prop_assert!(r.empirical_error <= bayes_error_bits_bound(r.conditional_entropy()) + 1e-12, "k {}", r.k);
        }
    }

    #[test]
    fn pinsker_holds_for_estimated_shift(seed in any::<u64>(), len in 1usize..12) {
        let mut rng = seeded(seed, 605);
        let mut draw = |zero: f64| -> Vec<f64> {
            let mut v: Vec<f64> = (0..len).map(|_| if rng.random_bool(zero) { 0.0 } else { rng.random() }).collect();
            if v.iter().all(|&x| x == 0.0) {
                v[0] = 1.0;
            }
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect()
        };
        let p = draw(0.2);
        let q = draw(0.2);
        let eps = estimate_epsilon(&p, &q).unwrap();
        prop_assert!(total_variation(&p, &q) <= (eps.epsilon / 2.0).sqrt() + 1e-6);
    }

    #[test]
    fn cost_bound_matches_series_closed_form(r in 1.01f64..4.0, gamma in 0.01f64..0.99, base in 1.0f64..8.0, levels in 1usize..15, norm in 0.1f64..2.0) {
        let params = RegimeParams { growth_rate: r, decay_rate: gamma, base_size: base, levels, norm_const: norm };
        let bound = expected_cost_bound(&params).unwrap();
        let rho = r * gamma;
        let closed = norm * base * (rho.powi(levels as i32) - 1.0) / (rho - 1.0);
        let direct: f64 = norm * base * (0..levels).map(|i| rho.powi(i as i32)).sum::<f64>();
        if (rho - 1.0).abs() > 1e-6 {
            prop_assert!((bound - closed).abs() <= 1e-12 * closed.abs().max(1.0) * levels as f64);
        }
        prop_assert!((bound - direct).abs() <= 1e-9 * direct);
        let class = regime_classify(r, gamma).unwrap();
        prop_assert_eq!(class.alpha.is_some_and(|a| a > 0.0), gamma > 1.0 / r && class.regime == Regime::HeavyTailed);
    }

    #[test]
    fn cost_bound_is_continuous_across_the_balanced_boundary(r in 1.1f64..4.0, levels in 1usize..15) {
        let at = |gamma: f64| {
            expected_cost_bound(&RegimeParams { growth_rate: r, decay_rate: gamma, base_size: 2.0, levels, norm_const: 1.0 }).unwrap()
        };
        let edge = 1.0 / r;
        let balanced = at(edge);
        prop_assert_eq!(balanced, 2.0 * levels as f64);
        for delta in [1e-4, 1e-6, 1e-8] {
            let below = at(edge - delta);
            let above = at(edge + delta);
            let slack = delta * 2.0 * (levels * levels) as f64 * r;
            prop_assert!((below - balanced).abs() <= slack && (above - balanced).abs() <= slack, "{} {} {}", below, balanced, above);
        }
    }
}

#[test]
fn minimal_level_agrees_with_per_level_predictions() {
    let data = generate_synthetic(&SyntheticSpec {
        samples: 400,
        noise: 0.1,
        feature_noise: 1.0,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let ds = &data.dataset;
    let order = mrmr_rank(ds, &MrmrOptions::default()).unwrap().into_order();
    let levels = vec![2, 6, 14];
    for mode in [ModelMode::Standard, ModelMode::Efficient] {
        let model = init_model(
            ds.n_features(),
            14,
            4,
            NestingSchedule::new(levels.clone(), 14).unwrap(),
            mode,
            order.clone(),
            1,
        )
        .unwrap();
        let (model, _) = mcbm::model::train(
            &model,
            ds,
            ds,
            &mcbm::model::LossConfig {
                epochs: 3,
                ..Default::default()
            },
        )
        .unwrap();
        for policy in [HeadPolicy::Matched, HeadPolicy::FullHead] {
            for t in intervention_traces(&model, ds, &order, &levels, policy).unwrap() {
                assert_eq!(t.per_k_predictions.len(), levels.len() + 1);
                let correct: Vec<bool> = t.per_k_predictions[1..].iter().map(|&(_, p)| p == t.label).collect();
                match t.minimal_sufficient_level {
                    Some(l) => {
                        assert!(correct[l - 1]);
                        assert!(correct[..l - 1].iter().all(|c| !c));
                    }
                    None => assert!(correct.iter().all(|c| !c)),
                }
            }
        }
    }
}

/// Step-score sum of a concept sequence under the greedy objective.
fn sequence_score(seq: &[usize], rel: &[f64], mi: &[Vec<f64>]) -> f64 {
    seq.iter()
        .enumerate()
        .map(|(t, &j)| {
            let red = if t == 0 {
                0.0
            } else {
                seq[..t].iter().map(|&s| mi[j][s]).sum::<f64>() / t as f64
            };
            rel[j] - red
        })
        .sum()
}

/// Greedy ordering of a subset under the same criterion.
fn greedy_within(subset: &[usize], rel: &[f64], mi: &[Vec<f64>]) -> Vec<usize> {
    let mut seq: Vec<usize> = Vec::with_capacity(subset.len());
    let mut left = subset.to_vec();
    while !left.is_empty() {
        let t = seq.len();
        let score = |j: usize| {
            rel[j]
                - if t == 0 {
                    0.0
                } else {
                    seq.iter().map(|&g| mi[j][g]).sum::<f64>() / t as f64
                }
        };
        let mut pick = 0;
        for i in 1..left.len() {
            if score(left[i]) > score(left[pick]) + 1e-12 {
                pick = i;
            }
        }
        seq.push(left.remove(pick));
    }
    seq
}

#[test]
fn mrmr_prefix_beats_random_subsets_on_redundant_data() {
    let data = generate_synthetic(&SyntheticSpec {
        samples: 2000,
        redundancy_copies: 2,
        seed: 21,
        ..Default::default()
    })
    .unwrap();
    let ds = &data.dataset;
    let k = ds.n_concepts();
    let columns = ds.concept_columns();
    let rel: Vec<f64> = columns.iter().map(|c| mi_oracle(c, ds.labels())).collect();
    let mi: Vec<Vec<f64>> = columns
        .iter()
        .map(|a| columns.iter().map(|b| mi_oracle(a, b)).collect())
        .collect();
    let order = mrmr_rank(ds, &MrmrOptions::default()).unwrap().into_order();
    let mut rng = seeded(21, 606);
    for prefix in [2, 6, 14, 28] {
        let best = sequence_score(&order[..prefix], &rel, &mi);
        for _ in 0..1000 {
            let subset = greedy_within(&permutation(&mut rng, k)[..prefix], &rel, &mi);
            let score = sequence_score(&subset, &rel, &mi);
            assert!(best >= score - 1e-9, "prefix {prefix}: mrmr {best} < random {score}");
        }
    }
}
