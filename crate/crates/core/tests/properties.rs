use proptest::prelude::*;
use semcl::analysis::{brute_force_perfect_descriptors, flat_accounting, qtable_accounting, theorem1_bound};
use semcl::experiment::ExperimentConfig;
use semcl::environment::{reconstruct_event, step_transition, Description};
use semcl::rng::{stream, Stream};
use semcl::scenario::{generate_scenario, lookup_perfect, Scenario, ScenarioConfig};
use semcl::{validate_descriptor_structure, BeliefMask, EventKind};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn small_config() -> impl Strategy<Value = ScenarioConfig> {
    (prop::collection::vec(2usize..=4, 2..=4), 3usize..=12, 1usize..=3, 3usize..=5, 0usize..=2).prop_map(
        |(levels, events, tasks, min_len, extra)| ScenarioConfig {
            levels,
            events,
            tasks,
            min_len,
            max_len: min_len + extra,
            ..Default::default()
        },
    )
}

fn scenario() -> impl Strategy<Value = Scenario> {
    (small_config(), any::<u64>())
        .prop_filter_map("config rejected by the generator", |(c, seed)| generate_scenario(&c, seed).ok())
}

fn nnz(row: &[f64]) -> usize {
    row.iter().filter(|&&p| p > 0.0).count()
}

fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let mut stat = 0.0;
    let mut cells = 0;
    for (&c, &p) in counts.iter().zip(probs) {
        if p > 0.0 {
            let e = p * n as f64;
            stat += (c as f64 - e).powi(2) / e;
            cells += 1;
        } else {
            assert_eq!(c, 0, "sampled a zero-probability cell");
        }
    }
    if cells < 2 {
        return 1.0;
    }
    1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn descriptors_are_structurally_valid(s in scenario()) {
        for e in 0..s.num_events() {
            let ds = lookup_perfect(e, &s).unwrap();
            if s.kind(e) == EventKind::Final {
                continue;
            }
            prop_assert!(!ds.is_empty());
            for d in ds {
                prop_assert!(d.depth() >= 2);
                prop_assert!(validate_descriptor_structure(&d.beliefs, &s.belief_set));
            }
        }
    }

    #[test]
    fn levels_are_disjoint(s in scenario()) {
        let bs = &s.belief_set;
        let mut seen = BeliefMask::default();
        for k in 1..=bs.levels() {
            let m = bs.level_mask(k);
            prop_assert!(seen.intersection(m).is_empty());
            seen = seen.union(m);
        }
        prop_assert_eq!(seen, bs.all());
    }

    #[test]
    fn transition_rows_are_stochastic(s in scenario()) {
        for rows in [&s.transitions.p_good, &s.transitions.p_bad] {
            for row in rows.iter() {
                prop_assert!(row.iter().all(|&p| p >= 0.0));
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn failure_rows_spread_at_least_twice_as_wide(s in scenario()) {
        for (g, b) in s.transitions.p_good.iter().zip(&s.transitions.p_bad) {
            prop_assert!(nnz(b) >= 2 * nnz(g), "{} vs {}", nnz(b), nnz(g));
        }
    }

    #[test]
    fn hazard_strictly_increases_along_chain(s in scenario()) {
        for t in &s.tasks {
            let to_final: Vec<f64> =
                t.tec[..t.tec.len() - 1].iter().map(|&e| s.transitions.p_good[e][t.final_event()]).collect();
            for w in to_final.windows(2) {
                prop_assert!(w[1] > w[0], "task {}: {:?}", t.id, to_final);
            }
        }
    }

    #[test]
    fn some_superset_of_a_perfect_descriptor_fails(s in scenario()) {
        let all = s.belief_set.all();
        let found = (0..s.num_events()).any(|e| {
            s.perfect_masks(e).iter().any(|&d| all.difference(d).iter().any(|b| !s.is_perfect(e, d.with(b))))
        });
        prop_assert!(found);
    }

    #[test]
    fn scenario_text_round_trips(s in scenario()) {
        let back = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn experiment_config_round_trips(seed in any::<u64>(), base in any::<u64>(), replicas in 1usize..8) {
        let mut c = ExperimentConfig::default();
        c.scenario.seed = seed;
        c.base_seed = base;
        c.replicas = replicas;
        prop_assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn bound_scales_with_costs(s in scenario(), c in 0.01f64..100.0) {
        let a = theorem1_bound(&s);
        let b = theorem1_bound(&s.with_scaled_costs(c));
        let close = |x: f64, y: f64| (x * c - y).abs() <= 1e-9 * (1.0 + y.abs());
        prop_assert!(close(a.delta_s, b.delta_s));
        prop_assert!(close(a.delta_l, b.delta_l));
        prop_assert!(close(a.d1, b.d1));
        if a.d2.is_finite() {
            prop_assert!(close(a.d2, b.d2));
        }
        prop_assert!(close(a.r_min, b.r_min));
        prop_assert_eq!(a.satisfiable, b.satisfiable);
    }

    #[test]
    fn oracle_is_idempotent_and_matches_map(s in scenario()) {
        let a = brute_force_perfect_descriptors(&s).unwrap();
        let b = brute_force_perfect_descriptors(&s).unwrap();
        prop_assert_eq!(&a, &b);
        for e in 0..s.num_events() {
            let mut stored: Vec<BeliefMask> = s.perfect_masks(e).to_vec();
            stored.sort();
            let found: Vec<BeliefMask> = a[e].iter().copied().collect();
            prop_assert_eq!(stored, found);
        }
    }

    #[test]
    fn reconstruction_succeeds_iff_perfect(s in scenario(), seed in any::<u64>(), split in 0usize..4) {
        let mut rng = stream(seed, 0, Stream::Environment);
        for e in 0..s.num_events() {
            for &d in s.perfect_masks(e) {
                let ids: Vec<usize> = d.iter().collect();
                let k = split.min(ids.len());
                let desc = Description::new(BeliefMask::from_flat(ids[..k].iter().copied()), BeliefMask::from_flat(ids[k..].iter().copied()));
                prop_assert_eq!(reconstruct_event(e, &desc, &s, &mut rng), e);
                let wrong = Description::new(BeliefMask::from_flat(ids[..1].iter().copied()), BeliefMask::default());
                if !s.is_perfect(e, wrong.completed()) {
                    prop_assert_ne!(reconstruct_event(e, &wrong, &s, &mut rng), e);
                }
            }
        }
    }

    #[test]
    fn accounting_matches_pascal(b in 2usize..40, l in 1usize..6, events in 1usize..200) {
        let mut row = vec![1u128];
        for _ in 0..b {
            let mut next = vec![1u128; row.len() + 1];
            for k in 1..row.len() {
                next[k] = row[k - 1] + row[k];
            }
            row = next;
        }
        let c = row.get(l).copied().unwrap_or(0);
        let (bb, e) = (b as u128, events as u128);
        let want = if l == 1 { e * bb * bb * (bb - 1) } else { e * c * c * bb };
        prop_assert_eq!(qtable_accounting(l, b, events).unwrap(), want);
        prop_assert_eq!(flat_accounting(b, events), e * 2u128.pow(b as u32));
    }
}

#[test]
fn transitions_sample_their_rows() {
    let s = generate_scenario(&ScenarioConfig::default(), 1).unwrap();
    let mut rng = stream(11, 0, Stream::Environment);
    let e = s.tasks[0].tec[1];
    let other = s.tasks[0].tec[0];
    for (reconstructed, row) in [(e, &s.transitions.p_good[e]), (other, &s.transitions.p_bad[e])] {
        let mut counts = vec![0u64; s.num_events()];
        for _ in 0..200_000 {
            counts[step_transition(e, reconstructed, &s, &mut rng)] += 1;
        }
        let p = chi_square_p(&counts, row);
        assert!(p > 1e-4, "p = {p}");
    }
}

#[test]
fn wrong_reconstructions_are_uniform() {
    let s = generate_scenario(&ScenarioConfig::default(), 2).unwrap();
    let mut rng = stream(5, 0, Stream::Environment);
    let e = s.tasks[0].initial();
    let d = Description::default();
    let n = s.num_events();
    let mut counts = vec![0u64; n];
    for _ in 0..240_000 {
        counts[reconstruct_event(e, &d, &s, &mut rng)] += 1;
    }
    let probs: Vec<f64> = (0..n).map(|i| if i == e { 0.0 } else { 1.0 / (n - 1) as f64 }).collect();
    let p = chi_square_p(&counts, &probs);
    assert!(p > 1e-4, "p = {p}");
}
