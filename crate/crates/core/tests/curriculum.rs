use semcl::acceptance::toy_config;
use semcl::analysis::qtable_accounting;
use semcl::baseline::{run_flat_rl, FlatConfig};
use semcl::curriculum::{run_curriculum, CurriculumConfig};
use semcl::scenario::generate_scenario;

const SEEDS: [u64; 4] = [3, 4, 5, 6];

#[test]
fn outputs_are_sound_and_build_on_prior_steps() {
    for seed in SEEDS {
        let s = generate_scenario(&toy_config(seed), seed).unwrap();
        let out = run_curriculum(&s, &CurriculumConfig::default(), seed, 0).unwrap();
        let st = &out.state;
        for (e, ds) in st.event_out.iter().enumerate() {
            for d in ds {
                assert!(s.is_perfect(e, *d), "seed {seed}: event {e} got a non-perfect descriptor");
            }
        }
        for (i, tuples) in st.hierarchy_out.iter().enumerate() {
            let l = i + 1;
            for t in tuples {
                assert_eq!(t.len() as usize, l + 1, "seed {seed} step {l}");
                if l >= 2 {
                    let parents = &st.hierarchy_out[l - 2];
                    assert!(
                        parents.iter().any(|p| p.is_subset(*t) && t.difference(*p).len() == 1),
                        "seed {seed} step {l}: tuple does not extend a step-{} tuple",
                        l - 1
                    );
                }
            }
        }
        for r in &st.step_logs {
            let bound = qtable_accounting(r.step, s.belief_set.total_count(), s.num_events()).unwrap();
            assert!((r.speaker_keys as u128) * (r.listener_keys as u128) <= bound, "seed {seed} step {}", r.step);
        }
    }
}

#[test]
fn reruns_are_identical() {
    let s = generate_scenario(&toy_config(7), 7).unwrap();
    let cfg = CurriculumConfig::default();
    let a = run_curriculum(&s, &cfg, 9, 1).unwrap();
    let b = run_curriculum(&s, &cfg, 9, 1).unwrap();
    assert_eq!(a.state.event_out, b.state.event_out);
    let (mut ca, mut cb) = (Vec::new(), Vec::new());
    a.log.write_episodes_csv(&mut ca).unwrap();
    b.log.write_episodes_csv(&mut cb).unwrap();
    assert_eq!(ca, cb);
}

#[test]
fn flat_and_curriculum_logs_share_a_header() {
    let s = generate_scenario(&toy_config(2), 2).unwrap();
    let cl = run_curriculum(&s, &CurriculumConfig::default(), 1, 0).unwrap();
    let mut fc = FlatConfig::default();
    fc.learn.episodes_per_step = 200;
    let flat = run_flat_rl(&s, &fc, 1, 0).unwrap();
    let header = |log: &semcl::environment::EpisodeLog| {
        let mut buf = Vec::new();
        log.write_episodes_csv(&mut buf).unwrap();
        String::from_utf8(buf).unwrap().lines().next().unwrap().to_string()
    };
    assert_eq!(header(&cl.log), header(&flat.log));
}
