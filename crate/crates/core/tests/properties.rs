//! Cross-module property suites on randomized models and chains.

mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use attrq::avatar::{avatar_run, rewire, AvatarConfig, RewireOutcome};
use attrq::firefront::{firefront_run, firefront_step, FirefrontConfig, FirefrontState};
use attrq::markov::{
    absorption_probabilities, absorption_probabilities_rational, build_chain,
    power_absorption_estimate, power_absorption_to_tolerance,
};
use attrq::model::{LogicalModel, StateCode};
use attrq::parse::{parse_model, print_document, InitialSpec, ModelDocument, OracleSpec};
use attrq::stg::{attractors, build_stg, tarjan_scc, AttractorKind, DEFAULT_STATE_CAP};
use attrq::SparseDistribution;

use common::{brute_force_attractors, random_absorbing_chain, random_model, MapRows};

fn random_state(model: &LogicalModel, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    (0..model.component_count())
        .map(|i| rng.random_range(0..=model.component(i).max_level))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn successors_move_one_unit_toward_target(seed in any::<u64>(), n in 3usize..9) {
        let model = random_model(n, 2, seed);
        let v = random_state(&model, seed.wrapping_add(1));
        let succs = model.successors(&v);
        for w in &succs {
            let diffs: Vec<usize> = (0..n).filter(|&i| v[i] != w[i]).collect();
            prop_assert_eq!(diffs.len(), 1);
            let i = diffs[0];
            let target = model.eval_target(i, &v);
            prop_assert_eq!(i16::from(w[i]) - i16::from(v[i]),
                            if target > v[i] { 1 } else { -1 });
        }
        // repeated evaluation agrees
        for i in 0..n {
            prop_assert_eq!(model.eval_target(i, &v), model.eval_target(i, &v));
        }
    }

    #[test]
    fn transition_probabilities_sum_to_one(seed in any::<u64>(), n in 3usize..9) {
        let model = random_model(n, 2, seed);
        let v = random_state(&model, seed.wrapping_add(2));
        let succs = model.successors(&v);
        if !succs.is_empty() {
            let total: f64 = succs
                .iter()
                .map(|w| model.transition_probability(&v, w).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inputs_never_move(seed in any::<u64>(), n in 3usize..9) {
        // mark the first component as an input and keep the rest
        let base = random_model(n, 2, seed);
        let mut comps = base.components().to_vec();
        comps[0].is_input = true;
        let model = LogicalModel::new(comps).unwrap();
        for state_seed in 0..8u64 {
            let v = random_state(&model, seed ^ state_seed);
            for w in model.successors(&v) {
                prop_assert_eq!(w[0], v[0]);
            }
        }
    }

    #[test]
    fn encode_decode_bijection(seed in any::<u64>(), n in 3usize..9) {
        let model = random_model(n, 2, seed);
        let v = random_state(&model, seed.wrapping_add(3));
        let code = model.encode(&v);
        prop_assert_eq!(model.decode(code).unwrap(), v);
        let c = seed as u128 % model.state_count();
        prop_assert_eq!(model.encode(&model.decode(StateCode(c)).unwrap()), StateCode(c));
    }

    #[test]
    fn print_parse_round_trip(seed in any::<u64>(), n in 2usize..8) {
        let model = random_model(n, 2.min(n), seed);
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xa5a5);
        // decorate with a random initial spec and an oracle
        let mut initial = InitialSpec::default();
        for i in 0..n {
            match rng.random_range(0..3u8) {
                0 => {
                    initial.fixed.insert(i, rng.random_range(0..2u8));
                }
                1 => {
                    initial.sampled.insert(i);
                }
                _ => {}
            }
        }
        let pattern: Vec<Option<u8>> = (0..n)
            .map(|_| if rng.random::<bool>() { Some(rng.random_range(0..2u8)) } else { None })
            .collect();
        let oracles = if pattern.iter().any(Option::is_some) {
            vec![OracleSpec { id: "known".into(), patterns: vec![pattern] }]
        } else {
            vec![]
        };
        let doc = ModelDocument { model, initial, oracles };
        let printed = print_document(&doc);
        let reparsed = parse_model(&printed).unwrap();
        prop_assert_eq!(&reparsed, &doc, "round trip:\n{}", printed);
        prop_assert_eq!(print_document(&reparsed), printed);
    }
}

#[test]
fn stg_attractors_match_brute_force() {
    for seed in 0..30u64 {
        let n = 4 + (seed as usize % 7); // 4..=10 components
        let model = random_model(n, 2, seed);
        let stg = build_stg(&model, None, DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        let got: Vec<Vec<u128>> = attractors(&stg, &dec)
            .iter()
            .map(|a| a.states.iter().map(|c| c.0).collect())
            .collect();
        let want = brute_force_attractors(&model);
        assert_eq!(got, want, "seed {seed}, n {n}");
    }
    // one larger instance at the stated property bound territory
    let model = random_model(12, 2, 99);
    let stg = build_stg(&model, None, DEFAULT_STATE_CAP).unwrap();
    let dec = tarjan_scc(&stg);
    let got: Vec<Vec<u128>> = attractors(&stg, &dec)
        .iter()
        .map(|a| a.states.iter().map(|c| c.0).collect())
        .collect();
    assert_eq!(got, brute_force_attractors(&model));
}

#[test]
fn every_state_reaches_an_attractor() {
    for seed in 0..20u64 {
        let n = 4 + (seed as usize % 6);
        let model = random_model(n, 2, seed.wrapping_add(1000));
        let stg = build_stg(&model, None, DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        // reverse BFS from all attractor states must cover the state space
        let n_states = stg.state_count();
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n_states];
        for v in 0..n_states {
            for &w in stg.successors(v) {
                preds[w].push(v);
            }
        }
        let mut covered = vec![false; n_states];
        let mut queue: Vec<usize> = (0..n_states)
            .filter(|&v| dec.terminal[dec.component_id[v]])
            .collect();
        for &v in &queue {
            covered[v] = true;
        }
        while let Some(v) = queue.pop() {
            for &p in &preds[v] {
                if !covered[p] {
                    covered[p] = true;
                    queue.push(p);
                }
            }
        }
        assert!(covered.iter().all(|&c| c), "seed {seed}");
    }
}

#[test]
fn direct_solve_and_power_accumulation_agree() {
    for seed in 0..30u64 {
        let n = 4 + (seed as usize % 6); // 4..=9
        let model = random_model(n, 2, seed.wrapping_add(500));
        let v0 = vec![0u8; n];
        let stg = build_stg(&model, Some(&v0), DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        let chain = build_chain(&stg, &dec);
        let mu0 = SparseDistribution::from([(model.encode(&v0), 1.0)]);
        let solved = absorption_probabilities(&chain, &mu0).unwrap();
        let (power, _steps) = power_absorption_to_tolerance(&chain, &mu0, 1e-12).unwrap();
        let total: f64 = solved.probabilities.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "seed {seed}: total {total}");
        for (a, b) in solved.probabilities.iter().zip(&power.probabilities) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn rational_and_float_solvers_agree() {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive};
    for seed in 0..10u64 {
        let n = 4 + (seed as usize % 3); // 4..=6
        let model = random_model(n, 2, seed.wrapping_add(800));
        let stg = build_stg(&model, None, DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        let chain = build_chain(&stg, &dec);
        let mu0 = SparseDistribution::from([(StateCode(0), 1.0)]);
        let solved = absorption_probabilities(&chain, &mu0).unwrap();
        let mu0_q = BTreeMap::from([(StateCode(0), BigRational::from_integer(BigInt::one()))]);
        let exact = absorption_probabilities_rational(&stg, &dec, &mu0_q).unwrap();
        let total: BigRational = exact.iter().fold(BigRational::default(), |a, b| a + b);
        assert!(total.is_integer() && total.to_integer() == BigInt::one());
        for (f, q) in solved.probabilities.iter().zip(&exact) {
            assert!((f - q.to_f64().unwrap()).abs() < 1e-12, "seed {seed}");
        }
    }
}

#[test]
fn power_estimate_grows_monotonically() {
    for seed in [3u64, 17, 54] {
        let model = random_model(6, 2, seed);
        let stg = build_stg(&model, None, DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        let chain = build_chain(&stg, &dec);
        let mu0 = SparseDistribution::from([(StateCode(0), 1.0)]);
        let mut prev = vec![0.0; chain.attractors.len()];
        for k in 0..25 {
            let est = power_absorption_estimate(&chain, &mu0, k).unwrap();
            for (new, old) in est.probabilities.iter().zip(&prev) {
                assert!(new + 1e-15 >= *old, "seed {seed}, k {k}");
            }
            prev = est.probabilities;
        }
    }
}

#[test]
fn firefront_conserves_mass_on_random_models() {
    for seed in 0..20u64 {
        let n = 4 + (seed as usize % 5);
        let model = random_model(n, 2, seed.wrapping_add(300));
        let doc = ModelDocument {
            model: model.clone(),
            initial: InitialSpec::default(),
            oracles: vec![],
        };
        let mut cfg = FirefrontConfig::for_model(&model);
        cfg.max_iterations = 200;
        cfg.trace = true;
        let run = firefront_run(&model, &doc, &cfg).unwrap();
        let mut prev_a = 0.0;
        for row in run.trace.as_ref().unwrap() {
            assert!(
                (row.p_f + row.p_n + row.p_a - 1.0).abs() < 1e-9,
                "seed {seed}, iteration {}",
                row.iteration
            );
            assert!(row.p_a + 1e-15 >= prev_a);
            prev_a = row.p_a;
        }
        // F and N stay disjoint
        let st = &run.final_state;
        assert!(st.f.keys().all(|k| !st.n.contains_key(k)));
    }
}

#[test]
fn firefront_bounds_bracket_exact_probabilities() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let n = 5 + (seed as usize % 4);
        let model = random_model(n, 2, seed.wrapping_add(7000));
        let v0 = vec![0u8; n];
        let stg = build_stg(&model, Some(&v0), DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        let attrs = attractors(&stg, &dec);
        if !attrs.iter().all(|a| a.kind == AttractorKind::Point) {
            continue;
        }
        let chain = build_chain(&stg, &dec);
        let mu0 = SparseDistribution::from([(model.encode(&v0), 1.0)]);
        let exact = absorption_probabilities(&chain, &mu0).unwrap();

        let doc = ModelDocument {
            model: model.clone(),
            initial: InitialSpec::default(),
            oracles: vec![],
        };
        let cfg = FirefrontConfig::for_model(&model);
        let run = firefront_run(&model, &doc, &cfg).unwrap();
        if run.final_state.p_f() > cfg.beta {
            continue; // terminated by the iteration cap, bounds not claimed
        }
        let p_n = run.final_state.p_n();
        for (attr, &p_exact) in chain.attractors.iter().zip(&exact.probabilities) {
            let lower = run
                .final_state
                .a
                .get(&attrq::firefront::AttractorKey::Point(attr.states[0]))
                .copied()
                .unwrap_or(0.0);
            assert!(p_exact + 1e-9 >= lower, "seed {seed}");
            assert!(p_exact <= lower + cfg.beta + p_n + 1e-9, "seed {seed}");
            checked += 1;
        }
    }
    assert!(checked > 10, "corpus too thin: {checked} attractors checked");
}

#[test]
fn rewiring_a_random_transient_cycle_preserves_absorption() {
    for seed in 0..30u64 {
        let instance = random_absorbing_chain(seed);
        let before = instance.to_chain(&instance.rows);
        let mu0 = SparseDistribution::from([(instance.transient[0], 1.0)]);
        let p_before = absorption_probabilities(&before, &mu0).unwrap();

        let outcome = rewire(&MapRows(&instance.rows), &instance.cycle).unwrap();
        let RewireOutcome::Rewired(record) = outcome else {
            panic!("planted cycle always has an exit");
        };
        for row in &record.rows {
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        let mut rewired_rows = instance.rows.clone();
        for (i, &c) in record.cycle.iter().enumerate() {
            rewired_rows.insert(c, record.rows[i].as_ref().clone());
        }
        let after = instance.to_chain(&rewired_rows);
        let p_after = absorption_probabilities(&after, &mu0).unwrap();
        for (a, b) in p_before.probabilities.iter().zip(&p_after.probabilities) {
            assert!((a - b).abs() < 1e-9, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn avatar_attractors_match_the_explicit_decomposition() {
    for seed in 0..12u64 {
        let n = 5 + (seed as usize % 5); // up to 9 components
        let model = random_model(n, 2, seed.wrapping_add(4000));
        let stg = build_stg(&model, None, DEFAULT_STATE_CAP).unwrap();
        let dec = tarjan_scc(&stg);
        let exact_sets: Vec<Vec<StateCode>> = attractors(&stg, &dec)
            .iter()
            .map(|a| a.states.clone())
            .collect();

        let doc = ModelDocument {
            model: model.clone(),
            initial: InitialSpec::default(),
            oracles: vec![],
        };
        let cfg = AvatarConfig {
            runs: 300,
            seed,
            ..AvatarConfig::default()
        };
        let run = avatar_run(&model, &doc, &cfg).unwrap();
        assert_eq!(run.stats.aborted_runs, 0, "seed {seed}");
        for outcome in &run.result.attractors {
            assert!(
                exact_sets.contains(&outcome.members),
                "seed {seed}: avatar reported {:?}",
                outcome.members
            );
        }
        let total: f64 = run.result.attractors.iter().map(|a| a.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn avatar_terminates_with_inflationary_mode_forced_on() {
    for seed in 0..8u64 {
        let model = random_model(8, 2, seed.wrapping_add(6000));
        let doc = ModelDocument {
            model: model.clone(),
            initial: InitialSpec::default(),
            oracles: vec![],
        };
        let cfg = AvatarConfig {
            runs: 100,
            seed,
            inflationary: attrq::avatar::InflationaryMode::On,
            ..AvatarConfig::default()
        };
        let run = avatar_run(&model, &doc, &cfg).unwrap();
        assert_eq!(run.stats.aborted_runs, 0, "seed {seed}");
    }
}

#[test]
fn firefront_step_keyed_oracle_mass_never_reexpands() {
    // once mass lands on an oracle key it can only grow
    let doc = parse_model(
        "NODE a 1\nNODE b 1\nNODE c 1\nTARGET a 1 : c=0\nTARGET b 1 : a=0\nTARGET c 1 : b=0\n\
         ORACLE cyc : a=1 b=0 c=0\nORACLE cyc : a=1 b=0 c=1\nORACLE cyc : a=0 b=0 c=1\n\
         ORACLE cyc : a=0 b=1 c=1\nORACLE cyc : a=0 b=1 c=0\nORACLE cyc : a=1 b=1 c=0",
    )
    .unwrap();
    let mut cfg = FirefrontConfig::for_model(&doc.model);
    cfg.oracles = doc.oracles.clone();
    let mut st = FirefrontState::start(StateCode(0));
    let mut prev = 0.0;
    for _ in 0..6 {
        st = firefront_step(&doc.model, &st, &cfg);
        let mass = st
            .a
            .get(&attrq::firefront::AttractorKey::Oracle("cyc".into()))
            .copied()
            .unwrap_or(0.0);
        assert!(mass + 1e-15 >= prev);
        prev = mass;
        // oracle-covered states never sit in F or N
        for code in st.f.keys().chain(st.n.keys()) {
            let v = doc.model.decode(*code).unwrap();
            assert!(!doc.oracles[0].matches(&v));
        }
    }
}
