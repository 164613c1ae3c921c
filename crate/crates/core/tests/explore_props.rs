mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sandmine::catalog::SensitiveCatalog;
use sandmine::explore::{explore_with, run_exploration, ExploreOptions, Strategy as Exploration, StrategyKind};
use sandmine::synth::{random_app, FuzzConfig};

use common::{exhaustive_sensitive_calls, fixture, fixture_pairs};

fn loop_free() -> FuzzConfig {
    FuzzConfig { loop_free: true, ..FuzzConfig::default() }
}

#[test]
fn random_exploration_of_sms_leak_reaches_everything() {
    let catalog = SensitiveCatalog::default_catalog();
    let app = fixture("sms_leak").benign;
    let trace = run_exploration(&app, &catalog, &Exploration::new(StrategyKind::Random, 7, 50));
    assert_eq!(trace.sensitive_calls, exhaustive_sensitive_calls(&app, &catalog));
}

#[test]
fn fixtures_are_covered_by_every_explorer() {
    let catalog = SensitiveCatalog::default_catalog();
    for pair in fixture_pairs() {
        for app in [&pair.benign, &pair.malign] {
            let oracle = exhaustive_sensitive_calls(app, &catalog);
            for kind in [StrategyKind::Random, StrategyKind::ModelBased, StrategyKind::Humanoid] {
                let trace = run_exploration(app, &catalog, &Exploration::new(kind, 7, 200));
                assert_eq!(trace.sensitive_calls, oracle, "{} {kind}", app.id);
            }
        }
    }
}

#[test]
fn explorers_never_observe_more_than_the_exhaustive_oracle() {
    let catalog = SensitiveCatalog::default_catalog();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (mut checked, mut truncated, mut exact) = (0, 0, 0);
    for i in 0..300 {
        let app = random_app(&mut rng, &catalog, &format!("e{i}"), &loop_free());
        let oracle = exhaustive_sensitive_calls(&app, &catalog);
        let kind = [StrategyKind::Random, StrategyKind::ModelBased, StrategyKind::Humanoid][i % 3];
        let strategy = Exploration::new(kind, rng.random(), rng.random_range(0..100));
        let trace = explore_with(&app, &catalog, &strategy, &ExploreOptions::default());
        // a handler cut by the step limit can leave globals half-written, a
        // state the oracle never produces
        if trace.truncated {
            truncated += 1;
            continue;
        }
        assert!(trace.sensitive_calls.is_subset(&oracle), "{kind} seed {}\n{}", strategy.seed, app.to_ir_string());
        checked += 1;
        exact += usize::from(trace.sensitive_calls == oracle);
    }
    assert!(checked >= 250, "only {checked} untruncated traces ({truncated} truncated)");
    eprintln!("{checked} traces checked, {exact} reached the full oracle set, {truncated} truncated");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn more_budget_never_loses_calls(app_seed in any::<u64>(), seed in any::<u64>(), b in 0u32..60, extra in 0u32..60, k in 0usize..3) {
        let catalog = SensitiveCatalog::default_catalog();
        let mut rng = ChaCha8Rng::seed_from_u64(app_seed);
        let app = random_app(&mut rng, &catalog, "m", &FuzzConfig::default());
        let kind = [StrategyKind::Random, StrategyKind::ModelBased, StrategyKind::Humanoid][k];
        let options = ExploreOptions { step_limit: 2_000, repetition: 1 };
        let short = explore_with(&app, &catalog, &Exploration::new(kind, seed, b), &options);
        let long = explore_with(&app, &catalog, &Exploration::new(kind, seed, b + extra), &options);
        prop_assert!(short.sensitive_calls.is_subset(&long.sensitive_calls));
        prop_assert_eq!(&short.events[..], &long.events[..short.events.len()]);
    }
}
