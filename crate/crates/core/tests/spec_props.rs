mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use splmut::bundle::{parse_bundle, write_bundle, Bundle};
use splmut::feature_model::enumerate_configurations;
use splmut::mapping::{canonical_machine, canonicalize, validate_mappings};
use splmut::mutation_ops::{generate, Operator};
use splmut::{fixtures, materialize, Configuration, SplSpecification};

/// Transition ids a product must contain, computed per transition from the
/// raw mapping list.
fn oracle_kept(spec: &SplSpecification, cfg: &Configuration) -> Vec<Vec<String>> {
    spec.machine
        .regions
        .iter()
        .map(|r| {
            r.transitions
                .iter()
                .filter(|t| {
                    spec.mappings
                        .iter()
                        .filter(|m| m.elements.contains(&t.id))
                        .all(|m| cfg.valuation[&m.feature] == m.feature_value)
                })
                .map(|t| t.id.clone())
                .collect()
        })
        .collect()
}

fn check_materialize(spec: &SplSpecification, max_configs: usize) -> Result<(), TestCaseError> {
    let configs = enumerate_configurations(&spec.feature_model, 1 << 17).unwrap();
    let stride = configs.len().div_ceil(max_configs).max(1);
    let mapped: BTreeSet<&str> = spec.mappings.iter().flat_map(|m| m.elements.iter().map(String::as_str)).collect();
    for cfg in configs.iter().step_by(stride) {
        let p = materialize(spec, cfg).unwrap();
        let got: Vec<Vec<String>> =
            p.machine.regions.iter().map(|r| r.transitions.iter().map(|t| t.id.clone()).collect()).collect();
        prop_assert_eq!(&got, &oracle_kept(spec, cfg), "{}", cfg.label());
        prop_assert_eq!(&p.machine.variables, &spec.machine.variables);
        for (pr, sr) in p.machine.regions.iter().zip(&spec.machine.regions) {
            prop_assert_eq!(&pr.states, &sr.states);
        }
        for (_, t) in spec.machine.transitions() {
            if !mapped.contains(t.id.as_str()) {
                prop_assert!(p.machine.transition(&t.id).is_some());
            }
        }
    }
    Ok(())
}

fn count(op: Operator, spec: &SplSpecification) -> usize {
    generate(op, spec).map(|v| v.len()).unwrap_or(0)
}

fn check_counts(spec: &SplSpecification) -> Result<(), TestCaseError> {
    let ts: Vec<_> = spec.machine.mutable_transitions().map(|(_, t)| t).collect();
    prop_assert_eq!(count(Operator::Dmp, spec), spec.mappings.len());
    prop_assert_eq!(count(Operator::Dme, spec), spec.mappings.iter().map(|m| m.elements.len()).sum::<usize>());
    prop_assert_eq!(count(Operator::Dti, spec), ts.iter().map(|t| t.triggers.len()).sum::<usize>());
    prop_assert_eq!(count(Operator::Def, spec), ts.iter().filter(|t| !t.effect.is_empty()).count());
    prop_assert_eq!(count(Operator::Dgd, spec), ts.iter().filter(|t| t.guard.is_some()).count());
    prop_assert!(count(Operator::Ctt, spec) <= ts.len());
    Ok(())
}

fn bundle_of(spec: SplSpecification) -> Bundle {
    Bundle {
        name: "random".into(),
        description: String::new(),
        spec,
        metadata: Default::default(),
        testgen: Default::default(),
        tests: vec![],
    }
}

#[test]
fn fixture_products_match_inclusion_oracle() {
    for b in fixtures::all() {
        check_materialize(&b.spec, usize::MAX).unwrap();
    }
}

#[test]
fn fixture_counts_match_metadata() {
    for b in fixtures::all() {
        let spec = &b.spec;
        let meta = &b.metadata.counts;
        for op in Operator::ALL {
            assert_eq!(count(op, spec), meta[op.code()], "{} {}", b.name, op.code());
        }
        let ts: Vec<_> = spec.machine.mutable_transitions().map(|(_, t)| t).collect();
        assert_eq!(spec.mappings.len(), meta["mappings"]);
        assert_eq!(spec.mappings.iter().map(|m| m.elements.len()).sum::<usize>(), meta["mapped_elements"]);
        assert_eq!(ts.len(), meta["transitions"]);
        assert_eq!(ts.iter().map(|t| t.triggers.len()).sum::<usize>(), meta["triggers"]);
        assert_eq!(ts.iter().filter(|t| !t.effect.is_empty()).count(), meta["effects"]);
        assert_eq!(ts.iter().filter(|t| t.guard.is_some()).count(), meta["guards"]);
        check_counts(spec).unwrap();
    }
}

#[test]
fn fixtures_round_trip() {
    for b in fixtures::all() {
        let text = write_bundle(&b);
        let back = parse_bundle(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(write_bundle(&back), text);
    }
}

#[test]
fn fixtures_are_clean() {
    for b in fixtures::all() {
        assert!(splmut::mapping::validate_spec(&b.spec).is_empty(), "{}", b.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn products_match_inclusion_oracle(spec in support::arb_spec(16, 12)) {
        check_materialize(&spec, 256)?;
    }

    #[test]
    fn count_identities(spec in support::arb_spec(8, 12)) {
        check_counts(&spec)?;
    }

    #[test]
    fn bundles_round_trip(spec in support::arb_spec(16, 12)) {
        let b = bundle_of(spec);
        let back = parse_bundle(&write_bundle(&b)).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back, b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn canonical_form_ignores_list_order(spec in support::arb_spec(6, 12)) {
        let mut shuffled = spec.clone();
        shuffled.mappings.reverse();
        for m in &mut shuffled.mappings {
            m.elements.reverse();
        }
        for r in &mut shuffled.machine.regions {
            r.transitions.reverse();
            r.states.reverse();
        }
        shuffled.machine.variables.reverse();
        for cfg in enumerate_configurations(&spec.feature_model, 64).unwrap_or_default() {
            prop_assert_eq!(
                canonicalize(&materialize(&spec, &cfg).unwrap()),
                canonicalize(&materialize(&shuffled, &cfg).unwrap())
            );
        }
    }

    #[test]
    fn generation_is_pure_and_deterministic(spec in support::arb_spec(6, 10)) {
        let before = canonical_machine(&spec.machine);
        let mappings = spec.mappings.clone();
        for op in Operator::ALL {
            let a = generate(op, &spec);
            let b = generate(op, &spec);
            prop_assert_eq!(&a, &b);
            for m in a.unwrap_or_default() {
                prop_assert!(m.spec != spec, "{} changes nothing", m.id);
                prop_assert!(
                    validate_mappings(&m.spec).iter().all(|d| d.kind != splmut::DiagKind::Reference),
                    "{} leaves a dangling reference", m.id
                );
                prop_assert_eq!(&m.spec.feature_model, &spec.feature_model);
            }
        }
        prop_assert_eq!(canonical_machine(&spec.machine), before);
        prop_assert_eq!(&spec.mappings, &mappings);
    }
}
