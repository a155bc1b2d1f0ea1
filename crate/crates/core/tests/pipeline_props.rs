mod support;

use std::collections::BTreeMap;

use proptest::prelude::*;
use splmut::bundle::Bundle;
use splmut::feature_model::complete_partial;
use splmut::interp::DEFAULT_STEP_BUDGET;
use splmut::mapping::materialize_unchecked;
use splmut::mutation_ops::generate;
use splmut::pipeline::{self, select_products, MutantStatus, ProductStatus, RunConfig, Selection};
use splmut::statechart::StateKind;
use splmut::testing::{all_transitions_coverage, execute, generate_plc, Alphabet, PlcResult};
use splmut::{fixtures, report, FixtureReport, Interpreter, Operator, Stimulus, TestCase};

fn suite(b: &Bundle) -> PlcResult {
    let alphabet = Alphabet::for_spec(&b.spec, &b.testgen.payloads);
    generate_plc(&b.spec, &alphabet, b.testgen.depth.unwrap_or(40), DEFAULT_STEP_BUDGET)
}

fn run(b: &Bundle, tests: &[TestCase], workers: usize) -> FixtureReport {
    let rc = RunConfig { workers, ..Default::default() };
    pipeline::run(&b.name, &b.spec, tests, &rc).unwrap()
}

#[test]
fn generated_suites_cover_everything_and_pass() {
    for b in fixtures::all() {
        let res = suite(&b);
        assert!(res.uncovered.is_empty(), "{}: {:?}", b.name, res.uncovered);
        assert!(!res.tests.is_empty());
        assert_eq!(all_transitions_coverage(&res.tests, &b.spec, DEFAULT_STEP_BUDGET), 1.0, "{}", b.name);
        for t in &res.tests {
            let cfg = complete_partial(&b.spec.feature_model, &t.required, &t.forbidden).unwrap();
            let product = materialize_unchecked(&b.spec, &cfg);
            assert!(execute(t, &product, DEFAULT_STEP_BUDGET).is_pass(), "{} {}", b.name, t.id);
        }
    }
}

#[test]
fn coverage_grows_with_the_suite() {
    for b in fixtures::all() {
        let tests = suite(&b).tests;
        let mut last = 0.0;
        for n in 0..=tests.len() {
            let c = all_transitions_coverage(&tests[..n], &b.spec, DEFAULT_STEP_BUDGET);
            assert!(c >= last, "{} prefix {n}", b.name);
            last = c;
        }
        let mut rev = tests.clone();
        rev.reverse();
        let mut last = 0.0;
        for n in 0..=rev.len() {
            let c = all_transitions_coverage(&rev[..n], &b.spec, DEFAULT_STEP_BUDGET);
            assert!(c >= last);
            last = c;
        }
    }
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    for b in fixtures::all() {
        let tests = suite(&b).tests;
        let one = run(&b, &tests, 1);
        let json = report::render_json(&splmut::ScoreReport { fixtures: vec![one.clone()] });
        for w in [2, 8] {
            let other = run(&b, &tests, w);
            assert_eq!(other, one, "{} with {w} workers", b.name);
            assert_eq!(report::render_json(&splmut::ScoreReport { fixtures: vec![other] }), json);
        }
    }
}

#[test]
fn rows_are_conserved_and_kills_are_traceable() {
    for b in fixtures::all() {
        let tests = suite(&b).tests;
        let rep = run(&b, &tests, 4);
        assert!(rep.broken_tests.is_empty() && rep.unsatisfiable_tests.is_empty(), "{}", b.name);
        for (op, row) in &rep.operators {
            assert_eq!(row.generated, row.participating + row.equivalent + row.invalid, "{} {}", b.name, op.code());
        }

        let selection = select_products(&tests, &b.spec.feature_model, Selection::FirstFit);
        let mutants: BTreeMap<String, _> = Operator::ALL
            .iter()
            .flat_map(|op| generate(*op, &b.spec).unwrap_or_default())
            .map(|m| (m.id.clone(), m))
            .collect();
        let by_id: BTreeMap<&str, &TestCase> = tests.iter().map(|t| (t.id.as_str(), t)).collect();
        for link in &rep.trace {
            if link.status == MutantStatus::Killed {
                assert!(!link.killing_tests.is_empty(), "{}", link.mutant);
            }
            let m = &mutants[&link.mutant];
            for (p, pm) in link.products.iter().enumerate() {
                let cfg = &selection.products[p];
                let orig = materialize_unchecked(&b.spec, cfg);
                let mutant = materialize_unchecked(&m.spec, cfg);
                match &pm.status {
                    ProductStatus::Killed { by } => {
                        for t in by {
                            assert!(execute(by_id[t.as_str()], &mutant, DEFAULT_STEP_BUDGET).is_fail(), "{} {t}", pm.id);
                        }
                    }
                    ProductStatus::Equivalent => {
                        for t in selection.tests_of(p) {
                            assert_eq!(
                                execute(&tests[t], &mutant, DEFAULT_STEP_BUDGET),
                                execute(&tests[t], &orig, DEFAULT_STEP_BUDGET),
                                "{}",
                                pm.id
                            );
                        }
                    }
                    _ => {}
                }
            }
        }
    }
}

#[test]
fn filtered_dmp_products_keep_the_deleted_feature_value() {
    for b in fixtures::all() {
        let tests = suite(&b).tests;
        let rep = run(&b, &tests, 2);
        let selection = select_products(&tests, &b.spec.feature_model, Selection::FirstFit);
        let dmp = generate(Operator::Dmp, &b.spec).unwrap();
        for (link, m) in rep.trace.iter().filter(|l| l.operator == Operator::Dmp).zip(&dmp) {
            assert_eq!(link.mutant, m.id);
            let deleted = b.spec.mappings.iter().find(|x| m.locus.contains(&x.id)).unwrap();
            for (p, cfg) in selection.products.iter().enumerate() {
                if cfg.is_selected(&deleted.feature) == deleted.feature_value {
                    assert_eq!(link.products[p].status, ProductStatus::Equivalent, "{}", link.products[p].id);
                }
            }
        }
    }
}

#[test]
fn guard_deletion_on_a_triggerless_self_loop_livelocks() {
    let b = fixtures::ticketmach();
    let tests = suite(&b).tests;
    let rc = RunConfig { operators: vec![Operator::Dgd], ..Default::default() };
    let rep = pipeline::run(&b.name, &b.spec, &tests, &rc).unwrap();
    let self_loops: Vec<&str> = b
        .spec
        .machine
        .mutable_transitions()
        .filter(|(_, t)| t.triggers.is_empty() && t.guard.is_some() && t.source == t.target)
        .map(|(_, t)| t.id.as_str())
        .collect();
    assert!(self_loops.contains(&"stack"));
    let stack = rep.trace.iter().find(|l| l.description.ends_with("transition stack")).expect("stack guard mutant");
    assert!(stack
        .products
        .iter()
        .any(|p| matches!(&p.status, ProductStatus::Invalid { reason } if reason.contains("livelock"))));
}

#[test]
fn duplicated_transition_is_non_deterministic() {
    let b = fixtures::eshop();
    let mut spec = b.spec.clone();
    let region = spec.machine.regions.iter_mut().find(|r| r.id == "Shop").unwrap();
    let mut twin = region.transitions.iter().find(|t| t.id == "add_item").unwrap().clone();
    twin.id = "add_item_twin".into();
    twin.target = "Browsing".into();
    region.transitions.push(twin);
    let tests = suite(&b).tests;
    let cfg = complete_partial(&spec.feature_model, &Default::default(), &Default::default()).unwrap();
    let product = materialize_unchecked(&spec, &cfg);
    let verdicts: Vec<_> = tests.iter().map(|t| execute(t, &product, DEFAULT_STEP_BUDGET)).collect();
    assert!(verdicts.iter().any(|v| matches!(v,
        splmut::Verdict::Invalid { fault: splmut::RuntimeFault::NonDeterminism { .. } })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn runs_never_enter_pseudo_states_and_replay_identically(
        spec in support::arb_spec(4, 10),
        stimuli in proptest::collection::vec((0usize..3, 0i64..4), 0..12),
    ) {
        let interp = Interpreter::new(&spec.machine);
        let seq: Vec<Stimulus> = stimuli.iter().map(|(s, v)| Stimulus::with_payload(["A", "B", "C"][*s], *v)).collect();
        let play = || -> Vec<Result<(Vec<splmut::Emission>, Vec<String>), String>> {
            let mut out = Vec::new();
            let Ok(init) = interp.initialize(50) else { return out };
            let mut rt = init.state;
            for st in &seq {
                match interp.step(&rt, st) {
                    Ok(o) => {
                        for (r, s) in &o.state.active {
                            let region = spec.machine.regions.iter().find(|x| &x.id == r).unwrap();
                            assert_eq!(region.state_kind(s), Some(StateKind::Simple));
                        }
                        out.push(Ok((o.emissions, o.fired)));
                        rt = o.state;
                    }
                    Err(e) => {
                        out.push(Err(e.to_string()));
                        break;
                    }
                }
            }
            out
        };
        prop_assert_eq!(play(), play());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_tests_pass_on_their_products(spec in support::arb_spec(6, 10)) {
        let res = generate_plc(&spec, &Alphabet::for_spec(&spec, &BTreeMap::new()), 5, 60);
        for t in &res.tests {
            let cfg = complete_partial(&spec.feature_model, &t.required, &t.forbidden);
            prop_assert!(cfg.is_ok(), "{} unsatisfiable", t.id);
            let product = materialize_unchecked(&spec, &cfg.unwrap());
            let v = execute(t, &product, 60);
            prop_assert!(v.is_pass(), "{}: {:?}", t.id, v);
        }
        let cov = all_transitions_coverage(&res.tests, &spec, 60);
        let targets = spec.machine.mutable_transitions().count();
        if targets > 0 && !res.tests.is_empty() {
            let covered = targets - res.uncovered.len();
            prop_assert!((cov - covered as f64 / targets as f64).abs() < 1e-9, "coverage {} vs gap list {:?}", cov, res.uncovered);
        }
    }
}
