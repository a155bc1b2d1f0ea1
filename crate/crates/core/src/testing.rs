//! Conformance tests, their execution against product specifications and
//! product-line-centered test generation for all-transitions coverage.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::feature_model::{self, FeatureId, FeatureModel};
use crate::interp::{Emission, Interpreter, Resolver, RuntimeFault, RuntimeState, Stimulus};
use crate::mapping::{ProductSpecification, SplSpecification};
use crate::statechart::Transition;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TestStep {
    pub stimulus: Stimulus,
    /// Emissions expected in response, in order.
    pub expected: Vec<Emission>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct TestCase {
    pub id: String,
    pub required: BTreeSet<FeatureId>,
    pub forbidden: BTreeSet<FeatureId>,
    pub steps: Vec<TestStep>,
}

impl TestCase {
    pub fn applies_to(&self, cfg: &feature_model::Configuration) -> bool {
        self.required.iter().all(|f| cfg.is_selected(f)) && self.forbidden.iter().all(|f| !cfg.is_selected(f))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// First mismatching step, zero based.
    Fail { step: usize, message: String },
    Inapplicable,
    Invalid { fault: RuntimeFault },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }
}

/// Runs `test` on a fresh runtime of `product`.
pub fn execute(test: &TestCase, product: &ProductSpecification, budget: u32) -> Verdict {
    execute_traced(test, product, budget).0
}

/// Like [`execute`], also returning every transition id fired on the way.
pub fn execute_traced(test: &TestCase, product: &ProductSpecification, budget: u32) -> (Verdict, Vec<String>) {
    if !test.applies_to(&product.provenance) {
        return (Verdict::Inapplicable, Vec::new());
    }
    let interp = Interpreter::new(&product.machine);
    let mut fired = Vec::new();
    let mut rt = match interp.initialize(budget) {
        Ok(out) => {
            fired.extend(out.fired);
            out.state
        }
        Err(fault) => return (Verdict::Invalid { fault }, fired),
    };
    for (i, step) in test.steps.iter().enumerate() {
        let out = match interp.step(&rt, &step.stimulus) {
            Ok(out) => out,
            Err(fault) => return (Verdict::Invalid { fault }, fired),
        };
        fired.extend(out.fired);
        if out.emissions != step.expected {
            let message = format!(
                "on {}: expected [{}], got [{}]",
                step.stimulus,
                join(&step.expected),
                join(&out.emissions)
            );
            return (Verdict::Fail { step: i, message }, fired);
        }
        rt = out.state;
    }
    (Verdict::Pass, fired)
}

fn join(es: &[Emission]) -> String {
    es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(", ")
}

/// Stimuli the generator may apply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet(pub Vec<Stimulus>);

impl Alphabet {
    /// One stimulus per input signal; signals that feed a payload binding are
    /// sent once per value of their payload domain (default `{0, 1}`).
    pub fn for_spec(spec: &SplSpecification, payloads: &BTreeMap<String, Vec<i64>>) -> Alphabet {
        let binding: HashSet<&str> = spec
            .machine
            .transitions()
            .flat_map(|(_, t)| t.triggers.iter())
            .filter(|t| t.binding.is_some())
            .map(|t| t.signal.as_str())
            .collect();
        let mut out = Vec::new();
        for sig in &spec.machine.signals_in {
            if binding.contains(sig.as_str()) || payloads.contains_key(sig) {
                let domain = payloads.get(sig).cloned().unwrap_or_else(|| vec![0, 1]);
                out.extend(domain.into_iter().map(|v| Stimulus::with_payload(sig, v)));
            } else {
                out.push(Stimulus::new(sig));
            }
        }
        Alphabet(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlcResult {
    pub tests: Vec<TestCase>,
    /// Transitions no test covers within the depth limit, in model order.
    pub uncovered: Vec<String>,
    /// Concrete states explored.
    pub explored: usize,
}

/// Partial feature assignment accumulated along a path.
type Constraints = BTreeMap<FeatureId, bool>;

struct Node {
    rt: RuntimeState,
    cons: Constraints,
    parent: Option<usize>,
    via: Option<(Stimulus, Vec<Emission>)>,
    fired: Vec<String>,
    depth: usize,
}

/// Resolves 150%-model choices by adding the presence literals of the fired
/// transition, and absence literals for its competitors, to the path
/// constraints. Decisions are replayed from `script` so callers can enumerate
/// every combination.
struct PresenceResolver<'a> {
    literals: &'a HashMap<&'a str, Vec<(FeatureId, bool)>>,
    sat: &'a mut dyn FnMut(&Constraints) -> bool,
    cons: Constraints,
    script: &'a [usize],
    arities: Vec<usize>,
}

impl PresenceResolver<'_> {
    fn options(&self, enabled: &[&Transition]) -> Vec<(usize, Vec<(FeatureId, bool)>)> {
        let lits = |t: &Transition| self.literals.get(t.id.as_str()).cloned().unwrap_or_default();
        let mut out = Vec::new();
        for (j, t) in enabled.iter().enumerate() {
            let mut partial: Vec<Vec<(FeatureId, bool)>> = vec![lits(t)];
            for (i, other) in enabled.iter().enumerate() {
                if i == j {
                    continue;
                }
                // The competitor must be absent: falsify one of its literals.
                let neg = lits(other);
                let mut next = Vec::new();
                for p in &partial {
                    for (f, v) in &neg {
                        let mut q = p.clone();
                        q.push((f.clone(), !v));
                        next.push(q);
                    }
                }
                partial = next;
            }
            out.extend(partial.into_iter().map(|p| (j, p)));
        }
        out
    }
}

impl PresenceResolver<'_> {
    /// Options merged into the current constraints. Contradictory and
    /// unsatisfiable ones are dropped, as is any option whose constraints
    /// strictly contain those of another option for the same transition.
    fn feasible(&mut self, enabled: &[&Transition]) -> Vec<(usize, Constraints)> {
        let mut out: Vec<(usize, Constraints)> = Vec::new();
        'next: for (pick, lits) in self.options(enabled) {
            let mut c = self.cons.clone();
            for (f, v) in lits {
                if *c.entry(f).or_insert(v) != v {
                    continue 'next;
                }
            }
            if !out.iter().any(|o| o == &(pick, c.clone())) && (self.sat)(&c) {
                out.push((pick, c));
            }
        }
        let dominated = |(p, c): &(usize, Constraints)| {
            out.iter().any(|(q, d)| q == p && d.len() < c.len() && d.iter().all(|(f, v)| c.get(f) == Some(v)))
        };
        let keep: Vec<bool> = out.iter().map(|o| !dominated(o)).collect();
        out.into_iter().zip(keep).filter(|(_, k)| *k).map(|(o, _)| o).collect()
    }
}

impl Resolver for PresenceResolver<'_> {
    fn resolve(&mut self, _region: &str, _state: &str, enabled: &[&Transition]) -> Result<Option<usize>, RuntimeFault> {
        let options = self.feasible(enabled);
        let k = self.arities.len();
        self.arities.push(options.len());
        let choice = self.script.get(k).copied().unwrap_or(0);
        let Some((pick, cons)) = options.into_iter().nth(choice) else {
            return Err(RuntimeFault::Rejected);
        };
        self.cons = cons;
        Ok(Some(pick))
    }
}

/// Resolution attempts per stimulus before the remaining ones are given up.
const MAX_RESOLUTIONS: usize = 4096;

/// Outcome of one stimulus under every feasible resolution.
type Branch = (RuntimeState, Constraints, Vec<Emission>, Vec<String>);

fn branches(
    run: &mut dyn FnMut(&mut PresenceResolver) -> Result<(RuntimeState, Vec<Emission>, Vec<String>), RuntimeFault>,
    literals: &HashMap<&str, Vec<(FeatureId, bool)>>,
    sat: &mut dyn FnMut(&Constraints) -> bool,
    cons: &Constraints,
) -> Vec<Branch> {
    let mut out = Vec::new();
    let mut script: Vec<usize> = Vec::new();
    for _ in 0..MAX_RESOLUTIONS {
        let mut res = PresenceResolver { literals, sat: &mut *sat, cons: cons.clone(), script: &script, arities: Vec::new() };
        let result = run(&mut res);
        let arities = std::mem::take(&mut res.arities);
        let final_cons = res.cons;
        if let Ok((rt, em, fired)) = result {
            out.push((rt, final_cons, em, fired));
        }
        // advance the odometer over the decisions actually taken
        let mut next = None;
        for d in (0..arities.len()).rev() {
            let cur = script.get(d).copied().unwrap_or(0);
            if cur + 1 < arities[d] {
                let mut s: Vec<usize> = (0..d).map(|i| script.get(i).copied().unwrap_or(0)).collect();
                s.push(cur + 1);
                next = Some(s);
                break;
            }
        }
        match next {
            Some(s) => script = s,
            None => break,
        }
    }
    out
}

/// Breadth-first all-transitions test design over the 150% machine.
///
/// Each explored path carries the feature literals required for the
/// transitions it fires to be present. Paths whose constraints no valid
/// configuration satisfies are dropped. For every transition, in model
/// order, that no earlier test fires, the shortest path firing it becomes a
/// test whose required/forbidden features are the path constraints.
pub fn generate_plc(spec: &SplSpecification, alphabet: &Alphabet, depth_limit: usize, budget: u32) -> PlcResult {
    let interp = Interpreter::new(&spec.machine);
    let mut literals: HashMap<&str, Vec<(FeatureId, bool)>> = HashMap::new();
    for m in &spec.mappings {
        for e in &m.elements {
            literals.entry(e.as_str()).or_default().push((m.feature.clone(), m.feature_value));
        }
    }
    let fm = &spec.feature_model;
    let mut sat_cache: HashMap<Constraints, bool> = HashMap::new();
    let mut sat = |c: &Constraints| *sat_cache.entry(c.clone()).or_insert_with(|| satisfiable(fm, c));

    let targets: Vec<&str> = spec.machine.mutable_transitions().map(|(_, t)| t.id.as_str()).collect();
    let mut first_cover: HashMap<String, usize> = HashMap::new();
    let mut nodes: Vec<Node> = Vec::new();
    let mut seen: HashSet<(RuntimeState, Constraints)> = HashSet::new();
    let mut queue = VecDeque::new();

    let roots = branches(
        &mut |r| interp.initialize_with(budget, r).map(|o| (o.state, o.emissions, o.fired)),
        &literals,
        &mut sat,
        &Constraints::new(),
    );
    for (rt, cons, _, fired) in roots {
        if seen.insert((rt.clone(), cons.clone())) {
            nodes.push(Node { rt, cons, parent: None, via: None, fired, depth: 0 });
            queue.push_back(nodes.len() - 1);
        }
    }
    let mut at_init: BTreeSet<String> = BTreeSet::new();
    for n in &nodes {
        at_init.extend(n.fired.iter().cloned());
    }

    let all_covered = |fc: &HashMap<String, usize>| targets.iter().all(|t| fc.contains_key(*t) || at_init.contains(*t));
    while let Some(idx) = queue.pop_front() {
        if all_covered(&first_cover) {
            break;
        }
        if nodes[idx].depth >= depth_limit {
            continue;
        }
        for stim in &alphabet.0 {
            let (rt, cons) = (nodes[idx].rt.clone(), nodes[idx].cons.clone());
            let outs = branches(
                &mut |r| interp.step_with(&rt, stim, r).map(|o| (o.state, o.emissions, o.fired)),
                &literals,
                &mut sat,
                &cons,
            );
            for (rt2, cons2, em, fired) in outs {
                let fresh_cover = fired.iter().any(|t| !first_cover.contains_key(t));
                if !seen.insert((rt2.clone(), cons2.clone())) && !fresh_cover {
                    continue;
                }
                let depth = nodes[idx].depth + 1;
                nodes.push(Node { rt: rt2, cons: cons2, parent: Some(idx), via: Some((stim.clone(), em)), fired, depth });
                let child = nodes.len() - 1;
                for t in &nodes[child].fired {
                    first_cover.entry(t.clone()).or_insert(child);
                }
                queue.push_back(child);
            }
        }
    }

    let mut tests = Vec::new();
    let mut covered: HashSet<String> = HashSet::new();
    for t in &targets {
        if covered.contains(*t) {
            continue;
        }
        let Some(&leaf) = first_cover.get(*t) else { continue };
        let mut path = Vec::new();
        let mut cur = Some(leaf);
        while let Some(i) = cur {
            if nodes[i].via.is_some() {
                path.push(i);
            }
            covered.extend(nodes[i].fired.iter().cloned());
            cur = nodes[i].parent;
        }
        path.reverse();
        let cons = &nodes[leaf].cons;
        let steps = path
            .iter()
            .map(|&i| {
                let (stimulus, expected) = nodes[i].via.clone().expect("path nodes have an edge");
                TestStep { stimulus, expected }
            })
            .collect();
        tests.push(TestCase {
            id: String::new(),
            required: cons.iter().filter(|(_, v)| **v).map(|(k, _)| k.clone()).collect(),
            forbidden: cons.iter().filter(|(_, v)| !**v).map(|(k, _)| k.clone()).collect(),
            steps,
        });
    }
    if !tests.is_empty() {
        covered.extend(at_init.iter().cloned());
    }
    let width = tests.len().to_string().len().max(2);
    for (i, t) in tests.iter_mut().enumerate() {
        t.id = format!("T{:0width$}", i + 1);
    }
    let uncovered = targets.iter().filter(|t| !covered.contains(**t)).map(|t| t.to_string()).collect();
    PlcResult { tests, uncovered, explored: nodes.len() }
}

fn satisfiable(fm: &FeatureModel, cons: &Constraints) -> bool {
    let required = cons.iter().filter(|(_, v)| **v).map(|(k, _)| k.clone()).collect();
    let forbidden = cons.iter().filter(|(_, v)| !**v).map(|(k, _)| k.clone()).collect();
    feature_model::complete_partial(fm, &required, &forbidden).is_ok()
}

/// Fraction of the 150% machine's transitions (initial transitions excluded)
/// fired when each test runs on the product selected for it.
pub fn all_transitions_coverage(suite: &[TestCase], spec: &SplSpecification, budget: u32) -> f64 {
    let targets: BTreeSet<&str> = spec.machine.mutable_transitions().map(|(_, t)| t.id.as_str()).collect();
    if targets.is_empty() || suite.is_empty() {
        return 0.0;
    }
    let selection = crate::pipeline::select_products(suite, &spec.feature_model, crate::pipeline::Selection::FirstFit);
    let mut hit: BTreeSet<String> = BTreeSet::new();
    for (ti, cfg) in &selection.assignment {
        let product = crate::mapping::materialize_unchecked(spec, &selection.products[*cfg]);
        let (_, fired) = execute_traced(&suite[*ti], &product, budget);
        hit.extend(fired);
    }
    targets.iter().filter(|t| hit.contains(**t)).count() as f64 / targets.len() as f64
}
