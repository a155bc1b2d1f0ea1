//! Random small specifications for property tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::vec;
use proptest::prelude::*;
use proptest::sample::Index;

use splmut::expr::{Action, Expr, Type, Value};
use splmut::feature_model::{ChildSlot, ConstraintKind, CrossTreeConstraint, Feature, FeatureModel};
use splmut::statechart::{Region, StateKind, StateMachine, StateNode, Transition, Trigger, VariableDecl};
use splmut::{Mapping, SplSpecification};

const GUARDS: [&str; 6] = ["x > 0", "x <= 2 && b", "!b", "x % 2 == 0", "x + 1 != 3", "b || x >= 4"];
const EFFECTS: [&str; 6] = ["x += 1", "x = 0", "b = !b", "emit Out(x)", "emit Done", "x -= 2"];
const SIGNALS: [&str; 3] = ["A", "B", "C"];

fn fid(i: usize) -> String {
    format!("F{i}")
}

/// Builds a tree from parent picks and per-feature slot kinds
/// (0 mandatory, 1 optional, 2 or-group, 3 alternative-group). Singleton
/// groups degrade to optional children.
pub fn build_model(parents: &[Index], kinds: &[u8], cons: &[(Index, Index, bool)]) -> FeatureModel {
    let n = kinds.len();
    let mut children: BTreeMap<usize, Vec<(usize, u8)>> = BTreeMap::new();
    for i in 1..n {
        children.entry(parents[i].index(i)).or_default().push((i, kinds[i]));
    }
    let mut features = BTreeMap::new();
    for i in 0..n {
        let kids = children.remove(&i).unwrap_or_default();
        let mut slots = Vec::new();
        let group = |k: u8| kids.iter().filter(|(_, kk)| *kk == k).map(|(c, _)| fid(*c)).collect::<Vec<_>>();
        for (c, k) in &kids {
            match k {
                0 => slots.push(ChildSlot::Mandatory(fid(*c))),
                1 => slots.push(ChildSlot::Optional(fid(*c))),
                _ if group(*k).len() < 2 => slots.push(ChildSlot::Optional(fid(*c))),
                _ => {}
            }
        }
        for (k, mk) in [(2u8, ChildSlot::Or as fn(Vec<String>) -> ChildSlot), (3, ChildSlot::Alternative)] {
            let g = group(k);
            if g.len() >= 2 {
                slots.push(mk(g));
            }
        }
        features.insert(fid(i), Feature { id: fid(i), name: fid(i), children: slots });
    }
    let constraints = cons
        .iter()
        .filter(|_| n > 1)
        .map(|(a, b, req)| {
            let l = a.index(n);
            let mut r = b.index(n - 1);
            if r >= l {
                r += 1;
            }
            CrossTreeConstraint {
                kind: if *req { ConstraintKind::Requires } else { ConstraintKind::Excludes },
                left: fid(l),
                right: fid(r),
            }
        })
        .collect();
    FeatureModel { root: fid(0), features, constraints }
}

pub fn arb_model(max_features: usize) -> impl Strategy<Value = FeatureModel> {
    (1..=max_features)
        .prop_flat_map(|n| (vec(any::<Index>(), n), vec(0u8..4, n), vec((any::<Index>(), any::<Index>(), any::<bool>()), 0..3)))
        .prop_map(|(p, k, c)| build_model(&p, &k, &c))
}

#[derive(Debug, Clone)]
pub struct TransitionPick {
    region: Index,
    source: Index,
    target: Index,
    triggers: Vec<(Index, bool)>,
    guard: Option<Index>,
    effects: Vec<Index>,
}

fn arb_transition() -> impl Strategy<Value = TransitionPick> {
    (
        any::<Index>(),
        any::<Index>(),
        any::<Index>(),
        vec((any::<Index>(), prop::bool::weighted(0.2)), 0..3),
        prop::option::weighted(0.4, any::<Index>()),
        vec(any::<Index>(), 0..3),
    )
        .prop_map(|(region, source, target, triggers, guard, effects)| TransitionPick {
            region,
            source,
            target,
            triggers,
            guard,
            effects,
        })
}

pub fn build_machine(state_counts: &[usize], picks: &[TransitionPick]) -> StateMachine {
    let mut regions: Vec<Region> = state_counts
        .iter()
        .enumerate()
        .map(|(r, &n)| {
            let mut states = vec![StateNode { id: format!("r{r}_init"), kind: StateKind::Initial }];
            states.extend((0..n).map(|s| StateNode { id: format!("r{r}_s{s}"), kind: StateKind::Simple }));
            let init = Transition {
                id: format!("r{r}_start"),
                source: format!("r{r}_init"),
                target: format!("r{r}_s0"),
                triggers: vec![],
                guard: None,
                effect: vec![],
            };
            Region { id: format!("R{r}"), states, transitions: vec![init] }
        })
        .collect();
    for (i, p) in picks.iter().enumerate() {
        let r = p.region.index(regions.len());
        let n = state_counts[r];
        let mut triggers: Vec<Trigger> = Vec::new();
        for (sig, bind) in &p.triggers {
            let signal = SIGNALS[sig.index(SIGNALS.len())].to_string();
            if triggers.iter().all(|t| t.signal != signal) {
                triggers.push(Trigger { signal, binding: bind.then(|| "x".to_string()) });
            }
        }
        regions[r].transitions.push(Transition {
            id: format!("t{i}"),
            source: format!("r{r}_s{}", p.source.index(n)),
            target: format!("r{r}_s{}", p.target.index(n)),
            triggers,
            guard: p.guard.map(|g| Expr::parse(GUARDS[g.index(GUARDS.len())]).unwrap()),
            effect: p.effects.iter().map(|e| Action::parse(EFFECTS[e.index(EFFECTS.len())]).unwrap()).collect(),
        });
    }
    StateMachine {
        variables: vec![
            VariableDecl { name: "x".into(), ty: Type::Int, initial: Value::Int(0) },
            VariableDecl { name: "b".into(), ty: Type::Bool, initial: Value::Bool(false) },
        ],
        regions,
        signals_in: SIGNALS.iter().map(|s| s.to_string()).collect(),
        signals_out: ["Out", "Done"].iter().map(|s| s.to_string()).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct MappingPick {
    feature: Index,
    value: bool,
    elements: Vec<Index>,
}

/// Mappings with unique `(feature, value)` pairs and non-empty element lists.
pub fn build_mappings(fm: &FeatureModel, m: &StateMachine, picks: &[MappingPick]) -> Vec<Mapping> {
    let features: Vec<&String> = fm.features.keys().collect();
    let mappable: Vec<String> = m.mutable_transitions().map(|(_, t)| t.id.clone()).collect();
    if mappable.is_empty() {
        return vec![];
    }
    let mut used = BTreeSet::new();
    let mut out = Vec::new();
    for p in picks {
        let feature = features[p.feature.index(features.len())].clone();
        if !used.insert((feature.clone(), p.value)) {
            continue;
        }
        let mut elements: Vec<String> = Vec::new();
        for e in &p.elements {
            let t = &mappable[e.index(mappable.len())];
            if !elements.contains(t) {
                elements.push(t.clone());
            }
        }
        out.push(Mapping { id: format!("m{}", out.len()), feature, feature_value: p.value, elements });
    }
    out
}

/// Specifications with up to `max_features` features and `max_transitions`
/// non-initial transitions over one or two regions.
pub fn arb_spec(max_features: usize, max_transitions: usize) -> impl Strategy<Value = SplSpecification> {
    (
        arb_model(max_features),
        vec(1usize..5, 1..3),
        vec(arb_transition(), 0..=max_transitions),
        vec(
            (any::<Index>(), any::<bool>(), vec(any::<Index>(), 1..4)).prop_map(|(feature, value, elements)| MappingPick {
                feature,
                value,
                elements,
            }),
            0..5,
        ),
    )
        .prop_map(|(fm, states, ts, ms)| {
            let machine = build_machine(&states, &ts);
            let mappings = build_mappings(&fm, &machine, &ms);
            SplSpecification { feature_model: fm, mappings, machine }
        })
}
