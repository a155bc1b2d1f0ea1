//! Feature mappings, SPL specifications and negative-variability
//! materialization of product specifications.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::diag::{DiagKind, Diagnostic};
use crate::feature_model::{self, Configuration, FeatureId, FeatureModel, FeatureModelError};
use crate::statechart::{self, StateMachine};

/// Ties the presence of a set of transitions to one feature's value.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mapping {
    pub id: String,
    pub feature: FeatureId,
    /// Elements are present when the feature's selection equals this value.
    pub feature_value: bool,
    /// Transition ids; an ordered set.
    pub elements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SplSpecification {
    pub feature_model: FeatureModel,
    pub mappings: Vec<Mapping>,
    /// The 150% domain model.
    pub machine: StateMachine,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductSpecification {
    pub machine: StateMachine,
    pub provenance: Configuration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaterializeError {
    #[error("configuration {0} is not valid for the feature model")]
    InvalidConfiguration(String),
    #[error(transparent)]
    FeatureModel(#[from] FeatureModelError),
}

/// Conjunction of `(feature, value)` literals guarding one transition.
pub type PresenceCondition = BTreeMap<FeatureId, BTreeSet<bool>>;

impl SplSpecification {
    /// Presence condition of every transition referenced by some mapping.
    /// A feature listed with both values makes the transition dead.
    pub fn presence_conditions(&self) -> BTreeMap<&str, PresenceCondition> {
        let mut out: BTreeMap<&str, PresenceCondition> = BTreeMap::new();
        for m in &self.mappings {
            for e in &m.elements {
                out.entry(e.as_str()).or_default().entry(m.feature.clone()).or_default().insert(m.feature_value);
            }
        }
        out
    }

    /// Features whose value is referenced by mapping of this transition.
    pub fn mappings_of<'a>(&'a self, transition: &'a str) -> impl Iterator<Item = &'a Mapping> + 'a {
        self.mappings.iter().filter(move |m| m.elements.iter().any(|e| e == transition))
    }
}

/// Derives the product for `cfg`: a transition survives iff every mapping
/// that lists it agrees with `cfg`. States and variables are kept as they are.
pub fn materialize(spec: &SplSpecification, cfg: &Configuration) -> Result<ProductSpecification, MaterializeError> {
    if !feature_model::is_valid_configuration(&spec.feature_model, cfg)? {
        return Err(MaterializeError::InvalidConfiguration(cfg.label()));
    }
    Ok(materialize_unchecked(spec, cfg))
}

/// `materialize` without the validity check, for callers that iterate over
/// already-validated configurations.
pub fn materialize_unchecked(spec: &SplSpecification, cfg: &Configuration) -> ProductSpecification {
    let dropped: HashSet<&str> = spec
        .mappings
        .iter()
        .filter(|m| cfg.is_selected(&m.feature) != m.feature_value)
        .flat_map(|m| m.elements.iter().map(String::as_str))
        .collect();
    let mut machine = spec.machine.clone();
    for r in &mut machine.regions {
        r.transitions.retain(|t| !dropped.contains(t.id.as_str()));
    }
    ProductSpecification { machine, provenance: cfg.clone() }
}

/// Canonical text of a product machine: element lists sorted by id,
/// expressions printed in normal form. Two products are structurally
/// equivalent iff their canonical forms are equal.
///
/// Region order is kept because it fixes emission order. The provenance
/// configuration is not part of the canonical form.
pub fn canonicalize(p: &ProductSpecification) -> Vec<u8> {
    canonical_machine(&p.machine).into_bytes()
}

pub fn canonical_machine(m: &StateMachine) -> String {
    let mut s = String::new();
    let mut vars: Vec<_> = m.variables.iter().collect();
    vars.sort_by(|a, b| a.name.cmp(&b.name));
    for v in vars {
        let _ = writeln!(s, "var {}:{}={}", v.name, v.ty, v.initial);
    }
    let _ = writeln!(s, "in {}", m.signals_in.iter().cloned().collect::<Vec<_>>().join(","));
    let _ = writeln!(s, "out {}", m.signals_out.iter().cloned().collect::<Vec<_>>().join(","));
    for r in &m.regions {
        let _ = writeln!(s, "region {}", r.id);
        let mut states: Vec<_> = r.states.iter().collect();
        states.sort_by(|a, b| a.id.cmp(&b.id));
        for st in states {
            let _ = writeln!(s, " state {} {}", st.id, st.kind.keyword());
        }
        let mut ts: Vec<_> = r.transitions.iter().collect();
        ts.sort_by(|a, b| a.id.cmp(&b.id));
        for t in ts {
            let mut trig: Vec<_> = t.triggers.iter().map(|t| t.to_string()).collect();
            trig.sort();
            let guard = t.guard.as_ref().map(|g| g.to_string()).unwrap_or_default();
            let effect: Vec<_> = t.effect.iter().map(|a| a.to_string()).collect();
            let _ = writeln!(
                s,
                " trans {} {}->{} [{}] [{}] [{}]",
                t.id,
                t.source,
                t.target,
                trig.join(","),
                guard,
                effect.join(";")
            );
        }
    }
    s
}

/// Feature model, machine and mapping diagnostics of a specification.
pub fn validate_spec(spec: &SplSpecification) -> Vec<Diagnostic> {
    let mut out = feature_model::validate_model(&spec.feature_model);
    out.extend(statechart::structural_validate(&spec.machine));
    out.extend(validate_mappings(spec));
    out
}

/// Mapping-level rules only: references, emptiness and `(feature, value)`
/// uniqueness.
pub fn validate_mappings(spec: &SplSpecification) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut pairs: BTreeMap<(&str, bool), &str> = BTreeMap::new();
    for m in &spec.mappings {
        let loc = format!("mapping {}", m.id);
        if !ids.insert(&m.id) {
            out.push(Diagnostic::new(DiagKind::DuplicateId, &loc, "duplicate mapping id"));
        }
        if !spec.feature_model.features.contains_key(&m.feature) {
            out.push(Diagnostic::new(DiagKind::Reference, &loc, format!("unknown feature `{}`", m.feature)));
        }
        if let Some(other) = pairs.insert((m.feature.as_str(), m.feature_value), m.id.as_str()) {
            out.push(Diagnostic::new(
                DiagKind::Mapping,
                &loc,
                format!("feature `{}` with value {} is already mapped by `{other}`", m.feature, m.feature_value),
            ));
        }
        if m.elements.is_empty() {
            out.push(Diagnostic::new(DiagKind::Mapping, &loc, "mapping has no elements"));
        }
        let mut seen = HashSet::new();
        for e in &m.elements {
            if !seen.insert(e) {
                out.push(Diagnostic::new(DiagKind::Mapping, &loc, format!("element `{e}` listed twice")));
            }
            if spec.machine.transition(e).is_none() {
                out.push(Diagnostic::new(DiagKind::Reference, &loc, format!("unknown transition `{e}`")));
            } else if spec.machine.is_initial_transition(e) {
                out.push(Diagnostic::new(DiagKind::Mapping, &loc, format!("initial transition `{e}` cannot be mapped")));
            }
        }
    }
    out
}
