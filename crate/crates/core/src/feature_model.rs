//! Feature models with FODA decomposition and requires/excludes constraints.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::diag::{DiagKind, Diagnostic};

pub type FeatureId = String;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChildSlot {
    Mandatory(FeatureId),
    Optional(FeatureId),
    Or(Vec<FeatureId>),
    Alternative(Vec<FeatureId>),
}

impl ChildSlot {
    pub fn members(&self) -> &[FeatureId] {
        match self {
            ChildSlot::Mandatory(f) | ChildSlot::Optional(f) => std::slice::from_ref(f),
            ChildSlot::Or(g) | ChildSlot::Alternative(g) => g,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Feature {
    pub id: FeatureId,
    pub name: String,
    pub children: Vec<ChildSlot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConstraintKind {
    Requires,
    Excludes,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CrossTreeConstraint {
    pub kind: ConstraintKind,
    pub left: FeatureId,
    pub right: FeatureId,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureModel {
    pub root: FeatureId,
    pub features: BTreeMap<FeatureId, Feature>,
    pub constraints: Vec<CrossTreeConstraint>,
}

/// A total valuation of a model's features.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    pub valuation: BTreeMap<FeatureId, bool>,
}

impl Configuration {
    pub fn is_selected(&self, f: &str) -> bool {
        self.valuation.get(f).copied().unwrap_or(false)
    }

    pub fn selected(&self) -> impl Iterator<Item = &str> {
        self.valuation.iter().filter(|(_, v)| **v).map(|(k, _)| k.as_str())
    }

    /// Selected features joined with `,`; the display form used in reports.
    pub fn label(&self) -> String {
        self.selected().collect::<Vec<_>>().join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeatureModelError {
    #[error("configuration does not match the model's features (missing {missing:?}, extra {extra:?})")]
    DomainMismatch { missing: Vec<FeatureId>, extra: Vec<FeatureId> },
    #[error("more than {limit} configurations")]
    LimitExceeded { limit: usize },
    #[error("no valid configuration selects {required:?} and avoids {forbidden:?}")]
    Unsatisfiable { required: Vec<FeatureId>, forbidden: Vec<FeatureId> },
    #[error("features {0:?} are both required and forbidden")]
    Conflicting(Vec<FeatureId>),
    #[error("unknown feature `{0}`")]
    UnknownFeature(FeatureId),
}

impl FeatureModel {
    /// Parent of every feature reachable from the root.
    pub fn parents(&self) -> HashMap<&str, &str> {
        let mut out = HashMap::new();
        for f in self.features.values() {
            for slot in &f.children {
                for c in slot.members() {
                    out.entry(c.as_str()).or_insert(f.id.as_str());
                }
            }
        }
        out
    }

    pub fn feature_ids(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    /// Builds a configuration from the set of selected features.
    pub fn configuration<'a>(&self, selected: impl IntoIterator<Item = &'a str>) -> Configuration {
        let sel: BTreeSet<&str> = selected.into_iter().collect();
        Configuration { valuation: self.features.keys().map(|k| (k.clone(), sel.contains(k.as_str()))).collect() }
    }

    /// Propositional clauses equivalent to the model's semantics. Each clause
    /// is a disjunction of `(feature index, polarity)` literals over the
    /// features in sorted-id order.
    fn clauses(&self) -> Vec<Vec<(usize, bool)>> {
        let idx: HashMap<&str, usize> = self.features.keys().enumerate().map(|(i, k)| (k.as_str(), i)).collect();
        let ix = |f: &str| idx.get(f).copied();
        // An unknown root or mandatory child leaves nothing satisfiable.
        let mut out = vec![ix(&self.root).map(|r| vec![(r, true)]).unwrap_or_default()];
        for (p, f) in self.features.values().enumerate() {
            for slot in &f.children {
                let members: Vec<usize> = slot.members().iter().filter_map(|c| idx.get(c.as_str()).copied()).collect();
                for &c in &members {
                    out.push(vec![(c, false), (p, true)]);
                }
                match slot {
                    ChildSlot::Mandatory(_) => {
                        let mut c = vec![(p, false)];
                        c.extend(members.first().map(|&m| (m, true)));
                        out.push(c);
                    }
                    ChildSlot::Optional(_) => {}
                    ChildSlot::Or(_) | ChildSlot::Alternative(_) => {
                        let mut c = vec![(p, false)];
                        c.extend(members.iter().map(|&m| (m, true)));
                        out.push(c);
                        if matches!(slot, ChildSlot::Alternative(_)) {
                            for (i, &a) in members.iter().enumerate() {
                                for &b in &members[i + 1..] {
                                    out.push(vec![(a, false), (b, false)]);
                                }
                            }
                        }
                    }
                }
            }
        }
        for c in &self.constraints {
            let (Some(l), Some(r)) = (ix(&c.left), ix(&c.right)) else { continue };
            out.push(match c.kind {
                ConstraintKind::Requires => vec![(l, false), (r, true)],
                ConstraintKind::Excludes => vec![(l, false), (r, false)],
            });
        }
        out
    }
}

/// Reports every violated structural invariant of `fm`.
pub fn validate_model(fm: &FeatureModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !fm.features.contains_key(&fm.root) {
        out.push(Diagnostic::new(DiagKind::Tree, "feature model", format!("root `{}` is not a feature", fm.root)));
    }
    for (key, f) in &fm.features {
        if key != &f.id {
            out.push(Diagnostic::new(DiagKind::Tree, format!("feature {key}"), format!("keyed under `{key}` but named `{}`", f.id)));
        }
    }

    let mut parents: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for f in fm.features.values() {
        for slot in &f.children {
            let members = slot.members();
            if matches!(slot, ChildSlot::Or(_) | ChildSlot::Alternative(_)) && members.len() < 2 {
                let kind = if matches!(slot, ChildSlot::Or(_)) { "or-group" } else { "alternative-group" };
                out.push(Diagnostic::new(
                    DiagKind::GroupSize,
                    format!("feature {}", f.id),
                    format!("{kind} {members:?} has fewer than 2 members"),
                ));
            }
            for c in members {
                if !fm.features.contains_key(c) {
                    out.push(Diagnostic::new(
                        DiagKind::Reference,
                        format!("feature {}", f.id),
                        format!("child `{c}` is not a feature"),
                    ));
                }
                parents.entry(c.as_str()).or_default().push(f.id.as_str());
            }
        }
    }
    for (child, ps) in &parents {
        if *child == fm.root {
            out.push(Diagnostic::new(DiagKind::Tree, format!("feature {child}"), "root has a parent"));
        } else if ps.len() > 1 {
            out.push(Diagnostic::new(
                DiagKind::Tree,
                format!("feature {child}"),
                format!("has {} parent slots ({})", ps.len(), ps.join(", ")),
            ));
        }
    }

    // Walk up from every feature; a feature that never reaches the root is
    // either orphaned or on a cycle.
    for id in fm.features.keys() {
        if *id == fm.root {
            continue;
        }
        let mut cur = id.as_str();
        let mut steps = 0;
        let reached = loop {
            match parents.get(cur).and_then(|ps| ps.first()) {
                Some(p) if *p == fm.root => break true,
                Some(p) if steps <= fm.features.len() => {
                    cur = p;
                    steps += 1;
                }
                _ => break false,
            }
        };
        if !reached {
            let msg = if parents.contains_key(id.as_str()) { "is on a cycle detached from the root" } else { "has no parent" };
            out.push(Diagnostic::new(DiagKind::Tree, format!("feature {id}"), msg));
        }
    }

    for (i, c) in fm.constraints.iter().enumerate() {
        let loc = format!("constraint #{}", i + 1);
        for f in [&c.left, &c.right] {
            if !fm.features.contains_key(f) {
                out.push(Diagnostic::new(DiagKind::Reference, &loc, format!("unknown feature `{f}`")));
            }
        }
        if c.left == c.right {
            out.push(Diagnostic::new(DiagKind::Reference, &loc, "constraint relates a feature to itself"));
        }
    }
    out
}

fn check_domain(fm: &FeatureModel, cfg: &Configuration) -> Result<(), FeatureModelError> {
    let missing: Vec<_> = fm.features.keys().filter(|k| !cfg.valuation.contains_key(*k)).cloned().collect();
    let extra: Vec<_> = cfg.valuation.keys().filter(|k| !fm.features.contains_key(*k)).cloned().collect();
    if missing.is_empty() && extra.is_empty() {
        Ok(())
    } else {
        Err(FeatureModelError::DomainMismatch { missing, extra })
    }
}

/// Checks `cfg` against the decomposition rules and cross-tree constraints.
pub fn is_valid_configuration(fm: &FeatureModel, cfg: &Configuration) -> Result<bool, FeatureModelError> {
    check_domain(fm, cfg)?;
    let sel = |f: &str| cfg.valuation[f];
    if !sel(&fm.root) {
        return Ok(false);
    }
    for f in fm.features.values() {
        let parent_on = sel(&f.id);
        for slot in &f.children {
            let on = slot.members().iter().filter(|c| sel(c)).count();
            if !parent_on {
                // deselected parent: the whole subtree must be off
                if on > 0 {
                    return Ok(false);
                }
                continue;
            }
            let ok = match slot {
                ChildSlot::Mandatory(_) => on == 1,
                ChildSlot::Optional(_) => true,
                ChildSlot::Or(_) => on >= 1,
                ChildSlot::Alternative(_) => on == 1,
            };
            if !ok {
                return Ok(false);
            }
        }
    }
    for c in &fm.constraints {
        let (l, r) = (sel(&c.left), sel(&c.right));
        let ok = match c.kind {
            ConstraintKind::Requires => !l || r,
            ConstraintKind::Excludes => !(l && r),
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Depth-first search over feature valuations in sorted-id order, `false`
/// before `true`, pruning as soon as a clause is fully assigned and false.
struct Search<'a> {
    clauses: Vec<Vec<(usize, bool)>>,
    /// Clauses indexed by the largest feature index they mention.
    closing: Vec<Vec<usize>>,
    ids: Vec<&'a str>,
    fixed: Vec<Option<bool>>,
}

impl<'a> Search<'a> {
    fn new(fm: &'a FeatureModel) -> Self {
        let clauses = fm.clauses();
        let n = fm.features.len();
        let mut closing = vec![Vec::new(); n];
        for (ci, c) in clauses.iter().enumerate() {
            let last = c.iter().map(|l| l.0).max().unwrap_or(0);
            closing[last].push(ci);
        }
        Search { clauses, closing, ids: fm.feature_ids().collect(), fixed: vec![None; n] }
    }

    fn visit(&self, assign: &mut Vec<bool>, on_leaf: &mut dyn FnMut(&[bool]) -> bool, prune: &dyn Fn(&[bool]) -> bool) -> bool {
        let i = assign.len();
        if i == self.ids.len() {
            return on_leaf(assign);
        }
        for v in [false, true] {
            if self.fixed[i].is_some_and(|f| f != v) {
                continue;
            }
            assign.push(v);
            let consistent = self.closing[i]
                .iter()
                .all(|&ci| self.clauses[ci].iter().any(|&(f, pol)| assign[f] == pol));
            if consistent && !prune(assign) && !self.visit(assign, on_leaf, prune) {
                assign.pop();
                return false;
            }
            assign.pop();
        }
        true
    }

    fn to_config(&self, bits: &[bool]) -> Configuration {
        Configuration { valuation: self.ids.iter().zip(bits).map(|(k, v)| (k.to_string(), *v)).collect() }
    }
}

/// All valid configurations, ordered lexicographically by their valuation
/// vector over sorted feature ids (`false < true`).
pub fn enumerate_configurations(fm: &FeatureModel, limit: usize) -> Result<Vec<Configuration>, FeatureModelError> {
    let search = Search::new(fm);
    let mut out = Vec::new();
    let mut exceeded = false;
    search.visit(
        &mut Vec::new(),
        &mut |bits| {
            if out.len() == limit {
                exceeded = true;
                return false;
            }
            out.push(search.to_config(bits));
            true
        },
        &|_| false,
    );
    if exceeded {
        return Err(FeatureModelError::LimitExceeded { limit });
    }
    Ok(out)
}

/// Counts valid configurations without materializing them.
pub fn count_configurations(fm: &FeatureModel, limit: usize) -> Result<usize, FeatureModelError> {
    let search = Search::new(fm);
    let mut n = 0usize;
    let mut exceeded = false;
    search.visit(
        &mut Vec::new(),
        &mut |_| {
            if n == limit {
                exceeded = true;
                return false;
            }
            n += 1;
            true
        },
        &|_| false,
    );
    if exceeded {
        Err(FeatureModelError::LimitExceeded { limit })
    } else {
        Ok(n)
    }
}

/// Smallest valid configuration selecting every `required` feature and no
/// `forbidden` one. Ties on the number of selected features go to the
/// lexicographically smallest list of selected feature ids.
pub fn complete_partial(
    fm: &FeatureModel,
    required: &BTreeSet<FeatureId>,
    forbidden: &BTreeSet<FeatureId>,
) -> Result<Configuration, FeatureModelError> {
    let both: Vec<_> = required.intersection(forbidden).cloned().collect();
    if !both.is_empty() {
        return Err(FeatureModelError::Conflicting(both));
    }
    let mut search = Search::new(fm);
    for (fs, v) in [(required, true), (forbidden, false)] {
        for f in fs {
            let i = search.ids.iter().position(|id| id == f).ok_or_else(|| FeatureModelError::UnknownFeature(f.clone()))?;
            search.fixed[i] = Some(v);
        }
    }
    let best: std::cell::RefCell<Option<(usize, Vec<&str>, Vec<bool>)>> = Default::default();
    let prune = |bits: &[bool]| {
        let on = bits.iter().filter(|b| **b).count();
        best.borrow().as_ref().is_some_and(|(n, _, _)| on > *n)
    };
    search.visit(
        &mut Vec::new(),
        &mut |bits| {
            let n = bits.iter().filter(|b| **b).count();
            let names: Vec<&str> = search.ids.iter().zip(bits).filter(|(_, b)| **b).map(|(k, _)| *k).collect();
            let mut slot = best.borrow_mut();
            let better = match slot.as_ref() {
                None => true,
                Some((bn, bnames, _)) => (n, &names) < (*bn, bnames),
            };
            if better {
                *slot = Some((n, names, bits.to_vec()));
            }
            true
        },
        &prune,
    );
    let found = best.into_inner();
    match found {
        Some((_, _, bits)) => Ok(search.to_config(&bits)),
        None => Err(FeatureModelError::Unsatisfiable {
            required: required.iter().cloned().collect(),
            forbidden: forbidden.iter().cloned().collect(),
        }),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn feature(id: &str, children: Vec<ChildSlot>) -> Feature {
        Feature { id: id.into(), name: id.into(), children }
    }

    pub(crate) fn model(root: &str, feats: Vec<Feature>, constraints: Vec<CrossTreeConstraint>) -> FeatureModel {
        FeatureModel { root: root.into(), features: feats.into_iter().map(|f| (f.id.clone(), f)).collect(), constraints }
    }

    fn opt(id: &str) -> ChildSlot {
        ChildSlot::Optional(id.into())
    }

    fn ticket_like() -> FeatureModel {
        model(
            "T",
            vec![feature("T", vec![opt("A"), opt("B"), opt("C")]), feature("A", vec![]), feature("B", vec![]), feature("C", vec![])],
            vec![],
        )
    }

    fn brute_force_count(fm: &FeatureModel) -> usize {
        let ids: Vec<&str> = fm.feature_ids().collect();
        (0u32..1 << ids.len())
            .filter(|mask| {
                let cfg = fm.configuration(ids.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, f)| *f));
                is_valid_configuration(fm, &cfg).unwrap()
            })
            .count()
    }

    #[test]
    fn three_optional_children_give_eight_variants() {
        let fm = ticket_like();
        assert!(validate_model(&fm).is_empty());
        let all = enumerate_configurations(&fm, 100).unwrap();
        assert_eq!(all.len(), 8);
        assert_eq!(brute_force_count(&fm), 8);
        assert_eq!(all[0].label(), "T");
        assert_eq!(all[7].label(), "A,B,C,T");
        assert!(matches!(enumerate_configurations(&fm, 7), Err(FeatureModelError::LimitExceeded { limit: 7 })));
    }

    #[test]
    fn two_parents_is_a_tree_violation() {
        let fm = model(
            "R",
            vec![feature("R", vec![opt("A"), opt("B")]), feature("A", vec![opt("B")]), feature("B", vec![])],
            vec![],
        );
        let d = validate_model(&fm);
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].kind, DiagKind::Tree);
    }

    #[test]
    fn singleton_or_group_is_flagged() {
        let fm = model("R", vec![feature("R", vec![ChildSlot::Or(vec!["A".into()])]), feature("A", vec![])], vec![]);
        let d = validate_model(&fm);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagKind::GroupSize);
    }

    #[test]
    fn cycles_and_orphans_are_flagged() {
        let fm = model(
            "R",
            vec![feature("R", vec![]), feature("A", vec![opt("B")]), feature("B", vec![opt("A")]), feature("C", vec![])],
            vec![],
        );
        let msgs: Vec<_> = validate_model(&fm).into_iter().map(|d| d.message).collect();
        assert_eq!(msgs, vec!["is on a cycle detached from the root", "is on a cycle detached from the root", "has no parent"]);
    }

    #[test]
    fn alternative_group_allows_exactly_one() {
        let fm = model(
            "R",
            vec![feature("R", vec![ChildSlot::Alternative(vec!["A".into(), "B".into()])]), feature("A", vec![]), feature("B", vec![])],
            vec![],
        );
        assert!(!is_valid_configuration(&fm, &fm.configuration(["R", "A", "B"])).unwrap());
        assert!(!is_valid_configuration(&fm, &fm.configuration(["R"])).unwrap());
        assert!(is_valid_configuration(&fm, &fm.configuration(["R", "B"])).unwrap());
    }

    #[test]
    fn root_only_is_valid_when_children_optional() {
        let fm = ticket_like();
        assert!(is_valid_configuration(&fm, &fm.configuration(["T"])).unwrap());
        assert!(!is_valid_configuration(&fm, &fm.configuration(["A"])).unwrap());
    }

    #[test]
    fn domain_mismatch_is_an_error() {
        let fm = ticket_like();
        let mut cfg = fm.configuration(["T"]);
        cfg.valuation.remove("A");
        cfg.valuation.insert("Z".into(), true);
        assert_eq!(
            is_valid_configuration(&fm, &cfg),
            Err(FeatureModelError::DomainMismatch { missing: vec!["A".into()], extra: vec!["Z".into()] })
        );
    }

    #[test]
    fn completion_honours_requires_and_minimality() {
        let mut fm = ticket_like();
        fm.constraints.push(CrossTreeConstraint { kind: ConstraintKind::Requires, left: "C".into(), right: "B".into() });
        let req: BTreeSet<_> = ["C".to_string()].into();
        let cfg = complete_partial(&fm, &req, &BTreeSet::new()).unwrap();
        assert_eq!(cfg.label(), "B,C,T");
        let cfg = complete_partial(&fm, &BTreeSet::new(), &BTreeSet::new()).unwrap();
        assert_eq!(cfg.label(), "T");
        let forb: BTreeSet<_> = ["B".to_string()].into();
        assert!(matches!(complete_partial(&fm, &req, &forb), Err(FeatureModelError::Unsatisfiable { .. })));
        assert!(matches!(complete_partial(&fm, &req, &req), Err(FeatureModelError::Conflicting(_))));
    }

    #[test]
    fn completion_tie_break_prefers_smaller_ids() {
        let fm = model(
            "R",
            vec![feature("R", vec![ChildSlot::Or(vec!["B".into(), "A".into()])]), feature("A", vec![]), feature("B", vec![])],
            vec![],
        );
        assert_eq!(complete_partial(&fm, &BTreeSet::new(), &BTreeSet::new()).unwrap().label(), "A,R");
    }

    #[test]
    fn root_only_model_completes_to_root() {
        let fm = model("R", vec![feature("R", vec![])], vec![]);
        let cfg = complete_partial(&fm, &BTreeSet::new(), &BTreeSet::new()).unwrap();
        assert_eq!(cfg.valuation, [("R".to_string(), true)].into());
    }
}
