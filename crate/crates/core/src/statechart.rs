//! Flat state machines with orthogonal top-level regions.
//!
//! A machine holds typed variables, a list of regions and the sets of input
//! and output signals. Every region starts in its initial pseudo-state whose
//! single outgoing transition selects the first real state. Choice and
//! junction pseudo-states are left immediately through triggerless
//! transitions during run-to-completion.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use crate::diag::{DiagKind, Diagnostic};
use crate::expr::{self, Action, Expr, Type, TypeEnv, Value};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VariableDecl {
    pub name: String,
    pub ty: Type,
    pub initial: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StateKind {
    Initial,
    Simple,
    Choice,
    Junction,
}

impl StateKind {
    pub fn is_pseudo(self) -> bool {
        self != StateKind::Simple
    }

    pub fn keyword(self) -> &'static str {
        match self {
            StateKind::Initial => "initial",
            StateKind::Simple => "simple",
            StateKind::Choice => "choice",
            StateKind::Junction => "junction",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateNode {
    pub id: String,
    pub kind: StateKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Trigger {
    pub signal: String,
    /// Int variable receiving the stimulus payload when the transition fires.
    pub binding: Option<String>,
}

impl std::fmt::Display for Trigger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.binding {
            Some(b) => write!(f, "{}({b})", self.signal),
            None => f.write_str(&self.signal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Transition {
    pub id: String,
    pub source: String,
    pub target: String,
    pub triggers: Vec<Trigger>,
    pub guard: Option<Expr>,
    pub effect: Vec<Action>,
}

impl Transition {
    /// UML-style label `Trig1,Trig2[guard]/effect; effect`.
    pub fn label(&self) -> String {
        let mut s = self.triggers.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(",");
        s.push('[');
        if let Some(g) = &self.guard {
            s.push_str(&g.to_string());
        }
        s.push_str("]/");
        s.push_str(&self.effect.iter().map(|a| a.to_string()).collect::<Vec<_>>().join("; "));
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Region {
    pub id: String,
    pub states: Vec<StateNode>,
    pub transitions: Vec<Transition>,
}

impl Region {
    pub fn state(&self, id: &str) -> Option<&StateNode> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn state_kind(&self, id: &str) -> Option<StateKind> {
        self.state(id).map(|s| s.kind)
    }

    pub fn initial_state(&self) -> Option<&StateNode> {
        self.states.iter().find(|s| s.kind == StateKind::Initial)
    }

    /// Whether `t` leaves the initial pseudo-state. Such transitions are
    /// structural scaffolding and are neither mapped nor mutated.
    pub fn is_initial_transition(&self, t: &Transition) -> bool {
        self.state_kind(&t.source) == Some(StateKind::Initial)
    }

    pub fn outgoing<'a>(&'a self, state: &'a str) -> impl Iterator<Item = &'a Transition> + 'a {
        self.transitions.iter().filter(move |t| t.source == state)
    }

    pub fn simple_state_count(&self) -> usize {
        self.states.iter().filter(|s| !s.kind.is_pseudo()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct StateMachine {
    pub variables: Vec<VariableDecl>,
    pub regions: Vec<Region>,
    pub signals_in: BTreeSet<String>,
    pub signals_out: BTreeSet<String>,
}

impl StateMachine {
    pub fn type_env(&self) -> TypeEnv {
        self.variables.iter().map(|v| (v.name.clone(), v.ty)).collect()
    }

    pub fn initial_store(&self) -> expr::Store {
        self.variables.iter().map(|v| (v.name.clone(), v.initial)).collect()
    }

    /// All transitions in model order with their region.
    pub fn transitions(&self) -> impl Iterator<Item = (&Region, &Transition)> {
        self.regions.iter().flat_map(|r| r.transitions.iter().map(move |t| (r, t)))
    }

    /// Transitions that leave a real or choice/junction state, in model order.
    pub fn mutable_transitions(&self) -> impl Iterator<Item = (&Region, &Transition)> {
        self.transitions().filter(|(r, t)| !r.is_initial_transition(t))
    }

    pub fn transition(&self, id: &str) -> Option<&Transition> {
        self.transitions().map(|(_, t)| t).find(|t| t.id == id)
    }

    pub fn transition_mut(&mut self, id: &str) -> Option<&mut Transition> {
        self.regions.iter_mut().flat_map(|r| r.transitions.iter_mut()).find(|t| t.id == id)
    }

    pub fn region_of_transition(&self, id: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.transitions.iter().any(|t| t.id == id))
    }

    pub fn remove_transition(&mut self, id: &str) -> Option<Transition> {
        for r in &mut self.regions {
            if let Some(pos) = r.transitions.iter().position(|t| t.id == id) {
                return Some(r.transitions.remove(pos));
            }
        }
        None
    }

    pub fn is_initial_transition(&self, id: &str) -> bool {
        self.regions
            .iter()
            .any(|r| r.transitions.iter().any(|t| t.id == id && r.is_initial_transition(t)))
    }
}

/// Checks structural, referential and typing rules of a machine.
///
/// Returns an empty list iff the machine is well formed.
pub fn structural_validate(m: &StateMachine) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let env = m.type_env();

    let mut var_names = HashSet::new();
    for v in &m.variables {
        let loc = format!("variable {}", v.name);
        if !var_names.insert(&v.name) {
            out.push(Diagnostic::new(DiagKind::DuplicateId, &loc, "declared twice"));
        }
        if v.ty == Type::Ref {
            out.push(Diagnostic::new(DiagKind::Type, &loc, "variables must be int or bool"));
        } else if v.initial.ty() != v.ty {
            out.push(Diagnostic::new(
                DiagKind::Type,
                &loc,
                format!("initial value {} is not {}", v.initial, v.ty),
            ));
        }
    }

    let mut region_ids = HashSet::new();
    let mut state_ids: BTreeMap<&str, &str> = BTreeMap::new();
    let mut transition_ids = HashSet::new();
    for r in &m.regions {
        if !region_ids.insert(&r.id) {
            out.push(Diagnostic::new(DiagKind::DuplicateId, format!("region {}", r.id), "duplicate region id"));
        }
        for s in &r.states {
            if state_ids.insert(&s.id, &r.id).is_some() {
                out.push(Diagnostic::new(
                    DiagKind::DuplicateId,
                    format!("region {}/state {}", r.id, s.id),
                    "duplicate state id",
                ));
            }
        }
        for t in &r.transitions {
            if !transition_ids.insert(&t.id) {
                out.push(Diagnostic::new(
                    DiagKind::DuplicateId,
                    format!("region {}/transition {}", r.id, t.id),
                    "duplicate transition id",
                ));
            }
        }
    }

    for r in &m.regions {
        let rloc = format!("region {}", r.id);
        let initials: Vec<_> = r.states.iter().filter(|s| s.kind == StateKind::Initial).collect();
        if initials.len() != 1 {
            out.push(Diagnostic::new(
                DiagKind::PseudoState,
                &rloc,
                format!("expected exactly one initial pseudo-state, found {}", initials.len()),
            ));
        }
        if r.simple_state_count() == 0 {
            out.push(Diagnostic::new(DiagKind::Reference, &rloc, "region has no simple state"));
        }

        for t in &r.transitions {
            let tloc = format!("{rloc}/transition {}", t.id);
            for (end, id) in [("source", &t.source), ("target", &t.target)] {
                if r.state(id).is_none() {
                    let msg = match state_ids.get(id.as_str()) {
                        Some(other) => format!("{end} `{id}` belongs to region `{other}`"),
                        None => format!("{end} `{id}` does not exist"),
                    };
                    out.push(Diagnostic::new(DiagKind::Reference, &tloc, msg));
                }
            }
            if r.state_kind(&t.target) == Some(StateKind::Initial) {
                out.push(Diagnostic::new(DiagKind::PseudoState, &tloc, "initial pseudo-state cannot be a target"));
            }
            for trig in &t.triggers {
                if !m.signals_in.contains(&trig.signal) {
                    out.push(Diagnostic::new(
                        DiagKind::Reference,
                        &tloc,
                        format!("trigger signal `{}` is not an input signal", trig.signal),
                    ));
                }
                if let Some(b) = &trig.binding {
                    if env.get(b) != Some(&Type::Int) {
                        out.push(Diagnostic::new(
                            DiagKind::Type,
                            &tloc,
                            format!("payload binding `{b}` is not an int variable"),
                        ));
                    }
                }
            }
            let mut seen = HashSet::new();
            for trig in &t.triggers {
                if !seen.insert(&trig.signal) {
                    out.push(Diagnostic::new(
                        DiagKind::DuplicateId,
                        &tloc,
                        format!("trigger `{}` listed twice", trig.signal),
                    ));
                }
            }
            if let Some(g) = &t.guard {
                if let Err(e) = expr::check(g, &env, Type::Bool) {
                    out.push(Diagnostic::new(DiagKind::Type, &tloc, format!("guard: {e}")));
                }
            }
            for a in &t.effect {
                if let Err(e) = expr::check_action(a, &env) {
                    out.push(Diagnostic::new(DiagKind::Type, &tloc, format!("effect `{a}`: {e}")));
                }
                if let Action::Emit { signal, .. } = a {
                    if !m.signals_out.contains(signal) {
                        out.push(Diagnostic::new(
                            DiagKind::Reference,
                            &tloc,
                            format!("emitted signal `{signal}` is not an output signal"),
                        ));
                    }
                }
            }
        }

        for s in &r.states {
            if !s.kind.is_pseudo() {
                continue;
            }
            let sloc = format!("{rloc}/state {}", s.id);
            let outgoing: Vec<_> = r.outgoing(&s.id).collect();
            match s.kind {
                StateKind::Initial => {
                    if outgoing.len() != 1 {
                        out.push(Diagnostic::new(
                            DiagKind::PseudoState,
                            &sloc,
                            format!("initial pseudo-state needs exactly one outgoing transition, has {}", outgoing.len()),
                        ));
                    }
                    if outgoing.iter().any(|t| !t.triggers.is_empty() || t.guard.is_some()) {
                        out.push(Diagnostic::new(
                            DiagKind::PseudoState,
                            &sloc,
                            "initial transition must have neither trigger nor guard",
                        ));
                    }
                }
                _ => {
                    if outgoing.is_empty() {
                        out.push(Diagnostic::new(
                            DiagKind::PseudoState,
                            &sloc,
                            format!("{} has no outgoing transition", s.kind.keyword()),
                        ));
                    }
                    if outgoing.iter().any(|t| !t.triggers.is_empty()) {
                        out.push(Diagnostic::new(
                            DiagKind::PseudoState,
                            &sloc,
                            format!("{} outgoing transitions must be triggerless", s.kind.keyword()),
                        ));
                    }
                }
            }
        }
    }
    out
}
