//! Deterministic run-to-completion interpreter.
//!
//! A stimulus is dispatched to every region in model order; each region fires
//! at most one enabled triggered transition out of its active state. Enabled
//! triggerless transitions are then fired one micro-step at a time until none
//! remains, scanning regions in model order and restarting after each firing.
//! More than one enabled transition out of the same active state is a fault.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{self, Action, AssignOp, EvalError, Store, Value};
use crate::statechart::{StateKind, StateMachine, Transition};

/// Default micro-step allowance per stimulus.
pub const DEFAULT_STEP_BUDGET: u32 = 1_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Stimulus {
    pub signal: String,
    pub payload: Option<i64>,
}

impl Stimulus {
    pub fn new(signal: &str) -> Self {
        Stimulus { signal: signal.to_string(), payload: None }
    }

    pub fn with_payload(signal: &str, payload: i64) -> Self {
        Stimulus { signal: signal.to_string(), payload: Some(payload) }
    }

    pub fn parse(src: &str) -> Result<Self, expr::ParseError> {
        let (signal, payload) = expr::parse_stimulus(src)?;
        Ok(Stimulus { signal, payload })
    }
}

impl fmt::Display for Stimulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.payload {
            Some(p) => write!(f, "{}({p})", self.signal),
            None => f.write_str(&self.signal),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Emission {
    pub signal: String,
    pub args: Vec<i64>,
}

impl Emission {
    pub fn new(signal: &str, args: &[i64]) -> Self {
        Emission { signal: signal.to_string(), args: args.to_vec() }
    }

    pub fn parse(src: &str) -> Result<Self, expr::ParseError> {
        let (signal, args) = expr::parse_emission(src)?;
        Ok(Emission { signal, args })
    }
}

impl fmt::Display for Emission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.signal)?;
        if !self.args.is_empty() {
            let args: Vec<_> = self.args.iter().map(|a| a.to_string()).collect();
            write!(f, "({})", args.join(", "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[serde(tag = "fault", rename_all = "kebab-case")]
pub enum RuntimeFault {
    #[error("non-determinism in region `{region}`: {transitions:?} enabled in state `{state}`")]
    NonDeterminism { region: String, state: String, transitions: Vec<String> },
    #[error("livelock: step budget of {budget} micro-steps exhausted")]
    LivelockDetected { budget: u32 },
    #[error("division by zero in transition `{transition}`")]
    DivisionByZero { transition: String },
    #[error("no enabled transition leaves pseudo-state `{state}` in region `{region}`")]
    DeadEndPseudoState { region: String, state: String },
    #[error("signal `{0}` is not an input of the machine")]
    UnknownSignal(String),
    #[error("evaluation error in transition `{transition}`: {message}")]
    Evaluation { transition: String, message: String },
    /// A resolver refused every way of continuing the step.
    #[error("step rejected by resolver")]
    Rejected,
}

impl RuntimeFault {
    pub fn short_name(&self) -> &'static str {
        match self {
            RuntimeFault::NonDeterminism { .. } => "non-determinism",
            RuntimeFault::LivelockDetected { .. } => "livelock",
            RuntimeFault::DivisionByZero { .. } => "division-by-zero",
            RuntimeFault::DeadEndPseudoState { .. } => "dead-end-pseudo-state",
            RuntimeFault::UnknownSignal(_) => "unknown-signal",
            RuntimeFault::Evaluation { .. } => "evaluation",
            RuntimeFault::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RuntimeState {
    /// Region id to active state id.
    pub active: BTreeMap<String, String>,
    pub store: Store,
    /// Micro-steps allowed per stimulus.
    pub step_budget: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepOutcome {
    pub state: RuntimeState,
    pub emissions: Vec<Emission>,
    /// Transition ids in firing order.
    pub fired: Vec<String>,
}

/// Picks which of several enabled transitions fires in one region.
///
/// `enabled` is never empty. Returning `Ok(None)` leaves the region idle.
pub trait Resolver {
    fn resolve(&mut self, region: &str, state: &str, enabled: &[&Transition]) -> Result<Option<usize>, RuntimeFault>;
}

/// Fires a lone enabled transition and faults on anything more.
pub struct Strict;

impl Resolver for Strict {
    fn resolve(&mut self, region: &str, state: &str, enabled: &[&Transition]) -> Result<Option<usize>, RuntimeFault> {
        if enabled.len() == 1 {
            Ok(Some(0))
        } else {
            Err(RuntimeFault::NonDeterminism {
                region: region.to_string(),
                state: state.to_string(),
                transitions: enabled.iter().map(|t| t.id.clone()).collect(),
            })
        }
    }
}

/// An interpreter bound to one machine, with per-state outgoing indices.
pub struct Interpreter<'m> {
    machine: &'m StateMachine,
    outgoing: HashMap<&'m str, Vec<&'m Transition>>,
    kinds: HashMap<&'m str, StateKind>,
}

impl<'m> Interpreter<'m> {
    pub fn new(machine: &'m StateMachine) -> Self {
        let mut outgoing: HashMap<&str, Vec<&Transition>> = HashMap::new();
        let mut kinds = HashMap::new();
        for r in &machine.regions {
            for s in &r.states {
                kinds.insert(s.id.as_str(), s.kind);
                outgoing.entry(s.id.as_str()).or_default();
            }
            for t in &r.transitions {
                outgoing.entry(t.source.as_str()).or_default().push(t);
            }
        }
        Interpreter { machine, outgoing, kinds }
    }

    pub fn machine(&self) -> &'m StateMachine {
        self.machine
    }

    /// Enters every region's initial pseudo-state and runs to completion.
    pub fn initialize(&self, step_budget: u32) -> Result<StepOutcome, RuntimeFault> {
        self.initialize_with(step_budget, &mut Strict)
    }

    pub fn initialize_with(&self, step_budget: u32, resolver: &mut dyn Resolver) -> Result<StepOutcome, RuntimeFault> {
        let mut active = BTreeMap::new();
        for r in &self.machine.regions {
            let init = r.initial_state().unwrap_or(&r.states[0]);
            active.insert(r.id.clone(), init.id.clone());
        }
        let mut rt = RuntimeState { active, store: self.machine.initial_store(), step_budget };
        let mut emissions = Vec::new();
        let mut fired = Vec::new();
        self.complete(&mut rt, &mut emissions, &mut fired, resolver)?;
        Ok(StepOutcome { state: rt, emissions, fired })
    }

    pub fn step(&self, rt: &RuntimeState, stimulus: &Stimulus) -> Result<StepOutcome, RuntimeFault> {
        self.step_with(rt, stimulus, &mut Strict)
    }

    pub fn step_with(
        &self,
        rt: &RuntimeState,
        stimulus: &Stimulus,
        resolver: &mut dyn Resolver,
    ) -> Result<StepOutcome, RuntimeFault> {
        if !self.machine.signals_in.contains(&stimulus.signal) {
            return Err(RuntimeFault::UnknownSignal(stimulus.signal.clone()));
        }
        let mut rt = rt.clone();
        let mut emissions = Vec::new();
        let mut fired = Vec::new();

        for region in &self.machine.regions {
            let state = rt.active[&region.id].clone();
            let mut enabled = Vec::new();
            for t in self.outgoing_of(&state) {
                let Some(trig) = t.triggers.iter().find(|tr| tr.signal == stimulus.signal) else {
                    continue;
                };
                let mut scope = rt.store.clone();
                if let Some(var) = &trig.binding {
                    scope.set(var, Value::Int(stimulus.payload.unwrap_or(0)));
                }
                if self.guard_holds(t, &scope)? {
                    enabled.push((t, scope));
                }
            }
            if enabled.is_empty() {
                continue;
            }
            let candidates: Vec<&Transition> = enabled.iter().map(|(t, _)| *t as &Transition).collect();
            let Some(pick) = resolver.resolve(&region.id, &state, &candidates)? else {
                continue;
            };
            let (t, scope) = enabled.swap_remove(pick);
            rt.store = scope;
            self.fire(t, &region.id, &mut rt, &mut emissions, &mut fired)?;
        }

        self.complete(&mut rt, &mut emissions, &mut fired, resolver)?;
        Ok(StepOutcome { state: rt, emissions, fired })
    }

    fn outgoing_of(&self, state: &str) -> &[&'m Transition] {
        self.outgoing.get(state).map(Vec::as_slice).unwrap_or(&[])
    }

    fn guard_holds(&self, t: &Transition, store: &Store) -> Result<bool, RuntimeFault> {
        match &t.guard {
            None => Ok(true),
            Some(g) => match expr::eval(g, store) {
                Ok(Value::Bool(b)) => Ok(b),
                Ok(v) => Err(RuntimeFault::Evaluation {
                    transition: t.id.clone(),
                    message: format!("guard evaluated to non-boolean {v}"),
                }),
                Err(e) => Err(eval_fault(t, e)),
            },
        }
    }

    fn fire(
        &self,
        t: &Transition,
        region: &str,
        rt: &mut RuntimeState,
        emissions: &mut Vec<Emission>,
        fired: &mut Vec<String>,
    ) -> Result<(), RuntimeFault> {
        for action in &t.effect {
            match action {
                Action::Assign { var, op, value } => {
                    let rhs = expr::eval(value, &rt.store).map_err(|e| eval_fault(t, e))?;
                    let new = match op.base() {
                        None => rhs,
                        Some(bin) => {
                            let cur = rt.store.get(var).and_then(Value::as_int);
                            let (Some(a), Some(b)) = (cur, rhs.as_int()) else {
                                return Err(eval_fault(t, EvalError::TypeMismatch(op.symbol())));
                            };
                            Value::Int(expr::int_op(bin, a, b).map_err(|e| eval_fault(t, e))?)
                        }
                    };
                    debug_assert!(*op == AssignOp::Set || new.ty() == expr::Type::Int);
                    rt.store.set(var, new);
                }
                Action::Emit { signal, args } => {
                    let mut vals = Vec::with_capacity(args.len());
                    for a in args {
                        match expr::eval(a, &rt.store).map_err(|e| eval_fault(t, e))? {
                            Value::Int(v) => vals.push(v),
                            v => {
                                return Err(RuntimeFault::Evaluation {
                                    transition: t.id.clone(),
                                    message: format!("emit argument evaluated to non-integer {v}"),
                                })
                            }
                        }
                    }
                    emissions.push(Emission { signal: signal.clone(), args: vals });
                }
            }
        }
        rt.active.insert(region.to_string(), t.target.clone());
        fired.push(t.id.clone());
        Ok(())
    }

    fn complete(
        &self,
        rt: &mut RuntimeState,
        emissions: &mut Vec<Emission>,
        fired: &mut Vec<String>,
        resolver: &mut dyn Resolver,
    ) -> Result<(), RuntimeFault> {
        let mut budget = rt.step_budget;
        'rounds: loop {
            for region in &self.machine.regions {
                let state = rt.active[&region.id].clone();
                let mut enabled = Vec::new();
                for t in self.outgoing_of(&state) {
                    if t.triggers.is_empty() && self.guard_holds(t, &rt.store)? {
                        enabled.push(*t);
                    }
                }
                let pseudo = self.kinds.get(state.as_str()).is_some_and(|k| k.is_pseudo());
                let pick = if enabled.is_empty() {
                    None
                } else {
                    resolver.resolve(&region.id, &state, &enabled)?
                };
                match pick {
                    Some(i) => {
                        if budget == 0 {
                            return Err(RuntimeFault::LivelockDetected { budget: rt.step_budget });
                        }
                        budget -= 1;
                        self.fire(enabled[i], &region.id, rt, emissions, fired)?;
                        continue 'rounds;
                    }
                    None if pseudo => {
                        return Err(RuntimeFault::DeadEndPseudoState {
                            region: region.id.clone(),
                            state,
                        })
                    }
                    None => {}
                }
            }
            return Ok(());
        }
    }
}

fn eval_fault(t: &Transition, e: EvalError) -> RuntimeFault {
    match e {
        EvalError::DivisionByZero => RuntimeFault::DivisionByZero { transition: t.id.clone() },
        other => RuntimeFault::Evaluation { transition: t.id.clone(), message: other.to_string() },
    }
}
