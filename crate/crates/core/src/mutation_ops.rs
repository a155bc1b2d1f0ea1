//! First-order mutation operators over SPL specifications.
//!
//! Five operators target the feature mapping (negative-variability errors)
//! and seven target transitions of the 150% state machine. Each generator is
//! a pure function of the input specification; mutants carry a mutated copy.
//!
//! Error taxonomy (documentation only, not executable operators): besides the
//! negative-variability errors implemented here, positive-variability
//! composition (missing, superfluous or wrongly ordered modules, wrong
//! feature-to-module assignment) and delta-modeling errors (wrong delta
//! operations, application conditions and ordering) can be made when a
//! product line is specified. Inserting a superfluous mapping is also left
//! out, since there is no principled way to choose what such a mapping maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{AssignOp, BinOp, Expr};
use crate::mapping::SplSpecification;
use crate::statechart::StateKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Operator {
    Dmp,
    Dme,
    Ime,
    Swp,
    Cfv,
    Dtr,
    Ctt,
    Def,
    Dti,
    Itg,
    Dgd,
    Cgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Mapping,
    Statechart,
}

/// Effect of an error class on the behaviour of affected products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorType {
    /// Extends behaviour.
    Add,
    /// Restricts behaviour.
    Omit,
    /// Extends some products and restricts others.
    Alter,
    /// Either, depending on the model.
    Mix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct OperatorDescriptor {
    pub code: Operator,
    pub layer: Layer,
    pub error_type: ErrorType,
}

impl Operator {
    pub const ALL: [Operator; 12] = [
        Operator::Dmp,
        Operator::Dme,
        Operator::Ime,
        Operator::Swp,
        Operator::Cfv,
        Operator::Dtr,
        Operator::Ctt,
        Operator::Def,
        Operator::Dti,
        Operator::Itg,
        Operator::Dgd,
        Operator::Cgd,
    ];

    pub const MAPPING: [Operator; 5] = [Operator::Dmp, Operator::Dme, Operator::Ime, Operator::Swp, Operator::Cfv];

    pub const STATECHART: [Operator; 7] =
        [Operator::Dtr, Operator::Ctt, Operator::Def, Operator::Dti, Operator::Itg, Operator::Dgd, Operator::Cgd];

    pub fn code(self) -> &'static str {
        match self {
            Operator::Dmp => "DMP",
            Operator::Dme => "DME",
            Operator::Ime => "IME",
            Operator::Swp => "SWP",
            Operator::Cfv => "CFV",
            Operator::Dtr => "DTR",
            Operator::Ctt => "CTT",
            Operator::Def => "DEF",
            Operator::Dti => "DTI",
            Operator::Itg => "ITG",
            Operator::Dgd => "DGD",
            Operator::Cgd => "CGD",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Operator::Dmp => "Delete Mapping",
            Operator::Dme => "Delete Mapped Element",
            Operator::Ime => "Insert Mapped Element",
            Operator::Swp => "Swap Feature",
            Operator::Cfv => "Change Feature Value",
            Operator::Dtr => "Delete Transition",
            Operator::Ctt => "Change Transition Target",
            Operator::Def => "Delete Effect",
            Operator::Dti => "Delete Trigger",
            Operator::Itg => "Insert Trigger",
            Operator::Dgd => "Delete Guard",
            Operator::Cgd => "Change Guard",
        }
    }

    pub fn descriptor(self) -> OperatorDescriptor {
        let (layer, error_type) = match self {
            Operator::Dmp | Operator::Dme => (Layer::Mapping, ErrorType::Add),
            Operator::Ime => (Layer::Mapping, ErrorType::Omit),
            Operator::Swp | Operator::Cfv => (Layer::Mapping, ErrorType::Alter),
            _ => (Layer::Statechart, ErrorType::Mix),
        };
        OperatorDescriptor { code: self, layer, error_type }
    }

    pub fn layer(self) -> Layer {
        self.descriptor().layer
    }

    /// Parses a comma separated list such as `DMP,cfv`. An empty string
    /// yields an empty list; `all`, `mapping` and `statechart` expand.
    pub fn parse_list(s: &str) -> Result<Vec<Operator>, UnknownOperator> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let expanded: Vec<Operator> = match part.to_ascii_lowercase().as_str() {
                "all" => Operator::ALL.to_vec(),
                "mapping" => Operator::MAPPING.to_vec(),
                "statechart" => Operator::STATECHART.to_vec(),
                _ => vec![part.parse()?],
            };
            for op in expanded {
                if !out.contains(&op) {
                    out.push(op);
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mutation operator `{0}`")]
pub struct UnknownOperator(pub String);

impl FromStr for Operator {
    type Err = UnknownOperator;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|op| op.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownOperator(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplMutant {
    /// `<CODE>-<nnn>`, numbered per operator in generation order.
    pub id: String,
    pub operator: Operator,
    /// Ids of the mappings, transitions or features touched.
    pub locus: Vec<String>,
    pub description: String,
    pub spec: SplSpecification,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenerateError {
    #[error("{operator} is not applicable: {reason}")]
    NotApplicable { operator: Operator, reason: String },
}

struct Sink {
    op: Operator,
    out: Vec<SplMutant>,
}

impl Sink {
    fn push(&mut self, locus: Vec<String>, description: String, spec: SplSpecification) {
        let id = format!("{}-{:03}", self.op.code(), self.out.len() + 1);
        self.out.push(SplMutant { id, operator: self.op, locus, description, spec });
    }
}

/// Applies one operator everywhere it is applicable.
pub fn generate(op: Operator, spec: &SplSpecification) -> Result<Vec<SplMutant>, GenerateError> {
    let mut sink = Sink { op, out: Vec::new() };
    match op {
        Operator::Dmp => gen_dmp(spec, &mut sink),
        Operator::Dme => gen_dme(spec, &mut sink),
        Operator::Ime => gen_ime(spec, &mut sink)?,
        Operator::Swp => gen_swp(spec, &mut sink)?,
        Operator::Cfv => gen_cfv(spec, &mut sink),
        Operator::Dtr => gen_dtr(spec, &mut sink),
        Operator::Ctt => gen_ctt(spec, &mut sink),
        Operator::Def => gen_def(spec, &mut sink),
        Operator::Dti => gen_dti(spec, &mut sink),
        Operator::Itg => gen_itg(spec, &mut sink),
        Operator::Dgd => gen_dgd(spec, &mut sink),
        Operator::Cgd => gen_cgd(spec, &mut sink),
    }
    Ok(sink.out)
}

fn gen_dmp(spec: &SplSpecification, sink: &mut Sink) {
    for (i, m) in spec.mappings.iter().enumerate() {
        let mut s = spec.clone();
        s.mappings.remove(i);
        sink.push(vec![m.id.clone()], format!("delete mapping {} ({}={})", m.id, m.feature, m.feature_value), s);
    }
}

fn gen_dme(spec: &SplSpecification, sink: &mut Sink) {
    for (i, m) in spec.mappings.iter().enumerate() {
        for (j, e) in m.elements.iter().enumerate() {
            let mut s = spec.clone();
            if m.elements.len() == 1 {
                s.mappings.remove(i);
            } else {
                s.mappings[i].elements.remove(j);
            }
            sink.push(vec![m.id.clone(), e.clone()], format!("delete element {e} from mapping {}", m.id), s);
        }
    }
}

fn gen_ime(spec: &SplSpecification, sink: &mut Sink) -> Result<(), GenerateError> {
    let n = spec.mappings.len();
    if n < 2 {
        return Err(GenerateError::NotApplicable {
            operator: Operator::Ime,
            reason: format!("needs at least two mappings, found {n}"),
        });
    }
    for (i, m) in spec.mappings.iter().enumerate() {
        let donor = &spec.mappings[(i + 1) % n];
        let Some(e) = donor.elements.first() else { continue };
        if m.elements.contains(e) {
            continue;
        }
        let mut s = spec.clone();
        s.mappings[i].elements.push(e.clone());
        sink.push(
            vec![m.id.clone(), e.clone()],
            format!("insert element {e} (from mapping {}) into mapping {}", donor.id, m.id),
            s,
        );
    }
    Ok(())
}

fn gen_swp(spec: &SplSpecification, sink: &mut Sink) -> Result<(), GenerateError> {
    let n = spec.mappings.len();
    if n < 2 {
        return Err(GenerateError::NotApplicable {
            operator: Operator::Swp,
            reason: format!("needs at least two mappings, found {n}"),
        });
    }
    let mut seen = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (&spec.mappings[i], &spec.mappings[j]);
        if a.feature == b.feature {
            continue;
        }
        let mut s = spec.clone();
        s.mappings[i].feature = b.feature.clone();
        s.mappings[j].feature = a.feature.clone();
        if !unique_feature_values(&s) || seen.contains(&s.mappings) {
            continue;
        }
        seen.push(s.mappings.clone());
        sink.push(
            vec![a.id.clone(), b.id.clone()],
            format!("swap features of mappings {} ({}) and {} ({})", a.id, a.feature, b.id, b.feature),
            s,
        );
    }
    Ok(())
}

fn unique_feature_values(spec: &SplSpecification) -> bool {
    let mut pairs = std::collections::HashSet::new();
    spec.mappings.iter().all(|m| pairs.insert((&m.feature, m.feature_value)))
}

fn gen_cfv(spec: &SplSpecification, sink: &mut Sink) {
    for (i, m) in spec.mappings.iter().enumerate() {
        let has_sibling = spec
            .mappings
            .iter()
            .any(|o| o.id != m.id && o.feature == m.feature && o.feature_value != m.feature_value);
        if has_sibling {
            continue;
        }
        let mut s = spec.clone();
        s.mappings[i].feature_value = !m.feature_value;
        sink.push(
            vec![m.id.clone()],
            format!("flip feature value of mapping {} ({}: {} -> {})", m.id, m.feature, m.feature_value, !m.feature_value),
            s,
        );
    }
}

fn gen_dtr(spec: &SplSpecification, sink: &mut Sink) {
    for (r, t) in spec.machine.mutable_transitions() {
        let source_kind = r.state_kind(&t.source);
        if matches!(source_kind, Some(StateKind::Choice | StateKind::Junction)) && r.outgoing(&t.source).count() <= 1 {
            continue;
        }
        let mut s = spec.clone();
        s.machine.remove_transition(&t.id);
        for m in &mut s.mappings {
            m.elements.retain(|e| e != &t.id);
        }
        s.mappings.retain(|m| !m.elements.is_empty());
        sink.push(vec![t.id.clone()], format!("delete transition {} {}", t.id, t.label()), s);
    }
}

fn gen_ctt(spec: &SplSpecification, sink: &mut Sink) {
    for (r, t) in spec.machine.mutable_transitions() {
        if r.simple_state_count() < 2 {
            continue;
        }
        let Some(pos) = r.states.iter().position(|s| s.id == t.target) else { continue };
        let n = r.states.len();
        let next = (1..n)
            .map(|k| &r.states[(pos + k) % n])
            .find(|s| !s.kind.is_pseudo())
            .expect("region has two simple states");
        let mut s = spec.clone();
        s.machine.transition_mut(&t.id).expect("transition exists").target = next.id.clone();
        sink.push(
            vec![t.id.clone(), next.id.clone()],
            format!("retarget transition {} from {} to {}", t.id, t.target, next.id),
            s,
        );
    }
}

fn gen_def(spec: &SplSpecification, sink: &mut Sink) {
    for (_, t) in spec.machine.mutable_transitions() {
        if t.effect.is_empty() {
            continue;
        }
        let mut s = spec.clone();
        s.machine.transition_mut(&t.id).expect("transition exists").effect.clear();
        sink.push(vec![t.id.clone()], format!("delete effect of transition {} {}", t.id, t.label()), s);
    }
}

fn gen_dti(spec: &SplSpecification, sink: &mut Sink) {
    for (_, t) in spec.machine.mutable_transitions() {
        for (k, trig) in t.triggers.iter().enumerate() {
            let mut s = spec.clone();
            s.machine.transition_mut(&t.id).expect("transition exists").triggers.remove(k);
            sink.push(vec![t.id.clone()], format!("delete trigger {trig} of transition {}", t.id), s);
        }
    }
}

fn gen_itg(spec: &SplSpecification, sink: &mut Sink) {
    for r in &spec.machine.regions {
        let triggered: Vec<usize> = (0..r.transitions.len())
            .filter(|&i| !r.transitions[i].triggers.is_empty() && !r.is_initial_transition(&r.transitions[i]))
            .collect();
        for (i, t) in r.transitions.iter().enumerate() {
            if r.is_initial_transition(t) || r.state_kind(&t.source).is_some_and(|k| k.is_pseudo()) {
                continue;
            }
            let n = r.transitions.len();
            let donor = (1..n).map(|k| (i + k) % n).find(|j| triggered.contains(j));
            let Some(d) = donor else { continue };
            let trig = &r.transitions[d].triggers[0];
            if t.triggers.iter().any(|x| x.signal == trig.signal) {
                continue;
            }
            let mut s = spec.clone();
            s.machine.transition_mut(&t.id).expect("transition exists").triggers.push(trig.clone());
            sink.push(
                vec![t.id.clone(), r.transitions[d].id.clone()],
                format!("copy trigger {trig} from transition {} to {}", r.transitions[d].id, t.id),
                s,
            );
        }
    }
}

fn gen_dgd(spec: &SplSpecification, sink: &mut Sink) {
    for (_, t) in spec.machine.mutable_transitions() {
        let Some(g) = &t.guard else { continue };
        let mut s = spec.clone();
        s.machine.transition_mut(&t.id).expect("transition exists").guard = None;
        sink.push(vec![t.id.clone()], format!("delete guard [{g}] of transition {}", t.id), s);
    }
}

fn gen_cgd(spec: &SplSpecification, sink: &mut Sink) {
    for (_, t) in spec.machine.mutable_transitions() {
        let Some(g) = &t.guard else { continue };
        for variant in guard_mutations(g) {
            let mut s = spec.clone();
            let desc = format!("change guard of transition {} from [{g}] to [{variant}]", t.id);
            s.machine.transition_mut(&t.id).expect("transition exists").guard = Some(variant);
            sink.push(vec![t.id.clone()], desc, s);
        }
    }
}

/// Replacement for a binary operator occurrence.
pub fn binop_counterpart(op: BinOp) -> BinOp {
    match op {
        BinOp::Add => BinOp::Sub,
        BinOp::Sub => BinOp::Add,
        BinOp::Mul => BinOp::Div,
        BinOp::Div => BinOp::Mul,
        BinOp::Rem => BinOp::Mul,
        BinOp::Lt => BinOp::Le,
        BinOp::Le => BinOp::Lt,
        BinOp::Gt => BinOp::Ge,
        BinOp::Ge => BinOp::Gt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        BinOp::And => BinOp::Or,
        BinOp::Or => BinOp::And,
        BinOp::BitAnd => BinOp::BitOr,
        BinOp::BitOr => BinOp::BitAnd,
        BinOp::BitXor => BinOp::BitAnd,
        BinOp::Shl => BinOp::Shr,
        BinOp::Shr => BinOp::Shl,
    }
}

/// Replacement for a compound assignment, following its base operator.
/// Plain `=` has none.
pub fn assignop_counterpart(op: AssignOp) -> Option<AssignOp> {
    let base = binop_counterpart(op.base()?);
    AssignOp::ALL.into_iter().find(|a| a.base() == Some(base))
}

/// Every single-point mutation of a guard, in pre-order of the mutated node:
/// operators replaced by their counterpart, unary operators dropped, boolean
/// literals inverted and `null` replaced by `this`.
pub fn guard_mutations(e: &Expr) -> Vec<Expr> {
    let mut out = Vec::new();
    mutate_into(e, &mut |x| x, &mut out);
    out
}

fn mutate_into(e: &Expr, wrap: &mut dyn FnMut(Expr) -> Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Bool(b) => out.push(wrap(Expr::Bool(!b))),
        Expr::Null => out.push(wrap(Expr::This)),
        Expr::Int(_) | Expr::This | Expr::Var(_) => {}
        Expr::Unary(op, inner) => {
            out.push(wrap((**inner).clone()));
            let op = *op;
            mutate_into(inner, &mut |x| wrap(Expr::unary(op, x)), out);
        }
        Expr::Binary(op, l, r) => {
            out.push(wrap(Expr::Binary(binop_counterpart(*op), l.clone(), r.clone())));
            let op = *op;
            mutate_into(l, &mut |x| wrap(Expr::Binary(op, Box::new(x), r.clone())), out);
            mutate_into(r, &mut |x| wrap(Expr::Binary(op, l.clone(), Box::new(x))), out);
        }
    }
}
