//! TOML file formats for specification bundles and test suites.
//!
//! A bundle holds the feature model, the mapping and the 150% machine.
//! Expressions, triggers, effects and stimuli are written in their textual
//! syntax (`"credit >= price"`, `"Insert(amount)"`, `"emit Change(credit)"`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::expr::{self, Action, Expr, Type, Value};
use crate::feature_model::{ChildSlot, ConstraintKind, CrossTreeConstraint, Feature, FeatureModel};
use crate::interp::{Emission, Stimulus};
use crate::mapping::{Mapping, SplSpecification};
use crate::statechart::{Region, StateKind, StateMachine, StateNode, Transition, Trigger, VariableDecl};
use crate::testing::{TestCase, TestStep};

pub const BUNDLE_FORMAT: &str = "splmut/1";
pub const TESTS_FORMAT: &str = "splmut-tests/1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for BundleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for BundleError {}

/// Expected tallies recorded alongside a fixture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variants: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestGenSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Payload values tried per input signal.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub payloads: BTreeMap<String, Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bundle {
    pub name: String,
    pub description: String,
    pub spec: SplSpecification,
    pub metadata: Metadata,
    pub testgen: TestGenSettings,
    /// Embedded test suite, possibly empty.
    pub tests: Vec<TestCase>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BundleDto {
    format: String,
    name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    description: String,
    features: FeaturesDto,
    #[serde(default)]
    mappings: Vec<MappingDto>,
    machine: MachineDto,
    #[serde(default, skip_serializing_if = "is_default")]
    metadata: Metadata,
    #[serde(default, skip_serializing_if = "is_default")]
    testgen: TestGenSettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    test: Vec<TestDto>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeaturesDto {
    root: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    constraints: Vec<String>,
    feature: Vec<FeatureDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureDto {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    children: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingDto {
    id: String,
    feature: String,
    #[serde(default = "yes")]
    value: bool,
    elements: Vec<String>,
}

fn yes() -> bool {
    true
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MachineDto {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    variables: Vec<String>,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    outputs: Vec<String>,
    region: Vec<RegionDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionDto {
    id: String,
    states: Vec<String>,
    transitions: Vec<TransitionDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionDto {
    id: String,
    from: String,
    to: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    on: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    guard: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    effect: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestsDto {
    format: String,
    #[serde(default)]
    test: Vec<TestDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestDto {
    id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    requires: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    forbids: Vec<String>,
    steps: Vec<StepDto>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StepDto {
    send: String,
    #[serde(default)]
    expect: Vec<String>,
}

/// Resolves semantic errors to a position by finding the offending string
/// literal in the source.
struct Locator<'a> {
    src: &'a str,
}

impl Locator<'_> {
    fn at_offset(&self, offset: usize) -> (usize, usize) {
        let before = &self.src[..offset.min(self.src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }

    fn error(&self, text: &str, inner_col: usize, message: String) -> BundleError {
        let quoted = format!("\"{text}\"");
        let (line, column) = match self.src.find(&quoted) {
            Some(off) => {
                let (l, c) = self.at_offset(off);
                (l, c + inner_col)
            }
            None => (1, 1),
        };
        BundleError { line, column, message }
    }

    fn parse_err(&self, what: &str, text: &str, e: expr::ParseError) -> BundleError {
        self.error(text, e.column, format!("{what} `{text}`: {}", e.message))
    }

    fn toml(&self, e: toml::de::Error) -> BundleError {
        let (line, column) = e.span().map_or((1, 1), |s| self.at_offset(s.start));
        BundleError { line, column, message: e.message().to_string() }
    }
}

pub fn parse_bundle(src: &str) -> Result<Bundle, BundleError> {
    let loc = Locator { src };
    let dto: BundleDto = toml::from_str(src).map_err(|e| loc.toml(e))?;
    if dto.format != BUNDLE_FORMAT {
        return Err(loc.error(&dto.format, 1, format!("unsupported format `{}` (expected `{BUNDLE_FORMAT}`)", dto.format)));
    }
    let feature_model = features_from(&dto.features, &loc)?;
    let mappings = dto
        .mappings
        .into_iter()
        .map(|m| Mapping { id: m.id, feature: m.feature, feature_value: m.value, elements: m.elements })
        .collect();
    let machine = machine_from(&dto.machine, &loc)?;
    let tests = dto.test.iter().map(|t| test_from(t, &loc)).collect::<Result<_, _>>()?;
    Ok(Bundle {
        name: dto.name,
        description: dto.description,
        spec: SplSpecification { feature_model, mappings, machine },
        metadata: dto.metadata,
        testgen: dto.testgen,
        tests,
    })
}

pub fn load_bundle(path: &Path) -> Result<Bundle, BundleError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| BundleError { line: 0, column: 0, message: format!("{}: {e}", path.display()) })?;
    parse_bundle(&src)
}

fn features_from(dto: &FeaturesDto, loc: &Locator) -> Result<FeatureModel, BundleError> {
    let mut features: BTreeMap<String, Feature> = BTreeMap::new();
    let mut mentioned = Vec::new();
    for f in &dto.feature {
        let mut children = Vec::new();
        for c in &f.children {
            let slot = parse_slot(c).ok_or_else(|| loc.error(c, 1, format!("malformed child slot `{c}`")))?;
            mentioned.extend(slot.members().iter().cloned());
            children.push(slot);
        }
        let feature = Feature { id: f.id.clone(), name: f.name.clone().unwrap_or_else(|| f.id.clone()), children };
        if features.insert(f.id.clone(), feature).is_some() {
            return Err(loc.error(&f.id, 1, format!("feature `{}` declared twice", f.id)));
        }
    }
    for id in mentioned {
        features.entry(id.clone()).or_insert_with(|| Feature { name: id.clone(), id, children: vec![] });
    }
    let constraints = dto
        .constraints
        .iter()
        .map(|c| parse_constraint(c).ok_or_else(|| loc.error(c, 1, format!("malformed constraint `{c}`"))))
        .collect::<Result<_, _>>()?;
    Ok(FeatureModel { root: dto.root.clone(), features, constraints })
}

fn parse_slot(s: &str) -> Option<ChildSlot> {
    let s = s.trim();
    let group = |prefix: &str| {
        let inner = s.strip_prefix(prefix)?.trim_start().strip_prefix('(')?.strip_suffix(')')?;
        let members: Vec<String> = inner.split(',').map(|m| m.trim().to_string()).collect();
        members.iter().all(|m| is_ident(m)).then_some(members)
    };
    if let Some(m) = group("or") {
        return Some(ChildSlot::Or(m));
    }
    if let Some(m) = group("alt") {
        return Some(ChildSlot::Alternative(m));
    }
    if let Some(id) = s.strip_suffix('?') {
        let id = id.trim();
        return is_ident(id).then(|| ChildSlot::Optional(id.to_string()));
    }
    is_ident(s).then(|| ChildSlot::Mandatory(s.to_string()))
}

fn slot_text(slot: &ChildSlot) -> String {
    match slot {
        ChildSlot::Mandatory(f) => f.clone(),
        ChildSlot::Optional(f) => format!("{f}?"),
        ChildSlot::Or(m) => format!("or({})", m.join(", ")),
        ChildSlot::Alternative(m) => format!("alt({})", m.join(", ")),
    }
}

fn parse_constraint(s: &str) -> Option<CrossTreeConstraint> {
    let parts: Vec<&str> = s.split_whitespace().collect();
    let [left, kw, right] = parts[..] else { return None };
    let kind = match kw {
        "requires" => ConstraintKind::Requires,
        "excludes" => ConstraintKind::Excludes,
        _ => return None,
    };
    (is_ident(left) && is_ident(right)).then(|| CrossTreeConstraint { kind, left: left.into(), right: right.into() })
}

fn is_ident(s: &str) -> bool {
    let mut cs = s.chars();
    cs.next().is_some_and(|c| c.is_alphabetic() || c == '_') && cs.all(|c| c.is_alphanumeric() || c == '_')
}

fn machine_from(dto: &MachineDto, loc: &Locator) -> Result<StateMachine, BundleError> {
    let variables = dto.variables.iter().map(|v| parse_variable(v, loc)).collect::<Result<_, _>>()?;
    let mut regions = Vec::new();
    for r in &dto.region {
        let mut states = Vec::new();
        for s in &r.states {
            states.push(parse_state(s).ok_or_else(|| loc.error(s, 1, format!("malformed state `{s}`")))?);
        }
        let mut transitions = Vec::new();
        for t in &r.transitions {
            let mut triggers = Vec::new();
            for trig in &t.on {
                let (signal, binding) = expr::parse_trigger(trig).map_err(|e| loc.parse_err("trigger", trig, e))?;
                triggers.push(Trigger { signal, binding });
            }
            let guard = match &t.guard {
                Some(g) => Some(Expr::parse(g).map_err(|e| loc.parse_err("guard", g, e))?),
                None => None,
            };
            let effect = t
                .effect
                .iter()
                .map(|a| Action::parse(a).map_err(|e| loc.parse_err("effect", a, e)))
                .collect::<Result<_, _>>()?;
            transitions.push(Transition { id: t.id.clone(), source: t.from.clone(), target: t.to.clone(), triggers, guard, effect });
        }
        regions.push(Region { id: r.id.clone(), states, transitions });
    }
    Ok(StateMachine {
        variables,
        regions,
        signals_in: dto.inputs.iter().cloned().collect(),
        signals_out: dto.outputs.iter().cloned().collect(),
    })
}

fn parse_state(s: &str) -> Option<StateNode> {
    let (id, kind) = match s.split_once(':') {
        Some((id, kw)) => {
            let kind = match kw.trim() {
                "initial" => StateKind::Initial,
                "simple" => StateKind::Simple,
                "choice" => StateKind::Choice,
                "junction" => StateKind::Junction,
                _ => return None,
            };
            (id.trim(), kind)
        }
        None => (s.trim(), StateKind::Simple),
    };
    is_ident(id).then(|| StateNode { id: id.to_string(), kind })
}

fn state_text(s: &StateNode) -> String {
    match s.kind {
        StateKind::Simple => s.id.clone(),
        k => format!("{}: {}", s.id, k.keyword()),
    }
}

/// `name: int = 3`, `flag: bool`, `peer: ref = null`.
fn parse_variable(s: &str, loc: &Locator) -> Result<VariableDecl, BundleError> {
    let bad = || loc.error(s, 1, format!("malformed variable declaration `{s}`"));
    let (name, rest) = s.split_once(':').ok_or_else(bad)?;
    let (ty, init) = match rest.split_once('=') {
        Some((t, i)) => (t.trim(), Some(i.trim())),
        None => (rest.trim(), None),
    };
    let ty = match ty {
        "int" => Type::Int,
        "bool" => Type::Bool,
        "ref" => Type::Ref,
        _ => return Err(bad()),
    };
    let initial = match init {
        None => match ty {
            Type::Int => Value::Int(0),
            Type::Bool => Value::Bool(false),
            Type::Ref => Value::Ref(true),
        },
        Some(text) => {
            let v = match Expr::parse(text).map_err(|e| loc.parse_err("initial value", text, e))? {
                Expr::Int(v) => Value::Int(v),
                Expr::Bool(b) => Value::Bool(b),
                Expr::Null => Value::Ref(true),
                Expr::This => Value::Ref(false),
                _ => return Err(loc.error(s, 1, format!("initial value of `{}` must be a literal", name.trim()))),
            };
            if v.ty() != ty {
                return Err(loc.error(s, 1, format!("initial value of `{}` has the wrong type", name.trim())));
            }
            v
        }
    };
    let name = name.trim();
    if !is_ident(name) {
        return Err(bad());
    }
    Ok(VariableDecl { name: name.to_string(), ty, initial })
}

fn type_text(t: Type) -> &'static str {
    match t {
        Type::Int => "int",
        Type::Bool => "bool",
        Type::Ref => "ref",
    }
}

fn test_from(t: &TestDto, loc: &Locator) -> Result<TestCase, BundleError> {
    let mut steps = Vec::new();
    for s in &t.steps {
        let stimulus = Stimulus::parse(&s.send).map_err(|e| loc.parse_err("stimulus", &s.send, e))?;
        let expected = s
            .expect
            .iter()
            .map(|e| Emission::parse(e).map_err(|err| loc.parse_err("emission", e, err)))
            .collect::<Result<_, _>>()?;
        steps.push(TestStep { stimulus, expected });
    }
    Ok(TestCase {
        id: t.id.clone(),
        required: t.requires.iter().cloned().collect(),
        forbidden: t.forbids.iter().cloned().collect(),
        steps,
    })
}

fn test_to(t: &TestCase) -> TestDto {
    TestDto {
        id: t.id.clone(),
        requires: t.required.iter().cloned().collect(),
        forbids: t.forbidden.iter().cloned().collect(),
        steps: t
            .steps
            .iter()
            .map(|s| StepDto { send: s.stimulus.to_string(), expect: s.expected.iter().map(|e| e.to_string()).collect() })
            .collect(),
    }
}

pub fn write_bundle(b: &Bundle) -> String {
    let fm = &b.spec.feature_model;
    let mentioned: BTreeSet<&str> =
        fm.features.values().flat_map(|f| f.children.iter().flat_map(|c| c.members())).map(|s| s.as_str()).collect();
    let mut feature: Vec<FeatureDto> = Vec::new();
    let mut push = |f: &Feature| {
        feature.push(FeatureDto {
            id: f.id.clone(),
            name: (f.name != f.id).then(|| f.name.clone()),
            children: f.children.iter().map(slot_text).collect(),
        })
    };
    if let Some(root) = fm.features.get(&fm.root) {
        push(root);
    }
    for f in fm.features.values() {
        let implicit = f.children.is_empty() && f.name == f.id && mentioned.contains(f.id.as_str());
        if f.id != fm.root && !implicit {
            push(f);
        }
    }
    let m = &b.spec.machine;
    let dto = BundleDto {
        format: BUNDLE_FORMAT.to_string(),
        name: b.name.clone(),
        description: b.description.clone(),
        features: FeaturesDto {
            root: fm.root.clone(),
            constraints: fm
                .constraints
                .iter()
                .map(|c| {
                    let kw = match c.kind {
                        ConstraintKind::Requires => "requires",
                        ConstraintKind::Excludes => "excludes",
                    };
                    format!("{} {kw} {}", c.left, c.right)
                })
                .collect(),
            feature,
        },
        mappings: b
            .spec
            .mappings
            .iter()
            .map(|m| MappingDto { id: m.id.clone(), feature: m.feature.clone(), value: m.feature_value, elements: m.elements.clone() })
            .collect(),
        machine: MachineDto {
            variables: m.variables.iter().map(|v| format!("{}: {} = {}", v.name, type_text(v.ty), v.initial)).collect(),
            inputs: m.signals_in.iter().cloned().collect(),
            outputs: m.signals_out.iter().cloned().collect(),
            region: m
                .regions
                .iter()
                .map(|r| RegionDto {
                    id: r.id.clone(),
                    states: r.states.iter().map(state_text).collect(),
                    transitions: r
                        .transitions
                        .iter()
                        .map(|t| TransitionDto {
                            id: t.id.clone(),
                            from: t.source.clone(),
                            to: t.target.clone(),
                            on: t.triggers.iter().map(|t| t.to_string()).collect(),
                            guard: t.guard.as_ref().map(|g| g.to_string()),
                            effect: t.effect.iter().map(|a| a.to_string()).collect(),
                        })
                        .collect(),
                })
                .collect(),
        },
        metadata: b.metadata.clone(),
        testgen: b.testgen.clone(),
        test: b.tests.iter().map(test_to).collect(),
    };
    toml::to_string(&dto).expect("bundle serializes")
}

pub fn parse_tests(src: &str) -> Result<Vec<TestCase>, BundleError> {
    let loc = Locator { src };
    let dto: TestsDto = toml::from_str(src).map_err(|e| loc.toml(e))?;
    if dto.format != TESTS_FORMAT {
        return Err(loc.error(&dto.format, 1, format!("unsupported format `{}` (expected `{TESTS_FORMAT}`)", dto.format)));
    }
    dto.test.iter().map(|t| test_from(t, &loc)).collect()
}

pub fn load_tests(path: &Path) -> Result<Vec<TestCase>, BundleError> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| BundleError { line: 0, column: 0, message: format!("{}: {e}", path.display()) })?;
    parse_tests(&src)
}

pub fn write_tests(tests: &[TestCase]) -> String {
    let dto = TestsDto { format: TESTS_FORMAT.to_string(), test: tests.iter().map(test_to).collect() };
    toml::to_string(&dto).expect("tests serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
format = "splmut/1"
name = "lamp"

[features]
root = "Lamp"
constraints = ["Dimmer excludes Eco"]
feature = [
  { id = "Lamp", children = ["Switch", "Dimmer?", "Eco?"] },
]

[[mappings]]
id = "m1"
feature = "Dimmer"
elements = ["dim"]

[machine]
variables = ["level: int = 0", "v: int"]
inputs = ["Press", "Turn"]
outputs = ["Light"]

[[machine.region]]
id = "Main"
states = ["init: initial", "Off", "On"]
transitions = [
  { id = "t0", from = "init", to = "Off" },
  { id = "on", from = "Off", to = "On", on = ["Press"], effect = ["level = 1", "emit Light(level)"] },
  { id = "off", from = "On", to = "Off", on = ["Press"], effect = ["emit Light(0)"] },
  { id = "dim", from = "On", to = "On", on = ["Turn(v)"], guard = "v > 0 && v <= 3", effect = ["level = v", "emit Light(level)"] },
]
"#;

    #[test]
    fn parses_small_bundle() {
        let b = parse_bundle(SMALL).unwrap();
        assert_eq!(b.spec.feature_model.features.len(), 4);
        assert_eq!(b.spec.machine.transitions().count(), 4);
        assert_eq!(b.spec.mappings[0].feature_value, true);
        assert!(crate::mapping::validate_spec(&b.spec).is_empty(), "{:?}", crate::mapping::validate_spec(&b.spec));
    }

    #[test]
    fn reports_positions() {
        let src = SMALL.replace("v > 0 && v <= 3", "v > > 0");
        let e = parse_bundle(&src).unwrap_err();
        let line = src.lines().position(|l| l.contains("v > > 0")).unwrap() + 1;
        assert_eq!(e.line, line);
        assert!(e.message.contains("guard"), "{e}");

        let e = parse_bundle("format = \"splmut/1\"\nname = 3\n").unwrap_err();
        assert_eq!(e.line, 2);

        let e = parse_bundle(&SMALL.replace("splmut/1", "splmut/9")).unwrap_err();
        assert!(e.message.contains("unsupported format"));
    }

    #[test]
    fn round_trips() {
        let b = parse_bundle(SMALL).unwrap();
        let text = write_bundle(&b);
        assert_eq!(parse_bundle(&text).unwrap(), b);
    }

    #[test]
    fn tests_file_round_trips() {
        let src = r#"
format = "splmut-tests/1"

[[test]]
id = "T01"
requires = ["Dimmer"]
steps = [
  { send = "Press", expect = ["Light(1)"] },
  { send = "Turn(-2)" },
]
"#;
        let tests = parse_tests(src).unwrap();
        assert_eq!(tests[0].steps[1].stimulus, Stimulus::with_payload("Turn", -2));
        assert_eq!(parse_tests(&write_tests(&tests)).unwrap(), tests);
    }
}
