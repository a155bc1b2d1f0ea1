//! Product selection, mutant materialization and test execution.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::feature_model::{self, Configuration, FeatureModel, FeatureModelError};
use crate::interp::{RuntimeFault, DEFAULT_STEP_BUDGET};
use crate::mapping::{self, ProductSpecification, SplSpecification};
use crate::mutation_ops::{self, Layer, Operator, SplMutant};
use crate::statechart;
use crate::testing::{self, TestCase, Verdict};

/// How invalid product mutants enter the score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InvalidPolicy {
    /// Left out of participation.
    #[default]
    Exclude,
    /// Treated as detected.
    CountAsKilled,
}

impl std::str::FromStr for InvalidPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exclude" => Ok(InvalidPolicy::Exclude),
            "count-as-killed" => Ok(InvalidPolicy::CountAsKilled),
            _ => Err(format!("unknown policy `{s}` (expected exclude or count-as-killed)")),
        }
    }
}

impl std::fmt::Display for InvalidPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InvalidPolicy::Exclude => "exclude",
            InvalidPolicy::CountAsKilled => "count-as-killed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub operators: Vec<Operator>,
    pub policy: InvalidPolicy,
    pub workers: usize,
    pub step_budget: u32,
    pub selection: Selection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            operators: Operator::ALL.to_vec(),
            policy: InvalidPolicy::Exclude,
            workers: 1,
            step_budget: DEFAULT_STEP_BUDGET,
            selection: Selection::FirstFit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// Tests in suite order join the first chosen product they apply to;
    /// otherwise their own completion becomes a new product.
    #[default]
    FirstFit,
    /// Repeatedly takes the completion satisfying the most unassigned tests.
    GreedyCover,
    /// Each test's own completion, duplicates merged.
    PerTest,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProductSelection {
    pub products: Vec<Configuration>,
    /// Test index to product index; tests no valid product satisfies are absent.
    pub assignment: BTreeMap<usize, usize>,
    pub unsatisfiable: Vec<String>,
}

impl ProductSelection {
    pub fn tests_of(&self, product: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment.iter().filter(move |(_, p)| **p == product).map(|(t, _)| *t)
    }
}

/// Chooses products for a test suite.
///
/// Candidates are the minimal completions of each test's feature
/// constraints. Greedy cover ties go to the smaller (then lexicographically
/// smaller) configuration.
pub fn select_products(tests: &[TestCase], fm: &FeatureModel, strategy: Selection) -> ProductSelection {
    let mut out = ProductSelection::default();
    let mut own: Vec<Option<Configuration>> = Vec::with_capacity(tests.len());
    for t in tests {
        match feature_model::complete_partial(fm, &t.required, &t.forbidden) {
            Ok(cfg) => own.push(Some(cfg)),
            Err(_) => {
                own.push(None);
                out.unsatisfiable.push(t.id.clone());
            }
        }
    }
    match strategy {
        Selection::FirstFit => {
            for (i, cfg) in own.into_iter().enumerate() {
                let Some(cfg) = cfg else { continue };
                let p = match out.products.iter().position(|c| tests[i].applies_to(c)) {
                    Some(p) => p,
                    None => {
                        out.products.push(cfg);
                        out.products.len() - 1
                    }
                };
                out.assignment.insert(i, p);
            }
        }
        Selection::PerTest => {
            for (i, cfg) in own.into_iter().enumerate() {
                let Some(cfg) = cfg else { continue };
                let p = match out.products.iter().position(|c| *c == cfg) {
                    Some(p) => p,
                    None => {
                        out.products.push(cfg);
                        out.products.len() - 1
                    }
                };
                out.assignment.insert(i, p);
            }
        }
        Selection::GreedyCover => {
            let mut candidates: Vec<Configuration> = own.iter().flatten().cloned().collect();
            candidates.sort_by(|a, b| completion_key(a).cmp(&completion_key(b)));
            candidates.dedup();
            let mut open: BTreeSet<usize> = (0..tests.len()).filter(|&i| own[i].is_some()).collect();
            while !open.is_empty() {
                let mut best: Option<(usize, usize)> = None;
                for (ci, c) in candidates.iter().enumerate() {
                    let n = open.iter().filter(|&&t| tests[t].applies_to(c)).count();
                    if best.map_or(true, |(_, m)| n > m) {
                        best = Some((ci, n));
                    }
                }
                let (ci, _) = best.expect("open tests have their own completion");
                let p = out.products.len();
                out.products.push(candidates[ci].clone());
                let covered: Vec<usize> = open.iter().copied().filter(|&t| tests[t].applies_to(&candidates[ci])).collect();
                for t in covered {
                    open.remove(&t);
                    out.assignment.insert(t, p);
                }
            }
        }
    }
    out
}

fn completion_key(c: &Configuration) -> (usize, Vec<&str>) {
    let sel: Vec<&str> = c.selected().collect();
    (sel.len(), sel)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum ProductStatus {
    /// Identical to the unmutated product.
    Equivalent,
    /// Structurally ill-formed or faulted while running a test.
    Invalid { reason: String },
    Killed { by: Vec<String> },
    Survived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProductMutant {
    /// `<spl mutant id>@P<n>`.
    pub id: String,
    pub product: String,
    pub status: ProductStatus,
    pub tests_run: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutantStatus {
    Killed,
    Survived,
    /// No product mutant differs from its original product.
    Equivalent,
    /// Every differing product mutant is invalid and the policy excludes them.
    Invalid,
}

/// Links a product line mutant to its product mutants and the tests that
/// detected it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceLink {
    pub mutant: String,
    pub operator: Operator,
    pub description: String,
    pub status: MutantStatus,
    pub products: Vec<ProductMutant>,
    pub killing_tests: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct OperatorRow {
    pub generated: usize,
    pub participating: usize,
    pub killed: usize,
    pub equivalent: usize,
    pub invalid: usize,
}

impl OperatorRow {
    pub fn score(&self) -> f64 {
        ratio(self.killed, self.participating)
    }

    fn add(&mut self, o: &OperatorRow) {
        self.generated += o.generated;
        self.participating += o.participating;
        self.killed += o.killed;
        self.equivalent += o.equivalent;
        self.invalid += o.invalid;
    }
}

pub fn ratio(k: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        k as f64 / n as f64
    }
}

/// Execution counts for one layer of operators.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LayerTally {
    pub spl_mutants: usize,
    /// Product mutants materialized, equivalent ones included.
    pub product_mutants: usize,
    pub equivalent_filtered: usize,
    pub invalid: usize,
    pub tests_executed: usize,
    pub failed_tests: usize,
}

impl LayerTally {
    fn add(&mut self, o: &LayerTally) {
        self.spl_mutants += o.spl_mutants;
        self.product_mutants += o.product_mutants;
        self.equivalent_filtered += o.equivalent_filtered;
        self.invalid += o.invalid;
        self.tests_executed += o.tests_executed;
        self.failed_tests += o.failed_tests;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureReport {
    pub name: String,
    pub policy: InvalidPolicy,
    pub tests: usize,
    pub test_steps: usize,
    pub products: Vec<String>,
    pub unsatisfiable_tests: Vec<String>,
    /// Tests failing on their own unmutated product.
    pub broken_tests: Vec<String>,
    pub operators: BTreeMap<Operator, OperatorRow>,
    pub not_applicable: BTreeMap<Operator, String>,
    pub layers: BTreeMap<Layer, LayerTally>,
    pub trace: Vec<TraceLink>,
}

impl FixtureReport {
    pub fn layer_row(&self, layer: Layer) -> OperatorRow {
        let mut r = OperatorRow::default();
        for (op, row) in &self.operators {
            if op.layer() == layer {
                r.add(row);
            }
        }
        r
    }

    pub fn total_row(&self) -> OperatorRow {
        let mut r = OperatorRow::default();
        self.operators.values().for_each(|row| r.add(row));
        r
    }
}

/// Reports for several fixtures with accumulated scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    pub fixtures: Vec<FixtureReport>,
}

impl ScoreReport {
    /// Per-operator rows summed over fixtures, so scores come from raw counts.
    pub fn accumulated(&self) -> BTreeMap<Operator, OperatorRow> {
        let mut out: BTreeMap<Operator, OperatorRow> = BTreeMap::new();
        for f in &self.fixtures {
            for (op, row) in &f.operators {
                out.entry(*op).or_default().add(row);
            }
        }
        out
    }

    pub fn accumulated_layer(&self, layer: Layer) -> OperatorRow {
        let mut r = OperatorRow::default();
        for f in &self.fixtures {
            r.add(&f.layer_row(layer));
        }
        r
    }

    pub fn accumulated_total(&self) -> OperatorRow {
        let mut r = OperatorRow::default();
        for f in &self.fixtures {
            r.add(&f.total_row());
        }
        r
    }

    pub fn accumulated_tally(&self, layer: Layer) -> LayerTally {
        let mut t = LayerTally::default();
        for f in &self.fixtures {
            if let Some(l) = f.layers.get(&layer) {
                t.add(l);
            }
        }
        t
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("specification is not well-formed:\n{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Diagnostics(Vec<crate::diag::Diagnostic>),
    #[error("feature model: {0}")]
    FeatureModel(#[from] FeatureModelError),
    #[error("thread pool: {0}")]
    Pool(String),
}

struct Original {
    product: ProductSpecification,
    canonical: Vec<u8>,
    /// Tests assigned here that pass on the unmutated product.
    tests: Vec<usize>,
}

/// Runs the whole mutation analysis for one specification and test suite.
pub fn run(name: &str, spec: &SplSpecification, tests: &[TestCase], rc: &RunConfig) -> Result<FixtureReport, PipelineError> {
    let diags = mapping::validate_spec(spec);
    if !diags.is_empty() {
        return Err(PipelineError::Diagnostics(diags));
    }
    let selection = select_products(tests, &spec.feature_model, rc.selection);
    let mut broken = Vec::new();
    let originals: Vec<Original> = selection
        .products
        .iter()
        .enumerate()
        .map(|(p, cfg)| {
            let product = mapping::materialize_unchecked(spec, cfg);
            let mut ok = Vec::new();
            for t in selection.tests_of(p) {
                if testing::execute(&tests[t], &product, rc.step_budget).is_pass() {
                    ok.push(t);
                } else {
                    broken.push(tests[t].id.clone());
                }
            }
            Original { canonical: mapping::canonicalize(&product), product, tests: ok }
        })
        .collect();
    broken.sort();

    let mut mutants: Vec<SplMutant> = Vec::new();
    let mut not_applicable = BTreeMap::new();
    let mut generated: BTreeMap<Operator, usize> = BTreeMap::new();
    for op in &rc.operators {
        match mutation_ops::generate(*op, spec) {
            Ok(ms) => {
                generated.insert(*op, ms.len());
                mutants.extend(ms);
            }
            Err(e) => {
                generated.insert(*op, 0);
                not_applicable.insert(*op, e.to_string());
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rc.workers.max(1))
        .build()
        .map_err(|e| PipelineError::Pool(e.to_string()))?;
    let jobs: Vec<(usize, usize)> =
        (0..mutants.len()).flat_map(|m| (0..originals.len()).map(move |p| (m, p))).collect();
    let results: Vec<ProductMutant> = pool.install(|| {
        jobs.par_iter()
            .map(|&(m, p)| analyse(&mutants[m], p, &originals[p], tests, rc.step_budget))
            .collect()
    });

    let mut operators: BTreeMap<Operator, OperatorRow> = BTreeMap::new();
    let mut layers: BTreeMap<Layer, LayerTally> = BTreeMap::new();
    for op in &rc.operators {
        operators.insert(*op, OperatorRow { generated: generated[op], ..Default::default() });
        layers.entry(op.layer()).or_default().spl_mutants += generated[op];
    }
    let mut trace = Vec::with_capacity(mutants.len());
    let mut results = results.into_iter();
    for m in &mutants {
        let products: Vec<ProductMutant> = results.by_ref().take(originals.len()).collect();
        let tally = layers.entry(m.operator.layer()).or_default();
        let mut killing: BTreeSet<String> = BTreeSet::new();
        let (mut killed, mut live, mut invalid) = (false, false, false);
        for pm in &products {
            tally.product_mutants += 1;
            tally.tests_executed += pm.tests_run;
            tally.failed_tests += pm.failed;
            match &pm.status {
                ProductStatus::Equivalent => tally.equivalent_filtered += 1,
                ProductStatus::Invalid { .. } => {
                    tally.invalid += 1;
                    invalid = true;
                    if rc.policy == InvalidPolicy::CountAsKilled {
                        killed = true;
                        live = true;
                    }
                }
                ProductStatus::Killed { by } => {
                    killed = true;
                    live = true;
                    killing.extend(by.iter().cloned());
                }
                ProductStatus::Survived => live = true,
            }
        }
        let status = match (live, killed, invalid) {
            (true, true, _) => MutantStatus::Killed,
            (true, false, _) => MutantStatus::Survived,
            (false, _, true) => MutantStatus::Invalid,
            (false, _, false) => MutantStatus::Equivalent,
        };
        let row = operators.get_mut(&m.operator).expect("row per operator");
        match status {
            MutantStatus::Killed => {
                row.participating += 1;
                row.killed += 1;
            }
            MutantStatus::Survived => row.participating += 1,
            MutantStatus::Equivalent => row.equivalent += 1,
            MutantStatus::Invalid => row.invalid += 1,
        }
        trace.push(TraceLink {
            mutant: m.id.clone(),
            operator: m.operator,
            description: m.description.clone(),
            status,
            products,
            killing_tests: killing.into_iter().collect(),
        });
    }

    Ok(FixtureReport {
        name: name.to_string(),
        policy: rc.policy,
        tests: tests.len(),
        test_steps: tests.iter().map(|t| t.steps.len()).sum(),
        products: selection.products.iter().map(|c| c.label()).collect(),
        unsatisfiable_tests: selection.unsatisfiable,
        broken_tests: broken,
        operators,
        not_applicable,
        layers,
        trace,
    })
}

fn analyse(m: &SplMutant, p: usize, orig: &Original, tests: &[TestCase], budget: u32) -> ProductMutant {
    let product = mapping::materialize_unchecked(&m.spec, &orig.product.provenance);
    let mut pm = ProductMutant {
        id: format!("{}@P{}", m.id, p + 1),
        product: orig.product.provenance.label(),
        status: ProductStatus::Survived,
        tests_run: 0,
        failed: 0,
    };
    if mapping::canonicalize(&product) == orig.canonical {
        pm.status = ProductStatus::Equivalent;
        return pm;
    }
    let diags = statechart::structural_validate(&product.machine);
    if let Some(d) = diags.first() {
        pm.status = ProductStatus::Invalid { reason: d.to_string() };
        return pm;
    }
    let mut by = Vec::new();
    let mut fault: Option<RuntimeFault> = None;
    for &t in &orig.tests {
        pm.tests_run += 1;
        match testing::execute(&tests[t], &product, budget) {
            Verdict::Fail { .. } => {
                pm.failed += 1;
                by.push(tests[t].id.clone());
            }
            Verdict::Invalid { fault: f } => {
                fault.get_or_insert(f);
            }
            Verdict::Pass | Verdict::Inapplicable => {}
        }
    }
    pm.status = match fault {
        Some(f) => ProductStatus::Invalid { reason: f.to_string() },
        None if !by.is_empty() => ProductStatus::Killed { by },
        None => ProductStatus::Survived,
    };
    pm
}

/// Runs several fixtures with the same configuration.
pub fn run_all<'a>(
    fixtures: impl IntoIterator<Item = (&'a str, &'a SplSpecification, &'a [TestCase])>,
    rc: &RunConfig,
) -> Result<ScoreReport, PipelineError> {
    let fixtures = fixtures.into_iter().map(|(n, s, t)| run(n, s, t, rc)).collect::<Result<_, _>>()?;
    Ok(ScoreReport { fixtures })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Action;
    use crate::mapping::tests::{mapping, toy_spec};
    use crate::testing::{generate_plc, Alphabet};

    fn emitting(mappings: Vec<crate::mapping::Mapping>) -> SplSpecification {
        let mut spec = toy_spec(mappings);
        spec.machine.signals_out = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        for (id, sig) in [("a", "A"), ("b", "B"), ("c", "C")] {
            spec.machine.transition_mut(id).unwrap().effect = vec![Action::parse(&format!("emit {sig}")).unwrap()];
        }
        spec
    }

    fn suite(spec: &SplSpecification) -> Vec<TestCase> {
        generate_plc(spec, &Alphabet::for_spec(spec, &BTreeMap::new()), 40, DEFAULT_STEP_BUDGET).tests
    }

    #[test]
    fn greedy_cover_prefers_small_products() {
        let spec = emitting(vec![mapping("m1", "F", true, &["a"])]);
        let tests = suite(&spec);
        let sel = select_products(&tests, &spec.feature_model, Selection::GreedyCover);
        assert_eq!(sel.products.len(), 1);
        assert_eq!(sel.products[0].label(), "F,R");
        assert_eq!(sel.assignment.len(), tests.len());
    }

    #[test]
    fn first_fit_keeps_suite_order() {
        let spec = emitting(vec![mapping("m1", "F", true, &["a"])]);
        let bare = |id: &str, req: &[&str]| TestCase {
            id: id.into(),
            required: req.iter().map(|s| s.to_string()).collect(),
            forbidden: BTreeSet::new(),
            steps: vec![],
        };
        let tests = vec![bare("T01", &[]), bare("T02", &["F"]), bare("T03", &[])];
        let ff = select_products(&tests, &spec.feature_model, Selection::FirstFit);
        let labels: Vec<String> = ff.products.iter().map(|c| c.label()).collect();
        assert_eq!(labels, ["R", "F,R"]);
        assert_eq!(ff.assignment.values().copied().collect::<Vec<_>>(), [0, 1, 0]);
        let greedy = select_products(&tests, &spec.feature_model, Selection::GreedyCover);
        assert_eq!(greedy.products.len(), 1);
    }

    #[test]
    fn strategies_assign_every_satisfiable_test() {
        let spec = emitting(vec![mapping("m1", "F", true, &["a"]), mapping("m2", "G", true, &["c"])]);
        let tests = suite(&spec);
        let greedy = select_products(&tests, &spec.feature_model, Selection::GreedyCover);
        let per_test = select_products(&tests, &spec.feature_model, Selection::PerTest);
        let first_fit = select_products(&tests, &spec.feature_model, Selection::FirstFit);
        for sel in [&greedy, &per_test, &first_fit] {
            assert!(sel.unsatisfiable.is_empty());
            assert_eq!(sel.assignment.len(), tests.len());
            for (t, p) in &sel.assignment {
                assert!(tests[*t].applies_to(&sel.products[*p]));
            }
        }
        // every test needs F or G, and the two minimal completions are incomparable
        assert_eq!(greedy.products.len(), 2);
        assert_eq!(per_test.products.len(), 2);
    }

    #[test]
    fn unsatisfiable_tests_are_reported() {
        let spec = emitting(vec![]);
        let t = TestCase {
            id: "X".into(),
            required: ["F".to_string()].into(),
            forbidden: ["F".to_string()].into(),
            steps: vec![],
        };
        let sel = select_products(&[t], &spec.feature_model, Selection::GreedyCover);
        assert_eq!(sel.unsatisfiable, vec!["X"]);
        assert!(sel.products.is_empty());
    }

    #[test]
    fn scores_follow_participation() {
        let spec = emitting(vec![mapping("m1", "F", true, &["a"]), mapping("m2", "G", true, &["c"])]);
        let tests = suite(&spec);
        let report = run("toy", &spec, &tests, &RunConfig::default()).unwrap();
        assert!(report.broken_tests.is_empty());
        let cfv = &report.operators[&Operator::Cfv];
        assert_eq!(cfv.generated, 2);
        assert_eq!(cfv.killed, 2);
        let total = report.total_row();
        assert_eq!(total.generated, total.participating + total.equivalent + total.invalid);
        assert_eq!(report.trace.len(), total.generated);
    }

    #[test]
    fn no_tests_means_zero_scores() {
        let spec = emitting(vec![mapping("m1", "F", true, &["a"])]);
        let report = run("toy", &spec, &[], &RunConfig::default()).unwrap();
        assert!(report.products.is_empty());
        for row in report.operators.values() {
            assert_eq!(row.participating, 0);
            assert_eq!(row.score(), 0.0);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = emitting(vec![mapping("m1", "F", true, &["a"]), mapping("m2", "G", false, &["b"])]);
        let tests = suite(&spec);
        let one = run("toy", &spec, &tests, &RunConfig::default()).unwrap();
        let four = run("toy", &spec, &tests, &RunConfig { workers: 4, ..Default::default() }).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn policy_parses() {
        assert_eq!("count-as-killed".parse::<InvalidPolicy>().unwrap(), InvalidPolicy::CountAsKilled);
        assert!("drop".parse::<InvalidPolicy>().is_err());
    }
}
