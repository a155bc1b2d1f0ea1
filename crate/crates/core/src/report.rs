//! Score report writers: aligned text tables, JSON and CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::mutation_ops::{Layer, Operator};
use crate::pipeline::{FixtureReport, InvalidPolicy, LayerTally, OperatorRow, ScoreReport, TraceLink};

/// Score in percent with two decimals.
pub fn percent(row: &OperatorRow) -> String {
    format!("{:.2}", row.score() * 100.0)
}

fn layer_title(layer: Layer) -> &'static str {
    match layer {
        Layer::Mapping => "mapping",
        Layer::Statechart => "state machine",
    }
}

fn layers_of(report: &ScoreReport) -> Vec<Layer> {
    let mut out: Vec<Layer> = report.fixtures.iter().flat_map(|f| f.operators.keys().map(|o| o.layer())).collect();
    out.sort();
    out.dedup();
    out
}

fn grid(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> =
        (0..cols).map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            if c == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[0]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[c]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Human-readable report: a score table per operator layer, then a summary
/// table of run tallies per layer.
pub fn render_table(report: &ScoreReport) -> String {
    let mut out = String::new();
    let policy = report.fixtures.first().map_or(InvalidPolicy::Exclude, |f| f.policy);
    let _ = writeln!(out, "Invalid mutant policy: {policy}\n");
    let names: Vec<&str> = report.fixtures.iter().map(|f| f.name.as_str()).collect();
    let acc = report.accumulated();
    for layer in layers_of(report) {
        let _ = writeln!(out, "Scores for {} operators in % (generated product line mutants)", layer_title(layer));
        let mut rows = vec![std::iter::once("Op.").chain(names.iter().copied()).chain(["Acc"]).map(String::from).collect()];
        for (op, total) in acc.iter().filter(|(o, _)| o.layer() == layer) {
            let mut r = vec![op.code().to_string()];
            for f in &report.fixtures {
                r.push(match f.operators.get(op) {
                    Some(row) => format!("{} ({})", percent(row), row.generated),
                    None => "-".to_string(),
                });
            }
            r.push(percent(total));
            rows.push(r);
        }
        let mut r = vec!["Acc".to_string()];
        for f in &report.fixtures {
            let row = f.layer_row(layer);
            r.push(format!("{} ({})", percent(&row), row.generated));
        }
        r.push(percent(&report.accumulated_layer(layer)));
        rows.push(r);
        out.push_str(&grid(&rows));
        out.push('\n');
    }
    for layer in layers_of(report) {
        let _ = writeln!(out, "Summary for {} operators", layer_title(layer));
        let mut rows = vec![std::iter::once("").chain(names.iter().copied()).map(String::from).collect::<Vec<_>>()];
        let tally = |f: &FixtureReport| f.layers.get(&layer).cloned().unwrap_or_default();
        let lines: [(&str, &dyn Fn(&FixtureReport) -> usize); 9] = [
            ("Products for testing", &|f| f.products.len()),
            ("Product line mutants", &|f| tally(f).spl_mutants),
            ("Product mutants", &|f| tally(f).product_mutants),
            ("Equivalent filtered", &|f| tally(f).equivalent_filtered),
            ("Invalid product mutants", &|f| tally(f).invalid),
            ("Tests", &|f| f.tests),
            ("Test steps", &|f| f.test_steps),
            ("Tests executed", &|f| tally(f).tests_executed),
            ("Failed tests", &|f| tally(f).failed_tests),
        ];
        for (label, get) in lines {
            rows.push(std::iter::once(label.to_string()).chain(report.fixtures.iter().map(|f| get(f).to_string())).collect());
        }
        out.push_str(&grid(&rows));
        out.push('\n');
    }
    for f in &report.fixtures {
        let mut notes = Vec::new();
        for (op, why) in &f.not_applicable {
            notes.push(format!("{} not applicable: {why}", op.code()));
        }
        if !f.unsatisfiable_tests.is_empty() {
            notes.push(format!("tests without a valid product: {}", f.unsatisfiable_tests.join(", ")));
        }
        if !f.broken_tests.is_empty() {
            notes.push(format!("tests failing on their original product: {}", f.broken_tests.join(", ")));
        }
        if !notes.is_empty() {
            let _ = writeln!(out, "{}:", f.name);
            for n in notes {
                let _ = writeln!(out, "  {n}");
            }
        }
    }
    out
}

#[derive(Serialize)]
struct RowView<'a> {
    #[serde(flatten)]
    row: &'a OperatorRow,
    score: f64,
}

fn view(row: &OperatorRow) -> RowView<'_> {
    RowView { row, score: (row.score() * 10_000.0).round() / 100.0 }
}

#[derive(Serialize)]
struct FixtureView<'a> {
    name: &'a str,
    products: &'a [String],
    tests: usize,
    test_steps: usize,
    unsatisfiable_tests: &'a [String],
    broken_tests: &'a [String],
    operators: BTreeMap<Operator, RowView<'a>>,
    not_applicable: &'a BTreeMap<Operator, String>,
    layers: &'a BTreeMap<Layer, LayerTally>,
    trace: &'a [TraceLink],
}

#[derive(Serialize)]
struct ReportView<'a> {
    policy: Option<InvalidPolicy>,
    fixtures: Vec<FixtureView<'a>>,
    accumulated: BTreeMap<Operator, OperatorRowOwned>,
    accumulated_layers: BTreeMap<Layer, OperatorRowOwned>,
}

#[derive(Serialize)]
struct OperatorRowOwned {
    #[serde(flatten)]
    row: OperatorRow,
    score: f64,
}

fn owned(row: OperatorRow) -> OperatorRowOwned {
    let score = view(&row).score;
    OperatorRowOwned { row, score }
}

/// Structured report including the mutant-to-product trace; scores in percent.
pub fn render_json(report: &ScoreReport) -> String {
    let v = ReportView {
        policy: report.fixtures.first().map(|f| f.policy),
        fixtures: report
            .fixtures
            .iter()
            .map(|f| FixtureView {
                name: &f.name,
                products: &f.products,
                tests: f.tests,
                test_steps: f.test_steps,
                unsatisfiable_tests: &f.unsatisfiable_tests,
                broken_tests: &f.broken_tests,
                operators: f.operators.iter().map(|(o, r)| (*o, view(r))).collect(),
                not_applicable: &f.not_applicable,
                layers: &f.layers,
                trace: &f.trace,
            })
            .collect(),
        accumulated: report.accumulated().into_iter().map(|(o, r)| (o, owned(r))).collect(),
        accumulated_layers: layers_of(report).into_iter().map(|l| (l, owned(report.accumulated_layer(l)))).collect(),
    };
    let mut s = serde_json::to_string_pretty(&v).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct CsvRow<'a> {
    fixture: &'a str,
    layer: &'a str,
    operator: &'a str,
    generated: usize,
    participating: usize,
    killed: usize,
    equivalent: usize,
    invalid: usize,
    score: String,
}

pub const CSV_COLUMNS: [&str; 9] =
    ["fixture", "layer", "operator", "generated", "participating", "killed", "equivalent", "invalid", "score"];

/// One row per fixture and operator, then `Acc` rows per layer and overall.
pub fn render_csv(report: &ScoreReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut put = |fixture: &str, layer: &str, operator: &str, r: &OperatorRow| {
        w.serialize(CsvRow {
            fixture,
            layer,
            operator,
            generated: r.generated,
            participating: r.participating,
            killed: r.killed,
            equivalent: r.equivalent,
            invalid: r.invalid,
            score: percent(r),
        })
        .expect("csv row");
    };
    let layer_name = |l: Layer| match l {
        Layer::Mapping => "mapping",
        Layer::Statechart => "statechart",
    };
    for f in &report.fixtures {
        for (op, row) in &f.operators {
            put(&f.name, layer_name(op.layer()), op.code(), row);
        }
        for l in layers_of(report) {
            put(&f.name, layer_name(l), "Acc", &f.layer_row(l));
        }
    }
    for (op, row) in report.accumulated() {
        put("Acc", layer_name(op.layer()), op.code(), &row);
    }
    for l in layers_of(report) {
        put("Acc", layer_name(l), "Acc", &report.accumulated_layer(l));
    }
    put("Acc", "all", "Acc", &report.accumulated_total());
    let bytes = w.into_inner().expect("csv flush");
    String::from_utf8(bytes).expect("csv is utf-8")
}

/// Writes `report.txt`, `report.json` and `report.csv` into `dir`.
pub fn write_reports(dir: &Path, report: &ScoreReport) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let files = [
        ("report.txt", render_table(report)),
        ("report.json", render_json(report)),
        ("report.csv", render_csv(report)),
    ];
    let mut out = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        out.push(p);
    }
    Ok(out)
}
