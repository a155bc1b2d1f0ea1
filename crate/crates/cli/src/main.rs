//! `splmut` command-line front end.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use splmut::bundle::{self, Bundle};
use splmut::feature_model::{complete_partial, count_configurations, enumerate_configurations};
use splmut::interp::DEFAULT_STEP_BUDGET;
use splmut::mapping::{canonical_machine, materialize, validate_spec};
use splmut::mutation_ops::{generate, GenerateError};
use splmut::pipeline::{self, RunConfig, ScoreReport, Selection};
use splmut::report;
use splmut::testing::{generate_plc, Alphabet};
use splmut::{fixtures, InvalidPolicy, Operator, TestCase};

const DEFAULT_DEPTH: usize = 40;
const DEFAULT_VARIANT_LIMIT: usize = 100_000;

#[derive(Parser)]
#[command(name = "splmut", version, about = "Mutation analysis for product line specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a bundle and report diagnostics.
    Validate(BundleArg),
    /// Count or list the valid configurations of the feature model.
    Variants {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long, conflicts_with = "count")]
        list: bool,
        #[arg(long)]
        count: bool,
        /// Abort when more configurations exist.
        #[arg(long, default_value_t = DEFAULT_VARIANT_LIMIT)]
        limit: usize,
    },
    /// Derive the product for a (partial) feature selection.
    Materialize {
        #[command(flatten)]
        bundle: BundleArg,
        /// Comma-separated features to select; the rest is completed minimally.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Write every first-order mutant of a bundle.
    Mutate {
        #[command(flatten)]
        bundle: BundleArg,
        /// Comma-separated operator codes, or `all`.
        #[arg(long, default_value = "all")]
        operators: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate an all-transitions test suite.
    GenerateTests {
        #[command(flatten)]
        bundle: BundleArg,
        #[arg(long)]
        depth: Option<usize>,
        /// Test file to write; printed to stdout otherwise.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
        step_budget: u32,
    },
    /// Run the mutation analysis and write score reports.
    Run(RunArgs),
}

#[derive(Args)]
struct BundleArg {
    /// Bundle file, or `builtin:<name>` for a shipped fixture.
    path: String,
}

#[derive(Args)]
struct RunArgs {
    /// Bundle files or `builtin:<name>`; `builtin:all` expands to every fixture.
    #[arg(required = true)]
    bundles: Vec<String>,
    /// Test file to use instead of the embedded or generated suite (single bundle only).
    #[arg(long)]
    tests: Option<PathBuf>,
    #[arg(long, default_value = "all")]
    operators: String,
    #[arg(long, default_value = "exclude")]
    policy: InvalidPolicy,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Directory for report.txt/json/csv.
    #[arg(long, env = "SPLMUT_REPORT_DIR")]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: u32,
    /// Fail with exit code 1 when the accumulated score (in %) is below this.
    #[arg(long)]
    score_threshold: Option<f64>,
    /// Accepted for compatibility; generation is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Product selection: `first-fit` (default), `greedy` or `per-test`.
    #[arg(long, default_value = "first-fit", value_parser = parse_selection)]
    selection: Selection,
}

fn parse_selection(s: &str) -> Result<Selection, String> {
    match s {
        "first-fit" => Ok(Selection::FirstFit),
        "greedy" => Ok(Selection::GreedyCover),
        "per-test" => Ok(Selection::PerTest),
        _ => Err(format!("unknown selection `{s}` (expected first-fit, greedy or per-test)")),
    }
}

/// Failure that maps to exit code 1 rather than 3.
#[derive(Debug)]
struct Reported(String);

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Reported {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Reported>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Validate(b) => cmd_validate(&b.path),
        Command::Variants { bundle, list, count: _, limit } => cmd_variants(&bundle.path, list, limit),
        Command::Materialize { bundle, features } => cmd_materialize(&bundle.path, &features),
        Command::Mutate { bundle, operators, out } => cmd_mutate(&bundle.path, &operators, &out),
        Command::GenerateTests { bundle, depth, out, step_budget } => {
            cmd_generate_tests(&bundle.path, depth, out.as_deref(), step_budget)
        }
        Command::Run(args) => cmd_run(args),
    }
}

fn load(path: &str) -> Result<Bundle> {
    if let Some(name) = path.strip_prefix("builtin:") {
        return fixtures::by_name(name).ok_or_else(|| {
            Reported(format!("unknown fixture `{name}` (known: {})", fixtures::NAMES.join(", "))).into()
        });
    }
    bundle::load_bundle(Path::new(path)).map_err(|e| Reported(format!("{path}: {e}")).into())
}

fn operators(list: &str) -> Result<Vec<Operator>> {
    if list.trim().eq_ignore_ascii_case("all") {
        return Ok(Operator::ALL.to_vec());
    }
    Operator::parse_list(list).map_err(|e| Reported(e.to_string()).into())
}

fn cmd_validate(path: &str) -> Result<()> {
    let b = load(path)?;
    let diags = validate_spec(&b.spec);
    if diags.is_empty() {
        println!("{}: ok", b.name);
        return Ok(());
    }
    for d in &diags {
        println!("{d}");
    }
    Err(Reported(format!("{}: {} diagnostic(s)", b.name, diags.len())).into())
}

fn cmd_variants(path: &str, list: bool, limit: usize) -> Result<()> {
    let b = load(path)?;
    let fm = &b.spec.feature_model;
    if list {
        let all = enumerate_configurations(fm, limit).map_err(|e| Reported(e.to_string()))?;
        for c in &all {
            println!("{}", c.label());
        }
    } else {
        println!("{}", count_configurations(fm, limit).map_err(|e| Reported(e.to_string()))?);
    }
    Ok(())
}

fn cmd_materialize(path: &str, features: &[String]) -> Result<()> {
    let b = load(path)?;
    let fm = &b.spec.feature_model;
    let selected = features.iter().map(|f| f.trim().to_string()).filter(|f| !f.is_empty()).collect();
    let cfg = complete_partial(fm, &selected, &Default::default()).map_err(|e| Reported(e.to_string()))?;
    let product = materialize(&b.spec, &cfg).map_err(|e| Reported(e.to_string()))?;
    println!("# configuration: {}", cfg.label());
    print!("{}", canonical_machine(&product.machine));
    Ok(())
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    id: &'a str,
    operator: Operator,
    locus: &'a [String],
    description: &'a str,
    file: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    source: &'a str,
    mutants: Vec<ManifestEntry<'a>>,
    not_applicable: BTreeMap<Operator, String>,
}

fn cmd_mutate(path: &str, list: &str, out: &Path) -> Result<()> {
    let b = load(path)?;
    let ops = if list.trim().is_empty() { Vec::new() } else { operators(list)? };
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut mutants = Vec::new();
    let mut not_applicable = BTreeMap::new();
    for op in ops {
        match generate(op, &b.spec) {
            Ok(ms) => mutants.extend(ms),
            Err(GenerateError::NotApplicable { operator, reason }) => {
                eprintln!("{operator}: not applicable ({reason})");
                not_applicable.insert(operator, reason);
            }
        }
    }
    let mut entries = Vec::new();
    for m in &mutants {
        let file = format!("{}.toml", m.id);
        let mb = Bundle {
            name: format!("{} {}", b.name, m.id),
            description: m.description.clone(),
            spec: m.spec.clone(),
            metadata: Default::default(),
            testgen: b.testgen.clone(),
            tests: Vec::new(),
        };
        fs::write(out.join(&file), bundle::write_bundle(&mb))?;
        entries.push(ManifestEntry { id: &m.id, operator: m.operator, locus: &m.locus, description: &m.description, file });
    }
    let manifest = Manifest { source: &b.name, mutants: entries, not_applicable };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    println!("{} mutant(s) written to {}", mutants.len(), out.display());
    Ok(())
}

fn generated_suite(b: &Bundle, depth: Option<usize>, budget: u32) -> splmut::testing::PlcResult {
    let depth = depth.or(b.testgen.depth).unwrap_or(DEFAULT_DEPTH);
    let alphabet = Alphabet::for_spec(&b.spec, &b.testgen.payloads);
    generate_plc(&b.spec, &alphabet, depth, budget)
}

fn cmd_generate_tests(path: &str, depth: Option<usize>, out: Option<&Path>, budget: u32) -> Result<()> {
    let b = load(path)?;
    let res = generated_suite(&b, depth, budget);
    let text = bundle::write_tests(&res.tests);
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{text}"),
    }
    let steps: usize = res.tests.iter().map(|t| t.steps.len()).sum();
    eprintln!("{} test(s), {} step(s), {} state(s) explored", res.tests.len(), steps, res.explored);
    if res.uncovered.is_empty() {
        eprintln!("all transitions covered");
    } else {
        eprintln!("uncovered transitions: {}", res.uncovered.join(", "));
    }
    Ok(())
}

fn expand(bundles: &[String]) -> Vec<String> {
    bundles
        .iter()
        .flat_map(|b| {
            if b == "builtin:all" {
                fixtures::NAMES.iter().map(|n| format!("builtin:{n}")).collect()
            } else {
                vec![b.clone()]
            }
        })
        .collect()
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let paths = expand(&args.bundles);
    if args.tests.is_some() && paths.len() != 1 {
        bail!(Reported("--tests needs exactly one bundle".into()));
    }
    let rc = RunConfig {
        operators: operators(&args.operators)?,
        policy: args.policy,
        workers: args.workers.max(1),
        step_budget: args.step_budget,
        selection: args.selection,
    };
    let started = Instant::now();
    let mut fixtures = Vec::new();
    for p in &paths {
        let b = load(p)?;
        let tests: Vec<TestCase> = match &args.tests {
            Some(t) => bundle::load_tests(t).map_err(|e| Reported(format!("{}: {e}", t.display())))?,
            None if !b.tests.is_empty() => b.tests.clone(),
            None => generated_suite(&b, None, args.step_budget).tests,
        };
        let r = pipeline::run(&b.name, &b.spec, &tests, &rc).map_err(|e| match e {
            pipeline::PipelineError::Pool(_) => anyhow::Error::new(e),
            other => Reported(format!("{p}: {other}")).into(),
        })?;
        fixtures.push(r);
    }
    let report = ScoreReport { fixtures };
    print!("{}", report::render_table(&report));
    let total = report.accumulated_total();
    let executed: usize = report.fixtures.iter().flat_map(|f| f.layers.values()).map(|l| l.tests_executed).sum();
    eprintln!("{} test execution(s) in {:.2}s", executed, started.elapsed().as_secs_f64());
    if let Some(dir) = &args.report {
        let written = report::write_reports(dir, &report).with_context(|| format!("writing {}", dir.display()))?;
        for w in written {
            eprintln!("wrote {}", w.display());
        }
    }
    if let Some(min) = args.score_threshold {
        let score = total.score() * 100.0;
        if score < min {
            bail!(Reported(format!("accumulated score {score:.2}% is below threshold {min:.2}%")));
        }
    }
    Ok(())
}
