//! `gdag-lab`: batch front end over `gdag-core`.
//!
//! Exit codes: 0 when the answer was computed, 1 when a check-style command
//! finds a violated property or a failed condition, 2 on bad input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use gdag_core::classify::{reduction_trace, sufficient_condition_holds};
use gdag_core::dsep::{d_separated_via_partition, observable_ci_set};
use gdag_core::entropy::{
    derive_classical_cone_with, derive_independence_cone_with, non_implied_rows, ConeOptions,
};
use gdag_core::enumerate::{canonical_form, classification_census_with, CensusOptions, CensusReport};
use gdag_core::inequalities::{instrumental_value, triangle_gpt_feasible, triangle_monogamy_margin};
use gdag_core::models::{rational_string, satisfies_i, ConditionalTable, Distribution, Rational};
use gdag_core::{gdag, parse_gdag, GDag, NodeId, NodeSet};

/// Margins above this many bits count as a monogamy violation.
const MARGIN_TOL: f64 = 1e-9;

#[derive(Parser)]
#[command(name = "gdag-lab", version, about = "Generalised Bayesian network toolkit")]
struct Cli {
    /// One worker thread; output is byte-identical across runs either way.
    #[arg(long, global = true)]
    deterministic: bool,

    /// Worker threads for `census` and `entropic` (0 = one per core).
    /// GDAG_LAB_JOBS overrides this.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Is x d-separated from y given z? Prints true or false.
    Dsep {
        graph: PathBuf,
        #[arg(long, value_name = "IDS")]
        x: String,
        #[arg(long, value_name = "IDS")]
        y: String,
        /// Conditioning set; omit for the empty set.
        #[arg(long, value_name = "IDS")]
        z: Option<String>,
        /// Also print the {u, v, z, w} partition when separated.
        #[arg(long)]
        witness: bool,
    },
    /// Every observable d-separation of the graph, as JSON.
    CiSet { graph: PathBuf },
    /// Checks a distribution over the observed nodes against the graph's
    /// independences and any inequality that applies to its shape.
    CheckDist { graph: PathBuf, dist: PathBuf },
    /// Evaluates a theory-independent inequality on a distribution.
    Ineq { which: Which, dist: PathBuf },
    /// Prints a certificate that C = I, or "unknown".
    Classify { graph: PathBuf },
    /// Applies reduction rules to a fixpoint and prints the result.
    Reduce {
        graph: PathBuf,
        /// Print the applied rules alongside the graph.
        #[arg(long)]
        trace: bool,
    },
    /// Census of all GDAGs with n nodes as a CSV row.
    Census {
        #[arg(long)]
        n: usize,
        /// Allow n >= 6.
        #[arg(long)]
        long_run: bool,
        /// Print the CSV header first.
        #[arg(long)]
        header: bool,
    },
    /// Entropic cones E_C and E_I of the graph.
    Entropic {
        graph: PathBuf,
        /// Also list the rows of each cone the other does not imply.
        #[arg(long)]
        compare: bool,
        /// Lift the desk-scale node limit.
        #[arg(long)]
        long_run: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Which {
    /// Joint over A, B, C: monogamy margin and marginal feasibility.
    Triangle,
    /// Family P(a, b | y): the instrumental value.
    Instrumental,
}

#[derive(Debug, PartialEq, Eq)]
enum Outcome {
    Computed,
    Violated,
}

struct Failure(String);

impl From<gdag_core::Error> for Failure {
    fn from(e: gdag_core::Error) -> Self {
        Failure(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            eprintln!("{}", msg.lines().next().unwrap_or("error: bad arguments"));
            return ExitCode::from(2);
        }
    };
    match configure_pool(&cli).and_then(|()| run(cli.command)) {
        Ok(Outcome::Computed) => ExitCode::SUCCESS,
        Ok(Outcome::Violated) => ExitCode::from(1),
        Err(Failure(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn configure_pool(cli: &Cli) -> CliResult<()> {
    let jobs = match std::env::var("GDAG_LAB_JOBS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Failure(format!("GDAG_LAB_JOBS must be a thread count, got `{v}`")))?,
        Err(_) => cli.jobs.unwrap_or(if cli.deterministic { 1 } else { 0 }),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| Failure(format!("cannot start worker pool: {e}")))
}

fn run(command: Command) -> CliResult<Outcome> {
    match command {
        Command::Dsep { graph, x, y, z, witness } => {
            let g = load_graph(&graph)?;
            let x = NodeSet::parse_list(&x)?;
            let y = NodeSet::parse_list(&y)?;
            let z = match z {
                Some(z) => NodeSet::parse_list(&z)?,
                None => NodeSet::new(),
            };
            let wit = d_separated_via_partition(&g, &x, &y, &z)?;
            println!("{}", wit.is_some());
            if let (true, Some(w)) = (witness, wit) {
                println!("{}", to_json(&w));
            }
            Ok(Outcome::Computed)
        }
        Command::CiSet { graph } => {
            println!("{}", observable_ci_set(&load_graph(&graph)?).to_json());
            Ok(Outcome::Computed)
        }
        Command::CheckDist { graph, dist } => check_dist(&load_graph(&graph)?, &load_dist(&dist)?),
        Command::Ineq { which: Which::Triangle, dist } => {
            let p = load_dist(&dist)?;
            let margin = triangle_monogamy_margin(&p)?;
            let feasible = triangle_gpt_feasible(&p)?;
            println!("{}", json!({ "monogamy_margin": margin, "marginal_feasible": feasible }));
            Ok(verdict(margin > MARGIN_TOL || !feasible))
        }
        Command::Ineq { which: Which::Instrumental, dist } => {
            let table = ConditionalTable::from_json(&read(&dist)?)?;
            let value = instrumental_value(&table)?;
            println!("{}", json!({ "instrumental_value": rational_string(&value) }));
            Ok(verdict(value > Rational::from_integer(1.into())))
        }
        Command::Classify { graph } => match sufficient_condition_holds(&load_graph(&graph)?) {
            Some(cert) => {
                println!("{}", cert.to_json());
                Ok(Outcome::Computed)
            }
            None => {
                println!("unknown");
                Ok(Outcome::Violated)
            }
        },
        Command::Reduce { graph, trace } => {
            let (h, steps) = reduction_trace(&load_graph(&graph)?);
            if trace {
                let steps: Vec<String> = steps.iter().map(|r| r.to_string()).collect();
                println!("{}", json!({ "graph": h, "steps": steps }));
            } else {
                println!("{}", h.to_json());
            }
            Ok(Outcome::Computed)
        }
        Command::Census { n, long_run, header } => {
            if n >= 6 && !long_run {
                return Err(Failure(format!("census of n = {n} needs --long-run")));
            }
            let report = classification_census_with(n, CensusOptions { long_run: n > 6 })?;
            if header {
                println!("{}", CensusReport::CSV_HEADER);
            }
            println!("{}", report.csv_row());
            Ok(Outcome::Computed)
        }
        Command::Entropic { graph, compare, long_run } => {
            let g = load_graph(&graph)?;
            let opts = ConeOptions { long_run };
            let ec = derive_classical_cone_with(&g, opts)?;
            let ei = derive_independence_cone_with(&g, opts)?;
            let mut out = json!({
                "classical": parse_value(&ec.to_json()),
                "independence": parse_value(&ei.to_json()),
            });
            if compare {
                let fmt = |rows: Vec<_>| -> Vec<String> { rows.iter().map(|q| ec.format_ineq(q)).collect() };
                let only_c = fmt(non_implied_rows(&ec, &ei)?);
                let only_i = fmt(non_implied_rows(&ei, &ec)?);
                out["equal"] = json!(only_c.is_empty() && only_i.is_empty());
                out["classical_not_implied_by_independence"] = json!(only_c);
                out["independence_not_implied_by_classical"] = json!(only_i);
            }
            println!("{out}");
            Ok(Outcome::Computed)
        }
    }
}

fn verdict(violated: bool) -> Outcome {
    if violated {
        Outcome::Violated
    } else {
        Outcome::Computed
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| Failure(format!("cannot read {}: {e}", path.display())))
}

fn load_graph(path: &Path) -> CliResult<GDag> {
    Ok(parse_gdag(&read(path)?)?)
}

fn load_dist(path: &Path) -> CliResult<Distribution> {
    Ok(Distribution::from_json(&read(path)?)?)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

fn parse_value(text: &str) -> Value {
    serde_json::from_str(text).expect("library JSON is valid")
}

// -- check-dist -------------------------------------------------------------

fn check_dist(g: &GDag, p: &Distribution) -> CliResult<Outcome> {
    let report = satisfies_i(g, p)?;
    let mut violated = !report.holds;
    let mut ineqs = Vec::new();
    if same_shape(g, &triangle()) {
        let (margin, feasible) = triangle_checks(g, p)?;
        violated |= margin > MARGIN_TOL || !feasible;
        ineqs.push(json!({ "name": "triangle_monogamy", "value": margin, "violated": margin > MARGIN_TOL }));
        ineqs.push(json!({ "name": "triangle_marginal_feasible", "value": feasible, "violated": !feasible }));
    }
    if same_shape(g, &instrumental()) {
        let value = instrumental_value(&instrumental_family(g, p)?)?;
        let over = value > Rational::from_integer(1.into());
        violated |= over;
        ineqs.push(json!({ "name": "instrumental", "value": rational_string(&value), "violated": over }));
    }
    println!(
        "{}",
        json!({ "satisfies_i": report.holds, "violated": report.violated, "inequalities": ineqs })
    );
    Ok(verdict(violated))
}

fn triangle() -> GDag {
    gdag(
        &["A", "B", "C", "(L)", "(M)", "(N)"],
        &[("L", "A"), ("L", "B"), ("M", "B"), ("M", "C"), ("N", "A"), ("N", "C")],
    )
    .expect("valid graph")
}

fn instrumental() -> GDag {
    gdag(&["Y", "A", "B", "(L)"], &[("Y", "B"), ("B", "A"), ("L", "A"), ("L", "B")])
        .expect("valid graph")
}

fn same_shape(g: &GDag, h: &GDag) -> bool {
    g.len() == h.len()
        && matches!((canonical_form(g), canonical_form(h)), (Ok(a), Ok(b)) if a == b)
}

fn id(s: &str) -> NodeId {
    s.parse().expect("valid id")
}

/// `p` with its variables renamed through `name`.
fn renamed(p: &Distribution, name: impl Fn(&NodeId) -> NodeId) -> CliResult<Distribution> {
    let vars = p.variables().iter().zip(p.cards()).map(|(v, &c)| (name(v), c)).collect();
    Ok(Distribution::new(vars, p.probs().to_vec())?)
}

/// Worst monogamy margin and joint feasibility over the three choices of
/// middle variable; the triangle is symmetric, so each choice is a valid test.
fn triangle_checks(g: &GDag, p: &Distribution) -> CliResult<(f64, bool)> {
    let obs = g.observed_ids();
    let mut margin = f64::NEG_INFINITY;
    let mut feasible = true;
    for mid in 0..3 {
        let (l, r) = ((mid + 1) % 3, (mid + 2) % 3);
        let q = renamed(p, |v| {
            let k = obs.iter().position(|o| o == v).expect("observed variable");
            id(if k == mid { "B" } else if k == l { "A" } else if k == r { "C" } else { unreachable!() })
        })?;
        margin = margin.max(triangle_monogamy_margin(&q)?);
        feasible &= triangle_gpt_feasible(&q)?;
    }
    Ok((margin, feasible))
}

/// `P(a, b | y)` from a joint on an instrumental-shaped graph: `y` is the
/// parentless observed node, `b` its observed child, `a` the remaining one.
/// Settings of `y` with zero probability are left out.
fn instrumental_family(g: &GDag, p: &Distribution) -> CliResult<ConditionalTable> {
    let obs: Vec<usize> = (0..g.len()).filter(|&i| g.is_observed(i)).collect();
    let y = *obs.iter().find(|&&i| g.parents_mask(i) == 0).expect("instrumental shape");
    let b = *obs.iter().find(|&&i| g.has_edge(y, i)).expect("instrumental shape");
    let a = *obs.iter().find(|&&i| i != y && i != b).expect("instrumental shape");
    let pos = |i: usize| p.variables().iter().position(|v| v == g.id(i)).expect("observed variable");
    let (py, pa, pb) = (pos(y), pos(a), pos(b));
    let cards = p.cards();
    let mut outcome = vec![0; 3];
    let mut joint = |yv: usize, av: usize, bv: usize| {
        outcome[py] = yv;
        outcome[pa] = av;
        outcome[pb] = bv;
        p.prob(&outcome).clone()
    };
    let mut rows = Vec::new();
    for yv in 0..cards[py] {
        let slice: Vec<Rational> = (0..cards[pa])
            .flat_map(|av| (0..cards[pb]).map(move |bv| (av, bv)))
            .map(|(av, bv)| joint(yv, av, bv))
            .collect();
        let total: Rational = slice.iter().sum();
        if total > Rational::from_integer(0.into()) {
            rows.extend(slice.into_iter().map(|v| v / &total));
        }
    }
    let given = vec![(g.id(y).clone(), rows.len() / (cards[pa] * cards[pb]))];
    let vars = vec![(g.id(a).clone(), cards[pa]), (g.id(b).clone(), cards[pb])];
    Ok(ConditionalTable::new(given, vars, rows)?)
}
