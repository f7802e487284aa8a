use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ckptad::adjoint::{differentiate, emit_listing, fd_check, CheckpointPlan, DiffOptions, Mode};
use ckptad::costmodel::{
    enumerate_pareto, greedy_pareto, paper_scenarios, simulate, CallTreeCost, PlanVector, Scenario,
};
use ckptad::dataflow::analyze;
use ckptad::lang::{call_sites, parse_program, validate, EvalOptions, Program, Store};
use ckptad::metrics::{compare, to_text, PlanSet};

#[derive(Parser)]
#[command(name = "ckptad", version, about = "Reverse-mode differentiation with per-call checkpointing control")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Output format (each command has its own default).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reading a never-assigned variable is an error instead of zero.
    #[arg(long, global = true)]
    strict_uninit: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Tsv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Differentiate and print the gradient with run statistics.
    Grad(GradArgs),
    /// Print the adjoint listing.
    Emit(ProgArgs),
    /// Print the data-flow analysis results.
    Analyze(ProgArgs),
    /// Simulate the stack profile of a plan on a cost tree.
    Simulate(SimArgs),
    /// Search the time/peak trade-off over all plans of a cost tree.
    Search(SearchArgs),
    /// Run one program under several plans and tabulate gains.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ProgArgs {
    /// Source file.
    file: PathBuf,
    /// Entry procedure (defaults to the only procedure nobody calls).
    #[arg(long)]
    entry: Option<String>,
    /// Split every call to these procedures (comma separated).
    #[arg(long, value_delimiter = ',')]
    split: Option<Vec<String>>,
    /// JSON plan file mapping `proc:line:col` to `joint` or `split`.
    #[arg(long)]
    plan: Option<PathBuf>,
}

#[derive(Args)]
struct GradArgs {
    #[command(flatten)]
    prog: ProgArgs,
    /// Input values, e.g. `x=2,y=1,a=[1;2;3]`.
    #[arg(long, default_value = "")]
    input: String,
    /// Output weights, e.g. `z=1`.
    #[arg(long)]
    weights: String,
    /// Also compare against central differences with this step.
    #[arg(long)]
    fd: Option<f64>,
    /// Check every derivative read against a plain reference run.
    #[arg(long)]
    shadow: bool,
}

#[derive(Args)]
struct SimArgs {
    /// Cost tree JSON.
    #[arg(long, required_unless_present = "scenario")]
    tree: Option<PathBuf>,
    /// `joint`, `split`, a J/S string in preorder, or node names to split.
    #[arg(long, default_value = "joint")]
    plan: String,
    /// Time units per byte pushed or popped.
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Write the stack curve as TSV here.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Built-in scenario on the canonical tree.
    #[arg(long, value_enum, conflicts_with = "tree")]
    scenario: Option<ScenarioName>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, required_unless_present = "scenario")]
    tree: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Use the greedy search (no optimality guarantee).
    #[arg(long)]
    greedy: bool,
    #[arg(long, value_enum, conflicts_with = "tree")]
    scenario: Option<ScenarioName>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioName {
    #[value(name = "paper-A")]
    A,
    #[value(name = "paper-B")]
    B,
}

#[derive(Args)]
struct CompareArgs {
    file: PathBuf,
    #[arg(long)]
    entry: Option<String>,
    #[arg(long, default_value = "")]
    input: String,
    #[arg(long)]
    weights: String,
    /// Extra row splitting calls to these procedures; repeatable.
    #[arg(long = "row", value_delimiter = ',', action = clap::ArgAction::Append, num_args = 1)]
    rows: Vec<String>,
    /// Extra row from a plan file; repeatable.
    #[arg(long = "plan-file")]
    plan_files: Vec<PathBuf>,
    /// Id of the reference row.
    #[arg(long, default_value = "joint-all")]
    baseline: String,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    /// Keep the wall-clock column in JSON output, which then varies run to run.
    #[arg(long)]
    wall: bool,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_program(path: &Path) -> Result<Program> {
    let src = read(path)?;
    let p = parse_program(&src).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let diags = validate(&p);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| format!("{}: {d}", path.display())).collect();
        bail!("{}", list.join("\n"));
    }
    Ok(p)
}

fn pick_entry(p: &Program, entry: &Option<String>) -> Result<String> {
    if let Some(e) = entry {
        if p.proc(e).is_none() {
            bail!("no procedure named `{e}`");
        }
        return Ok(e.clone());
    }
    let called: Vec<String> =
        p.procs.values().flat_map(|d| call_sites(d).into_iter().map(|(_, c)| c.to_string())).collect();
    let roots: Vec<&String> = p.procs.keys().filter(|k| !called.contains(k)).collect();
    match roots.as_slice() {
        [one] => Ok((*one).clone()),
        _ => bail!("cannot guess the entry procedure; pass --entry"),
    }
}

/// Plan file, else `--split`, else the source directives.
fn pick_plan(p: &Program, entry: &str, args: &ProgArgs) -> Result<CheckpointPlan> {
    let plan = if let Some(path) = &args.plan {
        let given = CheckpointPlan::from_json(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
        let mut plan = CheckpointPlan::joint_all(p, entry);
        for (site, mode) in given.iter() {
            plan.set(site.clone(), mode);
        }
        plan
    } else if let Some(names) = &args.split {
        CheckpointPlan::from_split_procs(p, entry, names)?
    } else {
        CheckpointPlan::from_directives(p, entry)
    };
    plan.check_total(p, entry)?;
    Ok(plan)
}

fn store(text: &str, what: &str) -> Result<Store> {
    Store::parse_assignments(text).map_err(|e| anyhow!("--{what}: {e}"))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn scenario(name: ScenarioName, kappa: f64) -> Scenario {
    let [a, b] = paper_scenarios(kappa);
    match name {
        ScenarioName::A => a,
        ScenarioName::B => b,
    }
}

fn parse_plan(tree: &CallTreeCost, text: &str) -> Result<PlanVector> {
    let n = tree.len() - 1;
    Ok(match text {
        "joint" | "joint-all" => PlanVector::uniform(tree, Mode::Joint),
        "split" | "split-all" => PlanVector::uniform(tree, Mode::Split),
        t if t.len() == n && t.chars().all(|c| "JSjs".contains(c)) => PlanVector::decode(t)?,
        t => PlanVector::split_named(tree, &t.split(',').map(str::trim).collect::<Vec<_>>())?,
    })
}

fn run(cli: Cli) -> Result<String> {
    let eval = EvalOptions { strict_uninit: cli.strict_uninit };
    let fmt = cli.format;
    match cli.cmd {
        Cmd::Grad(a) => {
            let p = load_program(&a.prog.file)?;
            let entry = pick_entry(&p, &a.prog.entry)?;
            let plan = pick_plan(&p, &entry, &a.prog)?;
            let (inputs, weights) = (store(&a.input, "input")?, store(&a.weights, "weights")?);
            let d = differentiate(&p, &entry, &inputs, &weights, &plan, DiffOptions { eval, shadow: a.shadow })?;
            let fd = a.fd.map(|h| fd_check(&p, &entry, &inputs, &weights, &plan, h, eval)).transpose()?;
            match fmt.unwrap_or(Format::Json) {
                Format::Json => Ok(pretty(&json!({
                    "entry": entry,
                    "plan": plan.describe(&p, &entry),
                    "gradient": d.gradient,
                    "primalOut": d.primal_out,
                    "stats": d.stats,
                    "fd": fd,
                }))),
                Format::Text => {
                    let mut out = format!("plan: {}\n", plan.describe(&p, &entry));
                    for (k, v) in d.gradient.iter() {
                        out += &format!("d/d{k} = {v}\n");
                    }
                    let s = &d.stats;
                    out += &format!(
                        "ops {} (plain {}, forward {}, backward {}), peak {} bytes, pushed {} bytes\n",
                        s.ops(),
                        s.plain_time,
                        s.fwd_sweep_time,
                        s.bwd_sweep_time,
                        s.peak_bytes,
                        s.pushed_bytes
                    );
                    if let Some(fd) = fd {
                        out += &format!("finite differences: max relative error {:e}\n", fd.max_rel_error);
                    }
                    Ok(out)
                }
                Format::Tsv => bail!("grad has no tsv output"),
            }
        }
        Cmd::Emit(a) => {
            let p = load_program(&a.file)?;
            let entry = pick_entry(&p, &a.entry)?;
            let plan = pick_plan(&p, &entry, &a)?;
            let text = emit_listing(&p, &entry, &plan);
            match fmt.unwrap_or(Format::Text) {
                Format::Text => Ok(text),
                Format::Json => Ok(pretty(&json!({ "entry": entry, "listing": text }))),
                Format::Tsv => bail!("emit has no tsv output"),
            }
        }
        Cmd::Analyze(a) => {
            let p = load_program(&a.file)?;
            let entry = pick_entry(&p, &a.entry)?;
            let plan = pick_plan(&p, &entry, &a)?;
            let an = analyze(&p, &entry, &plan);
            match fmt.unwrap_or(Format::Json) {
                Format::Json | Format::Text => Ok(pretty(&an.to_json(&p))),
                Format::Tsv => bail!("analyze has no tsv output"),
            }
        }
        Cmd::Simulate(a) => {
            if let Some(name) = a.scenario {
                let s = scenario(name, a.kappa);
                return match fmt.unwrap_or(Format::Text) {
                    Format::Text => Ok(s.to_text()),
                    Format::Json => Ok(pretty(&s)),
                    Format::Tsv => bail!("scenario tables have no tsv output; simulate one plan with --tree"),
                };
            }
            let path = a.tree.expect("clap requires --tree");
            let tree = CallTreeCost::from_json(&read(&path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
            let plan = parse_plan(&tree, &a.plan)?;
            let prof = simulate(&tree, &plan, a.kappa)?;
            if let Some(c) = &a.curve {
                fs::write(c, prof.to_tsv()).with_context(|| format!("cannot write {}", c.display()))?;
            }
            match fmt.unwrap_or(Format::Text) {
                Format::Text => Ok(format!(
                    "plan {}: peak {} bytes, time {}, traffic {} bytes\n",
                    plan.encode(),
                    prof.peak_bytes,
                    prof.total_time,
                    prof.traffic_bytes
                )),
                Format::Json => Ok(pretty(&json!({ "plan": plan.encode(), "profile": prof }))),
                Format::Tsv => Ok(prof.to_tsv()),
            }
        }
        Cmd::Search(a) => {
            let tree = match (a.scenario, &a.tree) {
                (Some(name), _) => scenario(name, a.kappa).tree(),
                (None, Some(path)) => {
                    CallTreeCost::from_json(&read(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?
                }
                (None, None) => unreachable!("clap requires --tree"),
            };
            let front = if a.greedy { greedy_pareto(&tree, a.kappa)? } else { enumerate_pareto(&tree, a.kappa)? };
            match fmt.unwrap_or(Format::Json) {
                Format::Json => Ok(pretty(&front)),
                Format::Text => Ok(front
                    .iter()
                    .map(|p| {
                        format!(
                            "{}  peak {}  time {}  split [{}]\n",
                            p.plan,
                            p.peak_bytes,
                            p.total_time,
                            p.split.join(", ")
                        )
                    })
                    .collect()),
                Format::Tsv => Ok(std::iter::once("plan\tpeak_bytes\ttotal_time\n".to_string())
                    .chain(front.iter().map(|p| format!("{}\t{}\t{}\n", p.plan, p.peak_bytes, p.total_time)))
                    .collect()),
            }
        }
        Cmd::Compare(a) => {
            let p = load_program(&a.file)?;
            let entry = pick_entry(&p, &a.entry)?;
            let (inputs, weights) = (store(&a.input, "input")?, store(&a.weights, "weights")?);
            let mut plans = PlanSet::new().add("joint-all", "joint-all", CheckpointPlan::joint_all(&p, &entry)).add(
                "split-all",
                "split-all",
                CheckpointPlan::split_all(&p, &entry),
            );
            for name in &a.rows {
                let plan = CheckpointPlan::from_split_procs(&p, &entry, &[name])?;
                let desc = plan.describe(&p, &entry);
                plans = plans.add(&format!("split-{name}"), &desc, plan);
            }
            for path in &a.plan_files {
                let args = ProgArgs {
                    file: a.file.clone(),
                    entry: Some(entry.clone()),
                    split: None,
                    plan: Some(path.clone()),
                };
                let plan = pick_plan(&p, &entry, &args)?;
                let desc = plan.describe(&p, &entry);
                let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                plans = plans.add(&id, &desc, plan);
            }
            let baseline = plans
                .entries
                .iter()
                .position(|(id, _, _)| *id == a.baseline)
                .ok_or_else(|| anyhow!("no row with id `{}`", a.baseline))?;
            let mut rows =
                compare(&p, &entry, &inputs, &weights, &plans, baseline, a.kappa, DiffOptions { eval, shadow: false })?;
            match fmt.unwrap_or(Format::Text) {
                Format::Text => Ok(to_text(&rows)),
                Format::Json => {
                    if !a.wall {
                        rows.iter_mut().for_each(|r| r.wall_ms = None);
                    }
                    Ok(pretty(&rows))
                }
                Format::Tsv => bail!("compare has no tsv output"),
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok(text) => {
            if let Some(path) = out {
                if let Err(e) = fs::write(&path, text) {
                    eprintln!("error: cannot write {}: {e}", path.display());
                    return ExitCode::FAILURE;
                }
            } else {
                print!("{text}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
