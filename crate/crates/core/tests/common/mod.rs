//! Corpus loading and plan sampling shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use ckptad::adjoint::{reachable_sites, CheckpointPlan, Mode};
use ckptad::dataflow::{ProcSummary, VarSet};
use ckptad::lang::{parse_program, LValue, ProcDef, Program, SiteId, Stmt, StmtKind, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Case {
    pub name: String,
    pub source: String,
    pub program: Program,
    pub entry: String,
    pub inputs: Store,
    pub weights: Store,
}

fn header<'a>(src: &'a str, key: &str) -> &'a str {
    src.lines()
        .filter_map(|l| l.strip_prefix("! "))
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(':')))
        .unwrap_or_else(|| panic!("missing `! {key}:` header"))
        .trim()
}

pub fn corpus() -> Vec<Case> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus");
    let mut paths: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.retain(|p| p.extension().is_some_and(|e| e == "adl"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let source = fs::read_to_string(&p).unwrap();
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let program = parse_program(&source).unwrap_or_else(|e| panic!("{name}: {e}"));
            Case {
                entry: header(&source, "entry").to_string(),
                inputs: Store::parse_assignments(header(&source, "input")).unwrap(),
                weights: Store::parse_assignments(header(&source, "weights")).unwrap(),
                name,
                source,
                program,
            }
        })
        .collect()
}

pub fn case(name: &str) -> Case {
    corpus().into_iter().find(|c| c.name == name).unwrap_or_else(|| panic!("no corpus program {name}"))
}

/// `count` plans with each site's mode drawn at random, fixed seed.
pub fn random_plans(p: &Program, entry: &str, count: usize, seed: u64) -> Vec<CheckpointPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sites = reachable_sites(p, entry);
    (0..count)
        .map(|_| {
            let mut plan = CheckpointPlan::joint_all(p, entry);
            for (s, _) in &sites {
                if rng.gen_bool(0.5) {
                    plan.set(s.clone(), Mode::Split);
                }
            }
            plan
        })
        .collect()
}

/// Joint-all, split-all and `mixed` sampled plans.
pub fn plans(p: &Program, entry: &str, mixed: usize) -> Vec<CheckpointPlan> {
    let mut out = vec![CheckpointPlan::joint_all(p, entry), CheckpointPlan::split_all(p, entry)];
    out.extend(random_plans(p, entry, mixed, 0x5eed));
    out
}

/// One simulated plan next to the engine run it models.
#[derive(Debug)]
pub struct Agreement {
    pub program: String,
    pub plan: String,
    pub uniform: bool,
    pub predicted_peak: f64,
    pub peak: u64,
    pub predicted_ops: f64,
    pub ops: u64,
}

impl Agreement {
    pub fn holds(&self) -> bool {
        (self.predicted_peak - self.peak as f64).abs() <= 0.05 * self.peak as f64
            && self.predicted_ops == self.ops as f64
    }
}

/// Procedures called from more than one site.
pub fn shared_callees(p: &Program, entry: &str) -> Vec<String> {
    let mut callees: Vec<String> = reachable_sites(p, entry).into_iter().map(|(_, c)| c).collect();
    callees.sort();
    let mut out: Vec<String> = callees.windows(2).filter(|w| w[0] == w[1]).map(|w| w[0].clone()).collect();
    out.dedup();
    out
}

/// Calibrates on the joint-all and split-all runs of every corpus program,
/// then simulates those two plans and `mixed` sampled ones.
pub fn agreement(mixed: usize) -> Vec<Agreement> {
    use ckptad::adjoint::{differentiate, DiffOptions};
    use ckptad::costmodel::{calibrate, simulate, PlanVector};
    let mut out = Vec::new();
    for case in corpus() {
        let p = &case.program;
        let run = |plan: &CheckpointPlan| {
            differentiate(p, &case.entry, &case.inputs, &case.weights, plan, DiffOptions::default()).unwrap()
        };
        let all = plans(p, &case.entry, mixed);
        let (joint, split) = (run(&all[0]), run(&all[1]));
        let (tree, _) = calibrate(&joint.tree, &split.tree).unwrap();
        for (k, plan) in all.iter().enumerate() {
            let stats = match k {
                0 => joint.stats.clone(),
                1 => split.stats.clone(),
                _ => run(plan).stats,
            };
            let prof = simulate(&tree, &PlanVector::from_site_plan(&tree, plan), 0.0).unwrap();
            out.push(Agreement {
                program: case.name.clone(),
                plan: plan.describe(p, &case.entry),
                uniform: k < 2,
                predicted_peak: prof.peak_bytes,
                peak: stats.peak_bytes,
                predicted_ops: prof.total_time,
                ops: stats.ops(),
            });
        }
    }
    out
}

pub fn up(callee: &ProcDef, args: &[LValue], set: &VarSet) -> VarSet {
    callee.params.iter().zip(args).filter(|(p, _)| set.contains(&p.name)).map(|(_, a)| a.name.clone()).collect()
}

pub fn writes(p: &Program, sums: &BTreeMap<String, ProcSummary>, stmts: &[Stmt]) -> VarSet {
    let mut out = VarSet::new();
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { lhs, .. } => {
                out.insert(lhs.name.clone());
            }
            StmtKind::Call { callee, args, .. } => {
                out.extend(&up(p.proc(callee).unwrap(), args, &sums[callee].may_write))
            }
            StmtKind::For { body, .. } => out.extend(&writes(p, sums, body)),
            StmtKind::If { then_body, else_body, .. } => {
                out.extend(&writes(p, sums, then_body));
                out.extend(&writes(p, sums, else_body));
            }
        }
    }
    out
}

/// For every call in `stmts`: the call, and what the code after it in the
/// same procedure may write (a whole loop body counts as after).
fn calls_with_downstream<'a>(
    p: &Program,
    sums: &BTreeMap<String, ProcSummary>,
    stmts: &'a [Stmt],
    after: &VarSet,
    out: &mut Vec<(&'a Stmt, VarSet)>,
) {
    for (k, s) in stmts.iter().enumerate() {
        let rest = writes(p, sums, &stmts[k + 1..]).union(after);
        match &s.kind {
            StmtKind::Assign { .. } => {}
            StmtKind::Call { .. } => out.push((s, rest)),
            StmtKind::For { body, .. } => {
                calls_with_downstream(p, sums, body, &writes(p, sums, body).union(&rest), out)
            }
            StmtKind::If { then_body, else_body, .. } => {
                calls_with_downstream(p, sums, then_body, &rest, out);
                calls_with_downstream(p, sums, else_body, &rest, out);
            }
        }
    }
}

/// Every call site of the program with its statement and downstream writes.
pub fn call_sites_with_downstream<'a>(
    p: &'a Program,
    sums: &BTreeMap<String, ProcSummary>,
) -> Vec<(SiteId, &'a Stmt, VarSet)> {
    let mut sites = Vec::new();
    for proc in p.procs.values() {
        let mut found = Vec::new();
        calls_with_downstream(p, sums, &proc.body, &VarSet::new(), &mut found);
        sites.extend(found.into_iter().map(|(s, d)| (SiteId::new(proc.name.clone(), s.span), s, d)));
    }
    sites
}
