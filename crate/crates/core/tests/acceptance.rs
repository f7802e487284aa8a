//! One PASS/FAIL line per acceptance criterion. Exits non-zero when a
//! criterion outside `KNOWN_FAILURES` fails, or one inside it passes.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ckptad::adjoint::{differentiate, emit_listing, fd_check, CheckpointPlan, DiffOptions, Mode, RunNode};
use ckptad::costmodel::{enumerate_pareto, paper_scenarios, Strategy};
use ckptad::dataflow::compute_summaries;
use ckptad::lang::{EvalOptions, Kind, StmtKind};
use ckptad::metrics::{compare, PlanSet};

use common::{agreement, call_sites_with_downstream, case, corpus, plans, up};

/// Criteria that fail for a documented structural reason.
const KNOWN_FAILURES: &[u32] = &[8];

type Check = Result<String, String>;

type Criterion = (u32, &'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn quick(start: Instant, what: &str) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < Duration::from_secs(1), format!("{what} took {t:?}"))
}

/// Listing events: forward statements by number, pushes, pops and runs of
/// derivative lines.
fn listing_events(text: &str) -> Vec<String> {
    let fwd = ["tmp1 = sin(y)", "y = y * y", "tmp1 = tmp1 * x", "z = y / tmp1"];
    let mut out: Vec<String> = Vec::new();
    let mut backward = false;
    for line in text.lines().map(str::trim) {
        if line.starts_with("proc ") || line.starts_with("local ") || line == "end" {
            continue;
        }
        if line == "! backward sweep" {
            backward = true;
        } else if line.starts_with("PUSH(") || line.starts_with("POP(") {
            out.push(line.to_string());
        } else if !backward {
            let k = fwd.iter().position(|f| *f == line).map_or(0, |k| k + 1);
            out.push(format!("I{k}"));
        } else if out.last().is_some_and(|l| l.starts_with('D')) {
            let last = out.last_mut().unwrap();
            *last = format!("{last}|{line}");
        } else {
            out.push(format!("D|{line}"));
        }
    }
    out
}

fn sub1_listing() -> Check {
    let start = Instant::now();
    let c = case("sub1");
    let text = emit_listing(&c.program, "sub1", &CheckpointPlan::joint_all(&c.program, "sub1"));
    let ev = listing_events(&text);
    let shape: Vec<&str> = ev.iter().map(|e| if e.starts_with('D') { "D" } else { e.as_str() }).collect();
    ensure(
        shape == ["I1", "PUSH(y)", "I2", "PUSH(tmp1)", "I3", "D", "POP(tmp1)", "D", "POP(y)", "D"],
        format!("event order {shape:?}"),
    )?;
    ensure(ev[5].contains("zb / tmp1") && ev[5].contains("tmp1b = tmp1b -"), "first block is not the adjoint of I4")?;
    ensure(ev[7].contains("xb = xb + tmp1 * tmp1b"), "middle block is not the adjoint of I3")?;
    let last: Vec<&str> = ev[9].split('|').skip(1).collect();
    let i2 = last.iter().position(|l| *l == "yb = 2.0 * y * yb");
    let i1 = last.iter().position(|l| *l == "yb = yb + cos(y) * tmp1b");
    ensure(matches!((i2, i1), (Some(a), Some(b)) if a < b), format!("last block {last:?}"))?;
    quick(start, "emit")?;
    Ok("push/pop placement and statement order as expected; I4 sliced".into())
}

fn depth(n: &RunNode) -> usize {
    n.children.iter().map(|c| 1 + depth(c)).max().unwrap_or(0)
}

fn gradients() -> Check {
    let cases = corpus();
    ensure(cases.len() >= 10, format!("only {} programs", cases.len()))?;
    let mut worst: f64 = 0.0;
    let mut kinds = [false; 5];
    for c in &cases {
        let p = &c.program;
        let start = Instant::now();
        let plan = CheckpointPlan::joint_all(p, &c.entry);
        let fd = fd_check(p, &c.entry, &c.inputs, &c.weights, &plan, 1e-6, EvalOptions::default())
            .map_err(|e| format!("{}: {e}", c.name))?;
        quick(start, &c.name)?;
        ensure(fd.max_rel_error <= 1e-5, format!("{}: relative error {:e}", c.name, fd.max_rel_error))?;
        worst = worst.max(fd.max_rel_error);
        let d = differentiate(p, &c.entry, &c.inputs, &c.weights, &plan, DiffOptions::default()).unwrap();
        let has = |pred: &dyn Fn(&StmtKind) -> bool| {
            p.procs.values().any(|pr| {
                let mut hit = false;
                ckptad::lang::visit_stmts(&pr.body, &mut |s| hit |= pred(&s.kind));
                hit
            })
        };
        kinds[0] |= !has(&|k| !matches!(k, StmtKind::Assign { .. }));
        kinds[1] |= c.source.contains(".. 100");
        kinds[2] |= depth(&d.tree) >= 3;
        kinds[3] |= has(&|k| matches!(k, StmtKind::If { .. }));
        kinds[4] |=
            p.procs.values().any(|pr| pr.params.iter().chain(&pr.locals).any(|d| matches!(d.kind, Kind::Array(_))));
    }
    ensure(kinds.iter().all(|k| *k), format!("missing program kinds {kinds:?}"))?;
    Ok(format!("{} programs, worst relative error {worst:.1e}", cases.len()))
}

fn plan_invariance() -> Check {
    let mut runs = 0;
    for c in corpus() {
        let all = plans(&c.program, &c.entry, 8);
        let grads: Vec<_> = all
            .iter()
            .map(|plan| {
                differentiate(&c.program, &c.entry, &c.inputs, &c.weights, plan, DiffOptions::default())
                    .map(|d| d.gradient)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| format!("{}: {e}", c.name))?;
        ensure(grads.iter().all(|g| *g == grads[0]), format!("{}: gradients differ across plans", c.name))?;
        runs += grads.len();
    }
    Ok(format!("bit-identical gradients over {runs} runs"))
}

fn checkpoint_semantics() -> Check {
    let mut sites = 0;
    for c in corpus() {
        for plan in plans(&c.program, &c.entry, 8) {
            // the engine refuses to finish with entries or unmatched tags left
            let d = differentiate(&c.program, &c.entry, &c.inputs, &c.weights, &plan, DiffOptions::default())
                .map_err(|e| format!("{}: {e}", c.name))?;
            ensure(d.stats.pushed_bytes == d.stats.popped_bytes, format!("{}: stack not balanced", c.name))?;
            for (site, s) in &d.stats.sites {
                let per = if s.mode == Mode::Joint { 2 } else { 1 };
                ensure(
                    s.executions == per * s.traversals,
                    format!("{} {site}: {} executions over {} traversals", c.name, s.executions, s.traversals),
                )?;
                sites += 1;
            }
        }
    }
    Ok(format!("{sites} site records: joint bodies run twice, split bodies once, stack empty"))
}

fn snapshot_law() -> Check {
    let mut checked = 0;
    let mut reads = 0;
    for c in corpus() {
        let p = &c.program;
        let sums = compute_summaries(p);
        let sites = call_sites_with_downstream(p, &sums);
        for plan in plans(p, &c.entry, 8) {
            let opts = DiffOptions { shadow: true, ..DiffOptions::default() };
            let d = differentiate(p, &c.entry, &c.inputs, &c.weights, &plan, opts)
                .map_err(|e| format!("{}: {e}", c.name))?;
            reads += d.stats.shadow_checked;
            for (site, snp) in &d.stats.snapshot_sets {
                let (_, stmt, downstream) =
                    sites.iter().find(|(s, _, _)| s == site).ok_or(format!("unknown site {site}"))?;
                let StmtKind::Call { callee, args, .. } = &stmt.kind else { unreachable!() };
                let callee_def = p.proc(callee).unwrap();
                let live = up(callee_def, args, &sums[callee].adj_upward_uses);
                let out = up(callee_def, args, &sums[callee].may_write).union(downstream);
                ensure(snp.is_subset(&live), format!("{} {site}: {snp} not within {live}", c.name))?;
                ensure(snp.is_subset(&out), format!("{} {site}: {snp} not within {out}", c.name))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} snapshot sets within both bounds; {reads} derivative reads matched the reference run"))
}

fn scenario_a() -> Check {
    let start = Instant::now();
    let [a, _] = paper_scenarios(0.0);
    ensure(a.min_peak() == [Strategy::JointAll], format!("min peak {:?}", a.min_peak()))?;
    ensure(a.min_time() == [Strategy::SplitAll], format!("min time {:?}", a.min_time()))?;
    let front = enumerate_pareto(&a.tree(), 0.0).map_err(|e| e.to_string())?;
    let global = front.iter().map(|p| p.peak_bytes).fold(f64::MAX, f64::min);
    let joint = a.row(Strategy::JointAll).peak_bytes;
    ensure(global == joint, format!("global minimum {global} below Joint-All {joint}"))?;
    quick(start, "scenario A")?;
    Ok(format!(
        "Joint-All peak {joint:.2} is the global minimum, Split-All time {} is least",
        a.row(Strategy::SplitAll).total_time
    ))
}

fn scenario_b() -> Check {
    let [a, b] = paper_scenarios(0.0);
    let (lo, hi) = (b.min_peak(), b.max_peak());
    let hybrid = |s: &[Strategy]| s.len() == 1 && matches!(s[0], Strategy::Hybrid1 | Strategy::Hybrid2);
    ensure(hybrid(&lo) && hybrid(&hi) && lo != hi, format!("min {lo:?}, max {hi:?}"))?;
    let (max_a, max_b) = (a.row(a.max_peak()[0]).peak_bytes, b.row(hi[0]).peak_bytes);
    ensure(max_b < max_a, format!("max peak B {max_b} not below A {max_a}"))?;
    Ok(format!(
        "hybrids bound the peak ({:.0} to {:.0}); max peak {max_b:.0} < {max_a:.0}",
        b.row(lo[0]).peak_bytes,
        max_b
    ))
}

fn model_agreement() -> Check {
    let rows = agreement(4);
    let off: Vec<_> = rows.iter().filter(|a| !a.holds()).collect();
    if off.is_empty() {
        return Ok(format!("{} plans agree", rows.len()));
    }
    let shown: Vec<String> = off
        .iter()
        .map(|a| {
            format!("{} [{}] peak {}/{} ops {}/{}", a.program, a.plan, a.predicted_peak, a.peak, a.predicted_ops, a.ops)
        })
        .collect();
    Err(format!("{} of {} plans off: {}", off.len(), rows.len(), shown.join("; ")))
}

fn large_snapshot_regime() -> Check {
    let c = case("bigarray");
    let p = &c.program;
    let mut set = PlanSet::new().add("joint-all", "", CheckpointPlan::joint_all(p, &c.entry));
    set = set.add("split-all", "", CheckpointPlan::split_all(p, &c.entry));
    for (k, plan) in common::random_plans(p, &c.entry, 6, 9).into_iter().enumerate() {
        set = set.add(&format!("mixed-{k}"), "", plan);
    }
    let rows = compare(p, &c.entry, &c.inputs, &c.weights, &set, 0, 0.01, DiffOptions::default())
        .map_err(|e| e.to_string())?;
    let best = rows[1..]
        .iter()
        .filter(|r| r.time_gain_pct.unwrap() > 50.0 && r.mem_gain_pct.unwrap() >= 0.0)
        .max_by(|a, b| a.time_gain_pct.partial_cmp(&b.time_gain_pct).unwrap())
        .ok_or("no split plan gains over 50% time at no memory cost")?;
    Ok(format!(
        "{}: time gain {:.1}%, memory gain {:.1}% at kappa 0.01",
        best.id,
        best.time_gain_pct.unwrap(),
        best.mem_gain_pct.unwrap()
    ))
}

fn main() -> ExitCode {
    let checks: [Criterion; 9] = [
        (1, "adjoint listing of sub1", sub1_listing),
        (2, "gradients match finite differences", gradients),
        (3, "gradients do not depend on the plan", plan_invariance),
        (4, "checkpoint execution counts", checkpoint_semantics),
        (5, "snapshot sets", snapshot_law),
        (6, "scenario A orderings", scenario_a),
        (7, "scenario B bounds", scenario_b),
        (8, "model/engine agreement", model_agreement),
        (9, "large-snapshot regime", large_snapshot_regime),
    ];
    let mut surprises = 0;
    for (n, name, check) in checks {
        let result = check();
        let (word, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        let known = KNOWN_FAILURES.contains(&n);
        let note = if known { " (known)" } else { "" };
        println!("criterion {n} {word}{note}: {name}: {detail}");
        if result.is_ok() == known {
            surprises += 1;
        }
    }
    if surprises == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
