use super::*;
use crate::adjoint::plan::{CheckpointPlan, Mode};
use crate::lang::{parse_program, Program, SiteId, Span};

fn set(names: &[&str]) -> VarSet {
    names.iter().copied().collect()
}

const SUB1: &str = "\
proc sub1(x, y, z)
  local tmp1
  tmp1 = sin(y)
  y = y * y
  tmp1 = tmp1 * x
  z = y / tmp1
end
";

fn with_main(main: &str) -> Program {
    parse_program(&format!("{SUB1}{main}")).unwrap()
}

fn records(r: &AnalysisResults, proc: &str) -> Vec<VarSet> {
    r.procs[proc].stmts.iter().map(|s| s.record.clone()).collect()
}

fn sliced(r: &AnalysisResults, proc: &str) -> Vec<bool> {
    r.procs[proc].stmts.iter().map(|s| s.sliced).collect()
}

#[test]
fn sub1_joint_records_and_slicing() {
    let p = parse_program(SUB1).unwrap();
    let r = analyze(&p, "sub1", &CheckpointPlan::joint_all(&p, "sub1"));
    assert_eq!(records(&r, "sub1"), vec![set(&[]), set(&["y"]), set(&["tmp1"]), set(&[])]);
    assert_eq!(sliced(&r, "sub1"), vec![false, false, false, true]);
    assert!(r.procs["sub1"].tail_live.is_empty());
}

#[test]
fn linear_statement_records_nothing() {
    let p = parse_program("proc f(x, y, z)\n z = x + y\nend\n").unwrap();
    let r = analyze(&p, "f", &CheckpointPlan::default());
    assert!(r.procs["f"].stmts[0].record.is_empty());
}

#[test]
fn self_overwrite_is_recorded() {
    // y reads x nonlinearly, so x stays adjoint-live and the overwrite is kept
    let p = parse_program("proc f(x, y)\n x = x * x\n y = sin(x)\nend\n").unwrap();
    let r = analyze(&p, "f", &CheckpointPlan::default());
    assert_eq!(r.procs["f"].stmts[0].record, set(&["x"]));
    assert!(!r.procs["f"].stmts[0].sliced);
}

#[test]
fn everything_live_in_a_chain() {
    let p = parse_program("proc f(x, y)\n local a, b\n a = x * x\n b = a * a\n y = b * b\nend\n").unwrap();
    let r = analyze(&p, "f", &CheckpointPlan::default());
    assert_eq!(sliced(&r, "f"), vec![false, false, true]);
    // the last write only feeds the output; it is sliced but keeps its adjoint
}

const CALLER_READS_Z: &str = "\
proc main(a, b, c, w)
  call sub1(a, b, c)
  w = c * c
end
";

#[test]
fn split_tail_keeps_last_statement() {
    let p = with_main(CALLER_READS_Z);
    let plan = CheckpointPlan::split_all(&p, "main");
    let r = analyze(&p, "main", &plan);
    let s = &r.procs["sub1"];
    assert!(s.split_called);
    assert!(s.tail_live.contains("z"));
    assert_eq!(sliced(&r, "sub1"), vec![false, false, false, false]);
    assert_eq!(s.split_locals, set(&["tmp1"]));
    // the callee's backward sweep reads y and x after the call returns
    assert!(set(&["a", "b"]).is_subset(&r.procs["main"].stmts[1].tbr));
    assert!(r.snapshots.is_empty());
}

#[test]
fn joint_site_snapshots() {
    let p = with_main("proc main(a, b, c)\n call sub1(a, b, c)\nend\n");
    let r = analyze(&p, "main", &CheckpointPlan::joint_all(&p, "main"));
    assert_eq!(r.snapshot(&SiteId::new("main", Span::new(9, 2))), Some(&set(&["b"])));

    let p = with_main("proc main(a, b, c)\n call sub1(a, b, c)\n a = 0\nend\n");
    let r = analyze(&p, "main", &CheckpointPlan::joint_all(&p, "main"));
    assert_eq!(r.snapshot(&SiteId::new("main", Span::new(9, 2))), Some(&set(&["a", "b"])));
}

#[test]
fn snapshot_of_pure_reader_is_empty() {
    let src = "proc r(x, y)\n local t\n t = x * y\nend\nproc main(a, b)\n call r(a, b)\nend\n";
    let p = parse_program(src).unwrap();
    let r = analyze(&p, "main", &CheckpointPlan::joint_all(&p, "main"));
    assert!(r.snapshots.values().all(VarSet::is_empty));
}

#[test]
fn loop_body_counts_as_downstream() {
    let src = "\
proc g(x, y)
  y = x * y
end
proc main(a, b, n)
  for i = 1 .. 3
    call g(a, b)
    a = a + 1
  end
end
";
    let p = parse_program(src).unwrap();
    let r = analyze(&p, "main", &CheckpointPlan::joint_all(&p, "main"));
    let snp = r.snapshot(&SiteId::new("main", Span::new(6, 5))).unwrap();
    assert_eq!(snp, &set(&["a", "b"]));
}

#[test]
fn forward_only_local_is_not_saved() {
    let src = "\
proc f(x, y)
  local t, u
  t = x * 2
  y = t
  u = sin(x)
  y = y * u
end
proc main(a, b)
  call f(a, b)
end
";
    let p = parse_program(src).unwrap();
    let r = analyze(&p, "main", &CheckpointPlan::split_all(&p, "main"));
    let f = &r.procs["f"];
    assert_eq!(f.split_locals, set(&["u"]));
}

#[test]
fn no_locals_means_nothing_saved() {
    let src = "proc f(x, y)\n y = x * y\nend\nproc main(a, b)\n call f(a, b)\nend\n";
    let p = parse_program(src).unwrap();
    let r = analyze(&p, "main", &CheckpointPlan::split_all(&p, "main"));
    assert!(r.procs["f"].split_locals.is_empty());
}

#[test]
fn joint_only_tail_is_empty() {
    let p = with_main(CALLER_READS_Z);
    let r = analyze(&p, "main", &CheckpointPlan::joint_all(&p, "main"));
    assert!(r.procs["sub1"].tail_live.is_empty());
    assert!(r.procs["sub1"].entry_tbr.is_empty());
    assert!(!r.procs["sub1"].split_called);
}

#[test]
fn analysis_is_idempotent() {
    let p = with_main(CALLER_READS_Z);
    let plan = CheckpointPlan::from_split_procs(&p, "main", &["sub1"]).unwrap();
    assert_eq!(analyze(&p, "main", &plan), analyze(&p, "main", &plan));
}

#[test]
fn loop_tbr_reaches_fixpoint() {
    let src = "\
proc f(x, y)
  for i = 1 .. 4
    y = y * x
    x = x + 1
  end
end
";
    let p = parse_program(src).unwrap();
    let r = analyze(&p, "f", &CheckpointPlan::default());
    // x is read by y's derivative in the next iteration, so its overwrite is recorded
    assert_eq!(r.procs["f"].stmts[2].record, set(&["x"]));
    assert_eq!(r.procs["f"].stmts[1].record, set(&["y"]));
}

#[test]
fn json_shape() {
    let p = with_main(CALLER_READS_Z);
    let mut plan = CheckpointPlan::joint_all(&p, "main");
    plan.set(SiteId::new("main", Span::new(9, 3)), Mode::Split);
    let r = analyze(&p, "main", &plan);
    let j = r.to_json(&p);
    assert_eq!(j["procedures"]["sub1"]["mayWrite"], serde_json::json!(["tmp1", "y", "z"]));
    assert_eq!(j["procedures"]["sub1"]["split"]["splitLocals"], serde_json::json!(["tmp1"]));
    assert_eq!(j["procedures"]["sub1"]["statements"][1]["record"], serde_json::json!(["y"]));
    assert!(j["procedures"]["main"]["split"].is_null());
}
