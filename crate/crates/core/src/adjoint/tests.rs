use super::*;
use crate::lang::{parse_program, Program, Store};

const SUB1: &str = "\
proc sub1(x, y, z)
  local tmp1
  tmp1 = sin(y)
  y = y * y
  tmp1 = tmp1 * x
  z = y / tmp1
end
";

const NESTED: &str = "\
proc leaf(u, v)
  local t
  t = sin(u) * v
  v = v * t + u
end
proc mid(a, b, c)
  call leaf(a, b)
  c = c + a * b
  call leaf(c, a)
end
proc main(p, q, r, s)
  local w
  w = p * q
  call mid(p, q, r)
  for i = 1 .. 3
    call leaf(s, r)
    if r > 0
      r = r * w
    else
      r = r - w
    end
  end
  call mid(q, r, s)
  p = p * s
end
";

fn opts() -> DiffOptions {
    DiffOptions { shadow: true, ..Default::default() }
}

fn run(p: &Program, entry: &str, inputs: &Store, weights: &Store, plan: &CheckpointPlan) -> Differentiation {
    differentiate(p, entry, inputs, weights, plan, opts()).unwrap()
}

#[test]
fn sub1_matches_closed_form() {
    let p = parse_program(SUB1).unwrap();
    let (x, y) = (2.0f64, 1.0f64);
    let inputs = Store::new().with_scalar("x", x).with_scalar("y", y);
    let weights = Store::new().with_scalar("z", 1.0);
    let d = run(&p, "sub1", &inputs, &weights, &CheckpointPlan::default());
    let dx = -y * y / (x * x * y.sin());
    let dy = (2.0 * y * y.sin() - y * y * y.cos()) / (x * y.sin() * y.sin());
    let gx = d.gradient.scalar("x").unwrap();
    let gy = d.gradient.scalar("y").unwrap();
    assert!((gx - dx).abs() < 1e-12, "{gx} vs {dx}");
    assert!((gy - dy).abs() < 1e-12, "{gy} vs {dy}");
    assert_eq!(d.gradient.scalar("z"), Some(0.0));
    assert_eq!(d.stats.tape_bytes, 16);
    assert_eq!(d.stats.peak_bytes, 16);
    assert_eq!(d.stats.fwd_sweep_time, 3);
    assert_eq!(d.stats.bwd_sweep_time, 4);
    assert!(d.stats.shadow_checked == 4);
    let z = d.primal_out.scalar("z").unwrap();
    assert!((z - y * y / (x * y.sin())).abs() < 1e-12);
}

#[test]
fn zero_seed_gives_zero_gradient() {
    let p = parse_program(SUB1).unwrap();
    let inputs = Store::new().with_scalar("x", 2.0).with_scalar("y", 1.0);
    let d = run(&p, "sub1", &inputs, &Store::new().with_scalar("z", 0.0), &CheckpointPlan::default());
    assert!(d.gradient.0.values().all(|v| v.cells().iter().all(|c| *c == 0.0)));
    assert_eq!(d.stats.pushed_bytes, d.stats.popped_bytes);
}

#[test]
fn linear_program_is_exact_and_records_nothing() {
    let p = parse_program("proc lin(x, y, z)\n z = 3 * x + y\nend\n").unwrap();
    let inputs = Store::new().with_scalar("x", 0.5).with_scalar("y", -4.0);
    let d = run(&p, "lin", &inputs, &Store::new().with_scalar("z", 1.0), &CheckpointPlan::default());
    assert_eq!(d.gradient.scalar("x"), Some(3.0));
    assert_eq!(d.gradient.scalar("y"), Some(1.0));
    assert_eq!(d.stats.pushed_bytes, 0);
}

#[test]
fn loop_tape_counts_one_value_per_iteration_plus_count() {
    let p = parse_program("proc pw(x, y, n)\n for i = 1 .. n\n  y = y * x\n end\nend\n").unwrap();
    for n in [0.0, 1.0, 7.0] {
        let inputs = Store::new().with_scalar("x", 1.1).with_scalar("y", 2.0).with_scalar("n", n);
        let d = run(&p, "pw", &inputs, &Store::new().with_scalar("y", 1.0), &CheckpointPlan::default());
        assert_eq!(d.stats.tape_bytes, 8 * n as u64 + 8);
        let want = n * 1.1f64.powi(n as i32 - 1) * 2.0;
        if n > 0.0 {
            assert!((d.gradient.scalar("x").unwrap() - want).abs() < 1e-12);
        }
    }
}

fn nested_inputs() -> (Store, Store) {
    let inputs = Store::new().with_scalar("p", 0.7).with_scalar("q", 1.3).with_scalar("r", 0.4).with_scalar("s", -0.9);
    let weights = Store::new().with_scalar("p", 1.0).with_scalar("r", 0.5).with_scalar("s", -2.0);
    (inputs, weights)
}

#[test]
fn plans_agree_bit_for_bit() {
    let p = parse_program(NESTED).unwrap();
    let (inputs, weights) = nested_inputs();
    let base = run(&p, "main", &inputs, &weights, &CheckpointPlan::joint_all(&p, "main"));
    let sites: Vec<_> = reachable_sites(&p, "main").into_iter().map(|(s, _)| s).collect();
    let mut plans = vec![CheckpointPlan::split_all(&p, "main")];
    for mask in 0..(1u32 << sites.len()) {
        let mut plan = CheckpointPlan::joint_all(&p, "main");
        for (k, s) in sites.iter().enumerate() {
            if mask >> k & 1 == 1 {
                plan.set(s.clone(), Mode::Split);
            }
        }
        plans.push(plan);
    }
    for plan in &plans {
        let d = run(&p, "main", &inputs, &weights, plan);
        assert_eq!(d.gradient, base.gradient, "plan {}", plan.describe(&p, "main"));
        assert_eq!(d.primal_out, base.primal_out);
    }
}

#[test]
fn execution_counts_follow_modes() {
    let p = parse_program(NESTED).unwrap();
    let (inputs, weights) = nested_inputs();
    for plan in [CheckpointPlan::joint_all(&p, "main"), CheckpointPlan::split_all(&p, "main")] {
        let d = run(&p, "main", &inputs, &weights, &plan);
        assert!(!d.stats.sites.is_empty());
        for s in d.stats.sites.values() {
            let per = match s.mode {
                Mode::Joint => 2,
                Mode::Split => 1,
            };
            assert_eq!(s.executions, per * s.traversals);
        }
    }
}

#[test]
fn split_all_skips_plain_runs() {
    let p = parse_program(NESTED).unwrap();
    let (inputs, weights) = nested_inputs();
    let j = run(&p, "main", &inputs, &weights, &CheckpointPlan::joint_all(&p, "main"));
    let s = run(&p, "main", &inputs, &weights, &CheckpointPlan::split_all(&p, "main"));
    assert!(s.stats.ops() < j.stats.ops());
    assert_eq!(s.stats.plain_time, 0);
    assert_eq!(j.tree.count(), s.tree.count());
}

#[test]
fn errors_are_reported() {
    let p = parse_program(SUB1).unwrap();
    let w = Store::new().with_scalar("z", 1.0);
    let zero = Store::new().with_scalar("x", 1.0).with_scalar("y", 0.0);
    let e = differentiate(&p, "sub1", &zero, &w, &CheckpointPlan::default(), opts()).unwrap_err();
    assert!(e.to_string().contains("division by zero"), "{e}");
    let ok = Store::new().with_scalar("x", 1.0).with_scalar("y", 1.0);
    assert!(differentiate(&p, "sub1", &ok, &Store::new(), &CheckpointPlan::default(), opts()).is_err());
    assert!(differentiate(&p, "sub1", &ok, &Store::new().with_scalar("tmp1", 1.0), &CheckpointPlan::default(), opts())
        .is_err());
    let q = parse_program(&format!("{SUB1}proc m(a, b, c)\n call sub1(a, b, c)\nend\n")).unwrap();
    let partial = CheckpointPlan::default();
    assert!(matches!(
        differentiate(&q, "m", &ok, &Store::new().with_scalar("c", 1.0), &partial, opts()),
        Err(AdError::Plan(_))
    ));
}

#[test]
fn fd_agrees_on_nested_program() {
    let p = parse_program(NESTED).unwrap();
    let (inputs, weights) = nested_inputs();
    let r = fd_check(&p, "main", &inputs, &weights, &CheckpointPlan::joint_all(&p, "main"), 1e-6, Default::default())
        .unwrap();
    assert!(r.max_rel_error < 1e-5, "{r:?}");
}

const SUB1_B: &str = "\
proc sub1_b(x, xb, y, yb, z, zb)
  local tmp1, tmp1b
  tmp1 = sin(y)
  PUSH(y)
  y = y * y
  PUSH(tmp1)
  tmp1 = tmp1 * x
  ! backward sweep
  yb = yb + zb / tmp1
  tmp1b = tmp1b - y * zb / tmp1**2
  zb = 0.0
  POP(tmp1)
  xb = xb + tmp1 * tmp1b
  tmp1b = x * tmp1b
  POP(y)
  yb = 2.0 * y * yb
  yb = yb + cos(y) * tmp1b
  tmp1b = 0.0
end
";

#[test]
fn sub1_listing() {
    let p = parse_program(SUB1).unwrap();
    let text = emit_listing(&p, "sub1", &CheckpointPlan::default());
    assert_eq!(text.trim_end(), SUB1_B.trim_end());
    // the last primal assignment is not replayed in the forward sweep
    let (fwd, _) = text.split_once("! backward sweep").unwrap();
    assert!(!fwd.contains("z = y / tmp1"));
    assert_eq!(fwd.matches("PUSH(").count(), 2);
}

#[test]
fn split_listing_keeps_tail_and_saves_locals() {
    let p = parse_program(&format!("{SUB1}proc main(a, b, c, w)\n  call sub1(a, b, c)\n  w = c * c\nend\n")).unwrap();
    let text = emit_listing(&p, "main", &CheckpointPlan::split_all(&p, "main"));
    assert!(text.contains("call sub1_fwd(a, b, c)"));
    assert!(text.contains("call sub1_bwd(a, ab, b, bb, c, cb)"));
    let fwd = &text[text.find("proc sub1_fwd").unwrap()..text.find("proc sub1_bwd").unwrap()];
    assert!(fwd.contains("  z = y / tmp1\n"));
    assert!(fwd.trim_end().ends_with("PUSH_LOCALS(tmp1)\nend"));
    let bwd = &text[text.find("proc sub1_bwd").unwrap()..];
    assert!(bwd.contains("local tmp1, tmp1b\n  POP_LOCALS(tmp1)\n"));
    assert!(!text.contains("sub1_b("));
}

#[test]
fn empty_procedure_listing() {
    let p = parse_program("proc e(x)\nend\n").unwrap();
    assert_eq!(emit_listing(&p, "e", &CheckpointPlan::default()), "proc e_b(x, xb)\n  ! backward sweep\nend\n");
}

#[test]
fn listing_names_avoid_collisions() {
    let src = "proc f(x, xb, seedb)\n  local f_b\n  f_b = x * x\n  x = f_b * f_b\n  seedb = x * xb\nend\n";
    let p = parse_program(src).unwrap();
    let a = emit_listing(&p, "f", &CheckpointPlan::default());
    assert_eq!(a, emit_listing(&p, "f", &CheckpointPlan::default()));
    assert!(a.starts_with("proc f_b(x, xb2, xb, xbb, seedb, seedbb)\n  local f_b, f_bb\n"), "{a}");
    let q = parse_program("proc g_b(u)\n  u = u * u\nend\nproc g(v)\n  call g_b(v)\nend\n").unwrap();
    let b = emit_listing(&q, "g", &CheckpointPlan::joint_all(&q, "g"));
    assert!(b.contains("proc g_b2(v, vb)") && b.contains("proc g_b_b(u, ub)"), "{b}");
}

#[test]
fn control_records_in_listing() {
    let p = parse_program(NESTED).unwrap();
    let plan = CheckpointPlan::from_split_procs(&p, "main", &["leaf"]).unwrap();
    let text = emit_listing(&p, "main", &plan);
    for needle in
        ["PUSH_BRANCH(1)", "PUSH_BRANCH(0)", "PUSH_LOOP(i)", "POP_LOOP(i)", "for i reversed", "POP_BRANCH(branch)"]
    {
        assert!(text.contains(needle), "{needle}");
    }
    assert!(text.contains("PUSH_SNAPSHOT(p, q, r)"));
    assert!(text.contains("call leaf_fwd(s, r)") && text.contains("call mid_b(q, qb, r, rb, s, sb)"));
}
