//! Cost trees measured from engine runs.

use crate::adjoint::RunNode;

use super::{CallTreeCost, CostError, OwnCosts};

/// Builds a cost tree from the call trees of a joint-all and a split-all
/// run of the same inputs. Snapshot sizes and primal times come from the
/// joint-all run, saved-locals sizes from the split-all run. Tape sizes
/// and sweep times are taken from the joint-all run; a note is returned
/// for every node where the split-all run measured something else.
///
/// The root is never re-run, so its primal time is left at zero.
pub fn calibrate(joint_all: &RunNode, split_all: &RunNode) -> Result<(CallTreeCost, Vec<String>), CostError> {
    let mut notes = Vec::new();
    let tree = node(joint_all, split_all, "", &mut notes)?;
    Ok((tree, notes))
}

fn segments(n: &RunNode) -> Vec<(f64, f64)> {
    n.segments.iter().map(|&(ops, tape)| (ops as f64, tape as f64)).collect()
}

fn node(j: &RunNode, s: &RunNode, path: &str, notes: &mut Vec<String>) -> Result<CallTreeCost, CostError> {
    let here = if path.is_empty() { j.name.clone() } else { format!("{path}/{}", j.name) };
    if j.name != s.name || j.site != s.site || j.children.len() != s.children.len() {
        return Err(CostError::Calibration(format!("the two runs reached different calls at `{here}`")));
    }
    if j.site.is_some() && j.plain_total.is_none() {
        return Err(CostError::Calibration(format!("`{here}` has no plain-run time; the first run must be joint-all")));
    }
    for (what, a, b) in
        [("tape", j.tape, s.tape), ("forward ops", j.fwd_ops, s.fwd_ops), ("backward ops", j.bwd_ops, s.bwd_ops)]
    {
        if a != b {
            notes.push(format!("`{here}`: {what} differs between the runs ({a} joint-all, {b} split-all)"));
        }
    }
    let mut children =
        j.children.iter().zip(&s.children).map(|(cj, cs)| node(cj, cs, &here, notes)).collect::<Result<Vec<_>, _>>()?;
    // Tape the split-all run added right after a call is put on that call.
    let mut split_segs = segments(s);
    if j.segments.len() == s.segments.len() {
        for (k, c) in children.iter_mut().enumerate() {
            let extra = split_segs[k + 1].1 - j.segments[k + 1].1 as f64;
            if extra > 0.0 {
                c.caller_tape = extra;
                split_segs[k + 1].1 -= extra;
            }
        }
    }
    let split_tape = split_segs.iter().map(|x| x.1).sum();
    let below: u64 = j.children.iter().filter_map(|c| c.plain_total).sum();
    let own = j.plain_total.map_or(0, |t| t.saturating_sub(below));
    Ok(CallTreeCost {
        name: j.name.clone(),
        site: j.site.clone(),
        t_primal: own as f64,
        t_fwd: j.fwd_ops as f64,
        t_bwd: j.bwd_ops as f64,
        tape: j.tape as f64,
        snapshot: j.snapshot as f64,
        record: j.record as f64,
        locals: s.locals as f64,
        segments: segments(j),
        caller_tape: 0.0,
        split_costs: (j.site.is_some()
            && (j.fwd_ops, j.bwd_ops, segments(j)) != (s.fwd_ops, s.bwd_ops, split_segs.clone()))
            .then_some(OwnCosts {
                t_fwd: s.fwd_ops as f64,
                t_bwd: s.bwd_ops as f64,
                tape: split_tape,
                segments: split_segs,
            }),
        children,
    })
}
