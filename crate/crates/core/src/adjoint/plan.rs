//! Per-call-site checkpointing plans.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{call_sites, topo_order, Program, SiteId};

use super::AdError;

/// How a call site is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Checkpointed: run plain first, re-run with recording when the
    /// backward sweep reaches the call.
    Joint,
    /// Not checkpointed: forward and backward sweeps of the callee run
    /// inline in the caller's sweeps.
    Split,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Joint => "joint",
            Mode::Split => "split",
        })
    }
}

/// Call sites reachable from `entry`, with their callees.
pub fn reachable_sites(program: &Program, entry: &str) -> Vec<(SiteId, String)> {
    topo_order(program, entry)
        .iter()
        .filter_map(|name| program.proc(name))
        .flat_map(|p| call_sites(p).into_iter().map(|(s, c)| (s, c.to_string())))
        .collect()
}

/// Mode assignment for every call site reachable from an entry procedure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CheckpointPlan {
    sites: BTreeMap<SiteId, Mode>,
}

impl CheckpointPlan {
    fn uniform(program: &Program, entry: &str, mode: Mode) -> Self {
        CheckpointPlan { sites: reachable_sites(program, entry).into_iter().map(|(s, _)| (s, mode)).collect() }
    }

    /// Every call checkpointed.
    pub fn joint_all(program: &Program, entry: &str) -> Self {
        Self::uniform(program, entry, Mode::Joint)
    }

    /// No call checkpointed.
    pub fn split_all(program: &Program, entry: &str) -> Self {
        Self::uniform(program, entry, Mode::Split)
    }

    /// Sites preceded by a `NOCHECKPOINT` directive are split, the rest joint.
    pub fn from_directives(program: &Program, entry: &str) -> Self {
        let mut plan = Self::joint_all(program, entry);
        for name in topo_order(program, entry) {
            let Some(p) = program.proc(&name) else { continue };
            crate::lang::visit_stmts(&p.body, &mut |s| {
                if let crate::lang::StmtKind::Call { nocheckpoint: true, .. } = s.kind {
                    plan.sites.insert(SiteId::new(name.clone(), s.span), Mode::Split);
                }
            });
        }
        plan
    }

    /// All sites calling one of `procs` are split, every other site joint.
    pub fn from_split_procs<S: AsRef<str>>(program: &Program, entry: &str, procs: &[S]) -> Result<Self, AdError> {
        Self::joint_all(program, entry).with_split_procs(program, entry, procs)
    }

    /// Overrides this plan: all sites calling one of `procs` become split.
    pub fn with_split_procs<S: AsRef<str>>(
        mut self,
        program: &Program,
        entry: &str,
        procs: &[S],
    ) -> Result<Self, AdError> {
        for name in procs {
            if program.proc(name.as_ref()).is_none() {
                return Err(AdError::Plan(format!("unknown procedure `{}` in split list", name.as_ref())));
            }
        }
        for (site, callee) in reachable_sites(program, entry) {
            if procs.iter().any(|n| n.as_ref() == callee) {
                self.sites.insert(site, Mode::Split);
            }
        }
        Ok(self)
    }

    /// Parses a JSON map `"proc:line:col" -> "joint"|"split"`.
    pub fn from_json(text: &str) -> Result<Self, AdError> {
        serde_json::from_str(text).map_err(|e| AdError::Plan(format!("bad plan file: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    pub fn mode(&self, site: &SiteId) -> Option<Mode> {
        self.sites.get(site).copied()
    }

    pub fn set(&mut self, site: SiteId, mode: Mode) {
        self.sites.insert(site, mode);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SiteId, Mode)> {
        self.sites.iter().map(|(s, m)| (s, *m))
    }

    pub fn split_count(&self) -> usize {
        self.sites.values().filter(|m| **m == Mode::Split).count()
    }

    /// Fails unless every reachable site has a mode and no unknown site is named.
    pub fn check_total(&self, program: &Program, entry: &str) -> Result<(), AdError> {
        let sites = reachable_sites(program, entry);
        for (site, _) in &sites {
            if !self.sites.contains_key(site) {
                return Err(AdError::Plan(format!("plan has no mode for call site {site}")));
            }
        }
        for site in self.sites.keys() {
            if !sites.iter().any(|(s, _)| s == site) {
                return Err(AdError::Plan(format!("plan names unknown call site {site}")));
            }
        }
        Ok(())
    }

    /// Short human summary, e.g. `split: f@main:3:3, g@main:5:3`.
    pub fn describe(&self, program: &Program, entry: &str) -> String {
        let sites = reachable_sites(program, entry);
        let split: Vec<String> =
            sites.iter().filter(|(s, _)| self.mode(s) == Some(Mode::Split)).map(|(s, c)| format!("{c}@{s}")).collect();
        if split.is_empty() {
            "joint-all".into()
        } else if split.len() == sites.len() {
            "split-all".into()
        } else {
            format!("split: {}", split.join(", "))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse_program, Span};

    const SRC: &str = "\
proc leaf(x)
  x = x * x
end
proc mid(x)
  call leaf(x)
end
proc main(x)
  !$AD NOCHECKPOINT
  call mid(x)
  call leaf(x)
end
proc unused(x)
  call leaf(x)
end
";

    #[test]
    fn constructors() {
        let p = parse_program(SRC).unwrap();
        let joint = CheckpointPlan::joint_all(&p, "main");
        assert_eq!(joint.iter().count(), 3);
        assert_eq!(joint.split_count(), 0);
        assert_eq!(CheckpointPlan::split_all(&p, "main").split_count(), 3);

        let d = CheckpointPlan::from_directives(&p, "main");
        assert_eq!(d.mode(&SiteId::new("main", Span::new(9, 3))), Some(Mode::Split));
        assert_eq!(d.split_count(), 1);

        let s = CheckpointPlan::from_split_procs(&p, "main", &["leaf"]).unwrap();
        assert_eq!(s.split_count(), 2);
        assert!(CheckpointPlan::from_split_procs(&p, "main", &["nope"]).is_err());
        assert_eq!(s.describe(&p, "main"), "split: leaf@main:10:3, leaf@mid:5:3");
    }

    #[test]
    fn json_and_totality() {
        let p = parse_program(SRC).unwrap();
        let plan = CheckpointPlan::from_directives(&p, "main");
        let back = CheckpointPlan::from_json(&plan.to_json()).unwrap();
        assert_eq!(plan, back);
        back.check_total(&p, "main").unwrap();
        let partial = CheckpointPlan::from_json(r#"{"main:9:3": "split"}"#).unwrap();
        assert!(partial.check_total(&p, "main").is_err());
        assert!(CheckpointPlan::from_json(r#"{"main:9": "split"}"#).is_err());
    }
}
