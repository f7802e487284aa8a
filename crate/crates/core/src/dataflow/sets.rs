use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::lang::{Expr, LValue, ProcDef};

/// A set of variable names, all scoped to one procedure. Arrays are tracked
/// as whole arrays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarSet(BTreeSet<String>);

impl VarSet {
    pub fn new() -> Self {
        VarSet::default()
    }

    pub fn contains(&self, v: &str) -> bool {
        self.0.contains(v)
    }

    pub fn insert(&mut self, v: impl Into<String>) -> bool {
        self.0.insert(v.into())
    }

    pub fn remove(&mut self, v: &str) -> bool {
        self.0.remove(v)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub fn union(&self, other: &VarSet) -> VarSet {
        VarSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn intersection(&self, other: &VarSet) -> VarSet {
        VarSet(self.0.intersection(&other.0).cloned().collect())
    }

    pub fn difference(&self, other: &VarSet) -> VarSet {
        VarSet(self.0.difference(&other.0).cloned().collect())
    }

    pub fn extend(&mut self, other: &VarSet) {
        self.0.extend(other.0.iter().cloned());
    }

    pub fn is_subset(&self, other: &VarSet) -> bool {
        self.0.is_subset(&other.0)
    }
}

impl<S: Into<String>> FromIterator<S> for VarSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        VarSet(iter.into_iter().map(Into::into).collect())
    }
}

impl fmt::Display for VarSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.iter().collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Declared variables read by an expression (loop indices excluded).
pub(crate) fn expr_uses(proc: &ProcDef, e: &Expr) -> VarSet {
    let mut reads = Vec::new();
    e.reads(&mut reads);
    reads.into_iter().filter(|r| proc.decl(r).is_some()).collect()
}

pub(crate) fn lvalue_index_uses(proc: &ProcDef, l: &LValue) -> VarSet {
    l.index.as_deref().map(|i| expr_uses(proc, i)).unwrap_or_default()
}

/// Argument binding at one call site.
pub(crate) struct Binding<'a> {
    pairs: Vec<(&'a str, &'a str)>,
}

impl<'a> Binding<'a> {
    pub fn new(callee: &'a ProcDef, args: &'a [LValue]) -> Self {
        Binding { pairs: callee.params.iter().zip(args).map(|(p, a)| (p.name.as_str(), a.name.as_str())).collect() }
    }

    /// Callee-scope set to caller scope; callee locals drop out.
    pub fn up(&self, set: &VarSet) -> VarSet {
        self.pairs.iter().filter(|(p, _)| set.contains(p)).map(|(_, a)| *a).collect()
    }

    /// Caller-scope set to callee parameters.
    pub fn down(&self, set: &VarSet) -> VarSet {
        self.pairs.iter().filter(|(_, a)| set.contains(a)).map(|(p, _)| *p).collect()
    }
}
