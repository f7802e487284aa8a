//! The tape: a LIFO of tagged entries with byte accounting.

use crate::lang::SiteId;

use super::AdError;

/// Bytes per stored value or control record.
pub const WORD: u64 = 8;

/// Whole-variable contents, keyed by declaration index in the owning frame.
pub type VarBlock = Vec<(usize, Vec<Option<f64>>)>;

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    /// One overwritten scalar or array element.
    Value {
        var: usize,
        offset: usize,
        value: Option<f64>,
    },
    /// Caller variables a checkpointed call overwrites and the caller's
    /// backward sweep still needs.
    CallRecord(VarBlock),
    Snapshot {
        site: SiteId,
        vars: VarBlock,
    },
    Branch(bool),
    /// Lower bound and trip count, packed into one 8-byte record.
    LoopCount {
        lower: i32,
        count: u32,
    },
    /// Locals of a split procedure kept between its two sweeps.
    Locals {
        proc: String,
        vars: VarBlock,
    },
}

fn block_bytes(b: &VarBlock) -> u64 {
    b.iter().map(|(_, v)| v.len() as u64 * WORD).sum()
}

impl Entry {
    pub fn bytes(&self) -> u64 {
        match self {
            Entry::Value { .. } | Entry::Branch(_) | Entry::LoopCount { .. } => WORD,
            Entry::CallRecord(b) | Entry::Snapshot { vars: b, .. } | Entry::Locals { vars: b, .. } => block_bytes(b),
        }
    }

    fn tag(&self) -> &'static str {
        match self {
            Entry::Value { .. } => "value",
            Entry::CallRecord(_) => "call record",
            Entry::Snapshot { .. } => "snapshot",
            Entry::Branch(_) => "branch",
            Entry::LoopCount { .. } => "loop count",
            Entry::Locals { .. } => "locals",
        }
    }
}

#[derive(Debug, Default)]
pub struct ValueStack {
    entries: Vec<Entry>,
    pub current: u64,
    pub peak: u64,
    pub pushed: u64,
    pub popped: u64,
}

impl ValueStack {
    pub fn new() -> Self {
        ValueStack::default()
    }

    pub fn push(&mut self, e: Entry) -> u64 {
        let b = e.bytes();
        self.current += b;
        self.pushed += b;
        self.peak = self.peak.max(self.current);
        self.entries.push(e);
        b
    }

    fn pop(&mut self, want: &'static str) -> Result<Entry, AdError> {
        let e = self.entries.pop().ok_or_else(|| AdError::Stack(format!("pop of {want} from an empty stack")))?;
        if e.tag() != want {
            return Err(AdError::Stack(format!("expected {want}, found {}", e.tag())));
        }
        let b = e.bytes();
        self.current -= b;
        self.popped += b;
        Ok(e)
    }

    pub fn pop_value(&mut self) -> Result<(usize, usize, Option<f64>), AdError> {
        match self.pop("value")? {
            Entry::Value { var, offset, value } => Ok((var, offset, value)),
            _ => unreachable!(),
        }
    }

    pub fn pop_call_record(&mut self) -> Result<VarBlock, AdError> {
        match self.pop("call record")? {
            Entry::CallRecord(b) => Ok(b),
            _ => unreachable!(),
        }
    }

    pub fn pop_snapshot(&mut self, site: &SiteId) -> Result<VarBlock, AdError> {
        match self.pop("snapshot")? {
            Entry::Snapshot { site: s, vars } if &s == site => Ok(vars),
            Entry::Snapshot { site: s, .. } => Err(AdError::Stack(format!("snapshot of {s} popped at {site}"))),
            _ => unreachable!(),
        }
    }

    pub fn pop_branch(&mut self) -> Result<bool, AdError> {
        match self.pop("branch")? {
            Entry::Branch(b) => Ok(b),
            _ => unreachable!(),
        }
    }

    pub fn pop_loop(&mut self) -> Result<(i32, u32), AdError> {
        match self.pop("loop count")? {
            Entry::LoopCount { lower, count } => Ok((lower, count)),
            _ => unreachable!(),
        }
    }

    pub fn pop_locals(&mut self, proc: &str) -> Result<VarBlock, AdError> {
        match self.pop("locals")? {
            Entry::Locals { proc: p, vars } if p == proc => Ok(vars),
            Entry::Locals { proc: p, .. } => Err(AdError::Stack(format!("locals of `{p}` popped for `{proc}`"))),
            _ => unreachable!(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }
}
