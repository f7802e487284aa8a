use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Value of one variable: a scalar or a fixed-size array of doubles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Array(Vec<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> Option<f64> {
        match self {
            Value::Scalar(v) => Some(*v),
            Value::Array(_) => None,
        }
    }

    pub fn cells(&self) -> &[f64] {
        match self {
            Value::Scalar(v) => std::slice::from_ref(v),
            Value::Array(a) => a,
        }
    }

    pub fn cells_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Scalar(v) => std::slice::from_mut(v),
            Value::Array(a) => a,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Scalar(v) => write!(f, "{v}"),
            Value::Array(a) => {
                let parts: Vec<String> = a.iter().map(|v| v.to_string()).collect();
                write!(f, "[{}]", parts.join(";"))
            }
        }
    }
}

/// Named variable values at the entry procedure's scope. Used for inputs,
/// primal outputs, seed weights and gradients.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Store(pub BTreeMap<String, Value>);

impl Store {
    pub fn new() -> Self {
        Store::default()
    }

    pub fn with_scalar(mut self, name: &str, v: f64) -> Self {
        self.set_scalar(name, v);
        self
    }

    pub fn with_array(mut self, name: &str, v: Vec<f64>) -> Self {
        self.0.insert(name.to_string(), Value::Array(v));
        self
    }

    pub fn set_scalar(&mut self, name: &str, v: f64) {
        self.0.insert(name.to_string(), Value::Scalar(v));
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.0.get(name).and_then(Value::as_scalar)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    /// Parses `x=1.5,y=2,a=[1;2;3]`.
    pub fn parse_assignments(text: &str) -> Result<Store, String> {
        let mut store = Store::new();
        let mut rest = text.trim();
        while !rest.is_empty() {
            let eq = rest.find('=').ok_or_else(|| format!("expected `name=value` in `{rest}`"))?;
            let name = rest[..eq].trim();
            if name.is_empty() {
                return Err(format!("missing variable name in `{rest}`"));
            }
            let after = rest[eq + 1..].trim_start();
            let (value, remaining) = if let Some(body) = after.strip_prefix('[') {
                let close = body.find(']').ok_or_else(|| format!("unterminated array for `{name}`"))?;
                let items: Result<Vec<f64>, _> = body[..close]
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse::<f64>())
                    .collect();
                let items = items.map_err(|e| format!("bad array element for `{name}`: {e}"))?;
                (Value::Array(items), &body[close + 1..])
            } else {
                let end = after.find(',').unwrap_or(after.len());
                let v = after[..end].trim().parse::<f64>().map_err(|e| format!("bad value for `{name}`: {e}"))?;
                (Value::Scalar(v), &after[end..])
            };
            store.0.insert(name.to_string(), value);
            rest = remaining.trim_start();
            if let Some(r) = rest.strip_prefix(',') {
                rest = r.trim_start();
            } else if !rest.is_empty() {
                return Err(format!("expected `,` before `{rest}`"));
            }
        }
        Ok(store)
    }
}
