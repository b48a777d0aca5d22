//! JSON and CSV rendering of reports.

use robustness_core::io::{Operator, OperatorFile};
use robustness_core::measures::{MeasureResult, MeasureValue};
use robustness_core::{DensityOperator, HermitianOperator};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::Path;

pub fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

pub fn operator(op: Operator) -> Value {
    to_value(&OperatorFile::from_operator(&op))
}

pub fn state(rho: &DensityOperator) -> Value {
    operator(Operator::State(rho.clone()))
}

pub fn hermitian(h: &HermitianOperator) -> Value {
    operator(Operator::Hermitian(h.clone()))
}

pub fn measure_value(v: MeasureValue) -> Value {
    to_value(&v)
}

/// A measure result with its optimal free point and noise point.
pub fn measure(r: &MeasureResult) -> Value {
    json!({
        "value": measure_value(r.value),
        "method": to_value(&r.method),
        "achieving_subset": r.achieving_subset,
        "weights": r.weights,
        "tolerance": r.tolerance,
        "sigma": r.sigma.as_ref().map(state),
        "tau": r.tau.as_ref().map(state),
    })
}

/// Summary without operators, for per-subset listings.
pub fn measure_summary(label: &str, r: &MeasureResult) -> Value {
    json!({
        "label": label,
        "value": measure_value(r.value),
        "method": to_value(&r.method),
        "weights": r.weights,
    })
}

/// Leaves of a JSON value as `(path, value)` rows in document order.
pub fn flatten(v: &Value) -> Vec<(String, String)> {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        let key = |k: &str| {
            if prefix.is_empty() {
                k.to_string()
            } else {
                format!("{prefix}.{k}")
            }
        };
        match v {
            Value::Object(map) => {
                for (k, x) in map {
                    walk(&key(k), x, out);
                }
            }
            Value::Array(items) => {
                for (i, x) in items.iter().enumerate() {
                    walk(&key(&i.to_string()), x, out);
                }
            }
            Value::Null => out.push((prefix.to_string(), String::new())),
            Value::String(s) => out.push((prefix.to_string(), s.clone())),
            other => out.push((prefix.to_string(), other.to_string())),
        }
    }
    let mut out = Vec::new();
    if !matches!(v, Value::Object(m) if m.is_empty()) {
        walk("", v, &mut out);
    }
    out
}

/// A CSV table: header plus rows of equal width.
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    /// Two columns `key,value` holding every leaf of the report.
    pub fn from_report(v: &Value) -> Self {
        Self {
            header: vec!["key".into(), "value".into()],
            rows: flatten(v).into_iter().map(|(k, x)| vec![k, x]).collect(),
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()
    }
}
