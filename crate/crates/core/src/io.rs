//! JSON files for operators: real and imaginary parts as separate row-major
//! matrices.
//!
//! ```json
//! {"kind": "state", "dim": 2, "re": [[1, 0], [0, 0]], "im": [[0, 0], [0, 0]]}
//! {"kind": "choi", "d1": 2, "d2": 2, "tp": true, "re": [...], "im": [...]}
//! ```
//!
//! `im` may be omitted for real operators.

use crate::channels::ChoiOperator;
use crate::error::{Error, Result};
use crate::operator::{ComplexMatrix, DensityOperator, HermitianOperator};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    State,
    Hermitian,
    Choi,
}

/// On-disk layout of an operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub kind: OperatorKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tp: Option<bool>,
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    State(DensityOperator),
    Hermitian(HermitianOperator),
    Choi(ChoiOperator),
}

impl Operator {
    pub fn hermitian(&self) -> &HermitianOperator {
        match self {
            Self::State(s) => s.as_hermitian(),
            Self::Hermitian(h) => h,
            Self::Choi(j) => j.matrix(),
        }
    }

    pub fn into_state(self) -> Result<DensityOperator> {
        match self {
            Self::State(s) => Ok(s),
            other => Err(Error::Format(format!(
                "expected a state, found kind {:?}",
                other.kind()
            ))),
        }
    }

    pub fn into_choi(self) -> Result<ChoiOperator> {
        match self {
            Self::Choi(j) => Ok(j),
            other => Err(Error::Format(format!(
                "expected a Choi operator, found kind {:?}",
                other.kind()
            ))),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        match self {
            Self::State(_) => OperatorKind::State,
            Self::Hermitian(_) => OperatorKind::Hermitian,
            Self::Choi(_) => OperatorKind::Choi,
        }
    }
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

fn matrix_from_parts(re: &[Vec<f64>], im: Option<&[Vec<f64>]>, n: usize) -> Result<ComplexMatrix> {
    let check = |field: &str, rows: &[Vec<f64>]| -> Result<()> {
        if rows.len() != n {
            return format_err(format!(
                "field `{field}` has {} rows, expected {n}",
                rows.len()
            ));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return format_err(format!(
                    "field `{field}` row {i} has {} entries, expected {n}",
                    row.len()
                ));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return format_err(format!("field `{field}` entry ({i}, {j}) is not finite"));
            }
        }
        Ok(())
    };
    check("re", re)?;
    if let Some(im) = im {
        check("im", im)?;
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        Complex64::new(re[i][j], im.map_or(0.0, |m| m[i][j]))
    }))
}

fn parts(m: &ComplexMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows = |f: fn(&Complex64) -> f64| -> Vec<Vec<f64>> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
            .collect()
    };
    (rows(|z| z.re), rows(|z| z.im))
}

impl OperatorFile {
    pub fn from_operator(op: &Operator) -> Self {
        let (re, im) = parts(op.hermitian().matrix());
        let (dim, d1, d2, tp) = match op {
            Operator::Choi(j) => (None, Some(j.d1()), Some(j.d2()), Some(j.is_tp())),
            other => (Some(other.hermitian().dim()), None, None, None),
        };
        Self {
            kind: op.kind(),
            dim,
            d1,
            d2,
            tp,
            re,
            im: Some(im),
        }
    }

    /// Validates the layout and builds the typed operator.
    pub fn into_operator(self) -> Result<Operator> {
        let n = match self.kind {
            OperatorKind::Choi => {
                if self.dim.is_some() {
                    return format_err("Choi operators use `d1` and `d2`, not `dim`");
                }
                let (Some(d1), Some(d2)) = (self.d1, self.d2) else {
                    return format_err("Choi operators need fields `d1` and `d2`");
                };
                d1 * d2
            }
            _ => {
                if self.d1.is_some() || self.d2.is_some() || self.tp.is_some() {
                    return format_err("fields `d1`, `d2` and `tp` are only valid for kind `choi`");
                }
                self.dim
                    .ok_or_else(|| Error::Format("missing field `dim`".into()))?
            }
        };
        if n == 0 {
            return format_err("dimension must be positive");
        }
        let m = matrix_from_parts(&self.re, self.im.as_deref(), n)?;
        Ok(match self.kind {
            OperatorKind::State => Operator::State(DensityOperator::new(m)?),
            OperatorKind::Hermitian => Operator::Hermitian(HermitianOperator::new(m)?),
            OperatorKind::Choi => Operator::Choi(ChoiOperator::new(
                HermitianOperator::new(m)?,
                self.d1.expect("checked"),
                self.d2.expect("checked"),
                self.tp.unwrap_or(true),
            )?),
        })
    }
}

/// Parses an operator; syntax errors report line and column.
pub fn parse_operator(text: &str) -> Result<Operator> {
    let file: OperatorFile =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    file.into_operator()
}

pub fn operator_to_json(op: &Operator) -> String {
    serde_json::to_string_pretty(&OperatorFile::from_operator(op))
        .expect("operator files serialize")
}

pub fn read_operator(path: impl AsRef<Path>) -> Result<Operator> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_operator(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_operator(path: impl AsRef<Path>, op: &Operator) -> Result<()> {
    let mut text = operator_to_json(op);
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
