//! Tabulated (parameter, value) study results with a log-log slope fit.

use std::io::Write;

use crate::error::Result;
use crate::scalar::Scalar;

/// Ordered rows of (parameter, measured quantity) for remainder, decay, and
/// convergence studies.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable<S: Scalar> {
    param_name: String,
    rows: Vec<(S, S)>,
}

impl<S: Scalar> StudyTable<S> {
    pub fn new(param_name: impl Into<String>) -> Self {
        Self {
            param_name: param_name.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, param: S, value: S) {
        self.rows.push((param, value));
    }

    pub fn rows(&self) -> &[(S, S)] {
        &self.rows
    }

    pub fn param_name(&self) -> &str {
        &self.param_name
    }

    pub fn values(&self) -> impl Iterator<Item = S> + '_ {
        self.rows.iter().map(|r| r.1)
    }

    /// Least-squares slope of ln(value) against ln(param), using only rows
    /// with strictly positive entries; `None` with fewer than two usable rows.
    pub fn log_log_slope(&self) -> Option<S> {
        let pts: Vec<(S, S)> = self
            .rows
            .iter()
            .filter(|(p, v)| *p > S::zero() && *v > S::zero())
            .map(|&(p, v)| (p.ln(), v.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = S::from_usize(pts.len()).unwrap();
        let sx: S = pts.iter().map(|p| p.0).sum();
        let sy: S = pts.iter().map(|p| p.1).sum();
        let sxx: S = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: S = pts.iter().map(|p| p.0 * p.1).sum();
        let denom = n * sxx - sx * sx;
        if denom == S::zero() {
            return None;
        }
        Some((n * sxy - sx * sy) / denom)
    }

    /// Delimited text dump: header `<param>,value`, one row each.
    pub fn write_delimited<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{},value", self.param_name)?;
        for (p, v) in &self.rows {
            writeln!(w, "{},{}", p, v)?;
        }
        Ok(())
    }
}
