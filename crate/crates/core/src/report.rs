//! Deterministic report emission. Every numeric row names the
//! module.operation it came from, the measured value, and (when the row is
//! an assertion) the bound it was held against. Identical inputs produce
//! byte-identical files: fields are emitted in a fixed order and floats use
//! shortest round-trip formatting with a `.` separator.

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::nonsmooth::CertificateRow;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    /// module.operation anchor, e.g. "flow.pullback_residual".
    pub id: String,
    /// Instance label (target name, stage index, ...).
    pub name: String,
    pub value: f64,
    pub bound: Option<f64>,
    pub pass: Option<bool>,
}

impl ReportRow {
    pub fn info(id: &str, name: &str, value: f64) -> Self {
        ReportRow {
            id: id.into(),
            name: name.into(),
            value,
            bound: None,
            pass: None,
        }
    }

    /// An asserted upper bound: pass when value <= bound.
    pub fn le(id: &str, name: &str, value: f64, bound: f64) -> Self {
        ReportRow {
            id: id.into(),
            name: name.into(),
            value,
            bound: Some(bound),
            pass: Some(value <= bound),
        }
    }

    /// An asserted strict lower bound: pass when value > bound.
    pub fn gt(id: &str, name: &str, value: f64, bound: f64) -> Self {
        ReportRow {
            id: id.into(),
            name: name.into(),
            value,
            bound: Some(bound),
            pass: Some(value > bound),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub seed: u64,
    pub grid: GridSpec,
    pub grid_hash: String,
    pub rows: Vec<ReportRow>,
}

impl Report {
    pub fn new(suite: &str, seed: u64, grid: GridSpec) -> Self {
        Report {
            suite: suite.into(),
            seed,
            grid_hash: grid.hash(),
            grid,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: ReportRow) {
        self.rows.push(row);
    }

    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass.unwrap_or(true))
    }

    pub fn failed_rows(&self) -> Vec<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.pass == Some(false))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let io_err = |e: std::io::Error| Error::Io {
            path: "<csv>".into(),
            source: e,
        };
        writeln!(w, "suite,seed,grid_hash,id,name,value,bound,pass").map_err(io_err)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{:?},{},{}",
                self.suite,
                self.seed,
                self.grid_hash,
                r.id,
                r.name,
                r.value,
                r.bound.map(|b| format!("{b:?}")).unwrap_or_default(),
                r.pass.map(|p| p.to_string()).unwrap_or_default(),
            )
            .map_err(io_err)?;
        }
        Ok(())
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// The certificate table contract: one row per admissible index.
pub fn certificate_csv<W: Write>(rows: &[CertificateRow], mut w: W) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: "<certificate csv>".into(),
        source: e,
    };
    writeln!(w, "k,s_k,s_k_prime,quotient,bound,pass").map_err(io_err)?;
    for r in rows {
        writeln!(
            w,
            "{},{:?},{:?},{:?},{:?},{}",
            r.k, r.s_k, r.s_k_prime, r.quotient, r.bound, r.pass
        )
        .map_err(io_err)?;
    }
    Ok(())
}
