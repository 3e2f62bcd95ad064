//! Report and table writers. Numbers are printed in their shortest
//! round-trip form, so equal results give byte-equal files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use fbp_core::obstacle::SlabField;
use fbp_core::{PathInH, ScalarField, TorusGrid};
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    /// Passes when `value <= limit`.
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            pass: value <= limit,
            value,
            limit,
        }
    }

    /// Passes when `value >= limit`.
    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            pass: value >= limit,
            value,
            limit,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn num(v: f64) -> String {
    format!("{v:e}")
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_header(name: &str, header: Vec<String>) -> Self {
        Self {
            name: name.into(),
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn push_nums(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&v| num(v)).collect());
    }

    fn render(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.render()).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
    }
}

fn coord_header(grid: TorusGrid, last: &str) -> Vec<String> {
    let mut h: Vec<String> = (1..=grid.dim()).map(|i| format!("x{i}")).collect();
    h.push(last.into());
    h.push("value".into());
    h
}

fn coords(grid: TorusGrid, idx: usize) -> Vec<String> {
    let x = grid.coords(idx);
    (0..grid.dim()).map(|a| num(x[a])).collect()
}

/// `x1[,x2],t,value` for a path in time.
pub fn path_table(name: &str, path: &PathInH) -> Table {
    let grid = path.grid();
    let mut t = Table::with_header(name, coord_header(grid, "t"));
    for (j, s) in path.slices().iter().enumerate() {
        push_slice(&mut t, s, j as f64 * path.tau());
    }
    t
}

/// `x1[,x2],t,value` for snapshots at given times.
pub fn snapshots_table(name: &str, grid: TorusGrid, snaps: &[(f64, &ScalarField)]) -> Table {
    let mut t = Table::with_header(name, coord_header(grid, "t"));
    for (time, s) in snaps {
        push_slice(&mut t, s, *time);
    }
    t
}

/// `x1[,x2],z,value` for a family of fields indexed by a level.
pub fn levels_table(name: &str, grid: TorusGrid, levels: &[(f64, &ScalarField)]) -> Table {
    let mut t = Table::with_header(name, coord_header(grid, "z"));
    for (z, s) in levels {
        push_slice(&mut t, s, *z);
    }
    t
}

fn push_slice(t: &mut Table, s: &ScalarField, level: f64) {
    for (idx, v) in s.values().iter().enumerate() {
        let mut row = coords(s.grid(), idx);
        row.push(num(level));
        row.push(num(*v));
        t.push(row);
    }
}

/// `x1[,x2],z,value` for a slab field, column by column.
pub fn slab_table(name: &str, u: &SlabField) -> Table {
    let slab = u.slab();
    let grid = slab.base();
    let mut t = Table::with_header(name, coord_header(grid, "z"));
    for idx in 0..grid.len() {
        for (j, v) in u.column(idx).iter().enumerate() {
            let mut row = coords(grid, idx);
            row.push(num(slab.z(j)));
            row.push(num(*v));
            t.push(row);
        }
    }
    t
}

pub fn write_report(dir: &Path, report: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(report).map_err(|e| CliError::Output(e.to_string()))?;
    let _ = writeln!(text);
    let path = dir.join("report.json");
    fs::write(&path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display())))
}

pub fn field_json(f: &ScalarField) -> Value {
    Value::from(f.values().to_vec())
}
