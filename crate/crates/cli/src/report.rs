//! Flat CSV rows and the JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use morrey_core::{Cube, Fidelity};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

/// One line of the tabular output. The column order is the same for every
/// experiment kind; `x` is the swept parameter named by `x_name`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub experiment: String,
    pub x_name: &'static str,
    pub x: String,
    pub level: Option<usize>,
    pub quantity: String,
    pub value: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub witness: String,
    pub note: String,
    /// Set only on rows that carry an asserted check.
    pub pass: Option<bool>,
    pub estimator: String,
    pub fidelity: String,
}

pub const HEADER: [&str; 13] = [
    "experiment",
    "x_name",
    "x",
    "level",
    "quantity",
    "value",
    "lower",
    "upper",
    "witness",
    "note",
    "pass",
    "estimator",
    "fidelity",
];

/// Builder bound to one experiment id.
#[derive(Debug, Clone)]
pub struct Rows {
    experiment: String,
    pub rows: Vec<ReportRow>,
}

impl Rows {
    pub fn new(experiment: &str) -> Self {
        Self { experiment: experiment.to_string(), rows: Vec::new() }
    }

    pub fn push(&mut self, x_name: &'static str, x: impl ToString, quantity: impl Into<String>) -> &mut ReportRow {
        self.rows.push(ReportRow {
            experiment: self.experiment.clone(),
            x_name,
            x: x.to_string(),
            level: None,
            quantity: quantity.into(),
            value: None,
            lower: None,
            upper: None,
            witness: String::new(),
            note: String::new(),
            pass: None,
            estimator: String::new(),
            fidelity: String::new(),
        });
        self.rows.last_mut().expect("just pushed")
    }
}

impl ReportRow {
    pub fn value(&mut self, v: f64) -> &mut Self {
        self.value = Some(v);
        self
    }

    pub fn bounds(&mut self, lower: Option<f64>, upper: Option<f64>) -> &mut Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn level(&mut self, l: usize) -> &mut Self {
        self.level = Some(l);
        self
    }

    pub fn witness(&mut self, c: &Cube) -> &mut Self {
        self.witness = cube_label(c);
        self
    }

    pub fn note(&mut self, s: impl Into<String>) -> &mut Self {
        self.note = s.into();
        self
    }

    pub fn pass(&mut self, ok: bool) -> &mut Self {
        self.pass = Some(ok);
        self
    }

    pub fn estimator(&mut self, s: impl Into<String>) -> &mut Self {
        self.estimator = s.into();
        self
    }

    pub fn fidelity(&mut self, f: Fidelity) -> &mut Self {
        self.fidelity = fidelity_name(f).to_string();
        self
    }
}

pub fn fidelity_name(f: Fidelity) -> &'static str {
    match f {
        Fidelity::Dyadic => "dyadic",
        Fidelity::Aligned => "aligned",
        Fidelity::Shifted => "shifted",
    }
}

/// `lo=a:b side=s` in cell units.
pub fn cube_label(c: &Cube) -> String {
    let lo = c.lo();
    if c.dim() == 1 {
        format!("lo={} side={}", lo[0], c.side_cells())
    } else {
        format!("lo={}:{} side={}", lo[0], lo[1], c.side_cells())
    }
}

/// An asserted check and its verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), pass, detail: detail.into() }
    }
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    id: String,
    kind: &'static str,
    passed: bool,
    checks: &'a [Check],
    failing_rows: Vec<&'a ReportRow>,
    config: &'a ExperimentConfig,
    report: &'a serde_json::Value,
}

/// Paths of the files written for one run.
#[derive(Debug, Clone)]
pub struct Written {
    pub csv: PathBuf,
    pub json: PathBuf,
}

pub fn failing_rows(rows: &[ReportRow]) -> Vec<&ReportRow> {
    rows.iter().filter(|r| r.pass == Some(false)).collect()
}

pub fn write(
    dir: &Path,
    cfg: &ExperimentConfig,
    rows: &[ReportRow],
    checks: &[Check],
    report: &serde_json::Value,
) -> Result<Written, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let id = cfg.id();
    let csv_path = dir.join(format!("{id}.csv"));
    let json_path = dir.join(format!("{id}.json"));
    let io = |p: &Path, e: &dyn std::fmt::Display| CliError::Io(format!("{}: {e}", p.display()));

    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&csv_path).map_err(|e| io(&csv_path, &e))?;
    w.write_record(HEADER).map_err(|e| io(&csv_path, &e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(&csv_path, &e))?;
    }
    w.flush().map_err(|e| io(&csv_path, &e))?;

    let summary = Summary {
        id,
        kind: cfg.kind.name(),
        passed: checks.iter().all(|c| c.pass),
        checks,
        failing_rows: failing_rows(rows),
        config: cfg,
        report,
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| io(&json_path, &e))?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| io(&json_path, &e))?;
    Ok(Written { csv: csv_path, json: json_path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use morrey_core::Grid;

    #[test]
    fn rows_serialize_in_header_order() {
        let g = Grid::new(2, 3).unwrap();
        let mut rows = Rows::new("t");
        rows.push("rho", 0.5, "q").value(1.5).bounds(None, Some(2.0)).witness(&g.dyadic(1, [1, 0]).unwrap()).pass(true);
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(HEADER).unwrap();
        w.serialize(&rows.rows[0]).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        assert_eq!(text.lines().nth(1), Some("t,rho,0.5,,q,1.5,,2.0,lo=4:0 side=4,,true,,"));
        assert!(failing_rows(&rows.rows).is_empty());
    }
}
