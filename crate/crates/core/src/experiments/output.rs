use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::control::RunRecord;
use crate::error::Result;
use crate::oracle::dubins_reference;

/// Files written into one output directory, with their SHA-256 digests.
#[derive(Debug, Default)]
pub struct OutputDir {
    root: Option<PathBuf>,
    files: BTreeMap<String, String>,
}

impl OutputDir {
    /// Writes go to `root`, or nowhere when `None`.
    pub fn new(root: Option<&Path>) -> Result<Self> {
        if let Some(r) = root {
            fs::create_dir_all(r)?;
        }
        Ok(Self {
            root: root.map(Path::to_path_buf),
            files: BTreeMap::new(),
        })
    }

    pub fn is_enabled(&self) -> bool {
        self.root.is_some()
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }

    /// Writes CSV rows (header first) to `name`.
    pub fn write_csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        fs::write(root.join(name), &bytes)?;
        self.files
            .insert(name.to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    /// Writes `manifest.json`, listing every file written so far.
    pub fn write_manifest<T: Serialize>(&self, manifest: &T) -> Result<()> {
        if let Some(root) = &self.root {
            let text = serde_json::to_string_pretty(manifest)?;
            fs::write(root.join("manifest.json"), text + "\n")?;
        }
        Ok(())
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub scenario: String,
    pub config_hash: String,
    pub config: &'a C,
    pub seeds: Vec<u64>,
    pub failed_seeds: Vec<u64>,
    pub files: &'a BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    /// Per-seed timings in seconds, kept out of the CSV files so that those
    /// stay reproducible.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub timings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dp_projected_nodes: Option<f64>,
}

pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Per-node table of one closed-loop run.
///
/// Columns: `step, time, x_i, xhat_i, xstd_i, u_j, [ustar_j], [ref_x, ref_y,
/// ref_z], running_cost`. Interval quantities are blank on the final node,
/// whose `running_cost` cell holds the terminal cost.
pub fn run_table(
    rec: &RunRecord,
    oracle: Option<&[f64]>,
    reference: bool,
) -> (Vec<String>, Vec<Vec<String>>) {
    let (d, m) = (rec.d, rec.m);
    let mut header: Vec<String> = vec!["step".into(), "time".into()];
    header.extend((0..d).map(|i| format!("x_{i}")));
    header.extend((0..d).map(|i| format!("xhat_{i}")));
    header.extend((0..d).map(|i| format!("xstd_{i}")));
    header.extend((0..m).map(|j| format!("u_{j}")));
    if oracle.is_some() {
        header.extend((0..m).map(|j| format!("ustar_{j}")));
    }
    if reference {
        header.extend(["ref_x", "ref_y", "ref_z"].map(String::from));
    }
    header.push("running_cost".into());
    let steps = rec.grid.steps();
    let rows = (0..=steps)
        .map(|k| {
            let t = rec.grid.node(k);
            let mut row = vec![k.to_string(), num(t)];
            row.extend(rec.truth_at(k).iter().copied().map(num));
            row.extend(rec.estimate_at(k).iter().copied().map(num));
            row.extend(rec.spread[k * d..(k + 1) * d].iter().copied().map(num));
            let interval = k < steps;
            let blank = || std::iter::repeat_n(String::new(), m);
            if interval {
                row.extend(rec.control_at(k).iter().copied().map(num));
            } else {
                row.extend(blank());
            }
            if let Some(o) = oracle {
                if interval {
                    row.extend(o[k * m..(k + 1) * m].iter().copied().map(num));
                } else {
                    row.extend(blank());
                }
            }
            if reference {
                row.extend(dubins_reference(t).map(num));
            }
            row.push(num(if interval {
                rec.running_cost[k]
            } else {
                rec.terminal_cost
            }));
            row
        })
        .collect();
    (header, rows)
}
