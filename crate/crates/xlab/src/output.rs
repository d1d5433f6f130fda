//! File plumbing shared by every experiment: CSV tables built in memory
//! and flushed in one pass, the manifest echoing the resolved
//! configuration, and the JSON summary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::params::Params;
use crate::{ExperimentSpec, Result, SCHEMA_VERSION};

/// In-memory CSV. Rows may be computed in parallel as long as they are
/// collected in a fixed order before being pushed; rendering is a single
/// serial pass, so identical rows give identical bytes.
#[derive(Debug, Clone)]
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Table {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match the header");
        debug_assert!(
            row.iter().all(|c| !c.contains(',') && !c.contains('\n') && !c.contains('"')),
            "cells must not need CSV escaping: {row:?}"
        );
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Header plus rows, comma-separated, LF line endings throughout.
    pub fn render(&self) -> String {
        let mut text = String::new();
        text.push_str(&self.columns.join(","));
        text.push('\n');
        for row in &self.rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        text
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    experiment: &'a str,
    seed: u64,
    params: &'a BTreeMap<String, String>,
}

/// Output directory of one run: `<out>/<experiment>/`, holding
/// `manifest.json`, `summary.json` and the experiment's tables.
pub struct Outputs {
    dir: PathBuf,
    experiment: String,
    seed: u64,
}

impl Outputs {
    /// Creates the directory and records the manifest there before any
    /// results exist, so an aborted run still shows what was asked for.
    pub fn create(spec: &ExperimentSpec, params: &Params) -> Result<Outputs> {
        let dir = spec.out_dir.join(&spec.name);
        fs::create_dir_all(&dir)?;
        let out = Outputs { dir, experiment: spec.name.clone(), seed: spec.seed };
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            experiment: &out.experiment,
            seed: out.seed,
            params: params.resolved(),
        };
        let text = serde_json::to_string_pretty(&manifest)
            .expect("manifests serialize without fail");
        fs::write(out.dir.join("manifest.json"), text + "\n")?;
        Ok(out)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_table(&self, name: &str, table: &Table) -> Result<()> {
        fs::write(self.dir.join(name), table.render())?;
        Ok(())
    }

    /// Writes `summary.json` with the schema version and run identity
    /// next to the experiment's own metrics. Keys come out sorted, so
    /// the bytes are reproducible.
    pub fn write_summary(&self, metrics: Map<String, Value>) -> Result<()> {
        let mut root = Map::new();
        root.insert("schema_version".into(), SCHEMA_VERSION.into());
        root.insert("experiment".into(), Value::String(self.experiment.clone()));
        root.insert("seed".into(), self.seed.into());
        root.insert("metrics".into(), Value::Object(metrics));
        let text = serde_json::to_string_pretty(&Value::Object(root))
            .expect("summaries serialize without fail");
        fs::write(self.dir.join("summary.json"), text + "\n")?;
        Ok(())
    }
}
