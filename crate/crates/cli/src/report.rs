//! Run report and its deterministic on-disk form.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use hjb_ergodic::table::{format_value, Table};
use serde::Serialize;

use crate::config::Format;

/// One pass/fail entry with its measured value and tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub pipeline: String,
    /// Name of the property under test.
    pub property: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    /// (grid label, node count)
    pub grid_sizes: Vec<(String, usize)>,
    /// Seconds; only present with timing enabled, since it breaks byte-identical output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub name: String,
    pub tables: Vec<Table>,
    /// Set when the pipeline aborted; tables and checks up to that point are kept.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub pipelines: Vec<PipelineResult>,
    pub ledger: Vec<Check>,
    pub provenance: Provenance,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.pipelines.iter().all(|p| p.failure.is_none()) && self.ledger.iter().all(|c| c.pass)
    }

    pub fn check(&self, property: &str) -> Option<&Check> {
        self.ledger.iter().find(|c| c.property == property)
    }

    /// Human-readable ledger, one line per check.
    pub fn ledger_lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .ledger
            .iter()
            .map(|c| {
                format!(
                    "{} [{}] {}: measured {} (tolerance {}){}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.pipeline,
                    c.property,
                    format_value(c.measured),
                    format_value(c.tolerance),
                    if c.note.is_empty() { String::new() } else { format!(" {}", c.note) }
                )
            })
            .collect();
        for p in &self.pipelines {
            if let Some(f) = &p.failure {
                out.push(format!("FAIL [{}] pipeline aborted: {f}", p.name));
            }
        }
        out
    }
}

#[derive(Serialize)]
struct TableEntry<'a> {
    name: &'a str,
    columns: &'a [String],
    rows: usize,
    file: Option<String>,
}

#[derive(Serialize)]
struct PipelineEntry<'a> {
    name: &'a str,
    ok: bool,
    failure: &'a Option<String>,
    tables: Vec<TableEntry<'a>>,
}

#[derive(Serialize)]
struct Summary<'a> {
    all_pass: bool,
    ledger: &'a [Check],
    pipelines: Vec<PipelineEntry<'a>>,
    provenance: &'a Provenance,
}

fn table_stem(pipeline: &str, table: &str) -> String {
    format!("{pipeline}_{table}").replace(['-', ' ', '/'], "_")
}

/// Writes `bytes` to `path` through a temporary file in the same directory and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Two-column plot files: the first column against each of the others.
fn plot_files(stem: &str, t: &Table) -> Vec<(String, String)> {
    let Some(x) = t.columns.first() else { return Vec::new() };
    (1..t.columns.len())
        .map(|k| {
            let mut s = format!("# {}\n# {} {}\n", t.name, x, t.columns[k]);
            for r in &t.rows {
                s.push_str(&format!("{} {}\n", format_value(r[0]), format_value(r[k])));
            }
            (format!("{stem}_{}.dat", t.columns[k]), s)
        })
        .collect()
}

/// Writes the report into `dir` and returns the written paths in a fixed order.
pub fn emit_report(report: &RunReport, dir: &Path, formats: &[Format]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let csv = formats.contains(&Format::Csv);
    for p in &report.pipelines {
        for t in &p.tables {
            let stem = table_stem(&p.name, &t.name);
            if csv {
                let path = dir.join(format!("{stem}.csv"));
                write_atomic(&path, t.to_csv_string().as_bytes())?;
                written.push(path);
            }
            if formats.contains(&Format::PlotData) {
                for (name, body) in plot_files(&stem, t) {
                    let path = dir.join(name);
                    write_atomic(&path, body.as_bytes())?;
                    written.push(path);
                }
            }
        }
    }
    if formats.contains(&Format::Json) {
        let summary = Summary {
            all_pass: report.all_pass(),
            ledger: &report.ledger,
            pipelines: report
                .pipelines
                .iter()
                .map(|p| PipelineEntry {
                    name: &p.name,
                    ok: p.failure.is_none(),
                    failure: &p.failure,
                    tables: p
                        .tables
                        .iter()
                        .map(|t| TableEntry {
                            name: &t.name,
                            columns: &t.columns,
                            rows: t.rows.len(),
                            file: csv.then(|| format!("{}.csv", table_stem(&p.name, &t.name))),
                        })
                        .collect(),
                })
                .collect(),
            provenance: &report.provenance,
        };
        let mut body = serde_json::to_string_pretty(&summary).map_err(io::Error::other)?;
        body.push('\n');
        let path = dir.join("summary.json");
        write_atomic(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
