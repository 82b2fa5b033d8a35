use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ScenarioConfig;
use super::scenario::ScenarioResult;
use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedFile {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub files: Vec<ExportedFile>,
}

pub fn config_hash(cfg: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(cfg.to_toml().as_bytes()))
}

fn write_table(
    dir: &Path,
    file: &str,
    columns: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<ExportedFile> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join(file))?));
    w.write_record(columns)?;
    let mut n = 0;
    for row in rows {
        w.write_record(&row)?;
        n += 1;
    }
    w.flush()?;
    Ok(ExportedFile {
        name: file.to_string(),
        columns: columns.to_vec(),
        rows: n,
    })
}

fn with_time(names: &[String]) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(names.iter().cloned())
        .collect()
}

/// Writes `<scenario>.<series>.csv` (or one JSON document) plus
/// `<scenario>.manifest.json`; returns the manifest path.
pub fn export(
    result: &ScenarioResult,
    cfg: &ScenarioConfig,
    dir: &Path,
    format: ExportFormat,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let name = &result.name;
    let mut files = Vec::new();
    if !result.times.is_empty() {
        match format {
            ExportFormat::Csv => {
                let cols = with_time(&result.state_names);
                let t = &result.times;
                for (series, data) in [
                    ("states", &result.truth),
                    ("estimates", &result.estimates),
                    ("abs_error", &result.abs_error),
                ] {
                    files.push(write_table(
                        dir,
                        &format!("{name}.{series}.csv"),
                        &cols,
                        t.iter().zip(data).map(|(t, x)| {
                            std::iter::once(t.to_string())
                                .chain(x.iter().map(|v| v.to_string()))
                                .collect()
                        }),
                    )?);
                }
                let cols: Vec<String> = [
                    "t",
                    "mae",
                    "g_abs_sum",
                    "violations",
                    "detector_z",
                    "detector_c",
                    "alarm",
                ]
                .map(String::from)
                .to_vec();
                files.push(write_table(
                    dir,
                    &format!("{name}.metrics.csv"),
                    &cols,
                    (0..t.len()).map(|k| {
                        let d = &result.detector[k];
                        vec![
                            t[k].to_string(),
                            result.mae_series[k].to_string(),
                            result.g_abs_sum[k].to_string(),
                            result.violations[k].to_string(),
                            d.z.to_string(),
                            d.c.to_string(),
                            u8::from(d.alarm).to_string(),
                        ]
                    }),
                )?);
                if let Some(trace) = &result.attack {
                    let file = format!("{name}.attack.csv");
                    trace.write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
                    files.push(ExportedFile {
                        name: file,
                        columns: [
                            "k",
                            "feasible",
                            "iterations",
                            "norm_a",
                            "g_abs_sum",
                            "violations",
                            "detector_stat",
                        ]
                        .map(String::from)
                        .to_vec(),
                        rows: trace.len(),
                    });
                }
            }
            ExportFormat::Json => {
                let file = format!("{name}.result.json");
                let doc = serde_json::json!({
                    "summary": result.summary(),
                    "t": result.times,
                    "mae": result.mae_series,
                    "g_abs_sum": result.g_abs_sum,
                    "violations": result.violations,
                    "detector": result.detector,
                    "alarm_times": result.alarm_times,
                });
                std::fs::write(dir.join(&file), serde_json::to_string_pretty(&doc)?)?;
                files.push(ExportedFile {
                    name: file,
                    columns: Vec::new(),
                    rows: result.times.len(),
                });
            }
        }
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        scenario: name.clone(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        rmse: (!result.times.is_empty()).then_some(result.rmse),
        files,
    };
    let path = dir.join(format!("{name}.manifest.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
