//! Output artifacts: per-tick trajectory CSV, policy action CSV and the
//! episode summary JSON.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! value read back from any CSV is bitwise identical to the logged one.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EpisodeResult;
use crate::error::{Error, Result};
use crate::model::{LEG_NAMES, NUM_LEGS};
use crate::sim::TickLog;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Column names of the action vector.
pub fn action_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["f_step", "v_x_ref", "v_z_ref", "omega_y_ref"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for leg in LEG_NAMES {
        for axis in ["x", "y", "z"] {
            cols.push(format!("res_{}_{axis}", leg.to_lowercase()));
        }
    }
    cols
}

/// Fixed header of the tick CSV.
pub fn tick_columns() -> Vec<String> {
    let mut cols = vec!["time".to_string(), "phase".to_string()];
    cols.extend(action_columns());
    for name in ["x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz"] {
        cols.push(name.to_string());
    }
    let per_leg = |prefix: &str, suffixes: &[&str], cols: &mut Vec<String>| {
        for leg in LEG_NAMES {
            for s in suffixes {
                let leg = leg.to_lowercase();
                cols.push(if s.is_empty() {
                    format!("{prefix}_{leg}")
                } else {
                    format!("{prefix}_{leg}_{s}")
                });
            }
        }
    };
    per_leg("desired", &[""], &mut cols);
    per_leg("contact", &[""], &mut cols);
    per_leg("touching", &[""], &mut cols);
    per_leg("grf", &["x", "y", "z"], &mut cols);
    per_leg("foot", &["x", "y", "z"], &mut cols);
    per_leg("tau", &["abd", "hip", "knee"], &mut cols);
    per_leg("clip_normal", &[""], &mut cols);
    per_leg("clip_tangential", &[""], &mut cols);
    per_leg("tau_saturated", &[""], &mut cols);
    cols
}

fn push_row(out: &mut String, values: &[String]) {
    out.push_str(&values.join(","));
    out.push('\n');
}

fn flag(b: bool) -> String {
    (b as u8).to_string()
}

pub fn tick_row(t: &TickLog) -> Vec<String> {
    let mut v = vec![t.time.to_string(), t.phase.to_string()];
    v.extend(t.action.to_vec().iter().map(f64::to_string));
    for vec in [&t.position, &t.orientation, &t.linear_velocity, &t.angular_velocity] {
        v.extend(vec.iter().map(f64::to_string));
    }
    for flags in [&t.desired_contacts, &t.contacts, &t.touching] {
        v.extend(flags.iter().map(|&b| flag(b)));
    }
    for arr in [&t.grf, &t.feet, &t.torques] {
        for leg in 0..NUM_LEGS {
            v.extend(arr[leg].iter().map(f64::to_string));
        }
    }
    for flags in [&t.normal_clipped, &t.tangential_scaled, &t.torque_saturated] {
        v.extend(flags.iter().map(|&b| flag(b)));
    }
    v
}

pub fn tick_csv(ticks: &[TickLog]) -> String {
    let mut out = String::new();
    push_row(&mut out, &tick_columns());
    for t in ticks {
        push_row(&mut out, &tick_row(t));
    }
    out
}

/// Read the applied action sequence back from a tick CSV. The action is
/// held for `stride` ticks, so every `stride`-th row starts a new step.
/// Lines starting with `#` are skipped.
pub fn read_actions(reader: impl Read, stride: usize) -> Result<Vec<Vec<f64>>> {
    let stride = stride.max(1);
    let mut lines = BufReader::new(reader)
        .lines()
        .filter(|l| !matches!(l, Ok(l) if l.starts_with('#') || l.trim().is_empty()));
    let header = lines
        .next()
        .transpose()?
        .ok_or_else(|| Error::config("replay", "empty log file"))?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let idx = action_columns()
        .iter()
        .map(|c| {
            names
                .iter()
                .position(|n| n == c)
                .ok_or_else(|| Error::config("replay", format!("missing column `{c}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut actions = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if row % stride != 0 {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != names.len() {
            return Err(Error::config(
                format!("replay[{}]", row + 1),
                format!("expected {} fields, got {}", names.len(), fields.len()),
            ));
        }
        let values = idx
            .iter()
            .map(|&i| fields[i].trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::config(format!("replay[{}]", row + 1), e.to_string()))?;
        actions.push(values);
    }
    Ok(actions)
}

pub fn read_actions_file(path: &Path, stride: usize) -> Result<Vec<Vec<f64>>> {
    read_actions(std::fs::File::open(path)?, stride)
}

/// Provenance line written at the top of every CSV artifact.
pub fn provenance_line(seed: u64, config_hash: &str) -> String {
    format!("# seed={seed} config_hash={config_hash}\n")
}

/// Episode summary artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub schema_version: u32,
    pub seed: u64,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<String>,
    pub episodes: Vec<EpisodeResult>,
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config("<output>", e.to_string()))?;
    write_text(path, &(text + "\n"))
}
