use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::sim::{Protocol, SimConfig};

use super::CliError;

pub const ENV_PREFIX: &str = "DPIMAP_";
pub const DEFAULT_JOB_CAP: usize = 10_000;
const REQUIRED: &[&str] = &["num_uavs"];

/// Optional sweep axes; an empty axis keeps the base config value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub num_uavs: Vec<usize>,
    pub v_max: Vec<f64>,
    pub protocol: Vec<Protocol>,
    pub repetitions: usize,
    pub job_cap: usize,
}

impl Default for SweepAxes {
    fn default() -> Self {
        SweepAxes {
            num_uavs: Vec::new(),
            v_max: Vec::new(),
            protocol: Vec::new(),
            repetitions: 1,
            job_cap: DEFAULT_JOB_CAP,
        }
    }
}

impl SweepAxes {
    pub fn is_trivial(&self) -> bool {
        self.num_uavs.is_empty() && self.v_max.is_empty() && self.protocol.is_empty() && self.repetitions == 1
    }
}

/// One cell of a sweep: the base config with the axis values applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub config: SimConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub config: SimConfig,
    pub sweep: SweepAxes,
    pub output: Option<PathBuf>,
}

impl RunSpec {
    /// Cross product in the order num_uavs, v_max, protocol (last varies fastest).
    pub fn cells(&self) -> Vec<Cell> {
        let base = &self.config;
        let nums = axis_or(&self.sweep.num_uavs, base.num_uavs);
        let speeds = axis_or(&self.sweep.v_max, base.v_max);
        let protocols = axis_or(&self.sweep.protocol, base.protocol);
        let mut cells = Vec::with_capacity(nums.len() * speeds.len() * protocols.len());
        for &num_uavs in &nums {
            for &v_max in &speeds {
                for &protocol in &protocols {
                    cells.push(Cell {
                        index: cells.len(),
                        config: SimConfig {
                            num_uavs,
                            v_max,
                            protocol,
                            ..base.clone()
                        },
                    });
                }
            }
        }
        cells
    }

    pub fn job_count(&self) -> usize {
        let len = |n: usize| n.max(1);
        len(self.sweep.num_uavs.len())
            .saturating_mul(len(self.sweep.v_max.len()))
            .saturating_mul(len(self.sweep.protocol.len()))
            .saturating_mul(self.sweep.repetitions)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.sweep.repetitions == 0 {
            return Err(CliError::Config("sweep.repetitions: must be at least 1".into()));
        }
        let jobs = self.job_count();
        if jobs > self.sweep.job_cap {
            return Err(CliError::Config(format!(
                "sweep needs {jobs} runs, above the job cap of {}",
                self.sweep.job_cap
            )));
        }
        for cell in self.cells() {
            cell.config
                .validate()
                .map_err(|e| CliError::Config(format!("cell {}: {e}", cell.index)))?;
        }
        Ok(())
    }
}

fn axis_or<T: Copy>(axis: &[T], base: T) -> Vec<T> {
    if axis.is_empty() {
        vec![base]
    } else {
        axis.to_vec()
    }
}

/// Reads the config file, applies `DPIMAP_*` overrides from `env` and
/// checks required keys.
pub fn load(path: &Path, env: impl IntoIterator<Item = (String, String)>) -> Result<RunSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse(&text, env)
}

pub fn parse(text: &str, env: impl IntoIterator<Item = (String, String)>) -> Result<RunSpec, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e| CliError::Config(format!("config: {e}")))?;
    let mut overrides: Vec<(String, String)> = env
        .into_iter()
        .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|key| (key.to_ascii_lowercase(), v)))
        .collect();
    overrides.sort();
    for (key, raw) in overrides {
        table.insert(key, env_value(&raw));
    }
    for key in REQUIRED {
        if !table.contains_key(*key) {
            return Err(CliError::Config(format!("missing required key `{key}`")));
        }
    }
    let sweep = match table.remove("sweep") {
        None => SweepAxes::default(),
        Some(v) => v
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(format!("sweep: {}", e.message())))?,
    };
    let config: SimConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("config: {}", e.message())))?;
    Ok(RunSpec {
        config,
        sweep,
        output: None,
    })
}

/// A TOML literal if the text parses as one, otherwise a bare string.
fn env_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
