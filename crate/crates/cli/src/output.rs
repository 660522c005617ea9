//! CSV data files and the JSON sidecar describing how they were made.

use std::fs;
use std::path::{Path, PathBuf};

use krlab::{Distribution, Series};
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SIDECAR: &str = "run.json";

#[derive(Debug, Serialize)]
struct EnergyRow {
    kick: usize,
    mean_energy: f64,
    ipr: f64,
}

#[derive(Debug, Serialize)]
struct DistributionRow {
    m: i64,
    p_momentum: f64,
    prob: f64,
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<String>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    /// Writes one header row followed by `rows`.
    pub fn write_rows<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e))?;
        for row in rows {
            w.serialize(row).map_err(|e| CliError::io(&path, e))?;
        }
        w.flush().map_err(|e| CliError::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn write_energy(&mut self, name: &str, series: &Series) -> Result<(), CliError> {
        let rows = series
            .kick_index
            .iter()
            .zip(&series.energy)
            .zip(&series.ipr)
            .map(|((&kick, &mean_energy), &ipr)| EnergyRow { kick, mean_energy, ipr });
        self.write_rows(name, rows)
    }

    /// Skips exact zeros so that averaged distributions on a wide grid stay
    /// readable.
    pub fn write_distribution(&mut self, name: &str, dist: &Distribution) -> Result<(), CliError> {
        let rows = dist
            .iter()
            .filter(|&(_, _, prob)| prob > 0.0)
            .map(|(m, p_momentum, prob)| DistributionRow { m, p_momentum, prob });
        self.write_rows(name, rows)
    }

    /// Writes the sidecar. `config` is the effective configuration after
    /// command-line overrides; passing the sidecar back through `--config`
    /// reruns the same computation.
    pub fn finish(mut self, command: &str, figure: Option<u8>, config: &RunConfig) -> Result<PathBuf, CliError> {
        let sidecar = json!({
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "figure": figure,
            "seeds": {
                "cloud": config.cloud.seed,
                "noise": config.noise.seed,
                "classical": config.classical.seed,
            },
            "config": config,
            "config_toml": config.to_toml(),
            "files": self.files,
        });
        let path = self.dir.join(SIDECAR);
        let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
        fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
        self.files.push(SIDECAR.to_string());
        Ok(path)
    }
}
