//! Run configuration: TOML with fixed sections, unknown keys rejected.
//!
//! ```toml
//! [params]
//! K = 5.0            # or k = 5.0; both may be given if consistent
//! hbar_eff = 1.0
//! mode = "MAKR"      # KR | MKR | MAKR
//! M = 2
//! n_kicks = 60
//!
//! [cloud]
//! sigma_p = 2.0
//! n_members = 200
//! seed = 1
//!
//! [noise]
//! k_rel_sigma = 0.1
//! seed = 2
//!
//! [output]
//! dir = "out"
//! record_every = 1
//! ```

use std::path::{Path, PathBuf};

use krlab::ensemble::ExecOptions;
use krlab::model::{Mode, DEFAULT_GRID_SIZE};
use krlab::quantum::InitialState;
use krlab::{CloudSpec, NoiseSpec, SimParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub params: ParamsSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub cloud: CloudSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub classical: ClassicalSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub chaos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    pub hbar_eff: f64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(rename = "M", default = "one")]
    pub block_len: usize,
    pub n_kicks: usize,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    PlaneWave,
    Gaussian,
}

/// Initial state of a single `evolve` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    #[serde(default = "default_kind")]
    pub kind: InitialKind,
    #[serde(default)]
    pub m0: i64,
    /// Momentum spread of the gaussian packet, in units of `ħ_eff`.
    #[serde(default = "default_sigma")]
    pub sigma_p: f64,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CloudSection {
    #[serde(default = "default_sigma")]
    pub sigma_p: f64,
    #[serde(default = "default_members")]
    pub n_members: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub k_rel_sigma: f64,
    #[serde(default = "two_u64")]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    #[serde(default = "default_orbits")]
    pub n_orbits: usize,
    #[serde(default = "default_steps")]
    pub n_steps: usize,
    #[serde(default = "three_u64")]
    pub seed: u64,
    /// Size of the uniform ensemble used for the energy series.
    #[serde(default = "default_classical_members")]
    pub n_members: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "M_list", default = "default_m_list")]
    pub block_lens: Vec<usize>,
    #[serde(default = "yes")]
    pub include_kr: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Highest order written by `calibrate-bessel`.
    #[serde(default = "default_bessel_order")]
    pub bessel_max_order: usize,
}

fn default_mode() -> Mode {
    Mode::Kr
}
fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn two_u64() -> u64 {
    2
}
fn three_u64() -> u64 {
    3
}
fn yes() -> bool {
    true
}
fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}
fn default_kind() -> InitialKind {
    InitialKind::PlaneWave
}
fn default_sigma() -> f64 {
    2.0
}
fn default_members() -> usize {
    200
}
fn default_orbits() -> usize {
    400
}
fn default_steps() -> usize {
    500
}
fn default_classical_members() -> usize {
    10_000
}
fn default_m_list() -> Vec<usize> {
    vec![2, 3, 4]
}
fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_bessel_order() -> usize {
    20
}

macro_rules! impl_default_from_empty {
    ($($t:ty),*) => {$(
        impl Default for $t {
            fn default() -> Self {
                toml::from_str("").expect("all fields have defaults")
            }
        }
    )*};
}
impl_default_from_empty!(InitialSection, CloudSection, NoiseSection, ClassicalSection, SweepSection, OutputSection);

impl RunConfig {
    /// Parameters for a preset run; every section except `params` at its
    /// default.
    pub fn with_params(params: ParamsSection) -> Self {
        Self {
            preset: None,
            params,
            initial: Default::default(),
            cloud: Default::default(),
            noise: Default::default(),
            classical: Default::default(),
            sweep: Default::default(),
            output: Default::default(),
        }
    }

    pub fn sim_params(&self) -> Result<SimParams, CliError> {
        let p = &self.params;
        let base = match (p.chaos, p.k) {
            (None, None) => return Err(CliError::config("missing required key: params.K or params.k")),
            (Some(chaos), None) => SimParams::from_chaos(chaos, p.hbar_eff, p.mode, p.block_len, p.n_kicks),
            (_, Some(k)) => SimParams::from_kick_strength(k, p.hbar_eff, p.mode, p.block_len, p.n_kicks),
        };
        let mut sim = base.map_err(CliError::config_from)?;
        if let (Some(chaos), Some(_)) = (p.chaos, p.k) {
            sim.chaos = chaos;
        }
        let sim = sim.with_grid_size(p.grid_size).map_err(CliError::config_from)?;
        sim.validate().map_err(CliError::config_from)?;
        Ok(sim)
    }

    pub fn cloud_spec(&self) -> Result<CloudSpec, CliError> {
        CloudSpec::new(self.cloud.sigma_p, self.cloud.n_members, self.cloud.seed).map_err(CliError::config_from)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec, CliError> {
        NoiseSpec::new(self.noise.k_rel_sigma, self.noise.seed).map_err(CliError::config_from)
    }

    pub fn initial_state(&self) -> Result<InitialState<f64>, CliError> {
        let hbar = self.params.hbar_eff;
        Ok(match self.initial.kind {
            InitialKind::PlaneWave => InitialState::PlaneWave { m0: self.initial.m0 },
            InitialKind::Gaussian => {
                if self.initial.sigma_p.is_nan() || self.initial.sigma_p <= 0.0 {
                    return Err(CliError::config("initial.sigma_p must be positive"));
                }
                InitialState::GaussianPacket {
                    sigma_p: self.initial.sigma_p * hbar,
                    center: self.initial.m0,
                }
            }
        })
    }

    /// Checks every section against the library's invariants.
    pub fn validate(&self) -> Result<(), CliError> {
        self.sim_params()?;
        self.cloud_spec()?;
        self.noise_spec()?;
        self.initial_state()?;
        if !(0.0..1.0).contains(&self.initial.beta) {
            return Err(CliError::config("initial.beta must lie in [0, 1)"));
        }
        if self.output.record_every < 1 {
            return Err(CliError::config("output.record_every must be at least 1"));
        }
        if self.classical.n_orbits < 1 || self.classical.n_steps < 1 || self.classical.n_members < 1 {
            return Err(CliError::config("classical section needs positive counts"));
        }
        if self.sweep.block_lens.iter().any(|&m| m < 1) {
            return Err(CliError::config("sweep.M_list entries must be at least 1"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Parses and validates a configuration. Errors carry the 1-based line of
/// the offending key when it can be located.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        CliError::Config {
            message: e.message().trim().to_string(),
            line,
        }
    })?;
    cfg.validate().map_err(|e| match e {
        CliError::Config { message, line: None } => {
            let line = locate_key(text, &message);
            CliError::Config { message, line }
        }
        other => other,
    })?;
    Ok(cfg)
}

/// Reads a TOML config, or the `config` object of a JSON sidecar written by
/// an earlier run.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        message: format!("{}: {e}", path.display()),
        line: None,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        let sidecar: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config {
                message: e.to_string(),
                line: Some(e.line()),
            })?;
        let cfg: RunConfig = sidecar
            .get("config")
            .cloned()
            .ok_or_else(|| CliError::config("sidecar has no config object"))
            .and_then(|v| serde_json::from_value(v).map_err(|e| CliError::config(e.to_string())))?;
        cfg.validate()?;
        return Ok(cfg);
    }
    parse_config(&text)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Best-effort line lookup for a semantic error: the line assigning the
/// first key, in priority order, tied to the message.
fn locate_key(text: &str, message: &str) -> Option<usize> {
    const KEYS: &[(&str, &[&str])] = &[
        ("inconsistent", &["K", "k", "hbar_eff"]),
        ("divisible", &["n_kicks", "M"]),
        ("n_kicks", &["n_kicks"]),
        ("hbar_eff", &["hbar_eff"]),
        ("grid_size", &["grid_size"]),
        ("block length", &["M"]),
        ("kick strength", &["k", "K"]),
        ("sigma_p", &["sigma_p"]),
        ("k_rel_sigma", &["k_rel_sigma"]),
        ("record_every", &["record_every"]),
        ("beta", &["beta"]),
        ("M_list", &["M_list"]),
    ];
    let keys = KEYS.iter().find(|(needle, _)| message.contains(needle))?.1;
    keys.iter().find_map(|key| {
        text.lines().enumerate().find_map(|(i, line)| {
            let (lhs, _) = line.split_once('=')?;
            (lhs.trim() == *key).then_some(i + 1)
        })
    })
}

/// Worker count from `KRLAB_THREADS`, if set to a positive integer.
pub fn exec_from_env() -> ExecOptions {
    let threads = std::env::var("KRLAB_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0);
    ExecOptions { threads }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[params]\nK = 5.0\nhbar_eff = 1.0\nn_kicks = 60\n";

    #[test]
    fn minimal_kicked_rotor() {
        let cfg = parse_config(MINIMAL).unwrap();
        let p = cfg.sim_params().unwrap();
        assert_eq!(p.mode, Mode::Kr);
        assert_eq!(p.kick_strength, 5.0);
        assert_eq!(p.grid_size, 2048);
        assert_eq!(cfg.output.record_every, 1);
        assert_eq!(cfg.cloud.n_members, 200);
    }

    #[test]
    fn inconsistent_strengths() {
        let text = "[params]\nK = 5.0\nk = 5.0\nhbar_eff = 2.0\nn_kicks = 60\n";
        let err = parse_config(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("inconsistent"), "{err}");
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn makr_divisibility() {
        let text = "[params]\nk = 5.0\nhbar_eff = 1.0\nmode = \"MAKR\"\nM = 4\nn_kicks = 62\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("divisible"), "{err}");
        assert_eq!(err.line(), Some(6));
    }

    #[test]
    fn zero_kicks() {
        let err = parse_config("[params]\nk = 5.0\nhbar_eff = 1.0\nn_kicks = 0\n").unwrap_err();
        assert_eq!(err.line(), Some(4));
    }

    #[test]
    fn missing_keys() {
        let err = parse_config("[params]\nK = 5.0\nn_kicks = 10\n").unwrap_err();
        assert!(err.to_string().contains("hbar_eff"), "{err}");
        let err = parse_config("[params]\nhbar_eff = 1.0\nn_kicks = 10\n").unwrap_err();
        assert!(err.to_string().contains("missing"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_line() {
        let text = "[params]\nK = 5.0\nhbar_eff = 1.0\nn_kicks = 10\n\n[cloud]\ntemperature = 3\n";
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("temperature"), "{err}");
        assert_eq!(err.line(), Some(7));
        assert!(parse_config("[params]\nK=1.0\nhbar_eff=1.0\nn_kicks=1\n[extra]\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let text = "[params]\nk = 5.0\nhbar_eff = 1.0\nmode = \"MAKR\"\nM = 3\nn_kicks = 60\n\n[noise]\nk_rel_sigma = 0.1\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(parse_config(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn bad_sections() {
        let base = "[params]\nK = 5.0\nhbar_eff = 1.0\nn_kicks = 10\n";
        assert!(parse_config(&format!("{base}[cloud]\nsigma_p = 0.0\n")).is_err());
        assert!(parse_config(&format!("{base}[noise]\nk_rel_sigma = 0.7\n")).is_err());
        assert!(parse_config(&format!("{base}[output]\nrecord_every = 0\n")).is_err());
        assert!(parse_config(&format!("{base}[initial]\nbeta = 1.5\n")).is_err());
        assert!(parse_config(&format!("{base}[params]\n")).is_err());
    }
}
