//! Subcommand implementations. Each writes its data files plus a sidecar
//! into the configured output directory and returns the sidecar path.

use std::f64::consts::TAU;
use std::path::PathBuf;

use krlab::bessel::bessel_j;
use krlab::classical::{classical_mean_energy, poincare_section, ClassicalEnsemble};
use krlab::ensemble::{run_ensemble, sweep_m, ExecOptions};
use krlab::model::build_schedule;
use krlab::quantum::{apply_kick, evolve_adaptive, make_initial, InitialState};
use krlab::{EnsembleResult, Mode, Sign, SimParams};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputSet;
use crate::presets;

/// Largest acceptable `|P_n − J_n(k)²|` for `calibrate-bessel`.
pub const BESSEL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Poincare,
    Evolve,
    Ensemble,
    SweepM,
    CalibrateBessel,
    Figure(u8),
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Poincare => "poincare",
            Command::Evolve => "evolve",
            Command::Ensemble => "ensemble",
            Command::SweepM => "sweep-m",
            Command::CalibrateBessel => "calibrate-bessel",
            Command::Figure(_) => "figure",
        }
    }
}

/// Values given on the command line; each replaces the matching config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed_cloud: Option<u64>,
    pub seed_noise: Option<u64>,
    pub grid: Option<usize>,
    pub record_every: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) -> Result<(), CliError> {
        if let Some(out) = &self.out {
            cfg.output.dir = out.clone();
        }
        if let Some(seed) = self.seed_cloud {
            cfg.cloud.seed = seed;
        }
        if let Some(seed) = self.seed_noise {
            cfg.noise.seed = seed;
        }
        if let Some(grid) = self.grid {
            cfg.params.grid_size = grid;
        }
        if let Some(every) = self.record_every {
            cfg.output.record_every = every;
        }
        cfg.validate()
    }
}

pub fn run_command(cmd: Command, cfg: &RunConfig, exec: &ExecOptions) -> Result<PathBuf, CliError> {
    let cfg = match cmd {
        Command::Figure(n) => presets::figure_config(n, cfg)?,
        _ => cfg.clone(),
    };
    cfg.validate()?;
    let mut out = OutputSet::create(&cfg.output.dir)?;
    let outcome = match cmd {
        Command::Poincare => poincare(&cfg, exec, &mut out),
        Command::Evolve => evolve(&cfg, &mut out),
        Command::Ensemble => ensemble(&cfg, exec, &mut out),
        Command::SweepM => sweep(&cfg, exec, &mut out),
        Command::CalibrateBessel => calibrate_bessel(&cfg, &mut out),
        Command::Figure(n) => presets::run_figure(n, &cfg, exec, &mut out),
    };
    // A failed calibration still leaves its table behind for inspection.
    if let Err(e) = outcome {
        if matches!(e, CliError::Check(_)) {
            out.finish(cmd.name(), figure_number(cmd), &cfg)?;
        }
        return Err(e);
    }
    out.finish(cmd.name(), figure_number(cmd), &cfg)
}

fn figure_number(cmd: Command) -> Option<u8> {
    match cmd {
        Command::Figure(n) => Some(n),
        _ => None,
    }
}

/// Block length for the classical map: 0 means the sign never flips.
pub(crate) fn classical_block_len(sim: &SimParams) -> Result<usize, CliError> {
    match sim.mode {
        Mode::Kr => Ok(0),
        Mode::Mkr => Ok(sim.block_len),
        Mode::Makr => Err(CliError::config(
            "the classical map has no half-Talbot gap; use mode KR or MKR",
        )),
    }
}

#[derive(Serialize)]
struct SectionRow {
    orbit_id: usize,
    step: usize,
    x: f64,
    p_fold: f64,
}

#[derive(Serialize)]
struct ClassicalEnergyRow {
    step: usize,
    mean_energy: f64,
}

pub(crate) fn write_section(
    out: &mut OutputSet,
    name: &str,
    cfg: &RunConfig,
    chaos: f64,
    block_len: usize,
    exec: &ExecOptions,
) -> Result<(), CliError> {
    let c = &cfg.classical;
    let points = exec.install(|| poincare_section(chaos, block_len, c.n_orbits, c.n_steps, c.seed))??;
    out.write_rows(
        name,
        points.iter().map(|pt| SectionRow {
            orbit_id: pt.orbit_id,
            step: pt.step,
            x: pt.x,
            p_fold: pt.p_fold,
        }),
    )
}

fn poincare(cfg: &RunConfig, exec: &ExecOptions, out: &mut OutputSet) -> Result<(), CliError> {
    let sim = cfg.sim_params()?;
    let m = classical_block_len(&sim)?;
    write_section(out, "poincare.csv", cfg, sim.chaos, m, exec)?;
    let c = &cfg.classical;
    let mut ens = ClassicalEnsemble::uniform(c.n_members, 0.0, TAU, c.seed);
    let series = classical_mean_energy(&mut ens, sim.chaos, m, c.n_steps)?;
    out.write_rows(
        "classical_energy.csv",
        series
            .energy
            .iter()
            .enumerate()
            .map(|(step, &mean_energy)| ClassicalEnergyRow { step, mean_energy }),
    )
}

fn evolve(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let sim = cfg.sim_params()?;
    let psi0 = make_initial(cfg.initial_state()?, cfg.initial.beta, sim.grid_size, sim.hbar_eff)?;
    let schedule = build_schedule(&sim)?;
    let (psi, series) = evolve_adaptive(&psi0, &schedule, &sim, cfg.output.record_every)?;
    out.write_energy("energy.csv", &series)?;
    out.write_distribution("distribution.csv", &psi.distribution())
}

#[derive(Serialize)]
struct MemberRow {
    member: usize,
    m0: i64,
    beta: f64,
    kick_strength: f64,
    final_energy: f64,
    final_ipr: f64,
}

fn write_members(out: &mut OutputSet, name: &str, res: &EnsembleResult) -> Result<(), CliError> {
    let rows = (0..res.members.len()).map(|i| MemberRow {
        member: i,
        m0: res.members[i].m0,
        beta: res.members[i].beta,
        kick_strength: res.kick_strengths[i],
        final_energy: res.member_final_energy[i],
        final_ipr: res.member_final_ipr[i],
    });
    out.write_rows(name, rows)
}

fn ensemble(cfg: &RunConfig, exec: &ExecOptions, out: &mut OutputSet) -> Result<(), CliError> {
    let sim = cfg.sim_params()?;
    let res = run_ensemble(&sim, &cfg.cloud_spec()?, &cfg.noise_spec()?, cfg.output.record_every, exec)?;
    out.write_energy("energy.csv", &res.series)?;
    out.write_distribution("distribution.csv", &res.final_distribution)?;
    write_members(out, "members.csv", &res)
}

#[derive(Serialize)]
pub(crate) struct SummaryRow {
    pub label: String,
    /// 0 for the unmodified rotor.
    pub block_len: usize,
    pub hbar_eff: f64,
    pub kick: usize,
    pub mean_energy: f64,
    pub ipr: f64,
}

impl SummaryRow {
    pub(crate) fn of(label: &str, block_len: usize, sim: &SimParams, res: &EnsembleResult) -> Self {
        let last = res.series.kick_index.len() - 1;
        Self {
            label: label.to_string(),
            block_len,
            hbar_eff: sim.hbar_eff,
            kick: res.series.kick_index[last],
            mean_energy: res.series.energy[last],
            ipr: krlab::observables::ipr(&res.final_distribution),
        }
    }
}

/// KR (optional) plus one MAKR ensemble per block length, sharing seeds.
pub(crate) fn sweep_runs(
    cfg: &RunConfig,
    sim: &SimParams,
    exec: &ExecOptions,
) -> Result<Vec<(String, usize, EnsembleResult)>, CliError> {
    let cloud = cfg.cloud_spec()?;
    let noise = cfg.noise_spec()?;
    let every = cfg.output.record_every;
    let mut runs = Vec::new();
    if cfg.sweep.include_kr {
        let mut kr = *sim;
        kr.mode = Mode::Kr;
        kr.block_len = 1;
        runs.push(("KR".to_string(), 0, run_ensemble(&kr, &cloud, &noise, every, exec)?));
    }
    for (m, res) in sweep_m(sim, &cfg.sweep.block_lens, &cloud, &noise, every, exec)? {
        runs.push((format!("M{m}"), m, res));
    }
    Ok(runs)
}

fn sweep(cfg: &RunConfig, exec: &ExecOptions, out: &mut OutputSet) -> Result<(), CliError> {
    let sim = cfg.sim_params()?;
    let runs = sweep_runs(cfg, &sim, exec)?;
    for (label, _, res) in &runs {
        out.write_energy(&format!("energy_{label}.csv"), &res.series)?;
        out.write_distribution(&format!("distribution_{label}.csv"), &res.final_distribution)?;
    }
    let rows: Vec<_> = runs.iter().map(|(l, m, r)| SummaryRow::of(l, *m, &sim, r)).collect();
    out.write_rows("summary.csv", rows)
}

#[derive(Serialize)]
struct BesselRow {
    n: i64,
    #[serde(rename = "P_n")]
    p_n: f64,
    #[serde(rename = "J_n_sq")]
    j_n_sq: f64,
    abs_diff: f64,
}

/// One kick of strength `k` on `|0⟩`, compared order by order with
/// `J_n(k)²`. Fails with exit status 3 when any order misses by
/// [`BESSEL_TOLERANCE`] or more.
fn calibrate_bessel(cfg: &RunConfig, out: &mut OutputSet) -> Result<(), CliError> {
    let sim = cfg.sim_params()?;
    let psi0 = make_initial(InitialState::PlaneWave { m0: 0 }, 0.0, sim.grid_size, sim.hbar_eff)?;
    let psi = apply_kick(psi0, sim.kick_strength, Sign::Plus)?;
    let n_max = cfg.output.bessel_max_order as i64;
    let rows: Vec<BesselRow> = (-n_max..=n_max)
        .map(|n| {
            let p_n = psi.amplitude(n).norm_sqr();
            let j = bessel_j(n, sim.kick_strength);
            BesselRow {
                n,
                p_n,
                j_n_sq: j * j,
                abs_diff: (p_n - j * j).abs(),
            }
        })
        .collect();
    let worst = rows.iter().map(|r| r.abs_diff).fold(0.0, f64::max);
    out.write_rows("bessel.csv", rows)?;
    if worst.is_nan() || worst >= BESSEL_TOLERANCE {
        return Err(CliError::Check(format!(
            "Bessel calibration off by {worst:e} (tolerance {BESSEL_TOLERANCE:e})"
        )));
    }
    Ok(())
}
