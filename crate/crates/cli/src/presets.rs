//! Figure presets. Each fixes the physical parameters and block lengths of
//! one figure; cloud, noise, classical and output settings still come from
//! the supplied config.

use krlab::ensemble::{run_ensemble, ExecOptions};
use krlab::observables::{estimate_break_time, BreakTime};
use krlab::{Mode, SimParams};
use serde::Serialize;

use crate::commands::{sweep_runs, write_section, SummaryRow};
use crate::config::{ParamsSection, RunConfig};
use crate::error::CliError;
use crate::output::OutputSet;

pub const FIGURES: [u8; 5] = [1, 2, 3, 4, 5];

/// `ħ_eff` values scanned by figure 5, at fixed `K = 5`.
pub const FIG5_HBARS: [f64; 3] = [1.0, 0.75, 0.5];
pub const FIG5_BLOCK_LENS: [usize; 5] = [2, 3, 4, 5, 6];

fn params(chaos: f64, mode: Mode, block_len: usize, n_kicks: usize, grid_size: usize) -> ParamsSection {
    ParamsSection {
        chaos: Some(chaos),
        k: None,
        hbar_eff: 1.0,
        mode,
        block_len,
        n_kicks,
        grid_size,
    }
}

/// `base` with the preset's parameters written in.
pub fn figure_config(figure: u8, base: &RunConfig) -> Result<RunConfig, CliError> {
    let mut cfg = base.clone();
    let grid = base.params.grid_size;
    cfg.preset = Some(format!("fig{figure}"));
    match figure {
        1 => cfg.params = params(5.0, Mode::Kr, 1, 1, grid),
        2 => cfg.params = params(5.0, Mode::Kr, 1, 1000, grid),
        3 | 4 => {
            cfg.params = params(5.0, Mode::Makr, 2, 60, grid);
            cfg.sweep.block_lens = vec![2, 3, 4];
            cfg.sweep.include_kr = true;
            if cfg.noise.k_rel_sigma == 0.0 {
                cfg.noise.k_rel_sigma = 0.1;
            }
        }
        5 => {
            cfg.params = params(5.0, Mode::Makr, 2, 60, grid);
            cfg.sweep.block_lens = FIG5_BLOCK_LENS.to_vec();
            cfg.sweep.include_kr = true;
        }
        n => return Err(CliError::config(format!("no figure preset {n}; choose 1 to 5"))),
    }
    Ok(cfg)
}

pub fn run_figure(figure: u8, cfg: &RunConfig, exec: &ExecOptions, out: &mut OutputSet) -> Result<(), CliError> {
    let sim = cfg.sim_params()?;
    match figure {
        1 => {
            for m in [0, 2, 3] {
                write_section(out, &format!("poincare_M{m}.csv"), cfg, sim.chaos, m, exec)?;
            }
            Ok(())
        }
        2 => figure2(cfg, &sim, exec, out),
        3 | 4 => {
            let runs = sweep_runs(cfg, &sim, exec)?;
            for (label, _, res) in &runs {
                if figure == 3 {
                    out.write_energy(&format!("energy_{label}.csv"), &res.series)?;
                } else {
                    out.write_distribution(&format!("distribution_{label}.csv"), &res.final_distribution)?;
                }
            }
            let rows: Vec<_> = runs.iter().map(|(l, m, r)| SummaryRow::of(l, *m, &sim, r)).collect();
            out.write_rows("summary.csv", rows)
        }
        5 => {
            let mut rows = Vec::new();
            for &h in &FIG5_HBARS {
                let scaled = SimParams::from_chaos(sim.chaos, h, sim.mode, sim.block_len, sim.n_kicks)?
                    .with_grid_size(sim.grid_size)?;
                for (l, m, r) in sweep_runs(cfg, &scaled, exec)? {
                    rows.push(SummaryRow::of(&l, m, &scaled, &r));
                }
            }
            out.write_rows("ipr_vs_M.csv", rows)
        }
        n => Err(CliError::config(format!("no figure preset {n}; choose 1 to 5"))),
    }
}

#[derive(Serialize)]
struct LocalizationRow {
    label: String,
    localized: bool,
    break_time: Option<usize>,
    saturation_energy: Option<f64>,
}

fn figure2(cfg: &RunConfig, sim: &SimParams, exec: &ExecOptions, out: &mut OutputSet) -> Result<(), CliError> {
    let cloud = cfg.cloud_spec()?;
    let noise = cfg.noise_spec()?;
    let mut mkr = *sim;
    mkr.mode = Mode::Mkr;
    mkr.block_len = 2;
    let mut rows = Vec::new();
    for (label, p) in [("KR", *sim), ("MKR_M2", mkr)] {
        let res = run_ensemble(&p, &cloud, &noise, cfg.output.record_every, exec)?;
        out.write_energy(&format!("energy_{label}.csv"), &res.series)?;
        let row = match estimate_break_time(&res.series) {
            Ok(BreakTime::Localized {
                break_time,
                saturation_energy,
            }) => LocalizationRow {
                label: label.into(),
                localized: true,
                break_time: Some(break_time),
                saturation_energy: Some(saturation_energy),
            },
            _ => LocalizationRow {
                label: label.into(),
                localized: false,
                break_time: None,
                saturation_energy: None,
            },
        };
        rows.push(row);
    }
    out.write_rows("localization.csv", rows)
}
