//! Thermal-cloud ensembles: sampling, batched evolution and deterministic
//! averaging.
//!
//! Members are mutually incoherent, so averages are taken over
//! probabilities. Every reduction runs in member order; the thread count
//! never changes a single bit of the output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{build_schedule, KickSchedule, Mode, SimParams, MAX_GRID_SIZE};
use crate::observables::{self, MomentumDistribution, ObservableSeries};
use crate::quantum::{edge_band, is_recorded, make_initial, FftPlans, InitialState, MomentumWavefunction, Propagator};
use crate::Real;

/// Gaussian momentum cloud, `σ_p` in units of `ħ_eff`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudSpec<T> {
    pub sigma_p: T,
    pub n_members: usize,
    pub seed: u64,
}

impl<T: Real> CloudSpec<T> {
    pub fn new(sigma_p: T, n_members: usize, seed: u64) -> Result<Self> {
        let s = Self {
            sigma_p,
            n_members,
            seed,
        };
        s.validate()?;
        Ok(s)
    }

    /// Momentum spread `w`, the same number as `sigma_p`.
    pub fn w(&self) -> T {
        self.sigma_p
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_p > T::zero()) || !self.sigma_p.is_finite() {
            return Err(Error::InvalidParameter("cloud sigma_p must be positive".into()));
        }
        if self.n_members < 1 {
            return Err(Error::InvalidParameter("cloud needs at least one member".into()));
        }
        Ok(())
    }
}

/// Frozen per-member relative error on the kick strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec<T> {
    pub k_rel_sigma: T,
    pub seed: u64,
}

impl<T: Real> NoiseSpec<T> {
    pub fn none() -> Self {
        Self {
            k_rel_sigma: T::zero(),
            seed: 0,
        }
    }

    pub fn new(k_rel_sigma: T, seed: u64) -> Result<Self> {
        let s = Self { k_rel_sigma, seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_rel_sigma >= T::zero() && self.k_rel_sigma < T::lit(0.5)) {
            return Err(Error::InvalidParameter("k_rel_sigma must lie in [0, 0.5)".into()));
        }
        Ok(())
    }
}

/// Initial momentum `ħ_eff (m0 + β)` of one atom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudMember<T> {
    pub m0: i64,
    pub beta: T,
}

impl<T: Real> CloudMember<T> {
    pub fn momentum(&self, hbar_eff: T) -> T {
        hbar_eff * (T::from_i64_lossy(self.m0) + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudSample<T> {
    pub members: Vec<CloudMember<T>>,
    /// Draws that fell outside the usable grid and were redrawn.
    pub rejected: usize,
}

/// Draws `p0 ~ N(0, σ_p ħ_eff)` per member and splits it as
/// `p0 = ħ_eff (m0 + β)`, `β ∈ [0, 1)`. Draws landing in the grid's edge
/// band are redrawn. The draw is made in recoil units, so `ħ_eff` only
/// scales the resulting momenta.
pub fn sample_cloud<T: Real>(spec: &CloudSpec<T>, _hbar_eff: T, grid_size: usize) -> Result<CloudSample<T>> {
    spec.validate()?;
    let half = grid_size as i64 / 2;
    let band = edge_band(grid_size) as i64;
    let sigma = spec.sigma_p.to_f64_lossy();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut members = Vec::with_capacity(spec.n_members);
    let mut rejected = 0usize;
    while members.len() < spec.n_members {
        let z: f64 = StandardNormal.sample(&mut rng);
        // p0 / ħ_eff, in recoil units.
        let q = sigma * z;
        let m0 = q.floor();
        if m0 < (-half + band) as f64 || m0 >= (half - band) as f64 {
            rejected += 1;
            if rejected > 1000 * spec.n_members {
                return Err(Error::InvalidParameter("cloud is far wider than the grid".into()));
            }
            continue;
        }
        let mut beta = q - m0;
        if beta >= 1.0 {
            beta = 0.0;
        }
        members.push(CloudMember {
            m0: m0 as i64,
            beta: T::lit(beta),
        });
    }
    Ok(CloudSample { members, rejected })
}

/// Per-member kick strengths `k (1 + σ ξ)`, `ξ ~ N(0, 1)`; draws with
/// `1 + σ ξ <= 0` are redrawn.
pub fn member_kick_strengths<T: Real>(kick_strength: T, noise: &NoiseSpec<T>, n: usize) -> Result<Vec<T>> {
    noise.validate()?;
    if noise.k_rel_sigma == T::zero() {
        return Ok(vec![kick_strength; n]);
    }
    let sigma = noise.k_rel_sigma.to_f64_lossy();
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let z: f64 = StandardNormal.sample(&mut rng);
        let factor = 1.0 + sigma * z;
        if factor > 0.0 {
            out.push(kick_strength * T::lit(factor));
        }
    }
    Ok(out)
}

/// Worker-count control. `threads: None` uses rayon's global pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecOptions {
    pub threads: Option<usize>,
}

impl ExecOptions {
    pub fn with_threads(threads: usize) -> Self {
        Self { threads: Some(threads) }
    }

    /// Runs `f` inside a pool of the requested size.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        match self.threads {
            None => Ok(f()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult<T> {
    /// Member-averaged energy; IPR of the member-averaged distribution.
    pub series: ObservableSeries<T>,
    /// Member-averaged distribution after the final kick.
    pub final_distribution: MomentumDistribution<T>,
    pub member_final_energy: Vec<T>,
    pub member_final_ipr: Vec<T>,
    pub members: Vec<CloudMember<T>>,
    pub kick_strengths: Vec<T>,
    /// Grid the run completed on (after any doubling).
    pub grid_size: usize,
    pub rejected: usize,
}

/// Samples the cloud and kick noise, then runs every member through the
/// schedule built from `params`.
pub fn run_ensemble<T: Real>(
    params: &SimParams<T>,
    cloud: &CloudSpec<T>,
    noise: &NoiseSpec<T>,
    record_every: usize,
    exec: &ExecOptions,
) -> Result<EnsembleResult<T>> {
    params.validate()?;
    let sample = sample_cloud(cloud, params.hbar_eff, params.grid_size)?;
    let ks = member_kick_strengths(params.kick_strength, noise, cloud.n_members)?;
    let mut out = run_members(params, &sample.members, &ks, record_every, exec)?;
    out.rejected = sample.rejected;
    Ok(out)
}

/// Runs explicit members (plane waves `|m0⟩` at quasimomentum `β`) with
/// their own kick strengths. The grid doubles, and the whole ensemble
/// restarts, whenever any member reaches the edge band.
pub fn run_members<T: Real>(
    params: &SimParams<T>,
    members: &[CloudMember<T>],
    kick_strengths: &[T],
    record_every: usize,
    exec: &ExecOptions,
) -> Result<EnsembleResult<T>> {
    params.validate()?;
    if members.is_empty() || members.len() != kick_strengths.len() {
        return Err(Error::InvalidInput("need one kick strength per member".into()));
    }
    if record_every < 1 {
        return Err(Error::InvalidParameter("record_every must be at least 1".into()));
    }
    let schedule = build_schedule(params)?;
    let mut grid = params.grid_size;
    loop {
        let attempt = exec.install(|| lockstep(params, &schedule, members, kick_strengths, grid, record_every))?;
        match attempt {
            Err(Error::Member { member, source }) => match *source {
                Error::GridTooSmall { .. } if grid < MAX_GRID_SIZE => {
                    log::info!("member {member} reached the grid edge at D={grid}; restarting at D={}", 2 * grid);
                    grid *= 2;
                }
                other => {
                    return Err(Error::Member {
                        member,
                        source: Box::new(other),
                    })
                }
            },
            other => return other,
        }
    }
}

struct Member<T: Real> {
    psi: MomentumWavefunction<T>,
    prop: Propagator<T>,
}

fn lockstep<T: Real>(
    params: &SimParams<T>,
    schedule: &KickSchedule,
    members: &[CloudMember<T>],
    kick_strengths: &[T],
    grid: usize,
    record_every: usize,
) -> Result<EnsembleResult<T>> {
    let plans = FftPlans::new(grid);
    let mut states = members
        .iter()
        .zip(kick_strengths)
        .enumerate()
        .map(|(id, (mem, &k))| {
            let psi = make_initial(InitialState::PlaneWave { m0: mem.m0 }, mem.beta, grid, params.hbar_eff)
                .map_err(|e| member_error(id, e))?;
            let prop = Propagator::new(plans.clone(), k, mem.beta, params.hbar_eff);
            Ok(Member { psi, prop })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut series = ObservableSeries::new();
    let (e, dist) = reduce(&states, params.hbar_eff);
    series.push(0, e, observables::ipr(&dist));

    let n = schedule.len();
    for (i, &entry) in schedule.entries().iter().enumerate() {
        let outcomes: Vec<Result<()>> = states
            .par_iter_mut()
            .map(|m| m.prop.step(&mut m.psi, entry))
            .collect();
        if let Some((id, err)) = outcomes
            .into_iter()
            .enumerate()
            .find_map(|(id, r)| r.err().map(|e| (id, e)))
        {
            return Err(member_error(id, err));
        }
        let kick = i + 1;
        if is_recorded(kick, record_every, n) {
            let (e, dist) = reduce(&states, params.hbar_eff);
            series.push(kick, e, observables::ipr(&dist));
            if kick == n {
                series.insert_snapshot(kick, dist);
            }
        }
    }

    let final_distribution = series.snapshots[&n].clone();
    let member_final_energy: Vec<T> = states.par_iter().map(|m| observables::mean_energy(&m.psi)).collect();
    let member_final_ipr: Vec<T> = states.par_iter().map(|m| observables::ipr_of_state(&m.psi)).collect();
    Ok(EnsembleResult {
        series,
        final_distribution,
        member_final_energy,
        member_final_ipr,
        members: members.to_vec(),
        kick_strengths: kick_strengths.to_vec(),
        grid_size: grid,
        rejected: 0,
    })
}

fn member_error(member: usize, e: Error) -> Error {
    Error::Member {
        member,
        source: Box::new(e),
    }
}

/// Mean member energy and the averaged distribution, both summed in member
/// order.
fn reduce<T: Real>(states: &[Member<T>], hbar_eff: T) -> (T, MomentumDistribution<T>) {
    let energies: Vec<T> = states.par_iter().map(|m| observables::mean_energy(&m.psi)).collect();
    let n = T::from_usize_lossy(states.len());
    let energy = energies.iter().fold(T::zero(), |a, &b| a + b) / n;

    let d = states[0].psi.grid_size();
    let mut probs = vec![T::zero(); d];
    for m in states {
        for (slot, a) in probs.iter_mut().zip(m.psi.amps()) {
            *slot = *slot + a.norm_sqr();
        }
    }
    probs.iter_mut().for_each(|p| *p = *p / n);
    let beta = states[0].psi.beta();
    let same_beta = states.iter().all(|m| m.psi.beta() == beta);
    let dist = MomentumDistribution::from_parts(
        probs,
        states[0].psi.m_min(),
        if same_beta { Some(beta) } else { None },
        hbar_eff,
    );
    (energy, dist)
}

/// One MAKR ensemble per block length, all with the same cloud and noise
/// seeds.
pub fn sweep_m<T: Real>(
    template: &SimParams<T>,
    block_lens: &[usize],
    cloud: &CloudSpec<T>,
    noise: &NoiseSpec<T>,
    record_every: usize,
    exec: &ExecOptions,
) -> Result<Vec<(usize, EnsembleResult<T>)>> {
    block_lens
        .iter()
        .map(|&m| {
            let mut p = *template;
            p.mode = Mode::Makr;
            p.block_len = m;
            p.validate()?;
            run_ensemble(&p, cloud, noise, record_every, exec).map(|r| (m, r))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::evolve;

    fn params(mode: Mode, m: usize, n: usize) -> SimParams<f64> {
        SimParams::from_kick_strength(5.0, 1.0, mode, m, n)
            .unwrap()
            .with_grid_size(512)
            .unwrap()
    }

    #[test]
    fn degenerate_cloud() {
        let s = sample_cloud(&CloudSpec::new(1e-12, 50, 3).unwrap(), 1.0_f64, 512).unwrap();
        for m in &s.members {
            assert!(m.momentum(1.0).abs() < 1e-9);
            assert!(m.beta.min(1.0 - m.beta) < 1e-9);
        }
    }

    #[test]
    fn cloud_is_deterministic() {
        let spec = CloudSpec::new(2.0, 300, 42).unwrap();
        assert_eq!(sample_cloud(&spec, 1.0_f64, 512).unwrap(), sample_cloud(&spec, 1.0_f64, 512).unwrap());
        let other = CloudSpec::new(2.0, 300, 43).unwrap();
        assert_ne!(sample_cloud(&spec, 1.0_f64, 512).unwrap(), sample_cloud(&other, 1.0_f64, 512).unwrap());
    }

    #[test]
    fn cloud_variance() {
        let hbar = 0.5;
        let s = sample_cloud(&CloudSpec::new(2.0, 100_000, 9).unwrap(), hbar, 2048).unwrap();
        let ps: Vec<f64> = s.members.iter().map(|m| m.momentum(hbar)).collect();
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        let var = ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (ps.len() - 1) as f64;
        let target = (2.0 * hbar) * (2.0 * hbar);
        assert!(((var - target) / target).abs() < 0.02, "var {var}");
        assert!(s.members.iter().all(|m| (0.0..1.0).contains(&m.beta)));
    }

    #[test]
    fn wide_cloud_is_rejected_and_redrawn() {
        let s = sample_cloud(&CloudSpec::new(40.0, 200, 1).unwrap(), 1.0_f64, 64).unwrap();
        assert!(s.rejected > 0);
        assert!(s.members.iter().all(|m| (-31..31).contains(&m.m0)));
    }

    #[test]
    fn invalid_specs() {
        assert!(CloudSpec::new(0.0_f64, 10, 1).is_err());
        assert!(CloudSpec::new(1.0_f64, 0, 1).is_err());
        assert!(NoiseSpec::new(0.5_f64, 1).is_err());
        assert!(NoiseSpec::new(-0.1_f64, 1).is_err());
    }

    #[test]
    fn kick_noise_statistics() {
        let ks = member_kick_strengths(5.0_f64, &NoiseSpec::new(0.1, 7).unwrap(), 20_000).unwrap();
        let mean = ks.iter().sum::<f64>() / ks.len() as f64;
        let sd = (ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / ks.len() as f64).sqrt();
        assert!((mean - 5.0).abs() < 0.02);
        assert!((sd - 0.5).abs() < 0.02);
        assert_eq!(member_kick_strengths(5.0_f64, &NoiseSpec::none(), 3).unwrap(), vec![5.0; 3]);
    }

    #[test]
    fn single_member_matches_evolve() {
        let p = params(Mode::Makr, 2, 20);
        let member = CloudMember { m0: 0, beta: 0.0 };
        let r = run_members(&p, &[member], &[5.0], 1, &ExecOptions::default()).unwrap();
        let psi0 = make_initial(InitialState::PlaneWave { m0: 0 }, 0.0, 512, 1.0).unwrap();
        let (_, s) = evolve(&psi0, &build_schedule(&p).unwrap(), &p, 1).unwrap();
        assert_eq!(r.series.kick_index, s.kick_index);
        assert_eq!(r.series.energy, s.energy);
        assert_eq!(r.series.ipr, s.ipr);
    }

    #[test]
    fn averaged_energy_is_member_mean() {
        let p = params(Mode::Makr, 3, 15);
        let r = run_ensemble(
            &p,
            &CloudSpec::new(2.0, 24, 5).unwrap(),
            &NoiseSpec::new(0.1, 6).unwrap(),
            5,
            &ExecOptions::default(),
        )
        .unwrap();
        let mean = r.member_final_energy.iter().sum::<f64>() / 24.0;
        assert!((r.series.energy_at(15).unwrap() - mean).abs() < 1e-12);
        assert!((r.final_distribution.total() - 1.0).abs() < 1e-9);
        assert!(!r.final_distribution.beta_resolved());
    }

    #[test]
    fn thread_count_does_not_change_bits() {
        let p = params(Mode::Makr, 2, 12);
        let cloud = CloudSpec::new(2.0, 16, 11).unwrap();
        let noise = NoiseSpec::new(0.1, 12).unwrap();
        let a = run_ensemble(&p, &cloud, &noise, 1, &ExecOptions::with_threads(1)).unwrap();
        let b = run_ensemble(&p, &cloud, &noise, 1, &ExecOptions::with_threads(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_block_sweep_is_kicked_rotor() {
        let n = 24;
        let cloud = CloudSpec::new(2.0, 8, 1).unwrap();
        let noise = NoiseSpec::new(0.1, 2).unwrap();
        let exec = ExecOptions::default();
        let sweep = sweep_m(&params(Mode::Makr, 1, n), &[n], &cloud, &noise, 1, &exec).unwrap();
        let kr = run_ensemble(&params(Mode::Kr, 1, n), &cloud, &noise, 1, &exec).unwrap();
        assert_eq!(sweep[0].1.series, kr.series);
    }

    #[test]
    fn sweep_rejects_bad_block_length() {
        let cloud = CloudSpec::new(2.0, 2, 1).unwrap();
        let r = sweep_m(&params(Mode::Makr, 1, 10), &[3], &cloud, &NoiseSpec::none(), 1, &ExecOptions::default());
        assert!(matches!(r, Err(Error::InvalidSchedule(_))));
    }

    #[test]
    fn grid_doubles_when_needed() {
        let p = SimParams::from_kick_strength(20.0_f64, 1.0, Mode::Kr, 1, 4)
            .unwrap()
            .with_grid_size(64)
            .unwrap();
        let r = run_members(&p, &[CloudMember { m0: 0, beta: 0.0 }], &[20.0], 1, &ExecOptions::default()).unwrap();
        assert!(r.grid_size > 64);
    }
}
