//! Split-operator evolution of momentum-space wavefunctions.
//!
//! A state lives on `D` integer momenta `m ∈ [-D/2, D/2)` plus a fixed
//! quasimomentum `β ∈ [0, 1)`, so the physical momentum of slot `m` is
//! `ħ_eff (m + β)`. Kicks are diagonal in position and are applied on the
//! uniform grid `x_j = 2πj/D`; free evolution is diagonal in momentum.
//!
//! Phases use the forward-time convention `exp(-i H t / ħ)`.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Gap, KickSchedule, ScheduleEntry, Sign, SimParams, MAX_GRID_SIZE, MIN_GRID_SIZE};
use crate::observables::{self, MomentumDistribution, ObservableSeries};
use crate::Real;

/// Largest probability allowed in the outer band of the grid.
pub const EDGE_TOLERANCE: f64 = 1e-8;

/// Width, per side, of the outer band holding 5% of the grid.
pub fn edge_band(grid_size: usize) -> usize {
    (grid_size / 40).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumWavefunction<T> {
    amps: Vec<Complex<T>>,
    beta: T,
    hbar_eff: T,
}

impl<T: Real> MomentumWavefunction<T> {
    /// Wraps amplitudes ordered by increasing momentum, slot `i` holding
    /// `m = i - D/2`. The state is normalised on construction.
    pub fn from_amplitudes(amps: Vec<Complex<T>>, beta: T, hbar_eff: T) -> Result<Self> {
        let d = amps.len();
        if !d.is_power_of_two() || !(MIN_GRID_SIZE..=MAX_GRID_SIZE).contains(&d) {
            return Err(Error::InvalidParameter(format!(
                "grid size {d} must be a power of two in [{MIN_GRID_SIZE}, {MAX_GRID_SIZE}]"
            )));
        }
        if !(beta >= T::zero() && beta < T::one()) {
            return Err(Error::InvalidParameter(format!("quasimomentum {beta} outside [0, 1)")));
        }
        if !(hbar_eff > T::zero()) {
            return Err(Error::InvalidParameter("hbar_eff must be positive".into()));
        }
        let mut psi = Self { amps, beta, hbar_eff };
        let n = psi.norm_sqr();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::InvalidParameter("state has zero or non-finite norm".into()));
        }
        let s = T::one() / n.sqrt();
        psi.amps.iter_mut().for_each(|a| *a = *a * s);
        Ok(psi)
    }

    pub fn grid_size(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.amps
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn hbar_eff(&self) -> T {
        self.hbar_eff
    }

    pub fn m_min(&self) -> i64 {
        -(self.grid_size() as i64 / 2)
    }

    /// Integer momentum of slot `i`.
    pub fn momentum_index(&self, i: usize) -> i64 {
        i as i64 + self.m_min()
    }

    /// Slot holding integer momentum `m`, if on the grid.
    pub fn slot(&self, m: i64) -> Option<usize> {
        let i = m - self.m_min();
        (i >= 0 && (i as usize) < self.grid_size()).then_some(i as usize)
    }

    pub fn amplitude(&self, m: i64) -> Complex<T> {
        self.slot(m).map_or(Complex::new(T::zero(), T::zero()), |i| self.amps[i])
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn distribution(&self) -> MomentumDistribution<T> {
        MomentumDistribution::from_parts(self.probabilities(), self.m_min(), Some(self.beta), self.hbar_eff)
    }

    /// Probability in the outer 5% of the grid (both wings together).
    pub fn edge_occupancy(&self) -> T {
        let band = edge_band(self.grid_size());
        let d = self.grid_size();
        self.amps[..band]
            .iter()
            .chain(&self.amps[d - band..])
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn check_edges(&self) -> Result<()> {
        let occ = self.edge_occupancy();
        if occ > T::lit(EDGE_TOLERANCE) || !occ.is_finite() {
            return Err(Error::GridTooSmall {
                grid_size: self.grid_size(),
                occupancy: occ.to_f64_lossy(),
            });
        }
        Ok(())
    }

    /// `⟨self|other⟩`.
    pub fn overlap(&self, other: &Self) -> Complex<T> {
        assert_eq!(self.grid_size(), other.grid_size(), "overlap needs equal grids");
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b)
    }

    pub fn fidelity(&self, other: &Self) -> T {
        self.overlap(other).norm()
    }

    /// Euclidean distance between amplitude vectors.
    pub fn distance(&self, other: &Self) -> T {
        assert_eq!(self.grid_size(), other.grid_size(), "distance needs equal grids");
        self.amps
            .iter()
            .zip(&other.amps)
            .fold(T::zero(), |acc, (a, b)| acc + (a - b).norm_sqr())
            .sqrt()
    }

    /// Same state embedded in a larger grid, zero-padded symmetrically.
    pub fn padded_to(&self, grid_size: usize) -> Result<Self> {
        if grid_size < self.grid_size() {
            return Err(Error::InvalidParameter("cannot shrink a grid by padding".into()));
        }
        let offset = (grid_size - self.grid_size()) / 2;
        let mut amps = vec![Complex::new(T::zero(), T::zero()); grid_size];
        amps[offset..offset + self.grid_size()].copy_from_slice(&self.amps);
        Self::from_amplitudes(amps, self.beta, self.hbar_eff)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InitialState<T> {
    /// Single momentum eigenstate `|m0⟩`.
    PlaneWave { m0: i64 },
    /// Gaussian momentum packet with standard deviation `sigma_p` (in units
    /// of momentum, so `sigma_p = 2 ħ_eff` spans two recoils).
    GaussianPacket { sigma_p: T, center: i64 },
}

pub fn make_initial<T: Real>(
    kind: InitialState<T>,
    beta: T,
    grid_size: usize,
    hbar_eff: T,
) -> Result<MomentumWavefunction<T>> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut amps = vec![zero; grid_size];
    let half = grid_size as i64 / 2;
    match kind {
        InitialState::PlaneWave { m0 } => {
            if m0 < -half || m0 >= half {
                return Err(Error::GridTooSmall {
                    grid_size,
                    occupancy: 1.0,
                });
            }
            amps[(m0 + half) as usize] = Complex::new(T::one(), T::zero());
        }
        InitialState::GaussianPacket { sigma_p, center } => {
            if !(sigma_p > T::zero()) {
                return Err(Error::InvalidParameter("sigma_p must be positive".into()));
            }
            let four = T::lit(4.0);
            for (i, a) in amps.iter_mut().enumerate() {
                let m = i as i64 - half;
                let dp = hbar_eff * (T::from_i64_lossy(m - center) + beta);
                *a = Complex::new((-(dp * dp) / (four * sigma_p * sigma_p)).exp(), T::zero());
            }
        }
    }
    let psi = MomentumWavefunction::from_amplitudes(amps, beta, hbar_eff)?;
    psi.check_edges()?;
    Ok(psi)
}

/// Duration of a free-evolution stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FreeDuration<T> {
    /// One kick period.
    Period,
    /// Half the Talbot time, `2π/ħ_eff` periods. The phase is reduced
    /// exactly so that at `β = 0` it is the translation `x → x + π`.
    HalfTalbot,
    /// Arbitrary multiple of the kick period.
    Ratio(T),
}

impl<T> FreeDuration<T> {
    pub fn from_gap(gap: Gap) -> Option<Self> {
        match gap {
            Gap::Period => Some(FreeDuration::Period),
            Gap::HalfTalbot => Some(FreeDuration::HalfTalbot),
            Gap::None => None,
        }
    }
}

/// Phase `ħ_eff τ (m+β)² / 2` accumulated by slot momentum `m`.
fn free_phase<T: Real>(m: i64, beta: T, hbar_eff: T, duration: FreeDuration<T>) -> T {
    let half = T::lit(0.5);
    match duration {
        FreeDuration::Period => {
            let q = T::from_i64_lossy(m) + beta;
            half * hbar_eff * q * q
        }
        FreeDuration::Ratio(r) => {
            let q = T::from_i64_lossy(m) + beta;
            half * hbar_eff * r * q * q
        }
        FreeDuration::HalfTalbot => {
            // π (m+β)² = π [m² + 2mβ + β²], with m² taken mod 2 exactly.
            let two = T::lit(2.0);
            let parity = T::from_i64_lossy(m.rem_euclid(2));
            let frac = (two * T::from_i64_lossy(m) * beta + beta * beta) % two;
            T::PI() * (parity + frac)
        }
    }
}

/// Diagonal factors `exp(-i φ_m)` of a free evolution on a grid.
pub fn free_phase_table<T: Real>(
    grid_size: usize,
    beta: T,
    hbar_eff: T,
    duration: FreeDuration<T>,
) -> Vec<Complex<T>> {
    let m_min = -(grid_size as i64 / 2);
    (0..grid_size)
        .map(|i| Complex::from_polar(T::one(), -free_phase(m_min + i as i64, beta, hbar_eff, duration)))
        .collect()
}

/// Free evolution for `duration`. The momentum distribution is untouched.
pub fn apply_free<T: Real>(mut psi: MomentumWavefunction<T>, duration: FreeDuration<T>) -> MomentumWavefunction<T> {
    let table = free_phase_table(psi.grid_size(), psi.beta, psi.hbar_eff, duration);
    psi.amps.iter_mut().zip(&table).for_each(|(a, f)| *a = *a * f);
    psi
}

/// Exact spatial translation `ψ(x) → ψ(x + π)`, i.e. `a_m → (-1)^m a_m`.
/// Its own inverse.
pub fn translate_half_period<T: Real>(mut psi: MomentumWavefunction<T>) -> MomentumWavefunction<T> {
    let m_min = psi.m_min();
    for (i, a) in psi.amps.iter_mut().enumerate() {
        if (m_min + i as i64).rem_euclid(2) == 1 {
            *a = -*a;
        }
    }
    psi
}

/// Forward/inverse FFT plans for one grid size; cheap to clone and share
/// across threads.
#[derive(Clone)]
pub struct FftPlans<T: Real> {
    size: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
}

impl<T: Real> FftPlans<T> {
    pub fn new(size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            size,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }
}

/// Kick machinery for one grid size: FFT plans, scratch space and the
/// `cos x_j` samples.
pub struct SplitStepper<T: Real> {
    plans: FftPlans<T>,
    scratch: Vec<Complex<T>>,
    cos_x: Vec<T>,
}

impl<T: Real> SplitStepper<T> {
    pub fn new(size: usize) -> Self {
        Self::with_plans(FftPlans::new(size))
    }

    pub fn with_plans(plans: FftPlans<T>) -> Self {
        let size = plans.size;
        let scratch_len = plans
            .forward
            .get_inplace_scratch_len()
            .max(plans.inverse.get_inplace_scratch_len());
        let d = T::from_usize_lossy(size);
        let cos_x = (0..size)
            .map(|j| (T::TAU() * T::from_usize_lossy(j) / d).cos())
            .collect();
        Self {
            plans,
            scratch: vec![Complex::new(T::zero(), T::zero()); scratch_len],
            cos_x,
        }
    }

    pub fn size(&self) -> usize {
        self.plans.size
    }

    /// Position-space factors `exp(-i s k cos x_j) / D`. The `1/D` turns the
    /// unnormalised inverse+forward FFT pair into the identity.
    pub fn kick_table(&self, kick_strength: T, sign: Sign) -> Vec<Complex<T>> {
        let sk = sign.as_real::<T>() * kick_strength;
        let inv_d = T::one() / T::from_usize_lossy(self.size());
        self.cos_x
            .iter()
            .map(|&c| Complex::from_polar(inv_d, -sk * c))
            .collect()
    }

    /// Applies a precomputed kick table to amplitudes ordered by momentum.
    ///
    /// Slot `i` is momentum `i - D/2`; the resulting `(-1)^j` factor on the
    /// position samples commutes with the diagonal kick and cancels between
    /// the two transforms, so no reordering is needed.
    pub fn apply_kick_table(&mut self, amps: &mut [Complex<T>], table: &[Complex<T>]) {
        assert_eq!(amps.len(), self.size());
        self.plans.inverse.process_with_scratch(amps, &mut self.scratch);
        amps.iter_mut().zip(table).for_each(|(a, f)| *a = *a * f);
        self.plans.forward.process_with_scratch(amps, &mut self.scratch);
    }

    /// One kick, followed by the grid-hygiene check.
    pub fn kick(&mut self, psi: &mut MomentumWavefunction<T>, kick_strength: T, sign: Sign) -> Result<()> {
        let table = self.kick_table(kick_strength, sign);
        self.apply_kick_table(&mut psi.amps, &table);
        psi.check_edges()
    }
}

/// Kick by `exp(-i s k cos x)`: momentum `m` feeds `m + n` with amplitude
/// `(-i s)^n J_n(k)`.
pub fn apply_kick<T: Real>(
    mut psi: MomentumWavefunction<T>,
    kick_strength: T,
    sign: Sign,
) -> Result<MomentumWavefunction<T>> {
    let mut stepper = SplitStepper::new(psi.grid_size());
    stepper.kick(&mut psi, kick_strength, sign)?;
    Ok(psi)
}

/// One Floquet step: a kick followed by its trailing free evolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetStepSpec<T> {
    pub sign: Sign,
    pub gap: Gap,
    pub kick_strength: T,
    pub hbar_eff: T,
}

pub fn apply_step<T: Real>(psi: MomentumWavefunction<T>, spec: FloquetStepSpec<T>) -> Result<MomentumWavefunction<T>> {
    if spec.kick_strength < T::zero() {
        return Err(Error::InvalidParameter("kick strength must be non-negative".into()));
    }
    if spec.hbar_eff != psi.hbar_eff {
        return Err(Error::InvalidParameter("step and state disagree on hbar_eff".into()));
    }
    let psi = apply_kick(psi, spec.kick_strength, spec.sign)?;
    Ok(match FreeDuration::from_gap(spec.gap) {
        Some(d) => apply_free(psi, d),
        None => psi,
    })
}

/// Precomputed tables for repeatedly stepping one state with fixed `k`, `β`
/// and `ħ_eff`.
pub struct Propagator<T: Real> {
    stepper: SplitStepper<T>,
    kick_plus: Vec<Complex<T>>,
    kick_minus: Vec<Complex<T>>,
    free_period: Vec<Complex<T>>,
    free_half_talbot: Vec<Complex<T>>,
}

impl<T: Real> Propagator<T> {
    pub fn new(plans: FftPlans<T>, kick_strength: T, beta: T, hbar_eff: T) -> Self {
        let stepper = SplitStepper::with_plans(plans);
        let d = stepper.size();
        Self {
            kick_plus: stepper.kick_table(kick_strength, Sign::Plus),
            kick_minus: stepper.kick_table(kick_strength, Sign::Minus),
            free_period: free_phase_table(d, beta, hbar_eff, FreeDuration::Period),
            free_half_talbot: free_phase_table(d, beta, hbar_eff, FreeDuration::HalfTalbot),
            stepper,
        }
    }

    pub fn for_state(psi: &MomentumWavefunction<T>, kick_strength: T) -> Self {
        Self::new(FftPlans::new(psi.grid_size()), kick_strength, psi.beta, psi.hbar_eff)
    }

    pub fn step(&mut self, psi: &mut MomentumWavefunction<T>, entry: ScheduleEntry) -> Result<()> {
        let table = match entry.sign {
            Sign::Plus => &self.kick_plus,
            Sign::Minus => &self.kick_minus,
        };
        self.stepper.apply_kick_table(&mut psi.amps, table);
        psi.check_edges()?;
        let free = match entry.gap {
            Gap::Period => &self.free_period,
            Gap::HalfTalbot => &self.free_half_talbot,
            Gap::None => return Ok(()),
        };
        psi.amps.iter_mut().zip(free).for_each(|(a, f)| *a = *a * f);
        Ok(())
    }
}

/// Should the state after `kick` (1-based count, 0 = initial) be recorded?
pub(crate) fn is_recorded(kick: usize, record_every: usize, n_kicks: usize) -> bool {
    kick.is_multiple_of(record_every) || kick == n_kicks
}

/// Runs `schedule` on `psi0`, recording mean energy and IPR for the initial
/// state, after every `record_every` kicks, and after the final kick. The
/// final momentum distribution is stored as a snapshot.
///
/// The state's own grid is used; a spill into the edge band is an error.
pub fn evolve<T: Real>(
    psi0: &MomentumWavefunction<T>,
    schedule: &KickSchedule,
    params: &SimParams<T>,
    record_every: usize,
) -> Result<(MomentumWavefunction<T>, ObservableSeries<T>)> {
    check_consistency(psi0, schedule, params, record_every)?;
    let mut psi = psi0.clone();
    let mut prop = Propagator::for_state(&psi, params.kick_strength);
    let mut series = ObservableSeries::new();
    series.push(0, observables::mean_energy(&psi), observables::ipr_of_state(&psi));
    let n = schedule.len();
    for (i, entry) in schedule.entries().iter().enumerate() {
        prop.step(&mut psi, *entry)?;
        let kick = i + 1;
        if is_recorded(kick, record_every, n) {
            series.push(kick, observables::mean_energy(&psi), observables::ipr_of_state(&psi));
        }
    }
    series.insert_snapshot(n, psi.distribution());
    Ok((psi, series))
}

/// [`evolve`], restarting on a doubled grid whenever the edge band fills,
/// up to [`MAX_GRID_SIZE`].
pub fn evolve_adaptive<T: Real>(
    psi0: &MomentumWavefunction<T>,
    schedule: &KickSchedule,
    params: &SimParams<T>,
    record_every: usize,
) -> Result<(MomentumWavefunction<T>, ObservableSeries<T>)> {
    let mut start = psi0.clone();
    loop {
        match evolve(&start, schedule, params, record_every) {
            Err(Error::GridTooSmall { grid_size, .. }) if grid_size < MAX_GRID_SIZE => {
                log::info!("edge band filled on grid {grid_size}; restarting on {}", 2 * grid_size);
                start = start.padded_to(2 * grid_size)?;
            }
            other => return other,
        }
    }
}

fn check_consistency<T: Real>(
    psi0: &MomentumWavefunction<T>,
    schedule: &KickSchedule,
    params: &SimParams<T>,
    record_every: usize,
) -> Result<()> {
    params.validate()?;
    if record_every < 1 {
        return Err(Error::InvalidParameter("record_every must be at least 1".into()));
    }
    if schedule.len() != params.n_kicks {
        return Err(Error::InvalidSchedule(format!(
            "schedule has {} kicks, parameters ask for {}",
            schedule.len(),
            params.n_kicks
        )));
    }
    if psi0.hbar_eff != params.hbar_eff {
        return Err(Error::InvalidParameter("state and parameters disagree on hbar_eff".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::bessel_j;
    use crate::model::{build_schedule, Mode};

    fn plane(m0: i64, beta: f64, d: usize) -> MomentumWavefunction<f64> {
        make_initial(InitialState::PlaneWave { m0 }, beta, d, 1.0).unwrap()
    }

    /// Smooth, spread state away from the edges.
    fn generic_state(beta: f64) -> MomentumWavefunction<f64> {
        let d = 256;
        let amps = (0..d)
            .map(|i| {
                let m = i as f64 - 128.0;
                let env = (-(m - 3.0) * (m - 3.0) / 60.0).exp();
                Complex::from_polar(env, 0.37 * m + 0.01 * m * m)
            })
            .collect();
        MomentumWavefunction::from_amplitudes(amps, beta, 1.0).unwrap()
    }

    #[test]
    fn zero_kick_is_identity() {
        let psi = generic_state(0.0);
        let out = apply_kick(psi.clone(), 0.0, Sign::Plus).unwrap();
        assert!(psi.distance(&out) < 1e-14);
    }

    #[test]
    fn kick_gives_bessel_populations() {
        let out = apply_kick(plane(0, 0.0, 256), 2.0, Sign::Plus).unwrap();
        let p = |m: i64| out.amplitude(m).norm_sqr();
        assert!((p(0) - 0.0501).abs() < 1e-4);
        assert!((p(1) - 0.3326).abs() < 1e-4);
        assert!((p(-1) - 0.3326).abs() < 1e-4);
        assert!((p(2) - 0.1245).abs() < 1e-4);
        for n in -10..=10 {
            assert!((p(n) - bessel_j(n, 2.0_f64).powi(2)).abs() < 1e-13);
        }
    }

    #[test]
    fn kick_amplitude_phases() {
        // exp(-i k cos x) = Σ (-i)^n J_n(k) e^{inx}.
        let out = apply_kick(plane(0, 0.0, 128), 1.5, Sign::Plus).unwrap();
        let mi = Complex::new(0.0, -1.0);
        for n in -6i64..=6 {
            let expected = mi.powi(n as i32) * bessel_j(n, 1.5_f64);
            assert!((out.amplitude(n) - expected).norm() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn negative_sign_is_half_period_conjugation() {
        for beta in [0.0, 0.3] {
            let psi = generic_state(beta);
            let direct = apply_kick(psi.clone(), 5.0, Sign::Minus).unwrap();
            let conj = translate_half_period(
                apply_kick(translate_half_period(psi), 5.0, Sign::Plus).unwrap(),
            );
            assert!(direct.distance(&conj) < 1e-10);
        }
    }

    #[test]
    fn free_evolution_zero_duration() {
        let psi = generic_state(0.2);
        let out = apply_free(psi.clone(), FreeDuration::Ratio(0.0));
        assert_eq!(psi, out);
    }

    #[test]
    fn half_talbot_is_translation_at_integer_quasimomentum() {
        let psi = generic_state(0.0);
        let a = apply_free(psi.clone(), FreeDuration::HalfTalbot);
        let b = translate_half_period(psi.clone());
        assert!(a.distance(&b) < 1e-12);
        // Same physics through the generic ratio path, τ = 2π/ħ.
        let c = apply_free(psi, FreeDuration::Ratio(std::f64::consts::TAU));
        assert!(c.distance(&b) < 1e-10);
    }

    #[test]
    fn half_talbot_is_not_translation_at_half_quasimomentum() {
        let psi = generic_state(0.5);
        let a = apply_free(psi.clone(), FreeDuration::HalfTalbot);
        let b = translate_half_period(psi);
        assert!(a.fidelity(&b) < 1.0 - 1e-3);
    }

    #[test]
    fn free_evolution_keeps_distribution() {
        let psi = generic_state(0.41);
        for d in [FreeDuration::Period, FreeDuration::HalfTalbot, FreeDuration::Ratio(3.7)] {
            let out = apply_free(psi.clone(), d);
            for (a, b) in psi.amps().iter().zip(out.amps()) {
                assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn initial_states() {
        let psi = plane(0, 0.0, 64);
        assert_eq!(psi.amplitude(0), Complex::new(1.0, 0.0));
        assert_eq!(psi.amps().iter().filter(|a| a.norm() > 0.0).count(), 1);

        let psi = make_initial(InitialState::PlaneWave { m0: 3 }, 0.0, 64, 0.5).unwrap();
        assert_eq!(observables::mean_energy(&psi), (3.0_f64 * 0.5).powi(2) / 2.0);

        let hbar: f64 = 0.7;
        let g = make_initial(
            InitialState::GaussianPacket {
                sigma_p: 2.0 * hbar,
                center: 0,
            },
            0.0,
            256,
            hbar,
        )
        .unwrap();
        let e = observables::mean_energy(&g);
        let target = (2.0 * hbar) * (2.0 * hbar) / 2.0;
        assert!(((e - target) / target).abs() < 0.02);

        assert!(matches!(
            make_initial(InitialState::GaussianPacket { sigma_p: 40.0, center: 0 }, 0.0, 64, 1.0),
            Err(Error::GridTooSmall { .. })
        ));
        assert!(make_initial(InitialState::GaussianPacket { sigma_p: -1.0, center: 0 }, 0.0, 64, 1.0).is_err());
        assert!(make_initial(InitialState::PlaneWave { m0: 40 }, 0.0, 64, 1.0).is_err());
    }

    #[test]
    fn small_grid_trips_edge_check() {
        let err = apply_kick(plane(0, 0.0, 64), 40.0, Sign::Plus).unwrap_err();
        assert!(matches!(err, Error::GridTooSmall { grid_size: 64, .. }));
    }

    #[test]
    fn adaptive_evolution_grows_grid() {
        let params = SimParams::from_kick_strength(20.0, 1.0, Mode::Kr, 1, 3)
            .unwrap()
            .with_grid_size(64)
            .unwrap();
        let sched = build_schedule(&params).unwrap();
        let psi0 = plane(0, 0.0, 64);
        assert!(evolve(&psi0, &sched, &params, 1).is_err());
        let (psi, _) = evolve_adaptive(&psi0, &sched, &params, 1).unwrap();
        assert!(psi.grid_size() > 64);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn evolve_zero_kick_strength() {
        let params = SimParams::from_kick_strength(0.0_f64, 1.0, Mode::Kr, 1, 10).unwrap().with_grid_size(128).unwrap();
        let sched = build_schedule(&params).unwrap();
        let psi0 = make_initial(InitialState::GaussianPacket { sigma_p: 2.0, center: 0 }, 0.0, 128, 1.0).unwrap();
        let (psi, series) = evolve(&psi0, &sched, &params, 1).unwrap();
        for (a, b) in psi.amps().iter().zip(psi0.amps()) {
            assert!((a.norm_sqr() - b.norm_sqr()).abs() < 1e-14);
        }
        assert!(series.energy.iter().all(|e| (e - series.energy[0]).abs() < 1e-12));
        assert_eq!(series.kick_index.len(), 11);
    }

    #[test]
    fn record_every_keeps_final() {
        let params = SimParams::from_kick_strength(1.0, 1.0, Mode::Kr, 1, 7).unwrap().with_grid_size(128).unwrap();
        let sched = build_schedule(&params).unwrap();
        let (_, series) = evolve(&plane(0, 0.0, 128), &sched, &params, 3).unwrap();
        assert_eq!(series.kick_index, [0, 3, 6, 7]);
        assert!(series.snapshots.contains_key(&7));
    }

    #[test]
    fn evolve_rejects_mismatched_schedule() {
        let params = SimParams::from_kick_strength(1.0, 1.0, Mode::Kr, 1, 7).unwrap().with_grid_size(128).unwrap();
        let other = params.with_n_kicks(5).unwrap();
        let sched = build_schedule(&other).unwrap();
        assert!(evolve(&plane(0, 0.0, 128), &sched, &params, 1).is_err());
        assert!(evolve(&plane(0, 0.0, 128), &build_schedule(&params).unwrap(), &params, 0).is_err());
    }

    #[test]
    fn step_spec_matches_propagator() {
        let psi0 = generic_state(0.25);
        let spec = FloquetStepSpec {
            sign: Sign::Minus,
            gap: Gap::HalfTalbot,
            kick_strength: 2.5,
            hbar_eff: 1.0,
        };
        let a = apply_step(psi0.clone(), spec).unwrap();
        let mut b = psi0.clone();
        Propagator::for_state(&b, 2.5)
            .step(&mut b, ScheduleEntry { sign: Sign::Minus, gap: Gap::HalfTalbot })
            .unwrap();
        assert!(a.distance(&b) < 1e-13);
    }

    #[test]
    fn single_precision_runs() {
        let psi = make_initial(InitialState::PlaneWave { m0: 0 }, 0.0_f32, 128, 1.0).unwrap();
        let out = apply_kick(psi, 2.0, Sign::Plus).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-5);
        assert!((out.amplitude(1).norm_sqr() - 0.3326).abs() < 1e-4);
    }
}
