//! Momentum-space observables: mean energy, inverse participation ratio,
//! exponential localization-length fits and break-time estimates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::quantum::MomentumWavefunction;
use crate::Real;

/// Probabilities over consecutive integer momenta starting at `m_min`.
///
/// `beta` is `Some` for a single state with known quasimomentum and `None`
/// for incoherent averages over many quasimomenta; the latter place every
/// weight at `p = ħ_eff m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentumDistribution<T> {
    probs: Vec<T>,
    m_min: i64,
    beta: Option<T>,
    hbar_eff: T,
}

impl<T: Real> MomentumDistribution<T> {
    pub fn from_parts(probs: Vec<T>, m_min: i64, beta: Option<T>, hbar_eff: T) -> Self {
        Self {
            probs,
            m_min,
            beta,
            hbar_eff,
        }
    }

    /// Validated constructor: non-negative weights summing to 1 within 1e-9.
    pub fn new(probs: Vec<T>, m_min: i64, beta: Option<T>, hbar_eff: T) -> Result<Self> {
        if probs.iter().any(|p| !(*p >= T::zero())) {
            return Err(Error::InvalidInput("negative or NaN probability".into()));
        }
        let total = probs.iter().fold(T::zero(), |a, &b| a + b);
        if (total - T::one()).abs() > T::lit(1e-9) {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self::from_parts(probs, m_min, beta, hbar_eff))
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn m_min(&self) -> i64 {
        self.m_min
    }

    pub fn beta(&self) -> Option<T> {
        self.beta
    }

    pub fn beta_resolved(&self) -> bool {
        self.beta.is_some()
    }

    pub fn hbar_eff(&self) -> T {
        self.hbar_eff
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `(m, p, P(m))` triples.
    pub fn iter(&self) -> impl Iterator<Item = (i64, T, T)> + '_ {
        let beta = self.beta.unwrap_or_else(T::zero);
        self.probs.iter().enumerate().map(move |(i, &p)| {
            let m = self.m_min + i as i64;
            (m, self.hbar_eff * (T::from_i64_lossy(m) + beta), p)
        })
    }

    pub fn prob(&self, m: i64) -> T {
        let i = m - self.m_min;
        if i < 0 || i as usize >= self.probs.len() {
            T::zero()
        } else {
            self.probs[i as usize]
        }
    }

    pub fn total(&self) -> T {
        self.probs.iter().fold(T::zero(), |a, &b| a + b)
    }

    /// Incoherent equal-weight average over `dists`, on the union of their
    /// momentum ranges. Summation runs in slice order.
    pub fn average(dists: &[&Self]) -> Result<Self> {
        let first = dists
            .first()
            .ok_or_else(|| Error::InvalidInput("nothing to average".into()))?;
        let lo = dists.iter().map(|d| d.m_min).min().unwrap();
        let hi = dists.iter().map(|d| d.m_min + d.probs.len() as i64).max().unwrap();
        let mut probs = vec![T::zero(); (hi - lo) as usize];
        for d in dists {
            let off = (d.m_min - lo) as usize;
            for (slot, &p) in probs[off..off + d.probs.len()].iter_mut().zip(&d.probs) {
                *slot = *slot + p;
            }
        }
        let n = T::from_usize_lossy(dists.len());
        probs.iter_mut().for_each(|p| *p = *p / n);
        let same_beta = dists.iter().all(|d| d.beta == first.beta);
        Ok(Self::from_parts(probs, lo, if same_beta { first.beta } else { None }, first.hbar_eff))
    }
}

/// `Σ_m |a_m|² (ħ_eff (m+β))² / 2`.
pub fn mean_energy<T: Real>(psi: &MomentumWavefunction<T>) -> T {
    let h = psi.hbar_eff();
    let beta = psi.beta();
    let half = T::lit(0.5);
    psi.amps().iter().enumerate().fold(T::zero(), |acc, (i, a)| {
        let p = h * (T::from_i64_lossy(psi.momentum_index(i)) + beta);
        acc + a.norm_sqr() * half * p * p
    })
}

pub fn mean_energy_of<T: Real>(dist: &MomentumDistribution<T>) -> T {
    let half = T::lit(0.5);
    dist.iter().fold(T::zero(), |acc, (_, p, w)| acc + w * half * p * p)
}

/// Inverse participation ratio `Σ P(m)²`.
pub fn ipr<T: Real>(dist: &MomentumDistribution<T>) -> T {
    dist.probs.iter().fold(T::zero(), |a, &p| a + p * p)
}

pub fn ipr_of_state<T: Real>(psi: &MomentumWavefunction<T>) -> T {
    psi.amps().iter().fold(T::zero(), |acc, a| {
        let p = a.norm_sqr();
        acc + p * p
    })
}

/// Which points enter a localization-length fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWindow<T> {
    /// States with `|m| <= exclude_radius` are dropped (1 drops the central 3).
    pub exclude_radius: i64,
    /// Points with `P <= floor` are dropped.
    pub floor: T,
    /// Optional outer cut on `|m|`.
    pub max_abs_m: Option<i64>,
}

impl<T: Real> Default for FitWindow<T> {
    fn default() -> Self {
        Self {
            exclude_radius: 1,
            floor: T::lit(1e-12),
            max_abs_m: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFit<T> {
    /// Decay length of `P(m) ∝ exp(-|m|/ξ)`, in grid-index units (multiply
    /// by `ħ_eff` for momentum).
    pub xi: T,
    /// RMS residual of `ln P` about the fitted line; 0 for a pure exponential.
    pub residual: T,
    pub n_points: usize,
}

pub const MIN_FIT_POINTS: usize = 20;

/// Least-squares fit of `ln P(m)` against `|m|` over both wings.
pub fn fit_localization_length<T: Real>(
    dist: &MomentumDistribution<T>,
    window: &FitWindow<T>,
) -> Result<LocalizationFit<T>> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (m, _, p) in dist.iter() {
        let am = m.abs();
        if am <= window.exclude_radius || p <= window.floor {
            continue;
        }
        if window.max_abs_m.is_some_and(|cut| am > cut) {
            continue;
        }
        xs.push(T::from_i64_lossy(am));
        ys.push(p.ln());
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::FitFailed(format!(
            "{} usable points, need {MIN_FIT_POINTS}",
            xs.len()
        )));
    }
    let f = linear_fit(&xs, &ys).ok_or_else(|| Error::FitFailed("degenerate abscissa".into()))?;
    if !(f.slope < T::zero()) {
        return Err(Error::FitFailed(format!("profile does not decay (slope {})", f.slope)));
    }
    Ok(LocalizationFit {
        xi: -T::one() / f.slope,
        residual: f.rms_residual,
        n_points: xs.len(),
    })
}

/// Per-kick records of an evolution.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ObservableSeries<T> {
    pub kick_index: Vec<usize>,
    pub energy: Vec<T>,
    pub ipr: Vec<T>,
    pub snapshots: BTreeMap<usize, MomentumDistribution<T>>,
}

impl<T: Real> ObservableSeries<T> {
    pub fn new() -> Self {
        Self {
            kick_index: Vec::new(),
            energy: Vec::new(),
            ipr: Vec::new(),
            snapshots: BTreeMap::new(),
        }
    }

    /// Appends a record. Kick indices must increase strictly.
    pub fn push(&mut self, kick: usize, energy: T, ipr: T) {
        if let Some(&last) = self.kick_index.last() {
            assert!(kick > last, "kick index {kick} not after {last}");
        }
        self.kick_index.push(kick);
        self.energy.push(energy);
        self.ipr.push(ipr);
    }

    pub fn insert_snapshot(&mut self, kick: usize, dist: MomentumDistribution<T>) {
        self.snapshots.insert(kick, dist);
    }

    pub fn len(&self) -> usize {
        self.kick_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kick_index.is_empty()
    }

    /// Energy recorded at `kick`, if any.
    pub fn energy_at(&self, kick: usize) -> Option<T> {
        self.kick_index.binary_search(&kick).ok().map(|i| self.energy[i])
    }

    pub fn ipr_at(&self, kick: usize) -> Option<T> {
        self.kick_index.binary_search(&kick).ok().map(|i| self.ipr[i])
    }

    /// Least-squares slope of energy over records with kick in `[from, to]`.
    pub fn energy_slope(&self, from: usize, to: usize) -> Option<T> {
        let (xs, ys) = self.window(from, to);
        linear_fit(&xs, &ys).map(|f| f.slope)
    }

    /// Linear fit of energy against kick over `[from, to]`.
    pub fn energy_fit(&self, from: usize, to: usize) -> Option<crate::fit::LinearFit<T>> {
        let (xs, ys) = self.window(from, to);
        linear_fit(&xs, &ys)
    }

    fn window(&self, from: usize, to: usize) -> (Vec<T>, Vec<T>) {
        self.kick_index
            .iter()
            .zip(&self.energy)
            .filter(|(k, _)| (from..=to).contains(*k))
            .map(|(&k, &e)| (T::from_usize_lossy(k), e))
            .unzip()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BreakTime<T> {
    Localized { break_time: usize, saturation_energy: T },
    NotLocalized,
}

pub const MIN_BREAK_SERIES: usize = 20;
const INITIAL_WINDOW: usize = 5;
const RUNNING_WINDOW: usize = 10;
const SLOPE_FRACTION: f64 = 0.1;

/// First kick at which the energy slope over a 10-kick window drops below
/// 10% of the slope over the first 5 kicks, and the mean energy over the
/// final quarter of the series.
pub fn estimate_break_time<T: Real>(series: &ObservableSeries<T>) -> Result<BreakTime<T>> {
    if series.len() < MIN_BREAK_SERIES {
        return Err(Error::InvalidInput(format!(
            "series has {} records, need {MIN_BREAK_SERIES}",
            series.len()
        )));
    }
    let k0 = series.kick_index[0];
    let last = *series.kick_index.last().unwrap();
    let initial = series
        .energy_slope(k0, k0 + INITIAL_WINDOW)
        .ok_or_else(|| Error::InvalidInput("too few records in the initial window".into()))?;
    if !(initial > T::zero()) {
        return Ok(BreakTime::NotLocalized);
    }
    let threshold = T::lit(SLOPE_FRACTION) * initial;
    for &start in &series.kick_index {
        if start + RUNNING_WINDOW > last {
            break;
        }
        if let Some(s) = series.energy_slope(start, start + RUNNING_WINDOW) {
            if s < threshold {
                let tail = series.len() - series.len() / 4;
                let e = &series.energy[tail..];
                let mean = e.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(e.len());
                return Ok(BreakTime::Localized {
                    break_time: start,
                    saturation_energy: mean,
                });
            }
        }
    }
    Ok(BreakTime::NotLocalized)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantum::{make_initial, InitialState};
    use proptest::prelude::*;

    fn dist(probs: Vec<f64>, m_min: i64) -> MomentumDistribution<f64> {
        MomentumDistribution::from_parts(probs, m_min, Some(0.0), 1.0)
    }

    fn series_from(f: impl Fn(usize) -> f64, n: usize) -> ObservableSeries<f64> {
        let mut s = ObservableSeries::new();
        for k in 0..=n {
            s.push(k, f(k), 0.0);
        }
        s
    }

    #[test]
    fn energies() {
        let psi = make_initial(InitialState::PlaneWave { m0: 0 }, 0.0_f64, 64, 1.0).unwrap();
        assert_eq!(mean_energy(&psi), 0.0);
        let d = dist(vec![0.5, 0.0, 0.5], -1);
        assert_eq!(mean_energy_of(&d), 0.5);
    }

    #[test]
    fn ipr_limits() {
        assert_eq!(ipr(&dist(vec![0.0, 1.0, 0.0], -1)), 1.0);
        let d = 2048;
        let u = dist(vec![1.0 / d as f64; d], -1024);
        assert!((ipr(&u) - 1.0 / d as f64).abs() < 1e-15);
    }

    #[test]
    fn validated_distribution() {
        assert!(MomentumDistribution::new(vec![0.5, 0.6], 0, None, 1.0_f64).is_err());
        assert!(MomentumDistribution::new(vec![-0.1, 1.1], 0, None, 1.0_f64).is_err());
        assert!(MomentumDistribution::new(vec![0.4, 0.6], 0, None, 1.0_f64).is_ok());
    }

    fn exponential(xi: f64, d: usize) -> MomentumDistribution<f64> {
        let half = d as i64 / 2;
        let raw: Vec<f64> = (0..d).map(|i| (-((i as i64 - half).abs() as f64) / xi).exp()).collect();
        let z: f64 = raw.iter().sum();
        dist(raw.into_iter().map(|p| p / z).collect(), -half)
    }

    #[test]
    fn exponential_profile_fit() {
        let f = fit_localization_length(&exponential(10.0, 2048), &FitWindow::default()).unwrap();
        assert!((f.xi - 10.0).abs() < 0.2);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn fit_recovers_length_across_range() {
        for xi in [5.0, 12.0, 30.0, 60.0, 100.0] {
            let f = fit_localization_length(&exponential(xi, 2048), &FitWindow::default()).unwrap();
            assert!(((f.xi - xi) / xi).abs() < 0.02, "xi={xi} got {}", f.xi);
        }
    }

    #[test]
    fn gaussian_profile_is_flagged() {
        let half = 256;
        let raw: Vec<f64> = (0..512)
            .map(|i| {
                let m = (i as i64 - half) as f64;
                (-m * m / 200.0).exp()
            })
            .collect();
        let z: f64 = raw.iter().sum();
        let g = dist(raw.into_iter().map(|p| p / z).collect(), -half);
        let f = fit_localization_length(&g, &FitWindow::default()).unwrap();
        assert!(f.residual > 1.0, "residual {}", f.residual);
    }

    #[test]
    fn fit_needs_support() {
        let err = fit_localization_length(&dist(vec![0.25, 0.5, 0.25], -1), &FitWindow::default()).unwrap_err();
        assert!(matches!(err, Error::FitFailed(_)));
    }

    #[test]
    fn break_time_linear_series() {
        let s = series_from(|k| 3.0 * k as f64, 60);
        assert_eq!(estimate_break_time(&s).unwrap(), BreakTime::NotLocalized);
    }

    #[test]
    fn break_time_knee() {
        let s = series_from(|k| 4.0 * (k.min(25) as f64), 100);
        match estimate_break_time(&s).unwrap() {
            BreakTime::Localized {
                break_time,
                saturation_energy,
            } => {
                assert!((22..=28).contains(&break_time), "t_b = {break_time}");
                assert_eq!(saturation_energy, 100.0);
            }
            BreakTime::NotLocalized => panic!("knee not found"),
        }
    }

    #[test]
    fn break_time_short_series() {
        assert!(estimate_break_time(&series_from(|k| k as f64, 10)).is_err());
    }

    #[test]
    fn average_on_union_grid() {
        let a = dist(vec![1.0], 0);
        let b = dist(vec![1.0], 3);
        let avg = MomentumDistribution::average(&[&a, &b]).unwrap();
        assert_eq!(avg.m_min(), 0);
        assert_eq!(avg.probs(), &[0.5, 0.0, 0.0, 0.5]);
        assert!(ipr(&avg) < ipr(&a).max(ipr(&b)));
    }

    proptest! {
        #[test]
        fn ipr_permutation_and_padding(
            raw in prop::collection::vec(0.0f64..1.0, 2..64),
            pad in 0usize..20,
            seed in any::<u64>(),
        ) {
            let z: f64 = raw.iter().sum();
            prop_assume!(z > 1e-6);
            let p: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let base = ipr(&dist(p.clone(), 0));

            let mut q = p.clone();
            let n = q.len();
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                q.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert!((ipr(&dist(q, 0)) - base).abs() < 1e-14);

            let mut padded = vec![0.0; pad];
            padded.extend(&p);
            padded.extend(vec![0.0; pad]);
            prop_assert!((ipr(&dist(padded, -(pad as i64))) - base).abs() < 1e-14);

            // Participation number never exceeds the support size.
            prop_assert!(1.0 / base <= n as f64 + 1e-9);
        }

        #[test]
        fn mixing_disjoint_lowers_ipr(
            a in prop::collection::vec(0.01f64..1.0, 1..20),
            b in prop::collection::vec(0.01f64..1.0, 1..20),
        ) {
            let norm = |v: &[f64]| { let z: f64 = v.iter().sum(); v.iter().map(|x| x / z).collect::<Vec<_>>() };
            let da = dist(norm(&a), 0);
            let db = dist(norm(&b), 100);
            let mix = MomentumDistribution::average(&[&da, &db]).unwrap();
            prop_assert!(ipr(&mix) < ipr(&da).max(ipr(&db)));
        }
    }
}
