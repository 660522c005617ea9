//! Classical stroboscopic map of the (sign-modulated) kicked rotor.
//!
//! One step is a kick followed by a unit drift:
//! `p' = p + s K sin x`, `x' = (x + p') mod 2π`. Block length `M = 0`
//! means the unmodulated standard map (every sign `+1`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::model::{sign_at, Sign};
use crate::scalar::wrap_two_pi;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    /// Position in `[0, 2π)`.
    pub x: T,
    /// Unfolded momentum.
    pub p: T,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(x: T, p: T) -> Self {
        Self { x: wrap_two_pi(x), p }
    }

    /// Momentum folded into `[0, 2π)`, as plotted on sections.
    pub fn p_fold(&self) -> T {
        wrap_two_pi(self.p)
    }

    pub fn energy(&self) -> T {
        T::lit(0.5) * self.p * self.p
    }
}

pub fn classical_step<T: Real>(pt: PhasePoint<T>, chaos: T, sign: Sign) -> PhasePoint<T> {
    let p = pt.p + sign.as_real::<T>() * chaos * pt.x.sin();
    PhasePoint {
        x: wrap_two_pi(pt.x + p),
        p,
    }
}

/// Sign of kick `n`; `block_len == 0` is the standard map.
pub fn classical_sign(n: usize, block_len: usize) -> Sign {
    if block_len == 0 {
        Sign::Plus
    } else {
        sign_at(n, block_len).expect("block_len > 0")
    }
}

/// `start` followed by `n_steps` iterates.
pub fn orbit<T: Real>(start: PhasePoint<T>, chaos: T, block_len: usize, n_steps: usize) -> Vec<PhasePoint<T>> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(start);
    let mut pt = start;
    for n in 0..n_steps {
        pt = classical_step(pt, chaos, classical_sign(n, block_len));
        out.push(pt);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEnsemble<T> {
    pub points: Vec<PhasePoint<T>>,
    pub rng_seed: u64,
    pub step_count: usize,
}

impl<T: Real> ClassicalEnsemble<T> {
    /// Uniform random positions, momenta uniform in `[p_lo, p_hi)`.
    pub fn uniform(n: usize, p_lo: T, p_hi: T, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                let x: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let u: f64 = rng.random();
                PhasePoint::new(T::lit(x), p_lo + (p_hi - p_lo) * T::lit(u))
            })
            .collect();
        Self {
            points,
            rng_seed: seed,
            step_count: 0,
        }
    }

    /// `n_x × n_p` cell-centred grid on `[0, 2π)²`, each point displaced by
    /// up to `jitter` cell widths.
    pub fn grid(n_x: usize, n_p: usize, jitter: T, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tau = T::TAU();
        let dx = tau / T::from_usize_lossy(n_x.max(1));
        let dp = tau / T::from_usize_lossy(n_p.max(1));
        let half = T::lit(0.5);
        let mut points = Vec::with_capacity(n_x * n_p);
        for j in 0..n_p {
            for i in 0..n_x {
                let jx = T::lit(rng.random::<f64>()) - half;
                let jp = T::lit(rng.random::<f64>()) - half;
                let x = (T::from_usize_lossy(i) + half + jitter * jx) * dx;
                let p = (T::from_usize_lossy(j) + half + jitter * jp) * dp;
                points.push(PhasePoint::new(x, p));
            }
        }
        Self {
            points,
            rng_seed: seed,
            step_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Advances every point by one kick of the sequence.
    pub fn step(&mut self, chaos: T, block_len: usize) {
        let sign = classical_sign(self.step_count, block_len);
        self.points.iter_mut().for_each(|pt| *pt = classical_step(*pt, chaos, sign));
        self.step_count += 1;
    }

    /// `⟨p²/2⟩`, summed in index order.
    pub fn mean_energy(&self) -> T {
        let sum = self.points.iter().fold(T::zero(), |a, pt| a + pt.energy());
        sum / T::from_usize_lossy(self.points.len())
    }
}

/// One recorded point of a Poincaré section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionPoint<T> {
    pub orbit_id: usize,
    pub step: usize,
    pub x: T,
    pub p_fold: T,
}

/// Stroboscopic section: `n_orbits` initial conditions on a jittered grid
/// over `[0, 2π)²`, each iterated `n_steps` times. Rows are ordered by orbit,
/// then step.
pub fn poincare_section<T: Real>(
    chaos: T,
    block_len: usize,
    n_orbits: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Vec<SectionPoint<T>>> {
    if n_orbits < 1 || n_steps < 1 {
        return Err(Error::InvalidInput("n_orbits and n_steps must be at least 1".into()));
    }
    let side = (n_orbits as f64).sqrt().ceil() as usize;
    let mut ens = ClassicalEnsemble::<T>::grid(side, side, T::one(), seed);
    ens.points.truncate(n_orbits);
    let rows = ens
        .points
        .par_iter()
        .enumerate()
        .map(|(id, &start)| {
            orbit(start, chaos, block_len, n_steps)
                .into_iter()
                .skip(1)
                .enumerate()
                .map(|(s, pt)| SectionPoint {
                    orbit_id: id,
                    step: s + 1,
                    x: pt.x,
                    p_fold: pt.p_fold(),
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    Ok(rows.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalEnergySeries<T> {
    /// `⟨E⟩_n` for `n = 0..=n_steps`.
    pub energy: Vec<T>,
    /// Slope of `⟨E⟩_n` over the second half of the run.
    pub diffusion_rate: T,
}

/// Evolves `ensemble` in place for `n_steps` kicks, recording `⟨p²/2⟩`.
pub fn classical_mean_energy<T: Real>(
    ensemble: &mut ClassicalEnsemble<T>,
    chaos: T,
    block_len: usize,
    n_steps: usize,
) -> Result<ClassicalEnergySeries<T>> {
    if ensemble.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let mut energy = Vec::with_capacity(n_steps + 1);
    energy.push(ensemble.mean_energy());
    for _ in 0..n_steps {
        ensemble.step(chaos, block_len);
        energy.push(ensemble.mean_energy());
    }
    let from = energy.len() / 2;
    let xs: Vec<T> = (from..energy.len()).map(T::from_usize_lossy).collect();
    let diffusion_rate = linear_fit(&xs, &energy[from..]).map_or(T::zero(), |f| f.slope);
    Ok(ClassicalEnergySeries {
        energy,
        diffusion_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Transport {
    /// Momentum grows linearly: an accelerator mode.
    Ballistic,
    /// Momentum stays within one period of its start.
    Bounded,
    Diffusive,
}

pub const MIN_ORBIT_LEN: usize = 50;

/// Classifies an orbit by a linear fit of `p_n` against `n`.
pub fn detect_transporting<T: Real>(orbit: &[PhasePoint<T>]) -> Result<Transport> {
    if orbit.len() < MIN_ORBIT_LEN {
        return Err(Error::InvalidInput(format!(
            "orbit has {} points, need {MIN_ORBIT_LEN}",
            orbit.len()
        )));
    }
    let xs: Vec<T> = (0..orbit.len()).map(T::from_usize_lossy).collect();
    let ps: Vec<T> = orbit.iter().map(|pt| pt.p).collect();
    if let Some(f) = linear_fit(&xs, &ps) {
        if f.slope.abs() > T::lit(0.5) && f.r_squared > T::lit(0.99) {
            return Ok(Transport::Ballistic);
        }
    }
    let p0 = ps[0];
    let excursion = ps.iter().fold(T::zero(), |a, &p| a.max((p - p0).abs()));
    Ok(if excursion < T::TAU() {
        Transport::Bounded
    } else {
        Transport::Diffusive
    })
}

/// Result of classifying every orbit launched from a phase-space grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportScan<T> {
    pub n_orbits: usize,
    /// Initial conditions and the `K` used, for every ballistic orbit.
    pub ballistic: Vec<(PhasePoint<T>, T)>,
    pub n_bounded: usize,
    pub n_diffusive: usize,
}

impl<T: Real> TransportScan<T> {
    pub fn ballistic_fraction(&self) -> f64 {
        self.ballistic.len() as f64 / self.n_orbits as f64
    }
}

/// Launches an `n_side × n_side` cell-centred grid, classifies each orbit
/// after `n_steps` kicks. With `k_jitter = Some((σ, seed))` each orbit gets
/// its own `K (1 + σ ξ)`, `ξ ~ N(0, 1)`.
pub fn scan_transport<T: Real>(
    chaos: T,
    block_len: usize,
    n_side: usize,
    n_steps: usize,
    k_jitter: Option<(f64, u64)>,
) -> Result<TransportScan<T>> {
    if n_steps + 1 < MIN_ORBIT_LEN {
        return Err(Error::InvalidInput(format!("need at least {} steps", MIN_ORBIT_LEN - 1)));
    }
    let starts = ClassicalEnsemble::<T>::grid(n_side, n_side, T::zero(), 0).points;
    let ks: Vec<T> = match k_jitter {
        None => vec![chaos; starts.len()],
        Some((sigma, seed)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..starts.len())
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    chaos * T::lit(1.0 + sigma * z)
                })
                .collect()
        }
    };
    let kinds = starts
        .par_iter()
        .zip(&ks)
        .map(|(&s, &k)| detect_transporting(&orbit(s, k, block_len, n_steps)))
        .collect::<Result<Vec<_>>>()?;
    let mut scan = TransportScan {
        n_orbits: starts.len(),
        ballistic: Vec::new(),
        n_bounded: 0,
        n_diffusive: 0,
    };
    for ((s, k), kind) in starts.into_iter().zip(ks).zip(kinds) {
        match kind {
            Transport::Ballistic => scan.ballistic.push((s, k)),
            Transport::Bounded => scan.n_bounded += 1,
            Transport::Diffusive => scan.n_diffusive += 1,
        }
    }
    Ok(scan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn fixed_point_at_origin() {
        let pt = classical_step(PhasePoint::new(0.0, 0.0), 5.0, Sign::Plus);
        assert_eq!((pt.x, pt.p), (0.0, 0.0));
    }

    #[test]
    fn zero_impulse_line() {
        let pt = classical_step(PhasePoint::new(PI, 1.3), 5.0, Sign::Plus);
        assert!((pt.p - 1.3).abs() < 1e-12);
        assert!((pt.x - (PI + 1.3)).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_kick() {
        let pt = classical_step(PhasePoint::new(PI / 2.0, 0.0), 5.0, Sign::Plus);
        assert!((pt.p - 5.0).abs() < 1e-12);
        assert!((pt.x - (PI / 2.0 + 5.0 - TAU)).abs() < 1e-12);
        assert!((pt.x - 0.287_611_019_615_312_6).abs() < 1e-12);
    }

    #[test]
    fn position_stays_folded() {
        let mut pt = PhasePoint::new(0.1, -37.0);
        for n in 0..1000 {
            pt = classical_step(pt, 7.3, classical_sign(n, 3));
            assert!((0.0..TAU).contains(&pt.x));
            assert!((0.0..TAU).contains(&pt.p_fold()));
        }
    }

    #[test]
    fn area_preserving() {
        let h = 1e-6;
        for &(x, p, s) in &[(0.3, 0.7, Sign::Plus), (2.0, -4.0, Sign::Minus), (5.5, 12.0, Sign::Plus)] {
            let f = |x: f64, p: f64| {
                let q = classical_step(PhasePoint { x, p }, 5.0, s);
                // Unwrapped position avoids the fold discontinuity.
                (x + q.p, q.p)
            };
            let (a, b) = (f(x + h, p), f(x - h, p));
            let (c, d) = (f(x, p + h), f(x, p - h));
            let j = [[(a.0 - b.0) / (2.0 * h), (c.0 - d.0) / (2.0 * h)], [(a.1 - b.1) / (2.0 * h), (c.1 - d.1) / (2.0 * h)]];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            assert!((det - 1.0).abs() < 1e-6, "det = {det}");
        }
    }

    #[test]
    fn negative_sign_conjugation() {
        let shift = |pt: PhasePoint<f64>| PhasePoint::new(pt.x + PI, pt.p);
        for &(x, p) in &[(0.2, 0.1), (1.7, -3.0), (4.4, 9.9)] {
            let pt = PhasePoint::new(x, p);
            let a = classical_step(pt, 5.0, Sign::Minus);
            let b = shift(classical_step(shift(pt), 5.0, Sign::Plus));
            assert!((a.p - b.p).abs() < 1e-12);
            let dx = (a.x - b.x).abs();
            assert!(dx < 1e-12 || (dx - TAU).abs() < 1e-12);
        }
    }

    #[test]
    fn free_rotor_section_is_flat() {
        let pts = poincare_section(0.0_f64, 2, 9, 30, 4).unwrap();
        for id in 0..9 {
            let ps: Vec<f64> = pts.iter().filter(|r| r.orbit_id == id).map(|r| r.p_fold).collect();
            assert_eq!(ps.len(), 30);
            assert!(ps.iter().all(|p| (p - ps[0]).abs() < 1e-12));
        }
    }

    #[test]
    fn section_is_deterministic() {
        let a = poincare_section(5.0_f64, 0, 20, 50, 11).unwrap();
        let b = poincare_section(5.0_f64, 0, 20, 50, 11).unwrap();
        assert_eq!(a, b);
        assert!(poincare_section(5.0_f64, 0, 0, 50, 11).is_err());
    }

    #[test]
    fn classification_of_synthetic_orbits() {
        let flat: Vec<PhasePoint<f64>> = (0..60).map(|_| PhasePoint::new(1.0, 2.0)).collect();
        assert_eq!(detect_transporting(&flat).unwrap(), Transport::Bounded);
        let ramp: Vec<PhasePoint<f64>> = (0..60).map(|n| PhasePoint::new(1.0, 0.3 + TAU * n as f64)).collect();
        assert_eq!(detect_transporting(&ramp).unwrap(), Transport::Ballistic);
        let walk: Vec<PhasePoint<f64>> = (0..60)
            .map(|n| PhasePoint::new(1.0, 20.0 * ((n as f64) * 0.37).sin()))
            .collect();
        assert_eq!(detect_transporting(&walk).unwrap(), Transport::Diffusive);
        assert!(detect_transporting(&flat[..10]).is_err());
    }

    #[test]
    fn free_rotor_energy_is_constant() {
        let mut ens = ClassicalEnsemble::uniform(500, -3.0_f64, 3.0, 2);
        let s = classical_mean_energy(&mut ens, 0.0, 0, 40).unwrap();
        assert!(s.energy.iter().all(|e| (e - s.energy[0]).abs() < 1e-12));
        assert!(s.diffusion_rate.abs() < 1e-12);
    }

    #[test]
    fn empty_ensemble_rejected() {
        let mut ens = ClassicalEnsemble::<f64>::uniform(0, 0.0, 1.0, 1);
        assert!(classical_mean_energy(&mut ens, 5.0, 0, 10).is_err());
    }
}
