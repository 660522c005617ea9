//! Dimensionless parameters, kick schedules and the mapping from laboratory
//! units.
//!
//! A run is a sequence of delta kicks. Each kick carries a sign (the factor
//! `f_M(n)` multiplying `K cos x`) and is followed by a free-evolution gap:
//! one kick period `T`, a half-Talbot delay `T_d = 2πT/ħ_eff`, or nothing
//! after the last kick.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Real;

pub const DEFAULT_GRID_SIZE: usize = 2048;
pub const MIN_GRID_SIZE: usize = 64;
pub const MAX_GRID_SIZE: usize = 1 << 16;

/// Which kick sequence is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Standard kicked rotor, all kicks `+1`, all gaps `T`.
    #[serde(rename = "KR")]
    Kr,
    /// Sign of the kick flips after every block of `M` kicks.
    #[serde(rename = "MKR")]
    Mkr,
    /// Sign flips replaced by a half-Talbot delay after every block of `M` kicks.
    #[serde(rename = "MAKR")]
    Makr,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Kr => "KR",
            Mode::Mkr => "MKR",
            Mode::Makr => "MAKR",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn as_real<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn flipped(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Free evolution following a kick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gap {
    /// One kick period `T`.
    Period,
    /// Half the Talbot time, `T_d = 2πT/ħ_eff`.
    HalfTalbot,
    /// No trailing evolution; only the final kick has this.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub sign: Sign,
    pub gap: Gap,
}

/// Number of localizing (`T`) and diffusing (`T_d`) free-evolution phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapCounts {
    pub period: usize,
    pub half_talbot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KickSchedule {
    entries: Vec<ScheduleEntry>,
}

impl KickSchedule {
    /// Wraps explicit entries. The final entry must be the only one with
    /// [`Gap::None`].
    pub fn from_entries(entries: Vec<ScheduleEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no kicks".into()));
        }
        let last = entries.len() - 1;
        for (i, e) in entries.iter().enumerate() {
            if (e.gap == Gap::None) != (i == last) {
                return Err(Error::InvalidSchedule(format!(
                    "entry {i}: only the final kick may omit its trailing gap"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn counts(&self) -> GapCounts {
        count_gaps(self)
    }
}

/// Dimensionless parameters of one simulation.
///
/// `chaos` is the classical `K`, `kick_strength` the quantum phase depth
/// `k = K/ħ_eff`. Both are stored and kept consistent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams<T> {
    pub chaos: T,
    pub kick_strength: T,
    pub hbar_eff: T,
    /// Block length `M`.
    pub block_len: usize,
    pub mode: Mode,
    pub n_kicks: usize,
    /// Momentum-grid dimension `D`.
    pub grid_size: usize,
}

impl<T: Real> SimParams<T> {
    /// Builds parameters from the quantum kick strength `k`; `K = k ħ_eff`.
    pub fn from_kick_strength(
        kick_strength: T,
        hbar_eff: T,
        mode: Mode,
        block_len: usize,
        n_kicks: usize,
    ) -> Result<Self> {
        let p = Self {
            chaos: kick_strength * hbar_eff,
            kick_strength,
            hbar_eff,
            block_len,
            mode,
            n_kicks,
            grid_size: DEFAULT_GRID_SIZE,
        };
        p.validate()?;
        Ok(p)
    }

    /// Builds parameters from the classical chaos parameter `K`; `k = K/ħ_eff`.
    pub fn from_chaos(chaos: T, hbar_eff: T, mode: Mode, block_len: usize, n_kicks: usize) -> Result<Self> {
        if !(hbar_eff > T::zero()) {
            return Err(Error::InvalidParameter("hbar_eff must be positive".into()));
        }
        Self::from_kick_strength(chaos / hbar_eff, hbar_eff, mode, block_len, n_kicks).map(|mut p| {
            p.chaos = chaos;
            p
        })
    }

    pub fn with_grid_size(mut self, grid_size: usize) -> Result<Self> {
        self.grid_size = grid_size;
        self.validate()?;
        Ok(self)
    }

    pub fn with_n_kicks(mut self, n_kicks: usize) -> Result<Self> {
        self.n_kicks = n_kicks;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.chaos, self.kick_strength, self.hbar_eff].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite parameter".into()));
        }
        if !(self.hbar_eff > T::zero()) {
            return Err(Error::InvalidParameter("hbar_eff must be positive".into()));
        }
        if self.kick_strength < T::zero() {
            return Err(Error::InvalidParameter("kick strength k must be non-negative".into()));
        }
        let tol = T::lit(1e-12) * T::one().max(self.chaos.abs());
        if (self.chaos - self.kick_strength * self.hbar_eff).abs() > tol {
            return Err(Error::InvalidParameter(format!(
                "K = {} is inconsistent with k * hbar_eff = {}",
                self.chaos,
                self.kick_strength * self.hbar_eff
            )));
        }
        if self.block_len < 1 {
            return Err(Error::InvalidParameter("block length M must be at least 1".into()));
        }
        if self.n_kicks < 1 {
            return Err(Error::InvalidParameter("n_kicks must be at least 1".into()));
        }
        if !self.grid_size.is_power_of_two() || self.grid_size < MIN_GRID_SIZE || self.grid_size > MAX_GRID_SIZE {
            return Err(Error::InvalidParameter(format!(
                "grid_size {} must be a power of two in [{MIN_GRID_SIZE}, {MAX_GRID_SIZE}]",
                self.grid_size
            )));
        }
        if self.mode == Mode::Makr && !self.n_kicks.is_multiple_of(self.block_len) {
            return Err(Error::InvalidSchedule(format!(
                "MAKR needs n_kicks ({}) divisible by M ({})",
                self.n_kicks, self.block_len
            )));
        }
        Ok(())
    }

    /// Free-evolution duration of a half-Talbot gap in units of `T`.
    pub fn half_talbot_ratio(&self) -> T {
        T::TAU() / self.hbar_eff
    }
}

/// Kick sign `f_M(n)`: `+1` while `floor(n/M)` is even, `-1` otherwise.
pub fn sign_at(n: usize, block_len: usize) -> Result<Sign> {
    if block_len < 1 {
        return Err(Error::InvalidParameter("block length M must be at least 1".into()));
    }
    Ok(if (n / block_len).is_multiple_of(2) { Sign::Plus } else { Sign::Minus })
}

pub fn build_schedule<T: Real>(params: &SimParams<T>) -> Result<KickSchedule> {
    params.validate()?;
    let n = params.n_kicks;
    let m = params.block_len;
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let last = i + 1 == n;
        let (sign, gap) = match params.mode {
            Mode::Kr => (Sign::Plus, Gap::Period),
            Mode::Mkr => (sign_at(i, m)?, Gap::Period),
            Mode::Makr => {
                let gap = if (i + 1) % m == 0 { Gap::HalfTalbot } else { Gap::Period };
                (Sign::Plus, gap)
            }
        };
        entries.push(ScheduleEntry {
            sign,
            gap: if last { Gap::None } else { gap },
        });
    }
    KickSchedule::from_entries(entries)
}

pub fn count_gaps(schedule: &KickSchedule) -> GapCounts {
    let mut c = GapCounts {
        period: 0,
        half_talbot: 0,
    };
    for e in schedule.entries() {
        match e.gap {
            Gap::Period => c.period += 1,
            Gap::HalfTalbot => c.half_talbot += 1,
            Gap::None => {}
        }
    }
    c
}

/// Laboratory parameters of an atom-optics kicked rotor, SI units.
/// Frequencies are angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams<T> {
    pub lattice_wavenumber: T,
    pub atom_mass: T,
    pub recoil_frequency: T,
    pub pulse_period: T,
    pub rabi_frequency: T,
    pub detuning: T,
    pub pulse_duration: T,
}

/// Dimensionless quantities fixed by a [`PhysicalParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams<T> {
    pub hbar_eff: T,
    pub kick_strength: T,
    pub chaos: T,
}

impl<T: Real> PhysicalParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.detuning == T::zero() {
            return Err(Error::DivisionByZero("detuning"));
        }
        let fields = [
            ("lattice_wavenumber", self.lattice_wavenumber),
            ("atom_mass", self.atom_mass),
            ("recoil_frequency", self.recoil_frequency),
            ("pulse_period", self.pulse_period),
            ("rabi_frequency", self.rabi_frequency),
            ("detuning", self.detuning),
            ("pulse_duration", self.pulse_duration),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite")));
            }
        }
        if self.pulse_duration / self.pulse_period > T::lit(0.01) {
            log::warn!(
                "pulse duration is {} of the kick period; delta-kick approximation is marginal",
                self.pulse_duration / self.pulse_period
            );
        }
        Ok(())
    }

    /// Dimensionless position `2 k_L x`.
    pub fn position_to_dimensionless(&self, x: T) -> T {
        T::lit(2.0) * self.lattice_wavenumber * x
    }

    /// Dimensionless momentum `2 k_L T p / m`.
    pub fn momentum_to_dimensionless(&self, p: T) -> T {
        T::lit(2.0) * self.lattice_wavenumber * self.pulse_period * p / self.atom_mass
    }
}

/// `ħ_eff = 8 ω_r T`, `k = Ω² τ / (8 Δ)`, `K = k ħ_eff`.
///
/// `Ω` and `Δ` are angular frequencies, so the light-shift phase per pulse
/// is dimensionless without a factor of Planck's constant.
pub fn physical_to_dimensionless<T: Real>(phys: &PhysicalParams<T>) -> Result<DimensionlessParams<T>> {
    phys.validate()?;
    let eight = T::lit(8.0);
    let hbar_eff = eight * phys.recoil_frequency * phys.pulse_period;
    let kick_strength = phys.rabi_frequency * phys.rabi_frequency * phys.pulse_duration / (eight * phys.detuning);
    Ok(DimensionlessParams {
        hbar_eff,
        kick_strength,
        chaos: kick_strength * hbar_eff,
    })
}

/// Inverse of [`physical_to_dimensionless`]: keeps the atom, lattice, pulse
/// length and detuning of `base` and solves for the pulse period and Rabi
/// frequency that realise `target`.
pub fn dimensionless_to_physical<T: Real>(
    target: &DimensionlessParams<T>,
    base: &PhysicalParams<T>,
) -> Result<PhysicalParams<T>> {
    if !(target.hbar_eff > T::zero()) || target.kick_strength < T::zero() {
        return Err(Error::InvalidParameter("target needs hbar_eff > 0 and k >= 0".into()));
    }
    let eight = T::lit(8.0);
    let mut out = *base;
    out.pulse_period = target.hbar_eff / (eight * base.recoil_frequency);
    out.rabi_frequency = (eight * base.detuning * target.kick_strength / base.pulse_duration).sqrt();
    out.validate()?;
    Ok(out)
}
