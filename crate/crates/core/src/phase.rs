//! Asynchrony sources: static delay phases and discrete-time Wiener
//! oscillator phase noise at APs and UEs.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Table;
use crate::scalar::{cis, db_to_linear, Cx, Real};

/// Oscillator description from which increment variances derive.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OscillatorSpec<T> {
    pub c_ap: T,
    pub c_ue: T,
    pub f_c: T,
    pub t_s: T,
}

/// Per-instant phase-increment variances (rad^2), identical across APs and
/// across UEs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PhaseParams<T> {
    pub sigma2_ap: T,
    pub sigma2_ue: T,
    pub oscillator: Option<OscillatorSpec<T>>,
}

impl<T: Real> PhaseParams<T> {
    pub fn new(sigma2_ap: T, sigma2_ue: T) -> Result<Self> {
        let p = Self {
            sigma2_ap,
            sigma2_ue,
            oscillator: None,
        };
        p.validate()?;
        Ok(p)
    }

    /// Synchronous oscillators.
    pub fn zero() -> Self {
        Self {
            sigma2_ap: T::zero(),
            sigma2_ue: T::zero(),
            oscillator: None,
        }
    }

    /// Variances given in dB (`10^(x/10)` rad^2). `-inf` maps to zero.
    pub fn from_db(ap_db: f64, ue_db: f64) -> Result<Self> {
        Self::new(T::lit(db_to_linear(ap_db)), T::lit(db_to_linear(ue_db)))
    }

    pub fn from_oscillator(spec: OscillatorSpec<T>) -> Result<Self> {
        let p = Self {
            sigma2_ap: variance_from_oscillator(spec.c_ap, spec.f_c, spec.t_s),
            sigma2_ue: variance_from_oscillator(spec.c_ue, spec.f_c, spec.t_s),
            oscillator: Some(spec),
        };
        p.validate()?;
        Ok(p)
    }

    /// `sigma2_ap + sigma2_ue`.
    #[inline]
    pub fn total(&self) -> T {
        self.sigma2_ap + self.sigma2_ue
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2_ap >= T::zero()) {
            return Err(Error::config("phase.sigma2_ap", "must be >= 0"));
        }
        if !(self.sigma2_ue >= T::zero()) {
            return Err(Error::config("phase.sigma2_ue", "must be >= 0"));
        }
        if let Some(o) = self.oscillator {
            for (name, v) in [("phase.c_ap", o.c_ap), ("phase.c_ue", o.c_ue), ("phase.carrier_hz", o.f_c), ("phase.symbol_time", o.t_s)] {
                if !(v >= T::zero()) {
                    return Err(Error::config(name, "must be >= 0"));
                }
            }
            let tol = T::lit(1e-9);
            for (name, s, c) in [("phase.c_ap", self.sigma2_ap, o.c_ap), ("phase.c_ue", self.sigma2_ue, o.c_ue)] {
                let want = variance_from_oscillator(c, o.f_c, o.t_s);
                if (s - want).abs() > tol * want.max(T::min_positive_value()) {
                    return Err(Error::config(name, "variance inconsistent with oscillator constant"));
                }
            }
        }
        Ok(())
    }
}

/// `4 pi^2 f_c^2 c T_s`.
pub fn variance_from_oscillator<T: Real>(c_i: T, f_c: T, t_s: T) -> T {
    let two_pi = T::PI() + T::PI();
    two_pi * two_pi * f_c * f_c * c_i * t_s
}

/// `e^{-j 2 pi dt / T_s}`, reduced modulo one symbol first.
pub fn delay_phase<T: Real>(delta_t: T, t_s: T) -> Cx<T> {
    let cycles = delta_t / t_s;
    let frac = cycles - cycles.floor();
    cis(-(T::PI() + T::PI()) * frac)
}

/// Unit-modulus delay phases `theta`, indexed `(l, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DelayPhases<T> {
    pub theta: Table<Cx<T>>,
}

impl<T: Real> DelayPhases<T> {
    pub fn from_offsets(delta_t: &Table<T>, t_s: T) -> Self {
        Self {
            theta: delta_t.map(|&dt| delay_phase(dt, t_s)),
        }
    }

    /// All delay phases equal to one (perfect timing alignment).
    pub fn aligned(num_aps: usize, num_ues: usize) -> Self {
        Self {
            theta: Table::from_fn(num_aps, num_ues, |_, _| Cx::new(T::one(), T::zero())),
        }
    }

    /// Independent uniform phases; models an arbitrary re-draw of the
    /// delay geometry.
    pub fn random<R: Rng + ?Sized>(num_aps: usize, num_ues: usize, rng: &mut R) -> Self {
        Self {
            theta: Table::from_fn(num_aps, num_ues, |_, _| {
                cis(T::lit(rng.random::<f64>() * std::f64::consts::TAU))
            }),
        }
    }

    #[inline]
    pub fn get(&self, l: usize, k: usize) -> Cx<T> {
        self.theta[(l, k)]
    }

    pub fn max_modulus_defect(&self) -> T {
        self.theta
            .iter()
            .map(|z| (z.norm() - T::one()).abs())
            .fold(T::zero(), T::max)
    }
}

/// Sampled oscillator phase trajectories for instants `0..=tau_c`.
/// Instant 0 holds the initial phase; instants `1..=tau_c` are the block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct PhasePath<T> {
    pub phi_ue: Vec<Vec<T>>,
    pub phi_ap: Vec<Vec<T>>,
}

impl<T: Real> PhasePath<T> {
    /// Combined oscillator phase `phi_k[n] + phi_l[n]`.
    #[inline]
    pub fn link_phase(&self, k: usize, l: usize, n: usize) -> T {
        self.phi_ue[k][n] + self.phi_ap[l][n]
    }

    /// `exp(j (phi_k[n] + phi_l[n]))`.
    #[inline]
    pub fn oscillator(&self, k: usize, l: usize, n: usize) -> Cx<T> {
        cis(self.link_phase(k, l, n))
    }

    /// Phase drift `Theta_kl` between instants `from` and `to`.
    pub fn drift(&self, k: usize, l: usize, from: usize, to: usize) -> Cx<T> {
        cis(self.link_phase(k, l, to) - self.link_phase(k, l, from))
    }
}

fn walk<T: Real, R: Rng + ?Sized>(sigma2: T, tau_c: usize, rng: &mut R) -> Vec<T> {
    let sd = sigma2.to_f64_lossy().sqrt();
    let mut out = Vec::with_capacity(tau_c + 1);
    let mut phi = rng.random::<f64>() * std::f64::consts::TAU;
    out.push(T::lit(phi));
    for _ in 0..tau_c {
        let step: f64 = rng.sample(StandardNormal);
        phi += sd * step;
        out.push(T::lit(phi));
    }
    out
}

/// Independent Wiener walks for every UE (drawn first) and every AP.
pub fn sample_phase_paths<T: Real, R: Rng + ?Sized>(
    params: &PhaseParams<T>,
    num_ues: usize,
    num_aps: usize,
    tau_c: usize,
    rng: &mut R,
) -> Result<PhasePath<T>> {
    if tau_c == 0 {
        return Err(Error::config("block.tau_c", "must be >= 1"));
    }
    let phi_ue = (0..num_ues).map(|_| walk(params.sigma2_ue, tau_c, rng)).collect();
    let phi_ap = (0..num_aps).map(|_| walk(params.sigma2_ap, tau_c, rng)).collect();
    Ok(PhasePath { phi_ue, phi_ap })
}

/// Mean of the combined drift over `gap` instants,
/// `e^{-(gap/2)(sigma2_ap + sigma2_ue)}`.
pub fn theta_mean<T: Real>(gap: usize, params: &PhaseParams<T>) -> T {
    (-(T::from_count(gap) / T::lit(2.0)) * params.total()).exp()
}

/// Decay `e^{-gap sigma2}`.
#[inline]
pub fn eta<T: Real>(gap: usize, sigma2: T) -> T {
    (-T::from_count(gap) * sigma2).exp()
}

/// `theta e^{j(phase_ue + phase_ap)} h`.
pub fn effective_channel<T: Real>(h: &[Cx<T>], theta: Cx<T>, phase_ue: T, phase_ap: T) -> Vec<Cx<T>> {
    let f = theta * cis(phase_ue + phase_ap);
    h.iter().map(|x| x * f).collect()
}
