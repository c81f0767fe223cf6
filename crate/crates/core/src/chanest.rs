//! Pilot allocation, phase-impaired pilot reception and MMSE channel
//! estimation, with the second-order statistics the closed forms consume.
//!
//! Pilots are time-multiplexed: UE `k` transmits alone at instant `t_k` of
//! the `tau_p` pilot instants, and every UE sharing that instant (its
//! co-pilot set) contaminates the observation. Estimates target the channel
//! at `lambda = tau_p + 1`, so oscillator drift over `lambda - t_k` instants
//! shrinks the usable estimate energy by `e^{-(lambda - t_k)(s_ap + s_ue)}`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, Table};
use crate::phase::{DelayPhases, PhaseParams, PhasePath};
use crate::scalar::{sample_cn, Cx, Real};

/// Pilot-instant assignment; all indices are 0-based UE ids and 1-based
/// pilot instants.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PilotPlan {
    pub tau_p: usize,
    pub t: Vec<usize>,
    pub copilot: Vec<Vec<usize>>,
}

impl PilotPlan {
    pub fn new(tau_p: usize, t: Vec<usize>) -> Result<Self> {
        if tau_p == 0 {
            return Err(Error::config("pilot.tau_p", "must be >= 1"));
        }
        if let Some(bad) = t.iter().find(|&&x| x == 0 || x > tau_p) {
            return Err(Error::config("pilot.t", format!("pilot instant {bad} outside 1..={tau_p}")));
        }
        let copilot = t
            .iter()
            .map(|&tk| (0..t.len()).filter(|&i| t[i] == tk).collect())
            .collect();
        Ok(Self { tau_p, t, copilot })
    }

    pub fn num_ues(&self) -> usize {
        self.t.len()
    }

    /// Estimation instant `tau_p + 1`.
    pub fn lambda(&self) -> usize {
        self.tau_p + 1
    }

    /// `lambda - t_k`.
    pub fn gap(&self, k: usize) -> usize {
        self.lambda() - self.t[k]
    }

    /// UEs transmitting at pilot instant `t` (1-based).
    pub fn users_at(&self, t: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.t.len()).filter(move |&i| self.t[i] == t)
    }

    pub fn shares_pilot(&self, k: usize, i: usize) -> bool {
        self.t[k] == self.t[i]
    }
}

/// Round-robin: `t_k = (k mod tau_p) + 1`.
pub fn assign_pilots(num_ues: usize, tau_p: usize) -> Result<PilotPlan> {
    if tau_p == 0 {
        return Err(Error::config("pilot.tau_p", "must be >= 1"));
    }
    PilotPlan::new(tau_p, (0..num_ues).map(|k| k % tau_p + 1).collect())
}

/// Condition number above which a pilot covariance counts as singular.
pub const MAX_CONDITION: f64 = 1e14;

/// `Psi_kl = (sum_{i in P_k} p_i R_il + sigma^2 I)^{-1}`, indexed `(l, k)`.
pub fn psi<T: Real>(
    plan: &PilotPlan,
    corr: &Table<CMat<T>>,
    powers: &[T],
    noise: T,
) -> Result<Table<CMat<T>>> {
    let n = corr[(0, 0)].dim();
    let num_aps = corr.rows();
    Table::try_from_fn(num_aps, plan.num_ues(), |l, k| {
        let mut cov = CMat::scaled_identity(n, noise);
        for &i in &plan.copilot[k] {
            cov = &cov + &corr[(l, i)].scale(powers[i]);
        }
        let cond = cov.condition_number();
        if !(cond.to_f64_lossy() <= MAX_CONDITION) {
            return Err(Error::Singular { k, l, cond: cond.to_f64_lossy() });
        }
        let inv = cov
            .inverse()
            .ok_or(Error::Singular { k, l, cond: f64::INFINITY })?;
        Ok(inv.hermitian_part())
    })
}

/// `Q_kl = p_k decay_k R_kl Psi_kl R_kl`.
pub fn q_matrix<T: Real>(r_kl: &CMat<T>, psi_kl: &CMat<T>, p_k: T, decay_k: T) -> CMat<T> {
    (&(r_kl * psi_kl) * r_kl).scale(p_k * decay_k).hermitian_part()
}

/// `Qbar_kil = sqrt(p_k p_i) decay_k R_il Psi_kl R_kl`.
pub fn qbar_matrix<T: Real>(
    r_il: &CMat<T>,
    psi_kl: &CMat<T>,
    r_kl: &CMat<T>,
    p_k: T,
    p_i: T,
    decay_k: T,
) -> CMat<T> {
    (&(r_il * psi_kl) * r_kl).scale((p_k * p_i).sqrt() * decay_k)
}

/// `tr(R - Q) / tr(R)`.
pub fn nmse<T: Real>(r: &CMat<T>, q: &CMat<T>) -> Result<T> {
    let tr = r.trace().re;
    if !(tr > T::zero()) {
        return Err(Error::Domain(format!("trace(R) must be positive, got {tr}")));
    }
    let v = (tr - q.trace().re) / tr;
    let tol = T::lit(1e-10);
    if v < -tol || v > T::one() + tol {
        return Err(Error::Domain(format!("NMSE {v} outside [0, 1]; Q is not below R")));
    }
    Ok(v.max(T::zero()).min(T::one()))
}

/// Everything the closed forms need from the estimation stage.
///
/// Matrices are stored without the oscillator decay factor so that
/// [`EstimationStats::with_phase`] can re-target another pair of phase
/// variances without redoing any inversions.
#[derive(Clone, Debug)]
pub struct EstimationStats<T> {
    pub plan: PilotPlan,
    pub pilot_powers: Vec<T>,
    pub noise: T,
    pub phase: PhaseParams<T>,
    decay: Vec<T>,
    base: Arc<Base<T>>,
}

/// Phase-free part, shared between re-targeted copies.
#[derive(Debug)]
struct Base<T> {
    corr: Table<CMat<T>>,
    psi: Table<CMat<T>>,
    /// `p_k R Psi R`, `(l, k)`.
    q_base: Table<CMat<T>>,
    /// `[k][j][l]` for `i = copilot[k][j]`.
    qbar_base: Vec<Vec<Vec<CMat<T>>>>,
    tr_q_base: Table<T>,
    tr_qbar_base: Vec<Vec<Vec<Cx<T>>>>,
    /// `[l]` -> `(i, k)` -> `tr(Q_il R_kl)` without decay of `i`.
    tr_qr_base: Vec<Table<T>>,
}

impl<T: Real> EstimationStats<T> {
    pub fn build(
        corr: &Table<CMat<T>>,
        plan: &PilotPlan,
        phase: &PhaseParams<T>,
        pilot_powers: &[T],
        noise: T,
    ) -> Result<Self> {
        let num_ues = plan.num_ues();
        if corr.cols() != num_ues {
            return Err(Error::Usage(format!(
                "pilot plan covers {num_ues} UEs, scene has {}",
                corr.cols()
            )));
        }
        if pilot_powers.len() != num_ues {
            return Err(Error::config("powers", "one pilot power per UE required"));
        }
        if pilot_powers.iter().any(|&p| !(p >= T::zero())) {
            return Err(Error::config("powers.p_dbm", "pilot powers must be >= 0"));
        }
        if !(noise > T::zero()) {
            return Err(Error::config("noise.sigma2_dbm", "noise power must be > 0"));
        }
        phase.validate()?;
        let num_aps = corr.rows();
        let psi = psi(plan, corr, pilot_powers, noise)?;
        let q_base = Table::from_fn(num_aps, num_ues, |l, k| {
            q_matrix(&corr[(l, k)], &psi[(l, k)], pilot_powers[k], T::one())
        });
        let qbar_base: Vec<Vec<Vec<CMat<T>>>> = (0..num_ues)
            .map(|k| {
                plan.copilot[k]
                    .iter()
                    .map(|&i| {
                        (0..num_aps)
                            .map(|l| {
                                if i == k {
                                    q_base[(l, k)].clone()
                                } else {
                                    qbar_matrix(
                                        &corr[(l, i)],
                                        &psi[(l, k)],
                                        &corr[(l, k)],
                                        pilot_powers[k],
                                        pilot_powers[i],
                                        T::one(),
                                    )
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let tr_q_base = q_base.map(|q| q.trace().re);
        let tr_qbar_base = qbar_base
            .iter()
            .map(|per_k| per_k.iter().map(|per_i| per_i.iter().map(|m| m.trace()).collect()).collect())
            .collect();
        let tr_qr_base = (0..num_aps)
            .map(|l| {
                Table::from_fn(num_ues, num_ues, |i, k| {
                    q_base[(l, i)].trace_of_product(&corr[(l, k)]).re
                })
            })
            .collect();
        let mut stats = Self {
            plan: plan.clone(),
            pilot_powers: pilot_powers.to_vec(),
            noise,
            phase: *phase,
            decay: Vec::new(),
            base: Arc::new(Base {
                corr: corr.clone(),
                psi,
                q_base,
                qbar_base,
                tr_q_base,
                tr_qbar_base,
                tr_qr_base,
            }),
        };
        stats.decay = stats.decay_for(phase);
        Ok(stats)
    }

    fn decay_for(&self, phase: &PhaseParams<T>) -> Vec<T> {
        (0..self.plan.num_ues())
            .map(|k| (-T::from_count(self.plan.gap(k)) * phase.total()).exp())
            .collect()
    }

    /// Same statistics under different oscillator variances.
    pub fn with_phase(&self, phase: &PhaseParams<T>) -> Result<Self> {
        phase.validate()?;
        let mut out = self.clone();
        out.phase = *phase;
        out.decay = out.decay_for(phase);
        Ok(out)
    }

    pub fn num_ues(&self) -> usize {
        self.plan.num_ues()
    }

    pub fn num_aps(&self) -> usize {
        self.base.corr.rows()
    }

    pub fn antennas(&self) -> usize {
        self.base.corr[(0, 0)].dim()
    }

    pub fn lambda(&self) -> usize {
        self.plan.lambda()
    }

    /// `e^{-(lambda - t_k)(s_ap + s_ue)}`.
    pub fn decay(&self, k: usize) -> T {
        self.decay[k]
    }

    pub fn corr(&self, k: usize, l: usize) -> &CMat<T> {
        &self.base.corr[(l, k)]
    }

    pub fn correlations(&self) -> &Table<CMat<T>> {
        &self.base.corr
    }

    pub fn psi(&self, k: usize, l: usize) -> &CMat<T> {
        &self.base.psi[(l, k)]
    }

    pub fn q(&self, k: usize, l: usize) -> CMat<T> {
        self.base.q_base[(l, k)].scale(self.decay[k])
    }

    /// `Qbar_kil`, `None` unless `i` shares the pilot of `k`.
    pub fn qbar(&self, k: usize, i: usize, l: usize) -> Option<CMat<T>> {
        let j = self.plan.copilot[k].iter().position(|&x| x == i)?;
        Some(self.base.qbar_base[k][j][l].scale(self.decay[k]))
    }

    pub fn tr_q(&self, k: usize, l: usize) -> T {
        self.base.tr_q_base[(l, k)] * self.decay[k]
    }

    /// `tr(Qbar_kil)` for `i = copilot[k][j]`.
    pub fn tr_qbar_at(&self, k: usize, j: usize, l: usize) -> Cx<T> {
        self.base.tr_qbar_base[k][j][l] * self.decay[k]
    }

    /// `tr(Q_il R_kl)`.
    pub fn tr_q_r(&self, i: usize, k: usize, l: usize) -> T {
        self.base.tr_qr_base[l][(i, k)] * self.decay[i]
    }

    pub fn nmse(&self, k: usize, l: usize) -> Result<T> {
        nmse(&self.base.corr[(l, k)], &self.q(k, l))
    }

    /// Checks `Q_kl <= R_kl` in PSD order and `trace(Q) in [0, trace(R)]`.
    pub fn check_invariants(&self) -> Result<()> {
        let slack = T::lit(1e-10);
        for l in 0..self.num_aps() {
            for k in 0..self.num_ues() {
                let r = &self.base.corr[(l, k)];
                let q = self.q(k, l);
                let tr_r = r.trace().re;
                let gap = (r - &q).min_eigenvalue();
                if gap < -slack * tr_r {
                    return Err(Error::Numerical(format!("Q not below R at UE {k}, AP {l}")));
                }
                let tq = q.trace().re;
                if tq < -slack * tr_r || tq > tr_r * (T::one() + slack) {
                    return Err(Error::Numerical(format!("trace(Q) out of range at UE {k}, AP {l}")));
                }
            }
        }
        Ok(())
    }
}

/// Square-root factors of every correlation matrix, for drawing
/// `h_kl ~ CN(0, R_kl)`.
#[derive(Clone, Debug)]
pub struct ChannelSampler<T> {
    factors: Table<CMat<T>>,
}

impl<T: Real> ChannelSampler<T> {
    pub fn new(corr: &Table<CMat<T>>) -> Self {
        Self {
            factors: corr.map(|r| r.psd_sqrt()),
        }
    }

    /// Draws one block of channels, `(l, k)` order, antenna innermost.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Table<Vec<Cx<T>>> {
        Table::from_fn(self.factors.rows(), self.factors.cols(), |l, k| {
            let f = &self.factors[(l, k)];
            let w: Vec<Cx<T>> = (0..f.dim()).map(|_| sample_cn(rng)).collect();
            f.mul_vec(&w)
        })
    }
}

/// Received pilot vectors `z_l[t]`, indexed `(l, t - 1)`.
#[derive(Clone, Debug)]
pub struct PilotObservation<T> {
    pub z: Table<Vec<Cx<T>>>,
}

impl<T: Real> PilotObservation<T> {
    pub fn at(&self, l: usize, t: usize) -> &[Cx<T>] {
        &self.z[(l, t - 1)]
    }
}

/// Superposition of co-pilot effective channels at their pilot instant
/// plus `CN(0, noise I)`; noise drawn `l`-major, then instant, then
/// antenna.
pub fn received_pilot<T: Real, R: Rng + ?Sized>(
    plan: &PilotPlan,
    h: &Table<Vec<Cx<T>>>,
    phases: &PhasePath<T>,
    delays: &DelayPhases<T>,
    powers: &[T],
    noise: T,
    rng: &mut R,
) -> PilotObservation<T> {
    let num_aps = h.rows();
    let n = h[(0, 0)].len();
    let sd = noise.sqrt();
    let z = Table::from_fn(num_aps, plan.tau_p, |l, tm1| {
        let t = tm1 + 1;
        let mut acc: Vec<Cx<T>> = (0..n).map(|_| sample_cn::<T, _>(rng) * sd).collect();
        for i in plan.users_at(t) {
            let f = delays.get(l, i) * phases.oscillator(i, l, t) * powers[i].sqrt();
            for (a, x) in acc.iter_mut().zip(&h[(l, i)]) {
                *a = *a + x * f;
            }
        }
        acc
    });
    PilotObservation { z }
}

/// `h_hat_kl[lambda] = sqrt(p_k) e^{-(gap/2)(s_ap+s_ue)} theta_kl^* R_kl Psi_kl z_l[t_k]`.
pub fn mmse_estimate<T: Real>(
    z: &[Cx<T>],
    stats: &EstimationStats<T>,
    k: usize,
    l: usize,
    theta_kl: Cx<T>,
) -> Vec<Cx<T>> {
    let half_decay = stats.decay(k).sqrt();
    let scale = theta_kl.conj() * (stats.pilot_powers[k].sqrt() * half_decay);
    let rpsi = stats.corr(k, l) * stats.psi(k, l);
    rpsi.mul_vec(z).into_iter().map(|x| x * scale).collect()
}
