//! Closed-form downlink SINR and spectral efficiency for coherent
//! (delay-phase-unaware and delay-phase-aware MR precoding) and
//! non-coherent transmission.
//!
//! Everything per UE reduces to a handful of trace aggregates that do not
//! depend on the data instant `n`; the instant only enters through the
//! oscillator decays `eta_ap = e^{-(n-lambda) s_ap}` and
//! `eta_ue = e^{-(n-lambda) s_ue}`.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chanest::EstimationStats;
use crate::error::{Error, Result};
use crate::phase::{eta, DelayPhases, PhaseParams};
use crate::scalar::{Cx, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transmission {
    Coherent,
    NonCoherent,
}

/// MR precoder: `Du` compensates the delay phase (`v = theta * h_hat`),
/// `Df` ignores it (`v = h_hat`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precoder {
    Du,
    Df,
}

/// Transmission scheme and precoder; written as `co-du`, `co-df`,
/// `nc-du` or `nc-df`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Mode {
    pub transmission: Transmission,
    pub precoder: Precoder,
}

impl Mode {
    pub const CO_DU: Mode = Mode { transmission: Transmission::Coherent, precoder: Precoder::Du };
    pub const CO_DF: Mode = Mode { transmission: Transmission::Coherent, precoder: Precoder::Df };
    pub const NC_DU: Mode = Mode { transmission: Transmission::NonCoherent, precoder: Precoder::Du };
    pub const NC_DF: Mode = Mode { transmission: Transmission::NonCoherent, precoder: Precoder::Df };
    pub const ALL: [Mode; 4] = [Mode::CO_DU, Mode::CO_DF, Mode::NC_DU, Mode::NC_DF];

    pub fn transmission_label(&self) -> &'static str {
        match self.transmission {
            Transmission::Coherent => "coherent",
            Transmission::NonCoherent => "noncoherent",
        }
    }

    pub fn precoder_label(&self) -> &'static str {
        match self.precoder {
            Precoder::Du => "du",
            Precoder::Df => "df",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = match self.transmission {
            Transmission::Coherent => "co",
            Transmission::NonCoherent => "nc",
        };
        write!(f, "{t}-{}", self.precoder_label())
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "co-du" => Ok(Mode::CO_DU),
            "co-df" => Ok(Mode::CO_DF),
            "nc-du" | "nc" => Ok(Mode::NC_DU),
            "nc-df" => Ok(Mode::NC_DF),
            _ => Err(Error::Usage(format!("unknown mode `{s}` (expected co-du, co-df, nc-du, nc-df)"))),
        }
    }
}

impl From<Mode> for String {
    fn from(m: Mode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for Mode {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// `1 / sum_i tr(Q_il)` for every AP, or the offending AP when all its
/// estimate covariances vanish.
pub fn mu_normalization<T: Real>(stats: &EstimationStats<T>) -> Result<Vec<T>> {
    (0..stats.num_aps())
        .map(|l| {
            let s = ap_load(stats, l);
            if s > T::zero() {
                Ok(s.recip())
            } else {
                Err(Error::DegenerateAp { l })
            }
        })
        .collect()
}

/// Like [`mu_normalization`] but a silent AP gets `mu = 0`, removing it
/// from every sum.
pub fn mu_normalization_lenient<T: Real>(stats: &EstimationStats<T>) -> Vec<T> {
    (0..stats.num_aps())
        .map(|l| {
            let s = ap_load(stats, l);
            if s > T::zero() {
                s.recip()
            } else {
                T::zero()
            }
        })
        .collect()
}

fn ap_load<T: Real>(stats: &EstimationStats<T>, l: usize) -> T {
    (0..stats.num_ues()).map(|i| stats.tr_q(i, l)).sum()
}

/// Instant-independent aggregates for one UE.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct UeTerms<T> {
    /// `sum_i sum_l mu_l tr(Q_il R_kl)`.
    pub a: T,
    /// `sum_{i in P_k} sum_l mu_l |tr(Qbar_kil)|^2`.
    pub b: T,
    /// `sum_{i in P_k} |sum_l sqrt(mu_l) tr(Qbar_kil)|^2`.
    pub c_du: T,
    /// As `c_du` with `theta_il^*` inside the inner sum.
    pub c_df: T,
    /// `|sum_l sqrt(mu_l) tr(Q_kl)|^2`.
    pub s_du: T,
    /// As `s_du` with `theta_kl^*` inside the sum.
    pub s_df: T,
    /// `sum_l mu_l tr(Q_kl)^2`.
    pub s_nc: T,
}

/// Everything the closed forms need, with the per-UE aggregates cached.
#[derive(Clone, Debug)]
pub struct SeScenario<T> {
    pub stats: EstimationStats<T>,
    pub delays: DelayPhases<T>,
    pub p_d: T,
    pub sigma2_d: T,
    pub tau_c: usize,
    mu: Vec<T>,
    terms: Vec<UeTerms<T>>,
}

impl<T: Real> SeScenario<T> {
    pub fn new(stats: EstimationStats<T>, delays: DelayPhases<T>, p_d: T, sigma2_d: T, tau_c: usize) -> Result<Self> {
        if !(p_d > T::zero()) {
            return Err(Error::config("powers.p_d_dbm", "downlink power must be > 0"));
        }
        if !(sigma2_d > T::zero()) {
            return Err(Error::config("noise.sigma2_d_dbm", "downlink noise must be > 0"));
        }
        if stats.lambda() > tau_c {
            return Err(Error::config(
                "block.tau_c",
                format!("must be >= tau_p + 1 = {}", stats.lambda()),
            ));
        }
        if delays.theta.rows() != stats.num_aps() || delays.theta.cols() != stats.num_ues() {
            return Err(Error::Usage("delay-phase table does not match the scene".into()));
        }
        let mu = mu_normalization_lenient(&stats);
        let terms = (0..stats.num_ues()).map(|k| ue_terms(&stats, &delays, &mu, k)).collect();
        Ok(Self { stats, delays, p_d, sigma2_d, tau_c, mu, terms })
    }

    /// Same scenario under different oscillator variances.
    pub fn with_phase(&self, phase: &PhaseParams<T>) -> Result<Self> {
        Self::new(self.stats.with_phase(phase)?, self.delays.clone(), self.p_d, self.sigma2_d, self.tau_c)
    }

    /// Same scenario with different delay phases.
    pub fn with_delays(&self, delays: DelayPhases<T>) -> Result<Self> {
        Self::new(self.stats.clone(), delays, self.p_d, self.sigma2_d, self.tau_c)
    }

    pub fn lambda(&self) -> usize {
        self.stats.lambda()
    }

    pub fn num_ues(&self) -> usize {
        self.stats.num_ues()
    }

    pub fn num_aps(&self) -> usize {
        self.stats.num_aps()
    }

    pub fn phase(&self) -> &PhaseParams<T> {
        &self.stats.phase
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn terms(&self, k: usize) -> &UeTerms<T> {
        &self.terms[k]
    }

    /// Data instants `lambda..=tau_c`.
    pub fn instants(&self) -> std::ops::RangeInclusive<usize> {
        self.lambda()..=self.tau_c
    }

    /// `(eta_ap, eta_ue)` at instant `n`.
    pub fn decays(&self, n: usize) -> Result<(T, T)> {
        if n < self.lambda() || n > self.tau_c {
            return Err(Error::Domain(format!(
                "instant {n} outside {}..={}",
                self.lambda(),
                self.tau_c
            )));
        }
        let gap = n - self.lambda();
        let ph = self.phase();
        Ok((eta(gap, ph.sigma2_ap), eta(gap, ph.sigma2_ue)))
    }

    pub fn sinr(&self, mode: Mode, k: usize, n: usize) -> Result<T> {
        match mode.transmission {
            Transmission::Coherent => sinr_coherent(mode.precoder, k, n, self),
            Transmission::NonCoherent => sinr_noncoherent(k, n, self),
        }
    }

    /// SINR at every data instant and the resulting SE, for every UE.
    pub fn evaluate(&self, mode: Mode) -> Result<SeResult<T>> {
        let mut sinr = Vec::with_capacity(self.num_ues());
        let mut se = Vec::with_capacity(self.num_ues());
        for k in 0..self.num_ues() {
            let path = self
                .instants()
                .map(|n| self.sinr(mode, k, n))
                .collect::<Result<Vec<T>>>()?;
            se.push(se_from_sinr(&path, self.tau_c, self.lambda())?);
            sinr.push(path);
        }
        Ok(SeResult {
            mode,
            lambda: self.lambda(),
            tau_c: self.tau_c,
            scenario_id: self.scenario_id(),
            sinr,
            se,
        })
    }

    /// Expected desired-signal term of AP `l` for UE `k` at instant `n`,
    /// per unit downlink power.
    pub fn desired_term(&self, precoder: Precoder, k: usize, l: usize, n: usize) -> Result<Cx<T>> {
        let (e_ap, e_ue) = self.decays(n)?;
        let amp = (e_ap * e_ue).sqrt() * self.mu[l].sqrt() * self.stats.tr_q(k, l);
        Ok(match precoder {
            Precoder::Du => Cx::new(amp, T::zero()),
            Precoder::Df => self.delays.get(l, k).conj() * amp,
        })
    }

    /// Interference contributed by UE `i`'s precoded stream at UE `k`,
    /// per unit downlink power; the sum over `i` is the denominator's
    /// leading term before the desired signal is removed.
    pub fn interference_term(&self, mode: Mode, k: usize, i: usize, n: usize) -> Result<T> {
        let (e_ap, _) = self.decays(n)?;
        let st = &self.stats;
        let mut total = T::zero();
        for l in 0..self.num_aps() {
            total = total + self.mu[l] * st.tr_q_r(i, k, l);
        }
        let Some(j) = st.plan.copilot[k].iter().position(|&x| x == i) else {
            return Ok(total);
        };
        let zero = T::zero();
        let mut b = zero;
        let mut c = Cx::new(zero, zero);
        for l in 0..self.num_aps() {
            let tr = st.tr_qbar_at(k, j, l);
            b = b + self.mu[l] * tr.norm_sqr();
            let w = tr * self.mu[l].sqrt();
            c = c + match mode.precoder {
                Precoder::Du => w,
                Precoder::Df => self.delays.get(l, i).conj() * w,
            };
        }
        Ok(match mode.transmission {
            Transmission::Coherent => total + (T::one() - e_ap) * b + e_ap * c.norm_sqr(),
            Transmission::NonCoherent => total + b,
        })
    }

    /// Stable digest of every input the closed forms and the Monte Carlo
    /// oracle depend on.
    pub fn scenario_id(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |x: f64| h.update(x.to_le_bytes());
        let st = &self.stats;
        for k in 0..st.num_ues() {
            for l in 0..st.num_aps() {
                for z in st.corr(k, l).as_slice() {
                    put(z.re.to_f64_lossy());
                    put(z.im.to_f64_lossy());
                }
                let th = self.delays.get(l, k);
                put(th.re.to_f64_lossy());
                put(th.im.to_f64_lossy());
            }
            put(st.plan.t[k] as f64);
            put(st.pilot_powers[k].to_f64_lossy());
        }
        for x in [
            st.noise,
            st.phase.sigma2_ap,
            st.phase.sigma2_ue,
            self.p_d,
            self.sigma2_d,
        ] {
            put(x.to_f64_lossy());
        }
        put(st.plan.tau_p as f64);
        put(self.tau_c as f64);
        hex::encode(&h.finalize()[..12])
    }
}

fn ue_terms<T: Real>(stats: &EstimationStats<T>, delays: &DelayPhases<T>, mu: &[T], k: usize) -> UeTerms<T> {
    let num_aps = stats.num_aps();
    let zero = T::zero();
    let mut a = zero;
    for i in 0..stats.num_ues() {
        for (l, &m) in mu.iter().enumerate() {
            a = a + m * stats.tr_q_r(i, k, l);
        }
    }
    let (mut b, mut c_du, mut c_df) = (zero, zero, zero);
    for (j, &i) in stats.plan.copilot[k].iter().enumerate() {
        let mut du = Cx::new(zero, zero);
        let mut df = Cx::new(zero, zero);
        for l in 0..num_aps {
            let tr = stats.tr_qbar_at(k, j, l);
            b = b + mu[l] * tr.norm_sqr();
            let w = tr * mu[l].sqrt();
            du = du + w;
            df = df + delays.get(l, i).conj() * w;
        }
        c_du = c_du + du.norm_sqr();
        c_df = c_df + df.norm_sqr();
    }
    let mut s_du = zero;
    let mut s_df = Cx::new(zero, zero);
    let mut s_nc = zero;
    for l in 0..num_aps {
        let tr = stats.tr_q(k, l);
        s_du = s_du + mu[l].sqrt() * tr;
        s_df = s_df + delays.get(l, k).conj() * (mu[l].sqrt() * tr);
        s_nc = s_nc + mu[l] * tr * tr;
    }
    UeTerms { a, b, c_du, c_df, s_du: s_du * s_du, s_df: s_df.norm_sqr(), s_nc }
}

fn guarded_ratio<T: Real>(num: T, lead: T, subtract: T, noise: T, what: &str) -> Result<T> {
    let xi = lead - subtract;
    if xi < -T::lit(1e-9) * lead {
        return Err(Error::Numerical(format!("{what}: interference term {xi} is negative")));
    }
    Ok(num / (xi.max(T::zero()) + noise))
}

fn sinr_coherent<T: Real>(precoder: Precoder, k: usize, n: usize, sc: &SeScenario<T>) -> Result<T> {
    let (e_ap, e_ue) = sc.decays(n)?;
    let t = &sc.terms[k];
    let (s, c) = match precoder {
        Precoder::Du => (t.s_du, t.c_du),
        Precoder::Df => (t.s_df, t.c_df),
    };
    let ee = e_ap * e_ue;
    let lead = sc.p_d * (t.a + (T::one() - e_ap) * t.b + e_ap * c);
    guarded_ratio(ee * sc.p_d * s, lead, ee * sc.p_d * s, sc.sigma2_d, "coherent SINR")
}

/// Coherent transmission with delay-compensating MR precoding.
pub fn sinr_coherent_du<T: Real>(k: usize, n: usize, sc: &SeScenario<T>) -> Result<T> {
    sinr_coherent(Precoder::Du, k, n, sc)
}

/// Coherent transmission with delay-ignorant MR precoding.
pub fn sinr_coherent_df<T: Real>(k: usize, n: usize, sc: &SeScenario<T>) -> Result<T> {
    sinr_coherent(Precoder::Df, k, n, sc)
}

/// Non-coherent transmission; identical for both precoders.
pub fn sinr_noncoherent<T: Real>(k: usize, n: usize, sc: &SeScenario<T>) -> Result<T> {
    let (e_ap, e_ue) = sc.decays(n)?;
    let t = &sc.terms[k];
    let sig = e_ap * e_ue * sc.p_d * t.s_nc;
    guarded_ratio(sig, sc.p_d * (t.a + t.b), sig, sc.sigma2_d, "non-coherent SINR")
}

/// `(1/tau_c) sum_{n=lambda}^{tau_c} log2(1 + SINR[n])`.
pub fn se_from_sinr<T: Real>(path: &[T], tau_c: usize, lambda: usize) -> Result<T> {
    if lambda == 0 || lambda > tau_c || path.len() != tau_c - lambda + 1 {
        return Err(Error::Usage(format!(
            "SINR path of length {} does not cover instants {lambda}..={tau_c}",
            path.len()
        )));
    }
    let total: T = path.iter().map(|&s| s.ln_1p()).sum();
    Ok(total / (T::LN_2() * T::from_count(tau_c)))
}

/// Large-array limit `1 / (1/(eta_ap eta_ue) + 1/eta_ue + a)` at `gap`
/// instants past `lambda`.
pub fn asymptotic_sinr<T: Real>(gap: usize, phase: &PhaseParams<T>, a: T) -> Result<T> {
    if !(a >= T::zero()) {
        return Err(Error::Domain(format!("constant must be >= 0, got {a}")));
    }
    let e_ap = eta(gap, phase.sigma2_ap);
    let e_ue = eta(gap, phase.sigma2_ue);
    Ok((( e_ap * e_ue).recip() + e_ue.recip() + a).recip())
}

/// Per-UE SINR paths over `lambda..=tau_c` and the resulting SE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SeResult<T> {
    pub mode: Mode,
    pub lambda: usize,
    pub tau_c: usize,
    pub scenario_id: String,
    /// `[k][n - lambda]`.
    pub sinr: Vec<Vec<T>>,
    pub se: Vec<T>,
}

#[derive(Serialize)]
struct SeRow<'a> {
    ue: usize,
    mode: &'a str,
    precoder: &'a str,
    n: usize,
    sinr: f64,
    se: f64,
}

impl<T: Real> SeResult<T> {
    pub fn sum_se(&self) -> T {
        self.se.iter().copied().sum()
    }

    pub fn sinr_at(&self, k: usize, n: usize) -> T {
        self.sinr[k][n - self.lambda]
    }

    /// Copy with every SINR multiplied by `factor` and SE recomputed.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        let sinr: Vec<Vec<T>> = self
            .sinr
            .iter()
            .map(|p| p.iter().map(|&s| s * factor).collect())
            .collect();
        let se = sinr
            .iter()
            .map(|p| se_from_sinr(p, self.tau_c, self.lambda))
            .collect::<Result<_>>()?;
        Ok(Self { sinr, se, ..self.clone() })
    }

    /// Long-format CSV with one row per `(ue, n)`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for (k, path) in self.sinr.iter().enumerate() {
            for (j, s) in path.iter().enumerate() {
                w.serialize(SeRow {
                    ue: k,
                    mode: self.mode.transmission_label(),
                    precoder: self.mode.precoder_label(),
                    n: self.lambda + j,
                    sinr: s.to_f64_lossy(),
                    se: self.se[k].to_f64_lossy(),
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::tests_support::*;
    use super::*;
    use crate::chanest::assign_pilots;
    use crate::linalg::{CMat, Table};
    use crate::rng::{substream, Domain};
    use proptest::prelude::*;

    #[test]
    fn mu_examples() {
        let sc = scalar_scenario(2.0, 1.0, 1.0, 1.0, 1.0);
        let q = sc.stats.tr_q(0, 0);
        assert!((sc.mu()[0] - 1.0 / q).abs() < 1e-15);
        assert_eq!(mu_normalization(&sc.stats).unwrap(), sc.mu());

        // Every Q shrinks by the same decay factor when all UEs share one
        // pilot instant, so mu grows by its inverse.
        let corr = Table::from_fn(2, 3, |l, k| CMat::scaled_identity(2, 1.0 + (l * 3 + k) as f64));
        let plan = assign_pilots(3, 1).unwrap();
        let st = EstimationStats::build(&corr, &plan, &PhaseParams::zero(), &[1.0; 3], 0.5).unwrap();
        let decayed = st.with_phase(&PhaseParams::new(0.1, 0.25).unwrap()).unwrap();
        let c = decayed.decay(0);
        let (a, b) = (mu_normalization(&st).unwrap(), mu_normalization(&decayed).unwrap());
        for l in 0..2 {
            assert!((b[l] * c - a[l]).abs() < 1e-12 * a[l]);
        }
    }

    #[test]
    fn degenerate_ap_is_reported_and_excluded() {
        let corr = Table::from_fn(2, 1, |l, _| CMat::scaled_identity(1, if l == 0 { 1.0 } else { 0.0 }));
        let plan = assign_pilots(1, 1).unwrap();
        let st = EstimationStats::build(&corr, &plan, &PhaseParams::zero(), &[1.0], 0.1).unwrap();
        assert!(matches!(mu_normalization(&st), Err(Error::DegenerateAp { l: 1 })));
        let mu = mu_normalization_lenient(&st);
        assert_eq!(mu[1], 0.0);
        let sc = SeScenario::new(st, DelayPhases::aligned(2, 1), 1.0, 0.1, 5).unwrap();
        let single = scalar_scenario(1.0, 1.0, 0.1, 1.0, 0.1);
        let a = sc.sinr(Mode::CO_DU, 0, 2).unwrap();
        let b = single.sinr(Mode::CO_DU, 0, 2).unwrap();
        assert!((a - b).abs() < 1e-14 * b);
    }

    #[test]
    fn single_link_closed_value() {
        let (beta, p, s, pd, sd) = (3.0, 2.0, 0.5, 4.0, 0.25);
        let sc = scalar_scenario(beta, p, s, pd, sd);
        let q = p * beta * beta / (p * beta + s);
        let want = pd * q / (pd * beta + sd);
        for mode in Mode::ALL {
            for n in sc.instants() {
                let got = sc.sinr(mode, 0, n).unwrap();
                assert!((got - want).abs() < 1e-14 * want, "{mode} {got} {want}");
            }
        }
    }

    #[test]
    fn du_and_nc_ignore_delays() {
        let ph = PhaseParams::from_db(-30.0, -35.0).unwrap();
        let sc = random_scenario(4, 6, 4, 2, 2, ph);
        let other = sc.with_delays(DelayPhases::random(6, 4, &mut substream(9, Domain::Delay, 0))).unwrap();
        for k in 0..4 {
            for n in [3, 20, 50] {
                for mode in [Mode::CO_DU, Mode::NC_DU, Mode::NC_DF] {
                    assert_eq!(sc.sinr(mode, k, n).unwrap(), other.sinr(mode, k, n).unwrap());
                }
                assert_eq!(sc.sinr(Mode::NC_DU, k, n).unwrap(), sc.sinr(Mode::NC_DF, k, n).unwrap());
            }
        }
    }

    #[test]
    fn df_collapses_when_delays_vanish_or_single_ap() {
        let ph = PhaseParams::from_db(-30.0, -30.0).unwrap();
        let sc = random_scenario(5, 6, 4, 2, 2, ph).with_delays(DelayPhases::aligned(6, 4)).unwrap();
        let one = random_scenario(6, 1, 4, 2, 2, ph);
        for k in 0..4 {
            for n in [3, 31] {
                assert_eq!(sc.sinr(Mode::CO_DU, k, n).unwrap(), sc.sinr(Mode::CO_DF, k, n).unwrap());
                let du = one.sinr(Mode::CO_DU, k, n).unwrap();
                let df = one.sinr(Mode::CO_DF, k, n).unwrap();
                let nc = one.sinr(Mode::NC_DU, k, n).unwrap();
                assert!((du - df).abs() <= 1e-14 * du);
                assert!((du - nc).abs() <= 1e-14 * du);
            }
        }
    }

    #[test]
    fn orderings_across_scenes() {
        // Coherent DU also adds pilot contamination coherently, so an
        // individual UE can do better under DF or non-coherent transmission;
        // the ordering holds for the scene sum.
        let ph = PhaseParams::from_db(-40.0, -40.0).unwrap();
        for seed in 0..100 {
            let sc = random_scenario(100 + seed, 10, 4, 2, 2, ph);
            let du = sc.evaluate(Mode::CO_DU).unwrap();
            let df = sc.evaluate(Mode::CO_DF).unwrap();
            let nc = sc.evaluate(Mode::NC_DU).unwrap();
            assert!(df.sum_se() <= du.sum_se(), "seed {seed}");
            assert!(nc.sum_se() <= du.sum_se(), "seed {seed}");
        }
    }

    #[test]
    fn zero_asynchrony_is_flat_and_decay_is_monotone() {
        let flat = random_scenario(7, 5, 3, 2, 3, PhaseParams::zero())
            .with_delays(DelayPhases::aligned(5, 3))
            .unwrap();
        for mode in Mode::ALL {
            let r = flat.evaluate(mode).unwrap();
            for path in &r.sinr {
                assert!(path.iter().all(|&s| s == path[0]));
            }
        }
        let noisy = flat.with_phase(&PhaseParams::from_db(-25.0, -30.0).unwrap()).unwrap();
        for mode in Mode::ALL {
            let r = noisy.evaluate(mode).unwrap();
            for path in &r.sinr {
                assert!(path.windows(2).all(|w| w[1] < w[0]));
            }
        }
    }

    #[test]
    fn term_decomposition_reassembles_sinr() {
        let ph = PhaseParams::from_db(-25.0, -30.0).unwrap();
        let sc = random_scenario(11, 5, 4, 2, 2, ph);
        for mode in Mode::ALL {
            for k in 0..4 {
                for n in [3, 27, 50] {
                    let ds: Cx<f64> = (0..5).map(|l| sc.desired_term(mode.precoder, k, l, n).unwrap()).sum();
                    let s = match mode.transmission {
                        Transmission::Coherent => ds.norm_sqr(),
                        Transmission::NonCoherent => (0..5)
                            .map(|l| sc.desired_term(mode.precoder, k, l, n).unwrap().norm_sqr())
                            .sum(),
                    };
                    let int: f64 = (0..4).map(|i| sc.interference_term(mode, k, i, n).unwrap()).sum();
                    let want = sc.p_d * s / (sc.p_d * (int - s) + sc.sigma2_d);
                    let got = sc.sinr(mode, k, n).unwrap();
                    assert!((got - want).abs() < 1e-10 * got, "{mode} k {k} n {n}");
                }
            }
        }
    }

    #[test]
    fn se_examples() {
        assert_eq!(se_from_sinr(&vec![0.0; 190], 200, 11).unwrap(), 0.0);
        let se: f64 = se_from_sinr(&vec![1.0; 190], 200, 11).unwrap();
        assert!((se - 190.0 / 200.0).abs() < 1e-13);
        let path: Vec<f64> = (0..40).map(|j| 0.5 + j as f64 * 0.1).collect();
        let mean = path.iter().map(|s| (1.0 + s).log2()).sum::<f64>() / 40.0;
        let se = se_from_sinr(&path, 50, 11).unwrap();
        assert!((se - mean * 40.0 / 50.0).abs() < 1e-14);
        assert!(se_from_sinr(&[1.0; 3], 10, 3).is_err());
    }

    #[test]
    fn asymptotic_examples() {
        let z = PhaseParams::<f64>::zero();
        assert!((asymptotic_sinr(5, &z, 0.7).unwrap() - 1.0 / 2.7).abs() < 1e-15);
        let ln2 = PhaseParams::new(2f64.ln(), 2f64.ln()).unwrap();
        assert!((asymptotic_sinr(1, &ln2, 0.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let lo = PhaseParams::from_db(-40.0, -25.0).unwrap();
        let hi = PhaseParams::from_db(-25.0, -40.0).unwrap();
        assert!(asymptotic_sinr(30, &lo, 0.3).unwrap() < asymptotic_sinr(30, &hi, 0.3).unwrap());
        assert!(asymptotic_sinr(1, &z, -1.0).is_err());
    }

    #[test]
    fn invalid_scenarios_rejected() {
        let corr = Table::from_fn(1, 1, |_, _| CMat::scaled_identity(1, 1.0));
        let plan = assign_pilots(1, 4).unwrap();
        let st = EstimationStats::build(&corr, &plan, &PhaseParams::zero(), &[1.0], 1.0).unwrap();
        let d = DelayPhases::aligned(1, 1);
        assert!(SeScenario::new(st.clone(), d.clone(), 0.0, 1.0, 10).is_err());
        assert!(SeScenario::new(st.clone(), d.clone(), 1.0, 0.0, 10).is_err());
        assert!(SeScenario::new(st.clone(), d.clone(), 1.0, 1.0, 4).is_err());
        let sc = SeScenario::new(st, d, 1.0, 1.0, 5).unwrap();
        assert!(sc.sinr(Mode::CO_DU, 0, 4).is_err());
        assert!(sc.sinr(Mode::CO_DU, 0, 6).is_err());
    }

    #[test]
    fn scenario_id_tracks_inputs() {
        let ph = PhaseParams::from_db(-30.0, -30.0).unwrap();
        let a = random_scenario(1, 3, 2, 2, 2, ph);
        let b = random_scenario(1, 3, 2, 2, 2, ph);
        assert_eq!(a.scenario_id(), b.scenario_id());
        let c = a.with_phase(&PhaseParams::from_db(-31.0, -30.0).unwrap()).unwrap();
        assert_ne!(a.scenario_id(), c.scenario_id());
    }

    #[test]
    fn csv_layout() {
        let sc = scalar_scenario(1.0, 1.0, 1.0, 1.0, 1.0);
        let r = sc.evaluate(Mode::NC_DF).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "ue,mode,precoder,n,sinr,se");
        assert!(lines.next().unwrap().starts_with("0,noncoherent,df,2,"));
        assert_eq!(text.lines().count(), 1 + 9);
        assert_eq!("co-df".parse::<Mode>().unwrap(), Mode::CO_DF);
        assert_eq!(Mode::NC_DU.to_string(), "nc-du");
    }

    proptest! {
        #[test]
        fn se_bounded_by_peak_sinr(path in prop::collection::vec(0.0f64..1e3, 1..60), extra in 0usize..20) {
            let lambda = 1 + extra;
            let tau_c = lambda + path.len() - 1;
            let se = se_from_sinr(&path, tau_c, lambda).unwrap();
            let peak = path.iter().cloned().fold(0.0, f64::max);
            prop_assert!(se >= 0.0);
            prop_assert!(se <= (path.len() as f64 / tau_c as f64) * (1.0 + peak).log2() * (1.0 + 1e-12));
        }

        #[test]
        fn asymptotic_decreases_in_each_variance(sa in 1e-5f64..0.05, su in 1e-5f64..0.05, d in 1e-5f64..0.05, gap in 1usize..100, a in 0.0f64..5.0) {
            let base = asymptotic_sinr(gap, &PhaseParams::new(sa, su).unwrap(), a).unwrap();
            prop_assert!(base > 0.0 && base <= 1.0 / (2.0 + a));
            prop_assert!(asymptotic_sinr(gap, &PhaseParams::new(sa + d, su).unwrap(), a).unwrap() < base);
            prop_assert!(asymptotic_sinr(gap, &PhaseParams::new(sa, su + d).unwrap(), a).unwrap() < base);
        }
    }
}
