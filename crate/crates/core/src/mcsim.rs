//! Monte Carlo oracle for the use-and-then-forget SINR.
//!
//! Every trial draws channels, oscillator walks and pilot noise from its
//! own counter-derived stream, runs the actual MMSE estimator and forms
//! the received inner products `g_kl[n]^H sqrt(mu_l) v_il`. Sample means of
//! the desired-signal and interference terms are then assembled into SINR
//! exactly the way the bound prescribes.
//!
//! Standard errors come from the delta method. The second pass that needs
//! the sample means regenerates each trial from its stream instead of
//! storing it, so memory stays independent of the trial count.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chanest::{mmse_estimate, received_pilot, ChannelSampler};
use crate::error::{Error, Result};
use crate::linalg::{dot_h, Table};
use crate::phase::{sample_phase_paths, PhasePath};
use crate::rng::{substream, Domain, SimRng};
use crate::scalar::{Cx, Real};
use crate::sedf::{Mode, Precoder, SeResult, SeScenario, Transmission};

type C64 = Complex<f64>;

/// Trials per work unit. Partial sums are formed per chunk in trial order
/// and merged in chunk order, so results do not depend on the thread count.
const CHUNK: usize = 128;

/// Relative standard error above which a validation entry is too noisy to
/// support a verdict.
pub const MAX_REL_STDERR: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
    pub instants: Vec<usize>,
    pub modes: Vec<Mode>,
}

impl McConfig {
    pub fn validate<T: Real>(&self, sc: &SeScenario<T>) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("mc.trials", "must be >= 1"));
        }
        if self.instants.is_empty() {
            return Err(Error::config("mc.instants", "at least one instant required"));
        }
        if let Some(&n) = self.instants.iter().find(|&&n| n < sc.lambda() || n > sc.tau_c) {
            return Err(Error::config(
                "mc.instants",
                format!("instant {n} outside {}..={}", sc.lambda(), sc.tau_c),
            ));
        }
        if self.modes.is_empty() {
            return Err(Error::config("mc.modes", "at least one mode required"));
        }
        Ok(())
    }

    fn precoders(&self) -> Vec<Precoder> {
        let mut out = Vec::new();
        for p in [Precoder::Du, Precoder::Df] {
            if self.modes.iter().any(|m| m.precoder == p) {
                out.push(p);
            }
        }
        out
    }
}

/// One sampled coherence block reduced to the inner products the bound
/// needs.
#[derive(Clone, Debug)]
pub struct Realization<T> {
    pub h: Table<Vec<Cx<T>>>,
    pub h_hat: Table<Vec<Cx<T>>>,
    pub phases: PhasePath<T>,
    pub instants: Vec<usize>,
    num_ues: usize,
    num_aps: usize,
    /// `sqrt(mu_l) h_kl^H v_il` at `(k * K + i) * L + l`.
    base_du: Option<Vec<Cx<T>>>,
    base_df: Option<Vec<Cx<T>>>,
    /// `conj(theta_kl e^{j(phi_k[n] + phi_l[n])})` at `(k * L + l) * J + j`.
    rot: Vec<Cx<T>>,
}

impl<T: Real> Realization<T> {
    /// `g_kl[n_j]^H sqrt(mu_l) v_il`.
    #[inline]
    pub fn term(&self, precoder: Precoder, k: usize, i: usize, l: usize, j: usize) -> Cx<T> {
        let base = match precoder {
            Precoder::Du => self.base_du.as_ref(),
            Precoder::Df => self.base_df.as_ref(),
        }
        .expect("precoder not sampled");
        let (nk, nl, nj) = (self.num_ues, self.num_aps, self.instants.len());
        self.rot[(k * nl + l) * nj + j] * base[(k * nk + i) * nl + l]
    }
}

/// Channel factors cached once per scenario.
pub struct Simulator<'a, T> {
    pub scenario: &'a SeScenario<T>,
    sampler: ChannelSampler<T>,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(scenario: &'a SeScenario<T>) -> Self {
        Self {
            scenario,
            sampler: ChannelSampler::new(scenario.stats.correlations()),
        }
    }

    /// Draw order within the stream: channels, oscillator walks, pilot
    /// noise.
    pub fn realization(&self, instants: &[usize], precoders: &[Precoder], rng: &mut SimRng) -> Result<Realization<T>> {
        let sc = self.scenario;
        let st = &sc.stats;
        let (nk, nl) = (sc.num_ues(), sc.num_aps());
        let h = self.sampler.sample(rng);
        let phases = sample_phase_paths(sc.phase(), nk, nl, sc.tau_c, rng)?;
        let obs = received_pilot(&st.plan, &h, &phases, &sc.delays, &st.pilot_powers, st.noise, rng);
        let h_hat = Table::from_fn(nl, nk, |l, k| {
            mmse_estimate(obs.at(l, st.plan.t[k]), st, k, l, sc.delays.get(l, k))
        });
        let mu_sqrt: Vec<T> = sc.mu().iter().map(|m| m.sqrt()).collect();
        let mut raw = vec![Cx::new(T::zero(), T::zero()); nk * nk * nl];
        for k in 0..nk {
            for i in 0..nk {
                for l in 0..nl {
                    raw[(k * nk + i) * nl + l] = dot_h(&h[(l, k)], &h_hat[(l, i)]) * mu_sqrt[l];
                }
            }
        }
        let mut base_du = None;
        let mut base_df = None;
        for &p in precoders {
            match p {
                Precoder::Df => base_df = Some(raw.clone()),
                Precoder::Du => {
                    let mut v = raw.clone();
                    for k in 0..nk {
                        for i in 0..nk {
                            for l in 0..nl {
                                let idx = (k * nk + i) * nl + l;
                                v[idx] = v[idx] * sc.delays.get(l, i);
                            }
                        }
                    }
                    base_du = Some(v);
                }
            }
        }
        let nj = instants.len();
        let mut rot = Vec::with_capacity(nk * nl * nj);
        for k in 0..nk {
            for l in 0..nl {
                let th = sc.delays.get(l, k);
                for &n in instants {
                    rot.push((th * phases.oscillator(k, l, n)).conj());
                }
            }
        }
        Ok(Realization {
            h,
            h_hat,
            phases,
            instants: instants.to_vec(),
            num_ues: nk,
            num_aps: nl,
            base_du,
            base_df,
            rot,
        })
    }
}

/// One realization for the given instants and both precoders.
pub fn simulate_realization<T: Real>(sc: &SeScenario<T>, instants: &[usize], rng: &mut SimRng) -> Result<Realization<T>> {
    Simulator::new(sc).realization(instants, &[Precoder::Du, Precoder::Df], rng)
}

/// Per-trial observables for one precoder, in `f64`.
#[derive(Clone, Debug, Default)]
struct Obs {
    /// Desired term per `(k, l, j)`.
    ds: Vec<C64>,
    /// `|sum_l term(k, i, l, j)|^2` per `(k, i, j)`.
    int_co: Vec<f64>,
    /// `sum_l |term(k, i, l, j)|^2` per `(k, i, j)`.
    int_nc: Vec<f64>,
}

#[derive(Clone, Copy)]
struct Dims {
    k: usize,
    l: usize,
    j: usize,
}

impl Dims {
    fn ds(&self, k: usize, l: usize, j: usize) -> usize {
        (k * self.l + l) * self.j + j
    }
    fn int(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.k + i) * self.j + j
    }
    fn kj(&self, k: usize, j: usize) -> usize {
        k * self.j + j
    }
}

fn to_c64<T: Real>(z: Cx<T>) -> C64 {
    C64::new(z.re.to_f64_lossy(), z.im.to_f64_lossy())
}

fn observe<T: Real>(r: &Realization<T>, p: Precoder, d: Dims, out: &mut Obs) {
    out.ds.clear();
    out.ds.resize(d.k * d.l * d.j, C64::new(0.0, 0.0));
    out.int_co.clear();
    out.int_co.resize(d.k * d.k * d.j, 0.0);
    out.int_nc.clear();
    out.int_nc.resize(d.k * d.k * d.j, 0.0);
    for k in 0..d.k {
        for i in 0..d.k {
            for j in 0..d.j {
                let mut sum = C64::new(0.0, 0.0);
                let mut sq = 0.0;
                for l in 0..d.l {
                    let t = to_c64(r.term(p, k, i, l, j));
                    if i == k {
                        out.ds[d.ds(k, l, j)] = t;
                    }
                    sum += t;
                    sq += t.norm_sqr();
                }
                out.int_co[d.int(k, i, j)] = sum.norm_sqr();
                out.int_nc[d.int(k, i, j)] = sq;
            }
        }
    }
}

fn add_into<X: Copy + std::ops::AddAssign>(acc: &mut [X], x: &[X]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += *b;
    }
}

/// Running sums for one precoder.
#[derive(Clone, Debug)]
struct Sums {
    ds: Vec<C64>,
    int_co: Vec<f64>,
    int_nc: Vec<f64>,
}

impl Sums {
    fn zeros(d: Dims) -> Self {
        Self {
            ds: vec![C64::new(0.0, 0.0); d.k * d.l * d.j],
            int_co: vec![0.0; d.k * d.k * d.j],
            int_nc: vec![0.0; d.k * d.k * d.j],
        }
    }
    fn add(&mut self, o: &Obs) {
        add_into(&mut self.ds, &o.ds);
        add_into(&mut self.int_co, &o.int_co);
        add_into(&mut self.int_nc, &o.int_nc);
    }
    fn merge(&mut self, o: &Sums) {
        add_into(&mut self.ds, &o.ds);
        add_into(&mut self.int_co, &o.int_co);
        add_into(&mut self.int_nc, &o.int_nc);
    }
}

/// Second-pass sums of squared deviations and squared influence values.
#[derive(Clone, Debug)]
struct Spread {
    ds: Vec<f64>,
    int_co: Vec<f64>,
    int_nc: Vec<f64>,
    psi_co: Vec<f64>,
    psi_nc: Vec<f64>,
}

impl Spread {
    fn zeros(d: Dims) -> Self {
        Self {
            ds: vec![0.0; d.k * d.l * d.j],
            int_co: vec![0.0; d.k * d.k * d.j],
            int_nc: vec![0.0; d.k * d.k * d.j],
            psi_co: vec![0.0; d.k * d.j],
            psi_nc: vec![0.0; d.k * d.j],
        }
    }
    fn merge(&mut self, o: &Spread) {
        add_into(&mut self.ds, &o.ds);
        add_into(&mut self.int_co, &o.int_co);
        add_into(&mut self.int_nc, &o.int_nc);
        add_into(&mut self.psi_co, &o.psi_co);
        add_into(&mut self.psi_nc, &o.psi_nc);
    }
}

/// SINR assembled from sample means, with the gradient needed for the
/// delta-method influence function.
#[derive(Clone, Copy, Debug)]
struct Assembled {
    sinr: f64,
    /// d SINR / d S and d SINR / d Y.
    grad: (f64, f64),
    excess: f64,
    den: f64,
}

fn assemble(s: f64, y: f64, p_d: f64, noise: f64) -> Assembled {
    let excess = y - s;
    let den = p_d * excess + noise;
    Assembled {
        sinr: p_d * s / den,
        grad: (p_d * (den + p_d * s) / (den * den), -p_d * p_d * s / (den * den)),
        excess,
        den,
    }
}

/// Per-precoder sample moments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PrecoderMoments {
    pub precoder: Precoder,
    /// `(k, l, j)` flattened as `(k * L + l) * J + j`.
    pub ds_mean: Vec<C64>,
    pub ds_stderr: Vec<f64>,
    /// `(k, i, j)` flattened as `(k * K + i) * J + j`.
    pub int_co_mean: Vec<f64>,
    pub int_co_stderr: Vec<f64>,
    pub int_nc_mean: Vec<f64>,
    pub int_nc_stderr: Vec<f64>,
}

/// Monte Carlo SINR for one `(mode, ue, instant)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McSinr {
    pub mode: Mode,
    pub ue: usize,
    pub instant: usize,
    pub sinr: f64,
    pub stderr: f64,
    /// Sample interference minus sample desired power came out negative.
    pub negative_denominator: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct McEstimate {
    pub scenario_id: String,
    pub trials: usize,
    pub seed: u64,
    pub num_ues: usize,
    pub num_aps: usize,
    pub instants: Vec<usize>,
    pub moments: Vec<PrecoderMoments>,
    pub sinr: Vec<McSinr>,
}

impl McEstimate {
    fn slot(&self, n: usize) -> Option<usize> {
        self.instants.iter().position(|&x| x == n)
    }

    fn moments_for(&self, p: Precoder) -> Option<&PrecoderMoments> {
        self.moments.iter().find(|m| m.precoder == p)
    }

    /// Sample mean and standard error of the desired term.
    pub fn ds_mean(&self, p: Precoder, k: usize, l: usize, n: usize) -> Option<(C64, f64)> {
        let j = self.slot(n)?;
        let m = self.moments_for(p)?;
        let idx = (k * self.num_aps + l) * self.instants.len() + j;
        Some((m.ds_mean[idx], m.ds_stderr[idx]))
    }

    /// Sample mean and standard error of UE `i`'s interference at UE `k`.
    pub fn int_mean(&self, mode: Mode, k: usize, i: usize, n: usize) -> Option<(f64, f64)> {
        let j = self.slot(n)?;
        let m = self.moments_for(mode.precoder)?;
        let idx = (k * self.num_ues + i) * self.instants.len() + j;
        Some(match mode.transmission {
            Transmission::Coherent => (m.int_co_mean[idx], m.int_co_stderr[idx]),
            Transmission::NonCoherent => (m.int_nc_mean[idx], m.int_nc_stderr[idx]),
        })
    }

    pub fn sinr(&self, mode: Mode, k: usize, n: usize) -> Option<&McSinr> {
        self.sinr.iter().find(|e| e.mode == mode && e.ue == k && e.instant == n)
    }
}

fn run_chunks<X: Send>(trials: usize, f: impl Fn(std::ops::Range<usize>) -> Result<X> + Sync) -> Result<Vec<X>> {
    let chunks = trials.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(trials)))
        .collect()
}

fn stderr_of(sum_sq_dev: f64, trials: usize) -> f64 {
    if trials < 2 {
        f64::INFINITY
    } else {
        (sum_sq_dev / (trials as f64 * (trials as f64 - 1.0))).sqrt()
    }
}

/// Runs the oracle for every configured mode and instant.
pub fn estimate_sinr<T: Real>(sc: &SeScenario<T>, cfg: &McConfig) -> Result<McEstimate> {
    cfg.validate(sc)?;
    let sim = Simulator::new(sc);
    let precoders = cfg.precoders();
    let d = Dims { k: sc.num_ues(), l: sc.num_aps(), j: cfg.instants.len() };
    let p_d = sc.p_d.to_f64_lossy();
    let noise = sc.sigma2_d.to_f64_lossy();
    let trials = cfg.trials;
    let realize = |t: usize| {
        let mut rng = substream(cfg.seed, Domain::Trial, t as u64);
        sim.realization(&cfg.instants, &precoders, &mut rng)
    };

    // Pass 1: sample means.
    let partial = run_chunks(trials, |range| {
        let mut acc: Vec<Sums> = precoders.iter().map(|_| Sums::zeros(d)).collect();
        let mut obs = Obs::default();
        for t in range {
            let r = realize(t)?;
            for (a, &p) in acc.iter_mut().zip(&precoders) {
                observe(&r, p, d, &mut obs);
                a.add(&obs);
            }
        }
        Ok(acc)
    })?;
    let mut sums: Vec<Sums> = precoders.iter().map(|_| Sums::zeros(d)).collect();
    for part in &partial {
        for (s, p) in sums.iter_mut().zip(part) {
            s.merge(p);
        }
    }
    let inv = 1.0 / trials as f64;
    let means: Vec<Sums> = sums
        .iter()
        .map(|s| Sums {
            ds: s.ds.iter().map(|z| z * inv).collect(),
            int_co: s.int_co.iter().map(|x| x * inv).collect(),
            int_nc: s.int_nc.iter().map(|x| x * inv).collect(),
        })
        .collect();

    // Assembled SINR per precoder, transmission, (k, j).
    let build = |m: &Sums| -> (Vec<Assembled>, Vec<Assembled>, Vec<C64>) {
        let mut co = Vec::with_capacity(d.k * d.j);
        let mut nc = Vec::with_capacity(d.k * d.j);
        let mut xbar = Vec::with_capacity(d.k * d.j);
        for k in 0..d.k {
            for j in 0..d.j {
                let x: C64 = (0..d.l).map(|l| m.ds[d.ds(k, l, j)]).sum();
                let s_nc: f64 = (0..d.l).map(|l| m.ds[d.ds(k, l, j)].norm_sqr()).sum();
                let y_co: f64 = (0..d.k).map(|i| m.int_co[d.int(k, i, j)]).sum();
                let y_nc: f64 = (0..d.k).map(|i| m.int_nc[d.int(k, i, j)]).sum();
                co.push(assemble(x.norm_sqr(), y_co, p_d, noise));
                nc.push(assemble(s_nc, y_nc, p_d, noise));
                xbar.push(x);
            }
        }
        (co, nc, xbar)
    };
    let assembled: Vec<_> = means.iter().map(build).collect();

    // Pass 2: deviations around the means, regenerated trial by trial.
    let partial = run_chunks(trials, |range| {
        let mut acc: Vec<Spread> = precoders.iter().map(|_| Spread::zeros(d)).collect();
        let mut obs = Obs::default();
        for t in range {
            let r = realize(t)?;
            for (pi, &p) in precoders.iter().enumerate() {
                observe(&r, p, d, &mut obs);
                let m = &means[pi];
                let (co, nc, xbar) = &assembled[pi];
                let a = &mut acc[pi];
                for (s, (o, mu)) in a.ds.iter_mut().zip(obs.ds.iter().zip(&m.ds)) {
                    *s += (o - mu).norm_sqr();
                }
                for (s, (o, mu)) in a.int_co.iter_mut().zip(obs.int_co.iter().zip(&m.int_co)) {
                    *s += (o - mu) * (o - mu);
                }
                for (s, (o, mu)) in a.int_nc.iter_mut().zip(obs.int_nc.iter().zip(&m.int_nc)) {
                    *s += (o - mu) * (o - mu);
                }
                for k in 0..d.k {
                    for j in 0..d.j {
                        let kj = d.kj(k, j);
                        let x_t: C64 = (0..d.l).map(|l| obs.ds[d.ds(k, l, j)]).sum();
                        let ds_co = 2.0 * (xbar[kj].conj() * (x_t - xbar[kj])).re;
                        let dy_co: f64 = (0..d.k).map(|i| obs.int_co[d.int(k, i, j)] - m.int_co[d.int(k, i, j)]).sum();
                        let psi = co[kj].grad.0 * ds_co + co[kj].grad.1 * dy_co;
                        a.psi_co[kj] += psi * psi;

                        let ds_nc: f64 = (0..d.l)
                            .map(|l| {
                                let mu = m.ds[d.ds(k, l, j)];
                                2.0 * (mu.conj() * (obs.ds[d.ds(k, l, j)] - mu)).re
                            })
                            .sum();
                        let dy_nc: f64 = (0..d.k).map(|i| obs.int_nc[d.int(k, i, j)] - m.int_nc[d.int(k, i, j)]).sum();
                        let psi = nc[kj].grad.0 * ds_nc + nc[kj].grad.1 * dy_nc;
                        a.psi_nc[kj] += psi * psi;
                    }
                }
            }
        }
        Ok(acc)
    })?;
    let mut spread: Vec<Spread> = precoders.iter().map(|_| Spread::zeros(d)).collect();
    for part in &partial {
        for (s, p) in spread.iter_mut().zip(part) {
            s.merge(p);
        }
    }

    let se = |v: &[f64]| v.iter().map(|&x| stderr_of(x, trials)).collect::<Vec<f64>>();
    let moments = precoders
        .iter()
        .enumerate()
        .map(|(pi, &p)| PrecoderMoments {
            precoder: p,
            ds_mean: means[pi].ds.clone(),
            ds_stderr: se(&spread[pi].ds),
            int_co_mean: means[pi].int_co.clone(),
            int_co_stderr: se(&spread[pi].int_co),
            int_nc_mean: means[pi].int_nc.clone(),
            int_nc_stderr: se(&spread[pi].int_nc),
        })
        .collect();

    let mut sinr = Vec::new();
    for &mode in &cfg.modes {
        let pi = precoders.iter().position(|&p| p == mode.precoder).expect("precoder sampled");
        let (co, nc, _) = &assembled[pi];
        let (vals, psi) = match mode.transmission {
            Transmission::Coherent => (co, &spread[pi].psi_co),
            Transmission::NonCoherent => (nc, &spread[pi].psi_nc),
        };
        for k in 0..d.k {
            for (j, &n) in cfg.instants.iter().enumerate() {
                let kj = d.kj(k, j);
                let a = vals[kj];
                let (value, err) = if a.den > 0.0 {
                    (a.sinr, stderr_of(psi[kj], trials))
                } else {
                    (f64::INFINITY, f64::INFINITY)
                };
                sinr.push(McSinr {
                    mode,
                    ue: k,
                    instant: n,
                    sinr: value,
                    stderr: err,
                    negative_denominator: a.excess < 0.0,
                });
            }
        }
    }
    Ok(McEstimate {
        scenario_id: sc.scenario_id(),
        trials,
        seed: cfg.seed,
        num_ues: d.k,
        num_aps: d.l,
        instants: cfg.instants.clone(),
        moments,
        sinr,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub ue: usize,
    pub instant: usize,
    pub mode: String,
    pub closed: f64,
    pub mc: f64,
    pub stderr: f64,
    pub rel_err: f64,
    pub pass: bool,
    /// Too noisy or a negative sample denominator; cannot confirm.
    pub inconclusive: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario_id: String,
    pub trials: usize,
    pub tol_rel: f64,
    pub max_rel_err: f64,
    pub verdict: Verdict,
    pub entries: Vec<ValidationEntry>,
}

/// Compares closed-form SINR with the oracle. An entry fails when
/// `|closed - mc| > tol_rel * closed + 3 * stderr`.
pub fn validate<T: Real>(closed: &[SeResult<T>], mc: &McEstimate, tol_rel: f64) -> Result<ValidationReport> {
    if !(tol_rel >= 0.0) {
        return Err(Error::config("validate.tol_rel", "must be >= 0"));
    }
    let mut entries = Vec::with_capacity(mc.sinr.len());
    for e in &mc.sinr {
        let res = closed
            .iter()
            .find(|r| r.mode == e.mode)
            .ok_or_else(|| Error::Usage(format!("no closed-form result for mode {}", e.mode)))?;
        if res.scenario_id != mc.scenario_id {
            return Err(Error::Usage(format!(
                "scenario mismatch: closed form {} vs Monte Carlo {}",
                res.scenario_id, mc.scenario_id
            )));
        }
        if e.instant < res.lambda || e.instant > res.tau_c || e.ue >= res.sinr.len() {
            return Err(Error::Usage(format!("closed form lacks UE {} at instant {}", e.ue, e.instant)));
        }
        let c = res.sinr_at(e.ue, e.instant).to_f64_lossy();
        let diff = (c - e.sinr).abs();
        let rel_err = if c > 0.0 { diff / c } else { diff };
        let pass = diff <= tol_rel * c + 3.0 * e.stderr;
        let noisy = !(e.stderr <= MAX_REL_STDERR * e.sinr.abs());
        entries.push(ValidationEntry {
            ue: e.ue,
            instant: e.instant,
            mode: e.mode.to_string(),
            closed: c,
            mc: e.sinr,
            stderr: e.stderr,
            rel_err,
            pass,
            inconclusive: noisy || e.negative_denominator,
        });
    }
    let max_rel_err = entries
        .iter()
        .map(|e| e.rel_err)
        .filter(|x| x.is_finite())
        .fold(0.0, f64::max);
    let verdict = if entries.iter().any(|e| !e.pass) {
        Verdict::Fail
    } else if entries.iter().any(|e| e.inconclusive) {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    Ok(ValidationReport {
        scenario_id: mc.scenario_id.clone(),
        trials: mc.trials,
        tol_rel,
        max_rel_err,
        verdict,
        entries,
    })
}
