//! Helpers shared by the integration tests.
#![allow(dead_code)]

use cfmimo::experiment::{DelayModel, ExperimentConfig};
use cfmimo::linalg::{CMat, Table};
use cfmimo::mcsim::Simulator;
use cfmimo::phase::PhaseParams;
use cfmimo::rng::{substream, Domain};
use cfmimo::sedf::{Precoder, SeScenario};
use cfmimo::Cx;
use rayon::prelude::*;

pub const DRAWS: usize = 100_000;

pub fn desk(ap_db: f64, ue_db: f64) -> SeScenario<f64> {
    let cfg = ExperimentConfig::desk();
    cfg.scenario(&cfg.scene(0).unwrap(), &PhaseParams::from_db(ap_db, ue_db).unwrap(), DelayModel::Geometric(1.0))
        .unwrap()
}

/// Second moments accumulated over draws, all links at once.
pub struct Moments {
    /// `E{h_hat h_hat^H}` per `(l, k)`.
    pub est: Table<CMat<f64>>,
    /// `E{e e^H}` with `e = h_hat - e^{j phi[lambda]} h`.
    pub err: Table<CMat<f64>>,
    /// `E{e h_hat^H}`.
    pub cross: Table<CMat<f64>>,
    /// `E{h_hat_kl^H h_hat_il}` per `(l, k, i)`, flattened.
    pub gram: Vec<Cx<f64>>,
}

fn add_outer(m: &mut CMat<f64>, u: &[Cx<f64>], v: &[Cx<f64>]) {
    let n = u.len();
    *m = CMat::from_fn(n, |a, b| m.as_slice()[a * n + b] + u[a] * v[b].conj());
}

pub fn sample_moments(sc: &SeScenario<f64>, seed: u64) -> Moments {
    let (nl, nk) = (sc.num_aps(), sc.num_ues());
    let n = sc.stats.antennas();
    let lambda = sc.lambda();
    let sim = Simulator::new(sc);
    let zero = || Table::from_fn(nl, nk, |_, _| CMat::zeros(n));
    let init = || Moments { est: zero(), err: zero(), cross: zero(), gram: vec![Cx::new(0.0, 0.0); nl * nk * nk] };
    let chunks: Vec<Moments> = (0..DRAWS.div_ceil(1000))
        .into_par_iter()
        .map(|c| {
            let mut m = init();
            for t in c * 1000..((c + 1) * 1000).min(DRAWS) {
                let r = sim.realization(&[lambda], &[Precoder::Du], &mut substream(seed, Domain::Trial, t as u64)).unwrap();
                for l in 0..nl {
                    for k in 0..nk {
                        let hh = &r.h_hat[(l, k)];
                        let rot = cfmimo::scalar::cis(r.phases.link_phase(k, l, lambda));
                        let e: Vec<Cx<f64>> = hh.iter().zip(&r.h[(l, k)]).map(|(a, b)| a - b * rot).collect();
                        add_outer(&mut m.est[(l, k)], hh, hh);
                        add_outer(&mut m.err[(l, k)], &e, &e);
                        add_outer(&mut m.cross[(l, k)], &e, hh);
                        for i in 0..nk {
                            m.gram[(l * nk + k) * nk + i] += cfmimo::linalg::dot_h(hh, &r.h_hat[(l, i)]);
                        }
                    }
                }
            }
            m
        })
        .collect();
    let mut total = init();
    for c in chunks {
        for l in 0..nl {
            for k in 0..nk {
                for (dst, src) in [(&mut total.est, &c.est), (&mut total.err, &c.err), (&mut total.cross, &c.cross)] {
                    let a = dst[(l, k)].clone();
                    let b = &src[(l, k)];
                    dst[(l, k)] = CMat::from_fn(n, |x, y| a.as_slice()[x * n + y] + b.as_slice()[x * n + y]);
                }
            }
        }
        for (a, b) in total.gram.iter_mut().zip(&c.gram) {
            *a += b;
        }
    }
    let s = 1.0 / DRAWS as f64;
    Moments {
        est: total.est.map(|m| m.scale(s)),
        err: total.err.map(|m| m.scale(s)),
        cross: total.cross.map(|m| m.scale(s)),
        gram: total.gram.iter().map(|g| g * s).collect(),
    }
}

pub fn frob_rel(a: &CMat<f64>, b: &CMat<f64>) -> f64 {
    let n = a.dim();
    let d = CMat::from_fn(n, |x, y| a.as_slice()[x * n + y] - b.as_slice()[x * n + y]);
    d.frobenius_norm() / b.frobenius_norm()
}

