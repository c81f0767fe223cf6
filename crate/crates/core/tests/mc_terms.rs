//! Term-level agreement between Monte Carlo sample means and the
//! closed-form building blocks.

use cfmimo::experiment::{DelayModel, ExperimentConfig};
use cfmimo::mcsim::{estimate_sinr, McConfig};
use cfmimo::phase::PhaseParams;
use cfmimo::sedf::{Mode, Precoder, SeScenario};

fn desk(db: f64) -> SeScenario<f64> {
    let cfg = ExperimentConfig::desk();
    cfg.scenario(&cfg.scene(0).unwrap(), &PhaseParams::from_db(db, db).unwrap(), DelayModel::Geometric(1.0))
        .unwrap()
}

#[test]
fn desired_and_cross_pilot_terms_match_sample_means() {
    let sc = desk(-20.0);
    let instants = vec![3, 13, 50];
    let cfg = McConfig { trials: 10_000, seed: 21, instants: instants.clone(), modes: Mode::ALL.to_vec() };
    let est = estimate_sinr(&sc, &cfg).unwrap();
    let (nk, nl) = (sc.num_ues(), sc.num_aps());
    for &n in &instants {
        for k in 0..nk {
            for p in [Precoder::Du, Precoder::Df] {
                for l in 0..nl {
                    let (m, se) = est.ds_mean(p, k, l, n).unwrap();
                    let want = sc.desired_term(p, k, l, n).unwrap();
                    assert!((m - want).norm() <= 4.0 * se, "DS {p:?} k {k} l {l} n {n}: {m} vs {want} (se {se:.3e})");
                }
            }
            // UEs on another pilot contribute only tr(Q_il R_kl), which
            // carries no phase approximation.
            for i in (0..nk).filter(|&i| !sc.stats.plan.shares_pilot(k, i)) {
                for mode in Mode::ALL {
                    let (m, se) = est.int_mean(mode, k, i, n).unwrap();
                    let want = sc.interference_term(mode, k, i, n).unwrap();
                    assert!((m - want).abs() <= 4.0 * se, "INT {mode} k {k} i {i} n {n}: {m} vs {want} (se {se:.3e})");
                }
            }
        }
    }
}

#[test]
fn standard_error_shrinks_as_inverse_root_of_trials() {
    let sc = desk(-30.0);
    let run = |trials| {
        let cfg = McConfig { trials, seed: 5, instants: vec![3, 50], modes: vec![Mode::CO_DU, Mode::NC_DU] };
        estimate_sinr(&sc, &cfg).unwrap()
    };
    let runs: Vec<_> = [1_000, 4_000, 16_000].into_iter().map(run).collect();
    for w in runs.windows(2) {
        let mut ratios: Vec<f64> = w[0].sinr.iter().zip(&w[1].sinr).map(|(a, b)| a.stderr / b.stderr).collect();
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        assert!((median - 2.0).abs() < 0.3, "median stderr ratio {median}");
    }
}
