//! Sample statistics of the oscillator phase walks against their
//! analytic moments.

use cfmimo::phase::{sample_phase_paths, theta_mean, PhaseParams};
use cfmimo::rng::{substream, Domain};
use cfmimo::Cx;

const SAMPLES: u64 = 100_000;

/// Mean of `f(path)` over independent walks of `num_aps` APs and one UE.
fn mean_over_paths(params: &PhaseParams<f64>, num_aps: usize, tau_c: usize, seed: u64, f: impl Fn(&cfmimo::phase::PhasePath<f64>) -> Cx<f64>) -> Cx<f64> {
    let mut acc = Cx::new(0.0, 0.0);
    for s in 0..SAMPLES {
        let mut rng = substream(seed, Domain::Phase, s);
        let p = sample_phase_paths(params, 1, num_aps, tau_c, &mut rng).unwrap();
        acc += f(&p);
    }
    acc / SAMPLES as f64
}

#[test]
fn drift_mean_matches_exponential_decay() {
    for (ap, ue) in [(-20.0, -20.0), (-30.0, -20.0), (-20.0, -40.0)] {
        let params = PhaseParams::from_db(ap, ue).unwrap();
        for (from, gap) in [(3, 1), (3, 10), (11, 39)] {
            let tau_c = from + gap;
            let m = mean_over_paths(&params, 1, tau_c, 7, |p| p.drift(0, 0, from, from + gap));
            let want = theta_mean(gap, &params);
            let rel = (m - want).norm() / want;
            assert!(rel < 0.01, "ap {ap} ue {ue} gap {gap}: {m} vs {want} ({rel:.4})");
            // Closed-form oracle written out independently of `theta_mean`.
            let direct = (-(gap as f64) * (params.sigma2_ap + params.sigma2_ue) / 2.0).exp();
            assert!((want - direct).abs() < 1e-15);
        }
    }
}

#[test]
fn cross_ap_drift_correlation_loses_the_ue_term() {
    // E{Theta_kl Theta_km^*} over n - lambda steps: the common UE walk
    // cancels, leaving exp(-(n - lambda) sigma2_ap).
    let params = PhaseParams::from_db(-20.0, -15.0).unwrap();
    let lambda = 3;
    for n in [4, 13, 50] {
        let m = mean_over_paths(&params, 2, 50, 11, |p| p.drift(0, 0, lambda, n) * p.drift(0, 1, lambda, n).conj());
        let want = (-((n - lambda) as f64) * params.sigma2_ap).exp();
        assert!((m - want).norm() / want < 0.01, "n {n}: {m} vs {want}");
    }
}

#[test]
fn increments_have_the_configured_variance() {
    let params = PhaseParams::<f64>::new(2e-3, 5e-3).unwrap();
    let tau_c = 20;
    let (mut s_ue, mut s_ap, mut count) = (0.0f64, 0.0f64, 0.0f64);
    for s in 0..SAMPLES / 10 {
        let p = sample_phase_paths(&params, 1, 1, tau_c, &mut substream(3, Domain::Phase, s)).unwrap();
        for n in 1..=tau_c {
            s_ue += (p.phi_ue[0][n] - p.phi_ue[0][n - 1]).powi(2);
            s_ap += (p.phi_ap[0][n] - p.phi_ap[0][n - 1]).powi(2);
            count += 1.0;
        }
    }
    assert!((s_ue / count / 5e-3 - 1.0).abs() < 0.01);
    assert!((s_ap / count / 2e-3 - 1.0).abs() < 0.01);
}

#[test]
fn initial_phase_is_uniform() {
    // E{e^{j phi[0]}} = 0 and E{e^{j 2 phi[0]}} = 0 for a uniform start.
    let params = PhaseParams::zero();
    let m1 = mean_over_paths(&params, 1, 1, 5, |p| cfmimo::scalar::cis(p.phi_ue[0][0]));
    let m2 = mean_over_paths(&params, 1, 1, 5, |p| cfmimo::scalar::cis(2.0 * p.phi_ap[0][0]));
    assert!(m1.norm() < 0.01 && m2.norm() < 0.01, "{m1} {m2}");
}
