//! Network layout, large-scale fading, spatial correlation and propagation
//! delay offsets.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, Table};
use crate::scalar::{cis, Cx, Real};

/// Speed of light (m/s).
pub const SPEED_OF_LIGHT: f64 = 2.997_924_58e8;

/// Three-slope path-loss model: `-L - 35 log10(d)` beyond `d1`,
/// `-L - 15 log10(d1) - 20 log10(d)` between `d0` and `d1`, flat below `d0`.
/// Distances enter the logarithms in kilometres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathLossParams {
    pub d0_m: f64,
    pub d1_m: f64,
    pub reference_loss_db: f64,
    /// Log-normal shadowing standard deviation in dB; 0 disables it.
    pub shadow_std_db: f64,
}

impl PathLossParams {
    /// COST-231 Hata reference loss (dB) for carrier `f_c_hz`, AP height
    /// `h_ap_m` and UE height `h_ue_m`.
    pub fn hata_reference_loss_db(f_c_hz: f64, h_ap_m: f64, h_ue_m: f64) -> f64 {
        let f = f_c_hz / 1e6;
        let lf = f.log10();
        46.3 + 33.9 * lf - 13.82 * h_ap_m.log10() - (1.1 * lf - 0.7) * h_ue_m + (1.56 * lf - 0.8)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d0_m > 0.0 && self.d0_m < self.d1_m) {
            return Err(Error::config(
                "scene.pathloss.d0_m",
                format!("need 0 < d0_m < d1_m, got d0_m={} d1_m={}", self.d0_m, self.d1_m),
            ));
        }
        if !self.reference_loss_db.is_finite() {
            return Err(Error::config("scene.pathloss.reference_loss_db", "must be finite"));
        }
        if !(self.shadow_std_db >= 0.0) {
            return Err(Error::config("scene.pathloss.shadow_std_db", "must be >= 0"));
        }
        Ok(())
    }

    /// Path loss in dB (a negative number) at distance `d_m`.
    pub fn path_loss_db(&self, d_m: f64) -> f64 {
        let km = |x: f64| (x / 1000.0).log10();
        let d = d_m.max(0.0);
        if d > self.d1_m {
            -self.reference_loss_db - 35.0 * km(d)
        } else if d > self.d0_m {
            -self.reference_loss_db - 15.0 * km(self.d1_m) - 20.0 * km(d)
        } else {
            -self.reference_loss_db - 15.0 * km(self.d1_m) - 20.0 * km(self.d0_m)
        }
    }
}

impl Default for PathLossParams {
    fn default() -> Self {
        Self {
            d0_m: 10.0,
            d1_m: 50.0,
            reference_loss_db: Self::hata_reference_loss_db(2e9, 15.0, 1.65),
            shadow_std_db: 0.0,
        }
    }
}

/// Spatial correlation model for the per-link channel covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CorrelationModel {
    /// `R = beta I_N`.
    ScaledIdentity,
    /// Half-wavelength ULA with Gaussian angular spread around the
    /// geometric azimuth.
    LocalScattering { angular_std_deg: f64 },
}

impl Default for CorrelationModel {
    fn default() -> Self {
        CorrelationModel::ScaledIdentity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub num_aps: usize,
    pub num_ues: usize,
    pub antennas: usize,
    pub side_m: f64,
    pub pathloss: PathLossParams,
    pub correlation: CorrelationModel,
    pub wrap_around: bool,
    pub min_distance_m: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            num_aps: 100,
            num_ues: 20,
            antennas: 2,
            side_m: 500.0,
            pathloss: PathLossParams::default(),
            correlation: CorrelationModel::ScaledIdentity,
            wrap_around: false,
            min_distance_m: 1.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_aps == 0 {
            return Err(Error::config("scene.num_aps", "must be >= 1"));
        }
        if self.num_ues == 0 {
            return Err(Error::config("scene.num_ues", "must be >= 1"));
        }
        if self.antennas == 0 {
            return Err(Error::config("scene.antennas", "must be >= 1"));
        }
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return Err(Error::config("scene.side_m", "must be > 0"));
        }
        if !(self.min_distance_m > 0.0) {
            return Err(Error::config("scene.min_distance_m", "must be > 0"));
        }
        if let CorrelationModel::LocalScattering { angular_std_deg } = self.correlation {
            if !(angular_std_deg >= 0.0 && angular_std_deg.is_finite()) {
                return Err(Error::config(
                    "scene.correlation.angular_std_deg",
                    "must be finite and >= 0",
                ));
            }
        }
        self.pathloss.validate()
    }
}

/// A generated deployment. Per-link tables are indexed `(l, k)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NetworkScene<T> {
    pub antennas: usize,
    pub ap_pos: Vec<[T; 2]>,
    pub ue_pos: Vec<[T; 2]>,
    pub dist: Table<T>,
    pub beta: Table<T>,
    pub corr: Table<CMat<T>>,
    pub delta_t: Table<T>,
}

impl<T: Real> NetworkScene<T> {
    pub fn num_aps(&self) -> usize {
        self.ap_pos.len()
    }

    pub fn num_ues(&self) -> usize {
        self.ue_pos.len()
    }
}

/// Large-scale gain (linear) at distance `d_m`.
pub fn three_slope_beta<T: Real>(d_m: T, params: &PathLossParams) -> T {
    T::lit(10f64.powf(params.path_loss_db(d_m.to_f64_lossy()) / 10.0))
}

/// Steering vector of a half-wavelength ULA towards `angle` (rad).
fn steering<T: Real>(n: usize, angle: T) -> Vec<Cx<T>> {
    let s = angle.sin();
    (0..n).map(|m| cis(T::PI() * T::from_count(m) * s)).collect()
}

/// Quadrature half-width in standard deviations, and node count.
const LS_SPAN: f64 = 6.0;
const LS_NODES: usize = 1201;

/// Spatial correlation matrix with `trace = n * beta`.
pub fn correlation_matrix<T: Real>(
    beta: T,
    n: usize,
    model: &CorrelationModel,
    azimuth: T,
) -> Result<CMat<T>> {
    match *model {
        CorrelationModel::ScaledIdentity => Ok(CMat::scaled_identity(n, beta)),
        CorrelationModel::LocalScattering { angular_std_deg } => {
            let sd = T::lit(angular_std_deg.to_radians());
            let mut r = CMat::zeros(n);
            if sd == T::zero() {
                r = CMat::outer(&steering(n, azimuth), T::one());
            } else {
                // Positive-weight sum of rank-one terms, PSD by construction.
                let span = T::lit(LS_SPAN) * sd;
                let step = (span + span) / T::from_count(LS_NODES - 1);
                let mut wsum = T::zero();
                for q in 0..LS_NODES {
                    let delta = -span + step * T::from_count(q);
                    let z = delta / sd;
                    let mut w = (-(z * z) / T::lit(2.0)).exp();
                    if q == 0 || q == LS_NODES - 1 {
                        w = w / T::lit(2.0);
                    }
                    wsum = wsum + w;
                    r = &r + &CMat::outer(&steering(n, azimuth + delta), w);
                }
                r = r.scale(T::one() / wsum);
            }
            let tr = r.trace().re;
            let r = r.scale(beta * T::from_count(n) / tr).hermitian_part();
            let floor = -T::lit(1e-12) * beta;
            if r.min_eigenvalue() < floor {
                return Err(Error::Numerical(
                    "local-scattering correlation matrix is not PSD".into(),
                ));
            }
            Ok(r)
        }
    }
}

/// Per-UE arrival-time offsets `(d_lk - min_l' d_l'k) / c`.
pub fn delay_offsets<T: Real>(dist: &Table<T>) -> Table<T> {
    let c = T::lit(SPEED_OF_LIGHT);
    let mins: Vec<T> = (0..dist.cols())
        .map(|k| dist.column(k).copied().fold(T::infinity(), T::min))
        .collect();
    Table::from_fn(dist.rows(), dist.cols(), |l, k| (dist[(l, k)] - mins[k]) / c)
}

fn link_geometry(cfg: &SceneConfig, ap: [f64; 2], ue: [f64; 2]) -> (f64, f64) {
    let mut best = (f64::INFINITY, 0.0);
    let shifts: &[f64] = if cfg.wrap_around { &[-1.0, 0.0, 1.0] } else { &[0.0] };
    for &sx in shifts {
        for &sy in shifts {
            let dx = ue[0] + sx * cfg.side_m - ap[0];
            let dy = ue[1] + sy * cfg.side_m - ap[1];
            let d = dx.hypot(dy);
            if d < best.0 {
                best = (d, dy.atan2(dx));
            }
        }
    }
    (best.0.max(cfg.min_distance_m), best.1)
}

/// Draws AP and UE positions i.i.d. uniform over the square and derives
/// every per-link quantity. APs are drawn first, then UEs, then shadowing.
pub fn generate_scene<T: Real, R: Rng + ?Sized>(
    cfg: &SceneConfig,
    rng: &mut R,
) -> Result<NetworkScene<T>> {
    cfg.validate()?;
    let point = |rng: &mut R| [rng.random::<f64>() * cfg.side_m, rng.random::<f64>() * cfg.side_m];
    let aps: Vec<[f64; 2]> = (0..cfg.num_aps).map(|_| point(rng)).collect();
    let ues: Vec<[f64; 2]> = (0..cfg.num_ues).map(|_| point(rng)).collect();

    let geo = Table::from_fn(cfg.num_aps, cfg.num_ues, |l, k| link_geometry(cfg, aps[l], ues[k]));
    let dist = geo.map(|&(d, _)| T::lit(d));
    let mut beta = dist.map(|&d| three_slope_beta(d, &cfg.pathloss));
    if cfg.pathloss.shadow_std_db > 0.0 {
        for l in 0..cfg.num_aps {
            for k in 0..cfg.num_ues {
                let z: f64 = rng.sample(StandardNormal);
                let f = 10f64.powf(cfg.pathloss.shadow_std_db * z / 10.0);
                beta[(l, k)] = beta[(l, k)] * T::lit(f);
            }
        }
    }
    let corr = Table::try_from_fn(cfg.num_aps, cfg.num_ues, |l, k| {
        correlation_matrix(beta[(l, k)], cfg.antennas, &cfg.correlation, T::lit(geo[(l, k)].1))
    })?;
    let delta_t = delay_offsets(&dist);
    let to_t = |p: &[f64; 2]| [T::lit(p[0]), T::lit(p[1])];
    Ok(NetworkScene {
        antennas: cfg.antennas,
        ap_pos: aps.iter().map(to_t).collect(),
        ue_pos: ues.iter().map(to_t).collect(),
        dist,
        beta,
        corr,
        delta_t,
    })
}

/// Scene with every link at the same gain, no geometry and zero delays.
/// Used by geometry-free experiments.
pub fn uniform_scene<T: Real>(
    num_aps: usize,
    num_ues: usize,
    antennas: usize,
    beta: T,
) -> NetworkScene<T> {
    let zero = [T::zero(), T::zero()];
    NetworkScene {
        antennas,
        ap_pos: vec![zero; num_aps],
        ue_pos: vec![zero; num_ues],
        dist: Table::from_fn(num_aps, num_ues, |_, _| T::zero()),
        beta: Table::from_fn(num_aps, num_ues, |_, _| beta),
        corr: Table::from_fn(num_aps, num_ues, |_, _| CMat::scaled_identity(antennas, beta)),
        delta_t: Table::from_fn(num_aps, num_ues, |_, _| T::zero()),
    }
}
