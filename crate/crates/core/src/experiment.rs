//! Experiment configuration and the figure/validation runners behind the
//! command-line tool.
//!
//! A config file (TOML, or JSON) is merged onto the experiment's base
//! defaults and then checked against the full schema, so a file only needs
//! the keys it changes. Unknown keys are rejected with their path. The
//! `phase` and `scene.correlation` tables replace the defaults wholesale
//! instead of merging, because their variants are mutually exclusive.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::chanest::{assign_pilots, EstimationStats};
use crate::error::{Error, Result};
use crate::linalg::Table;
use crate::mcsim::{estimate_sinr, validate, McConfig, ValidationReport};
use crate::netmodel::{delay_offsets, generate_scene, uniform_scene, NetworkScene, SceneConfig};
use crate::phase::{DelayPhases, OscillatorSpec, PhaseParams};
use crate::rng::{derive_seed, substream_raw, Domain};
use crate::scalar::{db_to_linear, dbm_to_watt};
use crate::sedf::{se_from_sinr, Mode, SeScenario};

/// Bumped whenever a CSV layout changes.
pub const SCHEMA_VERSION: u32 = 1;

type Scene = NetworkScene<f64>;

/// Stream tag for layouts of the main scene config; Fig. 4 settings use
/// `SETTING_SCENE_TAG + index`.
const SCENE_TAG: u64 = Domain::Scene as u64;
const SETTING_SCENE_TAG: u64 = 0x100;

fn db_axis(from: f64, to: f64, step: f64) -> Vec<f64> {
    let n = ((to - from) / step).round() as usize;
    (0..=n).map(|i| from + step * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self { carrier_hz: 2e9, bandwidth_hz: 20e6 }
    }
}

/// Operating-point oscillator phase: variances in dB or oscillator
/// constants (with carrier and symbol time from `radio`), never both.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_ap_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2_ue_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_ue: Option<f64>,
}

impl PhaseConfig {
    pub fn from_db(ap: f64, ue: f64) -> Self {
        Self { sigma2_ap_db: Some(ap), sigma2_ue_db: Some(ue), ..Default::default() }
    }

    pub fn resolve(&self, radio: &RadioConfig) -> Result<PhaseParams<f64>> {
        let has_db = self.sigma2_ap_db.is_some() || self.sigma2_ue_db.is_some();
        let has_osc = self.c_ap.is_some() || self.c_ue.is_some();
        match (has_db, has_osc) {
            (true, true) => Err(Error::config(
                "phase",
                "give either sigma2_ap_db/sigma2_ue_db or c_ap/c_ue, not both",
            )),
            (false, false) => Ok(PhaseParams::zero()),
            (true, false) => {
                let ap = self.sigma2_ap_db.ok_or_else(|| Error::config("phase.sigma2_ap_db", "missing"))?;
                let ue = self.sigma2_ue_db.ok_or_else(|| Error::config("phase.sigma2_ue_db", "missing"))?;
                PhaseParams::from_db(ap, ue)
            }
            (false, true) => PhaseParams::from_oscillator(OscillatorSpec {
                c_ap: self.c_ap.ok_or_else(|| Error::config("phase.c_ap", "missing"))?,
                c_ue: self.c_ue.ok_or_else(|| Error::config("phase.c_ue", "missing"))?,
                f_c: radio.carrier_hz,
                t_s: 1.0 / radio.bandwidth_hz,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotConfig {
    pub tau_p: usize,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { tau_p: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub p_dbm: f64,
    pub p_d_dbm: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { p_dbm: 23.0, p_d_dbm: 23.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma2_dbm: f64,
    pub sigma2_d_dbm: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { sigma2_dbm: -96.0, sigma2_d_dbm: -96.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockConfig {
    pub tau_c: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self { tau_c: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub trials: usize,
    /// Defaults to `lambda`, `lambda + 10` and `tau_c`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instants: Option<Vec<usize>>,
    pub modes: Vec<Mode>,
    pub tol_rel: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self { trials: 20_000, instants: None, modes: Mode::ALL.to_vec(), tol_rel: 0.03 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NmseMode {
    /// Every link gets the same pilot SNR `p tr(R) / (N sigma^2)`.
    FixedSnr,
    /// Large-scale fading from generated layouts.
    Geometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmseSweep {
    pub mode: NmseMode,
    pub snr_db: f64,
    /// Pilot lengths to compare; defaults to `K/2`, `K`, `2K`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_p: Option<Vec<usize>>,
    pub sigma2_db: Vec<f64>,
}

impl Default for NmseSweep {
    fn default() -> Self {
        Self { mode: NmseMode::FixedSnr, snr_db: 30.0, tau_p: None, sigma2_db: db_axis(-50.0, 0.0, 5.0) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CdfConfig {
    /// Layouts (taken from the start of the scene sequence) that also get a
    /// Monte Carlo run.
    pub mc_scenes: usize,
    pub mc_trials: usize,
    /// Monte Carlo SINR is sampled every `instant_stride` instants and
    /// interpolated linearly in between.
    pub instant_stride: usize,
}

impl Default for CdfConfig {
    fn default() -> Self {
        Self { mc_scenes: 2, mc_trials: 500, instant_stride: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SumSeSweep {
    pub sigma2_db: Vec<f64>,
    /// Multiplier on the geometric arrival-time offsets.
    pub delay_scale: f64,
}

impl Default for SumSeSweep {
    fn default() -> Self {
        Self { sigma2_db: db_axis(-50.0, -20.0, 5.0), delay_scale: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhaseGrid {
    pub sigma2_ap_db: Vec<f64>,
    pub sigma2_ue_db: Vec<f64>,
    /// `(num_aps, antennas)` pairs.
    pub settings: Vec<(usize, usize)>,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self {
            sigma2_ap_db: db_axis(-50.0, -20.0, 5.0),
            sigma2_ue_db: db_axis(-50.0, -20.0, 5.0),
            settings: vec![(100, 2), (200, 4)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub num_scenes: usize,
    pub out_dir: PathBuf,
    pub scene: SceneConfig,
    pub radio: RadioConfig,
    pub phase: PhaseConfig,
    pub pilot: PilotConfig,
    pub powers: PowerConfig,
    pub noise: NoiseConfig,
    pub block: BlockConfig,
    pub mc: McSection,
    pub fig1: NmseSweep,
    pub fig2: CdfConfig,
    pub fig3: SumSeSweep,
    pub fig4: PhaseGrid,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            num_scenes: 50,
            out_dir: PathBuf::from("out"),
            scene: SceneConfig::default(),
            radio: RadioConfig::default(),
            phase: PhaseConfig::from_db(-25.0, -25.0),
            pilot: PilotConfig::default(),
            powers: PowerConfig::default(),
            noise: NoiseConfig::default(),
            block: BlockConfig::default(),
            mc: McSection::default(),
            fig1: NmseSweep::default(),
            fig2: CdfConfig::default(),
            fig3: SumSeSweep::default(),
            fig4: PhaseGrid::default(),
        }
    }
}

/// Linear-unit quantities derived from a config.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub p: f64,
    pub p_d: f64,
    pub sigma2: f64,
    pub sigma2_d: f64,
    pub t_s: f64,
    pub phase: PhaseParams<f64>,
}

impl ExperimentConfig {
    /// Small scenario used by `validate`: 10 APs, 4 UEs, 2 antennas, two
    /// pilots, 50-instant blocks, -30 dB phase variances.
    pub fn desk() -> Self {
        Self {
            num_scenes: 1,
            scene: SceneConfig { num_aps: 10, num_ues: 4, antennas: 2, ..Default::default() },
            phase: PhaseConfig::from_db(-30.0, -30.0),
            pilot: PilotConfig { tau_p: 2 },
            block: BlockConfig { tau_c: 50 },
            ..Default::default()
        }
    }

    /// Reads `path` (TOML, or JSON by extension) and merges it onto `base`.
    /// A JSON metadata sidecar written by a previous run is accepted too;
    /// its embedded config is used.
    pub fn load(path: &Path, base: &ExperimentConfig) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        Self::parse(&text, is_json, base)
    }

    pub fn parse(text: &str, is_json: bool, base: &ExperimentConfig) -> Result<Self> {
        let mut user: Value = if is_json {
            serde_json::from_str(text)?
        } else {
            let t: toml::Table = toml::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
            serde_json::to_value(t)?
        };
        if let Some(obj) = user.as_object() {
            if obj.contains_key("schema_version") && obj.contains_key("config") {
                user = obj["config"].clone();
            }
        }
        let mut merged = serde_json::to_value(base)?;
        merge(&mut merged, user, "");
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(merged).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.num_scenes == 0 {
            return Err(Error::config("num_scenes", "must be >= 1"));
        }
        if !(self.radio.carrier_hz > 0.0) {
            return Err(Error::config("radio.carrier_hz", "must be > 0"));
        }
        if !(self.radio.bandwidth_hz > 0.0) {
            return Err(Error::config("radio.bandwidth_hz", "must be > 0"));
        }
        self.phase.resolve(&self.radio)?;
        if self.pilot.tau_p == 0 {
            return Err(Error::config("pilot.tau_p", "must be >= 1"));
        }
        if self.pilot.tau_p >= self.block.tau_c {
            return Err(Error::config("pilot.tau_p", "must be < block.tau_c"));
        }
        for (name, v) in [
            ("powers.p_dbm", self.powers.p_dbm),
            ("powers.p_d_dbm", self.powers.p_d_dbm),
            ("noise.sigma2_dbm", self.noise.sigma2_dbm),
            ("noise.sigma2_d_dbm", self.noise.sigma2_d_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::config(name, "must be finite"));
            }
        }
        if self.mc.trials == 0 {
            return Err(Error::config("mc.trials", "must be >= 1"));
        }
        if self.mc.modes.is_empty() {
            return Err(Error::config("mc.modes", "at least one mode required"));
        }
        if !(self.mc.tol_rel >= 0.0) {
            return Err(Error::config("mc.tol_rel", "must be >= 0"));
        }
        let lambda = self.pilot.tau_p + 1;
        if let Some(inst) = &self.mc.instants {
            if inst.is_empty() {
                return Err(Error::config("mc.instants", "at least one instant required"));
            }
            if let Some(n) = inst.iter().find(|&&n| n < lambda || n > self.block.tau_c) {
                return Err(Error::config(
                    "mc.instants",
                    format!("instant {n} outside {lambda}..={}", self.block.tau_c),
                ));
            }
        }
        if self.fig1.sigma2_db.is_empty() {
            return Err(Error::config("fig1.sigma2_db", "sweep axis is empty"));
        }
        if let Some(tp) = &self.fig1.tau_p {
            if tp.is_empty() || tp.contains(&0) {
                return Err(Error::config("fig1.tau_p", "pilot lengths must be >= 1"));
            }
        }
        if !self.fig1.snr_db.is_finite() {
            return Err(Error::config("fig1.snr_db", "must be finite"));
        }
        if self.fig2.instant_stride == 0 {
            return Err(Error::config("fig2.instant_stride", "must be >= 1"));
        }
        if self.fig2.mc_scenes > 0 && self.fig2.mc_trials == 0 {
            return Err(Error::config("fig2.mc_trials", "must be >= 1"));
        }
        if self.fig3.sigma2_db.is_empty() {
            return Err(Error::config("fig3.sigma2_db", "sweep axis is empty"));
        }
        if !(self.fig3.delay_scale >= 0.0) {
            return Err(Error::config("fig3.delay_scale", "must be >= 0"));
        }
        if self.fig4.sigma2_ap_db.is_empty() || self.fig4.sigma2_ue_db.is_empty() {
            return Err(Error::config("fig4", "grid axes must be non-empty"));
        }
        if self.fig4.settings.iter().any(|&(l, n)| l == 0 || n == 0) {
            return Err(Error::config("fig4.settings", "num_aps and antennas must be >= 1"));
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<Resolved> {
        Ok(Resolved {
            p: dbm_to_watt(self.powers.p_dbm),
            p_d: dbm_to_watt(self.powers.p_d_dbm),
            sigma2: dbm_to_watt(self.noise.sigma2_dbm),
            sigma2_d: dbm_to_watt(self.noise.sigma2_d_dbm),
            t_s: 1.0 / self.radio.bandwidth_hz,
            phase: self.phase.resolve(&self.radio)?,
        })
    }

    pub fn lambda(&self) -> usize {
        self.pilot.tau_p + 1
    }

    /// Configured Monte Carlo instants, or `lambda`, `lambda + 10`, `tau_c`.
    pub fn mc_instants(&self) -> Vec<usize> {
        if let Some(v) = &self.mc.instants {
            return v.clone();
        }
        let l = self.lambda();
        let mut v = vec![l, (l + 10).min(self.block.tau_c), self.block.tau_c];
        v.dedup();
        v
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        let json = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(json.as_bytes())))
    }

    /// Layout `index` of the main scene sequence.
    pub fn scene(&self, index: usize) -> Result<Scene> {
        generate_scene(&self.scene, &mut substream_raw(self.seed, SCENE_TAG, index as u64))
    }

    /// Estimation statistics and SE scenario for `scene`.
    pub fn scenario(&self, scene: &Scene, phase: &PhaseParams<f64>, delays: DelayModel) -> Result<SeScenario<f64>> {
        let r = self.resolve()?;
        let plan = assign_pilots(scene.num_ues(), self.pilot.tau_p)?;
        let stats = EstimationStats::build(&scene.corr, &plan, phase, &vec![r.p; scene.num_ues()], r.sigma2)?;
        let delays = delays.build(scene, r.t_s);
        SeScenario::new(stats, delays, r.p_d, r.sigma2_d, self.block.tau_c)
    }
}

/// How delay phases are assigned to a layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DelayModel {
    Aligned,
    /// Arrival-time offsets from geometry, scaled.
    Geometric(f64),
}

impl DelayModel {
    pub fn build(self, scene: &Scene, t_s: f64) -> DelayPhases<f64> {
        match self {
            DelayModel::Aligned => DelayPhases::aligned(scene.num_aps(), scene.num_ues()),
            DelayModel::Geometric(scale) => {
                let dt = delay_offsets(&scene.dist).map(|&x| x * scale);
                DelayPhases::from_offsets(&dt, t_s)
            }
        }
    }
}

fn merge(base: &mut Value, user: Value, path: &str) {
    match (base, user) {
        (Value::Object(b), Value::Object(u)) => {
            for (k, v) in u {
                let child = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                let replace = matches!(child.as_str(), "phase" | "scene.correlation");
                match b.get_mut(&k) {
                    Some(slot) if !replace => merge(slot, v, &child),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, u) => *b = u,
    }
}

/// One CSV cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Float(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(v) => Some(*v as f64),
            Cell::Float(v) => Some(*v),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(v) => Some(v),
            _ => None,
        }
    }
}

/// Run metadata written next to every CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: u32,
    pub experiment: String,
    pub columns: Vec<String>,
    pub config: Value,
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

impl Meta {
    pub fn new(experiment: &str, columns: &[&str], cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            config: serde_json::to_value(cfg)?,
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").to_owned(),
        })
    }
}

/// Tabular experiment output.
#[derive(Clone, Debug, PartialEq)]
pub struct FigureData {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub meta: Meta,
}

impl FigureData {
    fn new(name: &str, columns: &[&str], cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            name: name.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            meta: Meta::new(name, columns, cfg)?,
        })
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Usage(format!("no column `{name}` in {}", self.name)))
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| r[j].as_f64().ok_or_else(|| Error::Usage(format!("column `{name}` is not numeric"))))
            .collect()
    }

    /// Rows whose text/numeric cells equal the given values.
    pub fn filter(&self, conditions: &[(&str, Cell)]) -> Result<Vec<&Vec<Cell>>> {
        let idx = conditions
            .iter()
            .map(|(c, v)| Ok((self.column_index(c)?, v)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|r| idx.iter().all(|(j, v)| cell_eq(&r[*j], v)))
            .collect())
    }

    /// Single numeric value of `column` in the row matching `conditions`.
    pub fn lookup(&self, conditions: &[(&str, Cell)], column: &str) -> Result<f64> {
        let j = self.column_index(column)?;
        let rows = self.filter(conditions)?;
        match rows.as_slice() {
            [r] => r[j].as_f64().ok_or_else(|| Error::Usage(format!("column `{column}` is not numeric"))),
            _ => Err(Error::Usage(format!("{} rows match {conditions:?} in {}", rows.len(), self.name))),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| c.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    /// Writes `<name>.csv` and `<name>.meta.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.name));
        let meta_path = dir.join(format!("{}.meta.json", self.name));
        fs::write(&csv_path, self.to_csv()?)?;
        fs::write(&meta_path, serde_json::to_string_pretty(&self.meta)?)?;
        Ok((csv_path, meta_path))
    }
}

fn cell_eq(a: &Cell, b: &Cell) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn sort_f64(v: &mut [f64]) {
    v.sort_by(|a, b| a.total_cmp(b));
}

fn phase_db(ap: f64, ue: f64) -> Result<PhaseParams<f64>> {
    PhaseParams::from_db(ap, ue)
}

fn scenes(cfg: &ExperimentConfig, count: usize) -> Result<Vec<Scene>> {
    (0..count).into_par_iter().map(|s| cfg.scene(s)).collect()
}

/// NMSE of channel estimation against a common AP/UE phase variance for
/// several pilot lengths.
pub fn run_nmse_sweep(cfg: &ExperimentConfig) -> Result<FigureData> {
    cfg.validate()?;
    let r = cfg.resolve()?;
    let k = cfg.scene.num_ues;
    let tau_ps = cfg
        .fig1
        .tau_p
        .clone()
        .unwrap_or_else(|| vec![(k / 2).max(1), k, 2 * k]);
    let layouts: Vec<Table<crate::linalg::CMat<f64>>> = match cfg.fig1.mode {
        NmseMode::FixedSnr => {
            let beta = db_to_linear(cfg.fig1.snr_db) * r.sigma2 / r.p;
            vec![uniform_scene::<f64>(cfg.scene.num_aps, k, cfg.scene.antennas, beta).corr]
        }
        NmseMode::Geometry => scenes(cfg, cfg.num_scenes)?.into_iter().map(|s| s.corr).collect(),
    };
    let columns = ["sigma2_db", "tau_p", "nmse_mean", "nmse_p05", "nmse_p95"];
    let mut fig = FigureData::new("fig1", &columns, cfg)?;
    for &tau_p in &tau_ps {
        let plan = assign_pilots(k, tau_p)?;
        let base = layouts
            .iter()
            .map(|corr| EstimationStats::build(corr, &plan, &PhaseParams::zero(), &vec![r.p; k], r.sigma2))
            .collect::<Result<Vec<_>>>()?;
        let rows = cfg
            .fig1
            .sigma2_db
            .par_iter()
            .map(|&db| {
                let ph = phase_db(db, db)?;
                let mut vals = Vec::new();
                for st in &base {
                    let st = st.with_phase(&ph)?;
                    for l in 0..st.num_aps() {
                        for u in 0..k {
                            vals.push(st.nmse(u, l)?);
                        }
                    }
                }
                sort_f64(&mut vals);
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                Ok(vec![
                    db.into(),
                    tau_p.into(),
                    mean.into(),
                    quantile(&vals, 0.05).into(),
                    quantile(&vals, 0.95).into(),
                ])
            })
            .collect::<Result<Vec<_>>>()?;
        for row in rows {
            fig.push(row);
        }
    }
    Ok(fig)
}

/// The three Fig. 2 cases: label, phase, delay model.
fn cdf_cases(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, PhaseParams<f64>, DelayModel)>> {
    Ok(vec![
        ("ideal", PhaseParams::zero(), DelayModel::Aligned),
        ("oscillator", cfg.resolve()?.phase, DelayModel::Aligned),
        ("delay-du", PhaseParams::zero(), DelayModel::Geometric(1.0)),
    ])
}

/// SE of one UE from Monte Carlo SINR sampled at `instants` (ascending,
/// first `lambda`, last `tau_c`), interpolated linearly in between.
fn interpolated_se(instants: &[usize], sinr: &[f64], tau_c: usize) -> Result<f64> {
    let lambda = instants[0];
    let mut path = Vec::with_capacity(tau_c - lambda + 1);
    for w in 0..instants.len() - 1 {
        let (a, b) = (instants[w], instants[w + 1]);
        for n in a..b {
            let f = (n - a) as f64 / (b - a) as f64;
            path.push(sinr[w] + (sinr[w + 1] - sinr[w]) * f);
        }
    }
    path.push(sinr[instants.len() - 1]);
    se_from_sinr(&path, tau_c, lambda)
}

/// Per-UE SE distribution across layouts for the ideal, oscillator-only
/// and delay-only (DU precoding) cases, closed form and Monte Carlo.
pub fn run_se_cdf(cfg: &ExperimentConfig) -> Result<FigureData> {
    cfg.validate()?;
    let cases = cdf_cases(cfg)?;
    let layouts = scenes(cfg, cfg.num_scenes)?;
    let lambda = cfg.lambda();
    let tau_c = cfg.block.tau_c;
    let mut instants: Vec<usize> = (lambda..=tau_c).step_by(cfg.fig2.instant_stride).collect();
    if *instants.last().expect("lambda <= tau_c") != tau_c {
        instants.push(tau_c);
    }

    // (case, source) -> [(scene, ue, se)]
    let mut groups: Vec<(&str, &str, Vec<(usize, usize, f64)>)> = Vec::new();
    for (ci, (label, phase, delays)) in cases.iter().enumerate() {
        let per_scene = layouts
            .par_iter()
            .enumerate()
            .map(|(s, scene)| {
                let sc = cfg.scenario(scene, phase, *delays)?;
                let closed = sc.evaluate(Mode::CO_DU)?;
                let mc = if s < cfg.fig2.mc_scenes {
                    let mc_cfg = McConfig {
                        trials: cfg.fig2.mc_trials,
                        seed: derive_seed(cfg.seed, Domain::Misc, (ci * cfg.num_scenes + s) as u64),
                        instants: instants.clone(),
                        modes: vec![Mode::CO_DU],
                    };
                    let est = estimate_sinr(&sc, &mc_cfg)?;
                    let se = (0..sc.num_ues())
                        .map(|k| {
                            let path: Vec<f64> = instants
                                .iter()
                                .map(|&n| est.sinr(Mode::CO_DU, k, n).expect("instant sampled").sinr)
                                .collect();
                            interpolated_se(&instants, &path, tau_c)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(se)
                } else {
                    None
                };
                Ok((closed.se, mc))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut closed = Vec::new();
        let mut mc = Vec::new();
        for (s, (c, m)) in per_scene.into_iter().enumerate() {
            closed.extend(c.into_iter().enumerate().map(|(k, v)| (s, k, v)));
            if let Some(m) = m {
                mc.extend(m.into_iter().enumerate().map(|(k, v)| (s, k, v)));
            }
        }
        groups.push((label, "closed", closed));
        if !mc.is_empty() {
            groups.push((label, "mc", mc));
        }
    }

    let columns = ["case", "source", "scene", "ue", "se", "cdf"];
    let mut fig = FigureData::new("fig2", &columns, cfg)?;
    for (case, source, mut vals) in groups {
        vals.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let n = vals.len() as f64;
        for (rank, (s, k, se)) in vals.into_iter().enumerate() {
            fig.push(vec![case.into(), source.into(), s.into(), k.into(), se.into(), ((rank + 1) as f64 / n).into()]);
        }
    }
    Ok(fig)
}

/// Modes reported by the sum-SE sweep.
pub const SWEEP_MODES: [Mode; 3] = [Mode::CO_DU, Mode::CO_DF, Mode::NC_DU];

/// Layout-averaged sum SE against a common AP/UE phase variance.
pub fn run_sum_se_sweep(cfg: &ExperimentConfig) -> Result<FigureData> {
    cfg.validate()?;
    let layouts = scenes(cfg, cfg.num_scenes)?;
    let axis = &cfg.fig3.sigma2_db;
    let delays = DelayModel::Geometric(cfg.fig3.delay_scale);
    // [scene][point][mode]
    let per_scene = layouts
        .par_iter()
        .map(|scene| {
            let base = cfg.scenario(scene, &PhaseParams::zero(), delays)?;
            axis.iter()
                .map(|&db| {
                    let sc = base.with_phase(&phase_db(db, db)?)?;
                    SWEEP_MODES
                        .iter()
                        .map(|&m| Ok(sc.evaluate(m)?.sum_se()))
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let columns = ["sigma2_db", "mode", "precoder", "sum_se"];
    let mut fig = FigureData::new("fig3", &columns, cfg)?;
    let n = layouts.len() as f64;
    for (p, &db) in axis.iter().enumerate() {
        for (mi, m) in SWEEP_MODES.iter().enumerate() {
            let mean = per_scene.iter().map(|s| s[p][mi]).sum::<f64>() / n;
            fig.push(vec![db.into(), m.transmission_label().into(), m.precoder_label().into(), mean.into()]);
        }
    }
    Ok(fig)
}

/// Layout-averaged coherent DU sum SE over an AP/UE phase-variance grid
/// for each `(num_aps, antennas)` setting.
pub fn run_phase_grid(cfg: &ExperimentConfig) -> Result<FigureData> {
    cfg.validate()?;
    let g = &cfg.fig4;
    let columns = ["num_aps", "antennas", "sigma2_ap_db", "sigma2_ue_db", "sum_se"];
    let mut fig = FigureData::new("fig4", &columns, cfg)?;
    let points: Vec<(f64, f64)> = g
        .sigma2_ap_db
        .iter()
        .flat_map(|&a| g.sigma2_ue_db.iter().map(move |&u| (a, u)))
        .collect();
    for (si, &(num_aps, antennas)) in g.settings.iter().enumerate() {
        let scene_cfg = SceneConfig { num_aps, antennas, ..cfg.scene.clone() };
        let per_scene = (0..cfg.num_scenes)
            .into_par_iter()
            .map(|s| {
                let mut rng = substream_raw(cfg.seed, SETTING_SCENE_TAG + si as u64, s as u64);
                let scene = generate_scene(&scene_cfg, &mut rng)?;
                let base = cfg.scenario(&scene, &PhaseParams::zero(), DelayModel::Aligned)?;
                points
                    .iter()
                    .map(|&(a, u)| Ok(base.with_phase(&phase_db(a, u)?)?.evaluate(Mode::CO_DU)?.sum_se()))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let n = cfg.num_scenes as f64;
        for (p, &(a, u)) in points.iter().enumerate() {
            let mean = per_scene.iter().map(|s| s[p]).sum::<f64>() / n;
            fig.push(vec![num_aps.into(), antennas.into(), a.into(), u.into(), mean.into()]);
        }
    }
    Ok(fig)
}

/// Deliberate closed-form corruption, used to check that validation can
/// fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Corruption {
    /// Scale every closed-form numerator (hence SINR) by 1.5.
    Numerator,
}

/// Closed forms against the Monte Carlo oracle on layout 0 of `cfg`.
pub fn run_validation(cfg: &ExperimentConfig, corrupt: Option<Corruption>) -> Result<(ValidationReport, FigureData)> {
    cfg.validate()?;
    let r = cfg.resolve()?;
    let scene = cfg.scene(0)?;
    let sc = cfg.scenario(&scene, &r.phase, DelayModel::Geometric(1.0))?;
    let mc_cfg = McConfig {
        trials: cfg.mc.trials,
        seed: cfg.seed,
        instants: cfg.mc_instants(),
        modes: cfg.mc.modes.clone(),
    };
    let est = estimate_sinr(&sc, &mc_cfg)?;
    let closed = cfg
        .mc
        .modes
        .iter()
        .map(|&m| {
            let res = sc.evaluate(m)?;
            match corrupt {
                Some(Corruption::Numerator) => res.scaled(1.5),
                None => Ok(res),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let report = validate(&closed, &est, cfg.mc.tol_rel)?;
    let columns = ["ue", "instant", "mode", "closed", "mc", "stderr", "rel_err", "pass", "inconclusive"];
    let mut fig = FigureData::new("validate", &columns, cfg)?;
    for e in &report.entries {
        fig.push(vec![
            e.ue.into(),
            e.instant.into(),
            e.mode.as_str().into(),
            e.closed.into(),
            e.mc.into(),
            e.stderr.into(),
            e.rel_err.into(),
            e.pass.into(),
            e.inconclusive.into(),
        ]);
    }
    Ok((report, fig))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            num_scenes: 2,
            scene: SceneConfig { num_aps: 6, num_ues: 4, antennas: 2, ..Default::default() },
            pilot: PilotConfig { tau_p: 2 },
            block: BlockConfig { tau_c: 30 },
            mc: McSection { trials: 200, ..Default::default() },
            fig1: NmseSweep { sigma2_db: vec![-40.0, -20.0, -5.0], ..Default::default() },
            fig2: CdfConfig { mc_scenes: 1, mc_trials: 100, instant_stride: 7 },
            fig3: SumSeSweep { sigma2_db: vec![-50.0, -35.0, -20.0], delay_scale: 1.0 },
            fig4: PhaseGrid {
                sigma2_ap_db: vec![-50.0, -20.0],
                sigma2_ue_db: vec![-50.0, -20.0],
                settings: vec![(6, 2), (8, 2)],
            },
            ..Default::default()
        }
    }

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().validate().unwrap();
        ExperimentConfig::desk().validate().unwrap();
        let r = ExperimentConfig::default().resolve().unwrap();
        assert!((r.p - 0.199_526_231_496_887_96).abs() < 1e-15);
        assert!((r.t_s - 5e-8).abs() < 1e-22);
        assert_eq!(ExperimentConfig::desk().mc_instants(), vec![3, 13, 50]);
    }

    #[test]
    fn partial_file_merges_onto_base() {
        let cfg = ExperimentConfig::parse("seed = 9\n[scene]\nnum_aps = 7\n", false, &ExperimentConfig::desk()).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.scene.num_aps, 7);
        assert_eq!(cfg.scene.num_ues, 4);
        assert_eq!(cfg.block.tau_c, 50);
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = ExperimentConfig::parse("[scene]\nnum_apz = 3\n", false, &ExperimentConfig::default()).unwrap_err();
        match err {
            Error::Config { field, reason } => {
                assert!(field.starts_with("scene"), "{field}");
                assert!(reason.contains("num_apz"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
        let err = ExperimentConfig::parse("[block]\ntau_c = \"x\"\n", false, &ExperimentConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "block.tau_c"), "{err:?}");
    }

    #[test]
    fn phase_forms_are_exclusive() {
        let cfg = ExperimentConfig::parse("[phase]\nc_ap = 1e-21\nc_ue = 2e-21\n", false, &ExperimentConfig::default()).unwrap();
        let ph = cfg.resolve().unwrap().phase;
        assert!(ph.oscillator.is_some());
        assert!(ph.sigma2_ue > ph.sigma2_ap);
        let err = ExperimentConfig::parse(
            "[phase]\nc_ap = 1e-21\nc_ue = 2e-21\nsigma2_ap_db = -30.0\n",
            false,
            &ExperimentConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "phase"));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = ExperimentConfig::default();
        for (text, field) in [
            ("[pilot]\ntau_p = 200\n", "pilot.tau_p"),
            ("[pilot]\ntau_p = 0\n", "pilot.tau_p"),
            ("num_scenes = 0\n", "num_scenes"),
            ("[mc]\ntrials = 0\n", "mc.trials"),
            ("[mc]\ninstants = [5]\n", "mc.instants"),
            ("[scene]\nnum_ues = 0\n", "scene.num_ues"),
        ] {
            match ExperimentConfig::parse(text, false, &base) {
                Err(Error::Config { field: f, .. }) => assert_eq!(f, field, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            ExperimentConfig::parse("[mc]\nmodes = [\"co-xx\"]\n", false, &base),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn json_and_sidecar_round_trip() {
        let cfg = tiny();
        let json = serde_json::to_string(&cfg).unwrap();
        let back = ExperimentConfig::parse(&json, true, &ExperimentConfig::default()).unwrap();
        assert_eq!(back, cfg);
        let fig = run_sum_se_sweep(&cfg).unwrap();
        let meta = serde_json::to_string(&fig.meta).unwrap();
        let again = ExperimentConfig::parse(&meta, true, &ExperimentConfig::default()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(run_sum_se_sweep(&again).unwrap().to_csv().unwrap(), fig.to_csv().unwrap());
        assert_eq!(fig.meta.config_hash, cfg.hash().unwrap());
    }

    #[test]
    fn nmse_sweep_shape_and_trend() {
        let cfg = tiny();
        let fig = run_nmse_sweep(&cfg).unwrap();
        assert_eq!(fig.rows.len(), 3 * 3);
        for tp in [2usize, 4, 8] {
            let rows = fig.filter(&[("tau_p", tp.into())]).unwrap();
            let means: Vec<f64> = rows.iter().map(|r| r[2].as_f64().unwrap()).collect();
            assert!(means.windows(2).all(|w| w[1] >= w[0]));
            for r in rows {
                let (m, lo, hi) = (r[2].as_f64().unwrap(), r[3].as_f64().unwrap(), r[4].as_f64().unwrap());
                assert!((0.0..=1.0).contains(&m) && lo <= m && m <= hi);
            }
        }
    }

    #[test]
    fn nmse_zero_phase_limit() {
        let mut cfg = tiny();
        cfg.fig1.sigma2_db = vec![f64::NEG_INFINITY];
        cfg.fig1.tau_p = Some(vec![4]);
        let fig = run_nmse_sweep(&cfg).unwrap();
        let m = fig.f64_column("nmse_mean").unwrap()[0];
        assert!((m - (1.0 - 1000.0 / 1001.0)).abs() < 1e-9, "{m}");
    }

    #[test]
    fn cdf_cases_and_monotone_cdf() {
        let cfg = tiny();
        let fig = run_se_cdf(&cfg).unwrap();
        let ideal = fig.filter(&[("case", "ideal".into()), ("source", "closed".into())]).unwrap();
        let delay = fig.filter(&[("case", "delay-du".into()), ("source", "closed".into())]).unwrap();
        assert_eq!(ideal.len(), 2 * 4);
        let se = |rows: &[&Vec<Cell>]| rows.iter().map(|r| r[4].as_f64().unwrap()).collect::<Vec<_>>();
        assert_eq!(se(&ideal), se(&delay));
        let cdf: Vec<f64> = ideal.iter().map(|r| r[5].as_f64().unwrap()).collect();
        assert!(cdf.windows(2).all(|w| w[1] > w[0]) && *cdf.last().unwrap() == 1.0);
        assert_eq!(fig.filter(&[("case", "oscillator".into()), ("source", "mc".into())]).unwrap().len(), 4);
    }

    #[test]
    fn interpolation_is_exact_for_linear_paths() {
        let inst = [11usize, 20, 40, 50];
        let f = |n: usize| 0.5 + 0.01 * n as f64;
        let path: Vec<f64> = inst.iter().map(|&n| f(n)).collect();
        let se = interpolated_se(&inst, &path, 50).unwrap();
        let want = se_from_sinr(&(11..=50).map(f).collect::<Vec<_>>(), 50, 11).unwrap();
        assert!((se - want).abs() < 1e-14);
    }

    #[test]
    fn grid_and_sweep_layout() {
        let cfg = tiny();
        let g = run_phase_grid(&cfg).unwrap();
        assert_eq!(g.rows.len(), 2 * 4);
        let v = g
            .lookup(&[("num_aps", 6usize.into()), ("sigma2_ap_db", (-50.0).into()), ("sigma2_ue_db", (-20.0).into())], "sum_se")
            .unwrap();
        assert!(v > 0.0);
        let s = run_sum_se_sweep(&cfg).unwrap();
        assert_eq!(s.rows.len(), 3 * 3);
        assert_eq!(s.columns, ["sigma2_db", "mode", "precoder", "sum_se"]);
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let fig = run_sum_se_sweep(&tiny()).unwrap();
        let (csv_path, meta_path) = fig.write(dir.path()).unwrap();
        let text = fs::read_to_string(csv_path).unwrap();
        assert!(text.starts_with("sigma2_db,mode,precoder,sum_se\n-50,coherent,du,"));
        let meta: Meta = serde_json::from_str(&fs::read_to_string(meta_path).unwrap()).unwrap();
        assert_eq!(meta.schema_version, SCHEMA_VERSION);
        assert_eq!(meta.seed, 1);
    }

    #[test]
    fn validation_runs_and_detects_corruption() {
        let mut cfg = ExperimentConfig::desk();
        cfg.mc.trials = 4000;
        let (good, fig) = run_validation(&cfg, None).unwrap();
        assert_eq!(fig.rows.len(), good.entries.len());
        assert_eq!(good.entries.len(), 4 * 4 * 3);
        let (bad, _) = run_validation(&cfg, Some(Corruption::Numerator)).unwrap();
        assert_eq!(bad.verdict, crate::mcsim::Verdict::Fail);
    }
}
