//! JSON experiment specifications.

use std::fmt;
use std::path::{Path, PathBuf};

use isac_core::linalg::c64;
use isac_core::model::{identity_correlation, matrix_from_csv, tir_correlation};
use isac_core::sca::{ScaOptions, StepRule};
use isac_core::{CMatrix, HermitianMatrix, SystemConfig, TargetScene};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::rows::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Evaluate,
    Optimize,
    SweepLd,
    SweepSnr,
    Tradeoff,
    Bench,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Evaluate => "evaluate",
            Self::Optimize => "optimize",
            Self::SweepLd => "sweep_ld",
            Self::SweepSnr => "sweep_snr",
            Self::Tradeoff => "tradeoff",
            Self::Bench => "bench",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// System parameters as written in a spec. Exactly one of `snr_db` and
/// `data_power` sets the data budget; `pilot_power` defaults to equal
/// per-symbol power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpec {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_ue: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_len: Option<usize>,
    /// Fixed frame length; required by `tradeoff`, where `L_p = L − L_d`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_power: Option<f64>,
    #[serde(default = "unit")]
    pub sensing_noise: f64,
    #[serde(default = "unit")]
    pub comm_noise: f64,
}

fn unit() -> f64 {
    1.0
}

/// Source of the target correlation `R` when no scene is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrelationSpec {
    Identity,
    /// Real and (optional) imaginary parts, row-major.
    Matrix {
        re: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        im: Vec<Vec<f64>>,
    },
    /// CSV file in the `re+imj` cell format.
    Csv(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridSpec {
    DataLen(Vec<usize>),
    SnrDb(Vec<f64>),
    NTx(Vec<usize>),
}

impl GridSpec {
    pub fn len(&self) -> usize {
        match self {
            Self::DataLen(v) => v.len(),
            Self::SnrDb(v) => v.len(),
            Self::NTx(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn name(&self) -> &'static str {
        match self {
            Self::DataLen(_) => "data_len",
            Self::SnrDb(_) => "snr_db",
            Self::NTx(_) => "n_tx",
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::DataLen(v) | Self::NTx(v) => v.iter().map(|&x| x as f64).collect(),
            Self::SnrDb(v) => v.clone(),
        }
    }
}

/// Optimizer settings; unset fields take the library defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_eps_sca")]
    pub eps_sca: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default = "default_eps_fpe")]
    pub eps_fpe: f64,
    #[serde(default)]
    pub step_rule: StepRule,
}

fn default_eps_sca() -> f64 {
    ScaOptions::default().eps_sca
}

fn default_max_outer() -> usize {
    ScaOptions::default().max_outer
}

fn default_eps_fpe() -> f64 {
    ScaOptions::default().eps_fpe
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            eps_sca: default_eps_sca(),
            max_outer: default_max_outer(),
            eps_fpe: default_eps_fpe(),
            step_rule: StepRule::default(),
        }
    }
}

impl SolverSpec {
    pub fn options(&self) -> ScaOptions {
        ScaOptions {
            eps_sca: self.eps_sca,
            max_outer: self.max_outer,
            eps_fpe: self.eps_fpe,
            step_rule: self.step_rule,
            ..ScaOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub config: ConfigSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<TargetScene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub rate_fractions: Vec<f64>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Timed runs per cell for `bench`.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_mc_samples() -> usize {
    isac_core::metrics::DEFAULT_MC_SAMPLES
}

fn default_repeats() -> usize {
    5
}

/// One grid coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridPoint {
    Base,
    DataLen(usize),
    SnrDb(f64),
    NTx(usize),
}

impl GridPoint {
    /// Value written to the `x` column.
    pub fn x(&self) -> f64 {
        match *self {
            Self::Base => 0.0,
            Self::DataLen(v) | Self::NTx(v) => v as f64,
            Self::SnrDb(v) => v,
        }
    }
}

impl ExperimentSpec {
    /// Grid points in row order. Kinds without a grid run once at the base config.
    pub fn points(&self) -> Vec<GridPoint> {
        match &self.grid {
            None => vec![GridPoint::Base],
            Some(GridSpec::DataLen(v)) => v.iter().map(|&x| GridPoint::DataLen(x)).collect(),
            Some(GridSpec::SnrDb(v)) => v.iter().map(|&x| GridPoint::SnrDb(x)).collect(),
            Some(GridSpec::NTx(v)) => v.iter().map(|&x| GridPoint::NTx(x)).collect(),
        }
    }

    /// System configuration of one grid cell.
    pub fn cell_config(&self, point: GridPoint) -> Result<SystemConfig> {
        let c = &self.config;
        let invalid = |m: String| BenchError::InvalidSpec(m);
        let (mut n_tx, mut n_rx) = (c.n_tx, c.n_rx);
        let mut data_len = c.data_len;
        let mut pilot_len = c.pilot_len;
        let mut snr_db = c.snr_db;
        match point {
            GridPoint::Base => {}
            GridPoint::DataLen(ld) => data_len = Some(ld),
            GridPoint::SnrDb(s) => snr_db = Some(s),
            GridPoint::NTx(n) => {
                let scale = |v: usize| ((v * n + c.n_tx / 2) / c.n_tx).max(1);
                n_rx = scale(c.n_rx);
                pilot_len = pilot_len.map(scale);
                data_len = data_len.map(scale);
                n_tx = n;
            }
        }
        if self.kind == ExperimentKind::Tradeoff {
            let l = c
                .frame_len
                .ok_or_else(|| invalid("tradeoff needs config.frame_len".into()))?;
            let ld = data_len.ok_or_else(|| invalid("missing data length".into()))?;
            if ld >= l {
                return Err(invalid(format!("data_len {ld} must be below frame_len {l}")));
            }
            pilot_len = Some(l - ld);
        }
        let pilot_len = pilot_len.ok_or_else(|| invalid("config.pilot_len is required".into()))?;
        let data_len = data_len.ok_or_else(|| invalid("config.data_len is required".into()))?;
        let data_power = match (snr_db, c.data_power) {
            (Some(s), _) if !s.is_finite() => return Err(invalid(format!("snr_db {s} is not finite"))),
            (Some(s), _) => c.sensing_noise * 10f64.powf(s / 10.0),
            (None, Some(p)) => p,
            (None, None) => return Err(invalid("one of config.snr_db and config.data_power is required".into())),
        };
        if !(data_power.is_finite() && data_power > 0.0) {
            return Err(invalid(format!("data power {data_power} must be positive and finite")));
        }
        let pilot_power = c
            .pilot_power
            .unwrap_or_else(|| isac_core::model::equal_symbol_pilot_power(data_power, pilot_len, data_len));
        let cfg = SystemConfig {
            n_tx,
            n_rx,
            n_ue: c.n_ue,
            frame_len: pilot_len + data_len,
            pilot_len,
            data_len,
            pilot_power,
            data_power,
            sensing_noise: c.sensing_noise,
            comm_noise: c.comm_noise,
        };
        cfg.validate().map_err(|e| invalid(format!("at {point:?}: {e}")))?;
        Ok(cfg)
    }

    /// Target correlation for a configuration.
    pub fn correlation_for(&self, cfg: &SystemConfig) -> Result<HermitianMatrix> {
        if let Some(scene) = &self.scene {
            return Ok(tir_correlation(scene, cfg)?);
        }
        let m = match self.correlation.as_ref().unwrap_or(&CorrelationSpec::Identity) {
            CorrelationSpec::Identity => return Ok(identity_correlation(cfg.n_tx)),
            CorrelationSpec::Matrix { re, im } => matrix_from_parts(re, im)?,
            CorrelationSpec::Csv(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
                matrix_from_csv(&text)?
            }
        };
        if m.nrows() != cfg.n_tx || m.ncols() != cfg.n_tx {
            return Err(BenchError::InvalidSpec(format!(
                "correlation is {}x{}, expected {2}x{2}",
                m.nrows(),
                m.ncols(),
                cfg.n_tx
            )));
        }
        let r = HermitianMatrix::new(m)?;
        if r.min_eigenvalue() <= 0.0 {
            return Err(BenchError::InvalidSpec("correlation must be positive definite".into()));
        }
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        use ExperimentKind as K;
        let invalid = |m: String| Err(BenchError::InvalidSpec(m));
        if self.scene.is_some() && self.correlation.is_some() {
            return invalid("give either scene or correlation, not both".into());
        }
        let wanted = match self.kind {
            K::SweepLd | K::Tradeoff => Some("data_len"),
            K::SweepSnr => Some("snr_db"),
            K::Bench => Some("n_tx"),
            K::Evaluate | K::Optimize => None,
        };
        match (&self.grid, wanted) {
            (Some(g), _) if g.is_empty() => return invalid("grid must be nonempty".into()),
            (Some(g), Some(w)) if g.name() != w => {
                return invalid(format!("{} needs a {w} grid, got {}", self.kind, g.name()))
            }
            (Some(GridSpec::NTx(_)), None) => {
                return invalid(format!("{} does not accept an n_tx grid", self.kind))
            }
            (None, Some(w)) => return invalid(format!("{} needs a {w} grid", self.kind)),
            _ => {}
        }
        if let Some(GridSpec::SnrDb(v)) = &self.grid {
            if let Some(s) = v.iter().find(|s| !s.is_finite()) {
                return invalid(format!("snr_db grid value {s} is not finite"));
            }
        }
        if let Some(f) = self.rate_fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return invalid(format!("rate fraction {f} is outside (0, 1]"));
        }
        if matches!(self.kind, K::Optimize | K::Tradeoff | K::Bench) && self.rate_fractions.is_empty() {
            return invalid(format!("{} needs at least one rate fraction", self.kind));
        }
        if self.kind == K::Bench && self.repeats < 2 {
            return invalid(format!("bench needs at least 2 repeats for a median, got {}", self.repeats));
        }
        if self.mc_samples == 1 {
            return invalid("mc_samples must be 0 or at least 2".into());
        }
        let s = &self.solver;
        if !(s.eps_sca > 0.0 && s.eps_fpe > 0.0) || s.max_outer == 0 {
            return invalid("solver tolerances must be positive and max_outer at least 1".into());
        }
        for p in self.points() {
            let cfg = self.cell_config(p)?;
            self.correlation_for(&cfg)?;
        }
        Ok(())
    }
}

fn matrix_from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
    let n = re.len();
    let square = |rows: &[Vec<f64>]| rows.iter().all(|r| r.len() == n);
    if !square(re) || !(im.is_empty() || (im.len() == n && square(im))) {
        return Err(BenchError::InvalidSpec("correlation matrix must be square".into()));
    }
    Ok(CMatrix::from_fn(n, n, |i, j| {
        c64(re[i][j], if im.is_empty() { 0.0 } else { im[i][j] })
    }))
}

/// Parses and validates a spec from JSON text. `origin` only labels errors.
pub fn parse_spec(text: &str, origin: &Path) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = serde_json::from_str(text).map_err(|e| BenchError::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ExperimentSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    parse_spec(&text, path)
}

pub fn save_spec(spec: &ExperimentSpec, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(spec)?;
    text.push('\n');
    write_atomic(path.as_ref(), text.as_bytes())
}
