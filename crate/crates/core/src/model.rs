//! System model: configuration, frame construction, target scenes and
//! the TIR correlation matrix.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::linalg::{c64, complex_gaussian, CMatrix, CVector, HermitianMatrix};

/// Tolerance on `S_p S_pᴴ = I` and on precoder power feasibility.
pub const PILOT_ORTHOGONALITY_TOL: f64 = 1e-12;
pub const POWER_FEASIBILITY_TOL: f64 = 1e-9;

/// Dimensions, powers and noise levels of one ISAC link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Transmit antennas `N_t`.
    pub n_tx: usize,
    /// Sensing receive antennas `N_r`.
    pub n_rx: usize,
    /// Antennas at the communication user `N_c`.
    pub n_ue: usize,
    /// Frame length `L = L_p + L_d`.
    pub frame_len: usize,
    pub pilot_len: usize,
    pub data_len: usize,
    /// Total pilot energy `P_p`.
    pub pilot_power: f64,
    /// Data power budget `P_d` on `Tr(W Wᴴ)`.
    pub data_power: f64,
    /// Sensing noise variance per entry.
    pub sensing_noise: f64,
    /// Communication noise variance per entry.
    pub comm_noise: f64,
}

impl Default for SystemConfig {
    /// Full-size simulation profile: 32 x 32 array, 4-antenna user,
    /// 320-symbol frame, 30 dB transmit SNR.
    fn default() -> Self {
        let data_power = 1000.0;
        Self {
            n_tx: 32,
            n_rx: 32,
            n_ue: 4,
            frame_len: 320,
            pilot_len: 64,
            data_len: 256,
            pilot_power: data_power * 64.0 / 256.0,
            data_power,
            sensing_noise: 1.0,
            comm_noise: 1.0,
        }
    }
}

impl SystemConfig {
    /// Config with unit noise, `P_d = 10^(snr_db/10)` and equal per-symbol
    /// power on pilots and data.
    pub fn with_equal_symbol_power(
        n_tx: usize,
        n_rx: usize,
        n_ue: usize,
        pilot_len: usize,
        data_len: usize,
        snr_db: f64,
    ) -> Self {
        let data_power = 10f64.powf(snr_db / 10.0);
        Self {
            n_tx,
            n_rx,
            n_ue,
            frame_len: pilot_len + data_len,
            pilot_len,
            data_len,
            pilot_power: equal_symbol_pilot_power(data_power, pilot_len, data_len),
            data_power,
            sensing_noise: 1.0,
            comm_noise: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IsacError::InvalidConfig(msg));
        if self.n_tx == 0 || self.n_rx == 0 || self.n_ue == 0 {
            return bad("antenna counts must be positive".into());
        }
        if self.frame_len != self.pilot_len + self.data_len {
            return bad(format!(
                "frame_len {} != pilot_len {} + data_len {}",
                self.frame_len, self.pilot_len, self.data_len
            ));
        }
        if self.pilot_len < self.n_tx {
            return bad(format!(
                "pilot_len {} must be at least n_tx {} for orthogonal pilots",
                self.pilot_len, self.n_tx
            ));
        }
        if self.data_len <= self.n_tx {
            return bad(format!(
                "data_len {} must exceed n_tx {}",
                self.data_len, self.n_tx
            ));
        }
        let positive = [
            ("data_power", self.data_power),
            ("sensing_noise", self.sensing_noise),
            ("comm_noise", self.comm_noise),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be finite and positive, got {v}"));
            }
        }
        if !(self.pilot_power.is_finite() && self.pilot_power >= 0.0) {
            return bad(format!(
                "pilot_power must be finite and nonnegative, got {}",
                self.pilot_power
            ));
        }
        Ok(())
    }

    /// `a = 1 / (N_r N_t σ_s²)`.
    pub fn a_coeff(&self) -> f64 {
        1.0 / (self.n_rx as f64 * self.n_tx as f64 * self.sensing_noise)
    }

    /// `1 / (N_r σ_s²)`, the weight of `X Xᴴ` in the LMMSE error.
    pub fn snr_weight(&self) -> f64 {
        1.0 / (self.n_rx as f64 * self.sensing_noise)
    }

    /// Diagonal contribution of the orthogonal pilots, `P_p / (N_t N_r σ_s²)`.
    pub fn pilot_loading(&self) -> f64 {
        self.pilot_power * self.a_coeff()
    }

    /// Fraction of the frame carrying data, `L_d / L`.
    pub fn rate_prefactor(&self) -> f64 {
        self.data_len as f64 / self.frame_len as f64
    }

    /// Degradation factor in the high-SNR limit, `1 - N_t / L_d`.
    pub fn high_snr_alpha(&self) -> f64 {
        1.0 - self.n_tx as f64 / self.data_len as f64
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * (self.data_power / self.sensing_noise).log10()
    }

    pub fn isotropic_covariance(&self) -> HermitianMatrix {
        HermitianMatrix::scaled_identity(self.n_tx, self.data_power / self.n_tx as f64)
    }
}

/// Pilot energy giving pilots and data the same energy per symbol.
pub fn equal_symbol_pilot_power(data_power: f64, pilot_len: usize, data_len: usize) -> f64 {
    data_power * pilot_len as f64 / data_len as f64
}

/// One point target seen by the array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Target {
    /// Direction in radians, `|angle| < π/2`.
    pub angle: f64,
    /// `E|α_k|²`.
    pub reflect_power: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetScene {
    pub targets: Vec<Target>,
    /// Element spacing in wavelengths.
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Diagonal loading relative to `Tr(R)/N_t`.
    #[serde(default = "default_loading")]
    pub loading: f64,
}

fn default_spacing() -> f64 {
    0.5
}

fn default_loading() -> f64 {
    1e-3
}

impl TargetScene {
    pub fn new(targets: Vec<Target>) -> Result<Self> {
        let scene = Self {
            targets,
            spacing: default_spacing(),
            loading: default_loading(),
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(IsacError::InvalidConfig(
                "target scene needs at least one target".into(),
            ));
        }
        for t in &self.targets {
            if !(t.angle.abs() < PI / 2.0) {
                return Err(IsacError::InvalidConfig(format!(
                    "target angle {} outside (-pi/2, pi/2)",
                    t.angle
                )));
            }
            if !(t.reflect_power >= 0.0) {
                return Err(IsacError::InvalidConfig(format!(
                    "negative reflection power {}",
                    t.reflect_power
                )));
            }
        }
        if !(self.loading >= 0.0) || !(self.spacing > 0.0) {
            return Err(IsacError::InvalidConfig(
                "spacing must be positive and loading nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One frame: orthogonal pilots, Gaussian data and the interleaving order.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub pilot_syms: CMatrix,
    pub data_syms: CMatrix,
    /// Column `j` of the transmitted block is column `perm[j]` of `[S_p, S_d]`.
    pub perm: Vec<usize>,
}

impl Frame {
    pub fn new(pilot_syms: CMatrix, data_syms: CMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = pilot_syms.nrows();
        if data_syms.nrows() != n {
            return Err(IsacError::DimensionMismatch {
                context: "Frame::new",
                expected: format!("{n} data rows"),
                got: format!("{}", data_syms.nrows()),
            });
        }
        let gram = &pilot_syms * pilot_syms.adjoint();
        let err = (gram - CMatrix::identity(n, n)).norm();
        if err >= PILOT_ORTHOGONALITY_TOL {
            return Err(IsacError::InvalidConfig(format!(
                "pilots are not orthonormal (error {err:.3e})"
            )));
        }
        let len = pilot_syms.ncols() + data_syms.ncols();
        if !is_permutation(&perm, len) {
            return Err(IsacError::InvalidConfig(format!(
                "perm is not a bijection on 0..{len}"
            )));
        }
        Ok(Self {
            pilot_syms,
            data_syms,
            perm,
        })
    }

    /// Frame with DFT pilots, seeded Gaussian data and a seeded random interleaving.
    pub fn random(cfg: &SystemConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Self::new(
            generate_pilots(cfg)?,
            sample_data_symbols(cfg, seed),
            random_permutation(cfg.frame_len, seed ^ 0x5eed_9e37_79b9_7f4a),
        )
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

fn is_permutation(perm: &[usize], len: usize) -> bool {
    if perm.len() != len {
        return false;
    }
    let mut seen = vec![false; len];
    for &p in perm {
        if p >= len || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Data precoder `W` (`N_t x N_t`).
#[derive(Clone, Debug, PartialEq)]
pub struct Precoder {
    pub w: CMatrix,
}

impl Precoder {
    pub fn new(w: CMatrix) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(IsacError::DimensionMismatch {
                context: "Precoder::new",
                expected: "square precoder".into(),
                got: format!("{}x{}", w.nrows(), w.ncols()),
            });
        }
        Ok(Self { w })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            w: CMatrix::zeros(n, n),
        }
    }

    /// `W = sqrt(P_d / N_t) I`, the isotropic precoder.
    pub fn isotropic(cfg: &SystemConfig) -> Self {
        let s = (cfg.data_power / cfg.n_tx as f64).sqrt();
        Self {
            w: CMatrix::identity(cfg.n_tx, cfg.n_tx) * c64(s, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// `Tr(W Wᴴ) = ‖W‖_F²`.
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    pub fn is_feasible(&self, power_cap: f64) -> bool {
        self.power() <= power_cap + POWER_FEASIBILITY_TOL
    }

    /// `M = W Wᴴ`.
    pub fn covariance(&self) -> HermitianMatrix {
        HermitianMatrix::gram(&self.w)
    }
}

/// ULA steering vector, entry `n` equal to `exp(j 2π d n sin θ)`.
pub fn steering_vector(theta: f64, n_elem: usize, spacing: f64) -> CVector {
    let phase = 2.0 * PI * spacing * theta.sin();
    CVector::from_fn(n_elem, |n, _| {
        let p = phase * n as f64;
        c64(p.cos(), p.sin())
    })
}

/// `H_s = Σ_k α_k b(θ_k) a(θ_k)ᴴ`.
pub fn build_tir(scene: &TargetScene, cfg: &SystemConfig, alphas: &[num_complex::Complex64]) -> Result<CMatrix> {
    scene.validate()?;
    if alphas.len() != scene.targets.len() {
        return Err(IsacError::DimensionMismatch {
            context: "build_tir",
            expected: format!("{} reflection coefficients", scene.targets.len()),
            got: format!("{}", alphas.len()),
        });
    }
    let mut h = CMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for (t, &alpha) in scene.targets.iter().zip(alphas) {
        let b = steering_vector(t.angle, cfg.n_rx, scene.spacing);
        let a = steering_vector(t.angle, cfg.n_tx, scene.spacing);
        h += &b * a.adjoint() * alpha;
    }
    Ok(h)
}

/// `R = E[H_sᴴ H_s] + δ I` for independent zero-mean reflection coefficients,
/// `δ = loading · Tr(R₀) / N_t`.
pub fn tir_correlation(scene: &TargetScene, cfg: &SystemConfig) -> Result<HermitianMatrix> {
    scene.validate()?;
    let n = cfg.n_tx;
    let mut r = CMatrix::zeros(n, n);
    for t in &scene.targets {
        let a = steering_vector(t.angle, n, scene.spacing);
        r += &a * a.adjoint() * c64(cfg.n_rx as f64 * t.reflect_power, 0.0);
    }
    let unloaded = HermitianMatrix::symmetrized(r);
    let delta = scene.loading * unloaded.trace() / n as f64;
    Ok(unloaded.add(&HermitianMatrix::scaled_identity(n, delta)))
}

/// Uncorrelated unit-power TIR prior, `R = I`.
pub fn identity_correlation(n_tx: usize) -> HermitianMatrix {
    HermitianMatrix::identity(n_tx)
}

/// First `n_tx` rows of the unitary `pilot_len`-point DFT, scaled so that
/// `S_p S_pᴴ = I`.
pub fn dft_pilots(n_tx: usize, pilot_len: usize) -> Result<CMatrix> {
    if pilot_len < n_tx {
        return Err(IsacError::InvalidConfig(format!(
            "cannot build {n_tx} orthogonal pilots of length {pilot_len}"
        )));
    }
    let scale = 1.0 / (pilot_len as f64).sqrt();
    Ok(CMatrix::from_fn(n_tx, pilot_len, |k, l| {
        // Reduce the exponent modulo the length to keep the phase argument small.
        let idx = (k * l) % pilot_len;
        let p = -2.0 * PI * idx as f64 / pilot_len as f64;
        c64(scale * p.cos(), scale * p.sin())
    }))
}

pub fn generate_pilots(cfg: &SystemConfig) -> Result<CMatrix> {
    dft_pilots(cfg.n_tx, cfg.pilot_len)
}

/// `N_t x L_d` matrix of i.i.d. `CN(0, 1/L_d)` symbols, fixed by `seed`.
pub fn sample_data_symbols(cfg: &SystemConfig, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    complex_gaussian(cfg.n_tx, cfg.data_len, 1.0 / cfg.data_len as f64, &mut rng)
}

pub fn random_permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut rng);
    perm
}

/// `N_c x N_t` channel with i.i.d. `CN(0, 1)` entries.
pub fn comm_channel(cfg: &SystemConfig, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    complex_gaussian(cfg.n_ue, cfg.n_tx, 1.0, &mut rng)
}

/// `X = [sqrt(P_p/N_t) S_p, W S_d]` with columns interleaved by `frame.perm`.
pub fn assemble_transmit(frame: &Frame, w: &Precoder, cfg: &SystemConfig) -> Result<CMatrix> {
    let n = cfg.n_tx;
    let (sp, sd) = (&frame.pilot_syms, &frame.data_syms);
    if sp.shape() != (n, cfg.pilot_len)
        || sd.shape() != (n, cfg.data_len)
        || w.w.shape() != (n, n)
        || frame.perm.len() != cfg.frame_len
    {
        return Err(IsacError::DimensionMismatch {
            context: "assemble_transmit",
            expected: format!(
                "S_p {n}x{}, S_d {n}x{}, W {n}x{n}, perm {}",
                cfg.pilot_len, cfg.data_len, cfg.frame_len
            ),
            got: format!(
                "S_p {:?}, S_d {:?}, W {:?}, perm {}",
                sp.shape(),
                sd.shape(),
                w.w.shape(),
                frame.perm.len()
            ),
        });
    }
    let xp = sp * c64((cfg.pilot_power / n as f64).sqrt(), 0.0);
    let xd = &w.w * sd;
    let lp = cfg.pilot_len;
    let mut x = CMatrix::zeros(n, cfg.frame_len);
    for (j, &src) in frame.perm.iter().enumerate() {
        if src < lp {
            x.set_column(j, &xp.column(src));
        } else {
            x.set_column(j, &xd.column(src - lp));
        }
    }
    Ok(x)
}

/// Formats one complex number as `re+imj` (or `re-imj`).
pub fn format_complex(z: num_complex::Complex64) -> String {
    if z.im.is_sign_negative() {
        format!("{}-{}j", z.re, -z.im)
    } else {
        format!("{}+{}j", z.re, z.im)
    }
}

/// Parses the `re+imj` cell format produced by [`format_complex`].
pub fn parse_complex(cell: &str) -> Result<num_complex::Complex64> {
    let s = cell.trim();
    let body = s
        .strip_suffix('j')
        .ok_or_else(|| IsacError::InvalidConfig(format!("complex cell `{s}` lacks trailing j")))?;
    // The imaginary sign is the last +/- that is not part of an exponent.
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(|| IsacError::InvalidConfig(format!("complex cell `{s}` has no imaginary part")))?;
    let parse = |t: &str| {
        t.parse::<f64>()
            .map_err(|e| IsacError::InvalidConfig(format!("bad number `{t}` in `{s}`: {e}")))
    };
    Ok(c64(parse(&body[..split])?, parse(&body[split..])?))
}

/// Row-major CSV with one `re+imj` cell per entry.
pub fn matrix_to_csv(m: &CMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format_complex(m[(i, j)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<CMatrix> {
    let rows: Vec<Vec<num_complex::Complex64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(parse_complex).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let n_rows = rows.len();
    let n_cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(IsacError::InvalidConfig("ragged CSV matrix".into()));
    }
    Ok(CMatrix::from_fn(n_rows, n_cols, |i, j| rows[i][j]))
}
