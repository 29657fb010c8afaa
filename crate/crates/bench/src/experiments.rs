//! Experiment drivers. Each grid cell is independent; rows come out in grid
//! order whatever order the cells finish in.

use std::path::{Path, PathBuf};
use std::time::Instant;

use isac_core::convex::{solve_high_snr_problem, BarrierParams, ConstraintSet};
use isac_core::metrics::{
    comm_rate, elmmse_asymptotic_with, DEFAULT_MAX_FPE_ITER, elmmse_high_snr, elmmse_lower_bound, elmmse_monte_carlo,
    pilot_only_mse,
};
use isac_core::model::{comm_channel, matrix_to_csv};
use isac_core::sca::{extract_precoder, sca_optimize_with, OptimizationTrace};
use isac_core::{CMatrix, HermitianMatrix, IsacError, SystemConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rows::{write_atomic, write_rows, ResultRow};
use crate::seeds::{derive_seed, Stream};
use crate::spec::{ExperimentKind, ExperimentSpec, GridPoint};

/// Seeds and derived quantities of one grid cell, kept in the metadata sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMeta {
    pub x: f64,
    pub channel_seed: u64,
    pub mc_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub x: f64,
    pub method: String,
    pub trace: OptimizationTrace,
}

/// Least-squares slope of `log(wall time)` against `log(N_t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuntimeSlope {
    pub method: String,
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub cells: Vec<CellMeta>,
    pub traces: Vec<TraceRecord>,
    pub runtime_slopes: Vec<RuntimeSlope>,
}

#[derive(Clone, Debug)]
pub struct NamedMatrix {
    pub name: String,
    pub matrix: CMatrix,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub meta: RunMeta,
    /// Optimized covariances (only filled by `optimize`).
    pub matrices: Vec<NamedMatrix>,
}

impl ExperimentOutput {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| !r.is_ok())
    }

    /// Writes the CSV, a `<out>.meta.json` sidecar and one
    /// `<stem>.<name>.csv` per exported matrix. Returns the sidecar paths.
    pub fn write(&self, out: &Path) -> Result<Vec<PathBuf>> {
        write_rows(&self.rows, out)?;
        let meta_path = sidecar(out, "meta.json");
        let mut meta = serde_json::to_string_pretty(&self.meta)?;
        meta.push('\n');
        write_atomic(&meta_path, meta.as_bytes())?;
        let mut written = vec![meta_path];
        for m in &self.matrices {
            let path = sidecar(out, &format!("{}.csv", m.name));
            write_atomic(&path, matrix_to_csv(&m.matrix).as_bytes())?;
            written.push(path);
        }
        Ok(written)
    }
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

/// Method tag for a rate fraction, e.g. `sca_r0.95`.
pub fn fraction_tag(prefix: &str, fraction: f64) -> String {
    format!("{prefix}_r{fraction}")
}

/// Runs the experiment selected by `spec.kind`.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    match spec.kind {
        ExperimentKind::Evaluate => run_evaluate(spec),
        ExperimentKind::Optimize => run_optimize(spec),
        ExperimentKind::SweepLd => run_sweep_ld(spec),
        ExperimentKind::SweepSnr => run_sweep_snr(spec),
        ExperimentKind::Tradeoff => run_tradeoff(spec),
        ExperimentKind::Bench => run_bench(spec),
    }
}

struct Cell {
    index: usize,
    point: GridPoint,
    cfg: SystemConfig,
    r: HermitianMatrix,
    meta: CellMeta,
}

impl Cell {
    fn x(&self) -> f64 {
        self.point.x()
    }

    fn channel(&self) -> CMatrix {
        comm_channel(&self.cfg, self.meta.channel_seed)
    }
}

/// The channel seed depends only on `N_t`, so cells of equal size share one
/// channel and differ only in the swept parameter.
fn cells(spec: &ExperimentSpec) -> Result<Vec<Cell>> {
    spec.validate()?;
    spec.points()
        .into_iter()
        .enumerate()
        .map(|(index, point)| {
            let cfg = spec.cell_config(point)?;
            let r = spec.correlation_for(&cfg)?;
            let meta = CellMeta {
                x: point.x(),
                channel_seed: derive_seed(spec.seed, Stream::Channel, cfg.n_tx as u64),
                mc_seed: derive_seed(spec.seed, Stream::MonteCarlo, index as u64),
                rate_max: None,
                alpha: None,
            };
            Ok(Cell {
                index,
                point,
                cfg,
                r,
                meta,
            })
        })
        .collect()
}

#[derive(Default)]
struct CellResult {
    rows: Vec<ResultRow>,
    traces: Vec<TraceRecord>,
    matrices: Vec<NamedMatrix>,
}

fn timed<T>(f: impl FnOnce() -> isac_core::Result<T>) -> (isac_core::Result<T>, f64) {
    let clock = Instant::now();
    let out = f();
    (out, clock.elapsed().as_secs_f64())
}

fn metric_row(x: f64, method: &str, res: isac_core::Result<f64>, rate: Option<f64>, wall: f64) -> ResultRow {
    match res {
        Ok(j) => ResultRow::ok(x, method, j, rate, wall),
        Err(e) => ResultRow::failed(x, method, e, wall),
    }
}

fn finish(
    spec: &ExperimentSpec,
    mut cells: Vec<Cell>,
    eval: impl Fn(&mut Cell) -> CellResult + Sync + Send,
) -> ExperimentOutput {
    let results: Vec<CellResult> = cells.par_iter_mut().map(|c| eval(c)).collect();
    assemble(spec, cells, results, Vec::new())
}

fn assemble(
    spec: &ExperimentSpec,
    cells: Vec<Cell>,
    results: Vec<CellResult>,
    runtime_slopes: Vec<RuntimeSlope>,
) -> ExperimentOutput {
    let mut out = ExperimentOutput {
        rows: Vec::new(),
        meta: RunMeta {
            kind: spec.kind,
            seed: spec.seed,
            cells: cells.into_iter().map(|c| c.meta).collect(),
            traces: Vec::new(),
            runtime_slopes,
        },
        matrices: Vec::new(),
    };
    for r in results {
        out.rows.extend(r.rows);
        out.meta.traces.extend(r.traces);
        out.matrices.extend(r.matrices);
    }
    out
}

fn isotropic_metrics(spec: &ExperimentSpec, cell: &mut Cell, with_high_snr: bool) -> CellResult {
    let (x, cfg, r) = (cell.x(), &cell.cfg, &cell.r);
    let m = cfg.isotropic_covariance();
    let rate = comm_rate(&m, &cell.channel(), cfg);
    let mut res = CellResult::default();
    let (lb, t) = timed(|| elmmse_lower_bound(&m, r, cfg));
    res.rows.push(metric_row(x, "lower_bound", lb, Some(rate), t));
    let (ae, t) = timed(|| {
        elmmse_asymptotic_with(&m, r, cfg, spec.solver.eps_fpe, DEFAULT_MAX_FPE_ITER)
    });
    if let Ok((_, fp)) = &ae {
        cell.meta.alpha = Some(fp.alpha);
    }
    res.rows.push(metric_row(x, "asymptotic", ae.map(|(j, _)| j), Some(rate), t));
    if with_high_snr {
        let (hs, t) = timed(|| elmmse_high_snr(&m, r, cfg));
        res.rows.push(metric_row(x, "high_snr", hs, Some(rate), t));
    }
    if spec.mc_samples > 0 {
        let w = match extract_precoder(&m) {
            Ok(p) => p,
            Err(e) => {
                res.rows.push(ResultRow::failed(x, "monte_carlo", e, 0.0));
                return res;
            }
        };
        let (mc, t) = timed(|| elmmse_monte_carlo(&w, r, cfg, spec.mc_samples, cell.meta.mc_seed));
        res.rows.push(match mc {
            Ok(est) => ResultRow::ok(x, "monte_carlo", est.mean, Some(rate), t).with_stderr(est.std_error),
            Err(e) => ResultRow::failed(x, "monte_carlo", e, t),
        });
    }
    res
}

/// Lower bound, deterministic equivalent, high-SNR approximation, Monte Carlo
/// and the pilot-only error at the isotropic covariance.
pub fn run_evaluate(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cells = cells(spec)?;
    Ok(finish(spec, cells, |cell| {
        let mut res = isotropic_metrics(spec, cell, true);
        let (po, t) = timed(|| pilot_only_mse(&cell.r, &cell.cfg));
        res.rows.push(metric_row(cell.x(), "pilot_only", po, None, t));
        res
    }))
}

/// `J_lb`, `J_ae` and Monte Carlo at `M = (P_d/N_t) I` for each data length.
/// Rows are sorted by `L_d`.
pub fn run_sweep_ld(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cells = cells(spec)?;
    let mut out = finish(spec, cells, |cell| isotropic_metrics(spec, cell, false));
    out.rows.sort_by(|a, b| a.x.total_cmp(&b.x));
    Ok(out)
}

/// `J_ae` and its high-SNR form at `M = (P_d/N_t) I` for each SNR.
pub fn run_sweep_snr(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cells = cells(spec)?;
    Ok(finish(spec, cells, |cell| {
        let (x, cfg, r) = (cell.x(), &cell.cfg, &cell.r);
        let m = cfg.isotropic_covariance();
        let rate = comm_rate(&m, &cell.channel(), cfg);
        let mut res = CellResult::default();
        let (ae, t) = timed(|| {
            elmmse_asymptotic_with(&m, r, cfg, spec.solver.eps_fpe, DEFAULT_MAX_FPE_ITER)
        });
        if let Ok((_, fp)) = &ae {
            cell.meta.alpha = Some(fp.alpha);
        }
        res.rows.push(metric_row(x, "asymptotic", ae.map(|(j, _)| j), Some(rate), t));
        let (hs, t) = timed(|| elmmse_high_snr(&m, r, cfg));
        res.rows.push(metric_row(x, "high_snr", hs, Some(rate), t));
        res
    }))
}

struct Optimized {
    m: HermitianMatrix,
    j: f64,
    rate: f64,
    trace: Option<OptimizationTrace>,
}

fn optimize_sca(spec: &ExperimentSpec, cell: &Cell, h: &CMatrix, rate_min: f64) -> isac_core::Result<Optimized> {
    let opts = spec.solver.options();
    let (m, trace) = sca_optimize_with(&cell.r, h, &cell.cfg, rate_min, &opts)?;
    let rate = comm_rate(&m, h, &cell.cfg);
    let j = trace.final_objective();
    Ok(Optimized {
        m,
        j,
        rate,
        trace: Some(trace),
    })
}

fn optimize_high_snr(spec: &ExperimentSpec, cell: &Cell, cons: &ConstraintSet) -> isac_core::Result<Optimized> {
    let m = solve_high_snr_problem(&cell.r, cons, &cell.cfg, &BarrierParams::default())?;
    let (j, _) = elmmse_asymptotic_with(&m, &cell.r, &cell.cfg, spec.solver.eps_fpe, DEFAULT_MAX_FPE_ITER)?;
    let rate = cons.rate(m.as_matrix());
    Ok(Optimized {
        m,
        j,
        rate,
        trace: None,
    })
}

fn constraint_set(cell: &mut Cell, h: &CMatrix) -> isac_core::Result<(ConstraintSet, f64)> {
    let cons = ConstraintSet::new(&cell.cfg, h, 0.0)?;
    let (_, r_max) = cons.max_rate();
    cell.meta.rate_max = Some(r_max);
    Ok((cons, r_max))
}

fn push_optimized(res: &mut CellResult, x: f64, tag: String, out: isac_core::Result<Optimized>, wall: f64) -> Option<HermitianMatrix> {
    match out {
        Ok(o) => {
            let mut row = ResultRow::ok(x, tag.clone(), o.j, Some(o.rate), wall);
            if let Some(t) = o.trace.as_ref().filter(|t| !t.converged) {
                row.status = format!("failed: no convergence after {} iterations", t.iters);
            }
            res.rows.push(row);
            if let Some(trace) = o.trace {
                res.traces.push(TraceRecord { x, method: tag, trace });
            }
            Some(o.m)
        }
        Err(e) => {
            res.rows.push(ResultRow::failed(x, tag, e, wall));
            None
        }
    }
}

fn fail_all(res: &mut CellResult, x: f64, tags: &[String], err: &IsacError) {
    for tag in tags {
        res.rows.push(ResultRow::failed(x, tag.clone(), err, 0.0));
    }
}

/// SCA and high-SNR precoders for each rate fraction; optimized covariances are
/// exported alongside the CSV.
pub fn run_optimize(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cells = cells(spec)?;
    Ok(finish(spec, cells, |cell| {
        let x = cell.x();
        let h = cell.channel();
        let mut res = CellResult::default();
        let tags: Vec<String> = spec
            .rate_fractions
            .iter()
            .flat_map(|&f| [fraction_tag("sca", f), fraction_tag("high_snr", f)])
            .collect();
        let (cons, r_max) = match constraint_set(cell, &h) {
            Ok(c) => c,
            Err(e) => {
                fail_all(&mut res, x, &tags, &e);
                return res;
            }
        };
        for &f in &spec.rate_fractions {
            let rate_min = f * r_max;
            let (out, t) = timed(|| optimize_sca(spec, cell, &h, rate_min));
            let tag = fraction_tag("sca", f);
            if let Some(m) = push_optimized(&mut res, x, tag.clone(), out, t) {
                res.matrices.push(NamedMatrix {
                    name: format!("cell{}_{tag}", cell.index),
                    matrix: m.into_matrix(),
                });
            }
            let cons_f = cons.with_rate_min(rate_min);
            let (out, t) = timed(|| optimize_high_snr(spec, cell, &cons_f));
            let tag = fraction_tag("high_snr", f);
            if let Some(m) = push_optimized(&mut res, x, tag.clone(), out, t) {
                res.matrices.push(NamedMatrix {
                    name: format!("cell{}_{tag}", cell.index),
                    matrix: m.into_matrix(),
                });
            }
        }
        res
    }))
}

/// For each data length at fixed frame length: SCA at `R₀ = f R_max` for each
/// fraction `f`, then the pilot-only baseline. `x` is `L_d / L`.
pub fn run_tradeoff(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let cells = cells(spec)?;
    let mut out = finish(spec, cells, |cell| {
        let x = cell.x();
        let h = cell.channel();
        let mut res = CellResult::default();
        match constraint_set(cell, &h) {
            Ok((_, r_max)) => {
                for &f in &spec.rate_fractions {
                    let (o, t) = timed(|| optimize_sca(spec, cell, &h, f * r_max));
                    push_optimized(&mut res, x, fraction_tag("sca", f), o, t);
                }
            }
            Err(e) => {
                let tags: Vec<String> = spec.rate_fractions.iter().map(|&f| fraction_tag("sca", f)).collect();
                fail_all(&mut res, x, &tags, &e);
            }
        }
        let (po, t) = timed(|| pilot_only_mse(&cell.r, &cell.cfg));
        res.rows.push(metric_row(x, "pilot_only", po, None, t));
        res
    });
    let frame_len = spec.config.frame_len.unwrap_or(1) as f64;
    for row in &mut out.rows {
        row.x /= frame_len;
    }
    for rec in &mut out.meta.traces {
        rec.x /= frame_len;
    }
    for cell in &mut out.meta.cells {
        cell.x /= frame_len;
    }
    Ok(out)
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0 && sxy.is_finite()).then(|| sxy / sxx)
}

fn timed_repeats(repeats: usize, mut f: impl FnMut() -> isac_core::Result<Optimized>) -> (isac_core::Result<Optimized>, f64) {
    let mut times = Vec::with_capacity(repeats);
    let mut last = None;
    for _ in 0..repeats {
        let (out, t) = timed(&mut f);
        match out {
            Ok(o) => {
                times.push(t);
                last = Some(o);
            }
            Err(e) => return (Err(e), t),
        }
    }
    (last.ok_or(IsacError::InvalidConfig("no repeats".into())), median(&mut times))
}

/// Median wall time of SCA and of the high-SNR solver per array size. Cells run
/// one after another so timings do not compete for cores.
pub fn run_bench(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let mut cells = cells(spec)?;
    let mut results = Vec::with_capacity(cells.len());
    for cell in &mut cells {
        let x = cell.x();
        let h = cell.channel();
        let mut res = CellResult::default();
        match constraint_set(cell, &h) {
            Ok((cons, r_max)) => {
                for &f in &spec.rate_fractions {
                    let rate_min = f * r_max;
                    let (o, t) = timed_repeats(spec.repeats, || optimize_sca(spec, cell, &h, rate_min));
                    push_optimized(&mut res, x, fraction_tag("sca", f), o, t);
                    let cons_f = cons.with_rate_min(rate_min);
                    let (o, t) = timed_repeats(spec.repeats, || optimize_high_snr(spec, cell, &cons_f));
                    push_optimized(&mut res, x, fraction_tag("high_snr", f), o, t);
                }
            }
            Err(e) => {
                let tags: Vec<String> = spec
                    .rate_fractions
                    .iter()
                    .flat_map(|&f| [fraction_tag("sca", f), fraction_tag("high_snr", f)])
                    .collect();
                fail_all(&mut res, x, &tags, &e);
            }
        }
        results.push(res);
    }
    let mut slopes = Vec::new();
    for &f in &spec.rate_fractions {
        for prefix in ["sca", "high_snr"] {
            let tag = fraction_tag(prefix, f);
            let pts: Vec<(f64, f64)> = results
                .iter()
                .flat_map(|r| r.rows.iter())
                .filter(|r| r.method == tag && r.is_ok())
                .map(|r| (r.x, r.wall_s))
                .collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            if let Some(slope) = log_log_slope(&xs, &ys) {
                slopes.push(RuntimeSlope { method: tag, slope });
            }
        }
    }
    Ok(assemble(spec, cells, results, slopes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [8.0, 16.0, 32.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(2.5)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 2.5).abs() < 1e-12);
        assert!(log_log_slope(&[4.0], &[1.0]).is_none());
        assert!(log_log_slope(&[4.0, 4.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn median_handles_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn sidecar_names() {
        let p = Path::new("/tmp/out/run.csv");
        assert_eq!(sidecar(p, "meta.json"), Path::new("/tmp/out/run.meta.json"));
        assert_eq!(fraction_tag("sca", 0.95), "sca_r0.95");
        assert_eq!(fraction_tag("sca", 1.0), "sca_r1");
    }
}
