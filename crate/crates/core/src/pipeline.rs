//! Batch runs behind the command-line front end: depth scans over `(N, t)`,
//! leg-entropy scans, fits of existing depth tables and the exact-
//! diagonalization cross-checks.
//!
//! Every run writes a `manifest.json` listing each configured cell exactly
//! once as completed, failed or skipped.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    bootstrap_peak_sigma, curve_table, derivative_peak, finite_size_extrapolate, fit_rational, normalized_depth_scaling, DepthPoint,
    FitResult, NormalizedScaling, Peak, PeakKind, ScalingResult, SizePeak, WeightedPoint,
};
use crate::checkpoint;
use crate::config::RunConfig;
use crate::dmrg::{find_ground_state, DmrgConfig, GroundStateResult, InitialState};
use crate::lattice::{enumerate_stabilizers, LadderLattice, ModelParams, StabilizerSpec};
use crate::mpo::build_hamiltonian_mpo;
use crate::mps::MatrixProductState;
use crate::parallel::par_map;
use crate::sampler::{run_trajectories, DepthSummary, SamplerConfig};
use crate::tee::{self, EntropyCurve, EntropyPoint};
use crate::tensor::TruncationPolicy;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 10;

pub const DEPTH_HEADER: [&str; 11] = [
    "N", "t", "chi", "M", "rejected_samples", "d_dw_mean", "d_dw_sem", "d_tc_mean", "d_tc_sem", "d_tot_mean", "d_tot_sem",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub n: usize,
    pub t: f64,
    pub status: CellStatus,
    /// Finished in an earlier run and read back from disk.
    pub resumed: bool,
    pub message: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub cells: Vec<CellRecord>,
    pub notes: Vec<String>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self { command: command.into(), cells: Vec::new(), notes: Vec::new() }
    }

    pub fn all_completed(&self) -> bool {
        self.cells.iter().all(|c| c.status == CellStatus::Completed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_completed() && self.notes.iter().all(|n| !n.starts_with("error")) {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join("manifest.json"), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming to {}", path.display()))?;
    Ok(())
}

/// Source of ground states; tests substitute stubs.
pub trait GroundStates: Sync {
    fn ground_state(&self, lat: &LadderLattice, stabs: &[StabilizerSpec], params: &ModelParams) -> Result<GroundStateResult>;
}

/// Two-site DMRG from a crystal start.
pub struct Dmrg(pub DmrgConfig);

impl GroundStates for Dmrg {
    fn ground_state(&self, lat: &LadderLattice, stabs: &[StabilizerSpec], params: &ModelParams) -> Result<GroundStateResult> {
        let mpo = build_hamiltonian_mpo(lat, stabs, params);
        Ok(find_ground_state(&mpo, &self.0, InitialState::Crystal { sublattice: 0 }, lat)?)
    }
}

fn cell_tag(w: usize, t: f64) -> String {
    format!("W{w}_t{t:.6}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GroundStateMeta {
    energy: f64,
    converged: bool,
    sweeps: usize,
    max_bond: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CellResult {
    n: usize,
    t: f64,
    chi: usize,
    energy: f64,
    summary: DepthSummary,
}

/// Loads a checkpointed ground state, or solves and checkpoints one. The state
/// handed on is always the one decoded from the checkpoint bytes, so fresh and
/// resumed runs see bit-identical tensors.
fn checkpointed_ground_state(
    dir: &Path,
    tag: &str,
    provider: &dyn GroundStates,
    lat: &LadderLattice,
    stabs: &[StabilizerSpec],
    params: &ModelParams,
) -> Result<(MatrixProductState, GroundStateMeta)> {
    let (bin, meta_path) = (dir.join(format!("{tag}.mtcm")), dir.join(format!("{tag}.json")));
    let cached = checkpoint::load(&bin, TruncationPolicy::exact()).ok().zip(
        fs::read_to_string(&meta_path)
            .ok()
            .and_then(|s| serde_json::from_str::<GroundStateMeta>(&s).ok()),
    );
    if let Some((psi, meta)) = cached {
        if psi.len() == lat.len() {
            return Ok((psi, meta));
        }
    }
    let gs = provider.ground_state(lat, stabs, params)?;
    let meta = GroundStateMeta {
        energy: gs.energy,
        converged: gs.converged,
        sweeps: gs.sweeps,
        max_bond: gs.psi.max_bond_dim(),
    };
    let bytes = checkpoint::encode(&gs.psi);
    write_atomic(&bin, &bytes)?;
    write_atomic(&meta_path, serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok((checkpoint::decode(&bytes, TruncationPolicy::exact())?, meta))
}

fn lattice(config: &RunConfig, w: usize) -> Result<(LadderLattice, Vec<StabilizerSpec>)> {
    let lat = LadderLattice::new(w, config.model.traversal)?;
    let stabs = enumerate_stabilizers(&lat);
    Ok((lat, stabs))
}

fn params(config: &RunConfig, t: f64) -> ModelParams {
    ModelParams { t, lambda: config.model.lambda }
}

fn run_cell(config: &RunConfig, provider: &dyn GroundStates, out: &Path, w: usize, t: f64) -> Result<CellResult> {
    let tag = cell_tag(w, t);
    let (lat, stabs) = lattice(config, w)?;
    let (psi, meta) = checkpointed_ground_state(&out.join("ground_states"), &tag, provider, &lat, &stabs, &params(config, t))?;
    let n = lat.len();
    let sampler = SamplerConfig {
        seed: config.sampler.seed,
        max_leakage_attempts: config.sampler.max_leakage_attempts,
        decoder: config.decoder,
    };
    let trajs = run_trajectories(&psi, &stabs, &sampler, config.sampler.trajectories_for(n));
    let summary = DepthSummary::from_trajectories(&trajs);
    let result = CellResult {
        n,
        t,
        chi: *config.dmrg.chi_schedule.last().expect("validated schedule"),
        energy: meta.energy,
        summary,
    };
    write_atomic(&out.join("cells").join(format!("{tag}.json")), serde_json::to_string_pretty(&result)?.as_bytes())?;
    Ok(result)
}

fn read_cell(out: &Path, w: usize, t: f64) -> Option<CellResult> {
    let text = fs::read_to_string(out.join("cells").join(format!("{}.json", cell_tag(w, t)))).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_depth_csv(config: &RunConfig, out: &Path) -> Result<usize> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DEPTH_HEADER)?;
    let mut rows = 0;
    for &width in &config.model.widths {
        for &t in &config.model.t_values {
            let Some(c) = read_cell(out, width, t) else { continue };
            let s = &c.summary;
            w.write_record([
                c.n.to_string(),
                c.t.to_string(),
                c.chi.to_string(),
                s.m.to_string(),
                s.rejected_samples.to_string(),
                s.d_dw.mean.to_string(),
                s.d_dw.sem.to_string(),
                s.d_tc.mean.to_string(),
                s.d_tc.sem.to_string(),
                s.d_tot.mean.to_string(),
                s.d_tot.sem.to_string(),
            ])?;
            rows += 1;
        }
    }
    write_atomic(&out.join("depth.csv"), &w.into_inner()?)?;
    Ok(rows)
}

fn prepare_dir(config: &RunConfig) -> Result<PathBuf> {
    let out = config.io.output_dir.clone();
    for sub in ["", "cells", "ground_states"] {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.join(sub).display()))?;
    }
    write_atomic(&out.join("config.toml"), config.to_toml().as_bytes())?;
    Ok(out)
}

pub fn run_scan(config: &RunConfig) -> Result<Manifest> {
    run_scan_with(config, &Dmrg(config.dmrg.clone()))
}

/// Depth scan over every `(W, t)` cell. Cells with a result on disk are
/// skipped; the rest run in batches of `io.checkpoint_every`.
pub fn run_scan_with(config: &RunConfig, provider: &dyn GroundStates) -> Result<Manifest> {
    let out = prepare_dir(config)?;
    let cells: Vec<(usize, f64)> = config
        .model
        .widths
        .iter()
        .flat_map(|&w| config.model.t_values.iter().map(move |&t| (w, t)))
        .collect();
    let mut manifest = Manifest::new("scan");
    let mut slots: BTreeMap<usize, CellRecord> = BTreeMap::new();
    let mut todo = Vec::new();
    for (i, &(w, t)) in cells.iter().enumerate() {
        if read_cell(&out, w, t).is_some() {
            slots.insert(i, CellRecord { n: 2 * w, t, status: CellStatus::Completed, resumed: true, message: None });
        } else {
            todo.push(i);
        }
    }
    for batch in todo.chunks(config.io.checkpoint_every) {
        let results = par_map(batch, |&i| {
            let (w, t) = cells[i];
            run_cell(config, provider, &out, w, t)
        });
        for (&i, r) in batch.iter().zip(results) {
            let (w, t) = cells[i];
            let record = match r {
                Ok(c) if c.summary.failed == 0 => CellRecord { n: 2 * w, t, status: CellStatus::Completed, resumed: false, message: None },
                Ok(c) => CellRecord {
                    n: 2 * w,
                    t,
                    status: CellStatus::Completed,
                    resumed: false,
                    message: Some(format!("{} of {} trajectories failed", c.summary.failed, c.summary.m)),
                },
                Err(e) => CellRecord { n: 2 * w, t, status: CellStatus::Failed, resumed: false, message: Some(format!("{e:#}")) },
            };
            slots.insert(i, record);
        }
        manifest.cells = slots.values().cloned().collect();
        write_depth_csv(config, &out)?;
        manifest.write(&out)?;
    }
    manifest.cells = slots.into_values().collect();
    write_depth_csv(config, &out)?;
    manifest.write(&out)?;
    Ok(manifest)
}

pub fn run_tee(config: &RunConfig) -> Result<Manifest> {
    run_tee_with(config, &Dmrg(config.dmrg.clone()))
}

/// Leg entropies for every configured width and `t`, with one `(α, γ)` fit
/// per `t`, written to `tee.csv`.
pub fn run_tee_with(config: &RunConfig, provider: &dyn GroundStates) -> Result<Manifest> {
    let out = prepare_dir(config)?;
    let mut manifest = Manifest::new("tee");
    if !config.tee.enabled {
        manifest.notes.push("tee disabled in config".into());
        for &t in &config.tee.t_values {
            for &w in &config.tee.widths {
                manifest.cells.push(CellRecord { n: 2 * w, t, status: CellStatus::Skipped, resumed: false, message: Some("disabled".into()) });
            }
        }
        manifest.write(&out)?;
        return Ok(manifest);
    }
    let mut csv_out = csv::Writer::from_writer(Vec::new());
    csv_out.write_record(tee::CSV_HEADER)?;
    for &t in &config.tee.t_values {
        let mut points = Vec::new();
        for &w in &config.tee.widths {
            let n = 2 * w;
            let mut record = CellRecord { n, t, status: CellStatus::Completed, resumed: false, message: None };
            let need = tee::memory_estimate(n);
            if w > tee::MAX_CUT || need > config.tee.memory_budget {
                record.status = CellStatus::Skipped;
                record.message = Some(format!("cut {w} needs {need} bytes, over the cap"));
                manifest.cells.push(record);
                continue;
            }
            if w > 7 {
                let msg = format!("warning: leg density matrix for N={n} has dimension 3^{w}; cost grows exponentially");
                eprintln!("{msg}");
                manifest.notes.push(msg);
            }
            let res = lattice(config, w).and_then(|(lat, stabs)| {
                let gs = provider.ground_state(&lat, &stabs, &params(config, t))?;
                let rho = tee::leg_rdm_with_budget(&gs.psi, &lat, config.tee.memory_budget)?;
                Ok(EntropyPoint { n, l: w, s: tee::entropy_of(&rho)? })
            });
            match res {
                Ok(p) => points.push(p),
                Err(e) => {
                    record.status = CellStatus::Failed;
                    record.message = Some(format!("{e:#}"));
                }
            }
            manifest.cells.push(record);
        }
        if let Err(e) = tee::extract_tee(&points) {
            manifest.notes.push(format!("error: t={t}: {e}"));
        }
        EntropyCurve::new(t, points).write_rows(&mut csv_out)?;
    }
    write_atomic(&out.join("tee.csv"), &csv_out.into_inner()?)?;
    manifest.write(&out)?;
    Ok(manifest)
}

/// One row of `depth.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub chi: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub rejected_samples: usize,
    pub d_dw_mean: f64,
    pub d_dw_sem: f64,
    pub d_tc_mean: f64,
    pub d_tc_sem: f64,
    pub d_tot_mean: f64,
    pub d_tot_sem: f64,
}

pub fn read_depth_csv(path: &Path) -> Result<Vec<DepthRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let rows = r.deserialize().collect::<Result<Vec<DepthRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    DTot,
    DDw,
}

impl Quantity {
    fn of(self, r: &DepthRow) -> (f64, f64) {
        match self {
            Quantity::DTot => (r.d_tot_mean, r.d_tot_sem),
            Quantity::DDw => (r.d_dw_mean, r.d_dw_sem),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Quantity::DTot => "d_tot",
            Quantity::DDw => "d_dw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeFit {
    pub quantity: Quantity,
    pub n: usize,
    pub fit: Option<FitResult>,
    pub peak: Option<Peak>,
    pub sigma: Option<f64>,
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTable {
    pub t: f64,
    pub points: Vec<DepthPoint>,
    pub result: Result<NormalizedScaling, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub fits: Vec<SizeFit>,
    pub d_tot: Result<ScalingResult, String>,
    pub d_dw: Result<ScalingResult, String>,
    pub normalized: Vec<NormalizedTable>,
}

/// Weights `1/σ²`, with zero standard errors raised to the smallest positive
/// one of the series (or 1 if there is none).
fn weighted(points: &[(f64, f64, f64)]) -> Vec<WeightedPoint> {
    let floor = points.iter().map(|p| p.2).filter(|s| *s > 0.0).fold(f64::INFINITY, f64::min);
    let floor = if floor.is_finite() { floor } else { 1.0 };
    points
        .iter()
        .map(|&(t, y, s)| WeightedPoint { t, y, w: 1.0 / s.max(floor).powi(2) })
        .collect()
}

fn fit_size(config: &RunConfig, q: Quantity, n: usize, rows: &[&DepthRow]) -> SizeFit {
    let a = &config.analysis;
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.t >= a.t_min && r.t <= a.t_max)
        .map(|r| {
            let (y, s) = q.of(r);
            (r.t, y, s)
        })
        .collect();
    let mut out = SizeFit { quantity: q, n, fit: None, peak: None, sigma: None, flag: None };
    let fit = match fit_rational(&weighted(&pts)) {
        Ok(f) => f,
        Err(e) => {
            out.flag = Some(e.to_string());
            return out;
        }
    };
    let (lo, hi) = fit.t_range;
    if !fit.usable {
        out.flag = Some("fit not usable".into());
    } else if hi > lo {
        match derivative_peak(&fit, lo, hi) {
            Ok(p) => {
                if p.kind == PeakKind::NoInteriorPeak {
                    out.flag = Some("no interior peak".into());
                } else {
                    out.sigma = bootstrap_peak_sigma(&fit, lo, hi, a.bootstrap, a.seed).ok();
                    if p.kind == PeakKind::BoundaryDominated {
                        out.flag = Some("boundary exceeds interior peak".into());
                    }
                }
                out.peak = Some(p);
            }
            Err(e) => out.flag = Some(e.to_string()),
        }
    }
    out.fit = Some(fit);
    out
}

pub fn analyze_rows(config: &RunConfig, rows: &[DepthRow]) -> AnalysisReport {
    let mut by_size: BTreeMap<usize, Vec<&DepthRow>> = BTreeMap::new();
    for r in rows {
        by_size.entry(r.n).or_default().push(r);
    }
    let jobs: Vec<(Quantity, usize)> = [Quantity::DTot, Quantity::DDw]
        .into_iter()
        .flat_map(|q| by_size.keys().map(move |&n| (q, n)))
        .collect();
    let fits = par_map(&jobs, |&(q, n)| fit_size(config, q, n, &by_size[&n]));
    let scaling = |q: Quantity| {
        let peaks: Vec<SizePeak> = fits
            .iter()
            .filter(|f| f.quantity == q && f.fit.as_ref().is_some_and(|x| x.usable))
            .filter_map(|f| {
                let p = f.peak?;
                (p.kind != PeakKind::NoInteriorPeak).then_some(SizePeak { n: f.n, t: p.t, sigma: f.sigma.unwrap_or(0.0) })
            })
            .collect();
        finite_size_extrapolate(&peaks).map_err(|e| e.to_string())
    };
    let normalized = config
        .analysis
        .normalized_t
        .iter()
        .map(|&t| {
            let points: Vec<DepthPoint> = by_size
                .iter()
                .filter_map(|(&n, rs)| {
                    rs.iter()
                        .find(|r| (r.t - t).abs() < 1e-9)
                        .map(|r| DepthPoint { n, d_tot: r.d_tot_mean, sem: r.d_tot_sem })
                })
                .collect();
            let result = normalized_depth_scaling(&points).map_err(|e| e.to_string());
            NormalizedTable { t, points, result }
        })
        .collect();
    AnalysisReport { d_tot: scaling(Quantity::DTot), d_dw: scaling(Quantity::DDw), fits, normalized }
}

fn opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| v.to_string())
}

/// Reads `depth.csv`, writes `analysis.csv`, `normalized.csv`,
/// `fit_curves.csv` and `scaling.json`.
pub fn run_analyze(config: &RunConfig, depth_csv: &Path) -> Result<(Manifest, AnalysisReport)> {
    let rows = read_depth_csv(depth_csv)?;
    let out = config.io.output_dir.clone();
    fs::create_dir_all(&out)?;
    let report = analyze_rows(config, &rows);
    let mut manifest = Manifest::new("analyze");

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "quantity", "N", "converged", "usable", "a", "b", "c", "d", "e", "f", "residual", "t_star", "t_star_sigma", "peak_value", "curvature",
        "peak_kind", "flag",
    ])?;
    let mut curves = csv::Writer::from_writer(Vec::new());
    curves.write_record(["quantity", "N", "t", "f", "df"])?;
    for f in &report.fits {
        let mut rec = vec![f.quantity.name().to_string(), f.n.to_string()];
        match &f.fit {
            Some(fit) => {
                rec.push(fit.converged.to_string());
                rec.push(fit.usable.to_string());
                rec.extend(fit.coefficients.0.iter().map(|c| c.to_string()));
                rec.push(fit.residual.to_string());
                for [t, y, dy] in curve_table(&fit.coefficients, fit.t_range.0, fit.t_range.1, 301) {
                    curves.write_record([f.quantity.name().to_string(), f.n.to_string(), t.to_string(), y.to_string(), dy.to_string()])?;
                }
            }
            None => rec.extend(std::iter::repeat_n(String::new(), 9)),
        }
        rec.push(opt(f.peak.map(|p| p.t)));
        rec.push(opt(f.sigma));
        rec.push(opt(f.peak.map(|p| p.value)));
        rec.push(opt(f.peak.map(|p| p.curvature)));
        rec.push(f.peak.map_or(String::new(), |p| serde_json::to_value(p.kind).expect("enum").as_str().unwrap_or("").to_string()));
        rec.push(f.flag.clone().unwrap_or_default());
        w.write_record(&rec)?;
        manifest.cells.push(CellRecord {
            n: f.n,
            t: f.peak.map_or(f64::NAN, |p| p.t),
            status: if f.flag.is_none() { CellStatus::Completed } else { CellStatus::Failed },
            resumed: false,
            message: f.flag.clone().map(|m| format!("{}: {m}", f.quantity.name())),
        });
    }
    write_atomic(&out.join("analysis.csv"), &w.into_inner()?)?;
    write_atomic(&out.join("fit_curves.csv"), &curves.into_inner()?)?;

    let mut norm = csv::Writer::from_writer(Vec::new());
    norm.write_record(["t", "N", "inv_N", "d_tot_per_N", "sem_per_N", "slope", "intercept", "intercept_se", "phase"])?;
    for table in &report.normalized {
        let (slope, icpt, se, phase) = match &table.result {
            Ok(r) => (r.slope.to_string(), r.intercept.to_string(), r.intercept_se.to_string(), r.phase.to_string()),
            Err(e) => {
                manifest.notes.push(format!("error: normalized depth at t={}: {e}", table.t));
                Default::default()
            }
        };
        for p in &table.points {
            let n = p.n as f64;
            norm.write_record([
                table.t.to_string(),
                p.n.to_string(),
                (1.0 / n).to_string(),
                (p.d_tot / n).to_string(),
                (p.sem / n).to_string(),
                slope.clone(),
                icpt.clone(),
                se.clone(),
                phase.clone(),
            ])?;
        }
    }
    write_atomic(&out.join("normalized.csv"), &norm.into_inner()?)?;
    for (name, r) in [("d_tot", &report.d_tot), ("d_dw", &report.d_dw)] {
        if let Err(e) = r {
            manifest.notes.push(format!("error: {name} extrapolation: {e}"));
        }
    }
    write_atomic(&out.join("scaling.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    manifest.write(&out)?;
    Ok((manifest, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Cross-checks against exact diagonalization at `W = 4`: DMRG energies and
/// ground-space weight, zero depth at `t = 0`, and the leg entropy of the
/// exact ground vectors.
pub fn run_oracle_check(config: &RunConfig) -> Result<(Manifest, Vec<OracleCheck>)> {
    use crate::ed::{exact_entropy, exact_ground_state};
    let out = config.io.output_dir.clone();
    fs::create_dir_all(&out)?;
    let (lat, stabs) = lattice(config, 4)?;
    let mut checks = Vec::new();
    let mut dmrg = DmrgConfig::with_chi(64);
    dmrg.seed = config.dmrg.seed;
    let ts = [0.0, 0.2, 0.5, 1.0];
    let results = par_map(&ts, |&t| -> Result<Vec<OracleCheck>> {
        let p = params(config, t);
        let ed = exact_ground_state(&lat, &stabs, &p)?;
        let gs = Dmrg(dmrg.clone()).ground_state(&lat, &stabs, &p)?;
        let dense = gs.psi.to_dense();
        let weight: f64 = ed
            .vectors
            .iter()
            .map(|v| {
                let e = ed.basis.embed(v);
                e.iter().zip(&dense).map(|(a, b)| a.conj() * b).sum::<crate::tensor::C64>().norm_sqr()
            })
            .sum();
        let mut out = vec![
            OracleCheck { name: format!("energy t={t}"), value: (gs.energy - ed.energy).abs(), tolerance: 1e-8, pass: (gs.energy - ed.energy).abs() <= 1e-8 },
            OracleCheck { name: format!("ground-space weight deficit t={t}"), value: 1.0 - weight, tolerance: 1e-6, pass: 1.0 - weight <= 1e-6 },
        ];
        if t == 0.0 {
            let top = lat.top_leg();
            let mut worst: f64 = 0.0;
            for v in &ed.vectors {
                let want = exact_entropy(&ed.basis, v, &top)?;
                let psi = MatrixProductState::from_dense(&ed.basis.embed(v), lat.len(), TruncationPolicy::exact())?;
                worst = worst.max((tee::leg_entropy(&psi, &lat)?.1 - want).abs());
            }
            out.push(OracleCheck { name: "leg entropy vs exact".into(), value: worst, tolerance: 1e-9, pass: worst <= 1e-9 });
            let sampler = SamplerConfig { seed: config.sampler.seed, max_leakage_attempts: config.sampler.max_leakage_attempts, decoder: config.decoder };
            let trajs = run_trajectories(&gs.psi, &stabs, &sampler, 50);
            let worst_depth = trajs.iter().map(|t| if t.is_ok() { t.d_tot } else { usize::MAX }).max().unwrap_or(0);
            out.push(OracleCheck { name: "max d_tot at t=0".into(), value: worst_depth as f64, tolerance: 0.0, pass: worst_depth == 0 });
        }
        Ok(out)
    });
    let mut manifest = Manifest::new("oracle-check");
    for (t, r) in ts.iter().zip(results) {
        match r {
            Ok(c) => {
                let failed: Vec<&str> = c.iter().filter(|x| !x.pass).map(|x| x.name.as_str()).collect();
                manifest.cells.push(CellRecord {
                    n: 8,
                    t: *t,
                    status: if failed.is_empty() { CellStatus::Completed } else { CellStatus::Failed },
                    resumed: false,
                    message: (!failed.is_empty()).then(|| failed.join(", ")),
                });
                checks.extend(c);
            }
            Err(e) => manifest.cells.push(CellRecord { n: 8, t: *t, status: CellStatus::Failed, resumed: false, message: Some(format!("{e:#}")) }),
        }
    }
    write_atomic(&out.join("oracle.json"), serde_json::to_string_pretty(&checks)?.as_bytes())?;
    manifest.write(&out)?;
    Ok((manifest, checks))
}
