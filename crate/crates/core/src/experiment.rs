//! Config-driven experiment runner: reference solve, coarse FEM comparator and
//! multiscale variants, with CSV and gnuplot output.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    error_norms, peak_position, periodic_offset, time_label, write_series_csv, ConvergenceRow,
    ConvergenceTable, ErrorReport,
};
use crate::basis::{
    compute_offline, BasisOptions, BasisScheme, BasisSet, CellWeighting, DEFAULT_BASIS_REFINEMENT,
};
use crate::coeffs::{make_case, CaseId, CaseParams, CoefficientSet};
use crate::error::{Error, Result};
use crate::fem1d::{reference_solve_kept, step_count, time_grid, FieldSnapshot};
use crate::global::{reconstruct, solve_online, MassRule};
use crate::mesh::CoarseMesh;
use crate::parallel;
use crate::transform::{CharacteristicTable, TransformKind};

/// Version of the config schema and of the binary basis container.
pub const SCHEMA_VERSION: u32 = 1;

/// Method compared against the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Standard P1 FEM on the coarse mesh in mean-flow coordinates.
    Fem,
    MeanFlowMsFem,
    CharMsFem,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Fem => "fem",
            Variant::MeanFlowMsFem => "mf-msfem",
            Variant::CharMsFem => "char-msfem",
        }
    }

    pub fn transform(self) -> TransformKind {
        match self {
            Variant::Fem | Variant::MeanFlowMsFem => TransformKind::MeanFlow,
            Variant::CharMsFem => TransformKind::Characteristic,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fem" => Ok(Variant::Fem),
            "mf-msfem" => Ok(Variant::MeanFlowMsFem),
            "char-msfem" => Ok(Variant::CharMsFem),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Meaning of the resolution `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountConvention {
    Nodes,
    Cells,
}

impl FromStr for CountConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nodes" => Ok(CountConvention::Nodes),
            "cells" => Ok(CountConvention::Cells),
            other => Err(Error::Config(format!(
                "unknown counting convention `{other}`"
            ))),
        }
    }
}

impl CountConvention {
    pub fn mesh(self, n: usize) -> Result<CoarseMesh> {
        match self {
            CountConvention::Nodes => CoarseMesh::new(n),
            CountConvention::Cells => CoarseMesh::with_cells(n),
        }
    }
}

/// Default ratio between the coarse step and the reference step.
pub const REFERENCE_REFINEMENT: usize = 10;

/// Flat experiment description. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub case: String,
    pub k: Option<u32>,
    pub v: Option<f64>,
    pub alpha: Option<f64>,
    pub sigma: f64,
    pub nu: f64,
    /// Coarse resolution, see `n_counts`.
    pub n: usize,
    /// Fine nodes per coarse cell.
    pub n_fine: usize,
    pub dt: f64,
    pub t_end: f64,
    pub variants: Vec<String>,
    pub n_ref: usize,
    /// Reference step; `dt / 10` when absent.
    pub dt_ref: Option<f64>,
    pub ode_tol: f64,
    pub snapshot_times: Vec<f64>,
    /// Error-series spacing in steps of `dt`.
    pub error_every: usize,
    pub output_dir: Option<PathBuf>,
    /// Offline worker threads, 0 = available parallelism. Left out of saved
    /// configs: results do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
    /// `nodes` or `cells`; empty picks `nodes` for single runs and `cells` for sweeps.
    pub n_counts: String,
    pub n_list: Vec<usize>,
    pub mass_rule: String,
    pub cell_weighting: String,
    pub retain_systems: bool,
    /// `backward-euler` or `crank-nicolson` for the local problems.
    pub basis_scheme: String,
    /// Offline steps per coarse step `dt`.
    pub basis_refinement: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            case: "case1".into(),
            k: None,
            v: None,
            alpha: None,
            sigma: 0.1,
            nu: 0.5,
            n: 10,
            n_fine: 75,
            dt: 1e-3,
            t_end: 1.0,
            variants: vec!["fem".into(), "mf-msfem".into(), "char-msfem".into()],
            n_ref: 750,
            dt_ref: None,
            ode_tol: 1e-9,
            snapshot_times: vec![0.25, 0.5, 0.75, 1.0],
            error_every: 10,
            output_dir: None,
            workers: 0,
            n_counts: String::new(),
            n_list: vec![24, 48, 96, 192, 384],
            mass_rule: "next".into(),
            cell_weighting: "jacobian".into(),
            retain_systems: false,
            basis_scheme: "backward-euler".into(),
            basis_refinement: DEFAULT_BASIS_REFINEMENT,
        }
    }
}

/// Parses `key=value` with the value read as a TOML literal, or as a bare string.
pub fn parse_override(item: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl ExperimentConfig {
    /// Parses a TOML document and applies `key=value` overrides on top.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, value) = parse_override(item)?;
            table.insert(key, value);
        }
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => fs::read_to_string(p)?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn case_id(&self) -> Result<CaseId> {
        self.case.parse()
    }

    pub fn case_params(&self) -> Result<CaseParams> {
        Ok(CaseParams {
            case: self.case_id()?,
            k: self.k,
            v: self.v,
            alpha: self.alpha,
            sigma: self.sigma,
            nu: self.nu,
        })
    }

    pub fn variant_list(&self) -> Result<Vec<Variant>> {
        self.variants.iter().map(|v| v.parse()).collect()
    }

    pub fn counting(&self, sweep: bool) -> Result<CountConvention> {
        match (self.n_counts.as_str(), sweep) {
            ("", false) => Ok(CountConvention::Nodes),
            ("", true) => Ok(CountConvention::Cells),
            (s, _) => s.parse(),
        }
    }

    pub fn mass_rule(&self) -> Result<MassRule> {
        self.mass_rule.parse()
    }

    pub fn basis_options(&self) -> Result<BasisOptions> {
        Ok(BasisOptions {
            weighting: self.cell_weighting.parse::<CellWeighting>()?,
            retain_systems: self.retain_systems,
            scheme: self.basis_scheme.parse::<BasisScheme>()?,
            refinement: self.basis_refinement,
        })
    }

    pub fn reference_dt(&self) -> f64 {
        self.dt_ref.unwrap_or(self.dt / REFERENCE_REFINEMENT as f64)
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self, sweep: bool) -> Result<()> {
        let params = self.case_params()?;
        make_case(&params)?;
        self.variant_list()?;
        self.mass_rule()?;
        if self.basis_options()?.refinement == 0 {
            return Err(Error::Config("basis_refinement must be at least 1".into()));
        }
        let counting = self.counting(sweep)?;
        if !(self.t_end > 0.0) {
            return Err(Error::Config(format!(
                "T must be positive, got {}",
                self.t_end
            )));
        }
        step_count(self.dt, self.t_end).map_err(|e| Error::Config(e.to_string()))?;
        step_count(self.reference_dt(), self.t_end).map_err(|e| Error::Config(e.to_string()))?;
        if self.n_fine < 3 {
            return Err(Error::Config(format!(
                "n_fine must be at least 3, got {}",
                self.n_fine
            )));
        }
        if !(self.ode_tol > 0.0) {
            return Err(Error::Config("ode_tol must be positive".into()));
        }
        if self.error_every == 0 {
            return Err(Error::Config("error_every must be positive".into()));
        }
        let resolutions = if sweep {
            self.n_list.clone()
        } else {
            vec![self.n]
        };
        if resolutions.is_empty() {
            return Err(Error::Config("n_list is empty".into()));
        }
        if resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("n_list must be strictly ascending".into()));
        }
        for &n in &resolutions {
            counting.mesh(n).map_err(|e| Error::Config(e.to_string()))?;
        }
        let n_max = *resolutions.last().unwrap_or(&self.n);
        if !sweep && self.n_ref < 10 * n_max {
            return Err(Error::Config(format!(
                "n_ref = {} must be at least 10 N = {}",
                self.n_ref,
                10 * n_max
            )));
        }
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_end + 1e-12).contains(&t) {
                return Err(Error::Config(format!("snapshot time {t} outside [0, T]")));
            }
            self.step_of(t, self.dt)?;
            self.step_of(t, self.reference_dt())?;
        }
        Ok(())
    }

    fn step_of(&self, t: f64, dt: f64) -> Result<usize> {
        let r = t / dt;
        let n = r.round();
        if (r - n).abs() > 1e-6 * r.max(1.0) {
            return Err(Error::Config(format!(
                "time {t} is not on the grid of step {dt}"
            )));
        }
        Ok(n as usize)
    }

    /// Comparison times: every `error_every` steps plus the snapshot times.
    pub fn schedule(&self) -> Result<Vec<f64>> {
        let steps = step_count(self.dt, self.t_end)?;
        let mut idx: Vec<usize> = (0..=steps).step_by(self.error_every).collect();
        idx.push(steps);
        for &t in &self.snapshot_times {
            idx.push(self.step_of(t, self.dt)?);
        }
        idx.sort_unstable();
        idx.dedup();
        Ok(idx.into_iter().map(|n| n as f64 * self.dt).collect())
    }
}

/// Multiscale run state kept for inspection.
pub struct MsFemRun {
    pub table: CharacteristicTable,
    pub basis: BasisSet,
    pub solution: crate::global::CoarseSolution,
}

/// Offline and online phase of one multiscale variant.
/// Traces the coordinates on the refined offline grid, computes the basis and
/// returns the table restricted to the coarse grid alongside it.
pub fn offline(
    cs: &CoefficientSet,
    mesh: &CoarseMesh,
    kind: TransformKind,
    cfg: &ExperimentConfig,
) -> Result<(CharacteristicTable, BasisSet)> {
    let options = cfg.basis_options()?;
    let r = options.refinement.max(1);
    let steps = step_count(cfg.dt, cfg.t_end)?;
    let times = time_grid(cfg.dt / r as f64, steps * r);
    let fine = CharacteristicTable::build(kind, cs, mesh, &times, cfg.ode_tol)?;
    let basis = compute_offline(cs, &fine, cfg.n_fine, options)?;
    Ok((fine.every(r)?, basis))
}

pub fn run_msfem(
    cs: &CoefficientSet,
    mesh: &CoarseMesh,
    kind: TransformKind,
    cfg: &ExperimentConfig,
) -> Result<MsFemRun> {
    let (table, basis) = offline(cs, mesh, kind, cfg)?;
    let solution = solve_online(&basis, cs, cfg.mass_rule()?)?;
    Ok(MsFemRun {
        table,
        basis,
        solution,
    })
}

fn steps_for(times: &[f64], dt: f64) -> Vec<usize> {
    times.iter().map(|t| (t / dt).round() as usize).collect()
}

/// Snapshots of `variant` at `times` on a grid of `points` points.
pub fn run_variant(
    cs: &CoefficientSet,
    mesh: &CoarseMesh,
    variant: Variant,
    cfg: &ExperimentConfig,
    times: &[f64],
    points: usize,
) -> Result<Vec<FieldSnapshot>> {
    let idx = steps_for(times, cfg.dt);
    match variant {
        Variant::Fem => {
            let sol = reference_solve_kept(
                cs,
                mesh.cell_count(),
                cfg.dt,
                cfg.t_end,
                TransformKind::MeanFlow,
                cfg.ode_tol,
                Some(&idx),
            )?;
            Ok(idx.iter().map(|&n| sol.snapshot(n, points)).collect())
        }
        Variant::MeanFlowMsFem | Variant::CharMsFem => {
            let run = run_msfem(cs, mesh, variant.transform(), cfg)?;
            Ok(idx
                .iter()
                .map(|&n| reconstruct(&run.solution, &run.basis, &run.table, n, points))
                .collect())
        }
    }
}

/// Reference snapshots on the Eulerian grid of `elements` points.
pub fn run_reference(
    cs: &CoefficientSet,
    cfg: &ExperimentConfig,
    elements: usize,
    times: &[f64],
) -> Result<Vec<FieldSnapshot>> {
    let dt = cfg.reference_dt();
    let idx = steps_for(times, dt);
    let sol = reference_solve_kept(
        cs,
        elements,
        dt,
        cfg.t_end,
        TransformKind::MeanFlow,
        cfg.ode_tol,
        Some(&idx),
    )?;
    Ok(idx.into_iter().map(|n| sol.snapshot(n, elements)).collect())
}

/// Outcome of one variant in a case run.
pub struct VariantResult {
    pub variant: Variant,
    pub outcome: Result<VariantData>,
}

pub struct VariantData {
    pub snapshots: Vec<FieldSnapshot>,
    pub errors: Vec<ErrorReport>,
    pub seconds: f64,
}

impl VariantData {
    pub fn final_errors(&self) -> ErrorReport {
        self.errors.last().copied().unwrap_or_default()
    }
}

pub struct CaseReport {
    pub config: ExperimentConfig,
    pub label: String,
    pub mesh: CoarseMesh,
    pub times: Vec<f64>,
    pub reference: Vec<FieldSnapshot>,
    pub variants: Vec<VariantResult>,
}

impl CaseReport {
    pub fn result(&self, v: Variant) -> Option<&VariantData> {
        self.variants
            .iter()
            .find(|r| r.variant == v)
            .and_then(|r| r.outcome.as_ref().ok())
    }

    /// Final-time peak offset `candidate - reference` (periodic).
    pub fn peak_offset(&self, v: Variant) -> Option<f64> {
        let data = self.result(v)?;
        let c = data.snapshots.last()?;
        let r = self.reference.last()?;
        Some(periodic_offset(peak_position(c), peak_position(r)))
    }
}

/// Runs the reference and every requested variant. Failures of single
/// variants are recorded in the report rather than returned.
pub fn run_case(cfg: &ExperimentConfig) -> Result<CaseReport> {
    cfg.validate(false)?;
    let params = cfg.case_params()?;
    let cs = make_case(&params)?;
    let mesh = cfg.counting(false)?.mesh(cfg.n)?;
    let times = cfg.schedule()?;
    let variants = cfg.variant_list()?;
    let points = cfg.n_ref;
    let pe = cs.peclet_diagnostic(1.0, 0.0)?;
    log::info!("{}: Peclet diagnostic {pe:.3e}", cfg.case);

    parallel::with_workers(cfg.workers, || {
        let reference = run_reference(&cs, cfg, cfg.n_ref, &times)?;
        let results = parallel::map_indexed(variants.len(), |i| {
            let start = Instant::now();
            let outcome =
                run_variant(&cs, &mesh, variants[i], cfg, &times, points).and_then(|snapshots| {
                    let errors = snapshots
                        .iter()
                        .zip(&reference)
                        .map(|(c, r)| error_norms(c, r))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(VariantData {
                        snapshots,
                        errors,
                        seconds: start.elapsed().as_secs_f64(),
                    })
                });
            if let Err(e) = &outcome {
                log::error!("{} failed: {e}", variants[i]);
            }
            VariantResult {
                variant: variants[i],
                outcome,
            }
        });
        Ok(CaseReport {
            config: cfg.clone(),
            label: case_label(&params),
            mesh: mesh.clone(),
            times: times.clone(),
            reference,
            variants: results,
        })
    })
}

/// `case1-k30`, `case3-v4`, `convergence-k10-a0`.
pub fn case_label(p: &CaseParams) -> String {
    let mut s = p.case.label().to_string();
    if let Some(k) = p.k {
        s.push_str(&format!("-k{k}"));
    }
    if let Some(v) = p.v {
        s.push_str(&format!("-v{v}"));
    }
    if let Some(a) = p.alpha {
        s.push_str(&format!("-a{a}"));
    }
    s
}

fn is_snapshot_time(cfg: &ExperimentConfig, t: f64) -> bool {
    cfg.snapshot_times.iter().any(|s| (s - t).abs() < 1e-9)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn snapshot_file(method: &str, t: f64) -> String {
    format!("snapshots_{method}_t{}.csv", time_label(t))
}

/// One `t,x,u` file per snapshot time.
fn write_snapshots(
    dir: &Path,
    method: &str,
    cfg: &ExperimentConfig,
    snaps: &[FieldSnapshot],
) -> Result<()> {
    for s in snaps.iter().filter(|s| is_snapshot_time(cfg, s.time)) {
        let mut out = create(&dir.join(snapshot_file(method, s.time)))?;
        writeln!(out, "t,x,u")?;
        let t = time_label(s.time);
        for (x, u) in s.x.iter().zip(&s.u) {
            writeln!(out, "{t},{x:.10},{u:.12e}")?;
        }
        out.flush()?;
    }
    Ok(())
}

const METRICS: [&str; 6] = [
    "rel_L2",
    "rel_Linf",
    "rel_H1",
    "max_dev",
    "peak_offset",
    "seconds",
];

/// Writes snapshots, error series, summary and plot script into `dir`.
pub fn write_case(report: &CaseReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &report.config;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    write_snapshots(dir, "reference", cfg, &report.reference)?;

    let mut series = Vec::new();
    let mut summary = create(&dir.join("summary.csv"))?;
    writeln!(summary, "case,variant,metric,value")?;
    let mut failures = String::new();
    for r in &report.variants {
        let label = r.variant.label();
        match &r.outcome {
            Ok(data) => {
                write_snapshots(dir, label, cfg, &data.snapshots)?;
                series.extend(data.errors.iter().map(|e| (label.to_string(), *e)));
                let e = data.final_errors();
                let offset = report.peak_offset(r.variant).unwrap_or(f64::NAN);
                let values = [
                    e.rel_l2,
                    e.rel_linf,
                    e.rel_h1,
                    e.max_dev,
                    offset,
                    data.seconds,
                ];
                for (m, v) in METRICS.iter().zip(values) {
                    // wall time is the only nondeterministic quantity
                    if *m == "seconds" {
                        continue;
                    }
                    writeln!(summary, "{},{label},{m},{v:.10e}", report.label)?;
                }
            }
            Err(e) => {
                for m in METRICS.iter().filter(|m| **m != "seconds") {
                    writeln!(summary, "{},{label},{m},NaN", report.label)?;
                }
                failures.push_str(&format!("{label}: {e}\n"));
            }
        }
    }
    summary.flush()?;
    if !failures.is_empty() {
        fs::write(dir.join("failures.txt"), failures)?;
    }
    let mut errors = create(&dir.join(format!("errors_{}.csv", report.config.case)))?;
    write_series_csv(&mut errors, &series)?;
    errors.flush()?;
    write_case_table(report, dir)?;
    fs::write(dir.join("snapshots.gp"), snapshot_script(report))?;
    Ok(())
}

/// Final-time errors, one row per variant.
fn write_case_table(report: &CaseReport, dir: &Path) -> Result<()> {
    let number = report.config.case.trim_start_matches("case");
    let mut out = create(&dir.join(format!("table_{number}.csv")))?;
    writeln!(out, "variant,rel_L2,rel_Linf,rel_H1,max_dev")?;
    for r in &report.variants {
        let e = match &r.outcome {
            Ok(d) => d.final_errors(),
            Err(_) => ErrorReport {
                time: f64::NAN,
                rel_l2: f64::NAN,
                rel_linf: f64::NAN,
                rel_h1: f64::NAN,
                max_dev: f64::NAN,
            },
        };
        writeln!(
            out,
            "{},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.variant, e.rel_l2, e.rel_linf, e.rel_h1, e.max_dev
        )?;
    }
    out.flush()?;
    Ok(())
}

fn snapshot_script(report: &CaseReport) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key top right\nset xlabel 'x'\nset ylabel 'u'\n\
         set terminal pngcairo size 900,600\n",
    );
    for &t in &report.config.snapshot_times {
        let label = time_label(t);
        s.push_str(&format!(
            "set output 'snapshot_t{label}.png'\nset title 't = {label}'\n"
        ));
        let mut plots = vec![format!(
            "'{}' using 2:3 with lines title 'reference'",
            snapshot_file("reference", t)
        )];
        for r in report.variants.iter().filter(|r| r.outcome.is_ok()) {
            plots.push(format!(
                "'{}' using 2:3 with lines title '{}'",
                snapshot_file(r.variant.label(), t),
                r.variant
            ));
        }
        s.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    }
    s
}

/// Characteristic MsFEM errors at the final time for every resolution of `n_list`.
pub fn convergence_rows(
    params: &CaseParams,
    cfg: &ExperimentConfig,
) -> Result<Vec<ConvergenceRow>> {
    let cs = make_case(params)?;
    let counting = cfg.counting(true)?;
    let n_max = cfg.n_list.iter().copied().max().unwrap_or(cfg.n);
    let elements = cfg.n_ref.max(10 * n_max);
    let t_end = [cfg.t_end];
    parallel::with_workers(cfg.workers, || {
        let reference = run_reference(&cs, cfg, elements, &t_end)?;
        let rows = parallel::try_map_indexed(cfg.n_list.len(), |i| {
            let n = cfg.n_list[i];
            let mesh = counting.mesh(n)?;
            let snap = run_variant(&cs, &mesh, Variant::CharMsFem, cfg, &t_end, elements)?;
            let e = error_norms(&snap[0], &reference[0])?;
            Ok(ConvergenceRow {
                n,
                rel_l2: e.rel_l2,
                rel_linf: e.rel_linf,
            })
        })?;
        Ok(rows)
    })
}

/// Runs the sweep and writes `table_6.csv` with its plot script into `dir`.
pub fn run_convergence(cfg: &ExperimentConfig, dir: &Path) -> Result<ConvergenceTable> {
    cfg.validate(true)?;
    let table = crate::analysis::convergence_table(&cfg.case_params()?, cfg)?;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut out = create(&dir.join("table_6.csv"))?;
    table.write_csv(&mut out)?;
    out.flush()?;
    let title = case_label(&cfg.case_params()?);
    fs::write(
        dir.join("table_6.gp"),
        table.gnuplot_script("table_6.csv", &title),
    )?;
    Ok(table)
}

/// Binary container of all basis coefficients.
///
/// Layout (little endian): magic `MSFB`, `u32` version, `u64` cells, `u64` fine
/// nodes, `u64` stored times, `f64` dt, then for each cell a contiguous
/// `times x fine nodes` block of `f64`.
pub fn write_basis_binary<W: Write>(out: &mut W, basis: &BasisSet) -> Result<()> {
    let cells = basis.mesh().cell_count();
    let tr0 = basis.trajectory(0);
    out.write_all(b"MSFB")?;
    out.write_all(&SCHEMA_VERSION.to_le_bytes())?;
    out.write_all(&(cells as u64).to_le_bytes())?;
    out.write_all(&(tr0.fine_nodes() as u64).to_le_bytes())?;
    out.write_all(&(tr0.len() as u64).to_le_bytes())?;
    out.write_all(&tr0.dt().to_le_bytes())?;
    for tr in basis.trajectories() {
        for n in 0..tr.len() {
            for a in tr.alphas(n) {
                out.write_all(&a.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Header and coefficients read back from [`write_basis_binary`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisDump {
    pub cells: usize,
    pub fine_nodes: usize,
    pub times: usize,
    pub dt: f64,
    pub alphas: Vec<f64>,
}

pub fn read_basis_binary(bytes: &[u8]) -> Result<BasisDump> {
    let bad = |m: &str| Error::Config(format!("basis container: {m}"));
    if bytes.len() < 36 || &bytes[..4] != b"MSFB" {
        return Err(bad("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap()) as usize;
    if u32_at(4) != SCHEMA_VERSION {
        return Err(bad("unsupported version"));
    }
    let (cells, fine_nodes, times) = (u64_at(8), u64_at(16), u64_at(24));
    let dt = f64::from_le_bytes(bytes[32..40].try_into().unwrap());
    let count = cells * fine_nodes * times;
    let body = &bytes[40..];
    if body.len() != 8 * count {
        return Err(bad("truncated body"));
    }
    let alphas = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(BasisDump {
        cells,
        fine_nodes,
        times,
        dt,
        alphas,
    })
}

/// Computes the basis of one variant and writes `basis.bin` plus `basis_cell<c>.csv`.
pub fn dump_basis(
    cfg: &ExperimentConfig,
    kind: TransformKind,
    cell: usize,
    dir: &Path,
) -> Result<()> {
    cfg.validate(false)?;
    let cs = make_case(&cfg.case_params()?)?;
    let mesh = cfg.counting(false)?.mesh(cfg.n)?;
    if cell >= mesh.cell_count() {
        return Err(Error::Config(format!(
            "cell {cell} out of range (mesh has {} cells)",
            mesh.cell_count()
        )));
    }
    let (table, basis) = parallel::with_workers(cfg.workers, || offline(&cs, &mesh, kind, cfg))?;
    fs::create_dir_all(dir)?;
    let mut bin = create(&dir.join("basis.bin"))?;
    write_basis_binary(&mut bin, &basis)?;
    bin.flush()?;
    let mut csv = create(&dir.join(format!("basis_cell{cell}.csv")))?;
    writeln!(csv, "t,xi,x,phi_left,phi_right")?;
    let fine = mesh.fine(cell, cfg.n_fine)?;
    let tr = basis.trajectory(cell);
    for n in (0..tr.len()).step_by(cfg.error_every) {
        let frame = table.frame(cell, n);
        for (j, a) in tr.alphas(n).iter().enumerate() {
            let s = fine.local_coordinate(j);
            writeln!(
                csv,
                "{},{:.10},{:.10},{:.12e},{:.12e}",
                time_label(table.times()[n]),
                fine.nodes()[j],
                frame.position(s),
                a,
                1.0 - a
            )?;
        }
    }
    csv.flush()?;
    Ok(())
}

/// Writes the traced node paths as `t,x_0,...,x_{N-1}` (unwrapped).
pub fn trace_chars(cfg: &ExperimentConfig, kind: TransformKind, dir: &Path) -> Result<PathBuf> {
    cfg.validate(false)?;
    let cs = make_case(&cfg.case_params()?)?;
    let mesh = cfg.counting(false)?.mesh(cfg.n)?;
    let steps = step_count(cfg.dt, cfg.t_end)?;
    let times = time_grid(cfg.dt, steps);
    let table = parallel::with_workers(cfg.workers, || {
        CharacteristicTable::build(kind, &cs, &mesh, &times, cfg.ode_tol)
    })?;
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("characteristics_{kind}.csv"));
    let mut out = create(&path)?;
    let header: Vec<String> = (0..mesh.node_count()).map(|m| format!("x_{m}")).collect();
    writeln!(out, "t,{}", header.join(","))?;
    for n in (0..times.len()).step_by(cfg.error_every) {
        let row: Vec<String> = (0..mesh.node_count())
            .map(|m| format!("{:.12e}", table.path(m)[n]))
            .collect();
        writeln!(out, "{},{}", time_label(times[n]), row.join(","))?;
    }
    out.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(case: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(
            &format!("case = \"{case}\"\nk = 5\nv = 2.0\nalpha = 0.0\nn = 6\nn_fine = 8\ndt = 0.01\nt_end = 0.1\nn_ref = 60\nsnapshot_times = [0.05, 0.1]\nerror_every = 2\n"),
            &[],
        )
        .unwrap()
    }

    #[test]
    fn defaults_and_overrides() {
        let cfg = ExperimentConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg = ExperimentConfig::from_toml_str(
            "case = \"case2\"\nk = 3",
            &[
                "k=60".into(),
                "variants=[\"fem\"]".into(),
                "n_counts=cells".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.k, Some(60));
        assert_eq!(cfg.variant_list().unwrap(), vec![Variant::Fem]);
        assert_eq!(cfg.counting(false).unwrap(), CountConvention::Cells);
        assert!(ExperimentConfig::from_toml_str("bogus = 1", &[]).is_err());
        assert!(parse_override("no-equals").is_err());
    }

    #[test]
    fn round_trip_through_toml() {
        let cfg = quick("case3");
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml(), &[]).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn validation() {
        let mut cfg = quick("case1");
        cfg.validate(false).unwrap();
        cfg.t_end = 0.105;
        cfg.dt = 0.01;
        assert!(cfg.validate(false).is_err());
        let mut cfg = quick("case1");
        cfg.n_ref = 59;
        assert!(cfg.validate(false).is_err());
        let mut cfg = quick("case1");
        cfg.t_end = 0.0;
        assert!(cfg.validate(false).is_err());
        let mut cfg = quick("case1");
        cfg.n_list = vec![48, 24];
        assert!(cfg.validate(true).is_err());
        let mut cfg = quick("case1");
        cfg.case = "case9".into();
        assert!(matches!(cfg.validate(false), Err(Error::UnknownCase(_))));
    }

    #[test]
    fn schedule_contains_snapshots() {
        let cfg = quick("case1");
        let s = cfg.schedule().unwrap();
        assert_eq!(s.len(), 7);
        assert!(s.iter().any(|t| (t - 0.05).abs() < 1e-12));
        assert!((s[6] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn case_run_writes_outputs() {
        let cfg = quick("case2");
        let report = run_case(&cfg).unwrap();
        assert_eq!(report.variants.len(), 3);
        for v in [Variant::Fem, Variant::MeanFlowMsFem, Variant::CharMsFem] {
            let d = report.result(v).unwrap();
            assert_eq!(d.errors.len(), report.times.len());
            assert_eq!(d.errors[0].time, 0.0);
        }
        let dir = tempfile::tempdir().unwrap();
        write_case(&report, dir.path()).unwrap();
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 3 * 5);
        let errors = fs::read_to_string(dir.path().join("errors_case2.csv")).unwrap();
        assert_eq!(errors.lines().count(), 1 + 3 * report.times.len());
        assert!(dir.path().join("table_2.csv").exists());
        assert!(dir.path().join("snapshots.gp").exists());
        for t in ["0.05", "0.1"] {
            let name = format!("snapshots_char-msfem_t{t}.csv");
            let snaps = fs::read_to_string(dir.path().join(name)).unwrap();
            assert_eq!(snaps.lines().count(), 1 + 60);
            assert!(snaps.lines().nth(1).unwrap().starts_with(&format!("{t},")));
        }
        assert!(dir.path().join("snapshots_reference_t0.1.csv").exists());
    }

    #[test]
    fn failing_variant_does_not_abort_others() {
        // stagnation points attract the traced nodes; the mean-flow variants still run
        let mut cfg = quick("case3");
        cfg.v = Some(0.5);
        cfg.n = 30;
        cfg.n_ref = 300;
        cfg.t_end = 3.0;
        cfg.dt = 0.01;
        cfg.snapshot_times = vec![3.0];
        cfg.error_every = 50;
        let report = run_case(&cfg).unwrap();
        let char_result = report
            .variants
            .iter()
            .find(|r| r.variant == Variant::CharMsFem)
            .unwrap();
        assert!(matches!(
            char_result.outcome,
            Err(Error::CellCollapse { .. })
        ));
        assert!(report.result(Variant::Fem).is_some());
        assert!(report.result(Variant::MeanFlowMsFem).is_some());
        let dir = tempfile::tempdir().unwrap();
        write_case(&report, dir.path()).unwrap();
        assert!(dir.path().join("failures.txt").exists());
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 1 + 3 * 5);
    }

    #[test]
    fn basis_container_round_trip() {
        let cfg = quick("case1");
        let dir = tempfile::tempdir().unwrap();
        dump_basis(&cfg, TransformKind::Characteristic, 2, dir.path()).unwrap();
        let bytes = fs::read(dir.path().join("basis.bin")).unwrap();
        let dump = read_basis_binary(&bytes).unwrap();
        assert_eq!((dump.cells, dump.fine_nodes, dump.times), (5, 8, 11));
        assert_eq!(dump.alphas[0], 1.0);
        assert_eq!(dump.alphas[7], 0.0);
        assert!(read_basis_binary(&bytes[..50]).is_err());
        assert!(dump_basis(&cfg, TransformKind::Characteristic, 5, dir.path()).is_err());
    }

    #[test]
    fn characteristic_csv_shape() {
        let cfg = quick("case1");
        let dir = tempfile::tempdir().unwrap();
        let path = trace_chars(&cfg, TransformKind::Characteristic, dir.path()).unwrap();
        let text = fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines[0].split(',').count(), 7);
    }

    #[test]
    fn single_point_convergence_table() {
        let mut cfg = quick("convergence");
        cfg.n_list = vec![6];
        let dir = tempfile::tempdir().unwrap();
        let table = run_convergence(&cfg, dir.path()).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert!(table.rows[0].rel_l2 > 0.0);
        let script = fs::read_to_string(dir.path().join("table_6.gp")).unwrap();
        assert!(script.contains("table_6.csv"));
    }
}
