//! Running configured simulations and writing their CSV artifacts.
//!
//! Output directory layout:
//! - `trajectory.csv`: one row per time step
//! - `density_t<time>.csv`: cell number density snapshots (population model only)
//! - `run_summary`: `key = value` lines with final values and step statistics

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};
use nalgebra::DVector;

use crate::config::{ModelKind, SimulationConfig};
use crate::error::{Error, Result};
use crate::grid::MassGrid;
use crate::initial::build_initial_density;
use crate::integrator::{integrate, Trajectory};
use crate::operator::DiscreteOperator;
use crate::reduced::{OdeState, ReducedModel};
use crate::system::{PopulationModel, SystemState};

/// Densities below `-POSITIVITY_BAND * max w` count as a failed run.
pub const POSITIVITY_BAND: f64 = 1e-9;

pub const IDE_COLUMNS: [&str; 9] = [
    "t",
    "N",
    "E",
    "S",
    "O",
    "total_cells",
    "log10_total_cells",
    "T",
    "newton_iters",
];
pub const ODE_COLUMNS: [&str; 5] = ["t", "N", "E", "S", "O"];

/// Everything a run produced, in memory.
#[derive(Debug)]
pub struct SimulationOutput {
    pub model: ModelKind,
    /// Mass grid of the population model; `None` for the ODE.
    pub grid: Option<MassGrid>,
    pub trajectory: Trajectory,
    pub wall_time: Duration,
    /// Set when the run stopped early or left the positivity band.
    pub failure: Option<Error>,
    /// Smallest and largest density over all cells and times.
    pub min_w: f64,
    pub max_w: f64,
}

/// Newton statistics over the accepted steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub steps: usize,
    pub median_iterations: usize,
    pub max_iterations: usize,
    pub max_residual: f64,
    pub halved_steps: usize,
}

impl SimulationOutput {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    fn offset(&self) -> usize {
        match &self.grid {
            Some(g) => g.n_cells(),
            None => 1,
        }
    }

    /// `(N, E, S, O)` at stored step `k`.
    pub fn concentrations(&self, k: usize) -> [f64; 4] {
        let y = &self.trajectory.states[k];
        let c = self.offset();
        [y[c], y[c + 1], y[c + 2], y[c + 3]]
    }

    pub fn final_concentrations(&self) -> [f64; 4] {
        self.concentrations(self.trajectory.states.len() - 1)
    }

    /// Density at stored step `k`; `None` for the ODE.
    pub fn density(&self, k: usize) -> Option<&[f64]> {
        let c = self.grid.as_ref()?.n_cells();
        Some(&self.trajectory.states[k].as_slice()[..c])
    }

    /// Total cells per ml at step `k`.
    pub fn total_cells(&self, k: usize) -> Option<f64> {
        Some(self.grid.as_ref()?.total(self.density(k)?))
    }

    pub fn index_at(&self, t: f64) -> usize {
        self.trajectory.nearest_index(t).unwrap_or(0)
    }

    pub fn step_stats(&self) -> StepStats {
        let recs = &self.trajectory.records;
        let mut iters: Vec<usize> = recs.iter().map(|r| r.newton_iterations).collect();
        iters.sort_unstable();
        StepStats {
            steps: recs.len(),
            median_iterations: iters.get(iters.len() / 2).copied().unwrap_or(0),
            max_iterations: iters.last().copied().unwrap_or(0),
            max_residual: recs.iter().map(|r| r.residual_norm).fold(0.0, f64::max),
            halved_steps: recs.iter().filter(|r| r.substeps > 1).count(),
        }
    }

    /// `min w / max w` over the whole run; zero or above means no negative density.
    pub fn positivity_ratio(&self) -> f64 {
        if self.max_w > 0.0 {
            self.min_w / self.max_w
        } else {
            0.0
        }
    }
}

/// Integrates the configured model without touching the file system.
///
/// Configuration problems are returned as errors. An integration failure is
/// not: the output then carries the partial trajectory and `failure`.
pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let grid = cfg.mass_grid()?;
    let w0 = build_initial_density(&cfg.distribution, &grid)?;
    let ic = cfg.initial;
    let start = Instant::now();
    match cfg.model {
        ModelKind::Ide => {
            let operator = Arc::new(DiscreteOperator::assemble(&grid, &cfg.division, cfg.n_quad));
            let model = PopulationModel::new(operator, cfg.kinetic, cfg.profile);
            let y0 = SystemState { t: 0.0, w: w0, n: ic.n0, e: ic.e0, s: ic.s0, o: ic.o0 };
            let c = grid.n_cells();
            let (mut min_w, mut max_w) = extremes(&y0.to_vector(), c);
            let result = integrate(&model, y0.to_vector(), 0.0, cfg.t_final, cfg.dt, &cfg.newton, |_, y| {
                let (lo, hi) = extremes(y, c);
                min_w = min_w.min(lo);
                max_w = max_w.max(hi);
            });
            let (trajectory, mut failure) = split(result);
            if failure.is_none() && min_w < -POSITIVITY_BAND * max_w {
                failure = Some(Error::Numerical(format!(
                    "density left the positivity band: min w = {min_w:e}, max w = {max_w:e}"
                )));
            }
            Ok(SimulationOutput {
                model: cfg.model,
                grid: Some(grid),
                trajectory,
                wall_time: start.elapsed(),
                failure,
                min_w,
                max_w,
            })
        }
        ModelKind::Ode => {
            let model = ReducedModel::new(cfg.kinetic, cfg.profile);
            let y0 = OdeState {
                t: 0.0,
                x: grid.first_moment(&w0),
                n: ic.n0,
                e: ic.e0,
                s: ic.s0,
                o: ic.o0,
            };
            let (trajectory, failure) = split(model.run(&y0, cfg.t_final, cfg.dt, &cfg.newton));
            Ok(SimulationOutput {
                model: cfg.model,
                grid: None,
                trajectory,
                wall_time: start.elapsed(),
                failure,
                min_w: 0.0,
                max_w: 0.0,
            })
        }
    }
}

fn extremes(y: &DVector<f64>, c: usize) -> (f64, f64) {
    y.rows(0, c)
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn split(
    result: std::result::Result<Trajectory, crate::integrator::IntegrationFailure>,
) -> (Trajectory, Option<Error>) {
    match result {
        Ok(t) => (t, None),
        Err(f) => {
            warn!("{f}");
            (f.partial, Some(f.error))
        }
    }
}

/// Runs the configured model and writes all artifacts into `cfg.output_dir`.
/// Partial outputs are written on failure as well.
pub fn run(cfg: &SimulationConfig) -> Result<SimulationOutput> {
    let out = simulate(cfg)?;
    write_outputs(&out, cfg, &cfg.output_dir)?;
    info!(
        "{} run finished in {:.2} s, status {}",
        cfg.model,
        out.wall_time.as_secs_f64(),
        if out.succeeded() { "ok" } else { "failed" }
    );
    Ok(out)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Short decimal form of a snapshot time used in file names.
pub fn time_label(t: f64) -> String {
    let s = format!("{t:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn write_outputs(out: &SimulationOutput, cfg: &SimulationConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_trajectory(out, cfg, &dir.join("trajectory.csv"))?;
    if let Some(grid) = &out.grid {
        for &t in &cfg.snapshot_times {
            let k = out.index_at(t);
            if (out.trajectory.times[k] - t).abs() > cfg.dt {
                // run stopped before this snapshot
                continue;
            }
            let w = out.density(k).expect("population model has densities");
            let mut wr = csv::Writer::from_path(dir.join(format!("density_t{}.csv", time_label(t))))?;
            wr.write_record(["m_center", "w"])?;
            for (m, v) in grid.centers().iter().zip(w) {
                wr.write_record([num(*m), num(*v)])?;
            }
            wr.flush()?;
        }
    }
    write_summary(out, cfg, &dir.join("run_summary"))
}

fn write_trajectory(out: &SimulationOutput, cfg: &SimulationConfig, path: &Path) -> Result<()> {
    let mut wr = csv::Writer::from_path(path)?;
    match out.model {
        ModelKind::Ide => {
            wr.write_record(IDE_COLUMNS)?;
            for (k, &t) in out.trajectory.times.iter().enumerate() {
                let [n, e, s, o] = out.concentrations(k);
                let total = out.total_cells(k).expect("population model has densities");
                let iters = if k == 0 { 0 } else { out.trajectory.records[k - 1].newton_iterations };
                wr.write_record([
                    num(t),
                    num(n),
                    num(e),
                    num(s),
                    num(o),
                    num(total),
                    num(total.log10()),
                    num(cfg.profile.at(t)),
                    iters.to_string(),
                ])?;
            }
        }
        ModelKind::Ode => {
            wr.write_record(ODE_COLUMNS)?;
            for (k, &t) in out.trajectory.times.iter().enumerate() {
                let [n, e, s, o] = out.concentrations(k);
                wr.write_record([num(t), num(n), num(e), num(s), num(o)])?;
            }
        }
    }
    wr.flush()?;
    Ok(())
}

fn write_summary(out: &SimulationOutput, cfg: &SimulationConfig, path: &Path) -> Result<()> {
    let stats = out.step_stats();
    let last = out.trajectory.states.len() - 1;
    let [n, e, s, o] = out.concentrations(last);
    let mut lines = vec![
        ("model".to_string(), cfg.model.to_string()),
        ("status".into(), if out.succeeded() { "ok".into() } else { "failed".into() }),
        (
            "failure".into(),
            out.failure.as_ref().map_or_else(|| "none".into(), |e| e.to_string()),
        ),
        ("wall_time_s".into(), format!("{:.3}", out.wall_time.as_secs_f64())),
        ("dt".into(), num(cfg.dt)),
        ("t_final".into(), num(cfg.t_final)),
        ("t_reached".into(), num(out.trajectory.times[last])),
        ("n_cells".into(), cfg.grid.n_cells.to_string()),
        ("distribution".into(), cfg.distribution.kind.to_string()),
        ("steps".into(), stats.steps.to_string()),
        ("newton_median_iterations".into(), stats.median_iterations.to_string()),
        ("newton_max_iterations".into(), stats.max_iterations.to_string()),
        ("newton_max_residual".into(), format!("{:e}", stats.max_residual)),
        ("halved_steps".into(), stats.halved_steps.to_string()),
        ("final_N".into(), num(n)),
        ("final_E".into(), num(e)),
        ("final_S".into(), num(s)),
        ("final_O".into(), num(o)),
    ];
    if let Some(total) = out.total_cells(last) {
        lines.push(("final_total_cells".into(), num(total)));
        lines.push(("min_w".into(), num(out.min_w)));
        lines.push(("max_w".into(), num(out.max_w)));
    } else {
        lines.push(("final_X".into(), num(out.trajectory.states[last][0])));
    }
    let snaps: Vec<String> = cfg.snapshot_times.iter().map(|t| t.to_string()).collect();
    lines.push(("snapshot_times".into(), snaps.join(",")));

    let mut f = fs::File::create(path)?;
    for (k, v) in lines {
        writeln!(f, "{k} = {v}")?;
    }
    Ok(())
}

/// A numeric CSV table with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path)?;
        let columns: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| {
                        Error::Numerical(format!("{}: non-numeric field `{f}`", path.display()))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Reads `key = value` lines of a run summary.
pub fn read_summary(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_difference(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Per-state relative differences between two runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub states: Vec<String>,
    /// `(t, differences)` at the snapshot times.
    pub at_snapshots: Vec<(f64, Vec<f64>)>,
    /// Maximum over all common time points.
    pub max_over_horizon: Vec<f64>,
}

const COMPARED: [&str; 4] = ["N", "E", "S", "O"];

/// Compares the trajectories stored in two output directories.
///
/// Both runs must share the time grid. Snapshot times are taken from the
/// first run's summary (final time only when absent).
pub fn compare_runs(a_dir: &Path, b_dir: &Path) -> Result<Comparison> {
    let a = Table::read(&a_dir.join("trajectory.csv"))?;
    let b = Table::read(&b_dir.join("trajectory.csv"))?;
    let ta = a.column("t").ok_or_else(|| missing(a_dir, "t"))?;
    let tb = b.column("t").ok_or_else(|| missing(b_dir, "t"))?;
    let same_grid = ta.len() == tb.len()
        && ta.iter().zip(&tb).all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0));
    if !same_grid {
        return Err(Error::GridMismatch(format!(
            "{} has {} time points, {} has {}",
            a_dir.display(),
            ta.len(),
            b_dir.display(),
            tb.len()
        )));
    }

    let mut states = Vec::new();
    let mut cols = Vec::new();
    for name in COMPARED {
        if let (Some(x), Some(y)) = (a.column(name), b.column(name)) {
            states.push(name.to_string());
            cols.push((x, y));
        }
    }

    let snapshot_times: Vec<f64> = read_summary(&a_dir.join("run_summary"))
        .ok()
        .and_then(|kv| kv.into_iter().find(|(k, _)| k == "snapshot_times"))
        .map(|(_, v)| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![*ta.last().unwrap_or(&0.0)]);

    let nearest = |t: f64| {
        ta.iter()
            .enumerate()
            .min_by(|x, y| (x.1 - t).abs().total_cmp(&(y.1 - t).abs()))
            .map_or(0, |(k, _)| k)
    };
    let at_snapshots = snapshot_times
        .iter()
        .map(|&t| {
            let k = nearest(t);
            (ta[k], cols.iter().map(|(x, y)| relative_difference(x[k], y[k])).collect())
        })
        .collect();
    let max_over_horizon = cols
        .iter()
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(p, q)| relative_difference(*p, *q))
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(Comparison { states, at_snapshots, max_over_horizon })
}

fn missing(dir: &Path, col: &str) -> Error {
    Error::Numerical(format!("{}: trajectory.csv has no `{col}` column", dir.display()))
}

impl Comparison {
    /// Writes `t,<states>` rows followed by a `max` row.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wr = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend(self.states.iter().cloned());
        wr.write_record(&header)?;
        for (t, diffs) in &self.at_snapshots {
            let mut row = vec![num(*t)];
            row.extend(diffs.iter().map(|d| num(*d)));
            wr.write_record(&row)?;
        }
        let mut row = vec!["max".to_string()];
        row.extend(self.max_over_horizon.iter().map(|d| num(*d)));
        wr.write_record(&row)?;
        wr.flush()?;
        Ok(())
    }
}

/// Compares two output directories and writes the report to `out`.
pub fn compare(a_dir: &Path, b_dir: &Path, out: &Path) -> Result<Comparison> {
    let cmp = compare_runs(a_dir, b_dir)?;
    cmp.write_csv(out)?;
    Ok(cmp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigSource;

    fn short(model: &str, dir: &Path) -> SimulationConfig {
        let mut src = ConfigSource::parse(&format!(
            "n_cells = 20\nt_final = 0.5\ndt = 0.0078125\nmodel = {model}\noutput.snapshot_times = 0, 0.25, 0.5\n"
        ))
        .unwrap();
        src.set("output.dir", dir.to_str().unwrap()).unwrap();
        src.build().unwrap()
    }

    #[test]
    fn ide_run_writes_expected_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = short("ide", dir.path());
        let out = run(&cfg).unwrap();
        assert!(out.succeeded(), "{:?}", out.failure);
        let traj = Table::read(&dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(traj.columns, IDE_COLUMNS);
        assert_eq!(traj.rows.len(), 65);
        assert!((traj.rows[0][5] - 1e6).abs() < 1e-6);
        for name in ["density_t0.csv", "density_t0.25.csv", "density_t0.5.csv"] {
            let snap = Table::read(&dir.path().join(name)).unwrap();
            assert_eq!(snap.columns, ["m_center", "w"]);
            assert_eq!(snap.rows.len(), 20);
        }
        let summary = read_summary(&dir.path().join("run_summary")).unwrap();
        assert!(summary.contains(&("status".into(), "ok".into())));
    }

    #[test]
    fn ode_run_has_five_columns_and_no_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = short("ode", dir.path());
        run(&cfg).unwrap();
        let traj = Table::read(&dir.path().join("trajectory.csv")).unwrap();
        assert_eq!(traj.columns, ODE_COLUMNS);
        assert!(!dir.path().join("density_t0.csv").exists());
    }

    #[test]
    fn comparing_a_run_with_itself_gives_zero() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = short("ide", dir.path());
        run(&cfg).unwrap();
        let report = dir.path().join("cmp.csv");
        let cmp = compare(dir.path(), dir.path(), &report).unwrap();
        assert_eq!(cmp.states, ["N", "E", "S", "O"]);
        assert!(cmp.max_over_horizon.iter().all(|d| *d == 0.0));
        let table = Table::read(&report);
        // the last row is labelled `max`, so the numeric reader rejects it
        assert!(table.is_err());
        let text = fs::read_to_string(&report).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 1);
        assert!(text.lines().last().unwrap().starts_with("max,"));
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&short("ide", a.path())).unwrap();
        let mut cfg = short("ide", b.path());
        cfg.dt = 0.015625;
        run(&cfg).unwrap();
        assert!(matches!(compare_runs(a.path(), b.path()), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn labels() {
        assert_eq!(time_label(10.0), "10");
        assert_eq!(time_label(0.0), "0");
        assert_eq!(time_label(1.0 / 12.0), "0.0833");
        assert_eq!(time_label(0.25), "0.25");
    }

    #[test]
    fn relative_difference_cases() {
        assert_eq!(relative_difference(0.0, 0.0), 0.0);
        assert_eq!(relative_difference(2.0, 1.0), 0.5);
        assert_eq!(relative_difference(-1.0, 1.0), 2.0);
    }
}
