//! Implicit trapezoidal rule with full Newton iteration.
//!
//! Each step solves
//! `g(y) = y - y_n - h/2 (f(t_n + h, y) + f(t_n, y_n)) = 0`
//! with the iteration matrix `I - h/2 J(y_k)` factored by dense LU with
//! partial pivoting. The Jacobian is refreshed every iteration.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::MassGrid;
use crate::kernels::{KineticParams, TemperatureProfile};

/// A first-order system `y' = f(t, y)` with an analytic Jacobian.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>>;
    fn jacobian(&self, t: f64, y: &DVector<f64>) -> Result<DMatrix<f64>>;
}

/// Newton stopping rule.
///
/// The residual norm is the weighted max-norm `max_k |g_k| / max(1, |y_k|)`:
/// absolute for concentrations of order one or smaller, relative for cell
/// densities of order 1e6 and above, where an absolute 1e-10 lies below
/// double-precision resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Maximum number of times a failed step is split in half before giving up.
    pub max_halvings: u32,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            max_halvings: 6,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::config("newton.tolerance", "must be > 0"));
        }
        if self.max_iterations < 1 {
            return Err(Error::config("newton.max_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// Outcome of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Time at the end of the step.
    pub t: f64,
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// Number of sub-steps used (1 unless the step had to be halved).
    pub substeps: usize,
}

fn residual_norm(g: &DVector<f64>, y: &DVector<f64>) -> f64 {
    g.iter()
        .zip(y.iter())
        .map(|(gk, yk)| gk.abs() / yk.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// One implicit trapezoidal step from `(t_n, y_n)` with step `h`.
///
/// `f_n` may carry a precomputed `f(t_n, y_n)`.
pub fn trapezoid_step<S: OdeSystem + ?Sized>(
    system: &S,
    t_n: f64,
    y_n: &DVector<f64>,
    f_n: Option<&DVector<f64>>,
    h: f64,
    cfg: &NewtonConfig,
) -> Result<(DVector<f64>, StepRecord)> {
    if !(h > 0.0) {
        return Err(Error::Domain(format!("step size must be > 0, got {h}")));
    }
    let owned;
    let f_n = match f_n {
        Some(f) => f,
        None => {
            owned = system.rhs(t_n, y_n)?;
            &owned
        }
    };
    let t_next = t_n + h;
    let half = 0.5 * h;
    let explicit_part = y_n + f_n * half;

    let mut y = y_n.clone();
    let mut f = system.rhs(t_next, &y)?;
    let mut g = &y - &explicit_part - &f * half;
    let mut residual = f64::INFINITY;
    for iter in 1..=cfg.max_iterations {
        let mut m = system.jacobian(t_next, &y)?;
        m *= -half;
        for k in 0..m.nrows() {
            m[(k, k)] += 1.0;
        }
        let delta = m.lu().solve(&(-&g)).ok_or_else(|| Error::StepFailure {
            t: t_n,
            residual,
            reason: "singular Newton matrix".into(),
        })?;
        y += delta;
        f = system.rhs(t_next, &y)?;
        g = &y - &explicit_part - &f * half;
        residual = residual_norm(&g, &y);
        if !residual.is_finite() {
            break;
        }
        if residual <= cfg.tolerance {
            return Ok((
                y,
                StepRecord {
                    t: t_next,
                    newton_iterations: iter,
                    residual_norm: residual,
                    converged: true,
                    substeps: 1,
                },
            ));
        }
    }
    Err(Error::StepFailure {
        t: t_n,
        residual,
        reason: format!("Newton did not converge in {} iterations", cfg.max_iterations),
    })
}

/// Step with recursive halving on Newton failure.
fn robust_step<S: OdeSystem + ?Sized>(
    system: &S,
    t_n: f64,
    y_n: &DVector<f64>,
    h: f64,
    cfg: &NewtonConfig,
    depth: u32,
) -> Result<(DVector<f64>, StepRecord)> {
    match trapezoid_step(system, t_n, y_n, None, h, cfg) {
        Ok(ok) => Ok(ok),
        Err(Error::StepFailure { t, residual, reason }) if depth < cfg.max_halvings => {
            warn!("step at t = {t} failed ({reason}, residual {residual:e}); halving h = {h}");
            let (y_mid, r1) = robust_step(system, t_n, y_n, 0.5 * h, cfg, depth + 1)?;
            let (y_end, r2) = robust_step(system, t_n + 0.5 * h, &y_mid, 0.5 * h, cfg, depth + 1)?;
            Ok((
                y_end,
                StepRecord {
                    t: t_n + h,
                    newton_iterations: r1.newton_iterations + r2.newton_iterations,
                    residual_norm: r1.residual_norm.max(r2.residual_norm),
                    converged: true,
                    substeps: r1.substeps + r2.substeps,
                },
            ))
        }
        Err(e) => Err(e),
    }
}

/// States on the uniform time grid `t_0, t_0 + h, ..., t_final`.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// `records[k]` describes the step that produced `states[k + 1]`.
    pub records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn last(&self) -> Option<&DVector<f64>> {
        self.states.last()
    }

    /// Index of the stored time nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(k, _)| k)
    }
}

/// Integration aborted; carries everything computed before the failure.
#[derive(Debug)]
pub struct IntegrationFailure {
    pub partial: Trajectory,
    pub error: Error,
}

impl std::fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "integration failed after {} steps: {}",
            self.partial.records.len(),
            self.error
        )
    }
}

impl std::error::Error for IntegrationFailure {}

/// Number of fixed steps of size `h` covering `[0, span]`.
pub fn step_count(span: f64, h: f64) -> Result<usize> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::config("dt", format!("must be > 0, got {h}")));
    }
    if !(span >= 0.0) {
        return Err(Error::config("t_final", format!("must be >= 0, got {span}")));
    }
    let n = (span / h).round();
    if (n * h - span).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::config(
            "dt",
            format!("step {h} does not divide the horizon {span}"),
        ));
    }
    Ok(n as usize)
}

/// Fixed-step march from `t0` to `t_final`. `observer` sees every accepted
/// step together with the new state.
pub fn integrate<S, O>(
    system: &S,
    y0: DVector<f64>,
    t0: f64,
    t_final: f64,
    h: f64,
    cfg: &NewtonConfig,
    mut observer: O,
) -> Result<Trajectory, IntegrationFailure>
where
    S: OdeSystem + ?Sized,
    O: FnMut(&StepRecord, &DVector<f64>),
{
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![y0],
        records: Vec::new(),
    };
    let n_steps = match step_count(t_final - t0, h) {
        Ok(n) => n,
        Err(error) => return Err(IntegrationFailure { partial: traj, error }),
    };
    for k in 0..n_steps {
        let t_n = t0 + k as f64 * h;
        let y_n = traj.states.last().expect("trajectory is never empty");
        match robust_step(system, t_n, y_n, h, cfg, 0) {
            Ok((y, mut rec)) => {
                rec.t = if k + 1 == n_steps { t_final } else { t0 + (k + 1) as f64 * h };
                debug!("t = {:.6} iters = {} res = {:e}", rec.t, rec.newton_iterations, rec.residual_norm);
                observer(&rec, &y);
                traj.times.push(rec.t);
                traj.states.push(y);
                traj.records.push(rec);
            }
            Err(error) => return Err(IntegrationFailure { partial: traj, error }),
        }
    }
    Ok(traj)
}

/// Advisory step size from the CFL condition of the growth advection:
/// `cfl * dm / v_max` with `v_max` the largest edge growth velocity at
/// `state_probe = (N, E, S, O)` over the temperature range of the profile.
/// Returns `cap` when every velocity vanishes.
pub fn suggest_dt(
    grid: &MassGrid,
    kinetic: &KineticParams,
    profile: &TemperatureProfile,
    state_probe: [f64; 4],
    cfl: f64,
    cap: f64,
) -> Result<f64> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(Error::Domain(format!("cfl must lie in (0, 1], got {cfl}")));
    }
    let [n, e, s, o] = state_probe;
    let m_edge = grid.edges().iter().fold(0.0_f64, |a, &m| a.max(m.abs()));
    let v_max = [profile.min_temperature(), profile.max_temperature()]
        .into_iter()
        .map(|temp| kinetic.specific_rates(n, e, s, o, temp).r_eps.abs() * m_edge)
        .fold(0.0, f64::max);
    if v_max > 0.0 {
        Ok(cfl * grid.dm() / v_max)
    } else {
        Ok(cap)
    }
}
