//! Simulation configuration files.
//!
//! Format: one `key = value` per line, `#` starts a comment. Keys are dotted
//! (`division.gamma = 200`); a bare key is accepted when it names exactly one
//! dotted key (`tol = 79` means `kinetic.tol`). Numbers are decimal or
//! scientific notation. Lists are comma-separated.
//!
//! Anything not set keeps its default. Defaults that depend on other keys
//! (the partition amplitude on `division.beta`, the temperature ramp on
//! `t_final`) are resolved after all entries are read.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::MassGrid;
use crate::initial::DistributionSpec;
use crate::integrator::{step_count, NewtonConfig};
use crate::kernels::{compute_lambda, DivisionParams, KineticParams, TemperatureProfile};
use crate::operator::DEFAULT_N_QUAD;

/// Which model a run integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelKind {
    /// Mass-structured population balance.
    #[default]
    Ide,
    /// First-moment ODE.
    Ode,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ide => "ide",
            ModelKind::Ode => "ode",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ide" => Ok(ModelKind::Ide),
            "ode" => Ok(ModelKind::Ode),
            _ => Err(Error::config("model", format!("expected `ide` or `ode`, got `{s}`"))),
        }
    }
}

/// Initial concentrations in g/l.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialConcentrations {
    pub n0: f64,
    pub e0: f64,
    pub s0: f64,
    pub o0: f64,
}

impl Default for InitialConcentrations {
    /// Calibrated so the default run ends near 18 g/l sugar, 99 g/l ethanol
    /// and 0.019 g/l nitrogen. `o0` is air saturation at 15 C.
    fn default() -> Self {
        Self {
            n0: 0.34,
            e0: 0.0,
            s0: 196.0,
            o0: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub m_min: f64,
    pub m_max: f64,
    pub n_cells: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            m_min: 0.001,
            m_max: 0.999,
            n_cells: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub kinetic: KineticParams,
    pub division: DivisionParams,
    pub profile: TemperatureProfile,
    pub grid: GridSpec,
    pub dt: f64,
    pub t_final: f64,
    pub distribution: DistributionSpec,
    pub initial: InitialConcentrations,
    pub newton: NewtonConfig,
    pub n_quad: usize,
    pub snapshot_times: Vec<f64>,
    pub output_dir: PathBuf,
    pub model: ModelKind,
}

pub const DEFAULT_DT: f64 = 1.0 / 192.0;
pub const DEFAULT_T_FINAL: f64 = 20.0;

/// Snapshot days used unless `output.snapshot_times` is set; entries beyond
/// `t_final` are dropped and `t_final` itself is always included.
const DEFAULT_SNAPSHOTS: [f64; 10] = [0.0, 1.0 / 12.0, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 15.0, 20.0];

impl Default for SimulationConfig {
    fn default() -> Self {
        ConfigSource::default()
            .build()
            .expect("built-in defaults are valid")
    }
}

impl SimulationConfig {
    pub fn mass_grid(&self) -> Result<MassGrid> {
        MassGrid::new(self.grid.m_min, self.grid.m_max, self.grid.n_cells)
    }

    pub fn n_steps(&self) -> Result<usize> {
        step_count(self.t_final, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::config("t_final", format!("must be > 0, got {}", self.t_final)));
        }
        self.n_steps()?;
        self.profile.validate()?;
        self.kinetic
            .validate(self.profile.min_temperature(), self.profile.max_temperature())?;
        self.mass_grid()?;
        if !(self.grid.m_min > 0.0) {
            return Err(Error::config("grid.m_min", "must be > 0"));
        }
        self.division.validate(self.grid.m_max)?;
        self.distribution.validate()?;
        self.newton.validate()?;
        if self.n_quad < 1 {
            return Err(Error::config("quadrature.n_quad", "must be >= 1"));
        }
        let ic = &self.initial;
        for (key, v) in [
            ("initial.n0", ic.n0),
            ("initial.e0", ic.e0),
            ("initial.s0", ic.s0),
            ("initial.o0", ic.o0),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be >= 0, got {v}")));
            }
        }
        if let Some(t) = self
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_final))
        {
            return Err(Error::config(
                "output.snapshot_times",
                format!("{t} outside [0, {}]", self.t_final),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Count,
    Text,
    List,
}

const KEYS: &[(&str, Kind)] = &[
    ("kinetic.mu1", Kind::Real),
    ("kinetic.mu2", Kind::Real),
    ("kinetic.beta1", Kind::Real),
    ("kinetic.beta2", Kind::Real),
    ("kinetic.ke1", Kind::Real),
    ("kinetic.ke2", Kind::Real),
    ("kinetic.kn", Kind::Real),
    ("kinetic.ks1", Kind::Real),
    ("kinetic.ks2", Kind::Real),
    ("kinetic.ko", Kind::Real),
    ("kinetic.k1", Kind::Real),
    ("kinetic.k2", Kind::Real),
    ("kinetic.k3", Kind::Real),
    ("kinetic.k4", Kind::Real),
    ("kinetic.kd", Kind::Real),
    ("kinetic.kd1", Kind::Real),
    ("kinetic.kd2", Kind::Real),
    ("kinetic.tol", Kind::Real),
    ("kinetic.eps", Kind::Real),
    ("kinetic.biomass_scale", Kind::Real),
    ("division.gamma", Kind::Real),
    ("division.delta", Kind::Real),
    ("division.beta", Kind::Real),
    ("division.lambda", Kind::Real),
    ("division.m_t", Kind::Real),
    ("division.m_d", Kind::Real),
    ("temperature.t_low", Kind::Real),
    ("temperature.t_high", Kind::Real),
    ("temperature.ramp_start", Kind::Real),
    ("temperature.ramp_end", Kind::Real),
    ("grid.m_min", Kind::Real),
    ("grid.m_max", Kind::Real),
    ("grid.n_cells", Kind::Count),
    ("dt", Kind::Real),
    ("t_final", Kind::Real),
    ("model", Kind::Text),
    ("initial.n0", Kind::Real),
    ("initial.e0", Kind::Real),
    ("initial.s0", Kind::Real),
    ("initial.o0", Kind::Real),
    ("distribution.kind", Kind::Text),
    ("distribution.total_cells", Kind::Real),
    ("distribution.a", Kind::Real),
    ("distribution.b", Kind::Real),
    ("distribution.cutoff", Kind::Real),
    ("distribution.taper", Kind::Real),
    ("distribution.mean1", Kind::Real),
    ("distribution.mean2", Kind::Real),
    ("distribution.sd1", Kind::Real),
    ("distribution.sd2", Kind::Real),
    ("distribution.weight", Kind::Real),
    ("newton.tolerance", Kind::Real),
    ("newton.max_iterations", Kind::Count),
    ("newton.max_halvings", Kind::Count),
    ("quadrature.n_quad", Kind::Count),
    ("output.dir", Kind::Text),
    ("output.snapshot_times", Kind::List),
];

/// Every accepted dotted key.
pub fn known_keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|(k, _)| *k)
}

fn resolve_key(key: &str) -> Result<(&'static str, Kind)> {
    if let Some(&(k, kind)) = KEYS.iter().find(|(k, _)| *k == key) {
        return Ok((k, kind));
    }
    if !key.contains('.') {
        let mut hits = KEYS
            .iter()
            .filter(|(k, _)| k.rsplit('.').next() == Some(key));
        if let (Some(&(k, kind)), None) = (hits.next(), hits.next()) {
            return Ok((k, kind));
        }
    }
    Err(Error::config(key, "unknown key"))
}

fn parse_real(key: &str, raw: &str) -> Result<f64> {
    let ok_chars = raw
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E'));
    match raw.parse::<f64>() {
        Ok(v) if ok_chars && raw.chars().any(|c| c.is_ascii_digit()) => Ok(v),
        _ => Err(Error::config(key, format!("expected a number, got `{raw}`"))),
    }
}

fn parse_count(key: &str, raw: &str) -> Result<usize> {
    if raw.is_empty() || !raw.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::config(key, format!("expected a nonnegative integer, got `{raw}`")));
    }
    raw.parse()
        .map_err(|_| Error::config(key, format!("integer out of range: `{raw}`")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',').map(|s| parse_real(key, s.trim())).collect()
}

/// Raw key/value entries before defaults are filled in.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigSource {
    entries: BTreeMap<&'static str, String>,
}

impl ConfigSource {
    pub fn parse(text: &str) -> Result<Self> {
        let mut src = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let (canonical, _) = resolve_key(key)?;
            if src.entries.contains_key(canonical) {
                return Err(Error::config(
                    canonical,
                    format!("line {}: set more than once", lineno + 1),
                ));
            }
            src.set(canonical, value)?;
        }
        Ok(src)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Sets (or replaces) one entry; the value is type-checked immediately.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (canonical, kind) = resolve_key(key)?;
        let value = value.trim();
        match kind {
            Kind::Real => {
                parse_real(canonical, value)?;
            }
            Kind::Count => {
                parse_count(canonical, value)?;
            }
            Kind::List => {
                parse_list(canonical, value)?;
            }
            Kind::Text => {
                if value.is_empty() {
                    return Err(Error::config(canonical, "empty value"));
                }
            }
        }
        self.entries.insert(canonical, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn real(&self, key: &'static str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| parse_real(key, v))
    }

    fn count(&self, key: &'static str, default: usize) -> Result<usize> {
        self.get(key).map_or(Ok(default), |v| parse_count(key, v))
    }

    /// Fills in defaults and validates the result.
    pub fn build(&self) -> Result<SimulationConfig> {
        let t_final = self.real("t_final", DEFAULT_T_FINAL)?;
        let dt = self.real("dt", DEFAULT_DT)?;

        let k0 = KineticParams::default();
        let kinetic = KineticParams {
            mu1: self.real("kinetic.mu1", k0.mu1)?,
            mu2: self.real("kinetic.mu2", k0.mu2)?,
            beta1: self.real("kinetic.beta1", k0.beta1)?,
            beta2: self.real("kinetic.beta2", k0.beta2)?,
            ke1: self.real("kinetic.ke1", k0.ke1)?,
            ke2: self.real("kinetic.ke2", k0.ke2)?,
            kn: self.real("kinetic.kn", k0.kn)?,
            ks1: self.real("kinetic.ks1", k0.ks1)?,
            ks2: self.real("kinetic.ks2", k0.ks2)?,
            ko: self.real("kinetic.ko", k0.ko)?,
            k1: self.real("kinetic.k1", k0.k1)?,
            k2: self.real("kinetic.k2", k0.k2)?,
            k3: self.real("kinetic.k3", k0.k3)?,
            k4: self.real("kinetic.k4", k0.k4)?,
            kd: self.real("kinetic.kd", k0.kd)?,
            kd1: self.real("kinetic.kd1", k0.kd1)?,
            kd2: self.real("kinetic.kd2", k0.kd2)?,
            tol: self.real("kinetic.tol", k0.tol)?,
            eps: self.real("kinetic.eps", k0.eps)?,
            biomass_scale: self.real("kinetic.biomass_scale", k0.biomass_scale)?,
        };

        let d0 = DivisionParams::default();
        let beta = self.real("division.beta", d0.beta)?;
        let lambda = match self.get("division.lambda") {
            Some(v) => parse_real("division.lambda", v)?,
            None => compute_lambda(beta).map_err(|e| Error::config("division.beta", e.to_string()))?,
        };
        let division = DivisionParams {
            gamma: self.real("division.gamma", d0.gamma)?,
            delta: self.real("division.delta", d0.delta)?,
            lambda,
            beta,
            m_t: self.real("division.m_t", d0.m_t)?,
            m_d: self.real("division.m_d", d0.m_d)?,
        };

        let p0 = TemperatureProfile::two_stage(t_final);
        let profile = TemperatureProfile {
            t_low: self.real("temperature.t_low", p0.t_low)?,
            t_high: self.real("temperature.t_high", p0.t_high)?,
            ramp_start: self.real("temperature.ramp_start", p0.ramp_start)?,
            ramp_end: self.real("temperature.ramp_end", p0.ramp_end)?,
            t_final,
        };

        let g0 = GridSpec::default();
        let grid = GridSpec {
            m_min: self.real("grid.m_min", g0.m_min)?,
            m_max: self.real("grid.m_max", g0.m_max)?,
            n_cells: self.count("grid.n_cells", g0.n_cells)?,
        };

        let s0 = DistributionSpec::default();
        let distribution = DistributionSpec {
            kind: self.get("distribution.kind").map_or(Ok(s0.kind), str::parse)?,
            total_cells: self.real("distribution.total_cells", s0.total_cells)?,
            a: self.real("distribution.a", s0.a)?,
            b: self.real("distribution.b", s0.b)?,
            cutoff: self.real("distribution.cutoff", s0.cutoff)?,
            taper: self.real("distribution.taper", s0.taper)?,
            mean1: self.real("distribution.mean1", s0.mean1)?,
            mean2: self.real("distribution.mean2", s0.mean2)?,
            sd1: self.real("distribution.sd1", s0.sd1)?,
            sd2: self.real("distribution.sd2", s0.sd2)?,
            weight: self.real("distribution.weight", s0.weight)?,
        };

        let i0 = InitialConcentrations::default();
        let initial = InitialConcentrations {
            n0: self.real("initial.n0", i0.n0)?,
            e0: self.real("initial.e0", i0.e0)?,
            s0: self.real("initial.s0", i0.s0)?,
            o0: self.real("initial.o0", i0.o0)?,
        };

        let nw = NewtonConfig::default();
        let max_halvings = self.count("newton.max_halvings", nw.max_halvings as usize)?;
        let newton = NewtonConfig {
            tolerance: self.real("newton.tolerance", nw.tolerance)?,
            max_iterations: self.count("newton.max_iterations", nw.max_iterations)?,
            max_halvings: u32::try_from(max_halvings)
                .map_err(|_| Error::config("newton.max_halvings", "too large"))?,
        };

        let snapshot_times = match self.get("output.snapshot_times") {
            Some(v) => parse_list("output.snapshot_times", v)?,
            None => {
                let mut ts: Vec<f64> = DEFAULT_SNAPSHOTS
                    .into_iter()
                    .filter(|t| *t < t_final)
                    .collect();
                ts.push(t_final);
                ts
            }
        };

        let cfg = SimulationConfig {
            kinetic,
            division,
            profile,
            grid,
            dt,
            t_final,
            distribution,
            initial,
            newton,
            n_quad: self.count("quadrature.n_quad", DEFAULT_N_QUAD)?,
            snapshot_times,
            output_dir: PathBuf::from(self.get("output.dir").unwrap_or("output")),
            model: self.get("model").map_or(Ok(ModelKind::Ide), str::parse)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads, fills defaults and validates a configuration file.
pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    ConfigSource::read(path)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::DistributionKind;

    fn build(text: &str) -> Result<SimulationConfig> {
        ConfigSource::parse(text)?.build()
    }

    fn key_of(err: Error) -> String {
        match err {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = build("").unwrap();
        assert_eq!(cfg.kinetic, KineticParams::default());
        assert_eq!(cfg.division, DivisionParams::default());
        assert_eq!(cfg.grid.n_cells, 150);
        assert_eq!(cfg.dt, 1.0 / 192.0);
        assert_eq!(cfg.t_final, 20.0);
        assert_eq!(cfg.n_steps().unwrap(), 3840);
        assert_eq!(cfg.distribution.kind, DistributionKind::Constant);
        assert_eq!(cfg.distribution.total_cells, 1e6);
        assert_eq!(cfg.initial.e0, 0.0);
        assert_eq!(cfg.model, ModelKind::Ide);
        assert_eq!(cfg.profile.at(0.0), 15.0);
        assert_eq!(cfg.profile.at(20.0), 18.0);
        assert_eq!(*cfg.snapshot_times.last().unwrap(), 20.0);
        assert_eq!(cfg, SimulationConfig::default());
    }

    #[test]
    fn bare_and_dotted_keys() {
        let cfg = build("tol = 79\n").unwrap();
        assert_eq!(cfg.kinetic.tol, 79.0);
        let cfg = build("# comment\ndivision.gamma = 150   # trailing\nn_cells = 30\n").unwrap();
        assert_eq!(cfg.division.gamma, 150.0);
        assert_eq!(cfg.grid.n_cells, 30);
    }

    #[test]
    fn invariant_violations_name_the_key() {
        assert_eq!(key_of(build("gamma = -1").unwrap_err()), "division.gamma");
        assert_eq!(key_of(build("division.m_d = 0.2").unwrap_err()), "division.m_d");
        assert_eq!(key_of(build("dt = 0.007").unwrap_err()), "dt");
        assert_eq!(key_of(build("initial.s0 = -3").unwrap_err()), "initial.s0");
        assert_eq!(key_of(build("kinetic.mu2 = 100").unwrap_err()), "kinetic.mu1, kinetic.mu2");
    }

    #[test]
    fn malformed_entries_are_rejected() {
        assert_eq!(key_of(build("warp = 9").unwrap_err()), "warp");
        assert_eq!(key_of(build("n_cells = 30.5").unwrap_err()), "grid.n_cells");
        assert_eq!(key_of(build("kinetic.tol = inf").unwrap_err()), "kinetic.tol");
        assert_eq!(key_of(build("kinetic.tol = 0x10").unwrap_err()), "kinetic.tol");
        assert_eq!(key_of(build("tol = 1\ntol = 2").unwrap_err()), "kinetic.tol");
        assert_eq!(key_of(build("model = pde").unwrap_err()), "model");
        assert_eq!(key_of(build("distribution.kind = gaussian").unwrap_err()), "distribution.kind");
        assert!(build("just words").is_err());
    }

    #[test]
    fn dependent_defaults_follow_their_inputs() {
        let cfg = build("division.beta = 100\nt_final = 10\ndt = 0.0625").unwrap();
        assert!((cfg.division.lambda - 0.5 * (100.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert_eq!(cfg.profile.ramp_start, 4.75);
        assert_eq!(cfg.profile.ramp_end, 5.25);
        assert_eq!(*cfg.snapshot_times.last().unwrap(), 10.0);
        assert!(cfg.snapshot_times.iter().all(|t| *t <= 10.0));
    }

    #[test]
    fn scientific_notation_and_lists() {
        let cfg = build("distribution.total_cells = 2.5e6\noutput.snapshot_times = 0, 1.5, 1e1").unwrap();
        assert_eq!(cfg.distribution.total_cells, 2.5e6);
        assert_eq!(cfg.snapshot_times, vec![0.0, 1.5, 10.0]);
        assert_eq!(
            key_of(build("output.snapshot_times = 0, 25").unwrap_err()),
            "output.snapshot_times"
        );
    }

    #[test]
    fn every_key_resolves_to_itself() {
        for key in known_keys() {
            assert_eq!(resolve_key(key).unwrap().0, key);
        }
    }
}
