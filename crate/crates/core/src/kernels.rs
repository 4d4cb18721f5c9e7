//! Continuous model functions.
//!
//! Everything here is a pure function of its arguments. Units throughout the
//! crate: time in days, cell mass in scaled units on `[0.001, 0.999]`
//! (one unit is `1e-9` g), concentrations in g/l, and cell number density in
//! cells/ml per unit scaled mass.
//!
//! The checked entry points (`growth_rate_eps`, `death_phi`, ...) reject
//! arguments outside the model domain. The discretized right-hand side goes
//! through [`KineticParams::specific_rates`] instead, which never fails: Newton
//! iterates may visit slightly negative concentrations and must still be
//! evaluated.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Kinetic constants of the substrate/product equations.
///
/// `k2` and `k3` default to calibrated values (see the README). `biomass_scale`
/// converts a first moment in cells/ml × scaled mass into g/l of biomass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KineticParams {
    pub mu1: f64,
    pub mu2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub ke1: f64,
    pub ke2: f64,
    pub kn: f64,
    pub ks1: f64,
    pub ks2: f64,
    pub ko: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub kd: f64,
    pub kd1: f64,
    pub kd2: f64,
    pub tol: f64,
    pub eps: f64,
    /// g/l of biomass per (cells/ml × scaled mass): 1e-9 g per unit × 1000 ml/l.
    pub biomass_scale: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            mu1: 0.1681,
            mu2: 0.0,
            beta1: 0.1348,
            beta2: 0.0,
            ke1: 0.2616,
            ke2: 38.90,
            kn: 0.1096,
            ks1: 29.5,
            ks2: 4.3262,
            ko: 0.0007,
            k1: 0.018,
            k2: 1.9,
            k3: 0.003,
            k4: 0.0006,
            kd: 0.01,
            kd1: 99.86,
            kd2: 0.0021,
            tol: 70.0,
            eps: 0.02,
            biomass_scale: 1e-6,
        }
    }
}

/// Per-unit-mass rates and their partial derivatives at one state.
///
/// Every mass-proportional rate of the model factors as `rate(m) = tilde * m`;
/// these are the `tilde` factors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SpecificRates {
    /// Growth rate including the anaerobic term.
    pub r_eps: f64,
    /// Aerobic growth rate (drives oxygen uptake).
    pub r: f64,
    /// Ethanol production rate.
    pub q_e: f64,
    /// d r_eps / d(N, S, O)
    pub d_r_eps: [f64; 3],
    /// d r / d(N, S, O)
    pub d_r: [f64; 3],
    /// d q_e / d(S, E)
    pub d_q_e: [f64; 2],
}

impl SpecificRates {
    /// Sugar uptake factor `k2 * q_e + k3 * r_eps`.
    pub fn sugar(&self, kp: &KineticParams) -> f64 {
        kp.k2 * self.q_e + kp.k3 * self.r_eps
    }
}

/// Michaelis-Menten factor and its derivative.
#[inline]
fn saturation(x: f64, k: f64) -> (f64, f64) {
    let d = k + x;
    (x / d, k / (d * d))
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and >= 0, got {x}")))
    }
}

impl KineticParams {
    pub fn mu_max(&self, temp: f64) -> Result<f64> {
        nonneg_rate("mu_max", self.mu1 * temp - self.mu2, temp)
    }

    pub fn beta_max(&self, temp: f64) -> Result<f64> {
        nonneg_rate("beta_max", self.beta1 * temp - self.beta2, temp)
    }

    /// Ethanol inhibition constant `K_E(T)`.
    pub fn k_e(&self, temp: f64) -> Result<f64> {
        nonneg_rate("K_E", -self.ke1 * temp + self.ke2, temp)
    }

    /// Unchecked evaluation used by the discretized system.
    pub fn specific_rates(&self, n: f64, e: f64, s: f64, o: f64, temp: f64) -> SpecificRates {
        let mu = self.mu1 * temp - self.mu2;
        let beta = self.beta1 * temp - self.beta2;
        let ke = -self.ke1 * temp + self.ke2;

        let (fn_, dfn) = saturation(n, self.kn);
        let (fs, dfs) = saturation(s, self.ks1);
        let (fo, dfo) = saturation(o, self.ko);
        let (fs2, dfs2) = saturation(s, self.ks2);
        let inhib = ke / (ke + e);
        let dinhib = -ke / ((ke + e) * (ke + e));

        let aer = fo + self.eps;
        SpecificRates {
            r_eps: mu * fn_ * fs * aer,
            r: mu * fn_ * fs * fo,
            q_e: beta * fs2 * inhib,
            d_r_eps: [mu * dfn * fs * aer, mu * fn_ * dfs * aer, mu * fn_ * fs * dfo],
            d_r: [mu * dfn * fs * fo, mu * fn_ * dfs * fo, mu * fn_ * fs * dfo],
            d_q_e: [beta * dfs2 * inhib, beta * fs2 * dinhib],
        }
    }

    fn checked_rates(&self, n: f64, e: f64, s: f64, o: f64, temp: f64) -> Result<SpecificRates> {
        check_nonneg("N", n)?;
        check_nonneg("E", e)?;
        check_nonneg("S", s)?;
        check_nonneg("O", o)?;
        self.mu_max(temp)?;
        self.beta_max(temp)?;
        self.k_e(temp)?;
        Ok(self.specific_rates(n, e, s, o, temp))
    }

    /// Single-cell growth rate `r_eps(m, N, S, O)` at temperature `temp`.
    pub fn growth_rate_eps(&self, m: f64, n: f64, s: f64, o: f64, temp: f64) -> Result<f64> {
        check_nonneg("m", m)?;
        Ok(self.checked_rates(n, 0.0, s, o, temp)?.r_eps * m)
    }

    /// Aerobic growth rate `r(m, N, S, O)`; no anaerobic floor.
    pub fn growth_rate(&self, m: f64, n: f64, s: f64, o: f64, temp: f64) -> Result<f64> {
        check_nonneg("m", m)?;
        Ok(self.checked_rates(n, 0.0, s, o, temp)?.r * m)
    }

    /// Ethanol production rate `q_E(m, S, E)`, Michaelis constant `ks2`.
    pub fn ethanol_rate(&self, m: f64, s: f64, e: f64, temp: f64) -> Result<f64> {
        check_nonneg("m", m)?;
        Ok(self.checked_rates(0.0, e, s, 0.0, temp)?.q_e * m)
    }

    /// Sugar consumption rate `q = k2 q_E + k3 r_eps`.
    pub fn sugar_rate(&self, m: f64, n: f64, s: f64, e: f64, o: f64, temp: f64) -> Result<f64> {
        check_nonneg("m", m)?;
        Ok(self.checked_rates(n, e, s, o, temp)?.sugar(self) * m)
    }

    /// Ethanol-related death rate.
    pub fn death_phi(&self, e: f64) -> Result<f64> {
        check_nonneg("E", e)?;
        Ok(self.phi(e))
    }

    /// Unchecked death rate; defined for all real `e`.
    #[inline]
    pub fn phi(&self, e: f64) -> f64 {
        let x = e - self.tol;
        (0.5 + (self.kd1 * x).atan() / PI) * self.kd2 * x * x
    }

    /// `dPhi/dE`.
    #[inline]
    pub fn phi_prime(&self, e: f64) -> f64 {
        let x = e - self.tol;
        let a = self.kd1 * x;
        self.kd1 * self.kd2 * x * x / (PI * (1.0 + a * a))
            + 2.0 * self.kd2 * x * (0.5 + a.atan() / PI)
    }

    /// Checks sign constraints and that the temperature-dependent rates stay
    /// nonnegative on `[t_min, t_max]` (they are linear, so the endpoints suffice).
    pub fn validate(&self, t_min: f64, t_max: f64) -> Result<()> {
        let fields = [
            ("kinetic.mu1", self.mu1),
            ("kinetic.mu2", self.mu2),
            ("kinetic.beta1", self.beta1),
            ("kinetic.beta2", self.beta2),
            ("kinetic.ke1", self.ke1),
            ("kinetic.ke2", self.ke2),
            ("kinetic.k1", self.k1),
            ("kinetic.k2", self.k2),
            ("kinetic.k3", self.k3),
            ("kinetic.k4", self.k4),
            ("kinetic.kd", self.kd),
            ("kinetic.kd1", self.kd1),
            ("kinetic.kd2", self.kd2),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be >= 0, got {v}")));
            }
        }
        let positive = [
            ("kinetic.kn", self.kn),
            ("kinetic.ks1", self.ks1),
            ("kinetic.ks2", self.ks2),
            ("kinetic.ko", self.ko),
            ("kinetic.tol", self.tol),
            ("kinetic.eps", self.eps),
            ("kinetic.biomass_scale", self.biomass_scale),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        fn as_config(key: &'static str) -> impl Fn(Error) -> Error {
            move |e| Error::config(key, e.to_string())
        }
        for temp in [t_min, t_max] {
            self.mu_max(temp).map_err(as_config("kinetic.mu1, kinetic.mu2"))?;
            self.beta_max(temp).map_err(as_config("kinetic.beta1, kinetic.beta2"))?;
            self.k_e(temp).map_err(as_config("kinetic.ke1, kinetic.ke2"))?;
        }
        Ok(())
    }
}

fn nonneg_rate(name: &str, v: f64, temp: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(Error::ModelValidity(format!(
            "{name}({temp} C) = {v} is negative"
        )))
    }
}

/// Cell division parameters: division rate and partitioning density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivisionParams {
    pub gamma: f64,
    pub delta: f64,
    pub lambda: f64,
    pub beta: f64,
    /// Transition mass (daughter becomes a budding mother).
    pub m_t: f64,
    /// Division mass (division rate saturates at `gamma`).
    pub m_d: f64,
}

impl Default for DivisionParams {
    fn default() -> Self {
        let beta = 400.0;
        Self {
            gamma: 200.0,
            delta: 50.0,
            lambda: lambda_closed_form(beta),
            beta,
            m_t: 0.3784,
            m_d: 0.8525,
        }
    }
}

fn lambda_closed_form(beta: f64) -> f64 {
    0.5 * (beta / PI).sqrt()
}

/// Partition amplitude that makes each Gaussian peak carry half of the
/// probability, so the two-peak density integrates to one.
pub fn compute_lambda(beta: f64) -> Result<f64> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Domain(format!("beta must be > 0, got {beta}")));
    }
    Ok(lambda_closed_form(beta))
}

impl DivisionParams {
    /// Probability density of a mother of mass `m_prime` producing a cell of
    /// mass `m`. Zero unless `m_prime > m` and `m_prime > m_t`.
    #[inline]
    pub fn partition(&self, m: f64, m_prime: f64) -> f64 {
        if m_prime > m && m_prime > self.m_t {
            let a = m - self.m_t;
            let b = m - m_prime + self.m_t;
            self.lambda * (-self.beta * a * a).exp() + self.lambda * (-self.beta * b * b).exp()
        } else {
            0.0
        }
    }

    /// Division rate. Note the jump at `m_t`: the middle branch does not
    /// vanish there.
    #[inline]
    pub fn division_rate(&self, m: f64) -> f64 {
        if m <= self.m_t {
            0.0
        } else if m < self.m_d {
            let x = m - self.m_d;
            self.gamma * (-self.delta * x * x).exp()
        } else {
            self.gamma
        }
    }

    pub fn validate(&self, m_max: f64) -> Result<()> {
        for (key, v) in [
            ("division.gamma", self.gamma),
            ("division.delta", self.delta),
            ("division.beta", self.beta),
            ("division.lambda", self.lambda),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        if !(self.m_t > 0.0) {
            return Err(Error::config("division.m_t", "must be > 0"));
        }
        if !(self.m_d > self.m_t) {
            return Err(Error::config("division.m_d", "must exceed division.m_t"));
        }
        if !(self.m_d < m_max) {
            return Err(Error::config("division.m_d", "must be below grid.m_max"));
        }
        Ok(())
    }
}

/// Piecewise-linear temperature schedule: constant, ramp, constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemperatureProfile {
    pub t_low: f64,
    pub t_high: f64,
    pub ramp_start: f64,
    pub ramp_end: f64,
    pub t_final: f64,
}

impl TemperatureProfile {
    /// 15 C for the first half, 18 C for the second, with a ramp over
    /// `[0.475, 0.525] * t_final`.
    pub fn two_stage(t_final: f64) -> Self {
        Self {
            t_low: 15.0,
            t_high: 18.0,
            ramp_start: 0.475 * t_final,
            ramp_end: 0.525 * t_final,
            t_final,
        }
    }

    /// Checked evaluation; `t` must lie in `[0, t_final]`.
    pub fn temperature(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t <= self.t_final) {
            return Err(Error::Domain(format!(
                "t = {t} outside [0, {}]",
                self.t_final
            )));
        }
        Ok(self.at(t))
    }

    /// Evaluation clamped to the end values outside the schedule.
    pub fn at(&self, t: f64) -> f64 {
        if t <= self.ramp_start {
            self.t_low
        } else if t >= self.ramp_end {
            self.t_high
        } else {
            let frac = (t - self.ramp_start) / (self.ramp_end - self.ramp_start);
            self.t_low + frac * (self.t_high - self.t_low)
        }
    }

    pub fn min_temperature(&self) -> f64 {
        self.t_low.min(self.t_high)
    }

    pub fn max_temperature(&self) -> f64 {
        self.t_low.max(self.t_high)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::config("t_final", "must be >= 0"));
        }
        if !(self.ramp_start >= 0.0 && self.ramp_start <= self.ramp_end) {
            return Err(Error::config(
                "temperature.ramp_start",
                "need 0 <= ramp_start <= ramp_end",
            ));
        }
        if !(self.ramp_end <= self.t_final) {
            return Err(Error::config(
                "temperature.ramp_end",
                "need ramp_end <= t_final",
            ));
        }
        if !(self.t_low.is_finite() && self.t_high.is_finite()) {
            return Err(Error::config("temperature.t_low", "must be finite"));
        }
        Ok(())
    }
}

/// Width rescaling that brings cell masses in grams onto the working mass
/// range: `(to_hi - to_lo) / (from_hi - from_lo) * (value - from_lo)`.
///
/// `from_lo` maps to zero, not to `to_lo`. With this convention the default
/// transition and division masses come out as 0.3784 and 0.8525.
pub fn normalize_mass(value: f64, from_lo: f64, from_hi: f64, to_lo: f64, to_hi: f64) -> Result<f64> {
    if !(from_hi > from_lo) {
        return Err(Error::Domain(format!(
            "empty source interval [{from_lo}, {from_hi}]"
        )));
    }
    Ok((to_hi - to_lo) / (from_hi - from_lo) * (value - from_lo))
}
