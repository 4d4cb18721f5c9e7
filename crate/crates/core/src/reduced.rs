//! Reduced ODE model: the first-moment closure of the population balance.
//!
//! Integrating the population balance against `m` cancels the division terms
//! (daughter masses sum to the mother mass) and leaves
//!
//! ```text
//! X' = (r_eps - Phi(E) - k_d) X
//! N' = -k1 r_eps B,  O' = -k4 r B,  S' = -(k2 q_E + k3 r_eps) B,  E' = q_E B
//! ```
//!
//! with `B = biomass_scale * X` and the per-unit-mass rates of
//! [`crate::kernels::SpecificRates`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegrationFailure, NewtonConfig, OdeSystem, Trajectory};
use crate::kernels::{KineticParams, TemperatureProfile};

/// `(X, N, E, S, O)` at time `t`; `X` is the first moment in cells/ml × scaled mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub x: f64,
    pub n: f64,
    pub e: f64,
    pub s: f64,
    pub o: f64,
}

impl OdeState {
    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.x, self.n, self.e, self.s, self.o])
    }

    pub fn from_vector(t: f64, y: &DVector<f64>) -> Result<Self> {
        if y.len() != 5 {
            return Err(Error::Dimension { expected: 5, found: y.len() });
        }
        Ok(Self { t, x: y[0], n: y[1], e: y[2], s: y[3], o: y[4] })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReducedModel {
    pub kinetic: KineticParams,
    pub profile: TemperatureProfile,
}

impl ReducedModel {
    pub fn new(kinetic: KineticParams, profile: TemperatureProfile) -> Self {
        Self { kinetic, profile }
    }

    pub fn ode_rhs(&self, state: &OdeState) -> Result<OdeState> {
        let dy = self.rhs(state.t, &state.to_vector())?;
        OdeState::from_vector(state.t, &dy)
    }

    /// Integrates over `[y0.t, t_final]` with fixed step `h`.
    pub fn run(
        &self,
        y0: &OdeState,
        t_final: f64,
        h: f64,
        cfg: &NewtonConfig,
    ) -> Result<Trajectory, IntegrationFailure> {
        integrate(self, y0.to_vector(), y0.t, t_final, h, cfg, |_, _| {})
    }
}

fn check(y: &DVector<f64>) -> Result<()> {
    if y.len() != 5 {
        return Err(Error::Dimension { expected: 5, found: y.len() });
    }
    if let Some((k, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite state entry {} = {v}",
            ["X", "N", "E", "S", "O"][k]
        )));
    }
    Ok(())
}

impl OdeSystem for ReducedModel {
    fn dim(&self) -> usize {
        5
    }

    fn rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        check(y)?;
        let kp = &self.kinetic;
        let (x, n, e, s, o) = (y[0], y[1], y[2], y[3], y[4]);
        let rates = kp.specific_rates(n, e, s, o, self.profile.at(t));
        let biomass = kp.biomass_scale * x;
        Ok(DVector::from_vec(vec![
            (rates.r_eps - kp.phi(e) - kp.kd) * x,
            -kp.k1 * rates.r_eps * biomass,
            rates.q_e * biomass,
            -rates.sugar(kp) * biomass,
            -kp.k4 * rates.r * biomass,
        ]))
    }

    fn jacobian(&self, t: f64, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        check(y)?;
        let kp = &self.kinetic;
        let (x, n, e, s, o) = (y[0], y[1], y[2], y[3], y[4]);
        let r = kp.specific_rates(n, e, s, o, self.profile.at(t));
        let sc = kp.biomass_scale;
        let b = sc * x;
        let [rn, rs, ro] = r.d_r_eps;
        let [an, as_, ao] = r.d_r;
        let [qs, qe] = r.d_q_e;
        #[rustfmt::skip]
        let jac = DMatrix::from_row_slice(5, 5, &[
            // X                         N               E                          S                                O
            r.r_eps - kp.phi(e) - kp.kd, rn * x,         -kp.phi_prime(e) * x,      rs * x,                          ro * x,
            -kp.k1 * r.r_eps * sc,       -kp.k1 * rn * b, 0.0,                      -kp.k1 * rs * b,                 -kp.k1 * ro * b,
            r.q_e * sc,                  0.0,             qe * b,                   qs * b,                          0.0,
            -r.sugar(kp) * sc,           -kp.k3 * rn * b, -kp.k2 * qe * b,          -(kp.k2 * qs + kp.k3 * rs) * b,  -kp.k3 * ro * b,
            -kp.k4 * r.r * sc,           -kp.k4 * an * b, 0.0,                      -kp.k4 * as_ * b,                -kp.k4 * ao * b,
        ]);
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn model() -> ReducedModel {
        ReducedModel::new(KineticParams::default(), TemperatureProfile::two_stage(20.0))
    }

    #[test]
    fn no_biomass_no_change() {
        let d = model()
            .ode_rhs(&OdeState { t: 1.0, x: 0.0, n: 0.2, e: 30.0, s: 150.0, o: 0.004 })
            .unwrap();
        assert_eq!((d.x, d.n, d.e, d.s, d.o), (0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn no_death_at_tolerance() {
        let kp = KineticParams { kd: 0.0, ..Default::default() };
        let m = ReducedModel::new(kp, TemperatureProfile::two_stage(20.0));
        let st = OdeState { t: 2.0, x: 4e5, n: 0.2, e: kp.tol, s: 150.0, o: 0.004 };
        let d = m.ode_rhs(&st).unwrap();
        let r = kp.specific_rates(0.2, kp.tol, 150.0, 0.004, 15.0).r_eps;
        assert_relative_eq!(d.x, r * st.x, max_relative = 1e-14);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = model();
        let y = OdeState { t: 9.8, x: 3e6, n: 0.12, e: 72.0, s: 80.0, o: 0.0009 }.to_vector();
        let jac = m.jacobian(9.8, &y).unwrap();
        for k in 0..5 {
            let h = 1e-6 * y[k].abs().max(1.0);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += h;
            ym[k] -= h;
            let col = (m.rhs(9.8, &yp).unwrap() - m.rhs(9.8, &ym).unwrap()) / (2.0 * h);
            for i in 0..5 {
                let scale = jac[(i, k)].abs().max(1.0);
                assert!((col[i] - jac[(i, k)]).abs() / scale <= 1e-5, "({i},{k}): {} vs {}", col[i], jac[(i, k)]);
            }
        }
    }

    #[test]
    fn sugar_free_must_has_no_ethanol() {
        let m = model();
        let y0 = OdeState { t: 0.0, x: 5e5, n: 0.3, e: 0.0, s: 0.0, o: 0.01 };
        let traj = m.run(&y0, 2.0, 1.0 / 48.0, &NewtonConfig::default()).unwrap();
        assert!(traj.states.iter().all(|y| y[2] == 0.0));
    }

    proptest! {
        #[test]
        fn consumption_signs(
            x in 0.0f64..5e7, n in 0.0f64..1.0, e in 0.0f64..150.0,
            s in 0.0f64..300.0, o in 0.0f64..0.02, t in 0.0f64..20.0,
        ) {
            let d = model().ode_rhs(&OdeState { t, x, n, e, s, o }).unwrap();
            prop_assert!(d.s <= 0.0);
            prop_assert!(d.n <= 0.0);
            prop_assert!(d.o <= 0.0);
            prop_assert!(d.e >= 0.0);
        }
    }
}
