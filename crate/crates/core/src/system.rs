//! Semidiscrete population balance system `y' = f(t, y)`.
//!
//! State layout: `y = (w_0, ..., w_{C-1}, N, E, S, O)`.
//!
//! Cell equations, with `r(m) = r_eps * m` evaluated at cell edges `e_i`:
//!
//! ```text
//! w_i' = [ r(e_i) w_{i-1} - r(e_{i+1}) w_i + 2 sum_j K_ij w_j - G_i w_i ] / dm
//!        - (Phi(E) + k_d) w_i
//! ```
//!
//! The inflow through `e_0` and the outflow through `e_C` are zero (no growth
//! across the mass bounds). Substrate equations use the first moment over the
//! interior cells `1..C-2` scaled to g/l.
//!
//! The Jacobian is differentiated from this right-hand side entry by entry:
//! the birth matrix contributes `2 K_ij / dm` to every `(i, j)`, death sits
//! outside the `1/dm` bracket, and `d w_i' / dE = -Phi'(E) w_i`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::OdeSystem;
use crate::kernels::{KineticParams, SpecificRates, TemperatureProfile};
use crate::operator::DiscreteOperator;

/// Number of substrate/product components appended to the densities.
pub const N_SUBSTRATES: usize = 4;

/// Full unknown vector at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub w: Vec<f64>,
    pub n: f64,
    pub e: f64,
    pub s: f64,
    pub o: f64,
}

impl SystemState {
    pub fn to_vector(&self) -> DVector<f64> {
        let c = self.w.len();
        let mut y = DVector::zeros(c + N_SUBSTRATES);
        y.rows_mut(0, c).copy_from_slice(&self.w);
        y[c] = self.n;
        y[c + 1] = self.e;
        y[c + 2] = self.s;
        y[c + 3] = self.o;
        y
    }

    pub fn from_vector(t: f64, y: &DVector<f64>) -> Result<Self> {
        if y.len() <= N_SUBSTRATES {
            return Err(Error::Dimension {
                expected: N_SUBSTRATES + 1,
                found: y.len(),
            });
        }
        let c = y.len() - N_SUBSTRATES;
        Ok(Self {
            t,
            w: y.rows(0, c).iter().copied().collect(),
            n: y[c],
            e: y[c + 1],
            s: y[c + 2],
            o: y[c + 3],
        })
    }
}

/// The discretized population balance model.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub operator: Arc<DiscreteOperator>,
    pub kinetic: KineticParams,
    pub profile: TemperatureProfile,
}

struct Unpacked<'a> {
    w: nalgebra::DVectorView<'a, f64>,
    n: f64,
    e: f64,
    s: f64,
    o: f64,
}

impl PopulationModel {
    pub fn new(
        operator: Arc<DiscreteOperator>,
        kinetic: KineticParams,
        profile: TemperatureProfile,
    ) -> Self {
        Self {
            operator,
            kinetic,
            profile,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.operator.n_cells()
    }

    fn unpack<'a>(&self, y: &'a DVector<f64>) -> Result<Unpacked<'a>> {
        let c = self.n_cells();
        if y.len() != c + N_SUBSTRATES {
            return Err(Error::Dimension {
                expected: c + N_SUBSTRATES,
                found: y.len(),
            });
        }
        if let Some((k, v)) = y.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let what = if k < c {
                format!("w[{k}]")
            } else {
                ["N", "E", "S", "O"][k - c].to_string()
            };
            return Err(Error::Numerical(format!("non-finite state entry {what} = {v}")));
        }
        Ok(Unpacked {
            w: y.rows(0, c),
            n: y[c],
            e: y[c + 1],
            s: y[c + 2],
            o: y[c + 3],
        })
    }

    fn rates(&self, t: f64, u: &Unpacked) -> SpecificRates {
        self.kinetic
            .specific_rates(u.n, u.e, u.s, u.o, self.profile.at(t))
    }

    /// Range of cells entering the substrate sums.
    fn interior(&self) -> std::ops::Range<usize> {
        1..self.n_cells().saturating_sub(1)
    }

    /// Substrate-weighted first moment `sum_{interior} c_i w_i dm`.
    pub fn interior_moment(&self, w: &[f64]) -> f64 {
        let grid = &self.operator.grid;
        self.interior()
            .map(|i| grid.centers()[i] * w[i])
            .sum::<f64>()
            * grid.dm()
    }

    pub fn rhs_state(&self, state: &SystemState) -> Result<SystemState> {
        let dy = self.rhs(state.t, &state.to_vector())?;
        SystemState::from_vector(state.t, &dy)
    }
}

impl OdeSystem for PopulationModel {
    fn dim(&self) -> usize {
        self.n_cells() + N_SUBSTRATES
    }

    fn rhs(&self, t: f64, y: &DVector<f64>) -> Result<DVector<f64>> {
        let u = self.unpack(y)?;
        let op = &*self.operator;
        let grid = &op.grid;
        let c = grid.n_cells();
        let edges = grid.edges();
        let inv_dm = 1.0 / grid.dm();
        let kp = &self.kinetic;
        let rates = self.rates(t, &u);
        let death = kp.phi(u.e) + kp.kd;

        let birth = &op.k * u.w;
        let mut dy = DVector::zeros(c + N_SUBSTRATES);
        for i in 0..c {
            let inflow = if i > 0 { rates.r_eps * edges[i] * u.w[i - 1] } else { 0.0 };
            let outflow = if i + 1 < c { rates.r_eps * edges[i + 1] * u.w[i] } else { 0.0 };
            dy[i] = inv_dm * (inflow - outflow + 2.0 * birth[i] - op.gamma_int[i] * u.w[i])
                - death * u.w[i];
        }

        let biomass = kp.biomass_scale * self.interior_moment(u.w.as_slice());
        dy[c] = -kp.k1 * rates.r_eps * biomass;
        dy[c + 1] = rates.q_e * biomass;
        dy[c + 2] = -rates.sugar(kp) * biomass;
        dy[c + 3] = -kp.k4 * rates.r * biomass;
        Ok(dy)
    }

    fn jacobian(&self, t: f64, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        let u = self.unpack(y)?;
        let op = &*self.operator;
        let grid = &op.grid;
        let c = grid.n_cells();
        let edges = grid.edges();
        let centers = grid.centers();
        let dm = grid.dm();
        let inv_dm = 1.0 / dm;
        let kp = &self.kinetic;
        let rates = self.rates(t, &u);
        let death = kp.phi(u.e) + kp.kd;
        let dphi = kp.phi_prime(u.e);
        let (col_n, col_e, col_s, col_o) = (c, c + 1, c + 2, c + 3);

        let mut jac = DMatrix::zeros(c + N_SUBSTRATES, c + N_SUBSTRATES);
        jac.view_mut((0, 0), (c, c)).copy_from(&(&op.k * (2.0 * inv_dm)));

        for i in 0..c {
            let mut diag = -op.gamma_int[i] * inv_dm - death;
            // d(flux difference)/d(N, S, O) per unit r_eps derivative
            let mut lever = 0.0;
            if i + 1 < c {
                diag -= rates.r_eps * edges[i + 1] * inv_dm;
                lever -= edges[i + 1] * u.w[i];
            }
            if i > 0 {
                jac[(i, i - 1)] += rates.r_eps * edges[i] * inv_dm;
                lever += edges[i] * u.w[i - 1];
            }
            jac[(i, i)] += diag;
            jac[(i, col_n)] = inv_dm * lever * rates.d_r_eps[0];
            jac[(i, col_s)] = inv_dm * lever * rates.d_r_eps[1];
            jac[(i, col_o)] = inv_dm * lever * rates.d_r_eps[2];
            jac[(i, col_e)] = -dphi * u.w[i];
        }

        let scale = kp.biomass_scale;
        let biomass = scale * self.interior_moment(u.w.as_slice());
        let sugar = rates.sugar(kp);
        for i in self.interior() {
            let dmoment = scale * centers[i] * dm;
            jac[(col_n, i)] = -kp.k1 * rates.r_eps * dmoment;
            jac[(col_e, i)] = rates.q_e * dmoment;
            jac[(col_s, i)] = -sugar * dmoment;
            jac[(col_o, i)] = -kp.k4 * rates.r * dmoment;
        }

        // Substrate rows w.r.t. concentrations: index order (N, S, O) for the
        // growth rates, (S, E) for ethanol production.
        let conc_cols = [col_n, col_s, col_o];
        for (k, &col) in conc_cols.iter().enumerate() {
            jac[(col_n, col)] = -kp.k1 * rates.d_r_eps[k] * biomass;
            jac[(col_o, col)] = -kp.k4 * rates.d_r[k] * biomass;
            jac[(col_s, col)] = -kp.k3 * rates.d_r_eps[k] * biomass;
        }
        jac[(col_e, col_s)] = rates.d_q_e[0] * biomass;
        jac[(col_e, col_e)] = rates.d_q_e[1] * biomass;
        jac[(col_s, col_s)] -= kp.k2 * rates.d_q_e[0] * biomass;
        jac[(col_s, col_e)] = -kp.k2 * rates.d_q_e[1] * biomass;
        Ok(jac)
    }
}
