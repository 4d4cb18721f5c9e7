//! Precomputed division operator on a mass grid.

use nalgebra::DMatrix;

use crate::grid::MassGrid;
use crate::kernels::DivisionParams;
use crate::parallel::Execution;
use crate::quadrature::{trapezoid, trapezoid_nodes};

/// Quadrature subintervals per cell and dimension used by default.
pub const DEFAULT_N_QUAD: usize = 30;

/// Birth kernel and division-loss integrals on a fixed grid.
///
/// `k[(i, j)] = int_{cell i} int_{cell j} p(m, m') Gamma(m') dm' dm` and
/// `gamma_int[i] = int_{cell i} Gamma(m) dm`. Immutable after assembly.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub k: DMatrix<f64>,
    pub gamma_int: Vec<f64>,
    pub grid: MassGrid,
    pub n_quad: usize,
}

impl DiscreteOperator {
    pub fn assemble(grid: &MassGrid, division: &DivisionParams, n_quad: usize) -> Self {
        Self::assemble_with(grid, division, n_quad, Execution::default())
    }

    pub fn assemble_with(
        grid: &MassGrid,
        division: &DivisionParams,
        n_quad: usize,
        exec: Execution,
    ) -> Self {
        let n_quad = n_quad.max(2);
        let c = grid.n_cells();

        let columns = exec.map_range(c, |j| kernel_column(grid, division, n_quad, j));
        let mut k = DMatrix::zeros(c, c);
        for (j, col) in columns.into_iter().enumerate() {
            if let Some(col) = col {
                k.column_mut(j).copy_from_slice(&col);
            }
        }

        let gamma_int = (0..c)
            .map(|i| {
                let (a, b) = grid.cell(i);
                trapezoid(|m| division.division_rate(m), a, b, n_quad)
            })
            .collect();

        Self {
            k,
            gamma_int,
            grid: grid.clone(),
            n_quad,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.grid.n_cells()
    }
}

/// Column `j` of the kernel matrix, or `None` when the division rate vanishes
/// on the whole mother cell.
fn kernel_column(
    grid: &MassGrid,
    division: &DivisionParams,
    n_quad: usize,
    j: usize,
) -> Option<Vec<f64>> {
    let (a_j, b_j) = grid.cell(j);
    let mothers: Vec<(f64, f64)> = trapezoid_nodes(a_j, b_j, n_quad)
        .map(|(mp, w)| (mp, w * division.division_rate(mp)))
        .filter(|&(_, wg)| wg != 0.0)
        .collect();
    if mothers.is_empty() {
        return None;
    }

    let col = (0..grid.n_cells())
        .map(|i| {
            let (a_i, b_i) = grid.cell(i);
            // p vanishes for m >= m'
            if a_i >= b_j {
                return 0.0;
            }
            trapezoid_nodes(a_i, b_i, n_quad)
                .map(|(m, wm)| {
                    wm * mothers
                        .iter()
                        .map(|&(mp, wg)| wg * division.partition(m, mp))
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    Some(col)
}
