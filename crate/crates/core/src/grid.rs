use crate::error::{Error, Result};

/// Uniform finite-volume mesh over the cell-mass interval.
#[derive(Debug, Clone, PartialEq)]
pub struct MassGrid {
    pub m_min: f64,
    pub m_max: f64,
    edges: Vec<f64>,
    centers: Vec<f64>,
    dm: f64,
}

impl MassGrid {
    pub fn new(m_min: f64, m_max: f64, n_cells: usize) -> Result<Self> {
        if !(m_min.is_finite() && m_max.is_finite() && m_max > m_min) {
            return Err(Error::config(
                "grid.m_max",
                format!("need m_max > m_min, got [{m_min}, {m_max}]"),
            ));
        }
        if n_cells < 2 {
            return Err(Error::config(
                "grid.n_cells",
                format!("need at least 2 cells, got {n_cells}"),
            ));
        }
        let dm = (m_max - m_min) / n_cells as f64;
        let mut edges: Vec<f64> = (0..=n_cells).map(|k| m_min + k as f64 * dm).collect();
        edges[n_cells] = m_max;
        let centers = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
        Ok(Self {
            m_min,
            m_max,
            edges,
            centers,
            dm,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn dm(&self) -> f64 {
        self.dm
    }

    /// Control volume `[edges[i], edges[i + 1]]`.
    pub fn cell(&self, i: usize) -> (f64, f64) {
        (self.edges[i], self.edges[i + 1])
    }

    /// Zeroth moment `sum w_i dm` (cells/ml for a number density).
    pub fn total(&self, w: &[f64]) -> f64 {
        w.iter().sum::<f64>() * self.dm
    }

    /// First moment `sum c_i w_i dm`.
    pub fn first_moment(&self, w: &[f64]) -> f64 {
        self.centers.iter().zip(w).map(|(c, w)| c * w).sum::<f64>() * self.dm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paper_grid() {
        let g = MassGrid::new(0.001, 0.999, 150).unwrap();
        assert_relative_eq!(g.dm(), 0.998 / 150.0, max_relative = 1e-15);
        assert_relative_eq!(g.dm(), 0.0066533, epsilon = 1e-7);
        assert_relative_eq!(g.centers()[0], 0.001 + g.dm() / 2.0, max_relative = 1e-15);
        assert_eq!(g.edges()[0], 0.001);
        assert_eq!(g.edges()[150], 0.999);
        for w in g.edges().windows(2) {
            assert_relative_eq!(w[1] - w[0], g.dm(), max_relative = 1e-12);
        }
        for (i, c) in g.centers().iter().enumerate() {
            assert_eq!(*c, 0.5 * (g.edges()[i] + g.edges()[i + 1]));
        }
    }

    #[test]
    fn two_cells() {
        let g = MassGrid::new(0.0, 1.0, 2).unwrap();
        assert_eq!(g.edges(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(MassGrid::new(0.0, 1.0, 1).is_err());
        assert!(MassGrid::new(1.0, 1.0, 10).is_err());
        assert!(MassGrid::new(1.0, 0.0, 10).is_err());
    }
}
