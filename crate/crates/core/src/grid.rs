//! One-dimensional node grids and the fields that live on them.
//!
//! Two grids are supported. The meridian grid of a rotationally symmetric
//! sphere is cell-centered in the polar angle θ with the poles excluded; its
//! base weights are the unit-sphere area elements `2π sin θ_i · h`. The
//! periodic grid discretizes one side of a flat torus.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{invalid, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum GridKind {
    /// Cell-centered polar angle grid on (0, π).
    Theta,
    /// Uniform periodic grid on [0, length).
    Periodic { length: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    kind: GridKind,
    nodes: Vec<f64>,
    spacing: f64,
    base_weights: Vec<f64>,
}

pub const MIN_THETA_NODES: usize = 16;

impl Grid {
    /// Meridian grid with `n` cells: `θ_i = (i + 1/2)·π/n`.
    pub fn theta(n: usize) -> Result<Arc<Grid>> {
        if n < MIN_THETA_NODES {
            return Err(invalid(
                "grid_n",
                format!("need at least {MIN_THETA_NODES} nodes, got {n}"),
            ));
        }
        let h = PI / n as f64;
        let nodes: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let base_weights = nodes.iter().map(|th| 2.0 * PI * th.sin() * h).collect();
        Ok(Arc::new(Grid {
            kind: GridKind::Theta,
            nodes,
            spacing: h,
            base_weights,
        }))
    }

    /// Periodic grid with `n` nodes on a circle of the given length.
    pub fn periodic(n: usize, length: f64) -> Result<Arc<Grid>> {
        if n < 8 {
            return Err(invalid("grid_n", format!("periodic grid needs >= 8 nodes, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("lengths", format!("side length must be > 0, got {length}")));
        }
        let h = length / n as f64;
        Ok(Arc::new(Grid {
            kind: GridKind::Periodic { length },
            nodes: (0..n).map(|i| i as f64 * h).collect(),
            spacing: h,
            base_weights: vec![h; n],
        }))
    }

    pub fn kind(&self) -> &GridKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn base_weights(&self) -> &[f64] {
        &self.base_weights
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.kind, GridKind::Periodic { .. })
    }

    /// Flux coefficient on the face between node `i` and node `i + 1`
    /// (wrapping for periodic grids).
    pub(crate) fn face_factor(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::Theta => ((i + 1) as f64 * self.spacing).sin(),
            GridKind::Periodic { .. } => 1.0,
        }
    }

    /// Measure density at node `i` relative to the spacing (`sin θ_i` or 1).
    pub(crate) fn node_factor(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::Theta => self.nodes[i].sin(),
            GridKind::Periodic { .. } => 1.0,
        }
    }

    /// Angular coordinate in radians: θ on the sphere, `2πx/L` on a torus side.
    pub fn angle(&self, i: usize) -> f64 {
        match self.kind {
            GridKind::Theta => self.nodes[i],
            GridKind::Periodic { length } => 2.0 * PI * self.nodes[i] / length,
        }
    }

    /// Angular distance of node `i` from the base point (north pole, or x = 0).
    pub fn base_distance(&self, i: usize) -> f64 {
        let a = self.angle(i);
        match self.kind {
            GridKind::Theta => a,
            GridKind::Periodic { .. } => a.min(2.0 * PI - a),
        }
    }

    /// Indices of the two neighbours of node `i`, `None` past a pole.
    pub(crate) fn neighbours(&self, i: usize) -> (Option<usize>, Option<usize>) {
        let n = self.len();
        match self.kind {
            GridKind::Theta => (i.checked_sub(1), (i + 1 < n).then_some(i + 1)),
            GridKind::Periodic { .. } => (Some((i + n - 1) % n), Some((i + 1) % n)),
        }
    }
}

/// Real values on the nodes of a grid.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("field", format!("non-finite value at node {i}")));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        ScalarField { grid, values }
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(usize) -> f64) -> Result<Self> {
        let values = (0..grid.len()).map(f).collect();
        ScalarField::new(grid, values)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        ScalarField::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, c: f64) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_grid(&self, grid: &Grid) -> bool {
        std::ptr::eq(&*self.grid, grid) || *self.grid == *grid
    }

    pub(crate) fn check_grid(&self, grid: &Grid) -> Result<()> {
        if self.same_grid(grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "field and metric live on different grids".into(),
            ))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_weights_approach_sphere_area() {
        for n in [64, 128, 256] {
            let g = Grid::theta(n).unwrap();
            let total: f64 = g.base_weights().iter().sum();
            assert!((total - 4.0 * PI).abs() <= 1e-3 * 4.0 * PI, "n={n} total={total}");
        }
    }

    #[test]
    fn theta_nodes_strictly_increasing_inside_open_interval() {
        let g = Grid::theta(33).unwrap();
        assert!(g.nodes()[0] > 0.0 && *g.nodes().last().unwrap() < PI);
        assert!(g.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_coarse_grids_and_bad_fields() {
        assert!(Grid::theta(8).is_err());
        assert!(Grid::periodic(16, -1.0).is_err());
        let g = Grid::theta(16).unwrap();
        assert!(ScalarField::new(g.clone(), vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(ScalarField::new(g, v).is_err());
    }

    #[test]
    fn periodic_distance_wraps() {
        let g = Grid::periodic(8, 2.0 * PI).unwrap();
        assert!((g.base_distance(7) - PI / 4.0).abs() < 1e-15);
        assert_eq!(g.neighbours(0), (Some(7), Some(1)));
    }
}
