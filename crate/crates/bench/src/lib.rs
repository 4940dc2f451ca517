//! Fixtures shared by the criterion benches.

use flowlab_core::manifold::make_round_sphere;
use flowlab_core::DiscreteMetric;

pub fn unit_sphere(resolution: usize) -> DiscreteMetric {
    DiscreteMetric::new(&make_round_sphere(2, 1.0).unwrap(), resolution).unwrap()
}
