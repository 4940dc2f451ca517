//! Discretized Ricci flow on rotationally symmetric surfaces and flat tori,
//! with numerical checks of the Sobolev, log-Sobolev, heat-semigroup and
//! noncollapsing estimates that hold along the flow.

pub mod calculus;
pub mod error;
pub mod fields;
pub mod flow;
pub mod grid;
pub mod inequality;
pub mod manifold;
pub mod noncollapse;
pub mod report;
pub mod scenario;
pub mod semigroup;

pub use calculus::{DiscreteMetric, DiscreteOperator, SpectralDecomposition};
pub use error::{Error, Result};
pub use fields::FieldFamily;
pub use flow::{FlowConfig, FlowReport, FlowTrace, StepDiagnostics};
pub use grid::{Grid, GridKind, ScalarField};
pub use inequality::{ConstantEstimate, SobolevExponents};
pub use manifold::{ConformalPreset, HypothesisStatus, ManifoldFamily, MetricState, Provenance};
pub use noncollapse::{BallRegion, KappaCertificate, Pole};
pub use report::InequalityReport;
pub use scenario::{parse_scenario, Scenario};
pub use semigroup::{HeatSemigroup, KernelMatrix, NormPair, OperatorNormCurve};
