//! Spatio-temporal log-Gaussian Cox processes: second-order summary
//! statistics, first-order intensity fitting, global and locally weighted
//! minimum-contrast estimation, field and pattern simulation, and Monte Carlo
//! goodness-of-fit diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contrast;
pub mod covariance;
pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod grf;
pub mod grid;
pub mod intensity;
pub mod io;
pub mod kernels;
pub mod optim;
pub mod replicate;
pub mod simulate;
pub mod stats;

pub use contrast::{
    contrast_value, fit_global, fit_local, ContrastSpec, FitOptions, GlobalFitResult, LocalFitResult, Transform,
};
pub use covariance::{pcf_theoretical, CovarianceModel, ModelFamily};
pub use diagnostics::{run_mc_test, test_statistic, DiagnosticOptions, DiagnosticResult, FittedModel};
pub use error::{Error, Result};
pub use geometry::{EdgeCorrection, Point, PointPattern, SpaceTimeWindow};
pub use grf::{grf_local, grf_simulate, GrfRealization, GrfSampler};
pub use grid::SpaceTimeGrid;
pub use intensity::{fit_poisson, Intensity, IntensityFit, QuadratureScheme};
pub use kernels::{BandwidthSet, KernelKind};
pub use simulate::{lgcp_simulate, poisson_homogeneous, LgcpSimulator, SimulatedPattern, SimulationConfig};
pub use stats::{k_inhom, pcf_global, pcf_local_all, LagGrid, SummaryStatistic};
