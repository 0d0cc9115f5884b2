//! Data-driven discovery of bond-based peridynamic micro-modulus kernels for
//! periodically heterogeneous elastic media.
//!
//! The crate covers the whole learning loop:
//!
//! * [`microstructure`] describes the periodic two-phase medium,
//! * [`fem`] generates high-fidelity micro-scale elastodynamics data,
//! * [`coarse_grain`] averages that data over unit cells,
//! * [`kernel_fit`] regresses the discrete micro-modulus (optionally under an
//!   energy constraint) and certifies the resulting operator,
//! * [`pd_dynamics`] runs the learned nonlocal model forward,
//! * [`reporting`] computes error metrics and emits figure data.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coarse_grain;
pub mod csv;
mod error;
pub mod fem;
pub mod kernel_fit;
pub mod linalg;
pub mod microstructure;
pub mod pd_dynamics;
pub mod reporting;

pub use coarse_grain::{CellGrid, CellSet, MacroSeries, TrainTestSplit};
pub use error::{Error, Result};
pub use fem::{AssembledSystem, BoundaryDrive, DriveComponent, DriveProfile, FemMesh, MicroState};
pub use kernel_fit::{BondForce, FitReport, MicroModulus, RegressionSystem, SolveMode};
pub use microstructure::{Dimension, Layout, MaterialPhase, MicroStructureSpec, Phase};
pub use pd_dynamics::PdModel;
