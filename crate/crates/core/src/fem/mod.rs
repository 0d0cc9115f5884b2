//! High-fidelity finite-element model of the micro-scale elastodynamics.
//!
//! Meshes are structured: two-node bar elements in 1D and axis-aligned
//! bilinear quadrilaterals in 2D (plane stress, unit thickness), with element
//! edges aligned to every phase interface. Time integration is explicit
//! central differences on the row-sum lumped mass matrix.

mod drive;
mod dynamics;
mod element;
pub mod io;
mod mesh;
mod statics;

pub use drive::{BoundaryDrive, DriveComponent, DriveProfile};
pub use dynamics::{
    cfl_timestep, explicit_dynamics, explicit_dynamics_with, BoundaryConditions, DynamicsOptions, DynamicsSummary,
    EnergySample, MicroState, Snapshot,
};
pub use element::{bar_stiffness, plane_stress_matrix, quad_stiffness};
pub use mesh::{assemble, build_mesh, AssembledSystem, FemMesh};
pub use statics::{element_stress, static_solve, strain_energy, unit_cell_energy_density};
