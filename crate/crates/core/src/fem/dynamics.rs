use serde::{Deserialize, Serialize};

use super::drive::{BoundaryDrive, DriveComponent};
use super::mesh::{AssembledSystem, FemMesh};
use crate::linalg::power_iteration;
use crate::microstructure::Dimension;
use crate::{Error, Result};

/// Dirichlet data of a dynamic run: clamped dofs and dofs following the drive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryConditions {
    pub fixed: Vec<usize>,
    pub driven: Vec<usize>,
}

impl BoundaryConditions {
    /// Clamps the left edge (every component) and drives the selected
    /// component of the right edge. Other components there are traction free.
    pub fn clamped_left_driven_right(mesh: &FemMesh, component: DriveComponent) -> Result<Self> {
        let np = mesh.nodes_per_side();
        let nc = mesh.components();
        if component.index() >= nc {
            return Err(Error::Config(format!(
                "drive component {component:?} does not exist in {}D",
                mesh.dimension.as_usize()
            )));
        }
        let rows = match mesh.dimension {
            Dimension::One => 1,
            Dimension::Two => np,
        };
        let mut fixed = Vec::new();
        let mut driven = Vec::new();
        for iy in 0..rows {
            let left = mesh.node_index(0, iy);
            fixed.extend((0..nc).map(|c| mesh.dof(left, c)));
            driven.push(mesh.dof(mesh.node_index(np - 1, iy), component.index()));
        }
        Ok(BoundaryConditions { fixed, driven })
    }

    fn kinds(&self, n: usize) -> Vec<DofKind> {
        let mut kinds = vec![DofKind::Free; n];
        for &d in &self.fixed {
            kinds[d] = DofKind::Fixed;
        }
        for &d in &self.driven {
            kinds[d] = DofKind::Driven;
        }
        kinds
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DofKind {
    Free,
    Fixed,
    Driven,
}

/// Critical central-difference step `2 / sqrt(lambda_max)` of the
/// generalized problem `K x = lambda M x` on the unconstrained dofs.
pub fn cfl_timestep(system: &AssembledSystem, bcs: &BoundaryConditions) -> Result<f64> {
    let n = system.n_dofs();
    let kinds = bcs.kinds(n);
    let inv_sqrt_m: Vec<f64> = system
        .lumped_mass
        .iter()
        .zip(&kinds)
        .map(|(&m, &k)| if k == DofKind::Free { 1.0 / m.sqrt() } else { 0.0 })
        .collect();
    let start: Vec<f64> = system
        .checkerboard()
        .into_iter()
        .zip(&inv_sqrt_m)
        .map(|(s, &w)| if w > 0.0 { s } else { 0.0 })
        .collect();
    let mut scratch = vec![0.0; n];
    let est = power_iteration(
        |x, y| {
            for i in 0..n {
                scratch[i] = x[i] * inv_sqrt_m[i];
            }
            system.stiffness.mul_vec_into(&scratch, y);
            for i in 0..n {
                y[i] *= inv_sqrt_m[i];
            }
        },
        start,
        1e-6,
        10_000,
    )?;
    if !(est.eigenvalue > 0.0) {
        return Err(Error::Numerical(
            "stiffness has no positive eigenvalue on the free dofs".into(),
        ));
    }
    Ok(2.0 / est.eigenvalue.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsOptions {
    pub end_time: f64,
    /// Recording interval `dt_out`.
    pub output_interval: f64,
    /// Fraction of the critical step used for integration.
    pub safety_factor: f64,
    /// Overrides the stable step estimate; still rounded down to divide the
    /// recording interval.
    pub time_step: Option<f64>,
}

impl DynamicsOptions {
    pub fn new(end_time: f64, output_interval: f64) -> Self {
        DynamicsOptions {
            end_time,
            output_interval,
            safety_factor: 0.5,
            time_step: None,
        }
    }

    pub(crate) fn output_count(&self) -> Result<usize> {
        if !(self.end_time > 0.0) || !(self.output_interval > 0.0) {
            return Err(Error::Config("end time and output interval must be positive".into()));
        }
        let steps = (self.end_time / self.output_interval).round();
        if (steps * self.output_interval - self.end_time).abs() > 1e-9 * self.end_time {
            return Err(Error::Config(format!(
                "end time {} is not a multiple of the output interval {}",
                self.end_time, self.output_interval
            )));
        }
        Ok(steps as usize)
    }
}

/// Discrete energy balance at a recorded time.
///
/// Energies are those conserved exactly by central differences: kinetic
/// energy from the half-step velocity `v_{n-1/2}` and strain energy
/// `u_{n-1}^T K u_n / 2`. `boundary_work` accumulates the work of the
/// driven edge, so `kinetic + strain == boundary_work` up to rounding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub time: f64,
    pub kinetic: f64,
    pub strain: f64,
    pub boundary_work: f64,
}

/// Nodal state at a recorded time.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot<'a> {
    pub time: f64,
    pub displacement: &'a [f64],
    pub velocity: &'a [f64],
    pub acceleration: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSummary {
    pub time_step: f64,
    pub critical_time_step: f64,
    pub steps: usize,
    pub energy: Vec<EnergySample>,
}

/// Full nodal time history of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroState {
    pub dimension: Dimension,
    pub n_nodes: usize,
    pub times: Vec<f64>,
    pub displacement: Vec<Vec<f64>>,
    pub velocity: Vec<Vec<f64>>,
    pub acceleration: Vec<Vec<f64>>,
    pub time_step: f64,
    pub energy: Vec<EnergySample>,
}

impl MicroState {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Integrates the semi-discrete system from rest and keeps every recorded
/// snapshot in memory.
pub fn explicit_dynamics(
    system: &AssembledSystem,
    bcs: &BoundaryConditions,
    drive: &BoundaryDrive,
    options: &DynamicsOptions,
) -> Result<MicroState> {
    let mut state = MicroState {
        dimension: system.dimension,
        n_nodes: system.n_dofs() / system.components(),
        times: Vec::new(),
        displacement: Vec::new(),
        velocity: Vec::new(),
        acceleration: Vec::new(),
        time_step: 0.0,
        energy: Vec::new(),
    };
    let summary = explicit_dynamics_with(system, bcs, drive, options, |s| {
        state.times.push(s.time);
        state.displacement.push(s.displacement.to_vec());
        state.velocity.push(s.velocity.to_vec());
        state.acceleration.push(s.acceleration.to_vec());
        Ok(())
    })?;
    state.time_step = summary.time_step;
    state.energy = summary.energy;
    Ok(state)
}

/// Central-difference integration streaming each recorded snapshot to
/// `observer`.
///
/// The step is the largest `dt_out / k` (integer `k`) not exceeding
/// `safety_factor * dt_cfl`, so recordings fall on integration steps.
/// Recorded accelerations are `-M^{-1} K u` on free dofs and the analytic
/// drive acceleration on driven dofs.
pub fn explicit_dynamics_with<F>(
    system: &AssembledSystem,
    bcs: &BoundaryConditions,
    drive: &BoundaryDrive,
    options: &DynamicsOptions,
    mut observer: F,
) -> Result<DynamicsSummary>
where
    F: FnMut(&Snapshot<'_>) -> Result<()>,
{
    let n_out = options.output_count()?;
    let n = system.n_dofs();
    let kinds = bcs.kinds(n);
    let critical = cfl_timestep(system, bcs)?;
    let target = options.time_step.unwrap_or(options.safety_factor * critical);
    if !(target > 0.0) {
        return Err(Error::Config(format!("invalid time step {target:e}")));
    }
    let substeps = (options.output_interval / target).ceil().max(1.0) as usize;
    let dt = options.output_interval / substeps as f64;
    let total = n_out * substeps;
    let limit = 1e6 * drive.u0.abs().max(f64::MIN_POSITIVE);

    let m = &system.lumped_mass;
    let mut u = vec![0.0; n];
    let mut u_next = vec![0.0; n];
    let mut v_half = vec![0.0; n];
    let mut ku = vec![0.0; n];
    let mut vel = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut kinetic = 0.0;
    let mut strain = 0.0;
    let mut work = 0.0;
    let mut energy = Vec::with_capacity(n_out + 1);

    for step in 0..=total {
        let t = step as f64 * dt;
        system.stiffness.mul_vec_into(&u, &mut ku);

        if step % substeps == 0 {
            let (_, dv, da) = drive.evaluate(t);
            for i in 0..n {
                let (a, v) = match kinds[i] {
                    DofKind::Free => {
                        let a = -ku[i] / m[i];
                        (a, v_half[i] + 0.5 * dt * a)
                    }
                    DofKind::Fixed => (0.0, 0.0),
                    DofKind::Driven => (da, dv),
                };
                acc[i] = a;
                vel[i] = v;
            }
            let time = (step / substeps) as f64 * options.output_interval;
            observer(&Snapshot {
                time,
                displacement: &u,
                velocity: &vel,
                acceleration: &acc,
            })?;
            energy.push(EnergySample {
                time,
                kinetic,
                strain,
                boundary_work: work,
            });
        }
        if step == total {
            break;
        }

        let t_next = (step + 1) as f64 * dt;
        let u_drive = drive.displacement(t_next);
        let mut ke = 0.0;
        let mut se = 0.0;
        let mut worst = 0.0f64;
        for i in 0..n {
            let v_old = v_half[i];
            let (un, vn) = match kinds[i] {
                DofKind::Free => {
                    let vn = v_old - dt * ku[i] / m[i];
                    (u[i] + dt * vn, vn)
                }
                DofKind::Fixed => (0.0, 0.0),
                DofKind::Driven => {
                    let vn = (u_drive - u[i]) / dt;
                    // reaction needed to impose the prescribed motion
                    let reaction = m[i] * (vn - v_old) / dt + ku[i];
                    work += reaction * 0.5 * dt * (vn + v_old);
                    (u_drive, vn)
                }
            };
            u_next[i] = un;
            v_half[i] = vn;
            ke += 0.5 * m[i] * vn * vn;
            se += 0.5 * ku[i] * un;
            worst = worst.max(un.abs());
        }
        kinetic = ke;
        strain = se;
        if !(worst <= limit) {
            return Err(Error::Divergence { dt, time: t_next });
        }
        std::mem::swap(&mut u, &mut u_next);
    }

    Ok(DynamicsSummary {
        time_step: dt,
        critical_time_step: critical,
        steps: total,
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble, build_mesh};
    use crate::linalg::CsrMatrix;
    use crate::microstructure::{Layout, MaterialPhase, MicroStructureSpec};

    fn homogeneous_bar(n_cells: usize, epc: usize) -> (FemMesh, AssembledSystem) {
        let mat = MaterialPhase::new(200e9, 8000.0);
        let spec = MicroStructureSpec::new(Layout::Bar1dQuarterHalfQuarter, 1.0, n_cells, mat, mat).unwrap();
        let mesh = build_mesh(&spec, epc).unwrap();
        let sys = assemble(&mesh);
        (mesh, sys)
    }

    #[test]
    fn single_element_cfl() {
        let sys = AssembledSystem {
            stiffness: CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 1.0)]),
            lumped_mass: vec![0.5, 0.5],
            dimension: Dimension::One,
            nodes_per_side: 2,
        };
        let bcs = BoundaryConditions {
            fixed: vec![0],
            driven: vec![],
        };
        let dt = cfl_timestep(&sys, &bcs).unwrap();
        assert!((dt - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn uniform_bar_cfl_is_h_over_c() {
        let (mesh, sys) = homogeneous_bar(10, 20);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let dt = cfl_timestep(&sys, &bcs).unwrap();
        let c = (200e9f64 / 8000.0).sqrt();
        let h = mesh.element_size;
        assert!((dt - h / c).abs() / (h / c) < 0.01, "{dt} vs {}", h / c);

        let (mesh2, sys2) = homogeneous_bar(10, 40);
        let bcs2 = BoundaryConditions::clamped_left_driven_right(&mesh2, DriveComponent::X).unwrap();
        let dt2 = cfl_timestep(&sys2, &bcs2).unwrap();
        assert!((dt / dt2 - 2.0).abs() < 0.1);
    }

    #[test]
    fn zero_drive_stays_at_rest() {
        let (mesh, sys) = homogeneous_bar(4, 8);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let state = explicit_dynamics(&sys, &bcs, &BoundaryDrive::zero(), &DynamicsOptions::new(1e-4, 1e-6)).unwrap();
        assert_eq!(state.len(), 101);
        for k in 0..state.len() {
            assert!(state.displacement[k].iter().all(|&v| v == 0.0));
            assert!(state.acceleration[k].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn recorded_acceleration_is_the_residual() {
        let (mesh, sys) = homogeneous_bar(4, 8);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let drive = BoundaryDrive::polynomial_pulse(1e-3, 5e-5);
        let state = explicit_dynamics(&sys, &bcs, &drive, &DynamicsOptions::new(1e-4, 1e-6)).unwrap();
        let k = 37;
        let ku = sys.stiffness.mul_vec(&state.displacement[k]);
        for i in 1..mesh.n_nodes() - 1 {
            let r = sys.lumped_mass[i] * state.acceleration[k][i] + ku[i];
            assert!(r.abs() <= 1e-9 * ku.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
        let last = mesh.n_nodes() - 1;
        assert_eq!(state.displacement[k][last], drive.displacement(state.times[k]));
    }

    #[test]
    fn divergence_is_reported() {
        let (mesh, sys) = homogeneous_bar(4, 8);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let drive = BoundaryDrive::polynomial_pulse(1e-3, 5e-5);
        let crit = cfl_timestep(&sys, &bcs).unwrap();
        let mut opts = DynamicsOptions::new(1e-3, 1e-4);
        opts.time_step = Some(1.5 * crit);
        let err = explicit_dynamics(&sys, &bcs, &drive, &opts).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
    }

    #[test]
    fn energy_balance_holds() {
        let (mesh, sys) = homogeneous_bar(10, 8);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let drive = BoundaryDrive::polynomial_pulse(1e-3, 5e-5);
        let state = explicit_dynamics(&sys, &bcs, &drive, &DynamicsOptions::new(4e-4, 1e-6)).unwrap();
        let peak = state.energy.iter().map(|e| e.boundary_work.abs()).fold(0.0, f64::max);
        assert!(peak > 0.0);
        for e in &state.energy {
            let total = e.kinetic + e.strain;
            assert!((total - e.boundary_work).abs() < 1e-9 * peak, "{e:?}");
        }
        // once the drive is over the stored energy is constant
        let after: Vec<f64> = state
            .energy
            .iter()
            .filter(|e| e.time > 6e-5)
            .map(|e| e.kinetic + e.strain)
            .collect();
        let (lo, hi) = after
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!((hi - lo) / hi < 1e-3);
    }

    #[test]
    fn pulse_travels_at_bar_speed() {
        let (mesh, sys) = homogeneous_bar(20, 20);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let ts = 2e-5;
        let drive = BoundaryDrive::polynomial_pulse(1e-3, ts);
        let state = explicit_dynamics(&sys, &bcs, &drive, &DynamicsOptions::new(1.5e-4, 1e-7)).unwrap();
        let c = (200e9f64 / 8000.0).sqrt();
        // the peak leaves the right end at Ts/2 and reaches x = 0.5 after 0.5 / c
        let probe = mesh.n_nodes() / 2;
        let k = (0..state.len())
            .max_by(|&a, &b| state.displacement[a][probe].total_cmp(&state.displacement[b][probe]))
            .unwrap();
        let expected = ts / 2.0 + 0.5 / c;
        assert!(
            (state.times[k] - expected).abs() / expected < 0.01,
            "{} vs {expected}",
            state.times[k]
        );
    }

    #[test]
    fn output_interval_must_divide_end_time() {
        let (mesh, sys) = homogeneous_bar(4, 8);
        let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::X).unwrap();
        let r = explicit_dynamics(&sys, &bcs, &BoundaryDrive::zero(), &DynamicsOptions::new(1e-4, 3e-6));
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(BoundaryConditions::clamped_left_driven_right(&mesh, DriveComponent::Y).is_err());
    }
}
