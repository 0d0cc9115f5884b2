use super::element::{plane_stress_matrix, quad_b_matrix};
use super::mesh::{assemble, build_mesh, AssembledSystem, FemMesh};
use crate::linalg::BandedCholesky;
use crate::microstructure::{Dimension, MicroStructureSpec};
use crate::{Error, Result};

/// Solves `K u = f` with the displacements of `prescribed` dofs imposed.
///
/// `forces` holds nodal loads on every dof; entries at prescribed dofs are
/// ignored. Fails if the free block is singular (insufficient supports).
pub fn static_solve(system: &AssembledSystem, prescribed: &[(usize, f64)], forces: &[f64]) -> Result<Vec<f64>> {
    let n = system.n_dofs();
    if forces.len() != n {
        return Err(Error::Config(format!(
            "expected {n} nodal forces, got {}",
            forces.len()
        )));
    }
    let mut u = vec![0.0; n];
    let mut is_free = vec![true; n];
    for &(d, v) in prescribed {
        if d >= n {
            return Err(Error::Config(format!("prescribed dof {d} out of range")));
        }
        u[d] = v;
        is_free[d] = false;
    }
    let free: Vec<usize> = (0..n).filter(|&d| is_free[d]).collect();
    let ku = system.stiffness.mul_vec(&u);
    let mut rhs: Vec<f64> = free.iter().map(|&d| forces[d] - ku[d]).collect();
    let chol = BandedCholesky::factor_submatrix(&system.stiffness, &free)?;
    chol.solve_in_place(&mut rhs);
    for (&d, v) in free.iter().zip(rhs) {
        u[d] = v;
    }
    Ok(u)
}

/// `u^T K u / 2`.
pub fn strain_energy(system: &AssembledSystem, u: &[f64]) -> f64 {
    let ku = system.stiffness.mul_vec(u);
    0.5 * ku.iter().zip(u).map(|(a, b)| a * b).sum::<f64>()
}

/// Stress at the centre of element `e`: `[sigma]` in 1D, `[sxx, syy, sxy]`
/// in 2D.
pub fn element_stress(mesh: &FemMesh, u: &[f64], e: usize) -> Vec<f64> {
    let nodes = mesh.element_nodes(e);
    let mat = &mesh.element_material[e];
    let h = mesh.element_size;
    match mesh.dimension {
        Dimension::One => vec![mat.elastic_modulus * (u[nodes[1]] - u[nodes[0]]) / h],
        Dimension::Two => {
            let b = quad_b_matrix(h, 0.0, 0.0);
            let ue = nalgebra::SVector::<f64, 8>::from_fn(|i, _| u[2 * nodes[i / 2] + i % 2]);
            let s = plane_stress_matrix(mat.elastic_modulus, mat.poisson_ratio) * (b * ue);
            vec![s[0], s[1], s[2]]
        }
    }
}

/// Strain energy per unit cell volume of one cell of `spec` under kinematic
/// boundary conditions `u = s (x - x_c)` on its whole boundary, i.e. a
/// uniform dilatation `s` in every direction.
pub fn unit_cell_energy_density(spec: &MicroStructureSpec, elements_per_cell: usize, strain: f64) -> Result<f64> {
    let cell = MicroStructureSpec {
        domain_length: spec.cell_length,
        n_cells_per_side: 1,
        ..spec.clone()
    };
    let mesh = build_mesh(&cell, elements_per_cell)?;
    let system = assemble(&mesh);
    let np = mesh.nodes_per_side();
    let centre = 0.5 * cell.cell_length;
    let mut prescribed = Vec::new();
    for node in 0..mesh.n_nodes() {
        let (ix, iy) = mesh.node_position(node);
        let on_boundary = match mesh.dimension {
            Dimension::One => ix == 0 || ix == np - 1,
            Dimension::Two => ix == 0 || iy == 0 || ix == np - 1 || iy == np - 1,
        };
        if on_boundary {
            for c in 0..mesh.components() {
                prescribed.push((mesh.dof(node, c), strain * (mesh.nodes[node][c] - centre)));
            }
        }
    }
    let u = static_solve(&system, &prescribed, &vec![0.0; system.n_dofs()])?;
    Ok(strain_energy(&system, &u) / cell.cell_length.powi(mesh.dimension.as_usize() as i32))
}
