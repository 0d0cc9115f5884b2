use nalgebra::SMatrix;

use super::element::{bar_stiffness, quad_stiffness};
use crate::linalg::CsrMatrix;
use crate::microstructure::{Dimension, MaterialPhase, MicroStructureSpec, Phase};
use crate::{Error, Result};

/// Structured mesh of the whole domain.
///
/// Nodes are numbered row by row, `node = iy * nodes_per_side + ix`, and
/// degrees of freedom are interleaved per node, `dof = node * components + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct FemMesh {
    pub dimension: Dimension,
    pub domain_length: f64,
    pub cell_length: f64,
    pub n_cells: usize,
    /// Elements per cell along each axis.
    pub elements_per_cell: usize,
    pub element_size: f64,
    pub nodes: Vec<[f64; 2]>,
    /// Flat connectivity, `nodes_per_element()` entries per element.
    pub connectivity: Vec<usize>,
    pub element_phase: Vec<Phase>,
    pub element_material: Vec<MaterialPhase>,
}

impl FemMesh {
    pub fn components(&self) -> usize {
        self.dimension.components()
    }

    pub fn elements_per_side(&self) -> usize {
        self.n_cells * self.elements_per_cell
    }

    pub fn nodes_per_side(&self) -> usize {
        self.elements_per_side() + 1
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_elements(&self) -> usize {
        self.element_phase.len()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_nodes() * self.components()
    }

    pub fn nodes_per_element(&self) -> usize {
        match self.dimension {
            Dimension::One => 2,
            Dimension::Two => 4,
        }
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.connectivity[e * k..(e + 1) * k]
    }

    /// Node index of grid position `(ix, iy)`; `iy` is ignored in 1D.
    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        match self.dimension {
            Dimension::One => ix,
            Dimension::Two => iy * self.nodes_per_side() + ix,
        }
    }

    pub fn dof(&self, node: usize, component: usize) -> usize {
        node * self.components() + component
    }

    /// Grid position of a node.
    pub fn node_position(&self, node: usize) -> (usize, usize) {
        match self.dimension {
            Dimension::One => (node, 0),
            Dimension::Two => (node % self.nodes_per_side(), node / self.nodes_per_side()),
        }
    }
}

/// Builds the structured mesh, assigning each element the phase at its
/// centroid.
pub fn build_mesh(spec: &MicroStructureSpec, elements_per_cell: usize) -> Result<FemMesh> {
    let divisor = match spec.dimension {
        Dimension::One => 4,
        Dimension::Two => 3,
    };
    if elements_per_cell == 0 || elements_per_cell % divisor != 0 {
        return Err(Error::Config(format!(
            "elements per cell must be a positive multiple of {divisor} in {}D to align with phase interfaces, got {elements_per_cell}",
            spec.dimension.as_usize()
        )));
    }
    let n_el = spec.n_cells_per_side * elements_per_cell;
    let h = spec.cell_length / elements_per_cell as f64;
    let coord = |i: usize| {
        // exact at cell boundaries
        let cell = i / elements_per_cell;
        let k = i % elements_per_cell;
        cell as f64 * spec.cell_length + k as f64 * h
    };
    let mut nodes = Vec::new();
    let mut connectivity = Vec::new();
    let mut element_phase = Vec::new();
    match spec.dimension {
        Dimension::One => {
            nodes.extend((0..=n_el).map(|i| [coord(i), 0.0]));
            for e in 0..n_el {
                connectivity.extend_from_slice(&[e, e + 1]);
                let c = 0.5 * (coord(e) + coord(e + 1));
                element_phase.push(spec.phase_at(&[c])?);
            }
        }
        Dimension::Two => {
            let np = n_el + 1;
            for iy in 0..np {
                for ix in 0..np {
                    nodes.push([coord(ix), coord(iy)]);
                }
            }
            for ey in 0..n_el {
                for ex in 0..n_el {
                    let n0 = ey * np + ex;
                    connectivity.extend_from_slice(&[n0, n0 + 1, n0 + np + 1, n0 + np]);
                    let cx = 0.5 * (coord(ex) + coord(ex + 1));
                    let cy = 0.5 * (coord(ey) + coord(ey + 1));
                    element_phase.push(spec.phase_at(&[cx, cy])?);
                }
            }
        }
    }
    let element_material = element_phase.iter().map(|&p| *spec.material(p)).collect();
    Ok(FemMesh {
        dimension: spec.dimension,
        domain_length: spec.domain_length,
        cell_length: spec.cell_length,
        n_cells: spec.n_cells_per_side,
        elements_per_cell,
        element_size: h,
        nodes,
        connectivity,
        element_phase,
        element_material,
    })
}

/// Global stiffness and lumped mass of a mesh.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub stiffness: CsrMatrix,
    /// Row-sum lumped mass, one entry per degree of freedom.
    pub lumped_mass: Vec<f64>,
    pub dimension: Dimension,
    pub nodes_per_side: usize,
}

impl AssembledSystem {
    pub fn n_dofs(&self) -> usize {
        self.lumped_mass.len()
    }

    pub fn components(&self) -> usize {
        self.dimension.components()
    }

    /// +1/-1 checkerboard over nodes, the shape of the highest mode of a
    /// uniform lattice.
    pub(crate) fn checkerboard(&self) -> Vec<f64> {
        let nc = self.components();
        (0..self.n_dofs())
            .map(|d| {
                let node = d / nc;
                let (ix, iy) = match self.dimension {
                    Dimension::One => (node, 0),
                    Dimension::Two => (node % self.nodes_per_side, node / self.nodes_per_side),
                };
                let sign = if (ix + iy) % 2 == 0 { 1.0 } else { -1.0 };
                sign * (1.0 + 0.05 * ((d * 7) % 11) as f64 / 11.0)
            })
            .collect()
    }
}

fn sparsity_pattern(mesh: &FemMesh) -> Vec<Vec<usize>> {
    let nc = mesh.components();
    let np = mesh.nodes_per_side();
    let mut rows = vec![Vec::new(); mesh.n_dofs()];
    for node in 0..mesh.n_nodes() {
        let (ix, iy) = mesh.node_position(node);
        let mut neighbours = Vec::with_capacity(9);
        let ys = match mesh.dimension {
            Dimension::One => 0..1,
            Dimension::Two => iy.saturating_sub(1)..(iy + 2).min(np),
        };
        for jy in ys {
            for jx in ix.saturating_sub(1)..(ix + 2).min(np) {
                neighbours.push(mesh.node_index(jx, jy));
            }
        }
        for c in 0..nc {
            let row = &mut rows[node * nc + c];
            for &nb in &neighbours {
                for c2 in 0..nc {
                    row.push(nb * nc + c2);
                }
            }
        }
    }
    rows
}

/// Assembles the global stiffness matrix and the lumped mass vector.
/// Elements are visited in index order, so the floating-point sums are
/// reproducible.
pub fn assemble(mesh: &FemMesh) -> AssembledSystem {
    let n = mesh.n_dofs();
    let mut k = CsrMatrix::with_pattern(n, n, sparsity_pattern(mesh));
    let mut mass = vec![0.0; n];
    let h = mesh.element_size;
    match mesh.dimension {
        Dimension::One => {
            for e in 0..mesh.n_elements() {
                let mat = &mesh.element_material[e];
                let ke = bar_stiffness(mat.elastic_modulus, h);
                let nodes = mesh.element_nodes(e);
                for a in 0..2 {
                    mass[nodes[a]] += 0.5 * mat.density * h;
                    for b in 0..2 {
                        k.add(nodes[a], nodes[b], ke[a][b]);
                    }
                }
            }
        }
        Dimension::Two => {
            // one reference matrix per phase; the element matrix is linear in E
            let reference: SMatrix<f64, 8, 8> = quad_stiffness(1.0, mesh.element_material[0].poisson_ratio, h);
            for e in 0..mesh.n_elements() {
                let mat = &mesh.element_material[e];
                let nodes = mesh.element_nodes(e);
                let dofs: [usize; 8] = std::array::from_fn(|i| 2 * nodes[i / 2] + i % 2);
                let m_node = 0.25 * mat.density * h * h;
                for &d in &dofs {
                    mass[d] += m_node;
                }
                for a in 0..8 {
                    for b in 0..8 {
                        k.add(dofs[a], dofs[b], mat.elastic_modulus * reference[(a, b)]);
                    }
                }
            }
        }
    }
    AssembledSystem {
        stiffness: k,
        lumped_mass: mass,
        dimension: mesh.dimension,
        nodes_per_side: mesh.nodes_per_side(),
    }
}
