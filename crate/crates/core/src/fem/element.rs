use nalgebra::{Matrix3, SMatrix};

/// Stiffness of a two-node bar of unit cross-section.
pub fn bar_stiffness(elastic_modulus: f64, length: f64) -> [[f64; 2]; 2] {
    let k = elastic_modulus / length;
    [[k, -k], [-k, k]]
}

/// Plane-stress constitutive matrix in Voigt order `(xx, yy, xy)` with
/// engineering shear strain.
pub fn plane_stress_matrix(elastic_modulus: f64, poisson_ratio: f64) -> Matrix3<f64> {
    let c = elastic_modulus / (1.0 - poisson_ratio * poisson_ratio);
    Matrix3::new(
        c,
        c * poisson_ratio,
        0.0,
        c * poisson_ratio,
        c,
        0.0,
        0.0,
        0.0,
        c * (1.0 - poisson_ratio) / 2.0,
    )
}

pub(crate) const XI: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];
pub(crate) const ETA: [f64; 4] = [-1.0, -1.0, 1.0, 1.0];

/// Strain-displacement matrix of a square bilinear element of side `h` at
/// natural coordinates `(xi, eta)`. Nodes are ordered counter-clockwise from
/// the lower-left corner; dofs are `(u_x, u_y)` per node.
pub(crate) fn quad_b_matrix(h: f64, xi: f64, eta: f64) -> SMatrix<f64, 3, 8> {
    let mut b = SMatrix::<f64, 3, 8>::zeros();
    for a in 0..4 {
        let dndx = 0.25 * XI[a] * (1.0 + eta * ETA[a]) * 2.0 / h;
        let dndy = 0.25 * ETA[a] * (1.0 + xi * XI[a]) * 2.0 / h;
        b[(0, 2 * a)] = dndx;
        b[(1, 2 * a + 1)] = dndy;
        b[(2, 2 * a)] = dndy;
        b[(2, 2 * a + 1)] = dndx;
    }
    b
}

/// Stiffness of a square bilinear plane-stress element of side `h` and unit
/// thickness, integrated with 2x2 Gauss points.
pub fn quad_stiffness(elastic_modulus: f64, poisson_ratio: f64, h: f64) -> SMatrix<f64, 8, 8> {
    let d = plane_stress_matrix(elastic_modulus, poisson_ratio);
    let g = 1.0 / 3f64.sqrt();
    let det_j = h * h / 4.0;
    let mut k = SMatrix::<f64, 8, 8>::zeros();
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            let b = quad_b_matrix(h, xi, eta);
            k += b.transpose() * d * b * det_j;
        }
    }
    // symmetrize away rounding so assembled matrices are exactly symmetric
    let kt = k.transpose();
    (k + kt) * 0.5
}
