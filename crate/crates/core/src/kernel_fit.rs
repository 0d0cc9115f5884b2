//! Regression of the discrete micro-modulus from coarse-grained data.
//!
//! The kernel is symmetric, so only canonical offsets are unknowns: `i` for
//! `1 <= i <= m` in 1D and `(i, j)` with `0 <= j <= i <= m`, `i >= 1` in 2D,
//! ordered by `i` then `j`. Each canonical entry stands for its orbit under
//! reflection (1D) or the dihedral group of the square (2D).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coarse_grain::{CellGrid, MacroSeries};
use crate::csv::{fmt_f64, quantity_header, Table};
use crate::linalg::{dense_cholesky, inverse_power_iteration};
use crate::microstructure::{Dimension, MicroStructureSpec};
use crate::pd_dynamics::operator_matrix;
use crate::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Canonical offsets for horizon `m`.
pub fn canonical_offsets(dimension: Dimension, horizon_cells: usize) -> Vec<(usize, usize)> {
    match dimension {
        Dimension::One => (1..=horizon_cells).map(|i| (i, 0)).collect(),
        Dimension::Two => (1..=horizon_cells).flat_map(|i| (0..=i).map(move |j| (i, j))).collect(),
    }
}

/// Lattice offsets equivalent to the canonical offset `(i, j)`.
pub fn orbit(dimension: Dimension, i: usize, j: usize) -> Vec<(isize, isize)> {
    let (i, j) = (i as isize, j as isize);
    match dimension {
        Dimension::One => vec![(i, 0), (-i, 0)],
        Dimension::Two => {
            let mut out = Vec::with_capacity(8);
            for (a, b) in [(i, j), (j, i)] {
                for sa in [1, -1] {
                    for sb in [1, -1] {
                        let o = (sa * a, sb * b);
                        if !out.contains(&o) {
                            out.push(o);
                        }
                    }
                }
            }
            out
        }
    }
}

/// How a bond acts on the relative displacement `eta = u_nb - u` of its
/// end cells. Both forms coincide in 1D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondForce {
    /// Pair force along the bond, `omega (e e^T) eta` with `e = xi / |xi|`.
    #[default]
    Directional,
    /// `omega eta`, each component on its own.
    Componentwise,
}

impl BondForce {
    pub fn name(self) -> &'static str {
        match self {
            BondForce::Directional => "directional",
            BondForce::Componentwise => "componentwise",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "directional" => Some(BondForce::Directional),
            "componentwise" => Some(BondForce::Componentwise),
            _ => None,
        }
    }

    /// Row-major 2x2 map from `eta` to the force per unit `omega` for the
    /// offset `(dp, dq)`.
    pub fn projector(self, dp: isize, dq: isize) -> [[f64; 2]; 2] {
        match self {
            BondForce::Componentwise => [[1.0, 0.0], [0.0, 1.0]],
            BondForce::Directional => {
                let (x, y) = (dp as f64, dq as f64);
                let r2 = x * x + y * y;
                [[x * x / r2, x * y / r2], [x * y / r2, y * y / r2]]
            }
        }
    }
}

/// Discrete micro-modulus `omega` over unit-cell offsets, in kg m^-3 s^-2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroModulus {
    pub dimension: Dimension,
    pub horizon_cells: usize,
    pub cell_length: f64,
    /// One value per canonical offset, see [`canonical_offsets`].
    pub values: Vec<f64>,
    #[serde(default)]
    pub bond_force: BondForce,
}

impl MicroModulus {
    pub fn new(dimension: Dimension, horizon_cells: usize, cell_length: f64, values: Vec<f64>) -> Result<Self> {
        let expected = canonical_offsets(dimension, horizon_cells).len();
        if horizon_cells == 0 || values.len() != expected {
            return Err(Error::Config(format!(
                "a {}D kernel with horizon {horizon_cells} has {expected} canonical entries, got {}",
                dimension.as_usize(),
                values.len()
            )));
        }
        Ok(MicroModulus {
            dimension,
            horizon_cells,
            cell_length,
            values,
            bond_force: BondForce::default(),
        })
    }

    pub fn with_bond_force(mut self, bond_force: BondForce) -> Self {
        self.bond_force = bond_force;
        self
    }

    pub fn offsets(&self) -> Vec<(usize, usize)> {
        canonical_offsets(self.dimension, self.horizon_cells)
    }

    /// Position of offset `(dp, dq)` in `values`, `None` for zero or
    /// out-of-horizon offsets.
    pub fn canonical_index(&self, dp: isize, dq: isize) -> Option<usize> {
        let (a, b) = (dp.unsigned_abs(), dq.unsigned_abs());
        let (i, j) = (a.max(b), a.min(b));
        if i == 0 || i > self.horizon_cells {
            return None;
        }
        match self.dimension {
            Dimension::One => (b == 0).then(|| a - 1),
            Dimension::Two => Some((i - 1) * (i + 2) / 2 + j),
        }
    }

    pub fn value_at(&self, dp: isize, dq: isize) -> f64 {
        self.canonical_index(dp, dq).map_or(0.0, |k| self.values[k])
    }

    /// Every nonzero lattice offset in the horizon with its weight.
    pub fn expand(&self) -> Vec<((isize, isize), f64)> {
        let m = self.horizon_cells as isize;
        let qs = match self.dimension {
            Dimension::One => 0..=0,
            Dimension::Two => -m..=m,
        };
        qs.flat_map(|dq| (-m..=m).map(move |dp| (dp, dq)))
            .filter(|&o| o != (0, 0))
            .map(|(dp, dq)| ((dp, dq), self.value_at(dp, dq)))
            .collect()
    }

    /// Rebuilds a kernel from an expanded offset list, checking symmetry.
    pub fn canonicalize(
        dimension: Dimension,
        horizon_cells: usize,
        cell_length: f64,
        expanded: &[((isize, isize), f64)],
    ) -> Result<Self> {
        let n = canonical_offsets(dimension, horizon_cells).len();
        let mut k = MicroModulus::new(dimension, horizon_cells, cell_length, vec![f64::NAN; n])?;
        for &((dp, dq), v) in expanded {
            let idx = k
                .canonical_index(dp, dq)
                .ok_or_else(|| Error::Config(format!("offset ({dp}, {dq}) is outside the horizon")))?;
            if k.values[idx].is_nan() {
                k.values[idx] = v;
            } else if k.values[idx] != v {
                return Err(Error::Config(format!("offset ({dp}, {dq}) breaks the kernel symmetry")));
            }
        }
        if k.values.iter().any(|v| v.is_nan()) {
            return Err(Error::Coverage("expanded kernel is missing offsets".into()));
        }
        Ok(k)
    }

    /// Second moment `sum over offsets of omega |xi|^2 / 4` per canonical
    /// entry, i.e. the row of the energy constraint.
    pub fn second_moment(&self) -> f64 {
        energy_row(self.dimension, self.horizon_cells, self.cell_length)
            .iter()
            .zip(&self.values)
            .map(|(c, w)| c * w)
            .sum()
    }

    pub fn write_csv(&self, path: &Path, train_end: Option<f64>, mode: Option<&str>) -> Result<()> {
        let columns = match self.dimension {
            Dimension::One => vec!["i", "value"],
            Dimension::Two => vec!["i", "j", "value"],
        };
        let mut t = Table::new(columns.into_iter().map(String::from).collect());
        t.comments = vec![
            quantity_header("micro_modulus", "kg/(m^3 s^2)", train_end, mode),
            format!(
                "dimension={}, horizon_cells={}, cell_length_m={}, bond_force={}",
                self.dimension.as_usize(),
                self.horizon_cells,
                fmt_f64(self.cell_length),
                self.bond_force.name()
            ),
        ];
        for ((i, j), v) in self.offsets().into_iter().zip(&self.values) {
            t.rows.push(match self.dimension {
                Dimension::One => vec![i as f64, *v],
                Dimension::Two => vec![i as f64, j as f64, *v],
            });
        }
        t.write(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let t = Table::read(path)?;
        let what = path.display().to_string();
        let get = |key: &str| t.meta(key).ok_or_else(|| Error::parse(&what, format!("missing {key}")));
        let dim: usize = get("dimension")?
            .parse()
            .map_err(|_| Error::parse(&what, "bad dimension"))?;
        let dimension = Dimension::from_usize(dim)?;
        let m: usize = get("horizon_cells")?
            .parse()
            .map_err(|_| Error::parse(&what, "bad horizon_cells"))?;
        let l: f64 = get("cell_length_m")?
            .parse()
            .map_err(|_| Error::parse(&what, "bad cell_length_m"))?;
        let offsets = canonical_offsets(dimension, m);
        if t.rows.len() != offsets.len() {
            return Err(Error::parse(&what, format!("expected {} rows", offsets.len())));
        }
        let mut values = Vec::with_capacity(offsets.len());
        for (row, (i, j)) in t.rows.iter().zip(offsets) {
            let ok = match dimension {
                Dimension::One => row[0] == i as f64,
                Dimension::Two => row[0] == i as f64 && row[1] == j as f64,
            };
            if !ok {
                return Err(Error::parse(&what, "offsets out of canonical order"));
            }
            values.push(*row.last().unwrap());
        }
        let bond_force = match t.meta("bond_force") {
            Some(name) => {
                BondForce::from_name(name).ok_or_else(|| Error::parse(&what, format!("unknown bond_force {name}")))?
            }
            None => BondForce::default(),
        };
        Ok(MicroModulus::new(dimension, m, l, values)?.with_bond_force(bond_force))
    }
}

/// Linear equality `c . omega = d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub c: Vec<f64>,
    pub d: f64,
}

fn energy_row(dimension: Dimension, horizon_cells: usize, cell_length: f64) -> Vec<f64> {
    canonical_offsets(dimension, horizon_cells)
        .into_iter()
        .map(|(i, j)| match dimension {
            Dimension::One => (i as f64 * cell_length).powi(2),
            Dimension::Two => {
                let r2 = ((i * i + j * j) as f64) * cell_length * cell_length;
                0.25 * orbit(dimension, i, j).len() as f64 * r2
            }
        })
        .collect()
}

/// `sum_i (i l)^2 omega_i = E_hom`.
pub fn energy_constraint_1d(spec: &MicroStructureSpec, horizon_cells: usize) -> Result<Constraint> {
    Ok(Constraint {
        c: energy_row(Dimension::One, horizon_cells, spec.cell_length),
        d: spec.homogenized_modulus_1d()?,
    })
}

/// `sum over offsets of omega |xi|^2 / 4 = W_uc / s^2`.
pub fn energy_constraint_2d(energy_per_strain_sq: f64, horizon_cells: usize, cell_length: f64) -> Constraint {
    Constraint {
        c: energy_row(Dimension::Two, horizon_cells, cell_length),
        d: energy_per_strain_sq,
    }
}

/// Weighted least-squares problem `min || W (A omega - b) ||` with an optional
/// equality constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSystem {
    pub dimension: Dimension,
    pub horizon_cells: usize,
    pub cell_length: f64,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub weights: DVector<f64>,
    pub constraint: Option<Constraint>,
    pub bond_force: BondForce,
}

impl RegressionSystem {
    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Result<Self> {
        if constraint.c.len() != self.cols() {
            return Err(Error::Config(format!(
                "constraint has {} coefficients for {} unknowns",
                constraint.c.len(),
                self.cols()
            )));
        }
        self.constraint = Some(constraint);
        Ok(self)
    }

    /// `||W A||_F^2 / ||c||^2`, the penalty weight at which the constraint row
    /// and the data carry comparable weight.
    pub fn penalty_scale(&self) -> Option<f64> {
        let c = self.constraint.as_ref()?;
        let wa: f64 = (0..self.rows())
            .map(|r| self.weights[r].powi(2) * self.a.row(r).norm_squared())
            .sum();
        Some(wa / c.c.iter().map(|v| v * v).sum::<f64>())
    }
}

/// Regression rows of one snapshot: the bond forces per unit `omega`
/// summed over the orbit of each canonical column, for every interior cell
/// and component.
fn snapshot_rows(
    series: &MacroSeries,
    k: usize,
    cells: &[usize],
    offsets: &[Vec<(isize, isize)>],
    bond_force: BondForce,
) -> Vec<(Vec<f64>, f64)> {
    let nc = series.components();
    let u = &series.displacement[k];
    let a = &series.acceleration[k];
    let grid = series.grid;
    let mut rows = Vec::with_capacity(cells.len() * nc);
    for &cell in cells {
        let mut row = vec![vec![0.0; offsets.len()]; nc];
        for (col, orb) in offsets.iter().enumerate() {
            for &(dp, dq) in orb {
                let nb = grid.offset(cell, dp, dq).expect("interior cell neighbourhood");
                if nc == 1 {
                    row[0][col] += u[nb] - u[cell];
                    continue;
                }
                let p = bond_force.projector(dp, dq);
                let eta = [u[nb * 2] - u[cell * 2], u[nb * 2 + 1] - u[cell * 2 + 1]];
                for c in 0..2 {
                    row[c][col] += p[c][0] * eta[0] + p[c][1] * eta[1];
                }
            }
        }
        for (c, r) in row.into_iter().enumerate() {
            rows.push((r, series.density * a[cell * nc + c]));
        }
    }
    rows
}

fn build_system(
    train: &MacroSeries,
    horizon_cells: usize,
    component_weights: &[f64],
    bond_force: BondForce,
) -> Result<RegressionSystem> {
    train.check()?;
    let dimension = train.grid.dimension;
    let interior = train.grid.interior(horizon_cells)?;
    let canon = canonical_offsets(dimension, horizon_cells);
    let orbits: Vec<_> = canon.iter().map(|&(i, j)| orbit(dimension, i, j)).collect();
    let nc = train.components();
    let rows_total = train.len() * interior.len() * nc;
    let cols = canon.len();
    if rows_total < cols {
        return Err(Error::Underdetermined { rows: rows_total, cols });
    }
    let blocks: Vec<Vec<(Vec<f64>, f64)>> = (0..train.len())
        .into_par_iter()
        .map(|k| snapshot_rows(train, k, &interior.cells, &orbits, bond_force))
        .collect();
    let mut a = DMatrix::zeros(rows_total, cols);
    let mut b = DVector::zeros(rows_total);
    let mut w = DVector::zeros(rows_total);
    for (r, (row, target)) in blocks.into_iter().flatten().enumerate() {
        for (col, v) in row.into_iter().enumerate() {
            a[(r, col)] = v;
        }
        b[r] = target;
        w[r] = component_weights[r % nc];
    }
    Ok(RegressionSystem {
        dimension,
        horizon_cells,
        cell_length: train.cell_length,
        a,
        b,
        weights: w,
        constraint: None,
        bond_force,
    })
}

/// One unit-weight row per (snapshot, interior cell); column `j` holds
/// `u_{i+j} + u_{i-j} - 2 u_i` and the target is `rho a_i`.
pub fn build_system_1d(train: &MacroSeries, horizon_cells: usize) -> Result<RegressionSystem> {
    if train.grid.dimension != Dimension::One {
        return Err(Error::Unsupported("build_system_1d needs a 1D series".into()));
    }
    build_system(train, horizon_cells, &[1.0], BondForce::default())
}

/// Two rows (x then y) per (snapshot, interior cell), weighted by
/// `weights[component]`.
pub fn build_system_2d(
    train: &MacroSeries,
    horizon_cells: usize,
    weights: [f64; 2],
    bond_force: BondForce,
) -> Result<RegressionSystem> {
    if train.grid.dimension != Dimension::Two {
        return Err(Error::Unsupported("build_system_2d needs a 2D series".into()));
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Config(format!("row weights must be positive, got {weights:?}")));
    }
    build_system(train, horizon_cells, &weights, bond_force)
}

/// `1 / RMS(rho a_c)` over the interior training rows of each component.
pub fn inverse_rms_weights(train: &MacroSeries, horizon_cells: usize) -> Result<[f64; 2]> {
    let interior = train.grid.interior(horizon_cells)?;
    let nc = train.components();
    let mut out = [1.0; 2];
    for (c, slot) in out.iter_mut().enumerate().take(nc) {
        let (mut sum, mut n) = (0.0, 0usize);
        for a in &train.acceleration {
            for &cell in &interior.cells {
                sum += (train.density * a[cell * nc + c]).powi(2);
                n += 1;
            }
        }
        let rms = (sum / n.max(1) as f64).sqrt();
        if !(rms > 0.0) {
            return Err(Error::Coverage(format!(
                "component {c} has zero acceleration over the training window"
            )));
        }
        *slot = 1.0 / rms;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "alpha")]
pub enum SolveMode {
    Unconstrained,
    /// Exact enforcement of the constraint by null-space elimination.
    EqualityConstrained,
    /// Quadratic penalty `alpha (c . omega - d)^2` added to the objective.
    Penalty(f64),
}

impl SolveMode {
    pub fn name(&self) -> &'static str {
        match self {
            SolveMode::Unconstrained => "unconstrained",
            SolveMode::EqualityConstrained => "equality_constrained",
            SolveMode::Penalty(_) => "penalty",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub solver: String,
    pub penalty_alpha: Option<f64>,
    pub rows: usize,
    pub cols: usize,
    /// `||W (A omega - b)||`.
    pub residual_norm: f64,
    /// `residual_norm / ||W b||`.
    pub relative_residual: f64,
    /// `|c . omega - d| / |d|`, when a constraint row is present.
    pub constraint_violation: Option<f64>,
    /// Ratio of extreme singular values of the column-scaled system.
    pub condition_estimate: f64,
    pub positive_definite: Option<bool>,
    pub min_eigenvalue: Option<f64>,
    pub failing_pivot: Option<usize>,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
    }

    pub fn record_certificate(&mut self, cert: &PdCertificate) {
        self.positive_definite = Some(cert.positive_definite);
        self.min_eigenvalue = cert.min_eigenvalue;
        self.failing_pivot = cert.failing_pivot;
    }
}

/// Least squares by Householder QR; returns the solution and the extreme
/// singular values of `a`.
fn qr_lstsq(a: DMatrix<f64>, mut b: DVector<f64>) -> Result<(DVector<f64>, f64, f64)> {
    let n = a.ncols();
    if n == 0 {
        return Ok((DVector::zeros(0), 1.0, 1.0));
    }
    let qr = a.qr();
    let r = qr.r();
    let sv = r.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let deficient = sv.iter().filter(|&&s| !(s > RANK_TOLERANCE * smax)).count();
    if deficient > 0 {
        return Err(Error::RankDeficient { deficient, cols: n });
    }
    qr.q_tr_mul(&mut b);
    let mut x = b.rows(0, n).into_owned();
    if !r.solve_upper_triangular_mut(&mut x) {
        return Err(Error::RankDeficient { deficient: 1, cols: n });
    }
    Ok((x, smin, smax))
}

/// Solves the regression problem in the requested mode.
pub fn solve(system: &RegressionSystem, mode: SolveMode) -> Result<(MicroModulus, FitReport)> {
    let (rows, cols) = (system.rows(), system.cols());
    let constraint = match mode {
        SolveMode::Unconstrained => None,
        _ => Some(
            system
                .constraint
                .as_ref()
                .ok_or_else(|| Error::Config(format!("{} mode needs a constraint row", mode.name())))?,
        ),
    };
    let min_rows = if matches!(mode, SolveMode::Unconstrained) {
        cols
    } else {
        cols.saturating_sub(1)
    };
    if rows < min_rows {
        return Err(Error::Underdetermined { rows, cols });
    }
    // weighted rows, then columns scaled to unit max-abs
    let mut wa = system.a.clone();
    let mut wb = system.b.clone();
    for r in 0..rows {
        let w = system.weights[r];
        wa.row_mut(r).scale_mut(w);
        wb[r] *= w;
    }
    let scale: Vec<f64> = (0..cols).map(|k| wa.column(k).amax()).collect();
    let zero = scale.iter().filter(|&&s| !(s > 0.0)).count();
    if zero > 0 {
        return Err(Error::RankDeficient { deficient: zero, cols });
    }
    let mut scaled = wa.clone();
    for (k, s) in scale.iter().enumerate() {
        scaled.column_mut(k).scale_mut(1.0 / s);
    }

    let (x, smin, smax) = match (mode, constraint) {
        (SolveMode::Unconstrained, _) => qr_lstsq(scaled, wb.clone())?,
        (SolveMode::EqualityConstrained, Some(con)) => {
            let cs = DVector::from_iterator(cols, con.c.iter().zip(&scale).map(|(c, s)| c / s));
            let norm = cs.norm();
            if !(norm > 0.0) {
                return Err(Error::Config("constraint row is zero".into()));
            }
            // Householder reflector H = I - 2 v v^T / (v^T v) with H e_1 = -sign(cs_0) cs / |cs|
            let mut v = &cs / norm;
            let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
            v[0] += sign;
            let vv = v.dot(&v);
            let h = DMatrix::<f64>::identity(cols, cols) - (&v * v.transpose()) * (2.0 / vv);
            let null = h.columns(1, cols - 1).into_owned();
            let xp = &cs * (con.d / (norm * norm));
            let rhs = &wb - &scaled * &xp;
            let (z, smin, smax) = qr_lstsq(&scaled * &null, rhs)?;
            (xp + null * z, smin, smax)
        }
        (SolveMode::Penalty(alpha), Some(con)) => {
            if !(alpha > 0.0) || !alpha.is_finite() {
                return Err(Error::Config(format!("penalty weight must be positive, got {alpha}")));
            }
            let sa = alpha.sqrt();
            let mut stacked = DMatrix::zeros(rows + 1, cols);
            let mut rhs = DVector::zeros(rows + 1);
            for k in 0..cols {
                stacked[(0, k)] = sa * con.c[k] / scale[k];
            }
            rhs[0] = sa * con.d;
            stacked.rows_mut(1, rows).copy_from(&scaled);
            rhs.rows_mut(1, rows).copy_from(&wb);
            qr_lstsq(stacked, rhs)?
        }
        _ => unreachable!("constraint presence checked above"),
    };

    let omega: Vec<f64> = x.iter().zip(&scale).map(|(v, s)| v / s).collect();
    let kernel = MicroModulus::new(system.dimension, system.horizon_cells, system.cell_length, omega)?
        .with_bond_force(system.bond_force);
    let resid = &wa * DVector::from_column_slice(&kernel.values) - &wb;
    let residual_norm = resid.norm();
    let bn = wb.norm();
    let report = FitReport {
        solver: mode.name().to_string(),
        penalty_alpha: match mode {
            SolveMode::Penalty(a) => Some(a),
            _ => None,
        },
        rows,
        cols,
        residual_norm,
        relative_residual: if bn > 0.0 { residual_norm / bn } else { f64::NAN },
        constraint_violation: system.constraint.as_ref().map(|c| {
            let lhs: f64 = c.c.iter().zip(&kernel.values).map(|(a, b)| a * b).sum();
            (lhs - c.d).abs() / c.d.abs()
        }),
        condition_estimate: smax / smin,
        positive_definite: None,
        min_eigenvalue: None,
        failing_pivot: None,
    };
    Ok((kernel, report))
}

/// Outcome of the positive-definiteness check of `-L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdCertificate {
    pub positive_definite: bool,
    /// Smallest eigenvalue of `-L` (kg m^-3 s^-2).
    pub min_eigenvalue: Option<f64>,
    pub failing_pivot: Option<usize>,
}

/// Checks that `-L` is positive definite, where `L` is the interior-cell
/// operator on an `n_cells`-per-side grid with a homogeneous Dirichlet
/// collar of width `m`.
pub fn certify_positive_definite(kernel: &MicroModulus, n_cells: usize) -> Result<PdCertificate> {
    let grid = CellGrid::new(kernel.dimension, n_cells);
    let op = operator_matrix(kernel, grid)?;
    let neg = -op.interior;
    match dense_cholesky(&neg) {
        Ok(l) => Ok(PdCertificate {
            positive_definite: true,
            min_eigenvalue: inverse_power_iteration(&l, 1e-10, 100_000).ok(),
            failing_pivot: None,
        }),
        Err(pivot) => Ok(PdCertificate {
            positive_definite: false,
            min_eigenvalue: neg.symmetric_eigenvalues().iter().copied().reduce(f64::min),
            failing_pivot: Some(pivot),
        }),
    }
}
