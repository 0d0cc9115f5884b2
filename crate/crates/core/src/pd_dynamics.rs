//! Discrete bond-based peridynamic model on the unit-cell lattice.
//!
//! For an interior cell `x` the operator is
//! `L[u](x) = sum over offsets xi of omega(xi) P(xi) (u(x + xi) - u(x))`,
//! where `P` is the bond projector of the kernel's [`BondForce`]: the unit
//! matrix for componentwise bonds, `xi xi^T / |xi|^2` for directional ones.
//! Cells within `m` of the boundary form the collar; their values are data.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::coarse_grain::{CellGrid, CellSet, MacroSeries, TrainTestSplit};
use crate::kernel_fit::{BondForce, MicroModulus};
use crate::linalg::power_iteration;
use crate::{Error, Result};

/// Interior cell count above which the operator is applied in parallel.
const PARALLEL_CELLS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct PdModel {
    pub kernel: MicroModulus,
    /// Cell-averaged density in kg/m^3.
    pub density: f64,
    pub grid: CellGrid,
    interior: CellSet,
    /// Nonzero bonds with `omega P` stored row-major.
    stencil: Vec<((isize, isize), [f64; 4])>,
}

impl PdModel {
    pub fn new(kernel: MicroModulus, density: f64, grid: CellGrid) -> Result<Self> {
        if kernel.dimension != grid.dimension {
            return Err(Error::Config(format!(
                "{}D kernel on a {}D grid",
                kernel.dimension.as_usize(),
                grid.dimension.as_usize()
            )));
        }
        if !(density > 0.0) {
            return Err(Error::Config(format!("density must be positive, got {density}")));
        }
        let interior = grid.interior(kernel.horizon_cells)?;
        let stencil = bond_blocks(&kernel);
        Ok(PdModel {
            kernel,
            density,
            grid,
            interior,
            stencil,
        })
    }

    pub fn interior(&self) -> &CellSet {
        &self.interior
    }

    pub fn components(&self) -> usize {
        self.grid.components()
    }

    fn width(&self) -> usize {
        self.grid.n_cells() * self.components()
    }

    fn operator_at(&self, u: &[f64], cell: usize, out: &mut [f64]) {
        let nc = self.components();
        out.iter_mut().for_each(|v| *v = 0.0);
        for &((dp, dq), b) in &self.stencil {
            let nb = self.grid.offset(cell, dp, dq).expect("interior neighbourhood on grid");
            if nc == 1 {
                out[0] += b[0] * (u[nb] - u[cell]);
            } else {
                let ex = u[nb * 2] - u[cell * 2];
                let ey = u[nb * 2 + 1] - u[cell * 2 + 1];
                out[0] += b[0] * ex + b[1] * ey;
                out[1] += b[2] * ex + b[3] * ey;
            }
        }
    }

    /// `L[u]` on the interior cells, ordered as `interior().cells` with the
    /// components of each cell adjacent. `u` must cover the whole grid.
    pub fn apply_operator(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.width() {
            return Err(Error::Coverage(format!(
                "field has {} values, the grid with its collar needs {}",
                u.len(),
                self.width()
            )));
        }
        let nc = self.components();
        let mut out = vec![0.0; self.interior.len() * nc];
        if self.interior.len() >= PARALLEL_CELLS {
            out.par_chunks_mut(nc)
                .zip(self.interior.cells.par_iter())
                .for_each(|(o, &cell)| self.operator_at(u, cell, o));
        } else {
            for (o, &cell) in out.chunks_mut(nc).zip(&self.interior.cells) {
                self.operator_at(u, cell, o);
            }
        }
        Ok(out)
    }

    /// Writes `L[u] / rho` into the interior entries of a full-grid vector.
    fn accelerations_into(&self, u: &[f64], acc: &mut [f64]) {
        let nc = self.components();
        let lu = self.apply_operator(u).expect("full-grid field");
        for (k, &cell) in self.interior.cells.iter().enumerate() {
            for c in 0..nc {
                acc[cell * nc + c] = lu[k * nc + c] / self.density;
            }
        }
    }

    pub fn assemble_matrix(&self) -> OperatorMatrix {
        build_operator_matrix(&self.kernel, self.grid, &self.interior)
    }

    /// Critical central-difference step `2 / sqrt(lambda_max(-L / rho))` on
    /// the interior cells; infinite for a zero kernel.
    pub fn critical_time_step(&self) -> Result<f64> {
        let nc = self.components();
        let n = self.width();
        let start: Vec<f64> = (0..n)
            .map(|d| {
                let cell = d / nc;
                if !self.interior.contains(cell) {
                    return 0.0;
                }
                let (p, q) = self.grid.position(cell);
                let s = if (p + q) % 2 == 0 { 1.0 } else { -1.0 };
                s * (1.0 + 0.05 * ((d * 7) % 11) as f64 / 11.0)
            })
            .collect();
        let est = power_iteration(
            |x, y| {
                y.iter_mut().for_each(|v| *v = 0.0);
                let lu = self.apply_operator(x).expect("full-grid field");
                for (k, &cell) in self.interior.cells.iter().enumerate() {
                    for c in 0..nc {
                        y[cell * nc + c] = -lu[k * nc + c] / self.density;
                    }
                }
            },
            start,
            1e-6,
            10_000,
        )?;
        let lambda = est.eigenvalue.abs();
        Ok(if lambda > 0.0 {
            2.0 / lambda.sqrt()
        } else {
            f64::INFINITY
        })
    }

    /// Discrete energy `rho |v|^2 / 2 - u . L[u] / 2` over interior cells;
    /// conserved when the collar is at rest at zero.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let nc = self.components();
        let lu = self.apply_operator(u)?;
        let mut e = 0.0;
        for (k, &cell) in self.interior.cells.iter().enumerate() {
            for c in 0..nc {
                let d = cell * nc + c;
                e += 0.5 * self.density * v[d] * v[d] - 0.5 * u[d] * lu[k * nc + c];
            }
        }
        Ok(e)
    }

    /// Central-difference integration of `rho a = L[u]` from `t_start`.
    ///
    /// `u0` and `v0` are full-grid fields; their collar entries are replaced
    /// by `collar` data, which is interpolated in time with cubic Lagrange
    /// polynomials. Snapshots are recorded every `output_interval` up to and
    /// including `t_end`.
    pub fn integrate(
        &self,
        u0: &[f64],
        v0: &[f64],
        collar: &MacroSeries,
        t_start: f64,
        t_end: f64,
        options: &IntegrationOptions,
    ) -> Result<MacroSeries> {
        let n = self.width();
        if u0.len() != n || v0.len() != n {
            return Err(Error::Coverage("initial fields must cover the whole grid".into()));
        }
        if collar.grid != self.grid {
            return Err(Error::Coverage("collar data lives on a different grid".into()));
        }
        let span = t_end - t_start;
        let dt_out = options.output_interval;
        if !(span > 0.0) || !(dt_out > 0.0) {
            return Err(Error::Config(
                "integration window and output interval must be positive".into(),
            ));
        }
        let n_out = (span / dt_out).round() as usize;
        if n_out == 0 || (n_out as f64 * dt_out - span).abs() > 1e-6 * dt_out {
            return Err(Error::Config(format!(
                "window {span:e} s is not a multiple of the output interval {dt_out:e} s"
            )));
        }
        let interp = CollarInterpolator::new(collar, t_start, t_end)?;
        let target = match options.time_step {
            Some(dt) => dt,
            None => options.stability_fraction * self.critical_time_step()?,
        };
        if !(target > 0.0) {
            return Err(Error::Config(format!("invalid time step {target:e}")));
        }
        let substeps = (dt_out / target).ceil().max(1.0) as usize;
        let dt = dt_out / substeps as f64;

        let nc = self.components();
        let collar_dofs: Vec<usize> = (0..self.grid.n_cells())
            .filter(|&c| !self.interior.contains(c))
            .flat_map(|c| (0..nc).map(move |k| c * nc + k))
            .collect();
        let scale = collar.displacement.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let limit = 1e6
            * scale
                .max(u0.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .max(f64::MIN_POSITIVE);

        let mut u = u0.to_vec();
        let mut acc = vec![0.0; n];
        let mut collar_acc = vec![0.0; n];
        interp.fill(t_start, &collar_dofs, &mut u, &mut collar_acc);
        self.accelerations_into(&u, &mut acc);
        for &d in &collar_dofs {
            acc[d] = collar_acc[d];
        }

        let mut out = MacroSeries::empty(self.grid, collar.cell_length, self.density);
        out.push(t_start, u.clone(), acc.clone());

        // first step from the Taylor expansion, then the two-level recurrence
        let mut u_prev = u.clone();
        let mut u_next = vec![0.0; n];
        for step in 1..=n_out * substeps {
            let t = t_start + step as f64 * dt;
            for d in 0..n {
                u_next[d] = if step == 1 {
                    u[d] + dt * v0[d] + 0.5 * dt * dt * acc[d]
                } else {
                    2.0 * u[d] - u_prev[d] + dt * dt * acc[d]
                };
            }
            interp.fill(t, &collar_dofs, &mut u_next, &mut collar_acc);
            std::mem::swap(&mut u_prev, &mut u);
            std::mem::swap(&mut u, &mut u_next);
            self.accelerations_into(&u, &mut acc);
            if u.iter().any(|v| !(v.abs() <= limit)) {
                return Err(Error::Divergence { dt, time: t });
            }
            if step % substeps == 0 {
                let mut rec = acc.clone();
                for &d in &collar_dofs {
                    rec[d] = collar_acc[d];
                }
                let t_rec = t_start + (step / substeps) as f64 * dt_out;
                out.push(t_rec, u.clone(), rec);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    pub output_interval: f64,
    /// Fraction of the critical step used when `time_step` is unset.
    pub stability_fraction: f64,
    /// Explicit step; rounded down to divide the output interval.
    pub time_step: Option<f64>,
}

impl IntegrationOptions {
    pub fn new(output_interval: f64) -> Self {
        IntegrationOptions {
            output_interval,
            stability_fraction: 0.25,
            time_step: None,
        }
    }
}

/// Cubic Lagrange interpolation of collar data in time.
struct CollarInterpolator<'a> {
    data: &'a MacroSeries,
}

impl<'a> CollarInterpolator<'a> {
    fn new(data: &'a MacroSeries, t_start: f64, t_end: f64) -> Result<Self> {
        data.check()?;
        let (first, last) = match (data.times.first(), data.times.last()) {
            (Some(&a), Some(&b)) => (a, b),
            _ => return Err(Error::Coverage("no collar data".into())),
        };
        let tol = 1e-9 * (last - first).abs().max(1e-300);
        if t_start < first - tol || t_end > last + tol {
            return Err(Error::Coverage(format!(
                "collar data covers [{first:e}, {last:e}] s, integration needs [{t_start:e}, {t_end:e}] s"
            )));
        }
        Ok(CollarInterpolator { data })
    }

    /// Writes interpolated collar displacement into `u` and acceleration
    /// into `a` at the collar dofs.
    fn fill(&self, t: f64, dofs: &[usize], u: &mut [f64], a: &mut [f64]) {
        let times = &self.data.times;
        let n = times.len();
        if n == 1 {
            for &d in dofs {
                u[d] = self.data.displacement[0][d];
                a[d] = self.data.acceleration[0][d];
            }
            return;
        }
        let k = times.partition_point(|&s| s <= t).clamp(1, n - 1) - 1;
        if t == times[k] {
            for &d in dofs {
                u[d] = self.data.displacement[k][d];
                a[d] = self.data.acceleration[k][d];
            }
            return;
        }
        let points = n.min(4);
        let lo = k.saturating_sub(1).min(n - points);
        let idx: Vec<usize> = (lo..lo + points).collect();
        let weights: Vec<f64> = idx
            .iter()
            .map(|&i| {
                idx.iter()
                    .filter(|&&j| j != i)
                    .map(|&j| (t - times[j]) / (times[i] - times[j]))
                    .product()
            })
            .collect();
        // increments from snapshot k keep constant data exactly constant
        let (u_k, a_k) = (&self.data.displacement[k], &self.data.acceleration[k]);
        for &d in dofs {
            let (mut su, mut sa) = (u_k[d], a_k[d]);
            for (&i, w) in idx.iter().zip(&weights) {
                su += w * (self.data.displacement[i][d] - u_k[d]);
                sa += w * (self.data.acceleration[i][d] - a_k[d]);
            }
            u[d] = su;
            a[d] = sa;
        }
    }
}

/// `omega P` per nonzero bond; only the first entry is used in 1D.
fn bond_blocks(kernel: &MicroModulus) -> Vec<((isize, isize), [f64; 4])> {
    let bond_force = if kernel.dimension.as_usize() == 1 {
        BondForce::Componentwise
    } else {
        kernel.bond_force
    };
    kernel
        .expand()
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|((dp, dq), w)| {
            let p = bond_force.projector(dp, dq);
            ((dp, dq), [w * p[0][0], w * p[0][1], w * p[1][0], w * p[1][1]])
        })
        .collect()
}

/// Matrix form of the operator: `L[u] = interior * u_I + collar * u_C`.
/// Degrees of freedom are ordered cell by cell with the components of a
/// cell adjacent, so row `i * components + c` is component `c` of
/// `interior_cells[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub components: usize,
    pub interior_cells: Vec<usize>,
    pub collar_cells: Vec<usize>,
    pub interior: DMatrix<f64>,
    pub collar: DMatrix<f64>,
}

fn build_operator_matrix(kernel: &MicroModulus, grid: CellGrid, interior: &CellSet) -> OperatorMatrix {
    let nc = grid.components();
    let collar_cells: Vec<usize> = (0..grid.n_cells()).filter(|&c| !interior.contains(c)).collect();
    let mut local = vec![usize::MAX; grid.n_cells()];
    for (i, &c) in interior.cells.iter().enumerate() {
        local[c] = i;
    }
    for (i, &c) in collar_cells.iter().enumerate() {
        local[c] = i;
    }
    let mut a = DMatrix::zeros(interior.len() * nc, interior.len() * nc);
    let mut b = DMatrix::zeros(interior.len() * nc, collar_cells.len() * nc);
    let blocks = bond_blocks(kernel);
    for (r, &cell) in interior.cells.iter().enumerate() {
        for &((dp, dq), blk) in &blocks {
            let nb = grid.offset(cell, dp, dq).expect("interior neighbourhood on grid");
            for c in 0..nc {
                for d in 0..nc {
                    let w = blk[c * 2 + d];
                    a[(r * nc + c, r * nc + d)] -= w;
                    if interior.contains(nb) {
                        a[(r * nc + c, local[nb] * nc + d)] += w;
                    } else {
                        b[(r * nc + c, local[nb] * nc + d)] += w;
                    }
                }
            }
        }
    }
    OperatorMatrix {
        components: nc,
        interior_cells: interior.cells.clone(),
        collar_cells,
        interior: a,
        collar: b,
    }
}

/// Operator matrix of `kernel` on an `grid` whose collar has the kernel's
/// horizon as width.
pub fn operator_matrix(kernel: &MicroModulus, grid: CellGrid) -> Result<OperatorMatrix> {
    let interior = grid.interior(kernel.horizon_cells)?;
    Ok(build_operator_matrix(kernel, grid, &interior))
}

/// Velocity at snapshot `k` by centered differences, one-sided at the ends.
fn velocity_estimate(series: &MacroSeries, k: usize) -> Vec<f64> {
    let n = series.len();
    if n < 2 {
        return vec![0.0; series.width()];
    }
    let (a, b) = if k == 0 {
        (0, 1)
    } else if k == n - 1 {
        (n - 2, n - 1)
    } else {
        (k - 1, k + 1)
    };
    let dt = series.times[b] - series.times[a];
    series.displacement[b]
        .iter()
        .zip(&series.displacement[a])
        .map(|(x, y)| (x - y) / dt)
        .collect()
}

fn uniform_interval(series: &MacroSeries) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Coverage("need at least two snapshots".into()));
    }
    let dt = series.times[1] - series.times[0];
    for w in series.times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::Coverage("snapshots are not evenly spaced".into()));
        }
    }
    Ok(dt)
}

/// Integrates from snapshot `start` of `data` to its end, taking initial
/// conditions and collar values from `data`. Returns snapshots at the data
/// times from `start` on.
pub fn integrate_against(
    model: &PdModel,
    data: &MacroSeries,
    start: usize,
    options: Option<f64>,
) -> Result<MacroSeries> {
    if start + 1 >= data.len() {
        return Err(Error::Coverage("nothing to integrate after the start snapshot".into()));
    }
    let dt_out = uniform_interval(data)?;
    let mut opts = IntegrationOptions::new(dt_out);
    opts.time_step = options;
    let v0 = velocity_estimate(data, start);
    let t0 = data.times[start];
    let mut out = model.integrate(
        &data.displacement[start],
        &v0,
        data,
        t0,
        *data.times.last().unwrap(),
        &opts,
    )?;
    // report the data's own time stamps
    out.times.copy_from_slice(&data.times[start..]);
    Ok(out)
}

/// Test-window predictions of a learned model.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `L[u_data] / rho` on the test snapshots (interior cells; collar
    /// entries are the data). The displacement field is the data.
    pub acceleration: MacroSeries,
    /// Forward integration from the last training snapshot over the test
    /// window.
    pub trajectory: MacroSeries,
}

/// `L[u_data] / rho` on every snapshot of `data`; collar entries keep the
/// data values.
pub fn predict_acceleration(model: &PdModel, data: &MacroSeries) -> Result<MacroSeries> {
    let nc = model.components();
    let mut acceleration = data.clone();
    for k in 0..acceleration.len() {
        let lu = model.apply_operator(&data.displacement[k])?;
        for (i, &cell) in model.interior().cells.iter().enumerate() {
            for c in 0..nc {
                acceleration.acceleration[k][cell * nc + c] = lu[i * nc + c] / model.density;
            }
        }
    }
    Ok(acceleration)
}

/// Forward integration from the last training snapshot over the test
/// window.
pub fn predict_trajectory(model: &PdModel, split: &TrainTestSplit, time_step: Option<f64>) -> Result<MacroSeries> {
    if split.test.is_empty() || split.train.is_empty() {
        return Err(Error::Coverage("split has an empty window".into()));
    }
    let mut joined = split.train.clone();
    joined.times.extend_from_slice(&split.test.times);
    joined.displacement.extend(split.test.displacement.iter().cloned());
    joined.acceleration.extend(split.test.acceleration.iter().cloned());
    let start = split.train.len() - 1;
    let full = integrate_against(model, &joined, start, time_step)?;
    Ok(full.select(|k, _| k > 0))
}

/// Acceleration and displacement predictions over the test window.
pub fn predict_from_split(model: &PdModel, split: &TrainTestSplit, time_step: Option<f64>) -> Result<Prediction> {
    if split.test.is_empty() || split.train.is_empty() {
        return Err(Error::Coverage("split has an empty window".into()));
    }
    Ok(Prediction {
        acceleration: predict_acceleration(model, &split.test)?,
        trajectory: predict_trajectory(model, split, time_step)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::microstructure::Dimension;
    use nalgebra::{DVector, SymmetricEigen};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kernel(dim: Dimension, m: usize, values: Vec<f64>) -> MicroModulus {
        MicroModulus::new(dim, m, 0.02, values).unwrap()
    }

    fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    /// Direct double loop over cells and offsets.
    fn brute_force(k: &MicroModulus, grid: CellGrid, u: &[f64]) -> Vec<f64> {
        let m = k.horizon_cells as isize;
        let nc = grid.components();
        let n = grid.n as isize;
        let two = grid.dimension == Dimension::Two;
        let mut out = Vec::new();
        for q in 0..if two { n } else { 1 } {
            for p in 0..n {
                let inside = p >= m && p < n - m && (!two || (q >= m && q < n - m));
                if !inside {
                    continue;
                }
                for c in 0..nc {
                    let mut s = 0.0;
                    for dq in if two { -m..=m } else { 0..=0 } {
                        for dp in -m..=m {
                            if (dp, dq) == (0, 0) {
                                continue;
                            }
                            let nb = ((q + dq) * n + p + dp) as usize;
                            let me = (q * n + p) as usize;
                            if two && k.bond_force == BondForce::Directional {
                                let xi = [dp as f64, dq as f64];
                                let r2 = xi[0] * xi[0] + xi[1] * xi[1];
                                for d in 0..2 {
                                    s += k.value_at(dp, dq) * xi[c] * xi[d] / r2 * (u[nb * 2 + d] - u[me * 2 + d]);
                                }
                            } else {
                                s += k.value_at(dp, dq) * (u[nb * nc + c] - u[me * nc + c]);
                            }
                        }
                    }
                    out.push(s);
                }
            }
        }
        out
    }

    #[test]
    fn operator_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k1 = kernel(Dimension::One, 2, vec![1.5, -0.25]);
        let g1 = CellGrid::new(Dimension::One, 7);
        let u1 = random_field(&mut rng, 7);
        let model = PdModel::new(k1.clone(), 1.0, g1).unwrap();
        let got = model.apply_operator(&u1).unwrap();
        for (a, b) in got.iter().zip(brute_force(&k1, g1, &u1)) {
            assert!((a - b).abs() < 1e-14);
        }
        for bond_force in [BondForce::Directional, BondForce::Componentwise] {
            let k2 = kernel(Dimension::Two, 2, vec![2.0, 0.7, -0.3, 0.1, 0.05]).with_bond_force(bond_force);
            let g2 = CellGrid::new(Dimension::Two, 7);
            let u2 = random_field(&mut rng, 98);
            let got = PdModel::new(k2.clone(), 1.0, g2).unwrap().apply_operator(&u2).unwrap();
            let want = brute_force(&k2, g2, &u2);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(want) {
                assert!((a - b).abs() < 1e-13);
            }
        }
        assert!(matches!(model.apply_operator(&u1[..5]), Err(Error::Coverage(_))));
    }

    /// `L_x` for the quadratic fields `u = (y^2 / 2, 0)` and `u = (0, x y)`.
    fn shear_responses(bond_force: BondForce) -> (f64, f64) {
        let k = kernel(
            Dimension::Two,
            3,
            vec![5.0, -1.0, 0.7, 0.4, -0.2, 0.3, 0.1, 0.05, -0.02],
        )
        .with_bond_force(bond_force);
        let grid = CellGrid::new(Dimension::Two, 9);
        let model = PdModel::new(k, 1.0, grid).unwrap();
        let field = |f: &dyn Fn(f64, f64) -> [f64; 2]| -> Vec<f64> {
            (0..grid.n_cells())
                .flat_map(|c| {
                    let (p, q) = grid.position(c);
                    f(p as f64, q as f64)
                })
                .collect()
        };
        let centre = model
            .interior()
            .cells
            .iter()
            .position(|&c| c == grid.index(4, 4))
            .unwrap();
        let a = model.apply_operator(&field(&|_, y| [0.5 * y * y, 0.0])).unwrap()[centre * 2];
        let b = model.apply_operator(&field(&|x, y| [0.0, x * y])).unwrap()[centre * 2];
        (a, b)
    }

    #[test]
    fn directional_bonds_satisfy_the_cauchy_relation() {
        // C12 + C66 = 2 C66 for central pair forces
        let (a, b) = shear_responses(BondForce::Directional);
        assert!(a.abs() > 0.1);
        assert!((b - 2.0 * a).abs() < 1e-12 * a.abs());
        let (a, b) = shear_responses(BondForce::Componentwise);
        assert!(a.abs() > 0.1);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn constants_and_linear_fields_are_annihilated() {
        let k = kernel(Dimension::One, 3, vec![4.0, -1.0, 0.5]);
        let model = PdModel::new(k, 8000.0, CellGrid::new(Dimension::One, 12)).unwrap();
        assert!(model.apply_operator(&[3.3; 12]).unwrap().iter().all(|&v| v == 0.0));
        let lin: Vec<f64> = (0..12).map(|i| 0.01 * i as f64 * 0.02).collect();
        assert!(model.apply_operator(&lin).unwrap().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn stencil_matrix() {
        let k = kernel(Dimension::One, 1, vec![2.0]);
        let op = PdModel::new(k, 1.0, CellGrid::new(Dimension::One, 5))
            .unwrap()
            .assemble_matrix();
        let expect = DMatrix::from_row_slice(3, 3, &[-4.0, 2.0, 0.0, 2.0, -4.0, 2.0, 0.0, 2.0, -4.0]);
        assert_eq!(op.interior, expect);
        assert_eq!(op.collar_cells, vec![0, 4]);
        assert_eq!(op.collar[(0, 0)], 2.0);
        assert_eq!(op.collar[(2, 1)], 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn matrix_reproduces_operator(two in any::<bool>(), directional in any::<bool>(), m in 1usize..4, seed in 0u64..1000) {
            let dim = if two { Dimension::Two } else { Dimension::One };
            let bond_force = if directional { BondForce::Directional } else { BondForce::Componentwise };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_can = crate::kernel_fit::canonical_offsets(dim, m).len();
            let k = kernel(dim, m, random_field(&mut rng, n_can)).with_bond_force(bond_force);
            let grid = CellGrid::new(dim, 2 * m + 3);
            let model = PdModel::new(k.clone(), 1.0, grid).unwrap();
            let op = model.assemble_matrix();
            let nc = grid.components();
            let u = random_field(&mut rng, grid.n_cells() * nc);
            let lu = model.apply_operator(&u).unwrap();
            let u = &u;
            let gather = |cells: &[usize]| DVector::from_iterator(cells.len() * nc, cells.iter().flat_map(|&i| (0..nc).map(move |c| u[i * nc + c])));
            let mv = &op.interior * gather(&op.interior_cells) + &op.collar * gather(&op.collar_cells);
            prop_assert_eq!(mv.len(), lu.len());
            for r in 0..lu.len() {
                prop_assert!((mv[r] - lu[r]).abs() < 1e-13 * (1.0 + lu[r].abs()));
            }
            // a rigid translation is annihilated, interior block is symmetric
            let shift = |cells: usize| DVector::from_iterator(cells * nc, (0..cells * nc).map(|d| if d % nc == 0 { 1.0 } else { -0.5 }));
            let z = &op.interior * shift(op.interior_cells.len()) + &op.collar * shift(op.collar_cells.len());
            let wmax = k.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            prop_assert!(z.amax() < 1e-12 * wmax * 100.0);
            prop_assert!((&op.interior - op.interior.transpose()).amax() < 1e-12 * wmax);
        }

        #[test]
        fn operator_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k = kernel(Dimension::Two, 2, random_field(&mut rng, 5));
            let model = PdModel::new(k, 1.0, CellGrid::new(Dimension::Two, 6)).unwrap();
            let u = random_field(&mut rng, 72);
            let v = random_field(&mut rng, 72);
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| alpha * a + b).collect();
            let (lu, lv, lw) = (model.apply_operator(&u).unwrap(), model.apply_operator(&v).unwrap(), model.apply_operator(&w).unwrap());
            for i in 0..lw.len() {
                prop_assert!((lw[i] - (alpha * lu[i] + lv[i])).abs() < 1e-12);
            }
        }
    }

    fn static_collar(grid: CellGrid, t_end: f64) -> MacroSeries {
        let w = grid.n_cells() * grid.components();
        let mut s = MacroSeries::empty(grid, 0.02, 1.0);
        s.push(0.0, vec![0.0; w], vec![0.0; w]);
        s.push(t_end, vec![0.0; w], vec![0.0; w]);
        s
    }

    #[test]
    fn two_cell_oscillator_period() {
        let (w1, rho) = (3.0e13, 8000.0);
        let grid = CellGrid::new(Dimension::One, 3);
        let model = PdModel::new(kernel(Dimension::One, 1, vec![w1]), rho, grid).unwrap();
        let omega = (2.0 * w1 / rho).sqrt();
        let period = 2.0 * std::f64::consts::PI / omega;
        let dt_pd = model.critical_time_step().unwrap();
        assert!((dt_pd - 2.0 / omega).abs() < 1e-6 * dt_pd);
        let dt = 0.1 * dt_pd;
        let t_end = 400.0 * dt;
        let mut opts = IntegrationOptions::new(dt);
        opts.time_step = Some(dt);
        let s = model
            .integrate(
                &[0.0, 1e-3, 0.0],
                &[0.0; 3],
                &static_collar(grid, t_end),
                0.0,
                t_end,
                &opts,
            )
            .unwrap();
        // upward zero crossings of the velocity-free cosine start at T/4, 3T/4, ...
        let x: Vec<f64> = s.displacement.iter().map(|u| u[1]).collect();
        let crossings: Vec<f64> = (1..x.len())
            .filter(|&k| x[k - 1] < 0.0 && x[k] >= 0.0)
            .map(|k| s.times[k - 1] + dt * x[k - 1] / (x[k - 1] - x[k]))
            .collect();
        assert!(crossings.len() >= 2);
        let measured = crossings[1] - crossings[0];
        assert!((measured - period).abs() / period < 0.005, "{measured} vs {period}");
    }

    #[test]
    fn matches_modal_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = CellGrid::new(Dimension::One, 12);
        let k = kernel(Dimension::One, 2, vec![3e13, -2e12]);
        let rho = 8000.0;
        let model = PdModel::new(k, rho, grid).unwrap();
        let op = model.assemble_matrix();
        let ni = op.interior_cells.len();
        let mut u0 = vec![0.0; 12];
        let mut v0 = vec![0.0; 12];
        for &c in &op.interior_cells {
            u0[c] = rng.gen_range(-1e-3..1e-3);
            v0[c] = rng.gen_range(-1.0..1.0);
        }
        let dt = 0.0025 * model.critical_time_step().unwrap();
        let steps = 100;
        let mut opts = IntegrationOptions::new(dt);
        opts.time_step = Some(dt);
        let t_end = steps as f64 * dt;
        let s = model
            .integrate(&u0, &v0, &static_collar(grid, t_end), 0.0, t_end, &opts)
            .unwrap();

        // u(t) = V cos(sqrt(L) t) V^T u0 + V sin(sqrt(L) t)/sqrt(L) V^T v0
        let eig = SymmetricEigen::new(-&op.interior / rho);
        let pick = |f: &[f64]| DVector::from_iterator(ni, op.interior_cells.iter().map(|&c| f[c]));
        let (a0, b0) = (
            eig.eigenvectors.transpose() * pick(&u0),
            eig.eigenvectors.transpose() * pick(&v0),
        );
        let mut worst = 0.0f64;
        let mut norm = 0.0f64;
        for kk in 0..s.len() {
            let t = s.times[kk];
            let modal = DVector::from_fn(ni, |i, _| {
                let w = eig.eigenvalues[i].sqrt();
                a0[i] * (w * t).cos() + b0[i] * (w * t).sin() / w
            });
            let exact = &eig.eigenvectors * modal;
            let got = pick(&s.displacement[kk]);
            worst = worst.max((got - &exact).amax());
            norm = norm.max(exact.amax());
        }
        assert!(worst < 1e-6 * norm, "{}", worst / norm);
    }

    #[test]
    fn zero_kernel_is_stationary() {
        let grid = CellGrid::new(Dimension::Two, 5);
        let model = PdModel::new(kernel(Dimension::Two, 1, vec![0.0, 0.0]), 8000.0, grid).unwrap();
        assert_eq!(model.critical_time_step().unwrap(), f64::INFINITY);
        let u0: Vec<f64> = (0..50).map(|i| i as f64 * 1e-4).collect();
        let mut collar = MacroSeries::empty(grid, 0.02, 8000.0);
        collar.push(0.0, u0.clone(), vec![0.0; 50]);
        collar.push(1e-5, u0.clone(), vec![0.0; 50]);
        let s = model
            .integrate(&u0, &[0.0; 50], &collar, 0.0, 1e-5, &IntegrationOptions::new(1e-6))
            .unwrap();
        assert_eq!(s.len(), 11);
        assert!(s.displacement.iter().all(|u| u == &u0));
    }

    #[test]
    fn energy_is_conserved_with_static_collar() {
        let grid = CellGrid::new(Dimension::One, 30);
        let k = kernel(Dimension::One, 3, vec![3e13, -2e12, 4e11]);
        let model = PdModel::new(k, 8000.0, grid).unwrap();
        let dt = 0.25 * model.critical_time_step().unwrap();
        let mut u0 = vec![0.0; 30];
        for (i, &c) in model.interior().cells.iter().enumerate() {
            u0[c] = 1e-4 * (-(i as f64 - 12.0).powi(2) / 8.0).exp();
        }
        let n = 2000;
        let mut opts = IntegrationOptions::new(dt);
        opts.time_step = Some(dt);
        let s = model
            .integrate(
                &u0,
                &[0.0; 30],
                &static_collar(grid, n as f64 * dt),
                0.0,
                n as f64 * dt,
                &opts,
            )
            .unwrap();
        let energies: Vec<f64> = (1..s.len() - 1)
            .map(|k| {
                let v: Vec<f64> = (0..30)
                    .map(|d| (s.displacement[k + 1][d] - s.displacement[k - 1][d]) / (2.0 * dt))
                    .collect();
                model.energy(&s.displacement[k], &v).unwrap()
            })
            .collect();
        let e0 = model.energy(&u0, &[0.0; 30]).unwrap();
        let drift = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0;
        assert!(drift < 0.01, "{drift}");
    }

    #[test]
    fn collar_gaps_and_divergence() {
        let grid = CellGrid::new(Dimension::One, 5);
        let model = PdModel::new(kernel(Dimension::One, 1, vec![1e13]), 8000.0, grid).unwrap();
        let collar = static_collar(grid, 1e-3);
        let r = model.integrate(&[0.0; 5], &[0.0; 5], &collar, 0.0, 2e-3, &IntegrationOptions::new(1e-6));
        assert!(matches!(r, Err(Error::Coverage(_))));
        let mut opts = IntegrationOptions::new(1e-4);
        opts.stability_fraction = 1.2;
        let u0 = [0.0, 1e-3, -1e-3, 1e-3, 0.0];
        let r = model.integrate(&u0, &[0.0; 5], &collar, 0.0, 1e-3, &opts);
        assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
    }

    #[test]
    fn self_consistent_prediction() {
        // data generated by the model itself is reproduced
        let grid = CellGrid::new(Dimension::One, 20);
        let k = kernel(Dimension::One, 2, vec![3e13, -1e12]);
        let model = PdModel::new(k, 8000.0, grid).unwrap();
        let mut u0 = vec![0.0; 20];
        for (c, u) in u0.iter_mut().enumerate() {
            *u = 1e-4 * ((c as f64) * 0.4).sin();
        }
        let collar = {
            let mut s = MacroSeries::empty(grid, 0.02, 8000.0);
            for k in 0..=200 {
                let t = k as f64 * 1e-7;
                let u: Vec<f64> = u0.iter().map(|v| v * (1.0 + 1e3 * t)).collect();
                s.push(t, u, vec![0.0; 20]);
            }
            s
        };
        let data = model
            .integrate(&u0, &vec![0.0; 20], &collar, 0.0, 2e-5, &IntegrationOptions::new(1e-7))
            .unwrap();
        let sp = crate::coarse_grain::split(&data, 1e-5).unwrap();
        let pred = predict_from_split(&model, &sp, None).unwrap();
        assert_eq!(pred.trajectory.times, sp.test.times);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..sp.test.len() {
            for &c in &model.interior().cells {
                num += (pred.acceleration.acceleration[k][c] - sp.test.acceleration[k][c]).powi(2);
                den += sp.test.acceleration[k][c].powi(2);
            }
        }
        assert!((num / den).sqrt() < 1e-8);
    }

    #[test]
    fn resting_medium_predicts_rest() {
        let grid = CellGrid::new(Dimension::One, 9);
        let model = PdModel::new(kernel(Dimension::One, 2, vec![3e13, -1e12]), 8000.0, grid).unwrap();
        let mut s = MacroSeries::empty(grid, 0.02, 8000.0);
        for k in 0..10 {
            s.push(k as f64 * 1e-6, vec![0.0; 9], vec![0.0; 9]);
        }
        let sp = crate::coarse_grain::split(&s, 4e-6).unwrap();
        let pred = predict_from_split(&model, &sp, None).unwrap();
        assert!(pred.trajectory.displacement.iter().flatten().all(|&v| v == 0.0));
        assert!(pred.acceleration.acceleration.iter().flatten().all(|&v| v == 0.0));
    }
}
