//! Unit-cell averages of micro-scale fields and train/test windows.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv::{fmt_f64, quantity_header, Table};
use crate::fem::{FemMesh, MicroState, Snapshot};
use crate::microstructure::{Dimension, MicroStructureSpec};
use crate::{Error, Result};

/// Square (or linear) lattice of unit cells. Cell `(p, q)` has flat index
/// `q * n + p`; in 1D `q = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellGrid {
    pub dimension: Dimension,
    /// Cells per side.
    pub n: usize,
}

impl CellGrid {
    pub fn new(dimension: Dimension, n: usize) -> Self {
        CellGrid { dimension, n }
    }

    pub fn n_cells(&self) -> usize {
        match self.dimension {
            Dimension::One => self.n,
            Dimension::Two => self.n * self.n,
        }
    }

    pub fn components(&self) -> usize {
        self.dimension.components()
    }

    pub fn index(&self, p: usize, q: usize) -> usize {
        q * self.n + p
    }

    pub fn position(&self, cell: usize) -> (usize, usize) {
        (cell % self.n, cell / self.n)
    }

    /// Cell at `(p + dp, q + dq)` if it lies on the grid.
    pub fn offset(&self, cell: usize, dp: isize, dq: isize) -> Option<usize> {
        let (p, q) = self.position(cell);
        let p2 = p as isize + dp;
        let q2 = q as isize + dq;
        let rows = match self.dimension {
            Dimension::One => 1,
            Dimension::Two => self.n as isize,
        };
        (p2 >= 0 && p2 < self.n as isize && q2 >= 0 && q2 < rows).then(|| self.index(p2 as usize, q2 as usize))
    }

    /// The cell at `floor(n / 2)` along every axis.
    pub fn middle_cell(&self) -> usize {
        match self.dimension {
            Dimension::One => self.n / 2,
            Dimension::Two => self.index(self.n / 2, self.n / 2),
        }
    }

    pub fn label(&self, cell: usize) -> String {
        let (p, q) = self.position(cell);
        match self.dimension {
            Dimension::One => p.to_string(),
            Dimension::Two => format!("{p}_{q}"),
        }
    }

    /// Cells whose whole square neighbourhood of radius `horizon_cells`
    /// lies on the grid.
    pub fn interior(&self, horizon_cells: usize) -> Result<CellSet> {
        if horizon_cells == 0 {
            return Err(Error::Config("horizon must span at least one cell".into()));
        }
        let need = 2 * horizon_cells + 1;
        if self.n < need {
            return Err(Error::Config(format!(
                "a horizon of {horizon_cells} cells leaves no interior cells; the domain needs at least {need} cells per side, got {}",
                self.n
            )));
        }
        let range = horizon_cells..self.n - horizon_cells;
        let cells = match self.dimension {
            Dimension::One => range.collect(),
            Dimension::Two => range
                .clone()
                .flat_map(|q| range.clone().map(move |p| (p, q)))
                .map(|(p, q)| self.index(p, q))
                .collect(),
        };
        Ok(CellSet { grid: *self, cells })
    }
}

/// Ordered subset of the cells of a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellSet {
    pub grid: CellGrid,
    /// Flat cell indices in increasing order.
    pub cells: Vec<usize>,
}

impl CellSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }
}

/// Cell-averaged displacement and acceleration histories.
///
/// Snapshot `k` stores `cell * components + c` in `displacement[k]` and
/// `acceleration[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroSeries {
    pub grid: CellGrid,
    /// Unit-cell side `l` in m.
    pub cell_length: f64,
    /// Cell-averaged density in kg/m^3.
    pub density: f64,
    pub times: Vec<f64>,
    pub displacement: Vec<Vec<f64>>,
    pub acceleration: Vec<Vec<f64>>,
}

impl MacroSeries {
    pub fn empty(grid: CellGrid, cell_length: f64, density: f64) -> Self {
        MacroSeries {
            grid,
            cell_length,
            density,
            times: Vec::new(),
            displacement: Vec::new(),
            acceleration: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn components(&self) -> usize {
        self.grid.components()
    }

    pub fn width(&self) -> usize {
        self.grid.n_cells() * self.components()
    }

    pub fn push(&mut self, time: f64, displacement: Vec<f64>, acceleration: Vec<f64>) {
        debug_assert_eq!(displacement.len(), self.width());
        debug_assert_eq!(acceleration.len(), self.width());
        self.times.push(time);
        self.displacement.push(displacement);
        self.acceleration.push(acceleration);
    }

    pub fn check(&self) -> Result<()> {
        let w = self.width();
        let n = self.times.len();
        if self.displacement.len() != n || self.acceleration.len() != n {
            return Err(Error::Coverage(
                "displacement/acceleration snapshot counts differ from the time grid".into(),
            ));
        }
        if let Some(k) = (0..n).find(|&k| self.displacement[k].len() != w || self.acceleration[k].len() != w) {
            return Err(Error::Coverage(format!("snapshot {k} does not cover every cell")));
        }
        if self.times.windows(2).any(|t| !(t[1] > t[0])) {
            return Err(Error::Coverage("snapshot times are not increasing".into()));
        }
        Ok(())
    }

    /// Snapshots whose index satisfies `keep`.
    pub fn select(&self, mut keep: impl FnMut(usize, f64) -> bool) -> MacroSeries {
        let mut out = MacroSeries::empty(self.grid, self.cell_length, self.density);
        for k in 0..self.len() {
            if keep(k, self.times[k]) {
                out.push(
                    self.times[k],
                    self.displacement[k].clone(),
                    self.acceleration[k].clone(),
                );
            }
        }
        out
    }

    /// Time history of one component of one cell: `(displacement, acceleration)`.
    pub fn cell_trace(&self, cell: usize, component: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = cell * self.components() + component;
        (
            self.displacement.iter().map(|u| u[idx]).collect(),
            self.acceleration.iter().map(|a| a[idx]).collect(),
        )
    }

    fn file_names(&self, stem: &str) -> Vec<(String, &'static str, &'static str, bool, usize)> {
        // (file, quantity, units, is_acceleration, component)
        match self.grid.dimension {
            Dimension::One => vec![
                (format!("{stem}_u.csv"), "displacement", "m", false, 0),
                (format!("{stem}_a.csv"), "acceleration", "m/s^2", true, 0),
            ],
            Dimension::Two => vec![
                (format!("{stem}_ux.csv"), "displacement_x", "m", false, 0),
                (format!("{stem}_uy.csv"), "displacement_y", "m", false, 1),
                (format!("{stem}_ax.csv"), "acceleration_x", "m/s^2", true, 0),
                (format!("{stem}_ay.csv"), "acceleration_y", "m/s^2", true, 1),
            ],
        }
    }

    fn grid_meta(&self) -> String {
        let shape = match self.grid.dimension {
            Dimension::One => self.grid.n.to_string(),
            Dimension::Two => format!("{}x{}", self.grid.n, self.grid.n),
        };
        format!(
            "grid={shape}, cell_length_m={}, density_kg_m3={}",
            fmt_f64(self.cell_length),
            fmt_f64(self.density)
        )
    }

    /// Writes one CSV per quantity and component into `dir` and returns the
    /// paths written.
    pub fn write_csv(
        &self,
        dir: &Path,
        stem: &str,
        train_end: Option<f64>,
        mode: Option<&str>,
    ) -> Result<Vec<PathBuf>> {
        let nc = self.components();
        let mut columns = vec!["t".to_string()];
        columns.extend((0..self.grid.n_cells()).map(|c| self.grid.label(c)));
        let mut written = Vec::new();
        for (file, quantity, units, is_acc, comp) in self.file_names(stem) {
            let data = if is_acc { &self.acceleration } else { &self.displacement };
            let mut table = Table::new(columns.clone());
            table.comments = vec![quantity_header(quantity, units, train_end, mode), self.grid_meta()];
            table.rows = (0..self.len())
                .map(|k| {
                    let mut row = Vec::with_capacity(self.grid.n_cells() + 1);
                    row.push(self.times[k]);
                    row.extend(data[k].iter().skip(comp).step_by(nc));
                    row
                })
                .collect();
            let path = dir.join(file);
            table.write(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Reads a series written by [`MacroSeries::write_csv`].
    pub fn read_csv(dir: &Path, stem: &str) -> Result<MacroSeries> {
        let dimension = if dir.join(format!("{stem}_u.csv")).exists() {
            Dimension::One
        } else if dir.join(format!("{stem}_ux.csv")).exists() {
            Dimension::Two
        } else {
            return Err(Error::Coverage(format!(
                "no {stem}_u.csv or {stem}_ux.csv in {}",
                dir.display()
            )));
        };
        let probe = MacroSeries::empty(CellGrid::new(dimension, 0), 0.0, 0.0);
        let mut series: Option<MacroSeries> = None;
        for (file, _, _, is_acc, comp) in probe.file_names(stem) {
            let path = dir.join(&file);
            if !path.exists() {
                return Err(Error::Coverage(format!("missing {}", path.display())));
            }
            let table = Table::read(&path)?;
            let what = path.display().to_string();
            let meta = |key: &str| -> Result<&str> {
                table
                    .meta(key)
                    .ok_or_else(|| Error::parse(&what, format!("missing {key}")))
            };
            let n: usize = meta("grid")?
                .split('x')
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::parse(&what, "bad grid"))?;
            let num = |key: &str| -> Result<f64> {
                meta(key)?
                    .parse()
                    .map_err(|_| Error::parse(&what, format!("bad {key}")))
            };
            let grid = CellGrid::new(dimension, n);
            if table.columns.len() != grid.n_cells() + 1 {
                return Err(Error::parse(&what, "column count does not match grid"));
            }
            let s = series.get_or_insert_with(|| {
                let mut s = MacroSeries::empty(grid, 0.0, 0.0);
                s.times = table.rows.iter().map(|r| r[0]).collect();
                s.displacement = vec![vec![0.0; s.width()]; s.times.len()];
                s.acceleration = s.displacement.clone();
                s
            });
            s.cell_length = num("cell_length_m")?;
            s.density = num("density_kg_m3")?;
            if s.grid != grid || table.rows.len() != s.times.len() {
                return Err(Error::parse(&what, "inconsistent with sibling files"));
            }
            let nc = grid.components();
            for (k, row) in table.rows.iter().enumerate() {
                if row[0] != s.times[k] {
                    return Err(Error::parse(&what, "time grid differs from sibling files"));
                }
                let dst = if is_acc {
                    &mut s.acceleration[k]
                } else {
                    &mut s.displacement[k]
                };
                for (cell, v) in row[1..].iter().enumerate() {
                    dst[cell * nc + comp] = *v;
                }
            }
        }
        let s = series.expect("at least one file per dimension");
        s.check()?;
        Ok(s)
    }
}

/// Quadrature weights mapping nodal values to unit-cell averages of the
/// finite-element interpolant.
#[derive(Debug, Clone)]
pub struct CellAverager {
    grid: CellGrid,
    components: usize,
    n_nodes: usize,
    cell_length: f64,
    density: f64,
    /// Per cell, `(node, weight)` with weights summing to one.
    weights: Vec<Vec<(usize, f64)>>,
}

impl CellAverager {
    pub fn new(mesh: &FemMesh, spec: &MicroStructureSpec) -> Result<Self> {
        if mesh.dimension != spec.dimension
            || mesh.n_cells != spec.n_cells_per_side
            || (mesh.cell_length - spec.cell_length).abs() > 1e-12 * spec.cell_length
        {
            return Err(Error::Alignment(format!(
                "mesh has {} cells of length {}, microstructure has {} of length {}",
                mesh.n_cells, mesh.cell_length, spec.n_cells_per_side, spec.cell_length
            )));
        }
        let e = mesh.elements_per_cell;
        if ((e as f64) * mesh.element_size - spec.cell_length).abs() > 1e-9 * spec.cell_length {
            return Err(Error::Alignment("element size does not divide the cell length".into()));
        }
        let grid = CellGrid::new(spec.dimension, spec.n_cells_per_side);
        // trapezoidal weights along one axis, normalised by the cell length
        let axis: Vec<f64> = (0..=e)
            .map(|k| if k == 0 || k == e { 0.5 } else { 1.0 } / e as f64)
            .collect();
        let weights = (0..grid.n_cells())
            .map(|cell| {
                let (p, q) = grid.position(cell);
                match spec.dimension {
                    Dimension::One => (0..=e).map(|k| (mesh.node_index(p * e + k, 0), axis[k])).collect(),
                    Dimension::Two => (0..=e)
                        .flat_map(|ky| (0..=e).map(move |kx| (kx, ky)))
                        .map(|(kx, ky)| (mesh.node_index(p * e + kx, q * e + ky), axis[kx] * axis[ky]))
                        .collect(),
                }
            })
            .collect();
        Ok(CellAverager {
            grid,
            components: mesh.components(),
            n_nodes: mesh.n_nodes(),
            cell_length: spec.cell_length,
            density: spec.mean_density(),
            weights,
        })
    }

    pub fn grid(&self) -> CellGrid {
        self.grid
    }

    /// Cell averages of a nodal field laid out as `node * components + c`.
    pub fn average(&self, field: &[f64]) -> Vec<f64> {
        let nc = self.components;
        let mut out = vec![0.0; self.grid.n_cells() * nc];
        for (cell, w) in self.weights.iter().enumerate() {
            for c in 0..nc {
                out[cell * nc + c] = w.iter().map(|&(node, wt)| wt * field[node * nc + c]).sum();
            }
        }
        out
    }

    pub fn empty_series(&self) -> MacroSeries {
        MacroSeries::empty(self.grid, self.cell_length, self.density)
    }

    /// Averages one snapshot and appends it to `series`.
    pub fn push(&self, series: &mut MacroSeries, snapshot: &Snapshot<'_>) -> Result<()> {
        let ndof = self.n_nodes * self.components;
        if snapshot.displacement.len() != ndof || snapshot.acceleration.len() != ndof {
            return Err(Error::Alignment(format!(
                "snapshot has {} dofs, mesh has {ndof}",
                snapshot.displacement.len()
            )));
        }
        series.push(
            snapshot.time,
            self.average(snapshot.displacement),
            self.average(snapshot.acceleration),
        );
        Ok(())
    }
}

/// Averages every snapshot of `state` over the unit cells of `spec`.
pub fn cell_average(state: &MicroState, mesh: &FemMesh, spec: &MicroStructureSpec) -> Result<MacroSeries> {
    let avg = CellAverager::new(mesh, spec)?;
    if state.n_nodes != mesh.n_nodes() || state.dimension != mesh.dimension {
        return Err(Error::Alignment(format!(
            "micro-state has {} nodes, mesh has {}",
            state.n_nodes,
            mesh.n_nodes()
        )));
    }
    let mut series = avg.empty_series();
    let averaged: Vec<(Vec<f64>, Vec<f64>)> = (0..state.len())
        .into_par_iter()
        .map(|k| (avg.average(&state.displacement[k]), avg.average(&state.acceleration[k])))
        .collect();
    for (k, (u, a)) in averaged.into_iter().enumerate() {
        series.push(state.times[k], u, a);
    }
    Ok(series)
}

/// Snapshots up to and including `train_end` and the ones after it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTestSplit {
    pub train: MacroSeries,
    pub test: MacroSeries,
    pub train_end: f64,
}

/// Partitions `series` at `train_end`; a snapshot at exactly `train_end`
/// belongs to the training set.
pub fn split(series: &MacroSeries, train_end: f64) -> Result<TrainTestSplit> {
    let (first, last) = match (series.times.first(), series.times.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::Config("cannot split an empty series".into())),
    };
    if !(train_end > first && train_end < last) {
        return Err(Error::Config(format!(
            "training end time {train_end:e} s must lie inside ({first:e}, {last:e}) s"
        )));
    }
    // absorb rounding in recorded times such as 170 * 1e-6
    let cut = train_end + 1e-9 * (last - first);
    Ok(TrainTestSplit {
        train: series.select(|_, t| t <= cut),
        test: series.select(|_, t| t > cut),
        train_end,
    })
}

/// Interior cells of `series` for a horizon of `horizon_cells`.
pub fn interior_cells(series: &MacroSeries, horizon_cells: usize) -> Result<CellSet> {
    series.grid.interior(horizon_cells)
}
