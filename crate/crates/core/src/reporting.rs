//! Prediction error metrics and figure data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coarse_grain::{CellSet, MacroSeries};
use crate::csv::{quantity_header, Table};
use crate::kernel_fit::MicroModulus;
use crate::microstructure::Dimension;
use crate::{Error, Result};

/// `||predicted - reference|| / ||reference||` over paired entries.
pub fn relative_l2(predicted: &[f64], reference: &[f64]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::Coverage(format!(
            "{} predicted values for {} reference values",
            predicted.len(),
            reference.len()
        )));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, r) in predicted.iter().zip(reference) {
        num += (p - r) * (p - r);
        den += r * r;
    }
    if den == 0.0 {
        return Err(Error::UndefinedRelativeError);
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Displacement,
    Acceleration,
}

impl Quantity {
    fn name(self) -> &'static str {
        match self {
            Quantity::Displacement => "displacement",
            Quantity::Acceleration => "acceleration",
        }
    }

    fn units(self) -> &'static str {
        match self {
            Quantity::Displacement => "m",
            Quantity::Acceleration => "m/s^2",
        }
    }

    fn data(self, s: &MacroSeries) -> &[Vec<f64>] {
        match self {
            Quantity::Displacement => &s.displacement,
            Quantity::Acceleration => &s.acceleration,
        }
    }
}

/// Relative l2 error of one quantity over `cells` and every snapshot, for
/// one component or (with `None`) all of them.
pub fn series_error(
    predicted: &MacroSeries,
    reference: &MacroSeries,
    cells: &CellSet,
    quantity: Quantity,
    component: Option<usize>,
) -> Result<f64> {
    if predicted.grid != reference.grid || predicted.len() != reference.len() {
        return Err(Error::Coverage("predicted and reference series differ in shape".into()));
    }
    if predicted
        .times
        .iter()
        .zip(&reference.times)
        .any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1e-12))
    {
        return Err(Error::Coverage("predicted and reference time grids differ".into()));
    }
    let nc = reference.components();
    let comps: Vec<usize> = match component {
        Some(c) if c < nc => vec![c],
        Some(c) => return Err(Error::Config(format!("component {c} does not exist"))),
        None => (0..nc).collect(),
    };
    let (p, r) = (quantity.data(predicted), quantity.data(reference));
    let mut pv = Vec::new();
    let mut rv = Vec::new();
    for k in 0..reference.len() {
        for &cell in &cells.cells {
            for &c in &comps {
                pv.push(p[k][cell * nc + c]);
                rv.push(r[k][cell * nc + c]);
            }
        }
    }
    relative_l2(&pv, &rv)
}

/// Test-window errors of one fitted kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub train_end_s: f64,
    pub solver_mode: String,
    /// Acceleration from the operator applied to data, all components.
    pub acceleration: f64,
    pub acceleration_x: Option<f64>,
    pub acceleration_y: Option<f64>,
    /// Displacement from forward integration; `None` when it diverged.
    pub displacement: Option<f64>,
}

impl ErrorSummary {
    pub fn compute(
        predicted_acceleration: &MacroSeries,
        predicted_trajectory: Option<&MacroSeries>,
        test: &MacroSeries,
        interior: &CellSet,
        train_end: f64,
        solver_mode: &str,
    ) -> Result<Self> {
        let two = test.grid.dimension == Dimension::Two;
        let acc = |c| series_error(predicted_acceleration, test, interior, Quantity::Acceleration, c);
        Ok(ErrorSummary {
            train_end_s: train_end,
            solver_mode: solver_mode.to_string(),
            acceleration: acc(None)?,
            acceleration_x: if two { Some(acc(Some(0))?) } else { None },
            acceleration_y: if two { Some(acc(Some(1))?) } else { None },
            displacement: predicted_trajectory
                .map(|p| series_error(p, test, interior, Quantity::Displacement, None))
                .transpose()?,
        })
    }
}

/// Inputs of the emitted figure data.
#[derive(Debug, Clone, Copy)]
pub enum FigureData<'a> {
    /// Kernel against signed offset; the `j = 0` slice in 2D.
    KernelPlot {
        kernel: &'a MicroModulus,
        train_end: Option<f64>,
        mode: Option<&'a str>,
    },
    /// Time history of the middle cell, one file per component.
    MidCellTrace {
        series: &'a MacroSeries,
        quantity: Quantity,
        train_end: Option<f64>,
        mode: Option<&'a str>,
    },
    /// Error against training end time for one solver mode.
    ErrorSweep {
        mode: &'a str,
        quantity: Quantity,
        /// `(T_t, relative error)` pairs.
        points: &'a [(f64, f64)],
    },
}

/// Writes the CSV files of `data` into `dir`, naming them after `stem`,
/// and returns their paths.
pub fn emit_figure_data(data: &FigureData<'_>, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    match *data {
        FigureData::KernelPlot {
            kernel,
            train_end,
            mode,
        } => {
            let m = kernel.horizon_cells as isize;
            let mut t = Table::new(vec!["offset".into(), "value".into()]);
            t.comments = vec![quantity_header("micro_modulus", "kg/(m^3 s^2)", train_end, mode)];
            t.rows = (-m..=m)
                .map(|i| vec![i as f64, if i == 0 { 0.0 } else { kernel.value_at(i, 0) }])
                .collect();
            let path = dir.join(format!("{stem}.csv"));
            t.write(&path)?;
            out.push(path);
        }
        FigureData::MidCellTrace {
            series,
            quantity,
            train_end,
            mode,
        } => {
            if series.is_empty() {
                return Err(Error::Coverage("no snapshots to trace".into()));
            }
            let cell = series.grid.middle_cell();
            let nc = series.components();
            for c in 0..nc {
                let suffix = match (nc, c) {
                    (1, _) => String::new(),
                    (_, 0) => "_x".into(),
                    _ => "_y".into(),
                };
                let mut t = Table::new(vec!["t".into(), series.grid.label(cell)]);
                t.comments = vec![quantity_header(
                    &format!("{}{suffix}", quantity.name()),
                    quantity.units(),
                    train_end,
                    mode,
                )];
                let values = quantity.data(series);
                t.rows = (0..series.len())
                    .map(|k| vec![series.times[k], values[k][cell * nc + c]])
                    .collect();
                let path = dir.join(format!("{stem}{suffix}.csv"));
                t.write(&path)?;
                out.push(path);
            }
        }
        FigureData::ErrorSweep { mode, quantity, points } => {
            if points.is_empty() {
                return Err(Error::Coverage("no sweep points".into()));
            }
            let mut t = Table::new(vec!["train_end_s".into(), "relative_error".into()]);
            t.comments = vec![quantity_header(
                &format!("relative_l2_{}", quantity.name()),
                "1",
                None,
                Some(mode),
            )];
            t.rows = points.iter().map(|&(tt, e)| vec![tt, e]).collect();
            let path = dir.join(format!("{stem}_{mode}.csv"));
            t.write(&path)?;
            out.push(path);
        }
    }
    Ok(out)
}
