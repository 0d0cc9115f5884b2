//! The pipeline stages and the files they exchange.
//!
//! Every stage reads its inputs from a directory and writes into the output
//! directory:
//!
//! | stage      | reads                              | writes |
//! |------------|------------------------------------|--------|
//! | `simulate` |                                    | `micro_state.bin`, `micro_state_validation.bin`, `simulate.json` |
//! | `coarsen`  | `micro_state*.bin`                 | `macro_*.csv`, `validation_*.csv` |
//! | `fit`      | `macro_*.csv`                      | `kernel_<mode>_tt<us>us.csv`, `fit_<mode>_tt<us>us.json` |
//! | `predict`  | macro and kernel files             | `pred_<mode>_tt<us>us_{acc,traj}_*.csv`, `validation_pred_<mode>_*.csv` |
//! | `report`   | macro, kernel and prediction files | `errors.json`, `fig_*.csv` |
//!
//! `pipeline` fuses `simulate` and `coarsen`, averaging each FEM snapshot as
//! it is produced, and then runs the other stages on the files it wrote.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use pdkl::coarse_grain::{self, CellAverager};
use pdkl::fem::io::{read_micro_state, MicroStateWriter};
use pdkl::fem::{self, BoundaryConditions, DynamicsOptions, DynamicsSummary, Snapshot};
use pdkl::kernel_fit::{self, certify_positive_definite, Constraint};
use pdkl::pd_dynamics::{integrate_against, operator_matrix, predict_acceleration, predict_trajectory};
use pdkl::reporting::{emit_figure_data, series_error, ErrorSummary, FigureData, Quantity};
use pdkl::{BoundaryDrive, Dimension, FitReport, MacroSeries, MicroModulus, PdModel, SolveMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{same_time, PipelineConfig};

pub const TRAINING: &str = "macro";
pub const VALIDATION: &str = "validation";

/// A load case: the training drive or the validation drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Run {
    Training,
    Validation,
}

impl Run {
    pub fn stem(self) -> &'static str {
        match self {
            Run::Training => TRAINING,
            Run::Validation => VALIDATION,
        }
    }

    fn micro_state_file(self) -> &'static str {
        match self {
            Run::Training => "micro_state.bin",
            Run::Validation => "micro_state_validation.bin",
        }
    }

    fn drive(self, config: &PipelineConfig) -> Option<BoundaryDrive> {
        match self {
            Run::Training => Some(config.drive.drive()),
            Run::Validation => config.validation.as_ref().map(|v| v.drive.drive()),
        }
    }
}

fn runs(config: &PipelineConfig) -> Vec<Run> {
    let mut out = vec![Run::Training];
    if config.validation.is_some() {
        out.push(Run::Validation);
    }
    out
}

/// Microseconds tag of a training end time used in file names.
pub fn time_tag(train_end: f64) -> String {
    format!("tt{}us", (train_end * 1e9).round() / 1e3)
}

pub fn kernel_stem(mode: &SolveMode, train_end: f64) -> String {
    format!("kernel_{}_{}", mode.name(), time_tag(train_end))
}

fn fit_report_file(mode: &SolveMode, train_end: f64) -> String {
    format!("fit_{}_{}.json", mode.name(), time_tag(train_end))
}

fn prediction_stem(mode: &SolveMode, train_end: f64, what: &str) -> String {
    format!("pred_{}_{}_{what}", mode.name(), time_tag(train_end))
}

fn validation_stem(mode: &SolveMode) -> String {
    format!("validation_pred_{}", mode.name())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_fem<F>(config: &PipelineConfig, drive: &BoundaryDrive, observer: F) -> Result<(DynamicsSummary, fem::FemMesh)>
where
    F: FnMut(&fem::FemMesh, &Snapshot<'_>) -> pdkl::Result<()>,
{
    let spec = config.spec()?;
    let mesh = fem::build_mesh(&spec, config.elements_per_cell())?;
    let system = fem::assemble(&mesh);
    let bcs = BoundaryConditions::clamped_left_driven_right(&mesh, drive.component)?;
    let mut options = DynamicsOptions::new(config.time.end_time_s, config.output_interval());
    options.safety_factor = config.time.safety_factor;
    let mut observer = observer;
    let summary = fem::explicit_dynamics_with(&system, &bcs, drive, &options, |s| observer(&mesh, s))?;
    Ok((summary, mesh))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunSummary {
    run: String,
    time_step_s: f64,
    critical_time_step_s: f64,
    steps: usize,
    snapshots: usize,
}

/// Runs the FEM model for every load case and stores the nodal histories.
pub fn simulate(config: &PipelineConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let spec = config.spec()?;
    let mut summaries = Vec::new();
    for run in runs(config) {
        let drive = run.drive(config).expect("run has a drive");
        let path = out.join(run.micro_state_file());
        let n_nodes = fem::build_mesh(&spec, config.elements_per_cell())?.n_nodes();
        let mut writer = MicroStateWriter::create(&path, spec.dimension, n_nodes, false)?;
        let (summary, _) = run_fem(config, &drive, |_, s| writer.push(s))
            .with_context(|| format!("simulating the {} load", run.stem()))?;
        let snapshots = writer.finish()? as usize;
        summaries.push(RunSummary {
            run: run.stem().into(),
            time_step_s: summary.time_step,
            critical_time_step_s: summary.critical_time_step,
            steps: summary.steps,
            snapshots,
        });
    }
    write_json(&out.join("simulate.json"), &summaries)
}

/// Cell-averages the stored nodal histories.
pub fn coarsen(config: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    create_dir(out)?;
    let spec = config.spec()?;
    let mesh = fem::build_mesh(&spec, config.elements_per_cell())?;
    for run in runs(config) {
        let path = input.join(run.micro_state_file());
        ensure!(path.exists(), "missing artifact {}; run simulate first", path.display());
        let state = read_micro_state(&path)?;
        let series = coarse_grain::cell_average(&state, &mesh, &spec)?;
        series.write_csv(out, run.stem(), None, None)?;
    }
    Ok(())
}

/// `simulate` and `coarsen` without storing nodal histories.
pub fn simulate_coarsened(config: &PipelineConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    let spec = config.spec()?;
    let mesh = fem::build_mesh(&spec, config.elements_per_cell())?;
    let averager = CellAverager::new(&mesh, &spec)?;
    for run in runs(config) {
        let drive = run.drive(config).expect("run has a drive");
        let mut series = averager.empty_series();
        run_fem(config, &drive, |_, s| averager.push(&mut series, s))
            .with_context(|| format!("simulating the {} load", run.stem()))?;
        series.write_csv(out, run.stem(), None, None)?;
    }
    Ok(())
}

fn read_series(input: &Path, stem: &str) -> Result<MacroSeries> {
    MacroSeries::read_csv(input, stem).with_context(|| {
        format!(
            "missing or unreadable artifact {stem}_*.csv in {}; run coarsen first",
            input.display()
        )
    })
}

fn energy_constraint(config: &PipelineConfig) -> Result<Constraint> {
    let spec = config.spec()?;
    let m = config.fit.horizon_cells;
    Ok(match spec.dimension {
        Dimension::One => kernel_fit::energy_constraint_1d(&spec, m)?,
        Dimension::Two => {
            let w = fem::unit_cell_energy_density(&spec, config.elements_per_cell(), 1.0)?;
            kernel_fit::energy_constraint_2d(w, m, spec.cell_length)
        }
    })
}

/// Fits one kernel per training end time and solver mode.
pub fn fit(config: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    create_dir(out)?;
    let series = read_series(input, TRAINING)?;
    let m = config.fit.horizon_cells;
    let modes = config.solve_modes();
    let constraint = if modes.iter().any(|m| *m != SolveMode::Unconstrained) {
        Some(energy_constraint(config)?)
    } else {
        None
    };
    for train_end in config.train_end_times() {
        let split = coarse_grain::split(&series, train_end)?;
        let mut system = match series.grid.dimension {
            Dimension::One => kernel_fit::build_system_1d(&split.train, m)?,
            Dimension::Two => {
                let weights = kernel_fit::inverse_rms_weights(&split.train, m)?;
                kernel_fit::build_system_2d(&split.train, m, weights, config.fit.bond_force)?
            }
        };
        if let Some(c) = &constraint {
            system = system.with_constraint(c.clone())?;
        }
        for mode in &modes {
            let (kernel, mut report) = kernel_fit::solve(&system, *mode)
                .with_context(|| format!("{} fit at T_t = {train_end} s", mode.name()))?;
            let cert = certify_positive_definite(&kernel, series.grid.n)?;
            report.record_certificate(&cert);
            kernel.write_csv(
                &out.join(format!("{}.csv", kernel_stem(mode, train_end))),
                Some(train_end),
                Some(mode.name()),
            )?;
            report.write_json(&out.join(fit_report_file(mode, train_end)))?;
        }
    }
    Ok(())
}

fn read_kernel(input: &Path, mode: &SolveMode, train_end: f64) -> Result<MicroModulus> {
    let path = input.join(format!("{}.csv", kernel_stem(mode, train_end)));
    ensure!(path.exists(), "missing artifact {}; run fit first", path.display());
    Ok(MicroModulus::read_csv(&path)?)
}

/// Largest relative mismatch between the matrix-free operator and its
/// assembled matrix on random fields.
pub fn operator_probe_mismatch(model: &PdModel, seed: u64, probes: usize) -> Result<f64> {
    let grid = model.grid;
    let matrix = operator_matrix(&model.kernel, grid)?;
    let nc = grid.components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let u: Vec<f64> = (0..grid.n_cells() * nc).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lu = model.apply_operator(&u)?;
        let u = &u;
        let gather = |cells: &[usize]| {
            nalgebra::DVector::from_iterator(
                cells.len() * nc,
                cells.iter().flat_map(|&c| (0..nc).map(move |k| u[c * nc + k])),
            )
        };
        let expected =
            &matrix.interior * gather(&matrix.interior_cells) + &matrix.collar * gather(&matrix.collar_cells);
        let scale = expected.amax().max(f64::MIN_POSITIVE);
        for (l, e) in lu.iter().zip(expected.iter()) {
            worst = worst.max((l - e).abs() / scale);
        }
    }
    Ok(worst)
}

/// Test-window predictions of every kernel and, when configured, the
/// validation load predicted from rest.
pub fn predict(config: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    create_dir(out)?;
    let series = read_series(input, TRAINING)?;
    let validation = match config.validation {
        Some(_) => Some(read_series(input, VALIDATION)?),
        None => None,
    };
    let dt = config.fit.pd_time_step_s;
    for train_end in config.train_end_times() {
        let split = coarse_grain::split(&series, train_end)?;
        for mode in &config.solve_modes() {
            let kernel = read_kernel(input, mode, train_end)?;
            let model = PdModel::new(kernel, series.density, series.grid)?;
            let mismatch = operator_probe_mismatch(&model, config.seed, 2)?;
            ensure!(
                mismatch < 1e-10,
                "operator probe mismatch {mismatch:e} for {}",
                kernel_stem(mode, train_end)
            );
            let (tt, name) = (Some(train_end), Some(mode.name()));
            predict_acceleration(&model, &split.test)?.write_csv(
                out,
                &prediction_stem(mode, train_end, "acc"),
                tt,
                name,
            )?;
            let stem = prediction_stem(mode, train_end, "traj");
            match predict_trajectory(&model, &split, dt) {
                Ok(traj) => write_trajectory(out, &stem, &traj, tt, name)?,
                Err(e @ pdkl::Error::Divergence { .. }) => mark_diverged(out, &stem, &e)?,
                Err(e) => return Err(e).with_context(|| format!("predicting with {}", kernel_stem(mode, train_end))),
            }
            if let (Some(v), true) = (&validation, same_time(train_end, config.fit.train_end_s)) {
                let stem = validation_stem(mode);
                match integrate_against(&model, v, 0, dt) {
                    Ok(traj) => write_trajectory(out, &stem, &traj, tt, name)?,
                    Err(e @ pdkl::Error::Divergence { .. }) => mark_diverged(out, &stem, &e)?,
                    Err(e) => {
                        return Err(e)
                            .with_context(|| format!("validation prediction with {}", kernel_stem(mode, train_end)))
                    }
                }
            }
        }
    }
    Ok(())
}

fn diverged_marker(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}.diverged"))
}

fn write_trajectory(out: &Path, stem: &str, traj: &MacroSeries, tt: Option<f64>, mode: Option<&str>) -> Result<()> {
    let marker = diverged_marker(out, stem);
    if marker.exists() {
        std::fs::remove_file(&marker).with_context(|| format!("removing {}", marker.display()))?;
    }
    traj.write_csv(out, stem, tt, mode)?;
    Ok(())
}

/// Records a diverged forward prediction in place of its series.
fn mark_diverged(out: &Path, stem: &str, error: &pdkl::Error) -> Result<()> {
    let path = diverged_marker(out, stem);
    std::fs::write(&path, format!("{error}\n")).with_context(|| format!("writing {}", path.display()))
}

/// The forward prediction `stem`, or `None` when it diverged.
fn read_trajectory(input: &Path, stem: &str) -> Result<Option<MacroSeries>> {
    if diverged_marker(input, stem).exists() {
        return Ok(None);
    }
    read_series(input, stem).context("run predict first").map(Some)
}

/// Displacement error of a validation prediction over the full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationError {
    pub train_end_s: f64,
    pub solver_mode: String,
    /// `None` when the prediction diverged.
    pub displacement: Option<f64>,
    pub displacement_x: Option<f64>,
    pub displacement_y: Option<f64>,
}

/// Contents of `errors.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub test: Vec<ErrorSummary>,
    pub validation: Vec<ValidationError>,
    pub fits: Vec<FitEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitEntry {
    pub train_end_s: f64,
    pub kernel: Vec<f64>,
    pub report: FitReport,
}

impl ErrorReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Error metrics and figure data.
pub fn report(config: &PipelineConfig, input: &Path, out: &Path) -> Result<()> {
    create_dir(out)?;
    let series = read_series(input, TRAINING)?;
    let interior = coarse_grain::interior_cells(&series, config.fit.horizon_cells)?;
    let validation = match config.validation {
        Some(_) => Some(read_series(input, VALIDATION)?),
        None => None,
    };
    let primary = config.fit.train_end_s;
    let modes = config.solve_modes();
    let mut errors = ErrorReport {
        test: Vec::new(),
        validation: Vec::new(),
        fits: Vec::new(),
    };
    let mut sweeps: Vec<Vec<(f64, f64)>> = vec![Vec::new(); modes.len()];
    let mut sorted_times = config.train_end_times();
    sorted_times.sort_by(f64::total_cmp);

    emit_figure_data(
        &FigureData::MidCellTrace {
            series: &series,
            quantity: Quantity::Displacement,
            train_end: None,
            mode: None,
        },
        out,
        "fig_mid_displacement_data",
    )?;
    emit_figure_data(
        &FigureData::MidCellTrace {
            series: &series,
            quantity: Quantity::Acceleration,
            train_end: None,
            mode: None,
        },
        out,
        "fig_mid_acceleration_data",
    )?;
    if let Some(v) = &validation {
        emit_figure_data(
            &FigureData::MidCellTrace {
                series: v,
                quantity: Quantity::Displacement,
                train_end: None,
                mode: None,
            },
            out,
            "fig_validation_mid_displacement_data",
        )?;
    }

    for &train_end in &sorted_times {
        let split = coarse_grain::split(&series, train_end)?;
        for (k, mode) in modes.iter().enumerate() {
            let name = mode.name();
            let kernel = read_kernel(input, mode, train_end)?;
            let fit_path = input.join(fit_report_file(mode, train_end));
            ensure!(
                fit_path.exists(),
                "missing artifact {}; run fit first",
                fit_path.display()
            );
            errors.fits.push(FitEntry {
                train_end_s: train_end,
                kernel: kernel.values.clone(),
                report: FitReport::read_json(&fit_path)?,
            });
            let acc = read_series(input, &prediction_stem(mode, train_end, "acc")).context("run predict first")?;
            let traj = read_trajectory(input, &prediction_stem(mode, train_end, "traj"))?;
            let summary = ErrorSummary::compute(&acc, traj.as_ref(), &split.test, &interior, train_end, name)?;
            sweeps[k].push((train_end, summary.acceleration));
            errors.test.push(summary);

            if !same_time(train_end, primary) {
                continue;
            }
            let (tt, m) = (Some(train_end), Some(name));
            emit_figure_data(
                &FigureData::KernelPlot {
                    kernel: &kernel,
                    train_end: tt,
                    mode: m,
                },
                out,
                &format!("fig_kernel_{name}"),
            )?;
            if let Some(traj) = &traj {
                emit_figure_data(
                    &FigureData::MidCellTrace {
                        series: traj,
                        quantity: Quantity::Displacement,
                        train_end: tt,
                        mode: m,
                    },
                    out,
                    &format!("fig_mid_displacement_{name}"),
                )?;
            }
            emit_figure_data(
                &FigureData::MidCellTrace {
                    series: &acc,
                    quantity: Quantity::Acceleration,
                    train_end: tt,
                    mode: m,
                },
                out,
                &format!("fig_mid_acceleration_{name}"),
            )?;
            if let Some(v) = &validation {
                let pred = read_trajectory(input, &validation_stem(mode))?;
                let err = |c| -> Result<Option<f64>> {
                    Ok(match &pred {
                        Some(p) => Some(series_error(p, v, &interior, Quantity::Displacement, c)?),
                        None => None,
                    })
                };
                let two = v.grid.dimension == Dimension::Two;
                errors.validation.push(ValidationError {
                    train_end_s: train_end,
                    solver_mode: name.into(),
                    displacement: err(None)?,
                    displacement_x: if two { err(Some(0))? } else { None },
                    displacement_y: if two { err(Some(1))? } else { None },
                });
                if let Some(p) = &pred {
                    emit_figure_data(
                        &FigureData::MidCellTrace {
                            series: p,
                            quantity: Quantity::Displacement,
                            train_end: tt,
                            mode: m,
                        },
                        out,
                        &format!("fig_validation_mid_displacement_{name}"),
                    )?;
                }
            }
        }
    }
    if sorted_times.len() > 1 {
        for (mode, points) in modes.iter().zip(&sweeps) {
            emit_figure_data(
                &FigureData::ErrorSweep {
                    mode: mode.name(),
                    quantity: Quantity::Acceleration,
                    points,
                },
                out,
                "fig_error_sweep",
            )?;
        }
    }
    write_json(&out.join("errors.json"), &errors)
}

/// Every stage in order, with `simulate` and `coarsen` fused.
pub fn pipeline(config: &PipelineConfig, out: &Path) -> Result<()> {
    simulate_coarsened(config, out)?;
    fit(config, out, out)?;
    predict(config, out, out)?;
    report(config, out, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Coarsen,
    Fit,
    Predict,
    Report,
    Pipeline,
}

/// Runs `stage`, reading earlier artifacts from `input` (the output
/// directory when `None`).
pub fn run_stage(stage: Stage, config: &PipelineConfig, out: &Path, input: Option<&Path>) -> Result<()> {
    let input: PathBuf = input.unwrap_or(out).to_path_buf();
    if stage != Stage::Simulate && stage != Stage::Pipeline && !input.is_dir() {
        bail!("stage input directory {} does not exist", input.display());
    }
    match stage {
        Stage::Simulate => simulate(config, out),
        Stage::Coarsen => coarsen(config, &input, out),
        Stage::Fit => fit(config, &input, out),
        Stage::Predict => predict(config, &input, out),
        Stage::Report => report(config, &input, out),
        Stage::Pipeline => pipeline(config, out),
    }
}
