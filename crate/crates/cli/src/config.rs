//! Pipeline configuration, read from a TOML file.
//!
//! Physical quantities carry their SI unit in the key name.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pdkl::{
    BondForce, BoundaryDrive, DriveComponent, DriveProfile, Layout, MaterialPhase, MicroStructureSpec, SolveMode,
};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed of the random probe fields used to cross-check the PD operator.
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
    pub microstructure: MicrostructureConfig,
    #[serde(default)]
    pub mesh: MeshConfig,
    pub drive: DriveConfig,
    pub time: TimeConfig,
    pub fit: FitConfig,
    pub validation: Option<ValidationConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicrostructureConfig {
    pub layout: Layout,
    pub domain_length_m: f64,
    pub n_cells_per_side: usize,
    #[serde(rename = "E_s_pa")]
    pub e_s_pa: f64,
    #[serde(rename = "E_c_pa")]
    pub e_c_pa: f64,
    pub rho_s_kg_m3: f64,
    pub rho_c_kg_m3: f64,
    pub nu_s: Option<f64>,
    pub nu_c: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Elements per unit cell along each axis; 40 in 1D and 12 in 2D when
    /// absent.
    pub elements_per_cell: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    pub profile: DriveProfile,
    #[serde(default = "default_component")]
    pub component: DriveComponent,
    pub u0_m: f64,
    pub a0: Option<f64>,
    pub duration_s: f64,
}

fn default_component() -> DriveComponent {
    DriveComponent::X
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub end_time_s: f64,
    /// Recording interval; `end_time_s / 1000` when absent.
    pub output_interval_s: Option<f64>,
    #[serde(default = "default_safety")]
    pub safety_factor: f64,
}

fn default_safety() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Unconstrained,
    EqualityConstrained,
    Penalty,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub horizon_cells: usize,
    /// Training end time of the reported kernels and traces.
    pub train_end_s: f64,
    /// Extra training end times for the error sweep.
    #[serde(default)]
    pub sweep_train_end_s: Vec<f64>,
    #[serde(default = "default_modes")]
    pub modes: Vec<ModeName>,
    pub penalty_alpha: Option<f64>,
    /// Overrides the PD integration step.
    pub pd_time_step_s: Option<f64>,
    /// Pair-force form of the 2D kernels.
    #[serde(default)]
    pub bond_force: BondForce,
}

fn default_modes() -> Vec<ModeName> {
    vec![ModeName::Unconstrained, ModeName::EqualityConstrained]
}

/// Second load, predicted from rest with the kernels trained at
/// `fit.train_end_s`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationConfig {
    pub drive: DriveConfig,
}

impl DriveConfig {
    pub fn drive(&self) -> BoundaryDrive {
        BoundaryDrive {
            profile: self.profile,
            component: self.component,
            u0: self.u0_m,
            a0: self.a0,
            duration: self.duration_s,
        }
    }

    fn violations(&self, name: &str, layout: Layout, out: &mut Vec<String>) {
        if !self.u0_m.is_finite() {
            out.push(format!("{name}.u0_m must be finite"));
        }
        if !(self.duration_s > 0.0) {
            out.push(format!("{name}.duration_s must be positive, got {}", self.duration_s));
        }
        if matches!(self.a0, Some(a) if !a.is_finite()) {
            out.push(format!("{name}.a0 must be finite"));
        }
        if layout.dimension().components() == 1 && self.component != DriveComponent::X {
            out.push(format!("{name}.component must be \"x\" for a 1D layout"));
        }
    }
}

impl PipelineConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            toml::from_str(text).map_err(|e| anyhow::anyhow!("{}", one_line(&e.to_string())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.violations();
        if problems.is_empty() {
            Ok(())
        } else {
            bail!("{} violation(s): {}", problems.len(), problems.join("; "))
        }
    }

    /// Every violated invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ms = &self.microstructure;
        let layout = ms.layout;
        out.extend(self.spec_unchecked().violations());
        let epc = self.elements_per_cell();
        if layout == Layout::Bar1dQuarterHalfQuarter && (epc == 0 || epc % 4 != 0) {
            out.push(format!(
                "mesh.elements_per_cell must be a positive multiple of 4 in 1D, got {epc}"
            ));
        }
        if layout != Layout::Bar1dQuarterHalfQuarter && (epc == 0 || epc % 3 != 0) {
            out.push(format!(
                "mesh.elements_per_cell must be a positive multiple of 3 in 2D, got {epc}"
            ));
        }
        self.drive.violations("drive", layout, &mut out);
        if let Some(v) = &self.validation {
            v.drive.violations("validation.drive", layout, &mut out);
        }

        let t = &self.time;
        let dt_out = self.output_interval();
        if !(t.end_time_s > 0.0) {
            out.push(format!("time.end_time_s must be positive, got {}", t.end_time_s));
        }
        if !(dt_out > 0.0) {
            out.push(format!("time.output_interval_s must be positive, got {dt_out}"));
        } else if t.end_time_s > 0.0 {
            let k = (t.end_time_s / dt_out).round();
            if k < 2.0 || (k * dt_out - t.end_time_s).abs() > 1e-9 * t.end_time_s {
                out.push(format!(
                    "time.end_time_s {} is not a multiple of time.output_interval_s {dt_out}",
                    t.end_time_s
                ));
            }
        }
        if !(t.safety_factor > 0.0 && t.safety_factor <= 1.0) {
            out.push(format!(
                "time.safety_factor must lie in (0, 1], got {}",
                t.safety_factor
            ));
        }

        let f = &self.fit;
        let m = f.horizon_cells;
        let n = ms.n_cells_per_side;
        if m == 0 {
            out.push("fit.horizon_cells must be at least 1".into());
        } else if n < 2 * m + 1 {
            out.push(format!(
                "fit.horizon_cells = {m} needs at least {} cells per side, got {n}",
                2 * m + 1
            ));
        }
        for (key, tt) in self.train_end_times().iter().enumerate().map(|(k, tt)| {
            let key = if k == 0 {
                "fit.train_end_s".to_string()
            } else {
                format!("fit.sweep_train_end_s[{}]", k - 1)
            };
            (key, *tt)
        }) {
            if !(tt > 0.0 && tt < t.end_time_s) {
                out.push(format!(
                    "{key} = {tt} must lie strictly inside (0, time.end_time_s = {})",
                    t.end_time_s
                ));
            } else if dt_out > 0.0 && tt < 2.0 * dt_out {
                out.push(format!("{key} = {tt} leaves fewer than two training snapshots"));
            }
        }
        if f.modes.is_empty() {
            out.push("fit.modes must name at least one solver mode".into());
        }
        let mut seen = Vec::new();
        for mode in &f.modes {
            if seen.contains(mode) {
                out.push(format!("fit.modes lists {} twice", mode_name(*mode)));
            }
            seen.push(*mode);
        }
        if f.modes.contains(&ModeName::Penalty) {
            match f.penalty_alpha {
                Some(a) if a > 0.0 && a.is_finite() => {}
                Some(a) => out.push(format!("fit.penalty_alpha must be positive, got {a}")),
                None => out.push("fit.penalty_alpha is required for the penalty mode".into()),
            }
        }
        if matches!(f.pd_time_step_s, Some(dt) if !(dt > 0.0)) {
            out.push("fit.pd_time_step_s must be positive".into());
        }
        out
    }

    fn spec_unchecked(&self) -> MicroStructureSpec {
        let ms = &self.microstructure;
        let mut stiff = MaterialPhase::new(ms.e_s_pa, ms.rho_s_kg_m3);
        let mut compliant = MaterialPhase::new(ms.e_c_pa, ms.rho_c_kg_m3);
        if let Some(nu) = ms.nu_s {
            stiff.poisson_ratio = nu;
        }
        if let Some(nu) = ms.nu_c {
            compliant.poisson_ratio = nu;
        }
        MicroStructureSpec {
            dimension: ms.layout.dimension(),
            domain_length: ms.domain_length_m,
            cell_length: ms.domain_length_m / ms.n_cells_per_side.max(1) as f64,
            n_cells_per_side: ms.n_cells_per_side,
            stiff,
            compliant,
            layout: ms.layout,
        }
    }

    pub fn spec(&self) -> Result<MicroStructureSpec> {
        let spec = self.spec_unchecked();
        let problems = spec.violations();
        if !problems.is_empty() {
            bail!("{}", problems.join("; "));
        }
        Ok(spec)
    }

    pub fn elements_per_cell(&self) -> usize {
        self.mesh.elements_per_cell.unwrap_or(match self.microstructure.layout {
            Layout::Bar1dQuarterHalfQuarter => 40,
            _ => 12,
        })
    }

    pub fn output_interval(&self) -> f64 {
        self.time.output_interval_s.unwrap_or(self.time.end_time_s / 1000.0)
    }

    /// `fit.train_end_s` followed by the sweep values not equal to it.
    pub fn train_end_times(&self) -> Vec<f64> {
        let mut out = vec![self.fit.train_end_s];
        for &t in &self.fit.sweep_train_end_s {
            if !out.iter().any(|&o| same_time(o, t)) {
                out.push(t);
            }
        }
        out
    }

    pub fn solve_modes(&self) -> Vec<SolveMode> {
        self.fit
            .modes
            .iter()
            .map(|m| match m {
                ModeName::Unconstrained => SolveMode::Unconstrained,
                ModeName::EqualityConstrained => SolveMode::EqualityConstrained,
                ModeName::Penalty => SolveMode::Penalty(self.fit.penalty_alpha.unwrap_or(0.0)),
            })
            .collect()
    }
}

pub fn mode_name(mode: ModeName) -> &'static str {
    match mode {
        ModeName::Unconstrained => "unconstrained",
        ModeName::EqualityConstrained => "equality_constrained",
        ModeName::Penalty => "penalty",
    }
}

pub(crate) fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
