//! Periodic two-phase micro-structures.
//!
//! A domain `[0, L]^d` is tiled by `n` unit cells of side `l = L / n`. Each
//! cell carries the same stiff/compliant layout. Interface points are
//! assigned to the stiff phase: compliant regions are open sets, so the
//! assignment is mirror symmetric inside the cell and independent of the mesh.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Poisson ratio admitted by bond-based peridynamics in plane stress.
pub const PLANE_STRESS_POISSON_RATIO: f64 = 1.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn from_usize(d: usize) -> Result<Self> {
        match d {
            1 => Ok(Dimension::One),
            2 => Ok(Dimension::Two),
            other => Err(Error::Config(format!("dimension must be 1 or 2, got {other}"))),
        }
    }

    pub fn as_usize(self) -> usize {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }

    /// Number of displacement components per point.
    pub fn components(self) -> usize {
        self.as_usize()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Stiff quarter, compliant half, stiff quarter.
    Bar1dQuarterHalfQuarter,
    /// Compliant middle-third square inside a stiff matrix.
    Plate2dCenterSquareInclusion,
    /// Compliant middle-third bands forming a cross around a stiff centre.
    Plate2dCrossInclusion,
}

impl Layout {
    pub fn dimension(self) -> Dimension {
        match self {
            Layout::Bar1dQuarterHalfQuarter => Dimension::One,
            Layout::Plate2dCenterSquareInclusion | Layout::Plate2dCrossInclusion => Dimension::Two,
        }
    }

    /// Exact volume fraction of the compliant phase.
    pub fn compliant_fraction(self) -> f64 {
        match self {
            Layout::Bar1dQuarterHalfQuarter => 0.5,
            Layout::Plate2dCenterSquareInclusion => 1.0 / 9.0,
            Layout::Plate2dCrossInclusion => 4.0 / 9.0,
        }
    }

    /// Phase at a cell-local position with every coordinate in `[0, 1]`.
    pub fn phase_in_cell(self, xi: &[f64]) -> Phase {
        let open = |v: f64, lo: f64, hi: f64| v > lo && v < hi;
        let closed = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
        let (a, b) = (1.0 / 3.0, 2.0 / 3.0);
        let compliant = match self {
            Layout::Bar1dQuarterHalfQuarter => open(xi[0], 0.25, 0.75),
            Layout::Plate2dCenterSquareInclusion => open(xi[0], a, b) && open(xi[1], a, b),
            Layout::Plate2dCrossInclusion => {
                let band = open(xi[0], a, b) || open(xi[1], a, b);
                let core = closed(xi[0], a, b) && closed(xi[1], a, b);
                band && !core
            }
        };
        if compliant {
            Phase::Compliant
        } else {
            Phase::Stiff
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Stiff,
    Compliant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialPhase {
    /// Young's modulus in Pa.
    pub elastic_modulus: f64,
    /// Mass density in kg/m³.
    pub density: f64,
    /// Only meaningful in 2D, where it must equal 1/3.
    pub poisson_ratio: f64,
}

impl MaterialPhase {
    pub fn new(elastic_modulus: f64, density: f64) -> Self {
        MaterialPhase {
            elastic_modulus,
            density,
            poisson_ratio: PLANE_STRESS_POISSON_RATIO,
        }
    }

    fn violations(&self, name: &str, dimension: Dimension) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.elastic_modulus > 0.0) || !self.elastic_modulus.is_finite() {
            out.push(format!(
                "{name} elastic modulus must be positive, got {}",
                self.elastic_modulus
            ));
        }
        if !(self.density > 0.0) || !self.density.is_finite() {
            out.push(format!("{name} density must be positive, got {}", self.density));
        }
        if dimension == Dimension::Two && (self.poisson_ratio - PLANE_STRESS_POISSON_RATIO).abs() > 1e-12 {
            out.push(format!(
                "{name} Poisson ratio must be 1/3 in 2D, got {}",
                self.poisson_ratio
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroStructureSpec {
    pub dimension: Dimension,
    /// Side length `L` of the domain in m.
    pub domain_length: f64,
    /// Side length `l` of a unit cell in m.
    pub cell_length: f64,
    pub n_cells_per_side: usize,
    pub stiff: MaterialPhase,
    pub compliant: MaterialPhase,
    pub layout: Layout,
}

impl MicroStructureSpec {
    /// Builds a spec tiling `[0, domain_length]^d` with `n_cells_per_side`
    /// cells per axis.
    pub fn new(
        layout: Layout,
        domain_length: f64,
        n_cells_per_side: usize,
        stiff: MaterialPhase,
        compliant: MaterialPhase,
    ) -> Result<Self> {
        let spec = MicroStructureSpec {
            dimension: layout.dimension(),
            domain_length,
            cell_length: domain_length / n_cells_per_side.max(1) as f64,
            n_cells_per_side,
            stiff,
            compliant,
            layout,
        };
        let problems = spec.violations();
        if problems.is_empty() {
            Ok(spec)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Every violated invariant, for config validation.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.layout.dimension() != self.dimension {
            out.push(format!(
                "layout {:?} is not a {}D layout",
                self.layout,
                self.dimension.as_usize()
            ));
        }
        if !(self.domain_length > 0.0) || !self.domain_length.is_finite() {
            out.push(format!("domain length must be positive, got {}", self.domain_length));
        }
        if self.n_cells_per_side == 0 {
            out.push("n_cells_per_side must be at least 1".to_string());
        } else {
            let tiled = self.cell_length * self.n_cells_per_side as f64;
            if (tiled - self.domain_length).abs() > 1e-12 * self.domain_length.abs() {
                out.push(format!(
                    "domain length {} is not {} cells of length {}",
                    self.domain_length, self.n_cells_per_side, self.cell_length
                ));
            }
        }
        out.extend(self.stiff.violations("stiff", self.dimension));
        out.extend(self.compliant.violations("compliant", self.dimension));
        out
    }

    /// Non-fatal remarks about the configuration.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_cells_per_side < 10 {
            out.push(format!(
                "only {} cells per side; scale separation l << L is weak",
                self.n_cells_per_side
            ));
        }
        out
    }

    pub fn material(&self, phase: Phase) -> &MaterialPhase {
        match phase {
            Phase::Stiff => &self.stiff,
            Phase::Compliant => &self.compliant,
        }
    }

    /// Phase occupying `point`. Points within `1e-12 L` outside the domain
    /// are snapped onto it.
    pub fn phase_at(&self, point: &[f64]) -> Result<Phase> {
        let d = self.dimension.as_usize();
        if point.len() != d {
            return Err(Error::Unsupported(format!(
                "expected a {d}D point, got {} coordinates",
                point.len()
            )));
        }
        let tol = 1e-12 * self.domain_length;
        let mut xi = [0.0; 2];
        for (axis, &x) in point.iter().enumerate() {
            if !(x >= -tol && x <= self.domain_length + tol) {
                return Err(Error::OutOfDomain {
                    point: point.to_vec(),
                    length: self.domain_length,
                });
            }
            let scaled = (x / self.cell_length).max(0.0);
            let cell = (scaled.floor() as usize).min(self.n_cells_per_side - 1);
            xi[axis] = (scaled - cell as f64).min(1.0);
        }
        Ok(self.layout.phase_in_cell(&xi[..d]))
    }

    pub fn material_at(&self, point: &[f64]) -> Result<&MaterialPhase> {
        self.phase_at(point).map(|p| self.material(p))
    }

    /// Harmonic mean of the phase moduli, the exact static modulus of the
    /// series quarter/half/quarter bar.
    pub fn homogenized_modulus_1d(&self) -> Result<f64> {
        if self.dimension != Dimension::One || self.layout != Layout::Bar1dQuarterHalfQuarter {
            return Err(Error::Unsupported(
                "the harmonic-mean modulus is defined for the 1D quarter/half/quarter bar only".into(),
            ));
        }
        Ok(2.0 / (1.0 / self.stiff.elastic_modulus + 1.0 / self.compliant.elastic_modulus))
    }

    /// Volume-averaged density of a unit cell.
    pub fn mean_density(&self) -> f64 {
        let f = self.layout.compliant_fraction();
        (1.0 - f) * self.stiff.density + f * self.compliant.density
    }
}
