//! Run configuration: TOML in, fully resolved and serializable out.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::boundary::{make_dimer, BoundaryBasis};
use crate::error::{Error, Result};
use crate::greens::GreensMethod;
use crate::lattice::{bz_path, BzPath, Lattice, LatticeKind, QuasiMomentum, Vec2};
use crate::operators::Material;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeKind,
    /// Lattice constant `L`.
    pub constant: f64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { kind: LatticeKind::Honeycomb, constant: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleConfig {
    pub radius: f64,
    pub n_modes: usize,
    pub n_quad: usize,
}

impl Default for BubbleConfig {
    fn default() -> Self {
        Self { radius: 0.2, n_modes: 6, n_quad: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialConfig {
    pub rho: f64,
    pub kappa: f64,
    pub rho_b: f64,
    pub kappa_b: f64,
}

impl Default for MaterialConfig {
    fn default() -> Self {
        let m = Material::default();
        Self { rho: m.rho, kappa: m.kappa, rho_b: m.rho_b, kappa_b: m.kappa_b }
    }
}

/// Settings of the seeded Green's-function self-check attached to each run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreensConfig {
    /// Method checked against the other one.
    pub method: GreensMethod,
    pub check_draws: usize,
    pub spectral_radius: Option<usize>,
    pub ewald_split: Option<f64>,
}

impl Default for GreensConfig {
    fn default() -> Self {
        Self { method: GreensMethod::Ewald, check_draws: 8, spectral_radius: None, ewald_split: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Tolerance on characteristic values.
    pub tol: f64,
    /// Finite-difference step for capacitance derivatives, in units of `|alpha*|`.
    pub dirac_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-6, dirac_step: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandsConfig {
    /// Symmetry-point labels; empty picks `G K M G` or `G X M G`.
    pub path: Vec<String>,
    pub points_per_segment: usize,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self { path: Vec::new(), points_per_segment: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiracConfig {
    pub directions: usize,
    /// Cone radii as fractions of `|alpha*|`.
    pub radii: Vec<f64>,
}

impl Default for DiracConfig {
    fn default() -> Self {
        Self { directions: 8, radii: vec![1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 3.5e-2, 5e-2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub epsilon: f64,
    /// Cells spanned by the grid along `x` and `y`.
    pub cells: [usize; 2],
    pub resolution: [usize; 2],
    pub line_cells: usize,
    pub line_per_cell: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { epsilon: 8e-3, cells: [8, 4], resolution: [161, 81], line_cells: 64, line_per_cell: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// Frequency shifts; empty picks the lattice's standard window.
    pub epsilons: Vec<f64>,
    pub fft_at: Vec<f64>,
    pub fft_cells: usize,
    pub fft_per_cell: usize,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { epsilons: Vec::new(), fft_at: vec![8e-3], fft_cells: 64, fft_per_cell: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    pub lattice: LatticeConfig,
    pub bubbles: BubbleConfig,
    pub material: MaterialConfig,
    pub greens: GreensConfig,
    pub solver: SolverConfig,
    pub bands: BandsConfig,
    pub dirac: DiracConfig,
    pub field: FieldConfig,
    pub envelope: EnvelopeConfig,
    pub seed: u64,
}


fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The same crystal on the other lattice, with that lattice's standard
    /// sweep and envelope window.
    pub fn for_kind(&self, kind: LatticeKind) -> Self {
        let mut cfg = self.clone();
        if kind != self.lattice.kind {
            cfg.lattice.kind = kind;
            cfg.bands.path.clear();
            cfg.envelope.epsilons.clear();
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        check(finite_pos(self.lattice.constant), || format!("lattice.constant = {}", self.lattice.constant))?;
        check(finite_pos(self.bubbles.radius), || format!("bubbles.radius = {}", self.bubbles.radius))?;
        let m = &self.material;
        check([m.rho, m.kappa, m.rho_b, m.kappa_b].iter().all(|&v| finite_pos(v)), || {
            "material parameters must be positive".into()
        })?;
        check(finite_pos(self.solver.tol) && self.solver.tol < 1e-2, || format!("solver.tol = {}", self.solver.tol))?;
        check((1e-5..=1e-2).contains(&self.solver.dirac_step), || {
            format!("solver.dirac_step = {} outside [1e-5, 1e-2]", self.solver.dirac_step)
        })?;
        check(self.bands.points_per_segment >= 1, || "bands.points_per_segment must be at least 1".into())?;
        check(self.dirac.directions >= 1, || "dirac.directions must be at least 1".into())?;
        check(self.dirac.radii.len() >= 5, || "dirac.radii needs at least 5 entries".into())?;
        check(self.dirac.radii.iter().all(|&r| finite_pos(r) && r <= 0.2), || {
            "dirac.radii must lie in (0, 0.2]".into()
        })?;
        check(self.field.epsilon != 0.0 && self.field.epsilon.abs() <= 0.05, || {
            format!("field.epsilon = {} must be nonzero and at most 0.05 in size", self.field.epsilon)
        })?;
        check(self.field.cells.iter().all(|&c| c >= 1), || "field.cells must be positive".into())?;
        check(self.field.resolution.iter().all(|&c| c >= 2), || "field.resolution must be at least 2".into())?;
        check(self.field.line_cells >= 1 && self.field.line_per_cell >= 2, || {
            "field line cut needs cells >= 1 and per_cell >= 2".into()
        })?;
        check(self.envelope.epsilons.iter().all(|e| e.is_finite() && e.abs() <= 0.05), || {
            "envelope.epsilons must be finite and at most 0.05 in size".into()
        })?;
        check(self.envelope.fft_cells >= 64 && self.envelope.fft_per_cell >= 8, || {
            "envelope FFT needs at least 64 cells and 8 samples per cell".into()
        })?;
        self.path_labels()?;
        Ok(())
    }

    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.lattice.kind, self.lattice.constant)
    }

    pub fn material(&self) -> Result<Material> {
        let m = &self.material;
        Material::new(m.rho, m.kappa, m.rho_b, m.kappa_b)
    }

    pub fn basis(&self) -> Result<BoundaryBasis> {
        let b = &self.bubbles;
        Ok(make_dimer(&self.lattice()?, b.radius, b.n_modes, b.n_quad)?.1)
    }

    pub fn path_labels(&self) -> Result<Vec<String>> {
        if !self.bands.path.is_empty() {
            for l in &self.bands.path {
                check(matches!(l.as_str(), "G" | "K" | "K'" | "M" | "X"), || format!("unknown path label {l:?}"))?;
                check(!(l.starts_with('K') && self.lattice.kind == LatticeKind::Square), || {
                    "K is not a symmetry point of the square lattice".into()
                })?;
                check(!(l == "X" && self.lattice.kind == LatticeKind::Honeycomb), || {
                    "X is not used on the honeycomb lattice".into()
                })?;
            }
            check(self.bands.path.len() >= 2, || "bands.path needs at least two labels".into())?;
            return Ok(self.bands.path.clone());
        }
        let labels: &[&str] = match self.lattice.kind {
            LatticeKind::Honeycomb => &["G", "K", "M", "G"],
            LatticeKind::Square => &["G", "X", "M", "G"],
        };
        Ok(labels.iter().map(|s| s.to_string()).collect())
    }

    pub fn path(&self) -> Result<BzPath> {
        let lat = self.lattice()?;
        let points: Vec<QuasiMomentum> = self
            .path_labels()?
            .iter()
            .map(|l| match l.as_str() {
                "G" => lat.gamma(),
                "K" => lat.dirac_point(),
                "K'" => lat.second_dirac_point(),
                "M" => lat.m_point(),
                _ => lat.x_point(),
            })
            .collect();
        bz_path(&points, self.bands.points_per_segment)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        if !self.envelope.epsilons.is_empty() {
            return self.envelope.epsilons.clone();
        }
        match self.lattice.kind {
            LatticeKind::Honeycomb => (-10..=10).map(|i| i as f64 * 1e-3).collect(),
            LatticeKind::Square => (1..=10).map(|i| i as f64 * 1e-3).collect(),
        }
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::new(1.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_gives_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert!((cfg.material().unwrap().delta() - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn roundtrips_through_toml() {
        let mut cfg = RunConfig::default().for_kind(LatticeKind::Square);
        cfg.seed = 17;
        cfg.greens.ewald_split = Some(2.5);
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml_str("[lattice]\nconstant = -1.0").is_err());
        assert!(RunConfig::from_toml_str("[bubbles]\nradius = 0.2\ncolour = 3").is_err());
        assert!(RunConfig::from_toml_str("[lattice]\nkind = \"square\"\n[bands]\npath = [\"G\", \"K\"]").is_err());
        assert!(RunConfig::from_toml_str("[field]\nepsilon = 0.0").is_err());
    }
}
