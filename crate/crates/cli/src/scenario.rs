//! Scenario configuration. Lengths are in the units where the lattice period is 2*pi; the
//! wavenumber `k` is in inverse length units; relative permittivity, permeability and
//! defect amplitudes are dimensionless complex numbers written as `[re, im]`.

use std::f64::consts::PI;

use layerscat::media::{wrap_to_cell, DefectPerturbation, Layer, PeriodicMedium};
use layerscat::strip_solver::SourceSpec;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Complex number stored as `[re, im]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Complex(pub [f64; 2]);

impl Complex {
    pub const ONE: Complex = Complex([1.0, 0.0]);

    pub fn value(self) -> C64 {
        C64::new(self.0[0], self.0[1])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub wave: Wave,
    pub geometry: Geometry,
    pub medium: MediumProfile,
    #[serde(default)]
    pub defect: DefectProfile,
    pub source: SourceProfile,
    pub discretization: DiscretizationConfig,
    pub quadrature: QuadratureConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Wave {
    /// Free-space wavenumber, 1/length, in (0, 20].
    pub k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    /// Depth of the computational layer (length). The transparent boundary sits here.
    pub height: f64,
    /// The medium is free space above `r0 - delta` (length).
    pub r0: f64,
    /// Length, with 0 < delta < r0 <= height.
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerConfig {
    /// Upper boundary of the layer (length). Tops must increase.
    pub top: f64,
    pub eps: Complex,
    #[serde(default = "one")]
    pub mu: Complex,
}

fn one() -> Complex {
    Complex::ONE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum MediumProfile {
    Vacuum,
    /// Horizontal layers from bottom to top, free space above the last one.
    Layered { layers: Vec<LayerConfig> },
    /// Ridges of half-width fill*pi around x1 = 0 for z_lo <= z < z_hi (lengths), substrate below.
    Lamellar { eps_ridge: Complex, eps_groove: Complex, eps_substrate: Complex, fill: f64, z_lo: f64, z_hi: f64 },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum DefectProfile {
    #[default]
    None,
    /// Constant permittivity change inside a ball (center and radius in length units).
    Ball { amplitude: Complex, center: [f64; 3], radius: f64 },
    /// Constant change on the disk |x_T - axis| < radius for z_lo <= z < z_hi (lengths).
    Cylinder { amplitude: Complex, axis: [f64; 2], radius: f64, z_lo: f64, z_hi: f64 },
    /// Gaussian change with the given width (length), zero for z >= top (length).
    GaussianBump { amplitude: Complex, center: [f64; 3], width: f64, top: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceProfile {
    None,
    /// sin^2(pi z / support_top) cos^2(x1/2) cos^2(x2/2) times `polarization` in every listed
    /// cell, zero for z >= support_top (length).
    Bump { cells: Vec<[i32; 2]>, support_top: f64, polarization: [Complex; 3] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    /// Fourier truncation M: modes |j1|, |j2| <= M, in 0..=6.
    pub modes: usize,
    /// Depth elements N, in 1..=4096.
    pub depth_elems: usize,
    /// Gauss points per depth element, default 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauss_points: Option<usize>,
    /// Transverse sample grid per axis, default max(8, 4M + 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureConfig {
    /// Gauss points per unit panel length of the alpha rule, in 2..=400.
    pub n_base: usize,
    /// Algebraic grading exponent toward cutoff circles, in [1, 8].
    #[serde(default = "default_grading")]
    pub grading: f64,
    /// Width of the cutoff band in units of k - |alpha_j| (1/length), in [0, 0.5).
    pub cutoff_tol: f64,
}

fn default_grading() -> f64 {
    layerscat::bloch::DEFAULT_GRADING
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative residual target of the defect coupling iteration.
    pub gmres_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
    /// Worker threads for the alpha solves; results do not depend on it.
    pub threads: usize,
    /// Cell factorizations are cached while their estimate stays below this (MiB).
    pub cache_limit_mib: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { gmres_tol: 1e-10, restart: 40, max_iter: 400, threads: 1, cache_limit_mib: 1024 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Cells whose sampled field is dumped to fields_cell_<j1>_<j2>.bin.
    pub cells: Vec<[i32; 2]>,
    /// Heights z >= geometry.height (length) of evaluation planes over the central cell.
    pub planes: Vec<f64>,
    /// Points per axis on each evaluation plane.
    pub plane_resolution: usize,
    /// Sweeps run after the solve: "alpha-path", "depth-convergence".
    pub sweeps: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { cells: vec![[0, 0]], planes: Vec::new(), plane_resolution: 8, sweeps: Vec::new() }
    }
}

pub const SWEEPS: [&str; 2] = ["alpha-path", "depth-convergence"];

/// Command-line overrides applied on top of a loaded scenario.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub modes: Option<usize>,
    pub depth_elems: Option<usize>,
    pub n_alpha: Option<usize>,
    pub cutoff_tol: Option<f64>,
    pub threads: Option<usize>,
}

fn check(ok: bool, field: &str, message: impl Into<String>) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config { message: message.into(), field: Some(field.into()), line: None, column: None })
    }
}

fn in_range(value: f64, lo: f64, hi: f64) -> bool {
    value.is_finite() && value >= lo && value <= hi
}

fn check_complex(c: Complex, field: &str) -> Result<(), CliError> {
    check(c.0.iter().all(|v| v.is_finite()), field, "complex value must be finite")
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::from_toml(&e, text))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config { message: e.to_string(), field: None, line: None, column: None })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.modes {
            self.discretization.modes = m;
        }
        if let Some(n) = o.depth_elems {
            self.discretization.depth_elems = n;
        }
        if let Some(n) = o.n_alpha {
            self.quadrature.n_base = n;
        }
        if let Some(t) = o.cutoff_tol {
            self.quadrature.cutoff_tol = t;
        }
        if let Some(t) = o.threads {
            self.solver.threads = t;
        }
    }

    /// Admissible ranges of every numeric parameter.
    pub fn validate(&self) -> Result<(), CliError> {
        check(!self.name.is_empty(), "name", "must not be empty")?;
        check(self.wave.k > 0.0 && in_range(self.wave.k, 0.0, 20.0), "wave.k", "must lie in (0, 20]")?;
        let g = &self.geometry;
        check(in_range(g.height, 0.0, 100.0) && g.height > 0.0, "geometry.height", "must lie in (0, 100]")?;
        check(in_range(g.r0, 0.0, g.height) && g.r0 > 0.0, "geometry.r0", "must lie in (0, height]")?;
        check(in_range(g.delta, 0.0, g.r0) && g.delta > 0.0 && g.delta < g.r0, "geometry.delta", "must lie in (0, r0)")?;
        let free_from = g.r0 - g.delta;
        match &self.medium {
            MediumProfile::Vacuum => {}
            MediumProfile::Layered { layers } => {
                check(!layers.is_empty(), "medium.layers", "needs at least one layer")?;
                for (i, l) in layers.iter().enumerate() {
                    let field = format!("medium.layers[{i}]");
                    check(in_range(l.top, 0.0, free_from) && l.top > 0.0, &format!("{field}.top"), "must lie in (0, r0 - delta]")?;
                    check_complex(l.eps, &format!("{field}.eps"))?;
                    check_complex(l.mu, &format!("{field}.mu"))?;
                }
                check(layers.windows(2).all(|w| w[0].top < w[1].top), "medium.layers", "tops must increase")?;
            }
            MediumProfile::Lamellar { eps_ridge, eps_groove, eps_substrate, fill, z_lo, z_hi } => {
                check_complex(*eps_ridge, "medium.eps_ridge")?;
                check_complex(*eps_groove, "medium.eps_groove")?;
                check_complex(*eps_substrate, "medium.eps_substrate")?;
                check(*fill > 0.0 && *fill < 1.0, "medium.fill", "must lie in (0, 1)")?;
                check(in_range(*z_lo, 0.0, free_from), "medium.z_lo", "must lie in [0, r0 - delta]")?;
                check(in_range(*z_hi, 0.0, free_from) && z_hi > z_lo, "medium.z_hi", "must lie in (z_lo, r0 - delta]")?;
            }
        }
        match &self.defect {
            DefectProfile::None => {}
            DefectProfile::Ball { amplitude, center, radius } => {
                check_complex(*amplitude, "defect.amplitude")?;
                check(center.iter().all(|c| c.is_finite()), "defect.center", "must be finite")?;
                check(*radius > 0.0 && radius.is_finite(), "defect.radius", "must be positive")?;
            }
            DefectProfile::Cylinder { amplitude, axis, radius, z_lo, z_hi } => {
                check_complex(*amplitude, "defect.amplitude")?;
                check(axis.iter().all(|c| c.is_finite()), "defect.axis", "must be finite")?;
                check(*radius > 0.0 && radius.is_finite(), "defect.radius", "must be positive")?;
                check(in_range(*z_lo, 0.0, g.r0), "defect.z_lo", "must lie in [0, r0]")?;
                check(in_range(*z_hi, 0.0, g.r0) && z_hi > z_lo, "defect.z_hi", "must lie in (z_lo, r0]")?;
            }
            DefectProfile::GaussianBump { amplitude, center, width, top } => {
                check_complex(*amplitude, "defect.amplitude")?;
                check(center.iter().all(|c| c.is_finite()), "defect.center", "must be finite")?;
                check(*width > 0.0 && width.is_finite(), "defect.width", "must be positive")?;
                check(in_range(*top, 0.0, g.r0) && *top > 0.0, "defect.top", "must lie in (0, r0]")?;
            }
        }
        if let SourceProfile::Bump { cells, support_top, polarization } = &self.source {
            check(!cells.is_empty(), "source.cells", "needs at least one cell")?;
            check(cells.iter().flatten().all(|c| c.abs() <= 1000), "source.cells", "indices must lie in [-1000, 1000]")?;
            check(in_range(*support_top, 0.0, g.height) && *support_top > 0.0, "source.support_top", "must lie in (0, height]")?;
            for (i, p) in polarization.iter().enumerate() {
                check_complex(*p, &format!("source.polarization[{i}]"))?;
            }
        }
        let d = &self.discretization;
        check(d.modes <= 6, "discretization.modes", "must lie in 0..=6")?;
        check((1..=4096).contains(&d.depth_elems), "discretization.depth_elems", "must lie in 1..=4096")?;
        if let Some(p) = d.gauss_points {
            check((1..=8).contains(&p), "discretization.gauss_points", "must lie in 1..=8")?;
        }
        if let Some(n) = d.grid {
            check(n > 4 * d.modes && n <= 256, "discretization.grid", "must exceed 4 * modes and be at most 256")?;
        }
        let q = &self.quadrature;
        check((2..=400).contains(&q.n_base), "quadrature.n_base", "must lie in 2..=400")?;
        check(in_range(q.grading, 1.0, 8.0), "quadrature.grading", "must lie in [1, 8]")?;
        check(in_range(q.cutoff_tol, 0.0, 0.5) && q.cutoff_tol < 0.5, "quadrature.cutoff_tol", "must lie in [0, 0.5)")?;
        let s = &self.solver;
        check(s.gmres_tol > 0.0 && s.gmres_tol < 1.0, "solver.gmres_tol", "must lie in (0, 1)")?;
        check((1..=1000).contains(&s.restart), "solver.restart", "must lie in 1..=1000")?;
        check((1..=100_000).contains(&s.max_iter), "solver.max_iter", "must lie in 1..=100000")?;
        check((1..=256).contains(&s.threads), "solver.threads", "must lie in 1..=256")?;
        let o = &self.outputs;
        check(o.cells.iter().flatten().all(|c| c.abs() <= 1000), "outputs.cells", "indices must lie in [-1000, 1000]")?;
        check(o.planes.iter().all(|z| z.is_finite() && *z >= g.height), "outputs.planes", "heights must be at least geometry.height")?;
        check((1..=256).contains(&o.plane_resolution), "outputs.plane_resolution", "must lie in 1..=256")?;
        for name in &o.sweeps {
            check(SWEEPS.contains(&name.as_str()), "outputs.sweeps", format!("unknown sweep `{name}`"))?;
        }
        Ok(())
    }

    pub fn build_medium(&self) -> layerscat::Result<PeriodicMedium> {
        let Geometry { height, r0, delta } = self.geometry;
        match &self.medium {
            MediumProfile::Vacuum => PeriodicMedium::vacuum(height, r0, delta),
            MediumProfile::Layered { layers } => {
                let layers = layers.iter().map(|l| Layer { top: l.top, eps: l.eps.value(), mu: l.mu.value() }).collect();
                PeriodicMedium::layered(layers, height, r0, delta)
            }
            MediumProfile::Lamellar { eps_ridge, eps_groove, eps_substrate, fill, z_lo, z_hi } => PeriodicMedium::lamellar(
                eps_ridge.value(),
                eps_groove.value(),
                eps_substrate.value(),
                *fill,
                *z_lo,
                *z_hi,
                height,
                r0,
                delta,
            ),
        }
    }

    pub fn build_defect(&self) -> DefectPerturbation {
        match &self.defect {
            DefectProfile::None => DefectPerturbation::none(),
            DefectProfile::Ball { amplitude, center, radius } => DefectPerturbation::ball(amplitude.value(), *center, *radius),
            DefectProfile::Cylinder { amplitude, axis, radius, z_lo, z_hi } => {
                DefectPerturbation::cylinder(amplitude.value(), *axis, *radius, *z_lo, *z_hi)
            }
            DefectProfile::GaussianBump { amplitude, center, width, top } => {
                DefectPerturbation::gaussian_bump(amplitude.value(), *center, *width, *top)
            }
        }
    }

    pub fn build_source(&self) -> SourceSpec {
        match &self.source {
            SourceProfile::None => SourceSpec::zero(),
            SourceProfile::Bump { cells, support_top, polarization } => {
                let top = *support_top;
                let p = polarization.map(Complex::value);
                SourceSpec::new(cells.clone(), top, move |x| {
                    let (x1, _) = wrap_to_cell(x[0]);
                    let (x2, _) = wrap_to_cell(x[1]);
                    if x[2] >= top || x[2] < 0.0 {
                        return [C64::new(0.0, 0.0); 3];
                    }
                    let s = (PI * x[2] / top).sin().powi(2) * (0.5 * x1).cos().powi(2) * (0.5 * x2).cos().powi(2);
                    p.map(|c| c * s)
                })
            }
        }
    }
}

pub const BUILTIN: [&str; 3] = ["homogeneous_outgoing", "absorbing_layers_defect", "lamellar_grating"];

pub fn builtin(name: &str) -> Option<Scenario> {
    let geometry = Geometry { height: 1.0, r0: 0.8, delta: 0.2 };
    let polarization = [Complex([0.3, 0.0]), Complex([1.0, 0.2]), Complex([0.0, 1.0])];
    let scenario = match name {
        "homogeneous_outgoing" => Scenario {
            name: name.into(),
            wave: Wave { k: 1.0 },
            geometry,
            medium: MediumProfile::Vacuum,
            defect: DefectProfile::None,
            source: SourceProfile::Bump { cells: vec![[0, 0]], support_top: 0.6, polarization },
            discretization: DiscretizationConfig { modes: 0, depth_elems: 16, gauss_points: None, grid: None },
            quadrature: QuadratureConfig { n_base: 8, grading: default_grading(), cutoff_tol: 1e-6 },
            solver: SolverConfig::default(),
            outputs: OutputConfig { planes: vec![1.0, 1.5], ..OutputConfig::default() },
        },
        "absorbing_layers_defect" => Scenario {
            name: name.into(),
            wave: Wave { k: 0.3 },
            geometry,
            medium: MediumProfile::Layered {
                layers: vec![
                    LayerConfig { top: 0.3, eps: Complex([1.0, 0.5]), mu: Complex::ONE },
                    LayerConfig { top: 0.6, eps: Complex([1.5, 0.3]), mu: Complex::ONE },
                ],
            },
            defect: DefectProfile::Cylinder {
                amplitude: Complex([0.0, 0.4]),
                axis: [0.0, 0.0],
                radius: 1.0,
                z_lo: 0.1,
                z_hi: 0.7,
            },
            source: SourceProfile::Bump { cells: vec![[0, 0], [1, 0]], support_top: 0.6, polarization },
            discretization: DiscretizationConfig { modes: 1, depth_elems: 16, gauss_points: None, grid: None },
            quadrature: QuadratureConfig { n_base: 6, grading: default_grading(), cutoff_tol: 3e-7 },
            solver: SolverConfig::default(),
            outputs: OutputConfig { cells: vec![[0, 0], [1, 0]], planes: vec![1.2], ..OutputConfig::default() },
        },
        "lamellar_grating" => Scenario {
            name: name.into(),
            wave: Wave { k: 0.8 },
            geometry,
            medium: MediumProfile::Lamellar {
                eps_ridge: Complex([2.25, 0.2]),
                eps_groove: Complex([1.0, 0.1]),
                eps_substrate: Complex([1.5, 0.3]),
                fill: 0.4,
                z_lo: 0.2,
                z_hi: 0.5,
            },
            defect: DefectProfile::None,
            source: SourceProfile::Bump { cells: vec![[0, 0]], support_top: 0.6, polarization },
            discretization: DiscretizationConfig { modes: 1, depth_elems: 16, gauss_points: None, grid: None },
            quadrature: QuadratureConfig { n_base: 6, grading: default_grading(), cutoff_tol: 1e-6 },
            solver: SolverConfig::default(),
            outputs: OutputConfig::default(),
        },
        _ => return None,
    };
    Some(scenario)
}
