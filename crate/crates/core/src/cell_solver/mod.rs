//! Discretization and solution of the quasi-periodic cell problem.
//!
//! Per transverse mode the tangential components are continuous piecewise linear in
//! depth (vanishing at the bottom) and the vertical component is piecewise constant.
//! Unknowns of one mode are numbered level by level: `[E3(cell e), E1(node e+1), E2(node e+1)]`.

mod assembly;
mod diagnostics;
mod operator;
mod solver;

pub use assembly::{assemble_regular, load_vector};
pub use diagnostics::{
    coercivity_check, divergence_residual, energy_identity_check, CoercivityReport, EnergyReport,
};
pub use operator::{smw_solve_columns, solve_direct, solve_smw, DofLayout, FactoredOperator, RankUpdate, RegularOperator, SmwFactors};
pub use solver::{CellSolution, CellSolver, ConditioningReport, SingularAmplitude, SolvePath};

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gauss::mapped;
use crate::media::TransverseGrid;

pub const E3: usize = 0;
pub const E1: usize = 1;
pub const E2: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Discretization {
    pub truncation: usize,
    pub depth_elems: usize,
    pub height: f64,
    pub gauss_points: usize,
    pub grid: TransverseGrid,
}

impl Discretization {
    pub fn new(truncation: usize, depth_elems: usize, height: f64) -> Result<Self> {
        if depth_elems == 0 || !(height > 0.0 && height.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "need at least one depth element and a positive height, got N={depth_elems}, R={height}"
            )));
        }
        Ok(Self {
            truncation,
            depth_elems,
            height,
            gauss_points: 3,
            grid: TransverseGrid { n: (4 * truncation + 2).max(8) },
        })
    }

    pub fn with_gauss_points(mut self, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter("depth rule needs at least two points".into()));
        }
        self.gauss_points = n;
        Ok(self)
    }

    /// The medium bandwidth 2M must be resolved by the transverse grid.
    pub fn with_grid(mut self, n: usize) -> Result<Self> {
        if n < 4 * self.truncation + 1 {
            return Err(Error::Aliasing { grid: n, bandwidth: 2 * self.truncation });
        }
        self.grid = TransverseGrid { n };
        Ok(self)
    }

    pub fn h(&self) -> f64 {
        self.height / self.depth_elems as f64
    }

    pub fn n_modes(&self) -> usize {
        (2 * self.truncation + 1).pow(2)
    }

    pub fn layout(&self) -> DofLayout {
        DofLayout { n_modes: self.n_modes(), n_elems: self.depth_elems }
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.depth_elems * self.n_modes()
    }

    /// Gauss points of all depth elements, element by element: (z, weight).
    pub fn depth_rule(&self) -> Vec<(f64, f64)> {
        let h = self.h();
        (0..self.depth_elems)
            .flat_map(|e| mapped(self.gauss_points, e as f64 * h, (e + 1) as f64 * h))
            .collect()
    }

    pub fn depth_points(&self) -> Vec<f64> {
        self.depth_rule().into_iter().map(|(z, _)| z).collect()
    }

    pub fn n_depth_points(&self) -> usize {
        self.depth_elems * self.gauss_points
    }
}

/// Per-mode vector values at the depth sample points, used both for loads and for
/// evaluated solutions.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalField {
    pub n_modes: usize,
    pub n_points: usize,
    pub values: Vec<[C64; 3]>,
}

impl ModalField {
    pub fn zeros(n_modes: usize, n_points: usize) -> Self {
        Self { n_modes, n_points, values: vec![[C64::new(0.0, 0.0); 3]; n_modes * n_points] }
    }

    pub fn from_fn(n_modes: usize, points: &[f64], f: impl Fn(usize, f64) -> [C64; 3]) -> Self {
        let mut out = Self::zeros(n_modes, points.len());
        for m in 0..n_modes {
            for (g, &z) in points.iter().enumerate() {
                out.values[m * points.len() + g] = f(m, z);
            }
        }
        out
    }

    #[inline]
    pub fn get(&self, m: usize, g: usize) -> [C64; 3] {
        self.values[m * self.n_points + g]
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|c| *c == C64::new(0.0, 0.0)))
    }

    pub fn add_assign(&mut self, other: &ModalField) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            for c in 0..3 {
                a[c] += b[c];
            }
        }
    }

    pub fn scale(&mut self, s: C64) {
        for v in &mut self.values {
            for c in v.iter_mut() {
                *c *= s;
            }
        }
    }
}

/// Shape function supported on a depth element.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Shape {
    pub local: usize,
    pub comp: usize,
    pub value: f64,
    pub slope: f64,
}

/// Shape functions of element `e` at depth `z`; at most five.
pub(crate) fn element_shapes(e: usize, z: f64, h: f64) -> ([Shape; 5], usize) {
    let z_lo = e as f64 * h;
    let lo = ((z_lo + h) - z) / h;
    let hi = (z - z_lo) / h;
    let blank = Shape { local: 0, comp: 0, value: 0.0, slope: 0.0 };
    let mut out = [blank; 5];
    let mut n = 0;
    if e > 0 {
        let base = 3 * (e - 1);
        out[n] = Shape { local: base + E1, comp: E1, value: lo, slope: -1.0 / h };
        out[n + 1] = Shape { local: base + E2, comp: E2, value: lo, slope: -1.0 / h };
        n += 2;
    }
    let base = 3 * e;
    out[n] = Shape { local: base + E3, comp: E3, value: 1.0, slope: 0.0 };
    out[n + 1] = Shape { local: base + E1, comp: E1, value: hi, slope: 1.0 / h };
    out[n + 2] = Shape { local: base + E2, comp: E2, value: hi, slope: 1.0 / h };
    n += 3;
    (out, n)
}

/// Curl of a shape function times the mode exponential e^{-i alpha_j . x}.
#[inline]
pub(crate) fn shape_curl(s: &Shape, a: [f64; 2]) -> [C64; 3] {
    let i = C64::new(0.0, 1.0);
    match s.comp {
        E1 => [C64::new(0.0, 0.0), C64::new(s.slope, 0.0), i * a[1] * s.value],
        E2 => [C64::new(-s.slope, 0.0), C64::new(0.0, 0.0), -i * a[0] * s.value],
        _ => [-i * a[1], i * a[0], C64::new(0.0, 0.0)],
    }
}

/// Physical component index (x1, x2, x3) carried by a shape function.
#[inline]
pub(crate) fn physical_component(comp: usize) -> usize {
    match comp {
        E1 => 0,
        E2 => 1,
        _ => 2,
    }
}
