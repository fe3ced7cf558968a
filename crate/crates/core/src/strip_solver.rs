//! Non-periodic strip problem: Bloch synthesis over the alpha family and the local defect coupling.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::bloch::{bloch_forward, modal_synthesis, modal_transform, AlphaQuadrature, CellIndexedField};
use crate::cell_solver::{energy_identity_check, CellSolution, CellSolver, Discretization, EnergyReport, ModalField};
use crate::error::{Error, Result};
use crate::lattice_modes::QuasiPeriodicity;
use crate::linalg::{gmres, norm2, GmresOptions};
use crate::media::{DefectPerturbation, MediumSamples, PeriodicMedium, Point, TransverseGrid};
use crate::oracles::born_series;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
/// Quadrature nodes per summation block; fixed so that sums do not depend on the thread count.
const BLOCK: usize = 16;

pub type VectorFn = Arc<dyn Fn(Point) -> [C64; 3] + Send + Sync>;

/// Volume current with support in finitely many cells, below `support_top`.
#[derive(Clone)]
pub struct SourceSpec {
    pub cells: Vec<[i32; 2]>,
    pub support_top: f64,
    field: VectorFn,
}

impl std::fmt::Debug for SourceSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceSpec").field("cells", &self.cells).field("support_top", &self.support_top).finish()
    }
}

impl SourceSpec {
    /// `field` is evaluated at strip points; it is restricted to the listed cells.
    pub fn new(cells: Vec<[i32; 2]>, support_top: f64, field: impl Fn(Point) -> [C64; 3] + Send + Sync + 'static) -> Self {
        Self { cells, support_top, field: Arc::new(field) }
    }

    pub fn zero() -> Self {
        Self::new(vec![], 0.0, |_| [ZERO; 3])
    }

    pub fn eval(&self, x: Point) -> [C64; 3] {
        (self.field)(x)
    }

    /// Samples of every listed cell on the reference grid, laid out ((p1 n + p2) n_depth + g) * 3 + c.
    pub fn sample(&self, grid: TransverseGrid, depth_points: &[f64]) -> Result<CellIndexedField> {
        let xs = grid.points();
        let nd = depth_points.len();
        let mut out = CellIndexedField::new(grid.n * grid.n * nd * 3);
        for &j in &self.cells {
            let mut values = Vec::with_capacity(out.n_samples);
            let shift = [2.0 * PI * j[0] as f64, 2.0 * PI * j[1] as f64];
            for &x1 in &xs {
                for &x2 in &xs {
                    for &z in depth_points {
                        let v = self.eval([x1 + shift[0], x2 + shift[1], z]);
                        if z >= self.support_top && v.iter().any(|c| *c != ZERO) {
                            return Err(Error::InvalidParameter(format!(
                                "source is nonzero at depth {z} above its support top {}",
                                self.support_top
                            )));
                        }
                        values.extend_from_slice(&v);
                    }
                }
            }
            out.insert(j, values)?;
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StripOptions {
    pub threads: usize,
    /// Cell solvers are kept in memory when their estimated size stays below this.
    pub cache_limit_bytes: usize,
    pub gmres: GmresOptions,
}

impl Default for StripOptions {
    fn default() -> Self {
        Self { threads: 1, cache_limit_bytes: 1 << 30, gmres: GmresOptions::default() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DefectReport {
    pub iterations: usize,
    pub converged: bool,
    pub history: Vec<f64>,
    /// Relative residual of (I - k^2 M) U = U_inc at the returned U.
    pub residual: f64,
    pub incident_norm: f64,
    /// Central-cell samples of the total field U.
    #[serde(skip)]
    pub central: Vec<C64>,
}

/// Alpha family of cell solutions together with the data needed to synthesize the strip field.
#[derive(Clone, Debug)]
pub struct StripSolution {
    pub k: f64,
    pub quad: AlphaQuadrature,
    pub grid: TransverseGrid,
    pub truncation: usize,
    pub depth_points: Vec<f64>,
    pub depth_weights: Vec<f64>,
    pub loads: Vec<ModalField>,
    pub family: Vec<CellSolution>,
    /// L2 norm of the source over its cells.
    pub source_norm: f64,
    pub threads: usize,
    pub defect: Option<DefectReport>,
}

impl StripSolution {
    pub fn n_samples(&self) -> usize {
        self.grid.n * self.grid.n * self.depth_points.len() * 3
    }

    /// Samples of the synthesized field on cell `j`, in the source sample layout.
    pub fn cell_samples(&self, j: [i32; 2]) -> Vec<C64> {
        let n = self.n_samples();
        block_sum(self.quad.len(), n, self.threads, |q| {
            let a = self.quad.nodes[q];
            let phase =
                C64::from_polar(self.quad.weights[q], -2.0 * PI * (a[0] * j[0] as f64 + a[1] * j[1] as f64));
            let values = self.family[q].modal_values(&self.depth_points);
            let mut s = modal_synthesis(self.grid, &values, a, self.truncation);
            s.iter_mut().for_each(|v| *v *= phase);
            Ok(s)
        })
        .expect("synthesis has no failure path")
    }

    /// Field at a strip point above the layer, by quadrature over the per-alpha extensions.
    pub fn extend_field(&self, x: Point) -> Result<[C64; 3]> {
        let mut out = [ZERO; 3];
        for (sol, w) in self.family.iter().zip(&self.quad.weights) {
            let v = sol.extend(x)?;
            for c in 0..3 {
                out[c] += *w * v[c];
            }
        }
        Ok(out)
    }

    /// Quadrature value of the weighted norm: H(curl) part plus the singular trace weights.
    pub fn weighted_norm(&self) -> f64 {
        let mut acc = 0.0;
        for (sol, w) in self.family.iter().zip(&self.quad.weights) {
            let mut weighted = 0.0;
            for m in 0..sol.layout.n_modes {
                let b = sol.modes.beta_j(m).norm();
                weighted += match sol.singular_entry(m) {
                    Some(s) => 2.0 * PI * b * s.core.norm_sqr(),
                    None => {
                        let a = sol.modes.alpha_j(m);
                        let phi = sol.trace.0[m];
                        let dot = (phi[0] * a[0] + phi[1] * a[1]).norm_sqr();
                        if dot == 0.0 {
                            0.0
                        } else {
                            dot / b
                        }
                    }
                };
            }
            acc += w * (sol.hcurl_norm_sq() + weighted);
        }
        acc.sqrt()
    }

    /// weighted_norm / source_norm.
    pub fn bound_ratio(&self) -> f64 {
        if self.source_norm == 0.0 {
            0.0
        } else {
            self.weighted_norm() / self.source_norm
        }
    }

    pub fn is_zero(&self) -> bool {
        self.family.iter().all(|s| s.coeffs.iter().all(|v| *v == ZERO))
    }
}

/// Sum of `f(q)` over q in 0..n in fixed blocks, evaluated on up to `threads` workers.
fn block_sum(
    n: usize,
    len: usize,
    threads: usize,
    f: impl Fn(usize) -> Result<Vec<C64>> + Sync,
) -> Result<Vec<C64>> {
    let blocks: Vec<std::ops::Range<usize>> =
        (0..n.div_ceil(BLOCK)).map(|b| b * BLOCK..((b + 1) * BLOCK).min(n)).collect();
    let partials = parallel_map(blocks.len(), threads, |b| {
        let mut acc = vec![ZERO; len];
        for q in blocks[b].clone() {
            for (a, v) in acc.iter_mut().zip(f(q)?) {
                *a += v;
            }
        }
        Ok(acc)
    })?;
    let mut out = vec![ZERO; len];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    Ok(out)
}

/// Ordered map over 0..n on up to `threads` scoped workers.
pub fn parallel_map<T: Send>(n: usize, threads: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let threads = threads.max(1).min(n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(threads);
    let f = &f;
    let results: Vec<Result<Vec<T>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| scope.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Result<Vec<T>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Solver for the strip problem over a fixed alpha quadrature.
pub struct StripSolver {
    pub disc: Discretization,
    pub samples: MediumSamples,
    pub k: f64,
    pub quad: AlphaQuadrature,
    pub cutoff_tol: f64,
    pub options: StripOptions,
    depth_weights: Vec<f64>,
    solvers: Option<Vec<CellSolver>>,
}

impl StripSolver {
    pub fn new(
        disc: &Discretization,
        medium: &PeriodicMedium,
        k: f64,
        quad: AlphaQuadrature,
        cutoff_tol: f64,
        options: StripOptions,
    ) -> Result<Self> {
        if (medium.height - disc.height).abs() > 1e-12 * disc.height {
            return Err(Error::InvalidParameter(format!(
                "medium height {} differs from the discretization height {}",
                medium.height, disc.height
            )));
        }
        let rule = disc.depth_rule();
        let depth_points: Vec<f64> = rule.iter().map(|p| p.0).collect();
        let samples = MediumSamples::new(medium, disc.grid, &depth_points, 2 * disc.truncation)?;
        let mut out = Self {
            disc: disc.clone(),
            samples,
            k,
            quad,
            cutoff_tol,
            options,
            depth_weights: rule.iter().map(|p| p.1).collect(),
            solvers: None,
        };
        if out.estimated_cache_bytes() <= options.cache_limit_bytes {
            let solvers = parallel_map(out.quad.len(), options.threads, |q| out.build_solver(q))?;
            out.solvers = Some(solvers);
        }
        Ok(out)
    }

    /// Rough size of all cached factorizations.
    pub fn estimated_cache_bytes(&self) -> usize {
        let nm = self.disc.n_modes();
        let width = if self.samples.laterally_constant { 13 } else { 3 * (5 * nm - 1) + 1 };
        // operator plus factors, complex entries
        self.quad.len() * self.disc.n_dofs() * width * 2 * 16
    }

    pub fn is_cached(&self) -> bool {
        self.solvers.is_some()
    }

    fn build_solver(&self, q: usize) -> Result<CellSolver> {
        let alpha = QuasiPeriodicity::new(self.quad.nodes[q])?;
        CellSolver::new(&self.disc, &self.samples, self.k, alpha, self.cutoff_tol)
    }

    fn with_solver<R>(&self, q: usize, f: impl FnOnce(&CellSolver) -> Result<R>) -> Result<R> {
        let alpha = self.quad.nodes[q];
        match &self.solvers {
            Some(s) => f(&s[q]),
            None => f(&self.build_solver(q)?),
        }
        .map_err(|e| match e {
            Error::AtAlpha { .. } => e,
            other => other.at_alpha(alpha),
        })
    }

    pub fn depth_points(&self) -> Vec<f64> {
        self.disc.depth_points()
    }

    /// Energy identity of node `q` for a family member `sol`, pairing with the load `load`.
    pub fn energy_report(&self, q: usize, sol: &CellSolution, load: &ModalField) -> Result<EnergyReport> {
        self.with_solver(q, |s| Ok(energy_identity_check(s, sol, &s.load(load)?)))
    }

    fn n_samples(&self) -> usize {
        self.disc.grid.n * self.disc.grid.n * self.disc.n_depth_points() * 3
    }

    fn solve_loads(&self, loads: &[ModalField]) -> Result<Vec<CellSolution>> {
        parallel_map(loads.len(), self.options.threads, |q| self.with_solver(q, |s| s.solve(&loads[q])))
    }

    fn source_norm(&self, field: &CellIndexedField) -> f64 {
        let n = self.disc.grid.n;
        let cell = (2.0 * PI / n as f64).powi(2);
        let nd = self.depth_weights.len();
        let mut acc = 0.0;
        for values in field.cells.values() {
            for (i, v) in values.iter().enumerate() {
                acc += cell * self.depth_weights[(i / 3) % nd] * v.norm_sqr();
            }
        }
        acc.sqrt()
    }

    fn package(&self, loads: Vec<ModalField>, family: Vec<CellSolution>, source_norm: f64) -> StripSolution {
        StripSolution {
            k: self.k,
            quad: self.quad.clone(),
            grid: self.disc.grid,
            truncation: self.disc.truncation,
            depth_points: self.depth_points(),
            depth_weights: self.depth_weights.clone(),
            loads,
            family,
            source_norm,
            threads: self.options.threads,
            defect: None,
        }
    }

    /// Transforms the source, solves every cell problem of the quadrature and keeps the family.
    pub fn solve_periodic(&self, source: &SourceSpec) -> Result<StripSolution> {
        let field = source.sample(self.disc.grid, &self.depth_points())?;
        let nd = self.disc.n_depth_points();
        let loads: Vec<ModalField> = self
            .quad
            .nodes
            .iter()
            .map(|&a| modal_transform(self.disc.grid, nd, &bloch_forward(&field, a), a, self.disc.truncation))
            .collect();
        let family = self.solve_loads(&loads)?;
        Ok(self.package(loads, family, self.source_norm(&field)))
    }

    /// Samples of q on the central cell, one per transverse/depth sample point.
    pub fn defect_samples(&self, defect: &DefectPerturbation) -> Vec<C64> {
        let xs = self.disc.grid.points();
        let zs = self.depth_points();
        let mut out = Vec::with_capacity(xs.len() * xs.len() * zs.len());
        for &x1 in &xs {
            for &x2 in &xs {
                for &z in &zs {
                    out.push(defect.eval([x1, x2, z]));
                }
            }
        }
        out
    }

    fn multiply(q: &[C64], u: &[C64], factor: f64) -> Vec<C64> {
        u.iter().enumerate().map(|(i, v)| q[i / 3] * v * factor).collect()
    }

    /// M U = sum_q w_q [L_alpha (q U)] on the central cell.
    pub fn apply_coupling(&self, q: &[C64], u: &[C64]) -> Result<Vec<C64>> {
        let qu = Self::multiply(q, u, 1.0);
        let nd = self.disc.n_depth_points();
        let (grid, m) = (self.disc.grid, self.disc.truncation);
        let points = self.depth_points();
        block_sum(self.quad.len(), self.n_samples(), self.options.threads, |i| {
            let a = self.quad.nodes[i];
            let load = modal_transform(grid, nd, &qu, a, m);
            let sol = self.with_solver(i, |s| s.solve(&load))?;
            let mut out = modal_synthesis(grid, &sol.modal_values(&points), a, m);
            let w = self.quad.weights[i];
            out.iter_mut().for_each(|v| *v *= w);
            Ok(out)
        })
    }

    /// Solves the perturbed strip problem through the central-cell fixed point
    /// (I - k^2 M) U = U_inc and re-solves the family with the defect load added.
    pub fn solve_perturbed(&self, source: &SourceSpec, defect: &DefectPerturbation) -> Result<StripSolution> {
        let periodic = self.solve_periodic(source)?;
        self.perturb(periodic, defect)
    }

    /// Perturbed solution starting from an already computed periodic one.
    pub fn perturb(&self, periodic: StripSolution, defect: &DefectPerturbation) -> Result<StripSolution> {
        if defect.is_none() {
            return Ok(periodic);
        }
        let q = self.defect_samples(defect);
        if q.iter().all(|v| *v == ZERO) {
            return Ok(periodic);
        }
        let incident = periodic.cell_samples([0, 0]);
        let k2 = self.k * self.k;
        let mut failure: Option<Error> = None;
        let outcome = gmres(
            |u| match self.apply_coupling(&q, u) {
                Ok(mu) => u.iter().zip(mu).map(|(a, b)| a - k2 * b).collect(),
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![ZERO; u.len()]
                }
            },
            &incident,
            self.options.gmres,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        let incident_norm = norm2(&incident);
        let final_residual = outcome.history.last().copied().unwrap_or(0.0);
        if !outcome.converged {
            return Err(Error::NoConvergence {
                iterations: outcome.iterations,
                residual: final_residual,
                history: outcome.history,
            });
        }
        let u = outcome.solution;
        let extra = Self::multiply(&q, &u, k2);
        let nd = self.disc.n_depth_points();
        let mut loads = periodic.loads.clone();
        for (load, a) in loads.iter_mut().zip(&self.quad.nodes) {
            let add = modal_transform(self.disc.grid, nd, &extra, *a, self.disc.truncation);
            if !add.is_zero() {
                load.add_assign(&add);
            }
        }
        let family = self.solve_loads(&loads)?;
        let mut out = self.package(loads, family, periodic.source_norm);
        out.defect = Some(DefectReport {
            iterations: outcome.iterations,
            converged: true,
            history: outcome.history,
            residual: final_residual,
            incident_norm,
            central: u,
        });
        Ok(out)
    }

    /// First-order Born approximation U_inc + k^2 M U_inc of the central-cell field.
    pub fn born_approximation(&self, periodic: &StripSolution, defect: &DefectPerturbation) -> Result<Vec<C64>> {
        let q = self.defect_samples(defect);
        let incident = periodic.cell_samples([0, 0]);
        let sums = born_series(|u| self.apply_coupling(&q, u), &incident, self.k * self.k, 1)?;
        Ok(sums.into_iter().last().expect("two partial sums"))
    }
}
