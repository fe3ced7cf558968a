//! Per-alpha solver object and the discrete solution it returns.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use super::assembly::assemble_regular;
use super::operator::{solve_smw, DofLayout, FactoredOperator, RankUpdate, RegularOperator, SmwFactors};
use super::{load_vector, shape_curl, Discretization, ModalField, E1, E2, E3};
use crate::dtn::{DtnMultipliers, TraceCoefficients};
use crate::error::{Error, Result};
use crate::lattice_modes::{classify, CutoffClassification, ModeIndex, ModeSet, QuasiPeriodicity, DEFAULT_DENSE_FRACTION};
use crate::linalg::{inverse_norm1_estimate, norm2};
use crate::media::MediumSamples;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolvePath {
    /// Plain factorization of S (no singular modes).
    Regular,
    /// Rank-update formula around S.
    RankUpdate,
    /// Factorization of S + Z D Z^*.
    Direct,
}

/// Data of one singular mode after the solve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SingularAmplitude {
    pub position: usize,
    pub mode: ModeIndex,
    pub beta: C64,
    /// Core coefficient c with Z^* u = D^{-1} c.
    pub core: C64,
    /// alpha_j . u_T at the top.
    pub functional: C64,
}

impl SingularAmplitude {
    /// Vertical amplitude of the extension, alpha_j . u_T / beta_j, from the core coefficient.
    pub fn vertical_amplitude(&self) -> C64 {
        I * (2.0 * PI).sqrt() * self.core
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditioningReport {
    /// 1-norm condition estimate of S.
    pub regular: f64,
    /// Condition number of the core matrix D^{-1} + Z^* S^{-1} Z, if present.
    pub core: Option<f64>,
    /// Condition estimate of S + Z D Z^*; absent at exact cutoff.
    pub direct: Option<f64>,
}

impl ConditioningReport {
    pub fn rank_update_path(&self) -> f64 {
        self.core.map_or(self.regular, |c| self.regular.max(c))
    }
}

#[derive(Clone, Debug)]
pub struct CellSolution {
    pub modes: ModeSet,
    pub layout: DofLayout,
    pub height: f64,
    pub coeffs: Vec<C64>,
    pub trace: TraceCoefficients,
    pub singular: Vec<SingularAmplitude>,
    /// Relative residual of the discrete system.
    pub residual: f64,
    pub path: SolvePath,
}

impl CellSolution {
    pub fn h(&self) -> f64 {
        self.height / self.layout.n_elems as f64
    }

    /// Coefficients of mode position `m` as (E1, E2, E3) at depth `z` in [0, R].
    pub fn mode_value(&self, m: usize, z: f64) -> [C64; 3] {
        let h = self.h();
        let n = self.layout.n_elems;
        let e = ((z / h).floor().max(0.0) as usize).min(n - 1);
        let t = (z - e as f64 * h) / h;
        let at = |local: usize| self.coeffs[self.layout.global(m, local)];
        let (lo1, lo2) = if e == 0 { (ZERO, ZERO) } else { (at(3 * (e - 1) + E1), at(3 * (e - 1) + E2)) };
        let (hi1, hi2) = (at(3 * e + E1), at(3 * e + E2));
        [lo1 * (1.0 - t) + hi1 * t, lo2 * (1.0 - t) + hi2 * t, at(3 * e + E3)]
    }

    pub fn modal_values(&self, points: &[f64]) -> ModalField {
        ModalField::from_fn(self.layout.n_modes, points, |m, z| self.mode_value(m, z))
    }

    pub fn singular_entry(&self, m: usize) -> Option<&SingularAmplitude> {
        self.singular.iter().find(|s| s.position == m)
    }

    /// Vertical amplitude of mode `m` in the region above the layer.
    pub fn vertical_amplitude(&self, m: usize) -> Result<C64> {
        if let Some(s) = self.singular_entry(m) {
            return Ok(s.vertical_amplitude());
        }
        let b = self.modes.beta_j(m);
        let a = self.modes.alpha_j(m);
        let phi = self.trace.0[m];
        let dot = phi[0] * a[0] + phi[1] * a[1];
        if b == ZERO {
            if dot == ZERO {
                return Ok(ZERO);
            }
            return Err(Error::Cutoff { mode: self.modes.modes()[m] });
        }
        Ok(dot / b)
    }

    /// Modal field above the layer: (E_T, E_3) e^{i beta (x3 - R)} for mode `m`.
    pub fn extended_mode(&self, m: usize, x3: f64) -> Result<[C64; 3]> {
        if x3 < self.height {
            return Err(Error::InvalidParameter(format!("extension needs x3 >= R, got {x3}")));
        }
        let phase = (I * self.modes.beta_j(m) * (x3 - self.height)).exp();
        let phi = self.trace.0[m];
        Ok([phi[0] * phase, phi[1] * phase, self.vertical_amplitude(m)? * phase])
    }

    /// Physical field at a point above the layer in the reference cell.
    pub fn extend(&self, x: [f64; 3]) -> Result<[C64; 3]> {
        let mut out = [ZERO; 3];
        for m in 0..self.layout.n_modes {
            let a = self.modes.alpha_j(m);
            let phase = C64::from_polar(1.0, -(a[0] * x[0] + a[1] * x[1]));
            let v = self.extended_mode(m, x[2])?;
            for c in 0..3 {
                out[c] += v[c] * phase;
            }
        }
        Ok(out)
    }

    /// Physical L2 norm over the cell (-pi, pi)^2 x (0, R), squared.
    pub fn l2_norm_sq(&self) -> f64 {
        let h = self.h();
        let mut acc = 0.0;
        for m in 0..self.layout.n_modes {
            let mut prev = [ZERO; 2];
            for e in 0..self.layout.n_elems {
                let at = |local: usize| self.coeffs[self.layout.global(m, local)];
                let next = [at(3 * e + E1), at(3 * e + E2)];
                for c in 0..2 {
                    let (a, b) = (prev[c], next[c]);
                    acc += h / 3.0 * (a.norm_sqr() + (a * b.conj()).re + b.norm_sqr());
                }
                acc += h * at(3 * e + E3).norm_sqr();
                prev = next;
            }
        }
        acc * 4.0 * PI * PI
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Squared H(curl) norm over the cell.
    pub fn hcurl_norm_sq(&self) -> f64 {
        let h = self.h();
        let rule = crate::gauss::mapped(2, 0.0, h);
        let mut acc = 0.0;
        for m in 0..self.layout.n_modes {
            let a = self.modes.alpha_j(m);
            for e in 0..self.layout.n_elems {
                for &(zl, w) in &rule {
                    let (shapes, count) = super::element_shapes(e, e as f64 * h + zl, h);
                    let mut curl = [ZERO; 3];
                    for s in &shapes[..count] {
                        let c = self.coeffs[self.layout.global(m, s.local)];
                        let sc = shape_curl(s, a);
                        for i in 0..3 {
                            curl[i] += c * sc[i];
                        }
                    }
                    let curl_sq: f64 = curl.iter().map(|v| v.norm_sqr()).sum();
                    acc += w * curl_sq;
                }
            }
        }
        acc * 4.0 * PI * PI + self.l2_norm_sq()
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coeff_norm(&self) -> f64 {
        norm2(&self.coeffs)
    }
}

/// Assembled and factored solver for one quasi-periodicity.
#[derive(Clone, Debug)]
pub struct CellSolver {
    pub disc: Discretization,
    pub modes: ModeSet,
    pub classification: CutoffClassification,
    pub k: f64,
    operator: RegularOperator,
    factored: FactoredOperator,
    update: RankUpdate,
    smw: Option<SmwFactors>,
}

impl CellSolver {
    pub fn new(
        disc: &Discretization,
        samples: &MediumSamples,
        k: f64,
        alpha: QuasiPeriodicity,
        cutoff_tol: f64,
    ) -> Result<Self> {
        let modes = ModeSet::new(k, alpha, disc.truncation);
        let cls = classify(&modes, cutoff_tol, DEFAULT_DENSE_FRACTION)?;
        Self::with_classification(disc, samples, k, modes, cls)
    }

    pub fn with_classification(
        disc: &Discretization,
        samples: &MediumSamples,
        k: f64,
        modes: ModeSet,
        cls: CutoffClassification,
    ) -> Result<Self> {
        let alpha = modes.alpha().value();
        let wrap = |e: Error| e.at_alpha(alpha);
        let operator = assemble_regular(disc, samples, &modes, &cls, k).map_err(wrap)?;
        let factored = operator.factor().map_err(wrap)?;
        let update = RankUpdate::new(disc.layout(), &modes, &cls);
        let smw = SmwFactors::new(&factored, &update).map_err(wrap)?;
        Ok(Self { disc: disc.clone(), modes, classification: cls, k, operator, factored, update, smw })
    }

    pub fn alpha(&self) -> [f64; 2] {
        self.modes.alpha().value()
    }

    pub fn operator(&self) -> &RegularOperator {
        &self.operator
    }

    pub fn rank_update(&self) -> &RankUpdate {
        &self.update
    }

    pub fn multipliers(&self) -> DtnMultipliers {
        DtnMultipliers::new(&self.modes, &self.classification)
    }

    pub fn load(&self, load: &ModalField) -> Result<Vec<C64>> {
        load_vector(&self.disc, load)
    }

    pub fn solve(&self, load: &ModalField) -> Result<CellSolution> {
        self.solve_rhs(&self.load(load)?)
    }

    /// Rank-update solve of the discrete system with right-hand side `rhs`.
    pub fn solve_rhs(&self, rhs: &[C64]) -> Result<CellSolution> {
        let (u, c) = solve_smw(&self.factored, &self.update, self.smw.as_ref(), rhs)?;
        let path = if self.update.rank() == 0 { SolvePath::Regular } else { SolvePath::RankUpdate };
        Ok(self.package(u, c, rhs, path))
    }

    /// Factorization of S + Z D Z^*; fails at exact cutoff.
    pub fn solve_direct(&self, load: &ModalField) -> Result<CellSolution> {
        let rhs = self.load(load)?;
        if self.update.rank() == 0 {
            let u = self.factored.solve(&rhs);
            return Ok(self.package(u, vec![], &rhs, SolvePath::Regular));
        }
        let full = self.update.added_to(&self.operator)?;
        let u = full.factor()?.solve(&rhs);
        let zu = self.update.z_star(&u);
        let c: Vec<C64> = zu.iter().zip(&self.update.d).map(|(v, d)| v * d.unwrap_or(ZERO)).collect();
        Ok(self.package(u, c, &rhs, SolvePath::Direct))
    }

    /// Solves B^H v = rhs with B = S + Z D Z^*, using the rank-update formula.
    pub fn solve_adjoint(&self, rhs: &[C64]) -> Result<Vec<C64>> {
        let mut v = self.factored.solve_adjoint(rhs);
        let r = self.update.rank();
        if r == 0 {
            return Ok(v);
        }
        // B^H = S^H + Z D^H Z^*.
        let s_inv_z: Vec<Vec<C64>> = (0..r)
            .map(|k| {
                let mut e = vec![ZERO; r];
                e[k] = C64::new(1.0, 0.0);
                self.factored.solve_adjoint(&self.update.z_times(&e))
            })
            .collect();
        let mut core = nalgebra::DMatrix::<C64>::zeros(r, r);
        for (col, w) in s_inv_z.iter().enumerate() {
            let zs = self.update.z_star(w);
            for row in 0..r {
                core[(row, col)] = zs[row];
            }
            core[(col, col)] += self.update.d_inv[col].conj();
        }
        let rhs_core = nalgebra::DVector::from_vec(self.update.z_star(&v));
        let c = core.lu().solve(&rhs_core).ok_or(Error::SingularCapacitance(0.0))?;
        for (k, ck) in c.iter().enumerate() {
            for (vi, wi) in v.iter_mut().zip(&s_inv_z[k]) {
                *vi -= ck * wi;
            }
        }
        Ok(v)
    }

    /// B u with the update applied through its core coefficients: S u + Z c.
    pub fn apply_split(&self, u: &[C64], c: &[C64]) -> Vec<C64> {
        let mut out = self.operator.apply(u);
        if !c.is_empty() {
            for (o, z) in out.iter_mut().zip(self.update.z_times(c)) {
                *o += z;
            }
        }
        out
    }

    /// B u; fails at exact cutoff.
    pub fn apply_full(&self, u: &[C64]) -> Result<Vec<C64>> {
        let zu = self.update.z_star(u);
        let mut c = Vec::with_capacity(zu.len());
        for (s, v) in zu.iter().enumerate() {
            c.push(v * self.update.d[s].ok_or(Error::Cutoff { mode: self.update.mode_ids[s] })?);
        }
        Ok(self.apply_split(u, &c))
    }

    pub fn conditioning(&self) -> Result<ConditioningReport> {
        let regular = self.operator.norm1() * self.factored.inverse_norm1();
        let core = self.smw.as_ref().map(|f| f.core_condition());
        let direct = if self.update.rank() == 0 {
            Some(regular)
        } else if self.update.d.iter().all(|d| d.is_some()) {
            let full = self.update.added_to(&self.operator)?;
            let lu = full.factor()?;
            let inv = inverse_norm1_estimate(self.update.layout.len(), |b| lu.solve(b), |b| lu.solve_adjoint(b));
            Some(full.norm1() * inv)
        } else {
            None
        };
        Ok(ConditioningReport { regular, core, direct })
    }

    fn package(&self, u: Vec<C64>, c: Vec<C64>, rhs: &[C64], path: SolvePath) -> CellSolution {
        let layout = self.disc.layout();
        let res = self.apply_split(&u, &c);
        let diff: Vec<C64> = res.iter().zip(rhs).map(|(a, b)| a - b).collect();
        let scale = norm2(rhs);
        let residual = if scale == 0.0 { norm2(&diff) } else { norm2(&diff) / scale };
        let trace = TraceCoefficients(
            (0..layout.n_modes).map(|m| [u[layout.top(m, 0)], u[layout.top(m, 1)]]).collect(),
        );
        let singular = self
            .update
            .modes
            .iter()
            .zip(&c)
            .map(|(&m, &core)| {
                let a = self.modes.alpha_j(m);
                let phi = trace.0[m];
                SingularAmplitude {
                    position: m,
                    mode: self.modes.modes()[m],
                    beta: self.modes.beta_j(m),
                    core,
                    functional: phi[0] * a[0] + phi[1] * a[1],
                }
            })
            .collect();
        CellSolution {
            modes: self.modes.clone(),
            layout,
            height: self.disc.height,
            coeffs: u,
            trace,
            singular,
            residual,
            path,
        }
    }
}
