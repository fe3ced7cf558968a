//! A-posteriori checks on cell solutions: gauge residual, energy identity, coercivity.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::assembly::{assemble_form, FormKind};
use super::{CellSolution, CellSolver, Discretization, ModalField, RegularOperator};
use crate::dtn::DtnMultipliers;
use crate::error::{Error, Result};
use crate::lattice_modes::ModeSet;
use crate::linalg::dot;
use crate::media::MediumSamples;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Dual norm of w -> int (k^2 eps u + f) . grad conj(w) over element bubbles w = b(x3) e^{-i alpha_l . x},
/// the weak form of div(eps u) = -k^-2 div f.
pub fn divergence_residual(
    sol: &CellSolution,
    disc: &Discretization,
    samples: &MediumSamples,
    load: &ModalField,
    k: f64,
) -> f64 {
    let layout = sol.layout;
    let h = disc.h();
    let rule = disc.depth_rule();
    let modes = sol.modes.modes();
    let k2 = k * k;
    let mut total = 0.0;
    for e in 0..layout.n_elems {
        let z0 = e as f64 * h;
        let mut element_res = vec![ZERO; layout.n_modes];
        for gi in 0..disc.gauss_points {
            let g = e * disc.gauss_points + gi;
            let (z, w) = rule[g];
            let t = (z - z0) / h;
            let bubble = 4.0 * t * (1.0 - t);
            let slope = 4.0 * (1.0 - 2.0 * t) / h;
            let values: Vec<[C64; 3]> = (0..layout.n_modes).map(|m| sol.mode_value(m, z)).collect();
            for l in 0..layout.n_modes {
                let mut eu = [ZERO; 3];
                for (j, uj) in values.iter().enumerate() {
                    let diff = [modes[j][0] - modes[l][0], modes[j][1] - modes[l][1]];
                    let (eps, _) = samples.coeff(g, diff);
                    if eps == ZERO {
                        continue;
                    }
                    for c in 0..3 {
                        eu[c] += eps * uj[c];
                    }
                }
                let f = load.get(l, g);
                let a = sol.modes.alpha_j(l);
                let grad = [-I * a[0] * bubble, -I * a[1] * bubble, C64::new(slope, 0.0)];
                for c in 0..3 {
                    element_res[l] += w * (k2 * eu[c] + f[c]) * grad[c].conj();
                }
            }
        }
        for (l, r) in element_res.iter().enumerate() {
            let a = sol.modes.alpha_j(l);
            let w_norm_sq = (a[0] * a[0] + a[1] * a[1] + 1.0) * 8.0 * h / 15.0 + 16.0 / (3.0 * h);
            total += r.norm_sqr() / w_norm_sq;
        }
    }
    total.sqrt()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyReport {
    /// a(u, u).
    pub form: C64,
    /// <f, u> = u^H b.
    pub load: C64,
    /// Outgoing flux sum over propagating modes: beta |u_T|^2 + |alpha . u_T|^2 / beta.
    pub flux: f64,
    /// -Im of the volume part of a(u, u).
    pub absorption: f64,
    /// |Im a(u,u) - Im <f,u>| / |<f,u>|.
    pub identity_error: f64,
    /// |Im <f,u> + flux + absorption| / |<f,u>|.
    pub balance_error: f64,
    /// Re <T u, u> <= 0 and Im <T u, u> >= 0.
    pub t_signs_ok: bool,
    /// Re <N u, u> <= 0 and Im <N u, u> <= 0.
    pub n_signs_ok: bool,
}

pub fn energy_identity_check(solver: &CellSolver, sol: &CellSolution, rhs: &[C64]) -> EnergyReport {
    let u = &sol.coeffs;
    let c: Vec<C64> = sol.singular.iter().map(|s| s.core).collect();
    let form = dot(u, &solver.apply_split(u, &c));
    let load = dot(u, rhs);
    let mult = solver.multipliers();
    let (mut t_sum, mut n_sum, mut flux) = (ZERO, ZERO, 0.0);
    for m in 0..sol.layout.n_modes {
        let phi = sol.trace.0[m];
        let phi_sq = phi[0].norm_sqr() + phi[1].norm_sqr();
        t_sum += mult.t[m] * phi_sq;
        let beta = sol.modes.beta_j(m);
        let propagating = beta.im == 0.0 && beta.re > 0.0;
        match (&mult.n[m], sol.singular_entry(m)) {
            (Some(n), _) => {
                let np = [n[0][0] * phi[0] + n[0][1] * phi[1], n[1][0] * phi[0] + n[1][1] * phi[1]];
                n_sum += np[0] * phi[0].conj() + np[1] * phi[1].conj();
                if propagating {
                    let a = sol.modes.alpha_j(m);
                    flux += (phi[0] * a[0] + phi[1] * a[1]).norm_sqr() / beta.re;
                }
            }
            (None, Some(s)) => {
                // (Z^* u)^H D (Z^* u) = conj(2 pi i beta c) c
                let zu = C64::new(0.0, 2.0 * std::f64::consts::PI) * beta * s.core;
                n_sum += zu.conj() * s.core;
                if propagating {
                    flux += 2.0 * std::f64::consts::PI * beta.re * s.core.norm_sqr();
                }
            }
            (None, None) => {}
        }
        if propagating {
            flux += beta.re * phi_sq;
        }
    }
    let boundary = n_sum - t_sum;
    let volume = form - boundary;
    let absorption = -volume.im;
    let scale = load.norm().max(f64::MIN_POSITIVE);
    let tol = 1e-12 * sol.trace.norm_sq().max(1e-300);
    EnergyReport {
        form,
        load,
        flux,
        absorption,
        identity_error: if load == ZERO { (form.im - load.im).abs() } else { (form.im - load.im).abs() / scale },
        balance_error: if load == ZERO {
            (load.im + flux + absorption).abs()
        } else {
            (load.im + flux + absorption).abs() / scale
        },
        t_signs_ok: t_sum.re <= tol && t_sum.im >= -tol,
        n_signs_ok: n_sum.re <= tol && n_sum.im <= tol,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CoercivityReport {
    pub rho: f64,
    /// Smallest generalized Rayleigh quotient of Re a^rho against the H(curl) Gram matrix.
    pub measured_constant: f64,
    pub coercive: bool,
    /// Size of the trial subspace; equal to the number of unknowns when the full space was used.
    pub subspace_dim: usize,
    pub unknowns: usize,
}

/// Lower bound of Re a^rho(u,u) / ||u||^2_{H(curl)} over a random subspace (the whole
/// space when it has at most `subspace_dim` unknowns).
pub fn coercivity_check(
    disc: &Discretization,
    samples: &MediumSamples,
    modes: &ModeSet,
    k: f64,
    rho: f64,
    subspace_dim: usize,
    seed: u64,
) -> Result<CoercivityReport> {
    let mult = DtnMultipliers::unsplit(modes)?;
    let shifted = assemble_form(disc, samples, modes, k, FormKind::Shifted(rho), Some(&mult))?;
    let gram = assemble_form(disc, samples, modes, k, FormKind::Gram, None)?;
    let n = disc.n_dofs();
    let basis: Vec<Vec<C64>> = if n <= subspace_dim {
        (0..n)
            .map(|i| {
                let mut e = vec![ZERO; n];
                e[i] = C64::new(1.0, 0.0);
                e
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..subspace_dim)
            .map(|_| (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect())
            .collect()
    };
    let p = basis.len();
    let project = |op: &RegularOperator| {
        let images: Vec<Vec<C64>> = basis.iter().map(|v| op.apply(v)).collect();
        DMatrix::from_fn(p, p, |r, c| dot(&basis[r], &images[c]))
    };
    let a = project(&shifted);
    let hermitian = (&a + a.adjoint()) * C64::new(0.5, 0.0);
    let g = project(&gram);
    let g = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let chol = g.cholesky().ok_or_else(|| Error::Assembly("Gram matrix is not positive definite".into()))?;
    let l = chol.l();
    let l_inv = l.clone().try_inverse().ok_or_else(|| Error::Assembly("Gram factor is singular".into()))?;
    let reduced = &l_inv * hermitian * l_inv.adjoint();
    let reduced = (&reduced + reduced.adjoint()) * C64::new(0.5, 0.0);
    let eig = reduced.symmetric_eigen();
    let measured = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(CoercivityReport { rho, measured_constant: measured, coercive: measured > 0.0, subspace_dim: p, unknowns: n })
}
