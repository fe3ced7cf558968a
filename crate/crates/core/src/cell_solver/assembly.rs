//! Galerkin assembly of the cell form and of the load vector.

use num_complex::Complex64 as C64;

use super::operator::RegularOperator;
use super::{element_shapes, physical_component, shape_curl, Discretization, ModalField};
use crate::dtn::DtnMultipliers;
use crate::error::{Error, Result};
use crate::lattice_modes::{CutoffClassification, ModeSet};
use crate::media::MediumSamples;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Which volume form to assemble. All forms are divided by the cell area (2 pi)^2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum FormKind {
    /// nu curl.curl - k^2 eps
    Production,
    /// nu curl.curl + (rho - k^2 eps)
    Shifted(f64),
    /// H(curl) inner product with unit coefficients
    Gram,
}

impl FormKind {
    fn uses_medium(self) -> bool {
        !matches!(self, FormKind::Gram)
    }
}

pub(crate) fn assemble_form(
    disc: &Discretization,
    samples: &MediumSamples,
    modes: &ModeSet,
    k: f64,
    kind: FormKind,
    boundary: Option<&DtnMultipliers>,
) -> Result<RegularOperator> {
    let layout = disc.layout();
    if modes.len() != layout.n_modes {
        return Err(Error::Assembly(format!("{} modes for a layout of {}", modes.len(), layout.n_modes)));
    }
    if samples.depth_points.len() != disc.n_depth_points() {
        return Err(Error::Assembly("medium samples do not match the depth rule".into()));
    }
    let coupled = kind.uses_medium() && !samples.laterally_constant;
    let mut op = RegularOperator::zeros(layout, coupled);
    let h = disc.h();
    let rule = disc.depth_rule();
    let k2 = k * k;
    let mode_ids = modes.modes();

    for (g, &(z, w)) in rule.iter().enumerate() {
        let e = g / disc.gauss_points;
        let (shapes, count) = element_shapes(e, z, h);
        let shapes = &shapes[..count];
        for l in 0..layout.n_modes {
            let al = modes.alpha_j(l);
            let test_curls: Vec<[C64; 3]> = shapes.iter().map(|s| shape_curl(s, al)).collect();
            let trial_modes: Box<dyn Iterator<Item = usize>> =
                if coupled { Box::new(0..layout.n_modes) } else { Box::new(std::iter::once(l)) };
            for j in trial_modes {
                let diff = [mode_ids[j][0] - mode_ids[l][0], mode_ids[j][1] - mode_ids[l][1]];
                let (curl_coef, mass_coef) = match kind {
                    FormKind::Gram => (ONE, ONE),
                    _ => {
                        let (eps, nu) = samples.coeff(g, diff);
                        let mass = match kind {
                            FormKind::Production => -k2 * eps,
                            FormKind::Shifted(rho) => {
                                -k2 * eps + if diff == [0, 0] { C64::new(rho, 0.0) } else { ZERO }
                            }
                            _ => ZERO,
                        };
                        (nu, mass)
                    }
                };
                if curl_coef == ZERO && mass_coef == ZERO {
                    continue;
                }
                let aj = modes.alpha_j(j);
                for sigma in shapes {
                    let c_sigma = shape_curl(sigma, aj);
                    for (tau, c_tau) in shapes.iter().zip(&test_curls) {
                        let mut v = curl_coef
                            * (c_sigma[0] * c_tau[0].conj() + c_sigma[1] * c_tau[1].conj() + c_sigma[2] * c_tau[2].conj());
                        if sigma.comp == tau.comp {
                            v += mass_coef * (sigma.value * tau.value);
                        }
                        if v != ZERO {
                            op.add(l, tau.local, j, sigma.local, w * v);
                        }
                    }
                }
            }
        }
    }

    if let Some(mult) = boundary {
        add_boundary(&mut op, mult);
    }
    Ok(op)
}

/// Top-boundary rows: n_j - t_j on the tangential trace, n_j omitted for singular modes.
fn add_boundary(op: &mut RegularOperator, mult: &DtnMultipliers) {
    let layout = op.layout();
    for m in 0..layout.n_modes {
        let top = [layout.top(m, 0) % layout.per_mode(), layout.top(m, 1) % layout.per_mode()];
        for r in 0..2 {
            op.add(m, top[r], m, top[r], -mult.t[m]);
            if let Some(n) = &mult.n[m] {
                for c in 0..2 {
                    op.add(m, top[r], m, top[c], n[r][c]);
                }
            }
        }
    }
}

/// Matrix S of the regular part: volume terms, T on every mode, N on the regular modes.
pub fn assemble_regular(
    disc: &Discretization,
    samples: &MediumSamples,
    modes: &ModeSet,
    cls: &CutoffClassification,
    k: f64,
) -> Result<RegularOperator> {
    let mult = DtnMultipliers::new(modes, cls);
    assemble_form(disc, samples, modes, k, FormKind::Production, Some(&mult))
}

/// Load vector of a modal volume source given at the depth sample points.
pub fn load_vector(disc: &Discretization, load: &ModalField) -> Result<Vec<C64>> {
    let layout = disc.layout();
    if load.n_modes != layout.n_modes || load.n_points != disc.n_depth_points() {
        return Err(Error::Assembly(format!(
            "load has {}x{} samples, expected {}x{}",
            load.n_modes,
            load.n_points,
            layout.n_modes,
            disc.n_depth_points()
        )));
    }
    let mut b = vec![ZERO; layout.len()];
    let h = disc.h();
    for (g, &(z, w)) in disc.depth_rule().iter().enumerate() {
        let e = g / disc.gauss_points;
        let (shapes, count) = element_shapes(e, z, h);
        for m in 0..layout.n_modes {
            let f = load.get(m, g);
            for s in &shapes[..count] {
                b[layout.global(m, s.local)] += w * s.value * f[physical_component(s.comp)];
            }
        }
    }
    Ok(b)
}
