//! Transparent boundary multipliers on top-boundary trace coefficients.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::lattice_modes::{beta, CutoffClassification, ModeSet};

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub type Mat2 = [[C64; 2]; 2];

/// Tangential trace coefficients, one complex 2-vector per mode of the box.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceCoefficients(pub Vec<[C64; 2]>);

impl TraceCoefficients {
    pub fn zeros(n: usize) -> Self {
        Self(vec![[C64::new(0.0, 0.0); 2]; n])
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v[0].norm_sqr() + v[1].norm_sqr()).sum()
    }
}

/// Modal pairing sum_j a_j . conj(b_j).
pub fn pairing(a: &TraceCoefficients, b: &TraceCoefficients) -> C64 {
    a.0.iter().zip(&b.0).map(|(x, y)| x[0] * y[0].conj() + x[1] * y[1].conj()).sum()
}

#[derive(Clone, Debug)]
pub struct DtnMultipliers {
    pub t: Vec<C64>,
    /// Rank-one multipliers of the regular modes; `None` for singular modes.
    pub n: Vec<Option<Mat2>>,
    pub alpha_j: Vec<[f64; 2]>,
    pub beta_j: Vec<C64>,
}

fn rank_one(alpha_j: [f64; 2], beta_j: C64) -> Mat2 {
    let f = -I / beta_j;
    [
        [f * alpha_j[0] * alpha_j[0], f * alpha_j[0] * alpha_j[1]],
        [f * alpha_j[1] * alpha_j[0], f * alpha_j[1] * alpha_j[1]],
    ]
}

impl DtnMultipliers {
    /// Multipliers with the singular modes of `cls` removed from the rank-one part.
    pub fn new(modes: &ModeSet, cls: &CutoffClassification) -> Self {
        let n_modes = modes.len();
        let mut out = Self {
            t: Vec::with_capacity(n_modes),
            n: Vec::with_capacity(n_modes),
            alpha_j: Vec::with_capacity(n_modes),
            beta_j: Vec::with_capacity(n_modes),
        };
        for m in 0..n_modes {
            let (a, b) = (modes.alpha_j(m), modes.beta_j(m));
            out.t.push(I * b);
            out.n.push(if cls.is_singular(m) { None } else { Some(rank_one(a, b)) });
            out.alpha_j.push(a);
            out.beta_j.push(b);
        }
        out
    }

    /// Multipliers with every mode regular; fails if a mode sits exactly at cutoff.
    pub fn unsplit(modes: &ModeSet) -> Result<Self> {
        let mut out = Self { t: vec![], n: vec![], alpha_j: vec![], beta_j: vec![] };
        for m in 0..modes.len() {
            let (a, b) = (modes.alpha_j(m), modes.beta_j(m));
            if b == C64::new(0.0, 0.0) {
                return Err(Error::Cutoff { mode: modes.modes()[m] });
            }
            out.t.push(I * b);
            out.n.push(Some(rank_one(a, b)));
            out.alpha_j.push(a);
            out.beta_j.push(b);
        }
        Ok(out)
    }

    pub fn is_singular(&self, m: usize) -> bool {
        self.n[m].is_none()
    }
}

pub fn t_apply(mult: &DtnMultipliers, phi: &TraceCoefficients) -> TraceCoefficients {
    TraceCoefficients(mult.t.iter().zip(&phi.0).map(|(t, p)| [t * p[0], t * p[1]]).collect())
}

pub fn n_apply_regular(mult: &DtnMultipliers, phi: &TraceCoefficients) -> TraceCoefficients {
    TraceCoefficients(
        mult.n
            .iter()
            .zip(&phi.0)
            .map(|(n, p)| match n {
                Some(n) => [n[0][0] * p[0] + n[0][1] * p[1], n[1][0] * p[0] + n[1][1] * p[1]],
                None => [C64::new(0.0, 0.0); 2],
            })
            .collect(),
    )
}

/// alpha_j . u_j for one mode.
pub fn singular_functional(alpha_j: [f64; 2], u_j: [C64; 2]) -> C64 {
    u_j[0] * alpha_j[0] + u_j[1] * alpha_j[1]
}

/// Diagonal of D: -i / (2 pi beta_j) for the singular modes.
pub fn d_matrix(modes: &ModeSet, cls: &CutoffClassification) -> Result<Vec<C64>> {
    cls.singular
        .iter()
        .map(|&m| {
            let b = modes.beta_j(m);
            if b == C64::new(0.0, 0.0) {
                Err(Error::Cutoff { mode: modes.modes()[m] })
            } else {
                Ok(-I / (2.0 * PI * b))
            }
        })
        .collect()
}

/// Diagonal of D^{-1} = 2 pi i beta_j, continued by 0 at exact cutoff.
pub fn d_inverse(modes: &ModeSet, cls: &CutoffClassification) -> Vec<C64> {
    cls.singular.iter().map(|&m| 2.0 * PI * I * modes.beta_j(m)).collect()
}

/// Multipliers of the whole-space operators at a transverse frequency xi.
pub fn continuous_multipliers(k: f64, xi: [f64; 2]) -> Result<(C64, Mat2)> {
    let b = beta(k, xi);
    if b == C64::new(0.0, 0.0) {
        return Err(Error::Cutoff { mode: [0, 0] });
    }
    Ok((I * b, rank_one(xi, b)))
}

/// sum_j (1 + |alpha_j|^2)^s |phi_j|^2.
pub fn sobolev_norm_sq(mult: &DtnMultipliers, phi: &TraceCoefficients, s: f64) -> f64 {
    mult.alpha_j
        .iter()
        .zip(&phi.0)
        .map(|(a, p)| (1.0 + a[0] * a[0] + a[1] * a[1]).powf(s) * (p[0].norm_sqr() + p[1].norm_sqr()))
        .sum()
}
