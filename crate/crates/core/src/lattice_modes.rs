//! Quasi-periodicities, transverse lattice modes and cutoff detection.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lattice index of a transverse Fourier mode.
pub type ModeIndex = [i32; 2];

/// Fraction of singular modes above which the classification raises its dense-update flag.
pub const DEFAULT_DENSE_FRACTION: f64 = 0.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveParameters {
    k: f64,
    omega: f64,
    eps_plus: f64,
    mu_plus: f64,
}

impl WaveParameters {
    pub fn new(omega: f64, eps_plus: f64, mu_plus: f64) -> Result<Self> {
        for (name, v) in [("omega", omega), ("eps_plus", eps_plus), ("mu_plus", mu_plus)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { k: omega * (eps_plus * mu_plus).sqrt(), omega, eps_plus, mu_plus })
    }

    /// Normalized exterior (eps_plus = mu_plus = 1) so that omega = k.
    pub fn from_wavenumber(k: f64) -> Result<Self> {
        Self::new(k, 1.0, 1.0)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn eps_plus(&self) -> f64 {
        self.eps_plus
    }

    pub fn mu_plus(&self) -> f64 {
        self.mu_plus
    }
}

/// A point of the closed Brillouin cell [-1/2, 1/2]^2.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiPeriodicity([f64; 2]);

impl QuasiPeriodicity {
    pub fn new(alpha: [f64; 2]) -> Result<Self> {
        if alpha.iter().all(|a| a.is_finite() && a.abs() <= 0.5) {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidParameter(format!("alpha {alpha:?} outside [-1/2, 1/2]^2")))
        }
    }

    pub fn zero() -> Self {
        Self([0.0, 0.0])
    }

    pub fn value(&self) -> [f64; 2] {
        self.0
    }
}

/// sqrt(k^2 - |alpha_j|^2) on the branch Im >= 0, Re >= 0 on the real axis.
pub fn beta(k: f64, alpha_j: [f64; 2]) -> C64 {
    let r = alpha_j[0].hypot(alpha_j[1]);
    let t = (k - r) * (k + r);
    if t >= 0.0 {
        C64::new(t.sqrt(), 0.0)
    } else {
        C64::new(0.0, (-t).sqrt())
    }
}

/// Truncated box |j|_inf <= M of transverse modes at a fixed quasi-periodicity.
#[derive(Clone, Debug)]
pub struct ModeSet {
    truncation: usize,
    k: f64,
    alpha: QuasiPeriodicity,
    modes: Vec<ModeIndex>,
    alpha_j: Vec<[f64; 2]>,
    beta_j: Vec<C64>,
}

impl ModeSet {
    pub fn new(k: f64, alpha: QuasiPeriodicity, truncation: usize) -> Self {
        let m = truncation as i32;
        let a = alpha.value();
        let mut modes = Vec::with_capacity((2 * truncation + 1).pow(2));
        for j1 in -m..=m {
            for j2 in -m..=m {
                modes.push([j1, j2]);
            }
        }
        let alpha_j: Vec<[f64; 2]> =
            modes.iter().map(|j| [a[0] + j[0] as f64, a[1] + j[1] as f64]).collect();
        let beta_j = alpha_j.iter().map(|&aj| beta(k, aj)).collect();
        Self { truncation, k, alpha, modes, alpha_j, beta_j }
    }

    pub fn truncation(&self) -> usize {
        self.truncation
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn alpha(&self) -> QuasiPeriodicity {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeIndex] {
        &self.modes
    }

    pub fn alpha_j(&self, m: usize) -> [f64; 2] {
        self.alpha_j[m]
    }

    pub fn beta_j(&self, m: usize) -> C64 {
        self.beta_j[m]
    }

    /// Position of a lattice index inside the box, if present.
    pub fn position(&self, j: ModeIndex) -> Option<usize> {
        let m = self.truncation as i32;
        if j[0].abs() > m || j[1].abs() > m {
            return None;
        }
        let side = 2 * m + 1;
        Some(((j[0] + m) * side + (j[1] + m)) as usize)
    }

    pub fn is_propagating(&self, m: usize) -> bool {
        self.beta_j[m].im == 0.0 && self.beta_j[m].re > 0.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CutoffClassification {
    /// Positions (within the mode box) of the singular modes.
    pub singular: Vec<usize>,
    pub singular_modes: Vec<ModeIndex>,
    pub cutoff_tol: f64,
    /// |k - |alpha_j|| for every mode of the box.
    pub distance: Vec<f64>,
    /// More than the configured fraction of modes is singular.
    pub dense_warning: bool,
    /// A singular circle is tangent to the boundary of the Brillouin cell.
    pub boundary_tangency: bool,
}

impl CutoffClassification {
    pub fn is_singular(&self, m: usize) -> bool {
        self.singular.contains(&m)
    }

    pub fn is_empty(&self) -> bool {
        self.singular.is_empty()
    }
}

pub fn singular_set(
    k: f64,
    alpha: QuasiPeriodicity,
    truncation: usize,
    cutoff_tol: f64,
) -> Result<CutoffClassification> {
    classify(&ModeSet::new(k, alpha, truncation), cutoff_tol, DEFAULT_DENSE_FRACTION)
}

/// Classification of an existing mode box. A mode is singular when it lies strictly
/// inside the tolerance band or exactly on the circle.
pub fn classify(modes: &ModeSet, cutoff_tol: f64, dense_fraction: f64) -> Result<CutoffClassification> {
    if !(cutoff_tol >= 0.0 && cutoff_tol.is_finite()) {
        return Err(Error::InvalidParameter(format!("cutoff tolerance {cutoff_tol}")));
    }
    let k = modes.k();
    let distance: Vec<f64> = (0..modes.len())
        .map(|m| {
            let a = modes.alpha_j(m);
            (k - a[0].hypot(a[1])).abs()
        })
        .collect();
    let singular: Vec<usize> =
        (0..modes.len()).filter(|&m| distance[m] < cutoff_tol || distance[m] == 0.0).collect();
    let singular_modes: Vec<ModeIndex> = singular.iter().map(|&m| modes.modes()[m]).collect();
    let dense_warning = singular.len() as f64 > dense_fraction * modes.len() as f64;
    let band = cutoff_tol.max(1e-12);
    let boundary_tangency = singular_modes.iter().any(|j| {
        (0..2).any(|axis| {
            let other = j[1 - axis];
            other == 0
                && [-0.5, 0.5].iter().any(|s: &f64| ((s + j[axis] as f64).abs() - k).abs() < band)
        })
    });
    Ok(CutoffClassification {
        singular,
        singular_modes,
        cutoff_tol,
        distance,
        dense_warning,
        boundary_tangency,
    })
}

/// (k^2 / 2 pi) max_j (1 + |alpha_j|^2)^(1/2) / |k^2 - |alpha_j|^2|^(1/2) over the box.
pub fn cutoff_constant(k: f64, alpha: QuasiPeriodicity, truncation: usize) -> Result<f64> {
    let modes = ModeSet::new(k, alpha, truncation);
    let mut sup: f64 = 0.0;
    for m in 0..modes.len() {
        let b = modes.beta_j(m).norm();
        if b == 0.0 {
            return Err(Error::Cutoff { mode: modes.modes()[m] });
        }
        let a = modes.alpha_j(m);
        let ratio = (1.0 + a[0] * a[0] + a[1] * a[1]).sqrt() / b;
        sup = sup.max(ratio);
    }
    Ok(k * k / (2.0 * std::f64::consts::PI) * sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn qp(a: [f64; 2]) -> QuasiPeriodicity {
        QuasiPeriodicity::new(a).unwrap()
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta(2.0, [0.0, 0.0]), C64::new(2.0, 0.0));
        assert_eq!(beta(1.0, [1.0, 0.0]), C64::new(0.0, 0.0));
        let b = beta(1.0, [1.25, 0.0]);
        assert!((b - C64::new(0.0, 0.75)).norm() < 1e-15);
    }

    #[test]
    fn wave_parameters_relation() {
        let w = WaveParameters::new(2.0, 2.25, 1.44).unwrap();
        let expected = 2.0 * 2.0 * 2.25 * 1.44;
        assert!((w.k() * w.k() - expected).abs() / expected < 1e-12);
        assert!(WaveParameters::new(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn quasi_periodicity_range() {
        assert!(QuasiPeriodicity::new([0.5, -0.5]).is_ok());
        assert!(QuasiPeriodicity::new([0.51, 0.0]).is_err());
    }

    #[test]
    fn singular_set_examples() {
        let c = singular_set(1.0, qp([0.0, 0.0]), 2, 1e-8).unwrap();
        let mut got = c.singular_modes.clone();
        got.sort();
        assert_eq!(got, vec![[-1, 0], [0, -1], [0, 1], [1, 0]]);

        let c = singular_set(1.5, qp([0.5, 0.0]), 3, 1e-8).unwrap();
        let mut got = c.singular_modes.clone();
        got.sort();
        assert_eq!(got, vec![[-2, 0], [1, 0]]);

        let c = singular_set(0.9, qp([0.1, 0.1]), 2, 1e-8).unwrap();
        assert!(c.is_empty());
        // independent enumeration
        for j1 in -2i32..=2 {
            for j2 in -2i32..=2 {
                let r = ((0.1 + j1 as f64).powi(2) + (0.1 + j2 as f64).powi(2)).sqrt();
                assert!((r - 0.9).abs() > 1e-3);
            }
        }
    }

    #[test]
    fn exact_set_with_zero_tolerance() {
        let c = singular_set(1.0, qp([0.0, 0.0]), 3, 0.0).unwrap();
        assert_eq!(c.singular.len(), 4);
        let c = singular_set(5f64.sqrt(), qp([0.0, 0.0]), 3, 0.0).unwrap();
        // |j|^2 = 5 has the eight points (+-1, +-2), (+-2, +-1)
        assert_eq!(c.singular.len(), 8);
    }

    #[test]
    fn dense_flag_and_tangency() {
        let c = classify(&ModeSet::new(1.0, qp([0.0, 0.0]), 1), 0.5, 0.25).unwrap();
        assert!(c.dense_warning);
        // circle centred at (-1, 0) of radius 0.5 touches the edge alpha_1 = -1/2
        let c = singular_set(0.5, qp([-0.5, 0.0]), 1, 1e-8).unwrap();
        assert!(c.boundary_tangency);
    }

    #[test]
    fn cutoff_constant_examples() {
        let expected = 0.25 / std::f64::consts::PI;
        assert!((cutoff_constant(0.5, qp([0.0, 0.0]), 3).unwrap() - expected).abs() < 1e-15);
        assert!((cutoff_constant(0.5, qp([0.0, 0.0]), 0).unwrap() - expected).abs() < 1e-15);
        assert!(matches!(cutoff_constant(1.0, qp([0.0, 0.0]), 1), Err(Error::Cutoff { .. })));
        // mode (-1, 0) approaches the circle of radius 0.8
        let near = cutoff_constant(0.8, qp([0.2 + 1e-8, 0.0]), 1).unwrap();
        let nearer = cutoff_constant(0.8, qp([0.2 + 1e-10, 0.0]), 1).unwrap();
        assert!(near > 5e2 && nearer > 5.0 * near, "{near} {nearer}");
    }

    #[test]
    fn mode_positions_round_trip() {
        let ms = ModeSet::new(1.3, qp([0.2, -0.1]), 3);
        for (m, &j) in ms.modes().iter().enumerate() {
            assert_eq!(ms.position(j), Some(m));
            let a = ms.alpha_j(m);
            assert_eq!(a, [0.2 + j[0] as f64, -0.1 + j[1] as f64]);
        }
        assert_eq!(ms.position([4, 0]), None);
    }

    proptest! {
        #[test]
        fn beta_squares_back(k in 0.05f64..5.0, a1 in -6.0f64..6.0, a2 in -6.0f64..6.0) {
            let b = beta(k, [a1, a2]);
            let target = k * k - (a1 * a1 + a2 * a2);
            prop_assert!((b * b - target).norm() <= 1e-12 * (k * k + a1 * a1 + a2 * a2));
            prop_assert!(b.im >= 0.0);
            if b.im == 0.0 { prop_assert!(b.re >= 0.0); }
            prop_assert_eq!(b, beta(k, [-a1, -a2]));
        }

        #[test]
        fn beta_continuous_along_radial_paths(k in 0.2f64..3.0, theta in 0.0f64..std::f64::consts::TAU, eps in 1e-12f64..1e-6) {
            let dir = [theta.cos(), theta.sin()];
            let inside = beta(k, [(k - eps) * dir[0], (k - eps) * dir[1]]);
            let outside = beta(k, [(k + eps) * dir[0], (k + eps) * dir[1]]);
            let bound = 3.0 * (2.0 * k * eps).sqrt() + 1e-12;
            prop_assert!(inside.im == 0.0 && inside.re >= 0.0);
            prop_assert!(outside.re == 0.0 && outside.im >= 0.0);
            prop_assert!((inside - outside).norm() <= bound);
        }
    }
}
