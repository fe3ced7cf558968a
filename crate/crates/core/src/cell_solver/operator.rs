//! Regular operator storage, the singular rank update, and the two solution paths.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::dtn::d_inverse;
use crate::error::{Error, Result};
use crate::lattice_modes::{CutoffClassification, ModeIndex, ModeSet};
use crate::linalg::{inverse_norm1_estimate, BandLu, BandMatrix};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Numbering of the cell unknowns: mode-major, `3 * n_elems` unknowns per mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DofLayout {
    pub n_modes: usize,
    pub n_elems: usize,
}

impl DofLayout {
    pub fn per_mode(&self) -> usize {
        3 * self.n_elems
    }

    pub fn len(&self) -> usize {
        self.n_modes * self.per_mode()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn global(&self, mode: usize, local: usize) -> usize {
        mode * self.per_mode() + local
    }

    /// Tangential unknown of the top node: `comp` 0 for E1, 1 for E2.
    pub fn top(&self, mode: usize, comp: usize) -> usize {
        self.global(mode, 3 * (self.n_elems - 1) + 1 + comp)
    }

    /// Level-major position keeping all modes of one depth level together.
    #[inline]
    fn level_major(&self, mode: usize, local: usize) -> usize {
        let (e, c) = (local / 3, local % 3);
        let nm = self.n_modes;
        e * 3 * nm + if c == 0 { mode } else { nm + 2 * mode + (c - 1) }
    }

    fn to_level_major(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; x.len()];
        for m in 0..self.n_modes {
            for l in 0..self.per_mode() {
                out[self.level_major(m, l)] = x[self.global(m, l)];
            }
        }
        out
    }

    fn from_level_major(&self, y: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; y.len()];
        for m in 0..self.n_modes {
            for l in 0..self.per_mode() {
                out[self.global(m, l)] = y[self.level_major(m, l)];
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
enum Storage<T> {
    PerMode(Vec<T>),
    Coupled(T),
}

/// Galerkin matrix of the regular part of the form: one band per mode for laterally
/// constant media, a single level-major band otherwise.
#[derive(Clone, Debug)]
pub struct RegularOperator {
    layout: DofLayout,
    storage: Storage<BandMatrix>,
}

impl RegularOperator {
    pub fn zeros(layout: DofLayout, coupled: bool) -> Self {
        let storage = if coupled {
            let w = 5 * layout.n_modes - 1;
            Storage::Coupled(BandMatrix::zeros(layout.len(), w, w))
        } else {
            Storage::PerMode((0..layout.n_modes).map(|_| BandMatrix::zeros(layout.per_mode(), 4, 4)).collect())
        };
        Self { layout, storage }
    }

    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    pub fn is_coupled(&self) -> bool {
        matches!(self.storage, Storage::Coupled(_))
    }

    /// Adds `v` to the entry (test mode/local, trial mode/local).
    #[inline]
    pub fn add(&mut self, test_mode: usize, test_local: usize, trial_mode: usize, trial_local: usize, v: C64) {
        match &mut self.storage {
            Storage::PerMode(blocks) => {
                assert_eq!(test_mode, trial_mode, "mode coupling in a mode-diagonal operator");
                blocks[test_mode].add(test_local, trial_local, v);
            }
            Storage::Coupled(band) => {
                let lay = self.layout;
                band.add(lay.level_major(test_mode, test_local), lay.level_major(trial_mode, trial_local), v);
            }
        }
    }

    pub fn get(&self, test_mode: usize, test_local: usize, trial_mode: usize, trial_local: usize) -> C64 {
        match &self.storage {
            Storage::PerMode(blocks) => {
                if test_mode == trial_mode {
                    blocks[test_mode].get(test_local, trial_local)
                } else {
                    ZERO
                }
            }
            Storage::Coupled(band) => band.get(
                self.layout.level_major(test_mode, test_local),
                self.layout.level_major(trial_mode, trial_local),
            ),
        }
    }

    fn per_mode_map(&self, x: &[C64], f: impl Fn(&BandMatrix, &[C64]) -> Vec<C64>) -> Vec<C64> {
        match &self.storage {
            Storage::PerMode(blocks) => {
                let n = self.layout.per_mode();
                blocks.iter().enumerate().flat_map(|(m, b)| f(b, &x[m * n..(m + 1) * n])).collect()
            }
            Storage::Coupled(band) => self.layout.from_level_major(&f(band, &self.layout.to_level_major(x))),
        }
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.per_mode_map(x, |b, v| b.apply(v))
    }

    pub fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        self.per_mode_map(x, |b, v| b.apply_adjoint(v))
    }

    pub fn norm1(&self) -> f64 {
        match &self.storage {
            Storage::PerMode(blocks) => blocks.iter().map(|b| b.norm1()).fold(0.0, f64::max),
            Storage::Coupled(band) => band.norm1(),
        }
    }

    pub fn factor(&self) -> Result<FactoredOperator> {
        let storage = match &self.storage {
            Storage::PerMode(blocks) => Storage::PerMode(blocks.iter().map(|b| b.factor()).collect::<Result<_>>()?),
            Storage::Coupled(band) => Storage::Coupled(band.factor()?),
        };
        Ok(FactoredOperator { layout: self.layout, storage })
    }

    /// Dense copy in mode-major numbering (small problems only).
    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = self.layout.len();
        let per = self.layout.per_mode();
        DMatrix::from_fn(n, n, |r, c| self.get(r / per, r % per, c / per, c % per))
    }
}

#[derive(Clone, Debug)]
pub struct FactoredOperator {
    layout: DofLayout,
    storage: Storage<BandLu>,
}

impl FactoredOperator {
    pub fn layout(&self) -> DofLayout {
        self.layout
    }

    fn map(&self, x: &[C64], f: impl Fn(&BandLu, &[C64]) -> Vec<C64>) -> Vec<C64> {
        match &self.storage {
            Storage::PerMode(blocks) => {
                let n = self.layout.per_mode();
                blocks.iter().enumerate().flat_map(|(m, b)| f(b, &x[m * n..(m + 1) * n])).collect()
            }
            Storage::Coupled(lu) => self.layout.from_level_major(&f(lu, &self.layout.to_level_major(x))),
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        self.map(b, |lu, v| lu.solve(v))
    }

    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        self.map(b, |lu, v| lu.solve_adjoint(v))
    }

    /// Estimate of ||S^{-1}||_1.
    pub fn inverse_norm1(&self) -> f64 {
        inverse_norm1_estimate(self.layout.len(), |b| self.solve(b), |b| self.solve_adjoint(b))
    }
}

/// Z D Z^* restricted to the singular modes. Column s of Z is sqrt(2 pi) alpha_j placed
/// on the top tangential unknowns of its mode.
#[derive(Clone, Debug)]
pub struct RankUpdate {
    pub layout: DofLayout,
    pub modes: Vec<usize>,
    pub mode_ids: Vec<ModeIndex>,
    pub columns: Vec<[(usize, C64); 2]>,
    /// D entries; `None` at exact cutoff.
    pub d: Vec<Option<C64>>,
    /// D^{-1} entries, continued by zero at exact cutoff.
    pub d_inv: Vec<C64>,
}

impl RankUpdate {
    pub fn new(layout: DofLayout, modes: &ModeSet, cls: &CutoffClassification) -> Self {
        let scale = (2.0 * PI).sqrt();
        let columns = cls
            .singular
            .iter()
            .map(|&m| {
                let a = modes.alpha_j(m);
                [(layout.top(m, 0), C64::new(scale * a[0], 0.0)), (layout.top(m, 1), C64::new(scale * a[1], 0.0))]
            })
            .collect();
        let d = cls
            .singular
            .iter()
            .map(|&m| {
                let b = modes.beta_j(m);
                if b == ZERO {
                    None
                } else {
                    Some(C64::new(0.0, -1.0) / (2.0 * PI * b))
                }
            })
            .collect();
        Self {
            layout,
            modes: cls.singular.clone(),
            mode_ids: cls.singular_modes.clone(),
            columns,
            d,
            d_inv: d_inverse(modes, cls),
        }
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn z_star(&self, u: &[C64]) -> Vec<C64> {
        self.columns.iter().map(|col| col.iter().map(|(i, z)| z.conj() * u[*i]).sum()).collect()
    }

    pub fn z_times(&self, c: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.layout.len()];
        for (col, cs) in self.columns.iter().zip(c) {
            for (i, z) in col {
                out[*i] += z * cs;
            }
        }
        out
    }

    /// S + Z D Z^*; fails at exact cutoff.
    pub fn added_to(&self, s: &RegularOperator) -> Result<RegularOperator> {
        let mut b = s.clone();
        let per = self.layout.per_mode();
        for (s_idx, col) in self.columns.iter().enumerate() {
            let d = self.d[s_idx].ok_or(Error::Cutoff { mode: self.mode_ids[s_idx] })?;
            for (r, zr) in col {
                for (c, zc) in col {
                    b.add(r / per, r % per, c / per, c % per, zr * d * zc.conj());
                }
            }
        }
        Ok(b)
    }
}

/// Cached pieces of the rank-update solve: S^{-1} Z and the LU of D^{-1} + Z^* S^{-1} Z.
#[derive(Clone, Debug)]
pub struct SmwFactors {
    pub s_inv_z: Vec<Vec<C64>>,
    pub core: DMatrix<C64>,
    core_lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl SmwFactors {
    pub fn new(s: &FactoredOperator, update: &RankUpdate) -> Result<Option<Self>> {
        let r = update.rank();
        if r == 0 {
            return Ok(None);
        }
        let s_inv_z: Vec<Vec<C64>> = (0..r)
            .map(|k| {
                let mut e = vec![ZERO; r];
                e[k] = C64::new(1.0, 0.0);
                s.solve(&update.z_times(&e))
            })
            .collect();
        let mut core = DMatrix::<C64>::zeros(r, r);
        for (col, v) in s_inv_z.iter().enumerate() {
            let zs = update.z_star(v);
            for row in 0..r {
                core[(row, col)] = zs[row];
            }
            core[(col, col)] += update.d_inv[col];
        }
        let core_lu = core.clone().lu();
        let diag: Vec<f64> = (0..r).map(|i| core_lu.u()[(i, i)].norm()).collect();
        let (lo, hi) = diag.iter().fold((f64::MAX, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
        if hi == 0.0 || lo / hi < 1e-13 {
            return Err(Error::SingularCapacitance(if hi == 0.0 { 0.0 } else { lo / hi }));
        }
        Ok(Some(Self { s_inv_z, core, core_lu }))
    }

    pub fn solve_core(&self, rhs: &[C64]) -> Vec<C64> {
        let v = self.core_lu.solve(&DVector::from_column_slice(rhs)).expect("core factor checked at construction");
        v.iter().copied().collect()
    }

    pub fn core_condition(&self) -> f64 {
        let r = self.core.nrows();
        let norm1 = |m: &DMatrix<C64>| (0..r).map(|j| m.column(j).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
        match self.core.clone().try_inverse() {
            Some(inv) => norm1(&self.core) * norm1(&inv),
            None => f64::INFINITY,
        }
    }
}

/// u = S^{-1} b - S^{-1} Z (D^{-1} + Z^* S^{-1} Z)^{-1} Z^* S^{-1} b.
/// Returns the solution and the core coefficients c with Z^* u = D^{-1} c.
pub fn solve_smw(
    s: &FactoredOperator,
    update: &RankUpdate,
    factors: Option<&SmwFactors>,
    rhs: &[C64],
) -> Result<(Vec<C64>, Vec<C64>)> {
    let mut u = s.solve(rhs);
    if update.rank() == 0 {
        return Ok((u, Vec::new()));
    }
    let owned;
    let f = match factors {
        Some(f) => f,
        None => {
            owned = SmwFactors::new(s, update)?.expect("non-empty update");
            &owned
        }
    };
    let c = f.solve_core(&update.z_star(&u));
    for (k, ck) in c.iter().enumerate() {
        for (ui, vi) in u.iter_mut().zip(&f.s_inv_z[k]) {
            *ui -= ck * vi;
        }
    }
    Ok((u, c))
}

/// Rank-update solve with explicit dense columns: (S + Z D Z^H)^{-1} rhs given a solver for S
/// and the diagonal of D^{-1}.
pub fn smw_solve_columns(
    solve: impl Fn(&[C64]) -> Vec<C64>,
    z: &[Vec<C64>],
    d_inv: &[C64],
    rhs: &[C64],
) -> Result<Vec<C64>> {
    let mut u = solve(rhs);
    let r = z.len();
    if r == 0 {
        return Ok(u);
    }
    let s_inv_z: Vec<Vec<C64>> = z.iter().map(|col| solve(col)).collect();
    let z_star = |v: &[C64]| -> Vec<C64> {
        z.iter().map(|col| col.iter().zip(v).map(|(a, b)| a.conj() * b).sum()).collect()
    };
    let mut core = DMatrix::<C64>::zeros(r, r);
    for (c, w) in s_inv_z.iter().enumerate() {
        for (row, v) in z_star(w).into_iter().enumerate() {
            core[(row, c)] = v;
        }
        core[(c, c)] += d_inv[c];
    }
    let coeffs = core
        .lu()
        .solve(&DVector::from_vec(z_star(&u)))
        .ok_or(Error::SingularCapacitance(0.0))?;
    for (c, w) in coeffs.iter().zip(&s_inv_z) {
        for (ui, wi) in u.iter_mut().zip(w) {
            *ui -= c * wi;
        }
    }
    Ok(u)
}

/// Factors S + Z D Z^* and solves; only valid away from exact cutoff.
pub fn solve_direct(s: &RegularOperator, update: &RankUpdate, rhs: &[C64]) -> Result<Vec<C64>> {
    if update.rank() == 0 {
        return Ok(s.factor()?.solve(rhs));
    }
    Ok(update.added_to(s)?.factor()?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_major_round_trip() {
        let lay = DofLayout { n_modes: 4, n_elems: 3 };
        let x: Vec<C64> = (0..lay.len()).map(|i| C64::new(i as f64, 0.0)).collect();
        assert_eq!(lay.from_level_major(&lay.to_level_major(&x)), x);
        let mut seen = vec![false; lay.len()];
        for m in 0..4 {
            for l in 0..9 {
                seen[lay.level_major(m, l)] = true;
            }
        }
        assert!(seen.into_iter().all(|s| s));
    }

    #[test]
    fn scalar_identity() {
        // S = 2, Z = 1, D = 3, rhs = 1
        let lay = DofLayout { n_modes: 1, n_elems: 1 };
        let mut s = RegularOperator::zeros(lay, false);
        for l in 0..3 {
            s.add(0, l, 0, l, C64::new(2.0, 0.0));
        }
        let update = RankUpdate {
            layout: lay,
            modes: vec![0],
            mode_ids: vec![[0, 0]],
            columns: vec![[(1, C64::new(1.0, 0.0)), (2, ZERO)]],
            d: vec![Some(C64::new(3.0, 0.0))],
            d_inv: vec![C64::new(1.0 / 3.0, 0.0)],
        };
        let rhs = vec![ZERO, C64::new(1.0, 0.0), ZERO];
        let (u, _) = solve_smw(&s.factor().unwrap(), &update, None, &rhs).unwrap();
        assert!((u[1] - C64::new(0.2, 0.0)).norm() < 1e-15);
        let direct = solve_direct(&s, &update, &rhs).unwrap();
        assert!((direct[1] - C64::new(0.2, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn empty_update_is_plain_solve() {
        let lay = DofLayout { n_modes: 1, n_elems: 2 };
        let mut s = RegularOperator::zeros(lay, false);
        for l in 0..6 {
            s.add(0, l, 0, l, C64::new(1.0 + l as f64, 0.5));
            if l > 0 {
                s.add(0, l, 0, l - 1, C64::new(0.3, 0.0));
            }
        }
        let update = RankUpdate { layout: lay, modes: vec![], mode_ids: vec![], columns: vec![], d: vec![], d_inv: vec![] };
        let rhs: Vec<C64> = (0..6).map(|i| C64::new(i as f64, -1.0)).collect();
        let f = s.factor().unwrap();
        let (u, c) = solve_smw(&f, &update, None, &rhs).unwrap();
        assert!(c.is_empty());
        assert_eq!(u, f.solve(&rhs));
        assert_eq!(solve_direct(&s, &update, &rhs).unwrap(), f.solve(&rhs));
    }
}
