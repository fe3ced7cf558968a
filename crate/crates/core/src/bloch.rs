//! Bloch transform of cell-indexed data and quadrature over the Brillouin cell.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::cell_solver::ModalField;
use crate::error::{Error, Result};
use crate::gauss::gauss_legendre;
use crate::media::TransverseGrid;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const HALF: f64 = 0.5;

/// Gauss points per unit panel length of the default alpha rule.
pub const DEFAULT_N_BASE: usize = 40;
/// Exponent of the algebraic grading toward cutoff circles.
pub const DEFAULT_GRADING: f64 = 2.0;

/// Finitely supported map from lattice cell index to samples on the reference cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellIndexedField {
    pub n_samples: usize,
    pub cells: BTreeMap<[i32; 2], Vec<C64>>,
}

impl CellIndexedField {
    pub fn new(n_samples: usize) -> Self {
        Self { n_samples, cells: BTreeMap::new() }
    }

    pub fn insert(&mut self, cell: [i32; 2], values: Vec<C64>) -> Result<()> {
        if values.len() != self.n_samples {
            return Err(Error::InvalidParameter(format!(
                "cell {cell:?} has {} samples, expected {}",
                values.len(),
                self.n_samples
            )));
        }
        self.cells.insert(cell, values);
        Ok(())
    }

    pub fn get(&self, cell: [i32; 2]) -> Option<&Vec<C64>> {
        self.cells.get(&cell)
    }

    pub fn norm_sq(&self) -> f64 {
        self.cells.values().flat_map(|v| v.iter()).map(|x| x.norm_sqr()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.cells.values().all(|v| v.iter().all(|x| *x == ZERO))
    }
}

/// sum_j f_j e^{2 pi i alpha . j}.
pub fn bloch_forward(f: &CellIndexedField, alpha: [f64; 2]) -> Vec<C64> {
    let mut out = vec![ZERO; f.n_samples];
    for (j, values) in &f.cells {
        let phase = C64::from_polar(1.0, 2.0 * PI * (alpha[0] * j[0] as f64 + alpha[1] * j[1] as f64));
        for (o, v) in out.iter_mut().zip(values) {
            *o += v * phase;
        }
    }
    out
}

/// sum_q w_q u_q e^{-2 pi i alpha_q . j}.
pub fn bloch_inverse(family: &[Vec<C64>], quad: &AlphaQuadrature, target: [i32; 2]) -> Vec<C64> {
    assert_eq!(family.len(), quad.len(), "family does not match the quadrature");
    bloch_inverse_with(quad, target, family.first().map_or(0, |v| v.len()), |q| family[q].clone())
}

/// Streaming form of `bloch_inverse`: member `q` of the family is produced on demand.
pub fn bloch_inverse_with(
    quad: &AlphaQuadrature,
    target: [i32; 2],
    n_samples: usize,
    mut member: impl FnMut(usize) -> Vec<C64>,
) -> Vec<C64> {
    let mut out = vec![ZERO; n_samples];
    for (q, (alpha, w)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
        let phase = C64::from_polar(*w, -2.0 * PI * (alpha[0] * target[0] as f64 + alpha[1] * target[1] as f64));
        for (o, v) in out.iter_mut().zip(member(q)) {
            *o += v * phase;
        }
    }
    out
}

/// Cutoff circle |alpha + j| = k in the alpha plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffArc {
    pub mode: [i32; 2],
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaQuadrature {
    pub nodes: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub n_base: usize,
    pub grading: f64,
    /// Cutoff circles meeting the closed cell; the rule is graded toward each of them.
    pub arcs: Vec<CutoffArc>,
    /// Nodes moved out of the cutoff band.
    pub nudged: usize,
}

impl AlphaQuadrature {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Plain tensor Gauss-Legendre rule with `n` points per axis.
    pub fn tensor(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        let mut nodes = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for (a, wa) in x.iter().zip(&w) {
            for (b, wb) in x.iter().zip(&w) {
                nodes.push([a * HALF, b * HALF]);
                weights.push(wa * wb * 0.25);
            }
        }
        Self { nodes, weights, n_base: n, grading: 1.0, arcs: vec![], nudged: 0 }
    }

    /// Weighted sum of a vector-valued integrand.
    pub fn integrate(&self, mut f: impl FnMut([f64; 2]) -> Vec<C64>) -> Vec<C64> {
        let mut out: Vec<C64> = Vec::new();
        for (a, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(*a);
            if out.is_empty() {
                out = vec![ZERO; v.len()];
            }
            for (o, x) in out.iter_mut().zip(v) {
                *o += *w * x;
            }
        }
        out
    }
}

fn distance_to_cell(c: [f64; 2]) -> f64 {
    let dx = (c[0].abs() - HALF).max(0.0);
    let dy = (c[1].abs() - HALF).max(0.0);
    dx.hypot(dy)
}

/// Cutoff circles of the modes |j|_inf <= M that meet the closed cell.
pub fn cutoff_arcs(k: f64, truncation: usize) -> Vec<CutoffArc> {
    let m = truncation as i32;
    let mut arcs = Vec::new();
    for j1 in -m..=m {
        for j2 in -m..=m {
            let center = [-(j1 as f64), -(j2 as f64)];
            let d = distance_to_cell(center);
            let far = (center[0].abs() + HALF).hypot(center[1].abs() + HALF);
            if d <= k && k <= far {
                arcs.push(CutoffArc { mode: [j1, j2], center, radius: k });
            }
        }
    }
    arcs
}

/// Gauss-Legendre rule on [a, b], graded by x = end + L s^p toward singular ends.
pub fn graded_interval_rule(a: f64, b: f64, singular_a: bool, singular_b: bool, n: usize, grading: f64) -> Vec<(f64, f64)> {
    let n = n.max(1);
    let len = b - a;
    if len <= 0.0 {
        return vec![];
    }
    match (singular_a, singular_b) {
        (false, false) => crate::gauss::mapped(n, a, b),
        (true, true) => {
            let mid = 0.5 * (a + b);
            let half = n.div_ceil(2).max(2);
            let mut out = graded_interval_rule(a, mid, true, false, half, grading);
            out.extend(graded_interval_rule(mid, b, false, true, half, grading));
            out
        }
        (from_a, _) => {
            let (s, ws) = gauss_legendre(n);
            s.iter()
                .zip(&ws)
                .map(|(&si, &wi)| {
                    let t = 0.5 * (si + 1.0);
                    let jac = len * grading * t.powf(grading - 1.0) * 0.5 * wi;
                    let off = len * t.powf(grading);
                    (if from_a { a + off } else { b - off }, jac)
                })
                .collect()
        }
    }
}

/// Sorted, de-duplicated breakpoints in (lo, hi) with flags marking singular ends.
fn panels(lo: f64, hi: f64, mut interior: Vec<f64>) -> Vec<(f64, f64, bool, bool)> {
    let tol = 1e-12;
    let singular_lo = interior.iter().any(|x| (x - lo).abs() <= tol);
    let singular_hi = interior.iter().any(|x| (x - hi).abs() <= tol);
    interior.retain(|x| *x > lo + tol && *x < hi - tol);
    interior.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    interior.dedup_by(|a, b| (*a - *b).abs() <= tol);
    let mut points = vec![(lo, singular_lo)];
    points.extend(interior.into_iter().map(|x| (x, true)));
    points.push((hi, singular_hi));
    points.windows(2).map(|w| (w[0].0, w[1].0, w[0].1, w[1].1)).collect()
}

fn panel_rule(panels: &[(f64, f64, bool, bool)], n_base: usize, grading: f64) -> Vec<(f64, f64)> {
    let min_points = (n_base / 2).max(3);
    panels
        .iter()
        .flat_map(|&(a, b, sa, sb)| {
            let n = ((n_base as f64 * (b - a)).ceil() as usize).max(min_points);
            graded_interval_rule(a, b, sa, sb, n, grading)
        })
        .collect()
}

fn outer_breakpoints(arcs: &[CutoffArc]) -> Vec<f64> {
    let mut out = Vec::new();
    for (i, c) in arcs.iter().enumerate() {
        out.push(c.center[0] - c.radius);
        out.push(c.center[0] + c.radius);
        for edge in [-HALF, HALF] {
            let dy = edge - c.center[1];
            let s = c.radius * c.radius - dy * dy;
            if s >= 0.0 {
                out.push(c.center[0] - s.sqrt());
                out.push(c.center[0] + s.sqrt());
            }
        }
        for d in &arcs[i + 1..] {
            out.extend(circle_intersections(c, d).into_iter().map(|p| p[0]));
        }
    }
    out
}

fn circle_intersections(c: &CutoffArc, d: &CutoffArc) -> Vec<[f64; 2]> {
    let dx = d.center[0] - c.center[0];
    let dy = d.center[1] - c.center[1];
    let dist = dx.hypot(dy);
    if dist == 0.0 || dist > c.radius + d.radius || dist < (c.radius - d.radius).abs() {
        return vec![];
    }
    let a = (c.radius * c.radius - d.radius * d.radius + dist * dist) / (2.0 * dist);
    let h = (c.radius * c.radius - a * a).max(0.0).sqrt();
    let (ex, ey) = (dx / dist, dy / dist);
    let base = [c.center[0] + a * ex, c.center[1] + a * ey];
    vec![[base[0] - h * ey, base[1] + h * ex], [base[0] + h * ey, base[1] - h * ex]]
}

/// First mode whose cutoff band contains `node`, with its shifted position.
fn band_hit(node: [f64; 2], k: f64, truncation: usize, band: f64) -> Option<[f64; 2]> {
    let m = truncation as i32;
    (-m..=m)
        .flat_map(|j1| (-m..=m).map(move |j2| [node[0] + j1 as f64, node[1] + j2 as f64]))
        .find(|rel| {
            let r = rel[0].hypot(rel[1]);
            (r - k).abs() < band || r == k
        })
}

/// Moves a node radially out of every cutoff band, trying growing distances on both sides.
fn nudge(node: [f64; 2], k: f64, truncation: usize, band: f64) -> Result<[f64; 2]> {
    let mut current = node;
    for _ in 0..16 {
        let Some(rel) = band_hit(current, k, truncation, band) else {
            return Ok(current);
        };
        let r = rel[0].hypot(rel[1]);
        let dir = if r > 0.0 { [rel[0] / r, rel[1] / r] } else { [1.0, 0.0] };
        let shift = [rel[0] - current[0], rel[1] - current[1]];
        let side = if r < k { -1.0 } else { 1.0 };
        let candidates = [2.0, 4.0, 8.0].into_iter().flat_map(|f| [side * f, -side * f]).map(|f| {
            let target = k + f * band;
            [
                (dir[0] * target - shift[0]).clamp(-HALF, HALF),
                (dir[1] * target - shift[1]).clamp(-HALF, HALF),
            ]
        });
        let candidates: Vec<[f64; 2]> = candidates.collect();
        current = candidates
            .iter()
            .copied()
            .find(|c| band_hit(*c, k, truncation, band).is_none())
            .unwrap_or(candidates[0]);
    }
    match band_hit(current, k, truncation, band) {
        None => Ok(current),
        Some(_) => Err(Error::InvalidParameter(format!("cannot move node {node:?} out of the cutoff bands"))),
    }
}

/// Iterated Gauss rule over (-1/2, 1/2)^2 with panels split at every place where a cutoff
/// circle makes the integrand non-smooth and graded toward those places. Nodes falling
/// inside the cutoff band of any mode of the box are moved radially out of it.
pub fn build_alpha_quadrature(
    k: f64,
    truncation: usize,
    n_base: usize,
    grading: f64,
    cutoff_tol: f64,
) -> Result<AlphaQuadrature> {
    if n_base < 2 {
        return Err(Error::InvalidParameter(format!("n_base must be at least 2, got {n_base}")));
    }
    if !(k > 0.0 && k.is_finite()) || !(grading >= 1.0) || !(cutoff_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("k = {k}, grading = {grading}, cutoff_tol = {cutoff_tol}")));
    }
    let arcs = cutoff_arcs(k, truncation);
    let outer = panel_rule(&panels(-HALF, HALF, outer_breakpoints(&arcs)), n_base, grading);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (x, wx) in outer {
        let inner_breaks: Vec<f64> = arcs
            .iter()
            .filter_map(|c| {
                let s = c.radius * c.radius - (x - c.center[0]).powi(2);
                (s >= 0.0).then(|| [c.center[1] - s.sqrt(), c.center[1] + s.sqrt()])
            })
            .flatten()
            .collect();
        for (y, wy) in panel_rule(&panels(-HALF, HALF, inner_breaks), n_base, grading) {
            nodes.push([x, y]);
            weights.push(wx * wy);
        }
    }
    let mut nudged = 0;
    for node in nodes.iter_mut() {
        if band_hit(*node, k, truncation, cutoff_tol).is_some() {
            *node = nudge(*node, k, truncation, cutoff_tol)?;
            nudged += 1;
        }
    }
    Ok(AlphaQuadrature { nodes, weights, n_base, grading, arcs, nudged })
}

/// Modal coefficients F_l(z) = n^-2 sum_p f(x_p, z) e^{i (alpha + l) . x_p} of samples laid out
/// as ((p1 n + p2) n_depth + g) * 3 + component.
pub fn modal_transform(grid: TransverseGrid, n_depth: usize, samples: &[C64], alpha: [f64; 2], truncation: usize) -> ModalField {
    let n = grid.n;
    assert_eq!(samples.len(), n * n * n_depth * 3, "sample layout mismatch");
    let side = 2 * truncation + 1;
    let m = truncation as i32;
    let xs = grid.points();
    // phase[axis][l][p] = e^{i (alpha_axis + l) x_p}
    let phase: Vec<Vec<C64>> = (0..2)
        .map(|axis| {
            (-m..=m)
                .flat_map(|l| xs.iter().map(move |&x| C64::from_polar(1.0, (alpha[axis] + l as f64) * x)))
                .collect()
        })
        .collect();
    let stride = n_depth * 3;
    // partial[(p1, l2)][g*3+c]
    let mut partial = vec![ZERO; n * side * stride];
    for p1 in 0..n {
        for l2 in 0..side {
            let dst = &mut partial[(p1 * side + l2) * stride..(p1 * side + l2 + 1) * stride];
            for p2 in 0..n {
                let ph = phase[1][l2 * n + p2];
                let src = &samples[(p1 * n + p2) * stride..(p1 * n + p2 + 1) * stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += ph * s;
                }
            }
        }
    }
    let norm = 1.0 / (n * n) as f64;
    let mut out = ModalField::zeros(side * side, n_depth);
    for l1 in 0..side {
        for l2 in 0..side {
            let mode = l1 * side + l2;
            let mut acc = vec![ZERO; stride];
            for p1 in 0..n {
                let ph = phase[0][l1 * n + p1];
                for (a, s) in acc.iter_mut().zip(&partial[(p1 * side + l2) * stride..(p1 * side + l2 + 1) * stride]) {
                    *a += ph * s;
                }
            }
            for g in 0..n_depth {
                out.values[mode * n_depth + g] =
                    [acc[g * 3] * norm, acc[g * 3 + 1] * norm, acc[g * 3 + 2] * norm];
            }
        }
    }
    out
}

/// Inverse of `modal_transform` on the truncated mode box: samples of sum_l F_l e^{-i (alpha + l) . x}.
pub fn modal_synthesis(grid: TransverseGrid, field: &ModalField, alpha: [f64; 2], truncation: usize) -> Vec<C64> {
    let n = grid.n;
    let side = 2 * truncation + 1;
    assert_eq!(field.n_modes, side * side, "mode count mismatch");
    let n_depth = field.n_points;
    let stride = n_depth * 3;
    let m = truncation as i32;
    let xs = grid.points();
    let phase: Vec<Vec<C64>> = (0..2)
        .map(|axis| {
            (-m..=m)
                .flat_map(|l| xs.iter().map(move |&x| C64::from_polar(1.0, -(alpha[axis] + l as f64) * x)))
                .collect()
        })
        .collect();
    // partial[(l1, p2)][g*3+c]
    let mut partial = vec![ZERO; side * n * stride];
    for l1 in 0..side {
        for l2 in 0..side {
            let mode = l1 * side + l2;
            let values = &field.values[mode * n_depth..(mode + 1) * n_depth];
            if values.iter().all(|v| v.iter().all(|c| *c == ZERO)) {
                continue;
            }
            for p2 in 0..n {
                let ph = phase[1][l2 * n + p2];
                let dst = &mut partial[(l1 * n + p2) * stride..(l1 * n + p2 + 1) * stride];
                for (g, v) in values.iter().enumerate() {
                    for c in 0..3 {
                        dst[g * 3 + c] += ph * v[c];
                    }
                }
            }
        }
    }
    let mut out = vec![ZERO; n * n * stride];
    for p1 in 0..n {
        for l1 in 0..side {
            let ph = phase[0][l1 * n + p1];
            for p2 in 0..n {
                let src = &partial[(l1 * n + p2) * stride..(l1 * n + p2 + 1) * stride];
                let dst = &mut out[(p1 * n + p2) * stride..(p1 * n + p2 + 1) * stride];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += ph * s;
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let mut f = CellIndexedField::new(2);
        f.insert([0, 0], vec![C64::new(1.0, 2.0), C64::new(-1.0, 0.5)]).unwrap();
        assert_eq!(bloch_forward(&f, [0.3, -0.2]), f.cells[&[0, 0]]);
        f.insert([1, 0], vec![C64::new(0.5, 0.0), C64::new(0.0, 1.0)]).unwrap();
        let a = [0.17, 0.4];
        let ph = C64::from_polar(1.0, 2.0 * PI * a[0]);
        let got = bloch_forward(&f, a);
        assert!((got[0] - (C64::new(1.0, 2.0) + C64::new(0.5, 0.0) * ph)).norm() < 1e-15);
        assert!(f.insert([2, 2], vec![ZERO]).is_err());
    }

    #[test]
    fn inverse_examples() {
        let quad = AlphaQuadrature::tensor(12);
        let family: Vec<Vec<C64>> = quad.nodes.iter().map(|_| vec![C64::new(2.0, -1.0)]).collect();
        assert!((bloch_inverse(&family, &quad, [0, 0])[0] - C64::new(2.0, -1.0)).norm() < 1e-14);
        let family: Vec<Vec<C64>> =
            quad.nodes.iter().map(|a| vec![C64::from_polar(1.0, 2.0 * PI * a[0]) * 3.0]).collect();
        assert!((bloch_inverse(&family, &quad, [1, 0])[0] - C64::new(3.0, 0.0)).norm() < 1e-10);
        assert!(bloch_inverse(&family, &quad, [0, 0])[0].norm() < 1e-10);
    }

    #[test]
    fn graded_rule_sqrt() {
        let rule = graded_interval_rule(0.0, 1.0, true, false, 64, 2.0);
        let v: f64 = rule.iter().map(|(x, w)| w * x.sqrt()).sum();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        let rule = graded_interval_rule(0.0, 1.0, false, true, 8, 2.0);
        let v: f64 = rule.iter().map(|(x, w)| w * (1.0 - x).sqrt()).sum();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn weights_sum_to_one() {
        for (k, m) in [(0.1, 0), (0.3, 2), (1.0, 1), (1.3, 2), (0.5, 1), (2.6, 3)] {
            let q = build_alpha_quadrature(k, m, 16, 2.0, 1e-6 * k).unwrap();
            assert!((q.weight_sum() - 1.0).abs() < 1e-12, "k={k}: {}", q.weight_sum());
            assert!(q.weights.iter().all(|w| *w > 0.0));
            for a in &q.nodes {
                assert!(a[0].abs() <= 0.5 && a[1].abs() <= 0.5);
                for j1 in -(m as i32)..=m as i32 {
                    for j2 in -(m as i32)..=m as i32 {
                        let r = (a[0] + j1 as f64).hypot(a[1] + j2 as f64);
                        assert!((r - k).abs() >= 1e-6 * k, "node {a:?} in band of {j1},{j2}");
                    }
                }
            }
        }
    }

    #[test]
    fn no_arcs_gives_tensor_rule() {
        // k tiny with M = 0: the only circle is inside the cell, so use a k whose circles miss it.
        assert!(cutoff_arcs(3.0, 0).is_empty());
        let q = build_alpha_quadrature(3.0, 0, 8, 2.0, 1e-6).unwrap();
        assert_eq!(q.len(), 64);
        assert!((q.weight_sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn integrates_sqrt_of_circle_distance() {
        // int over the cell of sqrt|k^2 - |alpha|^2| for k = 0.3: closed form via polar split.
        let k: f64 = 0.3;
        // inside the disc: 2 pi k^3 / 3; outside: brute-force fine rule on the square minus disc
        let exact = 2.0 * PI * k.powi(3) / 3.0 + fine_outside(k);
        let err = |n: usize| {
            let q = build_alpha_quadrature(k, 0, n, 2.0, 0.0).unwrap();
            let got: f64 = q
                .nodes
                .iter()
                .zip(&q.weights)
                .map(|(a, w)| w * (k * k - a[0] * a[0] - a[1] * a[1]).abs().sqrt())
                .sum();
            (got - exact).abs()
        };
        let (e16, e32) = (err(16), err(32));
        assert!(e32 < e16 / 4.0, "{e16:e} -> {e32:e}");
        assert!(e32 < 1e-6);
    }

    fn fine_outside(k: f64) -> f64 {
        // polar integration over the annular part: for theta, r from k to the square boundary
        let (t, wt) = gauss_legendre(64);
        let (s, ws) = gauss_legendre(64);
        let mut total = 0.0;
        for sector in 0..8 {
            let (t0, t1) = (sector as f64 * PI / 4.0, (sector + 1) as f64 * PI / 4.0);
            for (ti, wti) in t.iter().zip(&wt) {
                let th = t0 + (ti + 1.0) * 0.5 * (t1 - t0);
                let rmax = 0.5 / th.cos().abs().max(th.sin().abs());
                for (si, wsi) in s.iter().zip(&ws) {
                    // r = k + (rmax - k) u^2
                    let u = (si + 1.0) * 0.5;
                    let r = k + (rmax - k) * u * u;
                    let jac = (rmax - k) * 2.0 * u * 0.5 * wsi * 0.5 * (t1 - t0) * wti;
                    total += jac * r * (r * r - k * k).sqrt();
                }
            }
        }
        total
    }

    #[test]
    fn modal_round_trip() {
        let grid = TransverseGrid { n: 10 };
        let m = 2;
        let side = 2 * m + 1;
        let alpha = [0.23, -0.41];
        let field = ModalField::from_fn(side * side, &[0.1, 0.7], |mode, z| {
            let s = mode as f64;
            [C64::new(s, z), C64::new(-z, 0.5 * s), C64::new(1.0, s * z)]
        });
        let samples = modal_synthesis(grid, &field, alpha, m);
        let back = modal_transform(grid, 2, &samples, alpha, m);
        for (a, b) in back.values.iter().zip(&field.values) {
            for c in 0..3 {
                assert!((a[c] - b[c]).norm() < 1e-12);
            }
        }
    }
}
