//! Brute-force references for the solver components, built without the production code paths.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cell_solver::{smw_solve_columns, CellSolution, ModalField};
use crate::error::{Error, Result};
use crate::gauss::{gauss_legendre, mapped};
use crate::lattice_modes::{beta, ModeIndex, ModeSet};
use crate::linalg::BandMatrix;
use crate::media::PeriodicMedium;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub name: String,
    pub inputs: String,
    pub reference: f64,
    pub candidate: f64,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub skipped: bool,
}

impl OracleReport {
    pub fn new(name: &str, inputs: String, reference: f64, candidate: f64, discrepancy: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            inputs,
            reference,
            candidate,
            discrepancy,
            tolerance,
            passed: discrepancy <= tolerance,
            skipped: false,
        }
    }

    fn skip(name: &str, inputs: String) -> Self {
        Self {
            name: name.into(),
            inputs,
            reference: f64::NAN,
            candidate: f64::NAN,
            discrepancy: 0.0,
            tolerance: 0.0,
            passed: true,
            skipped: true,
        }
    }
}

fn random_c64(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

/// Rank-update solve of a random diagonally dominant system against dense inversion of S + Z D Z^H.
pub fn dense_smw_oracle(n: usize, rank: usize, seed: u64) -> OracleReport {
    dense_smw_oracle_scaled(n, rank, seed, 1.0)
}

/// As `dense_smw_oracle` with D scaled by `d_scale` (small scales approach the plain solve).
pub fn dense_smw_oracle_scaled(n: usize, rank: usize, seed: u64, d_scale: f64) -> OracleReport {
    let inputs = format!("n={n} rank={rank} seed={seed} d_scale={d_scale:e}");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = DMatrix::<C64>::from_fn(n, n, |_, _| random_c64(&mut rng));
    for i in 0..n {
        let row: f64 = (0..n).map(|j| s[(i, j)].norm()).sum();
        s[(i, i)] += C64::new(row + 1.0, 0.0);
    }
    let z: Vec<Vec<C64>> = (0..rank).map(|_| (0..n).map(|_| random_c64(&mut rng)).collect()).collect();
    let d: Vec<C64> = (0..rank)
        .map(|_| C64::from_polar(rng.gen_range(0.5..2.0) * d_scale, rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let b: Vec<C64> = (0..n).map(|_| random_c64(&mut rng)).collect();

    let mut full = s.clone();
    for (col, dk) in z.iter().zip(&d) {
        for r in 0..n {
            for c in 0..n {
                full[(r, c)] += col[r] * dk * col[c].conj();
            }
        }
    }
    let Some(reference) = full.lu().solve(&DVector::from_vec(b.clone())) else {
        return OracleReport::skip("dense_smw", inputs);
    };
    let rows: Vec<Vec<C64>> = (0..n).map(|i| (0..n).map(|j| s[(i, j)]).collect()).collect();
    let Ok(lu) = BandMatrix::from_dense(&rows).factor() else {
        return OracleReport::skip("dense_smw", inputs);
    };
    let d_inv: Vec<C64> = d.iter().map(|v| 1.0 / v).collect();
    let candidate = match smw_solve_columns(|v| lu.solve(v), &z, &d_inv, &b) {
        Ok(u) => u,
        Err(_) => return OracleReport::skip("dense_smw", inputs),
    };
    let ref_norm = reference.norm();
    let diff: f64 = candidate.iter().zip(reference.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let cand_norm = candidate.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    OracleReport::new("dense_smw", inputs, ref_norm, cand_norm, diff / ref_norm, 1e-10)
}

/// Least-squares fit of samples u_i = a + b x_i, coordinate by coordinate.
#[derive(Clone, Debug)]
pub struct SqrtFit {
    pub constant: Vec<C64>,
    pub slope: Vec<C64>,
    /// ||U - fit||_F / ||U||_F.
    pub residual: f64,
}

/// Fits u(x) = a + b x where x is the square-root variable (sqrt(t) or beta_j).
pub fn sqrt_fit_oracle(abscissae: &[f64], values: &[Vec<C64>]) -> Result<SqrtFit> {
    let m = abscissae.len();
    if m < 4 || values.len() != m {
        return Err(Error::InvalidParameter(format!("need at least 4 samples, got {m}")));
    }
    let (s0, s1, s2) = abscissae.iter().fold((0.0, 0.0, 0.0), |(a, b, c), x| (a + 1.0, b + x, c + x * x));
    let det = s0 * s2 - s1 * s1;
    let spread = abscissae.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if det.abs() <= 1e-14 * s0 * spread * spread.max(1e-300) || spread == 0.0 {
        return Err(Error::InvalidParameter("fit offsets are degenerate".into()));
    }
    let dim = values[0].len();
    let mut constant = vec![ZERO; dim];
    let mut slope = vec![ZERO; dim];
    let (mut res, mut total) = (0.0, 0.0);
    for c in 0..dim {
        let (mut y0, mut y1) = (ZERO, ZERO);
        for (x, u) in abscissae.iter().zip(values) {
            y0 += u[c];
            y1 += u[c] * *x;
        }
        let a = (y0 * s2 - y1 * s1) / det;
        let b = (y1 * s0 - y0 * s1) / det;
        constant[c] = a;
        slope[c] = b;
        for (x, u) in abscissae.iter().zip(values) {
            res += (u[c] - a - b * *x).norm_sqr();
            total += u[c].norm_sqr();
        }
    }
    let residual = if total == 0.0 { 0.0 } else { (res / total).sqrt() };
    Ok(SqrtFit { constant, slope, residual })
}

/// Quintic smoothstep on [0, width]: value and first two derivatives; 1 beyond `width`.
fn smoothstep(z: f64, width: f64) -> (f64, f64, f64) {
    if z >= width {
        return (1.0, 0.0, 0.0);
    }
    let t = (z / width).max(0.0);
    let v = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
    let d = 30.0 * t * t * (1.0 - t) * (1.0 - t) / width;
    let dd = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (width * width);
    (v, d, dd)
}

/// Divergence-free outgoing amplitude (p1, p2, alpha_j . p / beta).
fn outgoing_vector(alpha_j: [f64; 2], beta: C64, p: [f64; 2]) -> [C64; 3] {
    let vertical = (alpha_j[0] * p[0] + alpha_j[1] * p[1]) / beta;
    [C64::new(p[0], 0.0), C64::new(p[1], 0.0), vertical]
}

/// Bump (z (L - z))^3 scaled to unit maximum on [0, L], zero beyond: value and derivatives.
fn cubic_bump(z: f64, width: f64) -> (f64, f64) {
    if z <= 0.0 || z >= width {
        return (0.0, 0.0);
    }
    let scale = (width * width / 4.0).powi(3);
    let p = z * (width - z);
    let dp = width - 2.0 * z;
    (p.powi(3) / scale, 3.0 * p * p * dp / scale)
}

#[derive(Clone, Debug, PartialEq)]
enum Profile {
    /// s(x3) e^{i beta x3} (p, alpha_j . p / beta) for a tangential polarization p.
    Outgoing { mode: ModeIndex, polarization: [f64; 2] },
    /// Gradient of a bump times the mode exponential.
    Gradient { mode: ModeIndex },
}

/// Closed-form field on the cell with its volume load; vacuum medium.
#[derive(Clone, Debug)]
pub struct ManufacturedCase {
    pub name: String,
    pub k: f64,
    pub alpha: [f64; 2],
    pub truncation: usize,
    pub height: f64,
    /// Top of the load support, R - delta.
    pub support_top: f64,
    profiles: Vec<Profile>,
}

fn orthogonal_unit(a: [f64; 2]) -> [f64; 2] {
    let r = a[0].hypot(a[1]);
    if r == 0.0 {
        [1.0, 0.0]
    } else {
        [-a[1] / r, a[0] / r]
    }
}

/// Named manufactured solutions: `outgoing_mode`, `two_mode_superposition`, `gradient_null_test`.
pub fn manufactured_case(name: &str) -> Result<ManufacturedCase> {
    match name {
        "outgoing_mode" => Ok(ManufacturedCase::outgoing_mode(1.0, [0.0, 0.0])),
        "two_mode_superposition" => {
            let alpha = [0.2, 0.1];
            let profiles = [[0, 0], [1, 0]]
                .into_iter()
                .map(|mode: ModeIndex| Profile::Outgoing {
                    mode,
                    polarization: orthogonal_unit([alpha[0] + mode[0] as f64, alpha[1] + mode[1] as f64]),
                })
                .collect();
            Ok(ManufacturedCase {
                name: name.into(),
                k: 1.0,
                alpha,
                truncation: 1,
                height: 1.0,
                support_top: 0.75,
                profiles,
            })
        }
        "gradient_null_test" => Ok(ManufacturedCase {
            name: name.into(),
            k: 1.0,
            alpha: [0.2, 0.1],
            truncation: 1,
            height: 1.0,
            support_top: 0.75,
            profiles: vec![Profile::Gradient { mode: [1, 0] }],
        }),
        other => Err(Error::UnknownName(other.into())),
    }
}

impl ManufacturedCase {
    /// Single outgoing mode j = 0 at wavenumber `k` and quasi-periodicity `alpha`, with M = 0.
    pub fn outgoing_mode(k: f64, alpha: [f64; 2]) -> Self {
        Self {
            name: "outgoing_mode".into(),
            k,
            alpha,
            truncation: 0,
            height: 1.0,
            support_top: 0.75,
            profiles: vec![Profile::Outgoing { mode: [0, 0], polarization: orthogonal_unit(alpha) }],
        }
    }

    /// Outgoing mode j = 0 with an arbitrary tangential polarization, which gives a nonzero
    /// vertical component whenever it is not orthogonal to alpha.
    pub fn polarized_outgoing_mode(k: f64, alpha: [f64; 2], polarization: [f64; 2]) -> Self {
        let mut case = Self::outgoing_mode(k, alpha);
        case.profiles = vec![Profile::Outgoing { mode: [0, 0], polarization }];
        case
    }

    pub fn medium(&self) -> Result<PeriodicMedium> {
        PeriodicMedium::vacuum(self.height, self.support_top + 0.5 * (self.height - self.support_top), 0.5 * (self.height - self.support_top))
    }

    fn alpha_j(&self, mode: ModeIndex) -> [f64; 2] {
        [self.alpha[0] + mode[0] as f64, self.alpha[1] + mode[1] as f64]
    }

    /// Exact modal coefficients (E1, E2, E3) of lattice mode `mode` at depth `z`.
    pub fn exact(&self, mode: ModeIndex, z: f64) -> [C64; 3] {
        let mut out = [ZERO; 3];
        for p in &self.profiles {
            match p {
                Profile::Outgoing { mode: j, polarization } if *j == mode => {
                    let b = beta(self.k, self.alpha_j(mode));
                    let (s, _, _) = smoothstep(z, self.support_top);
                    let v = outgoing_vector(self.alpha_j(mode), b, *polarization);
                    let g = s * (I * b * z).exp();
                    for c in 0..3 {
                        out[c] += g * v[c];
                    }
                }
                Profile::Gradient { mode: j } if *j == mode => {
                    let a = self.alpha_j(mode);
                    let (w, dw) = cubic_bump(z, self.support_top);
                    out[0] += -I * a[0] * w;
                    out[1] += -I * a[1] * w;
                    out[2] += C64::new(dw, 0.0);
                }
                _ => {}
            }
        }
        out
    }

    /// Modal volume load curl curl E - k^2 E of lattice mode `mode` at depth `z`.
    pub fn load(&self, mode: ModeIndex, z: f64) -> [C64; 3] {
        let mut out = [ZERO; 3];
        let k2 = self.k * self.k;
        for p in &self.profiles {
            match p {
                Profile::Outgoing { mode: j, polarization } if *j == mode => {
                    let b = beta(self.k, self.alpha_j(mode));
                    // grad div (s v) - (s'' + 2 i beta s') v with div (s v) = s' v3
                    let a = self.alpha_j(mode);
                    let v = outgoing_vector(a, b, *polarization);
                    let (_, ds, dds) = smoothstep(z, self.support_top);
                    let e = (I * b * z).exp();
                    let f = -(dds + 2.0 * I * b * ds) * e;
                    let grad_div = [
                        -I * a[0] * ds * v[2] * e,
                        -I * a[1] * ds * v[2] * e,
                        (dds + I * b * ds) * v[2] * e,
                    ];
                    for c in 0..3 {
                        out[c] += f * v[c] + grad_div[c];
                    }
                }
                Profile::Gradient { mode: j } if *j == mode => {
                    let e = self.exact(mode, z);
                    for c in 0..3 {
                        out[c] += -k2 * e[c];
                    }
                }
                _ => {}
            }
        }
        out
    }

    pub fn modes(&self) -> ModeSet {
        ModeSet::new(self.k, crate::lattice_modes::QuasiPeriodicity::new(self.alpha).expect("alpha in the cell"), self.truncation)
    }

    pub fn load_field(&self, points: &[f64]) -> ModalField {
        let modes = self.modes();
        ModalField::from_fn(modes.len(), points, |m, z| self.load(modes.modes()[m], z))
    }

    /// Relative L2 error of a discrete solution on (0, R), integrated with a 5-point rule per element.
    pub fn relative_l2_error(&self, sol: &CellSolution) -> f64 {
        let n = sol.layout.n_elems;
        let h = sol.height / n as f64;
        let (mut err, mut norm) = (0.0, 0.0);
        for m in 0..sol.layout.n_modes {
            let mode = sol.modes.modes()[m];
            for e in 0..n {
                for (z, w) in mapped(5, e as f64 * h, (e + 1) as f64 * h) {
                    let exact = self.exact(mode, z);
                    let got = sol.mode_value(m, z);
                    for c in 0..3 {
                        err += w * (got[c] - exact[c]).norm_sqr();
                        norm += w * exact[c].norm_sqr();
                    }
                }
            }
        }
        (err / norm).sqrt()
    }
}

/// Galerkin matrix of the cell form for one mode (M = 0) and two depth elements, in the
/// unknown order [E3(0), E1(1), E2(1), E3(1), E1(2), E2(2)], built from exact polynomial
/// integrals of the linear shape functions.
pub fn symbolic_two_element_matrix(k: f64, alpha: [f64; 2], eps: C64, mu: C64, height: f64) -> Result<DMatrix<C64>> {
    let h = height / 2.0;
    let nu = 1.0 / mu;
    let (a1, a2) = (alpha[0], alpha[1]);
    // linear polynomial c0 + c1 t on the element, t in [0, 1]
    type Poly = [C64; 2];
    let integral = |p: Poly, q: Poly| -> C64 {
        let (p0, p1, q0, q1) = (p[0], p[1], q[0].conj(), q[1].conj());
        (p0 * q0 + (p0 * q1 + p1 * q0) / 2.0 + p1 * q1 / 3.0) * h
    };
    let c = |re: f64| C64::new(re, 0.0);
    let mut a = DMatrix::<C64>::zeros(6, 6);
    for e in 0..2 {
        // (index, component, value, curl)
        let mut funcs: Vec<(usize, usize, Poly, [Poly; 3])> = Vec::new();
        let rising: Poly = [c(0.0), c(1.0)];
        let falling: Poly = [c(1.0), c(-1.0)];
        let mut tangential = |idx: usize, value: Poly, slope: f64| {
            let d: Poly = [c(slope), c(0.0)];
            let e1 = [[ZERO; 2], d, [I * a2 * value[0], I * a2 * value[1]]];
            let e2 = [[-d[0], -d[1]], [ZERO; 2], [-I * a1 * value[0], -I * a1 * value[1]]];
            funcs.push((idx, 1, value, e1));
            funcs.push((idx + 1, 2, value, e2));
        };
        if e == 1 {
            tangential(1, falling, -1.0 / h);
        }
        tangential(3 * e + 1, rising, 1.0 / h);
        let one: Poly = [c(1.0), c(0.0)];
        funcs.push((3 * e, 0, one, [[-I * a2, ZERO], [I * a1, ZERO], [ZERO; 2]]));
        for (ti, tc, tv, tcurl) in &funcs {
            for (si, sc, sv, scurl) in &funcs {
                let mut v = ZERO;
                for comp in 0..3 {
                    v += nu * integral(scurl[comp], tcurl[comp]);
                }
                if sc == tc {
                    v -= k * k * eps * integral(*sv, *tv);
                }
                a[(*ti, *si)] += v;
            }
        }
    }
    let b = beta(k, alpha);
    if b == ZERO {
        return Err(Error::Cutoff { mode: [0, 0] });
    }
    let n_mult = [[-I * a1 * a1 / b, -I * a1 * a2 / b], [-I * a2 * a1 / b, -I * a2 * a2 / b]];
    for r in 0..2 {
        a[(4 + r, 4 + r)] -= I * b;
        for col in 0..2 {
            a[(4 + r, 4 + col)] += n_mult[r][col];
        }
    }
    Ok(a)
}

/// Integral over the Brillouin cell for k < 1/2, where only the circle |alpha| = k meets it:
/// polar coordinates about the origin with r = k (1 - u^2) inside the circle and
/// r = k + (r_max - k) u^2 outside, so square-root behaviour at the circle becomes smooth.
pub fn polar_alpha_integral(
    k: f64,
    n_radial: usize,
    n_angle: usize,
    mut f: impl FnMut([f64; 2]) -> Vec<C64>,
) -> Result<Vec<C64>> {
    if !(k > 0.0 && k < 0.5) {
        return Err(Error::InvalidParameter(format!("polar reference needs 0 < k < 1/2, got {k}")));
    }
    let (u, wu) = gauss_legendre(n_radial);
    let (t, wt) = gauss_legendre(n_angle);
    let mut out: Vec<C64> = Vec::new();
    let mut add = |a: [f64; 2], w: f64, out: &mut Vec<C64>| {
        let v = f(a);
        if out.is_empty() {
            out.resize(v.len(), ZERO);
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += w * x;
        }
    };
    for sector in 0..8 {
        let (t0, t1) = (sector as f64 * PI / 4.0, (sector + 1) as f64 * PI / 4.0);
        for (ti, wti) in t.iter().zip(&wt) {
            let th = t0 + (ti + 1.0) * 0.5 * (t1 - t0);
            let wth = 0.5 * (t1 - t0) * wti;
            let dir = [th.cos(), th.sin()];
            let r_max = 0.5 / dir[0].abs().max(dir[1].abs());
            for (ui, wui) in u.iter().zip(&wu) {
                let s = 0.5 * (ui + 1.0);
                let ws = 0.5 * wui;
                // inside: r = k (1 - s^2), dr = 2 k s ds
                let r = k * (1.0 - s * s);
                add([r * dir[0], r * dir[1]], wth * ws * 2.0 * k * s * r, &mut out);
                // outside: r = k + (r_max - k) s^2
                let r = k + (r_max - k) * s * s;
                add([r * dir[0], r * dir[1]], wth * ws * 2.0 * (r_max - k) * s * r, &mut out);
            }
        }
    }
    Ok(out)
}

/// Direct lattice sum sum_j f_j (cos + i sin)(2 pi alpha . j).
pub fn direct_bloch_sum(cells: &[([i32; 2], Vec<C64>)], alpha: [f64; 2]) -> Vec<C64> {
    let n = cells.first().map_or(0, |c| c.1.len());
    let mut out = vec![ZERO; n];
    for (j, values) in cells {
        let angle = 2.0 * PI * (alpha[0] * j[0] as f64 + alpha[1] * j[1] as f64);
        let phase = C64::new(angle.cos(), angle.sin());
        for (o, v) in out.iter_mut().zip(values) {
            *o += phase * v;
        }
    }
    out
}

/// Partial sums of the Neumann series sum_n (coupling M)^n u for n = 0..=order.
pub fn born_series(
    mut apply: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    incident: &[C64],
    coupling: f64,
    order: usize,
) -> Result<Vec<Vec<C64>>> {
    let mut term = incident.to_vec();
    let mut sum = incident.to_vec();
    let mut out = vec![sum.clone()];
    for _ in 0..order {
        term = apply(&term)?.into_iter().map(|v| v * coupling).collect();
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
        out.push(sum.clone());
    }
    Ok(out)
}
