//! Bi-periodic material parameters, the local defect, and their transverse Fourier data.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = [f64; 3];
pub type ScalarFn = Arc<dyn Fn(Point) -> C64 + Send + Sync>;

const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Maps a transverse coordinate into [-pi, pi) and returns the lattice cell it came from.
pub fn wrap_to_cell(x: f64) -> (f64, i32) {
    let cell = (x / (2.0 * PI)).round();
    let mut local = x - 2.0 * PI * cell;
    if local >= PI {
        local -= 2.0 * PI;
    }
    (local, cell as i32)
}

/// Complex samples on a regular grid: periodic in x1, x2 and spanning [0, height] in x3.
#[derive(Clone, Debug, PartialEq)]
pub struct GriddedField {
    pub dims: [usize; 3],
    pub height: f64,
    pub r0: f64,
    pub values: Vec<C64>,
}

impl GriddedField {
    pub fn from_fn(dims: [usize; 3], height: f64, r0: f64, f: impl Fn(Point) -> C64) -> Self {
        let mut values = Vec::with_capacity(dims.iter().product());
        for i1 in 0..dims[0] {
            for i2 in 0..dims[1] {
                for i3 in 0..dims[2] {
                    values.push(f(Self::node(dims, height, [i1, i2, i3])));
                }
            }
        }
        Self { dims, height, r0, values }
    }

    fn node(dims: [usize; 3], height: f64, i: [usize; 3]) -> Point {
        [
            -PI + 2.0 * PI * i[0] as f64 / dims[0] as f64,
            -PI + 2.0 * PI * i[1] as f64 / dims[1] as f64,
            height * i[2] as f64 / (dims[2] - 1) as f64,
        ]
    }

    fn at(&self, i1: usize, i2: usize, i3: usize) -> C64 {
        self.values[(i1 * self.dims[1] + i2) * self.dims[2] + i3]
    }

    /// Trilinear interpolation, periodic across the cell, clamped in depth.
    pub fn eval(&self, x: Point) -> C64 {
        let [n1, n2, n3] = self.dims;
        let periodic = |x: f64, n: usize| {
            let (local, _) = wrap_to_cell(x);
            let s = (local + PI) / (2.0 * PI) * n as f64;
            let i = (s.floor() as usize).min(n - 1);
            (i, (i + 1) % n, s - i as f64)
        };
        let (a0, a1, ta) = periodic(x[0], n1);
        let (b0, b1, tb) = periodic(x[1], n2);
        let s = (x[2] / self.height).clamp(0.0, 1.0) * (n3 - 1) as f64;
        let c0 = (s.floor() as usize).min(n3 - 2);
        let tc = s - c0 as f64;
        let mut acc = ZERO;
        for (ia, wa) in [(a0, 1.0 - ta), (a1, ta)] {
            for (ib, wb) in [(b0, 1.0 - tb), (b1, tb)] {
                for (ic, wc) in [(c0, 1.0 - tc), (c0 + 1, tc)] {
                    let w = wa * wb * wc;
                    if w != 0.0 {
                        acc += self.at(ia, ib, ic) * w;
                    }
                }
            }
        }
        acc
    }

    /// Header: three little-endian u64 dimensions, then height and r0 as f64; body: (re, im) pairs.
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        for d in self.dims {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        w.write_all(&self.height.to_le_bytes())?;
        w.write_all(&self.r0.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut dyn Read| -> Result<[u8; 8]> {
            r.read_exact(&mut word).map_err(|e| Error::Format(format!("truncated grid data: {e}")))?;
            Ok(word)
        };
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = u64::from_le_bytes(next(&mut r)?) as usize;
        }
        if dims[0] == 0 || dims[1] == 0 || dims[2] < 2 {
            return Err(Error::Format(format!("grid dimensions {dims:?} need n1, n2 >= 1 and n3 >= 2")));
        }
        let height = f64::from_le_bytes(next(&mut r)?);
        let r0 = f64::from_le_bytes(next(&mut r)?);
        if !(height > 0.0 && r0 > 0.0 && r0 <= height) {
            return Err(Error::Format(format!("grid heights R = {height}, R0 = {r0} inadmissible")));
        }
        let count: usize = dims.iter().product();
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            let re = f64::from_le_bytes(next(&mut r)?);
            let im = f64::from_le_bytes(next(&mut r)?);
            values.push(C64::new(re, im));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes after grid data", rest.len())));
        }
        Ok(Self { dims, height, r0, values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// A scalar material field given as a closed form or as gridded data.
#[derive(Clone)]
pub enum FieldSource {
    Constant(C64),
    Callable(ScalarFn),
    Gridded(Arc<GriddedField>),
}

impl FieldSource {
    pub fn callable(f: impl Fn(Point) -> C64 + Send + Sync + 'static) -> Self {
        Self::Callable(Arc::new(f))
    }

    /// Value at a point of the strip; periodic in the transverse directions.
    pub fn eval(&self, x: Point) -> C64 {
        let p = [wrap_to_cell(x[0]).0, wrap_to_cell(x[1]).0, x[2]];
        match self {
            Self::Constant(c) => *c,
            Self::Callable(f) => f(p),
            Self::Gridded(g) => g.eval(p),
        }
    }

    fn is_constant(&self) -> bool {
        matches!(self, Self::Constant(_))
    }
}

impl std::fmt::Debug for FieldSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Callable(_) => write!(f, "Callable"),
            Self::Gridded(g) => write!(f, "Gridded({:?})", g.dims),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Layer {
    /// Upper boundary of the layer in depth.
    pub top: f64,
    pub eps: C64,
    pub mu: C64,
}

#[derive(Clone, Debug)]
pub struct PeriodicMedium {
    pub eps: FieldSource,
    pub mu: FieldSource,
    pub height: f64,
    pub r0: f64,
    pub delta: f64,
    pub profile: String,
}

impl PeriodicMedium {
    pub fn new(eps: FieldSource, mu: FieldSource, height: f64, r0: f64, delta: f64) -> Result<Self> {
        if !(height > 0.0 && r0 > 0.0 && r0 <= height && delta > 0.0 && delta < r0) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < delta < r0 <= height, got delta={delta}, r0={r0}, height={height}"
            )));
        }
        Ok(Self { eps, mu, height, r0, delta, profile: "custom".into() })
    }

    fn named(mut self, name: &str) -> Self {
        self.profile = name.into();
        self
    }

    pub fn vacuum(height: f64, r0: f64, delta: f64) -> Result<Self> {
        Ok(Self::new(FieldSource::Constant(ONE), FieldSource::Constant(ONE), height, r0, delta)?.named("constant"))
    }

    /// Horizontal layers listed bottom to top; free space above the last one.
    pub fn layered(layers: Vec<Layer>, height: f64, r0: f64, delta: f64) -> Result<Self> {
        if layers.windows(2).any(|w| w[0].top >= w[1].top) {
            return Err(Error::InvalidParameter("layer tops must increase".into()));
        }
        let pick = move |z: f64, eps: bool| {
            layers
                .iter()
                .find(|l| z < l.top)
                .map(|l| if eps { l.eps } else { l.mu })
                .unwrap_or(ONE)
        };
        let pick_mu = pick.clone();
        let eps = FieldSource::callable(move |x| pick(x[2], true));
        let mu = FieldSource::callable(move |x| pick_mu(x[2], false));
        Ok(Self::new(eps, mu, height, r0, delta)?.named("layered"))
    }

    /// Lamellar grating: ridges of half-width fill*pi around x1 = 0 between z_lo and z_hi,
    /// grooves elsewhere in that band, substrate below, free space above.
    #[allow(clippy::too_many_arguments)]
    pub fn lamellar(
        eps_ridge: C64,
        eps_groove: C64,
        eps_substrate: C64,
        fill: f64,
        z_lo: f64,
        z_hi: f64,
        height: f64,
        r0: f64,
        delta: f64,
    ) -> Result<Self> {
        if !(fill > 0.0 && fill < 1.0 && 0.0 <= z_lo && z_lo < z_hi) {
            return Err(Error::InvalidParameter("lamellar grating needs 0 < fill < 1, 0 <= z_lo < z_hi".into()));
        }
        let eps = FieldSource::callable(move |x| {
            if x[2] < z_lo {
                eps_substrate
            } else if x[2] < z_hi {
                if x[0].abs() < fill * PI {
                    eps_ridge
                } else {
                    eps_groove
                }
            } else {
                ONE
            }
        });
        Ok(Self::new(eps, FieldSource::Constant(ONE), height, r0, delta)?.named("lamellar"))
    }

    pub fn eps(&self, x: Point) -> C64 {
        self.eps.eval(x)
    }

    pub fn mu(&self, x: Point) -> C64 {
        self.mu.eval(x)
    }
}

/// Compactly supported permittivity perturbation living in the central cell.
#[derive(Clone, Debug)]
pub struct DefectPerturbation {
    pub q: Option<FieldSource>,
    pub scale: C64,
    pub profile: String,
}

impl DefectPerturbation {
    pub fn none() -> Self {
        Self { q: None, scale: ONE, profile: "none".into() }
    }

    pub fn from_fn(f: impl Fn(Point) -> C64 + Send + Sync + 'static) -> Self {
        Self { q: Some(FieldSource::callable(f)), scale: ONE, profile: "custom".into() }
    }

    /// Gaussian of the given width, set to zero for x3 >= top.
    pub fn gaussian_bump(amplitude: C64, center: Point, width: f64, top: f64) -> Self {
        let mut d = Self::from_fn(move |x| {
            if x[2] >= top {
                return ZERO;
            }
            let r2 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>();
            amplitude * (-r2 / (2.0 * width * width)).exp()
        });
        d.profile = "gaussian_bump".into();
        d
    }

    pub fn ball(amplitude: C64, center: Point, radius: f64) -> Self {
        let mut d = Self::from_fn(move |x| {
            let r2 = (0..3).map(|i| (x[i] - center[i]).powi(2)).sum::<f64>();
            if r2 < radius * radius {
                amplitude
            } else {
                ZERO
            }
        });
        d.profile = "ball".into();
        d
    }

    /// Constant change on the disk |x_T - axis| < radius for z_lo <= x3 < z_hi.
    pub fn cylinder(amplitude: C64, axis: [f64; 2], radius: f64, z_lo: f64, z_hi: f64) -> Self {
        let mut d = Self::from_fn(move |x| {
            let r2 = (x[0] - axis[0]).powi(2) + (x[1] - axis[1]).powi(2);
            if r2 < radius * radius && x[2] >= z_lo && x[2] < z_hi {
                amplitude
            } else {
                ZERO
            }
        });
        d.profile = "cylinder".into();
        d
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { q: self.q.clone(), scale: self.scale * s, profile: self.profile.clone() }
    }

    /// Value at a strip point; zero away from the central cell.
    pub fn eval(&self, x: Point) -> C64 {
        match &self.q {
            None => ZERO,
            Some(f) => {
                if x[0].abs() >= PI || x[1].abs() >= PI {
                    ZERO
                } else {
                    f.eval(x) * self.scale
                }
            }
        }
    }

    pub fn is_none(&self) -> bool {
        self.q.is_none()
    }
}

/// Transverse sample grid of the reference cell at the midpoints -pi + 2 pi (p + 1/2) / n.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TransverseGrid {
    pub n: usize,
}

impl TransverseGrid {
    pub fn point(&self, p: usize) -> f64 {
        -PI + 2.0 * PI * (p as f64 + 0.5) / self.n as f64
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|p| self.point(p)).collect()
    }

    pub fn sample(&self, z: f64, f: impl Fn(Point) -> C64) -> Vec<C64> {
        let xs = self.points();
        let mut out = Vec::with_capacity(self.n * self.n);
        for &x1 in &xs {
            for &x2 in &xs {
                out.push(f([x1, x2, z]));
            }
        }
        out
    }
}

/// Index of the coefficient m in a box of half-width `bandwidth`.
pub fn coeff_index(m: [i32; 2], bandwidth: usize) -> usize {
    let b = bandwidth as i32;
    ((m[0] + b) * (2 * b + 1) + (m[1] + b)) as usize
}

/// Discrete Fourier coefficients c_m = n^-2 sum_p c(x_p) e^{-i m.x_p} for |m|_inf <= bandwidth.
pub fn fourier_coeffs(grid: TransverseGrid, samples: &[C64], bandwidth: usize) -> Result<Vec<C64>> {
    let n = grid.n;
    if n < 2 * bandwidth + 1 {
        return Err(Error::Aliasing { grid: n, bandwidth });
    }
    assert_eq!(samples.len(), n * n, "sample count does not match the grid");
    let side = 2 * bandwidth + 1;
    let b = bandwidth as i32;
    let phase: Vec<C64> = (-b..=b)
        .flat_map(|m| (0..n).map(move |p| C64::from_polar(1.0, -(m as f64) * grid.point(p))))
        .collect();
    let mut partial = vec![ZERO; n * side];
    for p1 in 0..n {
        for m2 in 0..side {
            let row = &samples[p1 * n..(p1 + 1) * n];
            partial[p1 * side + m2] = row.iter().zip(&phase[m2 * n..(m2 + 1) * n]).map(|(s, e)| s * e).sum();
        }
    }
    let norm = 1.0 / (n * n) as f64;
    let mut out = vec![ZERO; side * side];
    for m1 in 0..side {
        for m2 in 0..side {
            let mut acc = ZERO;
            for p1 in 0..n {
                acc += partial[p1 * side + m2] * phase[m1 * n + p1];
            }
            out[m1 * side + m2] = acc * norm;
        }
    }
    Ok(out)
}

/// Fourier coefficients of eps and 1/mu at each depth sample point.
#[derive(Clone, Debug)]
pub struct MediumSamples {
    pub bandwidth: usize,
    pub depth_points: Vec<f64>,
    pub eps: Vec<Vec<C64>>,
    pub nu: Vec<Vec<C64>>,
    pub laterally_constant: bool,
}

impl MediumSamples {
    pub fn new(medium: &PeriodicMedium, grid: TransverseGrid, depth_points: &[f64], bandwidth: usize) -> Result<Self> {
        if grid.n < 2 * bandwidth + 1 {
            return Err(Error::Aliasing { grid: grid.n, bandwidth });
        }
        let side = 2 * bandwidth + 1;
        let centre = coeff_index([0, 0], bandwidth);
        let mut eps = Vec::with_capacity(depth_points.len());
        let mut nu = Vec::with_capacity(depth_points.len());
        let mut all_constant = true;
        for &z in depth_points {
            let coeffs = |src: &FieldSource, invert: bool| -> Result<(Vec<C64>, bool)> {
                let value = |x: Point| {
                    let v = src.eval(x);
                    if invert {
                        ONE / v
                    } else {
                        v
                    }
                };
                if src.is_constant() {
                    let mut c = vec![ZERO; side * side];
                    c[centre] = value([0.0, 0.0, z]);
                    return Ok((c, true));
                }
                let s = grid.sample(z, value);
                if s.iter().all(|v| *v == s[0]) {
                    let mut c = vec![ZERO; side * side];
                    c[centre] = s[0];
                    Ok((c, true))
                } else {
                    Ok((fourier_coeffs(grid, &s, bandwidth)?, false))
                }
            };
            let (e, ce) = coeffs(&medium.eps, false)?;
            let (m, cm) = coeffs(&medium.mu, true)?;
            if medium.mu.eval([0.0, 0.0, z]) == ZERO {
                return Err(Error::Medium(format!("mu vanishes at depth {z}")));
            }
            all_constant &= ce && cm;
            eps.push(e);
            nu.push(m);
        }
        Ok(Self { bandwidth, depth_points: depth_points.to_vec(), eps, nu, laterally_constant: all_constant })
    }

    /// (eps, 1/mu) coefficients of index `m` at depth sample `g`.
    #[inline]
    pub fn coeff(&self, g: usize, m: [i32; 2]) -> (C64, C64) {
        let i = coeff_index(m, self.bandwidth);
        (self.eps[g][i], self.nu[g][i])
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Severity {
    Pass,
    Warning,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationItem {
    pub name: &'static str,
    pub severity: Severity,
    pub detail: String,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ValidationReport {
    pub items: Vec<ValidationItem>,
}

impl ValidationReport {
    fn push(&mut self, name: &'static str, ok: bool, failure: Severity, detail: String) {
        self.items.push(ValidationItem { name, severity: if ok { Severity::Pass } else { failure }, detail });
    }

    pub fn has_errors(&self) -> bool {
        self.items.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn severity(&self, name: &str) -> Option<Severity> {
        self.items.iter().find(|i| i.name == name).map(|i| i.severity)
    }
}

/// Checks the parameter bounds, the exterior condition, the defect support and the
/// absorbing-ball uniqueness condition on a sample lattice with `resolution` points per axis.
pub fn validate_assumptions(
    medium: &PeriodicMedium,
    defect: &DefectPerturbation,
    absorption_ball: Option<Ball>,
    resolution: usize,
) -> ValidationReport {
    let n = resolution.max(4);
    let grid = TransverseGrid { n };
    let xs = grid.points();
    let zs: Vec<f64> = (0..n).map(|i| medium.height * (i as f64 + 0.5) / n as f64).collect();
    let mut report = ValidationReport::default();
    let (mut eps_min, mut eps_im_min, mut mu_min, mut mu_im_min) = (f64::MAX, f64::MAX, f64::MAX, f64::MAX);
    let mut exterior_dev: f64 = 0.0;
    let mut defect_im_min = f64::MAX;
    let mut defect_outside: f64 = 0.0;
    let mut absorbing = vec![false; n * n * n];
    for (i1, &x1) in xs.iter().enumerate() {
        for (i2, &x2) in xs.iter().enumerate() {
            for (i3, &z) in zs.iter().enumerate() {
                let x = [x1, x2, z];
                let (e, m) = (medium.eps(x), medium.mu(x));
                eps_min = eps_min.min(e.re);
                eps_im_min = eps_im_min.min(e.im);
                mu_min = mu_min.min(m.re);
                mu_im_min = mu_im_min.min(m.im);
                if z >= medium.r0 - medium.delta {
                    exterior_dev = exterior_dev.max((e - ONE).norm()).max((m - ONE).norm());
                }
                let q = defect.eval(x);
                defect_im_min = defect_im_min.min((e + q).im);
                if z >= medium.r0 {
                    defect_outside = defect_outside.max(q.norm());
                }
                absorbing[(i1 * n + i2) * n + i3] = e.im > 0.0;
            }
        }
    }
    report.push("eps_real_lower_bound", eps_min > 0.0, Severity::Error, format!("min Re eps = {eps_min:e}"));
    report.push("eps_imag_nonnegative", eps_im_min >= 0.0, Severity::Error, format!("min Im eps = {eps_im_min:e}"));
    report.push("mu_real_lower_bound", mu_min > 0.0, Severity::Error, format!("min Re mu = {mu_min:e}"));
    report.push("mu_imag_nonnegative", mu_im_min >= 0.0, Severity::Error, format!("min Im mu = {mu_im_min:e}"));
    report.push(
        "exterior_free_space",
        exterior_dev <= 1e-12,
        Severity::Error,
        format!("max |eps - 1|, |mu - 1| above r0 - delta = {exterior_dev:e}"),
    );
    // a shifted copy of the cell must not see the defect
    let shifted = defect.eval([xs[0] + 2.0 * PI, xs[0], zs[0]]).norm();
    report.push(
        "defect_support",
        defect_outside == 0.0 && shifted == 0.0,
        Severity::Error,
        format!("max |q| above r0 = {defect_outside:e}"),
    );
    report.push(
        "defect_imag_nonnegative",
        defect_im_min >= 0.0,
        Severity::Error,
        format!("min Im(eps + q) = {defect_im_min:e}"),
    );
    let (ball_ok, detail) = match absorption_ball {
        Some(ball) => {
            let mut inside = 0;
            let mut all = true;
            for (i1, &x1) in xs.iter().enumerate() {
                for (i2, &x2) in xs.iter().enumerate() {
                    for (i3, &z) in zs.iter().enumerate() {
                        let d2 = (x1 - ball.center[0]).powi(2) + (x2 - ball.center[1]).powi(2) + (z - ball.center[2]).powi(2);
                        if d2 < ball.radius * ball.radius {
                            inside += 1;
                            all &= absorbing[(i1 * n + i2) * n + i3];
                        }
                    }
                }
            }
            (inside > 0 && all, format!("{inside} samples inside the given ball"))
        }
        None => {
            let idx = |a: usize, b: usize, c: usize| (a * n + b) * n + c;
            let found = (0..n).any(|a| {
                (0..n).any(|b| {
                    (1..n - 1).any(|c| {
                        absorbing[idx(a, b, c)]
                            && absorbing[idx((a + 1) % n, b, c)]
                            && absorbing[idx((a + n - 1) % n, b, c)]
                            && absorbing[idx(a, (b + 1) % n, c)]
                            && absorbing[idx(a, (b + n - 1) % n, c)]
                            && absorbing[idx(a, b, c + 1)]
                            && absorbing[idx(a, b, c - 1)]
                    })
                })
            });
            (found, "searched the sample lattice for an absorbing neighbourhood".to_string())
        }
    };
    report.push("absorbing_ball", ball_ok, Severity::Warning, detail);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::mapped;

    #[test]
    fn constant_and_cosine_coefficients() {
        let grid = TransverseGrid { n: 8 };
        let c = fourier_coeffs(grid, &grid.sample(0.0, |_| C64::new(2.5, -1.0)), 2).unwrap();
        for (i, v) in c.iter().enumerate() {
            let expected = if i == coeff_index([0, 0], 2) { C64::new(2.5, -1.0) } else { ZERO };
            assert!((v - expected).norm() < 1e-14);
        }
        let c = fourier_coeffs(grid, &grid.sample(0.0, |x| C64::new(x[0].cos(), 0.0)), 2).unwrap();
        assert!((c[coeff_index([1, 0], 2)] - 0.5).norm() < 1e-14);
        assert!((c[coeff_index([-1, 0], 2)] - 0.5).norm() < 1e-14);
        assert!(c[coeff_index([0, 1], 2)].norm() < 1e-14);
    }

    #[test]
    fn aliasing_detected() {
        let grid = TransverseGrid { n: 4 };
        assert!(matches!(fourier_coeffs(grid, &vec![ONE; 16], 2), Err(Error::Aliasing { .. })));
    }

    #[test]
    fn smooth_field_matches_dense_quadrature() {
        let f = |x: Point| C64::new((x[0] + x[1]).sin().exp(), 0.0);
        let grid = TransverseGrid { n: 48 };
        let c = fourier_coeffs(grid, &grid.sample(0.0, f), 3).unwrap();
        // composite Gauss oracle over the cell
        let panels = 24;
        let rule: Vec<(f64, f64)> = (0..panels)
            .flat_map(|p| {
                let a = -PI + 2.0 * PI * p as f64 / panels as f64;
                mapped(8, a, a + 2.0 * PI / panels as f64)
            })
            .collect();
        for m in [[0, 0], [1, 1], [-2, -2], [3, 3], [1, 0], [2, -1]] {
            let mut acc = ZERO;
            for &(x1, w1) in &rule {
                for &(x2, w2) in &rule {
                    acc += f([x1, x2, 0.0]) * C64::from_polar(w1 * w2, -(m[0] as f64 * x1 + m[1] as f64 * x2));
                }
            }
            acc /= 4.0 * PI * PI;
            assert!((acc - c[coeff_index(m, 3)]).norm() < 1e-10, "mode {m:?}");
        }
    }

    #[test]
    fn truncated_series_round_trip() {
        let b = 3;
        let side = 2 * b + 1;
        let coeffs: Vec<C64> = (0..side * side).map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let grid = TransverseGrid { n: 7 };
        let field = grid.sample(0.0, |x| {
            let mut acc = ZERO;
            for m1 in -(b as i32)..=b as i32 {
                for m2 in -(b as i32)..=b as i32 {
                    acc += coeffs[coeff_index([m1, m2], b)] * C64::from_polar(1.0, m1 as f64 * x[0] + m2 as f64 * x[1]);
                }
            }
            acc
        });
        let back = fourier_coeffs(grid, &field, b).unwrap();
        for (a, c) in back.iter().zip(&coeffs) {
            assert!((a - c).norm() < 1e-12);
        }
    }

    #[test]
    fn real_fields_have_hermitian_coefficients() {
        let grid = TransverseGrid { n: 16 };
        let s = grid.sample(0.3, |x| C64::new(1.0 + 0.5 * (x[0] - 0.2 * x[1]).cos() + 0.1 * x[1].sin().powi(3), 0.0));
        let c = fourier_coeffs(grid, &s, 4).unwrap();
        for m1 in -4..=4 {
            for m2 in -4..=4 {
                let a = c[coeff_index([m1, m2], 4)];
                let b = c[coeff_index([-m1, -m2], 4)];
                assert!((a - b.conj()).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn periodic_extension() {
        let m = PeriodicMedium::lamellar(C64::new(4.0, 0.0), ONE, C64::new(2.0, 0.1), 0.4, 0.2, 0.6, 1.0, 0.8, 0.1).unwrap();
        for x in [[0.3, -1.0, 0.4], [2.9, 0.5, 0.1], [-1.4, 3.0, 0.5]] {
            let shifted = [x[0] + 2.0 * PI, x[1] - 4.0 * PI, x[2]];
            assert_eq!(m.eps(x), m.eps(shifted));
        }
    }

    #[test]
    fn validation_examples() {
        let vac = PeriodicMedium::vacuum(1.0, 1.0, 0.1).unwrap();
        let r = validate_assumptions(&vac, &DefectPerturbation::none(), None, 8);
        assert!(!r.has_errors());
        assert_eq!(r.severity("absorbing_ball"), Some(Severity::Warning));

        let ball = Ball { center: [0.0, 0.0, 0.45], radius: 0.4 };
        let eps = FieldSource::callable(move |x| {
            let d2 = x[0] * x[0] + x[1] * x[1] + (x[2] - 0.45).powi(2);
            if d2 < 0.16 {
                C64::new(1.0, 1.0)
            } else {
                ONE
            }
        });
        let lossy = PeriodicMedium::new(eps, FieldSource::Constant(ONE), 1.0, 1.0, 0.1).unwrap();
        let r = validate_assumptions(&lossy, &DefectPerturbation::none(), Some(ball), 16);
        assert_eq!(r.severity("absorbing_ball"), Some(Severity::Pass));
        let r = validate_assumptions(&lossy, &DefectPerturbation::none(), None, 32);
        assert_eq!(r.severity("absorbing_ball"), Some(Severity::Pass));

        let bad = PeriodicMedium::new(
            FieldSource::callable(|x| if x[2] < 0.2 { C64::new(-1.0, 0.0) } else { ONE }),
            FieldSource::Constant(ONE),
            1.0,
            1.0,
            0.1,
        )
        .unwrap();
        let r = validate_assumptions(&bad, &DefectPerturbation::none(), None, 8);
        assert!(r.has_errors());
        assert_eq!(r.severity("eps_real_lower_bound"), Some(Severity::Error));

        let leaky = DefectPerturbation::gaussian_bump(C64::new(0.0, -2.0), [0.0, 0.0, 0.3], 0.3, 0.8);
        let r = validate_assumptions(&vac, &leaky, None, 8);
        assert_eq!(r.severity("defect_imag_nonnegative"), Some(Severity::Error));

        let disk = DefectPerturbation::cylinder(C64::new(0.0, 0.5), [0.0, 0.0], 1.0, 0.1, 0.5);
        let r = validate_assumptions(&vac, &disk, None, 8);
        assert_eq!(r.severity("defect_support"), Some(Severity::Pass));
        assert!(disk.eval([0.5, 0.0, 0.3]) != ZERO && disk.eval([0.5, 0.0, 0.6]) == ZERO);
    }

    #[test]
    fn gridded_binary_round_trip_and_interpolation() {
        let g = GriddedField::from_fn([6, 5, 4], 2.0, 1.5, |x| C64::new(1.0 + x[2], x[0] * 0.1));
        let mut bytes = Vec::new();
        g.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 5 * 8 + 6 * 5 * 4 * 16);
        let back = GriddedField::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back, g);
        // linear in x3 is reproduced exactly between nodes
        let v = g.eval([-PI, -PI, 0.37]);
        assert!((v.re - 1.37).abs() < 1e-14);
        assert!(GriddedField::read_from(&bytes[..30]).is_err());
    }

    #[test]
    fn samples_detect_lateral_variation() {
        let grid = TransverseGrid { n: 9 };
        let layered = PeriodicMedium::layered(
            vec![Layer { top: 0.5, eps: C64::new(2.0, 0.3), mu: ONE }],
            1.0,
            0.8,
            0.1,
        )
        .unwrap();
        let s = MediumSamples::new(&layered, grid, &[0.2, 0.7], 4).unwrap();
        assert!(s.laterally_constant);
        assert_eq!(s.coeff(0, [0, 0]).0, C64::new(2.0, 0.3));
        assert_eq!(s.coeff(1, [0, 0]).0, ONE);
        let grating = PeriodicMedium::lamellar(C64::new(4.0, 0.0), ONE, ONE, 0.5, 0.2, 0.6, 1.0, 0.8, 0.1).unwrap();
        let s = MediumSamples::new(&grating, grid, &[0.4], 4).unwrap();
        assert!(!s.laterally_constant);
        assert!(MediumSamples::new(&grating, grid, &[0.4], 5).is_err());
    }
}
