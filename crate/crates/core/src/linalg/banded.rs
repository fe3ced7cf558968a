//! Complex band matrices with partial-pivoting LU.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Band matrix stored row by row; row `i` holds columns `i - kl ..= i + ku`.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<C64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self { n, kl, ku, data: vec![ZERO; n * (kl + ku + 1)] }
    }

    pub fn from_dense(rows: &[Vec<C64>]) -> Self {
        let n = rows.len();
        let (mut kl, mut ku) = (0, 0);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v != ZERO {
                    if j < i {
                        kl = kl.max(i - j);
                    } else {
                        ku = ku.max(j - i);
                    }
                }
            }
        }
        let mut out = Self::zeros(n, kl, ku);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v != ZERO {
                    out.add(i, j, *v);
                }
            }
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.ku, "({i},{j}) outside band");
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: C64) {
        let s = self.slot(i, j);
        self.data[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        if j + self.kl < i || j > i + self.ku || i >= self.n || j >= self.n {
            ZERO
        } else {
            self.data[self.slot(i, j)]
        }
    }

    fn cols(&self, i: usize) -> std::ops::Range<usize> {
        i.saturating_sub(self.kl)..(i + self.ku + 1).min(self.n)
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        (0..self.n)
            .map(|i| self.cols(i).map(|j| self.data[self.slot(i, j)] * x[j]).sum())
            .collect()
    }

    pub fn apply_adjoint(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; self.n];
        for i in 0..self.n {
            for j in self.cols(i) {
                y[j] += self.data[self.slot(i, j)].conj() * x[i];
            }
        }
        y
    }

    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            for j in self.cols(i) {
                col[j] += self.data[self.slot(i, j)].norm();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    pub fn factor(&self) -> Result<BandLu> {
        BandLu::new(self)
    }
}

/// LU factors with row pivoting: U rows carry `kl + ku` superdiagonals after fill-in.
#[derive(Clone, Debug)]
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    work: Vec<C64>,
    lower: Vec<C64>,
    piv: Vec<usize>,
}

impl BandLu {
    fn new(a: &BandMatrix) -> Result<Self> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let width = 2 * kl + ku + 1;
        let mut work = vec![ZERO; n * width];
        for i in 0..n {
            for j in a.cols(i) {
                work[i * width + (j + kl - i)] = a.data[a.slot(i, j)];
            }
        }
        let mut lower = vec![ZERO; n * kl];
        let mut piv = vec![0; n];
        let scale = a.data.iter().fold(0.0f64, |m, v| m.max(v.norm()));
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = work[at(k, k)].norm();
            for i in k + 1..=last {
                let v = work[at(i, k)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || best <= 1e-300 * scale.max(1e-300) {
                return Err(Error::SingularMatrix(k));
            }
            let jend = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jend {
                    work.swap(at(k, j), at(p, j));
                }
            }
            piv[k] = p;
            let pivot = work[at(k, k)];
            let (head, tail) = work.split_at_mut((k + 1) * width);
            let row_k = &head[k * width..];
            for i in k + 1..=last {
                let off = (i - k - 1) * width;
                let m = tail[off + (k + kl - i)] / pivot;
                lower[k * kl + (i - k - 1)] = m;
                if m != ZERO {
                    for j in k + 1..=jend {
                        tail[off + (j + kl - i)] -= m * row_k[j + kl - k];
                    }
                }
            }
        }
        Ok(Self { n, kl, ku, width, work, lower, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn u(&self, i: usize, j: usize) -> C64 {
        self.work[i * self.width + (j + self.kl - i)]
    }

    pub fn solve_in_place(&self, x: &mut [C64]) {
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                x.swap(k, p);
            }
            let xk = x[k];
            if xk != ZERO {
                for i in k + 1..=(k + kl).min(n - 1) {
                    x[i] -= self.lower[k * kl + (i - k - 1)] * xk;
                }
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let mut s = x[k];
            for j in k + 1..=(k + reach).min(n - 1) {
                s -= self.u(k, j) * x[j];
            }
            x[k] = s / self.u(k, k);
        }
    }

    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves A^H y = b.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let (n, kl) = (self.n, self.kl);
        let reach = self.kl + self.ku;
        let mut z = b.to_vec();
        for k in 0..n {
            z[k] /= self.u(k, k).conj();
            let zk = z[k];
            if zk != ZERO {
                for j in k + 1..=(k + reach).min(n - 1) {
                    z[j] -= self.u(k, j).conj() * zk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = z[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                s -= self.lower[k * kl + (i - k - 1)].conj() * z[i];
            }
            z[k] = s;
            let p = self.piv[k];
            if p != k {
                z.swap(k, p);
            }
        }
        z
    }
}

/// Estimate of ||A^{-1}||_1 from solves with A and A^H (Hager's method in Higham's complex form).
pub fn inverse_norm1_estimate<S, T>(n: usize, solve: S, solve_adjoint: T) -> f64
where
    S: Fn(&[C64]) -> Vec<C64>,
    T: Fn(&[C64]) -> Vec<C64>,
{
    if n == 0 {
        return 0.0;
    }
    let norm1 = |v: &[C64]| v.iter().map(|x| x.norm()).sum::<f64>();
    let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
    let mut est = 0.0;
    let mut last_j = usize::MAX;
    for iter in 0..5 {
        let y = solve(&x);
        let new_est = norm1(&y);
        if iter > 0 && new_est <= est {
            break;
        }
        est = new_est;
        let xi: Vec<C64> =
            y.iter().map(|v| if v.norm() == 0.0 { C64::new(1.0, 0.0) } else { v / v.norm() }).collect();
        let z = solve_adjoint(&xi);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .map(|(i, v)| (i, v.norm()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let ztx: C64 = z.iter().zip(&x).map(|(a, b)| a.conj() * b).sum();
        if iter > 0 && (zmax <= ztx.re || j == last_j) {
            break;
        }
        last_j = j;
        x = vec![ZERO; n];
        x[j] = C64::new(1.0, 0.0);
    }
    let alt: Vec<C64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
            C64::new(s * (1.0 + t), 0.0)
        })
        .collect();
    let alt_est = 2.0 * norm1(&solve(&alt)) / (3.0 * n as f64);
    est.max(alt_est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> (BandMatrix, DMatrix<C64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::<C64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                // small diagonal forces pivoting; triangular bands need a dominant one
                let scale = match (i == j, kl > 0 && ku > 0) {
                    (true, true) => 0.05,
                    (true, false) => 4.0,
                    _ => 1.0,
                };
                let v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
                band.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        (band, dense)
    }

    fn random_vec(n: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()
    }

    #[test]
    fn lu_matches_dense_solve() {
        for (n, kl, ku, seed) in [(30, 3, 2, 1), (50, 7, 7, 2), (12, 0, 4, 3), (20, 5, 0, 4), (1, 0, 0, 5)] {
            let (band, dense) = random_band(n, kl, ku, seed);
            let b = random_vec(n, seed + 100);
            let x = band.factor().unwrap().solve(&b);
            let reference = dense.clone().lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
            let err: f64 = x.iter().zip(reference.iter()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err < 1e-10 * reference.norm(), "n={n} kl={kl} ku={ku}: {err}");
            // residual through the band product
            let r = band.apply(&x);
            let res: f64 = r.iter().zip(&b).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            let x_norm: f64 = x.iter().map(|v| v.norm()).sum();
            assert!(res < 1e-13 * band.norm1() * x_norm.max(1.0), "residual {res}");
        }
    }

    #[test]
    fn adjoint_solve_and_product() {
        let (band, dense) = random_band(40, 4, 6, 9);
        let b = random_vec(40, 10);
        let y = band.factor().unwrap().solve_adjoint(&b);
        let check = band.apply_adjoint(&y);
        for (c, b) in check.iter().zip(&b) {
            assert!((c - b).norm() < 1e-10);
        }
        let dense_adj = dense.adjoint() * nalgebra::DVector::from_vec(b.clone());
        let via_band = band.apply_adjoint(&b);
        for (a, b) in via_band.iter().zip(dense_adj.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let band = BandMatrix::zeros(4, 1, 1);
        assert!(matches!(band.factor(), Err(Error::SingularMatrix(0))));
    }

    #[test]
    fn condition_estimate_close_to_exact() {
        let (band, dense) = random_band(30, 3, 3, 17);
        let lu = band.factor().unwrap();
        let est = inverse_norm1_estimate(30, |b| lu.solve(b), |b| lu.solve_adjoint(b));
        let inv = dense.clone().try_inverse().unwrap();
        let exact = (0..30).map(|j| inv.column(j).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
        assert!(est <= exact * (1.0 + 1e-10) && est >= exact / 10.0, "est {est} exact {exact}");
        let dense_norm = (0..30).map(|j| dense.column(j).iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max);
        assert!((band.norm1() - dense_norm).abs() < 1e-12);
    }
}
