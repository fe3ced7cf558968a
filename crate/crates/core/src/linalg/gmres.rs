//! Restarted GMRES for matrix-free complex operators.

use num_complex::Complex64 as C64;

use super::{dot, norm2};

#[derive(Clone, Copy, Debug)]
pub struct GmresOptions {
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self { tol: 1e-8, restart: 40, max_iter: 400 }
    }
}

#[derive(Clone, Debug)]
pub struct GmresOutcome {
    pub solution: Vec<C64>,
    pub iterations: usize,
    /// Relative residual after each inner step.
    pub history: Vec<f64>,
    pub converged: bool,
}

pub fn gmres<F>(mut apply: F, b: &[C64], opts: GmresOptions) -> GmresOutcome
where
    F: FnMut(&[C64]) -> Vec<C64>,
{
    let n = b.len();
    let zero = C64::new(0.0, 0.0);
    let bnorm = norm2(b);
    let mut x = vec![zero; n];
    let mut history = Vec::new();
    if bnorm == 0.0 {
        return GmresOutcome { solution: x, iterations: 0, history, converged: true };
    }
    let mut iterations = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<C64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm2(&r);
        if beta / bnorm <= opts.tol {
            return GmresOutcome { solution: x, iterations, history, converged: true };
        }
        if iterations >= opts.max_iter {
            return GmresOutcome { solution: x, iterations, history, converged: false };
        }
        let m = opts.restart.max(1);
        let mut basis: Vec<Vec<C64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<C64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<C64> = Vec::new();
        let mut g = vec![C64::new(beta, 0.0)];
        let mut steps = 0;
        while steps < m && iterations < opts.max_iter {
            let mut w = apply(&basis[steps]);
            let mut col = vec![zero; steps + 2];
            // modified Gram-Schmidt, one reorthogonalisation pass
            for _ in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = dot(v, &w);
                    col[i] += c;
                    for (wk, vk) in w.iter_mut().zip(v) {
                        *wk -= c * vk;
                    }
                }
            }
            let hn = norm2(&w);
            col[steps + 1] = C64::new(hn, 0.0);
            for i in 0..steps {
                let (a, bb) = (col[i], col[i + 1]);
                col[i] = cs[i] * a + sn[i] * bb;
                col[i + 1] = -sn[i].conj() * a + cs[i] * bb;
            }
            let (a, bb) = (col[steps], col[steps + 1]);
            let nu = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            let (c, s) = if a.norm() == 0.0 {
                (0.0, C64::new(1.0, 0.0))
            } else {
                let phase = a / a.norm();
                (a.norm() / nu, phase * bb.conj() / nu)
            };
            col[steps] = c * a + s * bb;
            col[steps + 1] = zero;
            cs.push(c);
            sn.push(s);
            let gk = g[steps];
            g[steps] = c * gk;
            g.push(-s.conj() * gk);
            h.push(col);
            steps += 1;
            iterations += 1;
            let rel = g[steps].norm() / bnorm;
            history.push(rel);
            if rel <= opts.tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        // back substitution on the triangular factor
        let mut y = vec![zero; steps];
        for i in (0..steps).rev() {
            let mut s = g[i];
            for j in i + 1..steps {
                s -= h[j][i] * y[j];
            }
            y[i] = s / h[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xk, vk) in x.iter_mut().zip(&basis[j]) {
                *xk += yj * vk;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_nonnormal_system() {
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<Vec<C64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let d = if i == j { C64::new(3.0, 1.0) } else { C64::new(0.0, 0.0) };
                        d + C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * (0.3 / (n as f64).sqrt())
                    })
                    .collect()
            })
            .collect();
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let apply = |x: &[C64]| a.iter().map(|row| row.iter().zip(x).map(|(r, x)| r * x).sum()).collect();
        let out = gmres(apply, &b, GmresOptions { tol: 1e-12, restart: 10, max_iter: 200 });
        assert!(out.converged);
        let ax: Vec<C64> = a.iter().map(|row| row.iter().zip(&out.solution).map(|(r, x)| r * x).sum()).collect();
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
        assert!(res <= 1e-11 * norm2(&b));
    }

    #[test]
    fn identity_converges_in_one_step() {
        let b = vec![C64::new(1.0, -2.0); 5];
        let out = gmres(|x| x.to_vec(), &b, GmresOptions::default());
        assert!(out.converged && out.iterations == 1);
    }

    #[test]
    fn reports_stall() {
        // nilpotent shift: Krylov space of e_0 never reaches the solution within two steps
        let n = 8;
        let shift = |x: &[C64]| {
            let mut y = vec![C64::new(0.0, 0.0); n];
            y[1..n].copy_from_slice(&x[..(n - 1)]);
            y[0] = x[n - 1];
            y
        };
        let mut b = vec![C64::new(0.0, 0.0); n];
        b[0] = C64::new(1.0, 0.0);
        let out = gmres(shift, &b, GmresOptions { tol: 1e-12, restart: 2, max_iter: 6 });
        assert!(!out.converged);
        assert!(!out.history.is_empty());
    }
}
