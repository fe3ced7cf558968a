pub mod banded;
pub mod gmres;

pub use banded::{inverse_norm1_estimate, BandLu, BandMatrix};
pub use gmres::{gmres, GmresOptions, GmresOutcome};

use num_complex::Complex64 as C64;

pub fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
