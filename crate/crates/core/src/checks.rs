//! Acceptance criteria A1 to A9 as runnable reports, shared by the test suite and the CLI.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bloch::{bloch_forward, bloch_inverse, build_alpha_quadrature, CellIndexedField, DEFAULT_GRADING, DEFAULT_N_BASE};
use crate::cell_solver::{divergence_residual, energy_identity_check, CellSolver, Discretization, ModalField};
use crate::dtn::{n_apply_regular, pairing, t_apply, DtnMultipliers, TraceCoefficients};
use crate::error::Result;
use crate::lattice_modes::{ModeSet, QuasiPeriodicity};
use crate::linalg::{norm2, GmresOptions};
use crate::media::{DefectPerturbation, FieldSource, Layer, MediumSamples, PeriodicMedium};
use crate::oracles::{dense_smw_oracle, sqrt_fit_oracle, ManufacturedCase};
use crate::strip_solver::{SourceSpec, StripOptions, StripSolver};

#[derive(Clone, Debug, Serialize)]
pub struct CriterionReport {
    pub id: &'static str,
    pub title: &'static str,
    pub passed: bool,
    /// Main measured quantity and the bound it was compared with.
    pub measured: f64,
    pub bound: f64,
    pub runtime_s: f64,
    pub time_limit_s: f64,
    pub detail: String,
}

impl fmt::Display for CriterionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: measured {:.3e} vs bound {:.3e}, {:.2} s (limit {} s); {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.measured,
            self.bound,
            self.runtime_s,
            self.time_limit_s,
            self.detail
        )
    }
}

struct Outcome {
    passed: bool,
    measured: f64,
    bound: f64,
    detail: String,
}

fn timed(
    id: &'static str,
    title: &'static str,
    time_limit_s: f64,
    body: impl FnOnce() -> Result<Outcome>,
) -> CriterionReport {
    let start = Instant::now();
    let result = body();
    let runtime_s = start.elapsed().as_secs_f64();
    match result {
        Ok(o) => CriterionReport {
            id,
            title,
            passed: o.passed && runtime_s < time_limit_s,
            measured: o.measured,
            bound: o.bound,
            runtime_s,
            time_limit_s,
            detail: o.detail,
        },
        Err(e) => CriterionReport {
            id,
            title,
            passed: false,
            measured: f64::NAN,
            bound: f64::NAN,
            runtime_s,
            time_limit_s,
            detail: format!("error: {e}"),
        },
    }
}

/// Rank-update formula against dense inversion on 100 random systems of size 40.
pub fn a1_smw_identity() -> CriterionReport {
    timed("A1", "rank-update identity", 10.0, || {
        let (mut worst, mut skipped) = (0.0f64, 0);
        for seed in 0..100u64 {
            let report = dense_smw_oracle(40, 1 + (seed % 3) as usize, seed);
            if report.skipped {
                skipped += 1;
            } else {
                worst = worst.max(report.discrepancy);
            }
        }
        Ok(Outcome {
            passed: worst <= 1e-10 && skipped == 0,
            measured: worst,
            bound: 1e-10,
            detail: format!("max relative error over 100 seeds, {skipped} skipped"),
        })
    })
}

/// Sign inequalities of the two boundary operators on random traces.
pub fn a2_dtn_signs() -> CriterionReport {
    timed("A2", "boundary operator signs", 5.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst = f64::NEG_INFINITY;
        let mut traces = 0;
        for _ in 0..200 {
            let k = rng.gen_range(0.05..3.0);
            let alpha = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
            let modes = ModeSet::new(k, QuasiPeriodicity::new(alpha)?, rng.gen_range(0..=4));
            let mult = DtnMultipliers::unsplit(&modes)?;
            for _ in 0..50 {
                let phi = TraceCoefficients(
                    (0..modes.len())
                        .map(|_| [0, 1].map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                        .collect(),
                );
                let scale = phi.norm_sq();
                let t = pairing(&t_apply(&mult, &phi), &phi);
                let n = pairing(&n_apply_regular(&mult, &phi), &phi);
                // every entry must be <= 0 for the inequalities to hold
                for v in [t.re, -t.im, n.re, n.im] {
                    worst = worst.max(v / scale);
                }
                traces += 1;
            }
        }
        Ok(Outcome {
            passed: worst <= 1e-12,
            measured: worst,
            bound: 1e-12,
            detail: format!("largest signed violation over {traces} traces"),
        })
    })
}

/// Relative L2 error and divergence residual of one manufactured solve with `n` depth elements.
pub fn manufactured_solve(case: &ManufacturedCase, n: usize) -> Result<(f64, f64)> {
    let disc = Discretization::new(case.truncation, n, case.height)?;
    let medium = case.medium()?;
    let samples = MediumSamples::new(&medium, disc.grid, &disc.depth_points(), 2 * case.truncation)?;
    let solver = CellSolver::new(&disc, &samples, case.k, QuasiPeriodicity::new(case.alpha)?, 1e-6 * case.k)?;
    let load = case.load_field(&disc.depth_points());
    let sol = solver.solve(&load)?;
    let div = divergence_residual(&sol, &disc, &samples, &load, case.k);
    Ok((case.relative_l2_error(&sol), div))
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn observed_orders(values: &[f64]) -> Vec<f64> {
    values.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}

/// Convergence of the outgoing manufactured mode under depth refinement.
pub fn a3_manufactured() -> CriterionReport {
    timed("A3", "manufactured outgoing mode", 30.0, || {
        let case = ManufacturedCase::outgoing_mode(1.0, [0.0, 0.0]);
        let errors: Vec<f64> =
            [32, 64, 128].iter().map(|&n| manufactured_solve(&case, n).map(|r| r.0)).collect::<Result<_>>()?;
        let orders = observed_orders(&errors);
        let orders_ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.2);
        Ok(Outcome {
            passed: orders_ok && errors[2] <= 1e-4,
            measured: errors[2],
            bound: 1e-4,
            detail: format!("errors {} at N = 32, 64, 128, observed orders {orders:.3?} (need 2.0 +- 0.2)", sci(&errors)),
        })
    })
}

/// Bloch round trip and Parseval identity on random 3x3-cell data with the default rule.
pub fn a4_bloch_round_trip() -> CriterionReport {
    timed("A4", "Bloch round trip and Parseval", 5.0, || {
        let quad = build_alpha_quadrature(0.7, 1, DEFAULT_N_BASE, DEFAULT_GRADING, 1e-8)?;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n_samples = 24;
        let mut field = CellIndexedField::new(n_samples);
        for j1 in -1..=1 {
            for j2 in -1..=1 {
                let v = (0..n_samples).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
                field.insert([j1, j2], v)?;
            }
        }
        let family: Vec<Vec<C64>> = quad.nodes.iter().map(|&a| bloch_forward(&field, a)).collect();
        let mut round_trip = 0.0f64;
        for j1 in -2..=2 {
            for j2 in -2..=2 {
                let back = bloch_inverse(&family, &quad, [j1, j2]);
                let err = match field.get([j1, j2]) {
                    Some(orig) => back.iter().zip(orig).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt() / norm2(orig),
                    None => norm2(&back),
                };
                round_trip = round_trip.max(err);
            }
        }
        let spectral: f64 =
            family.iter().zip(&quad.weights).map(|(f, w)| w * f.iter().map(|v| v.norm_sqr()).sum::<f64>()).sum();
        let parseval = (spectral - field.norm_sq()).abs() / field.norm_sq();
        Ok(Outcome {
            passed: round_trip <= 1e-8 && parseval <= 1e-6,
            measured: round_trip,
            bound: 1e-8,
            detail: format!("{} nodes, Parseval mismatch {parseval:.3e} (need <= 1e-6)", quad.len()),
        })
    })
}

/// Quasi-periodicities approaching the cutoff circle of one mode radially from inside.
#[derive(Clone, Debug)]
pub struct CutoffPath {
    pub k: f64,
    pub mode: [i32; 2],
    pub angle: f64,
    pub truncation: usize,
    pub depth_elems: usize,
    pub cutoff_tol: f64,
}

impl Default for CutoffPath {
    fn default() -> Self {
        Self { k: 1.7, mode: [1, 1], angle: 0.7, truncation: 1, depth_elems: 4, cutoff_tol: 1e-3 }
    }
}

/// One solve along the path.
#[derive(Clone, Debug, Serialize)]
pub struct PathSample {
    pub offset: f64,
    pub alpha: [f64; 2],
    pub beta: f64,
    pub singular_modes: usize,
    pub solution_norm: f64,
    pub rank_update_condition: f64,
    pub direct_condition: Option<f64>,
    #[serde(skip)]
    pub coeffs: Vec<C64>,
}

impl CutoffPath {
    /// alpha with |alpha + mode| = k - offset along the path direction.
    pub fn alpha(&self, offset: f64) -> [f64; 2] {
        let r = self.k - offset;
        [r * self.angle.cos() - self.mode[0] as f64, r * self.angle.sin() - self.mode[1] as f64]
    }

    /// Lamellar grating with a smooth load concentrated in the grating band.
    pub fn medium(&self) -> Result<PeriodicMedium> {
        PeriodicMedium::lamellar(
            C64::new(2.25, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.5, 0.0),
            0.4,
            0.2,
            0.5,
            1.0,
            0.75,
            0.15,
        )
    }

    pub fn sample(&self, offset: f64) -> Result<PathSample> {
        let disc = Discretization::new(self.truncation, self.depth_elems, 1.0)?;
        let medium = self.medium()?;
        let points = disc.depth_points();
        let samples = MediumSamples::new(&medium, disc.grid, &points, 2 * self.truncation)?;
        let alpha = self.alpha(offset);
        let solver = CellSolver::new(&disc, &samples, self.k, QuasiPeriodicity::new(alpha)?, self.cutoff_tol)?;
        let load = ModalField::from_fn(solver.modes.len(), &points, |m, z| {
            let bump = if z < 0.6 { (PI * z / 0.6).sin().powi(2) } else { 0.0 };
            let w = 1.0 / (1.0 + m as f64);
            [C64::new(bump * w, 0.0), C64::new(0.5 * bump, 0.3 * bump * w), C64::new(0.0, bump)]
        });
        let sol = solver.solve(&load)?;
        let cond = solver.conditioning()?;
        let target = solver.modes.position(self.mode).expect("mode inside the box");
        Ok(PathSample {
            offset,
            alpha,
            beta: solver.modes.beta_j(target).re,
            singular_modes: solver.classification.singular.len(),
            solution_norm: sol.coeff_norm(),
            rank_update_condition: cond.rank_update_path(),
            direct_condition: cond.direct,
            coeffs: sol.coeffs,
        })
    }

    pub fn sweep(&self, offsets: &[f64]) -> Result<Vec<PathSample>> {
        offsets.iter().map(|&t| self.sample(t)).collect()
    }
}

pub const PATH_OFFSETS: [f64; 9] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10];

/// Uniform solution bound and conditioning gap along a path into a cutoff circle.
pub fn a5_near_cutoff() -> CriterionReport {
    timed("A5", "near-cutoff stability", 60.0, || {
        let path = CutoffPath::default();
        let sweep = path.sweep(&PATH_OFFSETS)?;
        let last: Vec<f64> = sweep[sweep.len() - 3..].iter().map(|s| s.solution_norm).collect();
        let hi = last.iter().copied().fold(f64::MIN, f64::max);
        let lo = last.iter().copied().fold(f64::MAX, f64::min);
        let variation = (hi - lo) / lo;
        let at = sweep.iter().find(|s| s.offset == 1e-8).expect("offset 1e-8 on the path");
        let ratio = at.direct_condition.unwrap_or(f64::INFINITY) / at.rank_update_condition;
        Ok(Outcome {
            passed: variation < 0.01 && ratio >= 1e3,
            measured: variation,
            bound: 0.01,
            detail: format!(
                "norm variation over offsets 1e-8..1e-10; condition ratio direct/rank-update at 1e-8 = {ratio:.3e} (need >= 1e3)"
            ),
        })
    })
}

/// Least-squares fit u = a + beta b over the five smallest offsets of the A5 path.
pub fn a6_sqrt_decomposition() -> CriterionReport {
    timed("A6", "square-root decomposition", 60.0, || {
        let path = CutoffPath::default();
        let sweep = path.sweep(&PATH_OFFSETS[PATH_OFFSETS.len() - 5..])?;
        let betas: Vec<f64> = sweep.iter().map(|s| s.beta).collect();
        let values: Vec<Vec<C64>> = sweep.into_iter().map(|s| s.coeffs).collect();
        let fit = sqrt_fit_oracle(&betas, &values)?;
        Ok(Outcome {
            passed: fit.residual <= 1e-6,
            measured: fit.residual,
            bound: 1e-6,
            detail: format!("relative fit residual over offsets 1e-6..1e-10, beta in [{:.2e}, {:.2e}]", betas[4], betas[0]),
        })
    })
}

/// Absorbing layered scenario used for the defect checks.
pub struct DefectScenario {
    pub k: f64,
    pub truncation: usize,
    pub depth_elems: usize,
    pub n_base: usize,
    pub defect_amplitude: C64,
}

impl Default for DefectScenario {
    fn default() -> Self {
        Self { k: 0.3, truncation: 2, depth_elems: 32, n_base: 8, defect_amplitude: C64::new(0.0, 0.4) }
    }
}

impl DefectScenario {
    pub fn medium(&self) -> Result<PeriodicMedium> {
        let layers = vec![
            Layer { top: 0.3, eps: C64::new(1.0, 0.5), mu: C64::new(1.0, 0.0) },
            Layer { top: 0.6, eps: C64::new(1.5, 0.3), mu: C64::new(1.0, 0.0) },
        ];
        PeriodicMedium::layered(layers, 1.0, 0.8, 0.2)
    }

    pub fn source(&self) -> SourceSpec {
        SourceSpec::new(vec![[0, 0], [1, 0]], 0.6, |x| {
            let z = x[2];
            let s = if z < 0.6 { (PI * z / 0.6).sin().powi(2) } else { 0.0 };
            let lateral = (0.5 * x[0]).cos().powi(2) * (0.5 * x[1]).cos().powi(2);
            [C64::new(0.0, 0.0), C64::new(s * lateral, 0.0), C64::new(0.0, 0.5 * s * lateral)]
        })
    }

    pub fn defect(&self) -> DefectPerturbation {
        DefectPerturbation::cylinder(self.defect_amplitude, [0.0, 0.0], 1.0, 0.1, 0.7)
    }

    pub fn solver(&self, threads: usize, tol: f64) -> Result<StripSolver> {
        let disc = Discretization::new(self.truncation, self.depth_elems, 1.0)?;
        let cutoff_tol = 1e-6 * self.k;
        let quad = build_alpha_quadrature(self.k, self.truncation, self.n_base, DEFAULT_GRADING, cutoff_tol)?;
        let options = StripOptions {
            threads,
            gmres: GmresOptions { tol, restart: 40, max_iter: 400 },
            ..StripOptions::default()
        };
        StripSolver::new(&disc, &self.medium()?, self.k, quad, cutoff_tol, options)
    }
}

/// q = 0 reduction and second-order accuracy of the first Born approximation.
pub fn a7_defect_consistency(threads: usize) -> CriterionReport {
    timed("A7", "defect consistency", 180.0, || {
        let scenario = DefectScenario::default();
        let solver = scenario.solver(threads, 1e-12)?;
        let periodic = solver.solve_periodic(&scenario.source())?;
        let reduced = solver.perturb(periodic.clone(), &DefectPerturbation::none())?;
        let bitwise = reduced.family.iter().zip(&periodic.family).all(|(a, b)| a.coeffs == b.coeffs);
        let defect = scenario.defect();
        let mut errors = Vec::new();
        for s in [1.0, 0.5, 0.25] {
            let q = defect.scaled(s);
            let full = solver.perturb(periodic.clone(), &q)?;
            let central = &full.defect.as_ref().expect("defect report").central;
            let born = solver.born_approximation(&periodic, &q)?;
            let diff: Vec<C64> = central.iter().zip(&born).map(|(a, b)| a - b).collect();
            errors.push(norm2(&diff));
        }
        let orders = observed_orders(&errors);
        let orders_ok = orders.iter().all(|p| (p - 2.0).abs() <= 0.3);
        Ok(Outcome {
            passed: bitwise && orders_ok,
            measured: orders.iter().fold(0.0f64, |m, p| m.max((p - 2.0).abs())),
            bound: 0.3,
            detail: format!(
                "q = 0 bitwise: {bitwise}; Born errors {}, exponents {orders:.3?}; {} alpha nodes",
                sci(&errors),
                solver.quad.len()
            ),
        })
    })
}

/// Energy balance with one propagating mode and uniqueness with an absorbing ball.
pub fn a8_energy_balance() -> CriterionReport {
    timed("A8", "energy balance", 30.0, || {
        let k = 0.3;
        let disc = Discretization::new(1, 16, 1.0)?;
        let medium = PeriodicMedium::lamellar(
            C64::new(2.25, 0.0),
            C64::new(1.0, 0.0),
            C64::new(1.5, 0.0),
            0.4,
            0.2,
            0.5,
            1.0,
            0.75,
            0.15,
        )?;
        let points = disc.depth_points();
        let samples = MediumSamples::new(&medium, disc.grid, &points, 2)?;
        let mut worst = 0.0f64;
        let mut propagating = Vec::new();
        for alpha in [[0.05, 0.02], [-0.1, 0.2], [0.25, -0.05]] {
            let solver = CellSolver::new(&disc, &samples, k, QuasiPeriodicity::new(alpha)?, 1e-8)?;
            propagating.push((0..solver.modes.len()).filter(|&m| solver.modes.is_propagating(m)).count());
            let load = ModalField::from_fn(solver.modes.len(), &points, |m, z| {
                let s = if z < 0.6 { (PI * z / 0.6).sin().powi(2) } else { 0.0 };
                [C64::new(0.2 * s, 0.1 * s), C64::new(s, 0.0), C64::new(0.0, s / (1.0 + m as f64))]
            });
            let rhs = solver.load(&load)?;
            let sol = solver.solve_rhs(&rhs)?;
            worst = worst.max(energy_identity_check(&solver, &sol, &rhs).balance_error);
        }
        let one_family = propagating.iter().all(|&p| p == 1);

        // absorbing ball, zero data
        let ball = FieldSource::callable(|x| {
            let r2 = x[0] * x[0] + x[1] * x[1] + (x[2] - 0.4).powi(2);
            if r2 < 0.25 {
                C64::new(1.0, 0.5)
            } else {
                C64::new(1.0, 0.0)
            }
        });
        let absorbing = PeriodicMedium::new(ball, FieldSource::Constant(C64::new(1.0, 0.0)), 1.0, 0.75, 0.15)?;
        let samples = MediumSamples::new(&absorbing, disc.grid, &points, 2)?;
        let solver = CellSolver::new(&disc, &samples, k, QuasiPeriodicity::new([0.05, 0.02])?, 1e-8)?;
        let zero = solver.solve(&ModalField::zeros(solver.modes.len(), points.len()))?;
        let unique = zero.l2_norm() <= 1e-10;
        Ok(Outcome {
            passed: worst <= 1e-6 && one_family && unique,
            measured: worst,
            bound: 1e-6,
            detail: format!(
                "propagating modes per alpha {propagating:?}; zero-data solution norm {:.3e} (need <= 1e-10)",
                zero.l2_norm()
            ),
        })
    })
}

/// Decay of the weak divergence residual under depth refinement on the manufactured mode.
pub fn a9_divergence_residual() -> CriterionReport {
    timed("A9", "divergence residual", 30.0, || {
        // oblique incidence with a longitudinal part; otherwise the residual vanishes identically
        let case = ManufacturedCase::polarized_outgoing_mode(1.0, [0.3, 0.2], [0.8, 0.6]);
        let residuals: Vec<f64> =
            [32, 64, 128].iter().map(|&n| manufactured_solve(&case, n).map(|r| r.1)).collect::<Result<_>>()?;
        let factors: Vec<f64> = residuals.windows(2).map(|w| w[0] / w[1]).collect();
        let worst = factors.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(Outcome {
            passed: worst >= 1.8,
            measured: worst,
            bound: 1.8,
            detail: format!("residuals {} at N = 32, 64, 128; reduction factors {factors:.3?}", sci(&residuals)),
        })
    })
}

/// Criteria A1 to A3.
pub fn quick_suite() -> Vec<CriterionReport> {
    vec![a1_smw_identity(), a2_dtn_signs(), a3_manufactured()]
}

pub fn full_suite(threads: usize) -> Vec<CriterionReport> {
    vec![
        a1_smw_identity(),
        a2_dtn_signs(),
        a3_manufactured(),
        a4_bloch_round_trip(),
        a5_near_cutoff(),
        a6_sqrt_decomposition(),
        a7_defect_consistency(threads),
        a8_energy_balance(),
        a9_divergence_residual(),
    ]
}
