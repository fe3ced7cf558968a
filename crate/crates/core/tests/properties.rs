use std::f64::consts::PI;

use layerscat::bloch::{
    bloch_forward, bloch_inverse, build_alpha_quadrature, modal_synthesis, modal_transform, AlphaQuadrature,
    CellIndexedField,
};
use layerscat::cell_solver::{coercivity_check, energy_identity_check, CellSolver, Discretization, ModalField};
use layerscat::dtn::{n_apply_regular, pairing, t_apply, DtnMultipliers, TraceCoefficients};
use layerscat::lattice_modes::{beta, ModeSet, QuasiPeriodicity};
use layerscat::media::{MediumSamples, PeriodicMedium, TransverseGrid};
use layerscat::oracles::{dense_smw_oracle, sqrt_fit_oracle};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b))
}

fn alpha() -> impl Strategy<Value = [f64; 2]> {
    (-0.5f64..0.5, -0.5f64..0.5).prop_map(|(a, b)| [a, b])
}

fn lamellar() -> PeriodicMedium {
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
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn beta_branch(k in 0.05f64..4.0, a in (-5.0f64..5.0, -5.0f64..5.0)) {
        let b = beta(k, [a.0, a.1]);
        prop_assert!(b.re >= 0.0 && b.im >= 0.0);
        prop_assert!(b.re == 0.0 || b.im == 0.0);
        let expected = k * k - a.0 * a.0 - a.1 * a.1;
        prop_assert!((b * b - expected).norm() <= 1e-12 * (1.0 + expected.abs()));
    }

    #[test]
    fn boundary_operator_signs(k in 0.05f64..3.0, a in alpha(), m in 0usize..4, seed in any::<u64>()) {
        let modes = ModeSet::new(k, QuasiPeriodicity::new(a).unwrap(), m);
        let mult = DtnMultipliers::unsplit(&modes).unwrap();
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let phi = TraceCoefficients((0..modes.len()).map(|_| [C64::new(next(), next()), C64::new(next(), next())]).collect());
        let scale = phi.norm_sq();
        let t = pairing(&t_apply(&mult, &phi), &phi);
        let n = pairing(&n_apply_regular(&mult, &phi), &phi);
        prop_assert!(t.re <= 1e-12 * scale && t.im >= -1e-12 * scale);
        prop_assert!(n.re <= 1e-12 * scale && n.im <= 1e-12 * scale);
    }

    #[test]
    fn rank_update_matches_dense(n in 2usize..30, rank in 1usize..4, seed in any::<u64>()) {
        let report = dense_smw_oracle(n.max(rank + 1), rank, seed);
        prop_assert!(report.skipped || report.discrepancy < 1e-10, "{report:?}");
        prop_assert!(report.skipped || report.discrepancy >= 0.0);
    }

    #[test]
    fn bloch_round_trip_on_tensor_rule(values in proptest::collection::vec(c64(), 3 * 4), shift in (-3i32..3, -3i32..3)) {
        let mut field = CellIndexedField::new(4);
        for (i, chunk) in values.chunks(4).enumerate() {
            field.insert([i as i32 - 1 + shift.0, shift.1], chunk.to_vec()).unwrap();
        }
        let quad = AlphaQuadrature::tensor(24);
        let family: Vec<Vec<C64>> = quad.nodes.iter().map(|&a| bloch_forward(&field, a)).collect();
        for (cell, orig) in &field.cells {
            let back = bloch_inverse(&family, &quad, *cell);
            for (x, y) in back.iter().zip(orig) {
                prop_assert!((x - y).norm() < 1e-12);
            }
        }
        let empty = bloch_inverse(&family, &quad, [shift.0 + 3, shift.1]);
        prop_assert!(empty.iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn bloch_translation_is_a_phase(values in proptest::collection::vec(c64(), 6), a in alpha(), j in (-4i32..4, -4i32..4)) {
        let mut field = CellIndexedField::new(6);
        field.insert([0, 0], values.clone()).unwrap();
        let mut shifted = CellIndexedField::new(6);
        shifted.insert([j.0, j.1], values).unwrap();
        let phase = C64::from_polar(1.0, 2.0 * PI * (a[0] * j.0 as f64 + a[1] * j.1 as f64));
        for (x, y) in bloch_forward(&shifted, a).iter().zip(bloch_forward(&field, a)) {
            prop_assert!((x - phase * y).norm() < 1e-12);
        }
    }

    #[test]
    fn quadrature_is_a_probability_rule(k in 0.05f64..2.5, m in 0usize..3, n_base in 4usize..12) {
        let tol = 1e-6 * k;
        let quad = build_alpha_quadrature(k, m, n_base, 2.0, tol).unwrap();
        prop_assert!((quad.weight_sum() - 1.0).abs() < 1e-12);
        prop_assert!(quad.weights.iter().all(|w| *w > 0.0));
        let modes = m as i32;
        for node in &quad.nodes {
            prop_assert!(node[0].abs() <= 0.5 && node[1].abs() <= 0.5);
            for j1 in -modes..=modes {
                for j2 in -modes..=modes {
                    let r = (node[0] + j1 as f64).hypot(node[1] + j2 as f64);
                    prop_assert!((r - k).abs() >= tol);
                }
            }
        }
    }

    #[test]
    fn modal_round_trip(coeffs in proptest::collection::vec(c64(), 9 * 3), a in alpha()) {
        let grid = TransverseGrid { n: 6 };
        let field = ModalField { n_modes: 9, n_points: 1, values: coeffs.chunks(3).map(|c| [c[0], c[1], c[2]]).collect() };
        let samples = modal_synthesis(grid, &field, a, 1);
        let back = modal_transform(grid, 1, &samples, a, 1);
        for (x, y) in back.values.iter().zip(&field.values) {
            for c in 0..3 {
                prop_assert!((x[c] - y[c]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn sqrt_fit_recovers_exact_models(a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let t = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
        let x: Vec<f64> = t.iter().map(|v: &f64| v.sqrt()).collect();
        let values: Vec<Vec<C64>> = x.iter().map(|s| vec![C64::new(a + b * s, 0.5 * b * s)]).collect();
        let fit = sqrt_fit_oracle(&x, &values).unwrap();
        prop_assert!((fit.constant[0].re - a).abs() < 1e-10 && (fit.slope[0].re - b).abs() < 1e-9);
        prop_assert!(fit.residual < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn energy_identity_holds_for_real_media(k in 0.2f64..1.2, a in alpha(), seed in c64()) {
        let disc = Discretization::new(1, 6, 1.0).unwrap();
        let points = disc.depth_points();
        let samples = MediumSamples::new(&lamellar(), disc.grid, &points, 2).unwrap();
        let solver = CellSolver::new(&disc, &samples, k, QuasiPeriodicity::new(a).unwrap(), 1e-8).unwrap();
        let load = ModalField::from_fn(solver.modes.len(), &points, |m, z| {
            let s = if z < 0.6 { (PI * z / 0.6).sin() } else { 0.0 };
            [seed * s, C64::new(s, 0.0) / (1.0 + m as f64), seed.conj() * s * s]
        });
        let rhs = solver.load(&load).unwrap();
        let sol = solver.solve_rhs(&rhs).unwrap();
        let report = energy_identity_check(&solver, &sol, &rhs);
        prop_assert!(report.identity_error < 1e-8 && report.balance_error < 1e-8, "{report:?}");
        prop_assert!(report.flux >= 0.0 && report.absorption.abs() < 1e-8 * (1.0 + report.load.norm()));
        prop_assert!(report.t_signs_ok && report.n_signs_ok);
    }

    #[test]
    fn extension_is_quasi_periodic_and_divergence_free(k in 0.2f64..1.5, a in alpha(), x in (-3.0f64..3.0, -3.0f64..3.0, 1.0f64..2.0)) {
        let disc = Discretization::new(1, 6, 1.0).unwrap();
        let points = disc.depth_points();
        let samples = MediumSamples::new(&lamellar(), disc.grid, &points, 2).unwrap();
        let solver = CellSolver::new(&disc, &samples, k, QuasiPeriodicity::new(a).unwrap(), 1e-8).unwrap();
        let load = ModalField::from_fn(solver.modes.len(), &points, |_, z| {
            let s = if z < 0.6 { (PI * z / 0.6).sin() } else { 0.0 };
            [C64::new(0.0, s), C64::new(s, 0.0), C64::new(0.3 * s, 0.0)]
        });
        let sol = solver.solve(&load).unwrap();
        let p = [x.0, x.1, x.2];
        let here = sol.extend(p).unwrap();
        let there = sol.extend([p[0] + 2.0 * PI, p[1] - 2.0 * PI, p[2]]).unwrap();
        let phase = C64::from_polar(1.0, -2.0 * PI * (a[0] - a[1]));
        for c in 0..3 {
            prop_assert!((there[c] - phase * here[c]).norm() < 1e-10 * (1.0 + here[c].norm()));
        }
        for m in 0..solver.modes.len() {
            let v = sol.extended_mode(m, p[2]).unwrap();
            let aj = solver.modes.alpha_j(m);
            let b = solver.modes.beta_j(m);
            let div = -C64::i() * (aj[0] * v[0] + aj[1] * v[1]) + C64::i() * b * v[2];
            prop_assert!(div.norm() < 1e-10 * (1.0 + v.iter().map(|c| c.norm()).sum::<f64>()));
        }
    }
}

#[test]
fn evanescent_modes_decay() {
    let disc = Discretization::new(1, 8, 1.0).unwrap();
    let points = disc.depth_points();
    let samples = MediumSamples::new(&lamellar(), disc.grid, &points, 2).unwrap();
    let solver = CellSolver::new(&disc, &samples, 0.4, QuasiPeriodicity::new([0.1, 0.0]).unwrap(), 1e-8).unwrap();
    let load = ModalField::from_fn(solver.modes.len(), &points, |_, z| [C64::new(z, 0.0); 3]);
    let sol = solver.solve(&load).unwrap();
    for m in 0..solver.modes.len() {
        let b = solver.modes.beta_j(m);
        if b.im == 0.0 {
            continue;
        }
        let top = sol.extended_mode(m, 1.0).unwrap();
        let up = sol.extended_mode(m, 1.5).unwrap();
        let decay = (-b.im * 0.5).exp();
        for c in 0..3 {
            assert!((up[c].norm() - decay * top[c].norm()).abs() < 1e-12 * (1.0 + top[c].norm()));
        }
        assert!(sol.extended_mode(m, 0.5).is_err());
    }
}

#[test]
fn shifted_form_becomes_coercive() {
    let disc = Discretization::new(1, 4, 1.0).unwrap();
    let samples = MediumSamples::new(&lamellar(), disc.grid, &disc.depth_points(), 2).unwrap();
    // every mode stays well away from cutoff; near it the boundary term grows like 1/|beta|
    let modes = ModeSet::new(1.2, QuasiPeriodicity::new([0.1, 0.05]).unwrap(), 1);
    let plain = coercivity_check(&disc, &samples, &modes, 1.2, 0.0, 400, 7).unwrap();
    let shifted = coercivity_check(&disc, &samples, &modes, 1.2, 30.0, 400, 7).unwrap();
    assert_eq!(shifted.subspace_dim, shifted.unknowns);
    assert!(!plain.coercive, "{plain:?}");
    assert!(shifted.coercive && shifted.measured_constant > 0.0, "{shifted:?}");
    assert!(shifted.measured_constant > plain.measured_constant);
}
