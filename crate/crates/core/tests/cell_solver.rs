use layerscat::cell_solver::{assemble_regular, CellSolver, Discretization};
use layerscat::lattice_modes::{classify, ModeSet, QuasiPeriodicity};
use layerscat::media::{MediumSamples, PeriodicMedium};
use layerscat::oracles::{manufactured_case, symbolic_two_element_matrix, ManufacturedCase};
use num_complex::Complex64 as C64;

fn solve_case(case: &ManufacturedCase, n: usize) -> f64 {
    let disc = Discretization::new(case.truncation, n, case.height).unwrap();
    let medium = case.medium().unwrap();
    let samples = MediumSamples::new(&medium, disc.grid, &disc.depth_points(), 2 * case.truncation).unwrap();
    let solver = CellSolver::new(&disc, &samples, case.k, QuasiPeriodicity::new(case.alpha).unwrap(), 1e-6 * case.k).unwrap();
    let sol = solver.solve(&case.load_field(&disc.depth_points())).unwrap();
    assert!(sol.residual < 1e-10, "residual {}", sol.residual);
    case.relative_l2_error(&sol)
}

#[test]
fn manufactured_cases_converge() {
    for name in ["outgoing_mode", "two_mode_superposition", "gradient_null_test"] {
        let case = manufactured_case(name).unwrap();
        let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| solve_case(&case, n)).collect();
        eprintln!("{name}: {errs:?}");
        assert!(errs[2] < errs[1] && errs[1] < errs[0], "{name}: {errs:?}");
    }
}

#[test]
fn two_element_matrix_matches_symbolic() {
    for (k, alpha, eps, mu) in [
        (1.3, [0.2, -0.35], C64::new(2.0, 0.3), C64::new(1.0, 0.0)),
        (0.7, [0.0, 0.0], C64::new(1.0, 0.0), C64::new(1.5, 0.2)),
    ] {
        let height = 0.8;
        let medium = PeriodicMedium::new(
            layerscat::media::FieldSource::Constant(eps),
            layerscat::media::FieldSource::Constant(mu),
            height,
            height,
            0.1,
        )
        .unwrap();
        let disc = Discretization::new(0, 2, height).unwrap();
        let samples = MediumSamples::new(&medium, disc.grid, &disc.depth_points(), 0).unwrap();
        let modes = ModeSet::new(k, QuasiPeriodicity::new(alpha).unwrap(), 0);
        let cls = classify(&modes, 1e-8, 0.25).unwrap();
        let op = assemble_regular(&disc, &samples, &modes, &cls, k).unwrap().to_dense();
        let reference = symbolic_two_element_matrix(k, alpha, eps, mu, height).unwrap();
        let diff = (&op - &reference).norm();
        assert!(diff < 1e-12 * reference.norm(), "diff {diff}");
    }
}

#[test]
fn polarized_outgoing_mode_converges_at_first_order() {
    // the vertical component is piecewise constant in depth, which limits the L2 rate to one
    let case = ManufacturedCase::polarized_outgoing_mode(1.0, [0.3, 0.2], [0.8, 0.6]);
    let errs: Vec<f64> = [16, 32, 64].iter().map(|&n| solve_case(&case, n)).collect();
    for w in errs.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 1.0).abs() < 0.1, "{errs:?}");
    }
}

fn near_cutoff_solver(offset: f64, cutoff_tol: f64) -> (CellSolver, layerscat::cell_solver::ModalField) {
    let path = layerscat::checks::CutoffPath { cutoff_tol, ..Default::default() };
    let disc = Discretization::new(path.truncation, path.depth_elems, 1.0).unwrap();
    let points = disc.depth_points();
    let samples = MediumSamples::new(&path.medium().unwrap(), disc.grid, &points, 2 * path.truncation).unwrap();
    let solver =
        CellSolver::new(&disc, &samples, path.k, QuasiPeriodicity::new(path.alpha(offset)).unwrap(), cutoff_tol).unwrap();
    let load = layerscat::cell_solver::ModalField::from_fn(solver.modes.len(), &points, |m, z| {
        [C64::new(z, 0.0), C64::new(1.0 - z, 0.1 * m as f64), C64::new(0.0, z * z)]
    });
    (solver, load)
}

fn rel_diff(a: &[C64], b: &[C64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    num / b.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn rank_update_path_matches_direct_factorization() {
    let (solver, load) = near_cutoff_solver(1e-5, 1e-3);
    assert_eq!(solver.classification.singular.len(), 1);
    let smw = solver.solve(&load).unwrap();
    let direct = solver.solve_direct(&load).unwrap();
    assert!(rel_diff(&smw.coeffs, &direct.coeffs) < 1e-8);
    assert!(smw.residual < 1e-12 && direct.residual < 1e-8);
    // vertical amplitude from the core coefficient equals alpha . u_T / beta
    let s = smw.singular[0];
    let ratio = s.functional / s.beta;
    assert!((s.vertical_amplitude() - ratio).norm() < 1e-6 * ratio.norm().max(1.0));
}

#[test]
fn solution_is_continuous_across_the_band_edge() {
    let tol = 1e-3;
    let (inside, load) = near_cutoff_solver(tol * 0.999, tol);
    let (outside, _) = near_cutoff_solver(tol * 1.001, tol);
    assert_eq!(inside.classification.singular.len(), 1);
    assert!(outside.classification.singular.is_empty());
    let a = inside.solve(&load).unwrap();
    let b = outside.solve(&load).unwrap();
    assert!(rel_diff(&a.coeffs, &b.coeffs) < 1e-4, "{}", rel_diff(&a.coeffs, &b.coeffs));
}

#[test]
fn exact_cutoff_uses_the_rank_update_only() {
    let (solver, load) = near_cutoff_solver(0.0, 1e-3);
    let sol = solver.solve(&load).unwrap();
    assert!(sol.residual < 1e-12);
    let s = sol.singular[0];
    assert_eq!(s.beta, C64::new(0.0, 0.0));
    // alpha . u_T vanishes at cutoff while the vertical amplitude stays finite
    assert!(s.functional.norm() < 1e-12 * sol.coeff_norm(), "functional {}", s.functional);
    assert!(s.vertical_amplitude().is_finite());
    assert!(solver.solve_direct(&load).is_err());
    assert!(solver.conditioning().unwrap().direct.is_none());
    // the limit of nearby solutions is the cutoff solution
    let (near, _) = near_cutoff_solver(1e-12, 1e-3);
    let close = near.solve(&load).unwrap();
    assert!(rel_diff(&close.coeffs, &sol.coeffs) < 1e-4);
}
