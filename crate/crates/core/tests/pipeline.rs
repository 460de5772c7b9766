//! End-to-end checks across forward solvers, completion and D-bar.

use std::f64::consts::TAU;

use eit_core::boundary::{BasisTable, BoundaryFunction, ElectrodeOps, TrigBasis};
use eit_core::completion::{complete_pipeline, diagonal_from_single_pattern, solve_normal_equation, CompletionConfig};
use eit_core::dbar::{reconstruct, scattering_data, DbarConfig, EvalGrid};
use eit_core::forward::{
    analytic_nd_unit, rotsym_continuum_response, rotsym_nd_eigenvalue, simulate_dataset, simulate_pairwise,
    ConductivityField, ContinuumSolver, Model,
};
use eit_core::geometry::{generate_disk_mesh, make_layout, QuadratureGrid};
use eit_core::ndmap::{assemble_nd_matrix, build_psi_system, difference, NdKind, Provenance};
use eit_core::phantoms::{default_paired_circles, rotsym, RadialStep};

fn grid() -> QuadratureGrid {
    QuadratureGrid::new(512).unwrap()
}

#[test]
fn unit_disk_nd_matrix_converges() {
    let basis = TrigBasis::new(16).unwrap();
    let exact = analytic_nd_unit(basis);
    let errors: Vec<f64> = (3..=5)
        .map(|level| {
            let mesh = generate_disk_mesh(level);
            let one = ConductivityField::constant(&mesh, 1.0).unwrap();
            let ds = simulate_dataset(Model::Cm, &mesh, &one, None, basis, grid(), None).unwrap();
            assemble_nd_matrix(&ds.traces, basis, NdKind::Absolute, Provenance::Full)
                .unwrap()
                .relative_error(&exact)
                .unwrap()
        })
        .collect();
    assert!(errors.windows(2).all(|w| w[1] < 0.5 * w[0]), "{errors:?}");
}

#[test]
fn ecm_voltages_are_electrode_means_of_continuum_traces() {
    let mesh = generate_disk_mesh(4);
    let sigma = ConductivityField::from_phantom(&mesh, &default_paired_circles(2.0)).unwrap();
    let layout = make_layout(16, TAU / 32.0, 0.0, 4).unwrap();
    let basis = TrigBasis::new(8).unwrap();
    let ds = simulate_dataset(Model::Ecm, &mesh, &sigma, Some(&layout), basis, grid(), None).unwrap();
    let ops = ElectrodeOps::new(&layout, grid()).unwrap();
    let solver = ContinuumSolver::new(&mesh, &sigma, grid()).unwrap();
    for (n, u) in basis.indices().into_iter().zip(&ds.voltages) {
        let input = ops.project_q(&BoundaryFunction::basis(grid(), n).unwrap()).unwrap();
        let expected = ops.electrode_means(&solver.solve(&input).unwrap()).unwrap();
        for (a, b) in u.values().iter().zip(expected.values()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn cem_pairwise_voltages_are_reciprocal() {
    let mesh = generate_disk_mesh(4);
    let sigma = ConductivityField::from_phantom(&mesh, &default_paired_circles(3.0)).unwrap();
    let layout = make_layout(8, TAU / 16.0, 0.0, 0).unwrap();
    let pairs = [(0, 3), (2, 5), (1, 6)];
    let ds = simulate_pairwise(&mesh, &sigma, &layout, TrigBasis::new(4).unwrap(), grid(), 0.01, &pairs).unwrap();
    // voltage difference measured on pair b while driving pair a
    let v = |a: usize, b: usize| {
        let u = ds.voltages[a].values();
        u[pairs[b].0] - u[pairs[b].1]
    };
    let len = ElectrodeOps::new(&layout, grid()).unwrap().electrode_lengths()[0];
    for a in 0..3 {
        for b in 0..a {
            assert!((v(a, b) - v(b, a)).abs() < 1e-10 / len, "{} {}", v(a, b), v(b, a));
        }
    }
}

#[test]
fn full_boundary_ecm_completion_approaches_continuum_matrix() {
    let mesh = generate_disk_mesh(5);
    let basis = TrigBasis::new(8).unwrap();
    let one = ConductivityField::constant(&mesh, 1.0).unwrap();
    let sigma = ConductivityField::from_phantom(&mesh, &default_paired_circles(2.0)).unwrap();
    let layout = make_layout(32, TAU / 48.0, 0.0, 0).unwrap();
    let sim = |m, s| simulate_dataset(m, &mesh, s, Some(&layout), basis, grid(), None).unwrap();
    let cm = |s| {
        let ds = simulate_dataset(Model::Cm, &mesh, s, None, basis, grid(), None).unwrap();
        assemble_nd_matrix(&ds.traces, basis, NdKind::Absolute, Provenance::Full).unwrap()
    };
    let reference = difference(&cm(&sigma), &cm(&one)).unwrap();
    let cfg = CompletionConfig {
        alpha: 1e-6,
        beta: 1e-4,
        ..Default::default()
    };
    let out = complete_pipeline(&sim(Model::Ecm, &sigma), &sim(Model::Ecm, &one), &cfg).unwrap();
    let partial = out.partial.relative_error(&reference).unwrap();
    let approx = out.approximated.relative_error(&reference).unwrap();
    assert!(approx < 0.1, "approximated {approx}");
    assert!(approx < partial, "approximated {approx} vs partial {partial}");
}

#[test]
fn exact_radial_data_single_and_multi_pattern_agree() {
    let basis = TrigBasis::new(16).unwrap();
    let p = rotsym(vec![RadialStep {
        inner: 0.0,
        outer: 0.4,
        value: 3.0,
    }])
    .unwrap();
    let unit = rotsym(vec![]).unwrap();
    let layout = make_layout(24, TAU / 48.0, 1.0, 2).unwrap();
    let ops = ElectrodeOps::new(&layout, grid()).unwrap();
    let table = BasisTable::new(basis, grid()).unwrap();
    let response = |f: &BoundaryFunction| {
        let a = rotsym_continuum_response(&p, f).unwrap();
        table
            .coefficients(&a.sub(&rotsym_continuum_response(&unit, f).unwrap()).unwrap())
            .unwrap()
    };
    let inputs: Vec<BoundaryFunction> = basis
        .indices()
        .into_iter()
        .map(|n| ops.project_q(&BoundaryFunction::basis(grid(), n).unwrap()).unwrap())
        .collect();
    let psi: Vec<Vec<f64>> = inputs.iter().map(|f| table.coefficients(f).unwrap()).collect();
    let g: Vec<Vec<f64>> = inputs.iter().map(&response).collect();
    let multi = solve_normal_equation(&build_psi_system(psi, g).unwrap()).unwrap();
    assert!(multi.full_rank);
    for (j, n) in basis.indices().into_iter().enumerate() {
        let k = n.unsigned_abs();
        let c = rotsym_nd_eigenvalue(&p, k).unwrap() - 1.0 / k as f64;
        assert!((multi.matrix.get(j, j) - c).abs() < 1e-12);
    }
    let single = diagonal_from_single_pattern(&table.coefficients(&inputs[9]).unwrap(), &response(&inputs[9])).unwrap();
    assert!(single.relative_error(&multi.matrix).unwrap() < 1e-10);
}

#[test]
fn dbar_sees_a_central_conductive_disk() {
    let basis = TrigBasis::new(16).unwrap();
    let p = rotsym(vec![RadialStep {
        inner: 0.0,
        outer: 0.4,
        value: 1.5,
    }])
    .unwrap();
    let mut entries = vec![0.0; 256];
    for (j, n) in basis.indices().into_iter().enumerate() {
        let k = n.unsigned_abs();
        entries[j * 16 + j] = rotsym_nd_eigenvalue(&p, k).unwrap() - 1.0 / k as f64;
    }
    let r = eit_core::ndmap::NdMatrix::new(basis, entries, NdKind::Difference, Provenance::Full).unwrap();
    let cfg = DbarConfig {
        grid_exp: 6,
        ..Default::default()
    };
    let rec = reconstruct(&scattering_data(&r, &cfg).unwrap(), &EvalGrid { size: 12 }, &cfg).unwrap();
    let centre = rec
        .pixels
        .iter()
        .zip(&rec.sigma)
        .filter(|(px, _)| px.2[0].hypot(px.2[1]) < 0.2)
        .map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    let rim = rec
        .pixels
        .iter()
        .zip(&rec.sigma)
        .filter(|(px, _)| px.2[0].hypot(px.2[1]) > 0.8)
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(centre > 1.1 && centre > rim, "centre {centre}, rim {rim}");
    assert!(rec.error_to_phantom(&p).unwrap() < 0.2);
}
