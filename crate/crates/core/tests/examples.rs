use phasecell::cell::{solve_cell, CellProblem};
use phasecell::fields::{band_mask, init_from_datum, EnergyModel, Grid, ScalarField};
use phasecell::geometry::{frame_for, RotatedCube};
use phasecell::integrands::{CoefficientField, Integrand};
use phasecell::potentials::{compute_cu, optimal_profile_1d, DoubleWell, Profile};
use phasecell::solver::{minimise, minimise_with, multi_start, SolverConfig};

const CP: f64 = 1.0 / 3.0;

fn mm() -> Integrand {
    Integrand::homogeneous(2, DoubleWell::quartic(), 2.0).unwrap()
}

fn square(side: f64, cells: usize, nu: &[f64]) -> Grid {
    let cube = RotatedCube::new(vec![0.0, 0.0], side, frame_for(nu).unwrap()).unwrap();
    Grid::new(cube, cells).unwrap()
}

#[test]
fn extended_optimal_profile_is_already_stationary() {
    let cells = 128;
    let prof = optimal_profile_1d(
        &DoubleWell::quartic(),
        2.0,
        cells,
        &SolverConfig {
            tol_pg: 1e-9,
            tol_rel: 1e-16,
            max_iters: 200_000,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(prof.values.len(), cells + 1);
    let grid = square(10.0, cells, &[0.0, 1.0]);
    let values: Vec<f64> = (0..grid.node_count())
        .map(|k| prof.values[grid.node_multi(k)[1]])
        .collect();
    let clamped = band_mask(&grid, 2.0 * grid.h());
    let f0 = ScalarField::new(grid.clone(), values, clamped).unwrap();
    let model = EnergyModel::new(&mm(), &grid, 1.0).unwrap();
    let out = minimise_with(&model, &f0, &SolverConfig::default()).unwrap();
    assert!(out.iterations <= 5, "{} iterations", out.iterations);
    assert!((out.energy - out.initial_energy).abs() <= 1e-9 * out.initial_energy.max(1.0));
    assert!((out.initial_energy / 10.0 - prof.cost).abs() < 1e-9);
}

#[test]
fn datum_start_relaxes_toward_transition_cost() {
    let rho = 1.0;
    let eps = rho / 16.0;
    let grid = square(rho, 64, &[0.0, 1.0]);
    let f0 = init_from_datum(&grid, &[0.0, 0.0], &[0.0, 1.0], eps, 2.0 * grid.h()).unwrap();
    let out = minimise(&mm(), &f0, eps, &SolverConfig::default()).unwrap();
    let density = out.energy / rho;
    let cu = compute_cu(&DoubleWell::quartic(), &Profile::default(), 2.0).unwrap();
    println!("minimised density {density:.5} = {:.4} c_p", density / CP);
    assert!(out.converged);
    assert!(density >= 0.97 * CP, "{density}");
    assert!(density <= out.initial_energy / rho && density <= cu * 1.05);
}

#[test]
fn homogeneous_cell_density() {
    let p = CellProblem::new(mm(), &[0.0, 1.0], 1.0, 1.0 / 16.0, 96);
    let r = solve_cell(&p).unwrap();
    println!("density {:.5} = {:.4} c_p", r.density, r.density / CP);
    assert!(r.converged && r.in_bracket);
    assert!(r.density >= 0.32);
    let coarse = solve_cell(&CellProblem::new(mm(), &[0.0, 1.0], 1.0, 1.0 / 8.0, 96)).unwrap();
    assert!(coarse.density - CP > r.density - CP);
}

#[test]
fn restarts_never_worsen_laminate_solve() {
    let lam = Integrand::with_coefficient(
        2,
        DoubleWell::quartic(),
        2.0,
        CoefficientField::Laminate {
            axis: 0,
            values: vec![1.0, 2.0],
        },
    )
    .unwrap();
    let eps = 0.125;
    let grid = square(1.0, 48, &[0.6, 0.8]);
    let f0 = init_from_datum(&grid, &[0.0, 0.0], &[0.6, 0.8], eps, 2.0 * grid.h()).unwrap();
    let single = minimise(&lam, &f0, eps, &SolverConfig::default()).unwrap();
    let best = multi_start(
        &lam,
        &f0,
        eps,
        &SolverConfig {
            restarts: 4,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        best.energy <= single.energy + 1e-12,
        "{} > {}",
        best.energy,
        single.energy
    );
    assert!(best.restarts_used >= 1 && best.restarts_used <= 4);
}

#[test]
fn fully_clamped_field_is_returned_untouched() {
    let grid = square(1.0, 8, &[0.0, 1.0]);
    let datum = init_from_datum(&grid, &[0.0, 0.0], &[0.0, 1.0], 0.25, 2.0 * grid.h()).unwrap();
    let f0 = ScalarField::new(grid.clone(), datum.values, vec![true; grid.node_count()]).unwrap();
    assert_eq!(f0.free_count(), 0);
    let out = minimise(&mm(), &f0, 0.25, &SolverConfig::default()).unwrap();
    assert_eq!(out.iterations, 0);
    assert_eq!(out.field.values, f0.values);
}
