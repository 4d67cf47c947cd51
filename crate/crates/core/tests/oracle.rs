//! Every small linear system agrees with a dense LU solve of the same
//! assembled matrix, in max-norm relative to `max(1, |u|_inf)`.

mod common;

use common::*;
use homlab::calculus::Ghost;
use homlab::corrector::{applied_to, solve_corrector, WholeSpace};
use homlab::discrete::LatticeField;
use homlab::excess::{band_limited_trace, harmonic_sample};
use homlab::field::restrict_to_half_box;
use homlab::pde::{BoundarySpec, Condition, Domain, LinearSystem, Problem, SourceTerm};
use homlab::poisson::PoissonSystem;
use homlab::solver::SolverOptions;
use homlab::Grid;

const TOL: f64 = 1e-9;

fn check(system: &LinearSystem<f64>, what: &str) {
    assert!(system.cells.len() <= 1024, "{what}: too large for the dense oracle");
    let (u, _) = system.solve(&SolverOptions::default()).unwrap();
    let dense = dense_solve(&system.matrix, &system.rhs, system.singular);
    let err = max_diff(&u.values, &dense) / max_abs(&dense).max(1.0);
    assert!(err <= TOL, "{what}: max difference {err:.3e}");
}

#[test]
fn torus_corrector_systems() {
    for (d, n) in [(2, 32), (3, 8)] {
        let grid = Grid::torus(d, n, 1.0).unwrap();
        let field = checkerboard(&grid, 11);
        let mut xi = vec![0.0; d];
        xi[0] = 1.0;
        let problem = Problem::on_grid(&field, BoundarySpec::periodic()).unwrap();
        let system = problem.assemble(&SourceTerm::divergence(applied_to(&field, &xi))).unwrap();
        assert!(system.singular);
        check(&system, &format!("corrector d={d}"));
        let (phi, _) = solve_corrector(&field, &xi, &SolverOptions::default()).unwrap();
        let dense = dense_solve(&system.matrix, &system.rhs, true);
        assert!(max_diff(&phi.values, &dense) <= TOL);
    }
}

#[test]
fn laminate_dirichlet_box() {
    // 8 x 4 half-box, Dirichlet x_1 on every group
    let grid = Grid::half_box(2, 8, 1.0).unwrap();
    let field = laminate(&grid);
    let bc = BoundarySpec::uniform(Condition::dirichlet_fn(&grid, |x| x[0]));
    let system = Problem::on_grid(&field, bc).unwrap().assemble(&SourceTerm::none()).unwrap();
    let (u, _) = system.solve(&SolverOptions::with_tol(1e-14)).unwrap();
    let dense = dense_solve(&system.matrix, &system.rhs, false);
    assert!(max_diff(&u.values, &dense) <= 1e-12);
}

#[test]
fn anisotropic_no_flux_and_nonsymmetric() {
    let grid = Grid::half_box(2, 32, 1.0).unwrap();
    let sym = constant(&grid, vec![vec![0.6, 0.2], vec![0.2, 0.5]]);
    let skew = constant(&grid, vec![vec![0.6, 0.15], vec![-0.1, 0.5]]);
    for (field, name) in [(&sym, "symmetric"), (&skew, "non-symmetric")] {
        let datum = homlab::pde::face_scalar(&grid, |x| (x[0] / 5.0).sin());
        let bc = BoundarySpec::half_space(Condition::NoFlux(Some(datum)), Condition::dirichlet_fn(&grid, |x| 0.1 * x[1]));
        let system = Problem::on_grid(field, bc).unwrap().assemble(&SourceTerm::none()).unwrap();
        check(&system, name);
    }
    let cb = checkerboard(&grid, 5);
    let bc = BoundarySpec::uniform(Condition::no_flux_zero());
    let src = SourceTerm::volume(LatticeField::from_fn(grid.cells(), |x| (x[0] * 0.3).cos() - (x[1] * 0.2).sin()));
    let system = Problem::on_grid(&cb, bc).unwrap().assemble(&src).unwrap();
    assert!(system.singular);
    check(&system, "pure no-flux");
}

#[test]
fn ball_domains() {
    let grid = Grid::half_box(2, 32, 1.0).unwrap();
    let field = checkerboard(&grid, 2);
    let bc = BoundarySpec { flat: Condition::no_flux_zero(), far: Condition::dirichlet_zero(), round: Condition::dirichlet_fn(&grid, |x| x[0] * x[1]) };
    let system = Problem::new(&field, Domain::ball(grid, 12.0), bc).unwrap().assemble(&SourceTerm::none()).unwrap();
    check(&system, "half-ball");
    let sample = harmonic_sample(&field, 12.0, band_limited_trace(&grid, 12.0, 4, 1), &SolverOptions::default()).unwrap();
    assert!(sample.stats.relative_residual <= 1e-10);

    let torus = Grid::torus(2, 32, 1.0).unwrap();
    let tf = checkerboard(&torus, 2);
    let bc = BoundarySpec::uniform(Condition::dirichlet_fn(&torus, |x| x[1]));
    let system = Problem::new(&tf, Domain::ball(torus, 10.0), bc).unwrap().assemble(&SourceTerm::none()).unwrap();
    check(&system, "torus ball");
}

#[test]
fn poisson_systems_with_ghosts() {
    let grid = Grid::half_box(2, 32, 1.0).unwrap();
    let lattices = [grid.cells(), grid.faces(0), grid.faces(1), grid.edges(0, 1)];
    let ghost_sets = [[Ghost::Odd; 3], [Ghost::Even, Ghost::Odd, Ghost::Odd], [Ghost::Odd, Ghost::Even, Ghost::Odd]];
    for lat in lattices {
        for ghosts in ghost_sets {
            let sys = PoissonSystem::<f64>::new(lat, ghosts);
            let f = LatticeField::from_fn(lat, |x| (0.2 * x[0]).sin() * (1.0 + 0.1 * x[1]));
            let (u, _) = sys.solve(&f, &SolverOptions::default()).unwrap();
            let rhs: Vec<f64> =
                f.values.iter().zip(&sys.weights).zip(&sys.fixed).map(|((v, w), fx)| if *fx { 0.0 } else { v * w }).collect();
            let dense = dense_solve(&sys.matrix, &rhs, sys.singular);
            let err = max_diff(&u.values, &dense);
            assert!(err <= TOL, "{:?} {ghosts:?}: {err:.3e}", lat.shape);
        }
    }
    let torus = Grid::torus(2, 32, 1.0).unwrap();
    let sys = PoissonSystem::<f64>::new(torus.edges(0, 1), [Ghost::Even; 3]);
    assert!(sys.singular);
    let f = LatticeField::from_fn(torus.edges(0, 1), |x| (x[0] * std::f64::consts::PI / 16.0).sin());
    let (u, _) = sys.solve(&f, &SolverOptions::default()).unwrap();
    let dense = dense_solve(&sys.matrix, &f.values, true);
    assert!(max_diff(&u.values, &dense) <= TOL);
}

#[test]
fn half_space_correction_system() {
    let torus = Grid::torus(2, 32, 1.0).unwrap();
    let field = checkerboard(&torus, 9);
    let ws = WholeSpace::solve(&field, &SolverOptions::default()).unwrap();
    let hs = homlab::halfspace::HalfSpace::direct(&field, &ws, 8.0, &SolverOptions::default()).unwrap();
    let half = restrict_to_half_box(&field, 8.0).unwrap();
    // rebuild the correction system from the flat datum the construction used
    let phi_b = ws.correctors.phi_for(&hs.basis.b[0]);
    let flux = homlab::corrector::corrected_flux(&field, &phi_b, &hs.basis.b[0]).unwrap();
    let emb = homlab::field::HalfBoxEmbedding::new(&torus, half.grid()).unwrap();
    let datum = homlab::discrete::FaceField {
        comps: flux
            .comps
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let lat = half.grid().faces(k);
                LatticeField { lattice: lat, values: emb.restrict(&c.lattice, &c.values, &lat) }
            })
            .collect(),
    };
    let bc = BoundarySpec::half_space(Condition::NoFlux(Some(datum)), Condition::dirichlet_zero());
    let system = Problem::on_grid(&half, bc).unwrap().assemble(&SourceTerm::none()).unwrap();
    let dense = dense_solve(&system.matrix, &system.rhs, false);
    assert!(max_diff(&hs.varphi[0].values, &dense) <= TOL);
}
