mod common;

use std::sync::OnceLock;

use common::*;
use homlab::calculus::gradient;
use homlab::corrector::{basis_change_check, delta, WholeSpace};
use homlab::discrete::{FaceField, LatticeField, ScalarField};
use homlab::excess::{excess, excess_functional, mean_square};
use homlab::field::{sample_field, EnsembleKind, EnsembleSpec, MatrixSpec};
use homlab::halfspace::{tangential_basis, HalfSpace};
use homlab::pde::{BoundarySpec, Condition, Domain, Problem, SourceTerm};
use homlab::solver::SolverOptions;
use homlab::Grid;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_cells(grid: &Grid, seed: u64) -> ScalarField<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    LatticeField::from_fn(grid.cells(), |_| rng.gen_range(-1.0..1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad(a: &[f64], x: &[f64]) -> f64 {
    let d = x.len();
    (0..d).map(|i| x[i] * (0..d).map(|j| a[i * d + j] * x[j]).sum::<f64>()).sum()
}

/// One checkerboard half-space on a 32-torus, L = 8, shared across cases.
fn shared_half_space() -> &'static HalfSpace<f64> {
    static HS: OnceLock<HalfSpace<f64>> = OnceLock::new();
    HS.get_or_init(|| {
        let grid = Grid::torus(2, 32, 1.0).unwrap();
        let field = checkerboard(&grid, 21);
        let opts = SolverOptions::default();
        let ws = WholeSpace::solve(&field, &opts).unwrap();
        HalfSpace::direct(&field, &ws, 8.0, &opts).unwrap()
    })
}

fn shared_whole_space() -> &'static WholeSpace<f64> {
    static WS: OnceLock<WholeSpace<f64>> = OnceLock::new();
    WS.get_or_init(|| {
        let grid = Grid::torus(2, 32, 1.0).unwrap();
        WholeSpace::solve(&checkerboard(&grid, 22), &SolverOptions::default()).unwrap()
    })
}

fn ensembles(seed: u64) -> Vec<EnsembleSpec> {
    vec![
        EnsembleSpec::checkerboard(
            vec![MatrixSpec::Rows(vec![vec![0.6, 0.15], vec![0.15, 0.5]]), MatrixSpec::Scalar(0.25), MatrixSpec::Scalar(1.0)],
            0.25,
            seed,
        ),
        EnsembleSpec::new(EnsembleKind::GaussianLipschitz { correlation_length: 2.0, mean: 0.6, amplitude: 0.3 }, 0.25, seed),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fields_are_elliptic_and_bounded(seed in 0u64..1000, angle_seed in 0u64..1000) {
        let grid = Grid::torus(2, 16, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(angle_seed);
        for spec in ensembles(seed) {
            let field = sample_field::<f64>(&spec, &grid).unwrap();
            let lambda = field.lambda();
            for _ in 0..100 {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let xi = [t.cos(), t.sin()];
                for k in 0..2 {
                    for f in 0..grid.faces(k).len() {
                        let a = field.matrix(k, f);
                        let l = [lambda, 0.0, 0.0, lambda];
                        prop_assert!(quad(a, &xi) >= quad(&l, &xi));
                        let ax = [dot(&a[..2], &xi), dot(&a[2..], &xi)];
                        prop_assert!(dot(&ax, &ax) <= dot(&xi, &xi));
                    }
                }
            }
            prop_assert_eq!(&field, &sample_field::<f64>(&spec, &grid).unwrap());
        }
    }

    #[test]
    fn operator_is_symmetric(seed in 0u64..1000, ball in prop::bool::ANY) {
        // scalar checkerboard on a half-box, Dirichlet far sides, optional ball
        let grid = Grid::half_box(2, 16, 1.0).unwrap();
        let field = checkerboard(&grid, seed);
        let domain = if ball { Domain::ball(grid, 7.0) } else { Domain::full(grid) };
        let bc = BoundarySpec::half_space(Condition::no_flux_zero(), Condition::dirichlet_zero());
        let sys = Problem::new(&field, domain, bc).unwrap().assemble(&SourceTerm::none()).unwrap();
        prop_assert!(sys.symmetric);
        let u = random_cells(&grid, seed + 1).values;
        let v = random_cells(&grid, seed + 2).values;
        let (auv, uav) = (dot(&sys.matrix.mul_vec(&u), &v), dot(&u, &sys.matrix.mul_vec(&v)));
        prop_assert!((auv - uav).abs() <= 1e-12 * auv.abs().max(uav.abs()).max(1.0));

        // constant symmetric full tensor on the torus
        let torus = Grid::torus(2, 16, 1.0).unwrap();
        let off = (seed % 7) as f64 * 0.03;
        let field = constant(&torus, vec![vec![0.6, off], vec![off, 0.5]]);
        let sys = Problem::on_grid(&field, BoundarySpec::periodic()).unwrap().assemble(&SourceTerm::none()).unwrap();
        prop_assert!(sys.symmetric);
        let u = random_cells(&torus, seed + 3).values;
        let v = random_cells(&torus, seed + 4).values;
        let (auv, uav) = (dot(&sys.matrix.mul_vec(&u), &v), dot(&u, &sys.matrix.mul_vec(&v)));
        prop_assert!((auv - uav).abs() <= 1e-12 * auv.abs().max(uav.abs()).max(1.0));
    }

    #[test]
    fn operator_is_coercive(seed in 0u64..1000, fine in prop::bool::ANY) {
        let h = if fine { 0.5 } else { 1.0 };
        let grid = Grid::torus(2, 16, h).unwrap();
        let field = checkerboard(&grid, seed);
        let sys = Problem::on_grid(&field, BoundarySpec::periodic()).unwrap().assemble(&SourceTerm::none()).unwrap();
        let mut u = random_cells(&grid, seed);
        u.subtract_mean();
        let vol = h * h;
        let energy = vol * dot(&sys.matrix.mul_vec(&u.values), &u.values);
        let g = gradient(&u);
        let grad_sq: f64 = g.comps.iter().flat_map(|c| &c.values).map(|x| x * x).sum();
        prop_assert!(energy >= 0.25 * grad_sq * vol * (1.0 - 1e-12), "{} vs {}", energy, 0.25 * grad_sq * vol);
    }

    #[test]
    fn no_flux_residual_sum_is_boundary_flux(seed in 0u64..1000) {
        let grid = Grid::half_box(2, 16, 1.0).unwrap();
        let field = checkerboard(&grid, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = FaceField { comps: (0..2).map(|k| LatticeField::from_fn(grid.faces(k), |_| rng.gen_range(-1.0..1.0))).collect() };
        let div = FaceField::from_fn(&grid, |x| vec![x[1].sin(), x[0].cos()]);
        let bc = BoundarySpec::uniform(Condition::NoFlux(Some(data.clone())));
        let problem = Problem::on_grid(&field, bc).unwrap();
        let src = SourceTerm::divergence(div);
        let res = problem.residual(&random_cells(&grid, seed + 5), &src).unwrap();
        // the interior and divergence contributions telescope away
        let mut boundary = 0.0;
        for k in 0..2 {
            let lat = grid.faces(k);
            for f in 0..lat.len() {
                let m = lat.multi(f);
                if m[k] == 0 || m[k] == lat.shape[k] - 1 {
                    boundary += data.comps[k].values[f];
                }
            }
        }
        let total: f64 = res.values.iter().sum();
        prop_assert!((total - boundary).abs() <= 1e-11, "residual sum {} boundary {}", total, boundary);
    }

    #[test]
    fn centered_delta_is_smaller(r in prop::sample::select(vec![2.0, 4.0, 8.0, 16.0])) {
        let ws = shared_whole_space();
        let plain = delta(&ws.correctors.phi, &ws.sigma, r, false).unwrap();
        let centered = delta(&ws.correctors.phi, &ws.sigma, r, true).unwrap();
        prop_assert!(centered <= plain);
    }

    #[test]
    fn basis_change_bound_holds(t in 0.0f64..std::f64::consts::TAU, r in prop::sample::select(vec![4.0, 8.0, 16.0])) {
        let basis = vec![vec![t.cos(), t.sin()], vec![-t.sin(), t.cos()]];
        let (lhs, bound) = basis_change_check(shared_whole_space(), &basis, r).unwrap();
        prop_assert!(lhs <= bound);
    }

    #[test]
    fn tangential_basis_lies_in_b(
        a in prop::collection::vec(-0.2f64..0.2, 9),
        diag in prop::collection::vec(0.5f64..1.0, 3),
        dim in 2usize..=3,
    ) {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                m[i * dim + j] = if i == j { diag[i] } else { a[i * 3 + j] };
            }
        }
        let basis = tangential_basis(&m, dim).unwrap();
        for (i, b) in basis.b.iter().enumerate() {
            prop_assert!((dot(b, b) - 1.0).abs() < 1e-12);
            if i + 1 < dim {
                prop_assert!(basis.normal_flux(b) <= 1e-10);
            }
        }
    }

    #[test]
    fn excess_minimizer_is_optimal(seed in 0u64..1000, r in prop::sample::select(vec![4.0, 6.0, 8.0])) {
        let hs = shared_half_space();
        let g = gradient(&random_cells(&hs.grid, seed));
        let e = excess(&g, hs, r, f64::INFINITY).unwrap();
        let family = vec![hs.corrected_gradient(0)];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let t = e.coeffs[0] + rng.gen_range(-1.0..1.0);
            let v = excess_functional(&g, &family, &hs.grid, r, f64::INFINITY, &[t]).unwrap();
            prop_assert!(v >= e.value - 1e-12);
        }
        prop_assert!(hs.basis.normal_flux(&e.b) <= 1e-10);

        // frozen minimizer from the outer radius bounds the inner infimum
        let outer = excess(&g, hs, 8.0, f64::INFINITY).unwrap();
        let frozen = excess_functional(&g, &family, &hs.grid, r, f64::INFINITY, &outer.coeffs).unwrap();
        prop_assert!(frozen >= e.value - 1e-12);
    }

    #[test]
    fn excess_is_quadratically_homogeneous(seed in 0u64..1000, s in prop::sample::select(vec![-2.0, 0.5, 4.0])) {
        let hs = shared_half_space();
        let u = random_cells(&hs.grid, seed);
        let e = excess(&gradient(&u), hs, 8.0, f64::INFINITY).unwrap();
        let es = excess(&gradient(&u.scaled(s)), hs, 8.0, f64::INFINITY).unwrap();
        prop_assert!((es.value - s * s * e.value).abs() <= 1e-12 * es.value.max(1e-300));
        prop_assert!((es.coeffs[0] - s * e.coeffs[0]).abs() <= 1e-12 * es.coeffs[0].abs().max(1.0));
    }

    #[test]
    fn constants_do_not_change_gradient_quantities(seed in 0u64..1000, c in -100.0f64..100.0) {
        let hs = shared_half_space();
        let u = random_cells(&hs.grid, seed);
        let mut w = u.clone();
        w.values.iter_mut().for_each(|x| *x = (*x * 1024.0).round() / 1024.0);
        let mut shifted = w.clone();
        // power-of-two offsets keep the differences exact
        let c = c.round();
        shifted.values.iter_mut().for_each(|x| *x += c);
        prop_assert_eq!(gradient(&w), gradient(&shifted));
        let (a, b) = (excess(&gradient(&w), hs, 8.0, f64::INFINITY).unwrap(), excess(&gradient(&shifted), hs, 8.0, f64::INFINITY).unwrap());
        prop_assert_eq!(a, b);
        prop_assert_eq!(
            mean_square(&gradient(&w), &hs.grid, 6.0, f64::INFINITY).unwrap(),
            mean_square(&gradient(&shifted), &hs.grid, 6.0, f64::INFINITY).unwrap()
        );
    }
}
