//! Constant-coefficient Poisson problems `-Δu = f` on a single lattice.
//!
//! Non-periodic axes follow a reflection rule at the boundary: [`Ghost::Odd`]
//! makes the field vanish there (boundary nodes are fixed to zero),
//! [`Ghost::Even`] gives a zero normal derivative. Rows of boundary nodes
//! with even reflection are halved once per such axis so that the matrix is
//! symmetric.

use crate::calculus::Ghost;
use crate::discrete::LatticeField;
use crate::error::Result;
use crate::grid::Lattice;
use crate::scalar::Real;
use crate::solver::{pcg, SolveStats, SolverOptions};
use crate::sparse::CsrMatrix;

/// Assembled `-Δ` on a lattice with per-axis reflection rules.
#[derive(Clone, Debug)]
pub struct PoissonSystem<T> {
    pub lattice: Lattice,
    pub matrix: CsrMatrix<T>,
    /// Row scaling applied to the right-hand side.
    pub weights: Vec<T>,
    /// Points held at zero (odd reflection through a boundary node).
    pub fixed: Vec<bool>,
    pub singular: bool,
}

impl<T: Real> PoissonSystem<T> {
    pub fn new(lattice: Lattice, ghosts: [Ghost; 3]) -> Self {
        let d = lattice.dim;
        let n = lattice.len();
        let inv_h2 = T::lit(1.0 / (lattice.h * lattice.h));
        let on_boundary_node = |m: [usize; 3], a: usize| {
            !lattice.periodic && lattice.node[a] && (m[a] == 0 || m[a] + 1 == lattice.shape[a])
        };
        let fixed: Vec<bool> = (0..n)
            .map(|i| {
                let m = lattice.multi(i);
                (0..d).any(|a| ghosts[a] == Ghost::Odd && on_boundary_node(m, a))
            })
            .collect();
        let mut weights = vec![T::one(); n];
        let mut matrix = CsrMatrix::with_capacity(n, n * (2 * d + 1));
        let mut row: Vec<(usize, T)> = Vec::with_capacity(2 * d + 1);
        for (i, wi) in weights.iter_mut().enumerate() {
            if fixed[i] {
                row.push((i, T::one()));
                matrix.push_row(&mut row);
                continue;
            }
            let m = lattice.multi(i);
            let mut diag = T::zero();
            let mut w = T::one();
            for a in 0..d {
                if on_boundary_node(m, a) {
                    w *= T::lit(0.5);
                }
                for forward in [false, true] {
                    match lattice.step(m, a, forward) {
                        Some(q) => {
                            let j = lattice.index(q);
                            // a boundary node with even reflection couples twice to its inner neighbor
                            let mirrored = on_boundary_node(m, a) && lattice.step(m, a, !forward).is_none();
                            let c = if mirrored { T::lit(2.0) } else { T::one() };
                            diag += c * inv_h2;
                            if !fixed[j] {
                                row.push((j, -c * inv_h2));
                            }
                        }
                        None => {
                            if !lattice.node[a] && ghosts[a] == Ghost::Odd {
                                diag += T::lit(2.0) * inv_h2;
                            }
                        }
                    }
                }
            }
            row.push((i, diag));
            for e in row.iter_mut() {
                e.1 *= w;
            }
            *wi = w;
            matrix.push_row(&mut row);
        }
        let singular = lattice.periodic || (0..d).all(|a| ghosts[a] == Ghost::Even);
        Self { lattice, matrix, weights, fixed, singular }
    }

    /// Solves `-Δu = f`; for singular systems `f` is made compatible by
    /// removing its weighted mean and the mean-free solution is returned.
    pub fn solve(&self, f: &LatticeField<T>, opts: &SolverOptions) -> Result<(LatticeField<T>, SolveStats)> {
        assert_eq!(f.lattice, self.lattice, "lattice mismatch");
        let rhs: Vec<T> = f
            .values
            .iter()
            .zip(&self.weights)
            .zip(&self.fixed)
            .map(|((v, w), fx)| if *fx { T::zero() } else { *v * *w })
            .collect();
        let (x, stats) = pcg(&self.matrix, &rhs, opts, self.singular)?;
        Ok((LatticeField { lattice: self.lattice, values: x }, stats))
    }

    /// `-Δu` at every point (zero at fixed points), unweighted.
    pub fn apply(&self, u: &LatticeField<T>) -> LatticeField<T> {
        let au = self.matrix.mul_vec(&u.values);
        let values = au
            .iter()
            .zip(&self.weights)
            .zip(&self.fixed)
            .map(|((v, w), fx)| if *fx { T::zero() } else { *v / *w })
            .collect();
        LatticeField { lattice: self.lattice, values }
    }
}

/// One-shot `-Δu = f`.
pub fn solve_poisson<T: Real>(f: &LatticeField<T>, ghosts: [Ghost; 3], opts: &SolverOptions) -> Result<(LatticeField<T>, SolveStats)> {
    PoissonSystem::new(f.lattice, ghosts).solve(f, opts)
}
