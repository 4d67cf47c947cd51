//! Discrete fields sampled on a [`Lattice`].

use crate::grid::{Grid, Lattice};
use crate::scalar::Real;

/// Values on the points of one lattice: cell values for a scalar field,
/// one face-normal component of a vector field, or an edge component of a
/// skew tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField<T> {
    pub lattice: Lattice,
    pub values: Vec<T>,
}

/// Cell-centered scalar field.
pub type ScalarField<T> = LatticeField<T>;

impl<T: Real> LatticeField<T> {
    pub fn zeros(lattice: Lattice) -> Self {
        Self { lattice, values: vec![T::zero(); lattice.len()] }
    }

    pub fn from_fn(lattice: Lattice, mut f: impl FnMut([f64; 3]) -> T) -> Self {
        let values = (0..lattice.len()).map(|i| f(lattice.position(i))).collect();
        Self { lattice, values }
    }

    pub fn constant(lattice: Lattice, c: T) -> Self {
        Self { lattice, values: vec![c; lattice.len()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> T {
        crate::scalar::ordered_sum(self.values.iter().copied()) / T::from_count(self.values.len())
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: T, other: &Self) {
        assert_eq!(self.lattice, other.lattice, "lattice mismatch");
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * *b;
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { lattice: self.lattice, values: self.values.iter().map(|v| *v * s).collect() }
    }

    pub fn subtract_mean(&mut self) {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
    }

    pub fn cast<U: Real>(&self) -> LatticeField<U> {
        LatticeField { lattice: self.lattice, values: self.values.iter().map(|v| U::lit(v.as_f64())).collect() }
    }
}

/// Vector field stored by face-normal components: component `k` lives on the
/// faces normal to axis `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField<T> {
    pub comps: Vec<LatticeField<T>>,
}

pub type VectorField<T> = FaceField<T>;

impl<T: Real> FaceField<T> {
    pub fn zeros(grid: &Grid) -> Self {
        Self { comps: (0..grid.dim()).map(|k| LatticeField::zeros(grid.faces(k))).collect() }
    }

    /// Face-normal sampling of a continuous vector field.
    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 3]) -> Vec<T>) -> Self {
        Self {
            comps: (0..grid.dim())
                .map(|k| LatticeField::from_fn(grid.faces(k), |x| f(x)[k]))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.comps.iter_mut().zip(&other.comps) {
            a.axpy(alpha, b);
        }
    }

    /// Sum of squares over every stored component.
    pub fn norm_sq(&self) -> T {
        let mut acc = T::zero();
        for c in &self.comps {
            for v in &c.values {
                acc += *v * *v;
            }
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.is_finite())
    }
}

/// Pairs `(j, k)` with `j < k` in lexicographic order; the storage order of
/// skew-symmetric tensors.
pub fn skew_pairs(dim: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for j in 0..dim {
        for k in (j + 1)..dim {
            out.push((j, k));
        }
    }
    out
}

/// Skew-symmetric tensor field: only the components `j < k` are stored (on
/// the `(j, k)` edge lattice); `(k, j)` is read back with a sign flip, so
/// skew-symmetry holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct SkewField<T> {
    pub dim: usize,
    pub upper: Vec<LatticeField<T>>,
}

impl<T: Real> SkewField<T> {
    pub fn zeros(grid: &Grid) -> Self {
        let upper = skew_pairs(grid.dim()).into_iter().map(|(j, k)| LatticeField::zeros(grid.edges(j, k))).collect();
        Self { dim: grid.dim(), upper }
    }

    fn slot(&self, j: usize, k: usize) -> usize {
        skew_pairs(self.dim).iter().position(|&p| p == (j, k)).expect("j < k")
    }

    /// Component `(j, k)` with its sign: `(field, +1)` when `j < k`,
    /// `(field, -1)` when `j > k`, `None` on the diagonal.
    pub fn component(&self, j: usize, k: usize) -> Option<(&LatticeField<T>, T)> {
        use std::cmp::Ordering;
        match j.cmp(&k) {
            Ordering::Less => Some((&self.upper[self.slot(j, k)], T::one())),
            Ordering::Greater => Some((&self.upper[self.slot(k, j)], -T::one())),
            Ordering::Equal => None,
        }
    }

    pub fn upper_mut(&mut self, j: usize, k: usize) -> &mut LatticeField<T> {
        let s = self.slot(j, k);
        &mut self.upper[s]
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { dim: self.dim, upper: self.upper.iter().map(|c| c.scaled(s)).collect() }
    }

    pub fn axpy(&mut self, alpha: T, other: &Self) {
        for (a, b) in self.upper.iter_mut().zip(&other.upper) {
            a.axpy(alpha, b);
        }
    }
}
