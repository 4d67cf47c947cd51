#![allow(dead_code)]

use homlab::field::{sample_field, CoefficientField, EnsembleKind, EnsembleSpec, MatrixSpec};
use homlab::sparse::CsrMatrix;
use homlab::Grid;
use nalgebra::{DMatrix, DVector};

pub fn checkerboard(grid: &Grid, seed: u64) -> CoefficientField<f64> {
    let spec = EnsembleSpec::checkerboard(vec![MatrixSpec::Scalar(0.25), MatrixSpec::Scalar(1.0)], 0.25, seed);
    sample_field(&spec, grid).unwrap()
}

/// Equal-volume stripes `{0.25, 1} Id` of width 1 normal to `e_1`.
pub fn laminate(grid: &Grid) -> CoefficientField<f64> {
    let spec = EnsembleSpec::new(
        EnsembleKind::Laminate { axis: 1, profile: vec![MatrixSpec::Scalar(0.25), MatrixSpec::Scalar(1.0)], width: 1.0 },
        0.25,
        0,
    );
    sample_field(&spec, grid).unwrap()
}

pub fn constant(grid: &Grid, rows: Vec<Vec<f64>>) -> CoefficientField<f64> {
    sample_field(&EnsembleSpec::constant(MatrixSpec::Rows(rows), 0.25), grid).unwrap()
}

/// Dense LU solve of `A x = b`. Singular systems have the constants as
/// kernel and co-kernel; the mean-free solution is returned.
pub fn dense_solve(a: &CsrMatrix<f64>, b: &[f64], singular: bool) -> Vec<f64> {
    let n = a.n();
    let mut m = DMatrix::from_row_slice(n, n, &a.to_dense());
    let mut rhs = DVector::from_column_slice(b);
    if singular {
        let mean = rhs.mean();
        rhs.iter_mut().for_each(|x| *x -= mean);
        m.iter_mut().for_each(|x| *x += 1.0 / n as f64);
    }
    m.lu().solve(&rhs).expect("dense system is regular").iter().copied().collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}
