//! Compressed sparse row matrices.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T> {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
}

impl<T: Real> CsrMatrix<T> {
    /// Starts an empty square matrix; rows are appended in order with
    /// [`push_row`](Self::push_row).
    pub fn with_capacity(n: usize, nnz: usize) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        Self { n, row_ptr, cols: Vec::with_capacity(nnz), vals: Vec::with_capacity(nnz) }
    }

    /// Appends the next row. Duplicate columns are merged and entries are
    /// kept sorted by column.
    pub fn push_row(&mut self, entries: &mut Vec<(usize, T)>) {
        entries.sort_by_key(|e| e.0);
        let start = self.cols.len();
        for &(c, v) in entries.iter() {
            debug_assert!(c < self.n);
            if self.cols.len() > start && *self.cols.last().unwrap() == c {
                *self.vals.last_mut().unwrap() += v;
            } else {
                self.cols.push(c);
                self.vals.push(v);
            }
        }
        self.row_ptr.push(self.cols.len());
        entries.clear();
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::with_capacity(n, n);
        let mut row = Vec::new();
        for i in 0..n {
            row.push((i, T::one()));
            m.push_row(&mut row);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn is_complete(&self) -> bool {
        self.row_ptr.len() == self.n + 1
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(p) => self.vals[r.start + p],
            Err(_) => T::zero(),
        }
    }

    pub fn mul_vec_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yi = acc;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        let scale = self.vals.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        if scale == T::zero() {
            return T::zero();
        }
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j > i {
                    worst = worst.max((v - self.get(j, i)).abs());
                } else if j < i && self.get(j, i) == T::zero() {
                    worst = worst.max(v.abs());
                }
            }
        }
        worst / scale
    }

    /// Dense row-major copy; for small oracle checks only.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[i * self.n + j] = v.as_f64();
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_duplicates_and_multiplies() {
        let mut m = CsrMatrix::<f64>::with_capacity(2, 4);
        m.push_row(&mut vec![(1, 1.0), (0, 2.0), (1, 0.5)]);
        m.push_row(&mut vec![(0, 1.5)]);
        assert!(m.is_complete());
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.mul_vec(&[1.0, 2.0]), vec![5.0, 1.5]);
        assert_eq!(m.diagonal(), vec![2.0, 0.0]);
        assert_eq!(m.asymmetry(), 0.0);
        assert_eq!(m.to_dense(), vec![2.0, 1.5, 1.5, 0.0]);
    }

    #[test]
    fn detects_asymmetry() {
        let mut m = CsrMatrix::<f64>::with_capacity(2, 3);
        m.push_row(&mut vec![(0, 2.0), (1, 1.0)]);
        m.push_row(&mut vec![(1, 2.0)]);
        assert_eq!(m.asymmetry(), 0.5);
    }
}
