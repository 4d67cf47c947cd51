//! Regular grids on periodized boxes and half-boxes, and the staggered
//! lattices (cells, faces, edges) that discrete fields live on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Torus,
    HalfBox,
}

impl Topology {
    pub fn as_str(&self) -> &'static str {
        match self {
            Topology::Torus => "torus",
            Topology::HalfBox => "half_box",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "torus" => Some(Topology::Torus),
            "half_box" => Some(Topology::HalfBox),
            _ => None,
        }
    }
}

/// A uniform Cartesian grid.
///
/// A torus grid covers `[-nh/2, nh/2)^d` with periodic identification, so the
/// origin sits on a grid vertex in the middle of the box. A half-box grid
/// covers `[-L, L]^{d-1} x [0, L]` with `L = nh/2`: `n` cells along each
/// tangential axis and `n/2` cells along the last (normal) axis. The flat
/// boundary `{x_d = 0}` is the lowest grid plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    h: f64,
    topology: Topology,
}

impl Grid {
    pub fn new(dim: usize, n: usize, h: f64, topology: Topology) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{2, 3}}")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("cells per side {n} must be a power of two >= 4")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!("spacing {h} must be positive")));
        }
        Ok(Self { dim, n, h, topology })
    }

    pub fn torus(dim: usize, n: usize, h: f64) -> Result<Self> {
        Self::new(dim, n, h, Topology::Torus)
    }

    pub fn half_box(dim: usize, n: usize, h: f64) -> Result<Self> {
        Self::new(dim, n, h, Topology::HalfBox)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn is_torus(&self) -> bool {
        self.topology == Topology::Torus
    }

    /// Side length of the torus, or `2L` for a half-box.
    pub fn side(&self) -> f64 {
        self.n as f64 * self.h
    }

    /// Half of the side: the largest admissible ball radius.
    pub fn half_width(&self) -> f64 {
        0.5 * self.side()
    }

    /// Cells per axis; unused axes have extent 1.
    pub fn shape(&self) -> [usize; 3] {
        let mut s = [1; 3];
        for a in s.iter_mut().take(self.dim) {
            *a = self.n;
        }
        if self.topology == Topology::HalfBox {
            s[self.dim - 1] = self.n / 2;
        }
        s
    }

    pub fn origin(&self) -> [f64; 3] {
        let mut o = [0.0; 3];
        for a in o.iter_mut().take(self.dim) {
            *a = -self.half_width();
        }
        if self.topology == Topology::HalfBox {
            o[self.dim - 1] = 0.0;
        }
        o
    }

    pub fn num_cells(&self) -> usize {
        self.shape().iter().product()
    }

    /// Volume of one cell, `h^d`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    fn lattice(&self, node: [bool; 3]) -> Lattice {
        let mut shape = self.shape();
        let periodic = self.is_torus();
        if !periodic {
            for a in 0..self.dim {
                if node[a] {
                    shape[a] += 1;
                }
            }
        }
        Lattice { dim: self.dim, shape, node, origin: self.origin(), h: self.h, periodic }
    }

    /// Cell centers.
    pub fn cells(&self) -> Lattice {
        self.lattice([false; 3])
    }

    /// Centers of the faces normal to `axis`. Face `m` along `axis` lies
    /// between cells `m - 1` and `m`; on a half-box faces `0` and `n_axis`
    /// are boundary faces.
    pub fn faces(&self, axis: usize) -> Lattice {
        let mut node = [false; 3];
        node[axis] = true;
        self.lattice(node)
    }

    /// Midpoints of the codimension-two edges spanned by the axes other than
    /// `j` and `k` (the corners of a 2D grid).
    pub fn edges(&self, j: usize, k: usize) -> Lattice {
        let mut node = [false; 3];
        node[j] = true;
        node[k] = true;
        self.lattice(node)
    }

    /// Total number of faces over all axes.
    pub fn num_faces(&self) -> usize {
        (0..self.dim).map(|k| self.faces(k).len()).sum()
    }
}

/// A box of sample points, each axis either cell-centered or node-centered
/// (offset by half a spacing), optionally periodic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub dim: usize,
    pub shape: [usize; 3],
    pub node: [bool; 3],
    pub origin: [f64; 3],
    pub h: f64,
    pub periodic: bool,
}

impl Lattice {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, m: [usize; 3]) -> usize {
        (m[0] * self.shape[1] + m[1]) * self.shape[2] + m[2]
    }

    #[inline]
    pub fn multi(&self, idx: usize) -> [usize; 3] {
        let m2 = idx % self.shape[2];
        let r = idx / self.shape[2];
        [r / self.shape[1], r % self.shape[1], m2]
    }

    #[inline]
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let off = if self.node[axis] { 0.0 } else { 0.5 };
        self.origin[axis] + (i as f64 + off) * self.h
    }

    #[inline]
    pub fn position_multi(&self, m: [usize; 3]) -> [f64; 3] {
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.coordinate(a, m[a]);
        }
        x
    }

    #[inline]
    pub fn position(&self, idx: usize) -> [f64; 3] {
        self.position_multi(self.multi(idx))
    }

    /// Neighbor one step along `axis` (`forward` selects the direction);
    /// wraps on periodic lattices, `None` past the end otherwise.
    #[inline]
    pub fn step(&self, m: [usize; 3], axis: usize, forward: bool) -> Option<[usize; 3]> {
        let n = self.shape[axis];
        let mut out = m;
        if forward {
            if m[axis] + 1 < n {
                out[axis] += 1;
            } else if self.periodic {
                out[axis] = 0;
            } else {
                return None;
            }
        } else if m[axis] > 0 {
            out[axis] -= 1;
        } else if self.periodic {
            out[axis] = n - 1;
        } else {
            return None;
        }
        Some(out)
    }

    /// The lattice with the centering of `axis` flipped, i.e. the target of a
    /// difference quotient along `axis`.
    pub fn flipped(&self, axis: usize) -> Lattice {
        let mut out = *self;
        out.node[axis] = !self.node[axis];
        if !self.periodic {
            if self.node[axis] {
                out.shape[axis] -= 1;
            } else {
                out.shape[axis] += 1;
            }
        }
        out
    }
}

/// Euclidean norm over the first `dim` components.
#[inline]
pub fn radius(x: &[f64; 3], dim: usize) -> f64 {
    x.iter().take(dim).map(|v| v * v).sum::<f64>().sqrt()
}
