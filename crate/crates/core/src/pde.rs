//! Cell-centered finite volumes for `-div(a grad u) = f + div F`.
//!
//! Unknowns live at cell centers, coefficients and fluxes on faces. The flux
//! across a face normal to `e_k` is
//! `a_kk (u_hi - u_lo) / h + sum_{m != k} a_km T_m`, where `T_m` averages the
//! centered tangential differences of the two adjacent cells. The same face
//! stencil drives both [`Problem::assemble`] and [`Problem::flux`], so
//! discrete conservation is exact.

use crate::discrete::{FaceField, ScalarField};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::{radius, Grid, Lattice};
use crate::scalar::Real;
use crate::solver::{self, SolveStats, SolverOptions};
use crate::sparse::CsrMatrix;

/// Boundary face groups of a half-box domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    /// `x_d = 0`.
    Flat,
    /// The outer sides of the box.
    Far,
    /// The curved part of a ball domain.
    Round,
}

/// Condition on one boundary group. Data are face fields read only on the
/// boundary faces of the group; `None` means zero.
#[derive(Clone, Debug)]
pub enum Condition<T> {
    Periodic,
    /// Value `g` at the face center.
    Dirichlet(Option<FaceField<T>>),
    /// Total outward normal flux `(a grad u + F) . n = g`.
    NoFlux(Option<FaceField<T>>),
}

impl<T: Real> Condition<T> {
    pub fn dirichlet_zero() -> Self {
        Condition::Dirichlet(None)
    }

    pub fn no_flux_zero() -> Self {
        Condition::NoFlux(None)
    }

    /// Dirichlet data sampled from a function at face centers.
    pub fn dirichlet_fn(grid: &Grid, g: impl Fn([f64; 3]) -> T) -> Self {
        Condition::Dirichlet(Some(face_scalar(grid, g)))
    }

    fn value(data: &Option<FaceField<T>>, axis: usize, face: usize) -> T {
        data.as_ref().map_or(T::zero(), |f| f.comps[axis].values[face])
    }
}

/// Samples a scalar function at every face center (same value for all axes).
pub fn face_scalar<T: Real>(grid: &Grid, g: impl Fn([f64; 3]) -> T) -> FaceField<T> {
    FaceField {
        comps: (0..grid.dim())
            .map(|k| crate::discrete::LatticeField::from_fn(grid.faces(k), &g))
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct BoundarySpec<T> {
    pub flat: Condition<T>,
    pub far: Condition<T>,
    pub round: Condition<T>,
}

impl<T: Real> BoundarySpec<T> {
    pub fn periodic() -> Self {
        Self { flat: Condition::Periodic, far: Condition::Periodic, round: Condition::Periodic }
    }

    /// Same condition on every group.
    pub fn uniform(c: Condition<T>) -> Self {
        Self { flat: c.clone(), far: c.clone(), round: c }
    }

    /// No-flux on the flat plane, `far` on the rest (including a round part).
    pub fn half_space(flat: Condition<T>, far: Condition<T>) -> Self {
        Self { flat, round: far.clone(), far }
    }

    fn group(&self, g: Group) -> &Condition<T> {
        match g {
            Group::Flat => &self.flat,
            Group::Far => &self.far,
            Group::Round => &self.round,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct SourceTerm<T> {
    pub volume: Option<ScalarField<T>>,
    pub divergence: Option<FaceField<T>>,
}

impl<T: Real> SourceTerm<T> {
    pub fn none() -> Self {
        Self { volume: None, divergence: None }
    }

    pub fn volume(f: ScalarField<T>) -> Self {
        Self { volume: Some(f), divergence: None }
    }

    pub fn divergence(f: FaceField<T>) -> Self {
        Self { volume: None, divergence: Some(f) }
    }
}

/// Active region: the whole grid, or the cells whose centers lie in the open
/// ball of the given radius around the origin (a half-ball on half-boxes).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain {
    pub grid: Grid,
    pub ball: Option<f64>,
}

impl Domain {
    pub fn full(grid: Grid) -> Self {
        Self { grid, ball: None }
    }

    pub fn ball(grid: Grid, r: f64) -> Self {
        Self { grid, ball: Some(r) }
    }

    #[inline]
    pub fn active(&self, cells: &Lattice, m: [usize; 3]) -> bool {
        match self.ball {
            None => true,
            Some(r) => radius(&cells.position_multi(m), self.grid.dim()) < r,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FaceKind {
    Interior { lo: usize, hi: usize },
    /// `sign` is `+1` when the face is the upper face of `cell` (outward
    /// normal `+e_k`), `-1` otherwise.
    Boundary { cell: usize, sign: i8, group: Group },
    Inactive,
}

/// Assembled system `A u = b` over all cells; inactive cells carry identity
/// rows with zero right-hand side.
#[derive(Clone, Debug)]
pub struct LinearSystem<T> {
    pub matrix: CsrMatrix<T>,
    pub rhs: Vec<T>,
    pub cells: Lattice,
    pub symmetric: bool,
    /// Kernel spanned by the constants (periodic or pure no-flux problems).
    pub singular: bool,
    pub cell_volume: f64,
}

impl<T: Real> LinearSystem<T> {
    pub fn solve(&self, opts: &SolverOptions) -> Result<(ScalarField<T>, SolveStats)> {
        let (x, mut stats) = if self.symmetric {
            solver::pcg(&self.matrix, &self.rhs, opts, self.singular)?
        } else {
            log::debug!("non-symmetric operator; using BiCGSTAB");
            solver::bicgstab(&self.matrix, &self.rhs, opts, self.singular)?
        };
        stats.energy *= self.cell_volume;
        Ok((ScalarField { lattice: self.cells, values: x }, stats))
    }
}

/// A discretized boundary value problem: coefficients, active region and
/// boundary conditions.
pub struct Problem<'a, T> {
    pub field: &'a CoefficientField<T>,
    pub domain: Domain,
    pub bc: BoundarySpec<T>,
    cells: Lattice,
    diagonal: bool,
}

impl<'a, T: Real> Problem<'a, T> {
    pub fn new(field: &'a CoefficientField<T>, domain: Domain, bc: BoundarySpec<T>) -> Result<Self> {
        let grid = *field.grid();
        if domain.grid != grid {
            return Err(Error::Misaligned("domain and coefficient grids differ".into()));
        }
        let periodic = |c: &Condition<T>| matches!(c, Condition::Periodic);
        if grid.is_torus() {
            match domain.ball {
                None if !(periodic(&bc.flat) && periodic(&bc.far) && periodic(&bc.round)) => {
                    return Err(Error::Incompatible("torus grids admit only periodic conditions".into()));
                }
                Some(r) if periodic(&bc.round) || r >= grid.half_width() => {
                    return Err(Error::Incompatible(format!(
                        "a ball of radius {r} in a torus needs a non-periodic round boundary inside the period cell"
                    )));
                }
                _ => {}
            }
        } else if periodic(&bc.flat) || periodic(&bc.far) || (domain.ball.is_some() && periodic(&bc.round)) {
            return Err(Error::Incompatible("half-box boundaries cannot be periodic".into()));
        }
        Ok(Self { field, domain, bc, cells: grid.cells(), diagonal: field.is_diagonal() })
    }

    /// Whole grid, one condition set.
    pub fn on_grid(field: &'a CoefficientField<T>, bc: BoundarySpec<T>) -> Result<Self> {
        Self::new(field, Domain::full(*field.grid()), bc)
    }

    fn grid(&self) -> &Grid {
        &self.domain.grid
    }

    #[inline]
    fn cell_active(&self, m: [usize; 3]) -> bool {
        self.domain.active(&self.cells, m)
    }

    pub fn classify(&self, axis: usize, face: [usize; 3]) -> FaceKind {
        let cells = &self.cells;
        let n = cells.shape[axis];
        let (lo, hi) = if cells.periodic {
            let mut lo = face;
            lo[axis] = (face[axis] + n - 1) % n;
            (Some(lo), Some(face))
        } else {
            let lo = (face[axis] > 0).then(|| {
                let mut lo = face;
                lo[axis] -= 1;
                lo
            });
            let hi = (face[axis] < n).then_some(face);
            (lo, hi)
        };
        let lo_on = lo.filter(|m| self.cell_active(*m));
        let hi_on = hi.filter(|m| self.cell_active(*m));
        let d = self.grid().dim();
        match (lo_on, hi_on) {
            (Some(l), Some(h)) => FaceKind::Interior { lo: cells.index(l), hi: cells.index(h) },
            (Some(l), None) => {
                let group = if hi.is_some() { Group::Round } else { Group::Far };
                FaceKind::Boundary { cell: cells.index(l), sign: 1, group }
            }
            (None, Some(h)) => {
                let group = if lo.is_some() {
                    Group::Round
                } else if axis == d - 1 {
                    Group::Flat
                } else {
                    Group::Far
                };
                FaceKind::Boundary { cell: cells.index(h), sign: -1, group }
            }
            (None, None) => FaceKind::Inactive,
        }
    }

    /// Centered (or one-sided) difference of `u` along `m` at cell `c`, as
    /// weights on cell unknowns scaled by `scale`.
    fn tangential(&self, c: [usize; 3], m: usize, scale: T, out: &mut Vec<(usize, T)>) {
        let h = T::lit(self.grid().h());
        let plus = self.cells.step(c, m, true).filter(|x| self.cell_active(*x));
        let minus = self.cells.step(c, m, false).filter(|x| self.cell_active(*x));
        match (plus, minus) {
            (Some(p), Some(q)) => {
                let w = scale / (T::lit(2.0) * h);
                out.push((self.cells.index(p), w));
                out.push((self.cells.index(q), -w));
            }
            (Some(p), None) => {
                out.push((self.cells.index(p), scale / h));
                out.push((self.cells.index(c), -scale / h));
            }
            (None, Some(q)) => {
                out.push((self.cells.index(c), scale / h));
                out.push((self.cells.index(q), -scale / h));
            }
            (None, None) => {}
        }
    }

    /// Linear stencil of `e_k . a grad u` at a face: weights on cells plus a
    /// constant from Dirichlet data. `None` for no-flux and inactive faces.
    fn stencil(&self, axis: usize, face_idx: usize, kind: FaceKind, out: &mut Vec<(usize, T)>) -> Option<T> {
        out.clear();
        let d = self.grid().dim();
        let h = T::lit(self.grid().h());
        let akk = self.field.entry(axis, face_idx, axis, axis);
        let half = T::lit(0.5);
        match kind {
            FaceKind::Interior { lo, hi } => {
                out.push((hi, akk / h));
                out.push((lo, -akk / h));
                if !self.diagonal {
                    for m in (0..d).filter(|&m| m != axis) {
                        let akm = self.field.entry(axis, face_idx, axis, m);
                        if akm != T::zero() {
                            self.tangential(self.cells.multi(lo), m, half * akm, out);
                            self.tangential(self.cells.multi(hi), m, half * akm, out);
                        }
                    }
                }
                Some(T::zero())
            }
            FaceKind::Boundary { cell, sign, group } => match self.bc.group(group) {
                Condition::Dirichlet(data) => {
                    let g = Condition::value(data, axis, face_idx);
                    let s = if sign > 0 { T::one() } else { -T::one() };
                    let w = s * akk * T::lit(2.0) / h;
                    out.push((cell, -w));
                    if !self.diagonal {
                        for m in (0..d).filter(|&m| m != axis) {
                            let akm = self.field.entry(axis, face_idx, axis, m);
                            if akm != T::zero() {
                                self.tangential(self.cells.multi(cell), m, akm, out);
                            }
                        }
                    }
                    Some(w * g)
                }
                _ => None,
            },
            FaceKind::Inactive => None,
        }
    }

    fn source_face(src: &SourceTerm<T>, axis: usize, face: usize) -> T {
        src.divergence.as_ref().map_or(T::zero(), |f| f.comps[axis].values[face])
    }

    /// The two faces of cell `c` normal to `axis`, with outward signs.
    fn cell_faces(&self, c: [usize; 3], axis: usize) -> [([usize; 3], i8); 2] {
        let mut hi = c;
        hi[axis] += 1;
        if self.cells.periodic && hi[axis] == self.cells.shape[axis] {
            hi[axis] = 0;
        }
        [(c, -1), (hi, 1)]
    }

    pub fn assemble(&self, src: &SourceTerm<T>) -> Result<LinearSystem<T>> {
        let grid = *self.grid();
        let d = grid.dim();
        let h = T::lit(grid.h());
        let n = self.cells.len();
        let face_lats: Vec<Lattice> = (0..d).map(|k| grid.faces(k)).collect();
        let mut matrix = CsrMatrix::with_capacity(n, n * (2 * d + 1) * if self.diagonal { 1 } else { 3 });
        let mut rhs = vec![T::zero(); n];
        let mut row: Vec<(usize, T)> = Vec::new();
        let mut st: Vec<(usize, T)> = Vec::new();
        let mut anchored = false;
        for (ci, rhs_c) in rhs.iter_mut().enumerate() {
            let c = self.cells.multi(ci);
            if !self.cell_active(c) {
                row.push((ci, T::one()));
                matrix.push_row(&mut row);
                continue;
            }
            let mut b = src.volume.as_ref().map_or(T::zero(), |f| f.values[ci]);
            for k in 0..d {
                for (fm, sign) in self.cell_faces(c, k) {
                    let fi = face_lats[k].index(fm);
                    let kind = self.classify(k, fm);
                    let s = if sign > 0 { T::one() } else { -T::one() };
                    match self.stencil(k, fi, kind, &mut st) {
                        Some(constant) => {
                            anchored |= matches!(kind, FaceKind::Boundary { .. });
                            for &(j, w) in &st {
                                row.push((j, -s * w / h));
                            }
                            b += s * (constant + Self::source_face(src, k, fi)) / h;
                        }
                        None => {
                            if let FaceKind::Boundary { group, .. } = kind {
                                if let Condition::NoFlux(data) = self.bc.group(group) {
                                    b += Condition::value(data, k, fi) / h;
                                }
                            }
                        }
                    }
                }
            }
            *rhs_c = b;
            matrix.push_row(&mut row);
        }
        let singular = !anchored;
        let symmetric = self.diagonal || matrix.asymmetry() <= T::lit(1e-12);
        Ok(LinearSystem { matrix, rhs, cells: self.cells, symmetric, singular, cell_volume: grid.cell_volume() })
    }

    /// `a grad u` on every face (component along `+e_k`). No-flux faces
    /// report the flux implied by their datum and the divergence source;
    /// inactive faces are zero.
    pub fn flux(&self, u: &ScalarField<T>, src: &SourceTerm<T>) -> FaceField<T> {
        let grid = *self.grid();
        let mut out = FaceField::zeros(&grid);
        let mut st = Vec::new();
        for k in 0..grid.dim() {
            let lat = grid.faces(k);
            for fi in 0..lat.len() {
                let fm = lat.multi(fi);
                let kind = self.classify(k, fm);
                out.comps[k].values[fi] = match self.stencil(k, fi, kind, &mut st) {
                    Some(constant) => st.iter().fold(constant, |acc, &(j, w)| acc + w * u.values[j]),
                    None => match kind {
                        FaceKind::Boundary { sign, group, .. } => match self.bc.group(group) {
                            Condition::NoFlux(data) => {
                                let s = if sign > 0 { T::one() } else { -T::one() };
                                s * Condition::value(data, k, fi) - Self::source_face(src, k, fi)
                            }
                            _ => T::zero(),
                        },
                        _ => T::zero(),
                    },
                };
            }
        }
        out
    }

    /// Cell residual `b - A u` of the assembled equations.
    pub fn residual(&self, u: &ScalarField<T>, src: &SourceTerm<T>) -> Result<ScalarField<T>> {
        let sys = self.assemble(src)?;
        let au = sys.matrix.mul_vec(&u.values);
        Ok(ScalarField { lattice: self.cells, values: sys.rhs.iter().zip(&au).map(|(b, a)| *b - *a).collect() })
    }
}

/// Assembles on the whole grid of `field`.
pub fn assemble<T: Real>(field: &CoefficientField<T>, bc: &BoundarySpec<T>, src: &SourceTerm<T>) -> Result<LinearSystem<T>> {
    Problem::on_grid(field, bc.clone())?.assemble(src)
}

pub fn solve<T: Real>(system: &LinearSystem<T>, tol: f64, max_iter: usize) -> Result<(ScalarField<T>, SolveStats)> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} not in (0, 1)")));
    }
    system.solve(&SolverOptions { tol, max_iter })
}

/// `a grad u` with periodic conditions (torus fields).
pub fn flux<T: Real>(field: &CoefficientField<T>, u: &ScalarField<T>) -> Result<FaceField<T>> {
    let bc = if field.grid().is_torus() {
        BoundarySpec::periodic()
    } else {
        BoundarySpec::uniform(Condition::no_flux_zero())
    };
    Ok(Problem::on_grid(field, bc)?.flux(u, &SourceTerm::none()))
}
