//! Difference operators between staggered lattices, ball averages and the
//! Caccioppoli diagnostic.

use crate::discrete::{FaceField, LatticeField, ScalarField};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::{radius, Grid, Lattice};
use crate::pde::{BoundarySpec, Condition, Domain, Problem, SourceTerm};
use crate::scalar::Real;

/// What a difference quotient sees beyond a non-periodic boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ghost {
    /// The field vanishes on the boundary (odd reflection).
    Odd,
    /// Zero normal derivative (even reflection).
    Even,
}

/// Forward difference along `axis`; the result lives on the lattice with the
/// centering of `axis` flipped. Cell-to-node differences at a non-periodic
/// boundary use `ghost`.
pub fn diff<T: Real>(u: &LatticeField<T>, axis: usize, ghost: Ghost) -> LatticeField<T> {
    let src = u.lattice;
    let dst = src.flipped(axis);
    let inv_h = T::lit(1.0 / src.h);
    let n_src = src.shape[axis];
    let mut out = LatticeField::zeros(dst);
    for i in 0..dst.len() {
        let m = dst.multi(i);
        let mut up = m;
        let mut down = m;
        let (hi, lo) = if src.node[axis] {
            // node -> cell: cell i sits between nodes i and i + 1
            up[axis] = if src.periodic { (m[axis] + 1) % n_src } else { m[axis] + 1 };
            (Some(up), Some(down))
        } else if src.periodic {
            down[axis] = (m[axis] + n_src - 1) % n_src;
            (Some(up), Some(down))
        } else {
            // cell -> node: node i sits between cells i - 1 and i
            let hi = (m[axis] < n_src).then_some(up);
            let lo = (m[axis] > 0).then(|| {
                down[axis] -= 1;
                down
            });
            (hi, lo)
        };
        out.values[i] = match (hi, lo) {
            (Some(a), Some(b)) => (u.values[src.index(a)] - u.values[src.index(b)]) * inv_h,
            (Some(a), None) => match ghost {
                Ghost::Odd => T::lit(2.0) * u.values[src.index(a)] * inv_h,
                Ghost::Even => T::zero(),
            },
            (None, Some(b)) => match ghost {
                Ghost::Odd => -T::lit(2.0) * u.values[src.index(b)] * inv_h,
                Ghost::Even => T::zero(),
            },
            (None, None) => T::zero(),
        };
    }
    out
}

/// Face gradient of a cell field. On half-boxes the boundary faces carry 0
/// (their value depends on the boundary condition; see [`Problem::flux`]).
pub fn gradient<T: Real>(u: &ScalarField<T>) -> FaceField<T> {
    let d = u.lattice.dim;
    let mut comps = Vec::with_capacity(d);
    for k in 0..d {
        let mut g = diff(u, k, Ghost::Even);
        if !u.lattice.periodic {
            let n = g.lattice.shape[k];
            for i in 0..g.len() {
                let m = g.lattice.multi(i);
                if m[k] == 0 || m[k] == n - 1 {
                    g.values[i] = T::zero();
                }
            }
        }
        comps.push(g);
    }
    FaceField { comps }
}

/// Cell divergence of a face field.
pub fn divergence<T: Real>(f: &FaceField<T>) -> ScalarField<T> {
    let mut out: Option<ScalarField<T>> = None;
    for (k, c) in f.comps.iter().enumerate() {
        let dk = diff(c, k, Ghost::Even);
        match out.as_mut() {
            None => out = Some(dk),
            Some(o) => o.axpy(T::one(), &dk),
        }
    }
    out.expect("at least one component")
}

/// Averaging region for [`half_ball_average`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    /// `{|x - center| < r, x_d > 0}`.
    HalfBall,
    /// `{|x - center| < r}`.
    Ball,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BallAverage<T> {
    pub mean: T,
    pub count: usize,
}

fn check_radius(lat: &Lattice, r: f64) -> Result<()> {
    // every grid is centered on the origin in the tangential directions
    let limit = -lat.origin[0];
    if r > limit + 1e-12 {
        return Err(Error::RadiusTooLarge { radius: r, limit });
    }
    Ok(())
}

/// Lattice points inside the region, in storage order.
pub fn region_points(lat: &Lattice, r: f64, center: [f64; 3], region: Region) -> Vec<usize> {
    let d = lat.dim;
    (0..lat.len())
        .filter(|&i| {
            let x = lat.position(i);
            let mut y = [0.0; 3];
            for a in 0..d {
                y[a] = x[a] - center[a];
            }
            radius(&y, d) < r && (region == Region::Ball || x[d - 1] > 0.0)
        })
        .collect()
}

/// Arithmetic mean over the lattice points inside the region.
pub fn half_ball_average<T: Real>(f: &LatticeField<T>, r: f64, center: [f64; 3], region: Region) -> Result<BallAverage<T>> {
    check_radius(&f.lattice, r)?;
    let pts = region_points(&f.lattice, r, center, region);
    if pts.is_empty() {
        return Err(Error::EmptyRegion(r));
    }
    let sum = crate::scalar::ordered_sum(pts.iter().map(|&i| f.values[i]));
    Ok(BallAverage { mean: sum / T::from_count(pts.len()), count: pts.len() })
}

/// `h^d` times the sum of `|D u|^2` over faces with centers in the region.
pub fn dirichlet_energy<T: Real>(grad: &FaceField<T>, r: f64, region: Region) -> T {
    let mut acc = T::zero();
    for c in &grad.comps {
        for i in region_points(&c.lattice, r, [0.0; 3], region) {
            acc += c.values[i] * c.values[i];
        }
    }
    acc * T::lit(grad.comps[0].lattice.h.powi(grad.dim() as i32))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CaccioppoliRatio {
    pub ratio: f64,
    /// Largest cell residual of the equation on `B_{2r}^+`, relative to the
    /// largest face flux over `h`.
    pub residual: f64,
    pub harmonic: bool,
}

/// `int_{B_r^+} |grad u|^2 / (r^-2 int_{B_2r^+} u^2)` for `u` on a half-box.
/// The no-flux flat boundary is part of the harmonicity check.
pub fn caccioppoli_ratio<T: Real>(u: &ScalarField<T>, field: &CoefficientField<T>, r: f64, tol: f64) -> Result<CaccioppoliRatio> {
    let grid: Grid = *field.grid();
    if grid.is_torus() {
        return Err(Error::InvalidArgument("the Caccioppoli diagnostic needs a half-box".into()));
    }
    check_radius(&u.lattice, 2.0 * r)?;
    let energy = dirichlet_energy(&gradient(u), r, Region::HalfBall).as_f64();
    let vol = grid.cell_volume();
    let pts = region_points(&u.lattice, 2.0 * r, [0.0; 3], Region::HalfBall);
    if pts.is_empty() {
        return Err(Error::EmptyRegion(2.0 * r));
    }
    let mass: f64 = pts.iter().map(|&i| u.values[i].as_f64().powi(2)).sum::<f64>() * vol;
    let ratio = if mass > 0.0 { energy * r * r / mass } else { 0.0 };

    let problem = Problem::new(
        field,
        Domain::full(grid),
        BoundarySpec::half_space(Condition::no_flux_zero(), Condition::no_flux_zero()),
    )?;
    let flux = problem.flux(u, &SourceTerm::none());
    let div = divergence(&flux);
    let scale = flux.comps.iter().map(|c| c.max_abs().as_f64()).fold(0.0, f64::max) / grid.h();
    // cells next to the outer boundary of B_2r^+ see that boundary's condition
    let inner = region_points(&u.lattice, 2.0 * r - 2.0 * grid.h(), [0.0; 3], Region::HalfBall);
    let worst = inner.iter().map(|&i| div.values[i].as_f64().abs()).fold(0.0, f64::max);
    let residual = if scale > 0.0 { worst / scale } else { 0.0 };
    let harmonic = residual <= tol;
    if !harmonic {
        log::warn!("Caccioppoli diagnostic on a function that is not a-harmonic (residual {residual:.3e})");
    }
    Ok(CaccioppoliRatio { ratio, residual, harmonic })
}
