//! Tilt-excess of a-harmonic functions on half-balls with no-flux flat
//! boundary, and the decay, coercivity, mean-value and Liouville diagnostics
//! built on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::calculus::{gradient, region_points, Region};
use crate::discrete::{FaceField, LatticeField, ScalarField};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::{radius, Grid};
use crate::halfspace::{HalfSpace, HalfSublinearityCurve};
use crate::linalg::psd_min_norm_solve;
use crate::pde::{face_scalar, BoundarySpec, Condition, Domain, Problem, SourceTerm};
use crate::scalar::Real;
use crate::solver::{SolveStats, SolverOptions};

/// Values below this are treated as numerically zero in log-log fits.
pub const EXCESS_FLOOR: f64 = 1e-14;

/// Dirichlet trace `g(x) = b . x` on all faces.
pub fn affine_trace<T: Real>(grid: &Grid, b: &[f64]) -> FaceField<T> {
    let d = grid.dim();
    face_scalar(grid, |x| T::lit((0..d).map(|k| b[k] * x[k]).sum()))
}

/// Band-limited random trace `R sum_k c_k cos(k w_k . x / R + p_k)` with
/// `c_k ~ N(0,1)/k`, random unit `w_k` and phase `p_k`, `k = 1..modes`.
pub fn band_limited_trace<T: Real>(grid: &Grid, r: f64, modes: usize, seed: u64) -> FaceField<T> {
    let d = grid.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<(f64, Vec<f64>, f64)> = (1..=modes)
        .map(|k| {
            let c: f64 = rng.sample::<f64, _>(StandardNormal) / k as f64;
            let mut w: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            w.iter_mut().for_each(|x| *x *= k as f64 / n);
            let p = rng.gen::<f64>() * std::f64::consts::TAU;
            (c, w, p)
        })
        .collect();
    face_scalar(grid, |x| {
        let v: f64 = waves
            .iter()
            .map(|(c, w, p)| c * ((0..d).map(|a| w[a] * x[a]).sum::<f64>() / r + p).cos())
            .sum();
        T::lit(r * v)
    })
}

/// Face values from the adjacent cell values (mean of the two, or the
/// single neighbor on the box boundary).
pub fn face_trace<T: Real>(u: &ScalarField<T>, grid: &Grid) -> FaceField<T> {
    let cells = grid.cells();
    let comps = (0..grid.dim())
        .map(|k| {
            let lat = grid.faces(k);
            let values = (0..lat.len())
                .map(|f| {
                    let m = lat.multi(f);
                    let hi = (m[k] < cells.shape[k]).then(|| u.values[cells.index(m)]);
                    let lo = cells.step(m, k, false).map(|p| u.values[cells.index(p)]);
                    match (lo, hi) {
                        (Some(a), Some(b)) => (a + b) * T::lit(0.5),
                        (Some(a), None) | (None, Some(a)) => a,
                        (None, None) => T::zero(),
                    }
                })
                .collect();
            LatticeField { lattice: lat, values }
        })
        .collect();
    FaceField { comps }
}

/// Solution of the heterogeneous equation on `B_R^+` with no-flux flat
/// boundary and Dirichlet data on the round part.
#[derive(Clone, Debug)]
pub struct HarmonicSample<T> {
    pub u: ScalarField<T>,
    pub r: f64,
    pub stats: SolveStats,
    /// `max_flat h |cell residual|` over `max |grad u|`.
    pub flat_residual: f64,
}

pub fn harmonic_sample<T: Real>(field: &CoefficientField<T>, r: f64, trace: FaceField<T>, opts: &SolverOptions) -> Result<HarmonicSample<T>> {
    let grid = *field.grid();
    if grid.is_torus() {
        return Err(Error::Incompatible("harmonic samples live on half-boxes".into()));
    }
    if r > grid.half_width() + 1e-12 {
        return Err(Error::RadiusTooLarge { radius: r, limit: grid.half_width() });
    }
    let bc = BoundarySpec { flat: Condition::no_flux_zero(), far: Condition::Dirichlet(Some(trace.clone())), round: Condition::Dirichlet(Some(trace)) };
    let problem = Problem::new(field, Domain::ball(grid, r), bc)?;
    let (u, stats) = problem.assemble(&SourceTerm::none())?.solve(opts)?;
    let res = problem.residual(&u, &SourceTerm::none())?;
    let d = grid.dim();
    let cells = grid.cells();
    let flat_max = (0..cells.len())
        .filter(|&c| cells.multi(c)[d - 1] == 0)
        .map(|c| (res.values[c].as_f64() * grid.h()).abs())
        .fold(0.0, f64::max);
    let grad_max = active_gradient(&u, r).comps.iter().map(|c| c.max_abs().as_f64()).fold(0.0, f64::max);
    let flat_residual = if grad_max > 0.0 { flat_max / grad_max } else { flat_max };
    Ok(HarmonicSample { u, r, stats, flat_residual })
}

/// Face gradient with every face that touches a cell outside `B_R` set to 0.
pub fn active_gradient<T: Real>(u: &ScalarField<T>, r: f64) -> FaceField<T> {
    let d = u.lattice.dim;
    let h = u.lattice.h;
    let mut g = gradient(u);
    for (k, c) in g.comps.iter_mut().enumerate() {
        for p in 0..c.len() {
            let x = c.lattice.position(p);
            let mut lo = x;
            let mut hi = x;
            lo[k] -= h / 2.0;
            hi[k] += h / 2.0;
            if radius(&lo, d) >= r || radius(&hi, d) >= r {
                c.values[p] = T::zero();
            }
        }
    }
    g
}

/// Face gradient of a sample, restricted to its ball.
pub fn sample_gradient<T: Real>(sample: &HarmonicSample<T>) -> FaceField<T> {
    active_gradient(&sample.u, sample.r)
}

/// Per component, the faces with centers in `B_r^+` whose two adjacent
/// cells lie in `B_limit`.
pub fn window_faces(grid: &Grid, r: f64, limit: f64) -> Result<Vec<Vec<usize>>> {
    let d = grid.dim();
    let h = grid.h();
    let sets: Vec<Vec<usize>> = (0..d)
        .map(|k| {
            let lat = grid.faces(k);
            region_points(&lat, r, [0.0; 3], Region::HalfBall)
                .into_iter()
                .filter(|&p| {
                    let x = lat.position(p);
                    let (mut lo, mut hi) = (x, x);
                    lo[k] -= h / 2.0;
                    hi[k] += h / 2.0;
                    radius(&lo, d) < limit && radius(&hi, d) < limit
                })
                .collect()
        })
        .collect();
    if sets.iter().any(|s| s.is_empty()) {
        return Err(Error::EmptyRegion(r));
    }
    Ok(sets)
}

/// `fint_{B_r^+} |g|^2`, each component averaged over its own faces.
pub fn mean_square<T: Real>(g: &FaceField<T>, grid: &Grid, r: f64, limit: f64) -> Result<f64> {
    let sets = window_faces(grid, r, limit)?;
    Ok(g.comps
        .iter()
        .zip(&sets)
        .map(|(c, set)| set.iter().map(|&p| c.values[p].as_f64().powi(2)).sum::<f64>() / set.len() as f64)
        .sum())
}

/// Value of the excess functional at a given tangential coefficient vector.
pub fn excess_functional<T: Real>(grad_u: &FaceField<T>, family: &[FaceField<T>], grid: &Grid, r: f64, limit: f64, t: &[f64]) -> Result<f64> {
    let sets = window_faces(grid, r, limit)?;
    let mut acc = 0.0;
    for (k, (c, set)) in grad_u.comps.iter().zip(&sets).enumerate() {
        let mut part = 0.0;
        for &p in set {
            let fit: f64 = family.iter().zip(t).map(|(g, ti)| ti * g.comps[k].values[p].as_f64()).sum();
            part += (c.values[p].as_f64() - fit).powi(2);
        }
        acc += part / set.len() as f64;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Excess {
    pub value: f64,
    /// Coefficients of `b~_r` in `b_1..b_{d-1}`.
    pub coeffs: Vec<f64>,
    /// `b~_r` itself.
    pub b: Vec<f64>,
    pub gram_condition: f64,
}

/// `inf_{b~ in B} fint_{B_r^+} |grad u - (b~ + grad phi^H_{b~})|^2` from the
/// normal equations.
/// `grad_u` is trusted on faces whose cells lie in `B_limit`.
pub fn excess<T: Real>(grad_u: &FaceField<T>, hs: &HalfSpace<T>, r: f64, limit: f64) -> Result<Excess> {
    let family: Vec<FaceField<T>> = (0..hs.dim() - 1).map(|i| hs.corrected_gradient(i)).collect();
    excess_with(grad_u, &family, hs, r, limit)
}

fn excess_with<T: Real>(grad_u: &FaceField<T>, family: &[FaceField<T>], hs: &HalfSpace<T>, r: f64, limit: f64) -> Result<Excess> {
    if r > hs.grid.half_width() + 1e-12 {
        return Err(Error::RadiusTooLarge { radius: r, limit: hs.grid.half_width() });
    }
    let sets = window_faces(&hs.grid, r, limit)?;
    let m = family.len();
    let mut gram = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for (k, set) in sets.iter().enumerate() {
        let w = 1.0 / set.len() as f64;
        for &p in set {
            let gu = grad_u.comps[k].values[p].as_f64();
            for i in 0..m {
                let gi = family[i].comps[k].values[p].as_f64();
                rhs[i] += w * gi * gu;
                for j in 0..m {
                    gram[i * m + j] += w * gi * family[j].comps[k].values[p].as_f64();
                }
            }
        }
    }
    let (coeffs, gram_condition) = psd_min_norm_solve(&gram, &rhs, 1e-12);
    let value = excess_functional(grad_u, family, &hs.grid, r, limit, &coeffs)?.max(0.0);
    let d = hs.dim();
    let b = (0..d).map(|a| coeffs.iter().enumerate().map(|(i, t)| t * hs.basis.b[i][a]).sum()).collect();
    Ok(Excess { value, coeffs, b, gram_condition })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExcessReport {
    pub radii: Vec<f64>,
    pub excess: Vec<Excess>,
    /// `Exc(r) / Exc(2r)` for consecutive radii.
    pub ratios: Vec<f64>,
    /// Half the log-log slope over radii in `[R/10, R]`; `None` when fewer
    /// than two values clear the floor.
    pub fitted_alpha: Option<f64>,
}

pub fn excess_decay_experiment<T: Real>(sample: &HarmonicSample<T>, hs: &HalfSpace<T>, radii: &[f64]) -> Result<ExcessReport> {
    let grad = sample_gradient(sample);
    let family: Vec<FaceField<T>> = (0..hs.dim() - 1).map(|i| hs.corrected_gradient(i)).collect();
    let mut excess = Vec::with_capacity(radii.len());
    for &r in radii {
        if r > sample.r + 1e-12 {
            return Err(Error::RadiusTooLarge { radius: r, limit: sample.r });
        }
        excess.push(excess_with(&grad, &family, hs, r, sample.r)?);
    }
    let ratios = excess
        .windows(2)
        .map(|w| if w[1].value > 0.0 { w[0].value / w[1].value } else { f64::NAN })
        .collect();
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(&excess)
        .filter(|(r, e)| **r >= sample.r / 10.0 - 1e-12 && e.value > EXCESS_FLOOR)
        .map(|(r, e)| (r.ln(), e.value.ln()))
        .collect();
    Ok(ExcessReport { radii: radii.to_vec(), excess, ratios, fitted_alpha: fit_slope(&pts).map(|s| s / 2.0) })
}

/// Least-squares slope through `(x, y)` points.
pub fn fit_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoercivityRow {
    pub t: f64,
    /// `fint_{B_r^+} |b~ + grad phi^H_{b~}|^2` at `b~ = t b_1`.
    pub value: f64,
    /// `(1/16)^{d+1} t^2`.
    pub bound: f64,
    /// `value / t^2`.
    pub constant: f64,
}

pub fn coercivity_check<T: Real>(hs: &HalfSpace<T>, r: f64, magnitudes: &[f64]) -> Result<Vec<CoercivityRow>> {
    let d = hs.dim();
    let g = hs.corrected_gradient(0);
    let base = mean_square(&g, &hs.grid, r, f64::INFINITY)?;
    Ok(magnitudes
        .iter()
        .map(|&t| CoercivityRow { t, value: base * t * t, bound: 16f64.powi(-(d as i32 + 1)) * t * t, constant: base })
        .collect())
}

/// Smallest sampled radius from which on `delta^H` stays below `threshold`.
pub fn smallness_radius(curve: &HalfSublinearityCurve, threshold: f64) -> Option<f64> {
    let mut found = None;
    for (r, v) in curve.radii.iter().zip(&curve.delta_h).rev() {
        if *v <= threshold {
            found = Some(*r);
        } else {
            break;
        }
    }
    found
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeanValueReport {
    pub radii: Vec<f64>,
    /// `fint_{B_r^+} |grad u|^2 / fint_{B_R^+} |grad u|^2`.
    pub ratios: Vec<f64>,
    pub c_mean: f64,
    /// The outer energy vanished; ratios are reported as 1.
    pub zero_energy: bool,
}

pub fn mean_value_check<T: Real>(sample: &HarmonicSample<T>, radii: &[f64]) -> Result<MeanValueReport> {
    let grad = sample_gradient(sample);
    let grid = Grid::half_box(sample.u.lattice.dim, sample.u.lattice.shape[0], sample.u.lattice.h)?;
    let outer = mean_square(&grad, &grid, sample.r, sample.r)?;
    let zero_energy = !(outer > EXCESS_FLOOR);
    let mut ratios = Vec::with_capacity(radii.len());
    for &r in radii {
        if r > sample.r + 1e-12 {
            return Err(Error::RadiusTooLarge { radius: r, limit: sample.r });
        }
        ratios.push(if zero_energy { 1.0 } else { mean_square(&grad, &grid, r, sample.r)? / outer });
    }
    let c_mean = ratios.iter().copied().fold(0.0, f64::max);
    Ok(MeanValueReport { radii: radii.to_vec(), ratios, c_mean, zero_energy })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiouvilleReport {
    /// Coefficients of `b~` in `b_1..b_{d-1}`, fitted at the largest radius.
    pub coeffs: Vec<f64>,
    pub b: Vec<f64>,
    pub c: f64,
    pub radii: Vec<f64>,
    /// `|u - b~.x - phi^H_{b~} - c|_{L^2(B_r^+)} / |u|_{L^2(B_r^+)}`.
    pub residuals: Vec<f64>,
    /// `r^{-(1+alpha)} (fint_{B_r^+} |u|^2)^{1/2}`.
    pub growth: Vec<f64>,
    /// Largest `|t_r - t_R| / |t_R|` over radii, from excess minimizers.
    pub slope_variation: f64,
    pub subquadratic: bool,
}

/// Growth exponent above 1 used in the subquadratic diagnostic.
pub const GROWTH_ALPHA: f64 = 0.5;

fn corrected_affine<T: Real>(hs: &HalfSpace<T>, i: usize) -> Vec<f64> {
    let d = hs.dim();
    let lat = hs.phi_h[i].lattice;
    (0..lat.len())
        .map(|p| {
            let x = lat.position(p);
            (0..d).map(|a| hs.basis.b[i][a] * x[a]).sum::<f64>() + hs.phi_h[i].values[p].as_f64()
        })
        .collect()
}

/// Fits `u = b~.x + phi^H_{b~} + c` on nested half-balls; `u` lives on the
/// cells of `hs.grid`.
pub fn liouville_check<T: Real>(u: &ScalarField<T>, hs: &HalfSpace<T>, radii: &[f64]) -> Result<LiouvilleReport> {
    let big = radii.iter().copied().fold(0.0, f64::max);
    if big > hs.grid.half_width() + 1e-12 {
        return Err(Error::RadiusTooLarge { radius: big, limit: hs.grid.half_width() });
    }
    let m = hs.dim() - 1;
    let basis: Vec<Vec<f64>> = (0..m).map(|i| corrected_affine(hs, i)).collect();
    let uv: Vec<f64> = u.values.iter().map(|v| v.as_f64()).collect();
    let cells = hs.grid.cells();

    // least squares in (t, c) over B_R^+
    let pts = region_points(&cells, big, [0.0; 3], Region::HalfBall);
    if pts.is_empty() {
        return Err(Error::EmptyRegion(big));
    }
    let n = m + 1;
    let column = |i: usize, p: usize| if i < m { basis[i][p] } else { 1.0 };
    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for &p in &pts {
        for i in 0..n {
            rhs[i] += column(i, p) * uv[p];
            for j in 0..n {
                gram[i * n + j] += column(i, p) * column(j, p);
            }
        }
    }
    let (sol, _) = psd_min_norm_solve(&gram, &rhs, 1e-14);
    let coeffs = sol[..m].to_vec();
    let c = sol[m];
    let d = hs.dim();
    let b = (0..d).map(|a| coeffs.iter().enumerate().map(|(i, t)| t * hs.basis.b[i][a]).sum()).collect();

    let mut residuals = Vec::new();
    let mut growth = Vec::new();
    for &r in radii {
        let ps = region_points(&cells, r, [0.0; 3], Region::HalfBall);
        if ps.is_empty() {
            return Err(Error::EmptyRegion(r));
        }
        let (mut err, mut norm) = (0.0, 0.0);
        for &p in &ps {
            let fit = (0..n).map(|i| sol[i] * column(i, p)).sum::<f64>();
            err += (uv[p] - fit).powi(2);
            norm += uv[p].powi(2);
        }
        residuals.push(if norm > 0.0 { (err / norm).sqrt() } else { err.sqrt() });
        growth.push(r.powf(-(1.0 + GROWTH_ALPHA)) * (norm / ps.len() as f64).sqrt());
    }

    // radius stability of the excess minimizer
    let grad = gradient(u);
    let family: Vec<FaceField<T>> = (0..m).map(|i| hs.corrected_gradient(i)).collect();
    let reference = excess_with(&grad, &family, hs, big, f64::INFINITY)?.coeffs;
    let ref_norm = reference.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut slope_variation = 0.0f64;
    for &r in radii {
        let t = excess_with(&grad, &family, hs, r, f64::INFINITY)?.coeffs;
        let dev = t.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        slope_variation = slope_variation.max(if ref_norm > 0.0 { dev / ref_norm } else { dev });
    }

    let increasing = growth.windows(2).all(|w| w[1] >= w[0]) && growth.len() > 1;
    let subquadratic = !(increasing && growth.last() > growth.first());
    if !subquadratic {
        log::warn!("growth diagnostic increases with r: not subquadratic");
    }
    Ok(LiouvilleReport { coeffs, b, c, radii: radii.to_vec(), residuals, growth, slope_variation, subquadratic })
}
