//! Whole-space correctors, flux potentials, homogenized coefficients and the
//! sublinearity functionals on a periodized box.

use crate::calculus::{diff, half_ball_average, region_points, Ghost, Region};
use crate::discrete::{skew_pairs, FaceField, LatticeField, ScalarField, SkewField};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::grid::{radius, Grid, Lattice};
use crate::io::Bundle;
use crate::pde::{BoundarySpec, Condition, Domain, Problem, SourceTerm};
use crate::poisson::PoissonSystem;
use crate::scalar::{ordered_sum, Real};
use crate::solver::{SolveStats, SolverOptions};

fn require_torus(grid: &Grid) -> Result<()> {
    if grid.is_torus() {
        Ok(())
    } else {
        Err(Error::InvalidArgument("whole-space correctors need a torus grid".into()))
    }
}

/// Face field `a xi` (face-normal components).
pub fn applied_to<T: Real>(field: &CoefficientField<T>, xi: &[T]) -> FaceField<T> {
    let grid = field.grid();
    let d = grid.dim();
    let mut out = FaceField::zeros(grid);
    for k in 0..d {
        for (f, v) in out.comps[k].values.iter_mut().enumerate() {
            *v = (0..d).map(|m| field.entry(k, f, k, m) * xi[m]).fold(T::zero(), |a, b| a + b);
        }
    }
    out
}

/// `phi_xi` with `-div(a grad phi) = div(a xi)`, periodic, mean zero.
pub fn solve_corrector<T: Real>(field: &CoefficientField<T>, xi: &[T], opts: &SolverOptions) -> Result<(ScalarField<T>, SolveStats)> {
    require_torus(field.grid())?;
    if xi.len() != field.dim() {
        return Err(Error::InvalidArgument(format!("direction has {} entries, expected {}", xi.len(), field.dim())));
    }
    let len = crate::scalar::norm2(xi).as_f64();
    if (len - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction must be a unit vector, |xi| = {len}")));
    }
    let problem = Problem::on_grid(field, BoundarySpec::periodic())?;
    let sys = problem.assemble(&SourceTerm::divergence(applied_to(field, xi)))?;
    sys.solve(opts)
}

/// `a (grad phi + xi)` on every face.
pub fn corrected_flux<T: Real>(field: &CoefficientField<T>, phi: &ScalarField<T>, xi: &[T]) -> Result<FaceField<T>> {
    let problem = Problem::on_grid(field, BoundarySpec::periodic())?;
    let mut q = problem.flux(phi, &SourceTerm::none());
    q.axpy(T::one(), &applied_to(field, xi));
    Ok(q)
}

pub fn unit_vector<T: Real>(d: usize, i: usize) -> Vec<T> {
    (0..d).map(|k| if k == i { T::one() } else { T::zero() }).collect()
}

/// Correctors for the coordinate directions; other directions are formed by
/// superposition.
#[derive(Clone, Debug)]
pub struct CorrectorSet<T> {
    pub grid: Grid,
    pub phi: Vec<ScalarField<T>>,
    pub stats: Vec<SolveStats>,
}

impl<T: Real> CorrectorSet<T> {
    pub fn solve(field: &CoefficientField<T>, opts: &SolverOptions) -> Result<Self> {
        let d = field.dim();
        let mut phi = Vec::with_capacity(d);
        let mut stats = Vec::with_capacity(d);
        for i in 0..d {
            let (p, s) = solve_corrector(field, &unit_vector(d, i), opts)?;
            log::debug!("corrector e{}: {} iterations", i + 1, s.iterations);
            phi.push(p);
            stats.push(s);
        }
        Ok(Self { grid: *field.grid(), phi, stats })
    }

    /// `phi_b = sum_w b_w phi_{e_w}`.
    pub fn phi_for(&self, b: &[T]) -> ScalarField<T> {
        let mut out = LatticeField::zeros(self.phi[0].lattice);
        for (w, p) in self.phi.iter().enumerate() {
            out.axpy(b[w], p);
        }
        out
    }
}

/// One realization's `a_hom`: column `i` is the box average of
/// `a (e_i + grad phi_{e_i})`. Row-major `d x d`.
pub fn homogenized_matrix<T: Real>(field: &CoefficientField<T>, set: &CorrectorSet<T>) -> Result<Vec<T>> {
    let d = field.dim();
    let mut a = vec![T::zero(); d * d];
    for i in 0..d {
        let q = corrected_flux(field, &set.phi[i], &unit_vector(d, i))?;
        for k in 0..d {
            a[k * d + i] = q.comps[k].mean();
        }
    }
    Ok(a)
}

/// Monte-Carlo estimate of `a_hom` over realizations.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedMatrix {
    pub dim: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl HomogenizedMatrix {
    pub fn from_samples(dim: usize, samples: Vec<Vec<f64>>) -> Self {
        let n = samples.len() as f64;
        let mut mean = vec![0.0; dim * dim];
        for s in &samples {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v / n;
            }
        }
        let stderr = (0..dim * dim)
            .map(|e| {
                if samples.len() < 2 {
                    return f64::NAN;
                }
                let var = samples.iter().map(|s| (s[e] - mean[e]).powi(2)).sum::<f64>() / (n - 1.0);
                (var / n).sqrt()
            })
            .collect();
        Self { dim, mean, stderr, samples }
    }

    pub fn count(&self) -> usize {
        self.samples.len()
    }

    pub fn min_rayleigh(&self) -> f64 {
        crate::linalg::min_rayleigh(&self.mean, self.dim)
    }
}

/// `q_xi = a (grad phi_xi + xi) - a_hom xi`.
pub fn flux_correction<T: Real>(field: &CoefficientField<T>, phi: &ScalarField<T>, xi: &[T], a_hom: &[T]) -> Result<FaceField<T>> {
    let d = field.dim();
    let mut q = corrected_flux(field, phi, xi)?;
    for k in 0..d {
        let c = (0..d).map(|m| a_hom[k * d + m] * xi[m]).fold(T::zero(), |a, b| a + b);
        for v in q.comps[k].values.iter_mut() {
            *v -= c;
        }
    }
    Ok(q)
}

fn face_norm<T: Real>(f: &FaceField<T>) -> f64 {
    f.norm_sq().as_f64().sqrt()
}

/// `sum_k D_k sigma_jk` for every `j`, on the faces normal to `j`.
pub fn potential_divergence<T: Real>(sigma: &SkewField<T>, ghost: Ghost) -> Vec<LatticeField<T>> {
    let d = sigma.dim;
    (0..d)
        .map(|j| {
            let mut acc: Option<LatticeField<T>> = None;
            for k in (0..d).filter(|&k| k != j) {
                let (s, sign) = sigma.component(j, k).expect("off-diagonal");
                let dk = diff(s, k, ghost).scaled(sign);
                match acc.as_mut() {
                    None => acc = Some(dk),
                    Some(a) => a.axpy(T::one(), &dk),
                }
            }
            acc.expect("d >= 2")
        })
        .collect()
}

/// `|sum_k D_k sigma_jk - q_j|_2 / |q|_2`.
pub fn potential_residual<T: Real>(sigma: &SkewField<T>, q: &FaceField<T>) -> f64 {
    let div = potential_divergence(sigma, Ghost::Odd);
    let mut err = 0.0;
    for (dj, qj) in div.iter().zip(&q.comps) {
        for (a, b) in dj.values.iter().zip(&qj.values) {
            err += (a.as_f64() - b.as_f64()).powi(2);
        }
    }
    let qn = face_norm(q);
    if qn == 0.0 {
        err.sqrt()
    } else {
        err.sqrt() / qn
    }
}

/// Flux potential of a divergence-free, mean-free periodic `q`: for `j < k`
/// solves `-Δ sigma_jk = D_j q_k - D_k q_j` on the `(j, k)` edge lattice, so
/// that `sum_k D_k sigma_jk = q_j`.
pub fn solve_flux_potential<T: Real>(q: &FaceField<T>, opts: &SolverOptions) -> Result<(SkewField<T>, Vec<SolveStats>)> {
    let lat = q.comps[0].lattice;
    if !lat.periodic {
        return Err(Error::InvalidArgument("flux potentials are solved on a torus".into()));
    }
    let h = lat.h;
    let d = q.dim();
    let mut div = diff(&q.comps[0], 0, Ghost::Even);
    for k in 1..d {
        div.axpy(T::one(), &diff(&q.comps[k], k, Ghost::Even));
    }
    let div_norm = div.values.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt() * h;
    // fluxes of unit slopes are O(1) per face; a q that cancels to solver
    // round-off (laminates across the stripes) is judged on that scale
    let faces: usize = q.comps.iter().map(|c| c.len()).sum();
    let qn = (face_norm(q) * h).max(1e-2 * (faces as f64).sqrt() * h);
    if div_norm / qn > 1e-7 {
        return Err(Error::NotDivergenceFree(div_norm / qn));
    }
    let mut sigma = SkewField { dim: d, upper: Vec::new() };
    let mut stats = Vec::new();
    for (j, k) in skew_pairs(d) {
        let mut rhs = diff(&q.comps[k], j, Ghost::Even);
        rhs.axpy(-T::one(), &diff(&q.comps[j], k, Ghost::Even));
        let (s, st) = PoissonSystem::new(rhs.lattice, [Ghost::Even; 3]).solve(&rhs, opts)?;
        sigma.upper.push(s);
        stats.push(st);
    }
    Ok((sigma, stats))
}

/// Correctors, fluxes and potentials of one torus realization.
#[derive(Clone, Debug)]
pub struct WholeSpace<T> {
    pub correctors: CorrectorSet<T>,
    pub a_hom: Vec<T>,
    /// `q_{e_i}` for each coordinate direction.
    pub q: Vec<FaceField<T>>,
    /// `sigma_{e_i}` for each coordinate direction.
    pub sigma: Vec<SkewField<T>>,
    pub potential_residuals: Vec<f64>,
}

impl<T: Real> WholeSpace<T> {
    /// Solves everything with the realization's own `a_hom` in `q`.
    pub fn solve(field: &CoefficientField<T>, opts: &SolverOptions) -> Result<Self> {
        let correctors = CorrectorSet::solve(field, opts)?;
        let a_hom = homogenized_matrix(field, &correctors)?;
        let d = field.dim();
        let mut q = Vec::with_capacity(d);
        let mut sigma = Vec::with_capacity(d);
        let mut potential_residuals = Vec::with_capacity(d);
        for i in 0..d {
            let qi = flux_correction(field, &correctors.phi[i], &unit_vector(d, i), &a_hom)?;
            let (si, _) = solve_flux_potential(&qi, opts)?;
            potential_residuals.push(potential_residual(&si, &qi));
            q.push(qi);
            sigma.push(si);
        }
        Ok(Self { correctors, a_hom, q, sigma, potential_residuals })
    }

    /// `sigma_b = sum_w b_w sigma_{e_w}`.
    pub fn sigma_for(&self, b: &[T]) -> SkewField<T> {
        let mut out = self.sigma[0].scaled(b[0]);
        for (w, s) in self.sigma.iter().enumerate().skip(1) {
            out.axpy(b[w], s);
        }
        out
    }
}

impl<T: Real> WholeSpace<T> {
    /// `a_hom`, `phi`, `q`, `sigma`, potential residuals and corrector solve
    /// stats.
    pub fn to_bundle(&self) -> Bundle {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let grid = self.correctors.grid;
        let mut b = Bundle::new(grid);
        b.push("a_hom", f(&self.a_hom));
        b.push("potential_residuals", self.potential_residuals.clone());
        b.push("stats", self.correctors.stats.iter().flat_map(|s| [s.iterations as f64, s.relative_residual, s.energy]).collect());
        for (i, p) in self.correctors.phi.iter().enumerate() {
            b.push(format!("phi.{i}"), f(&p.values));
        }
        for (i, q) in self.q.iter().enumerate() {
            for (k, c) in q.comps.iter().enumerate() {
                b.push(format!("q.{i}.{k}"), f(&c.values));
            }
        }
        for (i, s) in self.sigma.iter().enumerate() {
            for ((j, k), c) in skew_pairs(s.dim).into_iter().zip(&s.upper) {
                b.push(format!("sigma.{i}.{j}{k}"), f(&c.values));
            }
        }
        b
    }

    pub fn from_bundle(bundle: &Bundle) -> Result<Self> {
        let grid = bundle.grid;
        require_torus(&grid)?;
        let d = grid.dim();
        let field_of = |name: String, lat: Lattice| -> Result<LatticeField<T>> {
            let vals = bundle.get(&name)?;
            if vals.len() != lat.len() {
                return Err(Error::Format(format!("{name}: expected {} values, got {}", lat.len(), vals.len())));
            }
            Ok(LatticeField { lattice: lat, values: vals.iter().map(|v| T::lit(*v)).collect() })
        };
        let a_hom: Vec<T> = bundle.get("a_hom")?.iter().map(|v| T::lit(*v)).collect();
        if a_hom.len() != d * d {
            return Err(Error::Format("a_hom has the wrong size".into()));
        }
        let potential_residuals = bundle.get("potential_residuals")?.to_vec();
        let mut phi = Vec::with_capacity(d);
        let mut q = Vec::with_capacity(d);
        let mut sigma = Vec::with_capacity(d);
        for i in 0..d {
            phi.push(field_of(format!("phi.{i}"), grid.cells())?);
            let comps = (0..d).map(|k| field_of(format!("q.{i}.{k}"), grid.faces(k))).collect::<Result<Vec<_>>>()?;
            q.push(FaceField { comps });
            let upper = skew_pairs(d)
                .into_iter()
                .map(|(j, k)| field_of(format!("sigma.{i}.{j}{k}"), grid.edges(j, k)))
                .collect::<Result<Vec<_>>>()?;
            sigma.push(SkewField { dim: d, upper });
        }
        let flat = bundle.get("stats")?;
        if flat.len() != 3 * d {
            return Err(Error::Format("stats has the wrong size".into()));
        }
        let stats = flat
            .chunks(3)
            .map(|c| SolveStats { iterations: c[0] as usize, relative_residual: c[1], energy: c[2] })
            .collect();
        Ok(Self { correctors: CorrectorSet { grid, phi, stats }, a_hom, q, sigma, potential_residuals })
    }
}

fn mean_square<T: Real>(f: &LatticeField<T>, r: f64, subtract_mean: bool) -> Result<f64> {
    let pts = region_points(&f.lattice, r, [0.0; 3], Region::Ball);
    half_ball_average(f, r, [0.0; 3], Region::Ball)?;
    let m = if subtract_mean {
        ordered_sum(pts.iter().map(|&i| f.values[i].as_f64())) / pts.len() as f64
    } else {
        0.0
    };
    Ok(ordered_sum(pts.iter().map(|&i| (f.values[i].as_f64() - m).powi(2))) / pts.len() as f64)
}

/// `(1/r) (fint_{B_r} sum_i |phi_i|^2 + sum_{j,k} |sigma_ijk|^2)^{1/2}` over
/// the given family, each component averaged on its own lattice; with
/// `subtract_mean` every component is centered on `B_r` first.
pub fn delta<T: Real>(phi: &[ScalarField<T>], sigma: &[SkewField<T>], r: f64, subtract_mean: bool) -> Result<f64> {
    let mut acc = 0.0;
    for p in phi {
        acc += mean_square(p, r, subtract_mean)?;
    }
    for s in sigma {
        for c in &s.upper {
            // (j, k) and (k, j) both enter the sum
            acc += 2.0 * mean_square(c, r, subtract_mean)?;
        }
    }
    Ok(acc.sqrt() / r)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SublinearityCurve {
    pub radii: Vec<f64>,
    pub delta: Vec<f64>,
    pub delta_gno: Vec<f64>,
    /// `sum_{m' <= m} m' delta_{2^m'}^{1/3}` over the sampled radii `2^m'`.
    pub partial_sums: Vec<f64>,
    /// The same sums built from `delta_gno`.
    pub partial_sums_gno: Vec<f64>,
}

impl SublinearityCurve {
    /// Increments `m delta_{2^m}^{1/3}` of the partial sums.
    pub fn increments(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.partial_sums
            .iter()
            .map(|s| {
                let inc = s - prev;
                prev = *s;
                inc
            })
            .collect()
    }
}

fn dyadic_exponent(r: f64) -> Result<f64> {
    let m = r.log2();
    if r <= 0.0 || (m - m.round()).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("radius {r} is not a power of two")));
    }
    Ok(m.round())
}

pub fn sublinearity_curve<T: Real>(phi: &[ScalarField<T>], sigma: &[SkewField<T>], radii: &[f64]) -> Result<SublinearityCurve> {
    let mut curve = SublinearityCurve {
        radii: radii.to_vec(),
        delta: Vec::new(),
        delta_gno: Vec::new(),
        partial_sums: Vec::new(),
        partial_sums_gno: Vec::new(),
    };
    let (mut s, mut s_gno) = (0.0, 0.0);
    for &r in radii {
        let m = dyadic_exponent(r)?;
        let d = delta(phi, sigma, r, false)?;
        let g = delta(phi, sigma, r, true)?;
        s += m * d.cbrt();
        s_gno += m * g.cbrt();
        curve.delta.push(d);
        curve.delta_gno.push(g);
        curve.partial_sums.push(s);
        curve.partial_sums_gno.push(s_gno);
    }
    Ok(curve)
}

/// Radii `8h 2^k` up to `max`.
pub fn dyadic_radii(h: f64, max: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut r = 8.0 * h;
    while r <= max + 1e-12 {
        out.push(r);
        r *= 2.0;
    }
    out
}

/// Rotated-basis functional and its bound `sqrt(d(d+1)/2) delta_r`.
pub fn basis_change_check<T: Real>(ws: &WholeSpace<T>, basis: &[Vec<f64>], r: f64) -> Result<(f64, f64)> {
    let d = ws.a_hom.len().isqrt();
    check_orthonormal(basis, d)?;
    let mut phi = Vec::with_capacity(d);
    let mut sigma = Vec::with_capacity(d);
    for b in basis {
        let bt: Vec<T> = b.iter().map(|v| T::lit(*v)).collect();
        phi.push(ws.correctors.phi_for(&bt));
        sigma.push(ws.sigma_for(&bt));
    }
    let lhs = delta(&phi, &sigma, r, false)?;
    let base = delta(&ws.correctors.phi, &ws.sigma, r, false)?;
    Ok((lhs, ((d * (d + 1)) as f64 / 2.0).sqrt() * base))
}

pub fn check_orthonormal(basis: &[Vec<f64>], d: usize) -> Result<()> {
    if basis.len() != d || basis.iter().any(|b| b.len() != d) {
        return Err(Error::NotOrthonormal(f64::INFINITY));
    }
    let mut worst = 0.0f64;
    for (i, a) in basis.iter().enumerate() {
        for (j, b) in basis.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::NotOrthonormal(worst));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoScaleError {
    /// `|grad w|_{L^2(B_R)}` for `w = u - u_hom - eta phi_{e_i} d_i u_hom`.
    pub corrected: f64,
    /// `|grad (u - u_hom)|_{L^2(B_R)}`.
    pub uncorrected: f64,
    /// `|grad u|_{L^2(B_R)}`.
    pub solution: f64,
    pub cutoff_width: f64,
}

impl TwoScaleError {
    pub fn ratio(&self) -> f64 {
        if self.uncorrected > 0.0 {
            self.corrected / self.uncorrected
        } else {
            0.0
        }
    }
}

/// Two-scale expansion error on the ball `B_R` around the origin of a torus
/// field. `u` and `u_hom` share the Dirichlet trace `g`; the corrector term is
/// cut off linearly over a boundary layer of width `rho` (default
/// `R^{2/3}`, unit-cell units).
pub fn two_scale_error<T: Real>(
    field: &CoefficientField<T>,
    ws: &WholeSpace<T>,
    big_r: f64,
    g: impl Fn([f64; 3]) -> f64,
    rho: Option<f64>,
    opts: &SolverOptions,
) -> Result<TwoScaleError> {
    let grid = *field.grid();
    require_torus(&grid)?;
    if big_r >= grid.half_width() {
        return Err(Error::RadiusTooLarge { radius: big_r, limit: grid.half_width() });
    }
    if big_r < 8.0 {
        log::warn!("scale separation R = {big_r} is below 8 unit cells");
    }
    let d = grid.dim();
    let rho = rho.unwrap_or_else(|| big_r.powf(2.0 / 3.0));
    let domain = Domain::ball(grid, big_r);
    let trace = |x: [f64; 3]| T::lit(g(x));
    let bc = BoundarySpec::uniform(Condition::dirichlet_fn(&grid, trace));
    let (u, _) = Problem::new(field, domain, bc.clone())?.assemble(&SourceTerm::none())?.solve(opts)?;
    let hom = CoefficientField::constant(grid, &ws.a_hom, field.lambda());
    let (u_hom, _) = Problem::new(&hom, domain, bc)?.assemble(&SourceTerm::none())?.solve(opts)?;

    let cells = grid.cells();
    let active = |i: usize| radius(&cells.position(i), d) < big_r;
    let h = grid.h();
    // cell gradient of u_hom: average of the adjacent interior face differences
    let mut w = u.clone();
    w.axpy(-T::one(), &u_hom);
    let mut err = w.clone();
    for i in 0..cells.len() {
        if !active(i) {
            continue;
        }
        let m = cells.multi(i);
        let x = cells.position(i);
        let eta = ((big_r - radius(&x, d)) / rho).clamp(0.0, 1.0);
        if eta == 0.0 {
            continue;
        }
        let mut corr = 0.0;
        for k in 0..d {
            let up = cells.step(m, k, true).map(|q| cells.index(q)).filter(|&j| active(j));
            let down = cells.step(m, k, false).map(|q| cells.index(q)).filter(|&j| active(j));
            let c = u_hom.values[i].as_f64();
            let grad = match (up, down) {
                (Some(a), Some(b)) => (u_hom.values[a].as_f64() - u_hom.values[b].as_f64()) / (2.0 * h),
                (Some(a), None) => (u_hom.values[a].as_f64() - c) / h,
                (None, Some(b)) => (c - u_hom.values[b].as_f64()) / h,
                (None, None) => 0.0,
            };
            corr += ws.correctors.phi[k].values[i].as_f64() * grad;
        }
        err.values[i] -= T::lit(eta * corr);
    }
    let energy = |v: &ScalarField<T>| -> f64 {
        let mut acc = 0.0;
        for k in 0..d {
            let dk = diff(v, k, Ghost::Even);
            for (fi, val) in dk.values.iter().enumerate() {
                let fm = dk.lattice.multi(fi);
                let mut lo = fm;
                lo[k] = (fm[k] + cells.shape[k] - 1) % cells.shape[k];
                if active(cells.index(fm)) && active(cells.index(lo)) {
                    acc += val.as_f64().powi(2);
                }
            }
        }
        (acc * grid.cell_volume()).sqrt()
    };
    Ok(TwoScaleError { corrected: energy(&err), uncorrected: energy(&w), solution: energy(&u), cutoff_width: rho })
}
