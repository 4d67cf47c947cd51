//! Half-space-adapted correctors and flux potentials on a truncated half-box.
//!
//! For a tangential direction `b` (one with `e_d . a_hom b = 0`) the
//! whole-space corrector `phi_b` is corrected by `varphi_b`, an a-harmonic
//! function on the half-box whose flux through the flat boundary cancels the
//! one of `phi_b + b.x`. The matching flux potential adds
//! `psi_jk = D_k v_j - D_j v_k` to the restricted `sigma_b`, where
//! `Δ v_j = J_j` for the correction flux `J = a grad varphi_b`.
//!
//! Every `v_j` lives on the faces normal to `e_j`. Along its own axis it is
//! reflected evenly at every boundary, along the other axes oddly. This
//! realizes `v_j = 0` (`j != d`) and `D_d v_d = 0` on the flat plane and
//! keeps `div v` identically zero on the truncated box, so the potential
//! identity holds up to the solver tolerance.

use crate::calculus::{dirichlet_energy, diff, region_points, Ghost, Region};
use crate::corrector::{check_orthonormal, corrected_flux, delta, WholeSpace};
use crate::discrete::{skew_pairs, FaceField, LatticeField, ScalarField, SkewField};
use crate::error::{Error, Result};
use crate::field::{restrict_to_half_box, CoefficientField, HalfBoxEmbedding};
use crate::grid::{radius, Grid};
use crate::io::Bundle;
use crate::pde::{BoundarySpec, Condition, Domain, Problem, SourceTerm};
use crate::poisson::PoissonSystem;
use crate::scalar::Real;
use crate::solver::{SolveStats, SolverOptions};

/// Orthonormal basis `b_1..b_d` with `b_i` in `B = {b : e_d . a_hom b = 0}`
/// for `i < d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentialBasis {
    pub dim: usize,
    pub b: Vec<Vec<f64>>,
    pub a_hom: Vec<f64>,
}

fn orient(v: &mut [f64]) {
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-14) {
        if *first < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
}

/// `B` is the orthogonal complement of `a_hom^T e_d`; `b_d` is that normal
/// itself. Tangential vectors come from Gram-Schmidt on `e_1, e_2, ...`.
pub fn tangential_basis(a_hom: &[f64], dim: usize) -> Result<TangentialBasis> {
    if a_hom.len() != dim * dim {
        return Err(Error::InvalidArgument(format!("a_hom needs {} entries", dim * dim)));
    }
    let row: Vec<f64> = a_hom[(dim - 1) * dim..].to_vec();
    let len = row.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(len > 1e-12) {
        return Err(Error::InvalidArgument("e_d . a_hom vanishes; no tangential space".into()));
    }
    let mut normal: Vec<f64> = row.iter().map(|x| x / len).collect();
    orient(&mut normal);
    let mut b: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for e in 0..dim {
        if b.len() == dim - 1 {
            break;
        }
        let mut v: Vec<f64> = (0..dim).map(|k| if k == e { 1.0 } else { 0.0 }).collect();
        for u in b.iter().chain(std::iter::once(&normal)) {
            let p: f64 = v.iter().zip(u).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            orient(&mut v);
            b.push(v);
        }
    }
    b.push(normal);
    check_orthonormal(&b, dim)?;
    Ok(TangentialBasis { dim, b, a_hom: a_hom.to_vec() })
}

impl TangentialBasis {
    pub fn tangential(&self) -> &[Vec<f64>] {
        &self.b[..self.dim - 1]
    }

    /// `|e_d . a_hom b|`.
    pub fn normal_flux(&self, b: &[f64]) -> f64 {
        let d = self.dim;
        (0..d).map(|m| self.a_hom[(d - 1) * d + m] * b[m]).sum::<f64>().abs()
    }

    fn as_real<T: Real>(&self, i: usize) -> Vec<T> {
        self.b[i].iter().map(|v| T::lit(*v)).collect()
    }
}

fn restrict<T: Real>(emb: &HalfBoxEmbedding, src: &LatticeField<T>, dst: crate::grid::Lattice) -> LatticeField<T> {
    LatticeField { lattice: dst, values: emb.restrict(&src.lattice, &src.values, &dst) }
}

fn restrict_faces<T: Real>(emb: &HalfBoxEmbedding, src: &FaceField<T>, half: &Grid) -> FaceField<T> {
    FaceField { comps: src.comps.iter().enumerate().map(|(k, c)| restrict(emb, c, half.faces(k))).collect() }
}

fn restrict_skew<T: Real>(emb: &HalfBoxEmbedding, src: &SkewField<T>, half: &Grid) -> SkewField<T> {
    let upper = skew_pairs(src.dim)
        .into_iter()
        .zip(&src.upper)
        .map(|((j, k), c)| restrict(emb, c, half.edges(j, k)))
        .collect();
    SkewField { dim: src.dim, upper }
}

/// Residuals of one corrected direction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DirectionDiagnostics {
    /// `max_flat |e_d . a (grad phi^H + b)|` over `max |b + grad phi^H|`.
    pub flat_residual: f64,
    /// Relative residual of the correction solve.
    pub interior_residual: f64,
    /// `|D_k sigma^H_jk - q^H_j|_2 / |q^H|_2` on `B_{L/2}^+`.
    pub potential_residual: f64,
    /// `max |div v|` over `max |v| / h`.
    pub divergence_v: f64,
    pub iterations: usize,
}

/// Half-space-adapted correctors on a half-box of half-width `L`.
#[derive(Clone, Debug)]
pub struct HalfSpace<T> {
    pub grid: Grid,
    pub field: CoefficientField<T>,
    pub basis: TangentialBasis,
    /// `phi^H_{b_i}`; the last entry is the restriction of `phi_{b_d}`.
    pub phi_h: Vec<ScalarField<T>>,
    /// Corrections `varphi_{b_i}`, `i < d`.
    pub varphi: Vec<ScalarField<T>>,
    /// `v_{b_i j}` for `i < d`, `j = 1..d`.
    pub v: Vec<Vec<LatticeField<T>>>,
    pub psi: Vec<SkewField<T>>,
    /// `sigma^H_{b_i}`; the last entry is the restriction of `sigma_{b_d}`.
    pub sigma_h: Vec<SkewField<T>>,
    /// `a (b_i + grad phi^H_{b_i}) - a_hom b_i`, `i < d`.
    pub q_h: Vec<FaceField<T>>,
    pub diagnostics: Vec<DirectionDiagnostics>,
}

/// Shared inputs of both construction modes.
struct Setup<T> {
    half: Grid,
    emb: HalfBoxEmbedding,
    field: CoefficientField<T>,
    basis: TangentialBasis,
}

fn setup<T: Real>(torus_field: &CoefficientField<T>, ws: &WholeSpace<T>, l: f64) -> Result<Setup<T>> {
    let field = restrict_to_half_box(torus_field, l)?;
    let half = *field.grid();
    let emb = HalfBoxEmbedding::new(torus_field.grid(), &half)?;
    let a_hom: Vec<f64> = ws.a_hom.iter().map(|v| v.as_f64()).collect();
    let basis = tangential_basis(&a_hom, half.dim())?;
    Ok(Setup { half, emb, field, basis })
}

/// Outward flat-boundary datum `e_d . a (grad phi_b + b)` on the half-box
/// faces, from the torus realization.
fn flat_datum<T: Real>(torus_field: &CoefficientField<T>, ws: &WholeSpace<T>, b: &[T], s: &Setup<T>) -> Result<FaceField<T>> {
    let phi_b = ws.correctors.phi_for(b);
    let flux = corrected_flux(torus_field, &phi_b, b)?;
    Ok(restrict_faces(&s.emb, &flux, &s.half))
}

fn correction_problem<'a, T: Real>(field: &'a CoefficientField<T>, datum: FaceField<T>) -> Result<Problem<'a, T>> {
    Problem::new(
        field,
        Domain::full(*field.grid()),
        BoundarySpec::half_space(Condition::NoFlux(Some(datum)), Condition::dirichlet_zero()),
    )
}

fn solve_correction<T: Real>(field: &CoefficientField<T>, datum: FaceField<T>, opts: &SolverOptions) -> Result<(ScalarField<T>, SolveStats)> {
    correction_problem(field, datum)?.assemble(&SourceTerm::none())?.solve(opts)
}

/// Builds everything downstream of the correction `varphi` for `b_i`.
#[allow(clippy::too_many_arguments)]
fn complete_direction<T: Real>(
    torus_field: &CoefficientField<T>,
    ws: &WholeSpace<T>,
    s: &Setup<T>,
    i: usize,
    datum: FaceField<T>,
    varphi: ScalarField<T>,
    stats: SolveStats,
    opts: &SolverOptions,
) -> Result<(ScalarField<T>, Vec<LatticeField<T>>, SkewField<T>, SkewField<T>, FaceField<T>, DirectionDiagnostics)> {
    let d = s.half.dim();
    let h = s.half.h();
    let b: Vec<T> = s.basis.as_real(i);
    let problem = correction_problem(&s.field, datum.clone())?;

    // flat-boundary conservation: h (rhs - A varphi) on the first layer
    let res = problem.residual(&varphi, &SourceTerm::none())?;
    let phi_b = ws.correctors.phi_for(&b);
    let mut phi_h = restrict(&s.emb, &phi_b, s.half.cells());
    phi_h.axpy(T::one(), &varphi);
    let cells = s.half.cells();
    let mut flat_max = 0.0f64;
    for ci in 0..cells.len() {
        if cells.multi(ci)[d - 1] == 0 {
            flat_max = flat_max.max((res.values[ci].as_f64() * h).abs());
        }
    }
    let mut grad_max = 0.0f64;
    for k in 0..d {
        let dk = diff(&phi_h, k, Ghost::Even);
        for (fi, v) in dk.values.iter().enumerate() {
            let m = dk.lattice.multi(fi);
            if m[k] > 0 && m[k] < cells.shape[k] {
                grad_max = grad_max.max((v.as_f64() + s.basis.b[i][k]).abs());
            }
        }
    }

    // correction flux and vector potentials
    let j_flux = problem.flux(&varphi, &SourceTerm::none());
    let mut v = Vec::with_capacity(d);
    for j in 0..d {
        let mut ghosts = [Ghost::Odd; 3];
        ghosts[j] = Ghost::Even;
        let rhs = j_flux.comps[j].scaled(-T::one());
        let (mut vj, _) = PoissonSystem::new(rhs.lattice, ghosts).solve(&rhs, opts)?;
        if j == d - 1 {
            // normalization of the constant: mean over a small half-ball at the origin
            let pts = region_points(&vj.lattice, (4.0 * h).max(1.0), [0.0; 3], Region::HalfBall);
            if !pts.is_empty() {
                let m = pts.iter().fold(T::zero(), |a, &p| a + vj.values[p]) / T::from_count(pts.len());
                vj.values.iter_mut().for_each(|x| *x -= m);
            }
        }
        v.push(vj);
    }
    let mut div_v = diff(&v[0], 0, Ghost::Even);
    for (j, vj) in v.iter().enumerate().skip(1) {
        div_v.axpy(T::one(), &diff(vj, j, Ghost::Even));
    }
    let v_scale = v.iter().map(|x| x.max_abs().as_f64()).fold(0.0, f64::max) / h;
    let divergence_v = if v_scale > 0.0 { div_v.max_abs().as_f64() / v_scale } else { 0.0 };
    if divergence_v > 1e-6 {
        log::warn!("div v = {divergence_v:.3e} relative; truncation may be too small");
    }

    let mut psi = SkewField::zeros(&s.half);
    for (j, k) in skew_pairs(d) {
        let mut p = diff(&v[j], k, Ghost::Odd);
        p.axpy(-T::one(), &diff(&v[k], j, Ghost::Odd));
        *psi.upper_mut(j, k) = p;
    }
    let mut sigma_h = restrict_skew(&s.emb, &ws.sigma_for(&b), &s.half);
    sigma_h.axpy(T::one(), &psi);

    // q^H = restricted q_b + J
    let a_hom_b: Vec<T> = (0..d)
        .map(|k| (0..d).fold(T::zero(), |acc, m| acc + ws.a_hom[k * d + m] * b[m]))
        .collect();
    let mut q_h = restrict_faces(&s.emb, &corrected_flux(torus_field, &phi_b, &b)?, &s.half);
    for k in 0..d {
        q_h.comps[k].values.iter_mut().for_each(|x| *x -= a_hom_b[k]);
    }
    q_h.axpy(T::one(), &j_flux);
    let potential_residual = potential_residual_in(&sigma_h, &q_h, s.half.half_width() / 2.0);

    let diag = DirectionDiagnostics {
        flat_residual: if grad_max > 0.0 { flat_max / grad_max } else { flat_max },
        interior_residual: stats.relative_residual,
        potential_residual,
        divergence_v,
        iterations: stats.iterations,
    };
    Ok((phi_h, v, psi, sigma_h, q_h, diag))
}

/// `|sum_k D_k sigma_jk - q_j|_2 / |q|_2` over face centers in `B_r^+`.
pub fn potential_residual_in<T: Real>(sigma: &SkewField<T>, q: &FaceField<T>, r: f64) -> f64 {
    let div = crate::corrector::potential_divergence(sigma, Ghost::Odd);
    let (mut err, mut norm) = (0.0, 0.0);
    for (dj, qj) in div.iter().zip(&q.comps) {
        for p in region_points(&qj.lattice, r, [0.0; 3], Region::HalfBall) {
            err += (dj.values[p].as_f64() - qj.values[p].as_f64()).powi(2);
            norm += qj.values[p].as_f64().powi(2);
        }
    }
    if norm > 0.0 {
        (err / norm).sqrt()
    } else {
        err.sqrt()
    }
}

impl<T: Real> HalfSpace<T> {
    fn assemble_from(
        torus_field: &CoefficientField<T>,
        ws: &WholeSpace<T>,
        s: Setup<T>,
        corrections: Vec<(FaceField<T>, ScalarField<T>, SolveStats)>,
        opts: &SolverOptions,
    ) -> Result<Self> {
        let d = s.half.dim();
        let mut out = HalfSpace {
            grid: s.half,
            field: s.field.clone(),
            basis: s.basis.clone(),
            phi_h: Vec::new(),
            varphi: Vec::new(),
            v: Vec::new(),
            psi: Vec::new(),
            sigma_h: Vec::new(),
            q_h: Vec::new(),
            diagnostics: Vec::new(),
        };
        for (i, (datum, varphi, stats)) in corrections.into_iter().enumerate() {
            let (phi_h, v, psi, sigma_h, q_h, diag) = complete_direction(torus_field, ws, &s, i, datum, varphi.clone(), stats, opts)?;
            out.phi_h.push(phi_h);
            out.varphi.push(varphi);
            out.v.push(v);
            out.psi.push(psi);
            out.sigma_h.push(sigma_h);
            out.q_h.push(q_h);
            out.diagnostics.push(diag);
        }
        let (phi_d, sigma_d) = restrict_direction_d(ws, &s, d - 1);
        out.phi_h.push(phi_d);
        out.sigma_h.push(sigma_d);
        Ok(out)
    }

    /// Direct mode: one correction solve per tangential direction.
    pub fn direct(torus_field: &CoefficientField<T>, ws: &WholeSpace<T>, l: f64, opts: &SolverOptions) -> Result<Self> {
        let s = setup(torus_field, ws, l)?;
        let d = s.half.dim();
        let mut corrections = Vec::with_capacity(d - 1);
        for i in 0..d - 1 {
            let datum = flat_datum(torus_field, ws, &s.basis.as_real(i), &s)?;
            let (varphi, stats) = solve_correction(&s.field, datum.clone(), opts)?;
            log::debug!("half-space correction b{}: {} iterations", i + 1, stats.iterations);
            corrections.push((datum, varphi, stats));
        }
        Self::assemble_from(torus_field, ws, s, corrections, opts)
    }

    /// Dyadic mode: the correction is the sum of the annulus solutions;
    /// potentials are then built from that sum as in direct mode.
    pub fn dyadic(
        torus_field: &CoefficientField<T>,
        ws: &WholeSpace<T>,
        l: f64,
        cfg: &DyadicConfig,
        opts: &SolverOptions,
    ) -> Result<(Self, DyadicReport)> {
        let s = setup(torus_field, ws, l)?;
        let d = s.half.dim();
        if cfg.outer_radius() > l + 1e-12 {
            return Err(Error::RadiusTooLarge { radius: cfg.outer_radius(), limit: l });
        }
        let mut corrections = Vec::with_capacity(d - 1);
        let mut report = DyadicReport::new(cfg, ws)?;
        for i in 0..d - 1 {
            let datum = flat_datum(torus_field, ws, &s.basis.as_real(i), &s)?;
            let mut total: Option<ScalarField<T>> = None;
            let mut last = SolveStats::default();
            for (row, n) in cfg.annuli().enumerate() {
                let mut dn = datum.clone();
                let flat = &mut dn.comps[d - 1];
                for (p, v) in flat.values.iter_mut().enumerate() {
                    let x = flat.lattice.position(p);
                    *v *= T::lit(cfg.eta(n, radius(&x, d)));
                }
                let (vn, stats) = solve_correction(&s.field, dn, opts)?;
                last = stats;
                let r_n = cfg.r_n(n);
                let energy = mean_gradient_energy(&vn, r_n)?;
                report.rows[row].energy[i] = energy;
                match total.as_mut() {
                    None => total = Some(vn),
                    Some(t) => t.axpy(T::one(), &vn),
                }
            }
            let total = total.expect("at least one annulus");
            let (direct, _) = solve_correction(&s.field, datum.clone(), opts)?;
            report.direct_difference.push(relative_gradient_difference(&total, &direct, cfg.r0)?);
            // the annulus data sum to the datum cut off at the last annulus
            let mut summed = datum;
            let flat = &mut summed.comps[d - 1];
            for (p, v) in flat.values.iter_mut().enumerate() {
                let x = flat.lattice.position(p);
                *v *= T::lit(cfg.theta(cfg.last(), radius(&x, d)));
            }
            corrections.push((summed, total, last));
        }
        report.finish();
        Ok((Self::assemble_from(torus_field, ws, s, corrections, opts)?, report))
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `b_i + grad phi^H_{b_i}` on interior faces (boundary faces are 0).
    pub fn corrected_gradient(&self, i: usize) -> FaceField<T> {
        let d = self.dim();
        let cells = self.grid.cells();
        let comps = (0..d)
            .map(|k| {
                let mut g = diff(&self.phi_h[i], k, Ghost::Even);
                let bk = T::lit(self.basis.b[i][k]);
                for p in 0..g.len() {
                    let m = g.lattice.multi(p);
                    g.values[p] = if m[k] > 0 && m[k] < cells.shape[k] { g.values[p] + bk } else { T::zero() };
                }
                g
            })
            .collect();
        FaceField { comps }
    }
}

impl<T: Real> HalfSpace<T> {
    /// Basis, `a_hom`, `phi^H`, `varphi`, `sigma^H` and diagnostics.
    pub fn to_bundle(&self) -> Bundle {
        let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let mut b = Bundle::new(self.grid);
        b.push("a_hom", self.basis.a_hom.clone());
        b.push("basis", self.basis.b.concat());
        for (i, p) in self.phi_h.iter().enumerate() {
            b.push(format!("phi_h.{i}"), f(&p.values));
        }
        for (i, p) in self.varphi.iter().enumerate() {
            b.push(format!("varphi.{i}"), f(&p.values));
        }
        for (i, s) in self.sigma_h.iter().enumerate() {
            for ((j, k), c) in skew_pairs(s.dim).into_iter().zip(&s.upper) {
                b.push(format!("sigma_h.{i}.{j}{k}"), f(&c.values));
            }
        }
        for (i, g) in self.diagnostics.iter().enumerate() {
            b.push(
                format!("diagnostics.{i}"),
                vec![g.flat_residual, g.interior_residual, g.potential_residual, g.divergence_v, g.iterations as f64],
            );
        }
        b
    }

    /// Inverse of [`HalfSpace::to_bundle`]; `v`, `psi` and `q_h` are not
    /// stored and come back empty. `field` is the half-box coefficient field.
    pub fn from_bundle(bundle: &Bundle, field: CoefficientField<T>) -> Result<Self> {
        let grid = bundle.grid;
        if *field.grid() != grid {
            return Err(Error::Misaligned("bundle and field grids differ".into()));
        }
        let d = grid.dim();
        let a_hom = bundle.get("a_hom")?.to_vec();
        let flat = bundle.get("basis")?;
        if flat.len() != d * d || a_hom.len() != d * d {
            return Err(Error::Format("basis or a_hom has the wrong size".into()));
        }
        let basis = TangentialBasis { dim: d, b: flat.chunks(d).map(|c| c.to_vec()).collect(), a_hom };
        check_orthonormal(&basis.b, d).map_err(|e| Error::Format(e.to_string()))?;
        let field_of = |name: String, lat: crate::grid::Lattice| -> Result<LatticeField<T>> {
            let vals = bundle.get(&name)?;
            if vals.len() != lat.len() {
                return Err(Error::Format(format!("{name}: expected {} values, got {}", lat.len(), vals.len())));
            }
            Ok(LatticeField { lattice: lat, values: vals.iter().map(|v| T::lit(*v)).collect() })
        };
        let mut out = HalfSpace {
            grid,
            field,
            basis,
            phi_h: Vec::new(),
            varphi: Vec::new(),
            v: Vec::new(),
            psi: Vec::new(),
            sigma_h: Vec::new(),
            q_h: Vec::new(),
            diagnostics: Vec::new(),
        };
        for i in 0..d {
            out.phi_h.push(field_of(format!("phi_h.{i}"), grid.cells())?);
            let mut upper = Vec::new();
            for (j, k) in skew_pairs(d) {
                upper.push(field_of(format!("sigma_h.{i}.{j}{k}"), grid.edges(j, k))?);
            }
            out.sigma_h.push(SkewField { dim: d, upper });
        }
        for i in 0..d - 1 {
            out.varphi.push(field_of(format!("varphi.{i}"), grid.cells())?);
            let g = bundle.get(&format!("diagnostics.{i}"))?;
            if g.len() != 5 {
                return Err(Error::Format(format!("diagnostics.{i} needs 5 values")));
            }
            out.diagnostics.push(DirectionDiagnostics {
                flat_residual: g[0],
                interior_residual: g[1],
                potential_residual: g[2],
                divergence_v: g[3],
                iterations: g[4] as usize,
            });
        }
        Ok(out)
    }
}

fn restrict_direction_d<T: Real>(ws: &WholeSpace<T>, s: &Setup<T>, i: usize) -> (ScalarField<T>, SkewField<T>) {
    let b: Vec<T> = s.basis.as_real(i);
    let phi = restrict(&s.emb, &ws.correctors.phi_for(&b), s.half.cells());
    let sigma = restrict_skew(&s.emb, &ws.sigma_for(&b), &s.half);
    (phi, sigma)
}

/// `phi^H_{b_d}`, `sigma^H_{b_d}`: plain restrictions of the torus fields.
pub fn restrict_direction_d_of<T: Real>(torus_field: &CoefficientField<T>, ws: &WholeSpace<T>, l: f64) -> Result<(ScalarField<T>, SkewField<T>)> {
    let s = setup(torus_field, ws, l)?;
    let d = s.half.dim();
    Ok(restrict_direction_d(ws, &s, d - 1))
}

/// `(fint_{B_r^+} |grad u|^2)^{1/2}` from face differences; the average is
/// over the cells of `B_r^+`.
pub fn mean_gradient_energy<T: Real>(u: &ScalarField<T>, r: f64) -> Result<f64> {
    let cells = region_points(&u.lattice, r, [0.0; 3], Region::HalfBall).len();
    if cells == 0 {
        return Err(Error::EmptyRegion(r));
    }
    let grad = crate::calculus::gradient(u);
    let vol = u.lattice.h.powi(u.lattice.dim as i32);
    Ok((dirichlet_energy(&grad, r, Region::HalfBall).as_f64() / (vol * cells as f64)).sqrt())
}

/// `|grad (u - w)| / |grad w|` on `B_r^+`.
pub fn relative_gradient_difference<T: Real>(u: &ScalarField<T>, w: &ScalarField<T>, r: f64) -> Result<f64> {
    let mut diff_f = u.clone();
    diff_f.axpy(-T::one(), w);
    let num = mean_gradient_energy(&diff_f, r)?;
    let den = mean_gradient_energy(w, r)?;
    Ok(if den > 0.0 { num / den } else { num })
}

/// Radial partition and heights of the dyadic construction.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicConfig {
    pub r0: f64,
    /// Number of annuli, the inner ball `n = -1` included.
    pub n_max: i32,
}

impl DyadicConfig {
    pub fn new(r0: f64, n_max: i32) -> Result<Self> {
        let m = r0.log2();
        if !(r0 > 0.0) || (m - m.round()).abs() > 1e-9 || n_max < 1 {
            return Err(Error::InvalidArgument(format!("bad dyadic configuration r0 = {r0}, N = {n_max}")));
        }
        Ok(Self { r0, n_max })
    }

    pub fn annuli(&self) -> impl Iterator<Item = i32> {
        -1..self.n_max - 1
    }

    pub fn last(&self) -> i32 {
        self.n_max - 2
    }

    /// `r0 2^{n+1}`, the outer radius of annulus `n`.
    pub fn r_n(&self, n: i32) -> f64 {
        self.r0 * 2f64.powi(n + 1)
    }

    pub fn outer_radius(&self) -> f64 {
        self.r_n(self.last())
    }

    /// `1` up to `r0 2^n`, `0` from `r0 2^{n+1}`, linear in between.
    pub fn theta(&self, n: i32, r: f64) -> f64 {
        let a = self.r0 * 2f64.powi(n);
        ((2.0 * a - r) / a).clamp(0.0, 1.0)
    }

    pub fn eta(&self, n: i32, r: f64) -> f64 {
        if n == -1 {
            self.theta(-1, r)
        } else {
            self.theta(n, r) - self.theta(n - 1, r)
        }
    }

    /// `l_n = delta_{R_n}^{2/3} R_n`.
    pub fn height(&self, n: i32, delta_rn: f64) -> f64 {
        delta_rn.powf(2.0 / 3.0) * self.r_n(n)
    }

    /// Vertical cutoff with `|L_n'| = 1/l_n`.
    pub fn vertical(&self, l_n: f64, xd: f64) -> f64 {
        ((2.0 * l_n - xd.abs()) / l_n).clamp(0.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicRow {
    pub n: i32,
    pub r_n: f64,
    pub delta: f64,
    pub l_n: f64,
    /// `(fint_{B_{R_n}^+} |grad varphi^n|^2)^{1/2}` per tangential direction.
    pub energy: Vec<f64>,
    /// `delta_{R_n}^{1/3}`: the bound shape evaluated at `r = R_n`.
    pub bound_shape: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicReport {
    pub rows: Vec<DyadicRow>,
    /// `max energy / bound_shape` over annuli and directions.
    pub empirical_constant: f64,
    /// Per direction: `|grad(sum varphi^n - varphi)| / |grad varphi|` on `B_{r0}^+`.
    pub direct_difference: Vec<f64>,
    /// Largest deviation of `sum eta_n` from 1 inside the last annulus.
    pub partition_error: f64,
    /// Largest `|grad eta_n| r0 2^n / 4` over sampled points; at most 1.
    pub cutoff_gradient: f64,
}

impl DyadicReport {
    fn new<T: Real>(cfg: &DyadicConfig, ws: &WholeSpace<T>) -> Result<Self> {
        let d = ws.correctors.grid.dim();
        let mut rows = Vec::new();
        for n in cfg.annuli() {
            let r_n = cfg.r_n(n);
            let delta_rn = delta(&ws.correctors.phi, &ws.sigma, r_n, false)?;
            let l_n = cfg.height(n, delta_rn);
            if l_n >= r_n {
                log::warn!("annulus {n}: height {l_n} is not below R_n = {r_n}");
            }
            rows.push(DyadicRow { n, r_n, delta: delta_rn, l_n, energy: vec![0.0; d - 1], bound_shape: delta_rn.cbrt() });
        }
        // partition of unity and gradient bound on a fine radial sample
        let mut partition_error = 0.0f64;
        let mut cutoff_gradient = 0.0f64;
        let step = 1e-3 * cfg.r0;
        let inner = cfg.r0 * 2f64.powi(cfg.last());
        let mut r = 0.0;
        while r <= cfg.outer_radius() {
            let sum: f64 = cfg.annuli().map(|n| cfg.eta(n, r)).sum();
            if r <= inner {
                partition_error = partition_error.max((sum - 1.0).abs());
            }
            for n in cfg.annuli() {
                let g = (cfg.eta(n, r + step) - cfg.eta(n, r)).abs() / step;
                cutoff_gradient = cutoff_gradient.max(g * cfg.r0 * 2f64.powi(n) / 4.0);
            }
            r += step;
        }
        Ok(Self { rows, empirical_constant: 0.0, direct_difference: Vec::new(), partition_error, cutoff_gradient })
    }

    fn finish(&mut self) {
        self.empirical_constant = self
            .rows
            .iter()
            .flat_map(|row| row.energy.iter().map(move |e| if row.bound_shape > 0.0 { e / row.bound_shape } else { 0.0 }))
            .fold(0.0, f64::max);
    }
}

/// `delta^H_r` with the `b_d` term over the full torus ball (`delta_h`) and
/// over the half-ball restriction (`delta_h_half`).
#[derive(Clone, Debug, PartialEq)]
pub struct HalfSublinearityCurve {
    pub radii: Vec<f64>,
    pub delta_h: Vec<f64>,
    pub delta_h_half: Vec<f64>,
}

fn half_mean_square<T: Real>(f: &LatticeField<T>, r: f64, subtract_mean: bool) -> Result<f64> {
    let pts = region_points(&f.lattice, r, [0.0; 3], Region::HalfBall);
    if pts.is_empty() {
        return Err(Error::EmptyRegion(r));
    }
    let n = pts.len() as f64;
    let m = if subtract_mean { pts.iter().map(|&p| f.values[p].as_f64()).sum::<f64>() / n } else { 0.0 };
    Ok(pts.iter().map(|&p| (f.values[p].as_f64() - m).powi(2)).sum::<f64>() / n)
}

pub fn half_sublinearity_curve<T: Real>(hs: &HalfSpace<T>, ws: &WholeSpace<T>, radii: &[f64]) -> Result<HalfSublinearityCurve> {
    let d = hs.dim();
    let limit = hs.grid.half_width() / 2.0;
    let bd: Vec<T> = hs.basis.as_real(d - 1);
    let phi_d = ws.correctors.phi_for(&bd);
    let sigma_d = ws.sigma_for(&bd);
    let mut out = HalfSublinearityCurve { radii: radii.to_vec(), delta_h: Vec::new(), delta_h_half: Vec::new() };
    for &r in radii {
        if r > limit + 1e-12 {
            return Err(Error::RadiusTooLarge { radius: r, limit });
        }
        let mut tangential = 0.0;
        for i in 0..d - 1 {
            tangential += half_mean_square(&hs.phi_h[i], r, true)?;
            for c in &hs.sigma_h[i].upper {
                tangential += 2.0 * half_mean_square(c, r, false)?;
            }
        }
        let full = (r * delta(std::slice::from_ref(&phi_d), std::slice::from_ref(&sigma_d), r, false)?).powi(2);
        let mut half = half_mean_square(&hs.phi_h[d - 1], r, false)?;
        for c in &hs.sigma_h[d - 1].upper {
            half += 2.0 * half_mean_square(c, r, false)?;
        }
        out.delta_h.push((tangential + full).sqrt() / r);
        out.delta_h_half.push((tangential + half).sqrt() / r);
    }
    Ok(out)
}

/// Largest relative change of `delta^H_r` between a half-box and its
/// doubling, over the common radii `r <= L/4` of the smaller box.
pub fn truncation_sensitivity(small: &HalfSublinearityCurve, large: &HalfSublinearityCurve, l_small: f64) -> f64 {
    let mut worst = 0.0f64;
    for (r, a) in small.radii.iter().zip(&small.delta_h) {
        if *r > l_small / 4.0 + 1e-12 {
            continue;
        }
        if let Some(p) = large.radii.iter().position(|x| (x - r).abs() < 1e-12) {
            let b = large.delta_h[p];
            if b > 0.0 {
                worst = worst.max((a - b).abs() / b);
            }
        }
    }
    worst
}
