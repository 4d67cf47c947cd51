//! Random uniformly elliptic coefficient fields sampled on grid faces.
//!
//! Every face stores a full `d x d` matrix. The flux across a face normal to
//! `e_k` uses row `k` of that matrix, so only the face-normal row enters the
//! discrete operator; the whole matrix is kept for the ellipticity check and
//! for persistence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Lattice, Topology};
use crate::linalg;
use crate::scalar::Real;

/// A `d x d` matrix as given in an ensemble description: either a scalar
/// multiple of the identity or explicit rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn to_matrix<T: Real>(&self, dim: usize) -> Result<Vec<T>> {
        match self {
            MatrixSpec::Scalar(s) => Ok(linalg::identity::<T>(dim).into_iter().map(|v| v * T::lit(*s)).collect()),
            MatrixSpec::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidEnsemble(format!("matrix {rows:?} is not {dim}x{dim}")));
                }
                Ok(rows.iter().flatten().map(|v| T::lit(*v)).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleKind {
    Constant {
        matrix: MatrixSpec,
    },
    /// Stripes normal to `axis` (1-based), cycling through `profile`.
    Laminate {
        axis: usize,
        profile: Vec<MatrixSpec>,
        #[serde(default = "unit")]
        width: f64,
    },
    /// Unit cells of side `cell_size`; every cell draws one value per face
    /// axis, independently, for the faces it owns (its upper faces).
    Checkerboard {
        values: Vec<MatrixSpec>,
        #[serde(default = "unit")]
        cell_size: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
    /// `clamp(mean + amplitude * g, lambda, 1) * Id` for a stationary
    /// unit-variance Gaussian field `g` with squared-exponential covariance.
    GaussianLipschitz {
        correlation_length: f64,
        mean: f64,
        amplitude: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(flatten)]
    pub kind: EnsembleKind,
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, lambda: f64, seed: u64) -> Self {
        Self { kind, lambda, seed }
    }

    pub fn constant(matrix: MatrixSpec, lambda: f64) -> Self {
        Self::new(EnsembleKind::Constant { matrix }, lambda, 0)
    }

    pub fn checkerboard(values: Vec<MatrixSpec>, lambda: f64, seed: u64) -> Self {
        Self::new(EnsembleKind::Checkerboard { values, cell_size: 1.0, weights: None }, lambda, seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Length scale the coefficients are periodic or piecewise constant on.
    pub fn period(&self, h: f64) -> f64 {
        match &self.kind {
            EnsembleKind::Laminate { width, .. } => *width,
            EnsembleKind::Checkerboard { cell_size, .. } => *cell_size,
            _ => h,
        }
    }
}

/// Face-sampled coefficient field `a` on a grid.
#[derive(Clone, Debug)]
pub struct CoefficientField<T> {
    grid: Grid,
    lambda: T,
    seed: u64,
    /// Per axis: `d * d` entries for every face normal to that axis.
    faces: Vec<Vec<T>>,
    period: Option<f64>,
}

impl<T: Real> PartialEq for CoefficientField<T> {
    fn eq(&self, other: &Self) -> bool {
        self.grid == other.grid && self.lambda == other.lambda && self.seed == other.seed && self.faces == other.faces
    }
}

impl<T: Real> CoefficientField<T> {
    /// Builds a field from raw per-axis face data.
    pub fn from_faces(grid: Grid, lambda: T, seed: u64, faces: Vec<Vec<T>>) -> Result<Self> {
        let d = grid.dim();
        if faces.len() != d {
            return Err(Error::InvalidArgument(format!("expected {d} face arrays, got {}", faces.len())));
        }
        for (k, f) in faces.iter().enumerate() {
            let want = grid.faces(k).len() * d * d;
            if f.len() != want {
                return Err(Error::InvalidArgument(format!("axis {k}: expected {want} values, got {}", f.len())));
            }
        }
        Ok(Self { grid, lambda, seed, faces, period: None })
    }

    /// Every face carries the same matrix.
    pub fn constant(grid: Grid, matrix: &[T], lambda: T) -> Self {
        let faces = (0..grid.dim())
            .map(|k| {
                let count = grid.faces(k).len();
                let mut v = Vec::with_capacity(count * matrix.len());
                for _ in 0..count {
                    v.extend_from_slice(matrix);
                }
                v
            })
            .collect();
        Self { grid, lambda, seed: 0, faces, period: None }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn period(&self) -> Option<f64> {
        self.period
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.period = Some(period);
        self
    }

    pub fn face_data(&self, axis: usize) -> &[T] {
        &self.faces[axis]
    }

    /// Matrix on face `face` normal to `axis`, row-major.
    #[inline]
    pub fn matrix(&self, axis: usize, face: usize) -> &[T] {
        let dd = self.dim() * self.dim();
        &self.faces[axis][face * dd..(face + 1) * dd]
    }

    /// Entry `(row, col)` of the matrix on a face.
    #[inline]
    pub fn entry(&self, axis: usize, face: usize, row: usize, col: usize) -> T {
        let d = self.dim();
        self.faces[axis][face * d * d + row * d + col]
    }

    /// True when every stored matrix is diagonal (the discrete operator is
    /// then the plain `2d + 1` point stencil and exactly symmetric).
    pub fn is_diagonal(&self) -> bool {
        let d = self.dim();
        self.faces.iter().all(|f| f.chunks(d * d).all(|m| linalg::is_diagonal(m, d)))
    }

    /// True when all faces carry the same matrix.
    pub fn is_constant(&self) -> Option<Vec<T>> {
        let d = self.dim();
        let first = self.faces[0][..d * d].to_vec();
        let all = self.faces.iter().all(|f| f.chunks(d * d).all(|m| m == first.as_slice()));
        all.then_some(first)
    }

    pub fn scaled(&self, s: T) -> Self {
        let mut out = self.clone();
        for f in &mut out.faces {
            for v in f.iter_mut() {
                *v *= s;
            }
        }
        out
    }

    /// Field with every matrix transposed.
    pub fn adjoint(&self) -> Self {
        let d = self.dim();
        let mut out = self.clone();
        for f in &mut out.faces {
            for m in f.chunks_mut(d * d) {
                let t = linalg::transpose(m, d);
                m.copy_from_slice(&t);
            }
        }
        out
    }
}

fn check_in_omega<T: Real>(m: &[T], d: usize, lambda: T, location: &str) -> Result<()> {
    let gain = linalg::spectral_norm(m, d);
    let ray = linalg::min_rayleigh(m, d);
    let as_f64 = || m.iter().map(|v| v.as_f64()).collect::<Vec<_>>();
    if gain > T::one() {
        return Err(Error::NotElliptic {
            location: location.into(),
            reason: format!("|a xi| / |xi| reaches {gain}"),
            matrix: as_f64(),
        });
    }
    if ray < lambda {
        return Err(Error::NotElliptic {
            location: location.into(),
            reason: format!("xi . a xi / |xi|^2 drops to {ray} < lambda = {lambda}"),
            matrix: as_f64(),
        });
    }
    Ok(())
}

fn integral_ratio(numer: f64, denom: f64) -> Option<usize> {
    let q = numer / denom;
    let r = q.round();
    ((q - r).abs() < 1e-9 && r >= 1.0).then_some(r as usize)
}

/// Samples a coefficient field. Half-box grids are sampled on the torus of
/// the same width and restricted, so half-box fields are always restrictions
/// of a whole-space realization.
pub fn sample_field<T: Real>(spec: &EnsembleSpec, grid: &Grid) -> Result<CoefficientField<T>> {
    if grid.topology() == Topology::HalfBox {
        let torus = Grid::torus(grid.dim(), grid.n(), grid.h())?;
        let full = sample_field::<T>(spec, &torus)?;
        return restrict_to_half_box(&full, grid.half_width());
    }
    let d = grid.dim();
    let lambda = T::lit(spec.lambda);
    if !(spec.lambda > 0.0 && spec.lambda <= 1.0) {
        return Err(Error::InvalidEnsemble(format!("lambda {} not in (0, 1]", spec.lambda)));
    }
    let h = grid.h();
    let side = grid.side();
    let origin = grid.origin();
    let mut faces: Vec<Vec<T>> = Vec::with_capacity(d);
    match &spec.kind {
        EnsembleKind::Constant { matrix } => {
            let m = matrix.to_matrix::<T>(d)?;
            check_in_omega(&m, d, lambda, "constant ensemble")?;
            let mut f = CoefficientField::constant(*grid, &m, lambda);
            f.seed = spec.seed;
            return Ok(f.with_period(h));
        }
        EnsembleKind::Laminate { axis, profile, width } => {
            if *axis < 1 || *axis > d {
                return Err(Error::InvalidEnsemble(format!("laminate axis {axis} not in 1..={d}")));
            }
            if profile.is_empty() || !(*width > 0.0) {
                return Err(Error::InvalidEnsemble("laminate needs a non-empty profile and positive width".into()));
            }
            let ax = axis - 1;
            let mats = profile.iter().map(|p| p.to_matrix::<T>(d)).collect::<Result<Vec<_>>>()?;
            for (i, m) in mats.iter().enumerate() {
                check_in_omega(m, d, lambda, &format!("laminate stripe {i}"))?;
            }
            let period = width * profile.len() as f64;
            if integral_ratio(side, period).is_none() {
                return Err(Error::InvalidEnsemble(format!("side {side} is not a multiple of the laminate period {period}")));
            }
            for k in 0..d {
                let lat = grid.faces(k);
                let mut v = Vec::with_capacity(lat.len() * d * d);
                for idx in 0..lat.len() {
                    let x = lat.position(idx)[ax] - origin[ax];
                    let stripe = ((x / width) + 1e-9).floor() as usize % mats.len();
                    v.extend_from_slice(&mats[stripe]);
                }
                faces.push(v);
            }
            let mut f = CoefficientField::from_faces(*grid, lambda, spec.seed, faces)?;
            f.period = Some(*width);
            return Ok(f);
        }
        EnsembleKind::Checkerboard { values, cell_size, weights } => {
            if values.is_empty() {
                return Err(Error::InvalidEnsemble("checkerboard needs at least one value".into()));
            }
            let mats = values.iter().map(|p| p.to_matrix::<T>(d)).collect::<Result<Vec<_>>>()?;
            for (i, m) in mats.iter().enumerate() {
                check_in_omega(m, d, lambda, &format!("checkerboard value {i}"))?;
            }
            let per_cell = integral_ratio(*cell_size, h)
                .ok_or_else(|| Error::InvalidEnsemble(format!("cell size {cell_size} is not a multiple of h = {h}")))?;
            let cells = integral_ratio(side, *cell_size)
                .ok_or_else(|| Error::InvalidEnsemble(format!("side {side} is not a multiple of cell size {cell_size}")))?;
            let w = match weights {
                Some(w) if w.len() == mats.len() && w.iter().all(|x| *x >= 0.0) && w.iter().sum::<f64>() > 0.0 => w.clone(),
                Some(w) => return Err(Error::InvalidEnsemble(format!("bad weights {w:?}"))),
                None => vec![1.0; mats.len()],
            };
            let total: f64 = w.iter().sum();
            let cumulative: Vec<f64> = w
                .iter()
                .scan(0.0, |acc, x| {
                    *acc += x / total;
                    Some(*acc)
                })
                .collect();
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            let mut unit_shape = [1usize; 3];
            for a in unit_shape.iter_mut().take(d) {
                *a = cells;
            }
            let unit_lat = Lattice { dim: d, shape: unit_shape, node: [false; 3], origin, h: *cell_size, periodic: true };
            // draws[unit_cell * d + axis]
            let mut draws = vec![0usize; unit_lat.len() * d];
            for slot in draws.iter_mut() {
                let u: f64 = rng.gen();
                *slot = cumulative.iter().position(|c| u < *c).unwrap_or(mats.len() - 1);
            }
            for k in 0..d {
                let lat = grid.faces(k);
                let mut v = Vec::with_capacity(lat.len() * d * d);
                for idx in 0..lat.len() {
                    let m = lat.multi(idx);
                    let mut um = [0usize; 3];
                    for a in 0..d {
                        um[a] = m[a] / per_cell;
                    }
                    v.extend_from_slice(&mats[draws[unit_lat.index(um) * d + k]]);
                }
                faces.push(v);
            }
            let mut f = CoefficientField::from_faces(*grid, lambda, spec.seed, faces)?;
            f.period = Some(*cell_size);
            return Ok(f);
        }
        EnsembleKind::GaussianLipschitz { correlation_length, mean, amplitude } => {
            if !(*correlation_length > 0.0) {
                return Err(Error::InvalidEnsemble("correlation length must be positive".into()));
            }
            let g = crate::gaussian::sample_half_step_field(grid, *correlation_length, spec.seed);
            let n2 = 2 * grid.n();
            let lo = spec.lambda;
            for k in 0..d {
                let lat = grid.faces(k);
                let mut v = Vec::with_capacity(lat.len() * d * d);
                for idx in 0..lat.len() {
                    let m = lat.multi(idx);
                    let mut flat = 0usize;
                    for a in 0..d {
                        let half = if a == k { 2 * m[a] } else { 2 * m[a] + 1 };
                        flat = flat * n2 + half;
                    }
                    let s = (mean + amplitude * g[flat]).clamp(lo, 1.0);
                    for r in 0..d {
                        for c in 0..d {
                            v.push(if r == c { T::lit(s) } else { T::zero() });
                        }
                    }
                }
                faces.push(v);
            }
            let mut f = CoefficientField::from_faces(*grid, lambda, spec.seed, faces)?;
            f.period = Some(h);
            return Ok(f);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub axis: usize,
    pub face: usize,
    pub min_rayleigh: f64,
    pub gain: f64,
}

/// Extremes of the ellipticity quantities over all faces.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipticityReport {
    pub lambda: f64,
    /// `min over faces of min_{|xi|=1} xi . a xi`
    pub min_rayleigh: f64,
    /// `max over faces of max_{|xi|=1} |a xi|`
    pub max_gain: f64,
    pub violations: Vec<Violation>,
}

impl EllipticityReport {
    pub fn in_omega(&self) -> bool {
        self.min_rayleigh >= self.lambda && self.max_gain <= 1.0
    }
}

pub fn validate_ellipticity<T: Real>(field: &CoefficientField<T>) -> EllipticityReport {
    let d = field.dim();
    let lambda = field.lambda();
    let mut min_rayleigh = T::infinity();
    let mut max_gain = T::zero();
    let mut violations = Vec::new();
    for k in 0..d {
        for (face, m) in field.face_data(k).chunks(d * d).enumerate() {
            let ray = linalg::min_rayleigh(m, d);
            let gain = linalg::spectral_norm(m, d);
            min_rayleigh = min_rayleigh.min(ray);
            max_gain = max_gain.max(gain);
            if ray < lambda || gain > T::one() {
                violations.push(Violation { axis: k, face, min_rayleigh: ray.as_f64(), gain: gain.as_f64() });
            }
        }
    }
    EllipticityReport {
        lambda: lambda.as_f64(),
        min_rayleigh: min_rayleigh.as_f64(),
        max_gain: max_gain.as_f64(),
        violations,
    }
}

/// Maps points of a half-box lattice onto the torus lattice with the same
/// centering. The half-box `[-L, L]^{d-1} x [0, L]` sits inside the torus
/// `[-S/2, S/2)^d` with its flat boundary on the plane through the origin.
#[derive(Clone, Copy, Debug)]
pub struct HalfBoxEmbedding {
    pub dim: usize,
    pub torus_n: usize,
    pub offset: [usize; 3],
}

impl HalfBoxEmbedding {
    pub fn new(torus: &Grid, half: &Grid) -> Result<Self> {
        if !torus.is_torus() || half.is_torus() {
            return Err(Error::InvalidArgument("embedding needs a torus and a half-box".into()));
        }
        if torus.dim() != half.dim() || torus.h() != half.h() {
            return Err(Error::Misaligned("dimension or spacing differ".into()));
        }
        if half.n() > torus.n() {
            return Err(Error::Misaligned(format!("half-box width {} exceeds torus side {}", half.side(), torus.side())));
        }
        let d = torus.dim();
        let mut offset = [0usize; 3];
        for (a, o) in offset.iter_mut().enumerate().take(d) {
            *o = if a == d - 1 { torus.n() / 2 } else { (torus.n() - half.n()) / 2 };
        }
        Ok(Self { dim: d, torus_n: torus.n(), offset })
    }

    /// Torus multi-index of a half-box point (centering is preserved).
    #[inline]
    pub fn to_torus(&self, m: [usize; 3]) -> [usize; 3] {
        let mut out = [0usize; 3];
        for a in 0..self.dim {
            out[a] = (m[a] + self.offset[a]) % self.torus_n;
        }
        out
    }

    /// Copies torus lattice values onto the matching half-box lattice.
    pub fn restrict<T: Real>(&self, torus_lat: &Lattice, values: &[T], half_lat: &Lattice) -> Vec<T> {
        debug_assert_eq!(torus_lat.node, half_lat.node);
        (0..half_lat.len()).map(|i| values[torus_lat.index(self.to_torus(half_lat.multi(i)))]).collect()
    }
}

/// Restricts a torus field to the half-box `[-L, L]^{d-1} x [0, L]`.
pub fn restrict_to_half_box<T: Real>(field: &CoefficientField<T>, half_width: f64) -> Result<CoefficientField<T>> {
    let g = field.grid();
    if !g.is_torus() {
        return Err(Error::InvalidArgument("restriction needs a torus field".into()));
    }
    let cells = integral_ratio(2.0 * half_width, g.h())
        .ok_or_else(|| Error::Misaligned(format!("L = {half_width} is not a multiple of h / 2 = {}", g.h() / 2.0)))?;
    if 2.0 * half_width > g.side() + 1e-12 {
        return Err(Error::Misaligned(format!("2L = {} exceeds the torus side {}", 2.0 * half_width, g.side())));
    }
    if let Some(p) = field.period() {
        if integral_ratio(g.half_width(), p).is_none() {
            return Err(Error::Misaligned(format!("flat boundary is not on a period plane of the coefficients (period {p})")));
        }
    }
    let half = Grid::half_box(g.dim(), cells, g.h())?;
    let emb = HalfBoxEmbedding::new(g, &half)?;
    let d = g.dim();
    let faces = (0..d)
        .map(|k| {
            let tl = g.faces(k);
            let hl = half.faces(k);
            let mut v = Vec::with_capacity(hl.len() * d * d);
            for i in 0..hl.len() {
                let t = tl.index(emb.to_torus(hl.multi(i)));
                v.extend_from_slice(field.matrix(k, t));
            }
            v
        })
        .collect();
    let mut out = CoefficientField::from_faces(half, field.lambda(), field.seed(), faces)?;
    out.period = field.period();
    Ok(out)
}
