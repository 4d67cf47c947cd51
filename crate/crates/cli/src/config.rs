//! Experiment configuration (JSON) and its content hash.

use std::collections::BTreeSet;
use std::path::Path;

use homlab::field::EnsembleSpec;
use homlab::solver::SolverOptions;
use homlab::Grid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub h: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    SolverOptions::default().tol
}

fn default_max_iter() -> usize {
    SolverOptions::default().max_iter
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: default_tol(), max_iter: default_max_iter() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Direct,
    Dyadic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DyadicSection {
    pub r0: f64,
    pub annuli: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalfSpaceSection {
    pub mode: Mode,
    pub half_width: f64,
    /// Radii of the `delta^H` curve, at most `half_width / 2`.
    pub radii: Vec<f64>,
    #[serde(default)]
    pub dyadic: Option<DyadicSection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcessSection {
    /// Radius `R` of the harmonic samples.
    pub radius: f64,
    pub radii: Vec<f64>,
    #[serde(default = "default_modes")]
    pub trace_modes: usize,
    /// Random boundary traces per field realization.
    #[serde(default = "one_usize")]
    pub traces: usize,
    #[serde(default = "default_magnitudes")]
    pub magnitudes: Vec<f64>,
    /// `delta^H` level defining the smallness radius for coercivity.
    #[serde(default = "default_threshold")]
    pub smallness_threshold: f64,
}

fn default_modes() -> usize {
    8
}

fn one_usize() -> usize {
    1
}

fn default_magnitudes() -> Vec<f64> {
    vec![1.0, 4.0, 16.0, 64.0]
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// The per-realization seed is taken from `seeds`; any seed given here
    /// is ignored.
    pub ensemble: EnsembleSpec,
    pub grid: GridConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Radii of the whole-space `delta` curve (powers of two).
    pub radii: Vec<f64>,
    #[serde(default)]
    pub halfspace: Option<HalfSpaceSection>,
    #[serde(default)]
    pub excess: Option<ExcessSection>,
}

fn check_dyadic(name: &str, radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(CliError::Config(format!("{name}: no radii")));
    }
    if radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(CliError::Config(format!("{name}: radii must be positive")));
    }
    if radii.windows(2).any(|w| w[1] != 2.0 * w[0]) {
        return Err(CliError::Config(format!("{name}: radii {radii:?} are not dyadic")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.torus()?;
        if self.seeds.is_empty() {
            return Err(CliError::Config("no seeds".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(CliError::Config(format!("seeds {:?} are not distinct", self.seeds)));
        }
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) || self.solver.max_iter == 0 {
            return Err(CliError::Config("solver tolerance must lie in (0, 1) with max_iter > 0".into()));
        }
        check_dyadic("radii", &self.radii)?;
        if self.radii.iter().any(|r| r.log2().fract() != 0.0) {
            return Err(CliError::Config("whole-space radii must be powers of two".into()));
        }
        let side = self.grid.n as f64 * self.grid.h;
        if let Some(hs) = &self.halfspace {
            check_dyadic("halfspace.radii", &hs.radii)?;
            if 2.0 * hs.half_width > side {
                return Err(CliError::Config(format!("half_width {} does not fit the torus of side {side}", hs.half_width)));
            }
            if hs.radii.iter().any(|r| *r > hs.half_width / 2.0) {
                return Err(CliError::Config("halfspace radii must not exceed half_width / 2".into()));
            }
            if hs.mode == Mode::Dyadic && hs.dyadic.is_none() {
                return Err(CliError::Config("dyadic mode needs a `dyadic` section".into()));
            }
        }
        if let Some(ex) = &self.excess {
            let Some(hs) = &self.halfspace else {
                return Err(CliError::Config("the excess stage needs a halfspace section".into()));
            };
            check_dyadic("excess.radii", &ex.radii)?;
            if ex.radius > hs.half_width || ex.radii.iter().any(|r| *r > ex.radius) {
                return Err(CliError::Config("excess radii must satisfy r <= radius <= half_width".into()));
            }
            if ex.magnitudes.is_empty() || ex.traces == 0 {
                return Err(CliError::Config("excess needs magnitudes and at least one trace".into()));
            }
        }
        Ok(())
    }

    pub fn torus(&self) -> Result<Grid> {
        Grid::torus(self.grid.dim, self.grid.n, self.grid.h).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.solver.tol, max_iter: self.solver.max_iter }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `N` (seeds `0..N`), `a..b`, or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Config(format!("cannot parse seeds {s:?}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        return Ok((a..b).collect());
    }
    if s.contains(',') {
        return s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect();
    }
    let n: u64 = s.trim().parse().map_err(|_| bad())?;
    Ok((0..n).collect())
}

/// `a:b` (powers of two from `a` to `b`) or a comma-separated list.
pub fn parse_radii(s: &str) -> Result<Vec<f64>> {
    let bad = || CliError::Config(format!("cannot parse radii {s:?}"));
    if let Some((a, b)) = s.split_once(':') {
        let (mut r, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if !(r > 0.0) {
            return Err(bad());
        }
        let mut out = Vec::new();
        while r <= b {
            out.push(r);
            r *= 2.0;
        }
        return Ok(out);
    }
    s.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}
