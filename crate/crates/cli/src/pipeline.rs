//! field -> corrector -> halfspace -> excess, per seed, with binary stage
//! outputs cached under `cache/<config hash>/`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use homlab::corrector::WholeSpace;
use homlab::field::{restrict_to_half_box, sample_field, validate_ellipticity, CoefficientField};
use homlab::halfspace::{DyadicConfig, HalfSpace};
use homlab::io::{load_field, save_field, Bundle};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{CliError, Result};
use crate::stages;
use crate::table::{num, Table};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub seed: u64,
    pub stage: String,
    pub seconds: f64,
    pub cached: bool,
}

/// Largest residuals over all seeds.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub corrector_relative: f64,
    pub flux_potential: f64,
    pub halfspace_flat: f64,
    pub halfspace_potential: f64,
    pub sample_flat: f64,
    pub sample_relative: f64,
}

impl ResidualSummary {
    fn merge(&mut self, o: &ResidualSummary) {
        self.corrector_relative = self.corrector_relative.max(o.corrector_relative);
        self.flux_potential = self.flux_potential.max(o.flux_potential);
        self.halfspace_flat = self.halfspace_flat.max(o.halfspace_flat);
        self.halfspace_potential = self.halfspace_potential.max(o.halfspace_potential);
        self.sample_flat = self.sample_flat.max(o.sample_flat);
        self.sample_relative = self.sample_relative.max(o.sample_relative);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub stage: String,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub timings: Vec<StageTiming>,
    pub residuals: ResidualSummary,
    pub complete: bool,
    pub failure: Option<Failure>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|_| CliError::MissingOutput(path.clone()))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

struct SeedResult {
    a_hom_row: Vec<String>,
    coercivity: Vec<Vec<String>>,
    residuals: ResidualSummary,
}

struct SeedRun<'a> {
    cfg: &'a ExperimentConfig,
    seed: u64,
    cache: PathBuf,
    out: PathBuf,
    timings: Vec<StageTiming>,
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

/// Writes through a temporary name so an interrupted run leaves no partial
/// cache entry.
fn save_atomically(path: &Path, write: impl FnOnce(&Path) -> homlab::Result<()>) -> Result<()> {
    let tmp = path.with_extension("tmp");
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

impl SeedRun<'_> {
    fn timed<R>(&mut self, stage: &str, cached: bool, f: impl FnOnce(&mut Self) -> Result<R>) -> std::result::Result<R, (String, CliError)> {
        let t = Instant::now();
        let out = f(self).map_err(|e| (stage.to_string(), e))?;
        self.timings.push(StageTiming { seed: self.seed, stage: stage.into(), seconds: t.elapsed().as_secs_f64(), cached });
        Ok(out)
    }

    fn run(&mut self) -> std::result::Result<SeedResult, (String, CliError)> {
        let cfg = self.cfg;
        let opts = cfg.solver_options();
        let mut residuals = ResidualSummary::default();
        create_dir(&self.cache).map_err(|e| ("setup".to_string(), e))?;
        create_dir(&self.out).map_err(|e| ("setup".to_string(), e))?;

        let field_path = self.cache.join("field.bin");
        let field: CoefficientField<f64> = self.timed("field", field_path.exists(), |s| {
            if field_path.exists() {
                return Ok(load_field(&field_path)?);
            }
            let grid = cfg.torus()?;
            let field = sample_field(&cfg.ensemble.with_seed(s.seed), &grid)?;
            let report = validate_ellipticity(&field);
            if !report.in_omega() {
                return Err(CliError::Invariant(format!("{} faces outside the ellipticity class", report.violations.len())));
            }
            save_atomically(&field_path, |p| save_field(p, &field))?;
            Ok(field)
        })?;

        let ws_path = self.cache.join("ws.bin");
        let ws: WholeSpace<f64> = self.timed("corrector", ws_path.exists(), |s| {
            let ws = if ws_path.exists() {
                WholeSpace::from_bundle(&Bundle::load(&ws_path)?)?
            } else {
                let ws = WholeSpace::solve(&field, &opts)?;
                save_atomically(&ws_path, |p| ws.to_bundle().save(p))?;
                ws
            };
            let d = cfg.grid.dim;
            let t = stages::corrector_table(&ws, &(0..d).collect::<Vec<_>>(), &cfg.radii)?;
            t.write(&s.out.join("curve.csv"))?;
            Ok(ws)
        })?;
        residuals.corrector_relative = ws.correctors.stats.iter().map(|s| s.relative_residual).fold(0.0, f64::max);
        residuals.flux_potential = ws.potential_residuals.iter().copied().fold(0.0, f64::max);
        let mut a_hom_row = vec![self.seed.to_string()];
        a_hom_row.extend(ws.a_hom.iter().map(|v| num(*v)));
        a_hom_row.push(num(residuals.flux_potential));

        let mut coercivity = Vec::new();
        if let Some(hsc) = &cfg.halfspace {
            let hs_path = self.cache.join("hs.bin");
            let dy_path = self.cache.join("dyadic.csv");
            let cached = hs_path.exists() && (hsc.mode == Mode::Direct || dy_path.exists());
            let hs: HalfSpace<f64> = self.timed("halfspace", cached, |s| {
                let hs = if cached {
                    let half = restrict_to_half_box(&field, hsc.half_width)?;
                    HalfSpace::from_bundle(&Bundle::load(&hs_path)?, half)?
                } else {
                    let hs = match hsc.mode {
                        Mode::Direct => HalfSpace::direct(&field, &ws, hsc.half_width, &opts)?,
                        Mode::Dyadic => {
                            let dy = hsc.dyadic.as_ref().expect("validated");
                            let dcfg = DyadicConfig::new(dy.r0, dy.annuli)?;
                            let (hs, rep) = HalfSpace::dyadic(&field, &ws, hsc.half_width, &dcfg, &opts)?;
                            stages::dyadic_table(&rep).write(&dy_path.with_extension("csv.tmp"))?;
                            std::fs::rename(dy_path.with_extension("csv.tmp"), &dy_path).map_err(|e| CliError::io(&dy_path, e))?;
                            hs
                        }
                    };
                    save_atomically(&hs_path, |p| hs.to_bundle().save(p))?;
                    hs
                };
                if hsc.mode == Mode::Dyadic {
                    std::fs::copy(&dy_path, s.out.join("dyadic.csv")).map_err(|e| CliError::io(&dy_path, e))?;
                }
                Ok(hs)
            })?;
            for g in &hs.diagnostics {
                residuals.halfspace_flat = residuals.halfspace_flat.max(g.flat_residual);
                residuals.halfspace_potential = residuals.halfspace_potential.max(g.potential_residual);
            }
            let curve = self.timed("halfspace_curve", false, |s| {
                let curve = stages::half_curve(&hs, &ws, &hsc.radii)?;
                stages::half_curve_table(&curve).write(&s.out.join("hs.csv"))?;
                Ok(curve)
            })?;

            if let Some(ex) = &cfg.excess {
                let seed = self.seed;
                let sample_res = self.timed("excess", false, |s| {
                    let mut t = Table { header: stages::excess_header(cfg.grid.dim), rows: Vec::new() };
                    let mut res = ResidualSummary::default();
                    for k in 0..ex.traces as u64 {
                        let (rows, sum) = stages::excess_rows(&hs, ex.radius, &ex.radii, ex.trace_modes, seed * 1000 + k, &opts)?;
                        t.rows.extend(rows);
                        res.sample_flat = res.sample_flat.max(sum.flat_residual);
                        res.sample_relative = res.sample_relative.max(sum.relative_residual);
                    }
                    t.write(&s.out.join("excess.csv"))?;
                    Ok(res)
                })?;
                residuals.merge(&sample_res);
                coercivity = self.timed("coercivity", false, |_| {
                    stages::coercivity_rows(&hs, &curve, ex.smallness_threshold, &ex.radii, &ex.magnitudes, seed)
                })?;
            }
        }
        Ok(SeedResult { a_hom_row, coercivity, residuals })
    }
}

/// Runs every stage for every seed. Outputs land in `out`; on failure the
/// files written so far stay and the manifest names the failing stage.
pub fn run_pipeline(cfg: &ExperimentConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    create_dir(out)?;
    let hash = cfg.hash();
    let text = serde_json::to_string_pretty(cfg).expect("config serializes");
    std::fs::write(out.join("config.json"), text + "\n").map_err(|e| CliError::io(out.join("config.json"), e))?;
    let cache = out.join("cache").join(&hash);

    let results: Vec<(Vec<StageTiming>, std::result::Result<SeedResult, (String, CliError)>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let mut run = SeedRun { cfg, seed, cache: seed_dir(&cache, seed), out: seed_dir(out, seed), timings: Vec::new() };
            let res = run.run();
            (run.timings, res)
        })
        .collect();

    let mut manifest = RunManifest {
        config_hash: hash,
        version: env!("CARGO_PKG_VERSION").into(),
        seeds: cfg.seeds.clone(),
        timings: Vec::new(),
        residuals: ResidualSummary::default(),
        complete: true,
        failure: None,
    };
    let mut a_hom = Table { header: stages::a_hom_header(cfg.grid.dim), rows: Vec::new() };
    let mut coercivity = Table { header: stages::coercivity_header(), rows: Vec::new() };
    let mut first_error = None;
    for (&seed, (timings, res)) in cfg.seeds.iter().zip(results) {
        manifest.timings.extend(timings);
        match res {
            Ok(r) => {
                manifest.residuals.merge(&r.residuals);
                a_hom.push(r.a_hom_row);
                coercivity.rows.extend(r.coercivity);
            }
            Err((stage, e)) => {
                log::error!("seed {seed}, stage {stage}: {e}");
                if manifest.failure.is_none() {
                    manifest.complete = false;
                    manifest.failure = Some(Failure { seed, stage, message: e.to_string(), exit_code: e.exit_code() });
                    first_error = Some(e);
                }
            }
        }
    }
    a_hom.write(&out.join("a_hom.csv"))?;
    if cfg.excess.is_some() {
        coercivity.write(&out.join("coercivity.csv"))?;
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out.join("manifest.json"), text + "\n").map_err(|e| CliError::io(out.join("manifest.json"), e))?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
