//! Consolidated JSON summary of a pipeline output directory.

use std::path::Path;

use homlab::corrector::HomogenizedMatrix;
use homlab::excess::{fit_slope, EXCESS_FLOOR};
use homlab::field::{EnsembleKind, MatrixSpec};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{CliError, Result};
use crate::pipeline::seed_dir;
use crate::table::Table;

fn na_or(v: Option<f64>) -> Value {
    match v {
        Some(x) if x.is_finite() => json!(x),
        _ => json!("N/A"),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Decay exponent `-d log y / d log r`; N/A when a value is at the floor.
fn exponent(radii: &[f64], y: &[f64]) -> Option<f64> {
    if y.iter().any(|v| !(*v > EXCESS_FLOOR)) {
        return None;
    }
    let pts: Vec<(f64, f64)> = radii.iter().zip(y).map(|(r, v)| (r.ln(), v.ln())).collect();
    fit_slope(&pts).map(|s| -s)
}

/// Seed-wise columns of a per-seed CSV, averaged row by row.
fn averaged(out: &Path, seeds: &[u64], file: &str, x: &str, cols: &[&str]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut xs: Option<Vec<f64>> = None;
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); cols.len()];
    for &s in seeds {
        let path = seed_dir(out, s).join(file);
        let t = Table::read(&path)?;
        let r = t.numeric_column(x, &path)?;
        match &xs {
            None => xs = Some(r),
            Some(prev) if *prev != r => {
                return Err(CliError::Csv { file: path, line: 1, message: format!("{x} differs between seeds") });
            }
            _ => {}
        }
        for (k, c) in cols.iter().enumerate() {
            let v = t.numeric_column(c, &path)?;
            if sums[k].is_empty() {
                sums[k] = vec![0.0; v.len()];
            }
            for (a, b) in sums[k].iter_mut().zip(&v) {
                *a += b / seeds.len() as f64;
            }
        }
    }
    Ok((xs.unwrap_or_default(), sums))
}

/// Closed-form `a_hom` for constant fields and scalar laminates.
fn closed_form(cfg: &ExperimentConfig) -> Option<Vec<f64>> {
    let d = cfg.grid.dim;
    match &cfg.ensemble.kind {
        EnsembleKind::Constant { matrix } => matrix.to_matrix::<f64>(d).ok(),
        EnsembleKind::Laminate { axis, profile, .. } => {
            let vals: Option<Vec<f64>> = profile.iter().map(|m| if let MatrixSpec::Scalar(s) = m { Some(*s) } else { None }).collect();
            let vals = vals?;
            let n = vals.len() as f64;
            let arith = vals.iter().sum::<f64>() / n;
            let harm = n / vals.iter().map(|v| 1.0 / v).sum::<f64>();
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                a[i * d + i] = if i + 1 == *axis { harm } else { arith };
            }
            Some(a)
        }
        _ => None,
    }
}

pub fn report(out: &Path) -> Result<Value> {
    let cfg_path = out.join("config.json");
    if !cfg_path.exists() {
        return Err(CliError::MissingOutput(cfg_path));
    }
    let cfg = ExperimentConfig::load(&cfg_path)?;
    let d = cfg.grid.dim;
    let seeds = &cfg.seeds;

    let path = out.join("a_hom.csv");
    let t = Table::read(&path)?;
    let mut samples = vec![Vec::new(); t.rows.len()];
    for i in 1..=d {
        for j in 1..=d {
            for (s, v) in samples.iter_mut().zip(t.numeric_column(&format!("a{i}{j}"), &path)?) {
                s.push(v);
            }
        }
    }
    let flux = t.numeric_column("flux_residual", &path)?;
    if samples.len() != seeds.len() {
        return Err(CliError::Csv { file: path, line: 1, message: format!("{} rows for {} seeds", samples.len(), seeds.len()) });
    }
    let hom = HomogenizedMatrix::from_samples(d, samples);
    let mut summary = json!({
        "config_hash": cfg.hash(),
        "seeds": seeds,
        "a_hom": {
            "mean": hom.mean,
            "stderr": hom.stderr.iter().map(|v| na_or(Some(*v))).collect::<Vec<_>>(),
            "samples": hom.count(),
            "max_flux_residual": flux.iter().copied().fold(0.0, f64::max),
        },
    });
    if let Some(a) = closed_form(&cfg) {
        let dev = a.iter().zip(&hom.mean).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        summary["closed_form"] = json!({ "a_hom": a, "max_deviation": dev });
    }

    let (radii, cols) = averaged(out, seeds, "curve.csv", "r", &["delta", "delta_gno", "partial_sum_m"])?;
    summary["delta"] = json!({
        "radii": radii,
        "mean": cols[0],
        "mean_gno": cols[1],
        "partial_sums": cols[2],
        "exponent": na_or(exponent(&radii, &cols[0])),
        "ratio_last_first": na_or(Some(cols[0][cols[0].len() - 1] / cols[0][0])),
    });

    if let Some(hs) = &cfg.halfspace {
        let (radii, cols) = averaged(out, seeds, "hs.csv", "r", &["delta_h"])?;
        summary["delta_h"] = json!({
            "radii": radii,
            "mean": cols[0],
            "exponent": na_or(exponent(&radii, &cols[0])),
            "ratio_last_first": na_or(Some(cols[0][cols[0].len() - 1] / cols[0][0])),
        });
        if hs.mode == Mode::Dyadic {
            let mut constants = Vec::new();
            for &s in seeds {
                let path = seed_dir(out, s).join("dyadic.csv");
                let t = Table::read(&path)?;
                let e = t.numeric_column("energy", &path)?;
                let b = t.numeric_column("bound_shape", &path)?;
                constants.push(e.iter().zip(&b).map(|(x, y)| x / y).fold(0.0, f64::max));
            }
            summary["dyadic"] = json!({ "empirical_constant": constants });
        }
    }

    if cfg.excess.is_some() {
        let mut alphas = Vec::new();
        let mut c_mean = Vec::new();
        for &s in seeds {
            let path = seed_dir(out, s).join("excess.csv");
            let t = Table::read(&path)?;
            let seed_col = t.column("seed", &path)?;
            let a = t.numeric_column("fitted_alpha", &path)?;
            let m = t.numeric_column("mvp_ratio", &path)?;
            let mut i = 0;
            while i < t.rows.len() {
                let key = &t.rows[i][seed_col];
                let end = (i..t.rows.len()).find(|&k| &t.rows[k][seed_col] != key).unwrap_or(t.rows.len());
                alphas.push(a[i]);
                c_mean.push(m[i..end].iter().copied().fold(0.0, f64::max));
                i = end;
            }
        }
        let finite: Vec<f64> = alphas.iter().copied().filter(|v| v.is_finite()).collect();
        let path = out.join("coercivity.csv");
        let t = Table::read(&path)?;
        let constants = t.numeric_column("constant", &path)?;
        let bound = 16f64.powi(-(d as i32 + 1));
        summary["excess"] = json!({
            "fitted_alpha": alphas.iter().map(|v| na_or(Some(*v))).collect::<Vec<_>>(),
            "fitted_alpha_mean": na_or((!finite.is_empty()).then(|| mean(&finite))),
            "c_mean": c_mean,
            "c_mean_max": c_mean.iter().copied().fold(0.0, f64::max),
            "coercivity_min": na_or(constants.iter().copied().reduce(f64::min)),
            "coercivity_bound": bound,
        });
    }

    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(out.join("summary.json"), text + "\n").map_err(|e| CliError::io(out.join("summary.json"), e))?;
    Ok(summary)
}
