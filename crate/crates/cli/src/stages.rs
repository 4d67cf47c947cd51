//! Stage computations shared by the subcommands and the pipeline. Each
//! returns the CSV tables it produces.

use homlab::corrector::{sublinearity_curve, WholeSpace};
use homlab::excess::{
    band_limited_trace, coercivity_check, excess_decay_experiment, harmonic_sample, mean_value_check, smallness_radius,
};
use homlab::halfspace::{half_sublinearity_curve, DyadicReport, HalfSpace, HalfSublinearityCurve};
use homlab::solver::SolverOptions;

use crate::error::{CliError, Result};
use crate::table::{num, opt, Table};

pub fn corrector_table(ws: &WholeSpace<f64>, directions: &[usize], radii: &[f64]) -> Result<Table> {
    let d = ws.correctors.grid.dim();
    if let Some(bad) = directions.iter().find(|i| **i >= d) {
        return Err(CliError::Config(format!("direction e{} does not exist in dimension {d}", bad + 1)));
    }
    let phi: Vec<_> = directions.iter().map(|&i| ws.correctors.phi[i].clone()).collect();
    let sigma: Vec<_> = directions.iter().map(|&i| ws.sigma[i].clone()).collect();
    let curve = sublinearity_curve(&phi, &sigma, radii)?;
    let mut t = Table::new(&["r", "delta", "delta_gno", "partial_sum_m"]);
    for i in 0..radii.len() {
        t.push(vec![num(radii[i]), num(curve.delta[i]), num(curve.delta_gno[i]), num(curve.partial_sums[i])]);
    }
    Ok(t)
}

pub fn a_hom_header(d: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string()];
    for i in 1..=d {
        for j in 1..=d {
            h.push(format!("a{i}{j}"));
        }
    }
    h.push("flux_residual".into());
    h
}

pub fn half_curve_table(curve: &HalfSublinearityCurve) -> Table {
    let mut t = Table::new(&["r", "delta_h"]);
    for (r, v) in curve.radii.iter().zip(&curve.delta_h) {
        t.push(vec![num(*r), num(*v)]);
    }
    t
}

/// `energy` is the largest over the tangential directions.
pub fn dyadic_table(rep: &DyadicReport) -> Table {
    let mut t = Table::new(&["n", "l_n", "energy", "bound_shape"]);
    for row in &rep.rows {
        let e = row.energy.iter().copied().fold(0.0, f64::max);
        t.push(vec![row.n.to_string(), num(row.l_n), num(e), num(row.bound_shape)]);
    }
    t
}

pub fn excess_header(d: usize) -> Vec<String> {
    let mut h: Vec<String> = ["seed", "r", "excess"].iter().map(|s| s.to_string()).collect();
    for i in 1..d {
        h.push(format!("b_coeff_{i}"));
    }
    h.extend(["ratio", "fitted_alpha", "mvp_ratio"].iter().map(|s| s.to_string()));
    h
}

/// Largest solver residual seen while building a sample.
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleSummary {
    pub flat_residual: f64,
    pub relative_residual: f64,
    pub fitted_alpha: Option<f64>,
    pub c_mean: f64,
}

/// One harmonic sample on `B_R^+` with a band-limited trace, its excess
/// table rows and mean-value ratios. `ratio` is `Exc(r)/Exc(2r)` (NA on the
/// last radius).
pub fn excess_rows(
    hs: &HalfSpace<f64>,
    radius: f64,
    radii: &[f64],
    modes: usize,
    trace_seed: u64,
    opts: &SolverOptions,
) -> Result<(Vec<Vec<String>>, SampleSummary)> {
    let trace = band_limited_trace(&hs.grid, radius, modes, trace_seed);
    let sample = harmonic_sample(&hs.field, radius, trace, opts)?;
    let rep = excess_decay_experiment(&sample, hs, radii)?;
    let mv = mean_value_check(&sample, radii)?;
    let mut rows = Vec::with_capacity(radii.len());
    for (i, r) in radii.iter().enumerate() {
        let e = &rep.excess[i];
        let mut row = vec![trace_seed.to_string(), num(*r), num(e.value)];
        row.extend(e.coeffs.iter().map(|c| num(*c)));
        row.push(rep.ratios.get(i).map_or_else(|| "NA".into(), |v| num(*v)));
        row.push(opt(rep.fitted_alpha));
        row.push(num(mv.ratios[i]));
        rows.push(row);
    }
    let summary = SampleSummary {
        flat_residual: sample.flat_residual,
        relative_residual: sample.stats.relative_residual,
        fitted_alpha: rep.fitted_alpha,
        c_mean: mv.c_mean,
    };
    Ok((rows, summary))
}

pub fn coercivity_header() -> Vec<String> {
    ["seed", "r", "t", "value", "bound", "constant", "above_smallness"].iter().map(|s| s.to_string()).collect()
}

/// Coercivity rows at every radius of `radii`, flagged by whether the radius
/// lies above the measured smallness radius of `curve`.
pub fn coercivity_rows(
    hs: &HalfSpace<f64>,
    curve: &HalfSublinearityCurve,
    threshold: f64,
    radii: &[f64],
    magnitudes: &[f64],
    seed: u64,
) -> Result<Vec<Vec<String>>> {
    let r_star = smallness_radius(curve, threshold);
    let mut rows = Vec::new();
    for &r in radii {
        let above = r_star.is_some_and(|s| r >= s);
        for row in coercivity_check(hs, r, magnitudes)? {
            rows.push(vec![
                seed.to_string(),
                num(r),
                num(row.t),
                num(row.value),
                num(row.bound),
                num(row.constant),
                above.to_string(),
            ]);
        }
    }
    Ok(rows)
}

pub fn half_curve(hs: &HalfSpace<f64>, ws: &WholeSpace<f64>, radii: &[f64]) -> Result<HalfSublinearityCurve> {
    Ok(half_sublinearity_curve(hs, ws, radii)?)
}
