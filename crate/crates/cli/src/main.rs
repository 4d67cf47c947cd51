use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use homlab::corrector::{dyadic_radii, WholeSpace};
use homlab::field::{restrict_to_half_box, sample_field, validate_ellipticity};
use homlab::halfspace::{DyadicConfig, HalfSpace};
use homlab::io::{load_field, save_field, Bundle};
use homlab::solver::SolverOptions;
use homlab_cli::config::{parse_radii, parse_seeds, ExperimentConfig};
use homlab_cli::error::{CliError, Result};
use homlab_cli::stages;
use homlab_cli::table::Table;

/// Correctors, half-space boundary layers and excess decay for random
/// divergence-form coefficient fields.
#[derive(Parser)]
#[command(name = "homlab", version)]
struct Cli {
    /// Worker threads for seed-level parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample or validate coefficient fields.
    #[command(subcommand)]
    Field(FieldCommand),
    /// Whole-space correctors, flux potentials and the delta curve.
    Corrector(CorrectorArgs),
    /// Half-space boundary-layer correctors.
    Halfspace(HalfspaceArgs),
    /// Excess decay on harmonic samples with random boundary traces.
    Excess(ExcessArgs),
    /// Run every configured stage for every seed.
    Pipeline(PipelineArgs),
    /// Summarize a pipeline output directory as JSON.
    Report(ReportArgs),
}

#[derive(Subcommand)]
enum FieldCommand {
    /// Sample one realization on the configured torus.
    Sample {
        /// Experiment config (ensemble and grid are used).
        #[arg(long, alias = "spec")]
        config: PathBuf,
        /// Defaults to the first configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the ellipticity class of a stored field; exit 4 if violated.
    Check {
        #[arg(long)]
        field: PathBuf,
    },
}

#[derive(Args)]
struct SolveFlags {
    /// Relative residual tolerance of the iterative solves.
    #[arg(long)]
    tol: Option<f64>,
}

impl SolveFlags {
    fn options(&self) -> Result<SolverOptions> {
        match self.tol {
            None => Ok(SolverOptions::default()),
            Some(t) if t > 0.0 && t < 1.0 => Ok(SolverOptions::with_tol(t)),
            Some(t) => Err(CliError::Config(format!("tolerance {t} not in (0, 1)"))),
        }
    }
}

#[derive(Args)]
struct CorrectorArgs {
    #[arg(long)]
    field: PathBuf,
    /// Coordinate directions entering delta, e.g. `e1,e2` (default: all).
    #[arg(long)]
    directions: Option<String>,
    /// `a:b` powers of two, or a list (default: 8h up to half the box).
    #[arg(long)]
    radii: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also store the solved fields as a bundle.
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveFlags,
}

#[derive(Args)]
struct HalfspaceArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long, value_enum, default_value = "direct")]
    mode: ModeArg,
    /// Half-width of the half-box.
    #[arg(long = "L")]
    l: f64,
    /// `hs.bin[,hs.csv]`.
    #[arg(long)]
    out: String,
    #[arg(long)]
    radii: Option<String>,
    #[arg(long, default_value_t = 8.0)]
    r0: f64,
    #[arg(long, default_value_t = 4)]
    annuli: i32,
    /// Reuse whole-space fields from `homlab corrector --bundle`.
    #[arg(long)]
    ws: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveFlags,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    Direct,
    Dyadic,
}

#[derive(Args)]
struct ExcessArgs {
    #[arg(long)]
    field: PathBuf,
    #[arg(long)]
    hs: PathBuf,
    /// Sample radius.
    #[arg(long = "R")]
    r: f64,
    /// Trace seeds: `N`, `a..b` or a list.
    #[arg(long, default_value = "1")]
    seeds: String,
    #[arg(long)]
    radii: Option<String>,
    #[arg(long, default_value_t = 8)]
    modes: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solve: SolveFlags,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the configured seeds: `N`, `a..b` or a list.
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_directions(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .strip_prefix('e')
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|n| *n >= 1)
                .map(|n| n - 1)
                .ok_or_else(|| CliError::Config(format!("bad direction {t:?}")))
        })
        .collect()
}

fn field_sample(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let cfg = ExperimentConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let field = sample_field::<f64>(&cfg.ensemble.with_seed(seed), &cfg.torus()?)?;
    save_field(out, &field)?;
    Ok(())
}

fn field_check(path: &Path) -> Result<()> {
    let field = load_field::<f64>(path)?;
    let rep = validate_ellipticity(&field);
    println!(
        "{}",
        serde_json::json!({
            "lambda": rep.lambda,
            "min_rayleigh": rep.min_rayleigh,
            "max_gain": rep.max_gain,
            "violations": rep.violations.len(),
        })
    );
    if rep.in_omega() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("{} faces outside the ellipticity class", rep.violations.len())))
    }
}

fn corrector(a: &CorrectorArgs) -> Result<()> {
    let field = load_field::<f64>(&a.field)?;
    let grid = *field.grid();
    let ws = WholeSpace::solve(&field, &a.solve.options()?)?;
    let dirs = match &a.directions {
        Some(s) => parse_directions(s)?,
        None => (0..grid.dim()).collect(),
    };
    let radii = match &a.radii {
        Some(s) => parse_radii(s)?,
        None => dyadic_radii(grid.h(), grid.side() / 2.0),
    };
    stages::corrector_table(&ws, &dirs, &radii)?.write(&a.out)?;
    if let Some(b) = &a.bundle {
        ws.to_bundle().save(b)?;
    }
    println!("{}", serde_json::json!({ "a_hom": ws.a_hom, "flux_residual": ws.potential_residuals }));
    Ok(())
}

fn halfspace(a: &HalfspaceArgs) -> Result<()> {
    let field = load_field::<f64>(&a.field)?;
    let opts = a.solve.options()?;
    let ws = match &a.ws {
        Some(p) => WholeSpace::from_bundle(&Bundle::load(p)?)?,
        None => WholeSpace::solve(&field, &opts)?,
    };
    let (hs, report) = match a.mode {
        ModeArg::Direct => (HalfSpace::direct(&field, &ws, a.l, &opts)?, None),
        ModeArg::Dyadic => {
            let (hs, rep) = HalfSpace::dyadic(&field, &ws, a.l, &DyadicConfig::new(a.r0, a.annuli)?, &opts)?;
            (hs, Some(rep))
        }
    };
    let mut outs = a.out.split(',');
    let bundle = outs.next().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config("--out needs a bundle path".into()))?;
    hs.to_bundle().save(Path::new(bundle))?;
    if let Some(csv) = outs.next() {
        let csv = PathBuf::from(csv);
        let radii = match &a.radii {
            Some(s) => parse_radii(s)?,
            None => dyadic_radii(field.grid().h(), a.l / 2.0),
        };
        stages::half_curve_table(&stages::half_curve(&hs, &ws, &radii)?).write(&csv)?;
        if let Some(rep) = &report {
            stages::dyadic_table(rep).write(&csv.with_extension("dyadic.csv"))?;
        }
    }
    let diag: Vec<_> = hs.diagnostics.iter().map(|g| serde_json::json!({
        "flat_residual": g.flat_residual,
        "interior_residual": g.interior_residual,
        "potential_residual": g.potential_residual,
    })).collect();
    println!("{}", serde_json::json!({ "basis": hs.basis.b, "diagnostics": diag }));
    Ok(())
}

fn excess(a: &ExcessArgs) -> Result<()> {
    let field = load_field::<f64>(&a.field)?;
    let bundle = Bundle::load(&a.hs)?;
    let half = restrict_to_half_box(&field, bundle.grid.half_width())?;
    let hs = HalfSpace::from_bundle(&bundle, half)?;
    let opts = a.solve.options()?;
    let radii = match &a.radii {
        Some(s) => parse_radii(s)?,
        None => dyadic_radii(field.grid().h(), a.r),
    };
    let mut t = Table { header: stages::excess_header(hs.dim()), rows: Vec::new() };
    for seed in parse_seeds(&a.seeds)? {
        let (rows, _) = stages::excess_rows(&hs, a.r, &radii, a.modes, seed, &opts)?;
        t.rows.extend(rows);
    }
    t.write(&a.out)
}

fn pipeline(a: &PipelineArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    if let Some(s) = &a.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(t) = a.tol {
        cfg.solver.tol = t;
    }
    let manifest = homlab_cli::run_pipeline(&cfg, &a.out_dir)?;
    println!("{}", serde_json::to_string_pretty(&manifest.residuals).expect("serializes"));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Field(FieldCommand::Sample { config, seed, out }) => field_sample(&config, seed, &out),
        Command::Field(FieldCommand::Check { field }) => field_check(&field),
        Command::Corrector(a) => corrector(&a),
        Command::Halfspace(a) => halfspace(&a),
        Command::Excess(a) => excess(&a),
        Command::Pipeline(a) => pipeline(&a),
        Command::Report(a) => {
            let summary = homlab_cli::report(&a.out_dir)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializes"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
