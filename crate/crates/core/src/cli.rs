//! Command-line front end. Every subcommand is a thin shell over library calls.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 numerical failure.
//! Worker threads follow `RAYON_NUM_THREADS`.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::energy::{eval_limit_energy, eval_limit_energy_general, Energy, EnergyBreakdown};
use crate::error::{Error, Result};
use crate::field::{DirectorField, Layout, SmoothRandomMap};
use crate::harness::{self, Problem, SolveSummary, LIMIT_INIT_FREQUENCY, LIMIT_INIT_MODES, PRESET_NAMES};
use crate::minimize::minimize;
use crate::perturbation::BoundTensor;
use crate::report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "chiral-film", version, about = "Chiral Dirichlet energies on curved thin films")]
struct Cli {
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    /// Print a JSON summary instead of text.
    #[arg(long, global = true, conflicts_with = "quiet")]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the configured one.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the thickness list (comma separated, strictly decreasing).
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormArg {
    Limit,
    Thin,
    General,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the frame grid and print the thickness budget.
    DescribeSurface(RunArgs),
    /// Evaluate one energy form on a field file.
    EvalEnergy {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum)]
        form: FormArg,
        /// Field CSV (u,v[,s],ux,uy,uz).
        #[arg(long)]
        field: PathBuf,
    },
    /// Run a single minimization.
    Minimize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "limit")]
        form: FormArg,
        /// Initial field CSV; a smooth random field when absent.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Run the full thickness sweep.
    Sweep(RunArgs),
    /// Write a ready-made run configuration.
    Preset {
        #[arg(value_parser = PRESET_NAMES)]
        name: String,
        /// Destination file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the vanishing anisotropy identities.
    CheckIdentities(RunArgs),
    /// Compare the two planar interfacial energy forms.
    CrosscheckPlanar {
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Result of one subcommand: a JSON summary, its text rendering and a status.
struct Outcome {
    summary: Value,
    text: String,
    code: i32,
}

impl Outcome {
    fn ok(summary: Value, text: String) -> Self {
        Outcome { summary, text, code: EXIT_OK }
    }
}

/// Parses `argv` (program name first) and runs the subcommand on the process streams.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    dispatch_to(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn dispatch_to<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let stream: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(stream, "{}", e.render());
            return code;
        }
    };
    match run(&cli.command) {
        Ok(o) => {
            let printed = if cli.json {
                writeln!(out, "{}", serde_json::to_string_pretty(&o.summary).expect("summary serializes"))
            } else if cli.quiet {
                Ok(())
            } else {
                write!(out, "{}", o.text)
            };
            if printed.is_err() {
                return EXIT_INVALID;
            }
            o.code
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_validation() {
                EXIT_INVALID
            } else {
                EXIT_NUMERICAL
            }
        }
    }
}

fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::DescribeSurface(args) => describe_surface(args),
        Command::EvalEnergy { run, form, field } => eval_energy(run, *form, field),
        Command::Minimize { run, form, field } => minimize_cmd(run, *form, field.as_deref()),
        Command::Sweep(args) => sweep(args),
        Command::Preset { name, out } => preset(name, out.as_deref()),
        Command::CheckIdentities(args) => check_identities(args),
        Command::CrosscheckPlanar { resolution, kappa, samples, seed } => crosscheck(*resolution, *kappa, *samples, *seed),
    }
}

/// Loads the configuration, applies overrides and writes the run header.
fn load_run(args: &RunArgs) -> Result<(RunConfig, PathBuf)> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(eps) = &args.eps {
        cfg.sweep.eps = Some(eps.clone());
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    report::write_run_header(&cfg, &dir)?;
    Ok((cfg, dir))
}

fn first_eps(cfg: &RunConfig) -> f64 {
    cfg.eps_list()[0]
}

fn breakdown_text(e: &EnergyBreakdown<f64>) -> String {
    format!("tangential {:.12e}  normal/anisotropy {:.12e}  total {:.12e}", e.tangential, e.normal_or_anisotropy, e.total)
}

fn describe_surface(args: &RunArgs) -> Result<Outcome> {
    let (cfg, dir) = load_run(args)?;
    let grid = cfg.surface.build()?;
    let frames = dir.join("frames.csv");
    report::write_text(&frames, &report::frames_csv(&grid))?;
    let b = grid.budget;
    let summary = json!({
        "surface": cfg.surface,
        "nodes": grid.n_nodes(),
        "area": grid.total_area(),
        "kappa_max": b.kappa_max,
        "eps_max": b.eps_max,
        "c_n": b.c_n,
        "frames": frames,
    });
    let text = format!(
        "nodes {}  area {:.12e}\nkappa_max {:.12e}  eps_max {:.12e}  c_N {}\nframes written to {}\n",
        grid.n_nodes(),
        grid.total_area(),
        b.kappa_max,
        b.eps_max,
        b.c_n,
        frames.display()
    );
    Ok(Outcome::ok(summary, text))
}

/// The energy selected by `form`; `thin` uses the first configured thickness.
fn energy_for<'a>(problem: &'a Problem, identity: &'a BoundTensor<f64>, form: FormArg, eps: f64) -> Energy<'a, f64> {
    match form {
        FormArg::Limit => Energy::limit(&problem.grid, &problem.target, &problem.perturbation),
        FormArg::General => Energy::limit_general(
            &problem.grid,
            &problem.target,
            &problem.perturbation,
            problem.tensor.as_ref().unwrap_or(identity),
        ),
        FormArg::Thin => problem.thin_energy(eps),
    }
}

fn check_layout(field: &DirectorField<f64>, form: FormArg) -> Result<()> {
    let thin = matches!(field.layout, Layout::Thin { .. });
    if thin != matches!(form, FormArg::Thin) {
        return Err(Error::GridMismatch("field layout does not match the energy form".into()));
    }
    Ok(())
}

fn eval_energy(args: &RunArgs, form: FormArg, field: &Path) -> Result<Outcome> {
    let (cfg, dir) = load_run(args)?;
    let problem = Problem::from_config(&cfg)?;
    let u = report::read_field_csv(field, &problem.grid)?;
    check_layout(&u, form)?;
    let e = match form {
        FormArg::Limit => eval_limit_energy(&u, &problem.grid, &problem.target, &problem.perturbation)?,
        FormArg::General => {
            let identity = BoundTensor::identity(problem.grid.n_nodes());
            let tensor = problem.tensor.as_ref().unwrap_or(&identity);
            eval_limit_energy_general(&u, &problem.grid, &problem.target, &problem.perturbation, tensor)?
        }
        FormArg::Thin => problem.thin_energy(first_eps(&cfg)).evaluate(&u)?,
    };
    let summary = serde_json::to_value(e).expect("breakdown serializes");
    report::write_text(&dir.join("energy.json"), &format!("{}\n", serde_json::to_string_pretty(&summary).expect("json")))?;
    Ok(Outcome::ok(summary, format!("{}\n", breakdown_text(&e))))
}

fn minimize_cmd(args: &RunArgs, form: FormArg, field: Option<&Path>) -> Result<Outcome> {
    let (cfg, dir) = load_run(args)?;
    let problem = Problem::from_config(&cfg)?;
    let eps = first_eps(&cfg);
    let init = match field {
        Some(path) => report::read_field_csv(path, &problem.grid)?,
        None => {
            let map = SmoothRandomMap::new(cfg.seed, LIMIT_INIT_MODES, LIMIT_INIT_FREQUENCY);
            match form {
                FormArg::Thin => map.thin_field(&problem.grid, &problem.target, eps, cfg.sweep.n_s)?,
                _ => map.surface_field(&problem.grid, &problem.target)?,
            }
        }
    };
    check_layout(&init, form)?;
    let identity = BoundTensor::identity(problem.grid.n_nodes());
    let energy = energy_for(&problem, &identity, form, eps);
    let (u, rep) = minimize(&energy, &init, &cfg.minimizer)?;
    let fields = dir.join(report::FIELDS_DIR).join("minimizer.csv");
    report::write_text(&fields, &report::field_csv(&u, &problem.grid)?)?;
    report::write_text(&dir.join("trace.csv"), &report::trace_csv(&rep))?;
    let summary = serde_json::to_value(SolveSummary::from(&rep)).expect("summary serializes");
    report::write_text(&dir.join("minimize.json"), &format!("{}\n", serde_json::to_string_pretty(&summary).expect("json")))?;
    let text = format!(
        "{}\niterations {}  gradient {:.3e}  {:?}\nminimizer written to {}\n",
        breakdown_text(&rep.energy),
        rep.iterations,
        rep.gradient_norm,
        rep.termination,
        fields.display()
    );
    Ok(Outcome::ok(summary, text))
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn sweep(args: &RunArgs) -> Result<Outcome> {
    let (cfg, dir) = load_run(args)?;
    let outcome = harness::run_sweep(&cfg)?;
    let grid = cfg.surface.build()?;
    report::write_sweep(&outcome, &cfg, &grid, &dir)?;
    let r = &outcome.report;
    let mut text = format!("limit  E = {:.12e}\n", r.limit.energy.total);
    for e in &r.entries {
        match (&e.error, e.minimum.as_ref(), e.gap) {
            (None, Some(m), Some(gap)) => {
                text += &format!("eps {:<8} E = {:.12e}  gap {:.6e}\n", e.eps, m.energy.total, gap);
            }
            _ => text += &format!("eps {:<8} failed: {}\n", e.eps, e.error.as_deref().unwrap_or("unknown")),
        }
    }
    text += &format!("sweep checks {}  (report in {})\n", pass(r.checks.passed), dir.display());
    let code = if r.checks.all_entries_ok { EXIT_OK } else { EXIT_NUMERICAL };
    Ok(Outcome { summary: serde_json::to_value(r).expect("report serializes"), text, code })
}

fn preset(name: &str, out: Option<&Path>) -> Result<Outcome> {
    let cfg = harness::preset(name).ok_or_else(|| Error::Config { path: "preset".into(), message: format!("unknown preset {name}") })?;
    let echo = cfg.echo();
    let text = match out {
        Some(path) => {
            report::write_text(path, &echo)?;
            format!("wrote {}\n", path.display())
        }
        None => echo,
    };
    Ok(Outcome::ok(serde_json::to_value(&cfg).expect("config serializes"), text))
}

fn check_identities(args: &RunArgs) -> Result<Outcome> {
    let (cfg, dir) = load_run(args)?;
    let problem = Problem::from_config(&cfg)?;
    let check = harness::check_vanishing_identities(
        &problem.grid,
        &problem.target,
        &problem.perturbation,
        cfg.sweep.identity_samples,
        cfg.seed,
    )?;
    let summary = serde_json::to_value(&check).expect("check serializes");
    report::write_text(&dir.join("identities.json"), &format!("{}\n", serde_json::to_string_pretty(&summary).expect("json")))?;
    let text = format!(
        "{} samples  max residual {:.3e}  relative {:.3e}  vanishing expected {}  {}\n",
        check.samples,
        check.max_residual,
        check.relative_residual,
        check.vanishing_expected,
        pass(check.passed)
    );
    Ok(Outcome::ok(summary, text))
}

fn crosscheck(resolution: usize, kappa: f64, samples: usize, seed: u64) -> Result<Outcome> {
    if resolution < 3 || samples == 0 || !kappa.is_finite() {
        return Err(Error::InvalidOptions("need resolution >= 3, samples >= 1 and finite kappa".into()));
    }
    let worst = harness::planar_interfacial_crosscheck(resolution, kappa, samples, seed)?;
    let summary = json!({ "resolution": resolution, "kappa": kappa, "samples": samples, "max_relative_discrepancy": worst });
    Ok(Outcome::ok(summary, format!("max relative discrepancy {worst:.3e} over {samples} fields\n")))
}
