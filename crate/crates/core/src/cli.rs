//! Command-line front end.
//!
//! Every subcommand reads the same configuration file; results are printed
//! as `key = value` lines on stdout and fields are written to the output
//! directory. Failures print one `error kind=... code=... message=...`
//! line on stderr and exit with the error's code.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{read_config, ProblemSpec, SourceSpec};
use crate::error::{Error, Result};
use crate::export::{export_all, format_sig9, read_field_csv};
use crate::field::ScalarField;
use crate::optimize::{gradient_check, optimize_with_observer, volume};
use crate::radial::{symmetrization_check, RadialProfile, SymmetrizationSetup};
use crate::runlog::RunLog;
use crate::state::StateConfig;

/// Name of the environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "WCSHAPE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "wcshape", version, about = "Worst-case shape optimization on a structured P1 grid")]
pub struct Cli {
    /// Configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, overriding `[output] dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Perturbation size, overriding `[problem] delta`.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub delta: Option<f64>,
    /// Suppress per-iteration progress.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the worst-case state and write it out.
    Solve {
        /// Potential CSV; zero potential when omitted.
        #[arg(long)]
        potential: Option<PathBuf>,
    },
    /// Run the optimizer and write the optimal potential, state and run log.
    Optimize,
    /// Print every functional for a given potential.
    Evaluate {
        #[arg(long)]
        potential: Option<PathBuf>,
    },
    /// Compare the envelope gradient with finite differences.
    CheckGrad {
        #[arg(long, default_value_t = 10)]
        nodes: usize,
        #[arg(long)]
        potential: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-3)]
        threshold: f64,
    },
    /// Compare the ball with other shapes of the same measure.
    Radial {
        /// Cells per axis of the 2D box.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        nr: usize,
        /// Shape measure; `[optimize] m` when omitted.
        #[arg(long)]
        measure: Option<f64>,
        /// Inset of the sampled shapes in mesh widths.
        #[arg(long, default_value_t = 0.5)]
        inset: f64,
    },
    /// Print the gamma distance between two potentials.
    GammaDist { first: PathBuf, second: PathBuf },
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match run(&cli, out) {
        Ok(()) => 0,
        // Reader went away (e.g. piped into `head`).
        Err(Error::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(
                err,
                "error kind={} code={} message={:?}",
                e.kind(),
                e.exit_code(),
                e.to_string()
            );
            e.exit_code()
        }
    }
}

pub fn load_spec(cli: &Cli) -> Result<ProblemSpec> {
    let mut spec = match &cli.config {
        Some(path) => read_config(path)?,
        None => crate::config::parse_config("")?,
    };
    if let Some(dir) = &cli.out {
        spec.output_dir = dir.clone();
    }
    if let Some(delta) = cli.delta {
        spec.delta = delta;
        spec.validate()?;
    }
    Ok(spec)
}

fn line(out: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(out, "{key} = {value}").map_err(|e| Error::io("<stdout>", e))
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn potential_or_zero(mesh: &crate::grid::StructuredMesh, path: Option<&Path>) -> Result<ScalarField> {
    match path {
        Some(p) => read_field_csv(mesh, p),
        None => Ok(ScalarField::zeros(mesh.node_count())),
    }
}

fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(1)
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let spec = load_spec(cli)?;
    match &cli.command {
        Command::Solve { potential } => solve(&spec, potential.as_deref(), out),
        Command::Optimize => run_optimize(&spec, cli.quiet, out),
        Command::Evaluate { potential } => evaluate(&spec, potential.as_deref(), out),
        Command::CheckGrad {
            nodes,
            potential,
            threshold,
        } => check_grad(&spec, *nodes, potential.as_deref(), *threshold, out),
        Command::Radial { n, nr, measure, inset } => radial(&spec, *n, *nr, *measure, *inset, out),
        Command::GammaDist { first, second } => gamma(&spec, first, second, out),
    }
}

fn solve(spec: &ProblemSpec, potential: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let problem = spec.design_problem()?;
    let space = &problem.space;
    let v = potential_or_zero(space.mesh(), potential)?;
    let state = problem.solve_state(&v)?;
    let value = space.energy_breakdown(&v, &problem.source, &state.u, spec.delta, spec.p);

    ensure_dir(&spec.output_dir)?;
    export_all(space.mesh(), &state.u, &spec.output_dir, "state")?;
    let report = format!(
        "converged = {}\nfixed_point_iterations = {}\nfinal_change = {:?}\nenergy = {:?}\nquadratic = {:?}\npotential = {:?}\nlinear = {:?}\nnorm_term = {:?}\nmax_u = {:?}\n",
        state.converged,
        state.iterations,
        state.change,
        value.value,
        value.quadratic,
        value.potential,
        value.linear,
        value.norm,
        state.u.max()
    );
    let path = spec.output_dir.join("state_report.txt");
    std::fs::write(&path, &report).map_err(|e| Error::io(&path, e))?;
    out.write_all(report.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
    state.into_converged().map(|_| ())
}

fn run_optimize(spec: &ProblemSpec, quiet: bool, out: &mut dyn Write) -> Result<()> {
    let problem = spec.design_problem()?;
    ensure_dir(&spec.output_dir)?;
    let mut log = RunLog::new(spec);
    let started = Instant::now();
    let mut progress_err = None;
    let result = optimize_with_observer(&problem, &spec.optimization, |row| {
        log.push(*row);
        if !quiet && progress_err.is_none() {
            if let Err(e) = writeln!(
                out,
                "iter {:4}  objective {}  volume {}  kkt {}  state_iters {}",
                row.iteration,
                format_sig9(row.objective),
                format_sig9(row.volume),
                format_sig9(row.kkt),
                row.state_iterations
            ) {
                progress_err = Some(e);
            }
        }
    })?;
    if let Some(e) = progress_err {
        return Err(Error::io("<stdout>", e));
    }
    log.finish(&result, spec, started.elapsed().as_secs_f64());
    let mesh = problem.space.mesh();
    export_all(mesh, &result.potential, &spec.output_dir, "potential")?;
    export_all(mesh, &result.state, &spec.output_dir, "state")?;
    log.write(&spec.output_dir.join("runlog.txt"))?;

    let summary = log.summary.as_ref().unwrap();
    line(out, "objective", num(summary.objective))?;
    line(out, "volume", num(summary.volume))?;
    line(out, "constraint", num(summary.constraint))?;
    line(out, "iterations", summary.iterations)?;
    line(out, "converged", summary.converged)?;
    line(out, "termination", &summary.termination)?;
    line(out, "objective_reading", &summary.objective_reading)
}

fn evaluate(spec: &ProblemSpec, potential: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    let problem = spec.design_problem()?;
    let space = &problem.space;
    let v = potential_or_zero(space.mesh(), potential)?;
    let f = &problem.source;
    let energy = space.dirichlet_energy(&v, f)?;
    let (wc, state) = space.worstcase_energy_with_state(&v, f, spec.delta, spec.p, &spec.state)?;
    let objective = space.objective_at(f, &state.u, spec.delta, spec.p);
    line(out, "energy", num(energy))?;
    line(out, "worstcase_energy", num(wc.value))?;
    line(out, "quadratic", num(wc.quadratic))?;
    line(out, "potential_term", num(wc.potential))?;
    line(out, "linear", num(wc.linear))?;
    line(out, "norm_term", num(wc.norm))?;
    line(out, "objective", num(objective))?;
    line(out, "volume", num(volume(space, &v, spec.optimization.alpha)))?;
    line(out, "state_iterations", state.iterations)
}

fn check_grad(
    spec: &ProblemSpec,
    nodes: usize,
    potential: Option<&Path>,
    threshold: f64,
    out: &mut dyn Write,
) -> Result<()> {
    let mut problem = spec.design_problem()?;
    // Finite differences need states well below the perturbation size.
    problem.state = StateConfig {
        fixed_point_tol: spec.state.fixed_point_tol.min(1e-12),
        linear_tol: spec.state.linear_tol.min(1e-13),
        fixed_point_max_iter: spec.state.fixed_point_max_iter.max(500),
        ..spec.state
    };
    let n = problem.space.node_count();
    let v = match potential {
        Some(p) => read_field_csv(problem.space.mesh(), p)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            ScalarField::new((0..n).map(|_| rng.random_range(0.0..50.0)).collect())
        }
    };
    let report = gradient_check(&problem, &v, nodes, &[1e-2, 1e-3, 1e-4], spec.seed)?;
    for row in &report.rows {
        writeln!(
            out,
            "node {} analytic {} fd {} step {} rel_err {}",
            row.node,
            format_sig9(row.analytic),
            format_sig9(row.finite_difference),
            row.step,
            format_sig9(row.relative_error)
        )
        .map_err(|e| Error::io("<stdout>", e))?;
    }
    line(out, "max_relative_error", num(report.max_relative_error))?;
    if report.max_relative_error > threshold {
        return Err(Error::GradientMismatch {
            max_error: report.max_relative_error,
            threshold,
        });
    }
    Ok(())
}

fn radial(spec: &ProblemSpec, n: usize, nr: usize, measure: Option<f64>, inset: f64, out: &mut dyn Write) -> Result<()> {
    let profile = match spec.source {
        SourceSpec::Constant { value } => RadialProfile::Constant(value),
        SourceSpec::Radial { peak, slope, .. } => RadialProfile::Linear { peak, slope },
        _ => RadialProfile::Constant(1.0),
    };
    let mut setup = SymmetrizationSetup::new(
        measure.unwrap_or(spec.optimization.volume_fraction),
        profile,
        spec.delta,
        spec.p,
    );
    setup.n = n;
    setup.nr = nr;
    setup.inset_cells = inset;
    setup.state = spec.state;
    setup.threads = thread_count();
    let report = symmetrization_check(&setup, &SymmetrizationSetup::default_candidates())?;
    writeln!(out, "candidate,energy,gap,ball_not_worse").map_err(|e| Error::io("<stdout>", e))?;
    writeln!(out, "ball-radial,{},0,true", format_sig9(report.ball_radial)).map_err(|e| Error::io("<stdout>", e))?;
    writeln!(
        out,
        "ball-2d,{},{},{}",
        format_sig9(report.ball_2d),
        format_sig9((report.ball_2d - report.ball_radial) / report.ball_radial.abs()),
        report.cross_check_ok
    )
    .map_err(|e| Error::io("<stdout>", e))?;
    for row in &report.rows {
        writeln!(out, "{},{},{},{}", row.name, format_sig9(row.energy), format_sig9(row.gap), row.ball_not_worse)
            .map_err(|e| Error::io("<stdout>", e))?;
    }
    if !report.passed() {
        return Err(Error::SymmetrizationFailed(format!(
            "cross-check {:.4}, ordering {}",
            report.cross_check,
            report.rows.iter().all(|r| r.ball_not_worse)
        )));
    }
    Ok(())
}

fn gamma(spec: &ProblemSpec, first: &Path, second: &Path, out: &mut dyn Write) -> Result<()> {
    let space = spec.space()?;
    let a = read_field_csv(space.mesh(), first)?;
    let b = read_field_csv(space.mesh(), second)?;
    line(out, "gamma_distance", num(space.gamma_distance(&a, &b)?))
}
