//! The `magsob` command-line tool.
//!
//! Exit status: 0 on success, 1 when a study or audit verdict fails, 2 on
//! usage errors, 3 on numeric-domain errors.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use magsob_core::functionals::{bbm_energy, jdelta_energy, local_energy};
use magsob_core::kernels::{q_constant, KernelSpec, DEFAULT_KERNEL_RADIUS};
use magsob_core::quadrature::{DEFAULT_MC_COUNT, DEFAULT_MC_SEED};
use magsob_core::studies::{
    bbm_convergence_study, bound_audit, jdelta_convergence_study, pointwise_convergence_study,
    PointSet, PointwiseMode, StudyReport,
};
use magsob_core::{
    catalog, BoxGrid, BoxRule, Error, McSampler, QuadConfig, RadialGrid, Result, ScalarField,
    SphereRule, VectorPotential,
};

pub use config::{parse_config, Format, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERDICT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Environment variable capping the worker count (0 = one per core).
pub const THREADS_ENV: &str = "MAGSOB_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "magsob",
    version,
    about = "Local and nonlocal magnetic Sobolev energies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Local energy ∫|∇u − iAu|_p^p.
    Energy(CommonArgs),
    /// Mollified nonlocal energy, one row per s.
    Bbm(CommonArgs),
    /// Thresholded energy J_δ, one row per δ.
    Jdelta(CommonArgs),
    /// The sphere constant Q_{N,p}.
    Qnp(CommonArgs),
    /// Pointwise densities against their local limit.
    Pointwise(PointwiseArgs),
    /// Convergence study in s or δ.
    Study(StudyArgs),
    /// Inequality audit.
    Audit(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Config file with key = value lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    dim: Option<String>,
    /// Catalog field, `name` or `name:p1,p2`.
    #[arg(long, allow_hyphen_values = true)]
    field: Option<String>,
    /// Catalog potential, `name` or `name:p1,p2` (`zero`, `constant`, `rotational`, `gradient`).
    #[arg(long, allow_hyphen_values = true)]
    potential: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    /// `fractional:s=0.99` or `truncated:s=0.99,R=16`.
    #[arg(long, allow_hyphen_values = true)]
    kernel: Option<String>,
    #[arg(long = "s-list", allow_hyphen_values = true)]
    s_list: Option<String>,
    #[arg(long = "delta-list", allow_hyphen_values = true)]
    delta_list: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    radius: Option<String>,
    #[arg(long = "nodes-per-dim", allow_hyphen_values = true)]
    nodes_per_dim: Option<String>,
    /// `gauss_legendre` or `trapezoid`.
    #[arg(long, allow_hyphen_values = true)]
    rule: Option<String>,
    #[arg(long = "radial-h-min", allow_hyphen_values = true)]
    radial_h_min: Option<String>,
    #[arg(long = "radial-h-max", allow_hyphen_values = true)]
    radial_h_max: Option<String>,
    #[arg(long = "radial-count", allow_hyphen_values = true)]
    radial_count: Option<String>,
    #[arg(long = "sphere-order", allow_hyphen_values = true)]
    sphere_order: Option<String>,
    #[arg(long = "mc-seed", allow_hyphen_values = true)]
    mc_seed: Option<String>,
    #[arg(long = "mc-count", allow_hyphen_values = true)]
    mc_count: Option<String>,
    /// `csv` or `json`.
    #[arg(long, allow_hyphen_values = true)]
    format: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Bbm,
    Jdelta,
}

#[derive(Debug, Args)]
struct PointOpts {
    #[arg(long, value_enum, default_value = "bbm")]
    mode: Mode,
    /// Points separated by `;`, coordinates by `,` (default: a trapezoid grid on [−4, 4]^N).
    #[arg(long)]
    points: Option<String>,
}

#[derive(Debug, Args)]
struct PointwiseArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    points: PointOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Bbm,
    Jdelta,
    Pointwise,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    points: PointOpts,
}

impl CommonArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => parse_config(path)?,
            None => RunConfig::default(),
        };
        let mut flags = RunConfig::default();
        let pairs = [
            ("dim", &self.dim),
            ("field", &self.field),
            ("potential", &self.potential),
            ("p", &self.p),
            ("kernel", &self.kernel),
            ("s_list", &self.s_list),
            ("delta_list", &self.delta_list),
            ("tol", &self.tol),
            ("radius", &self.radius),
            ("nodes_per_dim", &self.nodes_per_dim),
            ("rule", &self.rule),
            ("radial.h_min", &self.radial_h_min),
            ("radial.h_max", &self.radial_h_max),
            ("radial.count", &self.radial_count),
            ("sphere.order", &self.sphere_order),
            ("mc.seed", &self.mc_seed),
            ("mc.count", &self.mc_count),
            ("format", &self.format),
            ("out", &self.out),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                flags.set(key, v)?;
            }
        }
        cfg.merge(flags);
        Ok(cfg)
    }
}

/// `name` or `name:v1,v2,...`.
fn split_spec(spec: &str) -> Result<(&str, Vec<f64>)> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let params = rest
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("parameter `{t}` of `{spec}` is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((name.trim(), params))
}

fn build_field(spec: &str, dim: usize) -> Result<ScalarField> {
    let (name, params) = split_spec(spec)?;
    catalog(name, dim, &params)?.into_field()
}

fn build_potential(spec: &str, dim: usize) -> Result<VectorPotential> {
    let (name, params) = split_spec(spec)?;
    let full = if name.ends_with("_potential") {
        name.to_string()
    } else {
        format!("{name}_potential")
    };
    catalog(&full, dim, &params)?.into_potential()
}

/// A fully resolved problem.
struct Problem {
    cfg: RunConfig,
    dim: usize,
    u: ScalarField,
    a: VectorPotential,
    p: f64,
    quad: QuadConfig,
}

impl Problem {
    fn resolve(cfg: RunConfig) -> Result<Self> {
        let dim = cfg.dim.unwrap_or(1);
        let u = build_field(cfg.field.as_deref().unwrap_or("gaussian"), dim)?;
        let a = build_potential(cfg.potential.as_deref().unwrap_or("zero"), dim)?;
        let p = cfg.p.unwrap_or(2.0);
        let quad = quad_config(&cfg, dim)?;
        Ok(Self {
            cfg,
            dim,
            u,
            a,
            p,
            quad,
        })
    }

    fn kernel(&self) -> KernelSpec {
        self.cfg.kernel.unwrap_or(KernelSpec::Truncated {
            s: 0.999,
            radius: DEFAULT_KERNEL_RADIUS,
        })
    }
}

fn quad_config(cfg: &RunConfig, dim: usize) -> Result<QuadConfig> {
    let mut q = QuadConfig::default_for_dim(dim)?;
    if cfg.radius.is_some() || cfg.nodes_per_dim.is_some() || cfg.rule.is_some() {
        q.grid = BoxGrid::new(
            dim,
            cfg.radius.unwrap_or(q.grid.radius()),
            cfg.nodes_per_dim.unwrap_or(q.grid.nodes_per_dim()),
            cfg.rule.unwrap_or(BoxRule::GaussLegendre),
        )?;
    }
    q.radial = RadialGrid::new(
        cfg.radial_h_min.unwrap_or(q.radial.h_min),
        cfg.radial_h_max.unwrap_or(q.radial.h_max),
        cfg.radial_count.unwrap_or(q.radial.count),
    )
    .map_err(|e| match e {
        Error::Usage(m) => Error::Usage(format!("radial: {m}")),
        other => other,
    })?;
    if let Some(order) = cfg.sphere_order {
        q.sphere = SphereRule::build(dim, order)?;
    }
    if dim == 3 {
        q.mc = Some(McSampler::new(
            cfg.mc_seed.unwrap_or(DEFAULT_MC_SEED),
            cfg.mc_count.unwrap_or(DEFAULT_MC_COUNT),
            0,
        )?);
    }
    Ok(q)
}

/// One output row of the single-functional commands.
struct Row {
    param: f64,
    value: f64,
    est_error: f64,
    reference: f64,
}

fn relative(a: f64, reference: f64) -> f64 {
    (a - reference).abs() / reference.max(1e-300)
}

fn render_rows(command: &str, digest: &str, rows: &[Row], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut out = String::from("param,value,est_error,reference,residual\n");
            for r in rows {
                writeln!(
                    out,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                    r.param,
                    r.value,
                    r.est_error,
                    r.reference,
                    relative(r.value, r.reference)
                )
                .unwrap();
            }
            out
        }
        Format::Json => {
            let rows: Vec<_> = rows
                .iter()
                .map(|r| {
                    json!({
                        "param": r.param,
                        "value": r.value,
                        "est_error": r.est_error,
                        "reference": r.reference,
                        "residual": relative(r.value, r.reference),
                    })
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({
                "command": command,
                "config_digest": digest,
                "rows": rows,
            }))
            .expect("rows serialize");
            s.push('\n');
            s
        }
    }
}

fn render_report(report: &StudyReport, format: Format) -> String {
    match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    }
}

fn parse_points(text: &str, dim: usize) -> Result<PointSet> {
    let points = text
        .split(';')
        .filter(|t| !t.trim().is_empty())
        .map(|pt| {
            let (_, coords) = split_spec(&format!("x:{pt}"))?;
            if coords.len() != dim {
                return Err(Error::Usage(format!(
                    "point `{pt}` must have {dim} coordinates"
                )));
            }
            Ok(coords)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = points.len();
    PointSet::new(dim, points, vec![1.0; n])
}

fn default_points(dim: usize) -> Result<PointSet> {
    let per_dim = match dim {
        1 => 33,
        2 => 17,
        _ => 9,
    };
    Ok(PointSet::from_grid(&BoxGrid::new(
        dim,
        4.0,
        per_dim,
        BoxRule::Trapezoid,
    )?))
}

/// What a command produced.
enum Output {
    Rows(String),
    Report(StudyReport),
}

fn run_pointwise(prob: &Problem, opts: &PointOpts) -> Result<StudyReport> {
    let points = match &opts.points {
        Some(t) => parse_points(t, prob.dim)?,
        None => default_points(prob.dim)?,
    };
    let (mode, params) = match opts.mode {
        Mode::Bbm => (
            PointwiseMode::Bbm(prob.kernel()),
            prob.cfg
                .s_list
                .clone()
                .unwrap_or_else(|| vec![prob.kernel().s()]),
        ),
        Mode::Jdelta => (
            PointwiseMode::Jdelta,
            prob.cfg.delta_list.clone().unwrap_or_else(|| vec![1e-4]),
        ),
    };
    pointwise_convergence_study(
        &prob.u,
        &prob.a,
        &points,
        &params,
        &mode,
        &prob.quad.radial,
        &prob.quad.sphere,
        prob.cfg.tol.unwrap_or(0.05),
    )
}

fn execute(command: &Command) -> Result<(Output, Format, Option<PathBuf>)> {
    let (common, name) = match command {
        Command::Energy(c) => (c, "energy"),
        Command::Bbm(c) => (c, "bbm"),
        Command::Jdelta(c) => (c, "jdelta"),
        Command::Qnp(c) => (c, "qnp"),
        Command::Pointwise(a) => (&a.common, "pointwise"),
        Command::Study(a) => (&a.common, "study"),
        Command::Audit(c) => (c, "audit"),
    };
    let prob = Problem::resolve(common.to_config()?)?;
    let format = prob.cfg.format.unwrap_or(Format::Csv);
    let out = prob.cfg.out.clone();
    let digest = prob.quad.digest();
    let (u, a, p, quad) = (&prob.u, &prob.a, prob.p, &prob.quad);
    let rows = |rows: Vec<Row>| Output::Rows(render_rows(name, &digest, &rows, format));
    let output = match command {
        Command::Energy(_) => {
            let e = local_energy(u, a, p, &quad.grid)?;
            rows(vec![Row {
                param: p,
                value: e.value,
                est_error: e.estimated_error,
                reference: e.value,
            }])
        }
        Command::Bbm(_) => {
            let kernel = prob.kernel();
            let q = q_constant(prob.dim, p, &quad.sphere)?.value;
            let reference = p * q * local_energy(u, a, p, &quad.grid)?.value;
            let s_list = prob.cfg.s_list.clone().unwrap_or_else(|| vec![kernel.s()]);
            let mut out = Vec::new();
            for s in s_list {
                let e = bbm_energy(u, a, &kernel.with_s(s).build(prob.dim)?, p, quad)?;
                out.push(Row {
                    param: s,
                    value: e.value,
                    est_error: e.estimated_error,
                    reference,
                });
            }
            rows(out)
        }
        Command::Jdelta(_) => {
            let q = q_constant(prob.dim, p, &quad.sphere)?.value;
            let reference = q * local_energy(u, a, p, &quad.grid)?.value;
            let deltas = prob.cfg.delta_list.clone().unwrap_or_else(|| vec![1e-3]);
            let mut out = Vec::new();
            for d in deltas {
                let e = jdelta_energy(u, a, d, p, quad)?;
                out.push(Row {
                    param: d,
                    value: e.value,
                    est_error: e.estimated_error,
                    reference,
                });
            }
            rows(out)
        }
        Command::Qnp(_) => {
            let q = q_constant(prob.dim, p, &quad.sphere)?;
            let est_error = match q.closed_form {
                Some(c) => (q.quadrature_value - c).abs(),
                None => {
                    let fine = SphereRule::build(prob.dim, 2 * quad.sphere.order())?;
                    (q_constant(prob.dim, p, &fine)?.quadrature_value - q.quadrature_value).abs()
                }
            };
            rows(vec![Row {
                param: p,
                value: q.quadrature_value,
                est_error,
                reference: q.value,
            }])
        }
        Command::Pointwise(args) => Output::Report(run_pointwise(&prob, &args.points)?),
        Command::Study(args) => {
            let report = match args.kind {
                Kind::Bbm => bbm_convergence_study(
                    u,
                    a,
                    p,
                    &prob
                        .cfg
                        .s_list
                        .clone()
                        .unwrap_or_else(|| vec![0.9, 0.99, 0.999]),
                    &prob.kernel(),
                    quad,
                    prob.cfg
                        .tol
                        .unwrap_or(if prob.dim == 1 { 0.02 } else { 0.03 }),
                )?,
                Kind::Jdelta => jdelta_convergence_study(
                    u,
                    a,
                    p,
                    &prob
                        .cfg
                        .delta_list
                        .clone()
                        .unwrap_or_else(|| vec![1e-2, 1e-3, 1e-4]),
                    quad,
                    prob.cfg.tol.unwrap_or(0.05),
                )?,
                Kind::Pointwise => run_pointwise(&prob, &args.points)?,
            };
            Output::Report(report)
        }
        Command::Audit(_) => {
            let family = prob.kernel();
            let s_list = prob
                .cfg
                .s_list
                .clone()
                .unwrap_or_else(|| vec![0.9, 0.99, 0.999]);
            let kernels = s_list
                .iter()
                .map(|&s| family.with_s(s).build(prob.dim))
                .collect::<Result<Vec<_>>>()?;
            let deltas = prob
                .cfg
                .delta_list
                .clone()
                .unwrap_or_else(|| vec![1e-1, 1e-2, 1e-3, 1e-4]);
            Output::Report(bound_audit(u, a, p, &kernels, &deltas, quad)?)
        }
    };
    Ok((output, format, out))
}

fn thread_count() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::Usage(format!(
                "{THREADS_ENV} must be a nonnegative integer, got `{v}`"
            ))
        }),
        Err(_) => Ok(0),
    }
}

fn emit(text: &str, out: Option<&PathBuf>, stdout: &mut dyn Write) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Error::Usage(format!("cannot write {}: {e}", path.display()))),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|e| Error::Usage(format!("cannot write to stdout: {e}"))),
    }
}

fn fail(err: &Error, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "magsob: {err}");
    match err {
        Error::Usage(_) => EXIT_USAGE,
        Error::NumericDomain(_) => EXIT_NUMERIC,
    }
}

/// Runs the tool on `args` (including the program name) and returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = stdout.write_all(text.as_bytes());
            } else {
                let _ = stderr.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let threads = match thread_count() {
        Ok(t) => t,
        Err(e) => return fail(&e, stderr),
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(p) => p,
        Err(e) => {
            return fail(
                &Error::Usage(format!("cannot start worker pool: {e}")),
                stderr,
            )
        }
    };
    let result = pool.install(|| execute(&cli.command));
    let (output, format, out) = match result {
        Ok(r) => r,
        Err(e) => return fail(&e, stderr),
    };
    let (text, verdict_ok) = match &output {
        Output::Rows(t) => (t.clone(), true),
        Output::Report(r) => (render_report(r, format), r.passed()),
    };
    if let Err(e) = emit(&text, out.as_ref(), stdout) {
        return fail(&e, stderr);
    }
    if !verdict_ok {
        if let Output::Report(r) = &output {
            for v in r.failures() {
                let _ = writeln!(
                    stderr,
                    "magsob: verdict `{}` failed (margin {:e})",
                    v.check, v.margin
                );
            }
        }
        return EXIT_VERDICT;
    }
    EXIT_OK
}
