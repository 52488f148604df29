//! Command-line front end for hopflab.
//!
//! Every subcommand resolves a [`RunConfig`], writes it to `<out>/config.json`
//! and prefixes each output file with `# config_hash=<sha256>`.

pub mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use clap::{Args, Parser, Subcommand};

use hopflab::attractor::{self, RadialLaw};
use hopflab::io::fmt_f64;
use hopflab::lyapunov;
use hopflab::noise::NoiseStream;
use hopflab::sweep::{self, GridSpec};
use hopflab::{flow, verify, Error, Params, Result, State};

pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "hopflab", version, about = "Stochastic Hopf normal form experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long = "a", global = true, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long = "b", global = true, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    beta: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Time horizon.
    #[arg(long = "T", global = true)]
    horizon: Option<f64>,
    #[arg(long, global = true)]
    burn_in: Option<f64>,
    /// Tangent QR renormalisation period in steps.
    #[arg(long, global = true)]
    renorm_every: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<std::path::PathBuf>,
    /// JSON file with the same keys as the flags; flags win.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analytic radial density table; with --T also an empirical histogram.
    Density {
        #[arg(long)]
        bins: Option<usize>,
    },
    /// K, kappa, the Lyapunov sum and the upper bound for the given parameters.
    Bounds,
    /// Trajectory and tangent flow dump.
    Simulate,
    /// Top Lyapunov exponent and Lyapunov sum with confidence intervals.
    Lyapunov,
    /// Finite-time Lyapunov exponent distribution.
    Ftle {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Pullback of a stationary cloud with diameter checkpoints.
    Pullback {
        #[arg(long)]
        n: Option<usize>,
        /// Comma-separated pullback times.
        #[arg(long, allow_hyphen_values = true)]
        checkpoints: Option<String>,
    },
    /// Top Lyapunov exponent over a (b, alpha) grid and its zero contour.
    Sweep {
        /// b_min:b_max:steps,alpha_min:alpha_max:steps
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Seeds per cell.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Invariant suite.
    Verify,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Density { .. } => "density",
            Command::Bounds => "bounds",
            Command::Simulate => "simulate",
            Command::Lyapunov => "lyapunov",
            Command::Ftle { .. } => "ftle",
            Command::Pullback { .. } => "pullback",
            Command::Sweep { .. } => "sweep",
            Command::Verify => "verify",
        }
    }
}

fn flag_config(cli: &Cli) -> RunConfig {
    let c = &cli.common;
    let mut r = RunConfig {
        a: c.a,
        b: c.b,
        alpha: c.alpha,
        beta: c.beta,
        sigma: c.sigma,
        dt: c.dt,
        horizon: c.horizon,
        burn_in: c.burn_in,
        renorm_every: c.renorm_every,
        seed: c.seed,
        threads: c.threads,
        out: c.out.clone(),
        ..Default::default()
    };
    match &cli.command {
        Command::Density { bins } => r.bins = *bins,
        Command::Ftle { n } => r.n = *n,
        Command::Pullback { n, checkpoints } => {
            r.n = *n;
            r.checkpoints = checkpoints.clone();
        }
        Command::Sweep { grid, n } => {
            r.grid = grid.clone();
            r.n = *n;
        }
        _ => {}
    }
    r
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut stdout = std::io::stdout().lock();
    run_with(args, &mut stdout)
}

/// [`run`] with the report written to `w` instead of stdout.
pub fn run_with<I, T, W>(args: I, w: &mut W) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli, w) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                EXIT_NUMERIC
            } else {
                EXIT_INVALID
            }
        }
    }
}

fn execute<W: Write>(cli: &Cli, w: &mut W) -> Result<i32> {
    let file = match &cli.common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let name = cli.command.name();
    let cfg = file.overlay(&flag_config(cli)).resolve(name);
    cfg.check_grid()?;
    let threads = cfg.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let out = Output::create(&cfg)?;
    writeln!(w, "# config_hash={}", out.hash)?;
    let mut report = Vec::new();
    let code = pool.install(|| {
        let w = &mut report;
        match name {
            "density" => density(&cfg, &out, w),
            "bounds" => bounds(&cfg, &out, w),
            "simulate" => simulate(&cfg, &out, w),
            "lyapunov" => lyapunov_cmd(&cfg, &out, w),
            "ftle" => ftle(&cfg, &out, w),
            "pullback" => pullback(&cfg, &out, w),
            "sweep" => sweep_cmd(&cfg, &out, w),
            "verify" => verify_cmd(&out, w),
            _ => unreachable!("every subcommand is dispatched"),
        }
    });
    w.write_all(&report)?;
    code
}

/// Output directory with the resolved config already written.
struct Output {
    dir: std::path::PathBuf,
    hash: String,
}

impl Output {
    fn create(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.out_dir();
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("config.json"), cfg.to_json() + "\n")?;
        Ok(Self { dir, hash: cfg.hash() })
    }

    /// Create `name` and write the hash comment line.
    fn file(&self, name: &str) -> Result<BufWriter<File>> {
        let mut f = BufWriter::new(File::create(self.dir.join(name))?);
        writeln!(f, "# config_hash={}", self.hash)?;
        Ok(f)
    }

    fn write_with<F>(&self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let mut f = self.file(name)?;
        body(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

fn stationary_start(p: &Params, seed: u64) -> Result<State> {
    Ok(attractor::sample_stationary(p, 1, seed)?.states[0])
}

fn density<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let p = cfg.params()?;
    let bins = cfg.bins.unwrap_or(100);
    if bins == 0 {
        return Err(Error::InvalidArgument("--bins must be >= 1".into()));
    }
    let law = RadialLaw::new(&p)?;
    let s_hi = law.quantile(1.0 - 1e-6);
    out.write_with("density.csv", |f| {
        writeln!(f, "s,density")?;
        for k in 0..=bins {
            let s = s_hi * k as f64 / bins as f64;
            writeln!(f, "{},{}", fmt_f64(s), fmt_f64(p.radial_density(s)?))?;
        }
        Ok(())
    })?;
    writeln!(w, "wrote {} rows to {}", bins + 1, out.dir.join("density.csv").display())?;
    if let Some(t) = cfg.horizon {
        let num = cfg.numerics()?;
        let h = attractor::empirical_radial_density(&p, cfg.seed.unwrap_or(0), t, bins, &num)?;
        out.write_with("histogram.csv", |f| h.write_csv(f))?;
        writeln!(w, "histogram L1 to analytic = {}", h.l1())?;
    }
    Ok(EXIT_OK)
}

fn bounds<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let p = cfg.params()?;
    let mut rows: Vec<(&str, f64)> = vec![
        ("K", p.normalization_constant()?),
        ("E_s", p.expected_squared_radius()?),
        ("lambda_sum", p.lambda_sum_closed_form()?),
    ];
    let mut code = EXIT_OK;
    match p.kappa() {
        Ok(k) => rows.push(("kappa", k)),
        Err(e) if e.is_numeric() => {
            writeln!(w, "kappa undefined: {e}")?;
            code = EXIT_NUMERIC;
        }
        Err(e) => return Err(e),
    }
    rows.push(("upper_bound", p.lyapunov_upper_bound()?));
    for (k, v) in &rows {
        writeln!(w, "{k} = {v}")?;
    }
    out.write_with("bounds.csv", |f| {
        writeln!(f, "quantity,value")?;
        for (k, v) in &rows {
            writeln!(f, "{k},{}", fmt_f64(*v))?;
        }
        Ok(())
    })?;
    Ok(code)
}

fn simulate<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let p = cfg.params()?;
    let num = cfg.numerics()?;
    let seed = cfg.seed.unwrap_or(0);
    let t = cfg.horizon()?;
    let z0 = stationary_start(&p, seed)?;
    let stream = NoiseStream::new(seed, 0, 0.0, t, num.dt)?;
    let tr = flow::integrate_sde(&p, &stream, z0, (0.0, t))?;
    let tf = flow::integrate_variational(&p, &tr)?;
    out.write_with("trajectory.csv", |f| tr.write_csv(f))?;
    out.write_with("tangent.csv", |f| tf.write_csv(f))?;
    let z = tr.last();
    writeln!(w, "steps = {}", tr.len() - 1)?;
    writeln!(w, "z(T) = ({}, {})", z.x, z.y)?;
    Ok(EXIT_OK)
}

fn lyapunov_cmd<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let p = cfg.params()?;
    let num = cfg.numerics()?;
    let seed = cfg.seed.unwrap_or(0);
    let z0 = stationary_start(&p, seed)?;
    let run = lyapunov::asymptotic_from(&p, seed, z0, cfg.horizon()?, &num)?;
    out.write_with("lyapunov_top.csv", |f| run.top.write_csv(f))?;
    out.write_with("lyapunov_sum.csv", |f| run.sum.write_csv(f))?;
    writeln!(w, "lambda_top = {} +- {}", run.top.value, run.top.ci_halfwidth)?;
    writeln!(w, "lambda_sum = {} +- {}", run.sum.value, run.sum.ci_halfwidth)?;
    writeln!(w, "lambda_sum closed form = {}", p.lambda_sum_closed_form()?)?;
    writeln!(w, "upper bound = {}", p.lyapunov_upper_bound()?)?;
    let sign = match run.top.certified_sign() {
        Some(s) if s < 0 => "negative",
        Some(_) => "positive",
        None => "undetermined",
    };
    writeln!(w, "sign = {sign}")?;
    Ok(EXIT_OK)
}

fn ftle<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let p = cfg.params()?;
    let num = cfg.numerics()?;
    let n = cfg.n.unwrap_or(1000);
    let d = lyapunov::ftle_distribution(&p, n, cfg.horizon()?, cfg.seed.unwrap_or(0), &num)?;
    out.write_with("ftle.csv", |f| d.write_csv(f))?;
    writeln!(w, "samples = {}, failures = {}", d.samples.len(), d.failures.len())?;
    if d.samples.is_empty() {
        return Ok(EXIT_NUMERIC);
    }
    writeln!(w, "mean ftle_sup = {}", d.mean_sup())?;
    writeln!(w, "max ftle_sup = {}", d.max_sup())?;
    writeln!(w, "fraction positive = {}", d.fraction_positive())?;
    Ok(EXIT_OK)
}

fn pullback<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let p = cfg.params()?;
    let num = cfg.numerics()?;
    let n = cfg.n.unwrap_or(1000);
    let r = attractor::pullback_cloud(&p, cfg.seed.unwrap_or(0), cfg.horizon()?, n, &cfg.checkpoint_list()?, &num)?;
    out.write_with("cloud_initial.csv", |f| r.initial.write_csv(f))?;
    for c in &r.checkpoints {
        out.write_with(&format!("cloud_T{}.csv", fmt_f64(c.horizon)), |f| c.cloud.write_csv(f))?;
    }
    out.write_with("checkpoints.csv", |f| r.write_checkpoints_csv(f))?;
    for c in &r.checkpoints {
        writeln!(w, "T = {}: diameter = {}", c.horizon, c.diameter)?;
    }
    writeln!(w, "synchronised = {}", r.synchronised)?;
    Ok(EXIT_OK)
}

fn sweep_cmd<W: Write>(cfg: &RunConfig, out: &Output, w: &mut W) -> Result<i32> {
    let (b, alpha) = sweep::parse_grid(cfg.grid.as_deref().unwrap_or_default())?;
    let mut spec = GridSpec::new(b, alpha, cfg.params()?);
    spec.horizon = cfg.horizon()?;
    spec.seeds = cfg.n.unwrap_or(4);
    spec.seed0 = cfg.seed.unwrap_or(0);
    spec.numerics = cfg.numerics()?;
    let result = sweep::sweep_top_lyapunov(&spec, cfg.threads.unwrap_or(0))?;
    let contour = sweep::zero_contour(&result);
    out.write_with("sweep.csv", |f| result.write_csv(f))?;
    out.write_with("contour.csv", |f| contour.write_csv(f))?;
    writeln!(w, "cells = {}", result.cells.len())?;
    writeln!(w, "kappa mismatches = {}", result.kappa_mismatches().len())?;
    writeln!(w, "bound violations = {}", result.bound_violations().len())?;
    writeln!(w, "undetermined contour rows = {} of {}", contour.undetermined(), contour.rows.len())?;
    writeln!(w, "cpu seconds = {:.1}", result.cpu_seconds)?;
    if !contour.rows.is_empty() && contour.undetermined() == contour.rows.len() {
        return Ok(EXIT_NUMERIC);
    }
    Ok(EXIT_OK)
}

fn verify_cmd<W: Write>(out: &Output, w: &mut W) -> Result<i32> {
    let report = verify::run_all();
    report.write_table(&mut *w)?;
    out.write_with("verify.txt", |f| report.write_table(f))?;
    Ok(if report.passed() { EXIT_OK } else { EXIT_NUMERIC })
}

/// Read a CSV written by the CLI, skipping the hash comment.
pub fn read_output(path: &Path) -> Result<(String, String)> {
    let text = fs::read_to_string(path)?;
    let (first, rest) = text.split_once('\n').unwrap_or((&text, ""));
    let hash = first
        .strip_prefix("# config_hash=")
        .ok_or_else(|| Error::Parse(format!("{}: missing config hash line", path.display())))?;
    Ok((hash.to_string(), rest.to_string()))
}
