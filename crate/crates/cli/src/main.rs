use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use orthext::autocorr::{autocorr_from_coeffs, autocorr_from_covariance, rank_truncate, symmetry_mask};
use orthext::checks::{self, Budget};
use orthext::estimators::Method;
use orthext::experiments::{bias_variance, default_levels, default_methods, phantom_experiment, BiasVarianceConfig, PhantomConfig};
use orthext::extension::extend;
use orthext::formats;
use orthext::linalg::Field;
use orthext::sphbasis::truncation;
use orthext::volume::{expand, fcr, render_phantom, synthesize, PhantomPreset};
use tracing::info;

#[derive(Parser)]
#[command(name = "orthext", version, about = "Orthogonal extension estimators and phantom experiments")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo bias, variance and RMSE of the estimators; writes CSV.
    BiasVariance(BiasVarianceArgs),
    /// Clean-autocorrelation reconstruction of a phantom from its homolog.
    Phantom(PhantomArgs),
    /// Expand a volume (or a rendered preset) in the spherical Bessel basis.
    Expand(ExpandArgs),
    /// Autocorrelation matrices from a coefficient archive or a covariance slice.
    Autocorr(AutocorrArgs),
    /// Estimate coefficients from a homolog archive and an autocorrelation archive.
    Estimate(EstimateArgs),
    /// Volume from a coefficient archive.
    Synthesize(SynthesizeArgs),
    /// Fourier cross resolution of two volumes, as CSV.
    Fcr(FcrArgs),
    /// Run the built-in checks; exits nonzero if any fails.
    Selftest(SelftestArgs),
}

#[derive(Args)]
struct MethodArgs {
    /// ls, twicing, at, family (uses --t) or family<t>; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Number of correction terms for `family`.
    #[arg(long, default_value_t = 1)]
    t: u32,
}

impl MethodArgs {
    fn parse(&self) -> Result<Vec<Method>> {
        self.method
            .iter()
            .map(|m| {
                if m == "family" {
                    Ok(Method::Family(self.t))
                } else {
                    m.parse::<Method>().map_err(Into::into)
                }
            })
            .collect()
    }
}

#[derive(Args)]
struct BiasVarianceArgs {
    #[arg(long, default_value_t = 10)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    /// Relative perturbations ||E||/||A||, comma-separated.
    #[arg(long, value_delimiter = ',')]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "real")]
    field: Field,
    #[command(flatten)]
    methods: MethodArgs,
    /// CSV path; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BasisArgs {
    /// Bandlimit in cycles per voxel.
    #[arg(long, default_value_t = 0.5)]
    c: f64,
    /// Support radius in voxels.
    #[arg(long = "R", default_value_t = 14.0)]
    support: f64,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value = "mickey")]
    preset: String,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long = "sym-order", default_value_t = 1)]
    sym_order: usize,
    #[command(flatten)]
    methods: MethodArgs,
    /// Growth of the subunit mask in voxels.
    #[arg(long, default_value_t = 1.0)]
    mask_margin: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExpandArgs {
    /// `.vol` file; renders `--preset` at size `--n` when absent.
    input: Option<PathBuf>,
    #[arg(long, default_value = "mickey")]
    preset: String,
    #[arg(long, default_value_t = 32)]
    n: usize,
    /// Render the preset without its subunit.
    #[arg(long)]
    homolog: bool,
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long = "sym-order", default_value_t = 1)]
    sym_order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AutocorrArgs {
    /// `.coef` archive or `.covslice` document.
    input: PathBuf,
    /// Basis for a `.covslice` input.
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long = "sym-order", default_value_t = 1)]
    sym_order: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    homolog: PathBuf,
    #[arg(long)]
    acorr: PathBuf,
    #[command(flatten)]
    methods: MethodArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthesizeArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 1.0)]
    voxel_size: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FcrArgs {
    first: PathBuf,
    second: PathBuf,
    /// Shell width in cycles per voxel; `1/n` when absent.
    #[arg(long)]
    shell_width: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Use the full Monte Carlo trial counts.
    #[arg(long)]
    full: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(tracing::Level::WARN)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::BiasVariance(a) => cmd_bias_variance(a)?,
        Command::Phantom(a) => cmd_phantom(a)?,
        Command::Expand(a) => cmd_expand(a)?,
        Command::Autocorr(a) => cmd_autocorr(a)?,
        Command::Estimate(a) => cmd_estimate(a)?,
        Command::Synthesize(a) => cmd_synthesize(a)?,
        Command::Fcr(a) => cmd_fcr(a)?,
        Command::Selftest(a) => return Ok(cmd_selftest(a)),
    }
    Ok(ExitCode::SUCCESS)
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_bias_variance(a: BiasVarianceArgs) -> Result<()> {
    let mut methods = a.methods.parse()?;
    if methods.is_empty() {
        methods = default_methods();
    }
    let cfg = BiasVarianceConfig {
        dim: a.dim,
        trials: a.trials,
        levels: if a.levels.is_empty() { default_levels() } else { a.levels },
        seed: a.seed,
        field: a.field,
        methods,
        eigenvalues: None,
    };
    let report = bias_variance(&cfg)?;
    write_or_print(a.out.as_deref(), &report.to_csv())
}

fn cmd_phantom(a: PhantomArgs) -> Result<()> {
    let mut methods = a.methods.parse()?;
    if methods.is_empty() {
        methods = vec![Method::Ls, Method::Twicing, Method::At];
    }
    let cfg = PhantomConfig {
        preset: a.preset,
        n: a.n,
        c: a.basis.c,
        support: a.basis.support,
        methods,
        sym_order: a.sym_order,
        mask_margin: a.mask_margin,
        shell_width: None,
    };
    let run = phantom_experiment(&cfg)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let dir = &a.out;
    formats::write_volume(dir.join("truth.vol"), &run.truth)?;
    formats::write_volume(dir.join("homolog.vol"), &run.homolog)?;
    formats::write_volume(dir.join("mask.vol"), &run.mask)?;
    formats::write_coefficients(dir.join("truth.coef"), &run.truth_coeffs)?;
    formats::write_coefficients(dir.join("homolog.coef"), &run.homolog_coeffs)?;
    formats::write_autocorrelation(dir.join("truth.acorr"), &run.acorr)?;
    for ((method, est), vol) in cfg.methods.iter().zip(&run.estimates).zip(&run.volumes) {
        formats::write_coefficients(dir.join(format!("{method}.coef")), est)?;
        formats::write_volume(dir.join(format!("{method}.vol")), vol)?;
    }
    let mut report = serde_json::to_string_pretty(&run.summary)?;
    report.push('\n');
    std::fs::write(dir.join("report.json"), report)?;

    let s = &run.summary;
    println!("L = {}, {} coefficients", s.max_degree, run.truth_coeffs.basis.coefficient_count());
    println!("homolog: subunit error {:.4}, coefficient error {:.4}", s.homolog_subunit_error, s.homolog_coefficient_error);
    for m in &s.methods {
        println!("{}: subunit error {:.4}, coefficient error {:.4}", m.method, m.subunit_error, m.coefficient_error);
    }
    Ok(())
}

fn cmd_expand(a: ExpandArgs) -> Result<()> {
    let basis = truncation(a.basis.c, a.basis.support)?;
    let volume = match &a.input {
        Some(p) => formats::read_volume(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let preset = PhantomPreset::named(&a.preset, a.basis.support)?;
            let phantom = if a.homolog { preset.homolog } else { preset.truth() };
            render_phantom(&phantom, a.n, 1.0)?
        }
    };
    let mut coeffs = expand(&volume, &basis)?;
    if a.sym_order > 1 {
        coeffs = symmetry_mask(&coeffs, a.sym_order)?;
    }
    info!(max_degree = basis.max_degree, "expanded");
    formats::write_coefficients(&a.out, &coeffs)?;
    Ok(())
}

fn cmd_autocorr(a: AutocorrArgs) -> Result<()> {
    let is_slice = a.input.extension().is_some_and(|e| e == "covslice");
    let acorr = if is_slice {
        let slice = formats::read_covslice(&a.input)?;
        let basis = truncation(a.basis.c, a.basis.support)?;
        autocorr_from_covariance(&slice, &basis)?
    } else {
        let mut coeffs = formats::read_coefficients(&a.input)?;
        if a.sym_order > 1 {
            coeffs = symmetry_mask(&coeffs, a.sym_order)?;
        }
        autocorr_from_coeffs(&coeffs)
    };
    formats::write_autocorrelation(&a.out, &rank_truncate(&acorr)?)?;
    Ok(())
}

fn cmd_estimate(a: EstimateArgs) -> Result<()> {
    let methods = a.methods.parse()?;
    let [method] = methods.as_slice() else {
        bail!("estimate takes exactly one --method");
    };
    let homolog = formats::read_coefficients(&a.homolog)?;
    let acorr = formats::read_autocorrelation(&a.acorr)?;
    formats::write_coefficients(&a.out, &extend(&homolog, &acorr, *method)?)?;
    Ok(())
}

fn cmd_synthesize(a: SynthesizeArgs) -> Result<()> {
    let coeffs = formats::read_coefficients(&a.input)?;
    let syn = synthesize(&coeffs, a.n, a.voxel_size)?;
    info!(imaginary_residual = syn.imaginary_residual, "synthesized");
    formats::write_volume(&a.out, &syn.volume)?;
    Ok(())
}

fn cmd_fcr(a: FcrArgs) -> Result<()> {
    let v1 = formats::read_volume(&a.first)?;
    let v2 = formats::read_volume(&a.second)?;
    let width = a.shell_width.unwrap_or(1.0 / v1.n as f64);
    let curve = fcr(&v1, &v2, width)?;
    let mut text = String::from("shell,fcr\n");
    for (s, v) in curve.shells.iter().zip(&curve.values) {
        text.push_str(&format!("{s:.16e},{v:.16e}\n"));
    }
    write_or_print(a.out.as_deref(), &text)
}

fn cmd_selftest(a: SelftestArgs) -> ExitCode {
    let budget = if a.full { Budget::full() } else { Budget::reduced() };
    let outcomes = checks::run_all(budget);
    let mut failed = 0;
    for o in &outcomes {
        // timings go to stderr so that standard output is reproducible
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("[{verdict}] {:>2} {}: {}", o.id, o.name, o.detail);
        eprintln!("   {:>2} took {:.2}s", o.id, o.elapsed.as_secs_f64());
        failed += usize::from(!o.passed);
    }
    println!("{} of {} checks passed", outcomes.len() - failed, outcomes.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
