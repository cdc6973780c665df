use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmrsafi::fbs::SolverConfig;
use mmrsafi::forward::{add_noise, make_cartesian_mask, ForwardOp, Measurements};
use mmrsafi::io::{
    mask_from_str, mask_to_string, model_from_archive, pgm_read, pgm_write, phantom, trace_csv,
    LoadedModel, ParamArchive,
};
use mmrsafi::linops::FilterBank;
use mmrsafi::oracle::{admm_prox_oracle, dense_bank_matrix, AdmmConfig};
use mmrsafi::prox::{prox_weighted_l1, ConstraintSet, ProxConfig, WeightedAnalysisOperator};
use mmrsafi::schemes::{
    default_safi_model, default_tv_model, run_cvx, run_mmr, run_safi, MmrModel, RunOptions,
    SafiModel, SchemeTrace,
};
use mmrsafi::tensor::{psnr, ChannelStack, Image, Rng};

/// Weighted l1-analysis reconstruction with reweighting (MMR) and
/// mask-regenerating fixed-point (SAFI) schemes.
#[derive(Parser)]
#[command(name = "mmrsafi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Add Gaussian noise to an image and reconstruct it.
    Denoise(DenoiseArgs),
    /// Simulate single-coil Cartesian MRI and reconstruct.
    Mri(MriArgs),
    /// Compare the dual prox solver against the dense ADMM oracle.
    ProxCheck(ProxCheckArgs),
    /// Print the objective sequence f(x_k) of a denoising run.
    ObjectiveTrace(DenoiseArgs),
    /// Write the 64x64 test phantom.
    MakePhantom(PhantomArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scheme {
    Cvx,
    Mmr,
    Safi,
}

#[derive(Args, Clone)]
struct SolverArgs {
    #[arg(long, value_enum, default_value = "mmr")]
    scheme: Scheme,
    /// `default-tv`, `default-safi` or a parameter archive path.
    #[arg(long)]
    params: Option<String>,
    /// Overrides the model's regularization strength.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 10)]
    k_out: usize,
    #[arg(long, default_value_t = 1000)]
    k_fbs: usize,
    #[arg(long, default_value_t = 500)]
    k_prox: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps_out: f64,
    /// Box constraint `lo,hi`; unconstrained when omitted.
    #[arg(long, value_name = "LO,HI")]
    r#box: Option<String>,
}

#[derive(Args, Clone)]
struct DenoiseArgs {
    /// Clean PGM image; the phantom is used when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Noise level, either a number or a fraction such as `25/255`.
    #[arg(long, default_value = "25/255")]
    sigma: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    noisy: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Archive receiving every outer iterate as `x.<k>` (and the start as `x.0`).
    #[arg(long)]
    iterates: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct MriArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Column mask file (one line of 0/1); drawn from `--acc` when omitted.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    acc: usize,
    #[arg(long, default_value_t = 0.08)]
    center_fraction: f64,
    #[arg(long, default_value = "2e-3")]
    sigma: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    zero_fill: Option<PathBuf>,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Writes the sampling mask actually used.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args)]
struct ProxCheckArgs {
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 65535)]
    maxval: u16,
}

/// Default MRI strength for the built-in models.
const MRI_DEFAULT_LAMBDA: f64 = 0.002;

enum Model {
    Mmr(MmrModel<f64>),
    Safi(SafiModel<f64>),
}

fn parse_sigma(text: &str) -> Result<f64> {
    let value = match text.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
            ensure!(b != 0.0, "sigma denominator is zero");
            a / b
        }
        None => text.trim().parse()?,
    };
    ensure!(
        value.is_finite() && value >= 0.0,
        "sigma must be finite and >= 0, got {text}"
    );
    Ok(value)
}

fn parse_box(text: &str) -> Result<ConstraintSet<f64>> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("box must be LO,HI"))?;
    Ok(ConstraintSet::boxed(
        lo.trim().parse()?,
        hi.trim().parse()?,
    )?)
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig<f64>> {
        let cfg = SolverConfig {
            k_out: self.k_out,
            k_fbs: self.k_fbs,
            k_prox: self.k_prox,
            eps_out: self.eps_out,
            ..SolverConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn constraint(&self) -> Result<ConstraintSet<f64>> {
        self.r#box
            .as_deref()
            .map_or(Ok(ConstraintSet::AllSpace), parse_box)
    }

    /// Loads the model; built-in models take `default_lambda` unless overridden.
    fn model(&self, default_lambda: Option<f64>) -> Result<Model> {
        let name = self.params.clone().unwrap_or_else(|| match self.scheme {
            Scheme::Safi => "default-safi".into(),
            _ => "default-tv".into(),
        });
        let (model, builtin) = match name.as_str() {
            "default-tv" => (Model::Mmr(default_tv_model()), true),
            "default-safi" => (Model::Safi(default_safi_model()), true),
            path => {
                let archive = ParamArchive::read(Path::new(path))
                    .with_context(|| format!("reading {path}"))?;
                let model = match model_from_archive(&archive)? {
                    LoadedModel::Mmr(m) => Model::Mmr(m),
                    LoadedModel::Safi(m) => Model::Safi(m),
                };
                (model, false)
            }
        };
        let lambda = self.lambda.or(if builtin { default_lambda } else { None });
        if let Some(l) = lambda {
            ensure!(l.is_finite() && l >= 0.0, "lambda must be finite and >= 0");
        }
        Ok(match model {
            Model::Mmr(mut m) => {
                ensure!(
                    self.scheme != Scheme::Safi,
                    "scheme safi needs SAFI parameters"
                );
                m.lambda = lambda.unwrap_or(m.lambda);
                Model::Mmr(m)
            }
            Model::Safi(mut m) => {
                ensure!(
                    self.scheme == Scheme::Safi,
                    "SAFI parameters need --scheme safi"
                );
                m.lambda = lambda.unwrap_or(m.lambda);
                Model::Safi(m)
            }
        })
    }

    fn run(
        &self,
        model: &Model,
        h: &ForwardOp<f64>,
        y: &[f64],
        reference: Option<&Image<f64>>,
        keep_iterates: bool,
    ) -> Result<(Image<f64>, SchemeTrace<f64>)> {
        let cfg = self.config()?;
        let set = self.constraint()?;
        let opts = RunOptions {
            x_init: None,
            reference,
            keep_iterates,
        };
        Ok(match (self.scheme, model) {
            (Scheme::Mmr, Model::Mmr(m)) => run_mmr(m, h, y, &cfg, &set, &opts)?,
            (Scheme::Cvx, Model::Mmr(m)) => run_cvx(&m.w, m.lambda, h, y, &cfg, &set, &opts)?,
            (Scheme::Safi, Model::Safi(m)) => run_safi(m, h, y, &cfg, &set, &opts)?,
            _ => bail!("scheme and parameters do not match"),
        })
    }
}

fn load_image(input: Option<&Path>) -> Result<Image<f64>> {
    match input {
        Some(p) => pgm_read(p).with_context(|| format!("reading {}", p.display())),
        None => Ok(phantom()),
    }
}

fn write_outputs(files: Vec<(&Path, Vec<u8>)>) -> Result<()> {
    for (path, bytes) in files {
        fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

struct DenoiseRun {
    clean: Image<f64>,
    noisy: Image<f64>,
    x: Image<f64>,
    trace: SchemeTrace<f64>,
}

fn denoise_run(args: &DenoiseArgs, keep_iterates: bool) -> Result<DenoiseRun> {
    let sigma = parse_sigma(&args.sigma)?;
    let model = args.solver.model(None)?;
    args.solver.config()?;
    args.solver.constraint()?;
    let clean = load_image(args.input.as_deref())?;
    let (h, w) = clean.shape();
    let noisy = match add_noise(
        &Measurements::Image(clean.clone()),
        sigma,
        &mut Rng::new(args.seed),
    )? {
        Measurements::Image(img) => img,
        Measurements::Kspace(_) => unreachable!("image noise stays an image"),
    };
    let op = ForwardOp::identity(h, w);
    let (x, trace) = args
        .solver
        .run(&model, &op, noisy.as_slice(), Some(&clean), keep_iterates)?;
    Ok(DenoiseRun {
        clean,
        noisy,
        x,
        trace,
    })
}

fn denoise(args: &DenoiseArgs) -> Result<()> {
    let run = denoise_run(args, args.iterates.is_some())?;
    let mut files = Vec::new();
    if let Some(p) = &args.output {
        files.push((p.as_path(), mmrsafi::io::pgm_encode(&run.x, 65535)?));
    }
    if let Some(p) = &args.noisy {
        files.push((p.as_path(), mmrsafi::io::pgm_encode(&run.noisy, 65535)?));
    }
    if let Some(p) = &args.trace {
        files.push((p.as_path(), trace_csv(&run.trace).into_bytes()));
    }
    if let Some(p) = &args.iterates {
        let (h, w) = run.x.shape();
        let mut archive = ParamArchive::new();
        archive.push("x.0", vec![h, w], vec![0.0; h * w])?;
        for (k, x) in run.trace.iterates.iter().enumerate() {
            archive.push(&format!("x.{}", k + 1), vec![h, w], x.as_slice().to_vec())?;
        }
        files.push((p.as_path(), archive.to_bytes()));
    }
    println!(
        "noisy psnr {:.3} dB, reconstruction psnr {:.3} dB, {} outer steps",
        psnr(&run.clean, &run.noisy)?,
        psnr(&run.clean, &run.x)?,
        run.trace.steps.len()
    );
    write_outputs(files)
}

fn objective_trace(args: &DenoiseArgs) -> Result<()> {
    ensure!(
        args.solver.scheme != Scheme::Safi,
        "the SAFI scheme has no objective to trace"
    );
    let run = denoise_run(args, false)?;
    for (k, f) in run.trace.objectives().iter().enumerate() {
        println!("{} {}", k + 1, f);
    }
    Ok(())
}

fn mri(args: &MriArgs) -> Result<()> {
    let sigma = parse_sigma(&args.sigma)?;
    let model = args.solver.model(Some(MRI_DEFAULT_LAMBDA))?;
    args.solver.config()?;
    args.solver.constraint()?;
    let clean = load_image(args.input.as_deref())?;
    let (h, w) = clean.shape();
    let mut rng = Rng::new(args.seed);
    let mask = match &args.mask {
        Some(p) => mask_from_str(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        None => make_cartesian_mask(w, args.acc, args.center_fraction, &mut rng)?,
    };
    let op = ForwardOp::masked_dft(h, w, mask.clone())?;
    let y = add_noise(&op.apply(&clean)?, sigma, &mut rng)?;
    let zf = op.adjoint(&y)?;
    let (x, trace) = args
        .solver
        .run(&model, &op, y.as_slice(), Some(&clean), false)?;

    let mut files = Vec::new();
    if let Some(p) = &args.output {
        files.push((
            p.as_path(),
            mmrsafi::io::pgm_encode(&x.map(|v| v.clamp(0.0, 1.0)), 65535)?,
        ));
    }
    if let Some(p) = &args.zero_fill {
        files.push((
            p.as_path(),
            mmrsafi::io::pgm_encode(&zf.map(|v| v.clamp(0.0, 1.0)), 65535)?,
        ));
    }
    if let Some(p) = &args.trace {
        files.push((p.as_path(), trace_csv(&trace).into_bytes()));
    }
    if let Some(p) = &args.mask_out {
        files.push((p.as_path(), mask_to_string(&mask).into_bytes()));
    }
    println!(
        "zero-fill psnr {:.3} dB, reconstruction psnr {:.3} dB, {} outer steps",
        psnr(&clean, &zf)?,
        psnr(&clean, &x)?,
        trace.steps.len()
    );
    write_outputs(files)
}

fn prox_check(args: &ProxCheckArgs) -> Result<()> {
    ensure!(args.instances > 0, "need at least one instance");
    let mut rng = Rng::new(args.seed);
    let bank = FilterBank::<f64>::forward_differences();
    let (h, w) = (8, 8);
    let gammas = [0.05, 0.3, 1.0];
    let sets = [
        ConstraintSet::AllSpace,
        ConstraintSet::Box {
            lower: 0.0,
            upper: 1.0,
        },
    ];
    let admm = AdmmConfig {
        iters: 400_000,
        ..AdmmConfig::default()
    };
    let prox = ProxConfig {
        max_iter: 200_000,
        epsilon: 1e-13,
        alpha: None,
    };
    let mut worst = 0.0f64;
    let mut worst_kkt = 0.0f64;
    for i in 0..args.instances {
        let gamma = gammas[i % 3];
        let set = sets[(i / 3) % 2];
        let weights = ChannelStack::from_vec(
            2,
            h,
            w,
            (0..2 * h * w).map(|_| rng.next_uniform()).collect(),
        )?;
        let z = Image::gaussian(h, w, 1.0, &mut rng).add_scaled(1.0, &Image::filled(h, w, 0.5));
        let mut dense = dense_bank_matrix(&bank, h, w);
        for (r, &lam) in weights.as_slice().iter().enumerate() {
            for c in 0..dense.cols() {
                dense.set(r, c, lam * dense.get(r, c));
            }
        }
        let oracle = admm_prox_oracle(z.as_slice(), &dense, gamma, &set, &admm)?;
        ensure!(
            oracle.kkt_residual < 1e-8,
            "oracle KKT residual {:.2e} on instance {i}",
            oracle.kkt_residual
        );
        worst_kkt = worst_kkt.max(oracle.kkt_residual);
        let l = WeightedAnalysisOperator::new(&bank, weights)?;
        let out = prox_weighted_l1(&z, &l, gamma, &set, &prox, None)?;
        let dev = out
            .x
            .as_slice()
            .iter()
            .zip(&oracle.x)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        worst = worst.max(dev);
    }
    println!("instances {}", args.instances);
    println!("max oracle kkt residual {worst_kkt:.3e}");
    println!("max deviation {worst:.3e}");
    ensure!(worst < 1e-6, "deviation {worst:.3e} exceeds 1e-6");
    Ok(())
}

fn make_phantom(args: &PhantomArgs) -> Result<()> {
    ensure!(
        args.maxval == 255 || args.maxval == 65535,
        "maxval must be 255 or 65535"
    );
    pgm_write(&args.output, &phantom::<f64>(), args.maxval)
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Denoise(a) => denoise(a),
        Command::Mri(a) => mri(a),
        Command::ProxCheck(a) => prox_check(a),
        Command::ObjectiveTrace(a) => objective_trace(a),
        Command::MakePhantom(a) => make_phantom(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
