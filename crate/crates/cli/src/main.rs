//! `wr2l` command-line tool.
//!
//! Exit status: 0 on success, 2 for configuration errors, 1 for failures at
//! run time.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;

use wr2l::config::RunConfig;
use wr2l::harness::{evaluate_grid, EvalGrid, EvalMeta};
use wr2l::policy::Checkpoint;
use wr2l::robust::{estimate_reference_hessian, train_with_callback, CsvSink, HessianConfig, TrainReport};
use wr2l::selftest::{production_minimizer, run_selftest};
use wr2l::zo::HessianEstimate;

const DEFAULT_OUT: &str = "wr2l-out";

#[derive(Parser)]
#[command(name = "wr2l", version, about = "Wasserstein-robust policy training")]
struct Cli {
    /// Worker threads; defaults to the number of logical cores. `--jobs 1`
    /// gives bitwise-reproducible runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `io.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `io.out_dir`.
    #[arg(long, env = "WR2L_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a robust policy and write its report and checkpoints.
    Train(RunArgs),
    /// Estimate and cache the Wasserstein Hessian at the reference dynamics.
    EstimateHessian(RunArgs),
    /// Evaluate a policy checkpoint over a grid of dynamics.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// File name of the CSV written in the output directory.
        #[arg(long, default_value = "eval.csv")]
        name: String,
    },
    /// Run the built-in oracle checks.
    Selftest {
        /// Reduced budgets.
        #[arg(long)]
        quick: bool,
        /// Flip the sign of the closed-form step (the KKT check must fail).
        #[arg(long, hide = true)]
        mutate_closed_form: bool,
    },
}

/// Errors split by exit status.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<wr2l::Error>() {
            Some(wr2l::Error::Config(_)) => Failure::Config(e),
            _ => Failure::Runtime(e),
        }
    }
}

impl From<wr2l::Error> for Failure {
    fn from(e: wr2l::Error) -> Self {
        Failure::from(anyhow::Error::from(e))
    }
}

type Outcome = Result<(), Failure>;

struct Prepared {
    cfg: RunConfig,
    out: PathBuf,
}

fn prepare(args: &RunArgs) -> Result<Prepared, Failure> {
    let mut cfg = RunConfig::load(&args.config)
        .map_err(|e| match e {
            wr2l::Error::Io(io) => Failure::Config(anyhow!("cannot read {}: {io}", args.config.display())),
            other => Failure::Config(other.into()),
        })?;
    if let Some(seed) = args.seed {
        cfg.io.seed = seed;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.io.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    cfg.io.out_dir = Some(out.clone());
    fs::create_dir_all(&out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
        .map_err(Failure::Runtime)?;
    let resolved = cfg.to_toml_string()?;
    fs::write(out.join("config.resolved.toml"), resolved)
        .context("cannot write resolved config")
        .map_err(Failure::Runtime)?;
    Ok(Prepared { cfg, out })
}

fn load_or_estimate_hessian(cfg: &RunConfig, hcfg: &HessianConfig, out: &Path) -> anyhow::Result<HessianEstimate> {
    if let Some(path) = &cfg.io.hessian_cache {
        if path.exists() {
            let h = HessianEstimate::load(path).with_context(|| {
                format!(
                    "cannot use Hessian cache {}; delete it or rerun `estimate-hessian` to re-estimate",
                    path.display()
                )
            })?;
            log::info!("loaded Hessian from {}", path.display());
            return Ok(h);
        }
    }
    let (_, h) = estimate_reference_hessian(&cfg.env, hcfg, cfg.io.seed)?;
    h.save(&out.join("hessian.bin"))?;
    if let Some(path) = &cfg.io.hessian_cache {
        h.save(path)?;
    }
    Ok(h)
}

fn cmd_train(args: &RunArgs) -> Outcome {
    let Prepared { cfg, out } = prepare(args)?;
    let w = cfg.wr2l()?.clone();
    let phi0 = cfg.env.reference_params()?;
    let h0 = if w.epsilon > 0.0 {
        load_or_estimate_hessian(&cfg, &w.hessian, &out)?
    } else {
        // The ball is a single point; the metric does not matter.
        HessianEstimate::exact(DMatrix::identity(phi0.dim(), phi0.dim()))?
    };
    let report_path = out.join("train_report.csv");
    let mut sink = CsvSink::create(
        &report_path,
        &TrainReport::new(phi0.names().to_vec(), w.epsilon, cfg.io.seed),
    )?;
    let result = train_with_callback(&cfg.env, &w, &h0, cfg.io.seed, &mut |r| {
        log::info!(
            "k={} return={:.2} constraint={:.3e} entropy={:.3}",
            r.k,
            r.return_mean,
            r.constraint,
            r.entropy
        );
        sink.push(r)
    });
    let outcome = result.with_context(|| format!("training failed; partial report in {}", report_path.display()))?;
    Checkpoint::new(outcome.learner.policy.clone(), outcome.learner.critic.clone()).save(&out.join("policy.ckpt"))?;
    let phi_lines: String = outcome
        .phi
        .names()
        .iter()
        .zip(outcome.phi.values())
        .map(|(n, v)| format!("{n} = {v}\n"))
        .collect();
    fs::write(out.join("phi.toml"), phi_lines).map_err(anyhow::Error::from)?;
    let meta = format!("seed = {}\nepsilon = {}\n", cfg.io.seed, w.epsilon);
    fs::write(out.join("train_report.meta.toml"), meta).map_err(anyhow::Error::from)?;
    println!(
        "trained {} iterations (epsilon = {}, seed = {}); worst-case phi = {:?}; output in {}",
        outcome.report.records.len(),
        w.epsilon,
        cfg.io.seed,
        outcome.phi.values(),
        out.display()
    );
    Ok(())
}

fn cmd_estimate_hessian(args: &RunArgs) -> Outcome {
    let Prepared { cfg, out } = prepare(args)?;
    let hcfg = cfg.wr2l.as_ref().map(|w| w.hessian.clone()).unwrap_or_default();
    let (bucket, h) = estimate_reference_hessian(&cfg.env, &hcfg, cfg.io.seed)?;
    let path = cfg.io.hessian_cache.clone().unwrap_or_else(|| out.join("hessian.bin"));
    h.save(&path)?;
    bucket.save_csv(&out.join("bucket.csv"), cfg.io.seed)?;
    let eig = h.eigenvalues();
    println!("H0 ({}x{}), {} evaluations, sigma = {}", h.dim(), h.dim(), h.n_used, h.sigma);
    println!(
        "eigenvalues: min {:.6e}, max {:.6e}, floor {:.3e}{}",
        eig.first().copied().unwrap_or(f64::NAN),
        eig.last().copied().unwrap_or(f64::NAN),
        h.min_eig_floor,
        if h.regularized { " (applied)" } else { "" }
    );
    println!("spectrum: {eig:?}");
    println!("written to {}", path.display());
    Ok(())
}

fn checkpoint_id(path: &Path, bytes: &[u8]) -> String {
    // The trailing bytes of a checkpoint are its SHA-256 digest.
    let tail = &bytes[bytes.len().saturating_sub(8)..];
    let hex: String = tail.iter().map(|b| format!("{b:02x}")).collect();
    format!("{}#{hex}", path.display())
}

fn cmd_eval(args: &RunArgs, checkpoint: &Path, name: &str) -> Outcome {
    let Prepared { cfg, out } = prepare(args)?;
    let grid = EvalGrid::from_spec(&cfg.eval_spec(), &cfg.env, cfg.io.seed)?;
    let bytes = fs::read(checkpoint)
        .with_context(|| format!("cannot read checkpoint {}", checkpoint.display()))
        .map_err(Failure::Runtime)?;
    let ckpt = Checkpoint::from_bytes(&bytes).with_context(|| format!("loading {}", checkpoint.display()))?;
    let spec = cfg.env.spec()?;
    if ckpt.policy.state_dim() != spec.state_dim {
        return Err(Failure::Runtime(anyhow!(
            "checkpoint expects {}-dimensional states, environment has {}",
            ckpt.policy.state_dim(),
            spec.state_dim
        )));
    }
    let mut report = evaluate_grid(&ckpt.policy, &cfg.env, &grid, cfg.io.seed)?;
    report.meta = EvalMeta {
        checkpoint: checkpoint_id(checkpoint, &bytes),
        seed: cfg.io.seed,
        epsilon: cfg.wr2l.as_ref().map(|w| w.epsilon),
    };
    let csv = out.join(name);
    report.write_csv(&csv)?;
    let meta = format!(
        "checkpoint = {:?}\nseed = {}\n{}",
        report.meta.checkpoint,
        report.meta.seed,
        report.meta.epsilon.map(|e| format!("epsilon = {e}\n")).unwrap_or_default()
    );
    fs::write(csv.with_extension("meta.toml"), meta).map_err(anyhow::Error::from)?;
    println!(
        "{} points, worst-case return {:.2}, {} failed; written to {}",
        report.rows.len(),
        report.worst_case(),
        report.failed_points(),
        csv.display()
    );
    Ok(())
}

fn cmd_selftest(quick: bool, mutate: bool) -> Outcome {
    let flipped = |g: &[f64], h: &DMatrix<f64>, phi0: &[f64], eps: f64| {
        production_minimizer(g, h, phi0, eps).map(|p| p.iter().zip(phi0).map(|(x, c)| 2.0 * c - x).collect())
    };
    let results = if mutate {
        run_selftest(quick, &flipped)
    } else {
        run_selftest(quick, &production_minimizer)
    };
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        println!(
            "{:<width$}  {}  {}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::Runtime(anyhow!("{failed} of {} checks failed", results.len())));
    }
    println!("all {} checks passed", results.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot set up {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::EstimateHessian(args) => cmd_estimate_hessian(args),
        Command::Eval { run, checkpoint, name } => cmd_eval(run, checkpoint, name),
        Command::Selftest {
            quick,
            mutate_closed_form,
        } => cmd_selftest(*quick, *mutate_closed_form),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("configuration error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
