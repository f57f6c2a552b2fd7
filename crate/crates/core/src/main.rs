use clap::{Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use koopman_bounds::bounds::{bound, AlphaMode, BoundConfig, Theorem};
use koopman_bounds::linalg::DomainBox;
use koopman_bounds::mc::{gram, random_affine_tuples, McConfig, ParamTuple};
use koopman_bounds::network::NetworkSpec;
use koopman_bounds::suite::{run_suite, Suite};
use koopman_bounds::train::{self, Experiment, TrainConfig, TrainLog};
use koopman_bounds::{rng, Error, Result};

#[derive(Parser)]
#[command(name = "koopman-bounds", version, about = "Koopman-operator generalization bounds for deep networks")]
struct Cli {
    /// More log output on stderr (-v warn, -vv info, -vvv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremArg {
    Thm1,
    Thm2,
    Thm3,
    Thm4,
    Cnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlphaArg {
    Conservative,
    Estimate,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Lemmas,
    Gram,
    Rademacher,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a bound for a network file and write the report as JSON.
    Bound {
        /// Network file (JSON).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_enum, default_value = "thm4")]
        theorem: TheoremArg,
        /// Training sample size S.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Determinant-factor cap D; unconstrained when omitted.
        #[arg(long)]
        cap: Option<f64>,
        #[arg(long, value_enum, default_value = "conservative")]
        alpha: AlphaArg,
        /// Monte-Carlo samples for α and ‖v‖.
        #[arg(long, default_value_t = BoundConfig::DEFAULT_MC_SAMPLES)]
        mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the report.
        #[arg(long, default_value = "bound_report.json")]
        report: PathBuf,
    },
    /// Run the Monte-Carlo property suites.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Train an experiment and write per-epoch CSV logs.
    Train {
        /// Config file with a `train` section.
        #[arg(long)]
        config: PathBuf,
        /// Independent runs; run k uses seeds offset by k.
        #[arg(long, default_value_t = 1)]
        runs: usize,
        /// Output directory for the CSV files.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override a `train` field, e.g. `--set epochs=10`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Dump the Gram matrix of a network over random affine parameter tuples.
    Kernel {
        /// Template network file (square dense layers).
        #[arg(long)]
        spec: PathBuf,
        /// Number of random affine tuples.
        #[arg(long, default_value_t = 8)]
        tuples: usize,
        /// Read the tuples from a JSON file instead of drawing them.
        #[arg(long, conflicts_with = "tuples")]
        tuples_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Monte-Carlo samples per stream.
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value = "gram.csv")]
        out: PathBuf,
    },
}

/// 1 for domain and verification failures, 2 for bad input.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Parameter(_)
        | Error::Dimension(_)
        | Error::NonFinite(_) => 2,
        _ => 1,
    }
}

fn load_spec(path: &Path) -> Result<NetworkSpec> {
    if !path.exists() {
        return Err(Error::Config(format!("{}: no such file", path.display())));
    }
    NetworkSpec::load(path)
}

fn cmd_bound(
    spec: &Path,
    theorem: TheoremArg,
    samples: usize,
    cap: Option<f64>,
    alpha: AlphaArg,
    mc_samples: usize,
    seed: u64,
    report: &Path,
) -> Result<()> {
    let net = load_spec(spec)?;
    let theorem = match theorem {
        TheoremArg::Thm1 => Theorem::Thm1,
        TheoremArg::Thm2 => Theorem::Thm2,
        TheoremArg::Thm3 => Theorem::Thm3,
        TheoremArg::Thm4 => Theorem::Thm4,
        TheoremArg::Cnn => Theorem::CnnProp,
    };
    let mut cfg = BoundConfig::new(samples).with_seed(seed).with_mc_samples(mc_samples).with_alpha(match alpha {
        AlphaArg::Conservative => AlphaMode::Conservative,
        AlphaArg::Estimate => AlphaMode::Estimate,
    });
    if let Some(d) = cap {
        cfg = cfg.with_cap(d);
    }
    println!("seed = {seed}");
    let r = bound(&net, theorem, &cfg)?;
    fs::write(report, r.to_json()?)?;
    println!("{r}");
    Ok(())
}

fn cmd_verify(suite: SuiteArg, seed: u64, report: Option<&Path>) -> Result<bool> {
    let suite = match suite {
        SuiteArg::Lemmas => Suite::Lemmas,
        SuiteArg::Gram => Suite::Gram,
        SuiteArg::Rademacher => Suite::Rademacher,
        SuiteArg::All => Suite::All,
    };
    println!("seed = {seed}");
    let r = run_suite(suite, seed)?;
    if let Some(path) = report {
        fs::write(path, r.to_json()?)?;
    }
    println!("{r}");
    Ok(r.passed())
}

/// Applies `key=value` pairs to the `train` section; values are read as
/// JSON, falling back to a string.
fn apply_overrides(text: &str, overrides: &[String]) -> Result<String> {
    let mut doc: serde_json::Value = serde_json::from_str(text)?;
    let section = doc
        .get_mut("train")
        .and_then(|s| s.as_object_mut())
        .ok_or_else(|| Error::Config("missing `train` section".into()))?;
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::Config(format!("override `{o}` is not KEY=VALUE")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.to_string()));
        section.insert(k.trim().to_string(), value);
    }
    Ok(doc.to_string())
}

fn write_partial(log: &TrainLog, path: &Path) {
    if !log.rows.is_empty() {
        if let Err(e) = train::emit_plot_data(log, path) {
            log::error!("could not flush {}: {e}", path.display());
        }
    }
}

fn cmd_train(config: &Path, runs: usize, out: &Path, overrides: &[String]) -> Result<()> {
    if !config.exists() {
        return Err(Error::Config(format!("{}: no such file", config.display())));
    }
    let cfg = TrainConfig::from_json(&apply_overrides(&fs::read_to_string(config)?, overrides)?)?;
    if runs == 0 {
        return Err(Error::Config("--runs must be at least 1".into()));
    }
    fs::create_dir_all(out)?;
    match cfg.experiment {
        Experiment::SyntheticRegression => {
            let paths = train::run_paths(&out.join("synthetic.csv"), runs);
            let mut rhos = Vec::new();
            for (k, path) in paths.iter().enumerate() {
                let c = cfg.for_run(k);
                println!("run {k}: data_seed = {}, init_seed = {}", c.data_seed, c.init_seed);
                let mut log = TrainLog::default();
                let res = train::run_synthetic_into(&c, &mut log);
                write_partial(&log, path);
                res?;
                let last = log.last().expect("epoch 0 is always logged");
                let rho = train::spearman(&log.column(|r| r.gap), &log.column(|r| r.regularizer));
                println!(
                    "  epoch {}: train {:.6} test {:.6} gap {:.6} r {:.6} bound {:.6}  -> {}",
                    last.epoch,
                    last.train_loss,
                    last.test_loss,
                    last.gap,
                    last.regularizer,
                    last.bound,
                    path.display()
                );
                println!("  spearman(gap, r) = {rho:.4}");
                rhos.push(rho);
            }
            let hits = rhos.iter().filter(|r| **r >= 0.5).count();
            println!("spearman >= 0.5 in {hits} of {runs} runs");
        }
        Experiment::DenseClassifier => {
            for k in 0..runs {
                let c = cfg.for_run(k);
                println!("run {k}: data_seed = {}, init_seed = {}", c.data_seed, c.init_seed);
                let control = TrainConfig { regularizer_weight: 0.0, ..c.clone() };
                for (arm, c) in [("regularized", &c), ("control", &control)] {
                    let path = out.join(format!("classifier_{arm}_{k}.csv"));
                    let mut log = TrainLog::default();
                    let res = train::run_dense_classifier_into(c, &mut log);
                    write_partial(&log, &path);
                    res?;
                    let (first, last) = (log.rows[0], *log.last().expect("logged"));
                    println!(
                        "  {arm:<11} λ = {}: test accuracy {:.4}, r1+r2+r3 {:.4} -> {:.4}  -> {}",
                        c.regularizer_weight,
                        last.test_accuracy.unwrap_or(f64::NAN),
                        first.regularizer,
                        last.regularizer,
                        path.display()
                    );
                }
            }
        }
    }
    Ok(())
}

fn cmd_kernel(
    spec: &Path,
    tuples: usize,
    tuples_file: Option<&Path>,
    seed: u64,
    samples: usize,
    out: &Path,
) -> Result<bool> {
    let template = load_spec(spec)?;
    let params: Vec<ParamTuple> = match tuples_file {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => random_affine_tuples(
            tuples,
            template.input_dim(),
            template.depth(),
            0.25,
            rng::stream_seed(seed, "cli/kernel"),
        ),
    };
    if params.is_empty() {
        return Err(Error::Config("need at least one tuple".into()));
    }
    println!("seed = {seed}");
    let duplicates = (0..params.len()).any(|i| (0..i).any(|j| params[i] == params[j]));
    let domain: DomainBox = template.input_domain.clone();
    let g = gram(&template, &params, &McConfig::uniform(samples, seed, domain))?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["i", "j", "re", "im", "stderr"])?;
    for i in 0..g.len() {
        for j in 0..g.len() {
            let z = g.entries[i][j];
            w.write_record([
                i.to_string(),
                j.to_string(),
                format!("{:.16e}", z.re),
                format!("{:.16e}", z.im),
                format!("{:.16e}", g.stderr[i][j]),
            ])?;
        }
    }
    w.flush()?;
    let (trace, min_eig) = (g.trace(), g.min_eigenvalue()?);
    let floor = -1e-3 * trace;
    if duplicates || min_eig.abs() <= 1e-6 * trace {
        log::warn!("Gram matrix is near-singular; are some tuples duplicates?");
        println!("warning: near-singular Gram matrix (min eigenvalue {min_eig:.3e})");
    }
    let ok = min_eig >= floor;
    println!("n = {}, trace = {trace:.6}, min eigenvalue = {min_eig:.6e}, floor = {floor:.3e}", g.len());
    println!("Hermitian asymmetry = {:.3} stderr", g.max_asymmetry_z);
    println!("PSD verdict: {}  -> {}", if ok { "pass" } else { "FAIL" }, out.display());
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "error",
        1 => "warn",
        2 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let outcome = match &cli.command {
        Command::Bound { spec, theorem, samples, cap, alpha, mc_samples, seed, report } => {
            cmd_bound(spec, *theorem, *samples, *cap, *alpha, *mc_samples, *seed, report).map(|_| true)
        }
        Command::Verify { suite, seed, report } => cmd_verify(*suite, *seed, report.as_deref()),
        Command::Train { config, runs, out, overrides } => cmd_train(config, *runs, out, overrides).map(|_| true),
        Command::Kernel { spec, tuples, tuples_file, seed, samples, out } => {
            cmd_kernel(spec, *tuples, tuples_file.as_deref(), *seed, *samples, out)
        }
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
