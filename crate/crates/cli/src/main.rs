use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use phaselift_frames::bench::{run_linearity_sweep, run_stability_experiment, EnsembleChoice, ExperimentConfig};
use phaselift_frames::completeness::{discrimination_oracle, kernel_spectral_check, structural_checks};
use phaselift_frames::frames::{balanced_ensemble, example_n4, thm1_ensemble, thm2_ensemble};
use phaselift_frames::measurement::{
    kernel_basis_numeric, kernel_basis_structural, outcomes_from_json, outcomes_to_json, read_outcomes_csv,
    write_outcomes_csv, KERNEL_REL_TOL,
};
use phaselift_frames::recovery::{recover_noiseless_unchecked, recover_noisy, SolverOptions};
use phaselift_frames::{HermitianMatrix, MeasurementEnsemble, MeasurementOperator, NodeList, Recipe};

const OUTPUT_DIR_ENV: &str = "PHASELIFT_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "phaselift", version, about = "Measurement frames and PSD recovery for phase retrieval")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Solver or sampling tolerance; each command has its own default.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Output file (gen, measure, recover) or directory (bench).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecipeArg {
    Thm1,
    Thm2,
    ExampleN4,
    Fig1,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchEnsemble {
    Fig1,
    Thm1,
}

#[derive(Subcommand)]
enum Command {
    /// Build a measurement ensemble and write it as JSON.
    Gen {
        #[arg(long, value_enum)]
        recipe: RecipeArg,
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        r: usize,
        /// Comma-separated nodes; defaults depend on the recipe.
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<f64>>,
    },
    /// Apply an ensemble to a signal vector or a Hermitian matrix.
    Measure {
        #[arg(long)]
        ensemble: PathBuf,
        /// JSON array of [re, im] pairs.
        #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
        signal: Option<PathBuf>,
        /// JSON array of rows, each an array of [re, im] pairs.
        #[arg(long)]
        matrix: Option<PathBuf>,
    },
    /// Recover a PSD matrix from measured outcomes.
    Recover {
        #[arg(long)]
        ensemble: PathBuf,
        /// Outcome file, CSV or JSON.
        #[arg(long)]
        outcomes: PathBuf,
        /// Least squares over the PSD cone instead of exact feasibility.
        #[arg(long)]
        noisy: bool,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Exit 1 if the solver did not converge.
        #[arg(long)]
        strict: bool,
    },
    /// Check that an ensemble is complete for its rank.
    Certify {
        #[arg(long)]
        ensemble: PathBuf,
        /// Also sample this many kernel elements.
        #[arg(long)]
        sampled: Option<usize>,
        /// Also test this many random PSD pairs for distinct outcomes.
        #[arg(long)]
        oracle: Option<usize>,
    },
    /// Reproducible stability experiments.
    Bench {
        #[command(subcommand)]
        kind: BenchKind,
    },
}

#[derive(clap::Args, Clone)]
struct BenchArgs {
    /// Experiment config as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    ensemble: Option<BenchEnsemble>,
    #[arg(long)]
    stability_samples: Option<usize>,
}

#[derive(Subcommand)]
enum BenchKind {
    /// Worst-case error ratio per dimension.
    Stability {
        #[command(flatten)]
        args: BenchArgs,
    },
    /// Worst-case error ratio across noise levels.
    Linearity {
        #[command(flatten)]
        args: BenchArgs,
        #[arg(long, value_delimiter = ',', default_value = "1e-2,1e-3,1e-4")]
        epsilons: Vec<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Gen { recipe, n, r, nodes } => {
            let e = generate(*recipe, *n, *r, nodes.clone())?;
            emit(cli.output.as_deref(), &e.to_json()?)?;
        }
        Command::Measure { ensemble, signal, matrix } => {
            let m = load_operator(ensemble)?;
            let x = match (signal, matrix) {
                (Some(p), _) => {
                    let v = read_signal(p)?;
                    if v.len() != m.n() {
                        bail!("signal has length {}, ensemble acts on C^{}", v.len(), m.n());
                    }
                    HermitianMatrix::outer(&v)
                }
                (None, Some(p)) => read_matrix(p, m.n())?,
                (None, None) => bail!("give --signal or --matrix"),
            };
            let b = m.apply(&x)?;
            let text = match cli.format {
                Format::Json => outcomes_to_json(&b)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_outcomes_csv(&mut buf, &b)?;
                    String::from_utf8(buf)?
                }
            };
            emit(cli.output.as_deref(), &text)?;
        }
        Command::Recover {
            ensemble,
            outcomes,
            noisy,
            max_iters,
            strict,
        } => {
            let m = load_operator(ensemble)?;
            let b = read_outcomes(outcomes)?;
            let mut opts = if *noisy {
                SolverOptions::noisy()
            } else {
                SolverOptions::noiseless()
            };
            if let Some(t) = cli.tol {
                opts.tol = t;
            }
            if let Some(k) = max_iters {
                opts.max_iters = *k;
            }
            let res = if *noisy {
                recover_noisy(&m, &b, &opts)?
            } else {
                recover_noiseless_unchecked(&m, &b, &opts)?
            };
            emit(cli.output.as_deref(), &serde_json::to_string_pretty(&res)?)?;
            if !res.converged {
                eprintln!(
                    "not converged after {} iterations (stationarity {:e})",
                    res.iterations, res.stationarity
                );
                if *strict {
                    return Ok(ExitCode::from(1));
                }
            }
        }
        Command::Certify { ensemble, sampled, oracle } => {
            let e = MeasurementEnsemble::read_json(ensemble)?;
            let tol = cli.tol.unwrap_or(1e-8);
            let mut certs = vec![structural_checks(&e)];
            let mut ok = certs[0].passed();
            if let Some(trials) = sampled {
                let k = match kernel_basis_structural(&e, cli.seed) {
                    Ok(k) => k,
                    Err(_) => kernel_basis_numeric(&MeasurementOperator::new(e.clone())?, KERNEL_REL_TOL)?,
                };
                match kernel_spectral_check(&k, e.r(), *trials, cli.seed, tol) {
                    Ok(c) => certs.push(c),
                    Err(err) => {
                        println!("sampled: FAIL {err}");
                        ok = false;
                    }
                }
            }
            if let Some(trials) = oracle {
                let m = MeasurementOperator::new(e.clone())?;
                let c = discrimination_oracle(&m, e.r(), *trials, cli.seed, 1e-6)?;
                ok &= c.passed();
                certs.push(c);
            }
            for c in &certs {
                print!("{}", c.summary());
            }
            if let Some(path) = &cli.output {
                let all: Vec<serde_json::Value> =
                    certs.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?;
                fs::write(path, serde_json::to_string_pretty(&all)?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Bench { kind } => return bench(cli, kind),
    }
    Ok(ExitCode::SUCCESS)
}

fn generate(recipe: RecipeArg, n: usize, r: usize, nodes: Option<Vec<f64>>) -> Result<MeasurementEnsemble> {
    let e = match recipe {
        RecipeArg::Thm1 => {
            let nodes = match nodes {
                Some(v) => NodeList::new(v)?,
                None => NodeList::tangent(n),
            };
            thm1_ensemble(n, &nodes)?
        }
        RecipeArg::Thm2 => {
            let nodes = match nodes {
                Some(v) => NodeList::new(v)?,
                None => NodeList::evenly_spaced(r),
            };
            thm2_ensemble(n, r, &nodes)?
        }
        RecipeArg::ExampleN4 => example_n4(),
        RecipeArg::Fig1 => balanced_ensemble(n)?,
    };
    Ok(e)
}

fn bench(cli: &Cli, kind: &BenchKind) -> Result<ExitCode> {
    let args = match kind {
        BenchKind::Stability { args } | BenchKind::Linearity { args, .. } => args,
    };
    let mut cfg = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    cfg.seed = cli.seed;
    if let Some(v) = &args.n {
        cfg.n_values = v.clone();
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    if let Some(e) = args.ensemble {
        cfg.ensemble = match e {
            BenchEnsemble::Fig1 => EnsembleChoice::Fig1,
            BenchEnsemble::Thm1 => EnsembleChoice::Thm1,
        };
    }
    if let Some(s) = args.stability_samples {
        cfg.stability_samples = s;
    }
    if let Some(t) = cli.tol {
        cfg.solver.tol = t;
    }
    let dir = cli
        .output
        .clone()
        .or_else(|| cfg.output.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    cfg.output = None;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    match kind {
        BenchKind::Stability { .. } => {
            let rep = run_stability_experiment(&cfg)?;
            rep.write_summary_csv(create(&dir.join("summary.csv"))?)?;
            rep.write_trials_csv(create(&dir.join("trials.csv"))?)?;
            rep.write_plot_data(create(&dir.join("plot.dat"))?)?;
            fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&rep.meta)?)?;
            let trend = rep.trend();
            for row in &rep.rows {
                println!("n={:<3} max_ratio={:.4} mean_ratio={:.4}", row.n, row.max_ratio, row.mean_ratio);
            }
            println!(
                "trend: {} increases, {} decreases, monotone={}",
                trend.increases, trend.decreases, trend.monotone
            );
        }
        BenchKind::Linearity { epsilons, .. } => {
            let rep = run_linearity_sweep(&cfg, epsilons)?;
            rep.write_csv(create(&dir.join("linearity.csv"))?)?;
            rep.write_plot_data(create(&dir.join("linearity.dat"))?)?;
            fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&rep.meta)?)?;
            for row in &rep.rows {
                println!("n={:<3} eps={:e} max_ratio={:.4}", row.n, row.epsilon, row.max_ratio);
            }
            println!("within factor two: {}", rep.within_factor_two);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn load_operator(path: &Path) -> Result<MeasurementOperator> {
    let e = MeasurementEnsemble::read_json(path).with_context(|| format!("reading ensemble {}", path.display()))?;
    if let Recipe::Custom {} = e.recipe() {
        eprintln!("note: custom ensemble, no completeness guarantee");
    }
    Ok(MeasurementOperator::new(e)?)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_signal(path: &Path) -> Result<Vec<Complex64>> {
    let pairs: Vec<[f64; 2]> = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("{}: expected an array of [re, im] pairs", path.display()))?;
    Ok(pairs.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
}

fn read_matrix(path: &Path, n: usize) -> Result<HermitianMatrix> {
    let rows: Vec<Vec<[f64; 2]>> = serde_json::from_str(&read_text(path)?)
        .with_context(|| format!("{}: expected rows of [re, im] pairs", path.display()))?;
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        bail!("{}: matrix must be {n}x{n}", path.display());
    }
    let entries = rows.into_iter().flatten().map(|[re, im]| Complex64::new(re, im)).collect();
    Ok(HermitianMatrix::from_entries(n, entries, 1e-9)?)
}

fn read_outcomes(path: &Path) -> Result<Vec<f64>> {
    let text = read_text(path)?;
    let b = if text.trim_start().starts_with('[') {
        outcomes_from_json(&text)?
    } else {
        read_outcomes_csv(text.as_bytes())?
    };
    Ok(b)
}
