use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use bmo_lab::carleson::{carleson_alpha_norm, from_martingale, random_measure, CarlesonMeasure, MeasureDocument};
use bmo_lab::norms::{
    bmo_alpha_norm, bmo_alpha_p_norm, bmo_alpha_p_norm_subsets, process_bmo_alpha_norm_with_witness,
};
use bmo_lab::process::{random_adapted, random_martingale, ProcessDocument};
use bmo_lab::verify::{campaign_csv, run_campaign, run_suite, CampaignConfig, Suite, TreeFamily};
use bmo_lab::{
    build_dyadic, build_random, parse_json, AdaptedProcess, Alpha, Error, FiltrationTree, Martingale, Mode,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Exact BMO^alpha and alpha-Carleson norms on finite filtrations.
#[derive(Parser)]
#[command(name = "bmo-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a tree/v1 document.
    GenTree {
        kind: TreeKind,
        #[arg(long)]
        depth: usize,
        /// Maximum number of children per atom (random trees).
        #[arg(long, default_value_t = 2)]
        branch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random martingale (or adapted process) as process/v1.
    GenMartingale {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Draw an arbitrary adapted process instead of a martingale.
        #[arg(long)]
        adapted: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a random nonnegative measure as measure/v1.
    GenMeasure {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BMO^alpha norm of a process/v1 file.
    Norm {
        input: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "atom-fast")]
        mode: Mode,
        /// Exponent of the oscillation (p-variant); 2 is the standard norm.
        #[arg(long)]
        p: Option<f64>,
        /// Accept an adapted process and use g_{n-1} as the centering.
        #[arg(long)]
        adapted: bool,
    },
    /// alpha-Carleson norm of a measure/v1 file or of the measure of a martingale.
    CarlesonNorm {
        input: Option<PathBuf>,
        /// Tree for a measure document without a tree field.
        #[arg(long)]
        tree: Option<PathBuf>,
        /// Use mu_k = |d_k f|^2 for the martingale in this process/v1 file.
        #[arg(long, conflicts_with = "input")]
        from_martingale: Option<PathBuf>,
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "node-fast")]
        mode: Mode,
    },
    /// Run a verification suite.
    Check(CheckArgs),
    /// Grid over alpha, p and depth; one CSV row per (alpha, p, depth, trial).
    Campaign {
        #[arg(long, value_delimiter = ',', required = true)]
        alphas: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        depths: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        ps: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        branch: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tol: TolArgs,
    },
    /// Time fast scans against brute force on dyadic trees.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 0.25)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeKind {
    Dyadic,
    Random,
}

#[derive(Args)]
struct CheckArgs {
    suite: String,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    ps: Option<Vec<f64>>,
    /// Maximum depth (exact depth for dyadic trees).
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    branch: Option<usize>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    max_stopping_times: Option<u128>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Omit the wall-clock field so reruns are byte-identical.
    #[arg(long)]
    comparison: bool,
    #[command(flatten)]
    tol: TolArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Dyadic,
    Random,
}

#[derive(Args)]
struct TolArgs {
    #[arg(long)]
    identity_tol: Option<f64>,
    #[arg(long)]
    agreement_tol: Option<f64>,
    #[arg(long)]
    reeval_tol: Option<f64>,
    #[arg(long)]
    slack: Option<f64>,
}

impl TolArgs {
    fn apply(&self, t: &mut bmo_lab::verify::Tolerances) {
        if let Some(v) = self.identity_tol {
            t.identity = v;
        }
        if let Some(v) = self.agreement_tol {
            t.mode_agreement = v;
        }
        if let Some(v) = self.reeval_tol {
            t.reeval = v;
        }
        if let Some(v) = self.slack {
            t.inequality_slack = v;
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
            Ok(())
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn base_dir(path: &Path) -> Option<&Path> {
    path.parent().filter(|p| !p.as_os_str().is_empty())
}

fn load_tree(path: &Path) -> Result<Arc<FiltrationTree>> {
    let tree = FiltrationTree::from_json(&read(path)?).with_context(|| path.display().to_string())?;
    Ok(Arc::new(tree))
}

fn load_process(path: &Path) -> Result<AdaptedProcess> {
    let doc: ProcessDocument = parse_json(&read(path)?).with_context(|| path.display().to_string())?;
    AdaptedProcess::from_document(&doc, base_dir(path)).with_context(|| path.display().to_string())
}

fn load_martingale(path: &Path) -> Result<Martingale> {
    Martingale::new(load_process(path)?).with_context(|| path.display().to_string())
}

fn pretty<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

/// Returns whether the verdict passed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenTree {
            kind,
            depth,
            branch,
            seed,
            out,
        } => {
            let tree = match kind {
                TreeKind::Dyadic => build_dyadic(depth)?,
                TreeKind::Random => build_random(seed, depth, branch)?,
            };
            emit(out.as_deref(), &tree.to_json())?;
        }
        Command::GenMartingale {
            tree,
            seed,
            dim,
            adapted,
            out,
        } => {
            let tree = load_tree(&tree)?;
            let p = if adapted {
                random_adapted(&tree, seed, dim)?
            } else {
                random_martingale(&tree, seed, dim)?.into_process()
            };
            emit(out.as_deref(), &p.to_json())?;
        }
        Command::GenMeasure {
            tree,
            seed,
            scale,
            out,
        } => {
            if !(scale.is_finite() && scale >= 0.0) {
                return Err(Error::OutOfRange {
                    what: "scale",
                    value: scale.to_string(),
                    allowed: "[0, inf)".into(),
                }
                .into());
            }
            let tree = load_tree(&tree)?;
            emit(out.as_deref(), &random_measure(&tree, seed, scale).to_json())?;
        }
        Command::Norm {
            input,
            alpha,
            mode,
            p,
            adapted,
        } => {
            let alpha = Alpha::new(alpha)?;
            let p = p.filter(|&p| p != 2.0);
            let text = match (adapted, p) {
                (true, None) => {
                    if mode != Mode::AtomFast {
                        bail!("--adapted supports only --mode atom-fast");
                    }
                    pretty(&process_bmo_alpha_norm_with_witness(&load_process(&input)?, alpha))
                }
                (true, Some(_)) => bail!("--adapted cannot be combined with --p"),
                (false, None) => pretty(&bmo_alpha_norm(&load_martingale(&input)?, alpha, mode)?),
                (false, Some(p)) => {
                    let f = load_martingale(&input)?;
                    match mode {
                        Mode::AtomFast => pretty(&serde_json::json!({
                            "value": bmo_alpha_p_norm(&f, alpha, p)?,
                            "mode": mode,
                            "p": p,
                        })),
                        Mode::SubsetBruteforce => pretty(&bmo_alpha_p_norm_subsets(&f, alpha, p)?),
                        _ => bail!("--p supports --mode atom-fast or subset-bruteforce"),
                    }
                }
            };
            emit(None, &text)?;
        }
        Command::CarlesonNorm {
            input,
            tree,
            from_martingale: fm,
            alpha,
            mode,
        } => {
            let alpha = Alpha::new(alpha)?;
            let mu = match (input, fm) {
                (_, Some(path)) => from_martingale(&load_martingale(&path)?),
                (Some(path), None) => {
                    let doc: MeasureDocument =
                        parse_json(&read(&path)?).with_context(|| path.display().to_string())?;
                    let tree = tree.as_deref().map(load_tree).transpose()?;
                    CarlesonMeasure::from_document(&doc, tree, base_dir(&path))
                        .with_context(|| path.display().to_string())?
                }
                (None, None) => bail!("give a measure file or --from-martingale"),
            };
            emit(None, &pretty(&carleson_alpha_norm(&mu, alpha, mode)?))?;
        }
        Command::Check(args) => return check(args),
        Command::Campaign {
            alphas,
            depths,
            ps,
            trials,
            seed,
            branch,
            out,
            tol,
        } => {
            let mut cfg = CampaignConfig {
                seed,
                trials,
                alphas,
                ps,
                depths,
                max_branch: branch,
                tolerances: Default::default(),
            };
            tol.apply(&mut cfg.tolerances);
            let rows = run_campaign(&cfg)?;
            emit(out.as_deref(), &campaign_csv(&rows))?;
            let failures = rows.iter().filter(|r| !r.passed).count();
            eprintln!("campaign: {} rows, {failures} failures", rows.len());
            return Ok(failures == 0);
        }
        Command::Bench { depths, alpha, seed } => bench(&depths, Alpha::new(alpha)?, seed)?,
    }
    Ok(true)
}

fn check(args: CheckArgs) -> Result<bool> {
    let suite: Suite = args.suite.parse()?;
    let mut cfg = suite.config();
    cfg.seed = args.seed;
    if let Some(v) = args.trials {
        cfg.trials = v;
    }
    if let Some(v) = args.alphas {
        cfg.alphas = v;
    }
    if let Some(v) = args.ps {
        cfg.ps = v;
    }
    if let Some(v) = args.depth {
        cfg.max_depth = v;
    }
    if let Some(v) = args.branch {
        cfg.max_branch = v;
    }
    if let Some(v) = args.family {
        cfg.family = match v {
            Family::Dyadic => TreeFamily::Dyadic,
            Family::Random => TreeFamily::Random,
        };
    }
    if let Some(v) = args.max_stopping_times {
        cfg.max_stopping_times = v;
    }
    args.tol.apply(&mut cfg.tolerances);
    let report = run_suite(suite, &cfg)?;
    emit(args.out.as_deref(), &report.to_json(args.comparison))?;
    if let Some(path) = &args.csv {
        emit(Some(path), &report.to_csv())?;
    }
    eprintln!(
        "{suite}: {} ({} cases, {} failures)",
        if report.passed() { "pass" } else { "FAIL" },
        report.cases.len(),
        report.failures
    );
    for c in report.failures().take(5) {
        eprintln!(
            "  {} trial {} seed {}: lhs {} rhs {} residual {}{}",
            c.check,
            c.trial,
            c.seed,
            c.lhs,
            c.rhs,
            c.residual,
            c.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default()
        );
    }
    Ok(report.passed())
}

fn bench(depths: &[usize], alpha: Alpha, seed: u64) -> Result<()> {
    println!("quantity,mode,depth,value,micros");
    for &depth in depths {
        let tree = Arc::new(build_dyadic(depth)?);
        let f = random_martingale(&tree, seed, 1)?;
        let mu = from_martingale(&f);
        let cases: [(&str, Mode); 6] = [
            ("bmo", Mode::AtomFast),
            ("bmo", Mode::OmegaForm),
            ("bmo", Mode::SubsetBruteforce),
            ("bmo", Mode::StoppingBruteforce),
            ("carleson", Mode::NodeFast),
            ("carleson", Mode::StoppingBruteforce),
        ];
        for (quantity, mode) in cases {
            let start = Instant::now();
            let result = if quantity == "bmo" {
                bmo_alpha_norm(&f, alpha, mode)
            } else {
                carleson_alpha_norm(&mu, alpha, mode)
            };
            let micros = start.elapsed().as_micros();
            match result {
                Ok(r) => println!("{quantity},{mode},{depth},{},{micros}", r.value),
                Err(Error::Size { .. }) => println!("{quantity},{mode},{depth},skipped,"),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
