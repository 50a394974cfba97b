use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use divrate::approx::{remez_xlogx_cached, rescale_to};
use divrate::bench::{run_experiment, write_csv, ExperimentSpec, Family, Sweep, DEFAULT_BUDGET};
use divrate::distributions::io::{read_distribution, read_histogram, write_distribution};
use divrate::distributions::{
    make_inconsistency_pair, make_twopoint_variance_m, make_twopoint_variance_n, make_uniform,
    make_worst_case_pair, make_worst_case_pair_bias_i, make_worst_case_pair_bias_ii, make_zipf,
    DiscreteDistribution, SplitMode,
};
use divrate::estimators::{aplugin_kl, opt_kl_reuse, plugin_kl, EstimatorConfig, Method};
use divrate::{Error, Result};

#[derive(Parser)]
#[command(
    name = "divrate",
    version,
    about = "KL divergence estimation on large alphabets",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate D(P||Q) from two histogram files (one count per line).
    Estimate(EstimateArgs),
    /// Run a Monte Carlo RMSE sweep and write CSV.
    Bench(BenchArgs),
    /// Best uniform approximation of x ln x on [0, a], as CSV.
    Remez(RemezArgs),
    /// Write a named distribution family to files (one probability per line).
    Construct(ConstructArgs),
}

#[derive(clap::Args)]
struct EstimateArgs {
    #[arg(long)]
    method: Method,
    #[arg(long)]
    hist_p: PathBuf,
    #[arg(long)]
    hist_q: PathBuf,
    /// Alphabet size; histograms shorter than this are padded with zeros.
    #[arg(long)]
    k: Option<usize>,
    /// Clip the optimal estimate to [0, ln f].
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFamily {
    #[value(name = "worst_case_I", alias = "worst_case")]
    WorstCase,
    Zipf,
    Custom,
}

#[derive(clap::Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    family: BenchFamily,
    /// Alphabet sizes. With --m, exactly one is allowed.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    /// Sample sizes for P; omit to sweep over k instead.
    #[arg(long, value_delimiter = ',')]
    m: Vec<u64>,
    /// n = ceil(rho f m); defaults to 3 for worst_case_I and 0.5 otherwise.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = 5.0)]
    f: f64,
    /// Worst-case Q puts spread/(k f) on all but the last bin.
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_p: f64,
    #[arg(long, default_value_t = 0.6)]
    alpha_q: f64,
    /// Distribution files for the custom family.
    #[arg(long, required_if_eq("family", "custom"))]
    p: Option<PathBuf>,
    #[arg(long, required_if_eq("family", "custom"))]
    q: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_values = ["aplugin", "opt"])]
    methods: Vec<Method>,
    #[arg(long, env = "DIVRATE_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: f64,
    /// Record wall-clock seconds per row.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(clap::Args)]
struct RemezArgs {
    #[arg(long)]
    degree: usize,
    /// Upper end of the approximation interval.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstructFamily {
    Uniform,
    Zipf,
    #[value(name = "worst_case")]
    WorstCase,
    #[value(name = "worst_case_I")]
    WorstCaseI,
    #[value(name = "worst_case_II")]
    WorstCaseII,
    #[value(name = "twopoint_m")]
    TwopointM,
    #[value(name = "twopoint_n")]
    TwopointN,
    Inconsistency,
}

#[derive(clap::Args)]
struct ConstructArgs {
    #[arg(long, value_enum)]
    family: ConstructFamily,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    spread: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_p: f64,
    #[arg(long, default_value_t = 0.6)]
    alpha_q: f64,
    /// Sample size the construction is tuned to (m for twopoint_m, n otherwise).
    #[arg(long)]
    samples: Option<u64>,
    /// Parameter of the binary inconsistency pair.
    #[arg(long, default_value_t = 3.0)]
    s: f64,
    /// Directory receiving p.txt and q.txt, or p1/q1/p2/q2 for two-pair families.
    #[arg(long)]
    out_dir: PathBuf,
}

const ESTIMATE_HEADER: &str =
    "method,value,d1_part,d2_part,clipped,entropy_poly,entropy_plugin,cross_poly,cross_plugin";

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::InvalidParameter(format!("this family needs --{flag}")))
}

fn load_config(path: Option<&Path>) -> Result<EstimatorConfig> {
    match path {
        None => Ok(EstimatorConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })?;
            EstimatorConfig::from_key_values(&text)
        }
    }
}

fn estimate(args: EstimateArgs) -> Result<()> {
    let mut config = load_config(args.config.as_deref())?;
    if args.f.is_some() {
        config.clip_bound_f = args.f;
    }
    let mut m = read_histogram(&args.hist_p)?;
    let mut n = read_histogram(&args.hist_q)?;
    if let Some(k) = args.k {
        m = m.padded(k)?;
        n = n.padded(k)?;
    }
    let row = match args.method {
        Method::Plugin => format!("plugin,{:.16e},,,false,,,,", plugin_kl(&m, &n)?),
        Method::AugmentedPlugin => {
            format!("aplugin,{:.16e},,,false,,,,", aplugin_kl(&m, &n, &config)?)
        }
        Method::Optimal => {
            if config.split_mode != SplitMode::MultinomialReuse {
                return Err(Error::InvalidParameter(
                    "estimating from fixed histograms needs split_mode = multinomial-reuse".into(),
                ));
            }
            let est = opt_kl_reuse(&m, &n, &config)?;
            format!(
                "opt,{:.16e},{:.16e},{:.16e},{},{},{},{},{}",
                est.value,
                est.d1_part,
                est.d2_part,
                est.clipped,
                est.entropy_branches.poly,
                est.entropy_branches.plugin,
                est.cross_branches.poly,
                est.cross_branches.plugin
            )
        }
    };
    println!("{ESTIMATE_HEADER}");
    println!("{row}");
    Ok(())
}

fn bench(args: BenchArgs) -> Result<()> {
    let family = match args.family {
        BenchFamily::WorstCase => Family::WorstCase {
            f: args.f,
            spread: args.spread,
        },
        BenchFamily::Zipf => Family::Zipf {
            alpha_p: args.alpha_p,
            alpha_q: args.alpha_q,
        },
        BenchFamily::Custom => Family::Custom {
            p: read_distribution(required(args.p, "p")?)?,
            q: read_distribution(required(args.q, "q")?)?,
        },
    };
    let sweep = if args.m.is_empty() {
        Sweep::VaryK { k_grid: args.k }
    } else {
        let [k] = args.k[..] else {
            return Err(Error::InvalidParameter(
                "a sample-size sweep takes exactly one --k".into(),
            ));
        };
        Sweep::VaryM {
            k,
            m_grid: args.m,
            rho: args.rho.unwrap_or_else(|| family.default_rho()),
        }
    };
    let mut spec = ExperimentSpec::new(family, sweep);
    spec.trials = args.trials;
    spec.methods = args.methods;
    spec.seed = args.seed;
    spec.config = load_config(args.config.as_deref())?;
    spec.budget = args.budget;
    spec.timing = args.timing;
    let rows = run_experiment(&spec)?;
    write_csv(&rows, &args.out)
}

fn remez(args: RemezArgs) -> Result<()> {
    let base = remez_xlogx_cached(args.degree)?;
    let (coeffs, sup_error) = if args.interval == 1.0 {
        (base.coeffs().to_vec(), base.sup_error())
    } else {
        let gamma = rescale_to(base.clone(), args.interval)?;
        (gamma.coeffs().to_vec(), args.interval * base.sup_error())
    };
    println!("j,a_j");
    for (j, a) in coeffs.iter().enumerate() {
        println!("{j},{a:.16e}");
    }
    println!("sup_error,{sup_error:.16e}");
    Ok(())
}

fn construct(args: ConstructArgs) -> Result<()> {
    let k = || required(args.k, "k");
    let f = || required(args.f, "f");
    let samples = || required(args.samples, "samples");
    let pairs: Vec<(DiscreteDistribution, DiscreteDistribution)> = match args.family {
        ConstructFamily::Uniform => {
            let u = make_uniform(k()?)?;
            vec![(u.clone(), u)]
        }
        ConstructFamily::Zipf => vec![(
            make_zipf(k()?, args.alpha_p)?,
            make_zipf(k()?, args.alpha_q)?,
        )],
        ConstructFamily::WorstCase => {
            let pair = make_worst_case_pair(k()?, f()?, args.spread)?.into_pair();
            vec![(pair.p, pair.q)]
        }
        ConstructFamily::WorstCaseI => {
            let pair = make_worst_case_pair_bias_i(k()?, f()?)?.into_pair();
            vec![(pair.p, pair.q)]
        }
        ConstructFamily::WorstCaseII => {
            let pair = make_worst_case_pair_bias_ii(k()?, samples()?, f()?)?.into_pair();
            vec![(pair.p, pair.q)]
        }
        ConstructFamily::TwopointM | ConstructFamily::TwopointN => {
            let (a, b) = if matches!(args.family, ConstructFamily::TwopointM) {
                make_twopoint_variance_m(k()?, f()?, samples()?)?
            } else {
                make_twopoint_variance_n(k()?, f()?, samples()?)?
            };
            let (a, b) = (a.into_pair(), b.into_pair());
            vec![(a.p, a.q), (b.p, b.q)]
        }
        ConstructFamily::Inconsistency => {
            let (a, b) = make_inconsistency_pair(args.s)?;
            vec![(a.p, a.q), (b.p, b.q)]
        }
    };
    fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    let single = pairs.len() == 1;
    for (i, (p, q)) in pairs.iter().enumerate() {
        let suffix = if single {
            String::new()
        } else {
            (i + 1).to_string()
        };
        let p_path = args.out_dir.join(format!("p{suffix}.txt"));
        let q_path = args.out_dir.join(format!("q{suffix}.txt"));
        write_distribution(&p_path, p)?;
        write_distribution(&q_path, q)?;
        println!("{}", p_path.display());
        println!("{}", q_path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate(args) => estimate(args),
        Command::Bench(args) => bench(args),
        Command::Remez(args) => remez(args),
        Command::Construct(args) => construct(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
