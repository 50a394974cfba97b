//! Monte Carlo RMSE sweeps over sample size or alphabet size.
//!
//! Every trial draws fresh samples from a seed derived from
//! `(seed, point index, trial index, method index)`, where the method index
//! is the method's fixed position in [`Method::ALL`]. Results therefore do
//! not depend on thread count or on which other methods are requested.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::distributions::{
    density_ratio_max, make_split, make_worst_case_pair, make_zipf, mix_seed, sample_histogram,
    BoundedRatioPair, DiscreteDistribution,
};
use crate::estimators::{aplugin_kl, opt_kl, plugin_kl, EstimatorConfig, Method};
use crate::{Error, Result};

pub const CSV_HEADER: &str = "method,sweep_value,rmse,mean_bias,infinite_count,trials,wall_seconds";

/// Default cap on `sum over points of k * max(m, n) * trials * methods`.
pub const DEFAULT_BUDGET: f64 = 1e11;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Uniform `P` against the spread-`s` worst-case `Q` with ratio bound `f`.
    WorstCase { f: f64, spread: f64 },
    /// Zipf laws with exponents `alpha_p` and `alpha_q`; `f` is their
    /// largest density ratio.
    Zipf { alpha_p: f64, alpha_q: f64 },
    /// A fixed pair read from files; only `VaryM` sweeps apply.
    Custom {
        p: DiscreteDistribution,
        q: DiscreteDistribution,
    },
}

impl Family {
    /// The `n = rho f m` multiplier used when none is given.
    pub fn default_rho(&self) -> f64 {
        match self {
            Family::WorstCase { .. } => 3.0,
            Family::Zipf { .. } | Family::Custom { .. } => 0.5,
        }
    }

    pub fn pair(&self, k: usize) -> Result<BoundedRatioPair> {
        match self {
            Family::WorstCase { f, spread } => make_worst_case_pair(k, *f, *spread),
            Family::Zipf { alpha_p, alpha_q } => {
                let p = make_zipf(k, *alpha_p)?;
                let q = make_zipf(k, *alpha_q)?;
                let f = density_ratio_max(&p, &q)?.max(1.0);
                BoundedRatioPair::new(p, q, f)
            }
            Family::Custom { p, q } => {
                if p.k() != k {
                    return Err(Error::invalid(format!(
                        "custom pair has k = {}, sweep asks for k = {k}",
                        p.k()
                    )));
                }
                let f = density_ratio_max(p, q)?;
                if !f.is_finite() {
                    return Err(Error::invalid("custom pair has an unbounded density ratio"));
                }
                BoundedRatioPair::new(p.clone(), q.clone(), f.max(1.0))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Fixed `k`; `n = ceil(rho f m)` for each `m`.
    VaryM {
        k: usize,
        m_grid: Vec<u64>,
        rho: f64,
    },
    /// `m = ceil(2k / ln k)`, `n = ceil(k f / ln k)` for each `k`.
    VaryK { k_grid: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub family: Family,
    pub sweep: Sweep,
    pub trials: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub config: EstimatorConfig,
    pub budget: f64,
    /// Record wall-clock seconds per row; off by default so output files
    /// are byte-reproducible.
    pub timing: bool,
}

impl ExperimentSpec {
    pub fn new(family: Family, sweep: Sweep) -> Self {
        Self {
            family,
            sweep,
            trials: 50,
            methods: vec![Method::AugmentedPlugin, Method::Optimal],
            seed: 0,
            config: EstimatorConfig::default(),
            budget: DEFAULT_BUDGET,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseRow {
    pub method: Method,
    pub sweep_value: u64,
    pub rmse: f64,
    pub mean_bias: f64,
    pub infinite_count: usize,
    pub trials: usize,
    pub wall_seconds: f64,
}

/// One sweep point: the pair and its sample sizes.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub sweep_value: u64,
    pub pair: BoundedRatioPair,
    pub m: u64,
    pub n: u64,
}

fn strictly_increasing<T: PartialOrd>(grid: &[T]) -> bool {
    !grid.is_empty() && grid.windows(2).all(|w| w[0] < w[1])
}

/// Resolves the sweep into concrete points, validating the spec.
pub fn sweep_points(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    if spec.trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if spec.methods.is_empty() {
        return Err(Error::invalid("no estimators selected"));
    }
    spec.config.validate()?;
    match &spec.sweep {
        Sweep::VaryM { k, m_grid, rho } => {
            if !strictly_increasing(m_grid) || m_grid[0] == 0 {
                return Err(Error::invalid(
                    "m grid must be positive and strictly increasing",
                ));
            }
            if !(*rho > 0.0) || !rho.is_finite() {
                return Err(Error::invalid(format!("rho must be positive, got {rho}")));
            }
            let pair = spec.family.pair(*k)?;
            let f = pair.ratio_bound();
            Ok(m_grid
                .iter()
                .map(|&m| SweepPoint {
                    sweep_value: m,
                    pair: pair.clone(),
                    m,
                    n: (rho * f * m as f64).ceil().max(1.0) as u64,
                })
                .collect())
        }
        Sweep::VaryK { k_grid } => {
            if !strictly_increasing(k_grid) || k_grid[0] < 2 {
                return Err(Error::invalid(
                    "k grid must start at 2 or more and be strictly increasing",
                ));
            }
            k_grid
                .iter()
                .map(|&k| {
                    let pair = spec.family.pair(k)?;
                    let (kf, ln_k) = (k as f64, (k as f64).ln());
                    Ok(SweepPoint {
                        sweep_value: k as u64,
                        m: (2.0 * kf / ln_k).ceil() as u64,
                        n: (kf * pair.ratio_bound() / ln_k).ceil() as u64,
                        pair,
                    })
                })
                .collect()
        }
    }
}

/// `sum over points of k * max(m, n) * trials * methods`.
pub fn experiment_cost(spec: &ExperimentSpec, points: &[SweepPoint]) -> f64 {
    points
        .iter()
        .map(|pt| pt.pair.k() as f64 * pt.m.max(pt.n) as f64)
        .sum::<f64>()
        * spec.trials as f64
        * spec.methods.len() as f64
}

fn method_index(method: Method) -> u64 {
    Method::ALL.iter().position(|&m| m == method).unwrap() as u64
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// One estimate of `method` on fresh samples drawn from `trial_seed`.
pub fn run_trial(
    method: Method,
    point: &SweepPoint,
    config: &EstimatorConfig,
    trial_seed: u64,
) -> Result<f64> {
    let (p, q) = (point.pair.p(), point.pair.q());
    let (seed_p, seed_q) = (mix_seed(&[trial_seed, 0]), mix_seed(&[trial_seed, 1]));
    match method {
        Method::Plugin => plugin_kl(
            &sample_histogram(p, point.m, seed_p),
            &sample_histogram(q, point.n, seed_q),
        ),
        Method::AugmentedPlugin => aplugin_kl(
            &sample_histogram(p, point.m, seed_p),
            &sample_histogram(q, point.n, seed_q),
            config,
        ),
        Method::Optimal => {
            let ps = make_split(p, point.m, config.split_mode, seed_p);
            let qs = make_split(q, point.n, config.split_mode, seed_q);
            Ok(opt_kl(&ps, &qs, config, point.pair.k())?.value)
        }
    }
}

/// Runs every (method, sweep point) cell; rows are ordered by point, then by
/// the order of `spec.methods`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RmseRow>> {
    let points = sweep_points(spec)?;
    let cost = experiment_cost(spec, &points);
    if cost > spec.budget {
        return Err(Error::BudgetExceeded {
            cost,
            budget: spec.budget,
        });
    }
    let mut rows = Vec::with_capacity(points.len() * spec.methods.len());
    for (point_index, point) in points.iter().enumerate() {
        let truth = point.pair.divergence();
        for &method in &spec.methods {
            let started = Instant::now();
            let estimates = (0..spec.trials)
                .into_par_iter()
                .map(|trial| {
                    let seed = mix_seed(&[
                        spec.seed,
                        point_index as u64,
                        trial as u64,
                        method_index(method),
                    ]);
                    run_trial(method, point, &spec.config, seed)
                })
                .collect::<Result<Vec<f64>>>()?;
            let errors: Vec<f64> = estimates
                .iter()
                .filter(|v| v.is_finite())
                .map(|v| v - truth)
                .collect();
            let infinite_count = spec.trials - errors.len();
            let (rmse, mean_bias) = if errors.is_empty() {
                (f64::INFINITY, f64::INFINITY)
            } else {
                let count = errors.len() as f64;
                let squares: Vec<f64> = errors.iter().map(|e| e * e).collect();
                (
                    (pairwise_sum(&squares) / count).sqrt(),
                    pairwise_sum(&errors) / count,
                )
            };
            rows.push(RmseRow {
                method,
                sweep_value: point.sweep_value,
                rmse,
                mean_bias,
                infinite_count,
                trials: spec.trials,
                wall_seconds: if spec.timing {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
            });
            log::info!(
                "{} at {}: rmse {:.6} ({} infinite)",
                method,
                point.sweep_value,
                rmse,
                infinite_count
            );
        }
    }
    Ok(rows)
}

/// Renders rows with 17 significant digits and LF line endings.
pub fn format_csv(rows: &[RmseRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{},{},{:.16e}",
            r.method,
            r.sweep_value,
            r.rmse,
            r.mean_bias,
            r.infinite_count,
            r.trials,
            r.wall_seconds
        )
        .expect("writing to a String");
    }
    out
}

pub fn write_csv(rows: &[RmseRow], destination: impl AsRef<Path>) -> Result<()> {
    let path = destination.as_ref();
    fs::write(path, format_csv(rows)).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Vec<RmseRow>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(parse_err(1, format!("expected header `{CSV_HEADER}`"))),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                line_no,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("`{s}` is not a number")))
        };
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|_| parse_err(line_no, format!("`{s}` is not an integer")))
        };
        rows.push(RmseRow {
            method: fields[0]
                .parse()
                .map_err(|e: Error| parse_err(line_no, e.to_string()))?,
            sweep_value: int(fields[1])?,
            rmse: float(fields[2])?,
            mean_bias: float(fields[3])?,
            infinite_count: int(fields[4])? as usize,
            trials: int(fields[5])? as usize,
            wall_seconds: float(fields[6])?,
        });
    }
    Ok(rows)
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<RmseRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_csv(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        let mut spec = ExperimentSpec::new(
            Family::WorstCase {
                f: 5.0,
                spread: 1.0,
            },
            Sweep::VaryM {
                k: 50,
                m_grid: vec![100, 400],
                rho: 3.0,
            },
        );
        spec.trials = 12;
        spec.methods = Method::ALL.to_vec();
        spec.seed = 7;
        spec
    }

    #[test]
    fn zero_truth_rows_measure_raw_estimates() {
        let mut spec = ExperimentSpec::new(
            Family::WorstCase {
                f: 10.0,
                spread: 10.0,
            },
            Sweep::VaryM {
                k: 10,
                m_grid: vec![30],
                rho: 3.0,
            },
        );
        spec.trials = 1;
        spec.methods = vec![Method::AugmentedPlugin, Method::Optimal];
        let points = sweep_points(&spec).unwrap();
        let truth = points[0].pair.divergence();
        assert!(truth.abs() < 1e-15);
        let rows = run_experiment(&spec).unwrap();
        for row in &rows {
            let seed = mix_seed(&[0, 0, 0, method_index(row.method)]);
            let raw = run_trial(row.method, &points[0], &spec.config, seed).unwrap();
            assert_eq!(row.rmse, (raw - truth).abs());
            assert_eq!(row.mean_bias, raw - truth);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let spec = small_spec();
        let a = format_csv(&run_experiment(&spec).unwrap());
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| format_csv(&run_experiment(&spec).unwrap()));
        assert_eq!(a, b);
    }

    #[test]
    fn adding_a_method_keeps_other_rows() {
        let mut spec = small_spec();
        let all = run_experiment(&spec).unwrap();
        spec.methods = vec![Method::Optimal];
        let only = run_experiment(&spec).unwrap();
        let from_all: Vec<_> = all
            .into_iter()
            .filter(|r| r.method == Method::Optimal)
            .collect();
        assert_eq!(from_all, only);
    }

    #[test]
    fn row_invariants() {
        for row in run_experiment(&small_spec()).unwrap() {
            assert!(row.infinite_count <= row.trials);
            if row.infinite_count < row.trials {
                assert!(row.rmse >= row.mean_bias.abs());
            }
            assert_eq!(row.wall_seconds, 0.0);
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = small_spec();
        spec.trials = 0;
        assert!(run_experiment(&spec).is_err());
        let mut spec = small_spec();
        spec.sweep = Sweep::VaryM {
            k: 50,
            m_grid: vec![400, 100],
            rho: 3.0,
        };
        assert!(run_experiment(&spec).is_err());
        let mut spec = small_spec();
        spec.budget = 10.0;
        assert!(matches!(
            run_experiment(&spec),
            Err(Error::BudgetExceeded { .. })
        ));
        let mut spec = small_spec();
        spec.sweep = Sweep::VaryK { k_grid: vec![] };
        assert!(run_experiment(&spec).is_err());
    }

    #[test]
    fn vary_k_sizes() {
        let spec = ExperimentSpec::new(
            Family::WorstCase {
                f: 5.0,
                spread: 1.0,
            },
            Sweep::VaryK { k_grid: vec![1000] },
        );
        let pt = &sweep_points(&spec).unwrap()[0];
        assert_eq!((pt.m, pt.n), (290, 724));
    }

    #[test]
    fn zipf_family_uses_ratio_bound() {
        let fam = Family::Zipf {
            alpha_p: 1.0,
            alpha_q: 0.6,
        };
        assert_eq!(fam.default_rho(), 0.5);
        let pair = fam.pair(20).unwrap();
        let f = density_ratio_max(pair.p(), pair.q()).unwrap();
        assert_eq!(pair.ratio_bound(), f);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_csv(&[], &path).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            format!("{CSV_HEADER}\n")
        );

        let rows = vec![
            RmseRow {
                method: Method::Plugin,
                sweep_value: 1000,
                rmse: f64::INFINITY,
                mean_bias: f64::INFINITY,
                infinite_count: 3,
                trials: 3,
                wall_seconds: 0.0,
            },
            RmseRow {
                method: Method::Optimal,
                sweep_value: 1000,
                rmse: 0.1 + 0.2,
                mean_bias: -1.0 / 3.0,
                infinite_count: 0,
                trials: 3,
                wall_seconds: 1.25e-3,
            },
        ];
        write_csv(&rows, &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
        assert_eq!(read_csv(&path).unwrap(), rows);
        assert!(text.contains("3.0000000000000004e-1"));
        assert!(parse_csv("bad\n", Path::new("x")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\nopt,1,2\n"), Path::new("x")).is_err());
    }

    #[test]
    fn pairwise_sum_matches_plain_sum_on_integers() {
        let v: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }
}
