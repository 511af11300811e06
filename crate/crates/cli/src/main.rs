use std::path::PathBuf;
use std::process::ExitCode;

use bitalloc::allocators::{
    adp, exhaustive, gbfos, greedy, random_geometry_table, random_table, AllocOutcome, DEFAULT_EXHAUSTIVE_CAP,
};
use bitalloc::convex::{constraint_system, feasible_start, newton_solve, sort_round, BarrierSettings};
use bitalloc::fisher::logdet;
use bitalloc::harness::{load_config, run_experiment_with, write_outputs, ExperimentConfig, Policy, Setup};
use bitalloc::quantizer::QuantizerBank;
use bitalloc::Error;
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "bitalloc", version, about = "Bit allocation for quantized target tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run Monte Carlo tracking trials and write mse.csv, trials.csv, summary.csv, timing.csv.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Design the per-rate threshold bank offline.
    Thresholds {
        /// Rate range, `1..R`.
        #[arg(long, value_parser = parse_rates)]
        rates: u32,
        #[arg(long)]
        out: PathBuf,
        /// Take grid and signal parameters from this config instead of the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Compare allocators on random Fisher tables against exhaustive search.
    BenchAlloc {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        r: usize,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Instance family.
        #[arg(long, value_enum, default_value_t = Tables::Geometry)]
        tables: Tables,
        /// Threshold bank for geometry tables; designed with default settings when absent.
        #[arg(long)]
        bank: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Tables {
    /// Sensor FIMs from random sensor and target positions.
    Geometry,
    /// Rank-1 atoms with i.i.d. rate increments.
    Generic,
}

fn parse_rates(s: &str) -> Result<u32, String> {
    let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected `1..R`, got `{s}`"))?;
    let hi = hi.strip_prefix('=').unwrap_or(hi);
    if lo.trim() != "1" {
        return Err("rate ranges start at 1".into());
    }
    let r: u32 = hi.trim().parse().map_err(|_| format!("bad upper rate `{hi}`"))?;
    if r == 0 {
        return Err("upper rate must be at least 1".into());
    }
    Ok(r)
}

enum Failure {
    Config(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Numeric(e.to_string())
        }
    }
}

fn config_from(path: &PathBuf) -> Result<ExperimentConfig, Failure> {
    load_config(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn simulate(
    config: PathBuf,
    policy: Option<Policy>,
    seed: Option<u64>,
    trials: Option<usize>,
    out: PathBuf,
) -> Result<(), Failure> {
    let mut cfg = config_from(&config)?;
    if let Some(p) = policy {
        cfg.policy = p;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    let setup = Setup::new(&cfg)?;
    let result = run_experiment_with(&cfg, &setup)?;
    write_outputs(&result, &out).map_err(|e| Failure::Numeric(e.to_string()))?;
    let s = &result.summary;
    println!(
        "{}: {} trials, time-averaged MSE {:.6}, mean bits {:.4} (std {:.4}), degenerate trials {}",
        s.policy,
        s.trials,
        result.series.time_average(),
        s.mean_bits,
        s.std_bits,
        s.degenerate_trials
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn thresholds(rates: u32, out: PathBuf, config: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = match config {
        Some(p) => config_from(&p)?,
        None => ExperimentConfig::default(),
    };
    let bank = QuantizerBank::design(rates, cfg.design_settings())?;
    bank.save(&out).map_err(|e| Failure::Numeric(e.to_string()))?;
    for m in 1..=rates {
        println!("rate {m}: objective {:.6}", bank.objective(m).unwrap_or(f64::NAN));
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn bench_alloc(
    n: usize,
    r: usize,
    instances: usize,
    seed: u64,
    tables: Tables,
    bank: Option<PathBuf>,
) -> Result<(), Failure> {
    if n == 0 || r == 0 || instances == 0 {
        return Err(Failure::Config("--n, --r and --instances must be positive".into()));
    }
    let defaults = ExperimentConfig::default();
    let bank = match (tables, bank) {
        (Tables::Generic, _) => None,
        (Tables::Geometry, Some(p)) => {
            Some(QuantizerBank::load(&p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?)
        }
        (Tables::Geometry, None) => Some(QuantizerBank::design(r as u32, defaults.design_settings())?),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sys = constraint_system(n, r)?;
    let settings = BarrierSettings::default();
    let names = ["greedy", "gbfos", "adp", "convex"];
    let mut gaps = [0.0; 4];
    let mut sums = [0.0; 4];
    let mut best_hits = [0usize; 4];
    let mut exhaustive_candidates = 0u64;
    println!("instance,policy,logdet,gap,matrix_sums");
    for k in 0..instances {
        let table = match &bank {
            Some(b) => random_geometry_table(n, r, b, defaults.signal(), defaults.area_side, &mut rng)?,
            None => random_table(n, r, &mut rng)?,
        };
        let best = exhaustive(&table, r, DEFAULT_EXHAUSTIVE_CAP)?;
        exhaustive_candidates = best.candidates_examined;
        println!("{k},exhaustive,{:.12e},0,{}", best.logdet_value, best.matrix_sums);
        let (q, diag) = newton_solve(&table, &sys, &settings, &feasible_start(&sys)?)?;
        let convex_value = logdet(&table.total(&sort_round(&q)?)?)?;
        let others: [(f64, u64); 4] = [
            summary_of(greedy(&table, r)?),
            summary_of(gbfos(&table, r)?),
            summary_of(adp(&table, r)?),
            (convex_value, diag.iterations as u64),
        ];
        for (j, (value, count)) in others.iter().enumerate() {
            let gap = best.logdet_value - value;
            gaps[j] += gap;
            sums[j] += *count as f64;
            if gap <= 1e-9 {
                best_hits[j] += 1;
            }
            println!("{k},{},{value:.12e},{gap:.6e},{count}", names[j]);
        }
    }
    eprintln!("exhaustive: {exhaustive_candidates} candidates per instance");
    for j in 0..4 {
        let unit = if j == 3 { "newton iterations" } else { "matrix sums" };
        eprintln!(
            "{:<8} mean gap {:.6}  optimal on {}/{}  mean {unit} {:.1}",
            names[j],
            gaps[j] / instances as f64,
            best_hits[j],
            instances,
            sums[j] / instances as f64
        );
    }
    Ok(())
}

fn summary_of(o: AllocOutcome) -> (f64, u64) {
    (o.logdet_value, o.matrix_sums)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate { config, policy, seed, trials, out } => simulate(config, policy, seed, trials, out),
        Command::Thresholds { rates, out, config } => thresholds(rates, out, config),
        Command::BenchAlloc { n, r, instances, seed, tables, bank } => bench_alloc(n, r, instances, seed, tables, bank),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
