//! Monte Carlo tracking experiments: configuration, per-trial simulation with
//! a chosen allocation policy, MSE aggregation and CSV output.
//!
//! Every trial owns one ChaCha8 key derived from `(seed, trial)` and draws
//! from four separate streams (truth, measurement, filter, transmission), so
//! policies run on the same seed see the same target track, the same
//! measurement noise and the same particle noise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{Matrix4, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::allocators::{self, DEFAULT_EXHAUSTIVE_CAP};
use crate::convex::{convex_allocate, BarrierSettings, Decoding};
use crate::error::{Error, Result};
use crate::fisher::FimTable;
use crate::model::{GaussianFactor, MotionModel, SensorGrid, SignalParams, TargetState};
use crate::quantizer::{fmt_f64, DesignSettings, QuantizerBank};
use crate::tracker::{assimilate, init_particles};

pub const STREAM_TRUTH: u64 = 1;
pub const STREAM_MEASUREMENT: u64 = 2;
pub const STREAM_FILTER: u64 = 3;
pub const STREAM_TRANSMISSION: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    Exhaustive,
    Convex,
    Adp,
    Gbfos,
    Greedy,
    Nearest,
}

impl Policy {
    pub const ALL: [Policy; 6] =
        [Policy::Exhaustive, Policy::Convex, Policy::Adp, Policy::Gbfos, Policy::Greedy, Policy::Nearest];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Exhaustive => "exhaustive",
            Policy::Convex => "convex",
            Policy::Adp => "adp",
            Policy::Gbfos => "gbfos",
            Policy::Greedy => "greedy",
            Policy::Nearest => "nearest",
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Policy::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| Error::Format(format!("unknown policy `{s}`")))
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn decoding_str(d: Decoding) -> &'static str {
    match d {
        Decoding::Sample => "sample",
        Decoding::SortRound => "sort-round",
    }
}

fn parse_decoding(s: &str) -> Result<Decoding> {
    match s {
        "sample" => Ok(Decoding::Sample),
        "sort-round" => Ok(Decoding::SortRound),
        _ => Err(Error::Format(format!("unknown decoding `{s}` (expected sample or sort-round)"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid_side_count: usize,
    pub area_side: f64,
    pub p0: f64,
    pub alpha: f64,
    pub n_exp: f64,
    pub sigma: f64,
    pub dt: f64,
    pub rho: f64,
    pub steps: usize,
    pub particles: usize,
    pub budget: usize,
    pub trials: usize,
    pub policy: Policy,
    pub prior_mean: Vector4<f64>,
    pub prior_cov: Matrix4<f64>,
    pub seed: u64,
    /// `None` means `DEFAULT_TAU`.
    pub tau: Option<f64>,
    pub epsilon: f64,
    pub max_iters: usize,
    pub exhaustive_cap: u128,
    pub decoding: Decoding,
    pub threshold_samples: usize,
    pub threshold_seed: u64,
    pub bank_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    /// Desk-scale profile: 9 sensors, ρ = 2.5e−3, 1000 particles, 100 trials.
    fn default() -> Self {
        let sd_pos = 2.0 / 3.0;
        ExperimentConfig {
            grid_side_count: 3,
            area_side: 20.0,
            p0: 1e3,
            alpha: 1.0,
            n_exp: 2.0,
            sigma: 1.0,
            dt: 0.5,
            rho: 2.5e-3,
            steps: 20,
            particles: 1000,
            budget: 5,
            trials: 100,
            policy: Policy::Convex,
            prior_mean: Vector4::new(-8.0, -8.0, 2.0, 2.0),
            prior_cov: Matrix4::from_diagonal(&Vector4::new(sd_pos * sd_pos, sd_pos * sd_pos, 0.01, 0.01)),
            seed: 1,
            tau: None,
            epsilon: 1e-8,
            max_iters: 100,
            exhaustive_cap: DEFAULT_EXHAUSTIVE_CAP,
            decoding: Decoding::Sample,
            threshold_samples: 20_000,
            threshold_seed: 7,
            bank_path: None,
        }
    }
}

const REQUIRED: [&str; 16] = [
    "grid_side_count",
    "area_side",
    "p0",
    "alpha",
    "n_exp",
    "sigma",
    "dt",
    "rho",
    "steps",
    "particles",
    "budget",
    "trials",
    "policy",
    "prior_mean",
    "prior_cov",
    "seed",
];

const OPTIONAL: [&str; 8] =
    ["tau", "epsilon", "max_iters", "exhaustive_cap", "decoding", "threshold_samples", "threshold_seed", "bank_path"];

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Format(format!("`{key}`: cannot parse `{v}`")))
}

fn parse_list(key: &str, v: &str, len: usize) -> Result<Vec<f64>> {
    let vals: Vec<f64> = v.split(',').map(|s| parse_num(key, s.trim())).collect::<Result<_>>()?;
    if vals.len() != len {
        return Err(Error::Format(format!("`{key}` needs {len} comma-separated values, got {}", vals.len())));
    }
    Ok(vals)
}

fn join(vals: impl IntoIterator<Item = f64>) -> String {
    vals.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Full-scale profile: 5000 particles, 500 trials.
    pub fn full_profile() -> Self {
        ExperimentConfig { particles: 5000, trials: 500, ..Self::default() }
    }

    pub fn sensors(&self) -> usize {
        self.grid_side_count * self.grid_side_count
    }

    pub fn signal(&self) -> SignalParams {
        SignalParams { p0: self.p0, alpha: self.alpha, n_exp: self.n_exp, sigma: self.sigma }
    }

    pub fn grid(&self) -> Result<SensorGrid> {
        SensorGrid::uniform(self.grid_side_count, self.area_side, self.signal())
    }

    pub fn motion(&self) -> Result<MotionModel> {
        MotionModel::new(self.dt, self.rho)
    }

    pub fn barrier(&self) -> BarrierSettings {
        let mut s = BarrierSettings::default();
        if let Some(tau) = self.tau {
            s.tau = tau;
        }
        s.epsilon = self.epsilon;
        s.max_iters = self.max_iters;
        s
    }

    pub fn design_settings(&self) -> DesignSettings {
        DesignSettings {
            area_side: self.area_side,
            signal: self.signal(),
            sample_count: self.threshold_samples,
            seed: self.threshold_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.motion()?;
        self.barrier().validate()?;
        self.design_settings().validate()?;
        GaussianFactor::new(&self.prior_cov)?;
        if self.steps == 0 || self.trials == 0 || self.budget == 0 {
            return Err(Error::InvalidParameter("steps, trials and budget must be at least 1".into()));
        }
        if self.particles < 5 {
            return Err(Error::InvalidParameter("need at least 5 particles".into()));
        }
        if !self.prior_mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("prior mean must be finite".into()));
        }
        Ok(())
    }

    /// Flat `key = value` text. `#` starts a comment. Unknown or repeated
    /// keys are errors; see the key tables for which are required.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(Error::Config { line, msg: format!("expected `key = value`, got `{body}`") });
            };
            let (k, v) = (k.trim(), v.trim());
            if !REQUIRED.contains(&k) && !OPTIONAL.contains(&k) {
                return Err(Error::Config { line, msg: format!("unknown key `{k}`") });
            }
            if seen.insert(k, (line, v)).is_some() {
                return Err(Error::Config { line, msg: format!("duplicate key `{k}`") });
            }
        }
        for key in REQUIRED {
            if !seen.contains_key(key) {
                return Err(Error::MissingKey(key.to_string()));
            }
        }
        let mut cfg = ExperimentConfig::default();
        for (&key, &(line, v)) in &seen {
            let at = |e: Error| Error::Config { line, msg: e.to_string() };
            match key {
                "grid_side_count" => cfg.grid_side_count = parse_num(key, v).map_err(at)?,
                "area_side" => cfg.area_side = parse_num(key, v).map_err(at)?,
                "p0" => cfg.p0 = parse_num(key, v).map_err(at)?,
                "alpha" => cfg.alpha = parse_num(key, v).map_err(at)?,
                "n_exp" => cfg.n_exp = parse_num(key, v).map_err(at)?,
                "sigma" => cfg.sigma = parse_num(key, v).map_err(at)?,
                "dt" => cfg.dt = parse_num(key, v).map_err(at)?,
                "rho" => cfg.rho = parse_num(key, v).map_err(at)?,
                "steps" => cfg.steps = parse_num(key, v).map_err(at)?,
                "particles" => cfg.particles = parse_num(key, v).map_err(at)?,
                "budget" => cfg.budget = parse_num(key, v).map_err(at)?,
                "trials" => cfg.trials = parse_num(key, v).map_err(at)?,
                "policy" => cfg.policy = v.parse().map_err(at)?,
                "prior_mean" => cfg.prior_mean = Vector4::from_vec(parse_list(key, v, 4).map_err(at)?),
                "prior_cov" => cfg.prior_cov = Matrix4::from_row_slice(&parse_list(key, v, 16).map_err(at)?),
                "seed" => cfg.seed = parse_num(key, v).map_err(at)?,
                "tau" => cfg.tau = Some(parse_num(key, v).map_err(at)?),
                "epsilon" => cfg.epsilon = parse_num(key, v).map_err(at)?,
                "max_iters" => cfg.max_iters = parse_num(key, v).map_err(at)?,
                "exhaustive_cap" => cfg.exhaustive_cap = parse_num(key, v).map_err(at)?,
                "decoding" => cfg.decoding = parse_decoding(v).map_err(at)?,
                "threshold_samples" => cfg.threshold_samples = parse_num(key, v).map_err(at)?,
                "threshold_seed" => cfg.threshold_seed = parse_num(key, v).map_err(at)?,
                "bank_path" => cfg.bank_path = Some(PathBuf::from(v)),
                _ => unreachable!("key tables checked above"),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("grid_side_count", self.grid_side_count.to_string());
        kv("area_side", self.area_side.to_string());
        kv("p0", self.p0.to_string());
        kv("alpha", self.alpha.to_string());
        kv("n_exp", self.n_exp.to_string());
        kv("sigma", self.sigma.to_string());
        kv("dt", self.dt.to_string());
        kv("rho", self.rho.to_string());
        kv("steps", self.steps.to_string());
        kv("particles", self.particles.to_string());
        kv("budget", self.budget.to_string());
        kv("trials", self.trials.to_string());
        kv("policy", self.policy.to_string());
        kv("prior_mean", join(self.prior_mean.iter().copied()));
        kv("prior_cov", join(self.prior_cov.transpose().iter().copied()));
        kv("seed", self.seed.to_string());
        if let Some(tau) = self.tau {
            kv("tau", tau.to_string());
        }
        kv("epsilon", self.epsilon.to_string());
        kv("max_iters", self.max_iters.to_string());
        kv("exhaustive_cap", self.exhaustive_cap.to_string());
        kv("decoding", decoding_str(self.decoding).to_string());
        kv("threshold_samples", self.threshold_samples.to_string());
        kv("threshold_seed", self.threshold_seed.to_string());
        if let Some(p) = &self.bank_path {
            kv("bank_path", p.display().to_string());
        }
        s
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    ExperimentConfig::from_text(&fs::read_to_string(path)?)
}

pub fn write_config(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, cfg.to_text())?;
    Ok(())
}

/// Everything a trial needs that does not depend on the trial index.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: SensorGrid,
    pub motion: MotionModel,
    pub bank: QuantizerBank,
}

impl Setup {
    /// Loads the bank from `bank_path` when set, otherwise designs it.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let bank = match &cfg.bank_path {
            Some(p) => QuantizerBank::load(p)?,
            None => QuantizerBank::design(cfg.budget as u32, cfg.design_settings())?,
        };
        Self::with_bank(cfg, bank)
    }

    pub fn with_bank(cfg: &ExperimentConfig, bank: QuantizerBank) -> Result<Self> {
        cfg.validate()?;
        if (bank.max_rate() as usize) < cfg.budget {
            return Err(Error::RateOutOfRange { rate: cfg.budget, max: bank.max_rate() as usize });
        }
        if bank.sigma() != cfg.sigma {
            return Err(Error::InvalidParameter(format!(
                "bank was designed for sigma {}, config has {}",
                bank.sigma(),
                cfg.sigma
            )));
        }
        Ok(Setup { grid: cfg.grid()?, motion: cfg.motion()?, bank })
    }
}

/// Per-trial generator for one stochastic source.
pub fn trial_rng(seed: u64, trial: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&trial.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub truth: TargetState,
    pub estimate: TargetState,
    pub rates: Vec<usize>,
    pub matrix_sums: u64,
    pub candidates: u64,
    pub newton_iterations: Option<usize>,
    pub newton_decrement: Option<f64>,
    pub degenerate: bool,
    /// Wall-clock seconds inside the policy call.
    pub alloc_seconds: f64,
}

impl StepRecord {
    pub fn squared_error(&self) -> f64 {
        (self.truth.x() - self.estimate.x()).powi(2) + (self.truth.y() - self.estimate.y()).powi(2)
    }

    pub fn total_bits(&self) -> usize {
        self.rates.iter().sum()
    }

    pub fn active_sensors(&self) -> usize {
        self.rates.iter().filter(|&&m| m > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub steps: Vec<StepRecord>,
}

impl TrialRecord {
    pub fn degenerate(&self) -> bool {
        self.steps.iter().any(|s| s.degenerate)
    }
}

struct Allocation {
    rates: Vec<usize>,
    matrix_sums: u64,
    candidates: u64,
    newton: Option<(usize, f64)>,
}

fn allocate(
    cfg: &ExperimentConfig,
    setup: &Setup,
    predicted: &crate::tracker::ParticleSet,
    tx_rng: &mut ChaCha8Rng,
) -> Result<(Allocation, f64)> {
    let r = cfg.budget;
    if cfg.policy == Policy::Nearest {
        let start = Instant::now();
        let alloc = allocators::nearest_neighbor(&setup.grid, predicted.estimate().position(), r);
        let secs = start.elapsed().as_secs_f64();
        return Ok((Allocation { rates: alloc.rates().to_vec(), matrix_sums: 0, candidates: 1, newton: None }, secs));
    }
    let (table, _) = FimTable::from_particles(&setup.grid, predicted, &setup.bank, r as u32)?;
    let start = Instant::now();
    let out = match cfg.policy {
        Policy::Exhaustive => allocators::exhaustive(&table, r, cfg.exhaustive_cap)?,
        Policy::Adp => allocators::adp(&table, r)?,
        Policy::Gbfos => allocators::gbfos(&table, r)?,
        Policy::Greedy => allocators::greedy(&table, r)?,
        Policy::Convex => {
            let c = convex_allocate(&table, r, &cfg.barrier(), cfg.decoding, tx_rng)?;
            let secs = start.elapsed().as_secs_f64();
            let alloc = Allocation {
                rates: c.rates,
                matrix_sums: 0,
                candidates: 0,
                newton: Some((c.diagnostics.iterations, c.diagnostics.final_decrement)),
            };
            return Ok((alloc, secs));
        }
        Policy::Nearest => unreachable!(),
    };
    let secs = start.elapsed().as_secs_f64();
    Ok((
        Allocation {
            rates: out.alloc.rates().to_vec(),
            matrix_sums: out.matrix_sums,
            candidates: out.candidates_examined,
            newton: None,
        },
        secs,
    ))
}

/// One tracking run of `cfg.steps` filter cycles with allocation by
/// `cfg.policy` on each predicted cloud.
pub fn run_trial(cfg: &ExperimentConfig, setup: &Setup, trial: u64) -> Result<TrialRecord> {
    let mut truth_rng = trial_rng(cfg.seed, trial, STREAM_TRUTH);
    let mut meas_rng = trial_rng(cfg.seed, trial, STREAM_MEASUREMENT);
    let mut filter_rng = trial_rng(cfg.seed, trial, STREAM_FILTER);
    let mut tx_rng = trial_rng(cfg.seed, trial, STREAM_TRANSMISSION);

    let prior = GaussianFactor::new(&cfg.prior_cov)?;
    let mut truth = TargetState(cfg.prior_mean + prior.sample(&mut truth_rng));
    let mut particles = init_particles(&cfg.prior_mean, &cfg.prior_cov, cfg.particles, &mut filter_rng)?;
    let mut steps = Vec::with_capacity(cfg.steps);
    for step in 1..=cfg.steps {
        truth = setup.motion.propagate(&truth, &setup.motion.sample_noise(&mut truth_rng));
        let predicted = particles.predict(&setup.motion, &mut filter_rng);
        let (alloc, secs) = allocate(cfg, setup, &predicted, &mut tx_rng)?;
        let out =
            assimilate(&predicted, &alloc.rates, &truth, &setup.grid, &setup.bank, &mut filter_rng, &mut meas_rng)?;
        particles = out.particles;
        steps.push(StepRecord {
            step,
            truth,
            estimate: out.estimate,
            rates: alloc.rates,
            matrix_sums: alloc.matrix_sums,
            candidates: alloc.candidates,
            newton_iterations: alloc.newton.map(|n| n.0),
            newton_decrement: alloc.newton.map(|n| n.1),
            degenerate: out.degenerate,
            alloc_seconds: secs,
        });
    }
    Ok(TrialRecord { trial, steps })
}

/// Per-step averages over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct MseSeries {
    pub mse: Vec<f64>,
    pub active_sensors: Vec<f64>,
}

impl MseSeries {
    /// Reduces in trial order so the sums are reproducible.
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let steps = records.first().map_or(0, |r| r.steps.len());
        let n = records.len() as f64;
        let mut mse = vec![0.0; steps];
        let mut active = vec![0.0; steps];
        for rec in records {
            for (k, s) in rec.steps.iter().enumerate() {
                mse[k] += s.squared_error();
                active[k] += s.active_sensors() as f64;
            }
        }
        MseSeries {
            mse: mse.into_iter().map(|v| v / n).collect(),
            active_sensors: active.into_iter().map(|v| v / n).collect(),
        }
    }

    /// Mean of the per-step MSE.
    pub fn time_average(&self) -> f64 {
        self.mse.iter().sum::<f64>() / self.mse.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub policy: Policy,
    pub trials: usize,
    pub mean_bits: f64,
    pub std_bits: f64,
    pub mean_matrix_sums: f64,
    pub mean_candidates: f64,
    pub mean_newton_iterations: f64,
    pub max_newton_iterations: usize,
    pub degenerate_trials: usize,
}

impl Summary {
    /// Bit statistics are over every (trial, step) allocation; `std_bits` is
    /// the sample standard deviation.
    pub fn from_records(policy: Policy, records: &[TrialRecord]) -> Self {
        let all: Vec<&StepRecord> = records.iter().flat_map(|r| &r.steps).collect();
        let n = all.len() as f64;
        let mean = |f: &dyn Fn(&StepRecord) -> f64| all.iter().map(|s| f(s)).sum::<f64>() / n;
        let mean_bits = mean(&|s| s.total_bits() as f64);
        let var = all.iter().map(|s| (s.total_bits() as f64 - mean_bits).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Summary {
            policy,
            trials: records.len(),
            mean_bits,
            std_bits: var.sqrt(),
            mean_matrix_sums: mean(&|s| s.matrix_sums as f64),
            mean_candidates: mean(&|s| s.candidates as f64),
            mean_newton_iterations: mean(&|s| s.newton_iterations.unwrap_or(0) as f64),
            max_newton_iterations: all.iter().filter_map(|s| s.newton_iterations).max().unwrap_or(0),
            degenerate_trials: records.iter().filter(|r| r.degenerate()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<TrialRecord>,
    pub series: MseSeries,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn mean_alloc_seconds(&self) -> f64 {
        let all: Vec<f64> = self.records.iter().flat_map(|r| r.steps.iter().map(|s| s.alloc_seconds)).collect();
        all.iter().sum::<f64>() / all.len() as f64
    }
}

/// Runs every trial (in parallel) and aggregates in trial order.
pub fn run_experiment_with(cfg: &ExperimentConfig, setup: &Setup) -> Result<ExperimentResult> {
    cfg.validate()?;
    let records: Vec<TrialRecord> =
        (0..cfg.trials as u64).into_par_iter().map(|t| run_trial(cfg, setup, t)).collect::<Result<_>>()?;
    let series = MseSeries::from_records(&records);
    let summary = Summary::from_records(cfg.policy, &records);
    Ok(ExperimentResult { records, series, summary })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    run_experiment_with(cfg, &Setup::new(cfg)?)
}

fn alloc_string(rates: &[usize]) -> String {
    rates.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("-")
}

/// Writes `mse.csv`, `trials.csv` and `summary.csv` (all deterministic given
/// config and seed) plus `timing.csv` (wall clock).
pub fn write_outputs(result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("mse.csv"))?;
    w.write_record(["step", "mse", "active_sensors"])?;
    for (k, (m, a)) in result.series.mse.iter().zip(&result.series.active_sensors).enumerate() {
        w.write_record([(k + 1).to_string(), fmt_f64(*m), fmt_f64(*a)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    w.write_record([
        "trial",
        "step",
        "truth_x",
        "truth_y",
        "est_x",
        "est_y",
        "alloc",
        "matrix_sums",
        "candidates",
        "newton_iterations",
        "newton_decrement",
        "degenerate",
    ])?;
    for rec in &result.records {
        for s in &rec.steps {
            w.write_record([
                rec.trial.to_string(),
                s.step.to_string(),
                fmt_f64(s.truth.x()),
                fmt_f64(s.truth.y()),
                fmt_f64(s.estimate.x()),
                fmt_f64(s.estimate.y()),
                alloc_string(&s.rates),
                s.matrix_sums.to_string(),
                s.candidates.to_string(),
                s.newton_iterations.map_or(String::new(), |v| v.to_string()),
                s.newton_decrement.map_or(String::new(), fmt_f64),
                u8::from(s.degenerate).to_string(),
            ])?;
        }
    }
    w.flush()?;

    let s = &result.summary;
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "policy",
        "trials",
        "mean_bits",
        "std_bits",
        "mean_matrix_sums",
        "mean_candidates",
        "mean_newton_iterations",
        "max_newton_iterations",
        "degenerate_trials",
        "time_avg_mse",
    ])?;
    w.write_record([
        s.policy.to_string(),
        s.trials.to_string(),
        fmt_f64(s.mean_bits),
        fmt_f64(s.std_bits),
        fmt_f64(s.mean_matrix_sums),
        fmt_f64(s.mean_candidates),
        fmt_f64(s.mean_newton_iterations),
        s.max_newton_iterations.to_string(),
        s.degenerate_trials.to_string(),
        fmt_f64(result.series.time_average()),
    ])?;
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["policy", "mean_alloc_seconds"])?;
    w.write_record([s.policy.to_string(), fmt_f64(result.mean_alloc_seconds())])?;
    w.flush()?;
    Ok(())
}

pub fn read_mse_csv(path: impl AsRef<Path>) -> Result<MseSeries> {
    let mut r = csv::Reader::from_path(path)?;
    let mut mse = Vec::new();
    let mut active = Vec::new();
    for (k, row) in r.records().enumerate() {
        let row = row?;
        if row.len() != 3 {
            return Err(Error::Format(format!("mse.csv row {} has {} fields", k + 2, row.len())));
        }
        mse.push(parse_num("mse", &row[1])?);
        active.push(parse_num("active_sensors", &row[2])?);
    }
    Ok(MseSeries { mse, active_sensors: active })
}
