//! Sensor quantizers: threshold vectors, the level map, level probabilities,
//! the amplitude-information kernel `κ`, and offline threshold design.
//!
//! An `m`-bit quantizer has `2^m` output levels separated by `2^m − 1`
//! strictly increasing interior thresholds. The outer boundaries are `±∞`.
//! A 0-bit "quantizer" is silence: it produces no report and its likelihood
//! is identically 1.
//!
//! Thresholds are designed to maximize the Fisher information about the
//! received amplitude, `4κ`, averaged over sensor/target geometries drawn
//! uniformly from the surveillance square.

use std::f64::consts::{PI, SQRT_2};
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::SignalParams;

/// Levels whose probability falls below this contribute nothing to `κ`.
pub const P_FLOOR: f64 = 1e-12;

/// Upper tail `Q(x) = P(N(0,1) > x)`.
pub fn gaussian_upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `P(u1 < N(0,1) < u2)` for `u1 <= u2`, evaluated on whichever tail keeps
/// the subtraction well conditioned.
pub fn gaussian_interval(u1: f64, u2: f64) -> f64 {
    let p = if u1 >= 0.0 {
        gaussian_upper_tail(u1) - gaussian_upper_tail(u2)
    } else if u2 <= 0.0 {
        gaussian_upper_tail(-u2) - gaussian_upper_tail(-u1)
    } else {
        1.0 - gaussian_upper_tail(-u1) - gaussian_upper_tail(u2)
    };
    p.max(0.0)
}

/// Beyond this many standard deviations both the bump and the tail are below
/// 1e−28 and are treated as zero.
const EDGE_CUTOFF: f64 = 11.5;

/// A threshold seen from one amplitude: standardized offset `u`, bump
/// `exp(−u²/2)` and the smaller tail `Q(|u|)`.
#[derive(Debug, Clone, Copy)]
struct Edge {
    u: f64,
    e: f64,
    tail: f64,
}

impl Edge {
    const LOW: Edge = Edge { u: f64::NEG_INFINITY, e: 0.0, tail: 0.0 };
    const HIGH: Edge = Edge { u: f64::INFINITY, e: 0.0, tail: 0.0 };

    #[inline]
    fn at(u: f64) -> Edge {
        if u.abs() > EDGE_CUTOFF {
            Edge { u, e: 0.0, tail: 0.0 }
        } else {
            Edge { u, e: (-0.5 * u * u).exp(), tail: gaussian_upper_tail(u.abs()) }
        }
    }
}

/// Same split as [`gaussian_interval`], from cached tails.
#[inline]
fn edge_interval(lo: &Edge, hi: &Edge) -> f64 {
    let p = if lo.u >= 0.0 {
        lo.tail - hi.tail
    } else if hi.u <= 0.0 {
        hi.tail - lo.tail
    } else {
        1.0 - lo.tail - hi.tail
    };
    p.max(0.0)
}

/// One level's contribution to `Σ_l (e_l − e_{l+1})² / p_l`, with the
/// probability floor applied.
#[inline]
fn edge_term(lo: &Edge, hi: &Edge) -> f64 {
    let p = edge_interval(lo, hi);
    if p >= P_FLOOR {
        let d = lo.e - hi.e;
        d * d / p
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdVector {
    rate: u32,
    /// `η_0 = -∞, η_1, …, η_{2^m - 1}, η_{2^m} = +∞`.
    boundaries: Vec<f64>,
}

impl ThresholdVector {
    /// The 0-bit quantizer.
    pub fn silent() -> Self {
        ThresholdVector { rate: 0, boundaries: vec![f64::NEG_INFINITY, f64::INFINITY] }
    }

    pub fn new(rate: u32, interior: &[f64]) -> Result<Self> {
        if rate > 20 {
            return Err(Error::InvalidParameter(format!("rate {rate} is unreasonably large")));
        }
        let expected = (1usize << rate) - 1;
        if interior.len() != expected {
            return Err(Error::InvalidParameter(format!(
                "a {rate}-bit quantizer needs {expected} interior thresholds, got {}",
                interior.len()
            )));
        }
        if interior.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("thresholds must be finite".into()));
        }
        if interior.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("thresholds must be strictly increasing".into()));
        }
        let mut boundaries = Vec::with_capacity(interior.len() + 2);
        boundaries.push(f64::NEG_INFINITY);
        boundaries.extend_from_slice(interior);
        boundaries.push(f64::INFINITY);
        Ok(ThresholdVector { rate, boundaries })
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn levels(&self) -> usize {
        1 << self.rate
    }

    pub fn interior(&self) -> &[f64] {
        &self.boundaries[1..self.boundaries.len() - 1]
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Level `l` with `η_l <= z < η_{l+1}`.
    pub fn quantize(&self, z: f64) -> Result<usize> {
        if self.rate == 0 {
            return Err(Error::ZeroRate);
        }
        Ok(self.interior().partition_point(|&t| t <= z))
    }

    /// `P(level = l | a)` for an observation `a + N(0, σ²)`.
    pub fn level_probability(&self, level: usize, a: f64, sigma: f64) -> Result<f64> {
        if level >= self.levels() {
            return Err(Error::LevelOutOfRange { level, rate: self.rate });
        }
        if self.rate == 0 {
            return Ok(1.0);
        }
        Ok(gaussian_interval((self.boundaries[level] - a) / sigma, (self.boundaries[level + 1] - a) / sigma))
    }

    /// All `2^m` level probabilities at once.
    pub fn level_probabilities(&self, a: f64, sigma: f64) -> Vec<f64> {
        if self.rate == 0 {
            return vec![1.0];
        }
        self.boundaries.windows(2).map(|w| gaussian_interval((w[0] - a) / sigma, (w[1] - a) / sigma)).collect()
    }

    /// The information kernel `κ`; `4κ` is the Fisher information about `a`
    /// carried by one quantized report.
    pub fn kappa(&self, a: f64, sigma: f64) -> f64 {
        if self.rate == 0 {
            return 0.0;
        }
        let mut sum = 0.0;
        let mut lo = Edge::LOW;
        for &b in &self.boundaries[1..self.boundaries.len() - 1] {
            let hi = Edge::at((b - a) / sigma);
            sum += edge_term(&lo, &hi);
            lo = hi;
        }
        sum += edge_term(&lo, &Edge::HIGH);
        sum / (8.0 * PI * sigma * sigma)
    }
}

/// Free-function form of [`ThresholdVector::quantize`].
pub fn quantize(z: f64, thr: &ThresholdVector) -> Result<usize> {
    thr.quantize(z)
}

/// Free-function form of [`ThresholdVector::level_probability`].
pub fn level_probability(level: usize, a: f64, sigma: f64, thr: &ThresholdVector) -> Result<f64> {
    thr.level_probability(level, a, sigma)
}

/// Free-function form of [`ThresholdVector::kappa`].
pub fn kappa(a: f64, sigma: f64, thr: &ThresholdVector) -> f64 {
    thr.kappa(a, sigma)
}

/// Settings for offline threshold design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSettings {
    pub area_side: f64,
    pub signal: SignalParams,
    pub sample_count: usize,
    pub seed: u64,
}

impl DesignSettings {
    pub fn validate(&self) -> Result<()> {
        self.signal.validate()?;
        if !(self.area_side > 0.0) {
            return Err(Error::InvalidParameter("area side must be positive".into()));
        }
        if self.sample_count < 1000 {
            return Err(Error::InvalidParameter(format!(
                "threshold design needs at least 1000 samples, got {}",
                self.sample_count
            )));
        }
        Ok(())
    }

    /// Amplitudes for i.i.d. uniform sensor and target positions in the square.
    pub fn amplitude_samples(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let h = self.area_side / 2.0;
        (0..self.sample_count)
            .map(|_| {
                let mut coord = || rng.random_range(-h..h);
                let (sx, sy, tx, ty) = (coord(), coord(), coord(), coord());
                let u = (sx - tx).powi(2) + (sy - ty).powi(2);
                (self.signal.p0 / (1.0 + self.signal.alpha * u.powf(self.signal.n_exp / 2.0))).sqrt()
            })
            .collect()
    }
}

/// Monte Carlo estimate of the design objective `E[4κ]` over amplitude samples.
pub fn design_objective(thr: &ThresholdVector, amplitudes: &[f64], sigma: f64) -> f64 {
    let total: f64 = amplitudes.iter().map(|&a| 4.0 * thr.kappa(a, sigma)).sum();
    total / amplitudes.len() as f64
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Coordinate-ascent design of an `m`-bit quantizer. Returns the thresholds and
/// the objective estimate `Ê[4κ]` at them.
pub fn optimize_thresholds(rate: u32, settings: &DesignSettings) -> Result<(ThresholdVector, f64)> {
    if rate == 0 {
        return Err(Error::InvalidParameter("threshold design needs rate >= 1".into()));
    }
    settings.validate()?;
    let amps = settings.amplitude_samples();
    optimize_on_samples(rate, &amps, settings.signal.sigma)
}

/// Same as [`optimize_thresholds`] on a caller-supplied amplitude sample.
///
/// The search runs on the sorted sample merged into weighted groups no wider
/// than `σ/128` (the kernel is smooth on the scale of `σ`); the returned
/// objective is evaluated on the raw sample.
pub fn optimize_on_samples(rate: u32, amps: &[f64], sigma: f64) -> Result<(ThresholdVector, f64)> {
    if amps.is_empty() {
        return Err(Error::InvalidParameter("threshold design needs samples".into()));
    }
    let k = (1usize << rate) - 1;
    let mut sorted = amps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut t: Vec<f64> = (1..=k).map(|j| sorted[((j * n) / (k + 1)).min(n - 1)]).collect();
    // Quantiles of a sample can coincide; spread ties minimally.
    for j in 1..k {
        if t[j] <= t[j - 1] {
            t[j] = t[j - 1] + 1e-9 * sigma.max(t[j - 1].abs());
        }
    }
    let lo_limit = sorted[0] - 8.0 * sigma;
    let hi_limit = sorted[n - 1] + 8.0 * sigma;

    let (pts, wts) = group_samples(&sorted, sigma / 128.0);
    let weighted = |t: &[f64]| -> f64 {
        let thr = ThresholdVector::new(rate, t).expect("thresholds kept increasing");
        pts.iter().zip(&wts).map(|(&a, &w)| w * thr.kappa(a, sigma)).sum::<f64>()
    };
    // cached edges for every (threshold, group)
    let edges_of = |x: f64| -> Vec<Edge> { pts.iter().map(|&a| Edge::at((x - a) / sigma)).collect() };
    let mut edges: Vec<Vec<Edge>> = t.iter().map(|&x| edges_of(x)).collect();

    let initial = weighted(&t);
    let mut current = initial;
    let x_tol = 1e-6 * sigma;
    // groups further than this from a bracket contribute exactly zero to
    // the two affected levels (probability floor)
    let margin = 9.0 * sigma;

    for _sweep in 0..60 {
        let mut moved = 0.0f64;
        for j in 0..k {
            let lo = if j == 0 { lo_limit.min(t[0] - sigma) } else { t[j - 1] };
            let hi = if j + 1 == k { hi_limit.max(t[k - 1] + sigma) } else { t[j + 1] };
            let width = hi - lo;
            if !(width > 4.0 * x_tol) {
                continue;
            }
            let first = pts.partition_point(|&a| a < lo - margin);
            let last = pts.partition_point(|&a| a <= hi + margin);
            // Only the two levels adjacent to threshold j depend on it.
            let partial = |x: f64| -> f64 {
                let mut s = 0.0;
                for idx in first..last {
                    let ex = Edge::at((x - pts[idx]) / sigma);
                    let el = if j == 0 { &Edge::LOW } else { &edges[j - 1][idx] };
                    let eh = if j + 1 == k { &Edge::HIGH } else { &edges[j + 1][idx] };
                    s += wts[idx] * (edge_term(el, &ex) + edge_term(&ex, eh));
                }
                s
            };
            let (mut a, mut b) = (lo + x_tol, hi - x_tol);
            let mut c = b - GOLDEN * (b - a);
            let mut d = a + GOLDEN * (b - a);
            let (mut fc, mut fd) = (partial(c), partial(d));
            while b - a > x_tol {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLDEN * (b - a);
                    fc = partial(c);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLDEN * (b - a);
                    fd = partial(d);
                }
            }
            let (cand, fcand) = if fc >= fd { (c, fc) } else { (d, fd) };
            let fcur = partial(t[j]);
            // Reject candidates that would collapse onto a neighbour.
            let collapses = (j > 0 && !(cand > t[j - 1])) || (j + 1 < k && !(cand < t[j + 1]));
            if fcand > fcur && !collapses {
                moved = moved.max((cand - t[j]).abs());
                t[j] = cand;
                edges[j] = edges_of(cand);
            }
        }
        let next = weighted(&t);
        let gain = next - current;
        current = next;
        if moved <= 10.0 * x_tol || gain <= 1e-9 * current.abs() {
            break;
        }
    }
    debug_assert!(current >= initial - 1e-12 * initial.abs());
    let thr = ThresholdVector::new(rate, &t)?;
    let objective = design_objective(&thr, amps, sigma);
    Ok((thr, objective))
}

/// Merges a sorted sample into groups spanning at most `width`; returns the
/// group means and counts.
fn group_samples(sorted: &[f64], width: f64) -> (Vec<f64>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] - sorted[start] <= width {
            end += 1;
        }
        let group = &sorted[start..end];
        pts.push(group.iter().sum::<f64>() / group.len() as f64);
        wts.push(group.len() as f64);
        start = end;
    }
    (pts, wts)
}

/// Per-rate quantizers for `m = 0..=max_rate`, identical at every sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerBank {
    pub settings: DesignSettings,
    rates: Vec<ThresholdVector>,
    objectives: Vec<f64>,
}

impl QuantizerBank {
    pub fn new(settings: DesignSettings, rates: Vec<ThresholdVector>, objectives: Vec<f64>) -> Result<Self> {
        if rates.is_empty() || rates.len() != objectives.len() {
            return Err(Error::InvalidParameter("bank needs one objective per rate".into()));
        }
        for (m, thr) in rates.iter().enumerate() {
            if thr.rate() as usize != m {
                return Err(Error::InvalidParameter(format!("bank entry {m} holds a {}-bit quantizer", thr.rate())));
            }
        }
        Ok(QuantizerBank { settings, rates, objectives })
    }

    /// Design every rate in `1..=max_rate` (in parallel across rates).
    pub fn design(max_rate: u32, settings: DesignSettings) -> Result<Self> {
        settings.validate()?;
        let amps = settings.amplitude_samples();
        let designed: Vec<(ThresholdVector, f64)> = (1..=max_rate)
            .into_par_iter()
            .map(|m| optimize_on_samples(m, &amps, settings.signal.sigma))
            .collect::<Result<_>>()?;
        let mut rates = vec![ThresholdVector::silent()];
        let mut objectives = vec![0.0];
        for (thr, obj) in designed {
            rates.push(thr);
            objectives.push(obj);
        }
        QuantizerBank::new(settings, rates, objectives)
    }

    pub fn max_rate(&self) -> u32 {
        (self.rates.len() - 1) as u32
    }

    pub fn get(&self, rate: u32) -> Option<&ThresholdVector> {
        self.rates.get(rate as usize)
    }

    pub fn objective(&self, rate: u32) -> Option<f64> {
        self.objectives.get(rate as usize).copied()
    }

    pub fn sigma(&self) -> f64 {
        self.settings.signal.sigma
    }

    pub fn to_text(&self) -> String {
        let s = &self.settings;
        let mut out = String::from("# quantizer bank\n");
        let _ = writeln!(out, "seed = {}", s.seed);
        let _ = writeln!(out, "sample_count = {}", s.sample_count);
        let _ = writeln!(out, "area_side = {}", fmt_f64(s.area_side));
        let _ = writeln!(out, "p0 = {}", fmt_f64(s.signal.p0));
        let _ = writeln!(out, "alpha = {}", fmt_f64(s.signal.alpha));
        let _ = writeln!(out, "n_exp = {}", fmt_f64(s.signal.n_exp));
        let _ = writeln!(out, "sigma = {}", fmt_f64(s.signal.sigma));
        for m in 1..self.rates.len() {
            let _ = writeln!(out, "\n[rate {m}]");
            let _ = writeln!(out, "objective_estimate = {}", fmt_f64(self.objectives[m]));
            let joined: Vec<String> = self.rates[m].interior().iter().map(|&v| fmt_f64(v)).collect();
            let _ = writeln!(out, "interior_thresholds = {}", joined.join(", "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut sections: Vec<(u32, Option<f64>, Option<Vec<f64>>)> = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Config { line: line_no, msg };
            if let Some(rest) = line.strip_prefix("[rate ").and_then(|r| r.strip_suffix(']')) {
                let m: u32 = rest.trim().parse().map_err(|_| bad(format!("bad rate header `{line}`")))?;
                if m as usize != sections.len() + 1 {
                    return Err(bad(format!("rate sections must be consecutive from 1, found {m}")));
                }
                sections.push((m, None, None));
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            match sections.last_mut() {
                None => {
                    if !["seed", "sample_count", "area_side", "p0", "alpha", "n_exp", "sigma"].contains(&key) {
                        return Err(bad(format!("unknown key `{key}`")));
                    }
                    if header.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                        return Err(bad(format!("duplicate key `{key}`")));
                    }
                }
                Some((_, obj, thr)) => match key {
                    "objective_estimate" => {
                        *obj = Some(value.parse().map_err(|_| bad(format!("bad number `{value}`")))?);
                    }
                    "interior_thresholds" => {
                        let vals = value
                            .split(',')
                            .map(|v| v.trim().parse::<f64>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| bad(format!("bad threshold list `{value}`")))?;
                        *thr = Some(vals);
                    }
                    _ => return Err(bad(format!("unknown key `{key}`"))),
                },
            }
        }
        let get = |k: &str| -> Result<(usize, String)> {
            header.get(k).cloned().ok_or_else(|| Error::MissingKey(k.to_string()))
        };
        let num = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| Error::Config { line, msg: format!("bad number `{v}` for `{k}`") })
        };
        let int = |k: &str| -> Result<u64> {
            let (line, v) = get(k)?;
            v.parse().map_err(|_| Error::Config { line, msg: format!("bad integer `{v}` for `{k}`") })
        };
        let settings = DesignSettings {
            area_side: num("area_side")?,
            signal: SignalParams { p0: num("p0")?, alpha: num("alpha")?, n_exp: num("n_exp")?, sigma: num("sigma")? },
            sample_count: int("sample_count")? as usize,
            seed: int("seed")?,
        };
        let mut rates = vec![ThresholdVector::silent()];
        let mut objectives = vec![0.0];
        for (m, obj, thr) in sections {
            let obj = obj.ok_or_else(|| Error::MissingKey(format!("rate {m}: objective_estimate")))?;
            let thr = thr.ok_or_else(|| Error::MissingKey(format!("rate {m}: interior_thresholds")))?;
            rates.push(ThresholdVector::new(m, &thr)?);
            objectives.push(obj);
        }
        QuantizerBank::new(settings, rates, objectives)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        QuantizerBank::from_text(&std::fs::read_to_string(path)?)
    }
}

/// 17 significant digits: enough for an exact `f64` round trip.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
