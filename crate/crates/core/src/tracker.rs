//! SIR particle filter over quantized multi-sensor reports.
//!
//! One filter cycle is predict → (allocate) → update → estimate → resample.
//! Allocation is decided by the caller on the predicted cloud, before any
//! data for that step exists; [`track_step`] runs a whole cycle for a given
//! allocation.

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{GaussianFactor, MotionModel, SensorGrid, TargetState};
use crate::quantizer::QuantizerBank;

/// Likelihoods below this for every particle count as filter divergence.
pub const UNDERFLOW_LIKELIHOOD: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    states: Vec<TargetState>,
    weights: Vec<f64>,
}

/// One quantized report: `level` out of `2^rate` from `sensor_index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensorReport {
    pub sensor_index: usize,
    pub rate: u32,
    pub level: usize,
}

impl ParticleSet {
    /// Equally weighted particles.
    pub fn uniform(states: Vec<TargetState>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyParticles);
        }
        let w = 1.0 / states.len() as f64;
        let weights = vec![w; states.len()];
        Ok(ParticleSet { states, weights })
    }

    /// Particles with explicit weights, normalized here.
    pub fn weighted(states: Vec<TargetState>, weights: Vec<f64>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::EmptyParticles);
        }
        if weights.len() != states.len() {
            return Err(Error::InvalidParameter("one weight per particle required".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        Ok(ParticleSet { states, weights: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[TargetState] {
        &self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Propagate every particle with its own process-noise draw; weights reset
    /// to uniform.
    pub fn predict<R: Rng + ?Sized>(&self, model: &MotionModel, rng: &mut R) -> ParticleSet {
        let states = self.states.iter().map(|s| model.propagate(s, &model.sample_noise(rng))).collect();
        ParticleSet::uniform(states).expect("non-empty")
    }

    /// Multiply weights by the quantized likelihood of `reports` and
    /// renormalize. Returns `true` in the second slot when every particle's
    /// likelihood underflowed and the weights were reset to uniform.
    pub fn update_weights(
        &self,
        reports: &[SensorReport],
        grid: &SensorGrid,
        bank: &QuantizerBank,
    ) -> Result<(ParticleSet, bool)> {
        for r in reports {
            if r.sensor_index >= grid.len() {
                return Err(Error::InvalidParameter(format!("report from unknown sensor {}", r.sensor_index)));
            }
            let thr = bank
                .get(r.rate)
                .ok_or(Error::RateOutOfRange { rate: r.rate as usize, max: bank.max_rate() as usize })?;
            if r.rate == 0 {
                return Err(Error::ZeroRate);
            }
            if r.level >= thr.levels() {
                return Err(Error::LevelOutOfRange { level: r.level, rate: r.rate });
            }
        }
        if reports.is_empty() {
            return Ok((self.clone(), false));
        }
        let sigma = grid.signal.sigma;
        let loglik: Vec<f64> = self
            .states
            .iter()
            .map(|s| {
                reports
                    .iter()
                    .map(|r| {
                        let thr = bank.get(r.rate).expect("validated");
                        let a = grid.amplitude(r.sensor_index, s.position());
                        thr.level_probability(r.level, a, sigma).expect("validated").ln()
                    })
                    .sum()
            })
            .collect();
        let best = loglik.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(best >= UNDERFLOW_LIKELIHOOD.ln()) {
            return Ok((ParticleSet::uniform(self.states.clone())?, true));
        }
        let mut weights: Vec<f64> = self
            .weights
            .iter()
            .zip(&loglik)
            .map(|(w, l)| if *w > 0.0 { (w.ln() + l - best).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Ok((ParticleSet::uniform(self.states.clone())?, true));
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok((ParticleSet { states: self.states.clone(), weights }, false))
    }

    /// Weighted mean state.
    pub fn estimate(&self) -> TargetState {
        let v = self.states.iter().zip(&self.weights).fold(Vector4::zeros(), |acc, (s, w)| acc + s.0 * *w);
        TargetState(v)
    }

    /// Systematic resampling: one uniform offset, `N` evenly spaced pointers.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParticleSet {
        let n = self.len();
        let step = 1.0 / n as f64;
        let u0: f64 = rng.random::<f64>() * step;
        let mut out = Vec::with_capacity(n);
        let mut cum = self.weights[0];
        let mut s = 0;
        for k in 0..n {
            let u = u0 + k as f64 * step;
            while u > cum && s + 1 < n {
                s += 1;
                cum += self.weights[s];
            }
            out.push(self.states[s]);
        }
        ParticleSet::uniform(out).expect("non-empty")
    }
}

/// `n` draws from `N(mean, cov)` with uniform weights.
pub fn init_particles<R: Rng + ?Sized>(
    mean: &Vector4<f64>,
    cov: &Matrix4<f64>,
    n: usize,
    rng: &mut R,
) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::EmptyParticles);
    }
    let factor = GaussianFactor::new(cov)?;
    ParticleSet::uniform((0..n).map(|_| TargetState(mean + factor.sample(rng))).collect())
}

/// Quantized reports from every sensor with a non-zero rate, given one
/// measurement-noise sample per sensor (`noise[i]` is scaled by `σ`).
pub fn generate_reports(
    grid: &SensorGrid,
    bank: &QuantizerBank,
    rates: &[usize],
    truth: &TargetState,
    standard_noise: &[f64],
) -> Result<Vec<SensorReport>> {
    if rates.len() != grid.len() || standard_noise.len() != grid.len() {
        return Err(Error::InvalidParameter("rates and noise must cover every sensor".into()));
    }
    let mut reports = Vec::new();
    for (i, &m) in rates.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let thr = bank.get(m as u32).ok_or(Error::RateOutOfRange { rate: m, max: bank.max_rate() as usize })?;
        let z = grid.measure(i, truth.position(), grid.signal.sigma * standard_noise[i]).z;
        reports.push(SensorReport { sensor_index: i, rate: m as u32, level: thr.quantize(z)? });
    }
    Ok(reports)
}

/// Draw one standard-normal measurement noise value per sensor. Always draws
/// for every sensor so the stream does not depend on the allocation.
pub fn draw_measurement_noise<R: Rng + ?Sized>(sensors: usize, rng: &mut R) -> Vec<f64> {
    (0..sensors).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub particles: ParticleSet,
    pub estimate: TargetState,
    pub reports: Vec<SensorReport>,
    pub degenerate: bool,
}

/// Update, estimate and resample a predicted cloud against reports generated
/// at `truth`.
#[allow(clippy::too_many_arguments)]
pub fn assimilate<R: Rng + ?Sized, M: Rng + ?Sized>(
    predicted: &ParticleSet,
    rates: &[usize],
    truth: &TargetState,
    grid: &SensorGrid,
    bank: &QuantizerBank,
    filter_rng: &mut R,
    measurement_rng: &mut M,
) -> Result<StepResult> {
    let noise = draw_measurement_noise(grid.len(), measurement_rng);
    let reports = generate_reports(grid, bank, rates, truth, &noise)?;
    let (updated, degenerate) = predicted.update_weights(&reports, grid, bank)?;
    let estimate = updated.estimate();
    let particles = updated.resample(filter_rng);
    Ok(StepResult { particles, estimate, reports, degenerate })
}

/// One full filter cycle for a fixed allocation: predict, report, update,
/// estimate, resample.
#[allow(clippy::too_many_arguments)]
pub fn track_step<R: Rng + ?Sized, M: Rng + ?Sized>(
    particles: &ParticleSet,
    rates: &[usize],
    truth: &TargetState,
    grid: &SensorGrid,
    bank: &QuantizerBank,
    model: &MotionModel,
    filter_rng: &mut R,
    measurement_rng: &mut M,
) -> Result<StepResult> {
    let predicted = particles.predict(model, filter_rng);
    assimilate(&predicted, rates, truth, grid, bank, filter_rng, measurement_rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_motion, SignalParams};
    use crate::quantizer::{DesignSettings, ThresholdVector};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bank() -> QuantizerBank {
        let settings = DesignSettings { area_side: 20.0, signal: SignalParams::default(), sample_count: 1000, seed: 1 };
        let rates = vec![
            ThresholdVector::silent(),
            ThresholdVector::new(1, &[4.0]).unwrap(),
            ThresholdVector::new(2, &[2.5, 4.0, 7.0]).unwrap(),
        ];
        QuantizerBank::new(settings, rates, vec![0.0; 3]).unwrap()
    }

    fn grid() -> SensorGrid {
        SensorGrid::uniform(3, 20.0, SignalParams::default()).unwrap()
    }

    fn random_set(n: usize, seed: u64) -> ParticleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cov = Matrix4::from_diagonal(&Vector4::new(4.0, 4.0, 0.5, 0.5));
        init_particles(&Vector4::new(-3.0, 1.0, 1.0, 0.5), &cov, n, &mut rng).unwrap()
    }

    #[test]
    fn init_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mean = Vector4::new(-8.0, -8.0, 2.0, 2.0);
        let p = init_particles(&mean, &Matrix4::zeros(), 10, &mut rng).unwrap();
        assert!(p.states().iter().all(|s| s.0 == mean));
        assert!(p.weights().iter().all(|&w| w == 0.1));
        let bad = Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, 1.0, 1.0));
        assert!(init_particles(&mean, &bad, 10, &mut rng).is_err());
    }

    #[test]
    fn init_mean_within_clt_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let sd = Vector4::new(2.0 / 3.0, 2.0 / 3.0, 0.1, 0.1);
        let cov = Matrix4::from_diagonal(&sd.component_mul(&sd));
        let mean = Vector4::new(-8.0, -8.0, 2.0, 2.0);
        let n = 20_000;
        let p = init_particles(&mean, &cov, n, &mut rng).unwrap();
        let m = p.estimate().0;
        for k in 0..4 {
            assert!((m[k] - mean[k]).abs() <= 4.0 * sd[k] / (n as f64).sqrt());
        }
    }

    #[test]
    fn predict_without_noise_is_deterministic() {
        let model = build_motion(0.5, 0.0).unwrap();
        let p = random_set(50, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = p.predict(&model, &mut rng);
        for (a, b) in p.states().iter().zip(q.states()) {
            assert_eq!(b.0, model.transition * a.0);
        }
        assert!(q.weights().iter().all(|&w| w == 1.0 / 50.0));
    }

    #[test]
    fn predict_noise_covariance_matches_model() {
        let model = build_motion(0.5, 0.1).unwrap();
        let n = 200_000;
        let p = ParticleSet::uniform(vec![TargetState::new(1.0, 2.0, 0.5, -0.5); n]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let q = p.predict(&model, &mut rng);
        let base = model.transition * p.states()[0].0;
        let mut cov = Matrix4::zeros();
        for s in q.states() {
            let d = s.0 - base;
            cov += d * d.transpose();
        }
        cov /= n as f64;
        let scale = model.process_cov.abs().max();
        assert!((cov - model.process_cov).abs().max() <= 0.02 * scale);
    }

    #[test]
    fn silent_update_keeps_weights() {
        let p =
            ParticleSet::weighted(random_set(10, 2).states().to_vec(), (1..=10).map(|k| k as f64).collect()).unwrap();
        let (q, degenerate) = p.update_weights(&[], &grid(), &bank()).unwrap();
        assert_eq!(q, p);
        assert!(!degenerate);
    }

    #[test]
    fn flat_likelihood_keeps_weights() {
        // every particle at the same distance from sensor 4 (origin)
        let states: Vec<TargetState> = (0..8)
            .map(|k| {
                let t = k as f64 * std::f64::consts::PI / 4.0;
                TargetState::new(3.0 * t.cos(), 3.0 * t.sin(), 0.0, 0.0)
            })
            .collect();
        let p = ParticleSet::weighted(states, (1..=8).map(|k| k as f64).collect()).unwrap();
        let report = SensorReport { sensor_index: 4, rate: 2, level: 2 };
        let (q, _) = p.update_weights(&[report], &grid(), &bank()).unwrap();
        for (a, b) in p.weights().iter().zip(q.weights()) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn joint_update_equals_sequential() {
        let p = random_set(10, 3);
        let g = grid();
        let b = bank();
        let r1 = SensorReport { sensor_index: 0, rate: 2, level: 1 };
        let r2 = SensorReport { sensor_index: 4, rate: 1, level: 1 };
        let (joint, _) = p.update_weights(&[r1, r2], &g, &b).unwrap();
        let (first, _) = p.update_weights(&[r1], &g, &b).unwrap();
        let (seq, _) = first.update_weights(&[r2], &g, &b).unwrap();
        for (a, c) in joint.weights().iter().zip(seq.weights()) {
            assert!((a - c).abs() <= 1e-12, "{a} vs {c}");
        }
        assert!((joint.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn update_rejects_bad_reports() {
        let p = random_set(10, 4);
        let bad_level = SensorReport { sensor_index: 0, rate: 1, level: 2 };
        assert!(p.update_weights(&[bad_level], &grid(), &bank()).is_err());
        let bad_rate = SensorReport { sensor_index: 0, rate: 3, level: 0 };
        assert!(p.update_weights(&[bad_rate], &grid(), &bank()).is_err());
    }

    #[test]
    fn underflow_resets_uniform() {
        // all particles far from a sensor that reported its top level
        let states = vec![TargetState::new(10.0, 10.0, 0.0, 0.0); 6];
        let b = {
            let settings =
                DesignSettings { area_side: 20.0, signal: SignalParams::default(), sample_count: 1000, seed: 1 };
            QuantizerBank::new(
                settings,
                vec![ThresholdVector::silent(), ThresholdVector::new(1, &[31.0]).unwrap()],
                vec![0.0; 2],
            )
            .unwrap()
        };
        let mut reports = Vec::new();
        for _ in 0..20 {
            reports.push(SensorReport { sensor_index: 0, rate: 1, level: 1 });
        }
        let p = ParticleSet::weighted(states, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let (q, degenerate) = p.update_weights(&reports, &grid(), &b).unwrap();
        assert!(degenerate);
        assert!(q.weights().iter().all(|&w| (w - 1.0 / 6.0).abs() < 1e-15));
    }

    #[test]
    fn estimate_examples() {
        let pair =
            ParticleSet::uniform(vec![TargetState::new(1.0, 2.0, 3.0, 4.0), TargetState::new(3.0, 4.0, 5.0, 6.0)])
                .unwrap();
        assert_eq!(pair.estimate(), TargetState::new(2.0, 3.0, 4.0, 5.0));
        let one = ParticleSet::weighted(pair.states().to_vec(), vec![0.0, 1.0]).unwrap();
        assert_eq!(one.estimate(), pair.states()[1]);

        let p =
            ParticleSet::weighted(random_set(37, 5).states().to_vec(), (0..37).map(|k| (k % 5) as f64 + 0.5).collect())
                .unwrap();
        let est = p.estimate();
        for c in 0..4 {
            let direct: f64 = (0..p.len()).map(|s| p.weights()[s] * p.states()[s].0[c]).sum();
            assert!((est.0[c] - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn resample_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let base = random_set(20, 6);
        let mut w = vec![0.0; 20];
        w[7] = 1.0;
        let spike = ParticleSet::weighted(base.states().to_vec(), w).unwrap();
        let r = spike.resample(&mut rng);
        assert!(r.states().iter().all(|s| *s == base.states()[7]));

        let r = base.resample(&mut rng);
        assert!(r.weights().iter().all(|&x| x == 1.0 / 20.0));
        // uniform input under systematic resampling keeps every particle exactly once
        for s in base.states() {
            assert_eq!(r.states().iter().filter(|t| *t == s).count(), 1);
        }
    }

    #[test]
    fn all_zero_allocation_estimate_is_predicted_mean() {
        let g = grid();
        let b = bank();
        let model = build_motion(0.5, 0.01).unwrap();
        let p = random_set(100, 7);
        let mut f1 = ChaCha8Rng::seed_from_u64(1);
        let mut m1 = ChaCha8Rng::seed_from_u64(2);
        let out =
            track_step(&p, &[0; 9], &TargetState::new(0.0, 0.0, 1.0, 1.0), &g, &b, &model, &mut f1, &mut m1).unwrap();
        let mut f2 = ChaCha8Rng::seed_from_u64(1);
        let predicted = p.predict(&model, &mut f2);
        let mean = predicted.estimate();
        assert!((out.estimate.0 - mean.0).abs().max() < 1e-12);
        assert!(out.reports.is_empty());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn systematic_multiplicity_within_one(raw in proptest::collection::vec(0.0f64..1.0, 2..60), seed in any::<u64>()) {
                prop_assume!(raw.iter().sum::<f64>() > 1e-6);
                let n = raw.len();
                let states: Vec<TargetState> = (0..n).map(|k| TargetState::new(k as f64, 0.0, 0.0, 0.0)).collect();
                let p = ParticleSet::weighted(states.clone(), raw).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let r = p.resample(&mut rng);
                prop_assert_eq!(r.len(), n);
                for (k, s) in states.iter().enumerate() {
                    let count = r.states().iter().filter(|t| *t == s).count() as f64;
                    let expect = n as f64 * p.weights()[k];
                    prop_assert!(count >= expect.floor() - 1e-9 - 1e-9 * expect && count <= expect.ceil() + 1e-9,
                        "particle {} count {} expected {}", k, count, expect);
                }
            }

            #[test]
            fn weights_normalized_after_update(seed in any::<u64>(), level in 0usize..4, sensor in 0usize..9) {
                let p = random_set(50, seed);
                let (q, _) = p.update_weights(&[SensorReport { sensor_index: sensor, rate: 2, level }], &grid(), &bank()).unwrap();
                prop_assert!((q.weights().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
    }
}
