//! Target kinematics, sensor layout and the received-signal model.
//!
//! The target moves under a discretized white-noise-acceleration model with
//! state `(x, y, vx, vy)`. Each sensor receives an amplitude that decays with
//! distance as `a² = P₀ / (1 + α dⁿ)` and observes it in additive Gaussian noise.
//!
//! Nothing here draws random numbers on its own: noise samples are either
//! passed in or drawn from an RNG the caller owns.

use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Kinematic target state `(x, y, vx, vy)`, positions in metres and velocities in m/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetState(pub Vector4<f64>);

impl TargetState {
    pub fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        TargetState(Vector4::new(x, y, vx, vy))
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn position(&self) -> (f64, f64) {
        (self.0[0], self.0[1])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// Factor `L` with `L Lᵀ = Σ` for a PSD covariance, used to draw correlated
/// Gaussian vectors. Built from the eigendecomposition so singular (for
/// instance all-zero) covariances are accepted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFactor(Matrix4<f64>);

impl GaussianFactor {
    pub fn new(cov: &Matrix4<f64>) -> Result<Self> {
        let asym = (cov - cov.transpose()).abs().max();
        let scale = cov.abs().max().max(1.0);
        if asym > 1e-12 * scale {
            return Err(Error::NotSymmetric(asym));
        }
        let eig = SymmetricEigen::new(*cov);
        let mut sqrt = Vector4::zeros();
        for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
            if lambda < -1e-10 * scale {
                return Err(Error::NotPsd);
            }
            sqrt[k] = lambda.max(0.0).sqrt();
        }
        Ok(GaussianFactor(eig.eigenvectors * Matrix4::from_diagonal(&sqrt)))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        let w = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        self.0 * w
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }
}

/// Discretized white-noise-acceleration motion.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionModel {
    pub dt: f64,
    pub rho: f64,
    pub transition: Matrix4<f64>,
    pub process_cov: Matrix4<f64>,
    noise: GaussianFactor,
}

impl MotionModel {
    pub fn new(dt: f64, rho: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("process noise intensity must be >= 0, got {rho}")));
        }
        #[rustfmt::skip]
        let transition = Matrix4::new(
            1.0, 0.0, dt,  0.0,
            0.0, 1.0, 0.0, dt,
            0.0, 0.0, 1.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        let d3 = dt.powi(3) / 3.0;
        let d2 = dt.powi(2) / 2.0;
        #[rustfmt::skip]
        let process_cov = rho * Matrix4::new(
            d3,  0.0, d2,  0.0,
            0.0, d3,  0.0, d2,
            d2,  0.0, dt,  0.0,
            0.0, d2,  0.0, dt,
        );
        let noise = GaussianFactor::new(&process_cov)?;
        Ok(MotionModel { dt, rho, transition, process_cov, noise })
    }

    /// `F x + noise`.
    pub fn propagate(&self, state: &TargetState, noise: &Vector4<f64>) -> TargetState {
        TargetState(self.transition * state.0 + noise)
    }

    /// Draw one process-noise vector from `N(0, Q)`.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector4<f64> {
        self.noise.sample(rng)
    }
}

/// Shorthand for [`MotionModel::new`].
pub fn build_motion(dt: f64, rho: f64) -> Result<MotionModel> {
    MotionModel::new(dt, rho)
}

/// Signal attenuation parameters shared by every sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalParams {
    /// Source power `P₀`.
    pub p0: f64,
    /// Scaling `α`.
    pub alpha: f64,
    /// Decay exponent `n`.
    pub n_exp: f64,
    /// Measurement noise standard deviation `σ`.
    pub sigma: f64,
}

impl SignalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p0", self.p0), ("alpha", self.alpha), ("n_exp", self.n_exp), ("sigma", self.sigma)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Received amplitude at distance `d`.
    pub fn amplitude_at(&self, d: f64) -> f64 {
        (self.p0 / (1.0 + self.alpha * d.powf(self.n_exp))).sqrt()
    }
}

impl Default for SignalParams {
    fn default() -> Self {
        SignalParams { p0: 1e3, alpha: 1.0, n_exp: 2.0, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGrid {
    pub positions: Vec<(f64, f64)>,
    pub signal: SignalParams,
}

/// A single quantizable sensor reading `z = a + noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub sensor_index: usize,
    pub z: f64,
}

impl SensorGrid {
    pub fn new(positions: Vec<(f64, f64)>, signal: SignalParams) -> Result<Self> {
        signal.validate()?;
        if positions.is_empty() {
            return Err(Error::InvalidParameter("sensor grid needs at least one sensor".into()));
        }
        for (i, p) in positions.iter().enumerate() {
            if !p.0.is_finite() || !p.1.is_finite() {
                return Err(Error::InvalidParameter(format!("sensor {i} has a non-finite position")));
            }
            if positions[..i].contains(p) {
                return Err(Error::InvalidParameter(format!("sensor {i} duplicates an earlier position")));
            }
        }
        Ok(SensorGrid { positions, signal })
    }

    /// `count_per_side²` sensors on a uniform lattice spanning
    /// `[-area_side/2, area_side/2]²`, corners included. Sensors are numbered
    /// row by row starting from the `(-b/2, -b/2)` corner.
    pub fn uniform(count_per_side: usize, area_side: f64, signal: SignalParams) -> Result<Self> {
        if count_per_side == 0 {
            return Err(Error::InvalidParameter("grid needs at least one sensor per side".into()));
        }
        if !(area_side > 0.0) {
            return Err(Error::InvalidParameter(format!("area side must be positive, got {area_side}")));
        }
        let coords: Vec<f64> = if count_per_side == 1 {
            vec![0.0]
        } else {
            let step = area_side / (count_per_side - 1) as f64;
            (0..count_per_side).map(|k| -area_side / 2.0 + k as f64 * step).collect()
        };
        let positions = coords.iter().flat_map(|&y| coords.iter().map(move |&x| (x, y))).collect();
        SensorGrid::new(positions, signal)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn distance(&self, i: usize, pos: (f64, f64)) -> f64 {
        let (sx, sy) = self.positions[i];
        (sx - pos.0).hypot(sy - pos.1)
    }

    /// Amplitude received by sensor `i` from a source at `pos`.
    pub fn amplitude(&self, i: usize, pos: (f64, f64)) -> f64 {
        self.signal.amplitude_at(self.distance(i, pos))
    }

    pub fn measure(&self, i: usize, pos: (f64, f64), noise_sample: f64) -> Measurement {
        Measurement { sensor_index: i, z: self.amplitude(i, pos) + noise_sample }
    }

    /// Index of the sensor closest to `pos`; ties go to the lowest index.
    pub fn nearest(&self, pos: (f64, f64)) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for i in 0..self.len() {
            let d = self.distance(i, pos);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// Shorthand for [`SensorGrid::uniform`].
pub fn build_grid(count_per_side: usize, area_side: f64, signal: SignalParams) -> Result<SensorGrid> {
    SensorGrid::uniform(count_per_side, area_side, signal)
}
