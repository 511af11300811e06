//! Fisher information for the allocation objective.
//!
//! A sensor quantizing at rate `m` contributes a rank-one position block
//!
//! ```text
//! J_i(m | x) = n² κ(m, a) a² α² d^(2n-4) / (1 + α dⁿ)² · [Δx², ΔxΔy; ΔxΔy, Δy²]
//! ```
//!
//! (zero velocity rows/columns), where `Δ = sensor − target`. Averaging over
//! the predicted particle cloud gives the per-sensor atoms `J_i(m)`; the prior
//! information is the inverse of the cloud's sample covariance. The total
//! information for an allocation is the prior plus one atom per sensor.

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{SensorGrid, TargetState};
use crate::quantizer::QuantizerBank;
use crate::tracker::ParticleSet;

/// 4×4 Fisher information over `(x, y, vx, vy)`.
pub type Fim = Matrix4<f64>;

/// Relative regularization added to the prior covariance before inversion.
pub const PRIOR_REGULARIZATION: f64 = 1e-9;

/// Scalar factor and offsets of a sensor's rank-one information block, with
/// `κ` left out. `None` when the target sits on the sensor.
fn geometry(grid: &SensorGrid, i: usize, pos: (f64, f64)) -> Option<(f64, f64, f64, f64)> {
    let (sx, sy) = grid.positions[i];
    let (dx, dy) = (sx - pos.0, sy - pos.1);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return None;
    }
    let s = &grid.signal;
    let adn = s.alpha * d.powf(s.n_exp);
    let a2 = s.p0 / (1.0 + adn);
    let coeff = s.n_exp * s.n_exp * a2 * s.alpha * s.alpha * d.powf(2.0 * s.n_exp - 4.0) / (1.0 + adn).powi(2);
    Some((coeff, dx, dy, a2.sqrt()))
}

fn position_block(scale: f64, dx: f64, dy: f64) -> Fim {
    let mut j = Fim::zeros();
    j[(0, 0)] = scale * dx * dx;
    j[(0, 1)] = scale * dx * dy;
    j[(1, 0)] = scale * dx * dy;
    j[(1, 1)] = scale * dy * dy;
    j
}

/// Information from sensor `i` quantizing at `rate` bits when the target is at `state`.
pub fn sensor_fim_conditional(
    grid: &SensorGrid,
    i: usize,
    state: &TargetState,
    rate: u32,
    bank: &QuantizerBank,
) -> Result<Fim> {
    let thr = bank.get(rate).ok_or(Error::RateOutOfRange { rate: rate as usize, max: bank.max_rate() as usize })?;
    if rate == 0 {
        return Ok(Fim::zeros());
    }
    Ok(match geometry(grid, i, state.position()) {
        None => Fim::zeros(),
        Some((coeff, dx, dy, a)) => position_block(coeff * thr.kappa(a, grid.signal.sigma), dx, dy),
    })
}

/// Unweighted particle average of [`sensor_fim_conditional`].
pub fn sensor_fim_expected(
    grid: &SensorGrid,
    i: usize,
    particles: &ParticleSet,
    rate: u32,
    bank: &QuantizerBank,
) -> Result<Fim> {
    if particles.is_empty() {
        return Err(Error::EmptyParticles);
    }
    let mut acc = Fim::zeros();
    for s in particles.states() {
        acc += sensor_fim_conditional(grid, i, s, rate, bank)?;
    }
    Ok(acc / particles.len() as f64)
}

/// Gaussian approximation of the predicted cloud and the prior information
/// derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorInfo {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
    pub fim: Fim,
    /// The covariance was singular (e.g. a collapsed cloud) and only the
    /// regularization made it invertible.
    pub degenerate: bool,
}

/// Inverse of the (equally weighted) sample covariance of the particles.
pub fn prior_fim(particles: &ParticleSet) -> Result<PriorInfo> {
    let n = particles.len();
    if n < 5 {
        return Err(Error::InvalidParameter(format!("prior information needs at least 5 particles, got {n}")));
    }
    let states = particles.states();
    let mean = states.iter().fold(Vector4::zeros(), |acc, s| acc + s.0) / n as f64;
    let mut cov = Matrix4::zeros();
    for s in states {
        let d = s.0 - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let trace = cov.trace();
    let reg = if trace > 0.0 { PRIOR_REGULARIZATION * trace / 4.0 } else { PRIOR_REGULARIZATION };
    let degenerate = cov.cholesky().is_none();
    let regularized = cov + Matrix4::identity() * reg;
    let chol = regularized.cholesky().ok_or(Error::Singular("prior covariance"))?;
    let fim = chol.inverse();
    let fim = 0.5 * (fim + fim.transpose());
    if !fim.iter().all(|v| v.is_finite()) {
        return Err(Error::Singular("prior covariance"));
    }
    Ok(PriorInfo { mean, covariance: cov, fim, degenerate })
}

/// Log-determinant of a symmetric PSD matrix via Cholesky. Singular or
/// indefinite input gives `-∞`.
pub fn logdet(f: &Fim) -> Result<f64> {
    let asym = (f - f.transpose()).abs().max();
    if asym > 1e-10 * f.abs().max().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(logdet_unchecked(f))
}

/// [`logdet`] without the symmetry check, for inner loops over sums of
/// symmetric atoms.
pub(crate) fn logdet_unchecked(f: &Fim) -> f64 {
    match f.cholesky() {
        Some(c) => {
            let l = c.l_dirty();
            let mut s = 0.0;
            for k in 0..4 {
                let d = l[(k, k)];
                if !(d > 0.0) {
                    return f64::NEG_INFINITY;
                }
                s += d.ln();
            }
            2.0 * s
        }
        None => f64::NEG_INFINITY,
    }
}

/// Per-sensor, per-rate information atoms plus the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct FimTable {
    /// `atoms[i][m]`, `m = 0..=max_rate`.
    atoms: Vec<Vec<Fim>>,
    prior: Fim,
}

impl FimTable {
    pub fn new(atoms: Vec<Vec<Fim>>, prior: Fim) -> Result<Self> {
        let Some(first) = atoms.first() else {
            return Err(Error::InvalidParameter("table needs at least one sensor".into()));
        };
        let width = first.len();
        if width == 0 {
            return Err(Error::InvalidParameter("table needs the 0-bit atom".into()));
        }
        for (i, row) in atoms.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidParameter(format!("sensor {i} has {} rates, expected {width}", row.len())));
            }
            if row[0] != Fim::zeros() {
                return Err(Error::InvalidParameter(format!("sensor {i}: the 0-bit atom must be zero")));
            }
        }
        Ok(FimTable { atoms, prior })
    }

    /// Atoms averaged over the (equally weighted) predicted particles for
    /// every sensor and every rate up to `max_rate`.
    pub fn from_particles(
        grid: &SensorGrid,
        particles: &ParticleSet,
        bank: &QuantizerBank,
        max_rate: u32,
    ) -> Result<(Self, PriorInfo)> {
        if particles.is_empty() {
            return Err(Error::EmptyParticles);
        }
        if max_rate > bank.max_rate() {
            return Err(Error::RateOutOfRange { rate: max_rate as usize, max: bank.max_rate() as usize });
        }
        let prior = prior_fim(particles)?;
        let sigma = grid.signal.sigma;
        let inv_n = 1.0 / particles.len() as f64;
        let rates = max_rate as usize;
        let atoms: Vec<Vec<Fim>> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                // xx, xy, yy sums per rate
                let mut acc = vec![[0.0f64; 3]; rates + 1];
                for s in particles.states() {
                    let Some((coeff, dx, dy, a)) = geometry(grid, i, s.position()) else {
                        continue;
                    };
                    for (m, slot) in acc.iter_mut().enumerate().skip(1) {
                        let w = coeff * bank.get(m as u32).expect("rate checked above").kappa(a, sigma);
                        slot[0] += w * dx * dx;
                        slot[1] += w * dx * dy;
                        slot[2] += w * dy * dy;
                    }
                }
                acc.iter()
                    .map(|[xx, xy, yy]| {
                        let mut j = Fim::zeros();
                        j[(0, 0)] = xx * inv_n;
                        j[(0, 1)] = xy * inv_n;
                        j[(1, 0)] = xy * inv_n;
                        j[(1, 1)] = yy * inv_n;
                        j
                    })
                    .collect()
            })
            .collect();
        Ok((FimTable { atoms, prior: prior.fim }, prior))
    }

    pub fn sensors(&self) -> usize {
        self.atoms.len()
    }

    pub fn max_rate(&self) -> usize {
        self.atoms[0].len() - 1
    }

    pub fn atom(&self, i: usize, m: usize) -> &Fim {
        &self.atoms[i][m]
    }

    pub fn prior(&self) -> &Fim {
        &self.prior
    }

    /// Prior plus one atom per sensor at its allocated rate.
    pub fn total(&self, alloc: &[usize]) -> Result<Fim> {
        if alloc.len() != self.sensors() {
            return Err(Error::InvalidParameter(format!(
                "allocation covers {} sensors, table has {}",
                alloc.len(),
                self.sensors()
            )));
        }
        let mut j = self.prior;
        for (i, &m) in alloc.iter().enumerate() {
            if m > self.max_rate() {
                return Err(Error::RateOutOfRange { rate: m, max: self.max_rate() });
            }
            j += self.atoms[i][m];
        }
        Ok(j)
    }
}

/// Free-function form of [`FimTable::total`].
pub fn total_fim(alloc: &[usize], table: &FimTable) -> Result<Fim> {
    table.total(alloc)
}
