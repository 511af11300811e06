//! Convex relaxation of the allocation problem.
//!
//! The Boolean choice "sensor `i` sends `m` bits" becomes a probability
//! `q[i][m] ∈ [0, 1]`. With `W(q) = J_P + Σ q[i][m]·A_i(m)` the relaxed
//! problem minimizes
//!
//! ```text
//! φ(q) = −( log det W(q) + τ Σ (ln q + ln(1 − q)) )   subject to  A q = b
//! ```
//!
//! by Newton's method with equality constraints, starting from a strictly
//! interior feasible point. The flat vector `q` is ordered rate-major:
//! `q[m·N + i]` is sensor `i` at `m` bits.

use nalgebra::{DMatrix, DVector, Matrix4};
use rand::Rng;

use crate::allocators::RateAllocation;
use crate::error::{Error, Result};
use crate::fisher::{Fim, FimTable};

/// Equality constraints `A q = b`: one row per sensor (its probabilities sum
/// to one) and a last row of bit weights summing to the budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub sensors: usize,
    pub budget: usize,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ConstraintSystem {
    pub fn index(&self, sensor: usize, rate: usize) -> usize {
        rate * self.sensors + sensor
    }

    pub fn dim(&self) -> usize {
        self.sensors * (self.budget + 1)
    }

    pub fn residual(&self, q: &DVector<f64>) -> f64 {
        (&self.a * q - &self.b).amax()
    }
}

pub fn constraint_system(sensors: usize, budget: usize) -> Result<ConstraintSystem> {
    if sensors == 0 || budget == 0 {
        return Err(Error::InvalidParameter("constraint system needs N ≥ 1 and R ≥ 1".into()));
    }
    let p = sensors * (budget + 1);
    let mut a = DMatrix::zeros(sensors + 1, p);
    for m in 0..=budget {
        for i in 0..sensors {
            let col = m * sensors + i;
            a[(i, col)] = 1.0;
            a[(sensors, col)] = m as f64;
        }
    }
    let mut b = DVector::from_element(sensors + 1, 1.0);
    b[sensors] = budget as f64;
    Ok(ConstraintSystem { sensors, budget, a, b })
}

/// Barrier weight used when none is configured.
pub const DEFAULT_TAU: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub tau: f64,
    pub epsilon: f64,
    pub max_iters: usize,
    pub alpha_ls: f64,
    pub beta_ls: f64,
}

impl Default for BarrierSettings {
    /// `τ = 1e−3`, `ε = 1e−8`, 100 iterations, backtracking (0.25, 0.5).
    fn default() -> Self {
        BarrierSettings { tau: DEFAULT_TAU, epsilon: 1e-8, max_iters: 100, alpha_ls: 0.25, beta_ls: 0.5 }
    }
}

impl BarrierSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.alpha_ls > 0.0 && self.alpha_ls < 0.5) {
            return Err(Error::InvalidParameter(format!("alpha_ls must lie in (0, 0.5), got {}", self.alpha_ls)));
        }
        if !(self.beta_ls > 0.0 && self.beta_ls < 1.0) {
            return Err(Error::InvalidParameter(format!("beta_ls must lie in (0, 1), got {}", self.beta_ls)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-sensor rate probabilities in the flat rate-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionProbabilities {
    sensors: usize,
    budget: usize,
    q: DVector<f64>,
}

impl TransmissionProbabilities {
    pub fn from_flat(sensors: usize, budget: usize, q: DVector<f64>) -> Result<Self> {
        if q.len() != sensors * (budget + 1) {
            return Err(Error::InvalidParameter(format!(
                "expected {} entries, got {}",
                sensors * (budget + 1),
                q.len()
            )));
        }
        Ok(TransmissionProbabilities { sensors, budget, q })
    }

    /// `rows[i][m]` is the probability that sensor `i` sends `m` bits.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let sensors = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if sensors == 0 || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::InvalidParameter("rows must be non-empty and equally long".into()));
        }
        let budget = width - 1;
        let mut q = DVector::zeros(sensors * width);
        for (i, row) in rows.iter().enumerate() {
            for (m, &v) in row.iter().enumerate() {
                q[m * sensors + i] = v;
            }
        }
        Ok(TransmissionProbabilities { sensors, budget, q })
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn flat(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn get(&self, sensor: usize, rate: usize) -> f64 {
        self.q[rate * self.sensors + sensor]
    }

    pub fn row(&self, sensor: usize) -> Vec<f64> {
        (0..=self.budget).map(|m| self.get(sensor, m)).collect()
    }

    /// Expected number of transmitted bits, `Σ m·q[i][m]`.
    pub fn expected_bits(&self) -> f64 {
        (0..self.sensors).map(|i| (0..=self.budget).map(|m| m as f64 * self.get(i, m)).sum::<f64>()).sum()
    }

    /// Rate with the largest probability for `sensor` (smallest rate on ties).
    pub fn row_argmax(&self, sensor: usize) -> usize {
        let row = self.row(sensor);
        let mut best = 0;
        for (m, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = m;
            }
        }
        best
    }
}

/// Solves `min cᵀx` s.t. `A x = b`, `x ≥ 0` with a two-phase tableau simplex
/// (Bland's rule). Returns a basic optimal solution.
pub fn solve_lp(c: &DVector<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    const TOL: f64 = 1e-10;
    let (m, n) = a.shape();
    if c.len() != n || b.len() != m {
        return Err(Error::InvalidParameter("LP dimensions do not agree".into()));
    }
    // tableau columns: n structural, m artificial, rhs
    let width = n + m + 1;
    let mut t = DMatrix::<f64>::zeros(m + 1, width);
    for r in 0..m {
        let sign = if b[r] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[(r, j)] = sign * a[(r, j)];
        }
        t[(r, n + r)] = 1.0;
        t[(r, width - 1)] = sign * b[r];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize) {
        let p = t[(row, col)];
        let w = t.ncols();
        for j in 0..w {
            t[(row, j)] /= p;
        }
        for r in 0..t.nrows() {
            if r != row {
                let f = t[(r, col)];
                if f != 0.0 {
                    for j in 0..w {
                        let v = t[(row, j)];
                        t[(r, j)] -= f * v;
                    }
                }
            }
        }
        basis[row] = col;
    }

    fn run(t: &mut DMatrix<f64>, basis: &mut [usize], allowed: usize) -> Result<()> {
        let m = basis.len();
        let obj = t.nrows() - 1;
        let w = t.ncols();
        for _ in 0..10_000 {
            let Some(col) = (0..allowed).find(|&j| t[(obj, j)] < -TOL) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..m {
                if t[(r, col)] > TOL {
                    let ratio = t[(r, w - 1)] / t[(r, col)];
                    let better = match best {
                        None => true,
                        Some((br, bv)) => ratio < bv - TOL || (ratio <= bv + TOL && basis[r] < basis[br]),
                    };
                    if better {
                        best = Some((r, ratio));
                    }
                }
            }
            let Some((row, _)) = best else {
                return Err(Error::InvalidParameter("linear program is unbounded".into()));
            };
            pivot(t, basis, row, col);
        }
        Err(Error::NotConverged { iters: 10_000, decrement: f64::NAN })
    }

    // phase 1: minimize the sum of artificials
    for r in 0..m {
        for j in 0..width {
            let v = t[(r, j)];
            if j < n || j == width - 1 {
                t[(m, j)] -= v;
            }
        }
    }
    run(&mut t, &mut basis, n + m)?;
    if -t[(m, width - 1)] > 1e-8 {
        return Err(Error::Infeasible);
    }
    // drive leftover artificials out of the basis
    for r in 0..m {
        if basis[r] >= n {
            if let Some(col) = (0..n).find(|&j| t[(r, j)].abs() > TOL) {
                pivot(&mut t, &mut basis, r, col);
            }
        }
    }
    // phase 2 objective row
    for j in 0..width {
        t[(m, j)] = if j < n { c[j] } else { 0.0 };
    }
    for r in 0..m {
        let bc = basis[r];
        if bc < n {
            let f = t[(m, bc)];
            if f != 0.0 {
                for j in 0..width {
                    let v = t[(r, j)];
                    t[(m, j)] -= f * v;
                }
            }
        }
    }
    run(&mut t, &mut basis, n)?;
    let mut x = DVector::zeros(n);
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[(r, width - 1)].max(0.0);
        }
    }
    Ok(x)
}

/// Minimum distance kept from the box boundary by [`feasible_start`].
pub const START_MARGIN: f64 = 1e-4;

/// Least-squares correction of `q` back onto `A q = b`.
fn project(sys: &ConstraintSystem, q: &DVector<f64>) -> DVector<f64> {
    let r = &sys.a * q - &sys.b;
    let aat = &sys.a * sys.a.transpose();
    match aat.cholesky() {
        Some(ch) => q - sys.a.transpose() * ch.solve(&r),
        None => q.clone(),
    }
}

/// The single feasible point for `N = 1` (all bits on the only sensor).
fn single_sensor_vertex(budget: usize) -> DVector<f64> {
    let mut q = DVector::zeros(budget + 1);
    q[budget] = 1.0;
    q
}

/// A strictly interior point of `{A q = b, 0 ≤ q ≤ 1}`: the LP vertex of
/// `min −Σq` mixed with a known interior point so every entry lies in
/// `[δ, 1−δ]`, `δ = 1e−4`.
///
/// For `N = 1` the feasible set is a single vertex; the returned point is the
/// shifted `(δ′, …, δ′, 1−Rδ′)`, which is interior to the box but not on the
/// bit constraint.
pub fn feasible_start(sys: &ConstraintSystem) -> Result<TransmissionProbabilities> {
    let n = sys.sensors;
    let r = sys.budget;
    if n == 1 {
        let shift = START_MARGIN;
        let mut q = DVector::from_element(r + 1, shift);
        q[r] = 1.0 - r as f64 * shift;
        return TransmissionProbabilities::from_flat(1, r, q);
    }
    let p = sys.dim();
    let vertex = solve_lp(&DVector::from_element(p, -1.0), &sys.a, &sys.b)?;
    // interior point: uniform rows with weight θ, silent rows with weight 1−θ,
    // θ = 2/N so the mean is R/N bits per sensor
    let theta = 2.0 / n as f64;
    let mut u = DVector::from_element(p, theta / (r + 1) as f64);
    for i in 0..n {
        u[sys.index(i, 0)] += 1.0 - theta;
    }
    let min_u = u.min();
    let gamma = (START_MARGIN / min_u).clamp(1e-2, 1.0);
    let q = project(sys, &(vertex * (1.0 - gamma) + u * gamma));
    TransmissionProbabilities::from_flat(n, r, q)
}

/// `W(q) = J_P + Σ q[i][m]·A_i(m)`.
pub fn weighted_fim(q: &DVector<f64>, sys: &ConstraintSystem, table: &FimTable) -> Fim {
    let mut w = *table.prior();
    for m in 1..=sys.budget {
        for i in 0..sys.sensors {
            w += table.atom(i, m) * q[sys.index(i, m)];
        }
    }
    w
}

fn check_table(sys: &ConstraintSystem, table: &FimTable) -> Result<()> {
    if table.sensors() != sys.sensors || table.max_rate() < sys.budget {
        return Err(Error::InvalidParameter(format!(
            "table covers {} sensors up to {} bits, system needs {} sensors up to {}",
            table.sensors(),
            table.max_rate(),
            sys.sensors,
            sys.budget
        )));
    }
    Ok(())
}

fn interior(q: &DVector<f64>) -> bool {
    q.iter().all(|&v| v > 0.0 && v < 1.0)
}

/// First trial step: 0.99 of the distance to the box boundary along `step`,
/// capped at the full Newton step.
fn boundary_step(q: &DVector<f64>, step: &DVector<f64>) -> f64 {
    let mut t: f64 = 1.0;
    for (v, d) in q.iter().zip(step.iter()) {
        if *d < 0.0 {
            t = t.min(-0.99 * v / d);
        } else if *d > 0.0 {
            t = t.min(0.99 * (1.0 - v) / d);
        }
    }
    t
}

/// Barrier objective. Outside the open box, or where `W` is not positive
/// definite, the value is `+∞`.
pub fn barrier_value(q: &DVector<f64>, sys: &ConstraintSystem, table: &FimTable, tau: f64) -> f64 {
    if !interior(q) {
        return f64::INFINITY;
    }
    let w = weighted_fim(q, sys, table);
    let Some(ch) = w.cholesky() else {
        return f64::INFINITY;
    };
    let logdet: f64 = 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let barrier: f64 = q.iter().map(|&v| v.ln() + (1.0 - v).ln()).sum();
    let v = -(logdet + tau * barrier);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn w_inverse(q: &DVector<f64>, sys: &ConstraintSystem, table: &FimTable) -> Result<Matrix4<f64>> {
    weighted_fim(q, sys, table).cholesky().map(|c| c.inverse()).ok_or(Error::Singular("weighted FIM"))
}

/// `∂φ/∂q[i][m] = −tr(W⁻¹ A_i(m)) − τ/q + τ/(1−q)`.
pub fn barrier_gradient(q: &DVector<f64>, sys: &ConstraintSystem, table: &FimTable, tau: f64) -> Result<DVector<f64>> {
    let winv = w_inverse(q, sys, table)?;
    let mut g = DVector::zeros(sys.dim());
    for m in 0..=sys.budget {
        for i in 0..sys.sensors {
            let k = sys.index(i, m);
            let tr = if m == 0 { 0.0 } else { winv.component_mul(table.atom(i, m)).sum() };
            g[k] = -tr - tau / q[k] + tau / (1.0 - q[k]);
        }
    }
    Ok(g)
}

/// `∇²φ = [tr(W⁻¹A_a W⁻¹A_b)] + τ·diag(1/q² + 1/(1−q)²)`.
pub fn barrier_hessian(q: &DVector<f64>, sys: &ConstraintSystem, table: &FimTable, tau: f64) -> Result<DMatrix<f64>> {
    let winv = w_inverse(q, sys, table)?;
    let p = sys.dim();
    let products: Vec<Option<Matrix4<f64>>> = (0..p)
        .map(|k| {
            let (m, i) = (k / sys.sensors, k % sys.sensors);
            (m > 0).then(|| winv * table.atom(i, m))
        })
        .collect();
    let mut h = DMatrix::zeros(p, p);
    for a in 0..p {
        let Some(ba) = &products[a] else { continue };
        for b in a..p {
            let Some(bb) = &products[b] else { continue };
            // tr(X Y) = Σ X ∘ Yᵀ
            let v = ba.component_mul(&bb.transpose()).sum();
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    for k in 0..p {
        h[(k, k)] += tau * (1.0 / (q[k] * q[k]) + 1.0 / ((1.0 - q[k]) * (1.0 - q[k])));
    }
    Ok(h)
}

/// Newton step of the equality-constrained problem by block elimination:
/// `S = −A H⁻¹ Aᵀ`, `S ω = A H⁻¹ g`, `Δ = −H⁻¹(g + Aᵀω)`.
/// Returns `(Δ, ω)` with `H Δ + Aᵀω = −g` and `A Δ = 0`.
pub fn solve_kkt(h: &DMatrix<f64>, sys: &ConstraintSystem, g: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>)> {
    let a = &sys.a;
    if let Some(hc) = h.clone().cholesky() {
        let hinv_at = hc.solve(&a.transpose());
        let hinv_g = hc.solve(g);
        let neg_s = a * &hinv_at;
        let rhs = a * &hinv_g;
        // S ω = A H⁻¹ g  ⇔  (A H⁻¹ Aᵀ) ω = −A H⁻¹ g
        if let Some(sc) = neg_s.clone().cholesky() {
            let omega = sc.solve(&(-rhs));
            let step = -(hinv_g + hinv_at * &omega);
            return Ok((step, omega));
        }
    }
    // H singular on the whole space: solve the full KKT system instead
    let p = sys.dim();
    let k = a.nrows();
    let mut kkt = DMatrix::zeros(p + k, p + k);
    kkt.view_mut((0, 0), (p, p)).copy_from(h);
    kkt.view_mut((0, p), (p, k)).copy_from(&a.transpose());
    kkt.view_mut((p, 0), (k, p)).copy_from(a);
    let mut rhs = DVector::zeros(p + k);
    rhs.rows_mut(0, p).copy_from(&(-g));
    let sol = kkt.lu().solve(&rhs).ok_or(Error::Singular("KKT system"))?;
    Ok((sol.rows(0, p).into_owned(), sol.rows(p, k).into_owned()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub final_decrement: f64,
    pub residual: f64,
    /// Largest `‖A q − b‖∞` over all iterates.
    pub max_residual: f64,
    /// Objective value at the start and after each accepted step.
    pub values: Vec<f64>,
}

/// Equality-constrained Newton iteration from a strictly interior feasible
/// `q0`. Stops when `λ²/2 ≤ ε`, `λ² = −∇φᵀΔ`.
pub fn newton_solve(
    table: &FimTable,
    sys: &ConstraintSystem,
    settings: &BarrierSettings,
    q0: &TransmissionProbabilities,
) -> Result<(TransmissionProbabilities, SolverDiagnostics)> {
    settings.validate()?;
    check_table(sys, table)?;
    if q0.sensors() != sys.sensors || q0.budget() != sys.budget {
        return Err(Error::InvalidParameter("starting point does not match the constraint system".into()));
    }
    let tau = settings.tau;
    let mut q = q0.flat().clone();
    if !interior(&q) {
        return Err(Error::InvalidParameter("starting point must be strictly inside the box".into()));
    }
    if sys.residual(&q) > 1e-8 {
        return Err(Error::InvalidParameter(format!("starting point violates A q = b by {:e}", sys.residual(&q))));
    }
    let mut value = barrier_value(&q, sys, table, tau);
    if !value.is_finite() {
        return Err(Error::Singular("weighted FIM at the starting point"));
    }
    let mut values = vec![value];
    let mut max_residual = sys.residual(&q);
    let mut decrement = f64::INFINITY;
    for iter in 0..=settings.max_iters {
        let g = barrier_gradient(&q, sys, table, tau)?;
        let h = barrier_hessian(&q, sys, table, tau)?;
        let (step, _) = solve_kkt(&h, sys, &g)?;
        let slope = g.dot(&step);
        decrement = -slope;
        if decrement / 2.0 <= settings.epsilon {
            let diag = SolverDiagnostics {
                iterations: iter,
                final_decrement: decrement / 2.0,
                residual: sys.residual(&q),
                max_residual,
                values,
            };
            return Ok((TransmissionProbabilities::from_flat(sys.sensors, sys.budget, q)?, diag));
        }
        if iter == settings.max_iters {
            break;
        }
        let mut t = boundary_step(&q, &step);
        while !interior(&(&q + &step * t)) {
            t *= settings.beta_ls;
        }
        loop {
            let cand = &q + &step * t;
            let v = barrier_value(&cand, sys, table, tau);
            if v <= value + settings.alpha_ls * t * slope {
                q = cand;
                value = v;
                break;
            }
            t *= settings.beta_ls;
            if t < 1e-16 {
                return Err(Error::LineSearch);
            }
        }
        values.push(value);
        max_residual = max_residual.max(sys.residual(&q));
    }
    Err(Error::NotConverged { iters: settings.max_iters, decrement: decrement / 2.0 })
}

/// How relaxed probabilities become an integer allocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Decoding {
    /// Each sensor draws its rate from its own row.
    #[default]
    Sample,
    /// Walk entries by decreasing probability, assigning a sensor its rate if
    /// it is still unassigned and the rate fits in the remaining budget.
    SortRound,
}

fn check_rows(q: &TransmissionProbabilities) -> Result<()> {
    for i in 0..q.sensors() {
        let row = q.row(i);
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&v| v < -1e-9) {
            return Err(Error::InvalidParameter(format!("row {i} is not a probability vector (sum {s})")));
        }
    }
    Ok(())
}

/// One categorical draw per sensor. The total is random with mean
/// `Σ m·q[i][m]`.
pub fn sample_transmission<G: Rng + ?Sized>(q: &TransmissionProbabilities, rng: &mut G) -> Result<Vec<usize>> {
    check_rows(q)?;
    let rates = (0..q.sensors())
        .map(|i| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for m in 0..=q.budget() {
                acc += q.get(i, m);
                if u < acc {
                    return m;
                }
            }
            // roundoff: fall back to the last rate with mass
            (0..=q.budget()).rev().find(|&m| q.get(i, m) > 0.0).unwrap_or(0)
        })
        .collect();
    Ok(rates)
}

/// Deterministic decoding. The total never exceeds the budget.
pub fn sort_round(q: &TransmissionProbabilities) -> Result<Vec<usize>> {
    check_rows(q)?;
    let n = q.sensors();
    let mut order: Vec<usize> = (0..q.flat().len()).collect();
    order.sort_by(|&a, &b| q.flat()[b].total_cmp(&q.flat()[a]));
    let mut rates = vec![0; n];
    let mut assigned = vec![false; n];
    let mut remaining = q.budget();
    for k in order {
        if remaining == 0 {
            break;
        }
        let (m, i) = (k / n, k % n);
        if !assigned[i] && m <= remaining {
            assigned[i] = true;
            rates[i] = m;
            remaining -= m;
        }
    }
    Ok(rates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexOutcome {
    pub probabilities: TransmissionProbabilities,
    pub rates: Vec<usize>,
    pub diagnostics: SolverDiagnostics,
}

/// Relaxed solve followed by decoding.
pub fn convex_allocate<G: Rng + ?Sized>(
    table: &FimTable,
    budget: usize,
    settings: &BarrierSettings,
    decoding: Decoding,
    rng: &mut G,
) -> Result<ConvexOutcome> {
    let sys = constraint_system(table.sensors(), budget)?;
    check_table(&sys, table)?;
    let (probabilities, diagnostics) = if sys.sensors == 1 {
        let q = TransmissionProbabilities::from_flat(1, budget, single_sensor_vertex(budget))?;
        (
            q,
            SolverDiagnostics {
                iterations: 0,
                final_decrement: 0.0,
                residual: 0.0,
                max_residual: 0.0,
                values: Vec::new(),
            },
        )
    } else {
        let start = feasible_start(&sys)?;
        newton_solve(table, &sys, settings, &start)?
    };
    let rates = match decoding {
        Decoding::Sample => sample_transmission(&probabilities, rng)?,
        Decoding::SortRound => sort_round(&probabilities)?,
    };
    Ok(ConvexOutcome { probabilities, rates, diagnostics })
}

/// Convenience: the decoded rates as a [`RateAllocation`] when they meet the
/// budget exactly.
pub fn as_allocation(rates: &[usize], budget: usize) -> Option<RateAllocation> {
    RateAllocation::new(rates.to_vec(), budget).ok()
}
