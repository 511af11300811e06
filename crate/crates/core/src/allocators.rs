//! Integer bit-allocation policies over a [`FimTable`].
//!
//! Every policy returns a [`RateAllocation`] summing to the budget `R`, the
//! log-determinant of the resulting total FIM, and how many 4×4 matrix
//! additions/subtractions it spent. Ties always go to the lowest sensor index
//! or the smallest bit count, so results are deterministic.

use nalgebra::{Matrix2, Matrix4, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::fisher::{logdet_unchecked, sensor_fim_conditional, Fim, FimTable};
use crate::model::{SensorGrid, SignalParams, TargetState};
use crate::quantizer::QuantizerBank;

pub const DEFAULT_EXHAUSTIVE_CAP: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RateAllocation {
    rates: Vec<usize>,
}

impl RateAllocation {
    /// Checks `Σ rates = budget`.
    pub fn new(rates: Vec<usize>, budget: usize) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::InvalidParameter("allocation needs at least one sensor".into()));
        }
        let total: usize = rates.iter().sum();
        if total != budget {
            return Err(Error::InvalidParameter(format!("rates sum to {total}, budget is {budget}")));
        }
        Ok(RateAllocation { rates })
    }

    /// Every bit to one sensor.
    pub fn concentrated(sensors: usize, sensor: usize, budget: usize) -> Self {
        let mut rates = vec![0; sensors];
        rates[sensor] = budget;
        RateAllocation { rates }
    }

    pub fn rates(&self) -> &[usize] {
        &self.rates
    }

    pub fn total(&self) -> usize {
        self.rates.iter().sum()
    }

    /// Sensors with at least one bit.
    pub fn active(&self) -> usize {
        self.rates.iter().filter(|&&m| m > 0).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocOutcome {
    pub alloc: RateAllocation,
    pub logdet_value: f64,
    pub matrix_sums: u64,
    pub candidates_examined: u64,
}

fn check_budget(table: &FimTable, budget: usize) -> Result<()> {
    if budget > table.max_rate() {
        return Err(Error::RateOutOfRange { rate: budget, max: table.max_rate() });
    }
    Ok(())
}

fn outcome(table: &FimTable, rates: Vec<usize>, matrix_sums: u64, candidates: u64) -> Result<AllocOutcome> {
    let budget = rates.iter().sum();
    let alloc = RateAllocation::new(rates, budget)?;
    let logdet_value = logdet_unchecked(&table.total(alloc.rates())?);
    Ok(AllocOutcome { alloc, logdet_value, matrix_sums, candidates_examined: candidates })
}

/// Number of ways to split `r` bits over `n` sensors, `C(n+r−1, n−1)`.
pub fn enumerate_count(n: usize, r: usize) -> u128 {
    if n == 0 {
        return 0;
    }
    let k = (n - 1).min(r) as u128;
    let top = (n + r - 1) as u128;
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (top - j) / (j + 1);
    }
    c
}

/// Next composition of `Σ rates` in lexicographic order, or `false` after the
/// last one.
fn next_composition(rates: &mut [usize]) -> bool {
    let n = rates.len();
    if n < 2 {
        return false;
    }
    let Some(j) = (0..n - 1).rev().find(|&j| rates[j + 1..].iter().sum::<usize>() > 0) else {
        return false;
    };
    let rest: usize = rates[j + 1..].iter().sum();
    rates[j] += 1;
    for v in &mut rates[j + 1..] {
        *v = 0;
    }
    rates[n - 1] = rest - 1;
    true
}

/// Best allocation by enumerating every composition. Ties go to the
/// lexicographically smallest allocation.
pub fn exhaustive(table: &FimTable, budget: usize, cap: u128) -> Result<AllocOutcome> {
    check_budget(table, budget)?;
    let n = table.sensors();
    let count = enumerate_count(n, budget);
    if count > cap {
        return Err(Error::CapExceeded { count, cap });
    }
    let mut rates = vec![0; n];
    rates[n - 1] = budget;
    let mut best = rates.clone();
    let mut best_val = f64::NEG_INFINITY;
    let mut first = true;
    let mut examined = 0u64;
    let mut sums = 0u64;
    loop {
        let mut j = *table.prior();
        for (i, &m) in rates.iter().enumerate() {
            if m > 0 {
                j += table.atom(i, m);
                sums += 1;
            }
        }
        let v = logdet_unchecked(&j);
        examined += 1;
        if first || v > best_val {
            best_val = v;
            best.clone_from(&rates);
            first = false;
        }
        if !next_composition(&mut rates) {
            break;
        }
    }
    debug_assert_eq!(examined as u128, count);
    outcome(table, best, sums, examined)
}

/// Adds one bit at a time to whichever sensor raises `det J` most.
pub fn greedy(table: &FimTable, budget: usize) -> Result<AllocOutcome> {
    check_budget(table, budget)?;
    let n = table.sensors();
    let mut rates = vec![0; n];
    let mut j = *table.prior();
    let mut sums = 0u64;
    let mut examined = 0u64;
    for _ in 0..budget {
        let mut best: Option<(usize, f64, Fim)> = None;
        for (k, &m) in rates.iter().enumerate() {
            let cand = if m == 0 {
                sums += 1;
                j + table.atom(k, 1)
            } else {
                sums += 2;
                j + table.atom(k, m + 1) - table.atom(k, m)
            };
            examined += 1;
            let v = logdet_unchecked(&cand);
            if best.as_ref().is_none_or(|(_, bv, _)| v > *bv) {
                best = Some((k, v, cand));
            }
        }
        let (k, _, cand) = best.expect("n ≥ 1");
        rates[k] += 1;
        j = cand;
    }
    outcome(table, rates, sums, examined)
}

/// Starts with every sensor at `R` and removes one bit at a time from
/// whichever sensor loses least, until `R` bits remain.
pub fn gbfos(table: &FimTable, budget: usize) -> Result<AllocOutcome> {
    check_budget(table, budget)?;
    let n = table.sensors();
    let mut rates = vec![budget; n];
    let mut sums = 0u64;
    let mut examined = 0u64;
    let mut j = *table.prior();
    if budget > 0 {
        for i in 0..n {
            j += table.atom(i, budget);
            sums += 1;
        }
    }
    for _ in 0..(n - 1) * budget {
        let mut best: Option<(usize, f64, Fim)> = None;
        for (k, &m) in rates.iter().enumerate() {
            if m == 0 {
                continue;
            }
            sums += 2;
            examined += 1;
            let cand = j + table.atom(k, m - 1) - table.atom(k, m);
            let v = logdet_unchecked(&cand);
            if best.as_ref().is_none_or(|(_, bv, _)| v > *bv) {
                best = Some((k, v, cand));
            }
        }
        let (k, _, cand) = best.expect("some sensor still holds bits");
        rates[k] -= 1;
        j = cand;
    }
    outcome(table, rates, sums, examined)
}

/// One stored trellis state: the best FIM reachable with `r` bits spent on
/// the sensors up to this stage.
#[derive(Debug, Clone, PartialEq)]
pub struct DpState {
    pub fim: Fim,
    pub inverse: Option<Fim>,
    pub logdet: f64,
    pub chosen_bits: usize,
}

/// Stage `i` holds states `r = 0..=R` after sensors `0..i` (stage 0 is the
/// prior alone). Unreachable states are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTrellis {
    pub stages: Vec<Vec<Option<DpState>>>,
    pub matrix_sums: u64,
    pub candidates_examined: u64,
}

impl DpTrellis {
    pub fn state(&self, stage: usize, r: usize) -> Option<&DpState> {
        self.stages.get(stage)?.get(r)?.as_ref()
    }

    /// Bits chosen for sensors `0..stage`, backtracked from `(stage, r)`.
    pub fn backtrack(&self, stage: usize, r: usize) -> Option<Vec<usize>> {
        let mut bits = vec![0; stage];
        let mut rem = r;
        for s in (1..=stage).rev() {
            let k = self.state(s, rem)?.chosen_bits;
            bits[s - 1] = k;
            rem -= k;
        }
        (rem == 0).then_some(bits)
    }
}

fn logdet_lu(m: &Matrix4<f64>) -> f64 {
    let d = m.determinant();
    if d > 0.0 && d.is_finite() {
        d.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn make_state(fim: Fim, logdet: f64, chosen_bits: usize) -> DpState {
    let inverse = if logdet.is_finite() { fim.try_inverse() } else { None };
    DpState { fim, inverse, logdet, chosen_bits }
}

/// Forward pass of the trellis. Each candidate is scored with the matrix
/// determinant lemma, `log det(I + J⁻¹A) + log det J`, so only the stored
/// inverse of the previous state is needed.
pub fn adp_trellis(table: &FimTable, budget: usize) -> Result<DpTrellis> {
    check_budget(table, budget)?;
    let n = table.sensors();
    let prior = *table.prior();
    let mut stages = Vec::with_capacity(n + 1);
    let mut stage0 = vec![None; budget + 1];
    stage0[0] = Some(make_state(prior, logdet_lu(&prior), 0));
    stages.push(stage0);
    let mut sums = 0u64;
    let mut examined = 0u64;
    let eye = Matrix4::<f64>::identity();
    for i in 0..n {
        let prev: &Vec<Option<DpState>> = &stages[i];
        let last = i + 1 == n;
        let mut next = vec![None; budget + 1];
        let states: Vec<usize> = if i == 0 {
            (0..=budget).collect()
        } else if last {
            vec![budget]
        } else {
            (0..=budget).collect()
        };
        for r in states {
            let mut best: Option<(usize, f64)> = None;
            for k in 0..=r {
                let Some(p) = &prev[r - k] else { continue };
                examined += 1;
                let atom = table.atom(i, k);
                let v = if k == 0 {
                    p.logdet
                } else {
                    sums += 1;
                    match &p.inverse {
                        Some(inv) => logdet_lu(&(eye + inv * atom)) + p.logdet,
                        None => f64::NEG_INFINITY,
                    }
                };
                if best.is_none() || v > best.unwrap().1 {
                    best = Some((k, v));
                }
            }
            if let Some((k, v)) = best {
                let fim = prev[r - k].as_ref().expect("scored").fim + table.atom(i, k);
                next[r] = Some(make_state(fim, v, k));
            }
        }
        stages.push(next);
    }
    Ok(DpTrellis { stages, matrix_sums: sums, candidates_examined: examined })
}

/// Closed-form A-DP matrix-sum count, `2R + (N−2)·R(R+1)/2` for `N ≥ 2`.
pub fn adp_sum_count(n: usize, r: usize) -> u64 {
    if n < 2 {
        return r.min(1) as u64;
    }
    (2 * r + (n - 2) * r * (r + 1) / 2) as u64
}

/// Approximate dynamic programming over sensors, keeping the best FIM per
/// remaining-budget state.
pub fn adp(table: &FimTable, budget: usize) -> Result<AllocOutcome> {
    check_budget(table, budget)?;
    let n = table.sensors();
    if n == 1 {
        let sums = u64::from(budget > 0);
        return outcome(table, vec![budget], sums, 1);
    }
    let trellis = adp_trellis(table, budget)?;
    let rates = trellis.backtrack(n, budget).ok_or(Error::Infeasible)?;
    outcome(table, rates, trellis.matrix_sums, trellis.candidates_examined)
}

/// Every bit to the sensor closest to `predicted`, lowest index on ties.
pub fn nearest_neighbor(grid: &SensorGrid, predicted: (f64, f64), budget: usize) -> RateAllocation {
    RateAllocation::concentrated(grid.len(), grid.nearest(predicted), budget)
}

/// A 2×2 counterexample to "larger det now ⇒ larger det after adding A".
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub j_prime: Matrix2<f64>,
    pub j_double: Matrix2<f64>,
    pub a: Matrix2<f64>,
    pub det_j_prime: f64,
    pub det_j_double: f64,
    pub det_sum_prime: f64,
    pub det_sum_double: f64,
}

impl Witness {
    /// `det J′ > det J″` yet `det(A+J′) < det(A+J″)`.
    pub fn holds(&self) -> bool {
        self.det_j_prime > self.det_j_double && self.det_sum_prime < self.det_sum_double
    }
}

pub fn suboptimality_witness() -> Witness {
    let j_prime = Matrix2::identity();
    let j_double = Matrix2::new(1.0, -0.1, -0.1, 1.0);
    let a = Matrix2::new(1.0, 0.1, 0.1, 1.0);
    Witness {
        j_prime,
        j_double,
        a,
        det_j_prime: j_prime.determinant(),
        det_j_double: j_double.determinant(),
        det_sum_prime: (a + j_prime).determinant(),
        det_sum_double: (a + j_double).determinant(),
    }
}

fn random_prior<G: Rng + ?Sized>(rng: &mut G) -> Fim {
    let mut b = Matrix4::<f64>::zeros();
    for v in b.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    b * b.transpose() * 0.25 + Matrix4::identity() * 0.1
}

/// Random table with rank-1 atoms `c_m g_i g_iᵀ` (`c_m` increasing in `m`)
/// and a random positive-definite prior.
pub fn random_table<G: Rng + ?Sized>(sensors: usize, max_rate: usize, rng: &mut G) -> Result<FimTable> {
    let prior = random_prior(rng);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let mut atoms = Vec::with_capacity(sensors);
    for _ in 0..sensors {
        let g = Vector4::new(normal(), normal(), normal(), normal());
        let outer = g * g.transpose();
        let mut row = vec![Fim::zeros()];
        let mut c = 0.0;
        for _ in 1..=max_rate {
            c += 0.2 + normal().abs();
            row.push(outer * c);
        }
        atoms.push(row);
    }
    FimTable::new(atoms, prior)
}

/// Random table whose atoms are sensor FIMs: sensors and a static target
/// placed uniformly on the square of side `area_side`, thresholds from
/// `bank`. Each atom is rank 1 in the position block, and its growth in `m`
/// follows the quantizer rather than a fixed profile. The prior is random
/// positive definite.
pub fn random_geometry_table<G: Rng + ?Sized>(
    sensors: usize,
    max_rate: usize,
    bank: &QuantizerBank,
    signal: SignalParams,
    area_side: f64,
    rng: &mut G,
) -> Result<FimTable> {
    if max_rate > bank.max_rate() as usize {
        return Err(Error::RateOutOfRange { rate: max_rate, max: bank.max_rate() as usize });
    }
    if !(area_side > 0.0) {
        return Err(Error::InvalidParameter(format!("area side must be positive, got {area_side}")));
    }
    let prior = random_prior(rng);
    let h = area_side / 2.0;
    let positions = (0..sensors).map(|_| (rng.random_range(-h..h), rng.random_range(-h..h))).collect();
    let grid = SensorGrid { positions, signal };
    let target = TargetState::new(rng.random_range(-h..h), rng.random_range(-h..h), 0.0, 0.0);
    let mut atoms = Vec::with_capacity(sensors);
    for i in 0..sensors {
        let mut row = vec![Fim::zeros()];
        for m in 1..=max_rate {
            row.push(sensor_fim_conditional(&grid, i, &target, m as u32, bank)?);
        }
        atoms.push(row);
    }
    FimTable::new(atoms, prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SignalParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag_table(weights: &[[f64; 4]], prior: [f64; 4]) -> FimTable {
        let atoms = weights
            .iter()
            .map(|w| {
                let mut row = vec![Fim::zeros()];
                for m in 1..=3 {
                    row.push(Matrix4::from_diagonal(&Vector4::from(*w)) * m as f64);
                }
                row
            })
            .collect();
        FimTable::new(atoms, Matrix4::from_diagonal(&Vector4::from(prior))).unwrap()
    }

    #[test]
    fn enumerate_count_examples() {
        assert_eq!(enumerate_count(3, 2), 6);
        assert_eq!(enumerate_count(9, 5), 1287);
        assert_eq!(enumerate_count(1, 7), 1);
        assert_eq!(enumerate_count(4, 0), 1);
    }

    #[test]
    fn compositions_are_lexicographic_and_complete() {
        let mut rates = vec![0, 0, 3];
        let mut seen = vec![rates.clone()];
        while next_composition(&mut rates) {
            seen.push(rates.clone());
        }
        assert_eq!(seen.len(), 10);
        assert!(seen.windows(2).all(|w| w[0] < w[1]));
        assert!(seen.iter().all(|r| r.iter().sum::<usize>() == 3));
    }

    #[test]
    fn exhaustive_examples() {
        let t = diag_table(&[[1.0; 4]], [1.0; 4]);
        let out = exhaustive(&t, 3, DEFAULT_EXHAUSTIVE_CAP).unwrap();
        assert_eq!(out.alloc.rates(), &[3]);
        assert_eq!(out.candidates_examined, 1);

        let t = diag_table(&[[2.0; 4], [1.0; 4]], [1.0; 4]);
        let out = exhaustive(&t, 1, DEFAULT_EXHAUSTIVE_CAP).unwrap();
        assert_eq!(out.alloc.rates(), &[1, 0]);
        assert_eq!(out.candidates_examined, 2);

        // identical sensors: lexicographically smallest among ties
        let t = diag_table(&[[1.0; 4], [1.0; 4], [1.0; 4]], [1.0; 4]);
        let out = exhaustive(&t, 2, DEFAULT_EXHAUSTIVE_CAP).unwrap();
        assert_eq!(out.candidates_examined, 6);
        // (0,0,2), (0,1,1), … all give det 3⁴
        assert_eq!(out.alloc.rates(), &[0, 0, 2]);
        assert!(matches!(exhaustive(&t, 2, 5), Err(Error::CapExceeded { count: 6, cap: 5 })));
    }

    #[test]
    fn greedy_and_gbfos_edges() {
        let t = diag_table(&[[1.0, 2.0, 0.5, 0.1]], [1.0; 4]);
        let g = greedy(&t, 3).unwrap();
        assert_eq!(g.alloc.rates(), &[3]);
        assert!(g.matrix_sums <= 5);
        let b = gbfos(&t, 3).unwrap();
        assert_eq!(b.alloc.rates(), &[3]);
        assert_eq!(b.candidates_examined, 0);

        let t = diag_table(&[[1.0; 4], [2.0; 4]], [1.0; 4]);
        let g = greedy(&t, 0).unwrap();
        assert_eq!(g.alloc.rates(), &[0, 0]);
        assert_eq!(g.candidates_examined, 0);
        let b = gbfos(&t, 1).unwrap();
        assert_eq!(b.candidates_examined, 2);
        assert_eq!(b.alloc, exhaustive(&t, 1, DEFAULT_EXHAUSTIVE_CAP).unwrap().alloc);
    }

    #[test]
    fn adp_count_examples() {
        assert_eq!(adp_sum_count(6, 3), 30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_table(6, 3, &mut rng).unwrap();
        assert_eq!(adp(&t, 3).unwrap().matrix_sums, 30);
        let one = random_table(1, 4, &mut rng).unwrap();
        assert_eq!(adp(&one, 4).unwrap().alloc.rates(), &[4]);
    }

    #[test]
    fn adp_counter_exact_over_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..=20 {
            for r in 1..=8 {
                let t = random_table(n, r, &mut rng).unwrap();
                let trellis = adp_trellis(&t, r).unwrap();
                assert_eq!(trellis.matrix_sums, adp_sum_count(n, r), "N={n} R={r}");
            }
        }
    }

    #[test]
    fn separable_instances_adp_matches_exhaustive() {
        // each sensor informs a single coordinate: log det separates, so DP is exact
        let t = diag_table(
            &[[3.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 2.0]],
            [1.0, 2.0, 0.5, 1.0],
        );
        for r in 0..=3 {
            let a = adp(&t, r).unwrap();
            let e = exhaustive(&t, r, DEFAULT_EXHAUSTIVE_CAP).unwrap();
            assert!((a.logdet_value - e.logdet_value).abs() <= 1e-12, "R={r}");
        }
    }

    #[test]
    fn trellis_values_match_backtracked_totals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let n = rng.random_range(2..=6);
            let r = rng.random_range(1..=4);
            let t = random_table(n, r, &mut rng).unwrap();
            let trellis = adp_trellis(&t, r).unwrap();
            for stage in 1..=n {
                for rem in 0..=r {
                    let Some(s) = trellis.state(stage, rem) else { continue };
                    let bits = trellis.backtrack(stage, rem).unwrap();
                    let mut j = *t.prior();
                    for (i, &m) in bits.iter().enumerate() {
                        j += t.atom(i, m);
                    }
                    let direct = logdet_unchecked(&j);
                    assert!((s.logdet - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{} vs {direct}", s.logdet);
                }
            }
        }
    }

    #[test]
    fn nearest_examples() {
        let grid = SensorGrid::uniform(3, 20.0, SignalParams::default()).unwrap();
        assert_eq!(nearest_neighbor(&grid, grid.positions[3], 5).rates(), &[0, 0, 0, 5, 0, 0, 0, 0, 0]);
        assert_eq!(nearest_neighbor(&grid, (0.0, 0.0), 5).rates()[4], 5);
        // midway between sensors 0 and 1
        assert_eq!(nearest_neighbor(&grid, (-5.0, -10.0), 5).rates()[0], 5);
    }

    #[test]
    fn witness_values() {
        let w = suboptimality_witness();
        assert!((w.det_sum_prime - 3.99).abs() < 1e-12);
        assert!((w.det_sum_double - 4.00).abs() < 1e-12);
        assert!((w.det_j_prime - 1.0).abs() < 1e-15);
        assert!((w.det_j_double - 0.99).abs() < 1e-12);
        assert!(w.holds());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]
            #[test]
            fn policies_feasible_and_dominated(seed in any::<u64>(), n in 1usize..=5, r in 0usize..=4) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random_table(n, r.max(1), &mut rng).unwrap();
                let best = exhaustive(&t, r, DEFAULT_EXHAUSTIVE_CAP).unwrap();
                prop_assert_eq!(best.candidates_examined as u128, enumerate_count(n, r));
                for out in [greedy(&t, r).unwrap(), gbfos(&t, r).unwrap(), adp(&t, r).unwrap()] {
                    prop_assert_eq!(out.alloc.total(), r);
                    prop_assert!(out.alloc.rates().iter().all(|&m| m <= r));
                    prop_assert!(out.logdet_value <= best.logdet_value + 1e-9);
                    let direct = logdet_unchecked(&t.total(out.alloc.rates()).unwrap());
                    prop_assert_eq!(out.logdet_value, direct);
                }
                prop_assert!(greedy(&t, r).unwrap().matrix_sums <= (n * (2 * r).saturating_sub(1)) as u64);
                prop_assert!(gbfos(&t, r).unwrap().matrix_sums <= (n + 2 * n * (n - 1) * r) as u64);
            }

            #[test]
            fn policies_deterministic(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random_table(4, 3, &mut rng).unwrap();
                prop_assert_eq!(adp(&t, 3).unwrap(), adp(&t, 3).unwrap());
                prop_assert_eq!(gbfos(&t, 3).unwrap(), gbfos(&t, 3).unwrap());
                prop_assert_eq!(greedy(&t, 3).unwrap(), greedy(&t, 3).unwrap());
            }
        }
    }
}
