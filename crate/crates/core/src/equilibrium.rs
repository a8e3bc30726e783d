//! Equilibrium marginals of the CPU allocation game and exact oracles over them.
//!
//! Equilibria are given as per-device marginal pmfs. Because the utility is a
//! sum of per-device terms, expectations over marginals are exact even though
//! independent draws from them can overshoot a player's budget.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::game::{sign_diff, ActionSet, Allocation, DataSizeVector, GameConfig};

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Attempts made by [`sample_feasible`] before falling back to rescaling.
pub const FEASIBLE_ATTEMPTS: usize = 1000;

/// Per-device pmfs over CPU counts: `pmfs[i][j] = Pr(count on device i = j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy {
    pmfs: Vec<Vec<f64>>,
}

impl MixedStrategy {
    pub fn new(pmfs: Vec<Vec<f64>>) -> Result<Self> {
        if pmfs.is_empty() {
            return Err(Error::InvalidStrategy("no devices".into()));
        }
        for (i, row) in pmfs.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::InvalidStrategy(format!("device {i} has an empty pmf")));
            }
            if let Some(p) = row.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(Error::InvalidStrategy(format!("device {i} has entry {p}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidStrategy(format!("device {i} sums to {sum}")));
            }
        }
        Ok(Self { pmfs })
    }

    /// Point mass on a fixed allocation.
    pub fn atom(counts: &[u32]) -> Self {
        let pmfs = counts
            .iter()
            .map(|&c| {
                let mut row = vec![0.0; c as usize + 1];
                row[c as usize] = 1.0;
                row
            })
            .collect();
        Self { pmfs }
    }

    pub fn devices(&self) -> usize {
        self.pmfs.len()
    }

    pub fn row(&self, device: usize) -> &[f64] {
        &self.pmfs[device]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.pmfs
    }

    /// Expected total CPUs, `sum_i E[count_i]`.
    pub fn expected_total(&self) -> f64 {
        self.pmfs
            .iter()
            .map(|row| row.iter().enumerate().map(|(j, p)| j as f64 * p).sum::<f64>())
            .sum()
    }
}

fn uniform_row(len: usize, lo: usize, hi: usize) -> Vec<f64> {
    let mass = 1.0 / (hi - lo + 1) as f64;
    let mut row = vec![0.0; len];
    row[lo..=hi].iter_mut().for_each(|p| *p = mass);
    row
}

/// Equilibrium of the symmetric game (`S_M = S_N`): device `i` is uniform on
/// `{0, ..., floor(2 S B_i / B_hat)}`. Both players use this strategy.
pub fn symmetric_ne(config: &GameConfig, data: &DataSizeVector) -> Result<MixedStrategy> {
    if config.defense_budget != config.attack_budget {
        return Err(Error::SymmetricRegime(format!(
            "budgets differ (defense {}, attack {})",
            config.defense_budget, config.attack_budget
        )));
    }
    if data.devices() != config.devices {
        return Err(Error::DimensionMismatch {
            expected: config.devices,
            got: data.devices(),
        });
    }
    let total = data.total_levels();
    if total == 0 {
        return Err(Error::SymmetricRegime("total data size is zero".into()));
    }
    for (i, &n) in data.numerators().iter().enumerate() {
        // B_i < sum of the others  <=>  2 B_i < B_hat
        if 2 * u64::from(n) >= total {
            return Err(Error::SymmetricRegime(format!(
                "device {i} dominates: B_{i} = {} is not below the sum of the other devices",
                data.values()[i]
            )));
        }
    }
    let budget = u64::from(config.defense_budget);
    let len = config.defense_budget as usize + 1;
    let pmfs = data
        .numerators()
        .iter()
        .map(|&n| {
            // floor(beta * B_i) with beta = 2S / B_hat, in exact integer arithmetic
            let top = (2 * budget * u64::from(n) / total) as usize;
            uniform_row(len, 0, top)
        })
        .collect();
    Ok(MixedStrategy { pmfs })
}

/// Equilibrium of the asymmetric game with equal data sizes and
/// `2/D <= S_N/S_M <= 1`, returned as `(defender, attacker)`.
///
/// With `F = floor(2 S_M / D)`, the defender is uniform on `{1, ..., F}`; the
/// attacker keeps `1 - S_N/S_M` at zero and spreads the rest evenly on
/// `{1, ..., F}`.
pub fn asymmetric_ne(config: &GameConfig) -> Result<(MixedStrategy, MixedStrategy)> {
    let (sm, sn, d) = (
        u64::from(config.defense_budget),
        u64::from(config.attack_budget),
        config.devices as u64,
    );
    if d < 3 {
        return Err(Error::AsymmetricRegime(format!("needs at least 3 devices, got {d}")));
    }
    if sn > sm {
        return Err(Error::AsymmetricRegime(format!(
            "S_N/S_M = {sn}/{sm} exceeds 1"
        )));
    }
    if d * sn < 2 * sm {
        return Err(Error::AsymmetricRegime(format!(
            "S_N/S_M = {:.4} is below 2/D = {:.4}",
            sn as f64 / sm as f64,
            2.0 / d as f64
        )));
    }
    Ok(asymmetric_marginals(config.defense_budget, config.attack_budget, config.devices))
}

/// The asymmetric-regime marginal formulas without the regime checks.
pub(crate) fn asymmetric_marginals(sm: u32, sn: u32, devices: usize) -> (MixedStrategy, MixedStrategy) {
    let f = (2 * sm as usize / devices).max(1);
    let len = (sm as usize).max(f) + 1;
    let defender = uniform_row(len, 1, f);
    let ratio = f64::from(sn) / f64::from(sm);
    let mut attacker = vec![0.0; len];
    attacker[0] = 1.0 - ratio;
    let spread = ratio / f as f64;
    attacker[1..=f].iter_mut().for_each(|p| *p = spread);
    (
        MixedStrategy {
            pmfs: vec![defender; devices],
        },
        MixedStrategy {
            pmfs: vec![attacker; devices],
        },
    )
}

/// `E[sign(J - K)]` for independent `J ~ p`, `K ~ q`, by the full double sum.
///
/// Terms are paired as `p_j q_k - p_k q_j` over `j > k`, so identical inputs
/// give exactly zero.
pub fn expected_sign_exact(p: &[f64], q: &[f64]) -> f64 {
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    let n = p.len().max(q.len());
    let mut acc = 0.0;
    for j in 1..n {
        let (pj, qj) = (at(p, j), at(q, j));
        for k in 0..j {
            acc += pj * at(q, k) - at(p, k) * qj;
        }
    }
    acc
}

fn check_pair(x: &MixedStrategy, y: &MixedStrategy, data: &DataSizeVector) -> Result<()> {
    for got in [x.devices(), y.devices()] {
        if got != data.devices() {
            return Err(Error::DimensionMismatch {
                expected: data.devices(),
                got,
            });
        }
    }
    Ok(())
}

/// Expected defender utility `sum_i B_i E[sign(M_i - N_i)]`.
pub fn expected_utility_exact(x: &MixedStrategy, y: &MixedStrategy, data: &DataSizeVector) -> Result<f64> {
    check_pair(x, y, data)?;
    Ok(data
        .values()
        .iter()
        .enumerate()
        .map(|(i, &b)| b * expected_sign_exact(x.row(i), y.row(i)))
        .sum())
}

/// Expected protection level, i.e. expected utility over `B_hat`.
pub fn expected_protection_exact(x: &MixedStrategy, y: &MixedStrategy, data: &DataSizeVector) -> Result<f64> {
    check_pair(x, y, data)?;
    if data.total() <= 0.0 {
        return Err(Error::EmptyStorage);
    }
    Ok(expected_utility_exact(x, y, data)? / data.total())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Symmetric,
    Asymmetric,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Symmetric => "sym",
            Regime::Asymmetric => "asym",
        })
    }
}

#[derive(Debug, Clone)]
pub struct NeAnalysis {
    pub defender_strategy: MixedStrategy,
    pub attacker_strategy: MixedStrategy,
    pub expected_protection: f64,
    pub expected_utility_defender: f64,
    pub regime: Regime,
}

pub fn analyze_symmetric(config: &GameConfig, data: &DataSizeVector) -> Result<NeAnalysis> {
    let x = symmetric_ne(config, data)?;
    let expected_utility_defender = expected_utility_exact(&x, &x, data)?;
    Ok(NeAnalysis {
        expected_protection: expected_utility_defender / data.total(),
        expected_utility_defender,
        defender_strategy: x.clone(),
        attacker_strategy: x,
        regime: Regime::Symmetric,
    })
}

/// Asymmetric analysis; `data` must hold equal sizes on every device.
pub fn analyze_asymmetric(config: &GameConfig, data: &DataSizeVector) -> Result<NeAnalysis> {
    if data.devices() != config.devices {
        return Err(Error::DimensionMismatch {
            expected: config.devices,
            got: data.devices(),
        });
    }
    if data.numerators().windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::AsymmetricRegime("data sizes differ across devices".into()));
    }
    if data.total() <= 0.0 {
        return Err(Error::EmptyStorage);
    }
    let (x, y) = asymmetric_ne(config)?;
    let expected_utility_defender = expected_utility_exact(&x, &y, data)?;
    Ok(NeAnalysis {
        expected_protection: expected_utility_defender / data.total(),
        expected_utility_defender,
        defender_strategy: x,
        attacker_strategy: y,
        regime: Regime::Asymmetric,
    })
}

/// Independent per-device draw. Nothing ties the result to a budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalDraw {
    pub counts: Vec<u32>,
}

impl MarginalDraw {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn within(&self, budget: u32) -> bool {
        self.total() <= u64::from(budget)
    }
}

/// Inverse-CDF draw of an index from a pmf.
pub fn sample_pmf<R: Rng + ?Sized>(pmf: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the last cumulative sum
    pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn sample_marginal<R: Rng + ?Sized>(strategy: &MixedStrategy, rng: &mut R) -> MarginalDraw {
    MarginalDraw {
        counts: strategy
            .rows()
            .iter()
            .map(|row| sample_pmf(row, rng) as u32)
            .collect(),
    }
}

/// Budget-feasible realization of a marginal strategy: rejection sampling,
/// then proportional rescale-and-floor of the last draw.
pub fn sample_feasible<R: Rng + ?Sized>(strategy: &MixedStrategy, budget: u32, rng: &mut R) -> Allocation {
    let mut last = None;
    for _ in 0..FEASIBLE_ATTEMPTS {
        let draw = sample_marginal(strategy, rng);
        if draw.within(budget) {
            return Allocation::new(draw.counts, budget).expect("draw checked against budget");
        }
        last = Some(draw);
    }
    let draw = last.expect("at least one attempt");
    rescale_to_budget(&draw, budget)
}

pub(crate) fn rescale_to_budget(draw: &MarginalDraw, budget: u32) -> Allocation {
    let total = draw.total();
    let counts = draw
        .counts
        .iter()
        .map(|&c| (u64::from(c) * u64::from(budget) / total) as u32)
        .collect();
    Allocation::new(counts, budget).expect("rescaled draw fits the budget")
}

/// Per-device payoff table `w_i(m) = Pr(opp_i < m) - Pr(opp_i > m)` for `m` in `0..=budget`.
fn payoff_table(opponent: &MixedStrategy, budget: u32) -> Vec<Vec<f64>> {
    opponent
        .rows()
        .iter()
        .map(|row| {
            (0..=budget)
                .map(|m| {
                    row.iter()
                        .enumerate()
                        .map(|(k, &q)| q * f64::from(sign_diff(m, k as u32)))
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Exhaustive best response within an already enumerated action set. Returns
/// the index of the lexicographically first maximizer and its expected value
/// `sum_i B_i E[sign(own_i - opp_i)]`.
pub fn best_response_in(
    actions: &ActionSet,
    opponent: &MixedStrategy,
    data: &DataSizeVector,
) -> Result<(usize, f64)> {
    if opponent.devices() != data.devices() {
        return Err(Error::DimensionMismatch {
            expected: data.devices(),
            got: opponent.devices(),
        });
    }
    let table = payoff_table(opponent, actions.budget());
    let weights = data.values();
    let mut best = (0, f64::NEG_INFINITY);
    for (idx, action) in actions.actions().iter().enumerate() {
        if action.devices() != data.devices() {
            return Err(Error::DimensionMismatch {
                expected: data.devices(),
                got: action.devices(),
            });
        }
        let value: f64 = action
            .counts()
            .iter()
            .enumerate()
            .map(|(i, &m)| weights[i] * table[i][m as usize])
            .sum();
        if value > best.1 {
            best = (idx, value);
        }
    }
    Ok(best)
}

/// Exhaustive pure best response to `opponent` under `budget` and step `granularity`.
pub fn best_response_oracle(
    opponent: &MixedStrategy,
    data: &DataSizeVector,
    budget: u32,
    granularity: u32,
) -> Result<(Allocation, f64)> {
    let actions = ActionSet::enumerate(budget, data.devices(), granularity)?;
    let (idx, value) = best_response_in(&actions, opponent, data)?;
    Ok((actions.get(idx).clone(), value))
}
