//! One-shot CPU allocation game between a storage defender and an APT attacker.
//!
//! Each of `D` storage devices is a battlefield whose value is the size of the
//! data it stores. The player that puts strictly more CPUs on a device controls
//! it; equal allocations contribute nothing to either side.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Hard cap on enumerated action sets unless the caller asks for another one.
pub const DEFAULT_ACTION_CAP: usize = 100_000;

/// Target size used when the granularity is chosen automatically.
pub const AUTO_GRANULARITY_TARGET: usize = 10_000;

/// Sign of a real number as `-1`, `0` or `+1`.
pub fn sign(x: f64) -> i32 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `sign(own - other)` for CPU counts, without going through floats.
#[inline]
pub fn sign_diff(own: u32, other: u32) -> i32 {
    match own.cmp(&other) {
        std::cmp::Ordering::Greater => 1,
        std::cmp::Ordering::Less => -1,
        std::cmp::Ordering::Equal => 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GameConfig {
    pub devices: usize,
    pub defense_budget: u32,
    pub attack_budget: u32,
    pub quant_levels: u32,
    /// Actions are restricted to multiples of this CPU step.
    pub granularity: u32,
}

impl GameConfig {
    pub fn new(
        devices: usize,
        defense_budget: u32,
        attack_budget: u32,
        quant_levels: u32,
        granularity: u32,
    ) -> Result<Self> {
        let config = Self {
            devices,
            defense_budget,
            attack_budget,
            quant_levels,
            granularity,
        };
        config.validate()?;
        Ok(config)
    }

    /// Picks the smallest granularity that keeps the defender's action set
    /// within [`AUTO_GRANULARITY_TARGET`] actions.
    pub fn with_auto_granularity(
        devices: usize,
        defense_budget: u32,
        attack_budget: u32,
        quant_levels: u32,
    ) -> Result<Self> {
        let mut g = 1;
        loop {
            let config = Self {
                devices,
                defense_budget,
                attack_budget,
                quant_levels,
                granularity: g,
            };
            config.validate()?;
            if action_count(defense_budget, devices, g) <= AUTO_GRANULARITY_TARGET as u128 {
                return Ok(config);
            }
            g += 1;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.devices == 0 {
            return fail("devices must be at least 1".into());
        }
        if self.defense_budget == 0 {
            return fail("defense budget must be at least 1".into());
        }
        if self.quant_levels == 0 {
            return fail("quant_levels must be at least 1".into());
        }
        if self.granularity == 0 {
            return fail("granularity must be at least 1".into());
        }
        // An attacker without CPUs is allowed (unopposed defense runs).
        let limit = if self.attack_budget == 0 {
            self.defense_budget
        } else {
            self.defense_budget.min(self.attack_budget)
        };
        if self.granularity > limit {
            return fail(format!(
                "granularity {} exceeds min(defense_budget, attack_budget) = {limit}",
                self.granularity
            ));
        }
        Ok(())
    }

    pub fn defense_actions(&self) -> Result<ActionSet> {
        ActionSet::enumerate(self.defense_budget, self.devices, self.granularity)
    }

    pub fn attack_actions(&self) -> Result<ActionSet> {
        ActionSet::enumerate(self.attack_budget, self.devices, self.granularity)
    }

    /// Canonical text used for artifact compatibility hashes.
    pub fn fingerprint(&self) -> String {
        format!(
            "devices={};defense_budget={};attack_budget={};quant_levels={};granularity={}",
            self.devices, self.defense_budget, self.attack_budget, self.quant_levels, self.granularity
        )
    }

    /// First 8 bytes of the SHA-256 of [`fingerprint`](Self::fingerprint), big-endian.
    pub fn config_hash(&self) -> u64 {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.fingerprint().as_bytes());
        u64::from_be_bytes(digest[..8].try_into().expect("32-byte digest"))
    }
}

/// CPUs per device, validated against a budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Allocation {
    counts: Vec<u32>,
    budget: u32,
}

impl Allocation {
    pub fn new(counts: Vec<u32>, budget: u32) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total > u64::from(budget) {
            return Err(Error::InfeasibleAllocation { counts, budget });
        }
        Ok(Self { counts, budget })
    }

    pub fn zeros(devices: usize, budget: u32) -> Self {
        Self {
            counts: vec![0; devices],
            budget,
        }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn devices(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, c) in self.counts.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str(")")
    }
}

/// Number of vectors of `devices` nonnegative multiples of `granularity`
/// summing to at most `budget`, i.e. `C(budget/g + D, D)`.
pub fn action_count(budget: u32, devices: usize, granularity: u32) -> u128 {
    let units = u128::from(budget / granularity.max(1));
    let d = devices as u128;
    // C(units + d, d) computed incrementally; saturates instead of overflowing.
    let mut acc: u128 = 1;
    for i in 1..=d {
        acc = match acc.checked_mul(units + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}

/// Every allocation in lexicographic order, subject to the default cap.
pub fn enumerate_actions(budget: u32, devices: usize, granularity: u32) -> Result<Vec<Allocation>> {
    enumerate_actions_capped(budget, devices, granularity, DEFAULT_ACTION_CAP)
}

pub fn enumerate_actions_capped(
    budget: u32,
    devices: usize,
    granularity: u32,
    cap: usize,
) -> Result<Vec<Allocation>> {
    if devices == 0 || granularity == 0 {
        return Err(Error::InvalidConfig(
            "enumeration needs at least one device and a positive granularity".into(),
        ));
    }
    let count = action_count(budget, devices, granularity);
    if count > cap as u128 {
        return Err(Error::ActionSpaceTooLarge { count, cap });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut current = vec![0u32; devices];
    fill(&mut current, 0, budget, granularity, budget, &mut out);
    Ok(out)
}

fn fill(
    current: &mut [u32],
    pos: usize,
    remaining: u32,
    step: u32,
    budget: u32,
    out: &mut Vec<Allocation>,
) {
    if pos == current.len() {
        out.push(Allocation {
            counts: current.to_vec(),
            budget,
        });
        return;
    }
    let mut c = 0;
    while c <= remaining {
        current[pos] = c;
        fill(current, pos + 1, remaining - c, step, budget, out);
        c += step;
    }
    current[pos] = 0;
}

/// Enumerated action set with an index for reverse lookups.
#[derive(Debug, Clone)]
pub struct ActionSet {
    budget: u32,
    granularity: u32,
    actions: Vec<Allocation>,
    index: HashMap<Vec<u32>, usize>,
}

impl ActionSet {
    pub fn enumerate(budget: u32, devices: usize, granularity: u32) -> Result<Self> {
        let actions = enumerate_actions(budget, devices, granularity)?;
        let index = actions
            .iter()
            .enumerate()
            .map(|(i, a)| (a.counts.clone(), i))
            .collect();
        Ok(Self {
            budget,
            granularity,
            actions,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn granularity(&self) -> u32 {
        self.granularity
    }

    pub fn get(&self, index: usize) -> &Allocation {
        &self.actions[index]
    }

    pub fn actions(&self) -> &[Allocation] {
        &self.actions
    }

    pub fn index_of(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Index of `allocation` in this set, or an infeasibility error.
    pub fn require(&self, allocation: &Allocation) -> Result<usize> {
        self.index_of(allocation.counts())
            .ok_or_else(|| Error::InfeasibleAllocation {
                counts: allocation.counts().to_vec(),
                budget: self.budget,
            })
    }
}

/// Per-device data sizes on the `1/L` grid, stored as integer numerators.
#[derive(Debug, Clone)]
pub struct DataSizeVector {
    numerators: Vec<u32>,
    levels: u32,
    values: Vec<f64>,
    total: f64,
}

impl PartialEq for DataSizeVector {
    fn eq(&self, other: &Self) -> bool {
        self.levels == other.levels && self.numerators == other.numerators
    }
}

impl Eq for DataSizeVector {}

impl std::hash::Hash for DataSizeVector {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.levels.hash(state);
        self.numerators.hash(state);
    }
}

impl DataSizeVector {
    pub fn from_levels(numerators: Vec<u32>, levels: u32) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidConfig("quant_levels must be at least 1".into()));
        }
        if numerators.is_empty() {
            return Err(Error::InvalidConfig("data vector needs at least one device".into()));
        }
        if let Some(&bad) = numerators.iter().find(|&&n| n > levels) {
            return Err(Error::DataOutOfRange(format!("level {bad} exceeds {levels}")));
        }
        let values: Vec<f64> = numerators
            .iter()
            .map(|&n| f64::from(n) / f64::from(levels))
            .collect();
        let total = values.iter().sum();
        Ok(Self {
            numerators,
            levels,
            values,
            total,
        })
    }

    /// Rounds each raw size in `[0, 1]` to the nearest multiple of `1/L`;
    /// exact halves round up.
    pub fn quantize(raw: &[f64], levels: u32) -> Result<Self> {
        let mut numerators = Vec::with_capacity(raw.len());
        for &x in raw {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::DataOutOfRange(format!("{x} is outside [0, 1]")));
            }
            numerators.push((x * f64::from(levels) + 0.5).floor() as u32);
        }
        Self::from_levels(numerators, levels)
    }

    /// Accepts only values already on the `1/L` grid (within 1e-9).
    pub fn from_values(values: &[f64], levels: u32) -> Result<Self> {
        let q = Self::quantize(values, levels)?;
        for (&v, &g) in values.iter().zip(&q.values) {
            if (v - g).abs() > 1e-9 {
                return Err(Error::DataOutOfRange(format!(
                    "{v} is not on the 1/{levels} grid"
                )));
            }
        }
        Ok(q)
    }

    pub fn uniform(devices: usize, numerator: u32, levels: u32) -> Result<Self> {
        Self::from_levels(vec![numerator; devices], levels)
    }

    pub fn devices(&self) -> usize {
        self.numerators.len()
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn numerators(&self) -> &[u32] {
        &self.numerators
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `B_hat`, the sum of the per-device values.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn total_levels(&self) -> u64 {
        self.numerators.iter().map(|&n| u64::from(n)).sum()
    }

    /// Multiplies each device's size and re-quantizes. The flag reports
    /// whether any device had to be clamped at 1.
    pub fn scaled(&self, multipliers: &[f64]) -> Result<(Self, bool)> {
        check_dims(self.devices(), multipliers.len())?;
        let mut clamped = false;
        let raw: Vec<f64> = self
            .values
            .iter()
            .zip(multipliers)
            .map(|(&v, &m)| {
                let x = v * m;
                if x > 1.0 {
                    clamped = true;
                    1.0
                } else {
                    x.max(0.0)
                }
            })
            .collect();
        Ok((Self::quantize(&raw, self.levels)?, clamped))
    }

    /// Shifts each device by a whole number of levels, clamped to `[0, L]`.
    pub fn shifted(&self, deltas: &[i32]) -> Result<Self> {
        check_dims(self.devices(), deltas.len())?;
        let levels = self.levels as i64;
        let numerators = self
            .numerators
            .iter()
            .zip(deltas)
            .map(|(&n, &d)| (i64::from(n) + i64::from(d)).clamp(0, levels) as u32)
            .collect();
        Self::from_levels(numerators, self.levels)
    }
}

/// Result of one slot of play.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub utility_defender: f64,
    pub utility_attacker: f64,
    pub protection_level: f64,
    pub per_device_sign: Vec<i8>,
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// `sum_i w_i * sign(own_i - other_i)` for arbitrary nonnegative weights.
pub fn weighted_utility(weights: &[f64], own: &[u32], other: &[u32]) -> Result<f64> {
    check_dims(weights.len(), own.len())?;
    check_dims(weights.len(), other.len())?;
    Ok(weights
        .iter()
        .zip(own.iter().zip(other))
        .map(|(&w, (&m, &n))| w * f64::from(sign_diff(m, n)))
        .sum())
}

pub fn utility_defender(data: &DataSizeVector, defense: &Allocation, attack: &Allocation) -> Result<f64> {
    weighted_utility(data.values(), defense.counts(), attack.counts())
}

pub fn utility_attacker(data: &DataSizeVector, defense: &Allocation, attack: &Allocation) -> Result<f64> {
    Ok(-utility_defender(data, defense, attack)?)
}

/// Normalized size of the data the defender holds, in `[-1, 1]`.
pub fn protection_level(data: &DataSizeVector, defense: &Allocation, attack: &Allocation) -> Result<f64> {
    let total = data.total();
    if total <= 0.0 {
        return Err(Error::EmptyStorage);
    }
    Ok(utility_defender(data, defense, attack)? / total)
}

/// Resolves a slot. With empty storage the protection level is reported as 0.
pub fn resolve_slot(data: &DataSizeVector, defense: &Allocation, attack: &Allocation) -> Result<SlotOutcome> {
    let utility_defender = utility_defender(data, defense, attack)?;
    let per_device_sign = defense
        .counts()
        .iter()
        .zip(attack.counts())
        .map(|(&m, &n)| sign_diff(m, n) as i8)
        .collect();
    let protection_level = if data.total() > 0.0 {
        utility_defender / data.total()
    } else {
        0.0
    };
    Ok(SlotOutcome {
        utility_defender,
        utility_attacker: -utility_defender,
        protection_level,
        per_device_sign,
    })
}
