//! Tabular defenders: epsilon-greedy Q-learning, policy hill-climbing (PHC)
//! and PHC warm-started from emulated runs.
//!
//! Actions are indices into the defender's [`ActionSet`]. Rows are created on
//! first write: Q rows start at zero, policy rows start uniform.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use rand::{Rng, RngCore};

use crate::environment::{argmax, run_defense, DefensePolicy, Environment, GameState, SlotRecord};
use crate::equilibrium::sample_pmf;
use crate::error::{Error, Result};
use crate::game::{ActionSet, Allocation, DataSizeVector, GameConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    /// Emulated runs used for hotbooting.
    pub hotboot_runs: usize,
    /// Slots per emulated run.
    pub hotboot_slots: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            gamma: 0.5,
            delta: 0.02,
            epsilon: 0.1,
            hotboot_runs: 10,
            hotboot_slots: 500,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name: &str, v: f64| Error::InvalidParameter(format!("{name} = {v} out of range"));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(bad("alpha", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(bad("gamma", self.gamma));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(bad("delta", self.delta));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(bad("epsilon", self.epsilon));
        }
        Ok(())
    }
}

/// Q(s, a), zero for pairs never written.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    actions: usize,
    rows: HashMap<GameState, Vec<f64>>,
}

impl QTable {
    pub fn new(actions: usize) -> Self {
        Self {
            actions,
            rows: HashMap::new(),
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: &GameState) -> Option<&[f64]> {
        self.rows.get(s).map(Vec::as_slice)
    }

    pub fn get(&self, s: &GameState, a: usize) -> f64 {
        self.rows.get(s).map_or(0.0, |r| r[a])
    }

    fn row_mut(&mut self, s: &GameState) -> &mut Vec<f64> {
        let n = self.actions;
        if !self.rows.contains_key(s) {
            self.rows.insert(s.clone(), vec![0.0; n]);
        }
        self.rows.get_mut(s).expect("just inserted")
    }

    pub fn set(&mut self, s: &GameState, a: usize, value: f64) {
        self.row_mut(s)[a] = value;
    }

    /// V(s) = max_a Q(s, a).
    pub fn value(&self, s: &GameState) -> f64 {
        self.rows
            .get(s)
            .map_or(0.0, |r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// Lexicographically first maximizer.
    pub fn greedy(&self, s: &GameState) -> usize {
        self.rows.get(s).map_or(0, |r| argmax(r))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GameState, &[f64])> {
        self.rows.iter().map(|(s, r)| (s, r.as_slice()))
    }

    pub fn has_nonzero(&self) -> bool {
        self.rows.values().any(|r| r.iter().any(|&v| v != 0.0))
    }
}

/// π(s, ·), uniform for states never written.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTable {
    actions: usize,
    rows: HashMap<GameState, Vec<f64>>,
}

impl PolicyTable {
    pub fn new(actions: usize) -> Self {
        Self {
            actions,
            rows: HashMap::new(),
        }
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, s: &GameState) -> Option<&[f64]> {
        self.rows.get(s).map(Vec::as_slice)
    }

    pub fn pmf(&self, s: &GameState) -> Vec<f64> {
        self.rows
            .get(s)
            .cloned()
            .unwrap_or_else(|| vec![1.0 / self.actions as f64; self.actions])
    }

    fn row_mut(&mut self, s: &GameState) -> &mut Vec<f64> {
        let n = self.actions;
        if !self.rows.contains_key(s) {
            self.rows.insert(s.clone(), vec![1.0 / n as f64; n]);
        }
        self.rows.get_mut(s).expect("just inserted")
    }

    /// Replaces π(s, ·); the row must be a pmf.
    pub fn set_row(&mut self, s: &GameState, row: Vec<f64>) -> Result<()> {
        if row.len() != self.actions {
            return Err(Error::ShapeMismatch(format!(
                "policy row has {} entries, expected {}",
                row.len(),
                self.actions
            )));
        }
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidStrategy(format!("policy row sums to {sum}")));
        }
        self.rows.insert(s.clone(), row);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GameState, &[f64])> {
        self.rows.iter().map(|(s, r)| (s, r.as_slice()))
    }
}

/// Q(s,a) <- (1 - α) Q(s,a) + α (reward + γ V(s')).
pub fn q_update(table: &mut QTable, s: &GameState, a: usize, reward: f64, next: &GameState, cfg: &LearnerConfig) {
    let v_next = table.value(next);
    let q = &mut table.row_mut(s)[a];
    *q = (1.0 - cfg.alpha) * *q + cfg.alpha * (reward + cfg.gamma * v_next);
}

/// Moves δ of probability toward the greedy action, taking δ/(n-1) from
/// every other action, then clamps at zero and renormalizes.
pub fn phc_policy_update(policy: &mut PolicyTable, table: &QTable, s: &GameState, cfg: &LearnerConfig) {
    let n = policy.actions;
    if n < 2 {
        return;
    }
    let best = table.greedy(s);
    let dec = cfg.delta / (n - 1) as f64;
    let row = policy.row_mut(s);
    let mut clamped = false;
    for (i, p) in row.iter_mut().enumerate() {
        if i == best {
            *p += cfg.delta;
        } else {
            *p -= dec;
        }
        if *p < 0.0 {
            *p = 0.0;
            clamped = true;
        }
    }
    let sum: f64 = row.iter().sum();
    if clamped || (sum - 1.0).abs() > 1e-12 {
        row.iter_mut().for_each(|p| *p /= sum);
    }
}

/// Samples an action index from π(s, ·).
pub fn phc_select_action<R: Rng + ?Sized>(policy: &PolicyTable, s: &GameState, rng: &mut R) -> usize {
    match policy.row(s) {
        Some(row) => sample_pmf(row, rng).min(policy.actions - 1),
        None => rng.random_range(0..policy.actions),
    }
}

/// Q and π tables plus the hash of the game they were learned on.
#[derive(Debug, Clone, PartialEq)]
pub struct PhcTables {
    pub config_hash: u64,
    pub q: QTable,
    pub policy: PolicyTable,
}

impl PhcTables {
    pub fn fresh(config: &GameConfig, actions: usize) -> Self {
        Self {
            config_hash: config.config_hash(),
            q: QTable::new(actions),
            policy: PolicyTable::new(actions),
        }
    }

    pub fn check_compatible(&self, config: &GameConfig, actions: usize) -> Result<()> {
        let expected = config.config_hash();
        if self.config_hash != expected {
            return Err(Error::HashMismatch {
                expected: format!("{expected:016x}"),
                found: format!("{:016x}", self.config_hash),
            });
        }
        if self.q.actions != actions {
            return Err(Error::ShapeMismatch(format!(
                "tables cover {} actions, game has {actions}",
                self.q.actions
            )));
        }
        Ok(())
    }
}

/// PHC defender (Q-table plus mixed-strategy table).
#[derive(Debug, Clone)]
pub struct PhcDefender {
    cfg: LearnerConfig,
    tables: PhcTables,
}

impl PhcDefender {
    pub fn new(cfg: LearnerConfig, tables: PhcTables) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, tables })
    }

    pub fn tables(&self) -> &PhcTables {
        &self.tables
    }

    pub fn into_tables(self) -> PhcTables {
        self.tables
    }
}

impl DefensePolicy for PhcDefender {
    fn select(&mut self, state: &GameState, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(phc_select_action(&self.tables.policy, state, rng))
    }

    fn update(
        &mut self,
        state: &GameState,
        action: usize,
        reward: f64,
        next: &GameState,
        _rng: &mut dyn RngCore,
    ) -> Result<()> {
        q_update(&mut self.tables.q, state, action, reward, next, &self.cfg);
        phc_policy_update(&mut self.tables.policy, &self.tables.q, state, &self.cfg);
        Ok(())
    }
}

/// Epsilon-greedy Q-learning defender.
#[derive(Debug, Clone)]
pub struct QDefender {
    cfg: LearnerConfig,
    table: QTable,
}

impl QDefender {
    pub fn new(cfg: LearnerConfig, actions: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            table: QTable::new(actions),
        })
    }

    pub fn table(&self) -> &QTable {
        &self.table
    }
}

impl DefensePolicy for QDefender {
    fn select(&mut self, state: &GameState, rng: &mut dyn RngCore) -> Result<usize> {
        if self.cfg.epsilon > 0.0 && rng.random::<f64>() < self.cfg.epsilon {
            return Ok(rng.random_range(0..self.table.actions));
        }
        Ok(self.table.greedy(state))
    }

    fn update(
        &mut self,
        state: &GameState,
        action: usize,
        reward: f64,
        next: &GameState,
        _rng: &mut dyn RngCore,
    ) -> Result<()> {
        q_update(&mut self.table, state, action, reward, next, &self.cfg);
        Ok(())
    }
}

/// Runs PHC on `env`, starting from `warm` tables when given.
pub fn run_phc_defense(
    env: &mut Environment,
    cfg: &LearnerConfig,
    horizon: u64,
    warm: Option<&PhcTables>,
    rng: &mut dyn RngCore,
) -> Result<Vec<SlotRecord>> {
    let n = env.defense_actions().len();
    let tables = match warm {
        Some(t) => {
            t.check_compatible(env.config(), n)?;
            t.clone()
        }
        None => PhcTables::fresh(env.config(), n),
    };
    let mut defender = PhcDefender::new(*cfg, tables)?;
    run_defense(env, &mut defender, horizon, rng)
}

pub fn run_q_defense(env: &mut Environment, cfg: &LearnerConfig, horizon: u64, rng: &mut dyn RngCore) -> Result<Vec<SlotRecord>> {
    let mut defender = QDefender::new(*cfg, env.defense_actions().len())?;
    run_defense(env, &mut defender, horizon, rng)
}

/// Trains one shared pair of tables over `cfg.hotboot_runs` emulated
/// environments of `cfg.hotboot_slots` slots each. `sampler(run)` builds the
/// environment for each run.
pub fn hotboot_phc<F>(
    config: &GameConfig,
    cfg: &LearnerConfig,
    mut sampler: F,
    rng: &mut dyn RngCore,
) -> Result<PhcTables>
where
    F: FnMut(usize) -> Result<Environment>,
{
    if cfg.hotboot_runs == 0 || cfg.hotboot_slots == 0 {
        return Err(Error::InvalidParameter(
            "hotbooting needs at least one run of at least one slot".into(),
        ));
    }
    let mut defender: Option<PhcDefender> = None;
    for run in 0..cfg.hotboot_runs {
        let mut env = sampler(run)?;
        if env.config() != config {
            return Err(Error::InvalidConfig("emulated scenario differs from the target game".into()));
        }
        let d = match defender.as_mut() {
            Some(d) => d,
            None => defender.insert(PhcDefender::new(*cfg, PhcTables::fresh(config, env.defense_actions().len()))?),
        };
        run_defense(&mut env, d, cfg.hotboot_slots, rng)?;
    }
    Ok(defender.expect("at least one run").into_tables())
}

pub const TABLES_MAGIC: &str = "# blotto-tables v1";

fn join(values: &[u32]) -> String {
    let parts: Vec<String> = values.iter().map(u32::to_string).collect();
    parts.join(",")
}

fn state_key(s: &GameState) -> String {
    format!("{}/{}", join(s.prev_attack.counts()), join(s.data.numerators()))
}

fn parse_counts(text: &str) -> std::result::Result<Vec<u32>, String> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|t| t.parse::<u32>().map_err(|e| format!("bad count {t:?}: {e}")))
        .collect()
}

/// Writes `tables` in the line-oriented warm-start format:
///
/// ```text
/// # blotto-tables v1
/// config <hash hex>
/// actions <count>
/// Q <prev attack>/<data numerators> <action counts> <value>
/// P <prev attack>/<data numerators> <action counts> <probability>
/// ```
///
/// Zero Q entries are omitted. Zero policy entries are omitted too; a state
/// with any P line has its missing entries read back as zero.
pub fn write_tables<W: Write>(tables: &PhcTables, actions: &ActionSet, mut out: W) -> Result<()> {
    let mut buf = String::new();
    writeln!(buf, "{TABLES_MAGIC}").ok();
    writeln!(buf, "config {:016x}", tables.config_hash).ok();
    writeln!(buf, "actions {}", actions.len()).ok();
    let mut q_rows: Vec<_> = tables.q.iter().collect();
    q_rows.sort_by_key(|(s, _)| state_key(s));
    for (s, row) in q_rows {
        let key = state_key(s);
        for (a, &v) in row.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(buf, "Q {key} {} {v}", join(actions.get(a).counts())).ok();
        }
    }
    let mut p_rows: Vec<_> = tables.policy.iter().collect();
    p_rows.sort_by_key(|(s, _)| state_key(s));
    for (s, row) in p_rows {
        let key = state_key(s);
        for (a, &v) in row.iter().enumerate().filter(|(_, v)| **v != 0.0) {
            writeln!(buf, "P {key} {} {v}", join(actions.get(a).counts())).ok();
        }
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

/// Reads tables written by [`write_tables`] for the game `config`.
pub fn read_tables<R: BufRead>(config: &GameConfig, actions: &ActionSet, input: R) -> Result<PhcTables> {
    let mut lines = input.lines().enumerate();
    let mut next_line = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i + 1, l?)),
            None => Err(Error::Artifact(format!("missing {what}"))),
        }
    };
    let (_, magic) = next_line("header")?;
    if magic.trim() != TABLES_MAGIC {
        return Err(Error::Artifact(format!("not a table file (header {magic:?})")));
    }
    let (line, cfg_line) = next_line("config line")?;
    let hash = cfg_line
        .strip_prefix("config ")
        .and_then(|h| u64::from_str_radix(h.trim(), 16).ok())
        .ok_or(Error::Parse {
            line,
            message: "expected `config <hex>`".into(),
        })?;
    let expected = config.config_hash();
    if hash != expected {
        return Err(Error::HashMismatch {
            expected: format!("{expected:016x}"),
            found: format!("{hash:016x}"),
        });
    }
    let (line, count_line) = next_line("actions line")?;
    let count: usize = count_line
        .strip_prefix("actions ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or(Error::Parse {
            line,
            message: "expected `actions <count>`".into(),
        })?;
    if count != actions.len() {
        return Err(Error::ShapeMismatch(format!(
            "file covers {count} actions, game has {}",
            actions.len()
        )));
    }

    let mut tables = PhcTables::fresh(config, count);
    let mut policy_rows: HashMap<GameState, Vec<f64>> = HashMap::new();
    for (i, l) in lines {
        let line = i + 1;
        let l = l?;
        if l.trim().is_empty() {
            continue;
        }
        let perr = |message: String| Error::Parse { line, message };
        let fields: Vec<&str> = l.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(perr(format!("expected 4 fields, found {}", fields.len())));
        }
        let (prev, data) = fields[1]
            .split_once('/')
            .ok_or_else(|| perr("state key needs `attack/data`".into()))?;
        let prev = parse_counts(prev).map_err(perr)?;
        let data = parse_counts(data).map_err(perr)?;
        let state = GameState {
            prev_attack: Allocation::new(prev, config.attack_budget).map_err(|e| perr(e.to_string()))?,
            data: DataSizeVector::from_levels(data, config.quant_levels).map_err(|e| perr(e.to_string()))?,
        };
        let action_counts = parse_counts(fields[2]).map_err(perr)?;
        let a = actions
            .index_of(&action_counts)
            .ok_or_else(|| perr(format!("{action_counts:?} is not a defender action")))?;
        let v: f64 = fields[3].parse().map_err(|e| perr(format!("bad value: {e}")))?;
        if !v.is_finite() {
            return Err(perr("non-finite value".into()));
        }
        match fields[0] {
            "Q" => tables.q.set(&state, a, v),
            "P" => policy_rows.entry(state).or_insert_with(|| vec![0.0; count])[a] = v,
            other => return Err(perr(format!("unknown row kind {other:?}"))),
        }
    }
    for (s, row) in policy_rows {
        tables.policy.set_row(&s, row)?;
    }
    Ok(tables)
}
