//! Scenario files.
//!
//! One `key=value` pair per line; `#` starts a comment. Every key except
//! `event` may appear once. Keys:
//!
//! | key | value |
//! |-----|-------|
//! | `name` | output file stem |
//! | `devices`, `defense_budget`, `attack_budget`, `quant_levels` | integers |
//! | `granularity` | integer or `auto` (default `1`) |
//! | `data` | one size in `[0, 1]` for every device, or a comma list (default `1.0`) |
//! | `event` | `<slot> scale <m>[,<m>...]` or `<slot> replace <v>,<v>,...` |
//! | `attacker` | `static-uniform`, `greedy-q` or `induce-and-strike` |
//! | `attacker_alpha`, `attacker_gamma`, `attacker_epsilon` | attacker Q-learning rates |
//! | `strike_slots` | comma list (default `1000,2000`) |
//! | `strike_window`, `strike_duration` | slots (default `200` each) |
//! | `defender` | comma list of `q`, `phc`, `hotboot-phc`, `dqn`, `hotboot-dqn`, `ne-marginal`, `random` |
//! | `horizon` | slots |
//! | `seeds` | comma list or half-open range `a..b` |
//! | `window` | moving-average width for plot files (default `50`) |
//! | `summary_window` | trailing slots in the summary (default `500`) |
//! | `observation` | `perfect` or `noisy` |
//! | `alpha`, `gamma`, `delta`, `epsilon` | tabular learner rates; `gamma` and `epsilon` also drive the DQN |
//! | `hotboot_runs`, `hotboot_slots`, `hotboot_seed` | emulated runs, their length, and the seed for them |
//! | `dqn_window`, `minibatch`, `replay_capacity`, `learning_rate` | DQN training |
//! | `filters1`, `filters2`, `hidden`, `input_side`, `relu_output` | DQN network |
//! | `sweep` | `<axis>:<v>,<v>,...` with axis `defense_budget` or `devices` |

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::environment::{
    AttackerPolicy, DataChange, DataSchedule, GreedyQ, InduceAndStrike, ObservationMode, ScheduleEvent, StaticUniform,
};
use crate::error::{Error, Result};
use crate::game::{DataSizeVector, GameConfig};
use crate::learning::LearnerConfig;
use crate::neural::DqnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefenderKind {
    Q,
    Phc,
    HotbootPhc,
    Dqn,
    HotbootDqn,
    NeMarginal,
    Random,
}

impl DefenderKind {
    pub const ALL: [DefenderKind; 7] = [
        DefenderKind::Q,
        DefenderKind::Phc,
        DefenderKind::HotbootPhc,
        DefenderKind::Dqn,
        DefenderKind::HotbootDqn,
        DefenderKind::NeMarginal,
        DefenderKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DefenderKind::Q => "q",
            DefenderKind::Phc => "phc",
            DefenderKind::HotbootPhc => "hotboot-phc",
            DefenderKind::Dqn => "dqn",
            DefenderKind::HotbootDqn => "hotboot-dqn",
            DefenderKind::NeMarginal => "ne-marginal",
            DefenderKind::Random => "random",
        }
    }

    pub fn is_hotboot(self) -> bool {
        matches!(self, DefenderKind::HotbootPhc | DefenderKind::HotbootDqn)
    }
}

impl fmt::Display for DefenderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DefenderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown defender {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AttackerKind {
    StaticUniform,
    GreedyQ {
        alpha: f64,
        gamma: f64,
        epsilon: f64,
    },
    InduceAndStrike {
        alpha: f64,
        gamma: f64,
        epsilon: f64,
        strike_slots: Vec<u64>,
        window: usize,
        duration: u64,
    },
}

impl AttackerKind {
    pub fn build(&self) -> Box<dyn AttackerPolicy> {
        match self {
            AttackerKind::StaticUniform => Box::new(StaticUniform),
            AttackerKind::GreedyQ { alpha, gamma, epsilon } => Box::new(GreedyQ::new(*alpha, *gamma, *epsilon)),
            AttackerKind::InduceAndStrike {
                alpha,
                gamma,
                epsilon,
                strike_slots,
                window,
                duration,
            } => Box::new(InduceAndStrike::new(
                GreedyQ::new(*alpha, *gamma, *epsilon),
                strike_slots.clone(),
                *window,
                *duration,
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DefenseBudget,
    Devices,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "defense_budget" => Ok(SweepAxis::DefenseBudget),
            "devices" => Ok(SweepAxis::Devices),
            _ => Err(Error::InvalidParameter(format!(
                "sweep axis must be defense_budget or devices, got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::DefenseBudget => "defense_budget",
            SweepAxis::Devices => "devices",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub config: GameConfig,
    /// Whether the granularity was chosen automatically (and is re-chosen in sweeps).
    pub auto_granularity: bool,
    pub schedule: DataSchedule,
    pub attacker: AttackerKind,
    pub defenders: Vec<DefenderKind>,
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub window: usize,
    pub summary_window: u64,
    pub observation: ObservationMode,
    pub learner: LearnerConfig,
    pub dqn: DqnConfig,
    pub hotboot_seed: u64,
    pub sweep: Option<(SweepAxis, Vec<u32>)>,
}

struct Entry {
    line: usize,
    value: String,
}

struct Entries {
    map: HashMap<String, Entry>,
    events: Vec<Entry>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.map.remove(key)
    }

    fn parse<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| Error::Parse {
                line: e.line,
                message: format!("{key}: {err}"),
            }),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parse(key)?
            .ok_or_else(|| Error::InvalidConfig(format!("missing required key `{key}`")))
    }
}

fn parse_list<T: FromStr>(text: &str, line: usize, key: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    text.split(',')
        .map(|t| {
            t.trim().parse::<T>().map_err(|e| Error::Parse {
                line,
                message: format!("{key}: {:?}: {e}", t.trim()),
            })
        })
        .collect()
}

fn broadcast(values: Vec<f64>, devices: usize, line: usize, key: &str) -> Result<Vec<f64>> {
    match values.len() {
        1 => Ok(vec![values[0]; devices]),
        n if n == devices => Ok(values),
        n => Err(Error::Parse {
            line,
            message: format!("{key}: {n} values for {devices} devices"),
        }),
    }
}

fn parse_seeds(e: &Entry) -> Result<Vec<u64>> {
    let perr = |message: String| Error::Parse { line: e.line, message };
    let seeds = if let Some((a, b)) = e.value.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|err| perr(format!("seeds: {err}")))?;
        let b: u64 = b.trim().parse().map_err(|err| perr(format!("seeds: {err}")))?;
        (a..b).collect()
    } else {
        parse_list(&e.value, e.line, "seeds")?
    };
    if seeds.is_empty() {
        return Err(perr("seeds: empty list".into()));
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(perr("seeds: duplicate seed".into()));
    }
    Ok(seeds)
}

fn parse_event(e: &Entry, devices: usize) -> Result<(u64, Vec<f64>, bool)> {
    let perr = |message: String| Error::Parse { line: e.line, message };
    let parts: Vec<&str> = e.value.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(perr("event: expected `<slot> scale|replace <values>`".into()));
    }
    let slot: u64 = parts[0].parse().map_err(|err| perr(format!("event slot: {err}")))?;
    let values = broadcast(parse_list(parts[2], e.line, "event")?, devices, e.line, "event")?;
    match parts[1] {
        "scale" => Ok((slot, values, true)),
        "replace" => Ok((slot, values, false)),
        other => Err(perr(format!("event: unknown change {other:?}"))),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Entries {
            map: HashMap::new(),
            events: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or(Error::Parse {
                line,
                message: format!("expected key=value, got {content:?}"),
            })?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if key == "event" {
                entries.events.push(Entry { line, value });
                continue;
            }
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some(prev) = entries.map.get(&key) {
                return Err(Error::Parse {
                    line,
                    message: format!("duplicate key `{key}` (first on line {})", prev.line),
                });
            }
            entries.map.insert(key, Entry { line, value });
        }
        Self::from_entries(entries)
    }

    fn from_entries(mut e: Entries) -> Result<Self> {
        let name: String = e.require("name")?;
        if name.is_empty() || name.contains(['/', '\\']) {
            return Err(Error::InvalidConfig(format!("name {name:?} is not a file stem")));
        }
        let devices: usize = e.require("devices")?;
        let defense_budget: u32 = e.require("defense_budget")?;
        let attack_budget: u32 = e.require("attack_budget")?;
        let quant_levels: u32 = e.parse("quant_levels")?.unwrap_or(1);
        let (config, auto_granularity) = match e.take("granularity") {
            Some(g) if g.value == "auto" => (
                GameConfig::with_auto_granularity(devices, defense_budget, attack_budget, quant_levels)?,
                true,
            ),
            Some(g) => {
                let step: u32 = g.value.parse().map_err(|err| Error::Parse {
                    line: g.line,
                    message: format!("granularity: {err}"),
                })?;
                (GameConfig::new(devices, defense_budget, attack_budget, quant_levels, step)?, false)
            }
            None => (GameConfig::new(devices, defense_budget, attack_budget, quant_levels, 1)?, false),
        };

        let initial = match e.take("data") {
            Some(d) => {
                let values = broadcast(parse_list(&d.value, d.line, "data")?, devices, d.line, "data")?;
                DataSizeVector::quantize(&values, quant_levels).map_err(|err| Error::Parse {
                    line: d.line,
                    message: format!("data: {err}"),
                })?
            }
            None => DataSizeVector::uniform(devices, quant_levels, quant_levels)?,
        };
        let mut events = Vec::new();
        for ev in &e.events {
            let (slot, values, scale) = parse_event(ev, devices)?;
            let change = if scale {
                DataChange::Scale(values)
            } else {
                DataChange::Replace(values)
            };
            events.push(ScheduleEvent { slot, change });
        }
        let schedule = DataSchedule::new(initial, events)?;

        let attacker_alpha = e.parse("attacker_alpha")?.unwrap_or(0.9);
        let attacker_gamma = e.parse("attacker_gamma")?.unwrap_or(0.5);
        let attacker_epsilon = e.parse("attacker_epsilon")?.unwrap_or(0.1);
        let strike_slots = match e.take("strike_slots") {
            Some(s) => parse_list(&s.value, s.line, "strike_slots")?,
            None => vec![1000, 2000],
        };
        let strike_window = e.parse("strike_window")?.unwrap_or(200);
        let strike_duration = e.parse("strike_duration")?.unwrap_or(200);
        let attacker = match e.take("attacker") {
            None => AttackerKind::GreedyQ {
                alpha: attacker_alpha,
                gamma: attacker_gamma,
                epsilon: attacker_epsilon,
            },
            Some(a) => match a.value.as_str() {
                "static-uniform" => AttackerKind::StaticUniform,
                "greedy-q" => AttackerKind::GreedyQ {
                    alpha: attacker_alpha,
                    gamma: attacker_gamma,
                    epsilon: attacker_epsilon,
                },
                "induce-and-strike" => AttackerKind::InduceAndStrike {
                    alpha: attacker_alpha,
                    gamma: attacker_gamma,
                    epsilon: attacker_epsilon,
                    strike_slots,
                    window: strike_window,
                    duration: strike_duration,
                },
                other => {
                    return Err(Error::Parse {
                        line: a.line,
                        message: format!("unknown attacker {other:?}"),
                    })
                }
            },
        };

        let defenders = match e.take("defender") {
            Some(d) => {
                let kinds: Vec<DefenderKind> = parse_list(&d.value, d.line, "defender")?;
                let mut unique = kinds.clone();
                unique.sort();
                unique.dedup();
                if unique.len() != kinds.len() {
                    return Err(Error::Parse {
                        line: d.line,
                        message: "defender: listed twice".into(),
                    });
                }
                kinds
            }
            None => vec![DefenderKind::HotbootDqn],
        };
        let horizon = e.require("horizon")?;
        let seeds = match e.take("seeds") {
            Some(s) => parse_seeds(&s)?,
            None => vec![0],
        };
        let window = e.parse("window")?.unwrap_or(50);
        let summary_window = e.parse("summary_window")?.unwrap_or(500);
        if window == 0 || summary_window == 0 {
            return Err(Error::InvalidConfig("window and summary_window must be at least 1".into()));
        }
        let observation = match e.take("observation") {
            None => ObservationMode::Perfect,
            Some(o) => match o.value.as_str() {
                "perfect" => ObservationMode::Perfect,
                "noisy" => ObservationMode::Noisy,
                other => {
                    return Err(Error::Parse {
                        line: o.line,
                        message: format!("unknown observation mode {other:?}"),
                    })
                }
            },
        };

        let ld = LearnerConfig::default();
        let learner = LearnerConfig {
            alpha: e.parse("alpha")?.unwrap_or(ld.alpha),
            gamma: e.parse("gamma")?.unwrap_or(ld.gamma),
            delta: e.parse("delta")?.unwrap_or(ld.delta),
            epsilon: e.parse("epsilon")?.unwrap_or(ld.epsilon),
            hotboot_runs: e.parse("hotboot_runs")?.unwrap_or(ld.hotboot_runs),
            hotboot_slots: e.parse("hotboot_slots")?.unwrap_or(ld.hotboot_slots),
        };
        learner.validate()?;
        let dd = DqnConfig::default();
        let dqn = DqnConfig {
            gamma: learner.gamma,
            epsilon: learner.epsilon,
            window: e.parse("dqn_window")?.unwrap_or(dd.window),
            minibatch: e.parse("minibatch")?.unwrap_or(dd.minibatch),
            replay_capacity: e.parse("replay_capacity")?.unwrap_or(dd.replay_capacity),
            learning_rate: e.parse("learning_rate")?.unwrap_or(dd.learning_rate),
            hotboot_runs: learner.hotboot_runs,
            hotboot_slots: learner.hotboot_slots,
            filters1: e.parse("filters1")?.unwrap_or(dd.filters1),
            filters2: e.parse("filters2")?.unwrap_or(dd.filters2),
            hidden: e.parse("hidden")?.unwrap_or(dd.hidden),
            side: e.parse("input_side")?,
            relu_output: e.parse("relu_output")?.unwrap_or(dd.relu_output),
        };
        dqn.validate()?;
        let hotboot_seed = e.parse("hotboot_seed")?.unwrap_or(0);
        let sweep = match e.take("sweep") {
            None => None,
            Some(s) => {
                let perr = |message: String| Error::Parse { line: s.line, message };
                let (axis, values) = s
                    .value
                    .split_once(':')
                    .ok_or_else(|| perr("sweep: expected `<axis>:<values>`".into()))?;
                let axis: SweepAxis = axis.trim().parse().map_err(|err: Error| perr(err.to_string()))?;
                Some((axis, parse_list(values, s.line, "sweep")?))
            }
        };
        debug_assert!(e.map.is_empty(), "unhandled keys: {:?}", e.map.keys().collect::<Vec<_>>());

        Ok(Self {
            name,
            config,
            auto_granularity,
            schedule,
            attacker,
            defenders,
            horizon,
            seeds,
            window,
            summary_window,
            observation,
            learner,
            dqn,
            hotboot_seed,
            sweep,
        })
    }

    /// The same scenario with a different defender budget or device count.
    /// Changing the device count needs equal data sizes on every device and
    /// uniform schedule events.
    pub fn with_axis(&self, axis: SweepAxis, value: u32) -> Result<Self> {
        let c = self.config;
        let (devices, defense_budget) = match axis {
            SweepAxis::DefenseBudget => (c.devices, value),
            SweepAxis::Devices => (value as usize, c.defense_budget),
        };
        let config = if self.auto_granularity {
            GameConfig::with_auto_granularity(devices, defense_budget, c.attack_budget, c.quant_levels)?
        } else {
            GameConfig::new(devices, defense_budget, c.attack_budget, c.quant_levels, c.granularity)?
        };
        let mut out = self.clone();
        out.config = config;
        if devices != c.devices {
            out.schedule = resize_schedule(&self.schedule, devices)?;
        }
        Ok(out)
    }
}

fn uniform_value(values: &[f64]) -> Result<f64> {
    match values.split_first() {
        Some((&first, rest)) if rest.iter().all(|&v| v == first) => Ok(first),
        _ => Err(Error::InvalidConfig(
            "a devices sweep needs the same data size and multipliers on every device".into(),
        )),
    }
}

fn resize_schedule(schedule: &DataSchedule, devices: usize) -> Result<DataSchedule> {
    let initial = schedule.initial();
    let n = initial.numerators();
    let value = uniform_value(&n.iter().map(|&x| f64::from(x)).collect::<Vec<_>>())?;
    let initial = DataSizeVector::uniform(devices, value as u32, initial.levels())?;
    let events = schedule
        .events()
        .iter()
        .map(|ev| {
            let change = match &ev.change {
                DataChange::Scale(m) => DataChange::Scale(vec![uniform_value(m)?; devices]),
                DataChange::Replace(v) => DataChange::Replace(vec![uniform_value(v)?; devices]),
            };
            Ok(ScheduleEvent { slot: ev.slot, change })
        })
        .collect::<Result<Vec<_>>>()?;
    DataSchedule::new(initial, events)
}

const KNOWN_KEYS: &[&str] = &[
    "name",
    "devices",
    "defense_budget",
    "attack_budget",
    "quant_levels",
    "granularity",
    "data",
    "attacker",
    "attacker_alpha",
    "attacker_gamma",
    "attacker_epsilon",
    "strike_slots",
    "strike_window",
    "strike_duration",
    "defender",
    "horizon",
    "seeds",
    "window",
    "summary_window",
    "observation",
    "alpha",
    "gamma",
    "delta",
    "epsilon",
    "hotboot_runs",
    "hotboot_slots",
    "hotboot_seed",
    "dqn_window",
    "minibatch",
    "replay_capacity",
    "learning_rate",
    "filters1",
    "filters2",
    "hidden",
    "input_side",
    "relu_output",
    "sweep",
];

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# a comment
name = demo
devices = 3
defense_budget = 6
attack_budget = 2
quant_levels = 4
data = 0.5, 0.75, 1
event = 10 scale 1.2
event = 20 replace 0.25,0.25,0.25
attacker = induce-and-strike
strike_slots = 15
defender = q, hotboot-dqn
horizon = 40
seeds = 3..6
";

    #[test]
    fn parses_all_parts() {
        let s = Scenario::parse(BASIC).unwrap();
        assert_eq!(s.name, "demo");
        assert_eq!(s.config, GameConfig::new(3, 6, 2, 4, 1).unwrap());
        assert_eq!(s.schedule.initial().numerators(), &[2, 3, 4]);
        assert_eq!(s.schedule.events().len(), 2);
        assert_eq!(s.schedule.data_at(25).unwrap().numerators(), &[1, 1, 1]);
        assert_eq!(s.defenders, vec![DefenderKind::Q, DefenderKind::HotbootDqn]);
        assert_eq!(s.seeds, vec![3, 4, 5]);
        assert_eq!(s.window, 50);
        assert!(matches!(
            s.attacker,
            AttackerKind::InduceAndStrike { ref strike_slots, window: 200, duration: 200, .. } if strike_slots == &[15]
        ));
    }

    fn line_of(err: Error) -> usize {
        match err {
            Error::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other}"),
        }
    }

    #[test]
    fn errors_name_the_line() {
        let unknown = format!("{BASIC}colour = red\n");
        assert_eq!(line_of(Scenario::parse(&unknown).unwrap_err()), 15);
        let dup = format!("{BASIC}horizon = 5\n");
        assert_eq!(line_of(Scenario::parse(&dup).unwrap_err()), 15);
        let bad = BASIC.replace("horizon = 40", "horizon = forty");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 13);
        let bad = BASIC.replace("defender = q, hotboot-dqn", "defender = q, sarsa");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 12);
        let bad = BASIC.replace("data = 0.5, 0.75, 1", "data = 0.5, 0.75");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 7);
        let bad = BASIC.replace("seeds = 3..6", "seeds = 1,2,1");
        assert_eq!(line_of(Scenario::parse(&bad).unwrap_err()), 14);
        assert!(Scenario::parse(&BASIC.replace("horizon = 40\n", "")).is_err());
    }

    #[test]
    fn auto_granularity_and_sweeps() {
        let text = "name=g\ndevices=10\ndefense_budget=10\nattack_budget=2\ngranularity=auto\nhorizon=1\nsweep=devices:3,4\n";
        let s = Scenario::parse(text).unwrap();
        assert!(s.auto_granularity);
        assert_eq!(s.config.granularity, 2);
        assert_eq!(s.sweep, Some((SweepAxis::Devices, vec![3, 4])));
        let small = s.with_axis(SweepAxis::Devices, 3).unwrap();
        assert_eq!(small.config.granularity, 1);
        assert_eq!(small.schedule.initial().devices(), 3);
        let rich = s.with_axis(SweepAxis::DefenseBudget, 12).unwrap();
        assert_eq!(rich.config.defense_budget, 12);

        let uneven = Scenario::parse(BASIC).unwrap();
        assert!(uneven.with_axis(SweepAxis::Devices, 4).is_err());
        assert!(uneven.with_axis(SweepAxis::DefenseBudget, 8).is_ok());
    }
}
