//! Built-in scenarios.
//!
//! - `fig4`: 10 devices holding full-size data, 10 defense CPUs against 2
//!   attack CPUs. Granularity is chosen automatically (2), which keeps 3003
//!   defender actions.
//! - `fig4-reduced`: 3 devices, 6 against 2 CPUs, unit granularity.
//! - `fig5`: 3 devices at half size growing by 1.167 at slot 1000 and 1.143
//!   at slot 2000, 16 against 4 CPUs, attacker striking at 1000 and 2000.
//! - `fig5-reduced`: as `fig5` with 8 defense CPUs.
//! - `fig6`: the `fig5` setup swept over 12 to 16 defense CPUs.
//! - `fig7`: 21 against 4 CPUs swept over 3 to 6 devices; granularity is
//!   re-chosen per point (2 at 6 devices, 8008 actions). Ranges are approximate.

use crate::error::{Error, Result};
use crate::harness::scenario::Scenario;

pub const PRESET_NAMES: [&str; 6] = ["fig4", "fig4-reduced", "fig5", "fig5-reduced", "fig6", "fig7"];

const FIG5_BODY: &str = "\
devices = 3
attack_budget = 4
quant_levels = 12
data = 0.5
event = 1000 scale 1.167
event = 2000 scale 1.143
attacker = induce-and-strike
strike_slots = 1000,2000
horizon = 3000
seeds = 0..10
";

/// Scenario file text of a preset.
pub fn preset_text(name: &str) -> Option<String> {
    let text = match name {
        "fig4" => "\
name = fig4
devices = 10
defense_budget = 10
attack_budget = 2
quant_levels = 4
granularity = auto
data = 1.0
attacker = greedy-q
defender = q,hotboot-phc,hotboot-dqn
horizon = 3000
seeds = 0..10
"
        .to_string(),
        "fig4-reduced" => "\
name = fig4-reduced
devices = 3
defense_budget = 6
attack_budget = 2
quant_levels = 4
data = 1.0
attacker = greedy-q
defender = q,hotboot-phc,hotboot-dqn
horizon = 3000
seeds = 0..10
"
        .to_string(),
        "fig5" => format!("name = fig5\ndefense_budget = 16\ndefender = q,hotboot-phc,hotboot-dqn\n{FIG5_BODY}"),
        "fig5-reduced" => {
            format!("name = fig5-reduced\ndefense_budget = 8\ndefender = q,hotboot-phc,hotboot-dqn\n{FIG5_BODY}")
        }
        "fig6" => format!(
            "name = fig6\ndefense_budget = 16\ndefender = q,hotboot-phc,hotboot-dqn,ne-marginal\n\
             sweep = defense_budget:12,13,14,15,16\n{FIG5_BODY}"
        ),
        "fig7" => "\
name = fig7
devices = 6
defense_budget = 21
attack_budget = 4
quant_levels = 4
granularity = auto
data = 1.0
attacker = greedy-q
defender = q,hotboot-phc,hotboot-dqn
horizon = 3000
seeds = 0..10
sweep = devices:3,4,5,6
"
        .to_string(),
        _ => return None,
    };
    Some(text)
}

pub fn preset(name: &str) -> Result<Scenario> {
    let text = preset_text(name).ok_or_else(|| {
        Error::InvalidParameter(format!("unknown preset {name:?} (known: {})", PRESET_NAMES.join(", ")))
    })?;
    Scenario::parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for name in PRESET_NAMES {
            let s = preset(name).unwrap();
            assert_eq!(s.name, name);
        }
        assert!(preset("fig9").is_err());
    }

    #[test]
    fn preset_shapes() {
        let f4 = preset("fig4").unwrap();
        assert_eq!(f4.config.granularity, 2);
        assert_eq!(f4.config.defense_actions().unwrap().len(), 3003);
        let f5 = preset("fig5").unwrap();
        let totals: Vec<u64> = [0, 1000, 2000]
            .iter()
            .map(|&k| f5.schedule.data_at(k).unwrap().total_levels())
            .collect();
        assert_eq!(totals, vec![18, 21, 24]);
        let f7 = preset("fig7").unwrap();
        let (axis, values) = f7.sweep.clone().unwrap();
        let six = f7.with_axis(axis, *values.last().unwrap()).unwrap();
        assert_eq!(six.config.granularity, 2);
        assert_eq!(six.config.defense_actions().unwrap().len(), 8008);
    }
}
