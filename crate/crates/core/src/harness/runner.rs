//! Running scenarios and writing their output files.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::environment::{run_defense, DataSchedule, Environment, NeMarginalDefense, RandomDefense};
use crate::error::{Error, Result};
use crate::game::ActionSet;
use crate::harness::metrics::{
    plot_csv, series_csv, summary_row, MetricsReport, SeedSeries, SlotMetric, SUMMARY_HEADER,
};
use crate::harness::scenario::{DefenderKind, Scenario, SweepAxis};
use crate::learning::{hotboot_phc, read_tables, run_phc_defense, run_q_defense, write_tables, PhcTables, TABLES_MAGIC};
use crate::neural::{hotboot_dqn, read_params, run_dqn_defense, write_params, NetworkParams, PARAMS_MAGIC};

/// Output of hotbooting, consumed by the matching warm-started defender.
#[derive(Debug, Clone, PartialEq)]
pub enum WarmStart {
    Phc(PhcTables),
    Dqn(NetworkParams),
}

impl WarmStart {
    pub fn kind(&self) -> DefenderKind {
        match self {
            WarmStart::Phc(_) => DefenderKind::HotbootPhc,
            WarmStart::Dqn(_) => DefenderKind::HotbootDqn,
        }
    }
}

struct Actions {
    defense: Arc<ActionSet>,
    attack: Arc<ActionSet>,
}

impl Actions {
    fn of(scenario: &Scenario) -> Result<Self> {
        Ok(Self {
            defense: Arc::new(scenario.config.defense_actions()?),
            attack: Arc::new(scenario.config.attack_actions()?),
        })
    }
}

fn environment(scenario: &Scenario, actions: &Actions, schedule: DataSchedule, seed: u64) -> Result<Environment> {
    Ok(Environment::with_actions(
        scenario.config,
        Arc::clone(&actions.defense),
        Arc::clone(&actions.attack),
        schedule,
        scenario.attacker.build(),
        seed,
    )?
    .with_observation(scenario.observation))
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Hotboots the defender `kind` on emulated variants of `scenario`: each run
/// perturbs every data phase by up to one quantization level per device and
/// gets a fresh attacker seed.
pub fn hotboot(scenario: &Scenario, kind: DefenderKind) -> Result<WarmStart> {
    let actions = Actions::of(scenario)?;
    let mut learner_rng = stream(scenario.hotboot_seed, 2);
    let mut scenario_rng = stream(scenario.hotboot_seed, 3);
    let sampler = |_run: usize| {
        let schedule = scenario.schedule.perturbed(&mut scenario_rng)?;
        let seed = scenario_rng.next_u64();
        environment(scenario, &actions, schedule, seed)
    };
    log::info!("hotbooting {kind} for {}", scenario.name);
    match kind {
        DefenderKind::HotbootPhc => {
            hotboot_phc(&scenario.config, &scenario.learner, sampler, &mut learner_rng).map(WarmStart::Phc)
        }
        DefenderKind::HotbootDqn => {
            hotboot_dqn(&scenario.config, &scenario.dqn, sampler, &mut learner_rng).map(WarmStart::Dqn)
        }
        other => Err(Error::InvalidParameter(format!("{other} does not hotboot"))),
    }
}

fn run_seed(
    scenario: &Scenario,
    actions: &Actions,
    kind: DefenderKind,
    seed: u64,
    warm: Option<&WarmStart>,
) -> Result<SeedSeries> {
    let mut env = environment(scenario, actions, scenario.schedule.clone(), seed)?;
    let mut rng = stream(seed, 1);
    let horizon = scenario.horizon;
    let result = match (kind, warm) {
        (DefenderKind::Q, _) => run_q_defense(&mut env, &scenario.learner, horizon, &mut rng),
        (DefenderKind::Phc, _) => run_phc_defense(&mut env, &scenario.learner, horizon, None, &mut rng),
        (DefenderKind::HotbootPhc, Some(WarmStart::Phc(t))) => {
            run_phc_defense(&mut env, &scenario.learner, horizon, Some(t), &mut rng)
        }
        (DefenderKind::Dqn, _) => run_dqn_defense(&mut env, &scenario.dqn, horizon, None, &mut rng),
        (DefenderKind::HotbootDqn, Some(WarmStart::Dqn(p))) => {
            run_dqn_defense(&mut env, &scenario.dqn, horizon, Some(p), &mut rng)
        }
        (DefenderKind::NeMarginal, _) => {
            let mut d = NeMarginalDefense::new(&scenario.config, Arc::clone(&actions.defense));
            run_defense(&mut env, &mut d, horizon, &mut rng)
        }
        (DefenderKind::Random, _) => {
            let mut d = RandomDefense::new(&actions.defense);
            run_defense(&mut env, &mut d, horizon, &mut rng)
        }
        (kind, _) => Err(Error::InvalidParameter(format!("{kind} needs a matching warm start"))),
    };
    let records = result.map_err(|e| Error::Run {
        seed,
        slot: env.slot(),
        source: Box::new(e),
    })?;
    Ok(SeedSeries {
        seed,
        slots: records.iter().map(SlotMetric::from).collect(),
    })
}

/// Runs one defender over every seed. Hotbooting defenders use `warm` when
/// given and hotboot themselves otherwise.
pub fn run_defender(scenario: &Scenario, kind: DefenderKind, warm: Option<&WarmStart>) -> Result<MetricsReport> {
    let actions = Actions::of(scenario)?;
    let owned;
    let warm = match (kind.is_hotboot(), warm) {
        (false, _) => None,
        (true, Some(w)) if w.kind() == kind => Some(w),
        (true, Some(w)) => {
            return Err(Error::InvalidParameter(format!(
                "warm start is for {}, defender is {kind}",
                w.kind()
            )))
        }
        (true, None) => {
            owned = hotboot(scenario, kind)?;
            Some(&owned)
        }
    };
    log::info!("running {kind} on {} over {} seeds", scenario.name, scenario.seeds.len());
    let per_seed = scenario
        .seeds
        .par_iter()
        .map(|&seed| run_seed(scenario, &actions, kind, seed, warm))
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::new(kind, per_seed, scenario.summary_window)
}

/// Runs every defender of the scenario; `warm` supplies prebuilt warm starts.
pub fn run_scenario(scenario: &Scenario, warm: &[WarmStart]) -> Result<Vec<MetricsReport>> {
    scenario
        .defenders
        .iter()
        .map(|&kind| run_defender(scenario, kind, warm.iter().find(|w| w.kind() == kind)))
        .collect()
}

fn stem(scenario: &Scenario, kind: DefenderKind) -> String {
    if scenario.defenders.len() == 1 {
        scenario.name.clone()
    } else {
        format!("{}-{kind}", scenario.name)
    }
}

/// File name and contents of every output of a finished scenario.
pub fn report_files(scenario: &Scenario, reports: &[MetricsReport]) -> Vec<(String, String)> {
    let mut files = Vec::new();
    let mut summary = format!("{SUMMARY_HEADER}\n");
    for report in reports {
        let stem = stem(scenario, report.defender);
        for s in &report.per_seed {
            files.push((format!("{stem}.seed{}.csv", s.seed), series_csv(&s.slots)));
        }
        files.push((format!("{stem}.mean.csv"), series_csv(&report.mean)));
        files.push((format!("{stem}.plot.csv"), plot_csv(&report.mean, scenario.window)));
        summary.push_str(&summary_row(report, scenario.horizon));
        summary.push('\n');
    }
    files.push((format!("{}.summary.csv", scenario.name), summary));
    files
}

/// Writes all files into `out_dir`, creating it if needed.
pub fn write_files(out_dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    files
        .iter()
        .map(|(name, text)| {
            let path = out_dir.join(name);
            fs::write(&path, text)?;
            Ok(path)
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "axis,value,defender,seeds,horizon,mean_R,mean_uD,tail_R,tail_uD";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: u32,
    pub reports: Vec<MetricsReport>,
}

/// Runs the scenario once per value of `axis`.
pub fn run_sweep(scenario: &Scenario, axis: SweepAxis, values: &[u32]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one value".into()));
    }
    values
        .iter()
        .map(|&value| {
            let wrap = |e: Error| Error::SweepPoint {
                axis: axis.to_string(),
                value,
                source: Box::new(e),
            };
            let point = scenario.with_axis(axis, value).map_err(wrap)?;
            let reports = run_scenario(&point, &[]).map_err(wrap)?;
            Ok(SweepPoint { value, reports })
        })
        .collect()
}

pub fn sweep_csv(scenario: &Scenario, axis: SweepAxis, points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in points {
        for r in &p.reports {
            let s = &r.summary;
            out.push_str(&format!(
                "{axis},{},{},{},{},{},{},{},{}\n",
                p.value,
                r.defender,
                r.per_seed.len(),
                scenario.horizon,
                s.mean_protection,
                s.mean_utility,
                s.tail_protection,
                s.tail_utility
            ));
        }
    }
    out
}

/// Serializes a warm start: text tables for PHC, binary parameters for DQN.
pub fn warm_bytes(scenario: &Scenario, warm: &WarmStart) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    match warm {
        WarmStart::Phc(t) => write_tables(t, &scenario.config.defense_actions()?, &mut out)?,
        WarmStart::Dqn(p) => write_params(p, scenario.config.config_hash(), &mut out)?,
    }
    Ok(out)
}

/// Reads a warm-start file, checking that it was built for the scenario's game.
pub fn read_warm(scenario: &Scenario, bytes: &[u8]) -> Result<WarmStart> {
    if bytes.starts_with(TABLES_MAGIC.as_bytes()) {
        let actions = scenario.config.defense_actions()?;
        read_tables(&scenario.config, &actions, bytes).map(WarmStart::Phc)
    } else if bytes.starts_with(PARAMS_MAGIC) {
        read_params(&scenario.config, bytes).map(WarmStart::Dqn)
    } else {
        Err(Error::Artifact("unrecognized warm-start file".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::metrics::parse_series_csv;

    fn small(defenders: &str, horizon: u64) -> Scenario {
        Scenario::parse(&format!(
            "name=t\ndevices=3\ndefense_budget=6\nattack_budget=2\nquant_levels=4\n\
             defender={defenders}\nhorizon={horizon}\nseeds=0..3\nhotboot_runs=2\nhotboot_slots=30\n\
             filters1=2\nfilters2=2\nhidden=8\nsummary_window=20\n"
        ))
        .unwrap()
    }

    #[test]
    fn runs_every_defender_and_files_round_trip() {
        let s = small("q,phc,hotboot-phc,dqn,hotboot-dqn,ne-marginal,random", 40);
        let reports = run_scenario(&s, &[]).unwrap();
        assert_eq!(reports.len(), 7);
        let files = report_files(&s, &reports);
        assert_eq!(files.len(), 7 * (3 + 2) + 1);
        let (name, text) = files.iter().find(|(n, _)| n == "t-q.seed1.csv").unwrap();
        assert_eq!(name, "t-q.seed1.csv");
        let parsed = parse_series_csv(text).unwrap();
        assert_eq!(parsed.len(), 40);
        let summary = &files.last().unwrap().1;
        assert!(summary.starts_with(SUMMARY_HEADER));
        assert_eq!(summary.lines().count(), 8);
    }

    #[test]
    fn seed_order_does_not_change_averages() {
        let a = small("ne-marginal", 30);
        let mut b = a.clone();
        b.seeds = vec![2, 0, 1];
        let ra = run_defender(&a, DefenderKind::NeMarginal, None).unwrap();
        let rb = run_defender(&b, DefenderKind::NeMarginal, None).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn zero_horizon_gives_headers_only() {
        let s = small("random", 0);
        let reports = run_scenario(&s, &[]).unwrap();
        let files = report_files(&s, &reports);
        assert_eq!(files[0].1, "slot,R,uD\n");
    }

    #[test]
    fn warm_starts_round_trip_and_guard_the_game() {
        let s = small("hotboot-phc,hotboot-dqn", 10);
        let phc = hotboot(&s, DefenderKind::HotbootPhc).unwrap();
        let dqn = hotboot(&s, DefenderKind::HotbootDqn).unwrap();
        assert_eq!(hotboot(&s, DefenderKind::HotbootDqn).unwrap(), dqn);
        for w in [&phc, &dqn] {
            let bytes = warm_bytes(&s, w).unwrap();
            assert_eq!(read_warm(&s, &bytes).unwrap(), *w);
            let mut other = s.clone();
            other.config = crate::game::GameConfig::new(4, 6, 2, 4, 1).unwrap();
            assert!(matches!(read_warm(&other, &bytes), Err(Error::HashMismatch { .. })));
        }
        assert!(read_warm(&s, b"garbage").is_err());
        let warm = vec![phc.clone(), dqn];
        let with = run_scenario(&s, &warm).unwrap();
        let without = run_scenario(&s, &[]).unwrap();
        assert_eq!(with, without);
        assert!(run_defender(&s, DefenderKind::HotbootDqn, Some(&phc)).is_err());
    }

    #[test]
    fn sweep_rows() {
        let s = small("ne-marginal", 20);
        let points = run_sweep(&s, SweepAxis::Devices, &[3, 4]).unwrap();
        let csv = sweep_csv(&s, SweepAxis::Devices, &points);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().starts_with("devices,4,ne-marginal,3,20,"));
        assert!(run_sweep(&s, SweepAxis::Devices, &[]).is_err());
        assert!(matches!(
            run_sweep(&s, SweepAxis::DefenseBudget, &[0]),
            Err(Error::SweepPoint { value: 0, .. })
        ));
    }
}
