use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use blotto_core::equilibrium::{analyze_asymmetric, analyze_symmetric, NeAnalysis};
use blotto_core::harness::{
    hotboot, preset, read_warm, report_files, run_scenario, run_sweep, sweep_csv, warm_bytes, write_files,
    DefenderKind, Scenario, SweepAxis, PRESET_NAMES,
};
use blotto_core::{DataSizeVector, GameConfig};

#[derive(Parser)]
#[command(name = "blotto", version, about = "CPU allocation game simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print equilibrium marginals, expected protection and utility as CSV.
    NeAnalyze(NeArgs),
    /// Run every defender of a scenario and write per-seed, mean, plot and summary CSVs.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Warm-start file written by `hotboot`; may be repeated.
        #[arg(long)]
        warm: Vec<PathBuf>,
    },
    /// Hotboot a defender on emulated scenarios and save the result.
    Hotboot {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// hotboot-phc or hotboot-dqn; defaults to the scenario's only hotbooting defender.
        #[arg(long)]
        defender: Option<DefenderKind>,
    },
    /// Run a scenario once per value of a parameter and write one summary CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// defense_budget or devices; defaults to the scenario's sweep line.
        #[arg(long, requires = "values")]
        axis: Option<SweepAxis>,
        #[arg(long, value_delimiter = ',', requires = "axis")]
        values: Option<Vec<u32>>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    file: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long)]
    preset: Option<String>,
    /// Replaces the scenario's seed list (for `hotboot`, its hotboot seed).
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long)]
    horizon: Option<u64>,
    /// Replaces the scenario's defender list.
    #[arg(long, value_delimiter = ',')]
    defenders: Option<Vec<DefenderKind>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Sym,
    Asym,
}

#[derive(Args)]
struct NeArgs {
    #[arg(long, value_enum)]
    regime: RegimeArg,
    /// Defense CPUs; a comma list gives one row per value.
    #[arg(long, value_delimiter = ',', required = true)]
    sm: Vec<u32>,
    /// Attack CPUs; defaults to the defense CPUs in the symmetric game.
    #[arg(long, value_delimiter = ',')]
    sn: Vec<u32>,
    /// Device counts, all devices holding size 1.
    #[arg(long, value_delimiter = ',')]
    d: Vec<usize>,
    /// Explicit data sizes in [0, 1], one per device.
    #[arg(long, value_delimiter = ',', conflicts_with = "d")]
    b: Option<Vec<f64>>,
    /// Data-size quantization levels.
    #[arg(long, default_value_t = 100)]
    levels: u32,
    /// Print per-device marginal pmfs instead of the summary rows.
    #[arg(long)]
    pmf: bool,
}

const NE_HEADER: &str = "regime,sm,sn,devices,expected_protection,expected_utility_defender";
const PMF_HEADER: &str = "regime,sm,sn,devices,side,device,cpus,probability";

fn ne_analyze(args: &NeArgs) -> Result<String> {
    let sizes: Vec<Vec<f64>> = match (&args.b, args.d.is_empty()) {
        (Some(b), _) => vec![b.clone()],
        (None, false) => args.d.iter().map(|&d| vec![1.0; d]).collect(),
        (None, true) => bail!("one of --d or --b is required"),
    };
    let sns: Vec<Option<u32>> = match (args.regime, args.sn.is_empty()) {
        (_, false) => args.sn.iter().copied().map(Some).collect(),
        (RegimeArg::Sym, true) => vec![None],
        (RegimeArg::Asym, true) => bail!("--sn is required for the asymmetric regime"),
    };
    let mut out = format!("{}\n", if args.pmf { PMF_HEADER } else { NE_HEADER });
    for &sm in &args.sm {
        for &sn in &sns {
            let sn = sn.unwrap_or(sm);
            for b in &sizes {
                let data = DataSizeVector::from_values(b, args.levels)?;
                let config = GameConfig::new(b.len(), sm, sn, args.levels, 1)?;
                let analysis = match args.regime {
                    RegimeArg::Sym => analyze_symmetric(&config, &data)?,
                    RegimeArg::Asym => analyze_asymmetric(&config, &data)?,
                };
                let key = format!("{},{sm},{sn},{}", analysis.regime, b.len());
                if args.pmf {
                    push_pmf(&mut out, &key, &analysis);
                } else {
                    out.push_str(&format!(
                        "{key},{},{}\n",
                        analysis.expected_protection, analysis.expected_utility_defender
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn push_pmf(out: &mut String, key: &str, analysis: &NeAnalysis) {
    for (side, strategy) in [("defender", &analysis.defender_strategy), ("attacker", &analysis.attacker_strategy)] {
        for (i, row) in strategy.rows().iter().enumerate() {
            for (cpus, p) in row.iter().enumerate().filter(|(_, p)| **p > 0.0) {
                out.push_str(&format!("{key},{side},{i},{cpus},{p}\n"));
            }
        }
    }
}

fn load(args: &ScenarioArgs) -> Result<Scenario> {
    let mut scenario = match (&args.file, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Scenario::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        (None, Some(name)) => preset(name).with_context(|| format!("known presets: {}", PRESET_NAMES.join(", ")))?,
        (None, None) => bail!("give a scenario file or --preset"),
    };
    if let Some(seeds) = &args.seed {
        if seeds.is_empty() {
            bail!("--seed needs at least one value");
        }
        scenario.seeds = seeds.clone();
    }
    if let Some(h) = args.horizon {
        scenario.horizon = h;
    }
    if let Some(d) = &args.defenders {
        scenario.defenders = d.clone();
    }
    Ok(scenario)
}

fn simulate(args: &ScenarioArgs, out_dir: &Path, warm: &[PathBuf]) -> Result<()> {
    let scenario = load(args)?;
    let warm = warm
        .iter()
        .map(|p| {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            read_warm(&scenario, &bytes).with_context(|| format!("loading warm start {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    for w in &warm {
        if !scenario.defenders.contains(&w.kind()) {
            bail!("warm start is for {}, which the scenario does not run", w.kind());
        }
    }
    let reports = run_scenario(&scenario, &warm)?;
    let paths = write_files(out_dir, &report_files(&scenario, &reports))?;
    for r in &reports {
        let s = &r.summary;
        println!(
            "{}: mean R {:.4}, last {} slots R {:.4}, uD {:.4}",
            r.defender, s.mean_protection, s.tail_window, s.tail_protection, s.tail_utility
        );
    }
    log::info!("wrote {} files to {}", paths.len(), out_dir.display());
    Ok(())
}

fn hotboot_cmd(args: &ScenarioArgs, out: &Path, defender: Option<DefenderKind>) -> Result<()> {
    let mut scenario = load(args)?;
    if let Some(seeds) = &args.seed {
        scenario.hotboot_seed = seeds[0];
    }
    let kind = match defender {
        Some(k) => k,
        None => {
            let hot: Vec<DefenderKind> = scenario.defenders.iter().copied().filter(|k| k.is_hotboot()).collect();
            match hot.as_slice() {
                [k] => *k,
                [] => bail!("scenario has no hotbooting defender; pass --defender"),
                _ => bail!("scenario has several hotbooting defenders; pass --defender"),
            }
        }
    };
    if !kind.is_hotboot() {
        bail!("{kind} does not hotboot; use hotboot-phc or hotboot-dqn");
    }
    let warm = hotboot(&scenario, kind)?;
    let bytes = warm_bytes(&scenario, &warm)?;
    fs::write(out, bytes).with_context(|| format!("writing {}", out.display()))?;
    println!("{}", out.display());
    Ok(())
}

fn sweep(args: &ScenarioArgs, out_dir: &Path, axis: Option<SweepAxis>, values: Option<&[u32]>) -> Result<()> {
    let scenario = load(args)?;
    let (axis, values) = match (axis, values) {
        (Some(a), Some(v)) => (a, v.to_vec()),
        _ => scenario
            .sweep
            .clone()
            .ok_or_else(|| anyhow!("scenario has no sweep line; pass --axis and --values"))?,
    };
    let points = run_sweep(&scenario, axis, &values)?;
    let csv = sweep_csv(&scenario, axis, &points);
    let name = format!("{}.sweep.csv", scenario.name);
    write_files(out_dir, &[(name.clone(), csv.clone())])?;
    print!("{csv}");
    log::info!("wrote {}", out_dir.join(name).display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::NeAnalyze(args) => {
            print!("{}", ne_analyze(&args)?);
            Ok(())
        }
        Command::Simulate { scenario, out_dir, warm } => simulate(&scenario, &out_dir, &warm),
        Command::Hotboot {
            scenario,
            out,
            defender,
        } => hotboot_cmd(&scenario, &out, defender),
        Command::Sweep {
            scenario,
            out_dir,
            axis,
            values,
        } => sweep(&scenario, &out_dir, axis, values.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
