//! Per-slot series, seed averages and their CSV forms.

use std::fmt::Write as _;

use crate::environment::SlotRecord;
use crate::error::{Error, Result};
use crate::harness::scenario::DefenderKind;

pub const SERIES_HEADER: &str = "slot,R,uD";
pub const PLOT_HEADER: &str = "slot,R_ma,uD_ma";
pub const SUMMARY_HEADER: &str = "defender,seeds,horizon,tail_window,tail_R,tail_uD,mean_R,mean_uD";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotMetric {
    pub slot: u64,
    pub protection: f64,
    pub utility: f64,
}

impl From<&SlotRecord> for SlotMetric {
    fn from(r: &SlotRecord) -> Self {
        Self {
            slot: r.slot,
            protection: r.outcome.protection_level,
            utility: r.outcome.utility_defender,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSeries {
    pub seed: u64,
    pub slots: Vec<SlotMetric>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub tail_window: u64,
    /// Means over the last `tail_window` slots (all slots if fewer).
    pub tail_protection: f64,
    pub tail_utility: f64,
    /// Means over the whole run.
    pub mean_protection: f64,
    pub mean_utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub defender: DefenderKind,
    /// Sorted by seed.
    pub per_seed: Vec<SeedSeries>,
    pub mean: Vec<SlotMetric>,
    pub summary: Summary,
}

fn mean_of(slots: &[SlotMetric]) -> (f64, f64) {
    if slots.is_empty() {
        return (0.0, 0.0);
    }
    let n = slots.len() as f64;
    (
        slots.iter().map(|m| m.protection).sum::<f64>() / n,
        slots.iter().map(|m| m.utility).sum::<f64>() / n,
    )
}

/// Slot-wise average over seeds. Seeds are averaged in ascending order so the
/// result does not depend on the order runs were listed in.
pub fn seed_average(per_seed: &[SeedSeries]) -> Result<Vec<SlotMetric>> {
    let mut sorted: Vec<&SeedSeries> = per_seed.iter().collect();
    sorted.sort_by_key(|s| s.seed);
    let Some(first) = sorted.first() else {
        return Ok(Vec::new());
    };
    let len = first.slots.len();
    if sorted.iter().any(|s| s.slots.len() != len) {
        return Err(Error::ShapeMismatch("seed series have different lengths".into()));
    }
    let n = sorted.len() as f64;
    Ok((0..len)
        .map(|k| SlotMetric {
            slot: first.slots[k].slot,
            protection: sorted.iter().map(|s| s.slots[k].protection).sum::<f64>() / n,
            utility: sorted.iter().map(|s| s.slots[k].utility).sum::<f64>() / n,
        })
        .collect())
}

pub fn summarize(mean: &[SlotMetric], tail_window: u64) -> Summary {
    let start = mean.len().saturating_sub(tail_window as usize);
    let (tail_protection, tail_utility) = mean_of(&mean[start..]);
    let (mean_protection, mean_utility) = mean_of(mean);
    Summary {
        tail_window,
        tail_protection,
        tail_utility,
        mean_protection,
        mean_utility,
    }
}

impl MetricsReport {
    pub fn new(defender: DefenderKind, mut per_seed: Vec<SeedSeries>, tail_window: u64) -> Result<Self> {
        per_seed.sort_by_key(|s| s.seed);
        let mean = seed_average(&per_seed)?;
        let summary = summarize(&mean, tail_window);
        Ok(Self {
            defender,
            per_seed,
            mean,
            summary,
        })
    }

    /// Mean protection of the seed-averaged series over slots `[from, to)`.
    pub fn window_protection(&self, from: u64, to: u64) -> f64 {
        let slots: Vec<SlotMetric> = self
            .mean
            .iter()
            .filter(|m| m.slot >= from && m.slot < to)
            .copied()
            .collect();
        mean_of(&slots).0
    }

    /// Mean defender utility summed over slots `[0, slots)`, averaged over seeds.
    pub fn cumulative_utility(&self, slots: u64) -> f64 {
        self.mean.iter().filter(|m| m.slot < slots).map(|m| m.utility).sum()
    }
}

/// Trailing moving average; the first entries average over what exists.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

pub fn series_csv(slots: &[SlotMetric]) -> String {
    let mut s = String::with_capacity(32 * (slots.len() + 1));
    writeln!(s, "{SERIES_HEADER}").ok();
    for m in slots {
        writeln!(s, "{},{},{}", m.slot, m.protection, m.utility).ok();
    }
    s
}

pub fn plot_csv(slots: &[SlotMetric], window: usize) -> String {
    let r: Vec<f64> = slots.iter().map(|m| m.protection).collect();
    let u: Vec<f64> = slots.iter().map(|m| m.utility).collect();
    let (r, u) = (moving_average(&r, window), moving_average(&u, window));
    let mut s = String::with_capacity(32 * (slots.len() + 1));
    writeln!(s, "{PLOT_HEADER}").ok();
    for ((m, r), u) in slots.iter().zip(r).zip(u) {
        writeln!(s, "{},{r},{u}", m.slot).ok();
    }
    s
}

pub fn summary_row(report: &MetricsReport, horizon: u64) -> String {
    let s = &report.summary;
    format!(
        "{},{},{horizon},{},{},{},{},{}",
        report.defender,
        report.per_seed.len(),
        s.tail_window,
        s.tail_protection,
        s.tail_utility,
        s.mean_protection,
        s.mean_utility
    )
}

/// Parses a file written by [`series_csv`].
pub fn parse_series_csv(text: &str) -> Result<Vec<SlotMetric>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SERIES_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {SERIES_HEADER}"),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            let perr = |message: String| Error::Parse { line: i + 1, message };
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 3 {
                return Err(perr(format!("expected 3 fields, found {}", f.len())));
            }
            Ok(SlotMetric {
                slot: f[0].parse().map_err(|e| perr(format!("slot: {e}")))?,
                protection: f[1].parse().map_err(|e| perr(format!("R: {e}")))?,
                utility: f[2].parse().map_err(|e| perr(format!("uD: {e}")))?,
            })
        })
        .collect()
}
