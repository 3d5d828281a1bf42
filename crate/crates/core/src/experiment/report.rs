use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::train::{read_rows, RunManifest};
use crate::error::{Error, Result};
use crate::metrics::{steps_to_threshold, CoverageRow};

pub const COVERAGE_THRESHOLDS: [f64; 3] = [0.5, 0.75, 0.9];

/// Env steps to reach one coverage threshold, across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdStat {
    pub threshold: f64,
    /// `None` when the median seed never reached the threshold.
    pub median: Option<f64>,
    pub min: Option<u64>,
    pub max: Option<u64>,
    pub reached: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCoverage {
    pub method: String,
    pub per_seed: Vec<(u64, Vec<Option<u64>>)>,
    pub thresholds: Vec<ThresholdStat>,
}

/// Median with unreached seeds ordered after every reached one.
fn median(values: &[Option<u64>]) -> Option<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .map(|x| x.map_or(f64::INFINITY, |s| s as f64))
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

/// Per-method steps-to-coverage table. Manifests sharing a method are
/// pooled over their seeds; all manifests must share layout and binning.
pub fn coverage_report(manifests: &[RunManifest]) -> Result<Vec<MethodCoverage>> {
    if manifests.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "coverage report needs at least 2 manifests, got {}",
            manifests.len()
        )));
    }
    let first = &manifests[0];
    for m in &manifests[1..] {
        if m.layout != first.layout || m.coverage_bins_per_cell != first.coverage_bins_per_cell {
            return Err(Error::InvalidArgument(format!(
                "runs differ in env or bins: {}/{} vs {}/{}",
                first.layout, first.coverage_bins_per_cell, m.layout, m.coverage_bins_per_cell
            )));
        }
    }

    let mut by_method: BTreeMap<&str, Vec<(u64, Vec<Option<u64>>)>> = BTreeMap::new();
    for m in manifests {
        let entry = by_method.entry(m.method.as_str()).or_default();
        for s in &m.seeds {
            let rows: Vec<CoverageRow> = read_rows(&m.resolve(&s.coverage))?;
            let curve: Vec<(u64, f64)> = rows.iter().map(|r| (r.env_steps, r.normalized_coverage)).collect();
            let steps = COVERAGE_THRESHOLDS
                .iter()
                .map(|t| steps_to_threshold(&curve, *t))
                .collect();
            entry.push((s.seed, steps));
        }
    }

    Ok(by_method
        .into_iter()
        .map(|(method, per_seed)| {
            let thresholds = COVERAGE_THRESHOLDS
                .iter()
                .enumerate()
                .map(|(i, &threshold)| {
                    let col: Vec<Option<u64>> = per_seed.iter().map(|(_, s)| s[i]).collect();
                    let reached: Vec<u64> = col.iter().flatten().copied().collect();
                    ThresholdStat {
                        threshold,
                        median: median(&col),
                        min: reached.iter().min().copied(),
                        max: reached.iter().max().copied(),
                        reached: reached.len(),
                        seeds: col.len(),
                    }
                })
                .collect();
            MethodCoverage {
                method: method.to_string(),
                per_seed,
                thresholds,
            }
        })
        .collect())
}

/// Plain-text table: one row per method, one column per threshold showing
/// `median [min, max] (reached/seeds)`.
pub fn format_report(report: &[MethodCoverage]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<12}", "method");
    for t in COVERAGE_THRESHOLDS {
        let _ = write!(out, " | {:<34}", format!("steps to {t}"));
    }
    out.push('\n');
    for m in report {
        let _ = write!(out, "{:<12}", m.method);
        for t in &m.thresholds {
            let cell = match (t.median, t.min, t.max) {
                (Some(med), Some(lo), Some(hi)) => {
                    format!("{med:.0} [{lo}, {hi}] ({}/{})", t.reached, t.seeds)
                }
                _ => format!("unreached ({}/{})", t.reached, t.seeds),
            };
            let _ = write!(out, " | {cell:<34}");
        }
        out.push('\n');
    }
    out
}
