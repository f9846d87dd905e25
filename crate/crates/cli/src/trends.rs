//! Channel-allocation statistics over a run's final top-n architectures.

use std::fmt::Write as _;

use serde::Serialize;
use slimnas_core::runlog::RunLog;
use slimnas_core::{ArchConfig, BackboneSkeleton};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositionStats {
    /// 1-based position among the searchable layers.
    pub position: usize,
    /// Index into the skeleton's layer list.
    pub layer: usize,
    pub is_neck_output: bool,
    pub mean_factor: f64,
    pub fraction_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    pub layers: usize,
    pub mean_factor: Option<f64>,
    pub fraction_full: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendReport {
    pub run_id: String,
    pub candidates: usize,
    pub positions: Vec<PositionStats>,
    pub neck: GroupStats,
    pub other: GroupStats,
}

fn group(positions: &[&PositionStats]) -> GroupStats {
    let n = positions.len();
    let mean = |f: fn(&PositionStats) -> f64| (n > 0).then(|| positions.iter().map(|p| f(p)).sum::<f64>() / n as f64);
    GroupStats {
        layers: n,
        mean_factor: mean(|p| p.mean_factor),
        fraction_full: mean(|p| p.fraction_full),
    }
}

pub fn trends(skeleton: &BackboneSkeleton, run_id: &str, configs: &[ArchConfig]) -> TrendReport {
    let searchable: Vec<usize> = (0..skeleton.layers.len())
        .filter(|&i| skeleton.layers[i].searchable)
        .collect();
    let positions: Vec<PositionStats> = if configs.is_empty() {
        Vec::new()
    } else {
        let n = configs.len() as f64;
        searchable
            .iter()
            .enumerate()
            .map(|(pos, &layer)| {
                let factors = configs.iter().map(|c| c.factors()[pos]);
                PositionStats {
                    position: pos + 1,
                    layer,
                    is_neck_output: skeleton.layers[layer].is_neck_output,
                    mean_factor: factors.clone().map(|f| f.as_f64()).sum::<f64>() / n,
                    fraction_full: factors.filter(|f| f.quarters() == 4).count() as f64 / n,
                }
            })
            .collect()
    };
    let neck: Vec<_> = positions.iter().filter(|p| p.is_neck_output).collect();
    let other: Vec<_> = positions.iter().filter(|p| !p.is_neck_output).collect();
    TrendReport {
        run_id: run_id.to_string(),
        candidates: configs.len(),
        neck: group(&neck),
        other: group(&other),
        positions,
    }
}

/// Trend statistics for the top-n records of a run log.
pub fn trends_from_log(log: &RunLog) -> Result<TrendReport, CliError> {
    let skeleton = &log.header.skeleton;
    let configs = log
        .top_n()
        .iter()
        .map(|r| ArchConfig::decode(&r.config, skeleton))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(trends(skeleton, &log.header.run_id, &configs))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

impl TrendReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.candidates == 0 {
            let _ = writeln!(s, "run {}: no candidates", self.run_id);
            return s;
        }
        let _ = writeln!(s, "run {}: {} top-n candidates", self.run_id, self.candidates);
        let _ = writeln!(s, "{:>8}  {:>5}  {:>4}  {:>11}  {:>13}", "position", "layer", "neck", "mean_factor", "fraction_full");
        for p in &self.positions {
            let _ = writeln!(
                s,
                "{:>8}  {:>5}  {:>4}  {:>11.3}  {:>13.3}",
                p.position,
                p.layer,
                if p.is_neck_output { "yes" } else { "no" },
                p.mean_factor,
                p.fraction_full
            );
        }
        for (name, g) in [("neck", &self.neck), ("other", &self.other)] {
            let _ = writeln!(
                s,
                "{name:>8}: {} layers, mean factor {}, fraction at 1.0 {}",
                g.layers,
                opt(g.mean_factor),
                opt(g.fraction_full)
            );
        }
        s
    }
}
