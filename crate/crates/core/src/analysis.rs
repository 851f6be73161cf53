//! Summary statistics, heuristic rankings and reference baselines.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colony::{ColonyConfig, ColonySuperstructure};
use crate::dataio::{mae_unchecked, Sequence};
use crate::error::Result;
use crate::evolution::PhiMode;
use crate::network::{self, TrainerConfig};
use crate::pheromone::DepositKind;
use crate::traversal::{generate_genome, AntSpeciesMode, SwarmConfig};
use crate::SearchRng;

/// Fitness per trainable weight: `(1 - mae) / weight_count`.
pub fn fitness_structure_coefficient(mae: f64, weight_count: usize) -> f64 {
    (1.0 - mae) / weight_count as f64
}

/// Percentage of the colony's edges a genome does not use.
pub fn reduce_percent(genome_edges: usize, colony_edges: usize) -> f64 {
    100.0 * (1.0 - genome_edges as f64 / colony_edges as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub best: f64,
    pub worst: f64,
    /// Sample standard deviation; zero for fewer than two values.
    pub std: f64,
}

impl Stats {
    /// `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stats {
            count: n,
            mean,
            median,
            best: sorted[0],
            worst: sorted[n - 1],
            std,
        })
    }
}

/// MAE of predicting `mean(targets)` at every step of `targets`.
pub fn constant_mean_baseline(targets: &[f64]) -> f64 {
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    mae_unchecked(&vec![mean; targets.len()], targets)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    /// Best validation MAE of each genome, in seed order; failures are infinite.
    pub maes: Vec<f64>,
    pub median: f64,
}

/// Trains `count` genomes drawn from a fresh colony (uniform pheromones)
/// with fresh random weights, exactly as the search would train them.
pub fn random_topology_baseline(
    colony_config: &ColonyConfig,
    swarm: &SwarmConfig,
    trainer: &TrainerConfig,
    train: &Sequence,
    validation: &Sequence,
    count: usize,
    seed: u64,
) -> Result<RandomBaseline> {
    let mut rng = SearchRng::seed_from_u64(seed);
    let colony = ColonySuperstructure::build(colony_config.clone(), &mut rng)?;
    let seeds: Vec<u64> = (0..count).map(|_| rng.next_u64()).collect();
    let maes: Vec<f64> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            generate_genome(&colony, swarm, false, i as u64, s)
                .ok()
                .and_then(|g| network::train(&g, train, validation, trainer).ok())
                .map_or(f64::INFINITY, |o| o.best_mae)
        })
        .collect();
    let median = Stats::of(&maes).map_or(f64::INFINITY, |s| s.median);
    Ok(RandomBaseline { maes, median })
}

/// The heuristic choices of one experiment, as used for ranking.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct HeuristicLabels {
    pub ants: usize,
    pub species: String,
    pub jump: String,
    /// `fn`, a constant such as `0.3`, or `off`.
    pub phi: String,
    /// `const`, `fitness`, `l1` or `l2`.
    pub reward: String,
}

impl HeuristicLabels {
    pub fn new(swarm: &SwarmConfig, phi: PhiMode, deposit: &DepositKind) -> Self {
        let reward = match deposit {
            DepositKind::Constant { .. } => "const",
            DepositKind::Fitness => "fitness",
            DepositKind::L1 { .. } => "l1",
            DepositKind::L2 { .. } => "l2",
        };
        Self {
            ants: swarm.ants,
            species: swarm.species.label().to_string(),
            jump: swarm.jump.label().to_string(),
            phi: phi.label(),
            reward: reward.to_string(),
        }
    }

    /// Table row for the phi choice: `phi_fn`, `phi_const` or `phi_off`.
    fn phi_row(&self) -> &'static str {
        match self.phi.as_str() {
            "fn" => "phi_fn",
            "off" => "phi_off",
            _ => "phi_const",
        }
    }

    /// Every table row this experiment counts toward.
    pub fn rows(&self) -> Vec<String> {
        vec![
            self.phi_row().to_string(),
            format!("reward_{}", self.reward),
            format!("species_{}", self.species),
            format!("jump_{}", self.jump),
            format!("ants_{}", self.ants),
        ]
    }

    /// Rows for which this experiment uses that heuristic alone: the phi,
    /// reward and species choices other than the row's own are at their
    /// plain settings (no inheritance, fitness reward, standard ants).
    pub fn solo_rows(&self) -> Vec<String> {
        let phi_plain = self.phi == "off";
        let reward_plain = self.reward == "fitness";
        let species_plain = self.species == AntSpeciesMode::Standard.label();
        let mut out = Vec::new();
        if !phi_plain && reward_plain && species_plain {
            out.push(self.phi_row().to_string());
        }
        if !reward_plain && phi_plain && species_plain {
            out.push(format!("reward_{}", self.reward));
        }
        if !species_plain && phi_plain && reward_plain {
            out.push(format!("species_{}", self.species));
        }
        out
    }
}

/// The ranking inputs taken from one experiment summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub labels: HeuristicLabels,
    pub mean: f64,
    pub median: f64,
    pub best: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mean,
    Median,
    Best,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Mean, Metric::Median, Metric::Best];

    fn of(self, r: &RunRecord) -> f64 {
        match self {
            Metric::Mean => r.mean,
            Metric::Median => r.median,
            Metric::Best => r.best,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::Mean => "mean",
            Metric::Median => "median",
            Metric::Best => "best",
        }
    }
}

pub const TOP_K: [usize; 5] = [10, 25, 100, 250, 500];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCount {
    pub count: usize,
    /// Appearances by experiments that used this heuristic alone.
    pub solo: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankingTable {
    pub ks: Vec<usize>,
    /// `rows[label][(k, metric)]`.
    pub rows: BTreeMap<String, BTreeMap<(usize, Metric), RankCount>>,
}

/// Order of table rows: phi, reward, species, jump, then ant counts.
fn row_order(label: &str) -> (usize, String) {
    let group = ["phi_", "reward_", "species_", "jump_", "ants_"]
        .iter()
        .position(|p| label.starts_with(p))
        .unwrap_or(5);
    let key = match label.strip_prefix("ants_").and_then(|n| n.parse::<usize>().ok()) {
        Some(n) => format!("{n:>12}"),
        None => label.to_string(),
    };
    (group, key)
}

/// Counts, for every heuristic label, how many experiments using it land
/// in the top `k` by each metric. Ties are broken by name and labels so
/// the result does not depend on the input order.
pub fn rank_heuristics(records: &[RunRecord], ks: &[usize]) -> RankingTable {
    let mut rows: BTreeMap<String, BTreeMap<(usize, Metric), RankCount>> = BTreeMap::new();
    for r in records {
        for row in r.labels.rows() {
            let cells = rows.entry(row).or_default();
            for &k in ks {
                for m in Metric::ALL {
                    cells.entry((k, m)).or_default();
                }
            }
        }
    }
    for m in Metric::ALL {
        let mut ranked: Vec<&RunRecord> = records.iter().collect();
        ranked.sort_by(|a, b| {
            m.of(a)
                .total_cmp(&m.of(b))
                .then_with(|| a.name.cmp(&b.name))
                .then_with(|| a.labels.cmp(&b.labels))
        });
        for &k in ks {
            for r in ranked.iter().take(k) {
                let solo = r.labels.solo_rows();
                for row in r.labels.rows() {
                    let cell = rows.get_mut(&row).expect("row registered").get_mut(&(k, m)).expect("cell registered");
                    cell.count += 1;
                    if solo.contains(&row) {
                        cell.solo += 1;
                    }
                }
            }
        }
    }
    RankingTable { ks: ks.to_vec(), rows }
}

impl RankingTable {
    pub fn ordered_rows(&self) -> Vec<&String> {
        let mut labels: Vec<&String> = self.rows.keys().collect();
        labels.sort_by_key(|l| row_order(l));
        labels
    }

    /// CSV with one row per heuristic and `top{k}_{metric}` columns holding
    /// `count(solo)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("heuristic");
        for k in &self.ks {
            for m in Metric::ALL {
                out.push_str(&format!(",top{k}_{}", m.label()));
            }
        }
        out.push('\n');
        for label in self.ordered_rows() {
            out.push_str(label);
            for &k in &self.ks {
                for m in Metric::ALL {
                    let c = self.rows[label][&(k, m)];
                    out.push_str(&format!(",{}({})", c.count, c.solo));
                }
            }
            out.push('\n');
        }
        out
    }
}
