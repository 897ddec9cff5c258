//! Agreement audit between automatic judges and rater opinion: MOS
//! aggregation, balanced selection, rank correlation and judge stability.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::spearman;
use crate::error::{Error, Result};

pub const RATING_MIN: f64 = 1.0;
pub const RATING_MAX: f64 = 5.0;
pub const RATING_STEP: f64 = 0.5;

/// Snaps a value onto the 0.5 grid within [1, 5].
pub fn snap_rating(x: f64) -> f64 {
    ((x / RATING_STEP).round() * RATING_STEP).clamp(RATING_MIN, RATING_MAX)
}

fn on_grid(x: f64) -> bool {
    (RATING_MIN..=RATING_MAX).contains(&x) && ((x / RATING_STEP).round() * RATING_STEP - x).abs() < 1e-12
}

/// Ratings as items x raters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterTable {
    pub ratings: Vec<Vec<f64>>,
}

impl RaterTable {
    pub fn new(ratings: Vec<Vec<f64>>) -> Result<Self> {
        for (i, row) in ratings.iter().enumerate() {
            if row.is_empty() {
                return Err(Error::Metric(format!("item {i} has no ratings")));
            }
            if let Some(bad) = row.iter().find(|x| !on_grid(**x)) {
                return Err(Error::Metric(format!(
                    "item {i}: rating {bad} is off the 0.5 grid in [1, 5]"
                )));
            }
        }
        Ok(Self { ratings })
    }

    /// Mean rating per item.
    pub fn mos(&self) -> Vec<f64> {
        self.ratings
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }
}

/// Integer level 1..=5 of a MOS, rounding halves up.
pub fn mos_level(mos: f64) -> u8 {
    (mos + 0.5).floor().clamp(1.0, 5.0) as u8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancedSelection {
    pub mos: Vec<f64>,
    /// Selected item indices, grouped by level 1..=5, ascending within a level.
    pub selected: Vec<usize>,
}

/// Per-item MOS and the first `bucket_size` items (index order) of each
/// of the five levels.
pub fn mos_and_balanced_select(table: &RaterTable, bucket_size: usize) -> Result<BalancedSelection> {
    let mos = table.mos();
    let mut selected = Vec::with_capacity(bucket_size * 5);
    for level in 1..=5u8 {
        let members: Vec<usize> = (0..mos.len()).filter(|&i| mos_level(mos[i]) == level).collect();
        if members.len() < bucket_size {
            return Err(Error::Metric(format!(
                "MOS level {level} has {} items, needs {bucket_size}",
                members.len()
            )));
        }
        selected.extend_from_slice(&members[..bucket_size]);
    }
    Ok(BalancedSelection { mos, selected })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub per_item_sd: Vec<f64>,
    pub mean_sd: f64,
}

/// Population standard deviation of repeated judgments per item.
pub fn judge_stability(repeats: &[Vec<f64>]) -> Result<StabilityReport> {
    if repeats.is_empty() {
        return Err(Error::Metric("stability needs at least one item".into()));
    }
    let per_item_sd = repeats
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.len() < 2 {
                return Err(Error::Metric(format!("item {i} has {} repeat(s), needs 2", r.len())));
            }
            let n = r.len() as f64;
            let mean = r.iter().sum::<f64>() / n;
            Ok((r.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt())
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_sd = per_item_sd.iter().sum::<f64>() / per_item_sd.len() as f64;
    Ok(StabilityReport { per_item_sd, mean_sd })
}

/// Synthetic automatic judge: scores are `gain * truth + bias` plus
/// uniform noise of half-width `noise`, snapped to the rating grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeSpec {
    pub name: String,
    pub gain: f64,
    pub bias: f64,
    pub noise: f64,
    pub repeats: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub systems: usize,
    pub items_per_system: usize,
    pub raters: usize,
    pub rater_noise: f64,
    pub judges: Vec<JudgeSpec>,
    pub seed: u64,
}

impl AuditConfig {
    pub fn toy(seed: u64) -> Self {
        let judge = |name: &str, gain, bias, noise| JudgeSpec {
            name: name.into(),
            gain,
            bias,
            noise,
            repeats: 3,
        };
        Self {
            systems: 6,
            items_per_system: 20,
            raters: 5,
            rater_noise: 0.75,
            judges: vec![
                judge("faithful", 1.0, 0.0, 0.25),
                judge("noisy", 1.0, 0.0, 1.5),
                judge("inverted", -1.0, 6.0, 0.25),
            ],
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub judge: String,
    pub system_rho: f64,
    pub sentence_rho: f64,
    pub mean_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditResult {
    pub seed: u64,
    pub rows: Vec<AuditRow>,
}

impl AuditResult {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>12} {:>8}",
            "judge", "system_rho", "sentence_rho", "sd"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<12} {:>10.4} {:>12.4} {:>8.4}",
                r.judge, r.system_rho, r.sentence_rho, r.mean_sd
            );
        }
        out
    }
}

/// Agreement of a judge's per-item scores with rater MOS at system level
/// (per-system means) and sentence level (per item).
pub fn agreement(mos: &[f64], judge: &[f64], items_per_system: usize) -> Result<(f64, f64)> {
    if mos.len() != judge.len() || items_per_system == 0 || !mos.len().is_multiple_of(items_per_system) {
        return Err(Error::Metric("scores do not tile into equal systems".into()));
    }
    let means = |v: &[f64]| -> Vec<f64> {
        v.chunks(items_per_system)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    };
    Ok((spearman(&means(mos), &means(judge))?, spearman(mos, judge)?))
}

/// Generates rater and judge tables from latent per-item quality and
/// reports system/sentence correlation and stability per judge.
pub fn synthetic_audit(config: &AuditConfig) -> Result<AuditResult> {
    if config.systems < 2 || config.items_per_system == 0 || config.raters == 0 {
        return Err(Error::Config("audit needs >= 2 systems, items and raters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.systems * config.items_per_system;
    // systems spread evenly across the scale, items jittered around them
    let truth: Vec<f64> = (0..n)
        .map(|i| {
            let s = (i / config.items_per_system) as f64 / (config.systems - 1) as f64;
            (1.5 + 3.0 * s + rng.gen_range(-0.75..0.75)).clamp(RATING_MIN, RATING_MAX)
        })
        .collect();
    let mut noisy = |center: f64, half_width: f64| -> f64 {
        let jitter = if half_width > 0.0 {
            rng.gen_range(-half_width..half_width)
        } else {
            0.0
        };
        snap_rating(center + jitter)
    };
    let raters = RaterTable::new(
        truth
            .iter()
            .map(|&t| (0..config.raters).map(|_| noisy(t, config.rater_noise)).collect())
            .collect(),
    )?;
    let mos = raters.mos();
    let mut rows = Vec::with_capacity(config.judges.len());
    for judge in &config.judges {
        let repeats: Vec<Vec<f64>> = truth
            .iter()
            .map(|&t| {
                (0..judge.repeats.max(2))
                    .map(|_| noisy(judge.gain * t + judge.bias, judge.noise))
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = repeats.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
        let (system_rho, sentence_rho) = agreement(&mos, &scores, config.items_per_system)?;
        rows.push(AuditRow {
            judge: judge.name.clone(),
            system_rho,
            sentence_rho,
            mean_sd: judge_stability(&repeats)?.mean_sd,
        });
    }
    Ok(AuditResult {
        seed: config.seed,
        rows,
    })
}
