use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::toyspeech::EmotionCategory;

/// Held-out entries per emotion category.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub test: usize,
    pub val: usize,
}

impl SplitSizes {
    /// Full-scale sizes: 100 test and 50 validation per category.
    pub const FULL: SplitSizes = SplitSizes { test: 100, val: 50 };

    /// Full sizes when a category holds at least 400 entries, otherwise a
    /// quarter for test and an eighth for validation (each at least one).
    pub fn scaled(per_emotion: usize) -> Self {
        if per_emotion >= 400 {
            Self::FULL
        } else {
            Self {
                test: (per_emotion / 4).max(1),
                val: (per_emotion / 8).max(1),
            }
        }
    }
}

/// Seeded per-category split. Entry order is preserved; only the `split`
/// field changes.
pub fn split(entries: &[ManifestEntry], sizes: SplitSizes, seed: u64) -> Result<Vec<ManifestEntry>> {
    let mut out = entries.to_vec();
    for emotion in EmotionCategory::ALL {
        let mut members: Vec<usize> = (0..out.len()).filter(|&i| out[i].emotion == emotion).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < sizes.test + sizes.val {
            return Err(Error::Data {
                entry: emotion.name().to_string(),
                reason: format!(
                    "category has {} entries, needs at least {} for test {} + val {}",
                    members.len(),
                    sizes.test + sizes.val,
                    sizes.test,
                    sizes.val
                ),
            });
        }
        // canonical order first so the result does not depend on input order
        members.sort_by(|&a, &b| out[a].id.cmp(&out[b].id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(emotion.index() as u64 + 1);
        members.shuffle(&mut rng);
        for (rank, &i) in members.iter().enumerate() {
            out[i].split = Some(if rank < sizes.test {
                Split::Test
            } else if rank < sizes.test + sizes.val {
                Split::Val
            } else {
                Split::Train
            });
        }
    }
    Ok(out)
}
