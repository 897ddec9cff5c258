use log::warn;

use super::clients::Paraphraser;
use super::manifest::ManifestEntry;
use super::validate::validate_description;

pub const DEFAULT_PARAPHRASES: usize = 2;

/// An entry whose augmentation fell short of `k` variants.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AugmentShortfall {
    pub id: String,
    pub kept: usize,
    pub reason: String,
}

/// Adds up to `k` validated paraphrases to every entry. Failures keep the
/// entry with fewer variants and are logged and returned.
pub fn augment_descriptions(
    entries: &[ManifestEntry],
    paraphraser: &dyn Paraphraser,
    k: usize,
) -> (Vec<ManifestEntry>, Vec<AugmentShortfall>) {
    if k == 0 {
        return (entries.to_vec(), Vec::new());
    }
    let mut shortfalls = Vec::new();
    let out = entries
        .iter()
        .map(|entry| {
            let mut e = entry.clone();
            let (variants, reason) = match paraphraser.rephrase(&entry.description, k) {
                Ok(vs) => {
                    let total = vs.len();
                    let valid: Vec<String> = vs
                        .into_iter()
                        .filter(|v| validate_description(v).is_empty() && v != &entry.description)
                        .take(k)
                        .collect();
                    let reason = format!("{} of {total} paraphrases passed validation", valid.len());
                    (valid, reason)
                }
                Err(err) => (Vec::new(), err.to_string()),
            };
            if variants.len() < k {
                warn!(
                    "{}: augmentation kept {} of {k} variants: {reason}",
                    entry.id,
                    variants.len()
                );
                shortfalls.push(AugmentShortfall {
                    id: entry.id.clone(),
                    kept: variants.len(),
                    reason,
                });
            }
            e.description_variants.extend(variants);
            e
        })
        .collect();
    (out, shortfalls)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::clients::RuleParaphraser;
    use crate::toyspeech::EmotionCategory;

    fn entry(desc: &str) -> ManifestEntry {
        ManifestEntry::new("x", "Hi.", EmotionCategory::Happy, desc, 1, vec![], vec![])
    }

    #[test]
    fn k_two_gives_three_descriptions() {
        let (out, short) = augment_descriptions(&[entry("Radiating warm pride.")], &RuleParaphraser, 2);
        assert!(short.is_empty());
        assert_eq!(out[0].descriptions().count(), 3);
        let again = augment_descriptions(&[entry("Radiating warm pride.")], &RuleParaphraser, 2).0;
        assert_eq!(out, again);
    }

    #[test]
    fn k_zero_is_identity_and_failures_keep_entry() {
        let e = entry("Radiating warm pride.");
        assert_eq!(
            augment_descriptions(std::slice::from_ref(&e), &RuleParaphraser, 0).0,
            vec![e]
        );
        let (out, short) = augment_descriptions(&[entry("Warm pride felt.")], &RuleParaphraser, 2);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].descriptions().count(), 1);
        assert_eq!(short[0].kept, 0);
    }
}
