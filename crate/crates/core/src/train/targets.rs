//! Teacher-forcing targets for every output structure.

use serde::{Deserialize, Serialize};

use crate::dataset::ManifestEntry;
use crate::error::{Error, Result};
use crate::model::{GuidanceKind, PlannedOutput, SequencePlan, StepTarget, Variant};
use crate::vocab::{encode_text, TokenId, VocabLayout};

/// Aligned target streams for one utterance, in joint-vocabulary ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenStreams {
    /// Audio ids followed by AUDIO_EOS, chunked into groups of G with an
    /// AUDIO_PAD-padded tail. Empty for single-stream variants.
    pub audio_groups: Vec<Vec<TokenId>>,
    pub audio_mask: Vec<Vec<bool>>,
    /// Parallel variants: one guidance id per decode step (ids, EOS, PADs).
    pub guidance: Option<Vec<TokenId>>,
    pub guidance_mask: Option<Vec<bool>>,
    /// Serial and interleaved variants: the single concatenated stream.
    pub serial_stream: Option<Vec<TokenId>>,
    pub serial_mask: Option<Vec<bool>>,
}

impl TokenStreams {
    /// Same streams with the guidance loss switched off.
    pub fn without_guidance_loss(mut self) -> Self {
        if let Some(mask) = &mut self.guidance_mask {
            mask.iter_mut().for_each(|m| *m = false);
        }
        self
    }

    /// Same streams with every slot masked.
    pub fn fully_masked(mut self) -> Self {
        self.audio_mask.iter_mut().flatten().for_each(|m| *m = false);
        for mask in [&mut self.guidance_mask, &mut self.serial_mask].into_iter().flatten() {
            mask.iter_mut().for_each(|m| *m = false);
        }
        self
    }

    /// Number of decode steps: groups for grouped variants, tokens otherwise.
    pub fn decode_steps(&self) -> usize {
        match &self.serial_stream {
            Some(s) => s.len(),
            None => self.audio_groups.len(),
        }
    }
}

/// Chunks `stream` into groups of `group_size`, padding the final group.
pub fn group_audio(stream: &[TokenId], group_size: usize, pad: TokenId) -> Vec<Vec<TokenId>> {
    stream
        .chunks(group_size)
        .map(|chunk| {
            let mut g = chunk.to_vec();
            g.resize(group_size, pad);
            g
        })
        .collect()
}

/// Alternating runs of `text_run` text ids and `audio_run` audio ids; once a
/// side runs out, the rest of the other side follows contiguously.
pub fn interleave(text: &[TokenId], audio: &[TokenId], text_run: usize, audio_run: usize) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(text.len() + audio.len());
    let mut t = text.chunks(text_run);
    let mut a = audio.chunks(audio_run);
    loop {
        let tc = t.next();
        if let Some(c) = tc {
            out.extend_from_slice(c);
        }
        let ac = a.next();
        if let Some(c) = ac {
            out.extend_from_slice(c);
        }
        if tc.is_none() && ac.is_none() {
            break;
        }
    }
    out
}

/// Splits a serial stream at its BOUNDARY into (guidance, audio incl. EOS).
pub fn split_serial(stream: &[TokenId], boundary: TokenId) -> Option<(&[TokenId], &[TokenId])> {
    let at = stream.iter().position(|&id| id == boundary)?;
    if stream[at + 1..].contains(&boundary) {
        return None;
    }
    Some((&stream[..at], &stream[at + 1..]))
}

/// Guidance ids (without terminator) for a variant's guidance kind.
pub fn guidance_ids(entry: &ManifestEntry, kind: GuidanceKind, layout: &VocabLayout) -> Result<Vec<TokenId>> {
    match kind {
        GuidanceKind::Phoneme => entry
            .phonemes
            .iter()
            .map(|p| layout.phoneme_id(p.index() as u32))
            .collect(),
        GuidanceKind::Text => encode_text(&entry.text),
    }
}

pub fn build_targets(
    entry: &ManifestEntry,
    variant: Variant,
    layout: &VocabLayout,
    group_size: usize,
) -> Result<TokenStreams> {
    let data_err = |reason: String| Error::Data {
        entry: entry.id.clone(),
        reason,
    };
    if group_size == 0 {
        return Err(Error::Config("group size must be positive".into()));
    }
    let special = layout.special_ids;
    let content = layout.audio_size - crate::vocab::STREAM_RESERVED;
    let audio: Vec<TokenId> = entry
        .audio_tokens
        .iter()
        .map(|&t| {
            if (t as usize) < content {
                layout.audio_id(t)
            } else {
                Err(data_err(format!("audio token {t} is not a codec content id")))
            }
        })
        .collect::<Result<_>>()?;
    let guidance = match variant.guidance() {
        Some(kind) => Some(guidance_ids(entry, kind, layout).map_err(|e| data_err(e.to_string()))?),
        None => None,
    };

    let mut streams = TokenStreams {
        audio_groups: Vec::new(),
        audio_mask: Vec::new(),
        guidance: None,
        guidance_mask: None,
        serial_stream: None,
        serial_mask: None,
    };

    match variant {
        Variant::AudioOnly | Variant::ParallelPhoneme | Variant::ParallelText => {
            let mut stream = audio;
            stream.push(special.audio_eos);
            streams.audio_groups = group_audio(&stream, group_size, special.audio_pad);
            streams.audio_mask = streams
                .audio_groups
                .iter()
                .map(|g| g.iter().map(|&id| id != special.audio_pad).collect())
                .collect();
            if let Some(mut g) = guidance {
                let (eos, pad) = special
                    .phoneme_eos
                    .zip(special.phoneme_pad)
                    .ok_or_else(|| Error::Config("parallel variants need a phoneme-extended layout".into()))?;
                g.push(eos);
                let steps = streams.audio_groups.len();
                if g.len() > steps {
                    return Err(data_err(format!(
                        "guidance stream of {} ids exceeds the {steps}-step audio budget",
                        g.len()
                    )));
                }
                g.resize(steps, pad);
                streams.guidance_mask = Some(g.iter().map(|&id| id != pad).collect());
                streams.guidance = Some(g);
            }
        }
        Variant::SerialPhoneme | Variant::SerialText => {
            let mut s = guidance.expect("serial variants carry guidance");
            s.push(special.boundary);
            s.extend(audio);
            s.push(special.audio_eos);
            streams.serial_mask = Some(vec![true; s.len()]);
            streams.serial_stream = Some(s);
        }
        Variant::Interleaved { text_run, audio_run } => {
            let text = guidance.expect("interleaved variant carries text");
            let mut s = interleave(&text, &audio, text_run, audio_run);
            s.push(special.audio_eos);
            streams.serial_mask = Some(vec![true; s.len()]);
            streams.serial_stream = Some(s);
        }
    }
    Ok(streams)
}

/// Lays prompt and streams out as model inputs with per-position targets.
///
/// Grouped variants: the last prompt position predicts group 0, and decode
/// step `t` feeds the mean embedding of group `t-1` (plus guidance `t-1`).
/// Single-stream variants: plain next-token prediction after the prompt.
pub fn teacher_forcing_plan(prompt: &[TokenId], streams: &TokenStreams) -> Result<SequencePlan> {
    if prompt.is_empty() {
        return Err(Error::Shape("empty prompt".into()));
    }
    let mut inputs: Vec<Vec<TokenId>> = prompt.iter().map(|&id| vec![id]).collect();
    let last = prompt.len() - 1;
    let mut outputs = Vec::new();
    if let Some(stream) = &streams.serial_stream {
        let mask = streams.serial_mask.as_ref().expect("serial mask");
        for (i, (&id, &keep)) in stream.iter().zip(mask).enumerate() {
            if i > 0 {
                inputs.push(vec![stream[i - 1]]);
            }
            outputs.push(PlannedOutput {
                position: last + i,
                target: StepTarget::Single(keep.then_some(id)),
            });
        }
    } else {
        for (t, (group, mask)) in streams.audio_groups.iter().zip(&streams.audio_mask).enumerate() {
            if t > 0 {
                let mut slot = streams.audio_groups[t - 1].clone();
                if let Some(g) = &streams.guidance {
                    slot.push(g[t - 1]);
                }
                inputs.push(slot);
            }
            let guidance = match (&streams.guidance, &streams.guidance_mask) {
                (Some(g), Some(m)) => m[t].then_some(g[t]),
                _ => None,
            };
            outputs.push(PlannedOutput {
                position: last + t,
                target: StepTarget::Grouped {
                    audio: group.iter().zip(mask).map(|(&id, &keep)| keep.then_some(id)).collect(),
                    guidance,
                },
            });
        }
    }
    Ok(SequencePlan { inputs, outputs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toyspeech::{g2p, toy_synthesize, EmotionCategory};

    fn entry(text: &str) -> ManifestEntry {
        let phonemes = g2p(text).unwrap();
        let audio_tokens = toy_synthesize(&phonemes, EmotionCategory::Happy);
        ManifestEntry::new(
            "e0",
            text,
            EmotionCategory::Happy,
            "Sounding bright and warm.",
            0,
            phonemes,
            audio_tokens,
        )
    }

    #[test]
    fn grouping_with_ceil_padding() {
        let ids: Vec<TokenId> = (0..9).collect();
        let g = group_audio(&ids, 3, 99);
        assert_eq!(g.len(), 3);
        assert!(g.iter().flatten().all(|&id| id != 99));
        let ids: Vec<TokenId> = (0..10).collect();
        let g = group_audio(&ids, 3, 99);
        assert_eq!(g.len(), 4);
        assert_eq!(g[3], vec![9, 99, 99]);
        for len in 0..40usize {
            for gs in 1..5 {
                let ids: Vec<TokenId> = (0..len as TokenId).collect();
                assert_eq!(group_audio(&ids, gs, 99).len(), len.div_ceil(gs));
            }
        }
    }

    #[test]
    fn interleave_runs() {
        let text: Vec<TokenId> = (0..20).collect();
        let audio: Vec<TokenId> = (100..136).collect();
        let s = interleave(&text, &audio, 12, 36);
        let mut expected: Vec<TokenId> = (0..12).collect();
        expected.extend(100..136);
        expected.extend(12..20);
        assert_eq!(s, expected);

        let audio: Vec<TokenId> = (100..180).collect();
        let s = interleave(&text[..5], &audio, 12, 36);
        let mut expected: Vec<TokenId> = (0..5).collect();
        expected.extend(100..180);
        assert_eq!(s, expected);
    }

    #[test]
    fn grouped_targets() {
        let layout = VocabLayout::standard(false);
        let e = entry("hi");
        let s = build_targets(&e, Variant::AudioOnly, &layout, 3).unwrap();
        // 8 audio + EOS = 9 -> 3 full groups
        assert_eq!(s.audio_groups.len(), 3);
        assert_eq!(s.audio_groups[2][2], layout.special_ids.audio_eos);
        assert!(s.guidance.is_none() && s.serial_stream.is_none());

        let e = entry("hey");
        let s = build_targets(&e, Variant::AudioOnly, &layout, 3).unwrap();
        // 12 + 1 = 13 -> 5 groups, two pads
        assert_eq!(s.audio_groups.len(), 5);
        assert_eq!(s.audio_mask[4], vec![true, false, false]);
    }

    #[test]
    fn parallel_guidance_padding() {
        let layout = VocabLayout::standard(true);
        let e = entry("hey you");
        let s = build_targets(&e, Variant::ParallelPhoneme, &layout, 3).unwrap();
        let g = s.guidance.as_ref().unwrap();
        assert_eq!(g.len(), s.audio_groups.len());
        assert_eq!(g[7], layout.special_ids.phoneme_eos.unwrap());
        assert!(g[8..].iter().all(|&id| Some(id) == layout.special_ids.phoneme_pad));
        let masked = s.guidance_mask.as_ref().unwrap();
        assert_eq!(masked.iter().filter(|&&m| m).count(), 8);
    }

    #[test]
    fn parallel_text_overflow_names_entry() {
        let layout = VocabLayout::standard(true);
        let mut e = entry("a");
        e.text = "a!!!!!!!".into();
        let err = build_targets(&e, Variant::ParallelText, &layout, 3).unwrap_err();
        assert!(err.to_string().contains("e0"));
    }

    #[test]
    fn serial_round_trip() {
        let layout = VocabLayout::standard(true);
        let e = entry("ok go");
        for variant in [Variant::SerialPhoneme, Variant::SerialText] {
            let s = build_targets(&e, variant, &layout, 3).unwrap();
            let stream = s.serial_stream.as_ref().unwrap();
            let (guid, audio) = split_serial(stream, layout.special_ids.boundary).unwrap();
            let kind = variant.guidance().unwrap();
            assert_eq!(guid, guidance_ids(&e, kind, &layout).unwrap().as_slice());
            let restored: Vec<u32> = audio[..audio.len() - 1]
                .iter()
                .map(|&id| layout.audio_index(id).unwrap())
                .collect();
            assert_eq!(restored, e.audio_tokens);
            assert_eq!(
                stream.iter().filter(|&&id| id == layout.special_ids.boundary).count(),
                1
            );
        }
    }

    #[test]
    fn plan_layout_grouped() {
        let layout = VocabLayout::standard(true);
        let e = entry("hi");
        let s = build_targets(&e, Variant::ParallelPhoneme, &layout, 3).unwrap();
        let prompt = vec![1, 2, 3];
        let plan = teacher_forcing_plan(&prompt, &s).unwrap();
        assert_eq!(plan.inputs.len(), 3 + s.audio_groups.len() - 1);
        assert_eq!(plan.outputs[0].position, 2);
        let mut expected = s.audio_groups[0].clone();
        expected.push(s.guidance.as_ref().unwrap()[0]);
        assert_eq!(plan.inputs[3], expected);
    }

    #[test]
    fn plan_layout_single() {
        let layout = VocabLayout::standard(true);
        let e = entry("hi");
        let s = build_targets(&e, Variant::SerialText, &layout, 3).unwrap();
        let plan = teacher_forcing_plan(&[7, 8], &s).unwrap();
        let stream = s.serial_stream.unwrap();
        assert_eq!(plan.inputs.len(), 2 + stream.len() - 1);
        assert_eq!(plan.outputs.len(), stream.len());
        assert_eq!(plan.inputs[2], vec![stream[0]]);
    }
}
