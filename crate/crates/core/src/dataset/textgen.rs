//! Template-bank text and description generator standing in for the
//! LLM-driven generation step. Texts come in three styles (novel prose,
//! dialog line, observational remark); a small share of outputs violate the
//! constraints on purpose so the retry path stays exercised.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::toyspeech::EmotionCategory;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TextStyle {
    Prose,
    Dialog,
    Observational,
}

impl TextStyle {
    pub const ALL: [TextStyle; 3] = [TextStyle::Prose, TextStyle::Dialog, TextStyle::Observational];
}

struct Lexicon {
    adjectives: &'static [&'static str],
    nouns: &'static [&'static str],
    verbs: &'static [&'static str],
    similes: &'static [&'static str],
    outbursts: &'static [&'static str],
    affects: &'static [&'static str],
    qualities: &'static [&'static str],
}

fn lexicon(emotion: EmotionCategory) -> &'static Lexicon {
    use EmotionCategory::*;
    match emotion {
        Angry => &Lexicon {
            adjectives: &["broken", "wobbly", "careless", "stubborn", "filthy", "cracked"],
            nouns: &["table", "door", "promise", "engine", "excuse", "window"],
            verbs: &["slammed", "rattled", "snapped", "ground", "scraped", "burned"],
            similes: &["a fist against a wall", "a kettle boiling over", "a wasp in a jar"],
            outbursts: &[
                "I asked you three times",
                "Do not touch that again",
                "This is the last straw",
            ],
            affects: &[
                "aggravated displeasure",
                "simmering fury",
                "sharp resentment",
                "bitter frustration",
            ],
            qualities: &["clipped", "forceful", "seething", "harsh"],
        },
        Happy => &Lexicon {
            adjectives: &["golden", "bright", "warm", "lively", "sparkling", "sunny"],
            nouns: &["garden", "party", "kitchen", "meadow", "balloon", "festival"],
            verbs: &["danced", "sparkled", "laughed", "bloomed", "glowed", "skipped"],
            similes: &[
                "bubbles rising in lemonade",
                "bells on a holiday morning",
                "a puppy in fresh snow",
            ],
            outbursts: &["You did an amazing job", "We finally made it", "I knew you could win"],
            affects: &["supportive joy", "contagious delight", "bubbly cheer", "warm pride"],
            qualities: &["lilting", "bright", "buoyant", "playful"],
        },
        Sad => &Lexicon {
            adjectives: &["empty", "faded", "cold", "silent", "grey", "hollow"],
            nouns: &["house", "letter", "field", "chair", "station", "photograph"],
            verbs: &["drifted", "sagged", "crumbled", "dimmed", "settled", "lingered"],
            similes: &[
                "rain on a forgotten grave",
                "a candle left to gutter",
                "ash after the fire",
            ],
            outbursts: &[
                "I never got to say goodbye",
                "Nothing will ever be the same",
                "Why did you leave so soon",
            ],
            affects: &["pervasive desolation", "quiet grief", "heavy sorrow", "lonely despair"],
            qualities: &["slow", "fragile", "subdued", "trembling"],
        },
        Surprised => &Lexicon {
            adjectives: &["sudden", "strange", "dazzling", "unexpected", "curious", "vivid"],
            nouns: &["curtain", "box", "stage", "letter", "visitor", "sky"],
            verbs: &["burst", "flashed", "opened", "appeared", "shimmered", "leapt"],
            similes: &[
                "a rabbit from a hat",
                "fireworks at noon",
                "a door that was never there",
            ],
            outbursts: &[
                "You came all this way",
                "Is that really for me",
                "I cannot believe my eyes",
            ],
            affects: &[
                "bewildered wonder",
                "startled amazement",
                "breathless astonishment",
                "wide eyed disbelief",
            ],
            qualities: &["rising", "quickened", "breathless", "high"],
        },
        Fearful => &Lexicon {
            adjectives: &["dark", "creaking", "narrow", "shadowed", "damp", "distant"],
            nouns: &["hallway", "knife", "staircase", "forest", "cellar", "footstep"],
            verbs: &["creaked", "glinted", "whispered", "crept", "shuddered", "loomed"],
            similes: &[
                "ghosts on the walls",
                "breath against the glass",
                "a shape beneath the water",
            ],
            outbursts: &[
                "Did you hear that noise",
                "Please do not open the door",
                "Someone is standing outside",
            ],
            affects: &[
                "chilling foreboding",
                "creeping dread",
                "nervous panic",
                "shaky apprehension",
            ],
            qualities: &["quivering", "hushed", "unsteady", "tense"],
        },
        Disgusted => &Lexicon {
            adjectives: &["greasy", "rotten", "sticky", "sour", "mouldy", "slimy"],
            nouns: &["sandwich", "sink", "carpet", "drain", "fridge", "sock"],
            verbs: &["oozed", "reeked", "curdled", "festered", "dripped", "stank"],
            similes: &["milk left in the sun", "a swamp in summer", "old fish in a bin"],
            outbursts: &[
                "How could anyone eat that",
                "Get that thing away from me",
                "Who left this mess here",
            ],
            affects: &[
                "incredulous disdain",
                "curled revulsion",
                "sneering distaste",
                "nauseated contempt",
            ],
            qualities: &["scornful", "nasal", "clipped", "drawn out"],
        },
        Neutral => &Lexicon {
            adjectives: &["quiet", "plain", "evening", "ordinary", "gentle", "steady"],
            nouns: &["leaves", "river", "street", "clock", "train", "library"],
            verbs: &["rustled", "flowed", "passed", "ticked", "moved", "waited"],
            similes: &[
                "pages turning slowly",
                "a tide on a calm day",
                "steps on a familiar road",
            ],
            outbursts: &[
                "The meeting starts at noon",
                "Please take a seat by the window",
                "The bus comes every hour",
            ],
            affects: &[
                "peaceful calm",
                "contemplative ease",
                "even composure",
                "measured detachment",
            ],
            qualities: &["level", "steady", "unhurried", "plain"],
        },
    }
}

const PLACES: &[&str] = &[
    "empty room",
    "long corridor",
    "old market",
    "windy hill",
    "quiet harbor",
    "narrow lane",
    "open field",
];
const TIMES: &[&str] = &[
    "all night",
    "until dawn",
    "every evening",
    "through the afternoon",
    "for hours",
];
const TAILS: &[&str] = &[
    "while the light slowly faded behind the hills",
    "and nobody in the town said a single word about it",
    "as if the whole world had paused to listen",
    "leaving a trace that lasted long after",
];
const ADVERBS: &[&str] = &["rhythmic", "insistent", "patient", "restless", "steady", "relentless"];

/// Participles accepted as description openers; also the paraphrase ring.
pub const PARTICIPLES: &[&str] = &[
    "Conveying",
    "Expressing",
    "Evoking",
    "Projecting",
    "Radiating",
    "Emanating",
    "Voicing",
    "Carrying",
];

fn pick<R: Rng>(rng: &mut R, items: &'static [&'static str]) -> &'static str {
    items.choose(rng).expect("non-empty bank")
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_ascii_uppercase().to_string() + chars.as_str(),
        None => String::new(),
    }
}

/// One text in the given style. Length and emphasis are not guaranteed to
/// satisfy the validators.
pub fn generate_text<R: Rng>(emotion: EmotionCategory, style: TextStyle, rng: &mut R) -> String {
    let lx = lexicon(emotion);
    let mut text = match style {
        TextStyle::Prose => {
            let mut s = format!(
                "The {} {} {} across the {}, like {}",
                pick(rng, lx.adjectives),
                pick(rng, lx.nouns),
                pick(rng, lx.verbs),
                pick(rng, PLACES),
                pick(rng, lx.similes),
            );
            if rng.gen_bool(0.6) {
                s.push(' ');
                s.push_str(pick(rng, TAILS));
            }
            s.push('.');
            s
        }
        TextStyle::Dialog => {
            let mut s = format!(
                "{}! Why is the {} {} still sitting by the {}",
                pick(rng, lx.outbursts),
                pick(rng, lx.adjectives),
                pick(rng, lx.nouns),
                pick(rng, PLACES),
            );
            if rng.gen_bool(0.7) {
                s.push_str(&format!(" {}", pick(rng, TIMES)));
            }
            s.push('?');
            s
        }
        TextStyle::Observational => {
            let mut s = format!(
                "{} {} outside the {} like {}, {}, {}, {}",
                capitalize_first(pick(rng, lx.nouns)),
                pick(rng, lx.verbs),
                pick(rng, PLACES),
                pick(rng, lx.similes),
                pick(rng, ADVERBS),
                pick(rng, ADVERBS),
                pick(rng, TIMES),
            );
            if rng.gen_bool(0.5) {
                s.push_str(&format!(", {}", pick(rng, TAILS)));
            }
            s.push('.');
            s
        }
    };
    // emphasis: usually 0-2 words, occasionally 3 (rejected downstream)
    let emphasized = match rng.gen_range(0..20) {
        0..=9 => 0,
        10..=14 => 1,
        15..=18 => 2,
        _ => 3,
    };
    if emphasized > 0 {
        let mut words: Vec<String> = text.split(' ').map(str::to_string).collect();
        let candidates: Vec<usize> = (1..words.len())
            .filter(|&i| words[i].chars().filter(|c| c.is_alphabetic()).count() >= 4)
            .collect();
        for &i in candidates.choose_multiple(rng, emphasized) {
            words[i] = words[i].to_ascii_uppercase();
        }
        text = words.join(" ");
    }
    text
}

/// A present-participle description; about one in twenty comes out as a
/// bare adjective, which the validator rejects.
pub fn generate_description<R: Rng>(emotion: EmotionCategory, rng: &mut R) -> String {
    let lx = lexicon(emotion);
    if rng.gen_ratio(1, 20) {
        return format!("{}.", capitalize_first(emotion.name()));
    }
    let opener = pick(rng, PARTICIPLES);
    match rng.gen_range(0..3) {
        0 => format!("{opener} {}.", pick(rng, lx.affects)),
        1 => format!(
            "{opener} {} in a {} voice.",
            pick(rng, lx.affects),
            pick(rng, lx.qualities)
        ),
        _ => format!("{opener} {} and {}.", pick(rng, lx.affects), pick(rng, lx.affects)),
    }
}
