//! Synthetic corpus generator for integration tests.
//!
//! Builds instructional-style contexts with five candidate fillers each.
//! Filler quality is planted lexically: each of five tiers draws its
//! adjective from a tier-specific vocabulary, the gold score is the tier
//! center plus uniform noise, and the gold class is a fixed binning of that
//! noisy score. A model that picks up the lexical signal can order the
//! tiers almost perfectly; one that does not stays near chance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use coral_cloze_core::dataset::{ClassLabel, ClozeInstance, Corpus, ResolvedPattern};

const TIER_ADVERBS: [[&str; 2]; 5] = [
    ["hopelessly", "disastrously"],
    ["awkwardly", "unevenly"],
    ["adequately", "acceptably"],
    ["dependably", "gracefully"],
    ["masterfully", "flawlessly"],
];

const TIER_ADJECTIVES: [[&str; 4]; 5] = [
    ["ruinous", "abysmal", "wrecked", "useless"],
    ["shaky", "feeble", "clumsy", "sloppy"],
    ["passable", "ordinary", "tolerable", "standard"],
    ["reliable", "polished", "sturdy", "spotless"],
    ["sublime", "peerless", "pristine", "superb"],
];

const TIER_CENTERS: [f64; 5] = [1.25, 2.2, 3.0, 3.8, 4.75];
const SCORE_NOISE: f64 = 0.2;

const NOUNS: [&str; 8] = [
    "hinge", "filter", "bracket", "gasket", "lining", "washer", "fitting", "valve",
];

const TITLES: [&str; 6] = [
    "How to Repair a Leaky Faucet",
    "How to Maintain Garden Tools",
    "How to Restore an Old Cabinet",
    "How to Service a Bicycle Chain",
    "How to Seal a Drafty Window",
    "How to Clean a Clogged Drain",
];

const SECTIONS: [&str; 5] = [
    "Preparing the Surface",
    "Checking the Seals",
    "Gathering Your Materials",
    "Finishing the Job",
    "Avoiding Common Mistakes",
];

const SENTENCES: [&str; 5] = [
    "Carefully inspect the [FILLER] before moving on.",
    "Replace the [FILLER] whenever it shows wear.",
    "Tighten the [FILLER] until it sits flush.",
    "Apply a thin coat over the [FILLER] and let it dry.",
    "Test the [FILLER] twice to confirm the fix.",
];

const BEFORE: [&str; 4] = [
    "Turn off the supply first.",
    "Wipe down the whole area.",
    "Read the notes before you begin.",
    "Work in good light.",
];

const AFTER: [&str; 4] = [
    "Then run a final check.",
    "Let the piece settle overnight.",
    "Recheck the seating surface.",
    "Keep the spare parts bag.",
];

/// Fixed binning of the noisy score into the three classes. Boundaries sit
/// between tier ranges, so class is consistent within a tier.
pub fn class_for_score(score: f64) -> ClassLabel {
    if score < 2.6 {
        ClassLabel::Implausible
    } else if score < 3.45 {
        ClassLabel::Neutral
    } else {
        ClassLabel::Plausible
    }
}

/// `n_contexts` contexts with five fillers each (one per tier, shuffled).
pub fn synth_corpus(n_contexts: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns = [
        ResolvedPattern::ImplicitReference,
        ResolvedPattern::AddedCompound,
        ResolvedPattern::MetonymicReference,
        ResolvedPattern::FusedHead,
    ];
    let mut instances = Vec::with_capacity(n_contexts * 5);
    for c in 0..n_contexts {
        let title = TITLES[rng.gen_range(0..TITLES.len())];
        let section = SECTIONS[rng.gen_range(0..SECTIONS.len())];
        let sentence = SENTENCES[rng.gen_range(0..SENTENCES.len())];
        let before = BEFORE[rng.gen_range(0..BEFORE.len())];
        let after = AFTER[rng.gen_range(0..AFTER.len())];
        let pattern = patterns[rng.gen_range(0..patterns.len())];
        let noun = NOUNS[rng.gen_range(0..NOUNS.len())];

        let mut tiers = [0usize, 1, 2, 3, 4];
        for i in (1..tiers.len()).rev() {
            tiers.swap(i, rng.gen_range(0..=i));
        }

        for (slot, &tier) in tiers.iter().enumerate() {
            let adv = TIER_ADVERBS[tier][rng.gen_range(0..2)];
            let adj_a = TIER_ADJECTIVES[tier][rng.gen_range(0..4)];
            let adj_b = TIER_ADJECTIVES[tier][rng.gen_range(0..4)];
            let filler = format!("{adv} {adj_a} {adj_b} {noun}");
            let score = TIER_CENTERS[tier] + rng.gen_range(-SCORE_NOISE..SCORE_NOISE);
            instances.push(ClozeInstance {
                id: format!("sctx{c}_{}", slot + 1),
                resolved_pattern: pattern,
                article_title: title.to_string(),
                section_header: section.to_string(),
                previous_context: before.to_string(),
                sentence: sentence.to_string(),
                follow_up_context: after.to_string(),
                filler,
                class_label: Some(class_for_score(score)),
                plausibility_score: Some(score),
            });
        }
    }
    Corpus::new(instances).expect("generator produces unique ids")
}
