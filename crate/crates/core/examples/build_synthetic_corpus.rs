//! Writes `assets/synthetic_corpus.csv`: 200 sentences over the default
//! categories where every category draws its keywords from its own word
//! list. Shared filler words appear in all categories.
//!
//!     cargo run -p issuelens --example build_synthetic_corpus

use std::path::Path;

use issuelens::classifier::DEFAULT_CATEGORIES;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

const SENTENCES: usize = 200;
const SEED: u64 = 20_220_515;

const KEYWORDS: [&[&str]; 11] = [
    &[
        "crash",
        "segfault",
        "traceback",
        "hangs",
        "corrupted",
        "nan",
    ],
    &[
        "workaround",
        "instead",
        "bypass",
        "temporarily",
        "downgrade",
        "patching",
    ],
    &[
        "motivation",
        "because",
        "wanted",
        "goal",
        "purpose",
        "research",
    ],
    &[
        "feature",
        "request",
        "proposal",
        "enhancement",
        "wish",
        "separate",
    ],
    &["fix", "pr", "refactor", "implementation", "merge", "change"],
    &["assign", "close", "label", "triage", "reopen", "milestone"],
    &[
        "contribute",
        "volunteer",
        "happy",
        "sign",
        "cla",
        "interested",
    ],
    &[
        "how",
        "documentation",
        "tutorial",
        "example",
        "usage",
        "api",
    ],
    &[
        "reproduce",
        "colab",
        "steps",
        "minimal",
        "gist",
        "reproducible",
    ],
    &[
        "expected", "should", "supposed", "correct", "intended", "desired",
    ],
    &[
        "thanks",
        "thank",
        "appreciate",
        "cheers",
        "welcome",
        "great",
    ],
];

const FILLER: &[&str] = &[
    "issue", "model", "version", "code", "tensor", "run", "build", "today",
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = StdRng::seed_from_u64(SEED);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/synthetic_corpus.csv");
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(&path)?;
    w.write_record(["category", "text"])?;
    for i in 0..SENTENCES {
        let c = i % DEFAULT_CATEGORIES.len();
        let mut words: Vec<&str> = (0..rng.gen_range(2..=4))
            .map(|_| *KEYWORDS[c].choose(&mut rng).expect("non-empty"))
            .collect();
        words.extend(
            (0..rng.gen_range(1..=3)).map(|_| *FILLER.choose(&mut rng).expect("non-empty")),
        );
        words.shuffle(&mut rng);
        w.write_record([DEFAULT_CATEGORIES[c], &words.join(" ")])?;
    }
    w.flush()?;
    println!("wrote {SENTENCES} sentences to {}", path.display());
    Ok(())
}
