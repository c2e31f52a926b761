//! Retrains the bundled baseline model from `assets/seed_corpus.csv` and
//! writes it to `assets/baseline_model.json`.
//!
//!     cargo run -p issuelens --example train_bundled

use std::path::Path;

use issuelens::classifier::{bundled_model_from, save_model, LabeledCorpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let assets = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    let corpus = LabeledCorpus::load(&assets.join("seed_corpus.csv"), b',')?;
    let model = bundled_model_from(&corpus)?;
    save_model(&model, &assets.join("baseline_model.json"))?;
    println!(
        "{} examples, {} features",
        corpus.len(),
        model.vocabulary().len()
    );
    Ok(())
}
