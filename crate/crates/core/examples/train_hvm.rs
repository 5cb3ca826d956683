//! Trains the tabular HVM on synthesized hypothesis pairs, reports held-out
//! per-cell accuracy and scores the four hypotheses of a hand-built instance.
//!
//! cargo run --release --example train_hvm

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tweak::dictionary::PerturbationDictionary;
use tweak::fate::{perturb_triple, split_hypotheses, FateInstance, HypothesisSource, SplitPolicy, TemplateSet};
use tweak::hvm::{cell_accuracy, train_hvm, HvmModel, TrainConfig};
use tweak::knowledge::{FactTriple, Position};
use tweak::verifier::HypothesisKind;
use tweak::world::{generate_world, synthesize, WorldConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let train = synthesize(
        &generate_world(&WorldConfig {
            instances: 300,
            seed: 11,
            ..WorldConfig::default()
        }),
        SplitPolicy::Random(4),
        11,
    )?;
    let held_out = synthesize(
        &generate_world(&WorldConfig {
            instances: 100,
            seed: 12,
            ..WorldConfig::default()
        }),
        SplitPolicy::All,
        12,
    )?;

    let model = train_hvm(&train.pairs, &train.dictionary, TrainConfig::default())?;
    let meta = model.training().expect("freshly trained");
    println!(
        "{} training pairs, loss {:.4} -> {:.4} over {} epochs",
        train.pairs.len(),
        meta.loss_history[0],
        meta.final_loss,
        meta.epochs
    );
    println!(
        "cell accuracy: train {:.4}, held-out {:.4} ({} pairs)",
        cell_accuracy(&model, &train.pairs, &train.dictionary)?,
        cell_accuracy(&model, &held_out.pairs, &held_out.dictionary)?,
        held_out.pairs.len()
    );

    let path = std::env::temp_dir().join("tweak_example_hvm.json");
    model.save(&path)?;
    let model = HvmModel::load(&path)?;
    println!("saved and reloaded {}", path.display());

    let mut templates = TemplateSet::new();
    templates.insert("largest_city", "{obj} is {subj}'s {rel}")?;
    let original = FactTriple::new("Ireland", "largest_city", "Dublin")?;
    let mut dict = PerturbationDictionary::new();
    let pool = vec!["national_capital".to_string()];
    let perturbed = perturb_triple(&original, Position::Relation, &pool, &mut ChaCha8Rng::seed_from_u64(0), &mut dict)?;
    let inst = FateInstance::render(vec![original.clone()], vec![perturbed], &templates, 0, Position::Relation)?;
    println!("\nP(supported) on the hand-built instance, split after 4 tokens:");
    for source in [HypothesisSource::Original, HypothesisSource::Perturbed] {
        let pair = split_hypotheses(&inst, 0, 4, source)?;
        for (kind, text, label) in [
            (HypothesisKind::Backward, &pair.backward, pair.labels[0][0]),
            (HypothesisKind::Forward, &pair.forward, pair.labels[0][1]),
        ] {
            let p = model.predict_cell(&dict, &original, text, kind)?;
            println!(
                "  {:<9} {:<32} label {:<11} p = {p:.4}",
                kind.to_string(),
                format!("{text:?}"),
                if label { "supported" } else { "unsupported" }
            );
        }
    }
    Ok(())
}
