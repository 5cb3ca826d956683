//! Builds a FATE instance by hand, splits it into labeled backward/forward
//! hypotheses, then synthesizes a whole dataset from a generated world.
//!
//! cargo run --example fate_synthesis

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tweak::dictionary::PerturbationDictionary;
use tweak::fate::{instances_to_jsonl, perturb_triple, split_hypotheses, FateInstance, HypothesisSource, SplitPolicy, TemplateSet};
use tweak::knowledge::{FactTriple, Position};
use tweak::world::{generate_world, synthesize, WorldConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut templates = TemplateSet::new();
    templates.insert("largest_city", "{obj} is {subj}'s {rel}")?;
    let original = FactTriple::new("Ireland", "largest_city", "Dublin")?;

    let mut dict = PerturbationDictionary::new();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool = vec!["national_capital".to_string()];
    let perturbed = perturb_triple(&original, Position::Relation, &pool, &mut rng, &mut dict)?;

    let inst = FateInstance::render(vec![original], vec![perturbed], &templates, 0, Position::Relation)?;
    print!("{}", instances_to_jsonl(std::slice::from_ref(&inst)));

    for source in [HypothesisSource::Original, HypothesisSource::Perturbed] {
        println!("\n{source:?} description, every split:");
        for t in 1..inst.split_limit()? {
            let pair = split_hypotheses(&inst, 0, t, source)?;
            let [b, f] = pair.labels[0];
            println!(
                "  t={t}  backward {:<40} {}  forward {:<30} {}",
                format!("{:?}", pair.backward),
                if b { "supported  " } else { "unsupported" },
                format!("{:?}", pair.forward),
                if f { "supported" } else { "unsupported" },
            );
        }
    }

    let world = generate_world(&WorldConfig {
        instances: 100,
        seed: 3,
        ..WorldConfig::default()
    });
    let data = synthesize(&world, SplitPolicy::All, 7)?;
    let unsupported = data.pairs.iter().filter(|p| p.has_unsupported()).count();
    println!(
        "\nworld of {} instances: {} FATE tuples, {} hypothesis pairs after balancing, {} with an unsupported cell",
        world.corpus.len(),
        data.instances.len(),
        data.pairs.len(),
        unsupported
    );
    Ok(())
}
