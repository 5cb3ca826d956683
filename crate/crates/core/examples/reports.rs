//! BLEU, oracle hallucination rate, length split and a side-by-side
//! comparison of beam search against verified decoding.
//!
//! cargo run --release --example reports

use tweak::decoder::{DecodeConfig, Strategy};
use tweak::eval::{bleu, compare_report, default_length_bounds, length_split_report, run_decode};
use tweak::experiment::{Experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!(
        "sentence BLEU of a partial match: {:.2}\n",
        bleu("the cat sat on a mat", &["the cat sat on the mat".to_string()], 4)
    );

    let exp = Experiment::build(&ExperimentConfig::default())?;
    let verifier = exp.hvm_verifier()?;
    let oracle = exp.oracle();
    let mut runs = Vec::new();
    for strategy in [Strategy::Beam, Strategy::TweakHvm] {
        runs.push(run_decode(
            &exp.world.corpus,
            &exp.lm,
            Some(&verifier),
            Some(&oracle),
            &DecodeConfig::toy(strategy),
            false,
        )?);
    }
    let cmp = compare_report(&runs)?;
    print!("{}", cmp.table());
    if let Some(d) = cmp.diffs.first() {
        println!("\nfirst differing instance ({}):", d.index);
        for (label, out) in cmp.labels.iter().zip(&d.outputs) {
            println!("  {label:<10} {out}");
        }
    }

    for run in &runs {
        println!("\n{} by number of input triples:", run.label);
        for g in length_split_report(&exp.world.corpus, run, &default_length_bounds())? {
            println!(
                "  {}-{}: {:>3} instances, halluc rate {}",
                g.min_triples,
                g.max_triples,
                g.size,
                g.hallucination_rate.map_or("-".into(), |r| format!("{r:.3}"))
            );
        }
    }
    Ok(())
}
