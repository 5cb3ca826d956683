//! Greedy, beam and lookahead-verified decoding on a three-sentence toy LM.
//!
//! The LM has seen one faithful description of the facts and two that
//! swap in an unsupported relation, so plain beam search prefers the
//! hallucination. A rule-oracle verifier steers the verified decoder back.
//!
//! cargo run --example decode_toy

use std::sync::Arc;

use tweak::decoder::{decode, DecodeConfig, Strategy};
use tweak::dictionary::{Perturbation, PerturbationDictionary};
use tweak::knowledge::{FactList, FactTriple, Position};
use tweak::lm::ToyLm;
use tweak::verifier::{OracleVerifier, RuleOracle};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let triple = FactTriple::new("Ireland", "largest_city", "Dublin")?;
    let facts = FactList::new(vec![triple.clone()])?;
    let faithful = "Dublin is Ireland's largest city";
    let hallucinated = "Dublin is Ireland's national capital";
    let corpus = vec![
        (facts.clone(), faithful.to_string()),
        (facts.clone(), hallucinated.to_string()),
        (facts.clone(), hallucinated.to_string()),
    ];
    let lm = ToyLm::train(&corpus, 3, 1e-6)?;

    let mut dict = PerturbationDictionary::new();
    dict.record(
        &triple,
        Perturbation {
            position: Position::Relation,
            original: "largest_city".into(),
            replacement: "national_capital".into(),
        },
    );
    let verifier = OracleVerifier::new(Arc::new(RuleOracle::new(dict)));

    for strategy in [Strategy::Greedy, Strategy::Beam, Strategy::TweakNliB, Strategy::TweakHvm] {
        let config = DecodeConfig::toy(strategy);
        let out = decode(&facts, &lm, Some(&verifier), &config)?;
        println!(
            "{:<10} k={} alpha={:<3} gen={:>7.3} steps={:>2} negatives={:>2}  {}",
            strategy.name(),
            config.effective().k,
            config.effective().alpha,
            out.gen_logprob,
            out.trace.len(),
            out.trace.negative_count(),
            out.text
        );
    }

    let out = decode(&facts, &lm, Some(&verifier), &DecodeConfig::toy(Strategy::TweakHvm))?;
    println!("\nfirst trace step of tweak-hvm:");
    print!("{}", out.trace.to_jsonl().lines().next().unwrap_or_default());
    println!();
    Ok(())
}
