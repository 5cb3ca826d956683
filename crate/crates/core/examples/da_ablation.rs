//! Dynamic versus fixed aggregation of backward and forward verdicts for
//! the NLI-style verifier with concatenated forward hypotheses.
//!
//! cargo run --release --example da_ablation

use tweak::decoder::{DecodeConfig, Strategy};
use tweak::eval::{compare_report, run_decode};
use tweak::experiment::{Experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exp = Experiment::build(&ExperimentConfig::default())?;
    let verifier = exp.nli_verifier();
    let oracle = exp.oracle();

    let beam = DecodeConfig::toy(Strategy::Beam);
    let dynamic = DecodeConfig::toy(Strategy::TweakNliBf);
    let fixed = DecodeConfig {
        weight_override: Some(0.5),
        ..dynamic
    };
    let mut runs = Vec::new();
    for (label, config) in [("beam", beam), ("dynamic w_t", dynamic), ("fixed w=0.5", fixed)] {
        let mut run = run_decode(&exp.world.corpus, &exp.lm, Some(&verifier), Some(&oracle), &config, false)?;
        run.label = label.to_string();
        runs.push(run);
    }
    print!("{}", compare_report(&runs)?.table());
    Ok(())
}
