//! Where in the output do negative verdicts land? Decodes the adversarial
//! corpus with the HVM verifier and prints the position histogram as CSV.
//!
//! cargo run --release --example position_histogram

use tweak::decoder::{DecodeConfig, Strategy};
use tweak::eval::{position_histogram, run_decode, PositionHistogram};
use tweak::experiment::{Experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exp = Experiment::build(&ExperimentConfig::default())?;
    let verifier = exp.hvm_verifier()?;
    let run = run_decode(
        &exp.world.corpus,
        &exp.lm,
        Some(&verifier),
        Some(&exp.oracle()),
        &DecodeConfig::toy(Strategy::TweakHvm),
        true,
    )?;
    let hist = position_histogram(&run.traces, 10);
    let csv = hist.to_csv();
    print!("{csv}");
    assert_eq!(PositionHistogram::from_csv(&csv)?, hist);
    println!(
        "# {} negative verdicts ({} backward, {} forward)",
        hist.total(),
        hist.backward.iter().sum::<u64>(),
        hist.forward.iter().sum::<u64>()
    );
    Ok(())
}
