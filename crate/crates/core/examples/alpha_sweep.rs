//! Sweeps the faithfulness weight on an adversarial toy corpus whose
//! language model prefers perturbed descriptions two to one.
//!
//! cargo run --release --example alpha_sweep

use tweak::decoder::{DecodeConfig, Strategy};
use tweak::eval::{sweep, sweep_table, SweepAxis};
use tweak::experiment::{Experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let exp = Experiment::build(&ExperimentConfig::default())?;
    let meta = exp.hvm.training().expect("freshly trained");
    println!("hvm final loss {:.4}", meta.final_loss);

    let verifier = exp.hvm_verifier()?;
    let oracle = exp.oracle();
    let base = DecodeConfig::toy(Strategy::TweakHvm);
    for axis in [SweepAxis::Alpha, SweepAxis::BeamSize] {
        let values: &[f64] = match axis {
            SweepAxis::Alpha => &[0.0, 1.0, 2.0, 4.0, 8.0],
            SweepAxis::BeamSize => &[1.0, 2.0, 4.0, 8.0],
        };
        let rows = sweep(&exp.world.corpus, &exp.lm, Some(&verifier), Some(&oracle), &base, axis, values)?;
        println!();
        print!("{}", sweep_table(axis, &rows));
    }
    Ok(())
}
