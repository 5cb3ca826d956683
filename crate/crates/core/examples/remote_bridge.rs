//! Drives the decoder through the bridge wire protocol. An in-process
//! loopback server stands in for the external model server, answering
//! `next_logprobs` from a toy LM and `nli_score` from the rule oracle.
//!
//! cargo run --example remote_bridge

use std::sync::Arc;

use tweak::decoder::{decode, DecodeConfig, Strategy};
use tweak::knowledge::FactList;
use tweak::lm::{LanguageModel, RemoteLm};
use tweak::protocol::{spawn_loopback, Request, Response};
use tweak::verifier::{NliScorer, NliVerifier, OracleNli, RemoteNli};
use tweak::world::{adversarial_lm, generate_world, WorldConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let world = generate_world(&WorldConfig {
        instances: 20,
        seed: 5,
        ..WorldConfig::default()
    });
    let lm = Arc::new(adversarial_lm(&world, 2, 5, 1e-9, 5)?);
    let nli = Arc::new(OracleNli::new(Arc::new(tweak::verifier::RuleOracle::new(world.dictionary.clone()))));
    let checksum = lm.vocabulary().checksum();
    let facts_by_key: Arc<Vec<(String, FactList)>> =
        Arc::new(world.corpus.iter().map(|i| (i.facts.linearize(), i.facts.clone())).collect());

    let server_lm = lm.clone();
    let addr = spawn_loopback(Arc::new(move |req: Request| match req {
        Request::NextLogprobs {
            prefix,
            facts_linearized,
            vocab_checksum,
        } => {
            if vocab_checksum != checksum {
                return Response::error("vocabulary checksum mismatch");
            }
            let Some((_, facts)) = facts_by_key.iter().find(|(k, _)| *k == facts_linearized) else {
                return Response::error("unknown facts");
            };
            match server_lm.next_logprobs(&prefix, facts) {
                Ok(v) => Response::logprobs(v.values()),
                Err(e) => Response::error(e.to_string()),
            }
        }
        Request::NliScore { premise, hypothesis } => match nli.entail_prob(&premise, &hypothesis) {
            Ok(p) => Response::Entail { entail_prob: p },
            Err(e) => Response::error(e.to_string()),
        },
        Request::HvmTable { .. } => Response::error("no HVM loaded"),
    }))?;
    println!("bridge listening on {addr}");

    let remote_lm = RemoteLm::connect(addr, lm.vocabulary().clone())?;
    let verifier = NliVerifier::new(RemoteNli::connect(addr)?);
    for inst in world.corpus.iter().take(3) {
        for strategy in [Strategy::Beam, Strategy::TweakNliBf] {
            let out = decode(&inst.facts, &remote_lm, Some(&verifier), &DecodeConfig::toy(strategy))?;
            let local = decode(&inst.facts, lm.as_ref(), None, &DecodeConfig::toy(Strategy::Beam))?;
            println!("{:<13} {}", strategy.name(), out.text);
            if strategy == Strategy::Beam {
                assert_eq!(out.text, local.text, "remote and local beam search disagree");
            }
        }
        println!("{:<13} {}\n", "reference", inst.references[0]);
    }
    Ok(())
}
