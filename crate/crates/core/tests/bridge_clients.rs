//! Remote LM and verifier clients against in-process loopback bridges.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::Arc;

use tweak::decoder::{decode, DecodeConfig, Strategy};
use tweak::knowledge::{FactList, FactTriple};
use tweak::lm::{LanguageModel, LmError, RemoteLm, ToyLm};
use tweak::protocol::{spawn_loopback, Request, Response};
use tweak::verifier::{HvmVerifier, HypothesisKind, NliScorer, RemoteHvm, RemoteNli, Verifier, VerifyError};
use tweak::world::{adversarial_lm, generate_world, WorldConfig};

fn facts() -> FactList {
    FactList::new(vec![FactTriple::new("Ireland", "largest_city", "Dublin").unwrap()]).unwrap()
}

fn toy() -> Arc<ToyLm> {
    Arc::new(ToyLm::train(&[(facts(), "Dublin is Ireland's largest city".into())], 3, 0.01).unwrap())
}

/// Bridge answering `next_logprobs` from `lm` after applying `tamper`.
fn lm_bridge(lm: Arc<ToyLm>, tamper: fn(Vec<f64>) -> Vec<f64>) -> SocketAddr {
    let checksum = lm.vocabulary().checksum();
    spawn_loopback(Arc::new(move |req| match req {
        Request::NextLogprobs { prefix, vocab_checksum, .. } => {
            if vocab_checksum != checksum {
                return Response::error("vocabulary checksum mismatch");
            }
            match lm.next_logprobs(&prefix, &facts()) {
                Ok(v) => Response::logprobs(&tamper(v.values().to_vec())),
                Err(e) => Response::error(e.to_string()),
            }
        }
        _ => Response::error("unsupported op"),
    }))
    .unwrap()
}

#[test]
fn remote_lm_matches_local_and_decodes_identically() {
    let lm = toy();
    let addr = lm_bridge(lm.clone(), |v| v);
    let remote = RemoteLm::connect(addr, lm.vocabulary().clone()).unwrap();
    let bos = lm.vocabulary().bos();
    let a = remote.next_logprobs(&[bos], &facts()).unwrap();
    let b = lm.next_logprobs(&[bos], &facts()).unwrap();
    assert_eq!(a, b);
    assert!((a.exp_sum() - 1.0).abs() < 1e-4);
    let cfg = DecodeConfig::toy(Strategy::Beam);
    let r = decode(&facts(), &remote, None, &cfg).unwrap();
    let l = decode(&facts(), lm.as_ref(), None, &cfg).unwrap();
    assert_eq!(r.tokens, l.tokens);
    assert_eq!(r.text, "Dublin is Ireland's largest city");
}

#[test]
fn checksum_mismatch_is_a_protocol_violation() {
    let lm = toy();
    let addr = lm_bridge(lm.clone(), |v| v);
    let other = tweak::lm::Vocabulary::from_words(["x", "y"]);
    let remote = RemoteLm::connect(addr, other).unwrap();
    let err = remote.next_logprobs(&[remote.vocabulary().bos()], &facts()).unwrap_err();
    assert!(matches!(err, LmError::Protocol(ref m) if m.contains("checksum")), "{err}");
}

#[test]
fn unnormalized_or_short_vectors_are_rejected() {
    let lm = toy();
    let bos = lm.vocabulary().bos();
    let halved = lm_bridge(lm.clone(), |v| v.into_iter().map(|x| x + (0.5f64).ln()).collect());
    let remote = RemoteLm::connect(halved, lm.vocabulary().clone()).unwrap();
    assert!(matches!(remote.next_logprobs(&[bos], &facts()), Err(LmError::Protocol(_))));

    let short = lm_bridge(lm.clone(), |mut v| {
        v.pop();
        v
    });
    let remote = RemoteLm::connect(short, lm.vocabulary().clone()).unwrap();
    assert!(matches!(remote.next_logprobs(&[bos], &facts()), Err(LmError::Protocol(_))));

    let slack = lm_bridge(lm.clone(), |v| v.into_iter().map(|x| x + 2e-5).collect());
    let remote = RemoteLm::connect(slack, lm.vocabulary().clone()).unwrap();
    assert!(remote.next_logprobs(&[bos], &facts()).is_ok());
}

#[test]
fn remote_nli_validates_probabilities() {
    let addr = spawn_loopback(Arc::new(|req| match req {
        Request::NliScore { premise, hypothesis } if premise == hypothesis => Response::Entail { entail_prob: 0.9 },
        Request::NliScore { hypothesis, .. } if hypothesis == "broken" => Response::Entail { entail_prob: 1.5 },
        Request::NliScore { .. } => Response::Entail { entail_prob: 0.2 },
        _ => Response::error("unsupported op"),
    }))
    .unwrap();
    let nli = RemoteNli::connect(addr).unwrap();
    let same = nli.entail_prob("a b c", "a b c").unwrap();
    let unrelated = nli.entail_prob("a b c", "x y").unwrap();
    assert!(same >= unrelated);
    assert!(matches!(nli.entail_prob("a", "broken"), Err(VerifyError::Protocol(_))));
}

#[test]
fn remote_hvm_agrees_with_local_model() {
    let world = generate_world(&WorldConfig {
        instances: 30,
        seed: 9,
        ..WorldConfig::default()
    });
    let data = tweak::world::synthesize(&world, tweak::fate::SplitPolicy::Random(3), 9).unwrap();
    let model = Arc::new(tweak::hvm::train_hvm(&data.pairs, &data.dictionary, Default::default()).unwrap());
    let dict = Arc::new(world.dictionary.clone());
    let local = HvmVerifier::new(model.clone(), dict.clone()).unwrap();
    let served = local.clone();
    let addr = spawn_loopback(Arc::new(move |req| match req {
        Request::HvmTable { triples, backward, forward } => {
            let facts = FactList::new(triples).unwrap();
            let col = |h: &str, k| -> Vec<f64> {
                if h.trim().is_empty() {
                    return vec![1.0; facts.len()];
                }
                facts
                    .iter()
                    .map(|t| served.model().predict_cell(&dict, t, h, k).unwrap())
                    .collect()
            };
            let b = col(&backward, HypothesisKind::Backward);
            let f = col(&forward, HypothesisKind::Forward);
            Response::Table {
                table: b.into_iter().zip(f).map(|(x, y)| [x, y]).collect(),
            }
        }
        _ => Response::error("unsupported op"),
    }))
    .unwrap();
    let remote = RemoteHvm::connect(addr).unwrap();
    let inst = &world.corpus[0];
    let text = &inst.references[0];
    let (rb, rf) = remote.verify_pair(&inst.facts, Some(text), Some(text)).unwrap();
    let (lb, lf) = local.verify_pair(&inst.facts, Some(text), Some(text)).unwrap();
    assert_eq!(rb, lb);
    assert_eq!(rf, lf);
    assert!(remote.verify(&inst.facts, "", HypothesisKind::Backward).is_err());
}

#[test]
fn adversarial_decode_over_the_bridge_is_unchanged() {
    let world = generate_world(&WorldConfig {
        instances: 5,
        seed: 4,
        ..WorldConfig::default()
    });
    let lm = Arc::new(adversarial_lm(&world, 2, 5, 1e-12, 4).unwrap());
    let keyed: Arc<Vec<(String, FactList)>> = Arc::new(world.corpus.iter().map(|i| (i.facts.linearize(), i.facts.clone())).collect());
    let server = lm.clone();
    let checksum = lm.vocabulary().checksum();
    let addr = spawn_loopback(Arc::new(move |req| match req {
        Request::NextLogprobs {
            prefix,
            facts_linearized,
            vocab_checksum,
        } if vocab_checksum == checksum => {
            let facts = &keyed.iter().find(|(k, _)| *k == facts_linearized).unwrap().1;
            Response::logprobs(server.next_logprobs(&prefix, facts).unwrap().values())
        }
        _ => Response::error("bad request"),
    }))
    .unwrap();
    let remote = RemoteLm::connect(addr, lm.vocabulary().clone()).unwrap();
    for inst in &world.corpus {
        let cfg = DecodeConfig::toy(Strategy::Beam);
        assert_eq!(
            decode(&inst.facts, &remote, None, &cfg).unwrap().tokens,
            decode(&inst.facts, lm.as_ref(), None, &cfg).unwrap().tokens
        );
    }
}

#[test]
fn fuzzed_requests_keep_the_connection_alive() {
    let addr = spawn_loopback(Arc::new(|req| match req {
        Request::NliScore { .. } => Response::Entail { entail_prob: 0.5 },
        _ => Response::error("unsupported op"),
    }))
    .unwrap();
    let stream = TcpStream::connect(addr).unwrap();
    stream.set_nodelay(true).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut writer = stream;
    let samples = [
        r#"{"op":"nli_score","premise":"p","hypothesis":"h"}"#,
        r#"{"op":"nli_score","premise":"p"}"#,
        r#"{"op":"warp_drive"}"#,
        "not json at all",
        r#"{"op":"next_logprobs","prefix":"x"}"#,
        r#"[1,2,3]"#,
        r#"{"op":"hvm_table","triples":[["a","b","c"]],"backward":"x","forward":"y"}"#,
        "{\"op\":\"nli_score\",\"premise\":\"\\u00e9\",\"hypothesis\":\"h\"}",
    ];
    for i in 0..1000 {
        let line = samples[i % samples.len()];
        writer.write_all(format!("{line}\n").as_bytes()).unwrap();
        let mut resp = String::new();
        reader.read_line(&mut resp).unwrap();
        let parsed: Response = serde_json::from_str(&resp).unwrap_or_else(|e| panic!("request {i}: {e}: {resp}"));
        let ok = matches!(parsed, Response::Entail { .. });
        assert_eq!(ok, i % samples.len() == 0 || i % samples.len() == 7, "request {i}: {resp}");
    }
}
