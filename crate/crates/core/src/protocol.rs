//! Newline-delimited JSON wire protocol spoken with an external model bridge.
//!
//! Requests:
//!
//! ```text
//! {"op":"next_logprobs","prefix":[1,7,9],"facts_linearized":"<H> ...","vocab_checksum":"ab12..."}
//! {"op":"nli_score","premise":"...","hypothesis":"..."}
//! {"op":"hvm_table","triples":[["s","r","o"]],"backward":"...","forward":"..."}
//! ```
//!
//! Responses are `{"logprobs":[...]}`, `{"entail_prob":p}`, `{"table":[[p_b,p_f],...]}`
//! or `{"error":"..."}`. A `null` log-probability stands for negative infinity.
//!
//! [`spawn_loopback`] runs an in-process server over local models so the
//! client side can be exercised without any external runtime.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::FactTriple;
use crate::lm::TokenId;

/// Environment variable consulted for the bridge address.
pub const BRIDGE_ADDR_ENV: &str = "TWEAK_BRIDGE_ADDR";

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("transport failure: {0}")]
    Transport(#[from] io::Error),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("bridge error: {0}")]
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    NextLogprobs {
        prefix: Vec<TokenId>,
        facts_linearized: String,
        vocab_checksum: String,
    },
    NliScore {
        premise: String,
        hypothesis: String,
    },
    HvmTable {
        triples: Vec<FactTriple>,
        backward: String,
        forward: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Response {
    Error { error: String },
    Logprobs { logprobs: Vec<Option<f64>> },
    Entail { entail_prob: f64 },
    Table { table: Vec<[f64; 2]> },
}

impl Response {
    pub fn error(message: impl Into<String>) -> Self {
        Response::Error {
            error: message.into(),
        }
    }

    pub fn logprobs(values: &[f64]) -> Self {
        Response::Logprobs {
            logprobs: values
                .iter()
                .map(|v| if v.is_finite() { Some(*v) } else { None })
                .collect(),
        }
    }
}

struct Connection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

/// One connection to a bridge. Requests on a client are serialized; open
/// several clients for concurrency.
pub struct BridgeClient {
    conn: Mutex<Connection>,
    peer: SocketAddr,
}

impl BridgeClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, BridgeError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let peer = stream.peer_addr()?;
        Ok(Self {
            conn: Mutex::new(Connection {
                reader: BufReader::new(stream.try_clone()?),
                writer: stream,
            }),
            peer,
        })
    }

    pub fn peer(&self) -> SocketAddr {
        self.peer
    }

    /// Sends one request and waits for its response line. An `{"error":..}`
    /// reply becomes [`BridgeError::Remote`].
    pub fn call(&self, request: &Request) -> Result<Response, BridgeError> {
        let mut line = serde_json::to_string(request).expect("requests always serialize");
        line.push('\n');
        let mut conn = self.conn.lock().unwrap_or_else(|p| p.into_inner());
        conn.writer.write_all(line.as_bytes())?;
        conn.writer.flush()?;
        let mut reply = String::new();
        if conn.reader.read_line(&mut reply)? == 0 {
            return Err(BridgeError::Transport(io::Error::new(
                io::ErrorKind::UnexpectedEof,
                "bridge closed the connection",
            )));
        }
        drop(conn);
        let response: Response = serde_json::from_str(reply.trim_end())
            .map_err(|e| BridgeError::Protocol(format!("unparseable response: {e}")))?;
        match response {
            Response::Error { error } => Err(BridgeError::Remote(error)),
            other => Ok(other),
        }
    }
}

pub type Handler = dyn Fn(Request) -> Response + Send + Sync;

/// Parses one request line and dispatches it; malformed input becomes an
/// error response rather than a dropped connection.
pub fn handle_line(line: &str, handler: &Handler) -> Response {
    match serde_json::from_str::<Request>(line) {
        Ok(request) => handler(request),
        Err(e) => Response::error(format!("malformed request: {e}")),
    }
}

/// Serves the protocol on `127.0.0.1:0` in background threads, one per
/// connection. Returns the bound address.
pub fn spawn_loopback(handler: Arc<Handler>) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let handler = Arc::clone(&handler);
            thread::spawn(move || serve_connection(stream, &*handler));
        }
    });
    Ok(addr)
}

fn serve_connection(stream: TcpStream, handler: &Handler) {
    let _ = stream.set_nodelay(true);
    let Ok(read_half) = stream.try_clone() else { return };
    let mut writer = stream;
    for line in BufReader::new(read_half).lines() {
        let Ok(line) = line else { return };
        if line.trim().is_empty() {
            continue;
        }
        let response = handle_line(&line, handler);
        let mut out = serde_json::to_string(&response).expect("responses always serialize");
        out.push('\n');
        if writer.write_all(out.as_bytes()).is_err() {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_wire_format() {
        let req = Request::NliScore {
            premise: "p".into(),
            hypothesis: "h".into(),
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"op":"nli_score","premise":"p","hypothesis":"h"}"#
        );
        let parsed: Request = serde_json::from_str(
            r#"{"op":"hvm_table","triples":[["a","b","c"]],"backward":"x","forward":"y"}"#,
        )
        .unwrap();
        assert!(matches!(parsed, Request::HvmTable { .. }));
    }

    #[test]
    fn response_shapes() {
        let r: Response = serde_json::from_str(r#"{"logprobs":[-0.5,null]}"#).unwrap();
        assert_eq!(r, Response::Logprobs { logprobs: vec![Some(-0.5), None] });
        let r: Response = serde_json::from_str(r#"{"error":"nope"}"#).unwrap();
        assert_eq!(r, Response::error("nope"));
        let r: Response = serde_json::from_str(r#"{"table":[[0.5,0.25]]}"#).unwrap();
        assert_eq!(r, Response::Table { table: vec![[0.5, 0.25]] });
        assert_eq!(
            serde_json::to_string(&Response::logprobs(&[0.0, f64::NEG_INFINITY])).unwrap(),
            r#"{"logprobs":[0.0,null]}"#
        );
    }

    #[test]
    fn malformed_lines_get_error_responses() {
        let handler: &Handler = &|_| Response::Entail { entail_prob: 1.0 };
        assert!(matches!(handle_line("{not json", handler), Response::Error { .. }));
        assert!(matches!(handle_line(r#"{"op":"bogus"}"#, handler), Response::Error { .. }));
        assert!(matches!(
            handle_line(r#"{"op":"nli_score","premise":"a","hypothesis":"b"}"#, handler),
            Response::Entail { .. }
        ));
    }

    #[test]
    fn loopback_round_trip_keeps_connection_after_errors() {
        let addr = spawn_loopback(Arc::new(|req| match req {
            Request::NliScore { .. } => Response::Entail { entail_prob: 0.25 },
            _ => Response::error("unsupported"),
        }))
        .unwrap();
        let client = BridgeClient::connect(addr).unwrap();
        let nli = Request::NliScore {
            premise: "a".into(),
            hypothesis: "b".into(),
        };
        assert_eq!(client.call(&nli).unwrap(), Response::Entail { entail_prob: 0.25 });
        let bad = Request::HvmTable {
            triples: vec![],
            backward: String::new(),
            forward: String::new(),
        };
        assert!(matches!(client.call(&bad), Err(BridgeError::Remote(_))));
        assert_eq!(client.call(&nli).unwrap(), Response::Entail { entail_prob: 0.25 });
    }
}
