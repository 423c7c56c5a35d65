//! Newline-delimited JSON request loop.
//!
//! Each request is one line `{"op": <name>, "args": {...}}`; each reply is
//! one line `{"ok": true, "value": ...}` or `{"ok": false, "error": "..."}`.
//!
//! | op              | args                                    | value                          |
//! |-----------------|-----------------------------------------|--------------------------------|
//! | `create`        | an instance spec                        | instance id                    |
//! | `connect`       | `{"id"}`                                | handle number                  |
//! | `predict`       | `{"handle", "features"}`                | `{"invocation_id", "decision"}` |
//! | `assign_reward` | `{"handle", "invocation_id", "reward"}` | `null`                         |
//! | `refresh`       | `{"handle"}`                            | new model version              |
//! | `get_expr_tree` | `{"handle"}`                            | emitted code                   |

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use super::{Handle, InstanceSpec, Session};
use crate::error::{Error, Result};

/// Session plus the handles opened over the protocol.
#[derive(Debug)]
pub struct Server {
    pub session: Session,
    handles: Vec<Handle>,
}

impl Server {
    pub fn new(session: Session) -> Self {
        Self {
            session,
            handles: Vec::new(),
        }
    }

    fn handle(&mut self, n: usize) -> Result<&mut Handle> {
        self.handles
            .get_mut(n)
            .ok_or_else(|| Error::Session(format!("unknown handle {n}")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Request {
    op: String,
    #[serde(default)]
    args: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConnectArgs {
    id: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HandleArgs {
    handle: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictArgs {
    handle: usize,
    features: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RewardArgs {
    handle: usize,
    invocation_id: u64,
    reward: f64,
}

fn args<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidArgument(format!("bad args: {e}")))
}

fn dispatch(server: &mut Server, req: Request) -> Result<Value> {
    match req.op.as_str() {
        "create" => {
            let spec: InstanceSpec = args(req.args)?;
            Ok(json!(server.session.create(spec)?))
        }
        "connect" => {
            let a: ConnectArgs = args(req.args)?;
            let h = server.session.connect(a.id)?;
            server.handles.push(h);
            Ok(json!(server.handles.len() - 1))
        }
        "predict" => {
            let a: PredictArgs = args(req.args)?;
            let mut h = server.handle(a.handle)?.clone();
            let (id, decision) = server.session.predict(&mut h, &a.features)?;
            *server.handle(a.handle)? = h;
            Ok(json!({ "invocation_id": id, "decision": decision }))
        }
        "assign_reward" => {
            let a: RewardArgs = args(req.args)?;
            let h = server.handle(a.handle)?.clone();
            server
                .session
                .assign_reward(&h, a.invocation_id, a.reward)?;
            Ok(Value::Null)
        }
        "refresh" => {
            let a: HandleArgs = args(req.args)?;
            let mut h = server.handle(a.handle)?.clone();
            let v = server.session.refresh(&mut h)?;
            *server.handle(a.handle)? = h;
            Ok(json!(v))
        }
        "get_expr_tree" => {
            let a: HandleArgs = args(req.args)?;
            let h = server.handle(a.handle)?.clone();
            Ok(json!(server.session.get_expr_tree(&h)?))
        }
        other => Err(Error::InvalidArgument(format!("unknown op {other:?}"))),
    }
}

/// Answers one request line.
pub fn handle_request(server: &mut Server, line: &str) -> String {
    let reply = serde_json::from_str::<Request>(line)
        .map_err(|e| Error::Format(format!("bad request: {e}")))
        .and_then(|req| dispatch(server, req));
    let v = match reply {
        Ok(value) => json!({ "ok": true, "value": value }),
        Err(e) => json!({ "ok": false, "error": e.to_string() }),
    };
    v.to_string()
}

/// Serves requests from `input` until end of input; blank lines are skipped.
pub fn serve(server: &mut Server, input: impl BufRead, mut output: impl Write) -> Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(output, "{}", handle_request(server, &line))?;
        output.flush()?;
    }
    Ok(())
}
