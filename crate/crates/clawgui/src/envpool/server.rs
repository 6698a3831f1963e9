//! Device server: exposes one simulated device over the JSON wire protocol
//! that [`super::RemoteBackend`] speaks.
//!
//! `POST /reset` (task) → observation, `POST /step` (action) → step outcome,
//! `GET /health`, `POST /faults` (plan or null).

use std::sync::Arc;

use clawgui_core::simdevice::{Action, AppRegistry, FaultPlan, TaskSpec};

use super::backend::{BackendError, EnvBackend, ErrorBody, Health, SimBackend};
use crate::http::{MockServer, Reply, Request};

fn error_reply(e: BackendError) -> Reply {
    let fault = match &e {
        BackendError::Faulted(k) => Some(*k),
        _ => None,
    };
    Reply::json(if fault.is_some() { 503 } else { 400 }, &ErrorBody { error: e.to_string(), fault })
}

fn bad_request(msg: impl ToString) -> Reply {
    Reply::json(400, &ErrorBody { error: msg.to_string(), fault: None })
}

pub fn serve_device(registry: Arc<AppRegistry>) -> std::io::Result<MockServer> {
    let mut dev = SimBackend::new(registry);
    MockServer::spawn(move |req: Request| match (req.method.as_str(), req.path.as_str()) {
        ("POST", "/reset") => match serde_json::from_str::<TaskSpec>(&req.body) {
            Ok(task) => dev.reset(&task).map_or_else(error_reply, |obs| Reply::ok(&obs)),
            Err(e) => bad_request(e),
        },
        ("POST", "/step") => match serde_json::from_str::<Action>(&req.body) {
            Ok(a) => dev.step(&a).map_or_else(error_reply, |r| Reply::ok(&r)),
            Err(e) => bad_request(e),
        },
        ("GET", "/health") => match dev.probe(std::time::Duration::ZERO) {
            Health::Healthy => Reply::ok(&serde_json::json!({"status": "ok"})),
            Health::Unhealthy(k) => Reply::json(503, &ErrorBody { error: "unhealthy".into(), fault: Some(k) }),
        },
        ("POST", "/faults") => match serde_json::from_str::<Option<FaultPlan>>(&req.body) {
            Ok(plan) => {
                dev.set_faults(plan);
                Reply::ok(&serde_json::json!({}))
            }
            Err(e) => bad_request(e),
        },
        _ => Reply::json(404, &ErrorBody { error: format!("no route {} {}", req.method, req.path), fault: None }),
    })
}
