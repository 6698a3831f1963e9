//! Minimal in-process HTTP server used for the mock endpoints. Requests are
//! served one at a time on a background thread.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn json(status: u16, value: &impl serde::Serialize) -> Self {
        Self { status, body: serde_json::to_string(value).expect("serializable reply") }
    }

    pub fn ok(value: &impl serde::Serialize) -> Self {
        Self::json(200, value)
    }
}

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn spawn(handler: impl FnMut(Request) -> Reply + Send + 'static) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0").map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let mut handler = handler;
        let thread = std::thread::spawn(move || {
            while !flag.load(Ordering::Relaxed) {
                let Ok(Some(mut req)) = server.recv_timeout(Duration::from_millis(20)) else { continue };
                let mut body = String::new();
                let _ = req.as_reader().read_to_string(&mut body);
                let reply = handler(Request { method: req.method().to_string(), path: req.url().to_string(), body });
                let header = tiny_http::Header::from_bytes("content-type", "application/json").expect("static header");
                let resp = tiny_http::Response::from_string(reply.body).with_status_code(reply.status).with_header(header);
                let _ = req.respond(resp);
            }
        });
        Ok(Self { addr, stop, thread: Some(thread) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
