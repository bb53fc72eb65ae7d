//! One-shot HTTP server for exercising the blocking clients in tests.
//!
//! Binds an ephemeral localhost port, answers a fixed number of requests
//! with scripted responses, then shuts down. No HTTP library: the clients
//! under test only need status line, content-length and a JSON body.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

pub struct ScriptedResponse {
    pub status: u16,
    pub body: String,
}

impl ScriptedResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        ScriptedResponse {
            status: 200,
            body: body.into(),
        }
    }

    pub fn error(status: u16, body: impl Into<String>) -> Self {
        ScriptedResponse {
            status,
            body: body.into(),
        }
    }
}

pub struct ServerHandle {
    pub url: String,
    requests: mpsc::Receiver<String>,
    join: thread::JoinHandle<()>,
}

impl ServerHandle {
    /// Raw request texts (headers and body) in arrival order. Call after
    /// the client finished; blocks until the server thread exits.
    pub fn finish(self) -> Vec<String> {
        self.join.join().expect("server thread panicked");
        self.requests.try_iter().collect()
    }
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Other",
    }
}

/// Serve `responses` in order, one per incoming request, then stop listening.
pub fn serve(responses: Vec<ScriptedResponse>) -> ServerHandle {
    let listener = TcpListener::bind("127.0.0.1:0").expect("bind test server");
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    let join = thread::spawn(move || {
        for resp in responses {
            let (mut stream, _) = listener.accept().expect("accept");
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut chunk).expect("read request");
                buf.extend_from_slice(&chunk[..n]);
                let text = String::from_utf8_lossy(&buf).into_owned();
                if let Some(split) = text.find("\r\n\r\n") {
                    let headers = &text[..split];
                    let have = buf.len() - (split + 4);
                    let want = headers
                        .lines()
                        .find_map(|l| {
                            let (name, value) = l.split_once(':')?;
                            name.eq_ignore_ascii_case("content-length")
                                .then(|| value.trim().parse::<usize>().ok())?
                        })
                        .unwrap_or(0);
                    if have >= want {
                        break text;
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            tx.send(request).ok();
            let payload = format!(
                "HTTP/1.1 {} {}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                resp.status,
                reason(resp.status),
                resp.body.len(),
                resp.body
            );
            stream.write_all(payload.as_bytes()).expect("write response");
        }
    });
    ServerHandle {
        url,
        requests: rx,
        join,
    }
}
