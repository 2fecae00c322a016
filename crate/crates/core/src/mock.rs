//! In-process mock of an OpenAI-compatible `/chat/completions` endpoint, for
//! running the harvest stage offline.
//!
//! Replies are numbered step lists. If the user message contains `depth=N`,
//! the reply has `N` steps; otherwise the count is derived from a hash of the
//! message. A seeded fraction of requests can be answered with HTTP 500.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

pub type Responder = Arc<dyn Fn(&serde_json::Value) -> String + Send + Sync>;

#[derive(Clone)]
pub struct MockConfig {
    /// Probability of answering a request with HTTP 500.
    pub fail_rate: f64,
    pub seed: u64,
    /// Produces the assistant content from the request body.
    pub responder: Responder,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            fail_rate: 0.0,
            seed: 0,
            responder: Arc::new(default_reply),
        }
    }
}

/// Numbered reply whose length follows a `depth=N` hint in the last message.
pub fn default_reply(request: &serde_json::Value) -> String {
    let user = request["messages"]
        .as_array()
        .and_then(|m| m.last())
        .and_then(|m| m["content"].as_str())
        .unwrap_or("");
    let depth = user
        .split("depth=")
        .nth(1)
        .and_then(|rest| {
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            digits.parse::<usize>().ok()
        })
        .unwrap_or_else(|| {
            let h = Sha256::digest(user.as_bytes());
            1 + usize::from(h[0]) % 9
        });
    (1..=depth.max(1))
        .map(|i| format!("{i}. Work out part {i} of the problem."))
        .collect::<Vec<_>>()
        .join("\n")
}

struct Shared {
    config: MockConfig,
    rng: Mutex<ChaCha8Rng>,
    arrivals: Mutex<Vec<Instant>>,
    failures: AtomicUsize,
    stop: AtomicBool,
}

pub struct MockEndpoint {
    addr: SocketAddr,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl MockEndpoint {
    pub fn start(config: MockConfig) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0", config)
    }

    pub fn bind(addr: &str, config: MockConfig) -> std::io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(config.seed)),
            config,
            arrivals: Mutex::new(Vec::new()),
            failures: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        let accept = thread::spawn(move || {
            for stream in listener.incoming() {
                if s.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let s = Arc::clone(&s);
                thread::spawn(move || {
                    let _ = handle(stream, &s);
                });
            }
        });
        Ok(MockEndpoint {
            addr,
            shared,
            accept: Some(accept),
        })
    }

    /// Base URL to use as a teacher's `endpoint_url`.
    pub fn url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    /// Arrival time of every request received so far, in order.
    pub fn arrivals(&self) -> Vec<Instant> {
        self.shared.arrivals.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.arrivals.lock().unwrap().len()
    }

    pub fn injected_failures(&self) -> usize {
        self.shared.failures.load(Ordering::SeqCst)
    }

    /// Blocks serving requests until the process exits.
    pub fn wait(mut self) {
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // Wake the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

fn handle(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    let mut chunked = false;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((name, value)) = line.split_once(':') {
            let name = name.trim().to_ascii_lowercase();
            let value = value.trim();
            if name == "content-length" {
                content_length = value.parse().unwrap_or(0);
            } else if name == "transfer-encoding" && value.eq_ignore_ascii_case("chunked") {
                chunked = true;
            }
        }
    }
    let body = if chunked {
        read_chunked(&mut reader)?
    } else {
        let mut buf = vec![0; content_length];
        reader.read_exact(&mut buf)?;
        buf
    };
    shared.arrivals.lock().unwrap().push(Instant::now());

    let (status, payload) = if !request_line.contains("/chat/completions") {
        (404, json!({"error": "not found"}).to_string())
    } else if shared.rng.lock().unwrap().random::<f64>() < shared.config.fail_rate {
        shared.failures.fetch_add(1, Ordering::SeqCst);
        (500, json!({"error": "injected failure"}).to_string())
    } else {
        match serde_json::from_slice::<serde_json::Value>(&body) {
            Ok(req) => {
                let content = (shared.config.responder)(&req);
                (
                    200,
                    json!({
                        "id": "mock",
                        "object": "chat.completion",
                        "model": req["model"],
                        "choices": [{
                            "index": 0,
                            "message": {"role": "assistant", "content": content},
                            "finish_reason": "stop"
                        }]
                    })
                    .to_string(),
                )
            }
            Err(_) => (400, json!({"error": "bad json"}).to_string()),
        }
    };
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        _ => "Internal Server Error",
    };
    let mut out = stream;
    write!(
        out,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    out.flush()
}

fn read_chunked(reader: &mut impl BufRead) -> std::io::Result<Vec<u8>> {
    let mut body = Vec::new();
    loop {
        let mut size_line = String::new();
        reader.read_line(&mut size_line)?;
        let size = usize::from_str_radix(size_line.trim().split(';').next().unwrap_or("0"), 16)
            .unwrap_or(0);
        if size == 0 {
            let mut trailer = String::new();
            reader.read_line(&mut trailer)?;
            return Ok(body);
        }
        let start = body.len();
        body.resize(start + size, 0);
        reader.read_exact(&mut body[start..])?;
        let mut crlf = [0u8; 2];
        reader.read_exact(&mut crlf)?;
    }
}
