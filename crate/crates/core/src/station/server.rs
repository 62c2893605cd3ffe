//! HTTP ingestion endpoint and loopback self-test.
//!
//! `POST /ingest` takes one protocol line per body line and answers with one
//! ack per line. Request threads never touch the store directly: every
//! mutation goes through a single writer thread.

use std::net::SocketAddr;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tiny_http::{Method, Response, Server};

use super::ingest::{Ingestor, SELF_TEST_NODE};
use super::protocol::{Ack, IngestRecord, RecordBody};

pub const DEFAULT_PORT: u16 = 8080;
pub const SELF_TEST_TIMEOUT: Duration = Duration::from_millis(5000);
const WORKERS: usize = 4;

type Job = Box<dyn FnOnce(&mut Ingestor) + Send>;

/// Handle to the single writer that owns the [`Ingestor`].
#[derive(Clone)]
pub struct IngestQueue {
    tx: mpsc::Sender<Job>,
}

impl IngestQueue {
    pub fn spawn(ingestor: Ingestor) -> (Self, JoinHandle<Ingestor>) {
        let (tx, rx) = mpsc::channel::<Job>();
        let handle = thread::Builder::new()
            .name("ingest-writer".into())
            .spawn(move || {
                let mut ingestor = ingestor;
                for job in rx {
                    job(&mut ingestor);
                }
                ingestor
            })
            .expect("spawn writer thread");
        (Self { tx }, handle)
    }

    /// Runs `f` on the writer thread and waits for its result.
    pub fn with<R, F>(&self, f: F) -> Option<R>
    where
        F: FnOnce(&mut Ingestor) -> R + Send + 'static,
        R: Send + 'static,
    {
        let (rtx, rrx) = mpsc::channel();
        let job: Job = Box::new(move |ing| {
            let _ = rtx.send(f(ing));
        });
        self.tx.send(job).ok()?;
        rrx.recv().ok()
    }

    /// Ingests a batch of lines in order. `None` if the writer is gone or a
    /// store write failed.
    pub fn post(&self, lines: Vec<String>) -> Option<Vec<Ack>> {
        self.with(move |ing| {
            lines
                .iter()
                .map(|l| ing.handle_post(l))
                .collect::<Result<Vec<_>, _>>()
                .ok()
        })
        .flatten()
    }
}

pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
    queue: IngestQueue,
    writer: Option<JoinHandle<Ingestor>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn queue(&self) -> &IngestQueue {
        &self.queue
    }

    /// Blocks until the server is unblocked from another thread.
    pub fn wait(mut self) -> Ingestor {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        self.finish()
    }

    /// Stops accepting requests and returns the ingestor state.
    pub fn shutdown(mut self) -> Ingestor {
        self.server.unblock();
        for _ in 1..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
        self.finish()
    }

    fn finish(mut self) -> Ingestor {
        let writer = self.writer.take().expect("writer present");
        drop(self.queue);
        writer.join().expect("writer thread panicked")
    }
}

pub fn serve(bind: impl std::net::ToSocketAddrs, ingestor: Ingestor) -> std::io::Result<ServerHandle> {
    let server = Server::http(bind).map_err(std::io::Error::other)?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
    let server = Arc::new(server);
    let (queue, writer) = IngestQueue::spawn(ingestor);
    let workers = (0..WORKERS)
        .map(|i| {
            let server = Arc::clone(&server);
            let queue = queue.clone();
            thread::Builder::new()
                .name(format!("ingest-http-{i}"))
                .spawn(move || {
                    while let Ok(req) = server.recv() {
                        handle_request(req, &queue);
                    }
                })
                .expect("spawn http worker")
        })
        .collect();
    Ok(ServerHandle {
        addr,
        server,
        workers,
        queue,
        writer: Some(writer),
    })
}

fn handle_request(mut req: tiny_http::Request, queue: &IngestQueue) {
    if req.method() != &Method::Post || req.url() != "/ingest" {
        let _ = req.respond(Response::from_string("not found\n").with_status_code(404));
        return;
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        let _ = req.respond(Response::from_string("BAD_REQUEST\n").with_status_code(400));
        return;
    }
    let lines: Vec<String> = body.lines().filter(|l| !l.is_empty()).map(String::from).collect();
    let response = match queue.post(lines) {
        Some(acks) => {
            let mut text: String = acks.iter().map(|a| format!("{a}\n")).collect();
            if text.is_empty() {
                text = format!("{}\n", Ack::BadRequest);
            }
            Response::from_string(text)
        }
        None => Response::from_string("store failure\n").with_status_code(500),
    };
    let _ = req.respond(response);
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(String),
    #[error("bad response: {0}")]
    Response(String),
}

/// Posts protocol lines to an endpoint and returns the acks in order.
pub fn post_lines(addr: &str, lines: &[String], timeout: Duration) -> Result<Vec<Ack>, ClientError> {
    let agent = ureq::AgentBuilder::new().timeout(timeout).build();
    let mut body = lines.join("\n");
    body.push('\n');
    let resp = agent
        .post(&format!("http://{addr}/ingest"))
        .set("Content-Type", "text/plain")
        .send_string(&body)
        .map_err(|e| ClientError::Transport(e.to_string()))?;
    let text = resp
        .into_string()
        .map_err(|e| ClientError::Response(e.to_string()))?;
    text.lines()
        .map(|l| l.parse::<Ack>().map_err(|e| ClientError::Response(e.to_string())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfTest {
    Success,
    Failed,
}

impl std::fmt::Display for SelfTest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SelfTest::Success => "SUCCESS",
            SelfTest::Failed => "FAILED",
        })
    }
}

/// Sends a probe record to `addr` and reports whether it came back `OK`
/// within [`SELF_TEST_TIMEOUT`].
pub fn self_test(addr: &str) -> SelfTest {
    self_test_with_timeout(addr, SELF_TEST_TIMEOUT)
}

pub fn self_test_with_timeout(addr: &str, timeout: Duration) -> SelfTest {
    let probe = IngestRecord {
        node: SELF_TEST_NODE,
        seq: 0,
        t_ms: 0,
        body: RecordBody::Data {
            x: 0.0,
            y: 0.0,
            z: 1.0,
        },
    };
    match post_lines(addr, &[probe.to_line()], timeout) {
        Ok(acks) if acks == [Ack::Ok] => SelfTest::Success,
        _ => SelfTest::Failed,
    }
}
