//! Minimal HTTP responder for planner endpoint tests.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use edgeai_core::agent::{Planner, PlannerContext, ScriptedPlanner};
use serde_json::{json, Value};

pub type Handler = dyn Fn(usize, &str) -> (u16, String) + Send + Sync;

pub struct Stub {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

/// Serve `handler(request_index, body)` on a loopback port until the process exits.
pub fn serve(handler: Arc<Handler>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/plan", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0u8; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, reply) = handler(n, &String::from_utf8_lossy(&body));
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    Stub { url, hits }
}

/// Reply the way a chat-completions endpoint would, with the scripted
/// planner's decision for the context in the request.
pub fn scripted_reply(body: &str) -> (u16, String) {
    let req: Value = serde_json::from_str(body).unwrap();
    let ctx: PlannerContext = serde_json::from_str(req["messages"][1]["content"].as_str().unwrap()).unwrap();
    let d = ScriptedPlanner.decide(&ctx).unwrap();
    let calls: Vec<Value> = d
        .tool_calls
        .iter()
        .map(|c| json!({"type": "function", "function": {"name": c.tool, "arguments": c.arguments.to_string()}}))
        .collect();
    let reply = json!({"choices": [{"message": {"role": "assistant", "content": d.text, "tool_calls": calls}}]});
    (200, reply.to_string())
}
