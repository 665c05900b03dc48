//! A throwaway HTTP/1.1 server for exercising the model clients.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

pub enum Reply {
    Json(u16, String),
    /// Close the connection without answering.
    Hangup,
    Delay(Duration, Box<Reply>),
}

pub struct FakeServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl FakeServer {
    /// Serves each request with `handler(request_number, body)`, numbering from 0.
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &str) -> Reply + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        let handler = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let n = counter.fetch_add(1, Ordering::SeqCst);
                let handler = handler.clone();
                thread::spawn(move || serve(stream, n, &*handler));
            }
        });
        Self { url, hits }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

fn serve(stream: TcpStream, n: usize, handler: &(dyn Fn(usize, &str) -> Reply + Send + Sync)) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let mut reply = handler(n, &String::from_utf8_lossy(&body));
    let mut stream = stream;
    loop {
        match reply {
            Reply::Delay(d, next) => {
                thread::sleep(d);
                reply = *next;
            }
            Reply::Hangup => return,
            Reply::Json(status, text) => {
                let head = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n",
                    text.len()
                );
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(text.as_bytes());
                let _ = stream.flush();
                return;
            }
        }
    }
}

/// An OpenAI-style embeddings response with `dim`-dimensional vectors, one
/// per input.
pub fn embeddings_reply(body: &str, dim: usize) -> Reply {
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    let n = v["input"].as_array().map_or(0, Vec::len);
    let data: Vec<serde_json::Value> = (0..n)
        .rev()
        .map(|i| serde_json::json!({"index": i, "embedding": (0..dim).map(|d| ((i + d) % 3) as f64).collect::<Vec<_>>()}))
        .collect();
    Reply::Json(200, serde_json::json!({"data": data}).to_string())
}

pub fn chat_reply(text: &str) -> Reply {
    Reply::Json(
        200,
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 4}
        })
        .to_string(),
    )
}
