#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn fiha(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiha"))
        .args(args)
        .output()
        .expect("fiha binary runs")
}

/// A chat-completions stand-in on a loopback port. Every connection gets a
/// thread, so concurrent clients are served concurrently.
pub struct MockServer {
    pub base_url: String,
    pub requests: Arc<AtomicUsize>,
}

/// A plausible, deterministic model: existence questions get "Yes", other
/// yes-no questions "No", and wh-questions a short phrase.
pub fn canned_answer(prompt: &str) -> String {
    let q = prompt.to_lowercase();
    let answer = if q.starts_with("is there any") {
        "Yes, there is."
    } else if q.starts_with("is ") || q.starts_with("are ") {
        "No."
    } else if q.starts_with("what color") {
        "It is red."
    } else if q.starts_with("how many") {
        "two"
    } else if q.starts_with("where") {
        "on the street"
    } else if q.starts_with("who") {
        "a man"
    } else {
        "a table"
    };
    answer.to_string()
}

impl MockServer {
    pub fn start(answer: fn(&str) -> String) -> MockServer {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let base_url = format!("http://{}/v1", listener.local_addr().unwrap());
        let requests = Arc::new(AtomicUsize::new(0));
        let counter = requests.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming().flatten() {
                let counter = counter.clone();
                std::thread::spawn(move || {
                    if serve(stream, answer).is_ok() {
                        counter.fetch_add(1, Ordering::SeqCst);
                    }
                });
            }
        });
        MockServer { base_url, requests }
    }
}

fn serve(stream: TcpStream, answer: fn(&str) -> String) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((name, value)) = l.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let prompt = request["messages"][0]["content"][0]["text"].as_str().unwrap_or("");
    let reply = json!({
        "choices": [{"index": 0, "message": {"role": "assistant", "content": answer(prompt)}}]
    })
    .to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.len(),
        reply
    )?;
    stream.flush()
}
