//! HTTP providers against an in-process server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use tarag_core::providers::{
    embed_texts, ChatMessage, DecodingParams, EmbeddingProvider, LlmProvider, ProviderError, RemoteEmbedder,
    RemoteLlm, RetryPolicy,
};

type Handler = dyn Fn(usize, &Value) -> (u16, String) + Send + Sync;

struct MockServer {
    url: String,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<Value>>>,
    auth: Arc<Mutex<Vec<Option<String>>>>,
}

/// Serves every request with `handler(request_number, json_body)`.
fn serve(handler: impl Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static) -> MockServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let bodies = Arc::new(Mutex::new(Vec::new()));
    let auth = Arc::new(Mutex::new(Vec::new()));
    let handler: Arc<Handler> = Arc::new(handler);
    let (h, b, a) = (hits.clone(), bodies.clone(), auth.clone());
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let (h, b, a, handler) = (h.clone(), b.clone(), a.clone(), handler.clone());
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                let mut bearer = None;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        bearer = Some(line["authorization:".len()..].trim().to_string());
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).unwrap();
                let body: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                let n = h.fetch_add(1, Ordering::SeqCst);
                b.lock().unwrap().push(body.clone());
                a.lock().unwrap().push(bearer);
                let (status, text) = handler(n, &body);
                let resp = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(resp.as_bytes());
            });
        }
    });
    MockServer { url, hits, bodies, auth }
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        attempts: 3,
        initial_backoff_ms: 1,
        multiplier: 2.0,
    }
}

/// One-hot-ish vector whose first component is the text's numeric suffix.
fn embed_reply(body: &Value, reverse: bool) -> String {
    let inputs = body["input"].as_array().unwrap();
    let mut data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let n: f32 = t.as_str().unwrap().trim_start_matches("text").parse().unwrap();
            json!({"index": i, "embedding": [n + 1.0, 1.0, 0.0]})
        })
        .collect();
    if reverse {
        data.reverse();
    }
    json!({ "data": data }).to_string()
}

fn texts(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("text{i}")).collect()
}

#[test]
fn batches_preserve_input_order() {
    let server = serve(|n, body| (200, embed_reply(body, n % 2 == 0)));
    let e = RemoteEmbedder::new(&server.url, "m", 3, 4, None, fast_retry(), 4).unwrap();
    let out = e.embed_batch(&texts(19)).unwrap();
    assert_eq!(out.len(), 19);
    for (i, v) in out.iter().enumerate() {
        assert_eq!(v[0], i as f32 + 1.0);
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 5);
    let sizes: Vec<usize> = server
        .bodies
        .lock()
        .unwrap()
        .iter()
        .map(|b| b["input"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes.iter().sum::<usize>(), 19);
    assert!(sizes.iter().all(|s| *s <= 4));
    assert!(server.bodies.lock().unwrap().iter().all(|b| b["model"] == "m"));
}

#[test]
fn transient_errors_are_retried() {
    let server = serve(|n, body| if n < 2 { (503, "busy".into()) } else { (200, embed_reply(body, false)) });
    let e = RemoteEmbedder::new(&server.url, "m", 3, 8, Some("sekrit".into()), fast_retry(), 1).unwrap();
    let out = embed_texts(&e, &texts(2)).unwrap();
    assert_eq!(out.len(), 2);
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    assert!(server.auth.lock().unwrap().iter().all(|a| a.as_deref() == Some("Bearer sekrit")));
}

#[test]
fn exhausted_retries_report_unavailable() {
    let server = serve(|_, _| (429, "slow down".into()));
    let e = RemoteEmbedder::new(&server.url, "m", 3, 8, None, fast_retry(), 1).unwrap();
    match e.embed_batch(&texts(1)) {
        Err(ProviderError::Unavailable { attempts: 3, .. }) => {}
        other => panic!("expected Unavailable, got {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn oversized_batch_is_not_retried() {
    let server = serve(|_, _| (413, "too big".into()));
    let e = RemoteEmbedder::new(&server.url, "m", 3, 8, None, fast_retry(), 1).unwrap();
    assert!(matches!(
        e.embed_batch(&texts(5)),
        Err(ProviderError::BatchTooLarge { size: 5 })
    ));
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn malformed_and_short_replies_are_errors() {
    let server = serve(|n, body| match n {
        0 => (200, "{\"data\": 5}".into()),
        _ => {
            let mut v: Value = serde_json::from_str(&embed_reply(body, false)).unwrap();
            v["data"].as_array_mut().unwrap().pop();
            (200, v.to_string())
        }
    });
    let e = RemoteEmbedder::new(&server.url, "m", 3, 8, None, fast_retry(), 1).unwrap();
    assert!(matches!(e.embed_batch(&texts(2)), Err(ProviderError::InvalidResponse(_))));
    assert!(matches!(
        e.embed_batch(&texts(2)),
        Err(ProviderError::CountMismatch { expected: 2, got: 1 })
    ));
}

#[test]
fn wrong_dimension_is_rejected_by_normalization() {
    let server = serve(|_, body| (200, embed_reply(body, false)));
    let e = RemoteEmbedder::new(&server.url, "m", 5, 8, None, fast_retry(), 1).unwrap();
    assert!(matches!(
        embed_texts(&e, &texts(1)),
        Err(ProviderError::DimensionMismatch { expected: 5, got: 3 })
    ));
}

#[test]
fn chat_completion_round_trip() {
    let server = serve(|_, body| {
        let last = body["messages"].as_array().unwrap().last().unwrap()["content"].as_str().unwrap().to_string();
        (200, json!({"choices": [{"message": {"role": "assistant", "content": format!("echo: {last}")}}]}).to_string())
    });
    let llm = RemoteLlm::new(&server.url, "chat-m", None, fast_retry(), 2).unwrap();
    let params = DecodingParams {
        temperature: 0.0,
        max_tokens: 7,
    };
    let reply = llm
        .complete(&[ChatMessage::system("be brief"), ChatMessage::user("hello")], &params)
        .unwrap();
    assert_eq!(reply, "echo: hello");
    let body = server.bodies.lock().unwrap()[0].clone();
    assert_eq!(body["model"], "chat-m");
    assert_eq!(body["max_tokens"], 7);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(llm.id(), "remote:chat-m");
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let llm = RemoteLlm::new(format!("http://127.0.0.1:{port}/"), "m", None, fast_retry(), 1).unwrap();
    assert!(matches!(
        llm.complete(&[ChatMessage::user("x")], &DecodingParams::default()),
        Err(ProviderError::Unavailable { .. })
    ));
}
