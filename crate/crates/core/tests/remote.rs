//! Remote clients against a throwaway local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use promoguard::gateway::{Completer, EndpointKind, ModelEndpoint};
use promoguard::gateway::{RemoteChat, RetryPolicy};
use promoguard::retrieval::embedding::{EmbeddingProvider, RemoteEmbeddings};
use serde_json::{json, Value};

struct Request {
    path: String,
    auth: Option<String>,
    body: Value,
}

fn read_request(stream: &mut TcpStream) -> Request {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    let path = line.split_whitespace().nth(1).unwrap().to_string();
    let mut len = 0;
    let mut auth = None;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        let (k, v) = h.split_once(':').unwrap();
        match k.to_ascii_lowercase().as_str() {
            "content-length" => len = v.trim().parse().unwrap(),
            "authorization" => auth = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    Request {
        path,
        auth,
        body: serde_json::from_slice(&body).unwrap(),
    }
}

/// Serves one scripted `(status, body)` reply per connection and records
/// every request.
fn serve(replies: Vec<(u16, Value)>) -> (String, Arc<Mutex<Vec<Request>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let req = read_request(&mut stream);
            log.lock().unwrap().push(req);
            let body = body.to_string();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

fn endpoint(url: &str, retries: u32, key_env: Option<&str>) -> ModelEndpoint {
    let mut e = ModelEndpoint::new(
        "remote",
        EndpointKind::Remote {
            base_url: format!("{url}/v1/"),
            model: "m-1".into(),
            api_key_env: key_env.map(str::to_string),
        },
    );
    e.max_retries = retries;
    e.timeout_secs = 5;
    e
}

#[test]
fn chat_request_shape_and_reply() {
    let (url, seen) = serve(vec![(
        200,
        json!({"choices": [{"message": {"role": "assistant", "content": "illicit"}}]}),
    )]);
    std::env::set_var("PROMOGUARD_TEST_KEY", "sekret");
    let chat = RemoteChat::from_endpoint(&endpoint(&url, 0, Some("PROMOGUARD_TEST_KEY"))).unwrap();
    assert_eq!(chat.complete("classify this").unwrap(), "illicit");
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sekret"));
    assert_eq!(seen[0].body["model"], "m-1");
    assert_eq!(seen[0].body["messages"][0]["content"], "classify this");
    assert_eq!(seen[0].body["temperature"], 0.0);
}

#[test]
fn server_errors_are_retried() {
    let (url, seen) = serve(vec![
        (503, json!({"error": "busy"})),
        (
            200,
            json!({"choices": [{"message": {"content": "benign"}}]}),
        ),
    ]);
    let chat = RemoteChat::from_endpoint(&endpoint(&url, 2, None)).unwrap();
    assert_eq!(chat.complete("q").unwrap(), "benign");
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn client_errors_fail_without_retry() {
    let (url, seen) = serve(vec![(400, json!({"error": "bad"}))]);
    let chat = RemoteChat::from_endpoint(&endpoint(&url, 3, None)).unwrap();
    let err = chat.complete("q").unwrap_err();
    assert!(err.0.contains("400"), "{}", err.0);
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn embeddings_are_reordered_by_index() {
    let (url, seen) = serve(vec![(
        200,
        json!({"data": [
            {"index": 1, "embedding": [0.0, 1.0]},
            {"index": 0, "embedding": [1.0, 0.0]}
        ]}),
    )]);
    let emb = RemoteEmbeddings::new(format!("{url}/v1"), "e-1", None).with_retry(RetryPolicy {
        max_retries: 0,
        ..RetryPolicy::default()
    });
    let out = emb.embed_batch(&["a", "b"]).unwrap();
    assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/embeddings");
    assert_eq!(seen[0].body["input"], json!(["a", "b"]));
}
