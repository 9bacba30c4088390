//! Chat-completion client against a local scripted HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use protolab::experiment::{run_semevo, SemevoOptions};
use protolab::semantic_evolution::{
    build_prompt, cache_key, ChatBackend, ClassSemantics, HttpBackend, LlmConfig, NameTemplate,
    ParaphraseCache, Paraphraser,
};
use protolab::Error;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Recorded {
    request_line: String,
    headers: Vec<(String, String)>,
    body: Value,
}

impl Recorded {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves `script` one response per connection, then keeps answering 500.
struct MockServer {
    url: String,
    log: Arc<Mutex<Vec<Recorded>>>,
}

fn completion(text: &str) -> (u16, String) {
    (200, json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string())
}

impl MockServer {
    fn start(script: Vec<(u16, String)>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&log);
        thread::spawn(move || {
            let mut script = script.into_iter();
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                    continue;
                }
                let mut headers = vec![];
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let (k, v) = line.split_once(':').unwrap();
                    headers.push((k.trim().to_owned(), v.trim().to_owned()));
                }
                let len: usize = headers
                    .iter()
                    .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                    .map_or(0, |(_, v)| v.parse().unwrap());
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                sink.lock().unwrap().push(Recorded {
                    request_line: request_line.trim_end().to_owned(),
                    headers,
                    body: serde_json::from_slice(&body).unwrap_or(Value::Null),
                });
                let (status, body) = script
                    .next()
                    .unwrap_or((500, "{\"error\":\"script exhausted\"}".into()));
                let response = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        Self { url, log }
    }

    fn requests(&self) -> Vec<Recorded> {
        self.log.lock().unwrap().clone()
    }
}

fn config(url: &str) -> LlmConfig {
    LlmConfig {
        endpoint_url: url.into(),
        model_name: "test-model".into(),
        timeout_seconds: 5.0,
        backoff_base_seconds: 0.5,
        ..LlmConfig::default()
    }
}

fn entry() -> ClassSemantics {
    ClassSemantics {
        class_id: 3,
        class_name: "house finch".into(),
        definition: "a small North American finch".into(),
        paraphrase: None,
        name_template: NameTemplate::default(),
    }
}

#[test]
fn request_and_response_wire_format() {
    let server = MockServer::start(vec![completion("An expanded definition.")]);
    let cfg = config(&server.url);
    let backend = HttpBackend::new(&cfg, "secret-token").unwrap();
    let answer = backend.complete(&cfg.request("the prompt")).unwrap();
    assert_eq!(answer, "An expanded definition.");

    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    let r = &requests[0];
    assert!(r.request_line.starts_with("POST /v1/chat/completions "), "{}", r.request_line);
    assert_eq!(r.header("authorization"), Some("Bearer secret-token"));
    assert!(r.header("content-type").unwrap().starts_with("application/json"));
    assert_eq!(
        r.body,
        json!({
            "model": "test-model",
            "messages": [{"role": "user", "content": "the prompt"}],
            "temperature": 0.0
        })
    );
}

#[test]
fn retries_then_caches() {
    let server = MockServer::start(vec![
        (503, "{}".into()),
        (503, "{}".into()),
        completion("First paragraph.\n\nSecond paragraph."),
    ]);
    let cfg = config(&server.url);
    let backend = HttpBackend::new(&cfg, "k").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cache = ParaphraseCache::open(dir.path()).unwrap();
    let slept = Arc::new(Mutex::new(vec![]));
    let sink = Arc::clone(&slept);
    let para = Paraphraser::new(cfg.clone(), &backend, cache.clone())
        .with_sleeper(move |d| sink.lock().unwrap().push(d));

    let out = para.paraphrase(&entry()).unwrap();
    assert_eq!(out.paraphrase.as_deref(), Some("First paragraph. Second paragraph."));
    assert_eq!(server.requests().len(), 3);
    assert_eq!(
        *slept.lock().unwrap(),
        vec![Duration::from_millis(500), Duration::from_millis(1000)]
    );
    let prompt = build_prompt("house finch", "a small North American finch").unwrap();
    let key = cache_key(&prompt, "test-model");
    assert_eq!(
        cache.get(&key).unwrap().as_deref(),
        Some("First paragraph. Second paragraph.")
    );
    let bodies: Vec<Value> = server.requests().into_iter().map(|r| r.body).collect();
    assert!(bodies.iter().all(|b| b["messages"][0]["content"] == prompt.as_str()));

    // a second pass is served from disk
    let again = para.paraphrase(&entry()).unwrap();
    assert_eq!(again, out);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn gives_up_after_max_retries() {
    let server = MockServer::start(vec![]);
    let cfg = LlmConfig {
        max_retries: 2,
        ..config(&server.url)
    };
    let backend = HttpBackend::new(&cfg, "k").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let para = Paraphraser::new(cfg, &backend, ParaphraseCache::open(dir.path()).unwrap())
        .with_sleeper(|_| {});
    match para.paraphrase(&entry()) {
        Err(Error::LlmUnavailable { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn malformed_body_is_not_retried() {
    let server = MockServer::start(vec![(200, "{\"choices\": []}".into())]);
    let cfg = config(&server.url);
    let backend = HttpBackend::new(&cfg, "k").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let para = Paraphraser::new(cfg, &backend, ParaphraseCache::open(dir.path()).unwrap())
        .with_sleeper(|_| {});
    assert!(matches!(para.paraphrase(&entry()), Err(Error::LlmResponse(_))));
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn offline_run_with_warm_cache_makes_no_calls() {
    let server = MockServer::start(vec![completion("Finch, expanded."), completion("Wren, expanded.")]);
    let dir = tempfile::tempdir().unwrap();
    let definitions = dir.path().join("definitions.json");
    std::fs::write(
        &definitions,
        json!({
            "0": {"name": "house finch", "definition": "a small finch"},
            "1": {"name": "winter wren", "definition": "a small brown wren"}
        })
        .to_string(),
    )
    .unwrap();
    let cfg = LlmConfig {
        api_key_env_var: "PROTOLAB_TEST_LLM_KEY".into(),
        ..config(&server.url)
    };
    std::env::set_var("PROTOLAB_TEST_LLM_KEY", "k");
    let options = SemevoOptions {
        definitions: definitions.clone(),
        classes: None,
        out: dir.path().join("corpus_online.json"),
        cache_dir: dir.path().join("cache"),
        template: NameTemplate::default(),
        offline: false,
    };
    let online = run_semevo(&cfg, &options).unwrap();
    assert_eq!(server.requests().len(), 2);

    let offline = SemevoOptions {
        out: dir.path().join("corpus_offline.json"),
        offline: true,
        ..options
    };
    let replay = run_semevo(&cfg, &offline).unwrap();
    assert_eq!(replay, online);
    assert_eq!(server.requests().len(), 2);

    let cold = SemevoOptions {
        cache_dir: dir.path().join("empty_cache"),
        ..offline
    };
    assert!(matches!(
        run_semevo(&cfg, &cold),
        Err(Error::OfflineCacheMiss { class_id: 0 })
    ));
    assert_eq!(server.requests().len(), 2);
}
