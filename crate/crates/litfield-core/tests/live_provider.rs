//! Live-provider behavior against a local mock HTTP server: pagination,
//! 429 backoff-and-retry, and the retry cap.

use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use litfield_core::corpus::{fetch_batch, LiveProvider, Provider, ProviderConfig, Query};

/// Serve each scripted response once, in order, then close.
fn mock_server(responses: Vec<String>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let hits_clone = hits.clone();
    let handle = std::thread::spawn(move || {
        for response in responses {
            let (mut stream, _) = match listener.accept() {
                Ok(pair) => pair,
                Err(_) => return,
            };
            hits_clone.fetch_add(1, Ordering::SeqCst);
            let mut buf = [0u8; 4096];
            let _ = stream.read(&mut buf);
            let _ = stream.write_all(response.as_bytes());
        }
    });
    (format!("http://{addr}"), hits, handle)
}

fn http_ok(body: &str) -> String {
    format!(
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
}

fn http_429() -> String {
    "HTTP/1.1 429 Too Many Requests\r\nContent-Length: 0\r\nConnection: close\r\n\r\n".to_string()
}

fn provider_config(base_url: String, retry_cap: u32) -> ProviderConfig {
    ProviderConfig {
        base_url,
        api_key: Some("test-key".into()),
        requests_per_second: 500.0,
        retry_cap,
        backoff: Duration::from_millis(2),
    }
}

#[test]
fn paginates_search_until_next_is_absent() {
    let page1 = serde_json::json!({
        "data": [{"paperId": "a"}, {"paperId": "b"}],
        "next": 2,
    });
    let page2 = serde_json::json!({
        "data": [{"paperId": "c"}],
    });
    let (base, hits, handle) =
        mock_server(vec![http_ok(&page1.to_string()), http_ok(&page2.to_string())]);
    let provider = LiveProvider::new(provider_config(base, 2)).unwrap();
    let payloads = fetch_batch(&provider, &Query::Search("q".into()), 2).unwrap();
    assert_eq!(payloads.len(), 3);
    assert!(payloads[0].contains("\"a\""));
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    handle.join().unwrap();
}

#[test]
fn retries_through_429_with_backoff() {
    let body = serde_json::json!({"data": [{"paperId": "a"}]}).to_string();
    let (base, hits, handle) =
        mock_server(vec![http_429(), http_429(), http_ok(&body)]);
    let provider = LiveProvider::new(provider_config(base, 5)).unwrap();
    let payloads = fetch_batch(&provider, &Query::All, 10).unwrap();
    assert_eq!(payloads.len(), 1);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    handle.join().unwrap();
}

#[test]
fn gives_up_after_retry_cap() {
    let responses = vec![http_429(); 4];
    let (base, hits, handle) = mock_server(responses);
    let provider = LiveProvider::new(provider_config(base, 2)).unwrap();
    let outcome = fetch_batch(&provider, &Query::All, 10);
    assert!(outcome.is_err(), "expected rate-limit failure, got {outcome:?}");
    // First attempt plus two retries.
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    drop(handle);
}

#[test]
fn fetches_ids_one_request_each() {
    let a = serde_json::json!({"paperId": "a", "abstract": "x"}).to_string();
    let b = serde_json::json!({"paperId": "b", "abstract": "y"}).to_string();
    let (base, hits, handle) = mock_server(vec![http_ok(&a), http_ok(&b)]);
    let provider = LiveProvider::new(provider_config(base, 2)).unwrap();
    let payloads = fetch_batch(
        &provider,
        &Query::Ids(vec!["a".into(), "b".into()]),
        1,
    )
    .unwrap();
    assert_eq!(payloads.len(), 2);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
    assert_eq!(provider.id(), "live");
    handle.join().unwrap();
}
