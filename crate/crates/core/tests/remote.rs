use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use hypospace_core::harness::remote::send_chat_with_key;
use hypospace_core::harness::{send_chat, RemoteConfig, RetryPolicy};
use hypospace_core::Error;

/// Serves the scripted (status, body) replies, one connection each, and
/// returns the endpoint URL.
fn serve(script: Vec<(u16, &'static str)>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/chat", listener.local_addr().unwrap());
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((mut sock, _)) = listener.accept() else {
                return;
            };
            let mut reader = BufReader::new(sock.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
            }
            let mut payload = vec![0; length];
            reader.read_exact(&mut payload).unwrap();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            sock.write_all(reply.as_bytes()).unwrap();
        }
    });
    url
}

fn config(endpoint: String, max_attempts: u32) -> RemoteConfig {
    RemoteConfig {
        endpoint,
        model: "m".into(),
        timeout_secs: 5,
        retry: RetryPolicy {
            max_attempts,
            initial_backoff_ms: 1,
            max_backoff_ms: 4,
        },
        ..Default::default()
    }
}

const CANNED: &str = r#"{"choices":[{"message":{"content":"EDGES: A>B"}}],"usage":{"prompt_tokens":3,"completion_tokens":2}}"#;

#[test]
fn retries_then_succeeds() {
    let url = serve(vec![(429, "{}"), (503, "{}"), (200, CANNED)]);
    let reply = send_chat_with_key(&config(url, 4), "hi", "k").unwrap();
    assert_eq!(reply.text, "EDGES: A>B");
    assert_eq!(reply.retries, 2);
    assert_eq!(reply.usage.unwrap().total(), Some(5));
}

#[test]
fn exhausted_retries_are_transport_errors() {
    let url = serve(vec![(500, "{}"), (500, "{}")]);
    match send_chat_with_key(&config(url, 2), "hi", "k") {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected transport error, got {other:?}"),
    }
}

#[test]
fn missing_key_fails_before_any_request() {
    let mut c = config("http://127.0.0.1:9/never".into(), 1);
    c.api_key_env = "HYPOSPACE_TEST_KEY_THAT_IS_NEVER_SET".into();
    assert!(matches!(send_chat(&c, "hi"), Err(Error::Config(_))));
}
