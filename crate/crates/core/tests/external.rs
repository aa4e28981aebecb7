use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use latentqa::external::{external_generate, ServiceClient, ServiceConfig};
use latentqa::Error;
use serde_json::Value;

/// Serves `requests` connections; `reply` maps the JSON request body to
/// (status, response body, delay before answering).
fn mock<F>(requests: usize, reply: F) -> String
where
    F: Fn(&Value) -> (u16, String, Duration) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for stream in listener.incoming().take(requests) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let (status, text, delay) = reply(&serde_json::from_slice(&body).unwrap());
            thread::sleep(delay);
            let resp = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    format!("http://{addr}/generate")
}

fn echo(req: &Value) -> (u16, String, Duration) {
    let body = serde_json::json!({ "text": req["prompt"], "token_logprobs": [-0.5, -0.25] });
    (200, body.to_string(), Duration::ZERO)
}

#[test]
fn echo_server_round_trips_text_and_logprobs() {
    let url = mock(1, echo);
    let g = external_generate(&url, "March 19, 2017", Duration::from_secs(5)).unwrap();
    assert_eq!(g.tokens(), ["march", "19", ",", "2017"]);
    assert_eq!(g.token_logprobs, Some(vec![-0.5, -0.25]));
    assert!(g.is_scored());
}

#[test]
fn request_carries_max_tokens() {
    let url = mock(1, |req| {
        let text = format!("{{\"text\": \"{}\"}}", req["max_tokens"]);
        (200, text, Duration::ZERO)
    });
    let client = ServiceClient::new(ServiceConfig {
        endpoint: url,
        max_tokens: 7,
        ..ServiceConfig::default()
    })
    .unwrap();
    let g = client.generate("x").unwrap();
    assert_eq!(g.text, "7");
    assert!(!g.is_scored());
}

#[test]
fn server_error_carries_the_status() {
    let url = mock(1, |_| (500, "boom".into(), Duration::ZERO));
    match external_generate(&url, "q", Duration::from_secs(5)) {
        Err(Error::ServiceStatus { status, body }) => {
            assert_eq!(status, 500);
            assert_eq!(body, "boom");
        }
        other => panic!("expected a status error, got {other:?}"),
    }
}

#[test]
fn slow_server_times_out() {
    let url = mock(1, |_| (200, "{\"text\": \"late\"}".into(), Duration::from_millis(1500)));
    let err = external_generate(&url, "q", Duration::from_millis(200)).unwrap_err();
    assert!(matches!(err, Error::ServiceTimeout), "{err:?}");
}

#[test]
fn malformed_body_is_a_typed_error() {
    let url = mock(1, |_| (200, "{\"txt\": 1}".into(), Duration::ZERO));
    assert!(matches!(
        external_generate(&url, "q", Duration::from_secs(5)),
        Err(Error::ServiceBody(_))
    ));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = external_generate(&format!("http://127.0.0.1:{port}/"), "q", Duration::from_secs(2)).unwrap_err();
    assert!(matches!(err, Error::ServiceTransport(_) | Error::ServiceTimeout), "{err:?}");
}

#[test]
fn batch_generation_keeps_prompt_order() {
    let url = mock(5, echo);
    let client = ServiceClient::new(ServiceConfig {
        endpoint: url,
        max_concurrency: 2,
        ..ServiceConfig::default()
    })
    .unwrap();
    let prompts: Vec<String> = (0..5).map(|i| format!("p{i}")).collect();
    let texts: Vec<String> = client.generate_all(&prompts).into_iter().map(|r| r.unwrap().text).collect();
    assert_eq!(texts, prompts);
}

#[test]
fn bad_client_configs_are_rejected() {
    assert!(ServiceClient::new(ServiceConfig::default()).is_err());
    let zero = ServiceConfig {
        endpoint: "http://127.0.0.1:1/".into(),
        max_concurrency: 0,
        ..ServiceConfig::default()
    };
    assert!(ServiceClient::new(zero).is_err());
}
