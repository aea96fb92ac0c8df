//! Serves the gym over HTTP on a local port and plays one episode against
//! it with plain HTTP/1.1 requests.

use std::io::{Read, Write};
use std::net::TcpStream;
use std::sync::Arc;

use configym::server::{router, AppState};
use configym::synth::{gen_grpo_task, GrpoSpec};

fn request(addr: std::net::SocketAddr, method: &str, path: &str, body: &str) -> String {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).unwrap();
    out.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or(out)
}

#[tokio::main]
async fn main() {
    let state = AppState::new(vec![gen_grpo_task(&GrpoSpec::default()).unwrap()]);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(Arc::new(state))).await.unwrap() });
    println!("serving on http://{addr}");

    tokio::task::spawn_blocking(move || {
        println!("{}", request(addr, "GET", "/tasks", ""));
        println!("{}", request(addr, "GET", "/tasks/rl_grpo/envs/gsm8k-768/space", ""));
        let q = r#"{"config": "{'lr': 1e-06, 'mb': 64, 'kl': 0}"}"#;
        println!("{}", request(addr, "POST", "/tasks/rl_grpo/envs/gsm8k-768/query", q));
        println!("{}", request(addr, "POST", "/episodes", r#"{"task": "rl_grpo", "env": "gsm8k-768", "budget": 2, "episode_id": "demo"}"#));
        println!("{}", request(addr, "POST", "/episodes/demo/step", r#"{"config": {"lr": "1e-06", "mb": "64", "kl": "0"}}"#));
        println!("{}", request(addr, "POST", "/episodes/demo/step", r#"{"config": "{'lr': 1e-06, 'mb': 32, 'kl': 0)"}"#));
        print!("{}", request(addr, "GET", "/episodes/demo/log", ""));
    })
    .await
    .unwrap();
}
