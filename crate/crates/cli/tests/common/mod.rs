#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::{Arc, OnceLock};

use ceilguard_cli::server::{self, AppState};
use ceilguard_core::{generate, train_bundle, GeneratorConfig, ModelBundle, PipelineConfig, PriceEvent};
use http_body_util::{BodyExt, Full};
use hyper::body::Bytes;
use hyper::{Method, Request, StatusCode};
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::TokioExecutor;
use tokio::sync::oneshot;

pub struct Small {
    pub bundle: ModelBundle,
    pub events: Vec<PriceEvent>,
}

/// A bundle trained on 20K items and a separate 5K-item event set.
pub fn small() -> &'static Small {
    static S: OnceLock<Small> = OnceLock::new();
    S.get_or_init(|| {
        let (train, truth) = generate(&GeneratorConfig { n_items: 20_000, seed: 7, ..Default::default() }).unwrap();
        let (bundle, _) = train_bundle(&train, Some(&truth), &PipelineConfig::default(), 7).unwrap();
        let (events, _) = generate(&GeneratorConfig { n_items: 5_000, seed: 8, ..Default::default() }).unwrap();
        Small { bundle, events }
    })
}

pub struct Running {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl Running {
    pub async fn stop(mut self) {
        let _ = self.stop.take().unwrap().send(());
        self.handle.take().unwrap().await.unwrap().unwrap();
    }
}

pub async fn spawn(state: Arc<AppState>) -> Running {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let handle = tokio::spawn(server::run(listener, Arc::clone(&state), async {
        let _ = rx.await;
    }));
    Running { addr, state, stop: Some(tx), handle: Some(handle) }
}

pub type HttpClient = Client<HttpConnector, Full<Bytes>>;

pub fn client() -> HttpClient {
    let mut connector = HttpConnector::new();
    connector.set_nodelay(true);
    Client::builder(TokioExecutor::new()).pool_max_idle_per_host(256).build(connector)
}

pub async fn call(
    client: &HttpClient,
    addr: SocketAddr,
    method: Method,
    path: &str,
    body: Bytes,
) -> (StatusCode, Bytes) {
    let req = Request::builder()
        .method(method)
        .uri(format!("http://{addr}{path}"))
        .header("content-type", "application/json")
        .body(Full::new(body))
        .unwrap();
    let resp = client.request(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, bytes)
}
