//! HTTP front end for the mock target.

use std::io;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::extract::State;
use axum::http::{header::AUTHORIZATION, HeaderMap};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::mock::MockTarget;
use crate::protocol::{GraphqlRequest, GraphqlResponse};

pub type SharedTarget = Arc<Mutex<MockTarget>>;

async fn graphql(
    State(target): State<SharedTarget>,
    headers: HeaderMap,
    Json(request): Json<GraphqlRequest>,
) -> Json<GraphqlResponse> {
    let auth = headers.get(AUTHORIZATION).and_then(|v| v.to_str().ok());
    // one transition at a time; the lock is never held across an await
    let mut guard = target.lock().unwrap_or_else(|p| p.into_inner());
    Json(guard.handle(&request, auth))
}

pub fn router(target: SharedTarget) -> Router {
    Router::new()
        .route("/graphql", post(graphql))
        .route("/", post(graphql))
        .route("/health", get(|| async { "ok" }))
        .with_state(target)
}

/// Serves until the process ends.
pub fn serve_blocking(target: SharedTarget, addr: SocketAddr) -> io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        axum::serve(listener, router(target)).await
    })
}

/// A server running on a background thread; stopped on drop.
pub struct RunningServer {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<io::Result<()>>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}/graphql", self.addr)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub fn spawn(target: SharedTarget, addr: SocketAddr) -> io::Result<RunningServer> {
    let std_listener = std::net::TcpListener::bind(addr)?;
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(std_listener)?;
            axum::serve(listener, router(target))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    Ok(RunningServer {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
