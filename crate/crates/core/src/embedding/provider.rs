use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::store::EmbeddingStore;
use super::vector::EmbeddingVector;
use crate::{Error, Result};

/// Source of sentence (and optionally per-token) embeddings. The reported
/// dimension never changes within a session.
pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> Result<usize>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector>;

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        crate::par::try_map(texts, |t| self.embed(t))
    }

    /// Per-token vectors; providers without a token section return
    /// [`Error::Capability`].
    fn embed_tokens(&self, _text: &str) -> Result<Vec<EmbeddingVector>> {
        Err(Error::Capability("provider has no token embeddings".into()))
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn dim(&self) -> Result<usize> {
        Ok(EmbeddingStore::dim(self))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        self.get(text).cloned()
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<EmbeddingVector>> {
        self.tokens(text).map(<[_]>::to_vec)
    }
}

#[derive(Debug, Clone)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    pub max_batch: usize,
    pub retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
}

impl HttpProviderConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpProviderConfig {
            endpoint: endpoint.into(),
            max_batch: 64,
            retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f32>>,
}

/// Client for a remote service answering `POST {"texts": [...]}` with
/// `{"dim": d, "vectors": [[...], ...]}`.
pub struct HttpProvider {
    config: HttpProviderConfig,
    agent: ureq::Agent,
    dim: OnceLock<usize>,
}

impl HttpProvider {
    pub fn new(config: HttpProviderConfig) -> Self {
        let agent = http_agent(config.timeout);
        HttpProvider {
            config,
            agent,
            dim: OnceLock::new(),
        }
    }

    fn request(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let resp: EmbedResponse = post_json_with_retry(
            &self.agent,
            &self.config.endpoint,
            &EmbedRequest { texts },
            self.config.retries,
            self.config.backoff,
        )?;
        let expected = *self.dim.get_or_init(|| resp.dim);
        if resp.dim != expected {
            return Err(Error::DimMismatch {
                expected,
                actual: resp.dim,
            });
        }
        if resp.vectors.len() != texts.len() {
            return Err(Error::Transport {
                message: format!(
                    "asked for {} vectors, got {}",
                    texts.len(),
                    resp.vectors.len()
                ),
                retryable: false,
            });
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != expected {
                    return Err(Error::DimMismatch {
                        expected,
                        actual: v.len(),
                    });
                }
                EmbeddingVector::new(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for HttpProvider {
    fn dim(&self) -> Result<usize> {
        if let Some(d) = self.dim.get() {
            return Ok(*d);
        }
        self.request(&[])?;
        Ok(*self.dim.get().expect("set by request"))
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self.request(&[text.to_string()])?.remove(0))
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.config.max_batch.max(1)) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }
}

pub(crate) fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

/// POSTs `body` as JSON, retrying transport failures and 5xx answers up to
/// `retries` times with doubling backoff.
pub(crate) fn post_json_with_retry<B: Serialize, T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: &B,
    retries: u32,
    backoff: Duration,
) -> Result<T> {
    let mut delay = backoff;
    let mut attempt = 0;
    loop {
        let outcome = match agent.post(url).send_json(body) {
            Ok(mut resp) => {
                let status = resp.status().as_u16();
                if (200..300).contains(&status) {
                    return resp
                        .body_mut()
                        .read_json::<T>()
                        .map_err(|e| Error::Transport {
                            message: format!("bad response body from {url}: {e}"),
                            retryable: false,
                        });
                }
                Error::Transport {
                    message: format!("{url} answered HTTP {status}"),
                    retryable: status >= 500,
                }
            }
            Err(e) => Error::Transport {
                message: format!("{url}: {e}"),
                retryable: true,
            },
        };
        let retryable = matches!(
            outcome,
            Error::Transport {
                retryable: true,
                ..
            }
        );
        if !retryable || attempt >= retries {
            return Err(outcome);
        }
        std::thread::sleep(delay);
        delay *= 2;
        attempt += 1;
    }
}

#[cfg(test)]
pub(crate) mod test_server {
    //! Minimal single-threaded HTTP/1.1 server for client tests.

    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    pub struct Server {
        pub url: String,
        pub hits: Arc<AtomicUsize>,
    }

    /// Serves requests with `handler(request_body) -> (status, body)`.
    pub fn spawn<F>(handler: F) -> Server
    where
        F: Fn(&str) -> (u16, String) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/embed", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        break;
                    }
                    let l = line.trim_end();
                    if l.is_empty() {
                        break;
                    }
                    if let Some(v) = l.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
                let mut body = vec![0u8; len];
                reader.read_exact(&mut body).ok();
                counter.fetch_add(1, Ordering::SeqCst);
                let (status, reply) = handler(&String::from_utf8_lossy(&body));
                let _ = write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                    reply.len()
                );
            }
        });
        Server { url, hits }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    use super::test_server::spawn;
    use super::*;

    fn fake_embedder(body: &str) -> (u16, String) {
        let req: serde_json::Value = serde_json::from_str(body).unwrap();
        let texts = req["texts"].as_array().unwrap();
        let vectors: Vec<Vec<f32>> = texts
            .iter()
            .map(|t| {
                let s = t.as_str().unwrap();
                vec![s.len() as f32, 1.0, 0.5]
            })
            .collect();
        (
            200,
            serde_json::json!({"dim": 3, "vectors": vectors}).to_string(),
        )
    }

    fn fast(url: &str) -> HttpProviderConfig {
        HttpProviderConfig {
            backoff: Duration::from_millis(5),
            ..HttpProviderConfig::new(url)
        }
    }

    #[test]
    fn file_store_provider_is_deterministic() {
        let mut s = EmbeddingStore::new(2, "m");
        s.insert("a b", EmbeddingVector::new(vec![1.0, 2.0]).unwrap())
            .unwrap();
        let p: &dyn EmbeddingProvider = &s;
        assert_eq!(p.embed("a b").unwrap(), p.embed("a b").unwrap());
        assert_eq!(p.dim().unwrap(), 2);
        assert!(matches!(
            p.embed("zzz"),
            Err(Error::EmbeddingNotFound { .. })
        ));
    }

    #[test]
    fn remote_batches_of_at_most_64() {
        let sizes = Arc::new(std::sync::Mutex::new(Vec::new()));
        let seen = sizes.clone();
        let server = spawn(move |body| {
            let req: serde_json::Value = serde_json::from_str(body).unwrap();
            seen.lock()
                .unwrap()
                .push(req["texts"].as_array().unwrap().len());
            fake_embedder(body)
        });
        let p = HttpProvider::new(fast(&server.url));
        let texts: Vec<String> = (0..150).map(|i| format!("sentence {i}")).collect();
        let out = p.embed_batch(&texts).unwrap();
        assert_eq!(out.len(), 150);
        assert_eq!(out[7].values()[0], "sentence 7".len() as f32);
        assert_eq!(*sizes.lock().unwrap(), vec![64, 64, 22]);
        assert_eq!(p.dim().unwrap(), 3);
    }

    #[test]
    fn remote_retries_then_succeeds() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let server = spawn(move |body| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                (503, "{}".into())
            } else {
                fake_embedder(body)
            }
        });
        let p = HttpProvider::new(fast(&server.url));
        assert_eq!(p.embed("abc").unwrap().values(), &[3.0, 1.0, 0.5]);
        assert_eq!(server.hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn remote_gives_up_after_three_retries() {
        let server = spawn(|_| (500, "{}".into()));
        let p = HttpProvider::new(fast(&server.url));
        let err = p.embed("abc").unwrap_err();
        assert!(err.is_external());
        assert_eq!(server.hits.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = spawn(|_| (400, "{}".into()));
        let p = HttpProvider::new(fast(&server.url));
        assert!(matches!(
            p.embed("x"),
            Err(Error::Transport {
                retryable: false,
                ..
            })
        ));
        assert_eq!(server.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let p = HttpProvider::new(HttpProviderConfig {
            retries: 0,
            ..fast("http://127.0.0.1:9/embed")
        });
        assert!(p.embed("x").unwrap_err().is_external());
    }

    #[test]
    fn dimension_change_is_rejected() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let server = spawn(move |_| {
            let d = if c.fetch_add(1, Ordering::SeqCst) == 0 {
                2
            } else {
                3
            };
            (
                200,
                serde_json::json!({"dim": d, "vectors": [vec![0.5f32; d]]}).to_string(),
            )
        });
        let p = HttpProvider::new(fast(&server.url));
        p.embed("a").unwrap();
        assert!(matches!(
            p.embed("b"),
            Err(Error::DimMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }
}
