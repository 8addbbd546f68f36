use std::thread;

use serde::{Deserialize, Serialize};

use super::{check_dim, normalize, Embedder, UnitVector};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [&'a str],
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Client for an embeddings endpoint: `POST {input: [texts]}` answered by
/// `{data: [{embedding: [...]}]}`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: String,
    model: Option<String>,
    dim: usize,
    batch_size: usize,
    max_in_flight: usize,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(
        url: impl Into<String>,
        model: Option<String>,
        dim: usize,
        api_key_env: Option<&str>,
        policy: RetryPolicy,
    ) -> Result<Self> {
        Ok(Self {
            url: url.into(),
            model,
            dim,
            batch_size: 32,
            max_in_flight: 4,
            client: JsonClient::new(api_key_env, policy)?,
        })
    }

    pub fn with_batching(mut self, batch_size: usize, max_in_flight: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    fn request(&self, chunk: &[&str]) -> Result<Vec<UnitVector>> {
        let body = EmbeddingRequest {
            input: chunk,
            model: self.model.as_deref(),
        };
        let resp: EmbeddingResponse = self.client.post(&self.url, &body)?;
        if resp.data.len() != chunk.len() {
            return Err(Error::Provider(format!(
                "{}: asked for {} embeddings, got {}",
                self.url,
                chunk.len(),
                resp.data.len()
            )));
        }
        resp.data
            .into_iter()
            .map(|d| {
                let v = normalize(d.embedding)?;
                check_dim(self.dim, &v)?;
                Ok(v)
            })
            .collect()
    }
}

impl Embedder for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<UnitVector>> {
        let chunks: Vec<&[&str]> = texts.chunks(self.batch_size).collect();
        let mut out = Vec::with_capacity(texts.len());
        for wave in chunks.chunks(self.max_in_flight) {
            let results: Vec<Result<Vec<UnitVector>>> = thread::scope(|scope| {
                let handles: Vec<_> = wave
                    .iter()
                    .map(|chunk| scope.spawn(move || self.request(chunk)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| {
                        h.join()
                            .unwrap_or_else(|_| Err(Error::Provider("worker panicked".into())))
                    })
                    .collect()
            });
            for r in results {
                out.extend(r?);
            }
        }
        Ok(out)
    }
}
