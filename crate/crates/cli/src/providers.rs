//! Provider construction from the configuration.

use anyhow::{Context, Result};
use contrasim::augmentor::{
    Discriminator, Generator, HttpDiscriminator, HttpGenerator, MockDiscriminator, MockGenerator,
};
use contrasim::embedding::{Embedder, EmbeddingStore, HashEmbedder, UnitVector};

use crate::config::{PipelineConfig, ProviderKind};

pub fn embedder(config: &PipelineConfig) -> Result<Box<dyn Embedder>> {
    let p = &config.providers;
    Ok(match p.kind {
        ProviderKind::Mock => Box::new(HashEmbedder::new(p.mock.seed, p.mock.dim)?),
        ProviderKind::Http => {
            let h = &p.http;
            Box::new(
                contrasim::embedding::HttpEmbedder::new(
                    &h.embeddings_url,
                    h.embeddings_model.clone(),
                    h.embedding_dim,
                    h.api_key_env.as_deref(),
                    h.retry.clone(),
                )?
                .with_batching(h.batch_size, h.max_in_flight),
            )
        }
        ProviderKind::File => Box::new(
            EmbeddingStore::load(&p.file.embeddings)
                .with_context(|| format!("loading embedding store {}", p.file.embeddings.display()))?,
        ),
    })
}

pub struct GenerationProviders {
    pub generator: Box<dyn Generator>,
    pub discriminator: Box<dyn Discriminator>,
}

pub fn generation(config: &PipelineConfig) -> Result<GenerationProviders> {
    let p = &config.providers;
    if p.kind == ProviderKind::Http {
        let h = &p.http;
        Ok(GenerationProviders {
            generator: Box::new(HttpGenerator::new(
                &h.generator_url,
                &h.generator_model,
                h.temperature,
                config.augment.prompts.clone(),
                h.api_key_env.as_deref(),
                h.retry.clone(),
            )?),
            discriminator: Box::new(HttpDiscriminator::new(
                &h.discriminator_url,
                h.api_key_env.as_deref(),
                h.retry.clone(),
            )?),
        })
    } else {
        Ok(GenerationProviders {
            generator: Box::new(MockGenerator::new(p.mock.seed)),
            discriminator: Box::new(MockDiscriminator),
        })
    }
}

/// Vectors from the run's embedding store, falling back to the provider for
/// texts the store does not hold.
pub struct Resolved {
    pub store: EmbeddingStore,
    pub fallback: Box<dyn Embedder>,
}

impl Embedder for Resolved {
    fn dim(&self) -> usize {
        self.store.dim()
    }

    fn embed_batch(&self, texts: &[&str]) -> contrasim::Result<Vec<UnitVector>> {
        let mut out: Vec<Option<UnitVector>> = texts.iter().map(|t| self.store.lookup_text(t).ok().cloned()).collect();
        let missing: Vec<usize> = (0..texts.len()).filter(|&i| out[i].is_none()).collect();
        if !missing.is_empty() {
            let batch: Vec<&str> = missing.iter().map(|&i| texts[i]).collect();
            let got = self.fallback.embed_batch(&batch)?;
            if got.len() != batch.len() {
                return Err(contrasim::Error::Provider("short embedding batch".into()));
            }
            for (i, v) in missing.into_iter().zip(got) {
                if v.dim() != self.store.dim() {
                    return Err(contrasim::Error::DimensionMismatch {
                        expected: self.store.dim(),
                        got: v.dim(),
                    });
                }
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}
