//! Similarity-ranked example selection.
//!
//! Picks the training examples whose questions are most similar, by mean
//! cosine over embeddings, to the validation questions. The default
//! embedder hashes tokens into a fixed-size bag so selection works offline
//! and deterministically; a live embeddings endpoint can stand in for it.

use sha2::{Digest, Sha256};

use crate::corpus::Example;
use crate::error::Result;
use crate::gateway::http::EmbeddingsClient;

/// Maps texts to fixed-length vectors.
pub trait Embedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Offline embedder: lowercased alphanumeric tokens hashed into `dim`
/// buckets, counted.
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 256 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut vector = vec![0.0; self.dim];
                let lowered = text.to_lowercase();
                for token in lowered.split(|c: char| !c.is_ascii_alphanumeric()) {
                    if token.is_empty() {
                        continue;
                    }
                    let digest = Sha256::digest(token.as_bytes());
                    let bucket = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
                        as usize
                        % self.dim;
                    vector[bucket] += 1.0;
                }
                vector
            })
            .collect())
    }
}

impl Embedder for EmbeddingsClient {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        self.embed_texts(texts)
    }
}

/// Cosine similarity; zero whenever either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_b: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    dot / (norm_a * norm_b)
}

/// Ranks `train` examples by mean cosine between their question embedding
/// and every validation question embedding, and returns the top `m`.
/// Ties break toward the lower id; a train question that embeds to zero is
/// ranked last.
pub fn select_examples_by_similarity(
    embedder: &dyn Embedder,
    train: &[Example],
    validation: &[Example],
    m: usize,
) -> Result<Vec<Example>> {
    let train_texts: Vec<String> = train.iter().map(|e| e.question.clone()).collect();
    let validation_texts: Vec<String> = validation.iter().map(|e| e.question.clone()).collect();
    let train_vectors = embedder.embed(&train_texts)?;
    let validation_vectors = embedder.embed(&validation_texts)?;

    let mut scored: Vec<(f64, &Example)> = train
        .iter()
        .zip(&train_vectors)
        .map(|(example, vector)| {
            if vector.iter().all(|x| *x == 0.0) {
                log::warn!("question of {} embeds to zero, ranking it last", example.id);
                return (f64::NEG_INFINITY, example);
            }
            let total: f64 = validation_vectors
                .iter()
                .map(|v| cosine(vector, v))
                .sum();
            let mean = if validation_vectors.is_empty() {
                0.0
            } else {
                total / validation_vectors.len() as f64
            };
            (mean, example)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));
    Ok(scored
        .into_iter()
        .take(m)
        .map(|(_, example)| example.clone())
        .collect())
}
