//! Skip-gram word embeddings trained with negative sampling.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::KeyphraseError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    min_count: u64,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times, most frequent first
    /// with ties in lexicographic order.
    pub fn build<'a, I>(sentences: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for sentence in sentences {
            for tok in sentence {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> =
            freq.into_iter().filter(|(_, c)| *c >= min_count).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
        let counts = kept.iter().map(|(_, c)| *c).collect();
        let index = tokens
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        Vocabulary {
            tokens,
            counts,
            min_count,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub min_count: u64,
    pub seed: u64,
    pub learning_rate: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dimension: 100,
            window: 5,
            negatives: 5,
            epochs: 5,
            min_count: 5,
            seed: 1,
            learning_rate: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub vocab: Vocabulary,
    pub dimension: usize,
    /// Row-major, `vocab.len() * dimension`.
    vectors: Vec<f64>,
}

impl EmbeddingSet {
    pub fn vector(&self, id: usize) -> &[f64] {
        &self.vectors[id * self.dimension..(id + 1) * self.dimension]
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vocab.id(token).map(|i| self.vector(i))
    }

    /// Builds a set from explicit vectors, one per token in order.
    pub fn from_vectors(
        tokens: Vec<String>,
        vectors: Vec<Vec<f64>>,
    ) -> Result<Self, KeyphraseError> {
        let dimension = vectors.first().map_or(0, Vec::len);
        if vectors.iter().any(|v| v.len() != dimension) || tokens.len() != vectors.len() {
            return Err(KeyphraseError::Dimension);
        }
        let counts = vec![1; tokens.len()];
        let index = tokens
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect();
        Ok(EmbeddingSet {
            vocab: Vocabulary {
                tokens,
                counts,
                min_count: 1,
                index,
            },
            dimension,
            vectors: vectors.concat(),
        })
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

const TABLE_SIZE: usize = 1 << 20;

fn sigmoid(x: f64) -> f64 {
    if x > 30.0 {
        1.0
    } else if x < -30.0 {
        0.0
    } else {
        1.0 / (1.0 + (-x).exp())
    }
}

/// Trains input vectors with skip-gram and negative sampling.
///
/// Single-threaded, so a fixed seed reproduces the vectors bit for bit.
/// Negatives are drawn from the unigram distribution raised to 0.75 and the
/// effective window is sampled uniformly in `1..=window` per position.
pub fn train_embeddings(
    sentences: &[Vec<String>],
    config: &EmbeddingConfig,
) -> Result<EmbeddingSet, KeyphraseError> {
    let vocab = Vocabulary::build(sentences.iter().map(Vec::as_slice), config.min_count);
    if vocab.is_empty() {
        return Err(KeyphraseError::EmptyVocabulary {
            min_count: config.min_count,
        });
    }
    let dim = config.dimension.max(1);
    let v = vocab.len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut input: Vec<f64> = (0..v * dim)
        .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
        .collect();
    let mut output = vec![0.0; v * dim];

    let table = unigram_table(vocab.counts(), TABLE_SIZE.min(v * 1000).max(v));
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|t| vocab.id(t)).collect())
        .collect();
    let words_per_epoch: usize = encoded.iter().map(Vec::len).sum();
    let total = (words_per_epoch * config.epochs).max(1) as f64;
    let mut processed = 0usize;
    let mut grad = vec![0.0; dim];

    for _ in 0..config.epochs {
        for sentence in &encoded {
            for (pos, &center) in sentence.iter().enumerate() {
                let lr = (config.learning_rate * (1.0 - processed as f64 / total))
                    .max(config.learning_rate * 1e-4);
                processed += 1;
                let span = rng.random_range(1..=config.window.max(1));
                let lo = pos.saturating_sub(span);
                let hi = (pos + span).min(sentence.len() - 1);
                for (ctx_pos, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let in_row = context * dim;
                    for k in 0..=config.negatives {
                        let (target, label) = if k == 0 {
                            (center, 1.0)
                        } else {
                            let t = table[rng.random_range(0..table.len())];
                            if t == center {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let out_row = target * dim;
                        let dot: f64 = (0..dim)
                            .map(|d| input[in_row + d] * output[out_row + d])
                            .sum();
                        let g = (label - sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[out_row + d];
                            output[out_row + d] += g * input[in_row + d];
                        }
                    }
                    for d in 0..dim {
                        input[in_row + d] += grad[d];
                    }
                }
            }
        }
    }

    Ok(EmbeddingSet {
        vocab,
        dimension: dim,
        vectors: input,
    })
}

fn unigram_table(counts: &[u64], size: usize) -> Vec<usize> {
    let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
    let total: f64 = weights.iter().sum();
    let mut table = Vec::with_capacity(size);
    let mut id = 0;
    let mut cumulative = weights[0] / total;
    for i in 0..size {
        table.push(id);
        if (i as f64 + 1.0) / size as f64 > cumulative && id + 1 < weights.len() {
            id += 1;
            cumulative += weights[id] / total;
        }
    }
    table
}
