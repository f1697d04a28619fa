//! Skip-gram tag embeddings trained with the exact full-softmax objective.
//!
//! Every tag gets an input vector and an output vector. The probability of
//! an output tag `t_o` given an input tag `t_l` is the softmax of the dot
//! products between `t_l`'s input vector and every output vector, and the
//! model minimizes the mean negative log likelihood over sentence tag pairs
//! by plain SGD with exact gradients. No negative sampling, no hierarchical
//! softmax: desk-scale vocabularies keep the full softmax tractable and the
//! exact objective makes the gradient check in the test suite meaningful.
//!
//! Because tag sentences are unordered sets, the context window is the
//! whole sentence: a sentence of k tags yields all k*(k-1) ordered pairs.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::TagId;
use crate::corpus::{TagSentence, Vocabulary};
use crate::exec;
use crate::{Error, Result};

/// Which of the two vector families to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorKind {
    Input,
    Output,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub dim: usize,
    pub epochs: usize,
    /// Initial learning rate; decays linearly per pair to 1e-4 of this.
    pub learning_rate: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 50,
            epochs: 20,
            learning_rate: 0.025,
            seed: 42,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Invalid("embedding dim must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Input and output vectors for every tag in the vocabulary.
///
/// Both matrices are |V| x D, row-major. Tag ids match the vocabulary the
/// model was initialized from.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    tags: Vec<String>,
    index: HashMap<String, u32>,
    dim: usize,
    input: Vec<f64>,
    output: Vec<f64>,
}

impl EmbeddingModel {
    /// Initialize from a vocabulary: input vectors i.i.d. uniform in
    /// [-0.5/D, +0.5/D], output vectors all zero.
    pub fn init(vocab: &Vocabulary, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        if vocab.len() < 2 {
            return Err(Error::UntrainableCorpus(vocab.len()));
        }
        let tags: Vec<String> = vocab.tags().to_vec();
        Self::init_from_tags(tags, config)
    }

    fn init_from_tags(tags: Vec<String>, config: &TrainConfig) -> Result<Self> {
        let dim = config.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let half = 0.5 / dim as f64;
        let input: Vec<f64> = (0..tags.len() * dim)
            .map(|_| rng.gen_range(-half..=half))
            .collect();
        let output = vec![0.0; tags.len() * dim];
        Self::from_parts(tags, dim, input, output)
    }

    /// Build a model from explicit matrices (used by persistence and by
    /// tests that need hand-set vectors).
    pub fn from_parts(
        tags: Vec<String>,
        dim: usize,
        input: Vec<f64>,
        output: Vec<f64>,
    ) -> Result<Self> {
        let n = tags.len();
        if input.len() != n * dim || output.len() != n * dim {
            return Err(Error::Dimension {
                expected: n * dim,
                got: input.len().max(output.len()),
            });
        }
        if input.iter().chain(output.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Invalid("non-finite value in embedding matrix".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, t) in tags.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Format(format!("duplicate tag {t:?}")));
            }
        }
        Ok(EmbeddingModel {
            tags,
            index,
            dim,
            input,
            output,
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.tags.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag_id(&self, tag: &str) -> Option<TagId> {
        self.index.get(tag).copied().map(TagId)
    }

    pub fn tag_name(&self, id: TagId) -> &str {
        &self.tags[id.index()]
    }

    #[inline]
    pub fn input_row(&self, t: TagId) -> &[f64] {
        &self.input[t.index() * self.dim..(t.index() + 1) * self.dim]
    }

    #[inline]
    pub fn output_row(&self, t: TagId) -> &[f64] {
        &self.output[t.index() * self.dim..(t.index() + 1) * self.dim]
    }

    /// Copy of one tag's vector; the tag is looked up by name.
    pub fn tag_vector(&self, tag: &str, which: VectorKind) -> Result<Vec<f64>> {
        let id = self
            .tag_id(tag)
            .ok_or_else(|| Error::UnknownTag(tag.to_owned()))?;
        Ok(match which {
            VectorKind::Input => self.input_row(id).to_vec(),
            VectorKind::Output => self.output_row(id).to_vec(),
        })
    }

    /// Dot products of `t_l`'s input vector with every output vector.
    fn scores(&self, t_l: TagId) -> Vec<f64> {
        let v = self.input_row(t_l);
        exec::map_range_seq(self.vocab_len(), |t| {
            dot(v, &self.output[t * self.dim..(t + 1) * self.dim])
        })
    }

    /// Softmax distribution over output tags given `t_l`, computed with
    /// max-subtraction.
    pub fn softmax_row(&self, t_l: TagId) -> Vec<f64> {
        let mut scores = self.scores(t_l);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for s in scores.iter_mut() {
            *s = (*s - max).exp();
            sum += *s;
        }
        for s in scores.iter_mut() {
            *s /= sum;
        }
        scores
    }

    /// p(t_o | t_l) under the full softmax.
    pub fn softmax_prob(&self, t_l: TagId, t_o: TagId) -> f64 {
        self.softmax_row(t_l)[t_o.index()]
    }

    /// Name-based [`softmax_prob`]; unknown tags are an error.
    pub fn softmax_prob_by_name(&self, input: &str, output: &str) -> Result<f64> {
        let t_l = self
            .tag_id(input)
            .ok_or_else(|| Error::UnknownTag(input.to_owned()))?;
        let t_o = self
            .tag_id(output)
            .ok_or_else(|| Error::UnknownTag(output.to_owned()))?;
        Ok(self.softmax_prob(t_l, t_o))
    }

    /// -log p(t_o | t_l) via the stable log-sum-exp form.
    pub fn pair_nll(&self, t_l: TagId, t_o: TagId) -> f64 {
        let scores = self.scores(t_l);
        log_sum_exp(&scores) - scores[t_o.index()]
    }

    /// Mean NLL over a pair set.
    pub fn nll_loss(&self, pairs: &[(TagId, TagId)]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::EmptyPairs);
        }
        let losses = exec::map_slice(pairs, |&(l, o)| self.pair_nll(l, o));
        Ok(losses.iter().sum::<f64>() / pairs.len() as f64)
    }

    /// Exact gradients of the single-pair NLL.
    ///
    /// Returns the gradient with respect to `t_l`'s input row (length D)
    /// and with respect to the full output matrix (|V| x D, row-major).
    /// Intended for verification at small sizes; training uses a fused
    /// in-place version of the same formulas.
    pub fn pair_gradients(&self, t_l: TagId, t_o: TagId) -> (Vec<f64>, Vec<f64>) {
        let probs = self.softmax_row(t_l);
        let v_in = self.input_row(t_l);
        let mut grad_input = vec![0.0; self.dim];
        let mut grad_output = vec![0.0; self.vocab_len() * self.dim];
        for t in 0..self.vocab_len() {
            let g = probs[t] - if t == t_o.index() { 1.0 } else { 0.0 };
            let out_row = &self.output[t * self.dim..(t + 1) * self.dim];
            for d in 0..self.dim {
                grad_input[d] += g * out_row[d];
                grad_output[t * self.dim + d] = g * v_in[d];
            }
        }
        (grad_input, grad_output)
    }

    /// Train by SGD over shuffled sentence pairs.
    ///
    /// Returns the per-epoch mean loss trace (losses measured on the fly as
    /// each pair is visited, before its update). Deterministic for a fixed
    /// seed. `epochs == 0` leaves the model unchanged.
    pub fn train(&mut self, sentences: &[TagSentence], config: &TrainConfig) -> Result<Vec<f64>> {
        config.validate()?;
        if config.dim != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                got: config.dim,
            });
        }
        let mut pairs: Vec<(TagId, TagId)> =
            sentences.iter().flat_map(|s| training_pairs(s)).collect();
        if pairs.is_empty() {
            return Err(Error::NoTrainingPairs);
        }
        self.train_on_pairs(&mut pairs, config)
    }

    /// Train on an explicit pair stream (sentence expansion already done).
    /// With `shuffle` off the given order is consumed as-is each epoch.
    pub fn train_on_pairs(
        &mut self,
        pairs: &mut [(TagId, TagId)],
        config: &TrainConfig,
    ) -> Result<Vec<f64>> {
        config.validate()?;
        let total_steps = (config.epochs * pairs.len()) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut trace = Vec::with_capacity(config.epochs);
        let n = self.vocab_len();
        let dim = self.dim;
        let mut scores = vec![0.0; n];
        let mut grad_input = vec![0.0; dim];
        let mut step = 0usize;

        for epoch in 0..config.epochs {
            if config.shuffle {
                pairs.shuffle(&mut rng);
            }
            let mut epoch_loss = 0.0;
            for &(t_l, t_o) in pairs.iter() {
                let decay = (1.0 - step as f64 / total_steps).max(1e-4);
                let lr = config.learning_rate * decay;

                let l = t_l.index();
                let v_in: Vec<f64> = self.input[l * dim..(l + 1) * dim].to_vec();
                for (t, s) in scores.iter_mut().enumerate() {
                    *s = dot(&v_in, &self.output[t * dim..(t + 1) * dim]);
                }
                let lse = log_sum_exp(&scores);
                let loss = lse - scores[t_o.index()];
                if !loss.is_finite() {
                    return Err(Error::Divergence(epoch));
                }
                epoch_loss += loss;

                grad_input.iter_mut().for_each(|g| *g = 0.0);
                for t in 0..n {
                    let p = (scores[t] - lse).exp();
                    let g = p - if t == t_o.index() { 1.0 } else { 0.0 };
                    let out_row = &mut self.output[t * dim..(t + 1) * dim];
                    for d in 0..dim {
                        grad_input[d] += g * out_row[d];
                        out_row[d] -= lr * g * v_in[d];
                    }
                }
                let in_row = &mut self.input[l * dim..(l + 1) * dim];
                for d in 0..dim {
                    in_row[d] -= lr * grad_input[d];
                }
                step += 1;
            }
            trace.push(epoch_loss / pairs.len() as f64);
        }
        Ok(trace)
    }
}

/// All ordered tag pairs of one sentence: the context window is the whole
/// sentence. A sentence of k tags yields k*(k-1) pairs; single-tag
/// sentences yield none.
pub fn training_pairs(sentence: &TagSentence) -> Vec<(TagId, TagId)> {
    let k = sentence.tags.len();
    let mut out = Vec::with_capacity(k.saturating_sub(1) * k);
    for (i, &a) in sentence.tags.iter().enumerate() {
        for (j, &b) in sentence.tags.iter().enumerate() {
            if i != j {
                out.push((a, b));
            }
        }
    }
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Cosine similarity between two equal-length vectors; 0 for zero vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut num, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        num += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        num / (na.sqrt() * nb.sqrt())
    }
}

// ---------------------------------------------------------------------------
// Persistence

/// Write the model: header `|V| D`, then one `tag v1 .. vD` line per tag
/// for the input block followed by the output block. Values carry 9
/// significant digits.
pub fn write_model<W: Write>(w: &mut W, model: &EmbeddingModel) -> Result<()> {
    writeln!(w, "{} {}", model.vocab_len(), model.dim)?;
    for block in [&model.input, &model.output] {
        for (t, tag) in model.tags.iter().enumerate() {
            write!(w, "{tag}")?;
            for d in 0..model.dim {
                write!(w, " {:.8e}", block[t * model.dim + d])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Read a model written by [`write_model`]. Tags may contain spaces, so
/// each line is parsed from the right: the last D tokens are values.
pub fn read_model<R: BufRead>(r: R) -> Result<EmbeddingModel> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("embedding: empty file".into()))??;
    let mut parts = header.split_whitespace();
    let n: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("embedding: bad header".into()))?;
    let dim: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("embedding: bad header".into()))?;

    let mut tags = Vec::with_capacity(n);
    let mut input = Vec::with_capacity(n * dim);
    let mut output = Vec::with_capacity(n * dim);
    for (row, block) in [(0usize, &mut input), (1usize, &mut output)] {
        for k in 0..n {
            let line = lines.next().ok_or_else(|| {
                Error::Format(format!("embedding: truncated at row {k} of block {row}"))
            })??;
            let tokens: Vec<&str> = line.split(' ').collect();
            if tokens.len() < dim + 1 {
                return Err(Error::Format(format!("embedding: short line {line:?}")));
            }
            let (tag_tokens, value_tokens) = tokens.split_at(tokens.len() - dim);
            let tag = tag_tokens.join(" ");
            if row == 0 {
                tags.push(tag);
            } else if tags[k] != tag {
                return Err(Error::Format(format!(
                    "embedding: tag mismatch between blocks: {:?} vs {tag:?}",
                    tags[k]
                )));
            }
            for v in value_tokens {
                let x: f64 = v
                    .parse()
                    .map_err(|_| Error::Format(format!("embedding: bad value {v:?}")))?;
                block.push(x);
            }
        }
    }
    EmbeddingModel::from_parts(tags, dim, input, output)
}
