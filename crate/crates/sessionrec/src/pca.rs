//! PCA over tag vectors and the per-item context index.
//!
//! The fit eigendecomposes the explicit D x D covariance (divisor M-1) of
//! the embedding's input vectors; one principal value per tag gives each
//! item the mean projection of its tags, the scalar later compared by the
//! contextual re-ranker.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DMatrix;

use crate::catalog::{Catalog, ItemId};
use crate::corpus::{TagSentence, Vocabulary};
use crate::embedding::EmbeddingModel;
use crate::exec;
use crate::{Error, Result};

/// A fitted PCA basis: feature means plus the top-K orthonormal principal
/// directions sorted by descending eigenvalue.
///
/// Sign convention: within each component the entry of largest absolute
/// value is non-negative, which makes the fit deterministic. Eq-style
/// absolute distances are sign-blind, so this only pins reproducibility.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Project a D-vector onto the K retained components.
    pub fn project(&self, vector: &[f64]) -> Result<Vec<f64>> {
        if vector.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: vector.len(),
            });
        }
        let centered: Vec<f64> = vector
            .iter()
            .zip(&self.mean)
            .map(|(x, m)| x - m)
            .collect();
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Reconstruct a point from its projection (exact when K = D).
    pub fn reconstruct(&self, projection: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (p, c) in projection.iter().zip(&self.components) {
            for (o, e) in out.iter_mut().zip(c) {
                *o += p * e;
            }
        }
        out
    }
}

/// Fit PCA on M row vectors of dimension D, keeping the top `n_components`.
pub fn fit_pca(vectors: &[Vec<f64>], n_components: usize) -> Result<PcaModel> {
    let m = vectors.len();
    if m < 2 {
        return Err(Error::Invalid(format!(
            "pca needs at least 2 points, got {m}"
        )));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Dimension {
            expected: d,
            got: vectors.iter().map(Vec::len).find(|&l| l != d).unwrap_or(d),
        });
    }
    if n_components == 0 || n_components > m.min(d) {
        return Err(Error::Dimension {
            expected: m.min(d),
            got: n_components,
        });
    }

    let mut mean = vec![0.0; d];
    for v in vectors {
        for (s, x) in mean.iter_mut().zip(v) {
            *s += x;
        }
    }
    for s in mean.iter_mut() {
        *s /= m as f64;
    }

    // covariance with divisor M-1
    let centered = DMatrix::from_fn(m, d, |r, c| vectors[r][c] - mean[c]);
    let cov = (centered.transpose() * &centered) / (m as f64 - 1.0);

    let eig = nalgebra::SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..d)
        .map(|k| {
            let col: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
            (eig.eigenvalues[k], col)
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.truncate(n_components);

    let mut components = Vec::with_capacity(n_components);
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (lambda, mut comp) in pairs {
        // sign convention: largest-|entry| coordinate made non-negative
        let lead = comp
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0);
        if comp[lead] < 0.0 {
            for x in comp.iter_mut() {
                *x = -*x;
            }
        }
        eigenvalues.push(lambda.max(0.0));
        components.push(comp);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// Fit PCA on every input vector of the embedding vocabulary.
pub fn fit_pca_on_embedding(model: &EmbeddingModel, n_components: usize) -> Result<PcaModel> {
    let rows: Vec<Vec<f64>> = (0..model.vocab_len())
        .map(|t| model.input_row(crate::catalog::TagId(t as u32)).to_vec())
        .collect();
    fit_pca(&rows, n_components)
}

/// Per-item mean 1-D PCA value of its in-vocabulary tags.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemContextIndex {
    values: Vec<Option<f64>>,
    n_indexed: usize,
}

impl ItemContextIndex {
    pub fn get(&self, item: ItemId) -> Option<f64> {
        self.values.get(item.index()).copied().flatten()
    }

    pub fn n_items(&self) -> usize {
        self.values.len()
    }

    pub fn n_indexed(&self) -> usize {
        self.n_indexed
    }

    /// Fraction of catalog items that have an index.
    pub fn coverage(&self) -> f64 {
        if self.values.is_empty() {
            0.0
        } else {
            self.n_indexed as f64 / self.values.len() as f64
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|x| (ItemId(i as u32), x)))
    }

    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let n_indexed = values.iter().flatten().count();
        ItemContextIndex { values, n_indexed }
    }
}

/// Compute the context index: for each item with a sentence, the arithmetic
/// mean of its tags' first-component projections.
pub fn item_mean_pca(
    sentences: &[TagSentence],
    model: &EmbeddingModel,
    pca: &PcaModel,
    n_items: usize,
) -> Result<ItemContextIndex> {
    if pca.k() < 1 {
        return Err(Error::Invalid("pca must retain at least 1 component".into()));
    }
    let by_item: Vec<(ItemId, f64)> = exec::map_slice(sentences, |s| {
        let sum: f64 = s
            .tags
            .iter()
            .map(|&t| {
                pca.project(model.input_row(t))
                    .expect("embedding dim matches pca dim")[0]
            })
            .sum();
        (s.item, sum / s.tags.len() as f64)
    });
    let mut values = vec![None; n_items];
    for (item, v) in by_item {
        values[item.index()] = Some(v);
    }
    Ok(ItemContextIndex::from_values(values))
}

/// Write the 2-D scatter file: a header then `tag<TAB>x<TAB>y<TAB>count`
/// for every tag with at least `min_count` occurrences.
pub fn emit_scatter<W: Write>(
    w: &mut W,
    vocab: &Vocabulary,
    model: &EmbeddingModel,
    pca: &PcaModel,
    min_count: u32,
) -> Result<()> {
    if pca.k() < 2 {
        return Err(Error::Invalid("scatter needs a 2-component pca".into()));
    }
    writeln!(w, "tag\tx\ty\tcount")?;
    for (t, tag) in vocab.tags().iter().enumerate() {
        let id = crate::catalog::TagId(t as u32);
        let count = vocab.count(id);
        if count < min_count {
            continue;
        }
        let p = pca.project(model.input_row(
            model
                .tag_id(tag)
                .ok_or_else(|| Error::UnknownTag(tag.clone()))?,
        ))?;
        writeln!(w, "{tag}\t{:e}\t{:e}\t{count}", p[0], p[1])?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Persistence

/// Write a PCA model: `K D`, mean line, K component lines, eigenvalue line.
pub fn write_pca<W: Write>(w: &mut W, pca: &PcaModel) -> Result<()> {
    writeln!(w, "{} {}", pca.k(), pca.dim())?;
    writeln!(w, "{}", join_floats(&pca.mean))?;
    for c in &pca.components {
        writeln!(w, "{}", join_floats(c))?;
    }
    writeln!(w, "{}", join_floats(&pca.eigenvalues))?;
    Ok(())
}

/// Read a PCA model written by [`write_pca`].
pub fn read_pca<R: BufRead>(r: R) -> Result<PcaModel> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("pca: empty file".into()))??;
    let mut parts = header.split_whitespace();
    let k: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("pca: bad header".into()))?;
    let d: usize = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("pca: bad header".into()))?;
    let mut next_floats = |what: &str, expect: usize| -> Result<Vec<f64>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Format(format!("pca: missing {what}")))??;
        let vals = parse_floats(&line)?;
        if vals.len() != expect {
            return Err(Error::Dimension {
                expected: expect,
                got: vals.len(),
            });
        }
        Ok(vals)
    };
    let mean = next_floats("mean", d)?;
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        components.push(next_floats(&format!("component {i}"), d)?);
    }
    let eigenvalues = next_floats("eigenvalues", k)?;
    Ok(PcaModel {
        mean,
        components,
        eigenvalues,
    })
}

/// Write the item index as `item_id<TAB>pca_value` lines.
pub fn write_item_index<W: Write>(
    w: &mut W,
    index: &ItemContextIndex,
    catalog: &Catalog,
) -> Result<()> {
    for (item, v) in index.iter() {
        writeln!(w, "{}\t{v:e}", catalog.items.name(item.0))?;
    }
    Ok(())
}

/// Read an item index written by [`write_item_index`].
pub fn read_item_index<R: BufRead>(r: R, catalog: &Catalog) -> Result<ItemContextIndex> {
    let mut values = vec![None; catalog.n_items()];
    for line in r.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let (item, v) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("item index: bad line {line:?}")))?;
        let id = catalog
            .items
            .get(item)
            .ok_or_else(|| Error::Format(format!("item index: unknown item {item:?}")))?;
        let v: f64 = v
            .parse()
            .map_err(|_| Error::Format(format!("item index: bad value {v:?}")))?;
        values[id as usize] = Some(v);
    }
    Ok(ItemContextIndex::from_values(values))
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| format!("{x:e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_floats(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Format(format!("bad float {t:?}")))
        })
        .collect()
}
