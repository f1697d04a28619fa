//! Tag corpus construction: normalization, per-item tag sentences and the
//! frequency-filtered vocabulary.
//!
//! A "sentence" is the deduplicated set of tags attached to one item,
//! kept in first-appearance order so corpus construction is reproducible.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};

use unicode_normalization::UnicodeNormalization;

use crate::catalog::{Catalog, ItemId, TagId};
use crate::{Error, Result};

/// Default minimum tag occurrence count for the vocabulary.
pub const DEFAULT_MIN_COUNT: u32 = 10;

/// Canonicalize a raw tag: lowercase, Unicode NFC, trim, collapse internal
/// whitespace. Returns `None` when nothing survives.
pub fn normalize_tag(raw: &str) -> Option<String> {
    let lowered = raw.to_lowercase();
    let composed: String = lowered.nfc().collect();
    let collapsed = composed.split_whitespace().collect::<Vec<_>>().join(" ");
    if collapsed.is_empty() {
        None
    } else {
        Some(collapsed)
    }
}

/// An item's deduplicated canonical tags, before vocabulary filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTagSentence {
    pub item: ItemId,
    pub tags: Vec<String>,
}

/// An item's tags as dense vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSentence {
    pub item: ItemId,
    pub tags: Vec<TagId>,
}

/// The tag universe: tag <-> dense id bijection with pre-filter occurrence
/// counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tags: Vec<String>,
    index: HashMap<String, u32>,
    counts: Vec<u32>,
    pub min_count: u32,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn id(&self, tag: &str) -> Option<TagId> {
        self.index.get(tag).copied().map(TagId)
    }

    pub fn tag(&self, id: TagId) -> &str {
        &self.tags[id.index()]
    }

    /// Occurrence count of a retained tag across all pre-filter sentences.
    pub fn count(&self, id: TagId) -> u32 {
        self.counts[id.index()]
    }

    /// Tags in dense-id order.
    pub fn tags(&self) -> &[String] {
        &self.tags
    }
}

/// Build one sentence per item from the item -> raw tags map.
///
/// Tags are normalized, empties dropped and duplicates removed keeping the
/// first appearance; items left without tags produce no sentence.
pub fn build_sentences(item_tags: &[Vec<String>]) -> Vec<RawTagSentence> {
    let mut out = Vec::new();
    for (i, raw_tags) in item_tags.iter().enumerate() {
        let mut seen = HashSet::new();
        let mut tags = Vec::new();
        for raw in raw_tags {
            if let Some(tag) = normalize_tag(raw) {
                if seen.insert(tag.clone()) {
                    tags.push(tag);
                }
            }
        }
        if !tags.is_empty() {
            out.push(RawTagSentence {
                item: ItemId(i as u32),
                tags,
            });
        }
    }
    out
}

/// Build the vocabulary, dropping tags that occur in fewer than `min_count`
/// sentences, and re-express the sentences in dense tag ids.
///
/// Stored counts are the pre-filter totals. Sentences emptied by the filter
/// are dropped; an entirely filtered corpus is an error.
pub fn build_vocabulary(
    sentences: &[RawTagSentence],
    min_count: u32,
) -> Result<(Vocabulary, Vec<TagSentence>)> {
    let mut counts: HashMap<&str, u32> = HashMap::new();
    for s in sentences {
        for t in &s.tags {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }

    let mut vocab = Vocabulary {
        min_count,
        ..Vocabulary::default()
    };
    let mut filtered = Vec::new();
    for s in sentences {
        let mut tags = Vec::new();
        for t in &s.tags {
            let count = counts[t.as_str()];
            if count < min_count {
                continue;
            }
            let id = match vocab.index.get(t.as_str()) {
                Some(&id) => id,
                None => {
                    let id = vocab.tags.len() as u32;
                    vocab.index.insert(t.clone(), id);
                    vocab.tags.push(t.clone());
                    vocab.counts.push(count);
                    id
                }
            };
            tags.push(TagId(id));
        }
        if !tags.is_empty() {
            filtered.push(TagSentence { item: s.item, tags });
        }
    }
    if filtered.is_empty() {
        return Err(Error::EmptyCorpus(min_count));
    }
    Ok((vocab, filtered))
}

// ---------------------------------------------------------------------------
// Persistence

/// Write sentences as `item_id<TAB>tag1<TAB>tag2...` lines.
pub fn write_sentences<W: Write>(
    w: &mut W,
    sentences: &[TagSentence],
    vocab: &Vocabulary,
    catalog: &Catalog,
) -> Result<()> {
    for s in sentences {
        write!(w, "{}", catalog.items.name(s.item.0))?;
        for &t in &s.tags {
            write!(w, "\t{}", vocab.tag(t))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Read sentences written by [`write_sentences`].
pub fn read_sentences<R: BufRead>(
    r: R,
    vocab: &Vocabulary,
    catalog: &Catalog,
) -> Result<Vec<TagSentence>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let raw_item = cols.next().unwrap_or("");
        let item = catalog
            .items
            .get(raw_item)
            .map(ItemId)
            .ok_or_else(|| Error::Format(format!("sentences: unknown item {raw_item:?}")))?;
        let mut tags = Vec::new();
        for t in cols {
            let id = vocab
                .id(t)
                .ok_or_else(|| Error::UnknownTag(t.to_owned()))?;
            tags.push(id);
        }
        if tags.is_empty() {
            return Err(Error::Format(format!("sentences: no tags for {raw_item:?}")));
        }
        out.push(TagSentence { item, tags });
    }
    Ok(out)
}

/// Write the vocabulary as `tag<TAB>count` lines in dense-id order.
pub fn write_vocabulary<W: Write>(w: &mut W, vocab: &Vocabulary) -> Result<()> {
    writeln!(w, "#min_count\t{}", vocab.min_count)?;
    for (i, tag) in vocab.tags.iter().enumerate() {
        writeln!(w, "{tag}\t{}", vocab.counts[i])?;
    }
    Ok(())
}

/// Read a vocabulary written by [`write_vocabulary`].
pub fn read_vocabulary<R: BufRead>(r: R) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::default();
    for line in r.lines() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#min_count\t") {
            vocab.min_count = rest
                .parse()
                .map_err(|_| Error::Format(format!("vocabulary: bad min_count {rest:?}")))?;
            continue;
        }
        let (tag, count) = line
            .split_once('\t')
            .ok_or_else(|| Error::Format(format!("vocabulary: bad line {line:?}")))?;
        let count: u32 = count
            .parse()
            .map_err(|_| Error::Format(format!("vocabulary: bad count {count:?}")))?;
        let id = vocab.tags.len() as u32;
        if vocab.index.insert(tag.to_owned(), id).is_some() {
            return Err(Error::Format(format!("vocabulary: duplicate tag {tag:?}")));
        }
        vocab.tags.push(tag.to_owned());
        vocab.counts.push(count);
    }
    Ok(vocab)
}
