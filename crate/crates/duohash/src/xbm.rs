//! Contrastive loss with cross-batch memory: forward value and analytic
//! gradients with respect to the batch embeddings.
//!
//! The memory is a FIFO ring of the most recent embeddings and labels. For a
//! batch element E_i, positives are memory entries with the same label at
//! distance > m_p (excluding E_i's own memory slot) and negatives are entries
//! with a different label at distance < m_n. Each side averages
//! (distance - m_p) resp. (m_n - distance) over its set, and the batch loss
//! is the mean of the per-element sums.
//!
//! Memory entries are gradient constants: only batch embeddings receive
//! gradients, which keeps backpropagation local to the batch.

use crate::error::{Error, Result};
use crate::hash::Embedding;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Label namespaces for the synthetic corpora. Primary items and non-target
/// images each get a label of their own; all images of one target individual
/// share that target's label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    PrimaryItem(u32),
    NonTargetImage(u32),
    Target(u32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub embedding: Embedding,
    pub label: Label,
    /// Monotone enqueue counter; used to exclude an element's own slot.
    pub seq: u64,
}

/// FIFO ring of the most recent `capacity` embeddings with labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossBatchMemory {
    capacity: usize,
    entries: VecDeque<MemoryEntry>,
    next_seq: u64,
}

impl CrossBatchMemory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "memory capacity must be positive");
        CrossBatchMemory {
            capacity,
            entries: VecDeque::new(),
            next_seq: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &MemoryEntry> {
        self.entries.iter()
    }

    /// Append embeddings in order, evicting oldest entries until the count
    /// fits the capacity again. Returns the sequence ids assigned to the
    /// pushed embeddings.
    pub fn push_batch(&mut self, embeddings: &[Embedding], labels: &[Label]) -> Result<Vec<u64>> {
        if embeddings.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: embeddings.len(),
                got: labels.len(),
            });
        }
        let mut seqs = Vec::with_capacity(embeddings.len());
        for (e, &label) in embeddings.iter().zip(labels) {
            let seq = self.next_seq;
            self.next_seq += 1;
            self.entries.push_back(MemoryEntry {
                embedding: e.clone(),
                label,
                seq,
            });
            seqs.push(seq);
        }
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
        Ok(seqs)
    }
}

/// A batch element for the loss: its embedding, label, and (when already
/// enqueued) its own memory sequence id so self-pairing can be excluded.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub embedding: Embedding,
    pub label: Label,
    pub seq: Option<u64>,
}

/// Forward loss plus the gradient of the loss with respect to each batch
/// embedding.
#[derive(Debug, Clone)]
pub struct LossResult {
    pub loss: f64,
    pub grads: Vec<Vec<f64>>,
}

/// 2-norm of the elementwise difference.
fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Contrastive loss with cross-batch memory over an already-updated memory.
///
/// The caller enqueues the batch first (`push_batch`) and passes the
/// returned sequence ids; positives then search the memory including the
/// batch itself, with each element's own slot excluded by id.
pub fn contrastive_loss_xbm(
    batch: &[BatchItem],
    mem: &CrossBatchMemory,
    m_p: f64,
    m_n: f64,
) -> Result<LossResult> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("contrastive loss needs a batch"));
    }
    assert!(
        m_n > m_p && m_p >= 0.0,
        "margins must satisfy m_n > m_p >= 0"
    );
    let n = batch.len() as f64;
    let dim = batch[0].embedding.len();
    let mut loss = 0.0;
    let mut grads = vec![vec![0.0; dim]; batch.len()];

    for (i, item) in batch.iter().enumerate() {
        let e_i = item.embedding.as_slice();
        // (distance, memory entry) for both sets, collected in one pass
        let mut pos: Vec<(f64, &MemoryEntry)> = Vec::new();
        let mut neg: Vec<(f64, &MemoryEntry)> = Vec::new();
        for entry in mem.entries() {
            if item.seq == Some(entry.seq) {
                continue;
            }
            let d = dist(e_i, entry.embedding.as_slice());
            if entry.label == item.label {
                if d > m_p {
                    pos.push((d, entry));
                }
            } else if d < m_n {
                neg.push((d, entry));
            }
        }
        // empty sets contribute nothing, avoiding the 0/0 in the averages
        if !pos.is_empty() {
            let w = 1.0 / (n * pos.len() as f64);
            for (d, entry) in &pos {
                loss += w * (d - m_p);
                for (g, (x, y)) in grads[i]
                    .iter_mut()
                    .zip(e_i.iter().zip(entry.embedding.as_slice()))
                {
                    *g += w * (x - y) / d;
                }
            }
        }
        if !neg.is_empty() {
            let w = 1.0 / (n * neg.len() as f64);
            for (d, entry) in &neg {
                loss += w * (m_n - d);
                if *d == 0.0 {
                    // coincident pair: direction undefined, contribute m_n
                    // to the loss and no gradient
                    continue;
                }
                for (g, (x, y)) in grads[i]
                    .iter_mut()
                    .zip(e_i.iter().zip(entry.embedding.as_slice()))
                {
                    *g -= w * (x - y) / d;
                }
            }
        }
    }
    Ok(LossResult { loss, grads })
}
