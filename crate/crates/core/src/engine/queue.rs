//! FIFO ring of tagged key embeddings.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cohort::Laterality;
use crate::error::{Error, Result};

use super::net::l2_norm;

const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub embedding: Vec<f64>,
    pub laterality: Laterality,
    pub source_image_id: u64,
    pub source_patient_id: u64,
}

/// FIFO ring of key embeddings; oldest entries are evicted beyond capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeQueue {
    entries: VecDeque<QueueEntry>,
    capacity: usize,
}

impl NegativeQueue {
    pub fn new(capacity: usize) -> Self {
        NegativeQueue {
            entries: VecDeque::with_capacity(capacity),
            capacity,
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

    /// Oldest-first iteration.
    pub fn iter(&self) -> impl Iterator<Item = &QueueEntry> {
        self.entries.iter()
    }

    /// FIFO append of a batch; rejects non-normalized embeddings.
    pub fn enqueue(&mut self, batch: Vec<QueueEntry>) -> Result<()> {
        for entry in &batch {
            let norm = l2_norm(&entry.embedding);
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(Error::NotUnitNorm(norm));
            }
        }
        for entry in batch {
            self.entries.push_back(entry);
            if self.entries.len() > self.capacity {
                self.entries.pop_front();
            }
        }
        Ok(())
    }
}
