//! Shared training-loop plumbing: budgets, minibatch order, loss history.

use std::io::Write;

use crate::optim::AdamWConfig;
use crate::rng::{permutation, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    /// Total optimizer steps.
    pub steps: usize,
    pub batch_size: usize,
    pub optim: AdamWConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            batch_size: 256,
            optim: AdamWConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    /// Optimizer steps completed when the record was taken.
    pub step: usize,
    pub loss: f64,
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossHistory {
    pub records: Vec<LossRecord>,
}

impl LossHistory {
    pub fn last(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn first(&self) -> Option<f64> {
        self.records.first().map(|r| r.loss)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "step,loss")?;
        for r in &self.records {
            writeln!(w, "{},{}", r.step, r.loss)?;
        }
        Ok(())
    }
}

/// Accumulates per-step losses and closes an epoch when the batcher wraps.
#[derive(Debug, Default)]
pub(crate) struct EpochMeter {
    sum: f64,
    count: usize,
}

impl EpochMeter {
    pub(crate) fn add(&mut self, loss: f64) {
        self.sum += loss;
        self.count += 1;
    }

    pub(crate) fn close(&mut self, step: usize, history: &mut LossHistory) {
        if self.count > 0 {
            history.records.push(LossRecord {
                step,
                loss: self.sum / self.count as f64,
            });
        }
        *self = Self::default();
    }
}

/// Shuffled passes over `0..n`; a batch may straddle two passes.
#[derive(Debug)]
pub(crate) struct Batcher {
    n: usize,
    order: Vec<usize>,
    pos: usize,
}

impl Batcher {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            order: Vec::new(),
            pos: 0,
        }
    }

    /// Next batch of indices and whether an epoch boundary was crossed.
    pub(crate) fn next(&mut self, batch: usize, rng: &mut Rng) -> (Vec<usize>, bool) {
        let mut idx = Vec::with_capacity(batch);
        let mut wrapped = false;
        while idx.len() < batch {
            if self.pos == self.order.len() {
                if !self.order.is_empty() {
                    wrapped = true;
                }
                self.order = permutation(rng, self.n);
                self.pos = 0;
            }
            let take = (batch - idx.len()).min(self.order.len() - self.pos);
            idx.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        if self.pos == self.order.len() {
            wrapped = true;
            self.order.clear();
            self.pos = 0;
        }
        (idx, wrapped)
    }
}
