use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    Cpc,
    Absa,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cpc => "CPC",
            Task::Absa => "ABSA",
        }
    }
}

/// `ratio_cpc` CPC batches followed by `ratio_absa` ABSA batches, repeated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSchedule {
    pub ratio_cpc: usize,
    pub ratio_absa: usize,
    pub batch_size: usize,
}

impl Default for BatchSchedule {
    fn default() -> Self {
        Self {
            ratio_cpc: 1,
            ratio_absa: 1,
            batch_size: 16,
        }
    }
}

impl BatchSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.ratio_cpc == 0 || self.ratio_absa == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "batch ratio and size must be positive, got {}:{} size {}",
                self.ratio_cpc, self.ratio_absa, self.batch_size
            )));
        }
        Ok(())
    }

    /// Task of the `k`-th batch (0-based) in the stream.
    pub fn task_at(&self, k: usize) -> Task {
        if k % (self.ratio_cpc + self.ratio_absa) < self.ratio_cpc {
            Task::Cpc
        } else {
            Task::Absa
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledBatch {
    pub task: Task,
    /// Indices into the dataset of `task`.
    pub indices: Vec<usize>,
    /// Number of completed passes over that dataset before this batch.
    pub pass: usize,
    /// True for the batch that completes a pass over the CPC data; this is
    /// the training-epoch boundary.
    pub ends_epoch: bool,
}

struct Stream {
    order: Vec<usize>,
    cursor: usize,
    pass: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

impl Stream {
    fn new(n: usize, batch_size: usize, seed: u64) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: 0,
            pass: 0,
            batch_size,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn next_batch(&mut self) -> (Vec<usize>, usize, bool) {
        if self.cursor == 0 {
            self.order.shuffle(&mut self.rng);
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        let pass = self.pass;
        let finished = end == self.order.len();
        if finished {
            self.cursor = 0;
            self.pass += 1;
        } else {
            self.cursor = end;
        }
        (batch, pass, finished)
    }
}

/// Endless alternating batch stream over a CPC and an ABSA dataset.
///
/// Each dataset is reshuffled (seeded) at the start of every pass and wraps
/// independently; a final short batch is kept.
pub struct AltBatches {
    schedule: BatchSchedule,
    cpc: Stream,
    absa: Stream,
    emitted: usize,
}

impl AltBatches {
    pub fn new(n_cpc: usize, n_absa: usize, schedule: BatchSchedule, seed: u64) -> Result<Self> {
        schedule.validate()?;
        if n_cpc == 0 || n_absa == 0 {
            return Err(Error::Data(format!(
                "alternating batches need two nonempty datasets, got {n_cpc} CPC and {n_absa} ABSA"
            )));
        }
        if schedule.batch_size > n_cpc || schedule.batch_size > n_absa {
            return Err(Error::Config(format!(
                "batch size {} exceeds dataset size ({n_cpc} CPC, {n_absa} ABSA)",
                schedule.batch_size
            )));
        }
        Ok(Self {
            schedule,
            cpc: Stream::new(n_cpc, schedule.batch_size, seed),
            absa: Stream::new(n_absa, schedule.batch_size, seed ^ 0xab5a_ab5a_ab5a_ab5a),
            emitted: 0,
        })
    }

    pub fn schedule(&self) -> BatchSchedule {
        self.schedule
    }

    /// CPC batches per epoch.
    pub fn cpc_batches_per_epoch(&self) -> usize {
        self.cpc.order.len().div_ceil(self.schedule.batch_size)
    }
}

impl Iterator for AltBatches {
    type Item = ScheduledBatch;

    fn next(&mut self) -> Option<ScheduledBatch> {
        let task = self.schedule.task_at(self.emitted);
        self.emitted += 1;
        Some(match task {
            Task::Cpc => {
                let (indices, pass, finished) = self.cpc.next_batch();
                ScheduledBatch {
                    task,
                    indices,
                    pass,
                    ends_epoch: finished,
                }
            }
            Task::Absa => {
                let (indices, pass, _) = self.absa.next_batch();
                ScheduledBatch {
                    task,
                    indices,
                    pass,
                    ends_epoch: false,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched(c: usize, a: usize, b: usize) -> BatchSchedule {
        BatchSchedule {
            ratio_cpc: c,
            ratio_absa: a,
            batch_size: b,
        }
    }

    #[test]
    fn one_to_one_alternates() {
        let tags: Vec<Task> = AltBatches::new(10, 10, sched(1, 1, 2), 0)
            .unwrap()
            .take(6)
            .map(|b| b.task)
            .collect();
        use Task::*;
        assert_eq!(tags, vec![Cpc, Absa, Cpc, Absa, Cpc, Absa]);
    }

    #[test]
    fn two_to_three_pattern() {
        let tags: Vec<Task> = AltBatches::new(10, 10, sched(2, 3, 2), 0)
            .unwrap()
            .take(7)
            .map(|b| b.task)
            .collect();
        use Task::*;
        assert_eq!(tags, vec![Cpc, Cpc, Absa, Absa, Absa, Cpc, Cpc]);
    }

    #[test]
    fn thirty_two_by_sixteen_is_two_batches_per_epoch() {
        let it = AltBatches::new(32, 100, sched(1, 1, 16), 4).unwrap();
        assert_eq!(it.cpc_batches_per_epoch(), 2);
        let cpc: Vec<ScheduledBatch> = it.filter(|b| b.task == Task::Cpc).take(4).collect();
        assert_eq!(
            cpc.iter().map(|b| b.ends_epoch).collect::<Vec<_>>(),
            vec![false, true, false, true]
        );
        let mut first_pass: Vec<usize> = cpc[..2].iter().flat_map(|b| b.indices.clone()).collect();
        first_pass.sort();
        assert_eq!(first_pass, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn short_stream_wraps_and_reshuffles() {
        let absa: Vec<ScheduledBatch> = AltBatches::new(40, 4, sched(1, 1, 4), 9)
            .unwrap()
            .filter(|b| b.task == Task::Absa)
            .take(3)
            .collect();
        assert_eq!(absa.iter().map(|b| b.pass).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn oversized_batch_is_rejected() {
        assert!(AltBatches::new(8, 100, sched(1, 1, 16), 0).is_err());
        assert!(AltBatches::new(100, 8, sched(1, 1, 16), 0).is_err());
        assert!(AltBatches::new(0, 8, sched(1, 1, 1), 0).is_err());
    }

    #[test]
    fn seeded_order_is_reproducible() {
        let a: Vec<_> = AltBatches::new(50, 30, sched(1, 2, 8), 5).unwrap().take(20).collect();
        let b: Vec<_> = AltBatches::new(50, 30, sched(1, 2, 8), 5).unwrap().take(20).collect();
        assert_eq!(a, b);
    }
}
