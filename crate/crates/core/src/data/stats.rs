//! How rare suction toggles are at the chunk level.
//!
//! A chunk "contains a toggle" when some arm's suction bit at a step inside
//! the chunk differs from the bit one step earlier, even if that earlier
//! step belongs to the previous chunk: the chunk is the first prediction
//! that has to express the new suction state. Padding never toggles.

use std::collections::BTreeMap;

use serde::Serialize;

use super::action::ActionVector;
use super::chunk::chunk_starts;
use super::episode::Episode;
use super::DataError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ChunkStats {
    pub episodes: usize,
    pub chunks: usize,
    pub toggle_chunks: usize,
}

impl ChunkStats {
    pub fn fraction(&self) -> f64 {
        if self.chunks == 0 {
            0.0
        } else {
            self.toggle_chunks as f64 / self.chunks as f64
        }
    }

    fn add(&mut self, other: &ChunkStats) {
        self.episodes += other.episodes;
        self.chunks += other.chunks;
        self.toggle_chunks += other.toggle_chunks;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SparsityReport {
    pub horizon: usize,
    pub stride: usize,
    pub overall: ChunkStats,
    pub per_task: BTreeMap<u8, ChunkStats>,
    /// Toggle edges per chunk (summed over both arms) → number of chunks.
    pub histogram: BTreeMap<usize, usize>,
}

/// Running tally; episodes can be fed one at a time as they are read.
#[derive(Debug, Clone)]
pub struct SparsityAccumulator {
    report: SparsityReport,
}

/// Number of arms whose suction bit changes at each step (0 at step 0).
pub fn toggle_edges(actions: &[ActionVector]) -> Vec<usize> {
    let mut edges = vec![0; actions.len()];
    for i in 1..actions.len() {
        let (prev, cur) = (actions[i - 1].suction(), actions[i].suction());
        edges[i] = (prev[0] != cur[0]) as usize + (prev[1] != cur[1]) as usize;
    }
    edges
}

impl SparsityAccumulator {
    pub fn new(horizon: usize, stride: usize) -> Result<Self, DataError> {
        if horizon == 0 || stride == 0 {
            return Err(DataError::InvalidHorizon);
        }
        Ok(Self {
            report: SparsityReport {
                horizon,
                stride,
                overall: ChunkStats::default(),
                per_task: BTreeMap::new(),
                histogram: BTreeMap::new(),
            },
        })
    }

    pub fn add_actions(&mut self, task_id: u8, actions: &[ActionVector]) {
        let r = &mut self.report;
        let edges = toggle_edges(actions);
        let mut prefix = Vec::with_capacity(edges.len() + 1);
        prefix.push(0usize);
        for e in &edges {
            prefix.push(prefix.last().unwrap() + e);
        }
        let mut stats = ChunkStats {
            episodes: 1,
            ..Default::default()
        };
        for start in chunk_starts(actions.len(), r.stride) {
            let end = (start + r.horizon).min(actions.len());
            let count = prefix[end] - prefix[start];
            stats.chunks += 1;
            stats.toggle_chunks += (count > 0) as usize;
            *r.histogram.entry(count).or_default() += 1;
        }
        r.per_task.entry(task_id).or_default().add(&stats);
        r.overall.add(&stats);
    }

    pub fn add(&mut self, ep: &Episode) {
        let actions: Vec<ActionVector> = ep.actions().copied().collect();
        self.add_actions(ep.task_id(), &actions);
    }

    pub fn finish(self) -> SparsityReport {
        self.report
    }
}

pub fn toggle_sparsity(dataset: &[Episode], horizon: usize, stride: usize) -> Result<SparsityReport, DataError> {
    if dataset.is_empty() {
        return Err(DataError::Invalid("dataset is empty".into()));
    }
    let mut acc = SparsityAccumulator::new(horizon, stride)?;
    for ep in dataset {
        acc.add(ep);
    }
    Ok(acc.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::action::assemble_action;
    use crate::data::episode::{EpisodeHeader, Step};
    use crate::data::ProprioState;

    fn episode_with_toggles(n: usize, on: usize, off: usize) -> Episode {
        let steps = (0..n)
            .map(|i| {
                let s = if (on..off).contains(&i) { 1.0 } else { 0.0 };
                Step {
                    t: i as f64 / 30.0,
                    proprio: ProprioState::new([[0.0; 6]; 2], [0.0; 2]),
                    action: assemble_action(&[0.0; 6], &[0.0; 6], &[0.0; 2], &[0.0, s]).unwrap(),
                    pressure: [0.0; 2],
                    subtask: None,
                    image_refs: None,
                }
            })
            .collect();
        Episode::new(EpisodeHeader::new(2, "x", 30.0), steps).unwrap()
    }

    #[test]
    fn constant_suction_is_zero() {
        let r = toggle_sparsity(&[episode_with_toggles(120, 500, 500)], 50, 50).unwrap();
        assert_eq!(r.overall.toggle_chunks, 0);
        assert_eq!(r.overall.fraction(), 0.0);
    }

    #[test]
    fn two_toggles_hit_two_of_six_chunks() {
        let r = toggle_sparsity(&[episode_with_toggles(300, 100, 200)], 50, 50).unwrap();
        assert_eq!(r.overall.chunks, 6);
        assert_eq!(r.overall.toggle_chunks, 2);
        assert_eq!(r.histogram.get(&1), Some(&2));
        assert_eq!(r.histogram.get(&0), Some(&4));
        assert_eq!(r.per_task[&2].toggle_chunks, 2);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(toggle_sparsity(&[], 50, 50).is_err());
    }
}
