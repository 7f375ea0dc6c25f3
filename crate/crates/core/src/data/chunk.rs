use serde::{Deserialize, Serialize};

use super::action::ActionVector;
use super::episode::Episode;
use super::DataError;

pub const DEFAULT_HORIZON: usize = 50;

/// `horizon` consecutive actions starting at `start_index`. When the episode
/// runs out, the tail is filled by repeating the final action and `pad`
/// records how many entries are filler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionChunk {
    pub start_index: usize,
    pub actions: Vec<ActionVector>,
    pub pad: usize,
}

impl ActionChunk {
    pub fn horizon(&self) -> usize {
        self.actions.len()
    }

    /// The non-padding actions.
    pub fn real(&self) -> &[ActionVector] {
        &self.actions[..self.actions.len() - self.pad]
    }
}

/// Chunk start offsets for a sequence of `len` actions.
pub fn chunk_starts(len: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..len).step_by(stride.max(1))
}

pub fn chunk_actions(actions: &[ActionVector], horizon: usize, stride: usize) -> Result<Vec<ActionChunk>, DataError> {
    if horizon == 0 || stride == 0 {
        return Err(DataError::InvalidHorizon);
    }
    let last = *actions.last().ok_or(DataError::EmptyEpisode)?;
    Ok(chunk_starts(actions.len(), stride)
        .map(|start| {
            let end = (start + horizon).min(actions.len());
            let mut chunk = actions[start..end].to_vec();
            let pad = horizon - chunk.len();
            chunk.resize(horizon, last);
            ActionChunk {
                start_index: start,
                actions: chunk,
                pad,
            }
        })
        .collect())
}

/// Strided chunks when `stride == horizon`, overlapping (sliding) chunks
/// for smaller strides.
pub fn chunk_episode(ep: &Episode, horizon: usize, stride: usize) -> Result<Vec<ActionChunk>, DataError> {
    let actions: Vec<ActionVector> = ep.actions().copied().collect();
    chunk_actions(&actions, horizon, stride)
}

/// Rebuilds the action sequence from chunks, dropping padding. Overlapping
/// chunks must agree where they overlap.
pub fn flatten_chunks(chunks: &[ActionChunk]) -> Result<Vec<ActionVector>, DataError> {
    let mut out: Vec<Option<ActionVector>> = Vec::new();
    for chunk in chunks {
        for (i, a) in chunk.real().iter().enumerate() {
            let at = chunk.start_index + i;
            if out.len() <= at {
                out.resize(at + 1, None);
            }
            match out[at] {
                Some(prev) if prev != *a => {
                    return Err(DataError::Invalid(format!(
                        "overlapping chunks disagree at step {at}"
                    )))
                }
                _ => out[at] = Some(*a),
            }
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| DataError::Invalid(format!("no chunk covers step {i}"))))
        .collect()
}
