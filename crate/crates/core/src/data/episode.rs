//! Demonstration episodes and their newline-delimited JSON file format.
//!
//! Line 1 is a header object; every following non-empty line is one step:
//!
//! ```text
//! {"version":1,"task_id":3,"instruction":"...","rate_hz":30.0,"layout":[16 names],...}
//! {"t":0.0,"proprio":[14 floats],"action":[16 floats],"pressure":[l,r],"subtask":"..."}
//! ```
//!
//! Floats are written with shortest round-trip formatting, so a file read
//! back compares bit-equal to what was written.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::action::{ActionVector, ProprioState, ACTION_LAYOUT, PROPRIO_LAYOUT};
use super::DataError;

pub const EPISODE_VERSION: u64 = 1;
pub const DEFAULT_RATE_HZ: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeHeader {
    pub version: u64,
    pub task_id: u8,
    pub instruction: String,
    pub rate_hz: f64,
    pub layout: Vec<String>,
    pub proprio_layout: Vec<String>,
    /// Which arm(s) carried suction during collection, free-form.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
    /// Scene the episode starts from (path or built-in task name).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<String>,
}

impl EpisodeHeader {
    pub fn new(task_id: u8, instruction: impl Into<String>, rate_hz: f64) -> Self {
        Self {
            version: EPISODE_VERSION,
            task_id,
            instruction: instruction.into(),
            rate_hz,
            layout: ACTION_LAYOUT.iter().map(|s| s.to_string()).collect(),
            proprio_layout: PROPRIO_LAYOUT.iter().map(|s| s.to_string()).collect(),
            arm: None,
            scene: None,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.layout.len() != ACTION_LAYOUT.len()
            || self.layout.iter().zip(ACTION_LAYOUT).any(|(a, b)| a != b)
        {
            return Err(DataError::CorruptHeader(
                "action layout does not match the 16-wide layout".into(),
            ));
        }
        if self.proprio_layout.len() != PROPRIO_LAYOUT.len()
            || self.proprio_layout.iter().zip(PROPRIO_LAYOUT).any(|(a, b)| a != b)
        {
            return Err(DataError::CorruptHeader(
                "proprio layout does not match the 14-wide layout".into(),
            ));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(DataError::CorruptHeader("rate_hz must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub t: f64,
    pub proprio: ProprioState,
    pub action: ActionVector,
    /// Gauge pressure per arm, kPa.
    pub pressure: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtask: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_refs: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub header: EpisodeHeader,
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn new(header: EpisodeHeader, steps: Vec<Step>) -> Result<Self, DataError> {
        let ep = Self { header, steps };
        ep.validate()?;
        Ok(ep)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn task_id(&self) -> u8 {
        self.header.task_id
    }

    pub fn actions(&self) -> impl Iterator<Item = &ActionVector> + '_ {
        self.steps.iter().map(|s| &s.action)
    }

    /// Subtask annotations as contiguous step ranges.
    pub fn subtasks(&self) -> Vec<(Range<usize>, String)> {
        let mut out: Vec<(Range<usize>, String)> = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            let Some(label) = &step.subtask else { continue };
            match out.last_mut() {
                Some((range, last)) if range.end == i && last == label => range.end = i + 1,
                _ => out.push((i..i + 1, label.clone())),
            }
        }
        out
    }

    /// Dimensions and suction domain are enforced by the vector types; this
    /// checks the rest: header layout, monotone time, finite pressures.
    pub fn validate(&self) -> Result<(), DataError> {
        if self.header.version != EPISODE_VERSION {
            return Err(DataError::SchemaVersionMismatch {
                found: self.header.version,
                expected: EPISODE_VERSION,
            });
        }
        self.header.validate()?;
        for (i, step) in self.steps.iter().enumerate() {
            validate_step(step).map_err(|reason| DataError::CorruptRecord { index: i, reason })?;
            if i > 0 && step.t <= self.steps[i - 1].t {
                return Err(DataError::CorruptRecord {
                    index: i,
                    reason: format!(
                        "timestamp {} not after previous {}",
                        step.t,
                        self.steps[i - 1].t
                    ),
                });
            }
        }
        Ok(())
    }
}

fn validate_step(step: &Step) -> Result<(), String> {
    if !step.t.is_finite() {
        return Err("non-finite timestamp".into());
    }
    if step.pressure.iter().any(|p| !p.is_finite() || *p > 0.0) {
        return Err("pressure must be finite gauge kPa <= 0".into());
    }
    Ok(())
}

/// Appends steps to an episode file as they are produced.
pub struct EpisodeWriter<W: Write> {
    out: W,
    last_t: Option<f64>,
    written: usize,
}

impl EpisodeWriter<BufWriter<File>> {
    pub fn create(path: &Path, header: &EpisodeHeader) -> Result<Self, DataError> {
        Self::new(BufWriter::new(File::create(path)?), header)
    }
}

impl<W: Write> EpisodeWriter<W> {
    pub fn new(mut out: W, header: &EpisodeHeader) -> Result<Self, DataError> {
        header.validate()?;
        serde_json::to_writer(&mut out, header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        Ok(Self {
            out,
            last_t: None,
            written: 0,
        })
    }

    pub fn append(&mut self, step: &Step) -> Result<(), DataError> {
        let index = self.written;
        validate_step(step).map_err(|reason| DataError::CorruptRecord { index, reason })?;
        if let Some(prev) = self.last_t {
            if step.t <= prev {
                return Err(DataError::CorruptRecord {
                    index,
                    reason: "timestamps must increase".into(),
                });
            }
        }
        serde_json::to_writer(&mut self.out, step).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        self.last_t = Some(step.t);
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, DataError> {
        self.out.flush()?;
        Ok(self.out)
    }
}

pub fn write_episode_to<W: Write>(out: W, ep: &Episode) -> Result<W, DataError> {
    let mut w = EpisodeWriter::new(out, &ep.header)?;
    for step in &ep.steps {
        w.append(step)?;
    }
    w.finish()
}

pub fn write_episode(path: &Path, ep: &Episode) -> Result<(), DataError> {
    write_episode_to(BufWriter::new(File::create(path)?), ep)?;
    Ok(())
}

pub fn read_episode_from<R: Read>(input: R) -> Result<Episode, DataError> {
    let mut lines = BufReader::new(input).lines();
    let header_line = match lines.next() {
        Some(line) => line?,
        None => return Err(DataError::CorruptHeader("file is empty".into())),
    };
    let raw: Value = serde_json::from_str(&header_line)
        .map_err(|e| DataError::CorruptHeader(e.to_string()))?;
    // Version first, so a newer file is never half-parsed as this one.
    let version = raw
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| DataError::CorruptHeader("missing integer `version`".into()))?;
    if version != EPISODE_VERSION {
        return Err(DataError::SchemaVersionMismatch {
            found: version,
            expected: EPISODE_VERSION,
        });
    }
    let header: EpisodeHeader =
        serde_json::from_value(raw).map_err(|e| DataError::CorruptHeader(e.to_string()))?;
    header.validate()?;

    let mut steps: Vec<Step> = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let index = steps.len();
        let step: Step = serde_json::from_str(&line).map_err(|e| DataError::CorruptRecord {
            index,
            reason: e.to_string(),
        })?;
        steps.push(step);
    }
    Episode::new(header, steps)
}

pub fn read_episode(path: &Path) -> Result<Episode, DataError> {
    read_episode_from(File::open(path)?)
}

/// Episode files in `dir` (`*.ep` or `*.jsonl`), sorted by name.
pub fn list_episode_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, DataError> {
    let mut files: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("ep") | Some("jsonl")
                )
        })
        .collect();
    files.sort();
    Ok(files)
}
