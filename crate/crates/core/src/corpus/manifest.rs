//! Tab-separated corpus manifests.
//!
//! One record per line:
//!
//! ```text
//! audio_path <TAB> speaker_id <TAB> condition_id <TAB> transcript [<TAB> label [<TAB> weight]]
//! ```
//!
//! `label` is six comma-separated decimals in canonical dimension order (may be
//! empty when a weight follows). Lines starting with `#` and blank lines are
//! ignored.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::emotion::{parse_vector, EmotionVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub audio_path: String,
    pub speaker_id: String,
    pub condition_id: String,
    pub transcript: String,
    pub label: Option<EmotionVector>,
    /// Per-sample training weight; `None` means 1.
    pub weight: Option<f64>,
}

impl UtteranceRecord {
    pub fn weight_or_default(&self) -> f64 {
        self.weight.unwrap_or(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    records: Vec<UtteranceRecord>,
    conditions: Vec<String>,
    speakers: Vec<String>,
    base_dir: PathBuf,
}

fn first_appearance<'a>(values: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen = HashSet::new();
    values
        .filter(|v| seen.insert(*v))
        .map(str::to_string)
        .collect()
}

impl Manifest {
    /// Builds a manifest from records, validating ids and duplicate
    /// (speaker, condition, path) triples. Relative audio paths resolve
    /// against `base_dir`.
    pub fn from_records(records: Vec<UtteranceRecord>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("manifest has no records"));
        }
        let mut triples = HashSet::new();
        for (i, r) in records.iter().enumerate() {
            if r.speaker_id.is_empty() || r.condition_id.is_empty() {
                return Err(Error::Manifest {
                    line: i + 1,
                    msg: "empty speaker or condition id".into(),
                });
            }
            if !triples.insert((&r.speaker_id, &r.condition_id, &r.audio_path)) {
                return Err(Error::Manifest {
                    line: i + 1,
                    msg: format!(
                        "duplicate record ({}, {}, {})",
                        r.speaker_id, r.condition_id, r.audio_path
                    ),
                });
            }
        }
        Ok(Manifest {
            conditions: first_appearance(records.iter().map(|r| r.condition_id.as_str())),
            speakers: first_appearance(records.iter().map(|r| r.speaker_id.as_str())),
            records,
            base_dir: base_dir.into(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut records = Vec::new();
        let mut triples = HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let record = parse_record(line).map_err(|msg| Error::Manifest { line: line_no, msg })?;
            if !triples.insert((
                record.speaker_id.clone(),
                record.condition_id.clone(),
                record.audio_path.clone(),
            )) {
                return Err(Error::Manifest {
                    line: line_no,
                    msg: "duplicate (speaker, condition, path) triple".into(),
                });
            }
            records.push(record);
        }
        if records.is_empty() {
            return Err(Error::Manifest {
                line: 0,
                msg: "manifest is empty".into(),
            });
        }
        Manifest::from_records(records, base_dir)
    }

    /// Serializes in the on-disk format. Labels use shortest round-trip
    /// decimal formatting so `parse(serialize(m)) == m`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}",
                r.audio_path, r.speaker_id, r.condition_id, r.transcript
            );
            if r.label.is_some() || r.weight.is_some() {
                out.push('\t');
                if let Some(label) = &r.label {
                    let parts: Vec<String> = label.values().iter().map(|v| v.to_string()).collect();
                    out.push_str(&parts.join(","));
                }
            }
            if let Some(w) = r.weight {
                let _ = write!(out, "\t{w}");
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>, header: Option<&str>) -> Result<()> {
        let path = path.as_ref();
        let mut text = String::new();
        if let Some(h) = header {
            for line in h.lines() {
                let _ = writeln!(text, "# {line}");
            }
        }
        text.push_str(&self.serialize());
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn audio_path(&self, record: &UtteranceRecord) -> PathBuf {
        let p = Path::new(&record.audio_path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Keeps records matching the predicate; errors if nothing remains.
    pub fn filtered(&self, keep: impl Fn(&UtteranceRecord) -> bool) -> Result<Self> {
        let records = self.records.iter().filter(|r| keep(r)).cloned().collect();
        Manifest::from_records(records, self.base_dir.clone())
    }
}

fn parse_record(line: &str) -> std::result::Result<UtteranceRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 4 {
        let missing = ["audio_path", "speaker_id", "condition_id", "transcript"][fields.len()];
        return Err(format!("missing field {missing}"));
    }
    if fields.len() > 6 {
        return Err(format!("too many fields ({})", fields.len()));
    }
    for (name, value) in ["audio_path", "speaker_id", "condition_id"].iter().zip(&fields) {
        if value.trim().is_empty() {
            return Err(format!("empty {name}"));
        }
    }
    let label = match fields.get(4).map(|s| s.trim()) {
        None | Some("") => None,
        Some(s) => {
            let values = parse_vector(s).map_err(|e| format!("label: {e}"))?;
            Some(EmotionVector::new(values).map_err(|e| format!("label: {e}"))?)
        }
    };
    let weight = match fields.get(5).map(|s| s.trim()) {
        None | Some("") => None,
        Some(s) => {
            let w: f64 = s.parse().map_err(|e| format!("weight {s:?}: {e}"))?;
            if !(w.is_finite() && w > 0.0) {
                return Err(format!("weight must be positive, got {w}"));
            }
            Some(w)
        }
    };
    Ok(UtteranceRecord {
        audio_path: fields[0].to_string(),
        speaker_id: fields[1].to_string(),
        condition_id: fields[2].to_string(),
        transcript: fields[3].to_string(),
        label,
        weight,
    })
}

/// Frames per phoneme for each audio path, as emitted by the synthetic
/// generator alongside its manifest.
pub type PhonemeDurations = BTreeMap<String, Vec<usize>>;

/// Sidecar format: `audio_path <TAB> n1,n2,...` (frames per phoneme).
pub fn load_durations(path: impl AsRef<Path>) -> Result<PhonemeDurations> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = PhonemeDurations::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| Error::Manifest { line: idx + 1, msg };
        let (audio, list) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected audio_path<TAB>durations".into()))?;
        let frames = list
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("durations: {e}")))?;
        if frames.contains(&0) {
            return Err(bad("zero-frame phoneme".into()));
        }
        out.insert(audio.to_string(), frames);
    }
    Ok(out)
}

pub fn write_durations(path: impl AsRef<Path>, durations: &[(String, Vec<usize>)]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for (audio, frames) in durations {
        let list: Vec<String> = frames.iter().map(usize::to_string).collect();
        let _ = writeln!(text, "{audio}\t{}", list.join(","));
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
