//! Per-condition emotion statistics and the affine transform that maps
//! target-speaker condition means onto synthesizer inputs.
//!
//! `e'_c = alpha * lambda * (e_c - e) + a`, where `e_c` is the mean
//! recognized emotion under condition `c`, `e` the mean of the `e_c`, `a` the
//! mean over the synthesizer corpus and `lambda` rescales the across-condition
//! spread to the average within-speaker spread.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Manifest;
use crate::emotion::{format_vector, EMOTION_DIMS, SCALE_MAX, SCALE_MIN};
use crate::error::{Error, Result};
use crate::par::Execution;
use crate::ser::{recognize_manifest, SerModel};

pub type Vector = [f64; EMOTION_DIMS];

fn mean_of<'a>(vs: impl IntoIterator<Item = &'a Vector>) -> Option<Vector> {
    let mut acc = [0.0; EMOTION_DIMS];
    let mut n = 0usize;
    for v in vs {
        for d in 0..EMOTION_DIMS {
            acc[d] += v[d];
        }
        n += 1;
    }
    (n > 0).then(|| acc.map(|s| s / n as f64))
}

fn population_variance(vs: &[Vector]) -> Vector {
    let m = mean_of(vs).unwrap_or([0.0; EMOTION_DIMS]);
    let mut acc = [0.0; EMOTION_DIMS];
    for v in vs {
        for d in 0..EMOTION_DIMS {
            acc[d] += (v[d] - m[d]) * (v[d] - m[d]);
        }
    }
    acc.map(|s| s / vs.len().max(1) as f64)
}

fn check_finite(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Recognized emotion per (speaker, condition) cell and per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionEmotionTable {
    conditions: Vec<String>,
    speakers: Vec<String>,
    /// `cells[t][c]`: within-speaker mean of the cell's utterances.
    cells: Vec<Vec<Option<Vector>>>,
    counts: Vec<Vec<usize>>,
    means: Vec<Vector>,
    warnings: Vec<String>,
}

impl ConditionEmotionTable {
    /// Builds the table from labelled observations. Conditions and speakers
    /// keep first-appearance order; several utterances in one cell are
    /// averaged before averaging across speakers.
    pub fn from_observations<S: AsRef<str>>(observations: &[(S, S, Vector)]) -> Result<Self> {
        let mut speakers: Vec<String> = Vec::new();
        let mut conditions: Vec<String> = Vec::new();
        for (t, c, v) in observations {
            check_finite(v, "emotion observation")?;
            if !speakers.iter().any(|s| s == t.as_ref()) {
                speakers.push(t.as_ref().to_string());
            }
            if !conditions.iter().any(|s| s == c.as_ref()) {
                conditions.push(c.as_ref().to_string());
            }
        }
        let mut sums = vec![vec![[0.0; EMOTION_DIMS]; conditions.len()]; speakers.len()];
        let mut counts = vec![vec![0usize; conditions.len()]; speakers.len()];
        for (t, c, v) in observations {
            let ti = speakers.iter().position(|s| s == t.as_ref()).unwrap();
            let ci = conditions.iter().position(|s| s == c.as_ref()).unwrap();
            for d in 0..EMOTION_DIMS {
                sums[ti][ci][d] += v[d];
            }
            counts[ti][ci] += 1;
        }
        let cells = sums
            .iter()
            .zip(&counts)
            .map(|(row, nrow)| {
                row.iter()
                    .zip(nrow)
                    .map(|(s, &n)| (n > 0).then(|| s.map(|x| x / n as f64)))
                    .collect()
            })
            .collect();
        Self::from_cells(speakers, conditions, cells, counts)
    }

    /// Builds the table from already averaged cells; `None` marks a missing
    /// cell. `counts` records how many utterances each cell averaged.
    pub fn from_cells(
        speakers: Vec<String>,
        conditions: Vec<String>,
        cells: Vec<Vec<Option<Vector>>>,
        counts: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if conditions.is_empty() || speakers.is_empty() {
            return Err(Error::Stats("no observations".into()));
        }
        if cells.len() != speakers.len() || cells.iter().any(|r| r.len() != conditions.len()) {
            return Err(Error::Stats("cell grid does not match speakers x conditions".into()));
        }
        let mut warnings = Vec::new();
        let mut means = Vec::with_capacity(conditions.len());
        for (ci, cond) in conditions.iter().enumerate() {
            for (ti, spk) in speakers.iter().enumerate() {
                match &cells[ti][ci] {
                    Some(v) => check_finite(v, "emotion cell")?,
                    None => warnings.push(format!(
                        "speaker {spk} has no utterances under condition {cond}; excluded from its mean"
                    )),
                }
            }
            let m = mean_of(cells.iter().filter_map(|row| row[ci].as_ref()))
                .ok_or_else(|| Error::Stats(format!("condition {cond} has no utterances")))?;
            means.push(m);
        }
        for (ti, spk) in speakers.iter().enumerate() {
            if cells[ti].iter().filter(|c| c.is_some()).count() < 2 {
                warnings.push(format!(
                    "speaker {spk} covers fewer than two conditions; excluded from the within-speaker variance"
                ));
            }
        }
        Ok(ConditionEmotionTable { conditions, speakers, cells, counts, means, warnings })
    }

    /// Table of recognized vectors for every record of `manifest`.
    pub fn from_manifest(manifest: &Manifest, vectors: &[Vector]) -> Result<Self> {
        if vectors.len() != manifest.len() {
            return Err(Error::Dimension { expected: manifest.len(), got: vectors.len() });
        }
        let obs: Vec<(&str, &str, Vector)> = manifest
            .records()
            .iter()
            .zip(vectors)
            .map(|(r, v)| (r.speaker_id.as_str(), r.condition_id.as_str(), *v))
            .collect();
        Self::from_observations(&obs)
    }

    pub fn conditions(&self) -> &[String] {
        &self.conditions
    }

    pub fn speakers(&self) -> &[String] {
        &self.speakers
    }

    pub fn cell(&self, speaker: usize, condition: usize) -> Option<&Vector> {
        self.cells[speaker][condition].as_ref()
    }

    pub fn count(&self, speaker: usize, condition: usize) -> usize {
        self.counts[speaker][condition]
    }

    /// `e_c` in condition order.
    pub fn means(&self) -> &[Vector] {
        &self.means
    }

    pub fn condition_mean(&self, condition: &str) -> Option<&Vector> {
        self.conditions.iter().position(|c| c == condition).map(|i| &self.means[i])
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Recognizes every utterance of `manifest` and tabulates the results.
pub fn condition_means(model: &SerModel, manifest: &Manifest, exec: Execution) -> Result<ConditionEmotionTable> {
    let vectors: Vec<Vector> = recognize_manifest(model, manifest, exec)?.iter().map(|v| *v.values()).collect();
    ConditionEmotionTable::from_manifest(manifest, &vectors)
}

pub fn mean_vector(vectors: &[Vector]) -> Result<Vector> {
    for v in vectors {
        check_finite(v, "emotion vector")?;
    }
    mean_of(vectors).ok_or_else(|| Error::Stats("corpus is empty".into()))
}

/// Mean recognized emotion over the synthesizer corpus.
pub fn corpus_mean(model: &SerModel, corpus: &Manifest, exec: Execution) -> Result<Vector> {
    let vectors: Vec<Vector> = recognize_manifest(model, corpus, exec)?.iter().map(|v| *v.values()).collect();
    mean_vector(&vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub a: Vector,
    pub e: Vector,
    pub lambda: f64,
    pub alpha: f64,
    pub v_t: Vector,
    pub v_e: Vector,
}

pub fn compute_transform_params(table: &ConditionEmotionTable, a: &Vector, alpha: f64) -> Result<TransformParams> {
    check_finite(a, "corpus mean")?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Stats(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    if table.conditions.len() < 2 {
        return Err(Error::Stats("at least two conditions are required".into()));
    }
    let e = mean_of(&table.means).unwrap();
    let v_e = population_variance(&table.means);

    let per_speaker: Vec<Vector> = table
        .cells
        .iter()
        .filter_map(|row| {
            let present: Vec<Vector> = row.iter().flatten().copied().collect();
            (present.len() >= 2).then(|| population_variance(&present))
        })
        .collect();
    let v_t = mean_of(&per_speaker)
        .ok_or_else(|| Error::Stats("no speaker covers two or more conditions".into()))?;

    let sum_e: f64 = v_e.iter().sum();
    let sum_t: f64 = v_t.iter().sum();
    if sum_e <= 0.0 {
        return Err(Error::Stats("all condition means are identical; the transform is undefined".into()));
    }
    let lambda = (sum_t / sum_e).sqrt();
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Stats(format!("variance ratio gives lambda = {lambda}")));
    }
    Ok(TransformParams { a: *a, e, lambda, alpha, v_t, v_e })
}

impl TransformParams {
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::Stats(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(TransformParams { alpha, ..*self })
    }

    /// `e'_c`; unclamped.
    pub fn apply(&self, e_c: &Vector) -> Result<Vector> {
        check_finite(e_c, "condition mean")?;
        let k = self.alpha * self.lambda;
        Ok(std::array::from_fn(|d| k * (e_c[d] - self.e[d]) + self.a[d]))
    }

    pub fn apply_clamped(&self, e_c: &Vector) -> Result<Vector> {
        Ok(self.apply(e_c)?.map(|x| x.clamp(SCALE_MIN, SCALE_MAX)))
    }
}

pub fn apply_transform(params: &TransformParams, e_c: &Vector) -> Result<Vector> {
    params.apply(e_c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub speaker: String,
    pub condition: String,
    pub utterances: usize,
    pub mean: Vector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub mean: Vector,
    pub transformed: Vector,
}

/// Everything the transform stage computed, in a form the synthesis stage
/// and humans can read back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub config_checksum: String,
    pub clamped: bool,
    pub params: TransformParams,
    pub conditions: Vec<ConditionReport>,
    pub cells: Vec<CellReport>,
    pub warnings: Vec<String>,
}

impl StatsReport {
    pub fn build(table: &ConditionEmotionTable, params: &TransformParams, clamp: bool, config_checksum: &str) -> Result<Self> {
        let conditions = table
            .conditions
            .iter()
            .zip(&table.means)
            .map(|(c, m)| {
                let transformed = if clamp { params.apply_clamped(m)? } else { params.apply(m)? };
                Ok(ConditionReport { condition: c.clone(), mean: *m, transformed })
            })
            .collect::<Result<_>>()?;
        let mut cells = Vec::new();
        for (ti, spk) in table.speakers.iter().enumerate() {
            for (ci, cond) in table.conditions.iter().enumerate() {
                if let Some(m) = table.cells[ti][ci] {
                    cells.push(CellReport {
                        speaker: spk.clone(),
                        condition: cond.clone(),
                        utterances: table.counts[ti][ci],
                        mean: m,
                    });
                }
            }
        }
        Ok(StatsReport {
            config_checksum: config_checksum.to_string(),
            clamped: clamp,
            params: *params,
            conditions,
            cells,
            warnings: table.warnings.clone(),
        })
    }

    /// Recomputes every `e'_c` under a different `alpha`.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let params = self.params.with_alpha(alpha)?;
        let conditions = self
            .conditions
            .iter()
            .map(|c| {
                let transformed = if self.clamped { params.apply_clamped(&c.mean)? } else { params.apply(&c.mean)? };
                Ok(ConditionReport { transformed, ..c.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(StatsReport { params, conditions, ..self.clone() })
    }

    pub fn transformed(&self, condition: &str) -> Option<&Vector> {
        self.conditions.iter().find(|c| c.condition == condition).map(|c| &c.transformed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("stats report: {e}")))
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_text(&self) -> String {
        let p = &self.params;
        let v = |x: &Vector| format_vector(x, 6);
        let mut s = String::new();
        let _ = writeln!(s, "config_checksum {}", self.config_checksum);
        let _ = writeln!(s, "alpha {:.6}", p.alpha);
        let _ = writeln!(s, "lambda {:.6}", p.lambda);
        let _ = writeln!(s, "a {}", v(&p.a));
        let _ = writeln!(s, "e {}", v(&p.e));
        let _ = writeln!(s, "V_t {}", v(&p.v_t));
        let _ = writeln!(s, "V_e {}", v(&p.v_e));
        for c in &self.conditions {
            let _ = writeln!(s, "e_c {} {}", c.condition, v(&c.mean));
        }
        for c in &self.conditions {
            let _ = writeln!(s, "e'_c {} {}", c.condition, v(&c.transformed));
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning {w}");
        }
        s
    }
}
