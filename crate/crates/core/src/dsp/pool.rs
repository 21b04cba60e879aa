//! Utterance-level pooling of frame features.

use super::{F0Contour, FrameConfig};
use crate::error::{Error, Result};
use crate::stats;

/// Summary statistics per stream plus voicing ratio and duration.
///
/// Layout: `[log-F0 | log-energy | c_0 | ... | c_{n-1}]` each as
/// `(mean, population std, p10, p90)`, then voiced-frame ratio, then
/// duration in seconds. Length `4 * (2 + n_cepstra) + 2`.
///
/// Utterances with no voiced frame get `ln(f0_min)` for every log-F0
/// location statistic and 0 for its std.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeatureVector(pub Vec<f64>);

impl UtteranceFeatureVector {
    pub fn len_for(n_cepstra: usize) -> usize {
        4 * (2 + n_cepstra) + 2
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    stats::percentile_sorted(&sorted, q)
}

fn summary(values: &[f64]) -> [f64; 4] {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    [
        stats::mean(values),
        stats::std_dev(values),
        stats::percentile_sorted(&sorted, 0.10),
        stats::percentile_sorted(&sorted, 0.90),
    ]
}

pub fn pool_utterance_features(
    f0: &F0Contour,
    energy: &[f64],
    cepstra: &[Vec<f64>],
    cfg: &FrameConfig,
) -> Result<UtteranceFeatureVector> {
    let n = f0.len();
    if n == 0 {
        return Err(Error::invalid("no frames to pool"));
    }
    if energy.len() != n || cepstra.len() != n {
        return Err(Error::invalid(format!(
            "frame counts differ: f0 {n}, energy {}, cepstra {}",
            energy.len(),
            cepstra.len()
        )));
    }
    if let Some(row) = cepstra.iter().find(|r| r.len() != cfg.n_cepstra) {
        return Err(Error::Dimension {
            expected: cfg.n_cepstra,
            got: row.len(),
        });
    }

    let mut out = Vec::with_capacity(UtteranceFeatureVector::len_for(cfg.n_cepstra));
    let log_f0: Vec<f64> = f0.voiced().map(f64::ln).collect();
    if log_f0.is_empty() {
        let sentinel = cfg.f0_min.ln();
        out.extend([sentinel, 0.0, sentinel, sentinel]);
    } else {
        out.extend(summary(&log_f0));
    }
    let floor = cfg.log_floor;
    let log_energy: Vec<f64> = energy
        .iter()
        .map(|&e| if e > 0.0 { e.ln().max(floor) } else { floor })
        .collect();
    out.extend(summary(&log_energy));
    let mut column = vec![0.0; n];
    for k in 0..cfg.n_cepstra {
        for (slot, row) in column.iter_mut().zip(cepstra) {
            *slot = row[k];
        }
        out.extend(summary(&column));
    }
    out.push(f0.voiced_ratio());
    out.push((n - 1) as f64 * cfg.hop_len + cfg.window_len);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pooled features"));
    }
    Ok(UtteranceFeatureVector(out))
}
