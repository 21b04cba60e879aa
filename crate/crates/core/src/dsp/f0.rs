//! Normalized-autocorrelation pitch tracking.
//!
//! For each frame the segment `x[s..s+L]` is correlated against
//! `x[s+lag..s+lag+L]` for every lag in the F0 search band, normalized by the
//! energies of both segments. `L` is the window length, shortened near the
//! end of the clip (lags leaving less than half a window are skipped).
//!
//! A frame is voiced when the highest correlation of the raw signal in the
//! band reaches the voicing threshold; that value is the confidence. The
//! period itself is picked on a low-passed copy (zero-phase second-order
//! Butterworth at [`LOWPASS_HZ`]) so that sharp, jittered pulses and formant
//! ringing do not win: the lag maximizing
//! `r(lag) - OCTAVE_COST * log2(lag / min_lag)` over local maxima, then
//! refined by parabolic interpolation.

use super::FrameConfig;
use crate::corpus::AudioClip;
use crate::error::Result;

pub const LOWPASS_HZ: f64 = 1000.0;
const SUBMULTIPLE_RATIO: f64 = 0.75;
const OCTAVE_COST: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Frame {
    /// `None` when unvoiced.
    pub f0: Option<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F0Contour {
    pub frames: Vec<F0Frame>,
}

impl F0Contour {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn voiced(&self) -> impl Iterator<Item = f64> + '_ {
        self.frames.iter().filter_map(|f| f.f0)
    }

    pub fn voiced_ratio(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.voiced().count() as f64 / self.frames.len() as f64
    }

    pub fn mean_voiced_f0(&self) -> Option<f64> {
        let v: Vec<f64> = self.voiced().collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Forward-backward biquad low-pass (cookbook coefficients, Q = 1/sqrt 2).
fn lowpass(x: &[f64], cutoff: f64, sr: f64) -> Vec<f64> {
    let w0 = std::f64::consts::TAU * cutoff / sr;
    let alpha = w0.sin() / std::f64::consts::SQRT_2;
    let cos = w0.cos();
    let a0 = 1.0 + alpha;
    let b = [(1.0 - cos) / 2.0 / a0, (1.0 - cos) / a0, (1.0 - cos) / 2.0 / a0];
    let a = [-2.0 * cos / a0, (1.0 - alpha) / a0];
    let pass = |input: &mut dyn Iterator<Item = f64>| -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        input
            .map(|x0| {
                let y0 = b[0] * x0 + b[1] * x1 + b[2] * x2 - a[0] * y1 - a[1] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    };
    let forward = pass(&mut x.iter().copied());
    let mut back = pass(&mut forward.into_iter().rev());
    back.reverse();
    back
}

/// Normalized cross-correlation of one signal at arbitrary frame offsets.
struct Correlator<'a> {
    x: &'a [f64],
    prefix: Vec<f64>,
}

impl<'a> Correlator<'a> {
    fn new(x: &'a [f64]) -> Self {
        let mut prefix = Vec::with_capacity(x.len() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for s in x {
            acc += s * s;
            prefix.push(acc);
        }
        Correlator { x, prefix }
    }

    fn energy(&self, from: usize, len: usize) -> f64 {
        (self.prefix[from + len] - self.prefix[from]).max(0.0)
    }

    /// `r[lag]` for every lag in `lags`; NaN where fewer than `min_len`
    /// samples remain.
    fn fill(&self, s: usize, w: usize, min_len: usize, lags: std::ops::RangeInclusive<usize>, r: &mut [f64]) {
        let x = self.x;
        for lag in lags {
            let len = w.min(x.len().saturating_sub(s + lag));
            r[lag] = if len < min_len {
                f64::NAN
            } else {
                let num: f64 = x[s..s + len].iter().zip(&x[s + lag..s + lag + len]).map(|(p, q)| p * q).sum();
                let den = (self.energy(s, len) * self.energy(s + lag, len)).sqrt();
                if den > 0.0 {
                    num / den
                } else {
                    0.0
                }
            };
        }
    }
}

pub fn extract_f0(clip: &AudioClip, cfg: &FrameConfig) -> Result<F0Contour> {
    let n_frames = cfg.check_clip(clip)?;
    let sr = clip.sample_rate() as f64;
    let w = cfg.window_samples(clip.sample_rate());
    let h = cfg.hop_samples(clip.sample_rate());
    let filtered = lowpass(clip.samples(), LOWPASS_HZ.min(0.45 * sr), sr);
    let smooth = Correlator::new(&filtered);
    let plain = Correlator::new(clip.samples());

    let lag_lo = ((sr / cfg.f0_max).floor() as usize).max(2);
    let lag_hi = (sr / cfg.f0_min).ceil() as usize;
    let min_len = w / 2;

    let mut frames = Vec::with_capacity(n_frames);
    let mut r = vec![f64::NAN; lag_hi + 2];
    let mut r_plain = vec![f64::NAN; lag_hi + 2];
    for i in 0..n_frames {
        let s = i * h;
        smooth.fill(s, w, min_len, lag_lo - 1..=lag_hi + 1, &mut r);
        plain.fill(s, w, min_len, lag_lo..=lag_hi, &mut r_plain);
        let peak = r_plain[lag_lo..=lag_hi]
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max);

        let mut best: Option<(usize, f64)> = None;
        for lag in lag_lo..=lag_hi {
            let v = r[lag];
            if v.is_nan() {
                continue;
            }
            let left = r[lag - 1];
            let right = r[lag + 1];
            let is_peak = (left.is_nan() || v >= left) && (right.is_nan() || v >= right);
            if !is_peak {
                continue;
            }
            let score = v - OCTAVE_COST * (lag as f64 / lag_lo as f64).log2();
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((lag, score));
            }
        }

        // A fractional period can correlate less than an exact multiple of
        // it; prefer a strong peak near best / k.
        if let Some((lag, _)) = best {
            let floor = SUBMULTIPLE_RATIO * r[lag];
            for k in (2..=4).rev() {
                let centre = (lag as f64 / k as f64).round() as usize;
                let found = (centre.saturating_sub(2).max(lag_lo)..=(centre + 2).min(lag_hi))
                    .filter(|&l| {
                        let v = r[l];
                        v.is_finite()
                            && v >= floor
                            && (r[l - 1].is_nan() || v >= r[l - 1])
                            && (r[l + 1].is_nan() || v >= r[l + 1])
                    })
                    .max_by(|&a, &b| r[a].total_cmp(&r[b]));
                if let Some(l) = found {
                    best = Some((l, r[l]));
                    break;
                }
            }
        }

        let confidence = if peak.is_finite() { peak.clamp(0.0, 1.0) } else { 0.0 };
        let frame = match best {
            Some((lag, _)) if peak >= cfg.voicing_threshold => {
                let (l, c, rr) = (r[lag - 1], r[lag], r[lag + 1]);
                let mut offset = 0.0;
                if l.is_finite() && rr.is_finite() {
                    let denom = l - 2.0 * c + rr;
                    if denom < 0.0 {
                        offset = (0.5 * (l - rr) / denom).clamp(-0.5, 0.5);
                    }
                }
                let f0 = (sr / (lag as f64 + offset)).clamp(cfg.f0_min, cfg.f0_max);
                F0Frame {
                    f0: Some(f0),
                    confidence,
                }
            }
            _ => F0Frame { f0: None, confidence },
        };
        frames.push(frame);
    }
    Ok(F0Contour { frames })
}
