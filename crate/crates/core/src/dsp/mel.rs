//! Mel filterbank and mel-cepstra.
//!
//! Cepstra use a mean-normalized DCT-II, `c_k = (1/M) sum_m L_m cos(pi k (m + 1/2) / M)`,
//! whose inverse is `L_m = c_0 + 2 sum_{k>=1} c_k cos(pi k (m + 1/2) / M)`. A flat
//! shift of every log filter energy therefore moves `c_0` by exactly that
//! amount and leaves the other coefficients alone.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::FrameConfig;
use crate::corpus::AudioClip;
use crate::error::Result;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters over the bins `0..=nfft/2` of a real FFT.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    nfft: usize,
    sample_rate: u32,
    centers_hz: Vec<f64>,
    /// (first bin, weights) per filter
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, nfft: usize, sample_rate: u32) -> Self {
        let sr = sample_rate as f64;
        let top = hz_to_mel(sr / 2.0);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_filters + 1) as f64))
            .collect();
        let bin_hz = sr / nfft as f64;
        let n_bins = nfft / 2 + 1;
        let filters = (0..n_filters)
            .map(|m| {
                let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let mut first = None;
                let mut weights = Vec::new();
                for k in 0..n_bins {
                    let f = k as f64 * bin_hz;
                    let wgt = if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    };
                    if wgt > 0.0 {
                        first.get_or_insert(k);
                        weights.push(wgt);
                    } else if first.is_some() {
                        break;
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        MelFilterbank {
            nfft,
            sample_rate,
            centers_hz: edges[1..=n_filters].to_vec(),
            filters,
        }
    }

    pub fn n_filters(&self) -> usize {
        self.filters.len()
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Sum of each filter's weights.
    pub fn weight_sums(&self) -> Vec<f64> {
        self.filters.iter().map(|(_, w)| w.iter().sum()).collect()
    }

    /// Filter outputs for a power spectrum of `nfft/2 + 1` bins.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&power[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// First `n_out` mean-normalized DCT-II coefficients.
pub fn dct(values: &[f64], n_out: usize) -> Vec<f64> {
    let m = values.len() as f64;
    (0..n_out)
        .map(|k| {
            values
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * k as f64 * (i as f64 + 0.5) / m).cos())
                .sum::<f64>()
                / m
        })
        .collect()
}

/// Inverse of [`dct`] from a (possibly truncated) coefficient list.
pub fn idct(coeffs: &[f64], n_out: usize) -> Vec<f64> {
    let m = n_out as f64;
    (0..n_out)
        .map(|i| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        *c
                    } else {
                        2.0 * c * (PI * k as f64 * (i as f64 + 0.5) / m).cos()
                    }
                })
                .sum()
        })
        .collect()
}

/// Per-frame power spectrum → mel filterbank → floored natural log.
pub fn log_mel_energies(clip: &AudioClip, cfg: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    let n_frames = cfg.check_clip(clip)?;
    let w = cfg.window_samples(clip.sample_rate());
    let h = cfg.hop_samples(clip.sample_rate());
    let nfft = w.next_power_of_two();
    let bank = MelFilterbank::new(cfg.n_mel_filters, nfft, clip.sample_rate());
    let window = cfg.window.coefficients(w);
    let fft = FftPlanner::new().plan_fft_forward(nfft);
    let x = clip.samples();
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let mut power = vec![0.0; nfft / 2 + 1];
    let mut out = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let frame = &x[i * h..i * h + w];
        for (slot, (s, c)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *slot = Complex::new(s * c, 0.0);
        }
        buf[w..].fill(Complex::new(0.0, 0.0));
        fft.process(&mut buf);
        for (p, z) in power.iter_mut().zip(&buf) {
            *p = z.norm_sqr();
        }
        let energies = bank.apply(&power);
        out.push(
            energies
                .iter()
                .map(|&e| if e > 0.0 { e.ln().max(cfg.log_floor) } else { cfg.log_floor })
                .collect(),
        );
    }
    Ok(out)
}

/// One row of `n_cepstra` coefficients per frame.
pub fn extract_mel_cepstra(clip: &AudioClip, cfg: &FrameConfig) -> Result<Vec<Vec<f64>>> {
    Ok(log_mel_energies(clip, cfg)?
        .iter()
        .map(|row| dct(row, cfg.n_cepstra))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mel_scale_inverse() {
        for hz in [0.0, 100.0, 1000.0, 7999.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 1000.0).abs() < 0.5);
    }

    #[test]
    fn every_filter_has_bins() {
        for (n, nfft) in [(26, 512), (40, 512), (40, 1024)] {
            let bank = MelFilterbank::new(n, nfft, 16_000);
            assert!(bank.weight_sums().iter().all(|&s| s > 0.0), "{n} {nfft}");
        }
    }

    #[test]
    fn dct_round_trip_full_order() {
        let v: Vec<f64> = (0..26).map(|i| ((i * 7) % 11) as f64 - 3.5).collect();
        let back = idct(&dct(&v, 26), 26);
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn silence_cepstra_are_the_floor_transform() {
        let cfg = FrameConfig::default();
        let c = extract_mel_cepstra(&AudioClip::new(vec![0.0; 2000], 16_000).unwrap(), &cfg).unwrap();
        let expected = dct(&vec![cfg.log_floor; cfg.n_mel_filters], cfg.n_cepstra);
        assert_eq!(expected[0], cfg.log_floor);
        for row in &c {
            assert_eq!(row.len(), 13);
            for (a, b) in row.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
