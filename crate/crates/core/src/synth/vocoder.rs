//! Source-filter vocoder: pulse-train or noise excitation shaped by the
//! spectral envelope implied by each frame's mel cepstra.
//!
//! The envelope is calibrated against the analysis front end, so that
//! re-analysing the output of a stationary frame gives back its cepstra up
//! to the smoothing of the mel interpolation.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::acoustic::Trajectories;
use crate::corpus::AudioClip;
use crate::dsp::{hz_to_mel, idct, FrameConfig, MelFilterbank, WindowShape};
use crate::error::{Error, Result};

const PEAK_LIMIT: f64 = 0.9;

/// Per-bin interpolation weights from mel-band centres onto FFT bins.
struct EnvelopeMap {
    /// (lower band, fraction toward the next band) per bin.
    bins: Vec<(usize, f64)>,
    /// ln of each filter's weight sum.
    log_weight_sums: Vec<f64>,
    /// ln of the analysis window energy.
    log_window_energy: f64,
}

impl EnvelopeMap {
    fn new(frame: &FrameConfig, sample_rate: u32, n_bins: usize, fft_len: usize) -> Self {
        let w = frame.window_samples(sample_rate);
        let bank = MelFilterbank::new(frame.n_mel_filters, w.next_power_of_two(), sample_rate);
        let centres: Vec<f64> = bank.centers_hz().iter().map(|&f| hz_to_mel(f)).collect();
        let m = centres.len();
        let bins = (0..n_bins)
            .map(|k| {
                let mel = hz_to_mel(k as f64 * sample_rate as f64 / fft_len as f64);
                if mel <= centres[0] {
                    (0, 0.0)
                } else if mel >= centres[m - 1] {
                    (m - 1, 0.0)
                } else {
                    let j = centres.partition_point(|&c| c <= mel) - 1;
                    (j, (mel - centres[j]) / (centres[j + 1] - centres[j]))
                }
            })
            .collect();
        let window_energy: f64 = frame.window.coefficients(w).iter().map(|c| c * c).sum();
        EnvelopeMap {
            bins,
            log_weight_sums: bank.weight_sums().iter().map(|s| s.max(1e-12).ln()).collect(),
            log_window_energy: window_energy.ln(),
        }
    }

    /// Filter magnitude per bin for one frame of cepstra.
    fn magnitudes(&self, cepstra: &[f64], out: &mut [f64]) {
        let log_mel = idct(cepstra, self.log_weight_sums.len());
        let per_bin: Vec<f64> = log_mel
            .iter()
            .zip(&self.log_weight_sums)
            .map(|(l, w)| l - w - self.log_window_energy)
            .collect();
        let m = per_bin.len();
        for (slot, &(j, frac)) in out.iter_mut().zip(&self.bins) {
            let v = if frac == 0.0 || j + 1 >= m {
                per_bin[j]
            } else {
                per_bin[j] + frac * (per_bin[j + 1] - per_bin[j])
            };
            *slot = (0.5 * v).exp();
        }
    }
}

/// Unit-power excitation: equal-amplitude harmonics up to 0.95 of Nyquist
/// where voiced (a band-limited pulse train), white noise elsewhere.
fn excitation(traj: &Trajectories, frame: &FrameConfig, sample_rate: u32, noise_seed: u64) -> Vec<f64> {
    let w = frame.window_samples(sample_rate);
    let h = frame.hop_samples(sample_rate);
    let n_frames = traj.len();
    let n = (n_frames - 1) * h + w;
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let noise: f64 = rng.sample(StandardNormal);
            let t = ((i as f64 - w as f64 / 2.0) / h as f64).round().max(0.0) as usize;
            let t = t.min(n_frames - 1);
            if !traj.voiced[t] {
                return noise;
            }
            let f0 = traj.lf0[t].exp().clamp(frame.f0_min, frame.f0_max);
            phase += TAU * f0 / sr;
            if phase >= TAU {
                phase -= TAU;
            }
            let n_harm = ((0.95 * sr / 2.0) / f0).floor().max(1.0) as usize;
            // cos(k*phase) via the Chebyshev recurrence
            let two_cos = 2.0 * phase.cos();
            let (mut c_prev, mut c_cur) = (1.0, phase.cos());
            let mut acc = 0.0;
            for _ in 0..n_harm {
                acc += c_cur;
                let next = two_cos * c_cur - c_prev;
                c_prev = c_cur;
                c_cur = next;
            }
            acc * (2.0 / n_harm as f64).sqrt()
        })
        .collect()
}

/// Waveform before peak limiting, `(T - 1) * hop + window` samples long.
pub fn vocode_raw(traj: &Trajectories, frame: &FrameConfig, sample_rate: u32, noise_seed: u64) -> Result<Vec<f64>> {
    traj.check_aligned()?;
    frame.validate(sample_rate)?;
    if traj.is_empty() {
        return Err(Error::invalid("no frames to vocode"));
    }
    if traj.cepstra.iter().flatten().chain(&traj.lf0).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("vocoder parameters"));
    }
    let w = frame.window_samples(sample_rate);
    let h = frame.hop_samples(sample_rate);
    let fft_len = 2 * w.next_power_of_two();
    let n_bins = fft_len / 2 + 1;
    let map = EnvelopeMap::new(frame, sample_rate, n_bins, fft_len);
    let window = WindowShape::Hann.coefficients(w);
    let overlap_gain = window.iter().sum::<f64>() / h as f64;

    let exc = excitation(traj, frame, sample_rate, noise_seed);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);
    let offset = (fft_len - w) / 2;
    let mut out = vec![0.0; exc.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); fft_len];
    let mut mags = vec![0.0; n_bins];
    for t in 0..traj.len() {
        let start = t * h;
        buf.fill(Complex::new(0.0, 0.0));
        for (j, (e, c)) in exc[start..start + w].iter().zip(&window).enumerate() {
            buf[offset + j] = Complex::new(e * c, 0.0);
        }
        forward.process(&mut buf);
        map.magnitudes(&traj.cepstra[t], &mut mags);
        for (k, z) in buf.iter_mut().enumerate() {
            let bin = if k < n_bins { k } else { fft_len - k };
            *z *= mags[bin];
        }
        inverse.process(&mut buf);
        let scale = 1.0 / (fft_len as f64 * overlap_gain);
        for (j, z) in buf.iter().enumerate() {
            let idx = start as isize - offset as isize + j as isize;
            if idx >= 0 && (idx as usize) < out.len() {
                out[idx as usize] += z.re * scale;
            }
        }
    }
    Ok(out)
}

/// Vocodes and scales down, if needed, so the peak is at most 0.9.
pub fn vocode(traj: &Trajectories, frame: &FrameConfig, sample_rate: u32, noise_seed: u64) -> Result<AudioClip> {
    let mut out = vocode_raw(traj, frame, sample_rate, noise_seed)?;
    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > PEAK_LIMIT {
        let g = PEAK_LIMIT / peak;
        out.iter_mut().for_each(|s| *s *= g);
    }
    AudioClip::new(out, sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::extract_f0;

    fn constant(n: usize, f0: f64, voiced: bool, c0: f64, n_cep: usize) -> Trajectories {
        let mut cep = vec![0.0; n_cep];
        cep[0] = c0;
        Trajectories {
            cepstra: vec![cep; n],
            lf0: vec![f0.ln(); n],
            voiced: vec![voiced; n],
        }
    }

    fn synth_frame() -> FrameConfig {
        FrameConfig { n_mel_filters: 40, n_cepstra: 25, ..FrameConfig::default() }
    }

    #[test]
    fn output_length() {
        let f = synth_frame();
        let clip = vocode(&constant(10, 150.0, true, -2.0, 25), &f, 16_000, 1).unwrap();
        assert_eq!(clip.len(), 9 * 160 + 400);
    }

    #[test]
    fn pitch_round_trip() {
        let f = synth_frame();
        for hz in [100.0, 150.0, 200.0, 300.0] {
            let clip = vocode(&constant(100, hz, true, 0.0, 25), &f, 16_000, 1).unwrap();
            let contour = extract_f0(&clip, &FrameConfig::default()).unwrap();
            let good = contour
                .frames
                .iter()
                .filter(|fr| fr.f0.is_some_and(|v| (v - hz).abs() <= 0.03 * hz))
                .count();
            assert!(good as f64 >= 0.9 * contour.len() as f64, "{hz}: {good}/{}", contour.len());
        }
    }

    #[test]
    fn floor_is_silent() {
        let f = synth_frame();
        let clip = vocode(&constant(50, 100.0, false, f.log_floor, 25), &f, 16_000, 3).unwrap();
        assert!(clip.rms() < 1e-3);
    }

    #[test]
    fn c0_is_log_gain() {
        let f = synth_frame();
        let a = vocode_raw(&constant(60, 150.0, false, -3.0, 25), &f, 16_000, 5).unwrap();
        let b = vocode_raw(&constant(60, 150.0, false, -3.0 + 2.0 * 2f64.ln(), 25), &f, 16_000, 5).unwrap();
        let rms = |x: &[f64]| (x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64).sqrt();
        assert!((rms(&b) / rms(&a) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn misaligned_streams() {
        let mut t = constant(5, 150.0, true, 0.0, 25);
        t.voiced.pop();
        assert!(vocode(&t, &synth_frame(), 16_000, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let f = synth_frame();
        let t = constant(30, 150.0, false, -1.0, 25);
        assert_eq!(vocode(&t, &f, 16_000, 9).unwrap(), vocode(&t, &f, 16_000, 9).unwrap());
    }
}
