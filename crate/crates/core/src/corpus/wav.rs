//! RIFF/WAVE reading and writing (PCM16 and IEEE float32).

use std::fs;
use std::path::Path;

use super::AudioClip;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

/// Loads a WAV file as a mono clip. Multi-channel input is averaged per
/// sample. The file's rate must equal `expected_rate`; nothing is resampled.
pub fn load_wav(path: impl AsRef<Path>, expected_rate: u32) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let clip = read_wav_bytes(&bytes)?;
    if clip.sample_rate() != expected_rate {
        return Err(Error::Wav(format!(
            "{}: sample rate {} Hz, expected {} Hz",
            path.display(),
            clip.sample_rate(),
            expected_rate
        )));
    }
    Ok(clip)
}

struct Fmt {
    format: u16,
    channels: u16,
    rate: u32,
    bits: u16,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Wav("not a RIFF/WAVE container".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::Wav("chunk extends past end of file".into()))?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::Wav("fmt chunk too short".into()));
                }
                let mut format = u16_at(body, 0);
                if format == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(Error::Wav("extensible fmt chunk too short".into()));
                    }
                    // first two bytes of the sub-format GUID carry the format tag
                    format = u16_at(body, 24);
                }
                fmt = Some(Fmt {
                    format,
                    channels: u16_at(body, 2),
                    rate: u32_at(body, 4),
                    bits: u16_at(body, 14),
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| Error::Wav("missing fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Wav("missing data chunk".into()))?;
    if fmt.channels == 0 {
        return Err(Error::Wav("zero channels".into()));
    }
    if fmt.rate == 0 {
        return Err(Error::Wav("zero sample rate".into()));
    }
    let channels = fmt.channels as usize;

    let interleaved: Vec<f64> = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => data
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
            .collect(),
        (FORMAT_FLOAT, 32) => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
        (f, b) => {
            return Err(Error::Wav(format!(
                "unsupported encoding (format tag {f}, {b} bits); need PCM16 or float32"
            )))
        }
    };
    if interleaved.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("wav data"));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| frame.iter().sum::<f64>() / channels as f64)
            .collect()
    };
    AudioClip::new(samples, fmt.rate)
}

fn encode(clip: &AudioClip, format: SampleFormat) -> Vec<u8> {
    let (tag, bits) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 16u16),
        SampleFormat::Float32 => (FORMAT_FLOAT, 32u16),
    };
    let bytes_per_sample = (bits / 8) as u32;
    let data_len = clip.len() as u32 * bytes_per_sample;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate().to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate() * bytes_per_sample).to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample as u16).to_le_bytes());
    out.extend_from_slice(&bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        match format {
            SampleFormat::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    out
}

/// Writes a mono WAV file.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(clip, format)).map_err(|e| Error::io(path, e))
}
