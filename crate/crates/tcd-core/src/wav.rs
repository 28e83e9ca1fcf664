//! Minimal PCM16 mono RIFF/WAVE read and write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, TcdError};
use crate::signal::Waveform;

/// Write a waveform as 16-bit PCM mono. Samples are clamped to [-1, 1].
pub fn write_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let num_samples = wave.len() as u32;
    let sample_rate = wave.sample_rate();
    let data_len = num_samples * 2;
    let byte_rate = sample_rate * 2;

    w.write_all(b"RIFF")?;
    w.write_all(&(36 + data_len).to_le_bytes())?;
    w.write_all(b"WAVE")?;
    w.write_all(b"fmt ")?;
    w.write_all(&16u32.to_le_bytes())?;
    w.write_all(&1u16.to_le_bytes())?; // PCM
    w.write_all(&1u16.to_le_bytes())?; // mono
    w.write_all(&sample_rate.to_le_bytes())?;
    w.write_all(&byte_rate.to_le_bytes())?;
    w.write_all(&2u16.to_le_bytes())?; // block align
    w.write_all(&16u16.to_le_bytes())?; // bits per sample
    w.write_all(b"data")?;
    w.write_all(&data_len.to_le_bytes())?;
    for &s in wave.samples() {
        let clamped = s.clamp(-1.0, 1.0);
        let q = (clamped * 32767.0).round() as i16;
        w.write_all(&q.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a 16-bit PCM mono WAV file. Rejects other encodings.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let mut r = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 44 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(TcdError::format("not a RIFF/WAVE file"));
    }

    let mut sample_rate = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_end = (pos + 8 + size).min(bytes.len());
        let body = &bytes[pos + 8..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(TcdError::format("fmt chunk too short"));
                }
                let format = u16::from_le_bytes(body[0..2].try_into().unwrap());
                let channels = u16::from_le_bytes(body[2..4].try_into().unwrap());
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes(body[14..16].try_into().unwrap());
                if format != 1 {
                    return Err(TcdError::format(format!(
                        "unsupported WAV format code {format}, want PCM (1)"
                    )));
                }
                if channels != 1 {
                    return Err(TcdError::format(format!(
                        "unsupported channel count {channels}, want mono"
                    )));
                }
                if bits != 16 {
                    return Err(TcdError::format(format!(
                        "unsupported bit depth {bits}, want 16"
                    )));
                }
                sample_rate = Some(rate);
            }
            b"data" => data = Some(body),
            _ => {} // skip unknown chunks (LIST, fact, ...)
        }
        // chunks are word-aligned
        pos += 8 + size + (size & 1);
    }

    let sample_rate = sample_rate.ok_or_else(|| TcdError::format("missing fmt chunk"))?;
    let data = data.ok_or_else(|| TcdError::format("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(TcdError::format("data chunk has odd byte length"));
    }
    let samples: Vec<f64> = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32767.0)
        .collect();
    Waveform::new(samples, sample_rate)
}
