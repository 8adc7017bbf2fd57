//! Minimal mono 32-bit float PCM WAV reader and writer (format tag 3).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Write samples as mono IEEE-float WAV. Values are truncated to f32.
pub fn write_wav_f32(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let n = samples.len() as u32;
    let data_len = 4 * n;
    let byte_rate = sample_rate * 4;
    let mut buf: Vec<u8> = Vec::with_capacity(58 + data_len as usize);
    buf.extend_from_slice(b"RIFF");
    // riff size = 4 (WAVE) + (8+18 fmt) + (8+4 fact) + (8 + data)
    buf.extend_from_slice(&(4 + 26 + 12 + 8 + data_len).to_le_bytes());
    buf.extend_from_slice(b"WAVE");

    buf.extend_from_slice(b"fmt ");
    buf.extend_from_slice(&18u32.to_le_bytes());
    buf.extend_from_slice(&3u16.to_le_bytes()); // IEEE float
    buf.extend_from_slice(&1u16.to_le_bytes()); // mono
    buf.extend_from_slice(&sample_rate.to_le_bytes());
    buf.extend_from_slice(&byte_rate.to_le_bytes());
    buf.extend_from_slice(&4u16.to_le_bytes()); // block align
    buf.extend_from_slice(&32u16.to_le_bytes()); // bits per sample
    buf.extend_from_slice(&0u16.to_le_bytes()); // no extension

    // Non-PCM formats carry a fact chunk with the sample count.
    buf.extend_from_slice(b"fact");
    buf.extend_from_slice(&4u32.to_le_bytes());
    buf.extend_from_slice(&n.to_le_bytes());

    buf.extend_from_slice(b"data");
    buf.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        buf.extend_from_slice(&(s as f32).to_le_bytes());
    }

    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read a mono IEEE-float WAV written by [`write_wav_f32`] (or compatible).
pub fn read_wav_f32(path: &Path) -> Result<(Vec<f64>, u32)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 12 || &bytes[..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::malformed(path, "not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().expect("4 bytes")) as usize;
        let body_start = pos + 8;
        if body_start + size > bytes.len() {
            return Err(Error::malformed(path, "chunk overruns file"));
        }
        let body = &bytes[body_start..body_start + size];
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::malformed(path, "fmt chunk too short"));
                }
                let tag = u16::from_le_bytes(body[0..2].try_into().expect("2 bytes"));
                let channels = u16::from_le_bytes(body[2..4].try_into().expect("2 bytes"));
                let rate = u32::from_le_bytes(body[4..8].try_into().expect("4 bytes"));
                let bits = u16::from_le_bytes(body[14..16].try_into().expect("2 bytes"));
                fmt = Some((tag, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // Chunks are word-aligned.
        pos = body_start + size + (size & 1);
    }
    let (tag, channels, rate, bits) =
        fmt.ok_or_else(|| Error::malformed(path, "missing fmt chunk"))?;
    if tag != 3 || bits != 32 {
        return Err(Error::malformed(
            path,
            format!("expected 32-bit float PCM, got tag {tag} bits {bits}"),
        ));
    }
    if channels != 1 {
        return Err(Error::malformed(path, format!("expected mono, got {channels} channels")));
    }
    let data = data.ok_or_else(|| Error::malformed(path, "missing data chunk"))?;
    if data.len() % 4 != 0 {
        return Err(Error::malformed(path, "data chunk not a multiple of 4 bytes"));
    }
    let samples = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    Ok((samples, rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        let samples: Vec<f64> = (0..1000)
            .map(|i| ((i as f64) * 0.01).sin() * 0.8)
            .collect();
        write_wav_f32(&path, &samples, 8000).unwrap();
        let (got, rate) = read_wav_f32(&path).unwrap();
        assert_eq!(rate, 8000);
        assert_eq!(got.len(), samples.len());
        for (a, b) in got.iter().zip(&samples) {
            assert_eq!((*a as f32).to_bits(), (*b as f32).to_bits());
        }
    }

    #[test]
    fn rejects_non_wav() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.wav");
        std::fs::write(&path, b"not a wav at all").unwrap();
        assert!(read_wav_f32(&path).is_err());
    }

    #[test]
    fn empty_signal_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.wav");
        write_wav_f32(&path, &[], 8000).unwrap();
        let (got, rate) = read_wav_f32(&path).unwrap();
        assert_eq!(rate, 8000);
        assert!(got.is_empty());
    }
}
