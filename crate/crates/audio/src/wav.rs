//! 16-bit PCM mono WAV input and output.

use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use crate::error::{AudioError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct WavAudio {
    pub sample_rate_hz: u32,
    pub samples: Vec<f64>,
}

fn spec(sample_rate_hz: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate: sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn map_err(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io) => AudioError::Wav(io.to_string()),
        other => AudioError::UnsupportedWav(other.to_string()),
    }
}

pub fn read_wav_from<R: Read>(reader: R) -> Result<WavAudio> {
    let reader = hound::WavReader::new(reader).map_err(map_err)?;
    let s = reader.spec();
    if s.channels != 1 || s.bits_per_sample != 16 || s.sample_format != hound::SampleFormat::Int {
        return Err(AudioError::UnsupportedWav(format!(
            "need 16-bit integer mono PCM, got {} channel(s), {} bits, {:?}",
            s.channels, s.bits_per_sample, s.sample_format
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(map_err)?;
    Ok(WavAudio {
        sample_rate_hz: s.sample_rate,
        samples,
    })
}

pub fn read_wav_bytes(bytes: &[u8]) -> Result<WavAudio> {
    read_wav_from(Cursor::new(bytes))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| AudioError::Wav(e.to_string()))?;
    read_wav_from(std::io::BufReader::new(file))
}

pub fn to_pcm16(x: f64) -> i16 {
    let x = if x.is_finite() { x.clamp(-1.0, 1.0) } else { 0.0 };
    (x * 32767.0).round() as i16
}

pub fn write_wav_to<W: Write + Seek>(writer: W, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    let mut w = hound::WavWriter::new(writer, spec(sample_rate_hz)).map_err(map_err)?;
    for &s in samples {
        w.write_sample(to_pcm16(s)).map_err(map_err)?;
    }
    w.finalize().map_err(map_err)
}

pub fn wav_bytes(samples: &[f64], sample_rate_hz: u32) -> Result<Vec<u8>> {
    let mut cursor = Cursor::new(Vec::new());
    write_wav_to(&mut cursor, samples, sample_rate_hz)?;
    Ok(cursor.into_inner())
}

pub fn write_wav(path: impl AsRef<Path>, samples: &[f64], sample_rate_hz: u32) -> Result<()> {
    std::fs::write(path.as_ref(), wav_bytes(samples, sample_rate_hz)?)
        .map_err(|e| AudioError::Wav(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_canonical_pcm16() {
        let bytes = wav_bytes(&[0.0, 0.5, -0.5], 16_000).unwrap();
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        assert_eq!(u16::from_le_bytes([bytes[20], bytes[21]]), 1); // PCM
        assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 1); // mono
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 16_000);
        assert_eq!(u16::from_le_bytes([bytes[34], bytes[35]]), 16);
        assert_eq!(bytes.len(), 44 + 6);
    }

    #[test]
    fn pcm_values_survive() {
        let samples: Vec<f64> = [-32768i16, -1, 0, 1, 32767]
            .iter()
            .map(|&v| v as f64 / 32768.0)
            .collect();
        let back = read_wav_bytes(&wav_bytes(&samples, 16_000).unwrap()).unwrap();
        assert_eq!(back.sample_rate_hz, 16_000);
        for (a, b) in samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn rejects_stereo_and_garbage() {
        let mut cursor = Cursor::new(Vec::new());
        {
            let mut w = hound::WavWriter::new(
                &mut cursor,
                hound::WavSpec {
                    channels: 2,
                    ..spec(16_000)
                },
            )
            .unwrap();
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
            w.finalize().unwrap();
        }
        assert!(matches!(
            read_wav_bytes(&cursor.into_inner()),
            Err(AudioError::UnsupportedWav(_))
        ));
        assert!(read_wav_bytes(b"not a wav").is_err());
    }
}
