use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioSignal;
use crate::error::{Error, Result};

/// Reads a mono PCM16 or float32 WAV file.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioSignal> {
    let path = path.as_ref();
    let inner = || -> Result<AudioSignal> {
        let mut reader = WavReader::open(path)?;
        let spec = reader.spec();
        if spec.channels != 1 {
            return Err(Error::Format(format!("expected mono audio, found {} channels", spec.channels)));
        }
        let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
            (SampleFormat::Int, 16) => reader
                .samples::<i16>()
                .map(|s| s.map(|v| v as f64 / 32768.0))
                .collect::<Result<_, _>>()?,
            (SampleFormat::Float, 32) => reader
                .samples::<f32>()
                .map(|s| s.map(|v| v as f64))
                .collect::<Result<_, _>>()?,
            (fmt, bits) => {
                return Err(Error::Format(format!(
                    "unsupported sample format {fmt:?} with {bits} bits"
                )))
            }
        };
        if samples.is_empty() {
            return Err(Error::Empty("wav file has no samples".into()));
        }
        AudioSignal::new(samples, spec.sample_rate)
    };
    inner().map_err(|e| e.in_file(path))
}

/// Writes a mono float32 WAV file.
pub fn write_wav_f32(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path.as_ref(), spec)?;
    for &s in &signal.samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let sig = AudioSignal::new(vec![0.5, -0.25, 0.125], 16000).unwrap();
        write_wav_f32(&p, &sig).unwrap();
        assert_eq!(read_wav(&p).unwrap(), sig);
    }

    #[test]
    fn pcm16_is_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(16384i16).unwrap();
        w.write_sample(-32768i16).unwrap();
        w.finalize().unwrap();
        assert_eq!(read_wav(&p).unwrap().samples, vec![0.5, -1.0]);
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        w.write_sample(1i16).unwrap();
        w.write_sample(1i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&p).is_err());
    }
}
