//! WAV input and output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use sslr_core::MultichannelSignal;

use crate::error::{CliError, CliResult};

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> CliError + '_ {
    move |source| CliError::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a 16-bit integer or 32-bit float WAV file. Integer samples are
/// scaled by `1/32768`.
pub fn read_wav(path: &Path) -> CliResult<MultichannelSignal> {
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / 32768.0))
            .collect::<Result<_, _>>()
            .map_err(wav_err(path))?,
        (format, bits) => {
            return Err(CliError::Format {
                path: path.to_path_buf(),
                message: format!("unsupported sample format {format:?} with {bits} bits"),
            })
        }
    };
    let frames = interleaved.len() / channels;
    let mut planar = vec![0.0; interleaved.len()];
    for (i, frame) in interleaved.chunks_exact(channels).enumerate() {
        for (c, &v) in frame.iter().enumerate() {
            planar[c * frames + i] = v;
        }
    }
    MultichannelSignal::new(channels, frames, f64::from(spec.sample_rate), planar).map_err(|e| {
        CliError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Float32,
    Int16,
}

/// Writes all channels of `signal`, clipping to `[-1, 1]`. Returns the
/// number of clipped samples.
pub fn write_wav(signal: &MultichannelSignal, path: &Path, encoding: WavEncoding) -> CliResult<usize> {
    let rate = signal.sample_rate().round();
    if !(1.0..=f64::from(u32::MAX)).contains(&rate) {
        return Err(CliError::Config(format!(
            "sample rate {} cannot be stored in a WAV header",
            signal.sample_rate()
        )));
    }
    let channels = u16::try_from(signal.num_channels())
        .map_err(|_| CliError::Config("too many channels for a WAV file".into()))?;
    let spec = match encoding {
        WavEncoding::Float32 => WavSpec {
            channels,
            sample_rate: rate as u32,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        },
        WavEncoding::Int16 => WavSpec {
            channels,
            sample_rate: rate as u32,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    let mut clipped = 0;
    for t in 0..signal.num_samples() {
        for c in 0..signal.num_channels() {
            let v = signal.channel(c)[t];
            let y = v.clamp(-1.0, 1.0);
            if y != v {
                clipped += 1;
            }
            match encoding {
                WavEncoding::Float32 => writer.write_sample(y as f32),
                WavEncoding::Int16 => writer.write_sample((y * 32768.0).round().clamp(-32768.0, 32767.0) as i16),
            }
            .map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))?;
    Ok(clipped)
}

/// Reads several files and stacks their channels in order.
pub fn read_stacked(paths: &[impl AsRef<Path>]) -> CliResult<MultichannelSignal> {
    let mut channels = Vec::new();
    let mut rate = None;
    for path in paths {
        let path = path.as_ref();
        let signal = read_wav(path)?;
        match rate {
            None => rate = Some(signal.sample_rate()),
            Some(r) if r != signal.sample_rate() => {
                return Err(CliError::Format {
                    path: path.to_path_buf(),
                    message: format!("sample rate {} differs from {r}", signal.sample_rate()),
                })
            }
            Some(_) => {}
        }
        channels.extend(signal.channels().map(<[f64]>::to_vec));
    }
    let rate = rate.ok_or_else(|| CliError::Config("no input files".into()))?;
    Ok(MultichannelSignal::from_channels(&channels, rate)?)
}
