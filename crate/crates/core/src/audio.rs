//! PCM ingestion, pre-emphasis and Hamming-windowed framing.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The only sample rate accepted by the frontend.
pub const SAMPLE_RATE: u32 = 16_000;

const PCM_SCALE: f64 = 32768.0;

/// Mono audio at [`SAMPLE_RATE`] with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::WavFormat {
                field: "sample rate",
                detail: format!("{sample_rate} Hz (expected {SAMPLE_RATE} Hz)"),
            });
        }
        if samples.is_empty() {
            return Err(Error::Empty("audio clip has no samples".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a RIFF/WAVE file holding 16-bit mono PCM at 16 kHz.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::WavDecode(format!("{}: {other}", path.display())),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::WavFormat {
            field: "encoding",
            detail: "floating-point PCM (expected 16-bit integer)".into(),
        });
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::WavFormat {
            field: "bit depth",
            detail: format!("{} bits (expected 16)", spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(Error::WavFormat {
            field: "channel count",
            detail: format!("{} channels (expected mono)", spec.channels),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(Error::WavFormat {
            field: "sample rate",
            detail: format!("{} Hz (expected {SAMPLE_RATE} Hz)", spec.sample_rate),
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f64 / PCM_SCALE)
                .map_err(|e| Error::WavDecode(format!("{}: {e}", path.display())))
        })
        .collect::<Result<Vec<f64>>>()?;
    AudioClip::new(samples, spec.sample_rate)
}

/// Quantizes `[-1, 1]` samples to 16-bit PCM (clipping at full scale).
pub fn quantize_sample(x: f64) -> i16 {
    (x * PCM_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

/// Writes a clip as 16-bit mono PCM.
pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let map_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::WavDecode(format!("{}: {other}", path.display())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_err)?;
    for &s in &clip.samples {
        writer.write_sample(quantize_sample(s)).map_err(map_err)?;
    }
    writer.finalize().map_err(map_err)
}

/// First-order pre-emphasis `y[t] = x[t] - coeff * x[t-1]`, with `y[0] = x[0]`.
pub fn pre_emphasis(clip: &AudioClip, coeff: f64) -> Result<AudioClip> {
    if !(0.0..1.0).contains(&coeff) {
        return Err(Error::InvalidArgument(format!(
            "pre-emphasis coefficient {coeff} outside [0, 1)"
        )));
    }
    let x = &clip.samples;
    let mut out = Vec::with_capacity(x.len());
    out.push(x[0]);
    out.extend(x.windows(2).map(|w| w[1] - coeff * w[0]));
    Ok(AudioClip {
        samples: out,
        sample_rate: clip.sample_rate,
    })
}

/// Hamming window `0.54 - 0.46 cos(2 pi k / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos())
        .collect()
}

/// Converts a duration in milliseconds to a whole number of samples.
pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Equal-length windowed analysis frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Vec<f64>>,
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub sample_rate: u32,
}

impl FrameSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_len(&self) -> usize {
        ms_to_samples(self.frame_length_ms, self.sample_rate)
    }

    pub fn shift_len(&self) -> usize {
        ms_to_samples(self.frame_shift_ms, self.sample_rate)
    }

    pub fn frame_shift_s(&self) -> f64 {
        self.shift_len() as f64 / self.sample_rate as f64
    }
}

/// Number of frames produced for `num_samples` input samples, or `None` when
/// the input is shorter than one frame.
pub fn frame_count(num_samples: usize, frame_len: usize, shift: usize) -> Option<usize> {
    if num_samples < frame_len || frame_len == 0 || shift == 0 {
        return None;
    }
    Some((num_samples - frame_len) / shift + 1)
}

/// Slices the clip into overlapping rectangular (unwindowed) frames on the
/// same grid as [`frame_and_window`].
pub fn frame_slices(clip: &AudioClip, frame_length_ms: f64, frame_shift_ms: f64) -> Result<FrameSequence> {
    if !(frame_shift_ms > 0.0 && frame_length_ms >= frame_shift_ms) {
        return Err(Error::InvalidArgument(format!(
            "need frame length ({frame_length_ms} ms) >= frame shift ({frame_shift_ms} ms) > 0"
        )));
    }
    let rate = clip.sample_rate;
    let frame_len = ms_to_samples(frame_length_ms, rate);
    let shift = ms_to_samples(frame_shift_ms, rate);
    let count = frame_count(clip.len(), frame_len, shift).ok_or_else(|| {
        Error::InvalidArgument(format!(
            "clip of {} samples is shorter than one {frame_len}-sample frame",
            clip.len()
        ))
    })?;
    let frames = (0..count)
        .map(|i| clip.samples[i * shift..i * shift + frame_len].to_vec())
        .collect();
    Ok(FrameSequence {
        frames,
        frame_length_ms,
        frame_shift_ms,
        sample_rate: rate,
    })
}

/// Slices the clip into overlapping frames and applies a Hamming window.
pub fn frame_and_window(clip: &AudioClip, frame_length_ms: f64, frame_shift_ms: f64) -> Result<FrameSequence> {
    let mut seq = frame_slices(clip, frame_length_ms, frame_shift_ms)?;
    let window = hamming(seq.frame_len());
    for frame in &mut seq.frames {
        frame.iter_mut().zip(&window).for_each(|(s, w)| *s *= w);
    }
    Ok(seq)
}

/// Framing and pre-emphasis settings.
///
/// The default is a 30 ms window advanced every 5 ms. The alternative
/// reading of 16 ms frames overlapping by 9 ms (a 7 ms shift) is available
/// through [`FrontendConfig::short_overlap`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    /// `None` disables pre-emphasis.
    pub pre_emphasis: Option<f64>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            frame_length_ms: 30.0,
            frame_shift_ms: 5.0,
            pre_emphasis: Some(0.97),
        }
    }
}

impl FrontendConfig {
    pub fn short_overlap() -> Self {
        Self {
            frame_length_ms: 16.0,
            frame_shift_ms: 7.0,
            ..Self::default()
        }
    }

    /// Pre-emphasis (if enabled) followed by framing.
    pub fn apply(&self, clip: &AudioClip) -> Result<FrameSequence> {
        match self.pre_emphasis {
            Some(c) => frame_and_window(&pre_emphasis(clip, c)?, self.frame_length_ms, self.frame_shift_ms),
            None => frame_and_window(clip, self.frame_length_ms, self.frame_shift_ms),
        }
    }
}
