//! Frame-level pitch and energy tracks used by the suprasegmental layer.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{frame_slices, AudioClip, FrontendConfig};
use crate::error::{Error, Result};
use crate::features::ENERGY_FLOOR;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodyConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    pub voicing_threshold: f64,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self {
            f0_min: 60.0,
            f0_max: 400.0,
            voicing_threshold: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodyFrame {
    /// `None` for unvoiced frames.
    pub f0: Option<f64>,
    pub log_energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodicTrack {
    pub frames: Vec<ProsodyFrame>,
    /// Time between consecutive frames, in seconds.
    pub frame_shift_s: f64,
}

impl ProsodicTrack {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// `log(max(sum x^2, floor))`.
pub fn frame_log_energy(frame: &[f64]) -> f64 {
    frame.iter().map(|x| x * x).sum::<f64>().max(ENERGY_FLOOR).ln()
}

/// Normalized autocorrelation at `lag`, each side normalized by its own energy.
fn normalized_autocorrelation(frame: &[f64], lag: usize) -> Option<f64> {
    let n = frame.len().checked_sub(lag)?;
    let (head, tail) = (&frame[..n], &frame[lag..]);
    let num: f64 = head.iter().zip(tail).map(|(a, b)| a * b).sum();
    let e0: f64 = head.iter().map(|x| x * x).sum();
    let e1: f64 = tail.iter().map(|x| x * x).sum();
    let denom = (e0 * e1).sqrt();
    (denom > 0.0).then(|| num / denom)
}

fn check_range(rate: u32, f0_min: f64, f0_max: f64) -> Result<()> {
    let rate_f = rate as f64;
    if !(f0_min > 0.0 && f0_min < f0_max && f0_max < rate_f / 2.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 < f0_min < f0_max < rate/2 (got {f0_min}, {f0_max}, rate {rate})"
        )));
    }
    Ok(())
}

fn lag_range(frame_len: usize, rate: u32, f0_min: f64, f0_max: f64) -> (usize, usize) {
    let rate_f = rate as f64;
    let min_lag = (rate_f / f0_max).ceil() as usize;
    let max_lag = ((rate_f / f0_min).floor() as usize).min(frame_len.saturating_sub(2));
    (min_lag, max_lag)
}

/// Voicing decision and octave guard over `(lag, score)` pairs.
fn pick_lag(scores: &[(usize, f64)], threshold: f64) -> Option<usize> {
    let best = scores.iter().map(|&(_, r)| r).fold(f64::NEG_INFINITY, f64::max);
    if !(best > threshold) {
        return None;
    }
    let is_peak = |i: usize| {
        let r = scores[i].1;
        (i == 0 || scores[i - 1].1 <= r) && (i + 1 == scores.len() || scores[i + 1].1 <= r)
    };
    (0..scores.len())
        .find(|&i| scores[i].1 >= 0.9 * best && is_peak(i))
        .map(|i| scores[i].0)
        .or(scores.first().map(|s| s.0))
}

/// Autocorrelation pitch estimate over lags `[rate/f0_max, rate/f0_min]`.
///
/// The frame is voiced when the best normalized autocorrelation exceeds
/// `threshold`. Among lags scoring within 10% of the best, the shortest one
/// wins, which suppresses sub-harmonic (octave-down) picks.
pub fn estimate_f0_with_threshold(
    frame: &[f64],
    rate: u32,
    f0_min: f64,
    f0_max: f64,
    threshold: f64,
) -> Result<Option<f64>> {
    check_range(rate, f0_min, f0_max)?;
    let (min_lag, max_lag) = lag_range(frame.len(), rate, f0_min, f0_max);
    if min_lag > max_lag {
        return Ok(None);
    }
    let scores: Vec<(usize, f64)> = (min_lag..=max_lag)
        .filter_map(|lag| normalized_autocorrelation(frame, lag).map(|r| (lag, r)))
        .collect();
    Ok(pick_lag(&scores, threshold).map(|lag| rate as f64 / lag as f64))
}

/// Same estimate as [`estimate_f0_with_threshold`] for many frames of one
/// length, with FFT autocorrelation and prefix-sum energies.
pub struct PitchTracker {
    frame_len: usize,
    rate: u32,
    min_lag: usize,
    max_lag: usize,
    threshold: f64,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buf: Vec<Complex<f64>>,
    prefix: Vec<f64>,
}

impl PitchTracker {
    pub fn new(frame_len: usize, rate: u32, config: &ProsodyConfig) -> Result<Self> {
        check_range(rate, config.f0_min, config.f0_max)?;
        let (min_lag, max_lag) = lag_range(frame_len, rate, config.f0_min, config.f0_max);
        let n = (2 * frame_len).next_power_of_two();
        let mut planner = FftPlanner::new();
        Ok(Self {
            frame_len,
            rate,
            min_lag,
            max_lag,
            threshold: config.voicing_threshold,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            buf: vec![Complex::default(); n],
            prefix: vec![0.0; frame_len + 1],
        })
    }

    pub fn estimate(&mut self, frame: &[f64]) -> Result<Option<f64>> {
        if frame.len() != self.frame_len {
            return Err(Error::DimensionMismatch {
                expected: self.frame_len,
                actual: frame.len(),
            });
        }
        if self.min_lag > self.max_lag {
            return Ok(None);
        }
        let n = frame.len();
        for (i, x) in frame.iter().enumerate() {
            self.prefix[i + 1] = self.prefix[i] + x * x;
        }
        self.buf.iter_mut().for_each(|c| *c = Complex::default());
        for (c, &x) in self.buf.iter_mut().zip(frame) {
            c.re = x;
        }
        self.forward.process(&mut self.buf);
        for c in self.buf.iter_mut() {
            *c = Complex::new(c.norm_sqr(), 0.0);
        }
        self.inverse.process(&mut self.buf);
        let scale = 1.0 / self.buf.len() as f64;
        let scores: Vec<(usize, f64)> = (self.min_lag..=self.max_lag)
            .filter_map(|lag| {
                let e0 = self.prefix[n - lag];
                let e1 = self.prefix[n] - self.prefix[lag];
                let denom = (e0 * e1).sqrt();
                (denom > 0.0).then(|| (lag, self.buf[lag].re * scale / denom))
            })
            .collect();
        Ok(pick_lag(&scores, self.threshold).map(|lag| self.rate as f64 / lag as f64))
    }
}

pub fn estimate_f0(frame: &[f64], rate: u32, f0_min: f64, f0_max: f64) -> Result<Option<f64>> {
    estimate_f0_with_threshold(frame, rate, f0_min, f0_max, ProsodyConfig::default().voicing_threshold)
}

/// Pitch and energy per analysis frame.
///
/// Uses the same frame grid as the cepstral analysis, so track length equals
/// the observation count, but works on raw unwindowed samples: the taper
/// would bias the autocorrelation peak.
pub fn extract_prosody(clip: &AudioClip, frontend: &FrontendConfig, config: &ProsodyConfig) -> Result<ProsodicTrack> {
    let frames = frame_slices(clip, frontend.frame_length_ms, frontend.frame_shift_ms)?;
    let mut tracker = PitchTracker::new(frames.frame_len(), clip.sample_rate(), config)?;
    let out = frames
        .frames
        .iter()
        .map(|f| {
            Ok(ProsodyFrame {
                f0: tracker.estimate(f)?,
                log_energy: frame_log_energy(f),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProsodicTrack {
        frames: out,
        frame_shift_s: frames.frame_shift_s(),
    })
}
