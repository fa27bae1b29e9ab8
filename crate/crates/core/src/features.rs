//! Mel filterbank, cepstral coefficients and regression deltas.
//!
//! Each analysis frame becomes a 16-dimensional observation: eight static
//! coefficients `C(1..8)` followed by their deltas. `C(0)` is never emitted.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::audio::{AudioClip, FrameSequence, FrontendConfig};
use crate::error::{Error, Result};

/// Floor applied before every logarithm.
pub const ENERGY_FLOOR: f64 = 1e-10;

pub const FEATURE_DUMP_HEADER: &str = "# sphmm-features v1";

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone)]
struct TriangularFilter {
    first_bin: usize,
    weights: Vec<f64>,
    center_hz: f64,
}

/// Triangular filters on a mel-spaced grid from 0 Hz to Nyquist.
///
/// Immutable once built; the FFT plan is shared, so a single filterbank can
/// serve any number of threads.
#[derive(Clone)]
pub struct MelFilterbank {
    filters: Vec<TriangularFilter>,
    fft_size: usize,
    sample_rate: u32,
    energy_floor: f64,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for MelFilterbank {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MelFilterbank")
            .field("num_channels", &self.filters.len())
            .field("fft_size", &self.fft_size)
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl MelFilterbank {
    pub fn new(num_channels: usize, fft_size: usize, sample_rate: u32) -> Result<Self> {
        Self::with_floor(num_channels, fft_size, sample_rate, ENERGY_FLOOR)
    }

    pub fn with_floor(num_channels: usize, fft_size: usize, sample_rate: u32, energy_floor: f64) -> Result<Self> {
        if num_channels == 0 || fft_size < 2 {
            return Err(Error::InvalidArgument(format!(
                "filterbank needs >= 1 channel and fft size >= 2 (got {num_channels}, {fft_size})"
            )));
        }
        if energy_floor <= 0.0 {
            return Err(Error::InvalidArgument("energy floor must be positive".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..num_channels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (num_channels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let num_bins = fft_size / 2 + 1;
        let filters = (0..num_channels)
            .map(|m| {
                let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
                let weight = |k: usize| {
                    let f = k as f64 * bin_hz;
                    if f <= left || f >= right {
                        0.0
                    } else if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                };
                let first_bin = (0..num_bins).find(|&k| weight(k) > 0.0).unwrap_or(0);
                let last_bin = (0..num_bins).rev().find(|&k| weight(k) > 0.0).unwrap_or(0);
                TriangularFilter {
                    first_bin,
                    weights: (first_bin..=last_bin).map(weight).collect(),
                    center_hz: center,
                }
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            filters,
            fft_size,
            sample_rate,
            energy_floor,
            fft,
        })
    }

    pub fn num_channels(&self) -> usize {
        self.filters.len()
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn energy_floor(&self) -> f64 {
        self.energy_floor
    }

    pub fn center_frequencies(&self) -> Vec<f64> {
        self.filters.iter().map(|f| f.center_hz).collect()
    }

    /// Weight of filter `m` (0-based) at FFT bin `bin`.
    pub fn weight(&self, m: usize, bin: usize) -> f64 {
        let f = &self.filters[m];
        if bin < f.first_bin {
            return 0.0;
        }
        f.weights.get(bin - f.first_bin).copied().unwrap_or(0.0)
    }

    /// Power spectrum `|X_k|^2` for `k = 0..=fft_size/2`.
    pub fn power_spectrum(&self, frame: &[f64]) -> Result<Vec<f64>> {
        if frame.len() > self.fft_size {
            return Err(Error::InvalidArgument(format!(
                "frame of {} samples exceeds fft size {}",
                frame.len(),
                self.fft_size
            )));
        }
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .map(|&x| Complex::new(x, 0.0))
            .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
            .take(self.fft_size)
            .collect();
        self.fft.process(&mut buf);
        Ok(buf[..self.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect())
    }

    /// Floored filterbank outputs `Y(1..M)`.
    pub fn energies(&self, frame: &[f64]) -> Result<Vec<f64>> {
        let power = self.power_spectrum(frame)?;
        Ok(self
            .filters
            .iter()
            .map(|f| {
                let e: f64 = f.weights.iter().zip(&power[f.first_bin..]).map(|(w, p)| w * p).sum();
                e.max(self.energy_floor)
            })
            .collect())
    }
}

/// Free-function form of [`MelFilterbank::energies`].
pub fn filterbank_energies(frame: &[f64], fb: &MelFilterbank) -> Result<Vec<f64>> {
    fb.energies(frame)
}

/// `C(n) = sum_m log Y(m) cos(pi n (m - 1/2) / M)` for `n = 1..=num_coeffs`.
pub fn mfcc(y: &[f64], num_coeffs: usize) -> Result<Vec<f64>> {
    let m_total = y.len();
    if num_coeffs == 0 || num_coeffs >= m_total {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= num_coeffs < M (got {num_coeffs}, M = {m_total})"
        )));
    }
    if let Some(bad) = y.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "filterbank energy {bad} is not positive"
        )));
    }
    let log_y: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let big_m = m_total as f64;
    Ok((1..=num_coeffs)
        .map(|n| {
            log_y
                .iter()
                .enumerate()
                .map(|(i, ly)| ly * (PI * n as f64 * (i as f64 + 0.5) / big_m).cos())
                .sum()
        })
        .collect())
}

/// Regression deltas with half-width `half_window`, replicating edge frames.
pub fn delta(frames: &[Vec<f64>], half_window: usize) -> Result<Vec<Vec<f64>>> {
    if frames.is_empty() {
        return Err(Error::Empty("delta of an empty sequence".into()));
    }
    if half_window == 0 {
        return Err(Error::InvalidArgument("delta half-window must be >= 1".into()));
    }
    let len = frames.len() as isize;
    let dim = frames[0].len();
    let norm = 2.0 * (1..=half_window).map(|k| (k * k) as f64).sum::<f64>();
    let at = |t: isize| &frames[t.clamp(0, len - 1) as usize];
    Ok((0..len)
        .map(|t| {
            let mut d = vec![0.0; dim];
            for k in 1..=half_window as isize {
                let (ahead, behind) = (at(t + k), at(t - k));
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj += k as f64 * (ahead[j] - behind[j]);
                }
            }
            d.iter_mut().for_each(|v| *v /= norm);
            d
        })
        .collect())
}

/// Per-utterance observation vectors (static coefficients then deltas).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSequence {
    pub utterance_id: String,
    pub vectors: Vec<Vec<f64>>,
}

impl ObservationSequence {
    pub fn new(utterance_id: impl Into<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = vectors.first() {
            let dim = first.len();
            if let Some(bad) = vectors.iter().find(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: bad.len(),
                });
            }
        }
        Ok(Self {
            utterance_id: utterance_id.into(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub frontend: FrontendConfig,
    pub num_channels: usize,
    pub fft_size: usize,
    pub num_coeffs: usize,
    pub delta_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendConfig::default(),
            num_channels: 24,
            fft_size: 512,
            num_coeffs: 8,
            delta_window: 2,
        }
    }
}

impl FeatureConfig {
    pub fn observation_dim(&self) -> usize {
        2 * self.num_coeffs
    }

    pub fn filterbank(&self, sample_rate: u32) -> Result<MelFilterbank> {
        MelFilterbank::new(self.num_channels, self.fft_size, sample_rate)
    }
}

/// Static + delta observations for already-framed audio.
pub fn observations_from_frames(
    utterance_id: &str,
    frames: &FrameSequence,
    fb: &MelFilterbank,
    config: &FeatureConfig,
) -> Result<ObservationSequence> {
    let statics = frames
        .frames
        .iter()
        .map(|f| mfcc(&fb.energies(f)?, config.num_coeffs))
        .collect::<Result<Vec<_>>>()?;
    let deltas = delta(&statics, config.delta_window)?;
    let vectors = statics
        .into_iter()
        .zip(deltas)
        .map(|(mut s, d)| {
            s.extend(d);
            s
        })
        .collect();
    ObservationSequence::new(utterance_id, vectors)
}

/// Full MFCC + delta analysis of one clip.
pub fn extract_observations(
    utterance_id: &str,
    clip: &AudioClip,
    config: &FeatureConfig,
) -> Result<ObservationSequence> {
    let frames = config.frontend.apply(clip)?;
    let fb = config.filterbank(clip.sample_rate())?;
    observations_from_frames(utterance_id, &frames, &fb, config)
}

/// Writes observation sequences in the text dump format: a version line, then
/// per utterance an `utterance <id>` header followed by one comma-separated
/// row per frame at 17 significant digits.
pub fn write_feature_dump<W: Write>(mut out: W, seqs: &[ObservationSequence]) -> Result<()> {
    let io = |e| Error::io("<feature dump>", e);
    writeln!(out, "{FEATURE_DUMP_HEADER}").map_err(io)?;
    for seq in seqs {
        writeln!(out, "utterance {}", seq.utterance_id).map_err(io)?;
        for v in &seq.vectors {
            let mut line = String::new();
            for (i, x) in v.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                write!(line, "{x:.16e}").unwrap();
            }
            writeln!(out, "{line}").map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_feature_dump<R: BufRead>(input: R) -> Result<Vec<ObservationSequence>> {
    let mut lines = input.lines().enumerate();
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == FEATURE_DUMP_HEADER => {}
        _ => return Err(Error::parse("line 1", "missing feature dump header")),
    }
    let mut out: Vec<ObservationSequence> = Vec::new();
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io("<feature dump>", e))?;
        let loc = || format!("line {}", i + 1);
        if line.trim().is_empty() {
            continue;
        }
        if let Some(id) = line.strip_prefix("utterance ") {
            out.push(ObservationSequence {
                utterance_id: id.to_string(),
                vectors: Vec::new(),
            });
            continue;
        }
        let seq = out
            .last_mut()
            .ok_or_else(|| Error::parse(loc(), "frame row before any utterance header"))?;
        let row = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::parse(loc(), e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = seq.vectors.first() {
            if first.len() != row.len() {
                return Err(Error::parse(loc(), "inconsistent row width"));
            }
        }
        seq.vectors.push(row);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{frame_and_window, SAMPLE_RATE};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fb() -> MelFilterbank {
        MelFilterbank::new(24, 512, SAMPLE_RATE).unwrap()
    }

    // Direct DFT power spectrum, independent of rustfft.
    fn dft_power(frame: &[f64], n: usize) -> Vec<f64> {
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (t, x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * t) as f64 / n as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re * re + im * im
            })
            .collect()
    }

    #[test]
    fn filters_are_triangular_and_ordered() {
        let fb = fb();
        let centers = fb.center_frequencies();
        assert!(centers.windows(2).all(|w| w[1] > w[0]));
        assert!(centers[0] > 0.0 && *centers.last().unwrap() < 8000.0);
        for m in 0..24 {
            let w: Vec<f64> = (0..=256).map(|k| fb.weight(m, k)).collect();
            assert!(w.iter().all(|&x| (0.0..=1.0).contains(&x)));
            assert!(w.iter().any(|&x| x > 0.0));
            // rises then falls
            let peak = w
                .iter()
                .cloned()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0;
            assert!(w[..=peak].windows(2).all(|p| p[1] >= p[0]));
            assert!(w[peak..].windows(2).all(|p| p[1] <= p[0]));
        }
    }

    #[test]
    fn zero_frame_hits_floor() {
        let y = fb().energies(&[0.0; 480]).unwrap();
        assert!(y.iter().all(|&v| v == ENERGY_FLOOR));
    }

    #[test]
    fn impulse_gives_weight_sums() {
        let fb = fb();
        let mut frame = vec![0.0; 480];
        frame[0] = 1.0;
        let y = fb.energies(&frame).unwrap();
        for (m, ym) in y.iter().enumerate() {
            let sum: f64 = (0..=256).map(|k| fb.weight(m, k)).sum();
            assert!((ym - sum.max(ENERGY_FLOOR)).abs() < 1e-9);
        }
    }

    #[test]
    fn random_frame_matches_dft_oracle() {
        let fb = fb();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frame: Vec<f64> = (0..480).map(|_| rng.random_range(-1.0..1.0)).collect();
        let power = dft_power(&frame, 512);
        let y = fb.energies(&frame).unwrap();
        for (m, ym) in y.iter().enumerate() {
            let e: f64 = (0..=256).map(|k| power[k] * fb.weight(m, k)).sum();
            assert!((ym - e.max(ENERGY_FLOOR)).abs() < 1e-9 * e.max(1.0));
        }
    }

    #[test]
    fn frame_longer_than_fft_is_rejected() {
        assert!(fb().energies(&[0.0; 513]).is_err());
    }

    #[test]
    fn mfcc_of_constant_is_zero() {
        let c = mfcc(&[1.0; 24], 8).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));
        let c = mfcc(&[37.5; 24], 8).unwrap();
        assert!(c.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn mfcc_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y: Vec<f64> = (0..24).map(|_| rng.random_range(1e-3..1e3)).collect();
        let c = mfcc(&y, 8).unwrap();
        for n in 1..=8 {
            let mut s = 0.0;
            for m in 1..=24 {
                s += y[m - 1].ln() * (PI * n as f64 / 24.0 * (m as f64 - 0.5)).cos();
            }
            assert!((c[n - 1] - s).abs() < 1e-12);
        }
    }

    #[test]
    fn mfcc_rejects_bad_input() {
        assert!(mfcc(&[1.0, 0.0, 1.0], 1).is_err());
        assert!(mfcc(&[1.0; 8], 8).is_err());
        assert!(mfcc(&[1.0; 8], 0).is_err());
    }

    #[test]
    fn mfcc_ignores_frame_gain() {
        let fb = fb();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let frame: Vec<f64> = (0..480).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = frame.iter().map(|x| 3.7 * x).collect();
        let a = mfcc(&fb.energies(&frame).unwrap(), 8).unwrap();
        let b = mfcc(&fb.energies(&scaled).unwrap(), 8).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn delta_constant_and_ramp() {
        let constant = vec![vec![2.0, -1.0]; 6];
        assert!(delta(&constant, 2).unwrap().iter().flatten().all(|&v| v == 0.0));

        let ramp: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64, 0.0]).collect();
        let d = delta(&ramp, 2).unwrap();
        for t in 2..8 {
            assert!((d[t][0] - 1.0).abs() < 1e-15);
            assert_eq!(d[t][1], 0.0);
        }
    }

    #[test]
    fn delta_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seq: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
            .collect();
        let d = delta(&seq, 2).unwrap();
        for t in 0..20i32 {
            for j in 0..3 {
                let c = |i: i32| seq[i.clamp(0, 19) as usize][j];
                let expected = (1.0 * (c(t + 1) - c(t - 1)) + 2.0 * (c(t + 2) - c(t - 2))) / 10.0;
                assert!((d[t as usize][j] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn delta_errors() {
        assert!(delta(&[], 2).is_err());
        assert!(delta(&[vec![1.0]], 0).is_err());
    }

    #[test]
    fn silence_gives_constant_statics_and_zero_deltas() {
        let clip = AudioClip::new(vec![0.0; 16_000], SAMPLE_RATE).unwrap();
        let obs = extract_observations("sil", &clip, &FeatureConfig::default()).unwrap();
        assert_eq!(obs.len(), (16_000 - 480) / 80 + 1);
        assert_eq!(obs.dim(), 16);
        let first = obs.vectors[0].clone();
        for v in &obs.vectors {
            assert_eq!(v[..8], first[..8]);
            assert!(v[8..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn composed_pipeline_matches_stage_oracles() {
        // harmonic "vowel": 150 Hz fundamental with decaying partials
        let x: Vec<f64> = (0..8000)
            .map(|n| {
                let t = n as f64 / 16_000.0;
                (1..=10)
                    .map(|h| (2.0 * PI * 150.0 * h as f64 * t).sin() / h as f64)
                    .sum::<f64>()
                    * 0.2
            })
            .collect();
        let clip = AudioClip::new(x.clone(), SAMPLE_RATE).unwrap();
        let cfg = FeatureConfig::default();
        let obs = extract_observations("vowel", &clip, &cfg).unwrap();
        let a = extract_observations("vowel", &clip, &cfg).unwrap();
        assert_eq!(obs, a);

        let fb = fb();
        let mut emph = vec![x[0]];
        emph.extend((1..x.len()).map(|t| x[t] - 0.97 * x[t - 1]));
        let frames = frame_and_window(&AudioClip::new(emph, SAMPLE_RATE).unwrap(), 30.0, 5.0).unwrap();
        let statics: Vec<Vec<f64>> = frames
            .frames
            .iter()
            .map(|f| {
                let p = dft_power(f, 512);
                let y: Vec<f64> = (0..24)
                    .map(|m| (0..=256).map(|k| p[k] * fb.weight(m, k)).sum::<f64>().max(ENERGY_FLOOR))
                    .collect();
                (1..=8)
                    .map(|n| {
                        (1..=24)
                            .map(|m| y[m - 1].ln() * (PI * n as f64 / 24.0 * (m as f64 - 0.5)).cos())
                            .sum()
                    })
                    .collect()
            })
            .collect();
        assert_eq!(statics.len(), obs.len());
        let last = statics.len() as i32 - 1;
        for t in 0..statics.len() {
            for j in 0..8 {
                assert!((obs.vectors[t][j] - statics[t][j]).abs() < 1e-9);
                let c = |i: i32| statics[i.clamp(0, last) as usize][j];
                let ti = t as i32;
                let d = ((c(ti + 1) - c(ti - 1)) + 2.0 * (c(ti + 2) - c(ti - 2))) / 10.0;
                assert!((obs.vectors[t][8 + j] - d).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dump_round_trips_bit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seqs: Vec<ObservationSequence> = (0..3)
            .map(|u| {
                let v = (0..5)
                    .map(|_| (0..16).map(|_| rng.random::<f64>() * 1e3 - 500.0).collect())
                    .collect();
                ObservationSequence::new(format!("utt-{u}"), v).unwrap()
            })
            .collect();
        let mut buf = Vec::new();
        write_feature_dump(&mut buf, &seqs).unwrap();
        let back = read_feature_dump(buf.as_slice()).unwrap();
        assert_eq!(back, seqs);
    }
}
